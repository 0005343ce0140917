//! The KSB1 case container.
//!
//! ```text
//! bytes 0..6    b"KSB1\r\n"
//! bytes 6..10   header length H, u32 little-endian
//! bytes 10..10+H UTF-8 JSON: {"arrays": [{"name", "dtype", "shape"}], "attrs": {...}}
//! payload       arrays in header order, row-major, little-endian;
//!               "c64" is interleaved (re, im) f32 pairs, "f32" is plain f32
//! ```
//!
//! The payload must end exactly where the header says it does.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array3, Array4, ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kspace::{CaseAttrs, KSpaceVolume, MagnitudeVolume, C32};

pub const MAGIC: &[u8; 6] = b"KSB1\r\n";
pub const KSPACE: &str = "kspace";
pub const RECONSTRUCTION_RSS: &str = "reconstruction_rss";
pub const RECONSTRUCTION: &str = "reconstruction";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dtype {
    #[serde(rename = "c64")]
    C64,
    #[serde(rename = "f32")]
    F32,
}

impl Dtype {
    fn element_bytes(self) -> usize {
        match self {
            Dtype::C64 => 8,
            Dtype::F32 => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ArrayData {
    Complex(ArrayD<C32>),
    Real(ArrayD<f32>),
}

impl ArrayData {
    fn dtype(&self) -> Dtype {
        match self {
            ArrayData::Complex(_) => Dtype::C64,
            ArrayData::Real(_) => Dtype::F32,
        }
    }

    fn shape(&self) -> &[usize] {
        match self {
            ArrayData::Complex(a) => a.shape(),
            ArrayData::Real(a) => a.shape(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub data: ArrayData,
}

#[derive(Serialize, Deserialize)]
struct ArrayHeader {
    name: String,
    dtype: Dtype,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    arrays: Vec<ArrayHeader>,
    attrs: CaseAttrs,
}

/// Every array in one container plus its case attributes.
#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub attrs: CaseAttrs,
    pub arrays: Vec<NamedArray>,
}

impl Container {
    pub fn get(&self, name: &str) -> Option<&ArrayData> {
        self.arrays.iter().find(|a| a.name == name).map(|a| &a.data)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            arrays: self
                .arrays
                .iter()
                .map(|a| ArrayHeader {
                    name: a.name.clone(),
                    dtype: a.data.dtype(),
                    shape: a.data.shape().to_vec(),
                })
                .collect(),
            attrs: self.attrs.clone(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::InvalidData(format!("header serialization: {e}")))?;
        let header_len = u32::try_from(json.len()).map_err(|_| Error::InvalidData("header exceeds 4 GiB".into()))?;
        let payload: usize = self
            .arrays
            .iter()
            .map(|a| a.data.shape().iter().product::<usize>() * a.data.dtype().element_bytes())
            .sum();
        let mut out = Vec::with_capacity(10 + json.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&header_len.to_le_bytes());
        out.extend_from_slice(&json);
        for a in &self.arrays {
            match &a.data {
                ArrayData::Complex(arr) => {
                    for z in arr.iter() {
                        out.extend_from_slice(&z.re.to_le_bytes());
                        out.extend_from_slice(&z.im.to_le_bytes());
                    }
                }
                ArrayData::Real(arr) => {
                    for v in arr.iter() {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 10 || &bytes[..6] != MAGIC {
            return Err(Error::CorruptContainer("missing KSB1 magic".into()));
        }
        let header_len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let header_end = 10usize
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| Error::CorruptContainer("truncated header".into()))?;
        let header: Header = serde_json::from_slice(&bytes[10..header_end])
            .map_err(|e| Error::CorruptContainer(format!("bad header: {e}")))?;
        header
            .attrs
            .validate()
            .map_err(|e| Error::CorruptContainer(format!("bad attrs: {e}")))?;

        let mut expected = 0usize;
        for a in &header.arrays {
            let n = a
                .shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .and_then(|n| n.checked_mul(a.dtype.element_bytes()))
                .ok_or_else(|| Error::CorruptContainer(format!("array {} too large", a.name)))?;
            expected = expected
                .checked_add(n)
                .ok_or_else(|| Error::CorruptContainer("payload size overflow".into()))?;
        }
        let payload = &bytes[header_end..];
        if payload.len() != expected {
            return Err(Error::CorruptContainer(format!(
                "header declares {expected} payload bytes, found {}",
                payload.len()
            )));
        }

        let mut offset = 0;
        let mut arrays = Vec::with_capacity(header.arrays.len());
        for a in header.arrays {
            let count: usize = a.shape.iter().product();
            let nbytes = count * a.dtype.element_bytes();
            let chunk = &payload[offset..offset + nbytes];
            offset += nbytes;
            let floats = chunk.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()));
            let data = match a.dtype {
                Dtype::F32 => ArrayData::Real(
                    ArrayD::from_shape_vec(IxDyn(&a.shape), floats.collect())
                        .map_err(|e| Error::CorruptContainer(e.to_string()))?,
                ),
                Dtype::C64 => {
                    let flat: Vec<f32> = floats.collect();
                    let values = flat.chunks_exact(2).map(|p| C32::new(p[0], p[1])).collect();
                    ArrayData::Complex(
                        ArrayD::from_shape_vec(IxDyn(&a.shape), values)
                            .map_err(|e| Error::CorruptContainer(e.to_string()))?,
                    )
                }
            };
            arrays.push(NamedArray { name: a.name, data });
        }
        Ok(Self {
            attrs: header.attrs,
            arrays,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = BufWriter::new(fs::File::create(path)?);
        f.write_all(&bytes)?;
        f.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// A case file: raw k-space and, for reference data, the RSS ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct CaseFile {
    pub kspace: KSpaceVolume,
    pub ground_truth: Option<MagnitudeVolume>,
}

pub fn write_case(path: &Path, kspace: &KSpaceVolume, ground_truth: Option<&MagnitudeVolume>) -> Result<()> {
    let mut arrays = vec![NamedArray {
        name: KSPACE.into(),
        data: ArrayData::Complex(kspace.data().clone().into_dyn()),
    }];
    if let Some(gt) = ground_truth {
        arrays.push(NamedArray {
            name: RECONSTRUCTION_RSS.into(),
            data: ArrayData::Real(gt.view().to_owned().into_dyn()),
        });
    }
    Container {
        attrs: kspace.attrs.clone(),
        arrays,
    }
    .write(path)
}

pub fn read_case(path: &Path) -> Result<CaseFile> {
    let c = Container::read(path)?;
    let kspace = match c.get(KSPACE) {
        Some(ArrayData::Complex(a)) => {
            let a: Array4<C32> = a
                .clone()
                .into_dimensionality()
                .map_err(|_| Error::CorruptContainer("kspace must be 4-D".into()))?;
            KSpaceVolume::new(a, c.attrs.clone()).map_err(|e| Error::CorruptContainer(e.to_string()))?
        }
        Some(ArrayData::Real(_)) => return Err(Error::CorruptContainer("kspace must be c64".into())),
        None => return Err(Error::CorruptContainer("no kspace array".into())),
    };
    let ground_truth = match c.get(RECONSTRUCTION_RSS) {
        Some(data) => Some(magnitude_from(data, RECONSTRUCTION_RSS)?),
        None => None,
    };
    Ok(CaseFile { kspace, ground_truth })
}

/// Writes a reconstructed magnitude volume under the `reconstruction` name.
pub fn write_reconstruction(path: &Path, attrs: &CaseAttrs, volume: &MagnitudeVolume) -> Result<()> {
    Container {
        attrs: attrs.clone(),
        arrays: vec![NamedArray {
            name: RECONSTRUCTION.into(),
            data: ArrayData::Real(volume.view().to_owned().into_dyn()),
        }],
    }
    .write(path)
}

pub fn read_reconstruction(path: &Path) -> Result<(CaseAttrs, MagnitudeVolume)> {
    let c = Container::from_bytes(&fs::read(path)?)?;
    reconstruction_from_container(&c)
}

pub fn reconstruction_from_container(c: &Container) -> Result<(CaseAttrs, MagnitudeVolume)> {
    let data = c
        .get(RECONSTRUCTION)
        .ok_or_else(|| Error::CorruptContainer("no reconstruction array".into()))?;
    Ok((c.attrs.clone(), magnitude_from(data, RECONSTRUCTION)?))
}

fn magnitude_from(data: &ArrayData, name: &str) -> Result<MagnitudeVolume> {
    match data {
        ArrayData::Real(a) => {
            let a: Array3<f32> = a
                .clone()
                .into_dimensionality()
                .map_err(|_| Error::CorruptContainer(format!("{name} must be 3-D")))?;
            MagnitudeVolume::new(a).map_err(|e| Error::CorruptContainer(e.to_string()))
        }
        ArrayData::Complex(_) => Err(Error::CorruptContainer(format!("{name} must be f32"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kspace::Contrast;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    fn random_case(ns: usize, nc: usize, h: usize, w: usize, seed: u64) -> (KSpaceVolume, MagnitudeVolume) {
        let mut rng = SplitMix64::new(seed);
        let k = Array4::from_shape_fn((ns, nc, h, w), |_| {
            C32::new(rng.uniform(-1e3, 1e3) as f32, rng.uniform(-1e-3, 1e-3) as f32)
        });
        let gt = Array3::from_shape_fn((ns, h, w), |_| rng.unit() as f32);
        let mut attrs = CaseAttrs::new(format!("case{seed}"), Contrast::PDFS, 1.5);
        attrs.extra.insert("note".into(), serde_json::json!({"x": [1, 2.5]}));
        (KSpaceVolume::new(k, attrs).unwrap(), MagnitudeVolume::new(gt).unwrap())
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ksb");
        let (k, gt) = random_case(3, 2, 5, 7, 42);
        write_case(&path, &k, Some(&gt)).unwrap();
        let back = read_case(&path).unwrap();
        assert_eq!(back.kspace.attrs, k.attrs);
        for (a, b) in back.kspace.data().iter().zip(k.data().iter()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
        let back_gt = back.ground_truth.unwrap();
        for (a, b) in back_gt.view().iter().zip(gt.view().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn header_layout() {
        let (k, _) = random_case(1, 1, 2, 2, 1);
        let bytes = Container {
            attrs: k.attrs.clone(),
            arrays: vec![NamedArray {
                name: KSPACE.into(),
                data: ArrayData::Complex(k.data().clone().into_dyn()),
            }],
        }
        .to_bytes()
        .unwrap();
        assert_eq!(&bytes[..6], b"KSB1\r\n");
        let h = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&bytes[10..10 + h]).unwrap();
        assert_eq!(header["arrays"][0]["dtype"], "c64");
        assert_eq!(header["arrays"][0]["shape"], serde_json::json!([1, 1, 2, 2]));
        assert_eq!(header["attrs"]["contrast"], "PDFS");
        assert_eq!(bytes.len(), 10 + h + 4 * 8);
        // First sample, real part, little-endian.
        assert_eq!(&bytes[10 + h..14 + h], &k.data()[[0, 0, 0, 0]].re.to_le_bytes());
    }

    #[test]
    fn wrong_magic_rejected() {
        let (k, _) = random_case(1, 1, 2, 2, 2);
        let mut bytes = Container {
            attrs: k.attrs.clone(),
            arrays: vec![],
        }
        .to_bytes()
        .unwrap();
        bytes[3] = b'2';
        assert!(matches!(Container::from_bytes(&bytes), Err(Error::CorruptContainer(_))));
        assert!(matches!(Container::from_bytes(b"KSB"), Err(Error::CorruptContainer(_))));
    }

    fn container_with_header(header: &serde_json::Value, payload: &[u8]) -> Vec<u8> {
        let json = serde_json::to_vec(header).unwrap();
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(payload);
        out
    }

    #[test]
    fn header_declaring_more_slices_than_payload_rejected() {
        let header = serde_json::json!({
            "arrays": [{"name": "kspace", "dtype": "c64", "shape": [10, 1, 2, 2]}],
            "attrs": {"case_id": "x", "contrast": "PD", "field_strength_tesla": 3.0}
        });
        let payload = vec![0u8; 8 * 2 * 2 * 8];
        let err = Container::from_bytes(&container_with_header(&header, &payload)).unwrap_err();
        assert!(
            matches!(err, Error::CorruptContainer(ref m) if m.contains("payload")),
            "{err}"
        );
    }

    #[test]
    fn trailing_bytes_rejected() {
        let header = serde_json::json!({
            "arrays": [{"name": "r", "dtype": "f32", "shape": [1]}],
            "attrs": {"case_id": "x", "contrast": "PD", "field_strength_tesla": 3.0}
        });
        assert!(Container::from_bytes(&container_with_header(&header, &[0; 4])).is_ok());
        assert!(matches!(
            Container::from_bytes(&container_with_header(&header, &[0; 5])),
            Err(Error::CorruptContainer(_))
        ));
    }

    #[test]
    fn truncated_header_rejected() {
        let mut bytes = MAGIC.to_vec();
        bytes.extend_from_slice(&100u32.to_le_bytes());
        bytes.extend_from_slice(b"{\"arrays\"");
        assert!(matches!(Container::from_bytes(&bytes), Err(Error::CorruptContainer(_))));
    }

    #[test]
    fn malformed_json_and_attrs_rejected() {
        let bad_json = container_with_header(&serde_json::json!("nope"), &[]);
        assert!(matches!(
            Container::from_bytes(&bad_json),
            Err(Error::CorruptContainer(_))
        ));
        let bad_field = serde_json::json!({
            "arrays": [],
            "attrs": {"case_id": "x", "contrast": "PD", "field_strength_tesla": 7.0}
        });
        assert!(matches!(
            Container::from_bytes(&container_with_header(&bad_field, &[])),
            Err(Error::CorruptContainer(_))
        ));
        let bad_contrast = serde_json::json!({
            "arrays": [],
            "attrs": {"case_id": "x", "contrast": "T2", "field_strength_tesla": 3.0}
        });
        assert!(matches!(
            Container::from_bytes(&container_with_header(&bad_contrast, &[])),
            Err(Error::CorruptContainer(_))
        ));
    }

    #[test]
    fn case_without_kspace_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.ksb");
        let gt = MagnitudeVolume::new(Array3::zeros((1, 2, 2))).unwrap();
        write_reconstruction(&path, &CaseAttrs::new("a", Contrast::PD, 3.0), &gt).unwrap();
        assert!(matches!(read_case(&path), Err(Error::CorruptContainer(_))));
        let (attrs, back) = read_reconstruction(&path).unwrap();
        assert_eq!(attrs.case_id, "a");
        assert_eq!(back, gt);
    }

    proptest! {
        #[test]
        fn arbitrary_bit_patterns_survive(bits in proptest::collection::vec(any::<u32>(), 1..64)) {
            let n = bits.len();
            let arr = ArrayD::from_shape_vec(IxDyn(&[n]), bits.iter().map(|&b| f32::from_bits(b)).collect()).unwrap();
            let c = Container {
                attrs: CaseAttrs::new("p", Contrast::PD, 3.0),
                arrays: vec![NamedArray { name: "raw".into(), data: ArrayData::Real(arr) }],
            };
            let back = Container::from_bytes(&c.to_bytes().unwrap()).unwrap();
            match back.get("raw").unwrap() {
                ArrayData::Real(a) => {
                    let got: Vec<u32> = a.iter().map(|v| v.to_bits()).collect();
                    prop_assert_eq!(got, bits);
                }
                _ => prop_assert!(false),
            }
        }
    }
}
