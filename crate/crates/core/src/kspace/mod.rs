//! Complex-array primitives shared by every stage of the pipeline.

mod coil;
mod crop;
mod fft;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Array3, Array4, ArrayView2, ArrayView3, Axis};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) use coil::coil_images;
pub use coil::{fit_virtual_coil_weights, rss_combine, virtual_single_coil, VirtualCoilFit, VirtualCoilMethod};
pub use crop::{center_crop, center_crop_volume, crop_offset};
pub use fft::{fft2c, ifft2c, CenteredFft2};

pub type C32 = Complex<f32>;
pub type C64 = Complex<f64>;

/// Side length of the ground-truth crop.
pub const CROP_SIZE: usize = 320;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Contrast {
    PD,
    PDFS,
}

impl Contrast {
    pub const ALL: [Contrast; 2] = [Contrast::PD, Contrast::PDFS];

    pub fn as_str(self) -> &'static str {
        match self {
            Contrast::PD => "PD",
            Contrast::PDFS => "PDFS",
        }
    }
}

impl fmt::Display for Contrast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Contrast {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "PD" => Ok(Contrast::PD),
            "PDFS" => Ok(Contrast::PDFS),
            other => Err(Error::InvalidData(format!("unknown contrast {other:?}"))),
        }
    }
}

pub fn validate_field_strength(tesla: f64) -> Result<f64> {
    if tesla == 1.5 || tesla == 3.0 {
        Ok(tesla)
    } else {
        Err(Error::InvalidData(format!(
            "field strength must be 1.5 or 3.0 T, got {tesla}"
        )))
    }
}

/// Case metadata carried alongside every volume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseAttrs {
    pub case_id: String,
    pub contrast: Contrast,
    pub field_strength_tesla: f64,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl CaseAttrs {
    pub fn new(case_id: impl Into<String>, contrast: Contrast, field_strength_tesla: f64) -> Self {
        Self {
            case_id: case_id.into(),
            contrast,
            field_strength_tesla,
            extra: Default::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.case_id.is_empty() {
            return Err(Error::InvalidData("empty case_id".into()));
        }
        validate_field_strength(self.field_strength_tesla)?;
        Ok(())
    }
}

/// A single complex image, `[height, width]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexImage {
    data: Array2<C64>,
}

impl ComplexImage {
    pub fn new(data: Array2<C64>) -> Result<Self> {
        let (h, w) = data.dim();
        if h == 0 || w == 0 {
            return Err(Error::InvalidData(format!("empty image {h}x{w}")));
        }
        if !data.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::InvalidData("non-finite sample".into()));
        }
        Ok(Self { data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            data: Array2::zeros((height, width)),
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn view(&self) -> ArrayView2<'_, C64> {
        self.data.view()
    }

    pub fn into_inner(self) -> Array2<C64> {
        self.data
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Per-coil complex images, `[ncoils, height, width]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoilImages {
    data: Array3<C64>,
}

impl CoilImages {
    pub fn new(data: Array3<C64>) -> Result<Self> {
        let (c, h, w) = data.dim();
        if c == 0 {
            return Err(Error::InvalidData("coil axis is empty".into()));
        }
        if h == 0 || w == 0 {
            return Err(Error::InvalidData(format!("empty coil images {h}x{w}")));
        }
        Ok(Self { data })
    }

    pub fn ncoils(&self) -> usize {
        self.data.len_of(Axis(0))
    }

    pub fn view(&self) -> ArrayView3<'_, C64> {
        self.data.view()
    }

    pub fn into_inner(self) -> Array3<C64> {
        self.data
    }
}

/// Raw k-space for one case, `[nslices, ncoils, height, width]`, stored as the
/// single-precision samples the container holds.
#[derive(Clone, Debug, PartialEq)]
pub struct KSpaceVolume {
    data: Array4<C32>,
    pub attrs: CaseAttrs,
}

impl KSpaceVolume {
    pub fn new(data: Array4<C32>, attrs: CaseAttrs) -> Result<Self> {
        let (s, c, h, w) = data.dim();
        if s == 0 || c == 0 || h == 0 || w == 0 {
            return Err(Error::InvalidData(format!(
                "k-space dims must be nonzero, got [{s}, {c}, {h}, {w}]"
            )));
        }
        attrs.validate()?;
        Ok(Self { data, attrs })
    }

    pub fn dim(&self) -> (usize, usize, usize, usize) {
        self.data.dim()
    }

    pub fn nslices(&self) -> usize {
        self.data.len_of(Axis(0))
    }

    pub fn ncoils(&self) -> usize {
        self.data.len_of(Axis(1))
    }

    pub fn height(&self) -> usize {
        self.data.len_of(Axis(2))
    }

    pub fn width(&self) -> usize {
        self.data.len_of(Axis(3))
    }

    pub fn data(&self) -> &Array4<C32> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array4<C32> {
        &mut self.data
    }

    pub fn into_parts(self) -> (Array4<C32>, CaseAttrs) {
        (self.data, self.attrs)
    }

    /// One slice's coil k-space widened to double precision.
    pub fn slice_f64(&self, slice: usize) -> Array3<C64> {
        self.data
            .index_axis(Axis(0), slice)
            .mapv(|z| C64::new(z.re as f64, z.im as f64))
    }

    pub fn energy(&self) -> f64 {
        self.data
            .iter()
            .map(|z| (z.re as f64).powi(2) + (z.im as f64).powi(2))
            .sum()
    }
}

/// Real, non-negative image stack, `[nslices, height, width]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MagnitudeVolume {
    data: Array3<f32>,
}

impl MagnitudeVolume {
    pub fn new(data: Array3<f32>) -> Result<Self> {
        let (s, h, w) = data.dim();
        if s == 0 || h == 0 || w == 0 {
            return Err(Error::InvalidData(format!(
                "magnitude dims must be nonzero, got [{s}, {h}, {w}]"
            )));
        }
        if let Some(v) = data.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidData(format!(
                "magnitude values must be finite and >= 0, found {v}"
            )));
        }
        Ok(Self { data })
    }

    /// Stacks double-precision slices into a volume.
    pub fn from_slices(slices: &[Array2<f64>]) -> Result<Self> {
        let first = slices.first().ok_or_else(|| Error::InvalidData("no slices".into()))?;
        let (h, w) = first.dim();
        let mut data = Array3::<f32>::zeros((slices.len(), h, w));
        for (i, s) in slices.iter().enumerate() {
            if s.dim() != (h, w) {
                return Err(Error::ShapeMismatch {
                    expected: vec![h, w],
                    actual: vec![s.dim().0, s.dim().1],
                });
            }
            data.index_axis_mut(Axis(0), i).zip_mut_with(s, |d, &v| *d = v as f32);
        }
        Self::new(data)
    }

    pub fn dim(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    pub fn nslices(&self) -> usize {
        self.data.len_of(Axis(0))
    }

    pub fn view(&self) -> ArrayView3<'_, f32> {
        self.data.view()
    }

    pub fn slice(&self, i: usize) -> ArrayView2<'_, f32> {
        self.data.index_axis(Axis(0), i)
    }

    pub fn into_inner(self) -> Array3<f32> {
        self.data
    }

    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(0.0, f32::max)
    }
}
