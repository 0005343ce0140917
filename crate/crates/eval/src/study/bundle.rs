//! Reading-session bundle for the study UI.
//!
//! ```text
//! <out>/<reader>/session.json                  ReaderSession
//! <out>/<reader>/<case>/descriptor.json        BundleDescriptor
//! <out>/<reader>/<case>/<panel>_s<slice>.png   GT first, then labels in panel order
//! ```
//!
//! Nothing in the bundle names a team; panels are identified by blinded label only.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use kbench_core::kspace::{Contrast, MagnitudeVolume};
use kbench_core::sampling::Track;
use serde::{Deserialize, Serialize};

use super::{Criterion, StudyPlan, SCALE_MAX};
use crate::error::{EvalError, Result};
use crate::render::{render_png, volume_max};

pub const BUNDLE_GT_LABEL: &str = "GT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReaderSession {
    pub reader_id: String,
    pub track: Track,
    pub labels: Vec<String>,
    pub cases: Vec<String>,
    pub criteria: Vec<Criterion>,
    pub scale_max: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub label: String,
    /// Image file names, one per slice, relative to the descriptor.
    pub images: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleDescriptor {
    pub reader_id: String,
    pub case_id: String,
    pub contrast: Contrast,
    pub slices: Vec<usize>,
    pub panels: Vec<Panel>,
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

/// Writes the bundle for every reader. `recons` maps team → case → volume;
/// `slices` defaults to every slice. All panels of a case share the ground
/// truth's window.
pub fn export_bundle(
    plan: &StudyPlan,
    ground_truth: &BTreeMap<String, MagnitudeVolume>,
    recons: &BTreeMap<String, BTreeMap<String, MagnitudeVolume>>,
    slices: Option<&[usize]>,
    out: &Path,
) -> Result<()> {
    let mut images: BTreeMap<(String, String), Vec<Vec<u8>>> = BTreeMap::new();
    let mut chosen: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for case in &plan.cases {
        let gt = ground_truth
            .get(&case.case_id)
            .ok_or_else(|| EvalError::NotFound(format!("ground truth for {}", case.case_id)))?;
        let idx: Vec<usize> = match slices {
            Some(s) => s.to_vec(),
            None => (0..gt.nslices()).collect(),
        };
        if let Some(&s) = idx.iter().find(|&&s| s >= gt.nslices()) {
            return Err(EvalError::BadRequest(format!(
                "slice {s} out of range for case {} with {} slices",
                case.case_id,
                gt.nslices()
            )));
        }
        let white = volume_max(gt);
        let render = |v: &MagnitudeVolume| -> Result<Vec<Vec<u8>>> {
            if v.dim() != gt.dim() {
                return Err(EvalError::Core(kbench_core::Error::ShapeMismatch {
                    expected: vec![gt.dim().0, gt.dim().1, gt.dim().2],
                    actual: vec![v.dim().0, v.dim().1, v.dim().2],
                }));
            }
            idx.iter().map(|&s| render_png(v.slice(s), white)).collect()
        };
        images.insert((BUNDLE_GT_LABEL.into(), case.case_id.clone()), render(gt)?);
        for team in &plan.finalists {
            let v = recons
                .get(team)
                .and_then(|m| m.get(&case.case_id))
                .ok_or_else(|| EvalError::NotFound(format!("{team} reconstruction of {}", case.case_id)))?;
            images.insert((team.clone(), case.case_id.clone()), render(v)?);
        }
        chosen.insert(case.case_id.clone(), idx);
    }

    for reader in &plan.readers {
        let rdir = out.join(&reader.reader_id);
        fs::create_dir_all(&rdir)?;
        write_json(
            &rdir.join("session.json"),
            &ReaderSession {
                reader_id: reader.reader_id.clone(),
                track: plan.track,
                labels: plan.labels(),
                cases: plan.cases.iter().map(|c| c.case_id.clone()).collect(),
                criteria: Criterion::ALL.to_vec(),
                scale_max: SCALE_MAX,
            },
        )?;
        for case in &plan.cases {
            let cdir = rdir.join(&case.case_id);
            fs::create_dir_all(&cdir)?;
            let idx = &chosen[&case.case_id];
            let order =
                std::iter::once(BUNDLE_GT_LABEL.to_string()).chain(reader.panel_order[&case.case_id].iter().cloned());
            let mut panels = Vec::new();
            for label in order {
                let source = if label == BUNDLE_GT_LABEL {
                    label.clone()
                } else {
                    reader.labels[&label].clone()
                };
                let pngs = &images[&(source, case.case_id.clone())];
                let names: Vec<String> = idx.iter().map(|s| format!("{label}_s{s:03}.png")).collect();
                for (name, png) in names.iter().zip(pngs) {
                    fs::write(cdir.join(name), png)?;
                }
                panels.push(Panel { label, images: names });
            }
            write_json(
                &cdir.join("descriptor.json"),
                &BundleDescriptor {
                    reader_id: reader.reader_id.clone(),
                    case_id: case.case_id.clone(),
                    contrast: case.contrast,
                    slices: idx.clone(),
                    panels,
                },
            )?;
        }
    }
    Ok(())
}
