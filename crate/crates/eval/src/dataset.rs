//! On-disk dataset layout shared by the generator, scorer and server.
//!
//! ```text
//! <root>/splits.json           SplitManifest
//! <root>/cases/<id>.ksb        multi-coil k-space + RSS ground truth
//! <root>/singlecoil/<id>.ksb   emulated single-coil k-space + the same ground truth
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use kbench_core::container::{read_case, CaseFile};
use kbench_core::kspace::CaseAttrs;
use kbench_core::metrics::ReferenceVolume;
use kbench_core::sampling::{CoilMode, SamplingMask, Track};

use crate::error::{EvalError, Result};
use crate::split::{SplitManifest, SplitName};

pub const SPLITS_FILE: &str = "splits.json";

#[derive(Clone, Debug)]
pub struct Dataset {
    root: PathBuf,
    pub manifest: SplitManifest,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let path = root.join(SPLITS_FILE);
        let text = fs::read_to_string(&path).map_err(|e| EvalError::NotFound(format!("{}: {e}", path.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
            manifest: serde_json::from_str(&text)?,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn case_path(root: &Path, mode: CoilMode, case_id: &str) -> PathBuf {
        let dir = match mode {
            CoilMode::Multi => "cases",
            CoilMode::Single => "singlecoil",
        };
        root.join(dir).join(format!("{case_id}.ksb"))
    }

    pub fn read(&self, mode: CoilMode, case_id: &str) -> Result<CaseFile> {
        Ok(read_case(&Self::case_path(&self.root, mode, case_id))?)
    }

    /// Ground truth and contrast of every case in `split`.
    pub fn references(&self, split: SplitName) -> Result<BTreeMap<String, ReferenceVolume>> {
        self.manifest
            .cases(split)
            .iter()
            .map(|id| {
                let case = self.read(CoilMode::Multi, id)?;
                let volume = case
                    .ground_truth
                    .ok_or_else(|| EvalError::NotFound(format!("ground truth for case {id}")))?;
                Ok((
                    id.clone(),
                    ReferenceVolume {
                        contrast: case.kspace.attrs.contrast,
                        volume,
                    },
                ))
            })
            .collect()
    }
}

/// Scoring references for the four leaderboard splits.
#[derive(Clone, Debug, Default)]
pub struct References {
    pub by_split: BTreeMap<SplitName, BTreeMap<String, ReferenceVolume>>,
}

impl References {
    pub fn load(ds: &Dataset) -> Result<Self> {
        let mut by_split = BTreeMap::new();
        for split in SplitName::ALL {
            if split.board().is_some() {
                by_split.insert(split, ds.references(split)?);
            }
        }
        Ok(Self { by_split })
    }

    pub fn split(&self, split: SplitName) -> Result<&BTreeMap<String, ReferenceVolume>> {
        self.by_split
            .get(&split)
            .ok_or_else(|| EvalError::NotFound(format!("references for split {split}")))
    }
}

/// `(case_id, acceleration)` of a submitted volume, taken from its `accel`
/// attribute or, failing that, from the recorded mask.
pub fn volume_key(attrs: &CaseAttrs) -> Result<(String, u32)> {
    let accel = match attrs.extra.get("accel").and_then(|v| v.as_u64()) {
        Some(a) => a as u32,
        None => SamplingMask::from_attrs(attrs)?
            .map(|m| m.accel.round() as u32)
            .ok_or_else(|| EvalError::BadRequest(format!("volume {} records no acceleration", attrs.case_id)))?,
    };
    Ok((attrs.case_id.clone(), accel))
}

pub fn volume_file_name(case_id: &str, accel: u32) -> String {
    format!("{case_id}_R{accel}.ksb")
}

/// Expected `(case, accel)` keys for a track over a split's cases.
pub fn expected_keys<'a>(track: Track, cases: impl IntoIterator<Item = &'a String>) -> Vec<(String, u32)> {
    let mut out = Vec::new();
    for c in cases {
        for &a in track.accelerations() {
            out.push((c.clone(), a));
        }
    }
    out
}
