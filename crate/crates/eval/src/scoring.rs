use std::collections::BTreeMap;
use std::path::Path;

use kbench_core::container::{read_reconstruction, reconstruction_from_container, Container};
use kbench_core::kspace::MagnitudeVolume;
use kbench_core::metrics::{score_volume_set, MetricReport, ReferenceVolume};
use kbench_core::sampling::Track;

use crate::dataset::{expected_keys, volume_key};
use crate::error::{EvalError, Result};
use crate::protocol::accel_key;

/// Submitted volumes keyed by `(case_id, acceleration)`.
pub type SubmissionVolumes = BTreeMap<(String, u32), MagnitudeVolume>;

fn key_name((case, accel): &(String, u32)) -> String {
    format!("{case}_R{accel}")
}

/// Parses uploaded KSB1 reconstruction containers, keeping upload order.
/// Duplicate keys are rejected.
pub fn parse_keyed<'a>(blobs: impl IntoIterator<Item = &'a [u8]>) -> Result<Vec<((String, u32), MagnitudeVolume)>> {
    let mut out: Vec<((String, u32), MagnitudeVolume)> = Vec::new();
    for bytes in blobs {
        let c = Container::from_bytes(bytes)?;
        let (attrs, volume) = reconstruction_from_container(&c)?;
        let key = volume_key(&attrs)?;
        if out.iter().any(|(k, _)| *k == key) {
            return Err(EvalError::BadRequest(format!("duplicate volume {}", key_name(&key))));
        }
        out.push((key, volume));
    }
    Ok(out)
}

pub fn parse_volumes<'a>(blobs: impl IntoIterator<Item = &'a [u8]>) -> Result<SubmissionVolumes> {
    Ok(parse_keyed(blobs)?.into_iter().collect())
}

/// Reads every `*.ksb` reconstruction under `dir`.
pub fn read_volume_dir(dir: &Path) -> Result<SubmissionVolumes> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "ksb"));
    paths.sort();
    let mut out = SubmissionVolumes::new();
    for p in paths {
        let (attrs, volume) = read_reconstruction(&p)?;
        let key = volume_key(&attrs)?;
        if out.insert(key.clone(), volume).is_some() {
            return Err(EvalError::BadRequest(format!("duplicate volume {}", key_name(&key))));
        }
    }
    Ok(out)
}

/// Rejects a submission whose `(case, accel)` set differs from the split's.
pub fn check_complete(
    track: Track,
    references: &BTreeMap<String, ReferenceVolume>,
    volumes: &SubmissionVolumes,
) -> Result<()> {
    let expected = expected_keys(track, references.keys());
    let missing: Vec<String> = expected
        .iter()
        .filter(|k| !volumes.contains_key(*k))
        .map(key_name)
        .collect();
    let extra: Vec<String> = volumes.keys().filter(|k| !expected.contains(k)).map(key_name).collect();
    if missing.is_empty() && extra.is_empty() {
        Ok(())
    } else {
        Err(EvalError::SubmissionIncomplete { missing, extra })
    }
}

/// One metric report per acceleration of the track, keyed `"R4"` / `"R8"`.
pub fn score_submission(
    track: Track,
    references: &BTreeMap<String, ReferenceVolume>,
    volumes: &SubmissionVolumes,
) -> Result<BTreeMap<String, MetricReport>> {
    check_complete(track, references, volumes)?;
    let mut out = BTreeMap::new();
    for &accel in track.accelerations() {
        let preds: BTreeMap<String, MagnitudeVolume> = volumes
            .iter()
            .filter(|((_, a), _)| *a == accel)
            .map(|((c, _), v)| (c.clone(), v.clone()))
            .collect();
        out.insert(accel_key(accel), score_volume_set(references, &preds)?);
    }
    Ok(out)
}
