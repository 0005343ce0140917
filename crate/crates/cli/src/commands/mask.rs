use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Result;
use kbench_core::container::write_case;
use kbench_core::rng::{fnv1a64, mix_seed};
use kbench_core::sampling::{apply_mask, format_fixture_line, Track};
use kbench_eval::dataset::Dataset;
use kbench_eval::protocol::Phase;
use kbench_eval::split::SplitName;
use rayon::prelude::*;
use serde_json::json;

use crate::run::{require_dir, Context, StageOutcome};

/// `(phase, track)` of every leaderboard, in a fixed order.
pub fn boards() -> Vec<(Phase, Track)> {
    Phase::ALL
        .iter()
        .flat_map(|&p| Track::ALL.iter().map(move |&t| (p, t)))
        .collect()
}

pub fn board_dir(root: &Path, phase: Phase, track: Track) -> PathBuf {
    root.join(phase.as_str()).join(track.as_str())
}

/// `<inputs>/<phase>/<track>/R<a>/<case>.ksb`
pub fn input_path(inputs: &Path, phase: Phase, track: Track, accel: u32, case_id: &str) -> PathBuf {
    board_dir(inputs, phase, track)
        .join(format!("R{accel}"))
        .join(format!("{case_id}.ksb"))
}

/// Retrospectively undersamples every leaderboard case at each of its
/// track's accelerations. Inputs carry no ground truth.
pub fn run(ctx: &Context) -> Result<StageOutcome> {
    require_dir(&ctx.dataset_dir(), "gen")?;
    let ds = Dataset::open(&ctx.dataset_dir())?;
    let mask_seed = mix_seed(ctx.seed(), &[fnv1a64(b"mask")]);
    let mut jobs = Vec::new();
    for (phase, track) in boards() {
        for case in ds.manifest.cases(SplitName::for_board(phase, track)) {
            for &a in track.accelerations() {
                jobs.push((phase, track, a, case.clone()));
            }
        }
    }
    ctx.stage(&ctx.inputs_dir(), ctx.manifest("mask", json!({})), |dir| {
        let lines = ctx.install(|| {
            jobs.par_iter()
                .map(|(phase, track, a, case)| -> Result<String> {
                    let tc = ctx.config.sampling.track_config(*track, *a)?;
                    let file = ds.read(track.coil_mode(), case)?;
                    let mask = tc.mask_for_case(file.kspace.width(), case, mask_seed)?;
                    let mut masked = apply_mask(&file.kspace, &mask)?;
                    masked.attrs.extra.insert("accel".into(), (*a).into());
                    let path = input_path(dir, *phase, *track, *a, case);
                    fs::create_dir_all(path.parent().expect("input path has a parent"))?;
                    write_case(&path, &masked, None)?;
                    Ok(format!("{phase} {track} {case} {}\n", format_fixture_line(&mask)))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        fs::write(dir.join("masks.txt"), lines.concat())?;
        Ok(())
    })
}
