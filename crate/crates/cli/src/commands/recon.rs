use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use kbench_core::container::{read_case, write_reconstruction};
use kbench_core::recon::{reconstruct, ReconMethod};
use kbench_core::sampling::Track;
use kbench_eval::dataset::{volume_file_name, Dataset};
use kbench_eval::split::SplitName;
use rayon::prelude::*;
use serde_json::json;

use super::mask::{board_dir, boards, input_path};
use crate::run::{require_dir, Context, StageOutcome};

/// `<recon>/<method>/<phase>/<track>/`: one submission-ready directory per
/// leaderboard.
pub fn submission_dir(recon: &Path, phase: kbench_eval::protocol::Phase, track: Track) -> PathBuf {
    board_dir(recon, phase, track)
}

/// CG-SENSE needs coil maps, so it has no single-coil reconstructions.
pub fn applies(method: ReconMethod, track: Track) -> bool {
    !(method == ReconMethod::CgSense && track == Track::Singlecoil)
}

/// Reconstructs every input with `method`.
pub fn run(ctx: &Context, method: ReconMethod) -> Result<StageOutcome> {
    require_dir(&ctx.inputs_dir(), "mask")?;
    let ds = Dataset::open(&ctx.dataset_dir())?;
    let cfg = ctx.config.recon.config(method);
    let mut jobs = Vec::new();
    for (phase, track) in boards().into_iter().filter(|&(_, t)| applies(method, t)) {
        for case in ds.manifest.cases(SplitName::for_board(phase, track)) {
            for &a in track.accelerations() {
                jobs.push((phase, track, a, case.clone()));
            }
        }
    }
    let args = json!({ "method": method });
    ctx.stage(&ctx.recon_dir(method), ctx.manifest("recon", args), |dir| {
        ctx.install(|| {
            jobs.par_iter().try_for_each(|(phase, track, a, case)| -> Result<()> {
                let input = input_path(&ctx.inputs_dir(), *phase, *track, *a, case);
                let file = read_case(&input).with_context(|| format!("reading {}", input.display()))?;
                let out =
                    reconstruct(&file.kspace, &cfg).with_context(|| format!("{method} on {}", input.display()))?;
                let mut attrs = file.kspace.attrs.clone();
                attrs.extra.remove("mask");
                attrs.extra.extend(out.attrs);
                let dest = submission_dir(dir, *phase, *track).join(volume_file_name(case, *a));
                fs::create_dir_all(dest.parent().expect("has parent"))?;
                write_reconstruction(&dest, &attrs, &out.volume)?;
                Ok(())
            })
        })
    })
}
