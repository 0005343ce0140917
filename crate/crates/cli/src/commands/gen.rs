use std::fs;

use anyhow::{Context as _, Result};
use kbench_core::container::write_case;
use kbench_core::kspace::virtual_single_coil;
use kbench_core::phantom::simulate_case;
use kbench_core::rng::{fnv1a64, mix_seed};
use kbench_core::sampling::CoilMode;
use kbench_eval::dataset::{Dataset, SPLITS_FILE};
use kbench_eval::split::split_dataset;
use rayon::prelude::*;
use serde_json::json;

use crate::config::SimSection;
use crate::run::{write_json, Context, StageOutcome};

/// Simulates every case (multi-coil k-space, its emulated single-coil
/// counterpart, and the RSS ground truth) and assigns cases to splits.
pub fn run(ctx: &Context) -> Result<StageOutcome> {
    let cfg = &ctx.config;
    let seed = ctx.seed();
    let target = ctx.dataset_dir();
    ctx.stage(&target, ctx.manifest("gen", json!({})), |dir| {
        fs::create_dir_all(dir.join("cases"))?;
        fs::create_dir_all(dir.join("singlecoil"))?;
        let ids: Vec<String> = (0..cfg.sim.n_cases).map(SimSection::case_id).collect();
        ctx.install(|| {
            (0..cfg.sim.n_cases).into_par_iter().try_for_each(|i| -> Result<()> {
                let sim = cfg.sim.case_config(i, mix_seed(seed, &[fnv1a64(b"sim"), i as u64]));
                let case = simulate_case(&sim).with_context(|| format!("simulating {}", sim.case_id))?;
                let (mut single, fit) = virtual_single_coil(&case.kspace)?;
                single
                    .attrs
                    .extra
                    .insert("virtual_coil_method".into(), serde_json::to_value(fit.method)?);
                let gt = Some(&case.ground_truth);
                write_case(
                    &Dataset::case_path(dir, CoilMode::Multi, &sim.case_id),
                    &case.kspace,
                    gt,
                )?;
                write_case(&Dataset::case_path(dir, CoilMode::Single, &sim.case_id), &single, gt)?;
                Ok(())
            })
        })?;
        let manifest = split_dataset(&ids, seed, &cfg.split.fractions())?;
        write_json(&dir.join(SPLITS_FILE), &manifest)
    })
}
