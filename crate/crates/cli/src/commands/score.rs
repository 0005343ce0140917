use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context as _, Result};
use kbench_core::metrics::MetricReport;
use kbench_core::recon::ReconMethod;
use kbench_core::sampling::Track;
use kbench_eval::dataset::Dataset;
use kbench_eval::protocol::Phase;
use kbench_eval::scoring::{read_volume_dir, score_submission};
use kbench_eval::split::SplitName;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::mask::boards;
use super::recon::{applies, submission_dir};
use crate::run::{require_dir, write_json, Context, StageOutcome};

pub const SCORES_FILE: &str = "scores.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoardScores {
    pub phase: Phase,
    pub track: Track,
    /// Keyed `"R4"` / `"R8"`.
    pub metrics: BTreeMap<String, MetricReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodScores {
    pub method: ReconMethod,
    pub boards: Vec<BoardScores>,
}

pub fn read_scores(dir: &Path) -> Result<MethodScores> {
    let path = dir.join(SCORES_FILE);
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

/// Scores a method's reconstructions on every leaderboard split against the
/// ground truth, exactly as the leaderboard would.
pub fn run(ctx: &Context, method: ReconMethod) -> Result<StageOutcome> {
    let recon = ctx.recon_dir(method);
    require_dir(&recon, &format!("recon --method {method}"))?;
    let ds = Dataset::open(&ctx.dataset_dir())?;
    let mut out = MethodScores {
        method,
        boards: Vec::new(),
    };
    for (phase, track) in boards().into_iter().filter(|&(_, t)| applies(method, t)) {
        let refs = ds.references(SplitName::for_board(phase, track))?;
        let dir = submission_dir(&recon, phase, track);
        let volumes = read_volume_dir(&dir).with_context(|| format!("reading {}", dir.display()))?;
        let metrics = ctx.install(|| score_submission(track, &refs, &volumes))?;
        out.boards.push(BoardScores { phase, track, metrics });
    }
    let args = json!({ "method": method });
    ctx.stage(&ctx.scores_dir(method), ctx.manifest("score", args), |dir| {
        write_json(&dir.join(SCORES_FILE), &out)
    })
}
