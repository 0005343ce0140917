use std::collections::BTreeMap;
use std::fs;

use anyhow::{bail, Context as _, Result};
use kbench_core::container::read_reconstruction;
use kbench_core::kspace::MagnitudeVolume;
use kbench_core::rng::{fnv1a64, mix_seed};
use kbench_core::sampling::{CoilMode, Track};
use kbench_eval::dataset::{volume_file_name, Dataset};
use kbench_eval::log::replay_file;
use kbench_eval::protocol::{select_finalists, LeaderboardState, Phase, ScoreCard};
use kbench_eval::service::{bundle_dir, plan_path, read_plan, EVENTS_FILE, PLAN_FILE, SUBMISSIONS_DIR, VOLUMES_DIR};
use kbench_eval::split::SplitName;
use kbench_eval::study::{
    aggregate_for_plan, build_study_plan, export_bundle, normalize_for_scatter, rank_grid_csv, result_csv, scatter_csv,
    StudyCase, StudyPlan, StudyResult,
};
use serde_json::json;

use crate::run::{write_json, Context, StageOutcome};

pub fn load_state(ctx: &Context) -> Result<LeaderboardState> {
    let path = ctx.eval_dir().join(EVENTS_FILE);
    if !path.exists() {
        bail!("{} does not exist; run `kbench serve` and submit first", path.display());
    }
    Ok(replay_file(&path)?)
}

fn load_plan(ctx: &Context, track: Track) -> Result<StudyPlan> {
    let path = plan_path(&ctx.study_dir(), track);
    if !path.exists() {
        bail!(
            "{} does not exist; run `kbench study plan --track {track}` first",
            path.display()
        );
    }
    Ok(read_plan(&path)?)
}

/// Each finalist's challenge scorecard, in finalist order.
pub fn finalist_cards(state: &LeaderboardState, track: Track, teams: &[String]) -> Result<Vec<ScoreCard>> {
    teams
        .iter()
        .map(|team| {
            state
                .scorecards()
                .iter()
                .find(|c| c.phase == Phase::Challenge && c.track == track && &c.team_id == team)
                .cloned()
                .with_context(|| format!("no challenge submission from {team} on the {track} track"))
        })
        .collect()
}

/// Samples cases and blinds the finalists for each reader.
pub fn plan(ctx: &Context, track: Track) -> Result<StageOutcome> {
    let cfg = &ctx.config.study;
    let state = load_state(ctx)?;
    let finalists = select_finalists(&state, track, cfg.finalists)?;
    let ds = Dataset::open(&ctx.dataset_dir())?;
    let split = SplitName::for_board(Phase::Challenge, track);
    let cases = ds
        .manifest
        .cases(split)
        .iter()
        .map(|id| {
            let contrast = ds.read(CoilMode::Multi, id)?.kspace.attrs.contrast;
            Ok(StudyCase {
                case_id: id.clone(),
                contrast,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let seed = mix_seed(ctx.seed(), &[fnv1a64(b"study"), fnv1a64(track.as_str().as_bytes())]);
    let plan = build_study_plan(&finalists, &cases, cfg.n_cases, cfg.n_readers, seed)?;
    let target = plan_path(&ctx.study_dir(), track);
    let target = target.parent().expect("plan path has a parent");
    ctx.stage(target, ctx.manifest("study plan", json!({ "track": track })), |dir| {
        write_json(&dir.join(PLAN_FILE), &plan)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["reader_id", "token", "session"])?;
        for r in &plan.readers {
            let link = format!("/api/study/{track}/session?token={}", r.token);
            w.write_record([r.reader_id.as_str(), r.token.as_str(), link.as_str()])?;
        }
        fs::write(dir.join("readers.csv"), w.into_inner()?)?;
        Ok(())
    })
}

/// Renders the blinded per-reader image bundle the reader client loads.
pub fn export(ctx: &Context, track: Track) -> Result<StageOutcome> {
    let plan = load_plan(ctx, track)?;
    let state = load_state(ctx)?;
    let ds = Dataset::open(&ctx.dataset_dir())?;
    let accel = ctx.config.study.accel(track);
    let mut gt = BTreeMap::new();
    for case in &plan.cases {
        let file = ds.read(CoilMode::Multi, &case.case_id)?;
        let volume = file
            .ground_truth
            .with_context(|| format!("case {} has no ground truth", case.case_id))?;
        gt.insert(case.case_id.clone(), volume);
    }
    let mut recons: BTreeMap<String, BTreeMap<String, MagnitudeVolume>> = BTreeMap::new();
    for card in finalist_cards(&state, track, &plan.finalists)? {
        let vdir = ctx.eval_dir().join(SUBMISSIONS_DIR).join(&card.id).join(VOLUMES_DIR);
        for case in &plan.cases {
            let path = vdir.join(volume_file_name(&case.case_id, accel));
            let (_, v) = read_reconstruction(&path).with_context(|| format!("reading {}", path.display()))?;
            recons
                .entry(card.team_id.clone())
                .or_default()
                .insert(case.case_id.clone(), v);
        }
    }
    let slices = &ctx.config.study.slices;
    let slices = (!slices.is_empty()).then_some(slices.as_slice());
    let args = json!({ "track": track });
    ctx.stage(
        &bundle_dir(&ctx.study_dir(), track),
        ctx.manifest("study export", args),
        |dir| {
            ctx.install(|| export_bundle(&plan, &gt, &recons, slices, dir))?;
            Ok(())
        },
    )
}

/// Aggregated reader results for a track, once every reader has responded.
pub fn aggregate_result(state: &LeaderboardState, plan: &StudyPlan) -> Result<StudyResult> {
    Ok(aggregate_for_plan(plan, state.study_responses(plan.track))?)
}

pub fn aggregate(ctx: &Context, track: Track) -> Result<StageOutcome> {
    let plan = load_plan(ctx, track)?;
    let state = load_state(ctx)?;
    let result = aggregate_result(&state, &plan)?;
    let cards = finalist_cards(&state, track, &plan.finalists)?;
    let scatter = normalize_for_scatter(track, &cards, &result)?;
    let args = json!({ "track": track });
    ctx.stage(
        &ctx.study_result_dir(track),
        ctx.manifest("study aggregate", args),
        |dir| {
            write_json(&dir.join("result.json"), &result)?;
            fs::write(dir.join("result.csv"), result_csv(&result)?)?;
            fs::write(dir.join("rank_grid.csv"), rank_grid_csv(&result)?)?;
            fs::write(dir.join("scatter.csv"), scatter_csv(&scatter)?)?;
            Ok(())
        },
    )
}
