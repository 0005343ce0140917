use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::Result;
use kbench_core::kspace::Contrast;
use kbench_core::metrics::MetricReport;
use kbench_core::recon::ReconMethod;
use kbench_core::sampling::Track;
use kbench_eval::protocol::{
    accel_key, rank_leaderboard, standings_bytes, timestamp, LeaderboardState, Phase, ScoreCard,
};
use kbench_eval::service::{plan_path, read_plan};
use kbench_eval::study::{
    aggregate_ranks, normalize_for_scatter, rank_grid_csv, result_csv, scatter_csv, Criterion, StudyResult,
};
use kbench_eval::EvalError;
use serde_json::json;

use super::mask::boards;
use super::score::read_scores;
use super::study::{aggregate_result, load_state};
use crate::run::{Context, StageOutcome};

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    Ok(w.into_inner()?)
}

fn metric_header(track: Track) -> Vec<String> {
    let mut h = Vec::new();
    for &a in track.accelerations() {
        for m in ["ssim", "psnr", "nmse"] {
            h.push(format!("{}_{m}", accel_key(a)));
        }
    }
    h
}

fn metric_cells(track: Track, metrics: Option<&std::collections::BTreeMap<String, MetricReport>>) -> Vec<String> {
    let mut out = Vec::new();
    for &a in track.accelerations() {
        match metrics.and_then(|m| m.get(&accel_key(a))) {
            Some(r) => out.extend([r.ssim.to_string(), r.psnr.to_string(), r.nmse.to_string()]),
            None => out.extend([String::new(), String::new(), String::new()]),
        }
    }
    out
}

fn md_table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut s = format!("| {} |\n|{}\n", header.join(" | "), "---|".repeat(header.len()));
    for r in rows {
        let _ = writeln!(s, "| {} |", r.join(" | "));
    }
    s
}

fn short(x: f64) -> String {
    format!("{x:.4}")
}

/// Reader results for a track: from the plan when one exists, else from the
/// logged responses with the configured reader count.
fn study_result(ctx: &Context, state: &LeaderboardState, track: Track) -> Option<Result<StudyResult>> {
    let path = plan_path(&ctx.study_dir(), track);
    let responses = state.study_responses(track);
    if path.exists() {
        Some(
            read_plan(&path)
                .map_err(Into::into)
                .and_then(|p| aggregate_result(state, &p)),
        )
    } else if responses.is_empty() {
        None
    } else {
        Some(aggregate_ranks(responses, ctx.config.study.n_readers).map_err(Into::into))
    }
}

fn card_for<'a>(state: &'a LeaderboardState, track: Track, team: &str) -> Option<&'a ScoreCard> {
    state
        .scorecards()
        .iter()
        .find(|c| c.phase == Phase::Challenge && c.track == track && c.team_id == team)
}

/// Leaderboard tables, per-track SSIM summary of the challenge entries,
/// baseline scores, and reader-study tables, all derived from the event log.
pub fn run(ctx: &Context) -> Result<StageOutcome> {
    let state = load_state(ctx)?;
    let mut files: Vec<(String, Vec<u8>)> = vec![("standings.json".into(), standings_bytes(&state))];
    let mut md = String::from("# Challenge report\n");

    md.push_str("\n## Leaderboards\n");
    for (phase, track) in boards() {
        let _ = writeln!(md, "\n### {phase} / {track}\n");
        match rank_leaderboard(&state, track, phase) {
            Ok(cards) => {
                let mut header: Vec<String> = ["rank", "team", "submission", "submitted_at"].map(String::from).into();
                header.extend(metric_header(track));
                let rows: Vec<Vec<String>> = cards
                    .iter()
                    .map(|c| {
                        let mut r = vec![
                            c.rank.map(|r| r.to_string()).unwrap_or_default(),
                            c.team_id.clone(),
                            c.id.clone(),
                            timestamp(&c.submitted_at),
                        ];
                        r.extend(metric_cells(track, Some(&c.metrics)));
                        r
                    })
                    .collect();
                files.push((format!("leaderboard_{phase}_{track}.csv"), csv_bytes(&header, &rows)?));
                let key = accel_key(track.ranking_accel());
                let md_rows: Vec<Vec<String>> = cards
                    .iter()
                    .map(|c| {
                        vec![
                            c.rank.unwrap_or(0).to_string(),
                            c.team_id.clone(),
                            short(c.ranking_ssim()),
                        ]
                    })
                    .collect();
                if md_rows.is_empty() {
                    md.push_str("No entries.\n");
                } else {
                    md.push_str(&md_table(
                        &["rank".into(), "team".into(), format!("{key} SSIM")],
                        &md_rows,
                    ));
                }
            }
            Err(EvalError::Sealed) => md.push_str("Sealed until the challenge window closes.\n"),
            Err(e) => return Err(e.into()),
        }
    }

    if state.window_closed() {
        let header: Vec<String> = ["track", "accel", "team", "ssim", "ssim_pd", "ssim_pdfs", "n_volumes"]
            .map(String::from)
            .into();
        let mut rows = Vec::new();
        for track in Track::ALL {
            for &a in track.accelerations() {
                for c in rank_leaderboard(&state, track, Phase::Challenge)? {
                    if let Some(r) = c.metrics.get(&accel_key(a)) {
                        let by = |k: Contrast| r.per_contrast.get(&k).map(|s| s.ssim.to_string()).unwrap_or_default();
                        rows.push(vec![
                            track.to_string(),
                            accel_key(a),
                            c.team_id.clone(),
                            r.ssim.to_string(),
                            by(Contrast::PD),
                            by(Contrast::PDFS),
                            r.n_volumes.to_string(),
                        ]);
                    }
                }
            }
        }
        files.push(("ssim_summary.csv".into(), csv_bytes(&header, &rows)?));
    }

    let mut baseline_rows = Vec::new();
    for method in [ReconMethod::ZeroFilled, ReconMethod::CgSense, ReconMethod::CsTv] {
        let dir = ctx.scores_dir(method);
        if !dir.exists() {
            continue;
        }
        for b in read_scores(&dir)?.boards {
            for (accel, r) in &b.metrics {
                baseline_rows.push(vec![
                    method.to_string(),
                    b.phase.to_string(),
                    b.track.to_string(),
                    accel.clone(),
                    r.ssim.to_string(),
                    r.psnr.to_string(),
                    r.nmse.to_string(),
                ]);
            }
        }
    }
    if !baseline_rows.is_empty() {
        let header: Vec<String> = ["method", "phase", "track", "accel", "ssim", "psnr", "nmse"]
            .map(String::from)
            .into();
        md.push_str("\n## Baselines\n\n");
        let md_rows: Vec<Vec<String>> = baseline_rows
            .iter()
            .map(|r| {
                vec![
                    r[0].clone(),
                    r[1].clone(),
                    r[2].clone(),
                    r[3].clone(),
                    short(r[4].parse().unwrap_or(f64::NAN)),
                ]
            })
            .collect();
        md.push_str(&md_table(&header[..5], &md_rows));
        files.push(("baselines.csv".into(), csv_bytes(&header, &baseline_rows)?));
    }

    md.push_str("\n## Reader study\n");
    for track in Track::ALL {
        let _ = writeln!(md, "\n### {track}\n");
        let result = match study_result(ctx, &state, track) {
            None => {
                md.push_str("No reader study.\n");
                continue;
            }
            Some(Err(e)) => {
                let _ = writeln!(md, "Not reported: {e}.");
                continue;
            }
            Some(Ok(r)) => r,
        };
        let mut header: Vec<String> = ["team", "avg_rank", "final_rank"].map(String::from).into();
        header.extend(metric_header(track));
        let rows: Vec<Vec<String>> = result
            .teams
            .iter()
            .map(|t| {
                let mut r = vec![t.team.clone(), t.avg_rank.to_string(), t.rank_label.clone()];
                r.extend(metric_cells(
                    track,
                    card_for(&state, track, &t.team).map(|c| &c.metrics),
                ));
                r
            })
            .collect();
        files.push((format!("reader_ranks_{track}.csv"), csv_bytes(&header, &rows)?));
        files.push((format!("reader_scores_{track}.csv"), result_csv(&result)?));
        files.push((format!("rank_grid_{track}.csv"), rank_grid_csv(&result)?));

        let mut md_header: Vec<String> = ["team", "avg rank", "rank"].map(String::from).into();
        md_header.extend(Criterion::ALL.iter().map(|c| c.as_str().to_string()));
        let md_rows: Vec<Vec<String>> = result
            .teams
            .iter()
            .map(|t| {
                let mut r = vec![t.team.clone(), t.avg_rank.to_string(), t.rank_label.clone()];
                r.extend(Criterion::ALL.iter().map(|c| t.criteria[c].to_string()));
                r
            })
            .collect();
        md.push_str(&md_table(&md_header, &md_rows));

        let cards: Option<Vec<ScoreCard>> = result
            .teams
            .iter()
            .map(|t| card_for(&state, track, &t.team).cloned())
            .collect();
        match cards.map(|c| normalize_for_scatter(track, &c, &result)) {
            Some(Ok(table)) => {
                files.push((format!("scatter_{track}.csv"), scatter_csv(&table)?));
                if !table.flags.is_empty() {
                    let _ = writeln!(md, "\nScatter normalization floored for: {}.", table.flags.join(", "));
                }
            }
            Some(Err(e)) => {
                let _ = writeln!(md, "\nNo scatter table: {e}.");
            }
            None => md.push_str("\nNo scatter table: a finalist has no challenge scorecard.\n"),
        }
    }
    files.push(("summary.md".into(), md.into_bytes()));

    ctx.stage(&ctx.report_dir(), ctx.manifest("report", json!({})), |dir| {
        for (name, bytes) in &files {
            fs::write(Path::new(dir).join(name), bytes)?;
        }
        Ok(())
    })
}
