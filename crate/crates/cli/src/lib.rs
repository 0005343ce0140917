//! `kbench`: simulate a dataset, mask it, run the baseline reconstructions,
//! score them, host the leaderboard, and drive the reader study.

pub mod commands;
pub mod config;
pub mod run;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};
use kbench_core::recon::ReconMethod;
use kbench_core::sampling::Track;
use kbench_eval::protocol::Phase;

use crate::config::Config;
use crate::run::{Context, StageOutcome};

#[derive(Debug, Parser)]
#[command(name = "kbench", version, about = "k-space reconstruction benchmark")]
pub struct Cli {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `[run] seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory holding every stage's output.
    #[arg(long, global = true, default_value = "run")]
    pub out: PathBuf,
    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Replace stage outputs that differ from what would be produced.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate fully sampled cases and split them.
    Gen,
    /// Undersample every leaderboard split at each track's accelerations.
    Mask,
    /// Reconstruct the masked inputs with the configured baselines.
    Recon {
        /// Only this method; every configured method when omitted.
        #[arg(long)]
        method: Option<ReconMethod>,
    },
    /// Score reconstructions against the ground truth.
    Score {
        #[arg(long)]
        method: Option<ReconMethod>,
    },
    /// Host the evaluation service until interrupted.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
    /// Upload a method's reconstructions to one leaderboard.
    Submit {
        #[arg(long)]
        method: ReconMethod,
        #[arg(long)]
        phase: Phase,
        #[arg(long)]
        track: Track,
        /// Team id; defaults to the method name.
        #[arg(long)]
        team: Option<String>,
        #[arg(long)]
        url: Option<String>,
        #[arg(long)]
        token: Option<String>,
    },
    /// Close the challenge window and unseal its leaderboards.
    CloseWindow {
        #[arg(long)]
        url: Option<String>,
        #[arg(long)]
        token: Option<String>,
    },
    /// Reader study: plan, export images, aggregate responses.
    Study {
        #[command(subcommand)]
        action: StudyAction,
    },
    /// Leaderboard, baseline, and reader-study tables.
    Report,
}

#[derive(Debug, Subcommand)]
pub enum StudyAction {
    Plan {
        /// Only this track; both when omitted.
        #[arg(long)]
        track: Option<Track>,
    },
    Export {
        #[arg(long)]
        track: Option<Track>,
    },
    Aggregate {
        #[arg(long)]
        track: Option<Track>,
    },
}

fn report(what: &str, outcome: StageOutcome) {
    let verb = match outcome {
        StageOutcome::Created => "wrote",
        StageOutcome::Unchanged => "unchanged",
        StageOutcome::Replaced => "replaced",
    };
    println!("{verb}: {what}");
}

pub fn context(cli: &Cli) -> Result<Context> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    Context::new(&cli.out, config, cli.seed, cli.jobs, cli.force)
}

pub fn run(cli: Cli) -> Result<()> {
    let ctx = context(&cli)?;
    let methods = |m: Option<ReconMethod>| m.map(|m| vec![m]).unwrap_or_else(|| ctx.config.recon.methods.clone());
    let tracks = |t: Option<Track>| t.map(|t| vec![t]).unwrap_or_else(|| Track::ALL.to_vec());
    match cli.command {
        Command::Gen => report("dataset", commands::gen::run(&ctx)?),
        Command::Mask => report("inputs", commands::mask::run(&ctx)?),
        Command::Recon { method } => {
            for m in methods(method) {
                report(&format!("recon/{m}"), commands::recon::run(&ctx, m)?);
            }
        }
        Command::Score { method } => {
            for m in methods(method) {
                report(&format!("scores/{m}"), commands::score::run(&ctx, m)?);
            }
        }
        Command::Serve { bind } => commands::serve::run(&ctx, bind.as_deref())?,
        Command::Submit {
            method,
            phase,
            track,
            team,
            url,
            token,
        } => {
            let url = url.unwrap_or_else(|| ctx.config.eval.url.clone());
            let team = team.unwrap_or_else(|| method.to_string());
            let body = commands::serve::submit(&ctx, &url, method, phase, track, &team, token.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&body)?);
        }
        Command::CloseWindow { url, token } => {
            let url = url.unwrap_or_else(|| ctx.config.eval.url.clone());
            let body = commands::serve::close_window(&url, token.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&body)?);
        }
        Command::Study { action } => match action {
            StudyAction::Plan { track } => {
                for t in tracks(track) {
                    report(&format!("study/{t}/plan"), commands::study::plan(&ctx, t)?);
                }
            }
            StudyAction::Export { track } => {
                for t in tracks(track) {
                    report(&format!("study/{t}/bundle"), commands::study::export(&ctx, t)?);
                }
            }
            StudyAction::Aggregate { track } => {
                for t in tracks(track) {
                    report(&format!("study/{t}/result"), commands::study::aggregate(&ctx, t)?);
                }
            }
        },
        Command::Report => report("report", commands::report::run(&ctx)?),
    }
    Ok(())
}
