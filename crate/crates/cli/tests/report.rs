use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use chrono::{Duration, TimeZone, Utc};
use kbench_core::kspace::Contrast;
use kbench_core::metrics::{MetricReport, MetricSummary};
use kbench_core::sampling::Track;
use kbench_eval::log::EventLog;
use kbench_eval::protocol::{Event, Phase, ScoreCard};
use kbench_eval::service::EVENTS_FILE;
use kbench_eval::study::{CriterionScores, LabelEntry, ReaderResponse, UnblindedResponse};
use serde::Deserialize;
use tempfile::TempDir;

#[derive(Deserialize)]
struct Expected {
    avg_rank: String,
    rank_label: String,
    criteria: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct Scenario {
    name: String,
    teams: Vec<String>,
    ranks: Vec<Vec<u8>>,
    scores: BTreeMap<String, Vec<Vec<u8>>>,
    expected: BTreeMap<String, Expected>,
}

#[derive(Deserialize)]
struct VoteFile {
    scenarios: Vec<Scenario>,
}

fn scenarios() -> Vec<Scenario> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../eval/tests/fixtures/reader_votes.json");
    serde_json::from_str::<VoteFile>(&fs::read_to_string(path).unwrap())
        .unwrap()
        .scenarios
}

fn report(ssim: f64) -> MetricReport {
    let s = MetricSummary {
        nmse: 1.0 - ssim,
        psnr: 20.0 + 10.0 * ssim,
        ssim,
        n_volumes: 1,
    };
    MetricReport {
        nmse: s.nmse,
        psnr: s.psnr,
        ssim,
        n_volumes: 2,
        per_contrast: [(Contrast::PD, s.clone()), (Contrast::PDFS, s)].into(),
    }
}

/// Writes a closed challenge with one scorecard per team and every reader's
/// fixture votes on the multi-coil track.
fn write_state(out: &Path, s: &Scenario) {
    let mut log = EventLog::open(&out.join("eval").join(EVENTS_FILE)).unwrap();
    let t0 = Utc.with_ymd_and_hms(2019, 9, 1, 0, 0, 0).unwrap();
    for (i, team) in s.teams.iter().enumerate() {
        let ssim = 0.9 - 0.01 * i as f64;
        log.append(Event::SubmissionScored {
            scorecard: ScoreCard {
                id: format!("sub{i:04}"),
                team_id: team.clone(),
                phase: Phase::Challenge,
                track: Track::Multicoil,
                submitted_at: t0 + Duration::hours(i as i64),
                description: String::new(),
                links: vec![],
                metrics: [
                    ("R4".to_string(), report(ssim + 0.05)),
                    ("R8".to_string(), report(ssim)),
                ]
                .into(),
                rank: None,
            },
        })
        .unwrap();
    }
    log.append(Event::WindowClosed {
        at: t0 + Duration::days(1),
    })
    .unwrap();
    for r in 0..s.ranks.len() {
        let score = |c: &str, t: usize| s.scores[c][r][t];
        let mut entries = BTreeMap::new();
        let mut unblinded = UnblindedResponse {
            reader_id: format!("R{}", r + 1),
            ranks: BTreeMap::new(),
            scores: BTreeMap::new(),
        };
        for (t, team) in s.teams.iter().enumerate() {
            let cs = CriterionScores {
                artifacts: score("artifacts", t),
                sharpness: score("sharpness", t),
                cnr: score("cnr", t),
                diagnostic_confidence: score("diagnostic_confidence", t),
            };
            entries.insert(
                format!("{}", (b'A' + t as u8) as char),
                LabelEntry {
                    rank: Some(s.ranks[r][t]),
                    artifacts: Some(cs.artifacts),
                    sharpness: Some(cs.sharpness),
                    cnr: Some(cs.cnr),
                    diagnostic_confidence: Some(cs.diagnostic_confidence),
                },
            );
            unblinded.ranks.insert(team.clone(), s.ranks[r][t]);
            unblinded.scores.insert(team.clone(), cs);
        }
        log.append(Event::StudyResponse {
            at: t0 + Duration::days(2) + Duration::hours(r as i64),
            track: Track::Multicoil,
            response: ReaderResponse {
                reader_id: unblinded.reader_id.clone(),
                track: Track::Multicoil,
                entries,
            },
            unblinded,
        })
        .unwrap();
    }
}

fn run_report(out: &Path) {
    let status = Command::new(env!("CARGO_BIN_EXE_kbench"))
        .arg("--out")
        .arg(out)
        .arg("report")
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
}

fn read_csv(path: PathBuf) -> Vec<BTreeMap<String, String>> {
    let mut r = csv::Reader::from_path(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    r.deserialize().map(|row| row.unwrap()).collect()
}

#[test]
fn report_reproduces_fixture_reader_tables() {
    for s in scenarios() {
        let tmp = TempDir::new().unwrap();
        let out = tmp.path().join("run");
        write_state(&out, &s);
        run_report(&out);
        let dir = out.join("report");

        let ranks = read_csv(dir.join("reader_ranks_multicoil.csv"));
        assert_eq!(ranks.len(), s.teams.len(), "{}", s.name);
        for row in &ranks {
            let want = &s.expected[&row["team"]];
            assert_eq!(row["avg_rank"], want.avg_rank, "{} {}", s.name, row["team"]);
            assert_eq!(row["final_rank"], want.rank_label, "{} {}", s.name, row["team"]);
            assert!(!row["R8_ssim"].is_empty());
        }
        for row in read_csv(dir.join("reader_scores_multicoil.csv")) {
            let want = &s.expected[&row["team"]];
            for (c, v) in &want.criteria {
                assert_eq!(&row[c], v, "{} {} {c}", s.name, row["team"]);
            }
        }
        let scatter = read_csv(dir.join("scatter_multicoil.csv"));
        assert_eq!(scatter.len(), 3 * s.teams.len());
        for row in &scatter {
            assert_eq!(row["avg_rank"], s.expected[&row["team"]].avg_rank);
        }
        assert!(dir.join("rank_grid_multicoil.csv").exists());
        assert!(!dir.join("reader_ranks_singlecoil.csv").exists());

        let summary = fs::read_to_string(dir.join("summary.md")).unwrap();
        for want in s.expected.values() {
            assert!(summary.contains(&want.avg_rank), "{}", s.name);
        }
        let ssim = read_csv(dir.join("ssim_summary.csv"));
        assert_eq!(ssim.len(), 2 * s.teams.len());
        let board = read_csv(dir.join("leaderboard_challenge_multicoil.csv"));
        assert_eq!(board[0]["team"], s.teams[0]);
        assert_eq!(board[0]["rank"], "1");
    }
}

#[test]
fn report_is_reproducible_and_notes_incomplete_studies() {
    let s = scenarios().into_iter().next().unwrap();
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    write_state(&out, &s);
    run_report(&out);
    let first = fs::read(out.join("report/summary.md")).unwrap();
    run_report(&out);
    assert_eq!(fs::read(out.join("report/summary.md")).unwrap(), first);

    // A study missing readers is reported as such, not averaged.
    let partial = tmp.path().join("partial");
    let mut short = s;
    short.ranks.truncate(5);
    write_state(&partial, &short);
    run_report(&partial);
    let summary = fs::read_to_string(partial.join("report/summary.md")).unwrap();
    assert!(summary.contains("Not reported"), "{summary}");
    assert!(!partial.join("report/reader_ranks_multicoil.csv").exists());
}
