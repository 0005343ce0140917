mod common;

use std::sync::Arc;

use chrono::{Duration, TimeZone, Utc};
use common::*;
use kbench_core::kspace::Contrast;
use kbench_core::metrics::{MetricReport, MetricSummary};
use kbench_core::sampling::Track;
use kbench_eval::log::{read_log, replay_file, EventLog};
use kbench_eval::protocol::{
    rank_leaderboard, select_finalists, standings_bytes, Event, FinalistFlag, LeaderboardState, Phase, ScoreCard,
};
use kbench_eval::service::EVENTS_FILE;
use kbench_eval::split::SplitName;
use kbench_eval::EvalError;
use proptest::prelude::*;

fn report(ssim: f64) -> MetricReport {
    let s = MetricSummary {
        nmse: 1.0 - ssim,
        psnr: 30.0,
        ssim,
        n_volumes: 1,
    };
    MetricReport {
        nmse: s.nmse,
        psnr: s.psnr,
        ssim,
        n_volumes: 1,
        per_contrast: [(Contrast::PD, s)].into(),
    }
}

fn card(id: &str, team: &str, phase: Phase, track: Track, minutes: i64, ranking_ssim: f64) -> ScoreCard {
    let metrics = track
        .accelerations()
        .iter()
        .map(|&a| {
            let v = if a == track.ranking_accel() { ranking_ssim } else { 0.5 };
            (format!("R{a}"), report(v))
        })
        .collect();
    ScoreCard {
        id: id.into(),
        team_id: team.into(),
        phase,
        track,
        submitted_at: Utc.with_ymd_and_hms(2019, 11, 1, 0, 0, 0).unwrap() + Duration::minutes(minutes),
        description: String::new(),
        links: vec![],
        metrics,
        rank: None,
    }
}

fn closed_state(cards: Vec<ScoreCard>) -> LeaderboardState {
    let dir = tempfile::tempdir().unwrap();
    let mut log = EventLog::open(&dir.path().join(EVENTS_FILE)).unwrap();
    for c in cards {
        log.append(Event::SubmissionScored { scorecard: c }).unwrap();
    }
    log.append(Event::WindowClosed {
        at: Utc.with_ymd_and_hms(2019, 12, 1, 0, 0, 0).unwrap(),
    })
    .unwrap();
    log.state().clone()
}

/// Position by pairwise dominance: an entry is beaten by every entry with a
/// higher ranking SSIM, or an equal one submitted earlier.
fn oracle_order(cards: &[ScoreCard]) -> Vec<String> {
    let mut pos: Vec<(usize, String)> = cards
        .iter()
        .map(|c| {
            let beaten_by = cards
                .iter()
                .filter(|o| {
                    o.ranking_ssim() > c.ranking_ssim()
                        || (o.ranking_ssim() == c.ranking_ssim() && o.submitted_at < c.submitted_at)
                })
                .count();
            (beaten_by, c.id.clone())
        })
        .collect();
    pos.sort();
    pos.into_iter().map(|(_, id)| id).collect()
}

#[test]
fn leaderboard_orders_by_ranking_ssim_then_time() {
    let cards = vec![
        card("holy", "holykspace", Phase::Challenge, Track::Multicoil, 0, 0.899),
        card("phil", "philips_lumc", Phase::Challenge, Track::Multicoil, 90, 0.901),
        card("msdc", "msdc_rnn", Phase::Challenge, Track::Multicoil, 60, 0.901),
    ];
    let state = closed_state(cards.clone());
    let board = rank_leaderboard(&state, Track::Multicoil, Phase::Challenge).unwrap();
    let ids: Vec<String> = board.iter().map(|c| c.id.clone()).collect();
    assert_eq!(ids, oracle_order(&cards));
    assert_eq!(ids, ["msdc", "phil", "holy"]);
    assert_eq!(board.iter().map(|c| c.rank.unwrap()).collect::<Vec<_>>(), [1, 2, 3]);
}

#[test]
fn single_coil_ranks_by_its_r4_ssim() {
    let cards = vec![
        card("a", "a", Phase::Challenge, Track::Singlecoil, 0, 0.70),
        card("b", "b", Phase::Challenge, Track::Singlecoil, 1, 0.75),
    ];
    let board = rank_leaderboard(&closed_state(cards), Track::Singlecoil, Phase::Challenge).unwrap();
    assert_eq!(board[0].id, "b");
}

#[test]
fn single_entry_ranks_first() {
    let state = closed_state(vec![card("a", "a", Phase::Test, Track::Multicoil, 0, 0.5)]);
    assert_eq!(
        rank_leaderboard(&state, Track::Multicoil, Phase::Test).unwrap()[0].rank,
        Some(1)
    );
}

#[test]
fn finalists_cut_and_shortfall() {
    let eight: Vec<ScoreCard> = (0..8)
        .map(|i| {
            card(
                &format!("s{i}"),
                &format!("t{i}"),
                Phase::Challenge,
                Track::Multicoil,
                i,
                0.9 - 0.01 * i as f64,
            )
        })
        .collect();
    let f = select_finalists(&closed_state(eight), Track::Multicoil, 4).unwrap();
    assert_eq!(f.teams, ["t0", "t1", "t2", "t3"]);
    assert!(f.flags.is_empty());

    let three: Vec<ScoreCard> = (0..3)
        .map(|i| {
            card(
                &format!("s{i}"),
                &format!("t{i}"),
                Phase::Challenge,
                Track::Multicoil,
                i,
                0.8,
            )
        })
        .collect();
    let f = select_finalists(&closed_state(three), Track::Multicoil, 4).unwrap();
    assert_eq!(f.teams.len(), 3);
    assert_eq!(f.flags, [FinalistFlag::TooFewTeams]);
}

#[test]
fn challenge_board_sealed_until_close() {
    let dir = tempfile::tempdir().unwrap();
    let mut log = EventLog::open(&dir.path().join(EVENTS_FILE)).unwrap();
    log.append(Event::SubmissionScored {
        scorecard: card("a", "a", Phase::Challenge, Track::Multicoil, 0, 0.9),
    })
    .unwrap();
    let s = log.state();
    assert!(matches!(
        rank_leaderboard(s, Track::Multicoil, Phase::Challenge),
        Err(EvalError::Sealed)
    ));
    assert!(matches!(
        select_finalists(s, Track::Multicoil, 4),
        Err(EvalError::Sealed)
    ));
    assert!(matches!(
        s.visible_scorecard(Phase::Challenge, Track::Multicoil, "a"),
        Err(EvalError::Sealed)
    ));
    assert!(!String::from_utf8(standings_bytes(s)).unwrap().contains("0.9"));
}

fn arb_event() -> impl Strategy<Value = (u8, u8, i64, u32, bool)> {
    (0u8..4, 0u8..4, 0i64..10_000, 0u32..1000, any::<bool>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn replay_reproduces_standings_bytes(events in prop::collection::vec(arb_event(), 0..30)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(EVENTS_FILE);
        let mut log = EventLog::open(&path).unwrap();
        for (i, (team, board, minutes, ssim, close)) in events.into_iter().enumerate() {
            if close && i % 7 == 0 {
                log.append(Event::WindowClosed { at: Utc.with_ymd_and_hms(2019, 12, 1, 0, 0, 0).unwrap() }).unwrap();
                continue;
            }
            let phase = if board & 1 == 0 { Phase::Test } else { Phase::Challenge };
            let track = if board & 2 == 0 { Track::Multicoil } else { Track::Singlecoil };
            let c = card(&format!("s{i}"), &format!("t{team}"), phase, track, minutes, ssim as f64 / 1000.0);
            log.append(Event::SubmissionScored { scorecard: c }).unwrap();
        }
        let live = standings_bytes(log.state());
        drop(log);
        prop_assert_eq!(&live, &standings_bytes(&replay_file(&path).unwrap()));
        prop_assert_eq!(&live, &standings_bytes(&LeaderboardState::replay(&read_log(&path).unwrap()).unwrap()));
    }
}

#[test]
fn service_enforces_submission_rules() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_dataset(&dir.path().join("dataset"), 2);
    let svc = open_service(dir.path(), 60);
    let test_blobs = |seed| submission_blobs(&m, SplitName::TestMc, Track::Multicoil, 0.1, seed);

    let first = svc
        .submit(Phase::Test, Track::Multicoil, None, team("a"), test_blobs(1))
        .unwrap();
    let card = first.scorecard.expect("test submissions are scored on receipt");
    assert_eq!(card.rank, Some(1));
    assert!(card.metrics.contains_key("R4") && card.metrics.contains_key("R8"));
    assert!(card.metrics["R8"].ssim > 0.0 && card.metrics["R8"].ssim < 1.0);

    // one clock step (1 h) later
    let again = svc.submit(Phase::Test, Track::Multicoil, None, team("a"), test_blobs(2));
    assert!(matches!(again, Err(EvalError::RateLimited { .. })), "{again:?}");

    let mut short = test_blobs(3);
    short.pop();
    let incomplete = svc.submit(Phase::Test, Track::Multicoil, None, team("b"), short);
    match incomplete {
        Err(EvalError::SubmissionIncomplete { missing, extra }) => {
            assert_eq!(missing.len(), 1);
            assert!(extra.is_empty());
        }
        other => panic!("{other:?}"),
    }

    let wrong_split = submission_blobs(&m, SplitName::TestSc, Track::Multicoil, 0.1, 4);
    assert!(matches!(
        svc.submit(Phase::Test, Track::Multicoil, None, team("b"), wrong_split),
        Err(EvalError::SubmissionIncomplete { .. })
    ));

    let ch = |seed| submission_blobs(&m, SplitName::ChallengeMc, Track::Multicoil, 0.1, seed);
    let receipt = svc
        .submit(Phase::Challenge, Track::Multicoil, None, team("a"), ch(5))
        .unwrap();
    assert!(receipt.scorecard.is_none());
    assert!(matches!(
        svc.submit(Phase::Challenge, Track::Multicoil, None, team("a"), ch(6)),
        Err(EvalError::AlreadySubmitted(_))
    ));
    assert!(matches!(
        svc.leaderboard(Phase::Challenge, Track::Multicoil),
        Err(EvalError::Sealed)
    ));
    assert!(matches!(
        svc.scorecard(Phase::Challenge, Track::Multicoil, &receipt.id),
        Err(EvalError::Sealed)
    ));
    assert!(matches!(
        svc.thumbnail(Phase::Challenge, Track::Multicoil, &receipt.id, 0),
        Err(EvalError::Sealed)
    ));

    let closed_at = svc.close_window(None).unwrap();
    assert_eq!(svc.close_window(None).unwrap(), closed_at);
    assert!(matches!(
        svc.submit(Phase::Challenge, Track::Multicoil, None, team("c"), ch(7)),
        Err(EvalError::WindowClosed)
    ));
    let board = svc.leaderboard(Phase::Challenge, Track::Multicoil).unwrap();
    assert_eq!(board.len(), 1);
    let png = svc
        .thumbnail(Phase::Challenge, Track::Multicoil, &receipt.id, 2)
        .unwrap();
    assert_eq!(&png[1..4], b"PNG");
}

#[test]
fn next_day_resubmission_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_dataset(&dir.path().join("dataset"), 1);
    let svc = open_service(dir.path(), 24 * 60);
    for seed in 0..3 {
        let blobs = submission_blobs(&m, SplitName::TestMc, Track::Multicoil, 0.1, seed);
        svc.submit(Phase::Test, Track::Multicoil, None, team("a"), blobs)
            .unwrap();
    }
    assert_eq!(svc.snapshot().scorecards().len(), 3);
    assert_eq!(svc.leaderboard(Phase::Test, Track::Multicoil).unwrap().len(), 1);
}

#[test]
fn concurrent_ingests_serialize_through_one_writer() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_dataset(&dir.path().join("dataset"), 2);
    let svc = Arc::new(open_service(dir.path(), 1));
    let handles: Vec<_> = (0..6)
        .map(|i| {
            let svc = svc.clone();
            let blobs = submission_blobs(
                &m,
                SplitName::TestSc,
                Track::Singlecoil,
                0.05 * (i + 1) as f64,
                i as u64,
            );
            std::thread::spawn(move || svc.submit(Phase::Test, Track::Singlecoil, None, team(&format!("t{i}")), blobs))
        })
        .collect();
    let ids: Vec<String> = handles.into_iter().map(|h| h.join().unwrap().unwrap().id).collect();
    let unique: std::collections::BTreeSet<&String> = ids.iter().collect();
    assert_eq!(unique.len(), 6);

    let path = dir.path().join("eval").join(EVENTS_FILE);
    let seqs: Vec<u64> = read_log(&path).unwrap().iter().map(|r| r.seq).collect();
    assert_eq!(seqs, (0..6).collect::<Vec<u64>>());
    assert_eq!(
        standings_bytes(&svc.snapshot()),
        standings_bytes(&replay_file(&path).unwrap())
    );
    let board = svc.leaderboard(Phase::Test, Track::Singlecoil).unwrap();
    let teams: Vec<&str> = board.iter().map(|c| c.team_id.as_str()).collect();
    assert_eq!(teams, ["t0", "t1", "t2", "t3", "t4", "t5"]);
}

#[test]
fn restart_resumes_from_the_log() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_dataset(&dir.path().join("dataset"), 1);
    let before = {
        let svc = open_service(dir.path(), 60);
        let blobs = submission_blobs(&m, SplitName::ChallengeSc, Track::Singlecoil, 0.1, 1);
        svc.submit(Phase::Challenge, Track::Singlecoil, None, team("a"), blobs)
            .unwrap();
        svc.close_window(None).unwrap();
        standings_bytes(&svc.snapshot())
    };
    let svc = open_service(dir.path(), 60);
    assert_eq!(standings_bytes(&svc.snapshot()), before);
    let blobs = submission_blobs(&m, SplitName::ChallengeSc, Track::Singlecoil, 0.1, 2);
    assert!(matches!(
        svc.submit(Phase::Challenge, Track::Singlecoil, None, team("a"), blobs),
        Err(EvalError::WindowClosed)
    ));
}

#[test]
fn no_query_reveals_challenge_scores_before_close() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_dataset(&dir.path().join("dataset"), 1);
    let svc = open_service(dir.path(), 30);
    let mut rng = kbench_core::rng::SplitMix64::new(99);
    let mut challenge_ids = Vec::new();
    for step in 0..24 {
        let track = if rng.below(2) == 0 {
            Track::Multicoil
        } else {
            Track::Singlecoil
        };
        let phase = if rng.below(2) == 0 {
            Phase::Test
        } else {
            Phase::Challenge
        };
        let name = format!("t{}", rng.below(5));
        let blobs = submission_blobs(&m, SplitName::for_board(phase, track), track, 0.1, step);
        if let Ok(r) = svc.submit(phase, track, None, team(&name), blobs) {
            if phase == Phase::Challenge {
                assert!(r.scorecard.is_none());
                challenge_ids.push((track, r.id));
            }
        }
        for (t, id) in &challenge_ids {
            assert!(matches!(
                svc.scorecard(Phase::Challenge, *t, id),
                Err(EvalError::Sealed)
            ));
            assert!(matches!(
                svc.thumbnail(Phase::Challenge, *t, id, 0),
                Err(EvalError::Sealed)
            ));
        }
        for t in Track::ALL {
            assert!(matches!(svc.leaderboard(Phase::Challenge, t), Err(EvalError::Sealed)));
            for c in svc.leaderboard(Phase::Test, t).unwrap() {
                assert_eq!(c.phase, Phase::Test);
            }
        }
        let published: serde_json::Value = serde_json::from_slice(&standings_bytes(&svc.snapshot())).unwrap();
        for board in published.as_array().unwrap() {
            if board["phase"] == "challenge" {
                assert_eq!(board["status"], "sealed");
                assert!(board.get("entries").is_none());
            }
        }
    }
    assert!(!challenge_ids.is_empty());
}
