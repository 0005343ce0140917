//! Leaderboard protocol: events, the state they fold into, and the rules.
//!
//! [`LeaderboardState`] is a pure fold over [`LogRecord`]s; every derived view
//! (standings, finalists, study responses) is computed from it on read, so
//! replaying a log reproduces the standings exactly.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Duration, SecondsFormat, Utc};
use kbench_core::metrics::MetricReport;
use kbench_core::sampling::Track;
use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};
use crate::study::{ReaderResponse, UnblindedResponse};

/// Minimum spacing of a team's test-phase submissions to one track.
pub const RATE_LIMIT_HOURS: i64 = 24;

/// Number of finalists advanced to the reader study.
pub const DEFAULT_FINALISTS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Test,
    Challenge,
}

impl Phase {
    pub const ALL: [Phase; 2] = [Phase::Test, Phase::Challenge];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Test => "test",
            Phase::Challenge => "challenge",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "test" => Ok(Phase::Test),
            "challenge" => Ok(Phase::Challenge),
            other => Err(EvalError::NotFound(format!("unknown phase {other:?}"))),
        }
    }
}

pub fn parse_track(s: &str) -> Result<Track> {
    s.parse::<Track>()
        .map_err(|_| EvalError::NotFound(format!("unknown track {s:?}")))
}

/// RFC-3339 UTC with second precision and a `Z` suffix.
pub fn timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn accel_key(accel: u32) -> String {
    format!("R{accel}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreCard {
    pub id: String,
    pub team_id: String,
    pub phase: Phase,
    pub track: Track,
    pub submitted_at: DateTime<Utc>,
    pub description: String,
    #[serde(default)]
    pub links: Vec<String>,
    /// Metrics keyed by acceleration, `"R4"` / `"R8"`.
    pub metrics: BTreeMap<String, MetricReport>,
    /// Position on the leaderboard; set only on ranked views.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
}

impl ScoreCard {
    /// SSIM that orders the track's leaderboard.
    pub fn ranking_ssim(&self) -> f64 {
        self.metrics
            .get(&accel_key(self.track.ranking_accel()))
            .map(|m| m.ssim)
            .unwrap_or(f64::NEG_INFINITY)
    }
}

/// Leaderboard order: ranking SSIM descending, then earlier submission, then id.
pub fn leaderboard_order(a: &ScoreCard, b: &ScoreCard) -> Ordering {
    b.ranking_ssim()
        .total_cmp(&a.ranking_ssim())
        .then(a.submitted_at.cmp(&b.submitted_at))
        .then(a.id.cmp(&b.id))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    SubmissionScored {
        scorecard: ScoreCard,
    },
    WindowClosed {
        at: DateTime<Utc>,
    },
    StudyResponse {
        at: DateTime<Utc>,
        track: Track,
        response: ReaderResponse,
        unblinded: UnblindedResponse,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub seq: u64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LeaderboardState {
    next_seq: u64,
    scorecards: Vec<ScoreCard>,
    window_closed_at: Option<DateTime<Utc>>,
    study: BTreeMap<Track, Vec<UnblindedResponse>>,
}

impl LeaderboardState {
    pub fn replay<'a>(records: impl IntoIterator<Item = &'a LogRecord>) -> Result<Self> {
        let mut state = Self::default();
        for r in records {
            state.apply(r)?;
        }
        Ok(state)
    }

    /// Sequence number the next record must carry.
    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn apply(&mut self, record: &LogRecord) -> Result<()> {
        if record.seq != self.next_seq {
            return Err(EvalError::CorruptLog {
                line: self.next_seq as usize + 1,
                detail: format!("expected seq {}, found {}", self.next_seq, record.seq),
            });
        }
        match &record.event {
            Event::SubmissionScored { scorecard } => self.scorecards.push(scorecard.clone()),
            Event::WindowClosed { at } => {
                self.window_closed_at.get_or_insert(*at);
            }
            Event::StudyResponse { track, unblinded, .. } => {
                self.study.entry(*track).or_default().push(unblinded.clone())
            }
        }
        self.next_seq += 1;
        Ok(())
    }

    pub fn window_closed(&self) -> bool {
        self.window_closed_at.is_some()
    }

    pub fn window_closed_at(&self) -> Option<DateTime<Utc>> {
        self.window_closed_at
    }

    pub fn scorecards(&self) -> &[ScoreCard] {
        &self.scorecards
    }

    pub fn study_responses(&self, track: Track) -> &[UnblindedResponse] {
        self.study.get(&track).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Checks whether `team` may submit to `(phase, track)` at `now`.
    pub fn check_ingest(&self, team: &str, phase: Phase, track: Track, now: DateTime<Utc>) -> Result<()> {
        let mine = self
            .scorecards
            .iter()
            .filter(|c| c.team_id == team && c.phase == phase && c.track == track);
        match phase {
            Phase::Challenge => {
                if self.window_closed() {
                    return Err(EvalError::WindowClosed);
                }
                if mine.count() > 0 {
                    return Err(EvalError::AlreadySubmitted(team.to_string()));
                }
            }
            Phase::Test => {
                let window = Duration::hours(RATE_LIMIT_HOURS);
                if let Some(last) = mine.map(|c| c.submitted_at).filter(|t| now - *t < window).max() {
                    return Err(EvalError::RateLimited {
                        team: team.to_string(),
                        last: timestamp(&last),
                        retry_at: timestamp(&(last + window)),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn scorecard(&self, id: &str) -> Option<&ScoreCard> {
        self.scorecards.iter().find(|c| c.id == id)
    }

    /// Scorecard as visible to the public: challenge entries stay sealed
    /// until the window closes.
    pub fn visible_scorecard(&self, phase: Phase, track: Track, id: &str) -> Result<ScoreCard> {
        if phase == Phase::Challenge && !self.window_closed() {
            return Err(EvalError::Sealed);
        }
        let card = self
            .scorecard(id)
            .filter(|c| c.phase == phase && c.track == track)
            .ok_or_else(|| EvalError::NotFound(format!("submission {id}")))?;
        let mut card = card.clone();
        card.rank = rank_leaderboard(self, track, phase)?
            .iter()
            .find(|c| c.id == card.id)
            .and_then(|c| c.rank);
        Ok(card)
    }
}

/// Ordered, ranked leaderboard. Test boards show each team's best entry.
pub fn rank_leaderboard(state: &LeaderboardState, track: Track, phase: Phase) -> Result<Vec<ScoreCard>> {
    if phase == Phase::Challenge && !state.window_closed() {
        return Err(EvalError::Sealed);
    }
    let mut cards: Vec<ScoreCard> = state
        .scorecards
        .iter()
        .filter(|c| c.phase == phase && c.track == track)
        .cloned()
        .collect();
    cards.sort_by(leaderboard_order);
    let mut seen = BTreeSet::new();
    cards.retain(|c| seen.insert(c.team_id.clone()));
    for (i, c) in cards.iter_mut().enumerate() {
        c.rank = Some(i + 1);
    }
    Ok(cards)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalistFlag {
    /// Fewer teams than requested; all of them advance.
    TooFewTeams,
    /// Entries tied with the k-th place on ranking SSIM were all included.
    TieAtCutoff,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Finalists {
    pub track: Track,
    pub requested: usize,
    /// Team ids in leaderboard order.
    pub teams: Vec<String>,
    pub flags: Vec<FinalistFlag>,
}

/// Top-k challenge teams by ranking SSIM; exact ties at the cut all advance.
pub fn select_finalists(state: &LeaderboardState, track: Track, k: usize) -> Result<Finalists> {
    let board = rank_leaderboard(state, track, Phase::Challenge)?;
    let mut flags = Vec::new();
    let teams: Vec<String> = if board.len() <= k {
        if board.len() < k {
            flags.push(FinalistFlag::TooFewTeams);
        }
        board.iter().map(|c| c.team_id.clone()).collect()
    } else {
        let cut = board[k - 1].ranking_ssim();
        let n = k + board[k..].iter().take_while(|c| c.ranking_ssim() == cut).count();
        if n > k {
            flags.push(FinalistFlag::TieAtCutoff);
        }
        board[..n].iter().map(|c| c.team_id.clone()).collect()
    };
    Ok(Finalists {
        track,
        requested: k,
        teams,
        flags,
    })
}

/// One leaderboard as published: either ranked entries or sealed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum BoardView {
    Open { entries: Vec<ScoreCard> },
    Sealed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoardStanding {
    pub phase: Phase,
    pub track: Track,
    #[serde(flatten)]
    pub view: BoardView,
}

/// Every leaderboard, in fixed (phase, track) order.
pub fn standings(state: &LeaderboardState) -> Vec<BoardStanding> {
    let mut out = Vec::new();
    for phase in Phase::ALL {
        for track in Track::ALL {
            let view = match rank_leaderboard(state, track, phase) {
                Ok(entries) => BoardView::Open { entries },
                Err(_) => BoardView::Sealed,
            };
            out.push(BoardStanding { phase, track, view });
        }
    }
    out
}

/// Canonical byte form of [`standings`].
pub fn standings_bytes(state: &LeaderboardState) -> Vec<u8> {
    serde_json::to_vec_pretty(&standings(state)).expect("standings serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use kbench_core::kspace::Contrast;

    fn report(ssim: f64) -> MetricReport {
        MetricReport {
            nmse: 0.01,
            psnr: 30.0,
            ssim,
            n_volumes: 1,
            per_contrast: [(
                Contrast::PD,
                kbench_core::metrics::MetricSummary {
                    nmse: 0.01,
                    psnr: 30.0,
                    ssim,
                    n_volumes: 1,
                },
            )]
            .into(),
        }
    }

    fn card(seq: u64, team: &str, phase: Phase, hour: i64, ssim8: f64) -> LogRecord {
        let at = Utc.with_ymd_and_hms(2019, 9, 1, 0, 0, 0).unwrap() + Duration::hours(hour);
        LogRecord {
            seq,
            event: Event::SubmissionScored {
                scorecard: ScoreCard {
                    id: format!("s{seq}"),
                    team_id: team.into(),
                    phase,
                    track: Track::Multicoil,
                    submitted_at: at,
                    description: String::new(),
                    links: vec![],
                    metrics: [("R4".into(), report(0.95)), ("R8".into(), report(ssim8))].into(),
                    rank: None,
                },
            },
        }
    }

    #[test]
    fn rate_limit_is_a_sliding_day() {
        let s = LeaderboardState::replay(&[card(0, "a", Phase::Test, 0, 0.9)]).unwrap();
        let t0 = s.scorecards()[0].submitted_at;
        let err = s.check_ingest("a", Phase::Test, Track::Multicoil, t0 + Duration::hours(1));
        assert!(matches!(err, Err(EvalError::RateLimited { .. })));
        assert!(s
            .check_ingest("a", Phase::Test, Track::Multicoil, t0 + Duration::hours(24))
            .is_ok());
        assert!(s
            .check_ingest("a", Phase::Test, Track::Singlecoil, t0 + Duration::hours(1))
            .is_ok());
        assert!(s
            .check_ingest("b", Phase::Test, Track::Multicoil, t0 + Duration::hours(1))
            .is_ok());
    }

    #[test]
    fn best_of_per_team_on_test_board() {
        let s = LeaderboardState::replay(&[
            card(0, "a", Phase::Test, 0, 0.80),
            card(1, "b", Phase::Test, 1, 0.85),
            card(2, "a", Phase::Test, 30, 0.90),
        ])
        .unwrap();
        let board = rank_leaderboard(&s, Track::Multicoil, Phase::Test).unwrap();
        let ids: Vec<&str> = board.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, ["s2", "s1"]);
        assert_eq!(board[1].rank, Some(2));
    }

    #[test]
    fn out_of_order_seq_is_corrupt() {
        assert!(LeaderboardState::replay(&[card(1, "a", Phase::Test, 0, 0.9)]).is_err());
    }

    #[test]
    fn finalist_tie_at_cut_is_flagged() {
        let mut recs: Vec<LogRecord> = [0.95, 0.93, 0.91, 0.90, 0.90, 0.85]
            .iter()
            .enumerate()
            .map(|(i, &v)| card(i as u64, &format!("t{i}"), Phase::Challenge, i as i64, v))
            .collect();
        recs.push(LogRecord {
            seq: 6,
            event: Event::WindowClosed {
                at: Utc.with_ymd_and_hms(2019, 10, 1, 0, 0, 0).unwrap(),
            },
        });
        let s = LeaderboardState::replay(&recs).unwrap();
        let f = select_finalists(&s, Track::Multicoil, 4).unwrap();
        assert_eq!(f.teams, ["t0", "t1", "t2", "t3", "t4"]);
        assert_eq!(f.flags, [FinalistFlag::TieAtCutoff]);
        let f = select_finalists(&s, Track::Multicoil, 3).unwrap();
        assert_eq!(f.teams.len(), 3);
        assert!(f.flags.is_empty());
    }

    #[test]
    fn record_json_shape() {
        let r = LogRecord {
            seq: 3,
            event: Event::WindowClosed {
                at: Utc.with_ymd_and_hms(2019, 10, 1, 12, 0, 0).unwrap(),
            },
        };
        let line = serde_json::to_string(&r).unwrap();
        assert_eq!(line, r#"{"seq":3,"type":"window_closed","at":"2019-10-01T12:00:00Z"}"#);
        assert_eq!(serde_json::from_str::<LogRecord>(&line).unwrap(), r);
    }
}
