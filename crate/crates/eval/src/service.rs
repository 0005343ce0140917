//! Transport-independent leaderboard service.
//!
//! Ingests are serialized through one writer that owns the event log; parsing
//! and scoring happen before the writer lock is taken, so distinct submissions
//! score in parallel. Readers clone an `Arc` snapshot of the last applied state.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Duration, Utc};
use kbench_core::sampling::Track;
use serde::{Deserialize, Serialize};

use crate::dataset::{volume_file_name, Dataset, References};
use crate::error::{EvalError, Result};
use crate::log::EventLog;
use crate::protocol::{rank_leaderboard, Event, LeaderboardState, Phase, ScoreCard};
use crate::render::thumbnails;
use crate::scoring::{parse_keyed, score_submission, SubmissionVolumes};
use crate::split::SplitName;
use crate::study::{validate_response, ReaderAssignment, ReaderResponse, ReaderSession, StudyPlan};

pub const EVENTS_FILE: &str = "events.jsonl";
pub const SUBMISSIONS_DIR: &str = "submissions";
pub const VOLUMES_DIR: &str = "volumes";
pub const PLAN_FILE: &str = "plan.json";
pub const BUNDLE_DIR: &str = "bundle";

/// `<study_dir>/<track>/plan/plan.json`
pub fn plan_path(study_dir: &Path, track: Track) -> PathBuf {
    study_dir.join(track.as_str()).join("plan").join(PLAN_FILE)
}

/// `<study_dir>/<track>/bundle`, laid out by [`crate::study::export_bundle`].
pub fn bundle_dir(study_dir: &Path, track: Track) -> PathBuf {
    study_dir.join(track.as_str()).join(BUNDLE_DIR)
}

/// Time source. `Fixed` starts at a given instant and advances by `step` on
/// every [`Clock::now`], which makes whole sessions reproducible.
#[derive(Debug)]
pub enum Clock {
    System,
    Fixed { next: Mutex<DateTime<Utc>>, step: Duration },
}

impl Clock {
    pub fn fixed(start: DateTime<Utc>, step: Duration) -> Self {
        Clock::Fixed {
            next: Mutex::new(start),
            step,
        }
    }

    /// Current time without advancing a fixed clock.
    pub fn peek(&self) -> DateTime<Utc> {
        match self {
            Clock::System => Utc::now(),
            Clock::Fixed { next, .. } => *next.lock().expect("clock lock"),
        }
    }

    pub fn now(&self) -> DateTime<Utc> {
        match self {
            Clock::System => Utc::now(),
            Clock::Fixed { next, step } => {
                let mut t = next.lock().expect("clock lock");
                let now = *t;
                *t = now + *step;
                now
            }
        }
    }
}

#[derive(Debug)]
pub struct ServiceConfig {
    pub dataset_dir: PathBuf,
    /// Event log, stored submissions and thumbnails.
    pub data_dir: PathBuf,
    /// Study plans and exported bundles, `<dir>/<track>/plan.json` and `<dir>/<track>/bundle/`.
    pub study_dir: Option<PathBuf>,
    pub clock: Clock,
    /// Bearer token → team id. Empty means teams are taken from the manifest.
    pub team_tokens: BTreeMap<String, String>,
    pub admin_token: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmissionManifest {
    pub team_id: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub links: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubmitReceipt {
    pub id: String,
    pub team_id: String,
    pub phase: Phase,
    pub track: Track,
    pub submitted_at: DateTime<Utc>,
    /// Present for test-phase submissions only; challenge scores stay sealed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scorecard: Option<ScoreCard>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyAck {
    pub reader_id: String,
    pub track: Track,
    pub accepted_at: DateTime<Utc>,
}

#[derive(Debug)]
pub struct Service {
    data_dir: PathBuf,
    study_dir: Option<PathBuf>,
    references: References,
    clock: Clock,
    team_tokens: BTreeMap<String, String>,
    admin_token: Option<String>,
    plans: BTreeMap<Track, StudyPlan>,
    writer: Mutex<EventLog>,
    snapshot: RwLock<Arc<LeaderboardState>>,
}

pub fn read_plan(path: &Path) -> Result<StudyPlan> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn safe_component(s: &str) -> Result<&str> {
    let ok = !s.is_empty()
        && !s.starts_with('.')
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(s)
    } else {
        Err(EvalError::NotFound(format!("{s:?}")))
    }
}

impl Service {
    pub fn open(cfg: ServiceConfig) -> Result<Self> {
        let dataset = Dataset::open(&cfg.dataset_dir)?;
        let references = References::load(&dataset)?;
        let log = EventLog::open(&cfg.data_dir.join(EVENTS_FILE))?;
        let mut plans = BTreeMap::new();
        if let Some(dir) = &cfg.study_dir {
            for track in Track::ALL {
                let p = plan_path(dir, track);
                if p.exists() {
                    plans.insert(track, read_plan(&p)?);
                }
            }
        }
        Ok(Self {
            snapshot: RwLock::new(Arc::new(log.state().clone())),
            writer: Mutex::new(log),
            data_dir: cfg.data_dir,
            study_dir: cfg.study_dir,
            references,
            clock: cfg.clock,
            team_tokens: cfg.team_tokens,
            admin_token: cfg.admin_token,
            plans,
        })
    }

    pub fn snapshot(&self) -> Arc<LeaderboardState> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    fn publish(&self, state: &LeaderboardState) {
        *self.snapshot.write().expect("snapshot lock") = Arc::new(state.clone());
    }

    fn team_for(&self, bearer: Option<&str>, claimed: &str) -> Result<String> {
        if claimed.is_empty() {
            return Err(EvalError::BadRequest("manifest team_id is empty".into()));
        }
        if self.team_tokens.is_empty() {
            return Ok(claimed.to_string());
        }
        let team = bearer
            .and_then(|t| self.team_tokens.get(t))
            .ok_or_else(|| EvalError::Unauthorized("missing or unknown team token".into()))?;
        if team != claimed {
            return Err(EvalError::Unauthorized(format!(
                "token belongs to {team}, not {claimed}"
            )));
        }
        Ok(team.clone())
    }

    pub fn submit(
        &self,
        phase: Phase,
        track: Track,
        bearer: Option<&str>,
        manifest: SubmissionManifest,
        blobs: Vec<Vec<u8>>,
    ) -> Result<SubmitReceipt> {
        let team = self.team_for(bearer, &manifest.team_id)?;
        // Cheap early rejection; the rule is re-checked under the writer lock.
        self.snapshot().check_ingest(&team, phase, track, self.clock.peek())?;

        let refs = self.references.split(SplitName::for_board(phase, track))?;
        let keyed = parse_keyed(blobs.iter().map(Vec::as_slice))?;
        let keys: Vec<(String, u32)> = keyed.iter().map(|(k, _)| k.clone()).collect();
        let volumes: SubmissionVolumes = keyed.into_iter().collect();
        let metrics = score_submission(track, refs, &volumes)?;
        let first_case = refs.keys().next().cloned().unwrap_or_default();
        let thumbs = match volumes.get(&(first_case, track.ranking_accel())) {
            Some(v) => thumbnails(v)?,
            None => Vec::new(),
        };

        let mut log = self.writer.lock().expect("writer lock");
        let now = self.clock.now();
        log.state().check_ingest(&team, phase, track, now)?;
        let id = format!("{phase}-{track}-{:05}", log.state().next_seq());

        // Files go to a staging directory that is renamed into place only once
        // the event is durable.
        let dir = self.data_dir.join(SUBMISSIONS_DIR).join(&id);
        let staging = self.data_dir.join(SUBMISSIONS_DIR).join(format!(".{id}.partial"));
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        fs::create_dir_all(staging.join(VOLUMES_DIR))?;
        for ((case, accel), blob) in keys.iter().zip(&blobs) {
            fs::write(staging.join(VOLUMES_DIR).join(volume_file_name(case, *accel)), blob)?;
        }
        for (i, png) in thumbs.iter().enumerate() {
            fs::write(staging.join(format!("thumb_{i}.png")), png)?;
        }
        let card = ScoreCard {
            id: id.clone(),
            team_id: team.clone(),
            phase,
            track,
            submitted_at: now,
            description: manifest.description,
            links: manifest.links,
            metrics,
            rank: None,
        };
        let appended = log.append(Event::SubmissionScored {
            scorecard: card.clone(),
        });
        if let Err(e) = appended {
            let _ = fs::remove_dir_all(&staging);
            return Err(e);
        }
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::rename(&staging, &dir)?;
        self.publish(log.state());
        drop(log);

        let scorecard = match phase {
            Phase::Test => Some(self.snapshot().visible_scorecard(phase, track, &id)?),
            Phase::Challenge => None,
        };
        Ok(SubmitReceipt {
            id,
            team_id: team,
            phase,
            track,
            submitted_at: now,
            scorecard,
        })
    }

    pub fn leaderboard(&self, phase: Phase, track: Track) -> Result<Vec<ScoreCard>> {
        rank_leaderboard(&self.snapshot(), track, phase)
    }

    pub fn scorecard(&self, phase: Phase, track: Track, id: &str) -> Result<ScoreCard> {
        self.snapshot().visible_scorecard(phase, track, id)
    }

    pub fn thumbnail(&self, phase: Phase, track: Track, id: &str, n: usize) -> Result<Vec<u8>> {
        let card = self.scorecard(phase, track, id)?;
        let path = self
            .data_dir
            .join(SUBMISSIONS_DIR)
            .join(safe_component(&card.id)?)
            .join(format!("thumb_{n}.png"));
        fs::read(&path).map_err(|_| EvalError::NotFound(format!("thumbnail {n} of {id}")))
    }

    /// Closes the challenge window; idempotent, returns the closing time.
    pub fn close_window(&self, bearer: Option<&str>) -> Result<DateTime<Utc>> {
        if let Some(admin) = &self.admin_token {
            if bearer != Some(admin.as_str()) {
                return Err(EvalError::Unauthorized("admin token required".into()));
            }
        }
        let mut log = self.writer.lock().expect("writer lock");
        if let Some(at) = log.state().window_closed_at() {
            return Ok(at);
        }
        let at = self.clock.now();
        log.append(Event::WindowClosed { at })?;
        self.publish(log.state());
        Ok(at)
    }

    fn plan(&self, track: Track) -> Result<&StudyPlan> {
        self.plans
            .get(&track)
            .ok_or_else(|| EvalError::NotFound(format!("no reader study for track {track}")))
    }

    fn reader(&self, track: Track, token: Option<&str>) -> Result<(&StudyPlan, &ReaderAssignment)> {
        let plan = self.plan(track)?;
        let reader = token
            .and_then(|t| plan.reader_by_token(t))
            .ok_or_else(|| EvalError::Unauthorized("missing or unknown reader token".into()))?;
        Ok((plan, reader))
    }

    pub fn study_session(&self, track: Track, token: Option<&str>) -> Result<ReaderSession> {
        let (plan, reader) = self.reader(track, token)?;
        Ok(ReaderSession {
            reader_id: reader.reader_id.clone(),
            track,
            labels: plan.labels(),
            cases: plan.cases.iter().map(|c| c.case_id.clone()).collect(),
            criteria: crate::study::Criterion::ALL.to_vec(),
            scale_max: crate::study::SCALE_MAX,
        })
    }

    /// A file of the reader's exported bundle (descriptor or PNG).
    pub fn study_file(&self, track: Track, token: Option<&str>, case_id: &str, file: &str) -> Result<Vec<u8>> {
        let (plan, reader) = self.reader(track, token)?;
        if !plan.cases.iter().any(|c| c.case_id == case_id) {
            return Err(EvalError::NotFound(format!("case {case_id}")));
        }
        let dir = self
            .study_dir
            .as_ref()
            .ok_or_else(|| EvalError::NotFound("no study bundle".into()))?;
        let path = bundle_dir(dir, track)
            .join(safe_component(&reader.reader_id)?)
            .join(safe_component(case_id)?)
            .join(safe_component(file)?);
        fs::read(&path).map_err(|_| EvalError::NotFound(format!("{case_id}/{file}")))
    }

    pub fn study_submit(&self, track: Track, token: Option<&str>, response: ReaderResponse) -> Result<StudyAck> {
        let (plan, reader) = self.reader(track, token)?;
        if response.reader_id != reader.reader_id {
            return Err(EvalError::Unauthorized(format!(
                "token belongs to reader {}, response names {}",
                reader.reader_id, response.reader_id
            )));
        }
        let unblinded = validate_response(&response, plan)?;
        let mut log = self.writer.lock().expect("writer lock");
        if log
            .state()
            .study_responses(track)
            .iter()
            .any(|r| r.reader_id == response.reader_id)
        {
            return Err(EvalError::AlreadyResponded(format!("reader {}", response.reader_id)));
        }
        let at = self.clock.now();
        log.append(Event::StudyResponse {
            at,
            track,
            response: response.clone(),
            unblinded,
        })?;
        self.publish(log.state());
        Ok(StudyAck {
            reader_id: response.reader_id,
            track,
            accepted_at: at,
        })
    }
}
