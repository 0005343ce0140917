//! Blinded reader study: plans, responses and their aggregation.
//!
//! Each reader gets a private label map (`A`, `B`, ... → team) that stays
//! fixed across that reader's cases, so one overall ranking per reader is
//! meaningful; the on-screen panel order of the labels is reshuffled for every
//! (case, reader) pair. Both shuffles are seeded from the plan seed.

mod aggregate;
mod bundle;
mod scatter;

pub use aggregate::{
    aggregate_criteria, aggregate_for_plan, aggregate_ranks, rank_grid_csv, result_csv, Criterion, CriterionMeans,
    Mean, StudyResult, TeamResult,
};
pub use bundle::{export_bundle, BundleDescriptor, Panel, ReaderSession, BUNDLE_GT_LABEL};
pub use scatter::{normalize, normalize_for_scatter, scatter_csv, ScatterRow, ScatterTable, NMSE_FLOOR};

use std::collections::{BTreeMap, BTreeSet};

use kbench_core::kspace::Contrast;
use kbench_core::rng::{fnv1a64, SplitMix64};
use kbench_core::sampling::Track;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{EvalError, Result};
use crate::protocol::{FinalistFlag, Finalists};

pub const DEFAULT_STUDY_CASES: usize = 5;
pub const DEFAULT_READERS: usize = 7;
/// Criterion scores run from 1 (best) to this value (worst).
pub const SCALE_MAX: u8 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyCase {
    pub case_id: String,
    pub contrast: Contrast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReaderAssignment {
    pub reader_id: String,
    /// Bearer token for the reader's session.
    pub token: String,
    /// Blinded label → team id.
    pub labels: BTreeMap<String, String>,
    /// Left-to-right label order per case (ground truth is always shown first).
    pub panel_order: BTreeMap<String, Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyPlan {
    pub track: Track,
    pub seed: u64,
    /// Finalist team ids in leaderboard order.
    pub finalists: Vec<String>,
    #[serde(default)]
    pub finalist_flags: Vec<FinalistFlag>,
    pub cases: Vec<StudyCase>,
    pub readers: Vec<ReaderAssignment>,
}

pub fn label_name(i: usize) -> String {
    char::from(b'A' + i as u8).to_string()
}

fn reader_token(seed: u64, track: Track, reader: &str) -> String {
    let digest = Sha256::new()
        .chain_update(b"kbench-reader\0")
        .chain_update(seed.to_le_bytes())
        .chain_update(track.as_str().as_bytes())
        .chain_update([0])
        .chain_update(reader.as_bytes())
        .finalize();
    digest[..16].iter().map(|b| format!("{b:02x}")).collect()
}

/// Samples `n_cases` challenge cases (at least one per contrast when `n_cases >= 2`)
/// and assigns blinded labels for `n_readers` readers.
pub fn build_study_plan(
    finalists: &Finalists,
    challenge_cases: &[StudyCase],
    n_cases: usize,
    n_readers: usize,
    seed: u64,
) -> Result<StudyPlan> {
    let track = finalists.track;
    let k = finalists.teams.len();
    if k == 0 || k > 26 {
        return Err(EvalError::StudyInfeasible(format!("{k} finalists")));
    }
    if n_cases == 0 || n_readers == 0 {
        return Err(EvalError::StudyInfeasible(
            "need at least one case and one reader".into(),
        ));
    }
    if challenge_cases.len() < n_cases {
        return Err(EvalError::StudyInfeasible(format!(
            "{} challenge cases available, {n_cases} requested",
            challenge_cases.len()
        )));
    }
    let mut pools: BTreeMap<Contrast, Vec<&StudyCase>> = BTreeMap::new();
    for c in challenge_cases {
        pools.entry(c.contrast).or_default().push(c);
    }
    if n_cases >= 2 && pools.len() < Contrast::ALL.len() {
        return Err(EvalError::StudyInfeasible(
            "the challenge set does not contain both contrasts".into(),
        ));
    }
    let mut rng = SplitMix64::derived(seed, &[fnv1a64(b"study-cases"), fnv1a64(track.as_str().as_bytes())]);
    let mut picked: Vec<&StudyCase> = Vec::new();
    let mut rest: Vec<&StudyCase> = Vec::new();
    for pool in pools.values_mut() {
        pool.sort_by(|a, b| a.case_id.cmp(&b.case_id));
        rng.shuffle(pool);
        if n_cases >= 2 {
            picked.push(pool[0]);
            rest.extend_from_slice(&pool[1..]);
        } else {
            rest.extend_from_slice(pool);
        }
    }
    rest.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    rng.shuffle(&mut rest);
    picked.extend(rest.into_iter().take(n_cases - picked.len()));
    let mut cases: Vec<StudyCase> = picked.into_iter().cloned().collect();
    cases.sort_by(|a, b| a.case_id.cmp(&b.case_id));

    let labels: Vec<String> = (0..k).map(label_name).collect();
    let track_word = fnv1a64(track.as_str().as_bytes());
    let readers = (1..=n_readers)
        .map(|r| {
            let reader_id = format!("R{r}");
            let reader_word = fnv1a64(reader_id.as_bytes());
            let mut teams = finalists.teams.clone();
            SplitMix64::derived(seed, &[fnv1a64(b"study-labels"), track_word, reader_word]).shuffle(&mut teams);
            let panel_order = cases
                .iter()
                .map(|c| {
                    let mut order = labels.clone();
                    SplitMix64::derived(
                        seed,
                        &[
                            fnv1a64(b"study-panels"),
                            track_word,
                            fnv1a64(c.case_id.as_bytes()),
                            reader_word,
                        ],
                    )
                    .shuffle(&mut order);
                    (c.case_id.clone(), order)
                })
                .collect();
            ReaderAssignment {
                token: reader_token(seed, track, &reader_id),
                labels: labels.iter().cloned().zip(teams).collect(),
                panel_order,
                reader_id,
            }
        })
        .collect();

    Ok(StudyPlan {
        track,
        seed,
        finalists: finalists.teams.clone(),
        finalist_flags: finalists.flags.clone(),
        cases,
        readers,
    })
}

impl StudyPlan {
    pub fn reader(&self, reader_id: &str) -> Result<&ReaderAssignment> {
        self.readers
            .iter()
            .find(|r| r.reader_id == reader_id)
            .ok_or_else(|| EvalError::NotFound(format!("reader {reader_id}")))
    }

    pub fn reader_by_token(&self, token: &str) -> Option<&ReaderAssignment> {
        self.readers.iter().find(|r| r.token == token)
    }

    pub fn labels(&self) -> Vec<String> {
        (0..self.finalists.len()).map(label_name).collect()
    }

    /// Label under which `reader` sees `team`.
    pub fn blind(&self, reader_id: &str, team: &str) -> Result<String> {
        self.reader(reader_id)?
            .labels
            .iter()
            .find(|(_, t)| *t == team)
            .map(|(l, _)| l.clone())
            .ok_or_else(|| EvalError::NotFound(format!("team {team} is not a finalist")))
    }

    pub fn unblind(&self, reader_id: &str, label: &str) -> Result<String> {
        self.reader(reader_id)?
            .labels
            .get(label)
            .cloned()
            .ok_or_else(|| EvalError::IncompleteResponse(format!("unknown label {label:?}")))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelEntry {
    #[serde(default)]
    pub rank: Option<u8>,
    #[serde(default)]
    pub artifacts: Option<u8>,
    #[serde(default)]
    pub sharpness: Option<u8>,
    #[serde(default)]
    pub cnr: Option<u8>,
    #[serde(default)]
    pub diagnostic_confidence: Option<u8>,
}

/// A reader's submission, keyed by blinded label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReaderResponse {
    pub reader_id: String,
    pub track: Track,
    pub entries: BTreeMap<String, LabelEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriterionScores {
    pub artifacts: u8,
    pub sharpness: u8,
    pub cnr: u8,
    pub diagnostic_confidence: u8,
}

impl CriterionScores {
    pub fn get(&self, c: Criterion) -> u8 {
        match c {
            Criterion::Artifacts => self.artifacts,
            Criterion::Sharpness => self.sharpness,
            Criterion::Cnr => self.cnr,
            Criterion::DiagnosticConfidence => self.diagnostic_confidence,
        }
    }
}

/// A validated response keyed by team id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnblindedResponse {
    pub reader_id: String,
    pub ranks: BTreeMap<String, u8>,
    pub scores: BTreeMap<String, CriterionScores>,
}

/// Checks a response against the plan and maps its labels back to teams.
pub fn validate_response(resp: &ReaderResponse, plan: &StudyPlan) -> Result<UnblindedResponse> {
    if resp.track != plan.track {
        return Err(EvalError::BadRequest(format!(
            "response is for track {}, plan is for {}",
            resp.track, plan.track
        )));
    }
    let reader = plan.reader(&resp.reader_id)?;
    let labels: BTreeSet<&String> = reader.labels.keys().collect();
    if let Some(l) = resp.entries.keys().find(|l| !labels.contains(l)) {
        return Err(EvalError::IncompleteResponse(format!("unknown label {l:?}")));
    }
    if let Some(l) = labels.iter().find(|l| !resp.entries.contains_key(**l)) {
        return Err(EvalError::IncompleteResponse(format!("no entry for label {l}")));
    }
    let k = labels.len();
    let mut ranks = BTreeMap::new();
    let mut scores = BTreeMap::new();
    for (label, e) in &resp.entries {
        let need = |field: &str, v: Option<u8>| {
            v.ok_or_else(|| EvalError::IncompleteResponse(format!("label {label} has no {field}")))
        };
        let rank = need("rank", e.rank)?;
        let s = CriterionScores {
            artifacts: need("artifacts", e.artifacts)?,
            sharpness: need("sharpness", e.sharpness)?,
            cnr: need("cnr", e.cnr)?,
            diagnostic_confidence: need("diagnostic_confidence", e.diagnostic_confidence)?,
        };
        for c in Criterion::ALL {
            let v = s.get(c);
            if !(1..=SCALE_MAX).contains(&v) {
                return Err(EvalError::OutOfScale {
                    field: format!("{label}.{}", c.as_str()),
                    value: v,
                });
            }
        }
        let team = reader.labels[label].clone();
        ranks.insert(team.clone(), rank);
        scores.insert(team, s);
    }
    let mut seen: Vec<u8> = ranks.values().copied().collect();
    seen.sort_unstable();
    let want: Vec<u8> = (1..=k as u8).collect();
    if seen != want {
        return Err(EvalError::InvalidPermutation(format!(
            "ranks {seen:?} are not a permutation of 1..={k}"
        )));
    }
    Ok(UnblindedResponse {
        reader_id: resp.reader_id.clone(),
        ranks,
        scores,
    })
}

/// Re-labels an unblinded response for `reader` under the plan; inverse of
/// [`validate_response`].
pub fn blind_response(plan: &StudyPlan, u: &UnblindedResponse) -> Result<ReaderResponse> {
    let mut entries = BTreeMap::new();
    for (team, &rank) in &u.ranks {
        let s = u
            .scores
            .get(team)
            .ok_or_else(|| EvalError::IncompleteResponse(format!("no scores for {team}")))?;
        entries.insert(
            plan.blind(&u.reader_id, team)?,
            LabelEntry {
                rank: Some(rank),
                artifacts: Some(s.artifacts),
                sharpness: Some(s.sharpness),
                cnr: Some(s.cnr),
                diagnostic_confidence: Some(s.diagnostic_confidence),
            },
        );
    }
    Ok(ReaderResponse {
        reader_id: u.reader_id.clone(),
        track: plan.track,
        entries,
    })
}
