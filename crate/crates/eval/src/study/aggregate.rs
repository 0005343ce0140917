use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};

use super::{StudyPlan, UnblindedResponse};
use crate::error::{EvalError, Result};

/// Exact mean of integer votes, `sum / count`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mean {
    pub sum: u64,
    pub count: u64,
}

impl Mean {
    pub fn value(&self) -> f64 {
        self.sum as f64 / self.count as f64
    }

    /// Thousandths, rounded half up on the exact rational.
    pub fn milli(&self) -> u64 {
        (2000 * self.sum + self.count) / (2 * self.count)
    }
}

impl Ord for Mean {
    fn cmp(&self, other: &Self) -> Ordering {
        ((self.sum as u128) * other.count as u128).cmp(&((other.sum as u128) * self.count as u128))
    }
}

impl PartialOrd for Mean {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Mean {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.milli();
        write!(f, "{}.{:03}", m / 1000, m % 1000)
    }
}

impl Serialize for Mean {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("Mean", 3)?;
        st.serialize_field("sum", &self.sum)?;
        st.serialize_field("count", &self.count)?;
        st.serialize_field("display", &self.to_string())?;
        st.end()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Artifacts,
    Sharpness,
    Cnr,
    DiagnosticConfidence,
}

impl Criterion {
    pub const ALL: [Criterion; 4] = [
        Criterion::Artifacts,
        Criterion::Sharpness,
        Criterion::Cnr,
        Criterion::DiagnosticConfidence,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::Artifacts => "artifacts",
            Criterion::Sharpness => "sharpness",
            Criterion::Cnr => "cnr",
            Criterion::DiagnosticConfidence => "diagnostic_confidence",
        }
    }
}

pub type CriterionMeans = BTreeMap<Criterion, Mean>;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TeamResult {
    pub team: String,
    pub avg_rank: Mean,
    pub final_rank: usize,
    pub tie: bool,
    /// `"2"` or `"1 (tie)"`.
    pub rank_label: String,
    pub criteria: CriterionMeans,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyResult {
    pub n_readers: usize,
    /// Teams in final order; tied teams by id.
    pub teams: Vec<TeamResult>,
    /// Raw responses, by reader id.
    pub responses: Vec<UnblindedResponse>,
}

impl StudyResult {
    pub fn team(&self, team: &str) -> Option<&TeamResult> {
        self.teams.iter().find(|t| t.team == team)
    }
}

/// Checks one response per reader over a common team set; returns the teams.
fn check_responses(responses: &[UnblindedResponse], n_readers: usize) -> Result<BTreeSet<String>> {
    let readers: BTreeSet<&str> = responses.iter().map(|r| r.reader_id.as_str()).collect();
    if readers.len() != responses.len() {
        return Err(EvalError::IncompleteStudy(
            "more than one response from a reader".into(),
        ));
    }
    if responses.len() != n_readers {
        return Err(EvalError::IncompleteStudy(format!(
            "{} of {n_readers} reader responses present",
            responses.len()
        )));
    }
    let teams: BTreeSet<String> = responses
        .first()
        .map(|r| r.ranks.keys().cloned().collect())
        .unwrap_or_default();
    for r in responses {
        let mine: BTreeSet<String> = r.ranks.keys().cloned().collect();
        let scored: BTreeSet<String> = r.scores.keys().cloned().collect();
        if mine != teams || scored != teams {
            return Err(EvalError::IncompleteStudy(format!(
                "reader {} covers a different team set",
                r.reader_id
            )));
        }
    }
    Ok(teams)
}

/// Per-team per-criterion means over all readers.
pub fn aggregate_criteria(
    responses: &[UnblindedResponse],
    n_readers: usize,
) -> Result<BTreeMap<String, CriterionMeans>> {
    let teams = check_responses(responses, n_readers)?;
    Ok(teams
        .into_iter()
        .map(|team| {
            let means = Criterion::ALL
                .into_iter()
                .map(|c| {
                    let sum = responses.iter().map(|r| r.scores[&team].get(c) as u64).sum();
                    (
                        c,
                        Mean {
                            sum,
                            count: n_readers as u64,
                        },
                    )
                })
                .collect();
            (team, means)
        })
        .collect())
}

/// Average reader rank per team; exactly equal means share a rank marked tie.
/// Criterion means are reported alongside and never affect the ranking.
pub fn aggregate_ranks(responses: &[UnblindedResponse], n_readers: usize) -> Result<StudyResult> {
    let criteria = aggregate_criteria(responses, n_readers)?;
    let mut rows: Vec<(String, Mean)> = criteria
        .keys()
        .map(|team| {
            let sum = responses.iter().map(|r| r.ranks[team] as u64).sum();
            (
                team.clone(),
                Mean {
                    sum,
                    count: n_readers as u64,
                },
            )
        })
        .collect();
    rows.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));
    let teams = rows
        .iter()
        .enumerate()
        .map(|(i, (team, avg))| {
            let final_rank = 1 + rows[..i].iter().take_while(|(_, m)| m < avg).count();
            let tie = rows.iter().filter(|(_, m)| m == avg).count() > 1;
            TeamResult {
                team: team.clone(),
                avg_rank: *avg,
                final_rank,
                tie,
                rank_label: if tie {
                    format!("{final_rank} (tie)")
                } else {
                    final_rank.to_string()
                },
                criteria: criteria[team].clone(),
            }
        })
        .collect();
    let mut raw = responses.to_vec();
    raw.sort_by(|a, b| a.reader_id.cmp(&b.reader_id));
    Ok(StudyResult {
        n_readers,
        teams,
        responses: raw,
    })
}

/// [`aggregate_ranks`] requiring exactly the plan's readers.
pub fn aggregate_for_plan(plan: &StudyPlan, responses: &[UnblindedResponse]) -> Result<StudyResult> {
    let missing: Vec<&str> = plan
        .readers
        .iter()
        .map(|r| r.reader_id.as_str())
        .filter(|id| !responses.iter().any(|r| r.reader_id == *id))
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::IncompleteStudy(format!(
            "no response from {}",
            missing.join(", ")
        )));
    }
    aggregate_ranks(responses, plan.readers.len())
}

fn csv_bytes(rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(&r).map_err(std::io::Error::from)?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

/// One row per team: average rank, final rank and criterion means at 3 decimals.
pub fn result_csv(result: &StudyResult) -> Result<Vec<u8>> {
    let mut rows = vec![["team", "avg_rank", "final_rank"]
        .iter()
        .map(|s| s.to_string())
        .chain(Criterion::ALL.iter().map(|c| c.as_str().to_string()))
        .collect()];
    for t in &result.teams {
        let mut row = vec![t.team.clone(), t.avg_rank.to_string(), t.rank_label.clone()];
        row.extend(Criterion::ALL.iter().map(|c| t.criteria[c].to_string()));
        rows.push(row);
    }
    csv_bytes(rows)
}

/// Reader × team rank grid.
pub fn rank_grid_csv(result: &StudyResult) -> Result<Vec<u8>> {
    let mut rows = vec![std::iter::once("reader".to_string())
        .chain(result.teams.iter().map(|t| t.team.clone()))
        .collect()];
    for r in &result.responses {
        let mut row = vec![r.reader_id.clone()];
        row.extend(result.teams.iter().map(|t| r.ranks[&t.team].to_string()));
        rows.push(row);
    }
    csv_bytes(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_rounds_half_up() {
        let m = |sum, count| Mean { sum, count }.to_string();
        assert_eq!(m(9, 7), "1.286");
        assert_eq!(m(22, 7), "3.143");
        assert_eq!(m(19, 7), "2.714");
        assert_eq!(m(7, 7), "1.000");
        assert_eq!(m(1, 8), "0.125");
        assert_eq!(m(1, 16), "0.063");
        assert_eq!(m(1, 2000), "0.001");
    }

    #[test]
    fn exact_comparison() {
        assert_eq!(
            Mean { sum: 2, count: 6 }.cmp(&Mean { sum: 1, count: 3 }),
            Ordering::Equal
        );
        assert!(Mean { sum: 16, count: 7 } < Mean { sum: 7, count: 3 });
    }
}
