//! Seeded case-level dataset splits.
//!
//! Case ids are sorted, shuffled with a [`SplitMix64`] stream derived from the
//! seed, and cut into contiguous runs in [`SplitName`] order. Run lengths follow
//! floor-then-distribute: each split first gets `floor(n * f)`, then the
//! remaining `floor(n * sum f) - sum floor(n * f)` cases go one each to the
//! splits with the largest fractional parts, earlier splits winning ties.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use kbench_core::rng::{fnv1a64, SplitMix64};
use kbench_core::sampling::Track;
use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};
use crate::protocol::Phase;

/// Slack for fractions such as 0.15 * 20 that land a hair below an integer.
const EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Training,
    Validation,
    TestMc,
    TestSc,
    ChallengeMc,
    ChallengeSc,
}

impl SplitName {
    pub const ALL: [SplitName; 6] = [
        SplitName::Training,
        SplitName::Validation,
        SplitName::TestMc,
        SplitName::TestSc,
        SplitName::ChallengeMc,
        SplitName::ChallengeSc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Training => "training",
            SplitName::Validation => "validation",
            SplitName::TestMc => "test_mc",
            SplitName::TestSc => "test_sc",
            SplitName::ChallengeMc => "challenge_mc",
            SplitName::ChallengeSc => "challenge_sc",
        }
    }

    /// Held-out split scored on a leaderboard.
    pub fn for_board(phase: Phase, track: Track) -> Self {
        match (phase, track) {
            (Phase::Test, Track::Multicoil) => SplitName::TestMc,
            (Phase::Test, Track::Singlecoil) => SplitName::TestSc,
            (Phase::Challenge, Track::Multicoil) => SplitName::ChallengeMc,
            (Phase::Challenge, Track::Singlecoil) => SplitName::ChallengeSc,
        }
    }

    /// Leaderboard scored on this split, if any.
    pub fn board(self) -> Option<(Phase, Track)> {
        match self {
            SplitName::Training | SplitName::Validation => None,
            SplitName::TestMc => Some((Phase::Test, Track::Multicoil)),
            SplitName::TestSc => Some((Phase::Test, Track::Singlecoil)),
            SplitName::ChallengeMc => Some((Phase::Challenge, Track::Multicoil)),
            SplitName::ChallengeSc => Some((Phase::Challenge, Track::Singlecoil)),
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitName {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self> {
        SplitName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| EvalError::BadRequest(format!("unknown split {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub counts: BTreeMap<SplitName, usize>,
    pub splits: BTreeMap<SplitName, Vec<String>>,
}

impl SplitManifest {
    pub fn cases(&self, split: SplitName) -> &[String] {
        self.splits.get(&split).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Split holding `case_id`, if any.
    pub fn split_of(&self, case_id: &str) -> Option<SplitName> {
        self.splits
            .iter()
            .find(|(_, ids)| ids.iter().any(|c| c == case_id))
            .map(|(s, _)| *s)
    }
}

/// Split sizes for `n` cases under the floor-then-distribute rule.
pub fn split_counts(n: usize, fractions: &[f64]) -> Result<Vec<usize>> {
    if let Some(f) = fractions.iter().find(|f| !(f.is_finite() && **f >= 0.0)) {
        return Err(EvalError::SplitInfeasible(format!(
            "fraction {f} is not a finite non-negative number"
        )));
    }
    let total: f64 = fractions.iter().sum();
    if total > 1.0 + EPS {
        return Err(EvalError::SplitInfeasible(format!("fractions sum to {total} > 1")));
    }
    let quotas: Vec<f64> = fractions.iter().map(|f| n as f64 * f).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| (q + EPS).floor() as usize).collect();
    let target = ((n as f64 * total + EPS).floor() as usize).min(n);
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    // Remainders equal up to rounding noise count as tied; the earlier split wins.
    let remainder = |i: usize| ((quotas[i] - counts[i] as f64) / EPS).round() as i64;
    order.sort_by_key(|&i| (std::cmp::Reverse(remainder(i)), i));
    for &i in order.iter().take(target.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    if let Some(i) = (0..fractions.len()).find(|&i| fractions[i] > 0.0 && counts[i] == 0) {
        return Err(EvalError::SplitInfeasible(format!(
            "{n} cases leave split {i} (fraction {}) empty",
            fractions[i]
        )));
    }
    Ok(counts)
}

/// Seeded shuffle of the case ids cut into the six splits.
pub fn split_dataset(case_ids: &[String], seed: u64, fractions: &BTreeMap<SplitName, f64>) -> Result<SplitManifest> {
    let mut ids = case_ids.to_vec();
    ids.sort();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(EvalError::SplitInfeasible("duplicate case ids".into()));
    }
    let fr: Vec<f64> = SplitName::ALL
        .iter()
        .map(|s| fractions.get(s).copied().unwrap_or(0.0))
        .collect();
    let sizes = split_counts(ids.len(), &fr)?;
    SplitMix64::derived(seed, &[fnv1a64(b"split")]).shuffle(&mut ids);

    let mut counts = BTreeMap::new();
    let mut splits = BTreeMap::new();
    let mut rest = ids.as_slice();
    for (name, size) in SplitName::ALL.into_iter().zip(sizes) {
        let (head, tail) = rest.split_at(size);
        let mut members = head.to_vec();
        members.sort();
        counts.insert(name, size);
        splits.insert(name, members);
        rest = tail;
    }
    Ok(SplitManifest { seed, counts, splits })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_four_way_example() {
        assert_eq!(split_counts(20, &[0.6, 0.15, 0.15, 0.1]).unwrap(), vec![12, 3, 3, 2]);
    }

    #[test]
    fn remainder_goes_to_largest_fraction() {
        // quotas 3.5, 3.5, 3.0 with target 10: one extra case, first split wins the tie
        assert_eq!(split_counts(10, &[0.35, 0.35, 0.3]).unwrap(), vec![4, 3, 3]);
    }

    #[test]
    fn partial_total_leaves_cases_out() {
        assert_eq!(split_counts(10, &[0.25, 0.25]).unwrap(), vec![3, 2]);
    }

    #[test]
    fn empty_nonzero_split_is_infeasible() {
        assert!(matches!(
            split_counts(3, &[0.9, 0.05, 0.05]),
            Err(EvalError::SplitInfeasible(_))
        ));
        assert!(split_counts(10, &[0.7, 0.5]).is_err());
    }

    #[test]
    fn manifest_is_seeded() {
        let ids: Vec<String> = (0..20).map(|i| format!("case{i:03}")).collect();
        let fr: BTreeMap<SplitName, f64> = [
            (SplitName::Training, 0.5),
            (SplitName::Validation, 0.1),
            (SplitName::TestMc, 0.1),
            (SplitName::TestSc, 0.1),
            (SplitName::ChallengeMc, 0.1),
            (SplitName::ChallengeSc, 0.1),
        ]
        .into();
        let a = split_dataset(&ids, 5, &fr).unwrap();
        assert_eq!(a, split_dataset(&ids, 5, &fr).unwrap());
        assert_ne!(a, split_dataset(&ids, 6, &fr).unwrap());
        assert_eq!(a.counts[&SplitName::Training], 10);
        assert_eq!(a.split_of(&a.cases(SplitName::TestSc)[0]), Some(SplitName::TestSc));
    }
}
