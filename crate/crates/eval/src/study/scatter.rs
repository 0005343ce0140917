use kbench_core::metrics::MetricReport;
use kbench_core::sampling::Track;
use serde::Serialize;

use super::StudyResult;
use crate::error::{EvalError, Result};
use crate::protocol::{accel_key, ScoreCard};

/// NMSE values are clamped to this floor before `min / value`, so a perfect
/// (zero NMSE) entry does not divide by zero.
pub const NMSE_FLOOR: f64 = 1e-20;

/// `value / max` when higher is better, `min / value` otherwise. The flag is
/// set when a lower-is-better value had to be clamped to [`NMSE_FLOOR`].
pub fn normalize(values: &[f64], higher_is_better: bool) -> (Vec<f64>, bool) {
    if higher_is_better {
        let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (values.iter().map(|v| v / best).collect(), false)
    } else {
        let flagged = values.iter().any(|&v| v < NMSE_FLOOR);
        let clamped: Vec<f64> = values.iter().map(|v| v.max(NMSE_FLOOR)).collect();
        let best = clamped.iter().copied().fold(f64::INFINITY, f64::min);
        (clamped.iter().map(|v| best / v).collect(), flagged)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScatterRow {
    pub metric: String,
    pub team: String,
    pub value: f64,
    pub normalized: f64,
    pub avg_rank: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScatterTable {
    pub track: Track,
    pub accel: u32,
    pub rows: Vec<ScatterRow>,
    /// Metrics whose normalization used the NMSE floor.
    pub flags: Vec<String>,
}

/// Normalized metric vs. average reader rank for every finalist, using each
/// scorecard's metrics at the track's ranking acceleration.
pub fn normalize_for_scatter(track: Track, cards: &[ScoreCard], result: &StudyResult) -> Result<ScatterTable> {
    let accel = track.ranking_accel();
    let key = accel_key(accel);
    let mut per_team = Vec::new();
    for t in &result.teams {
        let card = cards
            .iter()
            .find(|c| c.team_id == t.team && c.track == track)
            .ok_or_else(|| EvalError::NotFound(format!("scorecard for finalist {}", t.team)))?;
        let m = card
            .metrics
            .get(&key)
            .ok_or_else(|| EvalError::NotFound(format!("{key} metrics for {}", t.team)))?;
        per_team.push((t.team.clone(), t.avg_rank.value(), m));
    }
    let mut rows = Vec::new();
    let mut flags = Vec::new();
    type Getter = fn(&MetricReport) -> f64;
    let metrics: [(&str, bool, Getter); 3] = [
        ("ssim", true, |m| m.ssim),
        ("psnr", true, |m| m.psnr),
        ("nmse", false, |m| m.nmse),
    ];
    for (name, higher, get) in metrics {
        let values: Vec<f64> = per_team.iter().map(|(_, _, m)| get(m)).collect();
        let (norm, flagged) = normalize(&values, higher);
        if flagged {
            flags.push(name.to_string());
        }
        for ((team, avg_rank, _), (value, normalized)) in per_team.iter().zip(values.iter().zip(norm)) {
            rows.push(ScatterRow {
                metric: name.to_string(),
                team: team.clone(),
                value: *value,
                normalized,
                avg_rank: *avg_rank,
            });
        }
    }
    Ok(ScatterTable {
        track,
        accel,
        rows,
        flags,
    })
}

pub fn scatter_csv(table: &ScatterTable) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["metric", "team", "value", "normalized", "avg_rank"])
        .map_err(std::io::Error::from)?;
    for r in &table.rows {
        w.write_record([
            r.metric.clone(),
            r.team.clone(),
            format!("{:.6}", r.value),
            format!("{:.5}", r.normalized),
            format!("{:.3}", r.avg_rank),
        ])
        .map_err(std::io::Error::from)?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_nmse_is_capped_and_flagged() {
        let (n, flagged) = normalize(&[0.0, 0.01], false);
        assert!(flagged);
        assert_eq!(n[0], 1.0);
        assert!(n[1] < 1e-15);
    }

    #[test]
    fn single_value_normalizes_to_one() {
        assert_eq!(normalize(&[0.7], true).0, vec![1.0]);
        assert_eq!(normalize(&[0.02], false).0, vec![1.0]);
    }
}
