//! Retrospective Cartesian undersampling along the phase-encode (width) axis.
//!
//! A mask keeps `round(width / R)` columns: a contiguous block of
//! `round(center_fraction * width)` columns starting at
//! `(width - n_center + 1) / 2`, plus the remainder drawn uniformly without
//! replacement from the other columns. The draw lists the non-center columns in
//! ascending order and runs a partial Fisher-Yates shuffle on a
//! [`SplitMix64`](crate::rng::SplitMix64) stream seeded with the mask seed:
//! for `i` in `0..n_random`, swap position `i` with `i + below(len - i)`.
//! The first `n_random` entries are the selected columns. Rounding is half away
//! from zero.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kspace::{KSpaceVolume, C32};
use crate::rng::{fnv1a64, SplitMix64};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingMask {
    pub width: usize,
    pub accel: f64,
    pub center_fraction: f64,
    pub seed: u64,
    lines: Vec<bool>,
}

impl SamplingMask {
    pub fn lines(&self) -> &[bool] {
        &self.lines
    }

    pub fn selected(&self) -> Vec<usize> {
        self.lines
            .iter()
            .enumerate()
            .filter_map(|(i, &on)| on.then_some(i))
            .collect()
    }

    pub fn count(&self) -> usize {
        self.lines.iter().filter(|&&on| on).count()
    }

    /// Columns of the fully sampled center block.
    pub fn center_block(&self) -> std::ops::Range<usize> {
        center_block(self.width, self.center_fraction)
    }

    pub fn all_true(width: usize) -> Self {
        Self {
            width,
            accel: 1.0,
            center_fraction: 0.0,
            seed: 0,
            lines: vec![true; width],
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "width": self.width,
            "accel": self.accel,
            "center_fraction": self.center_fraction,
            "seed": self.seed,
            "lines": self.selected(),
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let bad = || Error::InvalidData(format!("malformed mask record: {v}"));
        let width = v["width"].as_u64().ok_or_else(bad)? as usize;
        let accel = v["accel"].as_f64().ok_or_else(bad)?;
        let center_fraction = v["center_fraction"].as_f64().ok_or_else(bad)?;
        let seed = v["seed"].as_u64().ok_or_else(bad)?;
        let mut lines = vec![false; width];
        for idx in v["lines"].as_array().ok_or_else(bad)? {
            let i = idx.as_u64().ok_or_else(bad)? as usize;
            *lines.get_mut(i).ok_or_else(bad)? = true;
        }
        Ok(Self {
            width,
            accel,
            center_fraction,
            seed,
            lines,
        })
    }

    /// Mask from raw column flags. The center fraction is taken from the
    /// contiguous sampled run through column `width / 2`.
    pub fn from_lines(lines: Vec<bool>) -> Result<Self> {
        let width = lines.len();
        let count = lines.iter().filter(|&&b| b).count();
        if count == 0 {
            return Err(Error::InvalidData("mask samples no columns".into()));
        }
        let mid = width / 2;
        let mut run = 0;
        if lines[mid] {
            let lo = (0..=mid).rev().take_while(|&i| lines[i]).count();
            let hi = (mid + 1..width).take_while(|&i| lines[i]).count();
            run = lo + hi;
        }
        Ok(Self {
            width,
            accel: width as f64 / count as f64,
            center_fraction: run as f64 / width as f64,
            seed: 0,
            lines,
        })
    }

    /// Mask recorded by [`apply_mask`], if any.
    pub fn from_attrs(attrs: &crate::kspace::CaseAttrs) -> Result<Option<Self>> {
        attrs.extra.get("mask").map(Self::from_json).transpose()
    }
}

fn round_half_away(x: f64) -> usize {
    x.round() as usize
}

pub fn center_block(width: usize, center_fraction: f64) -> std::ops::Range<usize> {
    let n_center = round_half_away(center_fraction * width as f64);
    let start = (width - n_center).div_ceil(2);
    start..start + n_center
}

pub fn make_mask(width: usize, accel: f64, center_fraction: f64, seed: u64) -> Result<SamplingMask> {
    if width == 0 {
        return Err(Error::MaskInfeasible("width must be positive".into()));
    }
    if !(accel.is_finite() && accel >= 1.0) {
        return Err(Error::MaskInfeasible(format!("acceleration {accel} must be >= 1")));
    }
    if !(0.0..1.0).contains(&center_fraction) {
        return Err(Error::MaskInfeasible(format!(
            "center fraction {center_fraction} must lie in [0, 1)"
        )));
    }
    let n_total = round_half_away(width as f64 / accel);
    let n_center = round_half_away(center_fraction * width as f64);
    if n_center > n_total {
        return Err(Error::MaskInfeasible(format!(
            "center block of {n_center} lines exceeds the {n_total} lines allowed at R={accel}"
        )));
    }
    let center = center_block(width, center_fraction);
    let mut lines = vec![false; width];
    for l in &mut lines[center.clone()] {
        *l = true;
    }
    let mut candidates: Vec<usize> = (0..width).filter(|i| !center.contains(i)).collect();
    let n_random = n_total - n_center;
    let mut rng = SplitMix64::new(seed);
    for i in 0..n_random {
        let j = i + rng.below((candidates.len() - i) as u64) as usize;
        candidates.swap(i, j);
        lines[candidates[i]] = true;
    }
    Ok(SamplingMask {
        width,
        accel,
        center_fraction,
        seed,
        lines,
    })
}

/// One mask per case: the case id hashed with FNV-1a, xor the run seed.
pub fn case_mask_seed(case_id: &str, base_seed: u64) -> u64 {
    fnv1a64(case_id.as_bytes()) ^ base_seed
}

/// Zeroes unsampled columns across every slice and coil; sampled columns are
/// copied untouched. The mask is recorded under the `mask` attribute.
pub fn apply_mask(ksp: &KSpaceVolume, mask: &SamplingMask) -> Result<KSpaceVolume> {
    if mask.width != ksp.width() {
        return Err(Error::ShapeMismatch {
            expected: vec![ksp.width()],
            actual: vec![mask.width],
        });
    }
    let mut out = ksp.clone();
    for (x, &keep) in mask.lines.iter().enumerate() {
        if !keep {
            out.data_mut().slice_mut(s![.., .., .., x]).fill(C32::new(0.0, 0.0));
        }
    }
    out.attrs.extra.insert("mask".into(), mask.to_json());
    Ok(out)
}

/// Sampled columns as a 0/1 weight vector, convenient for operators.
pub fn mask_weights(mask: &SamplingMask) -> Vec<f64> {
    mask.lines.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoilMode {
    Multi,
    Single,
}

/// A leaderboard track: multi-coil (scored at R=4 and R=8, ranked at R=8) or
/// single-coil (R=4 only).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Track {
    Multicoil,
    Singlecoil,
}

impl Track {
    pub const ALL: [Track; 2] = [Track::Multicoil, Track::Singlecoil];

    pub fn coil_mode(self) -> CoilMode {
        match self {
            Track::Multicoil => CoilMode::Multi,
            Track::Singlecoil => CoilMode::Single,
        }
    }

    pub fn accelerations(self) -> &'static [u32] {
        match self {
            Track::Multicoil => &[4, 8],
            Track::Singlecoil => &[4],
        }
    }

    /// Acceleration whose SSIM orders the leaderboard.
    pub fn ranking_accel(self) -> u32 {
        match self {
            Track::Multicoil => 8,
            Track::Singlecoil => 4,
        }
    }

    pub fn configs(self) -> Vec<TrackConfig> {
        self.accelerations()
            .iter()
            .map(|&r| TrackConfig::new(self.coil_mode(), r, None).expect("built-in track"))
            .collect()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Track::Multicoil => "multicoil",
            Track::Singlecoil => "singlecoil",
        }
    }
}

impl fmt::Display for Track {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Track {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multicoil" => Ok(Track::Multicoil),
            "singlecoil" => Ok(Track::Singlecoil),
            other => Err(Error::InvalidData(format!("unknown track {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackConfig {
    pub coil_mode: CoilMode,
    pub accel: u32,
    pub center_fraction: f64,
}

impl TrackConfig {
    pub fn default_center_fraction(accel: u32) -> Option<f64> {
        match accel {
            4 => Some(0.08),
            8 => Some(0.04),
            _ => None,
        }
    }

    pub fn new(coil_mode: CoilMode, accel: u32, center_fraction: Option<f64>) -> Result<Self> {
        let default_cf = Self::default_center_fraction(accel)
            .ok_or_else(|| Error::InvalidConfig(format!("acceleration must be 4 or 8, got {accel}")))?;
        if coil_mode == CoilMode::Single && accel != 4 {
            return Err(Error::InvalidConfig("the single-coil track only runs at R=4".into()));
        }
        let center_fraction = center_fraction.unwrap_or(default_cf);
        if !(center_fraction > 0.0 && center_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "center fraction {center_fraction} must lie in (0, 1)"
            )));
        }
        Ok(Self {
            coil_mode,
            accel,
            center_fraction,
        })
    }

    pub fn mask_for_case(&self, width: usize, case_id: &str, base_seed: u64) -> Result<SamplingMask> {
        make_mask(
            width,
            self.accel as f64,
            self.center_fraction,
            case_mask_seed(case_id, base_seed),
        )
    }
}

/// `(width, accel, center_fraction, seed)` of a mask fixture line.
pub type FixtureParams = (usize, f64, f64, u64);

/// Parses one fixture line: `width R center_fraction seed : i,j,k`.
pub fn parse_fixture_line(line: &str) -> Result<(FixtureParams, Vec<usize>)> {
    let bad = || Error::InvalidData(format!("malformed mask fixture line {line:?}"));
    let (lhs, rhs) = line.split_once(':').ok_or_else(bad)?;
    let fields: Vec<&str> = lhs.split_whitespace().collect();
    if fields.len() != 4 {
        return Err(bad());
    }
    let width = fields[0].parse().map_err(|_| bad())?;
    let accel = fields[1].parse().map_err(|_| bad())?;
    let cf = fields[2].parse().map_err(|_| bad())?;
    let seed = fields[3].parse().map_err(|_| bad())?;
    let rhs = rhs.trim();
    let indices = if rhs.is_empty() {
        Vec::new()
    } else {
        rhs.split(',')
            .map(|t| t.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    Ok(((width, accel, cf, seed), indices))
}

pub fn format_fixture_line(mask: &SamplingMask) -> String {
    let idx: Vec<String> = mask.selected().iter().map(|i| i.to_string()).collect();
    format!(
        "{} {} {} {} : {}",
        mask.width,
        mask.accel,
        mask.center_fraction,
        mask.seed,
        idx.join(",")
    )
}

/// Energy per column, summed over slices and coils.
pub fn column_energy(ksp: &KSpaceVolume) -> Vec<f64> {
    ksp.data()
        .axis_iter(Axis(3))
        .map(|col| col.iter().map(|z| (z.re as f64).powi(2) + (z.im as f64).powi(2)).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kspace::{CaseAttrs, Contrast};
    use ndarray::Array4;
    use proptest::prelude::*;

    #[test]
    fn r4_counts() {
        let m = make_mask(320, 4.0, 0.08, 1).unwrap();
        assert_eq!(m.count(), 80);
        let center = m.center_block();
        assert_eq!(center.len(), 26);
        assert!(center.clone().all(|i| m.lines()[i]));
        assert!(center.contains(&160));
    }

    #[test]
    fn r8_counts() {
        let m = make_mask(320, 8.0, 0.04, 5).unwrap();
        assert_eq!(m.count(), 40);
        assert_eq!(m.center_block().len(), 13);
    }

    #[test]
    fn no_acceleration_samples_everything() {
        let m = make_mask(37, 1.0, 0.0, 3).unwrap();
        assert!(m.lines().iter().all(|&b| b));
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = make_mask(320, 4.0, 0.08, 10).unwrap();
        let b = make_mask(320, 4.0, 0.08, 10).unwrap();
        let c = make_mask(320, 4.0, 0.08, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.lines(), c.lines());
        assert_eq!(a.count(), c.count());
    }

    #[test]
    fn infeasible_center_rejected() {
        assert!(matches!(make_mask(100, 8.0, 0.5, 0), Err(Error::MaskInfeasible(_))));
        assert!(matches!(make_mask(100, 0.5, 0.1, 0), Err(Error::MaskInfeasible(_))));
    }

    #[test]
    fn single_coil_track_only_at_r4() {
        assert!(TrackConfig::new(CoilMode::Single, 8, None).is_err());
        let t = TrackConfig::new(CoilMode::Single, 4, None).unwrap();
        assert_eq!(t.center_fraction, 0.08);
        assert_eq!(
            TrackConfig::new(CoilMode::Multi, 8, None).unwrap().center_fraction,
            0.04
        );
    }

    fn volume(w: usize) -> KSpaceVolume {
        let data = Array4::from_shape_fn((2, 3, 4, w), |(s, c, y, x)| {
            C32::new((s + c + y + x) as f32 + 1.0, (x * y) as f32 - 0.5)
        });
        KSpaceVolume::new(data, CaseAttrs::new("m", Contrast::PD, 3.0)).unwrap()
    }

    #[test]
    fn all_true_mask_is_identity() {
        let k = volume(16);
        let out = apply_mask(&k, &SamplingMask::all_true(16)).unwrap();
        assert_eq!(out.data(), k.data());
        assert!(out.attrs.extra.contains_key("mask"));
    }

    #[test]
    fn masking_is_idempotent_and_energy_decreasing() {
        let k = volume(32);
        let m = make_mask(32, 4.0, 0.125, 8).unwrap();
        let once = apply_mask(&k, &m).unwrap();
        let twice = apply_mask(&once, &m).unwrap();
        assert_eq!(once, twice);
        assert!(once.energy() < k.energy());
        for (x, e) in column_energy(&once).iter().enumerate() {
            if !m.lines()[x] {
                assert_eq!(*e, 0.0);
            }
        }
    }

    #[test]
    fn width_mismatch_rejected() {
        let k = volume(16);
        assert!(matches!(
            apply_mask(&k, &SamplingMask::all_true(15)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn mask_survives_attrs() {
        let k = volume(32);
        let m = make_mask(32, 4.0, 0.125, 8).unwrap();
        let out = apply_mask(&k, &m).unwrap();
        assert_eq!(SamplingMask::from_attrs(&out.attrs).unwrap().unwrap(), m);
    }

    #[test]
    fn fixture_line_round_trip() {
        let m = make_mask(64, 4.0, 0.08, 77).unwrap();
        let line = format_fixture_line(&m);
        let ((w, r, cf, seed), idx) = parse_fixture_line(&line).unwrap();
        assert_eq!((w, r, cf, seed), (64, 4.0, 0.08, 77));
        assert_eq!(idx, m.selected());
    }

    proptest! {
        #[test]
        fn counts_and_center_hold(width in 8usize..700, r_idx in 0usize..4, cf in 0.0f64..0.1, seed in any::<u64>()) {
            let accel = [1.0, 2.0, 4.0, 8.0][r_idx];
            let m = make_mask(width, accel, cf, seed);
            let n_total = (width as f64 / accel).round() as usize;
            let n_center = (cf * width as f64).round() as usize;
            prop_assume!(n_center <= n_total);
            let m = m.unwrap();
            prop_assert_eq!(m.count(), n_total);
            prop_assert!(m.center_block().all(|i| m.lines()[i]));
            // Sampled fraction within 1/width of 1/R.
            prop_assert!((m.count() as f64 / width as f64 - 1.0 / accel).abs() <= 1.0 / width as f64);
        }

        #[test]
        fn energy_equal_only_for_full_mask(seed in any::<u64>()) {
            let k = volume(24);
            let m = make_mask(24, 2.0, 0.1, seed).unwrap();
            let out = apply_mask(&k, &m).unwrap();
            prop_assert!(out.energy() < k.energy());
            let full = apply_mask(&k, &SamplingMask::all_true(24)).unwrap();
            prop_assert_eq!(full.energy(), k.energy());
        }
    }
}
