//! Baseline reconstructions: zero-filled inverse FFT, CG-SENSE and
//! TV-regularized compressed sensing.
//!
//! The iterative methods work slice by slice (in parallel across slices) on
//! the full-FOV image and return the magnitude cropped to 320x320.

mod cg;
mod cs;
mod operator;
mod sensitivity;
mod tv;

use ndarray::{Array2, Array3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kspace::{
    center_crop, coil_images, rss_combine, CenteredFft2, CoilImages, KSpaceVolume, MagnitudeVolume, C64, CROP_SIZE,
};
use crate::phantom::SensitivityMaps;
use crate::sampling::{mask_weights, SamplingMask};

pub use cg::{cgls, CgOutcome};
pub use cs::{proximal_tv, CsMode, CsOutcome, CsParams};
pub use operator::SenseOperator;
pub use sensitivity::{estimate_sensitivities, estimate_sensitivities_cropped, SENSITIVITY_EPS};
pub use tv::{divergence, gradient, total_variation, tv_prox, TvDual};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconMethod {
    ZeroFilled,
    CsTv,
    CgSense,
}

impl ReconMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ReconMethod::ZeroFilled => "zero_filled",
            ReconMethod::CsTv => "cs_tv",
            ReconMethod::CgSense => "cg_sense",
        }
    }
}

impl std::fmt::Display for ReconMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ReconMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero_filled" => Ok(ReconMethod::ZeroFilled),
            "cs_tv" => Ok(ReconMethod::CsTv),
            "cg_sense" => Ok(ReconMethod::CgSense),
            other => Err(Error::InvalidConfig(format!("unknown recon method {other:?}"))),
        }
    }
}

/// Default relative TV weight; see `examples/lambda_sweep.rs`.
pub const DEFAULT_LAMBDA_TV: f64 = 2e-4;
pub const DEFAULT_CG_ITERS: usize = 4;
pub const DEFAULT_CS_ITERS: usize = 50;
pub const DEFAULT_MAP_FLOOR: f64 = 0.15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconConfig {
    pub method: ReconMethod,
    /// TV weight relative to the data scale, the l2 norm of the measured
    /// samples of a slice. The absolute weight is `lambda_tv * ||y||`.
    pub lambda_tv: f64,
    /// Outer iteration cap; `None` picks the method default (CG-SENSE stops
    /// early, which regularizes its noise amplification).
    pub max_iters: Option<usize>,
    pub tol: f64,
    /// Proximal-gradient step; `None` means `1/L` with `L = 1`, the bound for
    /// an orthonormal FFT and maps with unit RSS.
    pub step_size: Option<f64>,
    pub cs_mode: CsMode,
    pub tv_inner_iters: usize,
    /// Re-insert the measured samples into the coil k-space predicted by the
    /// solution and combine with RSS, as the reference is. When false the
    /// output is `|x|`.
    pub data_consistency: bool,
    /// Coil maps estimated by [`reconstruct`] are zeroed where the calibration
    /// RSS is below this fraction of its peak.
    pub map_floor: f64,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            method: ReconMethod::ZeroFilled,
            lambda_tv: DEFAULT_LAMBDA_TV,
            max_iters: None,
            tol: 1e-4,
            step_size: None,
            cs_mode: CsMode::Fista,
            tv_inner_iters: 20,
            data_consistency: true,
            map_floor: DEFAULT_MAP_FLOOR,
        }
    }
}

impl ReconConfig {
    pub fn new(method: ReconMethod) -> Self {
        Self {
            method,
            ..Default::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.lambda_tv >= 0.0 && self.lambda_tv.is_finite()) {
            return bad(format!("lambda_tv must be finite and >= 0, got {}", self.lambda_tv));
        }
        if self.method == ReconMethod::CsTv && self.lambda_tv <= 0.0 {
            return bad("cs_tv requires lambda_tv > 0".into());
        }
        if self.max_iters == Some(0) {
            return bad("max_iters must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.map_floor) {
            return bad(format!("map_floor must lie in [0, 1), got {}", self.map_floor));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return bad(format!("tol must be > 0, got {}", self.tol));
        }
        if let Some(s) = self.step_size {
            if !(s > 0.0 && s <= 2.0) {
                return bad(format!("step_size must lie in (0, 2], got {s}"));
            }
        }
        Ok(())
    }

    pub fn iterations(&self) -> usize {
        self.max_iters.unwrap_or(match self.method {
            ReconMethod::CgSense => DEFAULT_CG_ITERS,
            _ => DEFAULT_CS_ITERS,
        })
    }

    pub fn step(&self) -> f64 {
        self.step_size.unwrap_or(1.0)
    }
}

/// A reconstructed volume plus solver diagnostics destined for the
/// reconstruction file's attributes.
#[derive(Clone, Debug)]
pub struct ReconOutput {
    pub volume: MagnitudeVolume,
    pub attrs: serde_json::Map<String, serde_json::Value>,
}

fn crop_magnitude(x: &Array2<C64>) -> Result<Array2<f64>> {
    center_crop(x.mapv(|z| z.norm()).view(), CROP_SIZE, CROP_SIZE)
}

/// Coil k-space of `x` with the sampled columns replaced by `y`, then
/// per-coil inverse FFT, RSS and crop.
fn consistent_rss(op: &SenseOperator, x: &Array2<C64>, y: &Array3<C64>, mask: &[f64]) -> Result<Array2<f64>> {
    let mut k = op.forward_full(x);
    for (mut kc, yc) in k.outer_iter_mut().zip(y.outer_iter()) {
        for (mut row, yrow) in kc.outer_iter_mut().zip(yc.outer_iter()) {
            for ((v, &m), &yv) in row.iter_mut().zip(mask).zip(yrow.iter()) {
                if m > 0.0 {
                    *v = yv;
                }
            }
        }
    }
    let (h, w) = op.image_dim();
    let imgs = coil_images(&CenteredFft2::new(h, w), &k);
    center_crop(rss_combine(&CoilImages::new(imgs)?).view(), CROP_SIZE, CROP_SIZE)
}

fn finish(
    op: &SenseOperator,
    x: &Array2<C64>,
    y: &Array3<C64>,
    mask: &[f64],
    cfg: &ReconConfig,
) -> Result<Array2<f64>> {
    if cfg.data_consistency {
        consistent_rss(op, x, y, mask)
    } else {
        crop_magnitude(x)
    }
}

/// ifft2c per coil, RSS, central crop.
pub fn zero_filled(ksp: &KSpaceVolume) -> Result<MagnitudeVolume> {
    let fft = CenteredFft2::new(ksp.height(), ksp.width());
    let slices = (0..ksp.nslices())
        .into_par_iter()
        .map(|s| {
            let imgs = coil_images(&fft, &ksp.slice_f64(s));
            center_crop(rss_combine(&CoilImages::new(imgs)?).view(), CROP_SIZE, CROP_SIZE)
        })
        .collect::<Result<Vec<_>>>()?;
    MagnitudeVolume::from_slices(&slices)
}

fn check_maps(ksp: &KSpaceVolume, mask: &SamplingMask, maps: &[SensitivityMaps]) -> Result<()> {
    if mask.width != ksp.width() {
        return Err(Error::ShapeMismatch {
            expected: vec![ksp.width()],
            actual: vec![mask.width],
        });
    }
    if maps.len() != ksp.nslices() {
        return Err(Error::ShapeMismatch {
            expected: vec![ksp.nslices()],
            actual: vec![maps.len()],
        });
    }
    let want = (ksp.ncoils(), ksp.height(), ksp.width());
    for m in maps {
        if m.dim() != want {
            let (c, h, w) = m.dim();
            return Err(Error::ShapeMismatch {
                expected: vec![want.0, want.1, want.2],
                actual: vec![c, h, w],
            });
        }
    }
    Ok(())
}

/// SENSE by CGLS on `min_x sum_c ||M F (s_c x) - y_c||^2`, one solve per slice.
pub fn cg_sense(
    ksp: &KSpaceVolume,
    mask: &SamplingMask,
    maps: &[SensitivityMaps],
    cfg: &ReconConfig,
) -> Result<ReconOutput> {
    cfg.validate()?;
    if ksp.ncoils() < 2 {
        return Err(Error::NotApplicable("cg_sense requires multi-coil input".into()));
    }
    check_maps(ksp, mask, maps)?;
    let weights = mask_weights(mask);
    let outcomes = (0..ksp.nslices())
        .into_par_iter()
        .map(|s| {
            let op = SenseOperator::new(&maps[s], weights.clone());
            let y = ksp.slice_f64(s);
            let out = cgls(&op, &y, cfg.iterations(), cfg.tol)?;
            Ok((finish(&op, &out.image, &y, &weights, cfg)?, out))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut attrs = serde_json::Map::new();
    attrs.insert("recon_method".into(), ReconMethod::CgSense.as_str().into());
    attrs.insert(
        "cg".into(),
        serde_json::Value::Array(
            outcomes
                .iter()
                .map(|(_, o)| {
                    serde_json::json!({
                        "iterations": o.iterations,
                        "converged": o.converged,
                        "residuals": o.residuals,
                    })
                })
                .collect(),
        ),
    );
    let slices: Vec<_> = outcomes.into_iter().map(|(m, _)| m).collect();
    Ok(ReconOutput {
        volume: MagnitudeVolume::from_slices(&slices)?,
        attrs,
    })
}

/// `min_x 0.5 ||A x - y||^2 + lambda * TV(x)` by proximal gradient, one solve
/// per slice. Single-coil data, or `maps = None`, uses the identity map.
///
/// If any slice stops at `max_iters` without meeting `tol`, its best iterate is
/// still returned and `attrs["warning"]` is set.
pub fn cs_tv(
    ksp: &KSpaceVolume,
    mask: &SamplingMask,
    cfg: &ReconConfig,
    maps: Option<&[SensitivityMaps]>,
) -> Result<ReconOutput> {
    let cfg = ReconConfig {
        method: ReconMethod::CsTv,
        ..cfg.clone()
    };
    cfg.validate()?;
    let identity;
    let maps = match maps {
        Some(m) => m,
        None => {
            if ksp.ncoils() != 1 {
                return Err(Error::InvalidConfig(
                    "cs_tv on multi-coil data needs sensitivity maps".into(),
                ));
            }
            identity = vec![SensitivityMaps::identity(ksp.height(), ksp.width()); ksp.nslices()];
            &identity[..]
        }
    };
    check_maps(ksp, mask, maps)?;
    let weights = mask_weights(mask);
    let outcomes = (0..ksp.nslices())
        .into_par_iter()
        .map(|s| {
            let op = SenseOperator::new(&maps[s], weights.clone());
            let y: Array3<C64> = op.mask_data(&ksp.slice_f64(s));
            let scale = operator::norm_sqr(y.iter()).sqrt();
            let params = CsParams {
                lambda: cfg.lambda_tv * scale,
                step: cfg.step(),
                max_iters: cfg.iterations(),
                tol: cfg.tol,
                inner_iters: cfg.tv_inner_iters,
                mode: cfg.cs_mode,
            };
            let out = proximal_tv(&op, &y, &params);
            Ok((finish(&op, &out.image, &y, &weights, &cfg)?, out))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut attrs = serde_json::Map::new();
    attrs.insert("recon_method".into(), ReconMethod::CsTv.as_str().into());
    let all_converged = outcomes.iter().all(|(_, o)| o.converged);
    if !all_converged {
        attrs.insert(
            "warning".into(),
            format!(
                "cs_tv did not reach tol {} within {} iterations",
                cfg.tol,
                cfg.iterations()
            )
            .into(),
        );
    }
    attrs.insert(
        "cs".into(),
        serde_json::Value::Array(
            outcomes
                .iter()
                .map(|(_, o)| {
                    serde_json::json!({
                        "iterations": o.iterations,
                        "converged": o.converged,
                        "objective": o.objective,
                    })
                })
                .collect(),
        ),
    );
    let slices: Vec<_> = outcomes.into_iter().map(|(m, _)| m).collect();
    Ok(ReconOutput {
        volume: MagnitudeVolume::from_slices(&slices)?,
        attrs,
    })
}

/// Sampled columns of an input: the recorded `mask` attribute if present,
/// otherwise every column holding a nonzero sample.
pub fn infer_mask(ksp: &KSpaceVolume) -> Result<SamplingMask> {
    if let Some(m) = SamplingMask::from_attrs(&ksp.attrs)? {
        return Ok(m);
    }
    let w = ksp.width();
    let data = ksp.data();
    let lines: Vec<bool> = (0..w)
        .map(|x| {
            data.slice(ndarray::s![.., .., .., x])
                .iter()
                .any(|v| v.re != 0.0 || v.im != 0.0)
        })
        .collect();
    SamplingMask::from_lines(lines)
}

/// Runs the configured method, estimating coil maps from the center block
/// when the method needs them.
pub fn reconstruct(ksp: &KSpaceVolume, cfg: &ReconConfig) -> Result<ReconOutput> {
    cfg.validate()?;
    match cfg.method {
        ReconMethod::ZeroFilled => {
            let mut attrs = serde_json::Map::new();
            attrs.insert("recon_method".into(), ReconMethod::ZeroFilled.as_str().into());
            Ok(ReconOutput {
                volume: zero_filled(ksp)?,
                attrs,
            })
        }
        ReconMethod::CgSense => {
            let mask = infer_mask(ksp)?;
            let maps = estimate_sensitivities_cropped(ksp, mask.center_fraction, cfg.map_floor)?;
            cg_sense(ksp, &mask, &maps, cfg)
        }
        ReconMethod::CsTv => {
            let mask = infer_mask(ksp)?;
            if ksp.ncoils() == 1 {
                cs_tv(ksp, &mask, cfg, None)
            } else {
                let maps = estimate_sensitivities_cropped(ksp, mask.center_fraction, cfg.map_floor)?;
                cs_tv(ksp, &mask, cfg, Some(&maps))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parses_and_validates() {
        let cfg = ReconConfig::from_toml("method = \"cs_tv\"\nlambda_tv = 0.01\ncs_mode = \"ista\"\n").unwrap();
        assert_eq!(cfg.method, ReconMethod::CsTv);
        assert_eq!(cfg.cs_mode, CsMode::Ista);
        assert_eq!(cfg.tv_inner_iters, 20);
        assert!(ReconConfig::from_toml("method = \"cs_tv\"\nlambda_tv = 0.0\n").is_err());
        assert!(ReconConfig::from_toml("max_iters = 0\n").is_err());
        assert!(ReconConfig::from_toml("tol = 0.0\n").is_err());
        assert!(ReconConfig::from_toml("lambda = 1.0\n").is_err());
        assert!(ReconConfig::from_toml("method = \"unet\"\n").is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in [ReconMethod::ZeroFilled, ReconMethod::CsTv, ReconMethod::CgSense] {
            assert_eq!(m.as_str().parse::<ReconMethod>().unwrap(), m);
        }
    }
}
