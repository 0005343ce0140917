//! NMSE, PSNR and SSIM over magnitude volumes, and their per-contrast aggregation.
//!
//! Conventions, fixed for comparability across submissions:
//! - NMSE is the squared-norm ratio `||gt - pred||^2 / ||gt||^2` over the volume.
//! - PSNR uses the volume's ground-truth maximum as the data range and reports
//!   [`PSNR_CAP_DB`] for an exact match.
//! - SSIM uses a 7x7 uniform window, `K1 = 0.01`, `K2 = 0.03`, the ground-truth
//!   volume maximum as data range and sample (N-1) normalization of the window
//!   (co)variances. Only windows fully inside the slice count; the volume score is
//!   the mean over slices of the per-slice mean.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kspace::{Contrast, MagnitudeVolume};

pub const SSIM_WINDOW: usize = 7;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const PSNR_CAP_DB: f64 = 200.0;

fn check_dims(gt: &MagnitudeVolume, pred: &MagnitudeVolume) -> Result<()> {
    if gt.dim() != pred.dim() {
        let (a, b, c) = gt.dim();
        let (d, e, f) = pred.dim();
        return Err(Error::ShapeMismatch {
            expected: vec![a, b, c],
            actual: vec![d, e, f],
        });
    }
    Ok(())
}

fn sum_sq_diff(gt: &MagnitudeVolume, pred: &MagnitudeVolume) -> f64 {
    gt.view()
        .iter()
        .zip(pred.view().iter())
        .map(|(&g, &p)| (g as f64 - p as f64).powi(2))
        .sum()
}

pub fn nmse(gt: &MagnitudeVolume, pred: &MagnitudeVolume) -> Result<f64> {
    check_dims(gt, pred)?;
    let denom: f64 = gt.view().iter().map(|&g| (g as f64).powi(2)).sum();
    if denom == 0.0 {
        return Err(Error::DegenerateReference);
    }
    Ok(sum_sq_diff(gt, pred) / denom)
}

pub fn psnr(gt: &MagnitudeVolume, pred: &MagnitudeVolume) -> Result<f64> {
    check_dims(gt, pred)?;
    let data_range = gt.max() as f64;
    if data_range == 0.0 {
        return Err(Error::DegenerateReference);
    }
    let mse = sum_sq_diff(gt, pred) / gt.view().len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((20.0 * data_range.log10() - 10.0 * mse.log10()).min(PSNR_CAP_DB))
}

pub fn ssim(gt: &MagnitudeVolume, pred: &MagnitudeVolume) -> Result<f64> {
    check_dims(gt, pred)?;
    let (ns, h, w) = gt.dim();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::WindowTooLarge {
            height: h,
            width: w,
            window: SSIM_WINDOW,
        });
    }
    let data_range = gt.max() as f64;
    if data_range == 0.0 {
        return Err(Error::DegenerateReference);
    }
    let total: f64 = (0..ns)
        .map(|s| ssim_slice(gt.slice(s), pred.slice(s), data_range))
        .sum();
    Ok(total / ns as f64)
}

/// Sliding-window sums of `f(gt, pred)` over every valid window, separably.
fn window_sums(gt: ArrayView2<'_, f32>, pred: ArrayView2<'_, f32>, f: impl Fn(f64, f64) -> f64) -> Array2<f64> {
    let (h, w) = gt.dim();
    let k = SSIM_WINDOW;
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = Array2::<f64>::zeros((h, ow));
    for y in 0..h {
        let vals: Vec<f64> = (0..w).map(|x| f(gt[[y, x]] as f64, pred[[y, x]] as f64)).collect();
        for x in 0..ow {
            rows[[y, x]] = vals[x..x + k].iter().sum();
        }
    }
    let mut out = Array2::<f64>::zeros((oh, ow));
    for y in 0..oh {
        for x in 0..ow {
            out[[y, x]] = (y..y + k).map(|yy| rows[[yy, x]]).sum();
        }
    }
    out
}

fn ssim_slice(gt: ArrayView2<'_, f32>, pred: ArrayView2<'_, f32>, data_range: f64) -> f64 {
    let np = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let cov_norm = np / (np - 1.0);
    let c1 = (SSIM_K1 * data_range).powi(2);
    let c2 = (SSIM_K2 * data_range).powi(2);

    let sx = window_sums(gt, pred, |g, _| g);
    let sy = window_sums(gt, pred, |_, p| p);
    let sxx = window_sums(gt, pred, |g, _| g * g);
    let syy = window_sums(gt, pred, |_, p| p * p);
    let sxy = window_sums(gt, pred, |g, p| g * p);

    let mut acc = 0.0;
    for i in 0..sx.len() {
        let (ux, uy) = (sx.as_slice().unwrap()[i] / np, sy.as_slice().unwrap()[i] / np);
        let vx = cov_norm * (sxx.as_slice().unwrap()[i] / np - ux * ux);
        let vy = cov_norm * (syy.as_slice().unwrap()[i] / np - uy * uy);
        let vxy = cov_norm * (sxy.as_slice().unwrap()[i] / np - ux * uy);
        let num = (2.0 * ux * uy + c1) * (2.0 * vxy + c2);
        let den = (ux * ux + uy * uy + c1) * (vx + vy + c2);
        acc += num / den;
    }
    acc / sx.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeMetrics {
    pub nmse: f64,
    pub psnr: f64,
    pub ssim: f64,
}

pub fn score_volume(gt: &MagnitudeVolume, pred: &MagnitudeVolume) -> Result<VolumeMetrics> {
    Ok(VolumeMetrics {
        nmse: nmse(gt, pred)?,
        psnr: psnr(gt, pred)?,
        ssim: ssim(gt, pred)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub nmse: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub n_volumes: usize,
}

impl MetricSummary {
    fn mean_of(values: &[VolumeMetrics]) -> Self {
        let n = values.len() as f64;
        Self {
            nmse: values.iter().map(|v| v.nmse).sum::<f64>() / n,
            psnr: values.iter().map(|v| v.psnr).sum::<f64>() / n,
            ssim: values.iter().map(|v| v.ssim).sum::<f64>() / n,
            n_volumes: values.len(),
        }
    }
}

/// Unweighted means over volumes, overall and per contrast.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub nmse: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub n_volumes: usize,
    pub per_contrast: BTreeMap<Contrast, MetricSummary>,
}

impl MetricReport {
    pub fn from_volumes(per_volume: &[(Contrast, VolumeMetrics)]) -> Result<Self> {
        if per_volume.is_empty() {
            return Err(Error::InvalidData("no volumes to aggregate".into()));
        }
        let all: Vec<VolumeMetrics> = per_volume.iter().map(|(_, m)| *m).collect();
        let overall = MetricSummary::mean_of(&all);
        let mut per_contrast = BTreeMap::new();
        for c in Contrast::ALL {
            let vals: Vec<VolumeMetrics> = per_volume.iter().filter(|(k, _)| *k == c).map(|(_, m)| *m).collect();
            if !vals.is_empty() {
                per_contrast.insert(c, MetricSummary::mean_of(&vals));
            }
        }
        Ok(Self {
            nmse: overall.nmse,
            psnr: overall.psnr,
            ssim: overall.ssim,
            n_volumes: overall.n_volumes,
            per_contrast,
        })
    }
}

/// A ground-truth volume with its contrast.
#[derive(Clone, Debug)]
pub struct ReferenceVolume {
    pub contrast: Contrast,
    pub volume: MagnitudeVolume,
}

/// Scores every predicted case against its reference. Case sets must match exactly.
pub fn score_volume_set(
    references: &BTreeMap<String, ReferenceVolume>,
    predictions: &BTreeMap<String, MagnitudeVolume>,
) -> Result<MetricReport> {
    let missing: Vec<String> = references
        .keys()
        .filter(|k| !predictions.contains_key(*k))
        .cloned()
        .collect();
    let extra: Vec<String> = predictions
        .keys()
        .filter(|k| !references.contains_key(*k))
        .cloned()
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::SubmissionIncomplete { missing, extra });
    }
    let per_volume: Vec<(Contrast, VolumeMetrics)> = references
        .par_iter()
        .map(|(id, r)| Ok((r.contrast, score_volume(&r.volume, &predictions[id])?)))
        .collect::<Result<_>>()?;
    MetricReport::from_volumes(&per_volume)
}
