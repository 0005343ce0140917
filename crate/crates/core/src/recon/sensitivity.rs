use std::f64::consts::PI;

use ndarray::{Array3, Axis};

use crate::error::{Error, Result};
use crate::kspace::{coil_images, rss_combine, CenteredFft2, CoilImages, KSpaceVolume, C64};
use crate::phantom::SensitivityMaps;
use crate::sampling::center_block;

/// RSS floor below which an estimated map is set to zero.
pub const SENSITIVITY_EPS: f64 = 1e-8;

/// Raised-cosine taper over `n` columns, strictly positive at both ends.
fn raised_cosine(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * PI * (i + 1) as f64 / (n + 1) as f64).cos()))
        .collect()
}

/// Center-calibrated coil maps, one set per slice.
///
/// Each coil keeps only the fully sampled center columns, tapered with a raised
/// cosine, and is transformed back to the image domain; the maps are those
/// low-resolution coil images divided by their RSS.
pub fn estimate_sensitivities(ksp: &KSpaceVolume, center_fraction: f64) -> Result<Vec<SensitivityMaps>> {
    estimate_sensitivities_cropped(ksp, center_fraction, 0.0)
}

/// As [`estimate_sensitivities`], but maps are also zeroed wherever the
/// low-resolution RSS falls below `relative_floor` times its slice maximum,
/// which removes the empty background from the unknowns of a SENSE solve.
pub fn estimate_sensitivities_cropped(
    ksp: &KSpaceVolume,
    center_fraction: f64,
    relative_floor: f64,
) -> Result<Vec<SensitivityMaps>> {
    if ksp.ncoils() < 2 {
        return Err(Error::NotApplicable(
            "sensitivity estimation needs multi-coil data".into(),
        ));
    }
    let (_, _, h, w) = ksp.dim();
    let block = center_block(w, center_fraction);
    if block.is_empty() {
        return Err(Error::NotApplicable("no fully sampled center block".into()));
    }
    let taper = raised_cosine(block.len());
    let fft = CenteredFft2::new(h, w);
    (0..ksp.nslices())
        .map(|s| {
            let mut k = ksp.slice_f64(s);
            for mut coil in k.axis_iter_mut(Axis(0)) {
                for mut row in coil.axis_iter_mut(Axis(0)) {
                    for (x, v) in row.iter_mut().enumerate() {
                        *v = if block.contains(&x) {
                            *v * taper[x - block.start]
                        } else {
                            C64::default()
                        };
                    }
                }
            }
            let mut imgs: Array3<C64> = coil_images(&fft, &k);
            let rss = rss_combine(&CoilImages::new(imgs.clone())?);
            let peak = rss.iter().copied().fold(0.0, f64::max);
            let floor = SENSITIVITY_EPS.max(relative_floor * peak);
            for mut coil in imgs.axis_iter_mut(Axis(0)) {
                coil.zip_mut_with(&rss, |m, &r| {
                    *m = if r > floor { *m / r } else { C64::default() };
                });
            }
            SensitivityMaps::new(imgs)
        })
        .collect()
}
