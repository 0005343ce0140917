use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, Array3, Array4, Axis};
use serde::{Deserialize, Serialize};

use super::{CenteredFft2, CoilImages, KSpaceVolume, C32, C64};
use crate::error::{Error, Result};

/// `sqrt(sum_c |coil_c|^2)` per pixel.
pub fn rss_combine(coils: &CoilImages) -> Array2<f64> {
    let view = coils.view();
    let (_, h, w) = view.dim();
    let mut acc = Array2::<f64>::zeros((h, w));
    for coil in view.axis_iter(Axis(0)) {
        acc.zip_mut_with(&coil, |a, z| *a += z.norm_sqr());
    }
    acc.mapv_inplace(f64::sqrt);
    acc
}

/// Inverse-transforms one slice of coil k-space into coil images.
pub(crate) fn coil_images(fft: &CenteredFft2, kspace: &Array3<C64>) -> Array3<C64> {
    let mut imgs = kspace.clone();
    for coil in imgs.axis_iter_mut(Axis(0)) {
        fft.inverse(coil);
    }
    imgs
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VirtualCoilMethod {
    /// Least-squares fit against the phased RSS target.
    LeastSquares,
    /// Dominant right singular vector, used when the least-squares fit is unusable.
    DominantSingularFallback,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VirtualCoilFit {
    pub weights: Vec<C64>,
    pub method: VirtualCoilMethod,
    /// Numerical rank of the coil Gram matrix.
    pub rank: usize,
}

impl VirtualCoilFit {
    fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "method": self.method,
            "rank": self.rank,
            "weights_re": self.weights.iter().map(|w| w.re).collect::<Vec<_>>(),
            "weights_im": self.weights.iter().map(|w| w.im).collect::<Vec<_>>(),
        })
    }
}

const RANK_TOL: f64 = 1e-12;

struct GramDecomposition {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<C64>,
    lambda_max: f64,
    dominant: DVector<C64>,
}

fn decompose_gram(ksp: &KSpaceVolume, fft: &CenteredFft2) -> Result<GramDecomposition> {
    let nc = ksp.ncoils();
    let mut gram = DMatrix::<C64>::zeros(nc, nc);
    for s in 0..ksp.nslices() {
        let imgs = coil_images(fft, &ksp.slice_f64(s));
        for i in 0..nc {
            let ci = imgs.index_axis(Axis(0), i);
            for j in i..nc {
                let cj = imgs.index_axis(Axis(0), j);
                let g: C64 = ci.iter().zip(cj.iter()).map(|(a, b)| a.conj() * b).sum();
                gram[(i, j)] += g;
                if i != j {
                    gram[(j, i)] += g.conj();
                }
            }
        }
    }
    let eig = gram.symmetric_eigen();
    let eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let (imax, &lambda_max) = eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("at least one coil");
    if !(lambda_max.is_finite() && lambda_max > 0.0) {
        return Err(Error::FitDegenerate(format!(
            "coil Gram matrix has no positive eigenvalue (max {lambda_max:e})"
        )));
    }
    let dominant = eig.eigenvectors.column(imax).into_owned();
    Ok(GramDecomposition {
        eigenvalues,
        eigenvectors: eig.eigenvectors,
        lambda_max,
        dominant,
    })
}

/// Fits one complex weight per coil so that `|sum_c w_c img_c|` tracks the RSS image.
///
/// The phase of the target is taken from the dominant singular combination of the
/// coils; the magnitude is the RSS. The resulting linear least-squares problem
/// `min_w ||A w - rss * exp(i phase)||` is solved over all slices at once with the
/// minimum-norm solution, so coils that carry no signal get zero weight.
pub fn fit_virtual_coil_weights(ksp: &KSpaceVolume) -> Result<VirtualCoilFit> {
    if ksp.ncoils() < 2 {
        return Err(Error::NotApplicable(
            "virtual single coil needs at least two coils".into(),
        ));
    }
    let fft = CenteredFft2::new(ksp.height(), ksp.width());
    let gram = decompose_gram(ksp, &fft)?;
    least_squares_weights(ksp, &fft, &gram)
}

fn least_squares_weights(ksp: &KSpaceVolume, fft: &CenteredFft2, gram: &GramDecomposition) -> Result<VirtualCoilFit> {
    let nc = ksp.ncoils();
    let mut rhs = DVector::<C64>::zeros(nc);
    for s in 0..ksp.nslices() {
        let imgs = coil_images(fft, &ksp.slice_f64(s));
        let (_, h, w) = imgs.dim();
        for y in 0..h {
            for x in 0..w {
                let mut z = C64::default();
                let mut rss2 = 0.0;
                for c in 0..nc {
                    let v = imgs[[c, y, x]];
                    z += v * gram.dominant[c];
                    rss2 += v.norm_sqr();
                }
                let norm = z.norm();
                let phase = if norm > 0.0 { z / norm } else { C64::new(1.0, 0.0) };
                let target = phase * rss2.sqrt();
                for c in 0..nc {
                    rhs[c] += imgs[[c, y, x]].conj() * target;
                }
            }
        }
    }

    let mut weights = DVector::<C64>::zeros(nc);
    let mut rank = 0;
    for (k, &lambda) in gram.eigenvalues.iter().enumerate() {
        if lambda > RANK_TOL * gram.lambda_max {
            let u = gram.eigenvectors.column(k);
            let coef = u.dotc(&rhs) / lambda;
            weights += u * coef;
            rank += 1;
        }
    }
    if weights.iter().any(|w| !(w.re.is_finite() && w.im.is_finite())) {
        return Err(Error::FitDegenerate("non-finite least-squares weights".into()));
    }
    Ok(VirtualCoilFit {
        weights: weights.iter().copied().collect(),
        method: VirtualCoilMethod::LeastSquares,
        rank,
    })
}

/// Emulates a single-channel acquisition as `sum_c w_c k_c` and records the
/// weights under the `virtual_coil` attribute.
pub fn virtual_single_coil(ksp: &KSpaceVolume) -> Result<(KSpaceVolume, VirtualCoilFit)> {
    if ksp.ncoils() < 2 {
        return Err(Error::NotApplicable(
            "virtual single coil needs at least two coils".into(),
        ));
    }
    let fft = CenteredFft2::new(ksp.height(), ksp.width());
    let gram = decompose_gram(ksp, &fft)?;
    let fit = match least_squares_weights(ksp, &fft, &gram) {
        Ok(fit) => fit,
        Err(Error::FitDegenerate(_)) => VirtualCoilFit {
            weights: gram.dominant.iter().copied().collect(),
            method: VirtualCoilMethod::DominantSingularFallback,
            rank: gram
                .eigenvalues
                .iter()
                .filter(|&&l| l > RANK_TOL * gram.lambda_max)
                .count(),
        },
        Err(e) => return Err(e),
    };

    let (ns, nc, h, w) = ksp.dim();
    let data = ksp.data();
    let out = Array4::from_shape_fn((ns, 1, h, w), |(s, _, y, x)| {
        let mut acc = C64::default();
        for c in 0..nc {
            let v = data[[s, c, y, x]];
            acc += fit.weights[c] * C64::new(v.re as f64, v.im as f64);
        }
        C32::new(acc.re as f32, acc.im as f32)
    });
    let mut attrs = ksp.attrs.clone();
    attrs.extra.insert("virtual_coil".into(), fit.to_json());
    Ok((KSpaceVolume::new(out, attrs)?, fit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kspace::{CaseAttrs, Contrast};
    use crate::rng::SplitMix64;

    fn random_coils(nc: usize, h: usize, w: usize, seed: u64) -> Array3<C64> {
        let mut rng = SplitMix64::new(seed);
        Array3::from_shape_fn((nc, h, w), |_| C64::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)))
    }

    #[test]
    fn rss_of_single_constant_coil() {
        let coils = Array3::from_elem((1, 3, 4), C64::new(3.0, 4.0));
        let out = rss_combine(&CoilImages::new(coils).unwrap());
        assert!(out.iter().all(|&v| (v - 5.0).abs() < 1e-12));
    }

    #[test]
    fn rss_of_two_constant_coils() {
        let mut coils = Array3::from_elem((2, 2, 2), C64::new(3.0, 0.0));
        coils.index_axis_mut(Axis(0), 1).fill(C64::new(0.0, 4.0));
        let out = rss_combine(&CoilImages::new(coils).unwrap());
        assert!(out.iter().all(|&v| (v - 5.0).abs() < 1e-12));
    }

    #[test]
    fn rss_matches_scalar_loop() {
        let coils = random_coils(15, 17, 23, 3);
        let out = rss_combine(&CoilImages::new(coils.clone()).unwrap());
        for y in 0..17 {
            for x in 0..23 {
                let mut s = 0.0;
                for c in 0..15 {
                    let z = coils[[c, y, x]];
                    s += z.re * z.re + z.im * z.im;
                }
                assert!((out[[y, x]] - s.sqrt()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn empty_coil_axis_rejected() {
        let coils = Array3::<C64>::zeros((0, 4, 4));
        assert!(matches!(CoilImages::new(coils), Err(Error::InvalidData(_))));
    }

    fn kspace_from_images(imgs: &Array3<C64>, nslices: usize) -> KSpaceVolume {
        let (nc, h, w) = imgs.dim();
        let fft = CenteredFft2::new(h, w);
        let mut k = imgs.clone();
        for coil in k.axis_iter_mut(Axis(0)) {
            fft.forward(coil);
        }
        let data = Array4::from_shape_fn((nslices, nc, h, w), |(_, c, y, x)| {
            let z = k[[c, y, x]];
            C32::new(z.re as f32, z.im as f32)
        });
        KSpaceVolume::new(data, CaseAttrs::new("vc", Contrast::PD, 3.0)).unwrap()
    }

    fn smooth_coils(nc: usize, h: usize, w: usize) -> Array3<C64> {
        Array3::from_shape_fn((nc, h, w), |(c, y, x)| {
            let obj = if (y as f64 - h as f64 / 2.0).abs() < h as f64 / 3.0 {
                1.0
            } else {
                0.2
            };
            let phase = 0.3 * c as f64 + 0.05 * x as f64 + 0.02 * (c * y) as f64;
            let mag = 1.0 + 0.5 * ((c as f64 + 1.0) * x as f64 / w as f64).cos();
            C64::from_polar(obj * mag, phase)
        })
    }

    fn single_coil_image(ksp: &KSpaceVolume) -> Array2<f64> {
        let fft = CenteredFft2::new(ksp.height(), ksp.width());
        let imgs = coil_images(&fft, &ksp.slice_f64(0));
        imgs.index_axis(Axis(0), 0).mapv(|z| z.norm())
    }

    #[test]
    fn zero_coil_contributes_nothing() {
        let base = smooth_coils(3, 16, 12);
        let mut with_zero = Array3::<C64>::zeros((4, 16, 12));
        for c in 0..3 {
            with_zero
                .index_axis_mut(Axis(0), c)
                .assign(&base.index_axis(Axis(0), c));
        }
        let (a, fit_a) = virtual_single_coil(&kspace_from_images(&with_zero, 1)).unwrap();
        let (b, _) = virtual_single_coil(&kspace_from_images(&base, 1)).unwrap();
        assert!(fit_a.weights[3].norm() < 1e-9);
        for (za, zb) in a.data().iter().zip(b.data().iter()) {
            assert!((za - zb).norm() < 1e-9 * (1.0 + zb.norm()) + 1e-6);
        }
    }

    #[test]
    fn identical_coils_reproduce_scaled_rss() {
        let one = smooth_coils(1, 10, 14);
        let mut two = Array3::<C64>::zeros((2, 10, 14));
        two.index_axis_mut(Axis(0), 0).assign(&one.index_axis(Axis(0), 0));
        two.index_axis_mut(Axis(0), 1).assign(&one.index_axis(Axis(0), 0));
        let (out, fit) = virtual_single_coil(&kspace_from_images(&two, 1)).unwrap();
        assert_eq!(fit.rank, 1);
        let mag = single_coil_image(&out);
        for ((y, x), &m) in mag.indexed_iter() {
            let expected = 2f64.sqrt() * one[[0, y, x]].norm();
            assert!((m - expected).abs() < 1e-6 * (1.0 + expected), "{m} vs {expected}");
        }
    }

    #[test]
    fn weights_recorded_and_output_is_single_coil() {
        let imgs = random_coils(4, 8, 8, 11);
        let (out, fit) = virtual_single_coil(&kspace_from_images(&imgs, 2)).unwrap();
        assert_eq!(out.ncoils(), 1);
        assert_eq!(out.nslices(), 2);
        let rec = &out.attrs.extra["virtual_coil"];
        assert_eq!(rec["weights_re"].as_array().unwrap().len(), 4);
        assert_eq!(fit.method, VirtualCoilMethod::LeastSquares);
        assert_eq!(fit.rank, 4);
    }

    #[test]
    fn all_zero_data_is_degenerate() {
        let imgs = Array3::<C64>::zeros((3, 4, 4));
        assert!(matches!(
            fit_virtual_coil_weights(&kspace_from_images(&imgs, 1)),
            Err(Error::FitDegenerate(_))
        ));
    }

    #[test]
    fn single_coil_input_not_applicable() {
        let imgs = random_coils(1, 4, 4, 1);
        assert!(matches!(
            virtual_single_coil(&kspace_from_images(&imgs, 1)),
            Err(Error::NotApplicable(_))
        ));
    }
}
