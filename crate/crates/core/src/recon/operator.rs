use ndarray::{Array2, Array3, Axis, Zip};

use crate::kspace::{CenteredFft2, C64};
use crate::phantom::SensitivityMaps;

/// Multi-coil Cartesian forward model `A x = { M F (s_c * x) }_c`.
#[derive(Clone, Debug)]
pub struct SenseOperator {
    fft: CenteredFft2,
    maps: Array3<C64>,
    mask: Vec<f64>,
}

impl SenseOperator {
    /// `mask` holds one 0/1 weight per k-space column.
    pub fn new(maps: &SensitivityMaps, mask: Vec<f64>) -> Self {
        let (_, h, w) = maps.dim();
        assert_eq!(mask.len(), w, "mask width must match the maps");
        Self {
            fft: CenteredFft2::new(h, w),
            maps: maps.view().to_owned(),
            mask,
        }
    }

    pub fn ncoils(&self) -> usize {
        self.maps.len_of(Axis(0))
    }

    pub fn image_dim(&self) -> (usize, usize) {
        self.fft.dim()
    }

    fn apply_mask(&self, k: &mut Array2<C64>) {
        for mut row in k.axis_iter_mut(Axis(0)) {
            for (v, &m) in row.iter_mut().zip(self.mask.iter()) {
                *v *= m;
            }
        }
    }

    pub fn forward(&self, x: &Array2<C64>) -> Array3<C64> {
        self.coil_kspace(x, true)
    }

    /// Coil k-space of `x` on the full grid, without the sampling mask.
    pub fn forward_full(&self, x: &Array2<C64>) -> Array3<C64> {
        self.coil_kspace(x, false)
    }

    fn coil_kspace(&self, x: &Array2<C64>, masked: bool) -> Array3<C64> {
        let (h, w) = self.image_dim();
        let mut out = Array3::<C64>::zeros((self.ncoils(), h, w));
        for (mut o, s) in out.axis_iter_mut(Axis(0)).zip(self.maps.axis_iter(Axis(0))) {
            Zip::from(&mut o).and(&s).and(x).for_each(|o, &s, &x| *o = s * x);
            let mut k = o.to_owned();
            self.fft.forward(k.view_mut());
            if masked {
                self.apply_mask(&mut k);
            }
            o.assign(&k);
        }
        out
    }

    pub fn adjoint(&self, y: &Array3<C64>) -> Array2<C64> {
        let (h, w) = self.image_dim();
        let mut out = Array2::<C64>::zeros((h, w));
        for (yc, s) in y.axis_iter(Axis(0)).zip(self.maps.axis_iter(Axis(0))) {
            let mut k = yc.to_owned();
            self.apply_mask(&mut k);
            self.fft.inverse(k.view_mut());
            Zip::from(&mut out)
                .and(&s)
                .and(&k)
                .for_each(|o, &s, &v| *o += s.conj() * v);
        }
        out
    }

    /// Zeroes unsampled columns of measured data.
    pub fn mask_data(&self, y: &Array3<C64>) -> Array3<C64> {
        let mut out = y.clone();
        for mut coil in out.axis_iter_mut(Axis(0)) {
            for mut row in coil.axis_iter_mut(Axis(0)) {
                for (v, &m) in row.iter_mut().zip(self.mask.iter()) {
                    *v *= m;
                }
            }
        }
        out
    }
}

pub(crate) fn norm_sqr<'a, I: IntoIterator<Item = &'a C64>>(it: I) -> f64 {
    it.into_iter().map(|z| z.norm_sqr()).sum()
}

#[cfg(test)]
pub(crate) fn inner<'a>(a: impl IntoIterator<Item = &'a C64>, b: impl IntoIterator<Item = &'a C64>) -> C64 {
    a.into_iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use crate::sampling::{make_mask, mask_weights};

    fn rand_c(rng: &mut SplitMix64) -> C64 {
        C64::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0))
    }

    #[test]
    fn adjoint_identity_on_random_inputs() {
        let mut rng = SplitMix64::new(17);
        for &(nc, h, w) in &[(1, 16, 20), (4, 24, 32), (15, 33, 40)] {
            let maps = SensitivityMaps::new(Array3::from_shape_fn((nc, h, w), |_| rand_c(&mut rng))).unwrap();
            let mask = make_mask(w, 4.0, 0.1, 3).unwrap();
            let op = SenseOperator::new(&maps, mask_weights(&mask));
            let x = Array2::from_shape_fn((h, w), |_| rand_c(&mut rng));
            let y = Array3::from_shape_fn((nc, h, w), |_| rand_c(&mut rng));
            let lhs = inner(op.forward(&x).iter(), y.iter());
            let rhs = inner(x.iter(), op.adjoint(&y).iter());
            let scale = norm_sqr(x.iter()).sqrt() * norm_sqr(y.iter()).sqrt();
            assert!((lhs - rhs).norm() < 1e-6 * scale, "{lhs} vs {rhs}");
        }
    }
}
