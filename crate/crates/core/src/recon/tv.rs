//! Isotropic total variation on complex images: forward differences with a
//! zero difference across the last row/column (reflective boundary).

use ndarray::Array2;

use crate::kspace::C64;

/// Dual variable of the TV prox, one complex 2-vector per pixel.
#[derive(Clone, Debug)]
pub struct TvDual {
    py: Array2<C64>,
    px: Array2<C64>,
}

impl TvDual {
    pub fn zeros(h: usize, w: usize) -> Self {
        Self {
            py: Array2::zeros((h, w)),
            px: Array2::zeros((h, w)),
        }
    }
}

pub fn gradient(u: &Array2<C64>) -> (Array2<C64>, Array2<C64>) {
    let (h, w) = u.dim();
    let mut gy = Array2::<C64>::zeros((h, w));
    let mut gx = Array2::<C64>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            if y + 1 < h {
                gy[[y, x]] = u[[y + 1, x]] - u[[y, x]];
            }
            if x + 1 < w {
                gx[[y, x]] = u[[y, x + 1]] - u[[y, x]];
            }
        }
    }
    (gy, gx)
}

/// Negative adjoint of [`gradient`].
pub fn divergence(py: &Array2<C64>, px: &Array2<C64>) -> Array2<C64> {
    let (h, w) = py.dim();
    Array2::from_shape_fn((h, w), |(y, x)| {
        let dy = if h == 1 {
            C64::default()
        } else if y == 0 {
            py[[0, x]]
        } else if y == h - 1 {
            -py[[y - 1, x]]
        } else {
            py[[y, x]] - py[[y - 1, x]]
        };
        let dx = if w == 1 {
            C64::default()
        } else if x == 0 {
            px[[y, 0]]
        } else if x == w - 1 {
            -px[[y, x - 1]]
        } else {
            px[[y, x]] - px[[y, x - 1]]
        };
        dy + dx
    })
}

pub fn total_variation(u: &Array2<C64>) -> f64 {
    let (gy, gx) = gradient(u);
    gy.iter()
        .zip(gx.iter())
        .map(|(a, b)| (a.norm_sqr() + b.norm_sqr()).sqrt())
        .sum()
}

/// `argmin_u 0.5 ||u - v||^2 + weight * TV(u)` by projected gradient on the dual
/// (step `1 / 8`), warm-started from and writing back to `dual`.
pub fn tv_prox(v: &Array2<C64>, weight: f64, iterations: usize, dual: &mut TvDual) -> Array2<C64> {
    if weight <= 0.0 {
        return v.clone();
    }
    let step = 1.0 / (8.0 * weight);
    for _ in 0..iterations {
        let mut u = divergence(&dual.py, &dual.px);
        u.zip_mut_with(v, |d, &vv| *d = vv + *d * weight);
        let (gy, gx) = gradient(&u);
        for (((py, px), gy), gx) in dual.py.iter_mut().zip(dual.px.iter_mut()).zip(gy.iter()).zip(gx.iter()) {
            let ny = *py + gy * step;
            let nx = *px + gx * step;
            let n = (ny.norm_sqr() + nx.norm_sqr()).sqrt().max(1.0);
            *py = ny / n;
            *px = nx / n;
        }
    }
    let mut u = divergence(&dual.py, &dual.px);
    u.zip_mut_with(v, |d, &vv| *d = vv + *d * weight);
    u
}
