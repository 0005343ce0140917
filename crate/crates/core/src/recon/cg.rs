use ndarray::{Array2, Array3, Zip};

use super::operator::{norm_sqr, SenseOperator};
use crate::error::{Error, Result};
use crate::kspace::C64;

#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub image: Array2<C64>,
    /// Data residual `||A x_k - y||` for `k = 0, 1, ...`.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Least squares `min_x ||A x - y||^2` by conjugate gradients on the normal
/// equations (CGLS form, one forward and one adjoint per iteration).
///
/// Stops after `max_iters` or when `||A^H r|| / ||A^H y|| < tol`. A residual
/// more than ten times the best seen so far is reported as divergence.
pub fn cgls(op: &SenseOperator, y: &Array3<C64>, max_iters: usize, tol: f64) -> Result<CgOutcome> {
    let (h, w) = op.image_dim();
    let mut x = Array2::<C64>::zeros((h, w));
    let mut r = op.mask_data(y);
    let mut s = op.adjoint(&r);
    let mut p = s.clone();
    let mut gamma = norm_sqr(s.iter());
    let gamma0 = gamma;
    let mut residuals = vec![norm_sqr(r.iter()).sqrt()];
    let mut best = residuals[0];
    let mut converged = gamma0 == 0.0;
    let mut iterations = 0;

    while !converged && iterations < max_iters {
        let q = op.forward(&p);
        let delta = norm_sqr(q.iter());
        if delta == 0.0 {
            converged = true;
            break;
        }
        let alpha = gamma / delta;
        Zip::from(&mut x).and(&p).for_each(|x, &p| *x += p * alpha);
        Zip::from(&mut r).and(&q).for_each(|r, &q| *r -= q * alpha);
        iterations += 1;

        let res = norm_sqr(r.iter()).sqrt();
        residuals.push(res);
        if !res.is_finite() || res > 10.0 * best {
            return Err(Error::SolverDiverged {
                iteration: iterations,
                residual: res,
                best,
            });
        }
        best = best.min(res);

        s = op.adjoint(&r);
        let gamma_next = norm_sqr(s.iter());
        if (gamma_next / gamma0).sqrt() < tol {
            converged = true;
        }
        let beta = gamma_next / gamma;
        Zip::from(&mut p).and(&s).for_each(|p, &s| *p = s + *p * beta);
        gamma = gamma_next;
    }

    Ok(CgOutcome {
        image: x,
        residuals,
        iterations,
        converged,
    })
}
