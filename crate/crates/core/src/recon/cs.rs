use ndarray::{Array2, Array3, Zip};
use serde::{Deserialize, Serialize};

use super::operator::{norm_sqr, SenseOperator};
use super::tv::{total_variation, tv_prox, TvDual};
use crate::kspace::C64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsMode {
    /// Plain proximal gradient. A step that raises the objective (possible only
    /// through the inexact inner prox) is rejected and retried from the same
    /// point with the warm dual, so the accepted objective never increases.
    Ista,
    /// Accelerated proximal gradient with Nesterov momentum; not monotone.
    Fista,
}

#[derive(Clone, Debug)]
pub struct CsParams {
    /// Absolute TV weight.
    pub lambda: f64,
    pub step: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub inner_iters: usize,
    pub mode: CsMode,
}

#[derive(Clone, Debug)]
pub struct CsOutcome {
    /// Lowest-objective iterate.
    pub image: Array2<C64>,
    /// Objective of the current iterate after each outer iteration, starting
    /// with the initial point.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn objective(residual: &Array3<C64>, x: &Array2<C64>, lambda: f64) -> f64 {
    0.5 * norm_sqr(residual.iter()) + lambda * total_variation(x)
}

fn residual(op: &SenseOperator, x: &Array2<C64>, y: &Array3<C64>) -> Array3<C64> {
    let mut r = op.forward(x);
    Zip::from(&mut r).and(y).for_each(|r, &y| *r -= y);
    r
}

fn relative_change(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    let diff: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm_sqr()).sum();
    let base = norm_sqr(b.iter()).max(f64::MIN_POSITIVE);
    (diff / base).sqrt()
}

/// `min_x 0.5 ||A x - y||^2 + lambda * TV(x)`, starting from `A^H y`.
pub fn proximal_tv(op: &SenseOperator, y: &Array3<C64>, params: &CsParams) -> CsOutcome {
    let y = op.mask_data(y);
    let (h, w) = op.image_dim();
    let mut dual = TvDual::zeros(h, w);
    let t = params.step * params.lambda;

    let mut x = op.adjoint(&y);
    let mut r = residual(op, &x, &y);
    let mut obj = objective(&r, &x, params.lambda);
    let mut objective_trace = vec![obj];
    let mut best = (obj, x.clone());
    let mut converged = false;
    let mut iterations = 0;

    // FISTA state.
    let mut z = x.clone();
    let mut momentum = 1.0f64;

    while iterations < params.max_iters {
        iterations += 1;
        let grad_point_residual = match params.mode {
            CsMode::Ista => r.clone(),
            CsMode::Fista => residual(op, &z, &y),
        };
        let base = match params.mode {
            CsMode::Ista => &x,
            CsMode::Fista => &z,
        };
        let grad = op.adjoint(&grad_point_residual);
        let mut v = base.clone();
        Zip::from(&mut v).and(&grad).for_each(|v, &g| *v -= g * params.step);
        let candidate = tv_prox(&v, t, params.inner_iters, &mut dual);
        let cand_r = residual(op, &candidate, &y);
        let cand_obj = objective(&cand_r, &candidate, params.lambda);
        let change = relative_change(&candidate, &x);

        match params.mode {
            CsMode::Ista => {
                if cand_obj <= obj {
                    x = candidate;
                    r = cand_r;
                    obj = cand_obj;
                }
            }
            CsMode::Fista => {
                let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
                let beta = (momentum - 1.0) / next;
                z = candidate.clone();
                Zip::from(&mut z).and(&x).for_each(|z, &xp| *z += (*z - xp) * beta);
                momentum = next;
                x = candidate;
                r = cand_r;
                obj = cand_obj;
            }
        }
        objective_trace.push(obj);
        if obj < best.0 {
            best = (obj, x.clone());
        }
        if change < params.tol {
            converged = true;
            break;
        }
    }

    CsOutcome {
        image: best.1,
        objective: objective_trace,
        iterations,
        converged,
    }
}
