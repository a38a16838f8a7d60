//! Small dense Levenberg-Marquardt solver.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) const MAX_ITERATIONS: usize = 200;
const STEP_TOL: f64 = 1e-8;
const MAX_DAMPING: f64 = 1e14;

#[derive(Debug, Clone)]
pub(crate) struct LmSolution {
    pub params: DVector<f64>,
    /// Sum of squared residuals at `params`.
    pub cost: f64,
    pub iterations: usize,
    /// JᵀJ at the solution.
    pub jtj: DMatrix<f64>,
    pub residuals: usize,
}

/// Minimise ½‖r(x)‖². `model` returns residuals and Jacobian, or `None`
/// where the model is undefined (such steps are rejected).
pub(crate) fn minimize<F>(x0: &[f64], mut model: F) -> Result<LmSolution>
where
    F: FnMut(&DVector<f64>) -> Option<(DVector<f64>, DMatrix<f64>)>,
{
    let mut x = DVector::from_column_slice(x0);
    let (mut r, mut j) = model(&x).ok_or_else(|| Error::Fit("model undefined at the initial guess".into()))?;
    let mut cost = r.norm_squared();
    if !cost.is_finite() {
        return Err(Error::Fit("non-finite residual at the initial guess".into()));
    }
    let mut lambda = 1e-3;
    for iteration in 1..=MAX_ITERATIONS {
        let jtj = j.transpose() * &j;
        let grad = j.transpose() * &r;
        let mut accepted = false;
        while lambda <= MAX_DAMPING {
            let mut a = jtj.clone();
            for k in 0..a.nrows() {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&grad))) else {
                lambda *= 10.0;
                continue;
            };
            let trial = &x + &step;
            match model(&trial) {
                Some((tr, tj)) if tr.norm_squared() < cost => {
                    let converged = step.norm() <= STEP_TOL * (x.norm() + STEP_TOL);
                    x = trial;
                    r = tr;
                    j = tj;
                    cost = r.norm_squared();
                    lambda = (lambda / 10.0).max(1e-12);
                    accepted = true;
                    if converged {
                        return Ok(solution(x, cost, iteration, &j));
                    }
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        if !accepted {
            // No downhill step at any damping: x is a minimum to working precision.
            return Ok(solution(x, cost, iteration, &j));
        }
    }
    Err(Error::FitDivergence {
        iterations: MAX_ITERATIONS,
        residual: cost,
    })
}

fn solution(params: DVector<f64>, cost: f64, iterations: usize, j: &DMatrix<f64>) -> LmSolution {
    LmSolution {
        params,
        cost,
        iterations,
        jtj: j.transpose() * j,
        residuals: j.nrows(),
    }
}
