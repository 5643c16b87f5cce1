//! Small damped Gauss–Newton (Levenberg–Marquardt) solver shared by the
//! force and fluid calibrations. Parameter counts here are tiny, so the
//! Jacobian is taken by central differences and the normal equations are
//! solved densely.

use nalgebra::{DMatrix, DVector};

use crate::error::{EpmError, Result};

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Relative step size below which the iteration is considered converged.
    pub step_tolerance: f64,
    /// Relative cost decrease below which an accepted step counts as converged.
    pub cost_tolerance: f64,
    pub initial_damping: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            step_tolerance: 1e-12,
            cost_tolerance: 1e-15,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub params: Vec<f64>,
    pub rmse: f64,
    pub iterations: usize,
}

/// Box bounds for each parameter. Trial points are projected onto the box.
#[derive(Debug, Clone)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    fn project(&self, p: &mut [f64]) {
        for (i, v) in p.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }
}

fn cost(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

fn jacobian<F>(f: &F, p: &[f64], r0: &[f64], bounds: &Bounds) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let m = r0.len();
    let n = p.len();
    let mut jac = DMatrix::zeros(m, n);
    for j in 0..n {
        let h = 1e-6 * p[j].abs().max(1e-6);
        let mut hi = p.to_vec();
        let mut lo = p.to_vec();
        hi[j] = (p[j] + h).min(bounds.upper[j]);
        lo[j] = (p[j] - h).max(bounds.lower[j]);
        let span = hi[j] - lo[j];
        if span <= 0.0 {
            continue;
        }
        let rh = f(&hi)?;
        let rl = f(&lo)?;
        for i in 0..m {
            jac[(i, j)] = (rh[i] - rl[i]) / span;
        }
    }
    Ok(jac)
}

/// Minimizes the sum of squared residuals returned by `residuals`.
pub fn least_squares<F>(
    residuals: F,
    initial: &[f64],
    bounds: &Bounds,
    opts: FitOptions,
) -> Result<FitOutcome>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = initial.len();
    let mut p = initial.to_vec();
    bounds.project(&mut p);
    let mut r = residuals(&p)?;
    let m = r.len();
    if m < n {
        return Err(EpmError::UnderdeterminedFit { points: m, params: n });
    }
    let rmse = |c: f64| (c / m as f64).sqrt();
    let mut c = cost(&r);
    let mut damping = opts.initial_damping;

    for iter in 1..=opts.max_iterations {
        if c == 0.0 {
            return Ok(FitOutcome { params: p, rmse: 0.0, iterations: iter - 1 });
        }
        let jac = jacobian(&residuals, &p, &r, bounds)?;
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let grad = &jt * DVector::from_column_slice(&r);

        let mut accepted = false;
        // Inner loop raises the damping until a step lowers the cost.
        for _ in 0..30 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += damping * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-&grad)) else {
                damping *= 10.0;
                continue;
            };
            let mut trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            bounds.project(&mut trial);
            let rt = residuals(&trial)?;
            let ct = cost(&rt);
            if ct <= c {
                let rel_step = p
                    .iter()
                    .zip(&trial)
                    .map(|(a, b)| (a - b).abs() / a.abs().max(1e-12))
                    .fold(0.0, f64::max);
                let rel_cost = (c - ct) / c.max(f64::MIN_POSITIVE);
                p = trial;
                r = rt;
                c = ct;
                damping = (damping / 3.0).max(1e-12);
                accepted = true;
                if rel_step < opts.step_tolerance || rel_cost < opts.cost_tolerance {
                    return Ok(FitOutcome { params: p, rmse: rmse(c), iterations: iter });
                }
                break;
            }
            damping *= 4.0;
        }
        if !accepted {
            // No descent direction left at this damping range: local minimum.
            return Ok(FitOutcome { params: p, rmse: rmse(c), iterations: iter });
        }
    }
    Err(EpmError::NonConvergence {
        iterations: opts.max_iterations,
        best: p,
        rmse: rmse(c),
    })
}
