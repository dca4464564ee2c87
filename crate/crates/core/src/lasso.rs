//! L1-penalised logistic regression by proximal Newton steps with an inner
//! coordinate-descent solve, on internally standardised predictors.
//!
//! Objective (standardised scale):
//! `-(1/n) loglik(b0, b) + lambda * sum_j |b_j|`, intercept unpenalised.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{expit, logit, Cohort, FittedModel};
use crate::strategies::StrategyKind;

const MAX_OUTER: usize = 200;
const MAX_SWEEPS: usize = 10_000;
const INNER_TOL: f64 = 1e-13;
const OUTER_TOL: f64 = 1e-10;
const MIN_WEIGHT: f64 = 1e-5;

/// Column-standardised copy of a design matrix (mean 0, population sd 1).
/// Constant columns are zeroed and never enter the model.
#[derive(Debug, Clone)]
pub(crate) struct Standardized {
    x: Matrix,
    means: Vec<f64>,
    sds: Vec<f64>,
    active: Vec<bool>,
}

impl Standardized {
    pub fn new(x: &Matrix) -> Self {
        let (n, p) = (x.rows(), x.cols());
        let mut means = vec![0.0; p];
        let mut sds = vec![0.0; p];
        for row in x.iter_rows() {
            for j in 0..p {
                means[j] += row[j];
            }
        }
        means.iter_mut().for_each(|m| *m /= n as f64);
        for row in x.iter_rows() {
            for j in 0..p {
                sds[j] += (row[j] - means[j]).powi(2);
            }
        }
        sds.iter_mut().for_each(|s| *s = (*s / n as f64).sqrt());
        let active: Vec<bool> = sds.iter().map(|&s| s > 1e-12).collect();
        let mut z = x.clone();
        for i in 0..n {
            let row = z.row_mut(i);
            for j in 0..p {
                row[j] = if active[j] {
                    (row[j] - means[j]) / sds[j]
                } else {
                    0.0
                };
            }
        }
        Self {
            x: z,
            means,
            sds,
            active,
        }
    }

    /// Smallest penalty at which every slope is zero.
    pub fn lambda_max(&self, y: &[bool]) -> f64 {
        let n = y.len() as f64;
        let ybar = y.iter().filter(|&&v| v).count() as f64 / n;
        (0..self.x.cols())
            .map(|j| {
                (0..self.x.rows())
                    .map(|i| self.x.get(i, j) * (f64::from(u8::from(y[i])) - ybar))
                    .sum::<f64>()
                    .abs()
                    / n
            })
            .fold(0.0, f64::max)
    }

    /// Back-transforms a standardised-scale solution to the original scale.
    pub fn to_original(&self, state: &LassoState) -> (f64, Vec<f64>) {
        let mut intercept = state.b0;
        let coefficients = (0..state.b.len())
            .map(|j| {
                if self.active[j] {
                    let beta = state.b[j] / self.sds[j];
                    intercept -= beta * self.means[j];
                    beta
                } else {
                    0.0
                }
            })
            .collect();
        (intercept, coefficients)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LassoState {
    pub b0: f64,
    pub b: Vec<f64>,
}

impl LassoState {
    pub fn null(y: &[bool], p: usize) -> Self {
        let ybar = y.iter().filter(|&&v| v).count() as f64 / y.len() as f64;
        Self {
            b0: logit(ybar),
            b: vec![0.0; p],
        }
    }
}

fn linear(x: &Matrix, s: &LassoState, out: &mut [f64]) {
    for (i, e) in out.iter_mut().enumerate() {
        *e = x
            .row(i)
            .iter()
            .zip(&s.b)
            .fold(s.b0, |a, (xj, bj)| a + xj * bj);
    }
}

fn objective(x: &Matrix, y: &[bool], s: &LassoState, lambda: f64, eta: &mut [f64]) -> f64 {
    linear(x, s, eta);
    let nll: f64 = eta
        .iter()
        .zip(y)
        .map(|(&e, &yi)| {
            // log(1 + exp(e)) - y e, evaluated stably
            let softplus = if e > 0.0 {
                e + (-e).exp().ln_1p()
            } else {
                e.exp().ln_1p()
            };
            softplus - if yi { e } else { 0.0 }
        })
        .sum();
    nll / y.len() as f64 + lambda * s.b.iter().map(|v| v.abs()).sum::<f64>()
}

#[inline]
fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Solves the penalised problem in place starting from `state`.
pub(crate) fn solve(
    std: &Standardized,
    y: &[bool],
    lambda: f64,
    state: &mut LassoState,
) -> Result<usize> {
    let x = &std.x;
    let (n, p) = (x.rows(), x.cols());
    let nf = n as f64;
    let mut eta = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut v = vec![0.0; p];
    let mut obj = objective(x, y, state, lambda, &mut eta);

    for outer in 1..=MAX_OUTER {
        linear(x, state, &mut eta);
        for i in 0..n {
            let pr = expit(eta[i]);
            w[i] = (pr * (1.0 - pr)).max(MIN_WEIGHT);
            // working residual z - eta
            r[i] = (f64::from(u8::from(y[i])) - pr) / w[i];
        }
        let wsum: f64 = w.iter().sum();
        for j in 0..p {
            v[j] = (0..n).map(|i| w[i] * x.get(i, j).powi(2)).sum::<f64>() / nf;
        }

        let mut next = state.clone();
        for _ in 0..MAX_SWEEPS {
            let mut max_change = 0.0_f64;
            let d = (0..n).map(|i| w[i] * r[i]).sum::<f64>() / wsum;
            next.b0 += d;
            r.iter_mut().for_each(|ri| *ri -= d);
            max_change = max_change.max(d.abs());
            for j in 0..p {
                if !std.active[j] {
                    continue;
                }
                let g =
                    (0..n).map(|i| w[i] * x.get(i, j) * r[i]).sum::<f64>() / nf + v[j] * next.b[j];
                let updated = soft_threshold(g, lambda) / v[j];
                let delta = updated - next.b[j];
                if delta != 0.0 {
                    for i in 0..n {
                        r[i] -= x.get(i, j) * delta;
                    }
                    next.b[j] = updated;
                    max_change = max_change.max(delta.abs() * v[j].sqrt());
                }
            }
            if max_change < INNER_TOL {
                break;
            }
        }

        // Backtracking along the proximal Newton direction keeps the true
        // objective non-increasing.
        let mut t = 1.0;
        let mut candidate = next.clone();
        let mut cand_obj = objective(x, y, &candidate, lambda, &mut eta);
        for _ in 0..40 {
            if cand_obj <= obj + 1e-15 * obj.abs() {
                break;
            }
            t *= 0.5;
            candidate.b0 = state.b0 + t * (next.b0 - state.b0);
            for j in 0..p {
                candidate.b[j] = state.b[j] + t * (next.b[j] - state.b[j]);
            }
            cand_obj = objective(x, y, &candidate, lambda, &mut eta);
        }
        let change = std::iter::once((candidate.b0 - state.b0).abs())
            .chain(candidate.b.iter().zip(&state.b).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if !candidate.b0.is_finite() || candidate.b.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonConvergence { iterations: outer });
        }
        *state = candidate;
        obj = cand_obj.min(obj);
        if change < OUTER_TOL {
            return Ok(outer);
        }
    }
    Err(Error::NonConvergence {
        iterations: MAX_OUTER,
    })
}

/// Penalised fit at a single `lambda`, returned on the original predictor
/// scale with the penalty recorded.
pub fn lasso_fit(cohort: &Cohort, lambda: f64) -> Result<FittedModel> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "lambda must be non-negative, got {lambda}"
        )));
    }
    cohort.check_fittable()?;
    let std = Standardized::new(cohort.x());
    let mut state = LassoState::null(cohort.y(), cohort.p());
    let iterations = solve(&std, cohort.y(), lambda, &mut state)?;
    let (intercept, coefficients) = std.to_original(&state);
    Ok(FittedModel {
        intercept,
        coefficients,
        strategy: StrategyKind::Lasso,
        shrinkage_factor: None,
        penalty: Some(lambda),
        converged: true,
        iterations,
    })
}

/// Default descending grid: `count` log-spaced values from the smallest
/// all-zero penalty down to `min_ratio` times it.
pub fn default_lambda_grid(cohort: &Cohort, count: usize, min_ratio: f64) -> Vec<f64> {
    let lmax = Standardized::new(cohort.x()).lambda_max(cohort.y());
    if count <= 1 || lmax <= 0.0 {
        return vec![lmax];
    }
    let (hi, lo) = (lmax.ln(), (lmax * min_ratio).ln());
    (0..count)
        .map(|k| (hi + (lo - hi) * k as f64 / (count - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{fit_logistic, predict_risk};
    use approx::assert_abs_diff_eq;

    fn cohort() -> Cohort {
        let x = Matrix::from_rows(&[
            [0.5, 1.2, 3.0],
            [-1.0, 0.3, 2.0],
            [1.5, -0.7, 2.5],
            [0.2, 2.1, 4.0],
            [-0.4, -1.3, 1.0],
            [2.2, 0.8, 3.5],
            [-1.7, 0.1, 2.2],
            [0.9, -0.2, 3.1],
            [0.1, 0.4, 2.9],
            [-0.6, 1.7, 1.8],
            [1.1, -1.1, 3.3],
            [0.0, 0.0, 2.4],
        ])
        .unwrap();
        let y = vec![
            true, false, true, false, false, true, true, false, false, true, true, false,
        ];
        Cohort::from_xy(x, y).unwrap()
    }

    /// KKT residual of the standardised problem, recomputed from the
    /// back-transformed model.
    fn kkt_residual(c: &Cohort, m: &FittedModel, lambda: f64) -> f64 {
        let (n, p) = (c.n(), c.p());
        let risks = predict_risk(m, c.x()).unwrap();
        let mut worst = (0..n)
            .map(|i| f64::from(u8::from(c.y()[i])) - risks[i])
            .sum::<f64>()
            .abs()
            / n as f64;
        for j in 0..p {
            let col = c.x().column(j);
            let mean = col.iter().sum::<f64>() / n as f64;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            let grad = -(0..n)
                .map(|i| (col[i] - mean) / sd * (f64::from(u8::from(c.y()[i])) - risks[i]))
                .sum::<f64>()
                / n as f64;
            let b_std = m.coefficients[j] * sd;
            let res = if b_std != 0.0 {
                (grad + lambda * b_std.signum()).abs()
            } else {
                (grad.abs() - lambda).max(0.0)
            };
            worst = worst.max(res);
        }
        worst
    }

    #[test]
    fn zero_penalty_matches_irls() {
        let c = cohort();
        let l = lasso_fit(&c, 0.0).unwrap();
        let m = fit_logistic(&c, None).unwrap();
        assert_abs_diff_eq!(l.intercept, m.intercept, epsilon = 1e-4);
        for j in 0..3 {
            assert_abs_diff_eq!(l.coefficients[j], m.coefficients[j], epsilon = 1e-4);
        }
    }

    #[test]
    fn penalty_at_lambda_max_gives_null_model() {
        let c = cohort();
        let lmax = Standardized::new(c.x()).lambda_max(c.y());
        let l = lasso_fit(&c, lmax * 1.0000001).unwrap();
        assert!(l.coefficients.iter().all(|&b| b == 0.0));
        assert_abs_diff_eq!(l.intercept, logit(c.prevalence()), epsilon = 1e-10);
    }

    #[test]
    fn kkt_conditions_hold() {
        let c = cohort();
        let lmax = Standardized::new(c.x()).lambda_max(c.y());
        for frac in [0.05, 0.3, 0.7] {
            let lambda = frac * lmax;
            let l = lasso_fit(&c, lambda).unwrap();
            assert!(kkt_residual(&c, &l, lambda) < 1e-6, "lambda {lambda}");
        }
    }

    #[test]
    fn objective_monotone_along_path() {
        let c = cohort();
        let std = Standardized::new(c.x());
        let grid = default_lambda_grid(&c, 8, 1e-3);
        let mut eta = vec![0.0; c.n()];
        let sols: Vec<LassoState> = grid
            .iter()
            .map(|&l| {
                let mut s = LassoState::null(c.y(), 3);
                solve(&std, c.y(), l, &mut s).unwrap();
                s
            })
            .collect();
        for w in 0..grid.len() - 1 {
            let l2 = grid[w + 1];
            let at_own = objective(&std.x, c.y(), &sols[w + 1], l2, &mut eta);
            let at_other = objective(&std.x, c.y(), &sols[w], l2, &mut eta);
            assert!(at_other >= at_own - 1e-12);
        }
    }

    #[test]
    fn negative_lambda_rejected() {
        assert!(lasso_fit(&cohort(), -1.0).is_err());
    }
}
