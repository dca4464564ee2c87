//! Maximum-likelihood logistic regression and the cohort container shared by
//! every other module.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::strategies::StrategyKind;

/// Convergence tolerance on the largest absolute score component.
pub const SCORE_TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 100;
/// Fitted risks closer than this to 0 or 1 are treated as separation.
pub const SEPARATION_EPS: f64 = 1e-10;
const LOGLIK_CLAMP: f64 = 1e-12;

/// Recruitment-ordered rows of numeric predictors and a binary outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    ids: Vec<Arc<str>>,
    order: Vec<usize>,
    y: Vec<bool>,
    x: Matrix,
    names: Vec<String>,
}

impl Cohort {
    pub fn new(
        ids: Vec<String>,
        order: Vec<usize>,
        y: Vec<bool>,
        x: Matrix,
        names: Vec<String>,
    ) -> Result<Self> {
        let n = y.len();
        for len in [ids.len(), order.len(), x.rows()] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: len,
                });
            }
        }
        if names.len() != x.cols() {
            return Err(Error::DimensionMismatch {
                expected: x.cols(),
                found: names.len(),
            });
        }
        let mut seen = vec![false; n];
        for &o in &order {
            if o == 0 || o > n {
                return Err(Error::InvalidOrder { rows: n });
            }
            if std::mem::replace(&mut seen[o - 1], true) {
                return Err(Error::DuplicateOrder { order: o });
            }
        }
        if x.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "predictor values must be finite".into(),
            ));
        }
        Ok(Self {
            ids: ids.into_iter().map(Arc::from).collect(),
            order,
            y,
            x,
            names,
        })
    }

    /// Cohort with ids `1..=n`, recruitment order equal to row order and
    /// predictor names `x1..xp`.
    pub fn from_xy(x: Matrix, y: Vec<bool>) -> Result<Self> {
        let n = y.len();
        let names = (1..=x.cols()).map(|j| format!("x{j}")).collect();
        Self::new(
            (1..=n).map(|i| i.to_string()).collect(),
            (1..=n).collect(),
            y,
            x,
            names,
        )
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &[bool] {
        &self.y
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.ids.iter().map(|s| s.as_ref())
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn predictor_names(&self) -> &[String] {
        &self.names
    }

    pub fn events(&self) -> usize {
        self.y.iter().filter(|&&v| v).count()
    }

    pub fn prevalence(&self) -> f64 {
        self.events() as f64 / self.n() as f64
    }

    /// Rows gathered by index (repeats allowed, as in a bootstrap resample).
    /// The result is numbered `1..=m` in gather order.
    pub fn select(&self, rows: &[usize]) -> Cohort {
        Cohort {
            ids: rows.iter().map(|&i| Arc::clone(&self.ids[i])).collect(),
            order: (1..=rows.len()).collect(),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            x: self.x.select_rows(rows),
            names: self.names.clone(),
        }
    }

    /// The first `n` rows by recruitment order, in that order.
    pub fn first_recruited(&self, n: usize) -> Cohort {
        let mut rows: Vec<usize> = (0..self.n()).collect();
        rows.sort_by_key(|&i| self.order[i]);
        rows.truncate(n);
        self.select(&rows)
    }

    /// Same rows with a replacement recruitment order.
    pub fn with_order(&self, order: Vec<usize>) -> Result<Cohort> {
        Cohort::new(
            self.ids.iter().map(|s| s.to_string()).collect(),
            order,
            self.y.clone(),
            self.x.clone(),
            self.names.clone(),
        )
    }

    pub(crate) fn check_fittable(&self) -> Result<()> {
        let events = self.events();
        if events == 0 || events == self.n() {
            return Err(Error::DegenerateOutcome);
        }
        Ok(())
    }
}

/// Intercept and slopes of a logistic linear predictor, with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub strategy: StrategyKind,
    pub shrinkage_factor: Option<f64>,
    pub penalty: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl FittedModel {
    pub fn intercept_only(intercept: f64, p: usize, strategy: StrategyKind) -> Self {
        Self {
            intercept,
            coefficients: vec![0.0; p],
            strategy,
            shrinkage_factor: None,
            penalty: None,
            converged: true,
            iterations: 0,
        }
    }
}

#[inline]
pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Bernoulli log-likelihood of `y` under `risks`, clamped away from 0 and 1.
pub fn log_likelihood(risks: &[f64], y: &[bool]) -> f64 {
    risks
        .iter()
        .zip(y)
        .map(|(&p, &yi)| {
            let p = p.clamp(LOGLIK_CLAMP, 1.0 - LOGLIK_CLAMP);
            if yi {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum()
}

/// Raw IRLS output: `beta[0]` is the intercept.
#[derive(Debug, Clone)]
pub(crate) struct IrlsFit {
    pub beta: Vec<f64>,
    pub iterations: usize,
}

fn eta_of(x: &Matrix, beta: &[f64], offset: Option<&[f64]>, out: &mut [f64]) {
    for (i, e) in out.iter_mut().enumerate() {
        let row = x.row(i);
        let mut v = beta[0];
        for (xj, bj) in row.iter().zip(&beta[1..]) {
            v += xj * bj;
        }
        if let Some(off) = offset {
            v += off[i];
        }
        *e = v;
    }
}

/// Newton–Raphson / IRLS for logistic regression with an intercept and an
/// optional fixed offset. Step-halving guards against likelihood decreases.
pub(crate) fn fit_irls(x: &Matrix, y: &[bool], offset: Option<&[f64]>) -> Result<IrlsFit> {
    let n = y.len();
    if x.rows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: x.rows(),
        });
    }
    if let Some(off) = offset {
        if off.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: off.len(),
            });
        }
    }
    let events = y.iter().filter(|&&v| v).count();
    if events == 0 || events == n {
        return Err(Error::DegenerateOutcome);
    }
    let k = x.cols() + 1;
    let mut beta = vec![0.0; k];
    let mean_offset = offset.map_or(0.0, |o| o.iter().sum::<f64>() / n as f64);
    beta[0] = logit(events as f64 / n as f64) - mean_offset;

    let mut eta = vec![0.0; n];
    eta_of(x, &beta, offset, &mut eta);
    let mut risks: Vec<f64> = eta.iter().map(|&e| expit(e)).collect();
    let mut loglik = log_likelihood(&risks, y);

    for iteration in 0..=MAX_ITERATIONS {
        let mut score = vec![0.0; k];
        let mut info = DMatrix::<f64>::zeros(k, k);
        for i in 0..n {
            let p = risks[i];
            let r = f64::from(u8::from(y[i])) - p;
            let w = p * (1.0 - p);
            let row = x.row(i);
            score[0] += r;
            info[(0, 0)] += w;
            for a in 0..row.len() {
                score[a + 1] += r * row[a];
                info[(a + 1, 0)] += w * row[a];
                for b in 0..=a {
                    info[(a + 1, b + 1)] += w * row[a] * row[b];
                }
            }
        }
        if risks
            .iter()
            .any(|&p| !(SEPARATION_EPS..=1.0 - SEPARATION_EPS).contains(&p))
        {
            return Err(Error::QuasiSeparation);
        }
        let max_score = score.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
        if max_score < SCORE_TOLERANCE {
            return Ok(IrlsFit {
                beta,
                iterations: iteration,
            });
        }
        if iteration == MAX_ITERATIONS {
            break;
        }
        for a in 0..k {
            for b in 0..a {
                info[(b, a)] = info[(a, b)];
            }
        }
        let diag_max = (0..k).map(|a| info[(a, a)]).fold(0.0_f64, f64::max);
        let chol = info.cholesky().ok_or(Error::SingularDesign)?;
        let l = chol.l();
        let min_pivot = (0..k)
            .map(|a| l[(a, a)] * l[(a, a)])
            .fold(f64::INFINITY, f64::min);
        if !(min_pivot > 1e-13 * diag_max) {
            return Err(Error::SingularDesign);
        }
        let step = chol.solve(&DVector::from_vec(score));

        let mut scale = 1.0;
        let mut candidate = vec![0.0; k];
        let mut accepted = false;
        for _ in 0..40 {
            for a in 0..k {
                candidate[a] = beta[a] + scale * step[a];
            }
            eta_of(x, &candidate, offset, &mut eta);
            let cand_risks: Vec<f64> = eta.iter().map(|&e| expit(e)).collect();
            let cand_ll = log_likelihood(&cand_risks, y);
            if cand_ll >= loglik - 1e-10 * loglik.abs().max(1.0) {
                beta.copy_from_slice(&candidate);
                risks = cand_risks;
                loglik = cand_ll;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            // No ascent direction left at machine precision: the score is as
            // small as floating point allows.
            if max_score < 1e-6 * (n as f64).max(1.0) {
                return Ok(IrlsFit {
                    beta,
                    iterations: iteration + 1,
                });
            }
            return Err(Error::NonConvergence {
                iterations: iteration + 1,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITERATIONS,
    })
}

/// Unpenalised maximum-likelihood logistic regression of the cohort outcome on
/// all of its predictors. With `offset`, the offset is added to the linear
/// predictor with a fixed coefficient of one.
pub fn fit_logistic(cohort: &Cohort, offset: Option<&[f64]>) -> Result<FittedModel> {
    let fit = fit_irls(cohort.x(), cohort.y(), offset)?;
    Ok(FittedModel {
        intercept: fit.beta[0],
        coefficients: fit.beta[1..].to_vec(),
        strategy: StrategyKind::Unpenalised,
        shrinkage_factor: None,
        penalty: None,
        converged: true,
        iterations: fit.iterations,
    })
}

pub fn linear_predictor(model: &FittedModel, x: &Matrix) -> Result<Vec<f64>> {
    if x.cols() != model.coefficients.len() {
        return Err(Error::DimensionMismatch {
            expected: model.coefficients.len(),
            found: x.cols(),
        });
    }
    Ok(x.iter_rows()
        .map(|row| {
            row.iter()
                .zip(&model.coefficients)
                .fold(model.intercept, |acc, (xj, bj)| acc + xj * bj)
        })
        .collect())
}

/// Inverse-logit of the linear predictor, kept strictly inside (0, 1) even
/// where the double-precision inverse-logit would round to 0 or 1.
pub fn predict_risk(model: &FittedModel, x: &Matrix) -> Result<Vec<f64>> {
    Ok(linear_predictor(model, x)?
        .into_iter()
        .map(|eta| expit(eta).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
        .collect())
}

/// Likelihood-ratio chi-squared of `model` against the intercept-only model
/// refitted on the same cohort.
pub fn lr_chi2(model: &FittedModel, cohort: &Cohort) -> Result<f64> {
    let null = fit_irls(&Matrix::zeros(cohort.n(), 0), cohort.y(), None)?;
    let null_risk = expit(null.beta[0]);
    let ll0 = log_likelihood(&vec![null_risk; cohort.n()], cohort.y());
    let ll1 = log_likelihood(&predict_risk(model, cohort.x())?, cohort.y());
    Ok((2.0 * (ll1 - ll0)).max(0.0))
}
