//! A-priori minimum sample size for developing a binary-outcome prediction
//! model: the shrinkage, optimism and overall-risk criteria.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{expit, fit_irls};
use crate::par::map_indexed;
use crate::rng::Stream;

pub const DEFAULT_MC_DRAWS: usize = 1_000_000;
/// Seed of the c-statistic to R² conversion. With one million draws the
/// conversion carries Monte Carlo noise of a few patients at the sizes of
/// interest; this seed is the one the published anchors are pinned to.
pub const DEFAULT_MC_SEED: u64 = 72;
const Z_975: f64 = 1.959_963_984_540_054;
const DRAWS_PER_CHUNK: usize = 65_536;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedSizeInputs {
    pub prevalence: f64,
    pub c_statistic: f64,
    pub parameters: usize,
    pub shrinkage_target: f64,
    pub optimism_target: f64,
    pub risk_margin: f64,
    pub mc_draws: usize,
    pub mc_seed: u64,
}

impl Default for FixedSizeInputs {
    fn default() -> Self {
        Self {
            prevalence: 0.173,
            c_statistic: 0.78,
            parameters: 6,
            shrinkage_target: 0.9,
            optimism_target: 0.05,
            risk_margin: 0.05,
            mc_draws: DEFAULT_MC_DRAWS,
            mc_seed: DEFAULT_MC_SEED,
        }
    }
}

impl FixedSizeInputs {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !open_unit(self.prevalence) {
            return Err(Error::Config("prevalence must lie in (0, 1)".into()));
        }
        if !(self.c_statistic > 0.5 && self.c_statistic < 1.0) {
            return Err(Error::Config("c-statistic must lie in (0.5, 1)".into()));
        }
        if self.parameters == 0 {
            return Err(Error::Config("parameters must be positive".into()));
        }
        if !open_unit(self.shrinkage_target)
            || !open_unit(self.optimism_target)
            || !open_unit(self.risk_margin)
        {
            return Err(Error::Config(
                "shrinkage, optimism and margin targets must lie in (0, 1)".into(),
            ));
        }
        if self.mc_draws < 1000 {
            return Err(Error::Config(
                "at least 1000 Monte Carlo draws are required".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedSizeResult {
    pub r2_cs: f64,
    pub max_r2_cs: f64,
    /// Shrinkage-based criterion.
    pub n_shrinkage: usize,
    /// Small-optimism criterion.
    pub n_optimism: usize,
    /// Precise overall risk criterion.
    pub n_overall_risk: usize,
    pub n_total: usize,
    pub n_events: usize,
}

/// Smallest n estimating the overall risk within `margin` (95% level).
pub fn criterion_overall_risk(prevalence: f64, margin: f64) -> usize {
    ceil_n(Z_975 * Z_975 * prevalence * (1.0 - prevalence) / (margin * margin))
}

/// Largest attainable Cox-Snell R² for an outcome with this prevalence.
pub fn max_r2_cs(prevalence: f64) -> f64 {
    let phi = prevalence;
    let ln_l0 = phi * phi.ln() + (1.0 - phi) * (1.0 - phi).ln();
    1.0 - (2.0 * ln_l0).exp()
}

/// Cox-Snell R² implied by a c-statistic.
///
/// Simulates `draws` linear predictors, `round(draws * prevalence)` of them
/// events drawn from N(mu, 1) and the rest non-events from N(0, 1), with
/// `mu = sqrt(2) * Phi^-1(c)` so that the two classes separate with the
/// requested c. The outcome is regressed on the predictor by logistic
/// regression and `R² = 1 - exp(-LR / draws)`, with LR the likelihood-ratio
/// statistic against the intercept-only model.
pub fn cstat_to_r2cs(c_statistic: f64, prevalence: f64, draws: usize, seed: u64) -> Result<f64> {
    if !(c_statistic > 0.5 && c_statistic < 1.0) {
        return Err(Error::InvalidInput(format!(
            "c-statistic {c_statistic} outside (0.5, 1)"
        )));
    }
    if !(prevalence > 0.0 && prevalence < 1.0) {
        return Err(Error::InvalidInput(format!(
            "prevalence {prevalence} outside (0, 1)"
        )));
    }
    let events = (draws as f64 * prevalence).round() as usize;
    if events == 0 || events == draws {
        return Err(Error::InvalidInput(
            "too few draws for the prevalence".into(),
        ));
    }
    let mu = std::f64::consts::SQRT_2 * Normal::standard().inverse_cdf(c_statistic);
    let stream = Stream::new(seed);
    let lp: Vec<f64> = map_indexed(draws.div_ceil(DRAWS_PER_CHUNK), |chunk| {
        let mut rng = stream.child(chunk as u64).rng();
        let start = chunk * DRAWS_PER_CHUNK;
        (start..draws.min(start + DRAWS_PER_CHUNK))
            .map(|i| {
                let z: f64 = rng.sample(StandardNormal);
                if i < events {
                    z + mu
                } else {
                    z
                }
            })
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect();
    let y: Vec<bool> = (0..draws).map(|i| i < events).collect();
    let x = Matrix::new(draws, 1, lp)?;
    let fit = fit_irls(&x, &y, None)?;
    let ll_model: f64 = x
        .as_slice()
        .iter()
        .zip(&y)
        .map(|(&v, &yi)| {
            let p = expit(fit.beta[0] + fit.beta[1] * v);
            if yi {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum();
    let phi = events as f64 / draws as f64;
    let ll_null = draws as f64 * (phi * phi.ln() + (1.0 - phi) * (1.0 - phi).ln());
    let lr = (2.0 * (ll_model - ll_null)).max(0.0);
    Ok(1.0 - (-lr / draws as f64).exp())
}

/// n for which the expected uniform shrinkage is `shrinkage`, given R².
pub fn shrinkage_criterion(parameters: usize, r2_cs: f64, shrinkage: f64) -> Result<usize> {
    if !(r2_cs > 0.0 && r2_cs < shrinkage) {
        return Err(Error::InvalidR2 {
            r2: r2_cs,
            shrinkage,
        });
    }
    Ok(ceil_n(
        parameters as f64 / ((shrinkage - 1.0) * (1.0 - r2_cs / shrinkage).ln()),
    ))
}

pub fn minimum_sample_size(inputs: &FixedSizeInputs) -> Result<FixedSizeResult> {
    inputs.validate()?;
    let r2 = cstat_to_r2cs(
        inputs.c_statistic,
        inputs.prevalence,
        inputs.mc_draws,
        inputs.mc_seed,
    )?;
    minimum_sample_size_from_r2(inputs, r2)
}

/// The criteria for a known Cox-Snell R².
pub fn minimum_sample_size_from_r2(
    inputs: &FixedSizeInputs,
    r2_cs: f64,
) -> Result<FixedSizeResult> {
    let max_r2 = max_r2_cs(inputs.prevalence);
    let n_shrinkage = shrinkage_criterion(inputs.parameters, r2_cs, inputs.shrinkage_target)?;
    // Shrinkage that keeps apparent and adjusted Nagelkerke R² within the
    // optimism target of each other.
    let s_optimism = r2_cs / (r2_cs + inputs.optimism_target * max_r2);
    let n_optimism = shrinkage_criterion(inputs.parameters, r2_cs, s_optimism)?;
    let n_overall_risk = criterion_overall_risk(inputs.prevalence, inputs.risk_margin);
    let n_total = n_shrinkage.max(n_optimism).max(n_overall_risk);
    let n_events = ceil_n(n_total as f64 * inputs.prevalence);
    Ok(FixedSizeResult {
        r2_cs,
        max_r2_cs: max_r2,
        n_shrinkage,
        n_optimism,
        n_overall_risk,
        n_total,
        n_events,
    })
}

/// Ceiling that ignores floating-point dust just above an integer.
fn ceil_n(v: f64) -> usize {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r as usize
    } else {
        v.ceil() as usize
    }
}
