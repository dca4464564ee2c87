//! Harrell's bootstrap optimism correction, extended with per-replicate
//! net-benefit accounting for the expected value of perfect information.
//!
//! Stream layout under the stream passed in:
//! `child(0)` develops the original model; `child(1).child(b).child(a)` is
//! attempt `a` of replicate `b` (its resample comes from the stream itself,
//! its model development from `.child(0)`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metrics::{
    self, c_statistic, calibration_slope, nb_all, nb_max, nb_model, StabilityMatrix, UtilityConfig,
};
use crate::model::{predict_risk, Cohort, FittedModel};
use crate::par::map_indexed;
use crate::rng::Stream;
use crate::strategies::{develop_with, StrategyKind, StrategySpec};

/// Attempts per replicate before it counts as exhausted.
pub const MAX_ATTEMPTS: usize = 5;
/// Largest tolerated share of failed fits across all attempts.
pub const MAX_FAILURE_SHARE: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Performance {
    pub c_statistic: f64,
    /// NaN when the risks are constant (e.g. an all-zero LASSO model).
    pub calibration_slope: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    pub original: FittedModel,
    pub apparent: Performance,
    pub mean_optimism: Performance,
    pub corrected: Performance,
    pub stability: StabilityMatrix,
    pub enb_all: f64,
    pub enb_model: f64,
    pub enb_max: f64,
    /// The reported EVPI. Equal to `evpi_pooled` except for bootstrap
    /// shrinkage, where it is the mean of the per-model EVPIs of the original
    /// and every replicate shrinkage model.
    pub evpi: f64,
    /// `ENB_max - max(0, ENB_model, ENB_all)`.
    pub evpi_pooled: f64,
    pub evpi_clamped: bool,
    pub replicate_failures: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectedPerformance {
    pub corrected_c: f64,
    pub corrected_slope: f64,
    pub optimism_c: f64,
    pub optimism_slope: f64,
}

pub fn corrected_performance(result: &BootstrapResult) -> CorrectedPerformance {
    CorrectedPerformance {
        corrected_c: result.apparent.c_statistic - result.mean_optimism.c_statistic,
        corrected_slope: result.apparent.calibration_slope - result.mean_optimism.calibration_slope,
        optimism_c: result.mean_optimism.c_statistic,
        optimism_slope: result.mean_optimism.calibration_slope,
    }
}

fn performance(risks: &[f64], y: &[bool]) -> Result<Performance> {
    let c = c_statistic(risks, y)?;
    let slope = match calibration_slope(risks, y) {
        Ok(s) => s,
        Err(Error::ConstantLogit) => f64::NAN,
        Err(e) => return Err(e),
    };
    Ok(Performance {
        c_statistic: c,
        calibration_slope: slope,
    })
}

struct Replicate {
    test_risks: Vec<f64>,
    apparent: Performance,
    test: Performance,
    nb: [f64; 3],
    inner_evpi: Option<f64>,
}

struct ReplicateOutcome {
    replicate: Option<Replicate>,
    failures: usize,
}

fn run_replicate(
    cohort: &Cohort,
    spec: &StrategySpec,
    cfg: &UtilityConfig,
    original_risks: &[f64],
    stream: Stream,
) -> Result<ReplicateOutcome> {
    let mut failures = 0;
    for attempt in 0..MAX_ATTEMPTS {
        let s = stream.child(attempt as u64);
        let sample = cohort.select(&s.resample_indices(cohort.n()));
        let fitted = develop_with(spec, &sample, s.child(0), cfg).and_then(|dev| {
            let apparent = performance(&predict_risk(&dev.model, sample.x())?, sample.y())?;
            let test_risks = predict_risk(&dev.model, cohort.x())?;
            let test = performance(&test_risks, cohort.y())?;
            Ok((dev, apparent, test_risks, test))
        });
        match fitted {
            Ok((dev, apparent, test_risks, test)) => {
                let nb = [
                    nb_all(&test_risks, cfg),
                    nb_model(original_risks, &test_risks, cfg)?,
                    nb_max(&test_risks, cfg),
                ];
                return Ok(ReplicateOutcome {
                    replicate: Some(Replicate {
                        test_risks,
                        apparent,
                        test,
                        nb,
                        inner_evpi: dev.inner_evpi,
                    }),
                    failures,
                });
            }
            Err(e) if e.is_fit_failure() => failures += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(ReplicateOutcome {
        replicate: None,
        failures,
    })
}

fn mean_finite(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values
        .filter(|v| v.is_finite())
        .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

/// Runs `b` bootstrap replicates of the full development strategy.
pub fn harrell_bootstrap(
    cohort: &Cohort,
    spec: &StrategySpec,
    b: usize,
    cfg: &UtilityConfig,
    stream: Stream,
) -> Result<BootstrapResult> {
    if b < 1 {
        return Err(Error::InvalidInput(
            "bootstrap needs at least one replicate".into(),
        ));
    }
    let dev = develop_with(spec, cohort, stream.child(0), cfg)?;
    let original_risks = predict_risk(&dev.model, cohort.x())?;
    let apparent = performance(&original_risks, cohort.y())?;

    let replicates_stream = stream.child(1);
    let outcomes = map_indexed(b, |r| {
        run_replicate(
            cohort,
            spec,
            cfg,
            &original_risks,
            replicates_stream.child(r as u64),
        )
    });

    let mut failures = 0;
    let mut exhausted = false;
    let mut replicates = Vec::with_capacity(b);
    for outcome in outcomes {
        let outcome = outcome?;
        failures += outcome.failures;
        match outcome.replicate {
            Some(rep) => replicates.push(rep),
            None => exhausted = true,
        }
    }
    if exhausted || failures as f64 > MAX_FAILURE_SHARE * b as f64 {
        return Err(Error::TooManyDegenerateReplicates {
            failures,
            replicates: b,
        });
    }

    let mean_optimism = Performance {
        c_statistic: replicates
            .iter()
            .map(|r| r.apparent.c_statistic - r.test.c_statistic)
            .sum::<f64>()
            / b as f64,
        calibration_slope: mean_finite(
            replicates
                .iter()
                .map(|r| r.apparent.calibration_slope - r.test.calibration_slope),
        ),
    };
    let corrected = Performance {
        c_statistic: apparent.c_statistic - mean_optimism.c_statistic,
        calibration_slope: apparent.calibration_slope - mean_optimism.calibration_slope,
    };

    let mut boot = Matrix::zeros(b, cohort.n());
    for (row, rep) in replicates.iter().enumerate() {
        boot.row_mut(row).copy_from_slice(&rep.test_risks);
    }
    let stability = StabilityMatrix::new(original_risks, boot)?;

    let enb = |k: usize| replicates.iter().map(|r| r.nb[k]).sum::<f64>() / b as f64;
    let (enb_all, enb_model, enb_max) = (enb(0), enb(1), enb(2));
    let pooled = metrics::evpi(enb_all, enb_model, enb_max);
    let evpi = match spec.kind {
        StrategyKind::BootstrapShrinkage => {
            let per_model: Vec<f64> = std::iter::once(dev.inner_evpi)
                .chain(replicates.iter().map(|r| r.inner_evpi))
                .map(|v| v.expect("bootstrap shrinkage always reports an inner EVPI"))
                .collect();
            per_model.iter().sum::<f64>() / per_model.len() as f64
        }
        _ => pooled.value,
    };

    Ok(BootstrapResult {
        original: dev.model,
        apparent,
        mean_optimism,
        corrected,
        stability,
        enb_all,
        enb_model,
        enb_max,
        evpi,
        evpi_pooled: pooled.value,
        evpi_clamped: pooled.clamped,
        replicate_failures: failures,
    })
}
