//! Synthetic cohorts with a known logistic truth, calibrated to a target
//! outcome prevalence and population c-statistic.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{expit, logit, Cohort};
use crate::par::map_indexed;
use crate::rng::Stream;

/// Draws used by [`calibrate`] to evaluate expectations over the linear
/// predictor distribution.
pub const CALIBRATION_DRAWS: usize = 200_000;
const ROWS_PER_CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSpec {
    pub n: usize,
    pub target_prevalence: f64,
    pub target_c: f64,
    pub p: usize,
    pub seed: u64,
    /// Common pairwise correlation of the standard-normal predictors.
    pub correlation: f64,
    /// Explicit truth; overrides the prevalence and c-statistic targets.
    pub coefficients: Option<TrueModel>,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            n: 20_413,
            target_prevalence: 0.173,
            target_c: 0.67,
            p: 6,
            seed: 0,
            correlation: 0.0,
            coefficients: None,
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_prevalence > 0.0 && self.target_prevalence < 1.0) {
            return Err(Error::Config("target prevalence must lie in (0, 1)".into()));
        }
        if !(self.target_c >= 0.5 && self.target_c < 1.0) {
            return Err(Error::Config(
                "target c-statistic must lie in [0.5, 1)".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.correlation) {
            return Err(Error::Config("correlation must lie in [0, 1)".into()));
        }
        if let Some(m) = &self.coefficients {
            if m.coefficients.len() != self.p {
                return Err(Error::Config(format!(
                    "explicit truth has {} coefficients but p = {}",
                    m.coefficients.len(),
                    self.p
                )));
            }
        }
        Ok(())
    }
}

/// Intercept giving mean risk `prevalence` over linear-predictor draws
/// `scale * z`, by bisection.
fn solve_intercept(z: &[f64], scale: f64, prevalence: f64) -> Result<f64> {
    let mean_risk = |a: f64| z.iter().map(|&v| expit(a + scale * v)).sum::<f64>() / z.len() as f64;
    let (mut lo, mut hi) = (-40.0, 40.0);
    if !(mean_risk(lo) < prevalence && mean_risk(hi) > prevalence) {
        return Err(Error::RootBracketFailure(format!(
            "no intercept in [{lo}, {hi}] reaches prevalence {prevalence}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_risk(mid) < prevalence {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Expected c-statistic of the true linear predictor when outcomes are drawn
/// from its risks: `sum_{i>j} p_i (1 - p_j) / (sum p * sum (1 - p))` over
/// draws `sorted_z` in ascending order.
fn expected_c(sorted_z: &[f64], intercept: f64, scale: f64) -> f64 {
    let mut below_non_event = 0.0;
    let (mut concordant, mut events, mut non_events) = (0.0, 0.0, 0.0);
    for &v in sorted_z {
        let p = expit(intercept + scale * v);
        concordant += p * below_non_event;
        below_non_event += 1.0 - p;
        events += p;
        non_events += 1.0 - p;
    }
    concordant / (events * non_events)
}

/// Equal-weight truth reaching the targets of `spec`.
///
/// The linear predictor is normal with standard deviation `sigma`. Its
/// starting value is `sqrt(2) * Phi^-1(c)`, exact for class-conditional
/// normal predictors; `sigma` is then solved so the expected c-statistic of
/// the logistic truth equals the target, with the intercept re-solved for
/// the target prevalence at every step.
pub fn calibrate(spec: &GeneratorSpec) -> Result<TrueModel> {
    spec.validate()?;
    if let Some(m) = &spec.coefficients {
        return Ok(m.clone());
    }
    let prevalence = spec.target_prevalence;
    if spec.p == 0 || spec.target_c <= 0.5 + 1e-12 {
        return Ok(TrueModel {
            intercept: logit(prevalence),
            coefficients: vec![0.0; spec.p],
        });
    }
    let mut rng = Stream::new(spec.seed).child(0).rng();
    let mut z: Vec<f64> = (0..CALIBRATION_DRAWS)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    z.sort_by(f64::total_cmp);

    let normal = Normal::standard();
    let start = std::f64::consts::SQRT_2 * normal.inverse_cdf(spec.target_c);
    let c_at = |sigma: f64| -> Result<(f64, f64)> {
        let a = solve_intercept(&z, sigma, prevalence)?;
        Ok((expected_c(&z, a, sigma), a))
    };
    let (mut lo, mut hi) = (0.0, start);
    while c_at(hi)?.0 < spec.target_c {
        lo = hi;
        hi *= 1.5;
        if hi > 50.0 {
            return Err(Error::RootBracketFailure(format!(
                "c-statistic {} unreachable",
                spec.target_c
            )));
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if c_at(mid)?.0 < spec.target_c {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 {
            break;
        }
    }
    let sigma = 0.5 * (lo + hi);
    let intercept = c_at(sigma)?.1;
    let p = spec.p as f64;
    // Var(sum_j x_j) = p + p (p - 1) rho for exchangeable correlation rho.
    let beta = sigma / (p + p * (p - 1.0) * spec.correlation).sqrt();
    Ok(TrueModel {
        intercept,
        coefficients: vec![beta; spec.p],
    })
}

/// Rows of standard-normal predictors with outcomes drawn from the truth and
/// a random recruitment order. Rows are produced in fixed-size chunks, each
/// from its own substream.
pub fn generate(spec: &GeneratorSpec) -> Result<Cohort> {
    let truth = calibrate(spec)?;
    let (n, p) = (spec.n, spec.p);
    let rho = spec.correlation;
    let rows_stream = Stream::new(spec.seed).child(1);
    let chunks = map_indexed(n.div_ceil(ROWS_PER_CHUNK), |chunk| {
        let mut rng = rows_stream.child(chunk as u64).rng();
        let rows = ROWS_PER_CHUNK.min(n - chunk * ROWS_PER_CHUNK);
        let mut x = Vec::with_capacity(rows * p);
        let mut y = Vec::with_capacity(rows);
        for _ in 0..rows {
            let shared: f64 = rng.sample(StandardNormal);
            let mut lp = truth.intercept;
            for j in 0..p {
                let own: f64 = rng.sample(StandardNormal);
                let v = rho.sqrt() * shared + (1.0 - rho).sqrt() * own;
                lp += truth.coefficients[j] * v;
                x.push(v);
            }
            y.push(rng.random::<f64>() < expit(lp));
        }
        (x, y)
    });
    let mut xs = Vec::with_capacity(n * p);
    let mut ys = Vec::with_capacity(n);
    for (x, y) in chunks {
        xs.extend(x);
        ys.extend(y);
    }
    let order: Vec<usize> = Stream::new(spec.seed)
        .child(2)
        .permutation(n)
        .into_iter()
        .map(|r| r + 1)
        .collect();
    Cohort::new(
        (1..=n).map(|i| i.to_string()).collect(),
        order,
        ys,
        Matrix::new(n, p, xs)?,
        (1..=p).map(|j| format!("x{j}")).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::c_statistic;
    use crate::model::{fit_logistic, predict_risk, FittedModel};
    use crate::strategies::StrategyKind;
    use approx::assert_abs_diff_eq;

    #[test]
    fn no_discrimination_gives_null_truth() {
        let t = calibrate(&GeneratorSpec {
            target_c: 0.5,
            ..GeneratorSpec::default()
        })
        .unwrap();
        assert!(t.coefficients.iter().all(|&b| b == 0.0));
        assert_abs_diff_eq!(t.intercept, logit(0.173), epsilon = 1e-15);
    }

    #[test]
    fn seed_repeat_is_identical() {
        let spec = GeneratorSpec {
            n: 500,
            seed: 3,
            ..GeneratorSpec::default()
        };
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
    }

    #[test]
    fn full_size_prevalence_is_on_target() {
        let c = generate(&GeneratorSpec {
            seed: 1,
            ..GeneratorSpec::default()
        })
        .unwrap();
        assert_eq!(c.n(), 20_413);
        assert!(
            (c.prevalence() - 0.173).abs() < 0.006,
            "prevalence {}",
            c.prevalence()
        );
    }

    #[test]
    fn large_cohort_hits_c_and_prevalence_targets() {
        let spec = GeneratorSpec {
            n: 1_000_000,
            seed: 2,
            ..GeneratorSpec::default()
        };
        let truth = calibrate(&spec).unwrap();
        let c = generate(&spec).unwrap();
        let m = FittedModel {
            intercept: truth.intercept,
            coefficients: truth.coefficients.clone(),
            ..FittedModel::intercept_only(0.0, 0, StrategyKind::Unpenalised)
        };
        let risks = predict_risk(&m, c.x()).unwrap();
        let cstat = c_statistic(&risks, c.y()).unwrap();
        assert!((cstat - 0.67).abs() < 0.005, "c {cstat}");
        assert!(
            (c.prevalence() - 0.173).abs() < 0.003,
            "prevalence {}",
            c.prevalence()
        );
    }

    #[test]
    fn wider_linear_predictor_raises_c() {
        let spec = GeneratorSpec {
            n: 200_000,
            seed: 4,
            ..GeneratorSpec::default()
        };
        let truth = calibrate(&spec).unwrap();
        let doubled: Vec<f64> = truth.coefficients.iter().map(|b| 2.0 * b).collect();
        let c = generate(&spec).unwrap();
        let lp = |coefs: &[f64]| {
            let m = FittedModel {
                intercept: 0.0,
                coefficients: coefs.to_vec(),
                ..FittedModel::intercept_only(0.0, 0, StrategyKind::Unpenalised)
            };
            predict_risk(&m, c.x()).unwrap()
        };
        // The ranking of the true LP is unchanged by scaling, so measure on
        // outcomes regenerated under the doubled truth.
        let wide = generate(&GeneratorSpec {
            coefficients: Some(TrueModel {
                intercept: truth.intercept,
                coefficients: doubled.clone(),
            }),
            ..spec.clone()
        })
        .unwrap();
        let base_c = c_statistic(&lp(&truth.coefficients), c.y()).unwrap();
        let wide_c = c_statistic(&lp(&doubled), wide.y()).unwrap();
        assert!(wide_c > base_c + 0.05, "{wide_c} vs {base_c}");
    }

    #[test]
    fn null_truth_gives_no_discrimination() {
        let c = generate(&GeneratorSpec {
            n: 10_000,
            seed: 5,
            coefficients: Some(TrueModel {
                intercept: -1.5,
                coefficients: vec![0.0; 6],
            }),
            ..GeneratorSpec::default()
        })
        .unwrap();
        let m = fit_logistic(&c, None).unwrap();
        let risks = predict_risk(&m, c.x()).unwrap();
        let cstat = c_statistic(&risks, c.y()).unwrap();
        assert!((cstat - 0.5).abs() < 0.02, "c {cstat}");
    }

    #[test]
    fn huge_cohort_refit_recovers_truth() {
        let spec = GeneratorSpec {
            n: 400_000,
            seed: 6,
            ..GeneratorSpec::default()
        };
        let truth = calibrate(&spec).unwrap();
        let m = fit_logistic(&generate(&spec).unwrap(), None).unwrap();
        // Standard error of each slope is roughly 1 / sqrt(n * p(1-p)).
        let se = 1.0 / (spec.n as f64 * 0.173 * 0.827).sqrt();
        for (b, t) in m.coefficients.iter().zip(&truth.coefficients) {
            assert!((b - t).abs() < 4.0 * se, "{b} vs {t}");
        }
        assert!((m.intercept - truth.intercept).abs() < 4.0 * se * 1.2);
    }

    #[test]
    fn correlated_predictors_keep_lp_spread() {
        let base = calibrate(&GeneratorSpec::default()).unwrap();
        let corr = calibrate(&GeneratorSpec {
            correlation: 0.3,
            ..GeneratorSpec::default()
        })
        .unwrap();
        let var = |b: f64, rho: f64| b * b * (6.0 + 30.0 * rho);
        assert_abs_diff_eq!(
            var(base.coefficients[0], 0.0),
            var(corr.coefficients[0], 0.3),
            epsilon = 1e-12
        );
    }
}
