//! Performance, stability and clinical-utility statistics.
//!
//! Percentiles everywhere in this module use linear interpolation between
//! order statistics at the 0-based position `q * (m - 1)` of the sorted
//! values (the "inclusive" definition, R type 7).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{fit_irls, logit};

pub const DEFAULT_THRESHOLD: f64 = 0.10;
const LOGIT_CLAMP: f64 = 1e-12;
const EVPI_CLAMP: f64 = 1e-12;

/// Decision threshold `z`: risks `>= z` trigger treatment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityConfig {
    pub threshold: f64,
}

impl Default for UtilityConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl UtilityConfig {
    pub fn new(threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::InvalidInput(format!(
                "decision threshold must lie in (0, 1), got {threshold}"
            )));
        }
        Ok(Self { threshold })
    }

    #[inline]
    pub fn treat(&self, risk: f64) -> bool {
        risk >= self.threshold
    }

    #[inline]
    fn harm_weight(&self) -> f64 {
        self.threshold / (1.0 - self.threshold)
    }
}

/// Bootstrap-model risks for every individual of the development data.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityMatrix {
    original_risks: Vec<f64>,
    /// `B x n`: row `b` holds replicate `b`'s risks for all individuals.
    boot_risks: Matrix,
}

impl StabilityMatrix {
    pub fn new(original_risks: Vec<f64>, boot_risks: Matrix) -> Result<Self> {
        if boot_risks.cols() != original_risks.len() {
            return Err(Error::DimensionMismatch {
                expected: original_risks.len(),
                found: boot_risks.cols(),
            });
        }
        let in_unit = |v: &f64| *v > 0.0 && *v < 1.0;
        if !original_risks.iter().all(in_unit) || !boot_risks.as_slice().iter().all(in_unit) {
            return Err(Error::InvalidInput(
                "risks must lie strictly in (0, 1)".into(),
            ));
        }
        Ok(Self {
            original_risks,
            boot_risks,
        })
    }

    pub fn original_risks(&self) -> &[f64] {
        &self.original_risks
    }

    pub fn boot_risks(&self) -> &Matrix {
        &self.boot_risks
    }

    pub fn replicates(&self) -> usize {
        self.boot_risks.rows()
    }

    pub fn individuals(&self) -> usize {
        self.original_risks.len()
    }

    /// Bootstrap risks of individual `i` across replicates.
    pub fn column(&self, i: usize) -> Vec<f64> {
        self.boot_risks.column(i)
    }
}

/// Mean and across-individual 2.5th / 97.5th percentiles of a statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub mean: f64,
    pub p2_5: f64,
    pub p97_5: f64,
}

impl Distribution {
    pub fn of(values: &[f64]) -> Self {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            mean,
            p2_5: percentile_sorted(&sorted, 0.025),
            p97_5: percentile_sorted(&sorted, 0.975),
        }
    }
}

/// Percentile of already sorted values; see the module docs for the rule.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        m => {
            let pos = q * (m - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(m - 1);
            let frac = pos - lo as f64;
            sorted[lo] + frac * (sorted[hi] - sorted[lo])
        }
    }
}

fn check_outcome(y: &[bool]) -> Result<(u64, u64)> {
    let events = y.iter().filter(|&&v| v).count() as u64;
    let non_events = y.len() as u64 - events;
    if events == 0 || non_events == 0 {
        return Err(Error::DegenerateOutcome);
    }
    Ok((events, non_events))
}

/// Concordance probability over all event / non-event pairs, ties counted
/// one half. Computed from mid-ranks in `O(n log n)`; the doubled
/// Mann–Whitney statistic is accumulated in integers so the result is the
/// same double as the all-pairs count.
pub fn c_statistic(risks: &[f64], y: &[bool]) -> Result<f64> {
    if risks.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            found: risks.len(),
        });
    }
    let (events, non_events) = check_outcome(y)?;
    let mut idx: Vec<usize> = (0..risks.len()).collect();
    idx.sort_by(|&a, &b| risks[a].total_cmp(&risks[b]));
    // Sum over events of doubled mid-ranks (1-based): tie block [s, e) has
    // doubled mid-rank s + e + 1.
    let mut doubled_rank_sum: u64 = 0;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && risks[idx[end]] == risks[idx[start]] {
            end += 1;
        }
        let block_events = idx[start..end].iter().filter(|&&i| y[i]).count() as u64;
        doubled_rank_sum += block_events * (start as u64 + end as u64 + 1);
        start = end;
    }
    let doubled_u = doubled_rank_sum - events * (events + 1);
    Ok(doubled_u as f64 / (2 * events * non_events) as f64)
}

/// Slope of the logistic recalibration `logit P(y) = a + b * logit(risk)`.
pub fn calibration_slope(risks: &[f64], y: &[bool]) -> Result<f64> {
    if risks.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            found: risks.len(),
        });
    }
    check_outcome(y)?;
    let lp: Vec<f64> = risks
        .iter()
        .map(|&p| logit(p.clamp(LOGIT_CLAMP, 1.0 - LOGIT_CLAMP)))
        .collect();
    let mean = lp.iter().sum::<f64>() / lp.len() as f64;
    let var = lp.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / lp.len() as f64;
    if var < 1e-12 {
        return Err(Error::ConstantLogit);
    }
    let design = Matrix::new(lp.len(), 1, lp)?;
    let fit = fit_irls(&design, y, None)?;
    Ok(fit.beta[1])
}

/// Per-individual 95% uncertainty interval of the bootstrap risks.
pub fn ui_bounds(matrix: &StabilityMatrix) -> Vec<(f64, f64)> {
    (0..matrix.individuals())
        .map(|i| {
            let mut col = matrix.column(i);
            col.sort_by(f64::total_cmp);
            (
                percentile_sorted(&col, 0.025),
                percentile_sorted(&col, 0.975),
            )
        })
        .collect()
}

pub fn ui_widths(matrix: &StabilityMatrix) -> Vec<f64> {
    ui_bounds(matrix).iter().map(|(lo, hi)| hi - lo).collect()
}

pub fn mean_ui_width(matrix: &StabilityMatrix) -> Distribution {
    Distribution::of(&ui_widths(matrix))
}

/// Largest distance from each individual's point risk to either UI bound.
pub fn delta_stat(matrix: &StabilityMatrix) -> (Vec<f64>, Distribution) {
    let deltas: Vec<f64> = ui_bounds(matrix)
        .iter()
        .zip(matrix.original_risks())
        .map(|(&(lo, hi), &p)| (p - lo).max(hi - p))
        .collect();
    let dist = Distribution::of(&deltas);
    (deltas, dist)
}

/// Fraction of each individual's bootstrap risks that fall on the other side
/// of the decision threshold from the point risk.
pub fn misclassification_prob(
    matrix: &StabilityMatrix,
    cfg: &UtilityConfig,
) -> (Vec<f64>, Distribution) {
    let b = matrix.replicates();
    let mut flips = vec![0usize; matrix.individuals()];
    let decisions: Vec<bool> = matrix
        .original_risks()
        .iter()
        .map(|&p| cfg.treat(p))
        .collect();
    for row in matrix.boot_risks().iter_rows() {
        for (i, &r) in row.iter().enumerate() {
            if cfg.treat(r) != decisions[i] {
                flips[i] += 1;
            }
        }
    }
    let probs: Vec<f64> = flips.iter().map(|&f| f as f64 / b as f64).collect();
    let dist = Distribution::of(&probs);
    (probs, dist)
}

fn check_same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(())
}

/// Net benefit of treating everyone, with `truth_risks` as the truth proxy.
pub fn nb_all(truth_risks: &[f64], cfg: &UtilityConfig) -> f64 {
    let w = cfg.harm_weight();
    truth_risks.iter().map(|&t| t - (1.0 - t) * w).sum::<f64>() / truth_risks.len() as f64
}

/// Net benefit of treating those flagged by `decision_risks`.
pub fn nb_model(decision_risks: &[f64], truth_risks: &[f64], cfg: &UtilityConfig) -> Result<f64> {
    check_same_len(truth_risks, decision_risks)?;
    let w = cfg.harm_weight();
    let total: f64 = decision_risks
        .iter()
        .zip(truth_risks)
        .filter(|(&d, _)| cfg.treat(d))
        .map(|(_, &t)| t - (1.0 - t) * w)
        .sum();
    Ok(total / truth_risks.len() as f64)
}

/// Net benefit of deciding with the truth proxy itself.
pub fn nb_max(truth_risks: &[f64], cfg: &UtilityConfig) -> f64 {
    let w = cfg.harm_weight();
    truth_risks
        .iter()
        .filter(|&&t| cfg.treat(t))
        .map(|&t| t - (1.0 - t) * w)
        .sum::<f64>()
        / truth_risks.len() as f64
}

/// Expected value of perfect information, with a flag set when a tiny
/// negative value from floating-point noise was clamped to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evpi {
    pub value: f64,
    pub clamped: bool,
}

pub fn evpi(enb_all: f64, enb_model: f64, enb_max: f64) -> Evpi {
    let raw = enb_max - 0.0_f64.max(enb_model).max(enb_all);
    if raw < 0.0 && raw > -EVPI_CLAMP {
        Evpi {
            value: 0.0,
            clamped: true,
        }
    } else {
        Evpi {
            value: raw,
            clamped: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn brute_c(risks: &[f64], y: &[bool]) -> f64 {
        let mut doubled = 0u64;
        let mut pairs = 0u64;
        for i in 0..y.len() {
            for j in 0..y.len() {
                if y[i] && !y[j] {
                    pairs += 1;
                    if risks[i] > risks[j] {
                        doubled += 2;
                    } else if risks[i] == risks[j] {
                        doubled += 1;
                    }
                }
            }
        }
        doubled as f64 / (2 * pairs) as f64
    }

    #[test]
    fn c_statistic_extremes() {
        let y = [false, false, true, true];
        assert_eq!(c_statistic(&[0.1, 0.2, 0.3, 0.4], &y).unwrap(), 1.0);
        assert_eq!(c_statistic(&[0.3; 4], &y).unwrap(), 0.5);
        assert!(matches!(
            c_statistic(&[0.1, 0.2], &[true, true]),
            Err(Error::DegenerateOutcome)
        ));
    }

    #[test]
    fn c_statistic_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let n = 40;
        let risks: Vec<f64> = (0..n)
            .map(|_| (rng.random_range(0..15) as f64 + 0.5) / 16.0)
            .collect();
        let mut y: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        y[0] = true;
        y[1] = false;
        assert_eq!(c_statistic(&risks, &y).unwrap(), brute_c(&risks, &y));
    }

    #[test]
    fn percentile_of_evenly_spaced_column() {
        // 201 values i/200: position 0.025 * 200 = 5 and 0.975 * 200 = 195
        // land exactly on order statistics 5/200 and 195/200.
        let col: Vec<f64> = (0..=200).map(|i| i as f64 / 200.0).collect();
        assert_abs_diff_eq!(percentile_sorted(&col, 0.025), 0.025, epsilon = 1e-15);
        assert_abs_diff_eq!(percentile_sorted(&col, 0.975), 0.975, epsilon = 1e-15);
        // Interpolated case: 4 values, q = 0.025 -> position 0.075.
        let v = [0.1, 0.2, 0.4, 0.8];
        assert_abs_diff_eq!(
            percentile_sorted(&v, 0.025),
            0.1 + 0.075 * 0.1,
            epsilon = 1e-15
        );
    }

    fn matrix_from_columns(original: Vec<f64>, cols: &[Vec<f64>]) -> StabilityMatrix {
        let b = cols[0].len();
        let n = cols.len();
        let mut m = Matrix::zeros(b, n);
        for (i, c) in cols.iter().enumerate() {
            for (r, &v) in c.iter().enumerate() {
                m.row_mut(r)[i] = v;
            }
        }
        StabilityMatrix::new(original, m).unwrap()
    }

    #[test]
    fn ui_and_delta_simple_cases() {
        let m = matrix_from_columns(vec![0.3], &[vec![0.3; 50]]);
        assert_eq!(ui_bounds(&m), vec![(0.3, 0.3)]);
        assert_eq!(mean_ui_width(&m).mean, 0.0);
        assert_eq!(delta_stat(&m).0, vec![0.0]);

        let m = matrix_from_columns(
            vec![0.5, 0.5],
            &[vec![0.4, 0.4, 0.6, 0.6], vec![0.3, 0.3, 0.7, 0.7]],
        );
        let w = ui_widths(&m);
        assert_abs_diff_eq!(w[0], 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(w[1], 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(mean_ui_width(&m).mean, 0.3, epsilon = 1e-12);
    }

    #[test]
    fn delta_definition() {
        // Bounds (0.2, 0.5) around 0.3 need a column whose 2.5/97.5
        // percentiles are exactly those: a constant-ends column of 41 values.
        let mut col = vec![0.2; 2];
        col.extend(vec![0.3; 37]);
        col.extend(vec![0.5; 2]);
        let m = matrix_from_columns(vec![0.3], &[col]);
        assert_eq!(ui_bounds(&m), vec![(0.2, 0.5)]);
        assert_abs_diff_eq!(delta_stat(&m).0[0], 0.2, epsilon = 1e-15);
    }

    #[test]
    fn misclassification_cases() {
        let cfg = UtilityConfig::default();
        let mut col = vec![0.05; 30];
        col.extend(vec![0.2; 170]);
        let m = matrix_from_columns(vec![0.12], &[col]);
        assert_abs_diff_eq!(misclassification_prob(&m, &cfg).0[0], 0.15, epsilon = 1e-15);

        let m = matrix_from_columns(vec![0.1], &[vec![0.1; 20]]);
        assert_eq!(misclassification_prob(&m, &cfg).0[0], 0.0);

        let m = matrix_from_columns(vec![0.3], &[vec![0.2, 0.5, 0.9]]);
        assert_eq!(misclassification_prob(&m, &cfg).0[0], 0.0);
    }

    #[test]
    fn net_benefit_single_individual() {
        let cfg = UtilityConfig::default();
        assert_abs_diff_eq!(
            nb_all(&[0.3], &cfg),
            0.3 - 0.7 * (0.1 / 0.9),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            nb_all(&[0.3], &cfg),
            0.222_222_222_222_222_2,
            epsilon = 1e-15
        );
        let t = [0.05, 0.3, 0.11];
        assert_eq!(nb_model(&t, &t, &cfg).unwrap(), nb_max(&t, &cfg));
        assert!(nb_model(&t, &t[..2], &cfg).is_err());
    }

    #[test]
    fn evpi_arithmetic() {
        assert_eq!(evpi(0.01, 0.05, 0.05).value, 0.0);
        assert_abs_diff_eq!(evpi(-0.2, 0.046, 0.05).value, 0.004, epsilon = 1e-15);
        let e = evpi(0.0, 0.05, 0.05 - 1e-15);
        assert!(e.clamped && e.value == 0.0);
    }

    #[test]
    fn calibration_slope_constant_logit() {
        assert!(matches!(
            calibration_slope(&[0.2; 4], &[true, false, true, false]),
            Err(Error::ConstantLogit)
        ));
    }
}
