//! Sequential recruitment replay: learning curves over growing development
//! samples and stopping rules confirmed over consecutive increments.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bootstrap::{corrected_performance, harrell_bootstrap, BootstrapResult};
use crate::error::{Error, Result};
use crate::metrics::{delta_stat, mean_ui_width, misclassification_prob, UtilityConfig};
use crate::model::Cohort;
use crate::rng::Stream;
use crate::strategies::StrategySpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    CorrectedSlope,
    OptimismC,
    MeanUiWidth,
    MeanDelta,
    Evpi,
    MeanMisclass,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::CorrectedSlope,
        Metric::OptimismC,
        Metric::MeanUiWidth,
        Metric::MeanDelta,
        Metric::Evpi,
        Metric::MeanMisclass,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::CorrectedSlope => "corrected_slope",
            Metric::OptimismC => "optimism_c",
            Metric::MeanUiWidth => "mean_ui_width",
            Metric::MeanDelta => "mean_delta",
            Metric::Evpi => "evpi",
            Metric::MeanMisclass => "mean_misclass",
        }
    }

    pub fn value(&self, record: &IncrementRecord) -> f64 {
        match self {
            Metric::CorrectedSlope => record.corrected_slope,
            Metric::OptimismC => record.optimism_c,
            Metric::MeanUiWidth => record.mean_ui_width,
            Metric::MeanDelta => record.mean_delta,
            Metric::Evpi => record.evpi,
            Metric::MeanMisclass => record.mean_misclass,
        }
    }

    /// Across-individual 2.5th and 97.5th percentiles, for the
    /// individual-level metrics.
    pub fn band(&self, record: &IncrementRecord) -> Option<(f64, f64)> {
        match self {
            Metric::MeanUiWidth => Some((record.ui_width_p2_5, record.ui_width_p97_5)),
            Metric::MeanDelta => Some((record.delta_p2_5, record.delta_p97_5)),
            Metric::MeanMisclass => Some((record.misclass_p2_5, record.misclass_p97_5)),
            _ => None,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown metric `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    Ge,
    Le,
}

impl Comparator {
    pub fn holds(&self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Ge => value >= threshold,
            Comparator::Le => value <= threshold,
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            Comparator::Ge => ">=",
            Comparator::Le => "<=",
        }
    }
}

pub const DEFAULT_CONFIRMATIONS: usize = 2;
/// Keeps stage streams apart from other users of the same seed (the cohort
/// generator uses the low children).
const STAGE_DOMAIN: u64 = 0x0053_5441_4745;

/// `metric comparator threshold` held over `k` consecutive increments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    pub metric: Metric,
    pub comparator: Comparator,
    pub threshold: f64,
    pub k: usize,
}

impl StoppingRule {
    pub fn new(metric: Metric, comparator: Comparator, threshold: f64, k: usize) -> Result<Self> {
        let rule = Self {
            metric,
            comparator,
            threshold,
            k,
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config(format!("rule `{self}` needs k >= 1")));
        }
        if !self.threshold.is_finite() {
            return Err(Error::Config(format!(
                "rule `{self}` has a non-finite threshold"
            )));
        }
        Ok(())
    }

    pub fn passes(&self, record: &IncrementRecord) -> bool {
        record.usable
            && self
                .comparator
                .holds(self.metric.value(record), self.threshold)
    }

    /// Column-safe identifier, e.g. `corrected_slope_ge_0.9_k2`.
    pub fn label(&self) -> String {
        let cmp = match self.comparator {
            Comparator::Ge => "ge",
            Comparator::Le => "le",
        };
        format!("{}_{cmp}_{}_k{}", self.metric, self.threshold, self.k)
    }
}

impl fmt::Display for StoppingRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} k={}",
            self.metric,
            self.comparator.symbol(),
            self.threshold,
            self.k
        )
    }
}

/// Parses `corrected_slope >= 0.9` with an optional trailing `k=3`.
impl FromStr for StoppingRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::Config(format!(
                "cannot parse rule `{s}`; expected `<metric> <>=|<=> <threshold> [k=<n>]`"
            ))
        };
        let tokens: Vec<&str> = s.split_whitespace().collect();
        let (metric, cmp, threshold, rest) = match tokens.as_slice() {
            [m, c, t, rest @ ..] => (m, c, t, rest),
            _ => return Err(bad()),
        };
        let comparator = match *cmp {
            ">=" => Comparator::Ge,
            "<=" => Comparator::Le,
            _ => return Err(bad()),
        };
        let threshold: f64 = threshold.parse().map_err(|_| bad())?;
        let k = match rest {
            [] => DEFAULT_CONFIRMATIONS,
            [k] => k
                .strip_prefix("k=")
                .and_then(|v| v.parse().ok())
                .ok_or_else(bad)?,
            _ => return Err(bad()),
        };
        StoppingRule::new(metric.parse()?, comparator, threshold, k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialConfig {
    pub n_initial: usize,
    pub n_new: usize,
    pub n_max: usize,
    pub b: usize,
    pub spec: StrategySpec,
    pub utility: UtilityConfig,
    pub rules: Vec<StoppingRule>,
    pub seed: u64,
    /// Stop as soon as every rule is confirmed instead of running to `n_max`.
    pub early_stop: bool,
}

impl SequentialConfig {
    pub fn new(spec: StrategySpec, rules: Vec<StoppingRule>, seed: u64) -> Self {
        Self {
            n_initial: 100,
            n_new: 100,
            n_max: 3000,
            b: 200,
            spec,
            utility: UtilityConfig::default(),
            rules,
            seed,
            early_stop: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_initial == 0 || self.n_new == 0 {
            return Err(Error::Config("n_initial and n_new must be positive".into()));
        }
        if self.n_initial > self.n_max {
            return Err(Error::Config(format!(
                "n_initial ({}) exceeds n_max ({})",
                self.n_initial, self.n_max
            )));
        }
        if self.b < 2 {
            return Err(Error::Config(
                "at least 2 bootstrap replicates are required".into(),
            ));
        }
        self.spec.validate()?;
        for rule in &self.rules {
            rule.validate()?;
        }
        Ok(())
    }

    /// Sample sizes visited for a cohort of `available` rows.
    pub fn sample_sizes(&self, available: usize) -> impl Iterator<Item = usize> {
        let last = self.n_max.min(available);
        (self.n_initial..=last).step_by(self.n_new)
    }
}

/// Serializes non-finite floats as `null` and reads `null` back as NaN.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementRecord {
    pub n: usize,
    /// False when the sample could not be fitted; all metrics are then NaN.
    pub usable: bool,
    #[serde(with = "nan_as_null")]
    pub apparent_c: f64,
    #[serde(with = "nan_as_null")]
    pub optimism_c: f64,
    #[serde(with = "nan_as_null")]
    pub corrected_c: f64,
    #[serde(with = "nan_as_null")]
    pub corrected_slope: f64,
    #[serde(with = "nan_as_null")]
    pub mean_ui_width: f64,
    #[serde(with = "nan_as_null")]
    pub ui_width_p2_5: f64,
    #[serde(with = "nan_as_null")]
    pub ui_width_p97_5: f64,
    #[serde(with = "nan_as_null")]
    pub mean_delta: f64,
    #[serde(with = "nan_as_null")]
    pub delta_p2_5: f64,
    #[serde(with = "nan_as_null")]
    pub delta_p97_5: f64,
    #[serde(with = "nan_as_null")]
    pub evpi: f64,
    #[serde(with = "nan_as_null")]
    pub mean_misclass: f64,
    #[serde(with = "nan_as_null")]
    pub misclass_p2_5: f64,
    #[serde(with = "nan_as_null")]
    pub misclass_p97_5: f64,
    /// One flag per rule, in rule order.
    pub passes: Vec<bool>,
    pub replicate_failures: usize,
}

impl IncrementRecord {
    pub fn unusable(n: usize) -> Self {
        let nan = f64::NAN;
        Self {
            n,
            usable: false,
            apparent_c: nan,
            optimism_c: nan,
            corrected_c: nan,
            corrected_slope: nan,
            mean_ui_width: nan,
            ui_width_p2_5: nan,
            ui_width_p97_5: nan,
            mean_delta: nan,
            delta_p2_5: nan,
            delta_p97_5: nan,
            evpi: nan,
            mean_misclass: nan,
            misclass_p2_5: nan,
            misclass_p97_5: nan,
            passes: Vec::new(),
            replicate_failures: 0,
        }
    }

    pub fn from_bootstrap(n: usize, result: &BootstrapResult, utility: &UtilityConfig) -> Self {
        let perf = corrected_performance(result);
        let width = mean_ui_width(&result.stability);
        let (_, delta) = delta_stat(&result.stability);
        let (_, misclass) = misclassification_prob(&result.stability, utility);
        Self {
            n,
            usable: true,
            apparent_c: result.apparent.c_statistic,
            optimism_c: perf.optimism_c,
            corrected_c: perf.corrected_c,
            corrected_slope: perf.corrected_slope,
            mean_ui_width: width.mean,
            ui_width_p2_5: width.p2_5,
            ui_width_p97_5: width.p97_5,
            mean_delta: delta.mean,
            delta_p2_5: delta.p2_5,
            delta_p97_5: delta.p97_5,
            evpi: result.evpi,
            mean_misclass: misclass.mean,
            misclass_p2_5: misclass.p2_5,
            misclass_p97_5: misclass.p97_5,
            passes: Vec::new(),
            replicate_failures: result.replicate_failures,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub rules: Vec<StoppingRule>,
    pub records: Vec<IncrementRecord>,
    pub n_stop_per_rule: Vec<Option<usize>>,
    pub n_stop_overall: Option<usize>,
}

impl LearningCurve {
    /// Builds a curve, recomputing pass flags and stop points from the rules.
    pub fn new(rules: Vec<StoppingRule>, mut records: Vec<IncrementRecord>) -> Self {
        for r in &mut records {
            r.passes = rules.iter().map(|rule| rule.passes(r)).collect();
        }
        Self::from_flagged(rules, records)
    }

    /// Builds a curve trusting the pass flags already stored in `records`,
    /// as when reading back values printed at reduced precision.
    pub fn from_flagged(rules: Vec<StoppingRule>, records: Vec<IncrementRecord>) -> Self {
        let ns: Vec<usize> = records.iter().map(|r| r.n).collect();
        let passes: Vec<Vec<bool>> = (0..rules.len())
            .map(|j| {
                records
                    .iter()
                    .map(|r| r.passes.get(j).copied().unwrap_or(false))
                    .collect()
            })
            .collect();
        let ks: Vec<usize> = rules.iter().map(|r| r.k).collect();
        let stops = stop_points(&ns, &passes, &ks);
        Self {
            rules,
            records,
            n_stop_per_rule: stops.per_rule,
            n_stop_overall: stops.overall,
        }
    }

    pub fn sample_sizes(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.n).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopPoints {
    pub per_rule: Vec<Option<usize>>,
    pub overall: Option<usize>,
}

/// Copy of `cohort` with a uniformly random recruitment order.
pub fn recruitment_stream(cohort: &Cohort, seed: u64) -> Cohort {
    let order: Vec<usize> = Stream::new(seed)
        .permutation(cohort.n())
        .into_iter()
        .map(|r| r + 1)
        .collect();
    cohort
        .with_order(order)
        .expect("a permutation is a valid order")
}

fn confirmed_from(passes: &[bool], t: usize, k: usize) -> bool {
    t + k <= passes.len() && passes[t..t + k].iter().all(|&p| p)
}

/// Per-rule stop points (first increment of the earliest run of `k` passes)
/// and the overall stop point (first increment from which every rule passes
/// through its own confirmation window).
pub fn evaluate_rules(records: &[IncrementRecord], rules: &[StoppingRule]) -> StopPoints {
    let passes: Vec<Vec<bool>> = rules
        .iter()
        .map(|rule| records.iter().map(|r| rule.passes(r)).collect())
        .collect();
    let ns: Vec<usize> = records.iter().map(|r| r.n).collect();
    let ks: Vec<usize> = rules.iter().map(|r| r.k).collect();
    stop_points(&ns, &passes, &ks)
}

/// Stop points from precomputed pass flags: `passes[r][t]` is whether rule
/// `r`, needing `ks[r]` consecutive passes, holds at sample size `ns[t]`.
pub fn stop_points(ns: &[usize], passes: &[Vec<bool>], ks: &[usize]) -> StopPoints {
    let per_rule = passes
        .iter()
        .zip(ks)
        .map(|(p, &k)| {
            (0..ns.len())
                .find(|&t| confirmed_from(p, t, k))
                .map(|t| ns[t])
        })
        .collect();
    let overall = if passes.is_empty() {
        None
    } else {
        (0..ns.len())
            .find(|&t| passes.iter().zip(ks).all(|(p, &k)| confirmed_from(p, t, k)))
            .map(|t| ns[t])
    };
    StopPoints { per_rule, overall }
}

/// Bootstrap results for the first `n` recruits, with the stage stream
/// derived from `seed` and `n` alone so stages never share randomness.
pub fn run_increment(cohort: &Cohort, cfg: &SequentialConfig, n: usize) -> Result<IncrementRecord> {
    let sample = cohort.first_recruited(n);
    let stream = Stream::new(cfg.seed).child(STAGE_DOMAIN).child(n as u64);
    match harrell_bootstrap(&sample, &cfg.spec, cfg.b, &cfg.utility, stream) {
        Ok(result) => Ok(IncrementRecord::from_bootstrap(n, &result, &cfg.utility)),
        Err(e) if e.is_fit_failure() => Ok(IncrementRecord::unusable(n)),
        Err(e) => Err(e),
    }
}

pub fn run_sequential(cohort: &Cohort, cfg: &SequentialConfig) -> Result<LearningCurve> {
    run_sequential_with(cohort, cfg, |_| {})
}

/// As [`run_sequential`], calling `progress` after each increment.
pub fn run_sequential_with(
    cohort: &Cohort,
    cfg: &SequentialConfig,
    mut progress: impl FnMut(&IncrementRecord),
) -> Result<LearningCurve> {
    cfg.validate()?;
    if cohort.n() < cfg.n_initial {
        return Err(Error::CohortTooSmall {
            rows: cohort.n(),
            needed: cfg.n_initial,
        });
    }
    let mut records = Vec::new();
    for n in cfg.sample_sizes(cohort.n()) {
        let record = run_increment(cohort, cfg, n)?;
        progress(&record);
        records.push(record);
        if cfg.early_stop && evaluate_rules(&records, &cfg.rules).overall.is_some() {
            break;
        }
    }
    Ok(LearningCurve::new(cfg.rules.clone(), records))
}
