//! Model development strategies: unpenalised maximum likelihood, uniform
//! shrinkage (heuristic or bootstrap-estimated factor) and cross-validated
//! LASSO. Each is a pure function of the cohort and a [`Stream`].

use serde::{Deserialize, Serialize};

use crate::bootstrap::harrell_bootstrap;
use crate::error::{Error, Result};
use crate::lasso::{default_lambda_grid, lasso_fit, solve, LassoState, Standardized};
use crate::matrix::Matrix;
use crate::metrics::{evpi, nb_all, nb_max, nb_model, UtilityConfig};
use crate::model::{
    fit_irls, fit_logistic, linear_predictor, lr_chi2, predict_risk, Cohort, FittedModel,
};
use crate::rng::Stream;

pub const DEFAULT_INNER_B: usize = 200;
pub const DEFAULT_CV_FOLDS: usize = 10;
pub const DEFAULT_LAMBDA_COUNT: usize = 100;
pub const DEFAULT_LAMBDA_MIN_RATIO: f64 = 1e-4;
const FOLD_ATTEMPTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Unpenalised,
    HeuristicShrinkage,
    BootstrapShrinkage,
    Lasso,
}

impl StrategyKind {
    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::Unpenalised => "unpenalised",
            StrategyKind::HeuristicShrinkage => "heuristic_shrinkage",
            StrategyKind::BootstrapShrinkage => "bootstrap_shrinkage",
            StrategyKind::Lasso => "lasso",
        }
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unpenalised" | "unpenalized" => Ok(StrategyKind::Unpenalised),
            "heuristic_shrinkage" => Ok(StrategyKind::HeuristicShrinkage),
            "bootstrap_shrinkage" => Ok(StrategyKind::BootstrapShrinkage),
            "lasso" => Ok(StrategyKind::Lasso),
            other => Err(Error::Config(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaGrid {
    /// `count` log-spaced values from lambda_max down to `min_ratio * lambda_max`,
    /// recomputed for every cohort the strategy is applied to.
    Auto {
        count: usize,
        min_ratio: f64,
    },
    Explicit(Vec<f64>),
}

impl Default for LambdaGrid {
    fn default() -> Self {
        LambdaGrid::Auto {
            count: DEFAULT_LAMBDA_COUNT,
            min_ratio: DEFAULT_LAMBDA_MIN_RATIO,
        }
    }
}

impl LambdaGrid {
    pub fn resolve(&self, cohort: &Cohort) -> Vec<f64> {
        match self {
            LambdaGrid::Auto { count, min_ratio } => {
                default_lambda_grid(cohort, *count, *min_ratio)
            }
            LambdaGrid::Explicit(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    /// Inner bootstrap replicates for the bootstrap shrinkage factor.
    pub inner_bootstrap_b: usize,
    pub cv_folds: usize,
    pub lambda_grid: LambdaGrid,
}

impl StrategySpec {
    pub fn new(kind: StrategyKind) -> Self {
        Self {
            kind,
            inner_bootstrap_b: DEFAULT_INNER_B,
            cv_folds: DEFAULT_CV_FOLDS,
            lambda_grid: LambdaGrid::default(),
        }
    }

    pub fn unpenalised() -> Self {
        Self::new(StrategyKind::Unpenalised)
    }

    pub fn heuristic_shrinkage() -> Self {
        Self::new(StrategyKind::HeuristicShrinkage)
    }

    pub fn bootstrap_shrinkage(inner_b: usize) -> Self {
        Self {
            inner_bootstrap_b: inner_b,
            ..Self::new(StrategyKind::BootstrapShrinkage)
        }
    }

    pub fn lasso(cv_folds: usize, lambda_grid: LambdaGrid) -> Self {
        Self {
            cv_folds,
            lambda_grid,
            ..Self::new(StrategyKind::Lasso)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.inner_bootstrap_b < 1 {
            return Err(Error::Config(
                "inner bootstrap count must be at least 1".into(),
            ));
        }
        if self.cv_folds < 2 {
            return Err(Error::Config(
                "cross-validation needs at least 2 folds".into(),
            ));
        }
        match &self.lambda_grid {
            LambdaGrid::Auto { count, min_ratio } => {
                if *count < 1 || !(*min_ratio > 0.0 && *min_ratio < 1.0) {
                    return Err(Error::Config(
                        "lambda grid needs count >= 1 and 0 < min_ratio < 1".into(),
                    ));
                }
            }
            LambdaGrid::Explicit(v) => {
                if v.is_empty()
                    || v.iter().any(|l| !(*l >= 0.0))
                    || v.windows(2).any(|w| w[1] >= w[0])
                {
                    return Err(Error::Config(
                        "explicit lambda grid must be non-empty, non-negative and strictly descending".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// A developed model plus strategy-specific by-products.
#[derive(Debug, Clone, PartialEq)]
pub struct Development {
    pub model: FittedModel,
    /// EVPI computed inside a bootstrap-shrinkage development from its own
    /// inner bootstrap.
    pub inner_evpi: Option<f64>,
    /// Set when the heuristic factor hit a zero chi-squared.
    pub zero_chi2: bool,
}

impl Development {
    fn plain(model: FittedModel) -> Self {
        Self {
            model,
            inner_evpi: None,
            zero_chi2: false,
        }
    }
}

/// Applies the strategy in `spec` to `cohort`.
pub fn develop(spec: &StrategySpec, cohort: &Cohort, stream: Stream) -> Result<FittedModel> {
    develop_with(spec, cohort, stream, &UtilityConfig::default()).map(|d| d.model)
}

/// As [`develop`], also returning by-products. `utility` is only used by the
/// bootstrap-shrinkage strategy for its per-model EVPI.
pub fn develop_with(
    spec: &StrategySpec,
    cohort: &Cohort,
    stream: Stream,
    utility: &UtilityConfig,
) -> Result<Development> {
    cohort.check_fittable()?;
    match spec.kind {
        StrategyKind::Unpenalised => fit_logistic(cohort, None).map(Development::plain),
        StrategyKind::HeuristicShrinkage => {
            let full = fit_logistic(cohort, None)?;
            let chi2 = lr_chi2(&full, cohort)?;
            let h = heuristic_shrinkage_factor(chi2, cohort.p().max(1));
            let mut model = apply_uniform_shrinkage(&full, h.value, cohort)?;
            model.strategy = StrategyKind::HeuristicShrinkage;
            Ok(Development {
                model,
                inner_evpi: None,
                zero_chi2: h.zero_chi2,
            })
        }
        StrategyKind::BootstrapShrinkage => {
            bootstrap_shrinkage_with(cohort, spec.inner_bootstrap_b, stream, utility)
        }
        StrategyKind::Lasso => lasso_cv_develop(cohort, spec.cv_folds, &spec.lambda_grid, stream)
            .map(Development::plain),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeuristicFactor {
    pub value: f64,
    /// The chi-squared was numerically zero; the factor was set to 0 instead
    /// of dividing.
    pub zero_chi2: bool,
}

/// `(chi2 - df) / chi2`, clamped to `[0, 1]`.
pub fn heuristic_shrinkage_factor(chi2: f64, df: usize) -> HeuristicFactor {
    if !(chi2 >= 1e-12) {
        return HeuristicFactor {
            value: 0.0,
            zero_chi2: true,
        };
    }
    HeuristicFactor {
        value: ((chi2 - df as f64) / chi2).clamp(0.0, 1.0),
        zero_chi2: false,
    }
}

/// Multiplies every slope by `s` and re-estimates the intercept with the
/// shrunk linear predictor as an offset.
pub fn apply_uniform_shrinkage(
    model: &FittedModel,
    s: f64,
    cohort: &Cohort,
) -> Result<FittedModel> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::InvalidInput(format!(
            "shrinkage factor must lie in [0, 1], got {s}"
        )));
    }
    let offset: Vec<f64> = linear_predictor(model, cohort.x())?
        .into_iter()
        .map(|lp| s * (lp - model.intercept))
        .collect();
    let refit = fit_irls(&Matrix::zeros(cohort.n(), 0), cohort.y(), Some(&offset))?;
    Ok(FittedModel {
        intercept: refit.beta[0],
        coefficients: model.coefficients.iter().map(|b| s * b).collect(),
        strategy: model.strategy,
        shrinkage_factor: Some(s),
        penalty: model.penalty,
        converged: true,
        iterations: refit.iterations,
    })
}

/// Uniform shrinkage by the bootstrap-corrected calibration slope of the
/// unpenalised model.
pub fn bootstrap_shrinkage_develop(
    cohort: &Cohort,
    inner_b: usize,
    stream: Stream,
) -> Result<FittedModel> {
    bootstrap_shrinkage_with(cohort, inner_b, stream, &UtilityConfig::default()).map(|d| d.model)
}

fn bootstrap_shrinkage_with(
    cohort: &Cohort,
    inner_b: usize,
    stream: Stream,
    utility: &UtilityConfig,
) -> Result<Development> {
    let inner = harrell_bootstrap(
        cohort,
        &StrategySpec::unpenalised(),
        inner_b,
        utility,
        stream,
    )?;
    let slope = inner.corrected.calibration_slope;
    if !slope.is_finite() {
        return Err(Error::ConstantLogit);
    }
    let mut model = apply_uniform_shrinkage(&inner.original, slope.clamp(0.0, 1.0), cohort)?;
    model.strategy = StrategyKind::BootstrapShrinkage;

    // EVPI of this shrunk model, with the inner replicates as truth proxies.
    let decisions = predict_risk(&model, cohort.x())?;
    let b = inner.stability.replicates() as f64;
    let (mut all, mut with_model, mut max) = (0.0, 0.0, 0.0);
    for truth in inner.stability.boot_risks().iter_rows() {
        all += nb_all(truth, utility);
        with_model += nb_model(&decisions, truth, utility)?;
        max += nb_max(truth, utility);
    }
    Ok(Development {
        model,
        inner_evpi: Some(evpi(all / b, with_model / b, max / b).value),
        zero_chi2: false,
    })
}

/// Stratified fold labels: events and non-events are shuffled separately and
/// dealt round-robin, so every fold gets `floor` or `ceil` of each class.
fn stratified_folds(y: &[bool], folds: usize, stream: Stream) -> Result<Vec<usize>> {
    let events: Vec<usize> = (0..y.len()).filter(|&i| y[i]).collect();
    let non_events: Vec<usize> = (0..y.len()).filter(|&i| !y[i]).collect();
    for attempt in 0..FOLD_ATTEMPTS {
        let s = stream.child(attempt as u64);
        let mut labels = vec![0; y.len()];
        let pe = s.child(0).permutation(events.len());
        let pn = s.child(1).permutation(non_events.len());
        for (k, &pos) in pe.iter().enumerate() {
            labels[events[pos]] = k % folds;
        }
        for (k, &pos) in pn.iter().enumerate() {
            labels[non_events[pos]] = (events.len() + k) % folds;
        }
        let valid = (0..folds).all(|f| {
            let held_events = (0..y.len()).filter(|&i| labels[i] == f && y[i]).count();
            let held = labels.iter().filter(|&&l| l == f).count();
            let train_events = events.len() - held_events;
            let train = y.len() - held;
            held_events > 0 && held_events < held && train_events > 0 && train_events < train
        });
        if valid {
            return Ok(labels);
        }
    }
    Err(Error::UnsplittableCohort { folds })
}

/// Cross-validated mean squared error (probability scale) for each penalty.
fn cv_errors(cohort: &Cohort, lambdas: &[f64], labels: &[usize], folds: usize) -> Vec<f64> {
    let mut totals = vec![0.0; lambdas.len()];
    for f in 0..folds {
        let train_rows: Vec<usize> = (0..cohort.n()).filter(|&i| labels[i] != f).collect();
        let test_rows: Vec<usize> = (0..cohort.n()).filter(|&i| labels[i] == f).collect();
        let train = cohort.select(&train_rows);
        let test = cohort.select(&test_rows);
        let std = Standardized::new(train.x());
        let mut state = LassoState::null(train.y(), train.p());
        let mut broken = false;
        for (k, &lambda) in lambdas.iter().enumerate() {
            if broken || solve(&std, train.y(), lambda, &mut state).is_err() {
                // Smaller penalties only move further toward separation.
                broken = true;
                totals[k] = f64::INFINITY;
                continue;
            }
            let (intercept, coefficients) = std.to_original(&state);
            let m = FittedModel {
                intercept,
                coefficients,
                ..FittedModel::intercept_only(0.0, 0, StrategyKind::Lasso)
            };
            let risks = predict_risk(&m, test.x()).expect("fold shares the cohort's columns");
            let mse = risks
                .iter()
                .zip(test.y())
                .map(|(p, &yi)| (f64::from(u8::from(yi)) - p).powi(2))
                .sum::<f64>()
                / test.n() as f64;
            totals[k] += mse;
        }
    }
    totals.iter().map(|t| t / folds as f64).collect()
}

/// LASSO with the penalty chosen by stratified `folds`-fold cross-validation
/// on mean squared error of the predicted risks.
pub fn lasso_cv_develop(
    cohort: &Cohort,
    folds: usize,
    grid: &LambdaGrid,
    stream: Stream,
) -> Result<FittedModel> {
    if folds < 2 {
        return Err(Error::Config(
            "cross-validation needs at least 2 folds".into(),
        ));
    }
    cohort.check_fittable()?;
    let mut lambdas = grid.resolve(cohort);
    lambdas.sort_by(|a, b| b.total_cmp(a));
    let labels = stratified_folds(cohort.y(), folds, stream)?;
    let errors = cv_errors(cohort, &lambdas, &labels, folds);
    let best = errors
        .iter()
        .enumerate()
        .fold(0, |best, (k, &e)| if e < errors[best] { k } else { best });
    if !errors[best].is_finite() {
        return Err(Error::NonConvergence { iterations: 0 });
    }
    lasso_fit(cohort, lambdas[best])
}
