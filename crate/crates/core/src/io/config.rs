//! Run configuration: one TOML file whose dotted keys can be overridden from
//! the command line (`sequential.b=50`, `strategy.kind="lasso"`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::GeneratorSpec;
use crate::error::{Error, Result};
use crate::metrics::UtilityConfig;
use crate::sequential::{Metric, SequentialConfig, StoppingRule};
use crate::strategies::{
    LambdaGrid, StrategyKind, StrategySpec, DEFAULT_CV_FOLDS, DEFAULT_INNER_B,
    DEFAULT_LAMBDA_COUNT, DEFAULT_LAMBDA_MIN_RATIO,
};

/// Population-level, individual-level and clinical-utility rules, each
/// confirmed over two consecutive increments.
pub const DEFAULT_RULES: [&str; 6] = [
    "corrected_slope >= 0.9 k=2",
    "optimism_c <= 0.02 k=2",
    "mean_ui_width <= 0.1 k=2",
    "mean_delta <= 0.05 k=2",
    "evpi <= 0.001 k=2",
    "mean_misclass <= 0.1 k=2",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    #[default]
    Generate,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub source: DataSource,
    /// Cohort CSV, required when `source = "csv"`.
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSection {
    pub n: usize,
    pub target_prevalence: f64,
    pub target_c: f64,
    pub p: usize,
    pub correlation: f64,
}

impl Default for GeneratorSection {
    fn default() -> Self {
        let g = GeneratorSpec::default();
        Self {
            n: g.n,
            target_prevalence: g.target_prevalence,
            target_c: g.target_c,
            p: g.p,
            correlation: g.correlation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequentialSection {
    pub n_initial: usize,
    pub n_new: usize,
    pub n_max: usize,
    pub b: usize,
    pub early_stop: bool,
}

impl Default for SequentialSection {
    fn default() -> Self {
        Self {
            n_initial: 100,
            n_new: 100,
            n_max: 3000,
            b: 200,
            early_stop: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategySection {
    pub kind: StrategyKind,
    pub inner_bootstrap_b: usize,
    pub cv_folds: usize,
    pub lambda_count: usize,
    pub lambda_min_ratio: f64,
    /// Explicit descending penalty grid; replaces the automatic one.
    pub lambdas: Option<Vec<f64>>,
}

impl Default for StrategySection {
    fn default() -> Self {
        Self {
            kind: StrategyKind::Unpenalised,
            inner_bootstrap_b: DEFAULT_INNER_B,
            cv_folds: DEFAULT_CV_FOLDS,
            lambda_count: DEFAULT_LAMBDA_COUNT,
            lambda_min_ratio: DEFAULT_LAMBDA_MIN_RATIO,
            lambdas: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
    pub svg: Option<PathBuf>,
    /// Metrics plotted in the SVG; empty means the metrics of the rules.
    pub metrics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub rules: Vec<String>,
    pub data: DataSection,
    pub generator: GeneratorSection,
    pub sequential: SequentialSection,
    pub strategy: StrategySection,
    pub utility: UtilityConfig,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            rules: DEFAULT_RULES.iter().map(|r| r.to_string()).collect(),
            data: DataSection::default(),
            generator: GeneratorSection::default(),
            sequential: SequentialSection::default(),
            strategy: StrategySection::default(),
            utility: UtilityConfig::default(),
            output: OutputSection::default(),
        }
    }
}

fn parse_table(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>()
        .map_err(|e| Error::Config(e.to_string()))
}

/// Value of a `key=value` override: any TOML literal, else a bare string.
fn override_value(raw: &str) -> toml::Value {
    let raw = raw.trim();
    parse_table(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("invalid override key `{key}`")));
    }
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut current = table;
    for part in parents {
        let entry = current
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        current = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{part}` is not a table")))?;
    }
    current.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_with_overrides::<&str>(text, &[])
    }

    /// Parses `text` after applying `key=value` overrides to its key tree.
    pub fn from_toml_with_overrides<S: AsRef<str>>(text: &str, overrides: &[S]) -> Result<Self> {
        let mut table = parse_table(text)?;
        for o in overrides {
            let o = o.as_ref();
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            set_dotted(&mut table, key, override_value(value))?;
        }
        let config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load<S: AsRef<str>>(path: impl AsRef<Path>, overrides: &[S]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("configuration serializes")
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("a seed is required (config `seed` or --seed)".into()))
    }

    pub fn stopping_rules(&self) -> Result<Vec<StoppingRule>> {
        self.rules.iter().map(|r| r.parse()).collect()
    }

    pub fn plot_metrics(&self) -> Result<Vec<Metric>> {
        if self.output.metrics.is_empty() {
            let mut metrics = Vec::new();
            for rule in self.stopping_rules()? {
                if !metrics.contains(&rule.metric) {
                    metrics.push(rule.metric);
                }
            }
            if metrics.is_empty() {
                metrics = Metric::ALL.to_vec();
            }
            return Ok(metrics);
        }
        self.output.metrics.iter().map(|m| m.parse()).collect()
    }

    pub fn strategy_spec(&self) -> StrategySpec {
        let s = &self.strategy;
        StrategySpec {
            kind: s.kind,
            inner_bootstrap_b: s.inner_bootstrap_b,
            cv_folds: s.cv_folds,
            lambda_grid: match &s.lambdas {
                Some(v) => LambdaGrid::Explicit(v.clone()),
                None => LambdaGrid::Auto {
                    count: s.lambda_count,
                    min_ratio: s.lambda_min_ratio,
                },
            },
        }
    }

    pub fn generator_spec(&self) -> Result<GeneratorSpec> {
        Ok(GeneratorSpec {
            seed: self.seed()?,
            ..self.generator_spec_unseeded()
        })
    }

    pub fn sequential_config(&self) -> Result<SequentialConfig> {
        let cfg = SequentialConfig {
            seed: self.seed()?,
            ..self.sequential_config_unseeded()?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks everything that does not need the seed.
    pub fn validate(&self) -> Result<()> {
        self.plot_metrics()?;
        self.generator_spec_unseeded().validate()?;
        if self.data.source == DataSource::Csv && self.data.csv.is_none() {
            return Err(Error::Config("data.source = \"csv\" needs data.csv".into()));
        }
        self.sequential_config_unseeded()?.validate()
    }

    fn generator_spec_unseeded(&self) -> GeneratorSpec {
        let g = &self.generator;
        GeneratorSpec {
            n: g.n,
            target_prevalence: g.target_prevalence,
            target_c: g.target_c,
            p: g.p,
            seed: 0,
            correlation: g.correlation,
            coefficients: None,
        }
    }

    fn sequential_config_unseeded(&self) -> Result<SequentialConfig> {
        let s = &self.sequential;
        Ok(SequentialConfig {
            n_initial: s.n_initial,
            n_new: s.n_new,
            n_max: s.n_max,
            b: s.b,
            spec: self.strategy_spec(),
            utility: UtilityConfig::new(self.utility.threshold)
                .map_err(|e| Error::Config(e.to_string()))?,
            rules: self.stopping_rules()?,
            seed: 0,
            early_stop: s.early_stop,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::from_toml_str("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.stopping_rules().unwrap().len(), 6);
        assert!(matches!(c.seed(), Err(Error::Config(_))));
    }

    #[test]
    fn sections_and_overrides() {
        let text = r#"
seed = 3
rules = ["corrected_slope >= 0.9"]

[sequential]
b = 50
n_max = 500

[strategy]
kind = "lasso"
"#;
        let c = RunConfig::from_toml_with_overrides(
            text,
            &[
                "sequential.b=20",
                "strategy.kind=heuristic_shrinkage",
                "output.svg=\"a.svg\"",
                "seed=9",
            ],
        )
        .unwrap();
        assert_eq!(c.seed, Some(9));
        assert_eq!(c.sequential.b, 20);
        assert_eq!(c.sequential.n_max, 500);
        assert_eq!(c.strategy.kind, StrategyKind::HeuristicShrinkage);
        assert_eq!(c.output.svg.as_deref(), Some(Path::new("a.svg")));
        let seq = c.sequential_config().unwrap();
        assert_eq!(seq.rules.len(), 1);
        assert_eq!(seq.seed, 9);
        assert_eq!(c.plot_metrics().unwrap(), vec![Metric::CorrectedSlope]);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            RunConfig::from_toml_str("sed = 1"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            RunConfig::from_toml_str("[sequential]\nbb = 1"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            RunConfig::from_toml_with_overrides("", &["strategy.foo=1"]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn invalid_values_rejected() {
        for text in [
            "rules = [\"slope >= 0.9\"]",
            "[sequential]\nn_initial = 500\nn_max = 100",
            "[utility]\nthreshold = 1.5",
            "[data]\nsource = \"csv\"",
            "[strategy]\nlambdas = [0.1, 0.2]",
        ] {
            assert!(
                matches!(RunConfig::from_toml_str(text), Err(Error::Config(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn echo_round_trips() {
        let c = RunConfig::from_toml_with_overrides("", &["seed=4", "strategy.lambdas=[0.5, 0.1]"])
            .unwrap();
        assert_eq!(RunConfig::from_toml_str(&c.to_toml()).unwrap(), c);
        assert_eq!(c.to_json()["seed"], 4);
    }
}
