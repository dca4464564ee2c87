use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use seqsize::datagen::{generate, GeneratorSpec};
use seqsize::fixed_size::{
    minimum_sample_size, FixedSizeInputs, DEFAULT_MC_DRAWS, DEFAULT_MC_SEED,
};
use seqsize::io::config::DataSource;
use seqsize::io::{
    read_cohort_csv, read_curve_csv, render_learning_curve_svg, write_cohort, write_cohort_csv,
    write_learning_curve, CurveFormat, RunConfig, SvgOptions,
};
use seqsize::sequential::{
    recruitment_stream, run_sequential_with, IncrementRecord, LearningCurve, Metric,
};
use seqsize::{Error, ErrorClass, Result};

#[derive(Parser)]
#[command(
    name = "seqsize",
    version,
    about = "Sequential sample size learning curves for clinical prediction models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// A-priori minimum sample size (shrinkage, optimism and overall risk criteria).
    FixedSize(FixedSizeArgs),
    /// Write a synthetic cohort CSV.
    Generate(GenerateArgs),
    /// Replay recruitment and write the learning curve.
    Run(RunArgs),
    /// Render a learning-curve CSV as SVG.
    Plot(PlotArgs),
}

#[derive(Args)]
struct FixedSizeArgs {
    #[arg(long)]
    prevalence: f64,
    #[arg(long)]
    cstat: f64,
    #[arg(long)]
    parameters: usize,
    #[arg(long, default_value_t = 0.9)]
    shrinkage: f64,
    #[arg(long, default_value_t = 0.05)]
    optimism: f64,
    #[arg(long, default_value_t = 0.05)]
    margin: f64,
    #[arg(long, default_value_t = DEFAULT_MC_DRAWS)]
    mc_draws: usize,
    #[arg(long, default_value_t = DEFAULT_MC_SEED)]
    mc_seed: u64,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 0.173)]
    prevalence: f64,
    #[arg(long, default_value_t = 0.67)]
    cstat: f64,
    #[arg(long, default_value_t = 6)]
    p: usize,
    #[arg(long, default_value_t = 0.0)]
    correlation: f64,
    /// Output path; standard output when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override a configuration key, e.g. `--set sequential.b=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Cohort CSV; overrides the configured data source.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Worker threads for the bootstrap; all cores when omitted.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    early_stop: bool,
    /// Suppress per-increment progress on standard error.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args)]
struct PlotArgs {
    /// Learning-curve CSV written by `run`.
    input: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    /// Comma-separated metrics; the metrics of the curve's rules by default.
    #[arg(long, value_delimiter = ',')]
    metrics: Vec<String>,
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Config => 2,
        ErrorClass::Data | ErrorClass::Io => 3,
        ErrorClass::Numerical => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::FixedSize(a) => fixed_size(a),
        Command::Generate(a) => generate_cmd(a),
        Command::Run(a) => run(a),
        Command::Plot(a) => plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn fixed_size(a: FixedSizeArgs) -> Result<()> {
    let inputs = FixedSizeInputs {
        prevalence: a.prevalence,
        c_statistic: a.cstat,
        parameters: a.parameters,
        shrinkage_target: a.shrinkage,
        optimism_target: a.optimism,
        risk_margin: a.margin,
        mc_draws: a.mc_draws,
        mc_seed: a.mc_seed,
    };
    let r = minimum_sample_size(&inputs)?;
    println!("Cox-Snell R2 {:.6} (max {:.6})", r.r2_cs, r.max_r2_cs);
    println!("{:<40} {:>8}", "criterion", "n");
    println!(
        "{:<40} {:>8}",
        format!("shrinkage >= {}", a.shrinkage),
        r.n_shrinkage
    );
    println!(
        "{:<40} {:>8}",
        format!("optimism in R2 <= {}", a.optimism),
        r.n_optimism
    );
    println!(
        "{:<40} {:>8}",
        format!("overall risk within +/-{}", a.margin),
        r.n_overall_risk
    );
    println!(
        "minimum sample size: n={}, events={}",
        r.n_total, r.n_events
    );
    Ok(())
}

fn generate_cmd(a: GenerateArgs) -> Result<()> {
    let spec = GeneratorSpec {
        n: a.n,
        target_prevalence: a.prevalence,
        target_c: a.cstat,
        p: a.p,
        seed: a.seed,
        correlation: a.correlation,
        coefficients: None,
    };
    let cohort = generate(&spec)?;
    match a.out {
        Some(path) => write_cohort_csv(&cohort, path),
        None => write_cohort(&cohort, std::io::stdout().lock()),
    }
}

fn progress_line(r: &IncrementRecord) -> String {
    if !r.usable {
        return format!("n={:<6} unusable (model could not be fitted)", r.n);
    }
    format!(
        "n={:<6} slope={:.3} optimism_c={:.3} ui_width={:.3} delta={:.3} evpi={:.5} misclass={:.3}",
        r.n,
        r.corrected_slope,
        r.optimism_c,
        r.mean_ui_width,
        r.mean_delta,
        r.evpi,
        r.mean_misclass
    )
}

fn resolve_config(a: &RunArgs) -> Result<RunConfig> {
    let mut overrides = a.overrides.clone();
    if let Some(seed) = a.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(data) = &a.data {
        overrides.push("data.source=\"csv\"".into());
        overrides.push(format!("data.csv={}", toml_string(data)));
    }
    for (key, path) in [("csv", &a.csv), ("json", &a.json), ("svg", &a.svg)] {
        if let Some(p) = path {
            overrides.push(format!("output.{key}={}", toml_string(p)));
        }
    }
    if a.early_stop {
        overrides.push("sequential.early_stop=true".into());
    }
    let config = match &a.config {
        Some(path) => RunConfig::load(path, &overrides)?,
        None => RunConfig::from_toml_with_overrides("", &overrides)?,
    };
    config.seed()?;
    Ok(config)
}

fn toml_string(p: &std::path::Path) -> String {
    toml::Value::String(p.display().to_string()).to_string()
}

fn run(a: RunArgs) -> Result<()> {
    let config = resolve_config(&a)?;
    let seq = config.sequential_config()?;
    let cohort = match config.data.source {
        DataSource::Generate => generate(&config.generator_spec()?)?,
        DataSource::Csv => {
            let path = config.data.csv.as_ref().expect("validated");
            let file = read_cohort_csv(path)?;
            if file.has_order {
                file.cohort
            } else {
                recruitment_stream(&file.cohort, seq.seed)
            }
        }
    };
    let quiet = a.quiet;
    let drive = || {
        run_sequential_with(&cohort, &seq, |r| {
            if !quiet {
                eprintln!("{}", progress_line(r));
            }
        })
    };
    let curve = match a.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::Config(format!("cannot start {w} workers: {e}")))?
            .install(drive)?,
        None => drive()?,
    };

    let echo = config.to_json();
    if let Some(path) = &config.output.csv {
        write_learning_curve(&curve, path, CurveFormat::Csv, &echo)?;
    }
    if let Some(path) = &config.output.json {
        write_learning_curve(&curve, path, CurveFormat::Json, &echo)?;
    }
    if let Some(path) = &config.output.svg {
        let options = SvgOptions {
            metrics: config.plot_metrics()?,
            title: Some(format!("Learning curves ({})", seq.spec.kind.name())),
            provenance: Some(config.to_toml()),
            ..SvgOptions::default()
        };
        std::fs::write(path, render_learning_curve_svg(&curve, &options)?)?;
    }
    print_summary(&curve);
    Ok(())
}

fn print_summary(curve: &LearningCurve) {
    use std::io::Write;
    let show = |n: Option<usize>| n.map_or_else(|| "not reached".to_string(), |n| n.to_string());
    // A closed pipe (e.g. `| head`) is not an error worth reporting.
    let mut out = std::io::stdout().lock();
    for (rule, n) in curve.rules.iter().zip(&curve.n_stop_per_rule) {
        let _ = writeln!(out, "N_stop {:<32} {}", rule.to_string(), show(*n));
    }
    let _ = writeln!(
        out,
        "N_stop {:<32} {}",
        "all rules",
        show(curve.n_stop_overall)
    );
}

fn plot(a: PlotArgs) -> Result<()> {
    let curve = read_curve_csv(std::fs::File::open(&a.input)?)?;
    let mut options = SvgOptions::for_rules(&curve);
    if !a.metrics.is_empty() {
        options.metrics = a
            .metrics
            .iter()
            .map(|m| m.parse())
            .collect::<Result<Vec<Metric>>>()?;
    }
    options.provenance = Some(format!("source: {}", a.input.display()));
    std::fs::write(&a.out, render_learning_curve_svg(&curve, &options)?)?;
    Ok(())
}
