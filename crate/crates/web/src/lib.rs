//! Browser bindings: a priori sample size, a small learning-curve run and a
//! bootstrap stability scatter, each returning text ready for the page.

use std::fmt::Write as _;

use wasm_bindgen::prelude::*;

use seqsize::bootstrap::harrell_bootstrap;
use seqsize::datagen::{generate, GeneratorSpec};
use seqsize::fixed_size::{minimum_sample_size, FixedSizeInputs};
use seqsize::io::{fmt_sig6, render_learning_curve_svg, SvgOptions};
use seqsize::metrics::{delta_stat, mean_ui_width, misclassification_prob, UtilityConfig};
use seqsize::model::Cohort;
use seqsize::rng::Stream;
use seqsize::sequential::{run_sequential, SequentialConfig, StoppingRule};
use seqsize::strategies::{LambdaGrid, StrategyKind, StrategySpec};
use seqsize::{Error, Result};

/// Largest synthetic cohort the page will build; keeps the tab responsive.
pub const MAX_DEMO_N: usize = 5000;
/// Bootstrap risks drawn in the scatter; the rest are summarised only.
const MAX_SCATTER_POINTS: usize = 6000;
/// Stream domain for the stability demo, apart from recruitment draws.
const STABILITY_DOMAIN: u64 = 0x5354_4142;

fn demo_cohort(n: usize, seed: u64) -> Result<Cohort> {
    if !(20..=MAX_DEMO_N).contains(&n) {
        return Err(Error::Config(format!(
            "demo cohort size must be in 20..={MAX_DEMO_N}, got {n}"
        )));
    }
    generate(&GeneratorSpec {
        n,
        seed,
        ..GeneratorSpec::default()
    })
}

/// Lighter-weight strategy settings than the command line defaults.
fn demo_strategy(kind: &str) -> Result<StrategySpec> {
    let kind: StrategyKind = kind.parse()?;
    let mut spec = StrategySpec::new(kind);
    spec.inner_bootstrap_b = 50;
    spec.cv_folds = 5;
    spec.lambda_grid = LambdaGrid::Auto {
        count: 30,
        min_ratio: 1e-3,
    };
    Ok(spec)
}

/// Fixed sample size criteria as a JSON object.
pub fn fixed_size_json(
    prevalence: f64,
    c_statistic: f64,
    parameters: usize,
    mc_draws: usize,
) -> Result<String> {
    let inputs = FixedSizeInputs {
        prevalence,
        c_statistic,
        parameters,
        mc_draws,
        ..FixedSizeInputs::default()
    };
    let result = minimum_sample_size(&inputs)?;
    serde_json::to_string(&serde_json::json!({ "inputs": inputs, "result": result }))
        .map_err(|e| Error::Config(e.to_string()))
}

/// Learning curve SVG for a synthetic cohort of `n_max`, one rule per line
/// of `rules` (e.g. `corrected_slope >= 0.9 k=2`).
pub fn learning_curve_svg(
    seed: u64,
    n_max: usize,
    b: usize,
    strategy: &str,
    rules: &str,
) -> Result<String> {
    let cohort = demo_cohort(n_max, seed)?;
    let rules = rules
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::parse)
        .collect::<Result<Vec<StoppingRule>>>()?;
    let spec = demo_strategy(strategy)?;
    let mut cfg = SequentialConfig::new(spec, rules, seed);
    cfg.n_max = n_max;
    cfg.b = b;
    let curve = run_sequential(&cohort, &cfg)?;
    let mut options = SvgOptions::for_rules(&curve);
    options.title = Some(format!(
        "Learning curves ({}, B={b}, seed {seed})",
        strategy
    ));
    render_learning_curve_svg(&curve, &options)
}

/// Scatter of bootstrap risks against original risks for the first `n`
/// recruits, with the decision threshold and a summary caption.
pub fn stability_svg(
    seed: u64,
    n: usize,
    b: usize,
    strategy: &str,
    threshold: f64,
) -> Result<String> {
    let cohort = demo_cohort(n, seed)?;
    let cfg = UtilityConfig::new(threshold)?;
    let spec = demo_strategy(strategy)?;
    let r = harrell_bootstrap(
        &cohort,
        &spec,
        b,
        &cfg,
        Stream::new(seed).child(STABILITY_DOMAIN),
    )?;
    let m = &r.stability;
    let ui = mean_ui_width(m).mean;
    let (_, delta) = delta_stat(m);
    let (_, mis) = misclassification_prob(m, &cfg);

    let (size, pad) = (480.0, 48.0);
    let scale = |v: f64| pad + v.clamp(0.0, 1.0) * (size - 2.0 * pad);
    let flip = |v: f64| size - scale(v);
    let mut svg = String::new();
    let _ = write!(
        svg,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{h}" viewBox="0 0 {size} {h}" font-family="sans-serif" font-size="11">"##,
        h = size + 40.0
    );
    let _ = write!(
        svg,
        r##"<rect class="frame" x="{pad}" y="{pad}" width="{w}" height="{w}" fill="none" stroke="#888"/>"##,
        w = size - 2.0 * pad
    );
    let _ = write!(
        svg,
        r##"<line class="identity" x1="{}" y1="{}" x2="{}" y2="{}" stroke="#bbb"/>"##,
        scale(0.0),
        flip(0.0),
        scale(1.0),
        flip(1.0)
    );
    let _ = write!(
        svg,
        r##"<line class="threshold" data-threshold="{t}" x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="#c33" stroke-dasharray="4 3"/><line class="threshold" x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="#c33" stroke-dasharray="4 3"/>"##,
        flip(0.0),
        flip(1.0),
        scale(0.0),
        scale(1.0),
        t = fmt_sig6(threshold),
        x = scale(threshold),
        y = flip(threshold)
    );
    let total = m.replicates() * m.individuals();
    let stride = total.div_ceil(MAX_SCATTER_POINTS).max(1);
    svg.push_str(r##"<g class="points" fill="#2a6fb0" fill-opacity="0.25">"##);
    for (k, (rep, i)) in (0..m.replicates())
        .flat_map(|rep| (0..m.individuals()).map(move |i| (rep, i)))
        .enumerate()
    {
        if k % stride == 0 {
            let _ = write!(
                svg,
                r#"<circle cx="{:.1}" cy="{:.1}" r="1.5"/>"#,
                scale(m.original_risks()[i]),
                flip(m.boot_risks().get(rep, i))
            );
        }
    }
    svg.push_str("</g>");
    let _ = write!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">original model risk</text><text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">bootstrap model risk</text>"#,
        size / 2.0,
        size - 14.0,
        size / 2.0,
        size / 2.0
    );
    let _ = write!(
        svg,
        r#"<text class="summary" x="{pad}" y="{}">n={n}, B={b}: mean UI width {}, mean delta {}, mean misclassification {}, EVPI {}</text>"#,
        size + 24.0,
        fmt_sig6(ui),
        fmt_sig6(delta.mean),
        fmt_sig6(mis.mean),
        fmt_sig6(r.evpi)
    );
    svg.push_str("</svg>");
    Ok(svg)
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = fixedSize)]
pub fn fixed_size_js(
    prevalence: f64,
    c_statistic: f64,
    parameters: usize,
    mc_draws: usize,
) -> std::result::Result<String, JsError> {
    fixed_size_json(prevalence, c_statistic, parameters, mc_draws).map_err(js)
}

#[wasm_bindgen(js_name = learningCurveSvg)]
pub fn learning_curve_svg_js(
    seed: u32,
    n_max: usize,
    b: usize,
    strategy: &str,
    rules: &str,
) -> std::result::Result<String, JsError> {
    learning_curve_svg(u64::from(seed), n_max, b, strategy, rules).map_err(js)
}

#[wasm_bindgen(js_name = stabilitySvg)]
pub fn stability_svg_js(
    seed: u32,
    n: usize,
    b: usize,
    strategy: &str,
    threshold: f64,
) -> std::result::Result<String, JsError> {
    stability_svg(u64::from(seed), n, b, strategy, threshold).map_err(js)
}
