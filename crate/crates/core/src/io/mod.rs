//! File formats: cohort CSV, learning-curve CSV/JSON, SVG plots and the run
//! configuration.

pub mod cohort;
pub mod config;
pub mod curve;
pub mod svg;

pub use cohort::{read_cohort, read_cohort_csv, write_cohort, write_cohort_csv, CohortFile};
pub use config::RunConfig;
pub use curve::{
    curve_csv, curve_json, read_curve_csv, read_curve_json, write_learning_curve, CurveDocument,
    CurveFormat, CURVE_COLUMNS,
};
pub use svg::{render_learning_curve_svg, SvgOptions};

/// `v` rounded to 6 significant digits.
pub fn round_sig6(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.5e}").parse().expect("formatted float parses")
}

/// Shortest decimal text of `v` at 6 significant digits; `NaN` for NaN.
pub fn fmt_sig6(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        round_sig6(v).to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt_sig6(0.123456789), "0.123457");
        assert_eq!(fmt_sig6(1234567.0), "1234570");
        assert_eq!(fmt_sig6(0.000012345678), "0.0000123457");
        assert_eq!(fmt_sig6(0.9), "0.9");
        assert_eq!(fmt_sig6(-2.5), "-2.5");
        assert_eq!(fmt_sig6(0.0), "0");
        assert_eq!(fmt_sig6(f64::NAN), "NaN");
        assert_eq!(fmt_sig6(f64::INFINITY), "inf");
    }
}
