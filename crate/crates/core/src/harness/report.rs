//! Report rendering: long-format CSV (`seed,method,metric,group,value`) and JSON.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::MetricsReport;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "seed,method,metric,group,value";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::InvalidArgument(format!("unknown report format {other:?}"))),
        }
    }
}

/// Nine significant digits, fixed notation for moderate magnitudes and
/// scientific otherwise, trailing zeros trimmed.
pub fn format_sig9(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..9).contains(&exp) {
        let fixed = format!("{:.*}", (8 - exp) as usize, v);
        trim_zeros(&fixed).to_string()
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn value(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), format_sig9)
}

pub fn report_csv(report: &MetricsReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &report.runs {
        let m = &r.metrics;
        let overall = [Some(m.accuracy), m.precision, m.recall, m.f1];
        for (name, v) in super::metrics::METRIC_NAMES.iter().zip(overall) {
            let _ = writeln!(out, "{},{},{},,{}", r.seed, r.method, name, value(v));
        }
        for (g, v) in m.group_accuracy.iter().enumerate() {
            let _ = writeln!(out, "{},{},group_accuracy,{},{}", r.seed, r.method, g, value(*v));
        }
    }
    out
}

pub fn emit_report(report: &MetricsReport, format: ReportFormat) -> Result<Vec<u8>> {
    Ok(match format {
        ReportFormat::Csv => report_csv(report).into_bytes(),
        ReportFormat::Json => {
            let mut bytes = serde_json::to_vec_pretty(report)?;
            bytes.push(b'\n');
            bytes
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_sig9(0.5), "0.5");
        assert_eq!(format_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig9(2.0 / 3.0), "0.666666667");
        assert_eq!(format_sig9(123456789.4), "123456789");
        assert_eq!(format_sig9(1234567891.0), "1.23456789e+09");
        assert_eq!(format_sig9(0.000012345678912), "1.23456789e-05");
        assert_eq!(format_sig9(0.00012345678912), "0.000123456789");
        assert_eq!(format_sig9(9.9999999999), "10");
        assert_eq!(format_sig9(-2.5), "-2.5");
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(1.0), "1");
    }
}
