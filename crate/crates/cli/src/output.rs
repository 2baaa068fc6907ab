use std::collections::BTreeMap;
use std::io::{Read, Write};

use copra_core::harness::{SweepKind, SweepResult};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::CliError;

pub const CSV_HEADER: [&str; 7] = [
    "sweep_var",
    "value",
    "method",
    "mean_sinr_db",
    "stderr_db",
    "trials",
    "fallback_rate",
];

/// `%.9g`-style rendering: 9 significant digits, trailing zeros dropped.
pub fn fmt_sig(x: f64) -> String {
    const DIGITS: i32 = 9;
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..DIGITS).contains(&exp) {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim(&format!("{:.*}", decimals, x)).to_string()
    } else {
        format!("{}e{}", trim(mant), exp)
    }
}

fn trim(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub sweep_var: String,
    pub value: f64,
    pub method: String,
    pub mean_sinr_db: f64,
    pub stderr_db: f64,
    pub trials: usize,
    pub fallback_rate: f64,
}

pub fn write_csv<W: Write>(result: &SweepResult, out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    let var = result.sweep_variable.as_str();
    for p in &result.points {
        for m in &p.methods {
            w.write_record([
                var.to_string(),
                fmt_sig(p.value),
                m.method.to_string(),
                fmt_sig(m.mean_sinr_db),
                fmt_sig(m.stderr_db),
                m.valid.to_string(),
                fmt_sig(m.fallback_rate),
            ])?;
        }
    }
    w.flush().map_err(|e| CliError::Io {
        path: "csv output".into(),
        source: e,
    })?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<CsvRow>, CliError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(CliError::Csv {
            row: 1,
            reason: format!("unexpected header `{}`", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in r.deserialize::<CsvRow>().enumerate() {
        // header is line 1
        let row = rec.map_err(|e| CliError::Csv {
            row: i + 2,
            reason: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}

/// Per-point diagnostics kept in the metadata file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointMeta {
    pub value: f64,
    pub gamma_b_fallback_rate: f64,
    pub gamma_z_fallback_rate: f64,
    pub mvdr_loaded_rate: f64,
    pub fallback_rate: BTreeMap<String, f64>,
}

/// Everything needed to rerun a sweep bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMeta {
    pub tool: String,
    pub version: String,
    pub sweep_variable: SweepKind,
    pub seed: u64,
    pub trials: usize,
    pub aggregation: String,
    pub config: ExperimentConfig,
    pub points: Vec<PointMeta>,
}

impl SweepMeta {
    pub fn new(cfg: &ExperimentConfig, result: &SweepResult) -> Self {
        let points = result
            .points
            .iter()
            .map(|p| PointMeta {
                value: p.value,
                gamma_b_fallback_rate: p.gamma_b_fallback_rate,
                gamma_z_fallback_rate: p.gamma_z_fallback_rate,
                mvdr_loaded_rate: p.mvdr_loaded_rate,
                fallback_rate: p.methods.iter().map(|m| (m.method.to_string(), m.fallback_rate)).collect(),
            })
            .collect();
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            sweep_variable: result.sweep_variable,
            seed: result.seed,
            trials: result.trials,
            aggregation: match result.aggregation {
                copra_core::harness::Aggregation::Linear => "mean of linear SINR, reported in dB".into(),
                copra_core::harness::Aggregation::Db => "mean of per-trial dB values".into(),
            },
            config: cfg.clone(),
            points,
        }
    }
}
