//! Sweeps over one configuration variable, aggregated into CSV rows.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::crb::ErrorBounds;
use crate::error::Result;

use super::config::{ExperimentConfig, Method, SweepValue};
use super::run::{mix_seed, run_trial, value_key, MethodOutcome, OperatingPoint};

pub const CSV_HEADER: [&str; 13] = [
    "sweep_variable",
    "value",
    "method",
    "rmse_position",
    "rmse_position_se",
    "median_position_error",
    "rmse_clock",
    "peb",
    "ceb",
    "match_rate",
    "trials_ok",
    "trials",
    "failures",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub variable: String,
    pub value: SweepValue,
    pub method: Method,
    /// Over successful trials only; NaN when none succeeded.
    pub rmse_position: f64,
    /// Delta-method standard error of `rmse_position`.
    pub rmse_position_se: f64,
    pub median_position_error: f64,
    pub rmse_clock: f64,
    pub peb: f64,
    pub ceb: f64,
    pub match_rate: f64,
    pub trials_ok: usize,
    pub trials: usize,
    /// Most frequent failure message, empty if none.
    pub failures: String,
}

/// One line of the per-trial log.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct TrialRecord {
    pub value: String,
    pub trial: u64,
    pub method: String,
    pub position_error: Option<f64>,
    pub clock_error: Option<f64>,
    pub matched: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub records: Vec<TrialRecord>,
}

/// Key of the random streams of one sweep value.
pub fn point_key(config: &ExperimentConfig, value: Option<&SweepValue>) -> u64 {
    match value {
        Some(v) => mix_seed(&[config.seed, value_key(v)]),
        None => mix_seed(&[config.seed]),
    }
}

pub fn point_for(config: &ExperimentConfig, value: &SweepValue) -> Result<OperatingPoint> {
    let applied = config
        .with_value(config.sweep.variable, value)
        .map_err(|e| crate::Error::InvalidInput(e.to_string()))?;
    OperatingPoint::new(&applied, point_key(config, Some(value)))
}

fn rms(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    (values.iter().map(|e| e * e).sum::<f64>() / values.len() as f64).sqrt()
}

fn rmse_standard_error(errors: &[f64]) -> f64 {
    let n = errors.len();
    if n < 2 {
        return f64::NAN;
    }
    let squares: Vec<f64> = errors.iter().map(|e| e * e).collect();
    let mean = squares.iter().sum::<f64>() / n as f64;
    let var = squares.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let rmse = mean.sqrt();
    if rmse > 0.0 {
        (var / n as f64).sqrt() / (2.0 * rmse)
    } else {
        0.0
    }
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

fn most_common(messages: &[&str]) -> String {
    let mut counts: Vec<(&str, usize)> = Vec::new();
    for m in messages {
        match counts.iter_mut().find(|(k, _)| k == m) {
            Some((_, c)) => *c += 1,
            None => counts.push((m, 1)),
        }
    }
    counts
        .into_iter()
        .max_by_key(|(_, c)| *c)
        .map(|(m, c)| format!("{c}x {m}"))
        .unwrap_or_default()
}

/// Aggregates the per-trial records of one method at one sweep value.
pub fn aggregate(
    variable: &str,
    value: &SweepValue,
    method: Method,
    records: &[&TrialRecord],
    bounds: Option<ErrorBounds>,
) -> SweepRow {
    let ok: Vec<&&TrialRecord> = records.iter().filter(|r| r.error.is_none()).collect();
    let errors: Vec<f64> = ok.iter().filter_map(|r| r.position_error).collect();
    let clock: Vec<f64> = ok.iter().filter_map(|r| r.clock_error).collect();
    let matched = ok.iter().filter(|r| r.matched == Some(true)).count();
    let failures: Vec<&str> = records.iter().filter_map(|r| r.error.as_deref()).collect();
    SweepRow {
        variable: variable.to_string(),
        value: value.clone(),
        method,
        rmse_position: rms(&errors),
        rmse_position_se: rmse_standard_error(&errors),
        median_position_error: median(&errors),
        rmse_clock: rms(&clock),
        peb: bounds.map_or(f64::NAN, |b| b.peb),
        ceb: bounds.map_or(f64::NAN, |b| b.ceb),
        match_rate: if ok.is_empty() {
            f64::NAN
        } else {
            matched as f64 / ok.len() as f64
        },
        trials_ok: ok.len(),
        trials: records.len(),
        failures: most_common(&failures),
    }
}

fn record(value: &SweepValue, trial: u64, outcome: &MethodOutcome) -> TrialRecord {
    match &outcome.estimate {
        Ok(e) => TrialRecord {
            value: value.to_string(),
            trial,
            method: outcome.method.to_string(),
            position_error: Some(e.position_error),
            clock_error: Some(e.clock_error),
            matched: Some(e.matched),
            error: None,
        },
        Err(msg) => TrialRecord {
            value: value.to_string(),
            trial,
            method: outcome.method.to_string(),
            position_error: None,
            clock_error: None,
            matched: None,
            error: Some(msg.clone()),
        },
    }
}

/// Runs the trials of one sweep value in parallel, in a fixed output order.
pub fn run_point(config: &ExperimentConfig, value: &SweepValue) -> Result<(Vec<SweepRow>, Vec<TrialRecord>)> {
    let point = point_for(config, value)?;
    let outcomes = (0..config.trials as u64)
        .into_par_iter()
        .map(|i| run_trial(&point, &config.methods, i).map(|o| (i, o)))
        .collect::<Result<Vec<_>>>()?;
    let records: Vec<TrialRecord> = outcomes
        .iter()
        .flat_map(|(i, o)| o.iter().map(move |m| record(value, *i, m)))
        .collect();
    let variable = config.sweep.variable.name();
    let rows = config
        .methods
        .iter()
        .map(|&m| {
            let name = m.to_string();
            let mine: Vec<&TrialRecord> = records.iter().filter(|r| r.method == name).collect();
            aggregate(variable, value, m, &mine, point.bounds)
        })
        .collect();
    Ok((rows, records))
}

/// Runs the whole sweep; values are processed in order.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepOutput> {
    let mut out = SweepOutput::default();
    for value in &config.sweep.values {
        let (rows, records) = run_point(config, value)?;
        out.rows.extend(rows);
        out.records.extend(records);
    }
    Ok(out)
}

/// PEB and CEB of every sweep value, without running trials.
pub fn bounds_table(config: &ExperimentConfig) -> Result<Vec<(SweepValue, Option<ErrorBounds>)>> {
    config
        .sweep
        .values
        .iter()
        .map(|v| Ok((v.clone(), point_for(config, v)?.bounds)))
        .collect()
}

pub fn format_float(x: f64) -> String {
    format!("{x:.8e}")
}

pub fn write_csv<W: Write>(rows: &[SweepRow], writer: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.variable.clone(),
            r.value.to_string(),
            r.method.to_string(),
            format_float(r.rmse_position),
            format_float(r.rmse_position_se),
            format_float(r.median_position_error),
            format_float(r.rmse_clock),
            format_float(r.peb),
            format_float(r.ceb),
            format_float(r.match_rate),
            r.trials_ok.to_string(),
            r.trials.to_string(),
            r.failures.clone(),
        ])?;
    }
    w.flush()
}

pub fn write_jsonl<W: Write>(records: &[TrialRecord], mut writer: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}
