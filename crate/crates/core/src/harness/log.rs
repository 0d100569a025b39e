//! Run logs and their on-disk form.
//!
//! Each run writes `<name>.csv` with the header
//!
//! ```text
//! kind,env_step,eval_return,d,beta,alpha_ent,critic_loss,bias_estimate,residual_sum,ma,batch
//! ```
//!
//! `kind` is `eval` or `calibration`; columns that do not apply to a row or
//! variant are empty. Rows are ordered by `env_step`, a calibration row
//! before an evaluation row at the same step. A single JSON object
//! describing the run goes to `<name>.summary.jsonl` and the effective
//! configuration to `<name>.config`.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::analysis::ValuePoint;
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 11] = [
    "kind",
    "env_step",
    "eval_return",
    "d",
    "beta",
    "alpha_ent",
    "critic_loss",
    "bias_estimate",
    "residual_sum",
    "ma",
    "batch",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRow {
    pub env_step: usize,
    /// Mean undiscounted return of the evaluation episodes.
    pub eval_return: f64,
    pub d: Option<f64>,
    pub beta: Option<f64>,
    pub alpha: Option<f64>,
    /// Critic loss of the most recent training iteration.
    pub critic_loss: Option<f64>,
    /// Mean normalized value error over the preceding window.
    pub bias_estimate: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationLogRow {
    pub env_step: usize,
    pub residual_sum: f64,
    pub ma: f64,
    pub d: Option<f64>,
    pub beta: f64,
    pub batch: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    Aborted(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: String,
    pub env: String,
    pub agent: String,
    pub seed: u64,
    pub critic_updates: usize,
    pub d: f64,
    pub total_steps: usize,
    pub steps_completed: usize,
    pub episodes: usize,
    pub status: String,
    pub error: Option<String>,
    pub final_eval_return: Option<f64>,
    pub final_d: Option<f64>,
    pub final_beta: Option<f64>,
    pub calibration_updates: usize,
    pub empty_calibration_batches: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub config: RunConfig,
    pub evals: Vec<EvalRow>,
    pub calibrations: Vec<CalibrationLogRow>,
    /// Value estimates paired with realized returns, for finished episodes.
    pub values: Vec<ValuePoint>,
    pub steps_completed: usize,
    pub episodes: usize,
    pub empty_calibration_batches: usize,
    pub status: RunStatus,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl RunLog {
    pub fn new(config: RunConfig) -> Self {
        Self {
            config,
            evals: Vec::new(),
            calibrations: Vec::new(),
            values: Vec::new(),
            steps_completed: 0,
            episodes: 0,
            empty_calibration_batches: 0,
            status: RunStatus::Completed,
        }
    }

    pub fn name(&self) -> String {
        self.config.run_name()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        let (mut e, mut c) = (self.evals.iter().peekable(), self.calibrations.iter().peekable());
        loop {
            let take_cal = match (e.peek(), c.peek()) {
                (None, None) => break,
                (Some(_), None) => false,
                (None, Some(_)) => true,
                (Some(ev), Some(cal)) => cal.env_step <= ev.env_step,
            };
            if take_cal {
                let r = c.next().expect("peeked");
                w.write_record([
                    "calibration".to_string(),
                    r.env_step.to_string(),
                    String::new(),
                    cell(r.d),
                    r.beta.to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    r.residual_sum.to_string(),
                    r.ma.to_string(),
                    r.batch.to_string(),
                ])?;
            } else {
                let r = e.next().expect("peeked");
                w.write_record([
                    "eval".to_string(),
                    r.env_step.to_string(),
                    r.eval_return.to_string(),
                    cell(r.d),
                    cell(r.beta),
                    cell(r.alpha),
                    cell(r.critic_loss),
                    cell(r.bias_estimate),
                    String::new(),
                    String::new(),
                    String::new(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> RunSummary {
        let cfg = &self.config;
        let (status, error) = match &self.status {
            RunStatus::Completed => ("completed".to_string(), None),
            RunStatus::Aborted(e) => ("aborted".to_string(), Some(e.clone())),
        };
        let last = self.evals.last();
        RunSummary {
            run: self.name(),
            env: cfg.env.to_string(),
            agent: cfg.agent.to_string(),
            seed: cfg.seed,
            critic_updates: cfg.critic_updates,
            d: cfg.d,
            total_steps: cfg.total_steps,
            steps_completed: self.steps_completed,
            episodes: self.episodes,
            status,
            error,
            final_eval_return: last.map(|r| r.eval_return),
            final_d: last.and_then(|r| r.d),
            final_beta: last.and_then(|r| r.beta),
            calibration_updates: self.calibrations.len(),
            empty_calibration_batches: self.empty_calibration_batches,
        }
    }

    pub fn csv_path(dir: &Path, name: &str) -> PathBuf {
        dir.join(format!("{name}.csv"))
    }

    /// Writes the CSV, summary and configuration files into `dir`.
    pub fn write_files(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let name = self.name();
        let mut csv_bytes = Vec::new();
        self.write_csv(&mut csv_bytes)?;
        fs::write(Self::csv_path(dir, &name), csv_bytes)?;
        let line = serde_json::to_string(&self.summary()).map_err(|e| Error::Parse(e.to_string()))?;
        fs::write(dir.join(format!("{name}.summary.jsonl")), format!("{line}\n"))?;
        fs::write(dir.join(format!("{name}.config")), self.config.to_text())?;
        Ok(())
    }
}

/// Rows read back from a run CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LogRows {
    pub evals: Vec<EvalRow>,
    pub calibrations: Vec<CalibrationLogRow>,
}

fn opt(s: &str, col: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        s.parse()
            .map(Some)
            .map_err(|_| Error::Parse(format!("bad number `{s}` in column {col}")))
    }
}

fn req<T: std::str::FromStr>(s: &str, col: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Parse(format!("bad value `{s}` in column {col}")))
}

pub fn read_log_csv<R: Read>(input: R) -> Result<LogRows> {
    let mut r = csv::Reader::from_reader(input);
    if r.headers()?.iter().ne(CSV_HEADER) {
        return Err(Error::Parse("unexpected run log header".into()));
    }
    let mut rows = LogRows::default();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| rec.get(i).unwrap_or("");
        match f(0) {
            "eval" => rows.evals.push(EvalRow {
                env_step: req(f(1), "env_step")?,
                eval_return: req(f(2), "eval_return")?,
                d: opt(f(3), "d")?,
                beta: opt(f(4), "beta")?,
                alpha: opt(f(5), "alpha_ent")?,
                critic_loss: opt(f(6), "critic_loss")?,
                bias_estimate: opt(f(7), "bias_estimate")?,
            }),
            "calibration" => rows.calibrations.push(CalibrationLogRow {
                env_step: req(f(1), "env_step")?,
                d: opt(f(3), "d")?,
                beta: req(f(4), "beta")?,
                residual_sum: req(f(8), "residual_sum")?,
                ma: req(f(9), "ma")?,
                batch: req(f(10), "batch")?,
            }),
            other => return Err(Error::Parse(format!("unknown row kind `{other}`"))),
        }
    }
    Ok(rows)
}

pub fn read_summary(line: &str) -> Result<RunSummary> {
    serde_json::from_str(line).map_err(|e| Error::Parse(e.to_string()))
}
