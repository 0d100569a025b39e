//! `acc analyze`: turns a directory of run logs into aggregate tables.
//!
//! Runs are grouped by algorithm label (agent, critic updates and, for fixed
//! truncation, `d`) and task. Within a group every run is cut to the
//! shortest evaluation series so all runs share the same points.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use acc_core::analysis::{
    iqm, stratified_bootstrap_ci, task_normalizers, uniform_filter, ScoreMatrix, TaskScores,
};
use acc_core::harness::{read_log_csv, read_summary, LogRows, RunLog, RunSummary};
use acc_core::rng::stream;
use acc_core::{Error, Result};

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub input: PathBuf,
    pub output: PathBuf,
    pub resamples: usize,
    pub level: f64,
    pub smooth: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeReport {
    pub runs: usize,
    pub groups: usize,
    pub files: Vec<PathBuf>,
}

struct Run {
    summary: RunSummary,
    rows: LogRows,
}

fn label(s: &RunSummary) -> String {
    let mut l = format!("{}-q{}", s.agent, s.critic_updates);
    if s.agent == "tqc_fixed" {
        l.push_str(&format!("-d{}", s.d));
    }
    l
}

fn load_runs(dir: &Path) -> Result<Vec<Run>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.to_string_lossy().ends_with(".summary.jsonl"));
    paths.sort();
    let mut runs = Vec::new();
    for p in paths {
        let text = fs::read_to_string(&p)?;
        let line = text
            .lines()
            .find(|l| !l.trim().is_empty())
            .ok_or_else(|| Error::Parse(format!("{} is empty", p.display())))?;
        let summary = read_summary(line)?;
        let rows = read_log_csv(File::open(RunLog::csv_path(dir, &summary.run))?)?;
        if !rows.evals.is_empty() {
            runs.push(Run { summary, rows });
        }
    }
    Ok(runs)
}

/// `(label, env)` → runs, each cut to the group's shortest eval series.
fn group(runs: &[Run]) -> BTreeMap<(String, String), Vec<&Run>> {
    let mut groups: BTreeMap<(String, String), Vec<&Run>> = BTreeMap::new();
    for r in runs {
        groups.entry((label(&r.summary), r.summary.env.clone())).or_default().push(r);
    }
    groups
}

fn min_points(runs: &[&Run]) -> usize {
    runs.iter().map(|r| r.rows.evals.len()).min().unwrap_or(0)
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_unstable_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn analyze(opts: &AnalyzeOptions) -> Result<AnalyzeReport> {
    if opts.smooth == 0 || opts.smooth.is_multiple_of(2) {
        return Err(Error::Usage(format!("--smooth must be odd, got {}", opts.smooth)));
    }
    let runs = load_runs(&opts.input)?;
    if runs.is_empty() {
        return Err(Error::Usage(format!("no run logs with evaluations in {}", opts.input.display())));
    }
    let groups = group(&runs);
    fs::create_dir_all(&opts.output)?;

    // Per-task normalizers from every return seen on that task.
    let mut env_returns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for ((_, env), rs) in &groups {
        let n = min_points(rs);
        let e = env_returns.entry(env.clone()).or_default();
        for r in rs {
            e.extend(r.rows.evals[..n].iter().map(|x| x.eval_return));
        }
    }
    let envs: Vec<String> = env_returns.keys().cloned().collect();
    let norms = task_normalizers(&env_returns.values().cloned().collect::<Vec<_>>())?;
    let norm_of = |env: &str| norms[envs.iter().position(|e| e == env).expect("known env")];

    let mut files = Vec::new();

    // Aggregate normalized IQM per algorithm over tasks, indexed by eval point.
    let curves_path = opts.output.join("curves.csv");
    let mut w = csv::Writer::from_path(&curves_path)?;
    w.write_record(["algorithm", "point", "progress", "iqm", "ci_lo", "ci_hi", "iqm_smoothed", "tasks", "runs", "degenerate"])?;
    let mut labels: Vec<&String> = groups.keys().map(|(l, _)| l).collect();
    labels.dedup();
    for lab in labels {
        let tasks: Vec<(&String, &Vec<&Run>)> =
            groups.iter().filter(|((l, _), _)| l == lab).map(|((_, e), rs)| (e, rs)).collect();
        let n = tasks.iter().map(|(_, rs)| min_points(rs)).min().unwrap_or(0);
        if n == 0 {
            continue;
        }
        let scores = ScoreMatrix::new(
            tasks
                .iter()
                .map(|(env, rs)| TaskScores {
                    name: (*env).clone(),
                    runs: rs.iter().map(|r| r.rows.evals[..n].iter().map(|x| x.eval_return).collect()).collect(),
                })
                .collect(),
        )?;
        let task_norms: Vec<_> = tasks.iter().map(|(env, _)| norm_of(env)).collect();
        let scores = scores.normalized(&task_norms)?;
        let mut rng = stream(opts.seed, &format!("analysis-{lab}"));
        let ci = stratified_bootstrap_ci(&scores, iqm, opts.resamples, opts.level, &mut rng)?;
        let smoothed = uniform_filter(&ci.iter().map(|c| c.estimate).collect::<Vec<_>>(), opts.smooth)?;
        let n_runs: usize = tasks.iter().map(|(_, rs)| rs.len()).sum();
        for (p, (c, s)) in ci.iter().zip(&smoothed).enumerate() {
            w.write_record([
                lab.clone(),
                p.to_string(),
                ((p + 1) as f64 / n as f64).to_string(),
                c.estimate.to_string(),
                c.lo.to_string(),
                c.hi.to_string(),
                s.to_string(),
                tasks.len().to_string(),
                n_runs.to_string(),
                c.degenerate.to_string(),
            ])?;
        }
    }
    w.flush()?;
    files.push(curves_path);

    // Raw per-task curves.
    let per_task_path = opts.output.join("per_task.csv");
    let mut w = csv::Writer::from_path(&per_task_path)?;
    w.write_record(["algorithm", "env", "env_step", "runs", "median_return", "iqm_return", "median_normalized"])?;
    for ((lab, env), rs) in &groups {
        let norm = norm_of(env);
        for p in 0..min_points(rs) {
            let rets: Vec<f64> = rs.iter().map(|r| r.rows.evals[p].eval_return).collect();
            w.write_record([
                lab.clone(),
                env.clone(),
                rs[0].rows.evals[p].env_step.to_string(),
                rs.len().to_string(),
                fmt_opt(median(rets.clone())),
                iqm(&rets)?.to_string(),
                fmt_opt(median(rets.iter().map(|&x| norm.apply(x)).collect())),
            ])?;
        }
    }
    w.flush()?;
    files.push(per_task_path);

    // Value-estimate error and pessimism parameter over training.
    let bias_path = opts.output.join("bias.csv");
    let traj_path = opts.output.join("d_trajectory.csv");
    let mut wb = csv::Writer::from_path(&bias_path)?;
    let mut wt = csv::Writer::from_path(&traj_path)?;
    wb.write_record(["algorithm", "env", "env_step", "runs", "median_bias", "min_bias", "max_bias"])?;
    wt.write_record(["algorithm", "env", "env_step", "parameter", "runs", "median", "min", "max"])?;
    for ((lab, env), rs) in &groups {
        for p in 0..min_points(rs) {
            let step = rs[0].rows.evals[p].env_step.to_string();
            let bias: Vec<f64> = rs.iter().filter_map(|r| r.rows.evals[p].bias_estimate).collect();
            if !bias.is_empty() {
                let lo = bias.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = bias.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                wb.write_record([
                    lab.clone(),
                    env.clone(),
                    step.clone(),
                    bias.len().to_string(),
                    fmt_opt(median(bias)),
                    lo.to_string(),
                    hi.to_string(),
                ])?;
            }
            let ds: Vec<f64> = rs.iter().filter_map(|r| r.rows.evals[p].d).collect();
            let (param, vals) = if ds.is_empty() {
                ("beta", rs.iter().filter_map(|r| r.rows.evals[p].beta).collect::<Vec<_>>())
            } else {
                ("d", ds)
            };
            if !vals.is_empty() {
                let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                wt.write_record([
                    lab.clone(),
                    env.clone(),
                    step,
                    param.to_string(),
                    vals.len().to_string(),
                    fmt_opt(median(vals)),
                    lo.to_string(),
                    hi.to_string(),
                ])?;
            }
        }
    }
    wb.flush()?;
    wt.flush()?;
    files.push(bias_path);
    files.push(traj_path);

    Ok(AnalyzeReport {
        runs: runs.len(),
        groups: groups.len(),
        files,
    })
}
