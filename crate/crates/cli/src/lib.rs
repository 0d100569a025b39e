//! `acc` command line: `train`, `suite` and `analyze`.
//!
//! Every run-configuration key is also a flag (`total_steps` becomes
//! `--total-steps`). Values are layered: defaults, then the `--desk`
//! profile, then `--config <file>`, then flags.

mod report;

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use acc_core::agents::AgentVariant;
use acc_core::envs::EnvId;
use acc_core::harness::{run_suite, run_training, RunConfig, RunLog, CONFIG_KEYS};
use acc_core::{Error, Result};
use clap::{value_parser, Arg, ArgAction, ArgMatches, Command};

pub use report::{analyze, AnalyzeOptions, AnalyzeReport};

fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

fn config_args(cmd: Command) -> Command {
    let cmd = cmd
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .value_parser(value_parser!(PathBuf))
                .help("flat `key = value` configuration file"),
        )
        .arg(
            Arg::new("desk")
                .long("desk")
                .action(ArgAction::SetTrue)
                .help("start from the reduced single-core profile"),
        );
    CONFIG_KEYS.iter().fold(cmd, |cmd, (key, doc)| {
        cmd.arg(
            Arg::new(*key)
                .long(flag_name(key))
                .value_name("VALUE")
                .help(*doc)
                .help_heading("Run configuration"),
        )
    })
}

fn list_arg(name: &'static str, help: &'static str) -> Arg {
    Arg::new(name).long(name).value_name("LIST").value_delimiter(',').help(help)
}

pub fn command() -> Command {
    Command::new("acc")
        .about("Train and evaluate calibrated-critic agents on desk-scale control tasks")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(config_args(Command::new("train").about("run one configuration")))
        .subcommand(
            config_args(Command::new("suite").about("run a grid of configurations in parallel"))
                .arg(list_arg("seeds", "seeds to run, e.g. 0,1,2"))
                .arg(list_arg("agents", "agent variants to run"))
                .arg(list_arg("envs", "environments to run"))
                .arg(list_arg("ds", "d values for tqc_fixed runs"))
                .arg(
                    Arg::new("parallelism")
                        .long("parallelism")
                        .value_name("N")
                        .default_value("1")
                        .value_parser(value_parser!(usize))
                        .help("worker threads"),
                ),
        )
        .subcommand(
            Command::new("analyze")
                .about("aggregate run logs into curve, bias and d-trajectory tables")
                .arg(
                    Arg::new("input")
                        .long("input")
                        .required(true)
                        .value_parser(value_parser!(PathBuf))
                        .help("directory with run logs"),
                )
                .arg(
                    Arg::new("output")
                        .long("output")
                        .required(true)
                        .value_parser(value_parser!(PathBuf))
                        .help("directory for aggregate tables"),
                )
                .arg(
                    Arg::new("resamples")
                        .long("resamples")
                        .default_value("2000")
                        .value_parser(value_parser!(usize)),
                )
                .arg(Arg::new("level").long("level").default_value("0.95").value_parser(value_parser!(f64)))
                .arg(
                    Arg::new("smooth")
                        .long("smooth")
                        .default_value("1")
                        .value_parser(value_parser!(usize))
                        .help("odd width of the display smoothing filter"),
                )
                .arg(Arg::new("seed").long("seed").default_value("0").value_parser(value_parser!(u64))),
        )
}

/// Configuration layers from a `train` or `suite` invocation, as
/// `(key, value)` pairs in application order.
fn overrides(m: &ArgMatches) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    if let Some(path) = m.get_one::<PathBuf>("config") {
        let text = fs::read_to_string(path)?;
        let mut probe = RunConfig::default();
        probe.apply_text(&text)?;
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if let Some((k, v)) = line.split_once('=') {
                out.push((k.trim().to_string(), v.trim().to_string()));
            }
        }
    }
    for (key, _) in CONFIG_KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            out.push((key.to_string(), v.clone()));
        }
    }
    Ok(out)
}

fn apply(cfg: &mut RunConfig, layers: &[(String, String)]) -> Result<()> {
    for (k, v) in layers {
        cfg.set(k, v)?;
    }
    Ok(())
}

/// Builds the run configuration: defaults, optional desk profile for the
/// chosen env/agent/seed, then file and flag values.
pub fn resolve_config(layers: &[(String, String)], desk: bool) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    apply(&mut cfg, layers)?;
    if desk {
        let mut d = RunConfig::desk(cfg.env, cfg.agent, cfg.seed);
        apply(&mut d, layers)?;
        cfg = d;
    }
    Ok(cfg)
}

fn parse_list<T: std::str::FromStr>(m: &ArgMatches, name: &str) -> Result<Option<Vec<T>>> {
    m.get_many::<String>(name)
        .map(|vals| {
            vals.map(|v| {
                v.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad value `{v}` in --{name}")))
            })
            .collect()
        })
        .transpose()
}

/// Expands seeds × envs × agents (× d for fixed truncation) on top of the
/// base layers. Missing axes fall back to the base configuration.
pub fn expand_grid(
    layers: &[(String, String)],
    desk: bool,
    seeds: Option<Vec<u64>>,
    agents: Option<Vec<AgentVariant>>,
    envs: Option<Vec<EnvId>>,
    ds: Option<Vec<f64>>,
) -> Result<Vec<RunConfig>> {
    let base = resolve_config(layers, desk)?;
    let seeds = seeds.unwrap_or_else(|| vec![base.seed]);
    let agents = agents.unwrap_or_else(|| vec![base.agent]);
    let envs = envs.unwrap_or_else(|| vec![base.env]);
    let mut out = Vec::new();
    for &env in &envs {
        for &agent in &agents {
            let d_values = match (agent, &ds) {
                (AgentVariant::TqcFixed, Some(ds)) => ds.clone(),
                _ => vec![base.d],
            };
            for &d in &d_values {
                for &seed in &seeds {
                    let mut layer = layers.to_vec();
                    layer.push(("env".into(), env.to_string()));
                    layer.push(("agent".into(), agent.to_string()));
                    layer.push(("seed".into(), seed.to_string()));
                    layer.push(("d".into(), d.to_string()));
                    let cfg = resolve_config(&layer, desk)?;
                    cfg.validate()?;
                    out.push(cfg);
                }
            }
        }
    }
    Ok(out)
}

fn describe(log: &RunLog) -> String {
    let s = log.summary();
    let ret = s.final_eval_return.map_or("-".to_string(), |r| format!("{r:.3}"));
    let param = s.final_d.or(s.final_beta).map_or("-".to_string(), |p| format!("{p:.4}"));
    format!(
        "{}: {} after {} steps, final eval return {ret}, final pessimism {param}, {} calibration updates",
        s.run, s.status, s.steps_completed, s.calibration_updates
    )
}

pub fn run<I, T>(args: I) -> Result<ExitCode>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let m = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            e.print().map_err(Error::Io)?;
            return Ok(ExitCode::from(code));
        }
    };
    match m.subcommand() {
        Some(("train", sub)) => {
            let cfg = resolve_config(&overrides(sub)?, sub.get_flag("desk"))?;
            match run_training(&cfg) {
                Ok(out) => {
                    println!("{}", describe(&out.log));
                    Ok(ExitCode::SUCCESS)
                }
                Err(f) => {
                    eprintln!("{f}");
                    Ok(ExitCode::FAILURE)
                }
            }
        }
        Some(("suite", sub)) => {
            let cfgs = expand_grid(
                &overrides(sub)?,
                sub.get_flag("desk"),
                parse_list(sub, "seeds")?,
                parse_list(sub, "agents")?,
                parse_list(sub, "envs")?,
                parse_list(sub, "ds")?,
            )?;
            let results = run_suite(&cfgs, *sub.get_one::<usize>("parallelism").expect("default"))?;
            let mut failed = 0;
            for r in &results {
                match r {
                    Ok(log) => println!("{}", describe(log)),
                    Err(f) => {
                        failed += 1;
                        eprintln!("{f}");
                    }
                }
            }
            println!("{} runs, {failed} failed", results.len());
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Some(("analyze", sub)) => {
            let opts = AnalyzeOptions {
                input: sub.get_one::<PathBuf>("input").expect("required").clone(),
                output: sub.get_one::<PathBuf>("output").expect("required").clone(),
                resamples: *sub.get_one("resamples").expect("default"),
                level: *sub.get_one("level").expect("default"),
                smooth: *sub.get_one("smooth").expect("default"),
                seed: *sub.get_one("seed").expect("default"),
            };
            let rep = analyze(&opts)?;
            println!(
                "analyzed {} runs in {} groups; wrote {}",
                rep.runs,
                rep.groups,
                rep.files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
            );
            Ok(ExitCode::SUCCESS)
        }
        _ => unreachable!("subcommand required"),
    }
}
