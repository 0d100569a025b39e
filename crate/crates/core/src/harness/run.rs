use std::fmt;
use std::fs;

use rayon::prelude::*;

use super::config::RunConfig;
use super::log::{CalibrationLogRow, EvalRow, RunLog, RunStatus};
use crate::agents::{
    uniform_action, ActionMode, Agent, AgentVariant, QuantileAgent, QuantileAgentConfig, Td3Agent, Td3Config,
    TrainStats,
};
use crate::analysis::{normalized_abs_error, ValuePoint};
use crate::calibrator::{CalibrationOutcome, Calibrator, CalibratorConfig};
use crate::envs::{make, Env, EnvSpec};
use crate::error::{Error, Result};
use crate::nn::Checkpoint;
use crate::replay::{ReplayBuffer, ReturnTracker, Transition};
use crate::rng::{RunStreams, StreamRng};

/// A finished run and the trained agent.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub log: RunLog,
    pub agent: Agent,
}

/// A run that stopped early; `log` holds everything recorded before the
/// error and has already been written if an output directory was set.
#[derive(Debug)]
pub struct RunFailure {
    pub log: Box<RunLog>,
    pub error: Error,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "run {} failed after {} steps: {}", self.log.name(), self.log.steps_completed, self.error)
    }
}

impl std::error::Error for RunFailure {}

pub fn build_agent(cfg: &RunConfig, spec: &EnvSpec, rng: &mut StreamRng) -> Result<Agent> {
    let (obs, act) = (spec.obs_dim, spec.action_dim);
    if cfg.agent.is_twin() {
        let tc = Td3Config {
            critic_hidden: cfg.critic_hidden.clone(),
            policy_hidden: cfg.policy_hidden.clone(),
            lr: cfg.lr,
            gamma: cfg.gamma,
            tau: cfg.tau,
            policy_delay: cfg.td3_policy_delay,
            explore_noise: cfg.td3_explore_noise,
            target_noise: cfg.td3_target_noise,
            noise_clip: cfg.td3_noise_clip,
        };
        return Ok(Agent::Td3(Td3Agent::new(obs, act, &tc, rng)?));
    }
    let (n_nets, n_atoms) = match cfg.agent {
        AgentVariant::Sac => (2, 1),
        _ => (cfg.n_critics, cfg.n_atoms),
    };
    let qc = QuantileAgentConfig {
        n_nets,
        n_atoms,
        critic_hidden: cfg.critic_hidden.clone(),
        policy_hidden: cfg.policy_hidden.clone(),
        lr: cfg.lr,
        kappa: cfg.huber_kappa,
        gamma: cfg.gamma,
        tau: cfg.tau,
        init_alpha: cfg.init_alpha,
    };
    Ok(Agent::Quantile(QuantileAgent::new(obs, act, &qc, rng)?))
}

fn build_calibrator(cfg: &RunConfig, spec: &EnvSpec) -> Result<Option<Calibrator>> {
    let base = match cfg.agent {
        AgentVariant::AccTqc => CalibratorConfig::for_truncation(cfg.d, cfg.d_max),
        AgentVariant::AccTd3 => CalibratorConfig::for_twin(cfg.td3_beta_init),
        _ => return Ok(None),
    };
    Calibrator::new(CalibratorConfig {
        lr: cfg.calib_lr,
        interval: cfg.calib_interval.unwrap_or(spec.max_episode_steps),
        warmup: cfg.calib_warmup,
        batch_cap: cfg.calib_batch,
        ma_rate: cfg.calib_ma_rate,
        timeout_exclusion: cfg.calib_timeout_exclusion,
        ..base
    })
    .map(Some)
}

/// Mean undiscounted return of deterministic rollouts. Uses only `rng` for
/// start states and touches no training state.
pub fn evaluate(agent: &Agent, env: &Env, episodes: usize, rng: &mut StreamRng) -> Result<f64> {
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut state = env.reset(rng);
        loop {
            let a = agent.act(&env.observe(&state), ActionMode::Evaluate, rng)?;
            let step = env.step(&state, &env.scale_action(&a.action))?;
            total += step.reward;
            if step.done() {
                break;
            }
            state = step.next;
        }
    }
    let mean = total / episodes as f64;
    if !mean.is_finite() {
        return Err(Error::NonFinite("evaluation return".into()));
    }
    Ok(mean)
}

struct Trainer {
    cfg: RunConfig,
    env: Env,
    agent: Agent,
    calibrator: Option<Calibrator>,
    buffer: ReplayBuffer,
    tracker: ReturnTracker,
    streams: RunStreams,
    /// `(step, estimate)` for the running episode.
    pending: Vec<(usize, f64)>,
    last_stats: Option<TrainStats>,
}

impl Trainer {
    fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let env = make(cfg.env, cfg.max_episode_steps)?;
        let spec = env.spec();
        let mut streams = RunStreams::new(cfg.seed);
        let agent = build_agent(cfg, &spec, &mut streams.init)?;
        Ok(Self {
            calibrator: build_calibrator(cfg, &spec)?,
            buffer: ReplayBuffer::new(cfg.buffer_size, spec.obs_dim, spec.action_dim)?,
            cfg: cfg.clone(),
            env,
            agent,
            tracker: ReturnTracker::new(),
            streams,
            pending: Vec::new(),
            last_stats: None,
        })
    }

    /// `d` for quantile critics, `β` for twin critics.
    fn pessimism(&self) -> f64 {
        match (self.cfg.agent, &self.calibrator) {
            (AgentVariant::AccTqc, Some(c)) => self.cfg.d_max - c.beta(),
            (AgentVariant::AccTd3, Some(c)) => c.beta(),
            (AgentVariant::Sac, _) => 0.5,
            (AgentVariant::Td3 | AgentVariant::AccTd3, _) => 0.0,
            _ => self.cfg.d,
        }
    }

    fn d_and_beta(&self) -> (Option<f64>, Option<f64>) {
        let p = self.pessimism();
        match self.cfg.agent {
            AgentVariant::Td3 | AgentVariant::AccTd3 => (None, Some(p)),
            AgentVariant::AccTqc => (Some(p), self.calibrator.as_ref().map(Calibrator::beta)),
            _ => (Some(p), None),
        }
    }

    fn finish_episode(&mut self, log: &mut RunLog, t: usize, timed_out: bool) -> Result<()> {
        let records = self
            .tracker
            .finish_episode(self.cfg.gamma, self.cfg.calib_include_entropy)?;
        let len = records.len();
        for (i, (rec, (step, estimate))) in records.iter().zip(self.pending.drain(..)).enumerate() {
            log.values.push(ValuePoint {
                step,
                estimate,
                realized: rec.ret,
                timeout_episode: timed_out,
                steps_to_end: len - 1 - i,
            });
        }
        log.episodes += 1;
        if let Some(cal) = self.calibrator.as_mut() {
            cal.record_episode(records, timed_out)?;
            let agent = &self.agent;
            let outcome = cal.maybe_update(|x| agent.value_batch(x.view()), t)?;
            match outcome {
                CalibrationOutcome::Updated(row) => {
                    let d = (self.cfg.agent == AgentVariant::AccTqc).then_some(self.cfg.d_max - row.beta);
                    log.calibrations.push(CalibrationLogRow {
                        env_step: row.env_step,
                        residual_sum: row.c,
                        ma: row.ma,
                        d,
                        beta: row.beta,
                        batch: row.batch,
                    });
                }
                CalibrationOutcome::EmptyBatch => log.empty_calibration_batches += 1,
                CalibrationOutcome::NotDue => {}
            }
        }
        Ok(())
    }

    fn run(&mut self, log: &mut RunLog) -> Result<()> {
        let cfg = self.cfg.clone();
        let action_dim = self.env.spec().action_dim;
        let mut state = self.env.reset(&mut self.streams.env);
        for t in 1..=cfg.total_steps {
            let obs = self.env.observe(&state);
            let act = if t <= cfg.warmup_steps {
                uniform_action(action_dim, &mut self.streams.explore)
            } else {
                self.agent.act(&obs, ActionMode::Explore, &mut self.streams.explore)?
            };
            let estimate = self.agent.value(&obs, &act.action)?;
            let step = self.env.step(&state, &self.env.scale_action(&act.action))?;
            let next_obs = self.env.observe(&step.next);
            self.buffer.push(&Transition {
                state: obs.clone(),
                action: act.action.clone(),
                reward: step.reward,
                next_state: next_obs,
                true_terminal: step.true_terminal,
                timeout: step.timeout,
            })?;
            let bonus = -self.agent.alpha().unwrap_or(0.0) * act.log_prob;
            self.tracker.push(&obs, &act.action, step.reward, bonus, step.done())?;
            self.pending.push((t, estimate));
            if let Some(c) = self.calibrator.as_mut() {
                c.tick();
            }
            if step.done() {
                self.finish_episode(log, t, step.timeout)?;
                state = self.env.reset(&mut self.streams.env);
            } else {
                state = step.next;
            }
            if t > cfg.warmup_steps {
                let pessimism = self.pessimism();
                self.last_stats = Some(self.agent.train(
                    &self.buffer,
                    cfg.batch_size,
                    cfg.critic_updates,
                    cfg.actor_updates,
                    pessimism,
                    &mut self.streams.buffer,
                    &mut self.streams.update,
                )?);
            }
            log.steps_completed = t;
            if t % cfg.eval_interval == 0 {
                let eval_return = evaluate(&self.agent, &self.env, cfg.eval_episodes, &mut self.streams.eval)?;
                let (d, beta) = self.d_and_beta();
                let lo = t.saturating_sub(cfg.bias_window);
                let start = log.values.partition_point(|p| p.step <= lo);
                log.evals.push(EvalRow {
                    env_step: t,
                    eval_return,
                    d,
                    beta,
                    alpha: self.agent.alpha(),
                    critic_loss: self.last_stats.map(|s| s.critic_loss),
                    bias_estimate: normalized_abs_error(&log.values[start..], cfg.bias_tail),
                });
            }
        }
        Ok(())
    }
}

fn write_outputs(log: &RunLog, agent: Option<&Agent>) -> Result<()> {
    let Some(dir) = &log.config.output_dir else {
        return Ok(());
    };
    log.write_files(dir)?;
    if let (true, Some(agent)) = (log.config.checkpoint, agent) {
        let mut ck = Checkpoint::default();
        agent.save(&mut ck);
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes)?;
        fs::write(dir.join(format!("{}.ckpt", log.name())), bytes)?;
    }
    Ok(())
}

/// Runs one configuration end to end. Identical configurations produce
/// identical logs and agents.
pub fn run_training(cfg: &RunConfig) -> Result<RunOutcome, RunFailure> {
    let mut log = RunLog::new(cfg.clone());
    let mut trainer = match Trainer::new(cfg) {
        Ok(t) => t,
        Err(error) => {
            log.status = RunStatus::Aborted(error.to_string());
            return Err(RunFailure { log: Box::new(log), error });
        }
    };
    if let Err(error) = trainer.run(&mut log) {
        log.status = RunStatus::Aborted(error.to_string());
        // a failed write must not mask the original error
        let _ = write_outputs(&log, None);
        return Err(RunFailure { log: Box::new(log), error });
    }
    if let Err(error) = write_outputs(&log, Some(&trainer.agent)) {
        log.status = RunStatus::Aborted(error.to_string());
        return Err(RunFailure { log: Box::new(log), error });
    }
    Ok(RunOutcome {
        log,
        agent: trainer.agent,
    })
}

/// Runs independent configurations on `parallelism` worker threads. Results
/// come back in input order; a failing run does not stop the others.
pub fn run_suite(cfgs: &[RunConfig], parallelism: usize) -> Result<Vec<Result<RunLog, RunFailure>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| {
        cfgs.par_iter()
            .map(|c| run_training(c).map(|o| o.log))
            .collect()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvId;

    fn tiny(agent: AgentVariant) -> RunConfig {
        RunConfig {
            total_steps: 300,
            warmup_steps: 100,
            eval_interval: 100,
            eval_episodes: 1,
            batch_size: 16,
            n_critics: 2,
            n_atoms: 6,
            critic_hidden: vec![8],
            policy_hidden: vec![8],
            max_episode_steps: Some(50),
            calib_warmup: 100,
            calib_batch: 80,
            bias_window: 100,
            bias_tail: 10,
            ..RunConfig::desk(EnvId::Pendulum, agent, 1)
        }
    }

    #[test]
    fn warmup_only_run_is_well_formed() {
        let cfg = RunConfig {
            total_steps: 200,
            warmup_steps: 200,
            ..tiny(AgentVariant::AccTqc)
        };
        let out = run_training(&cfg).unwrap();
        assert_eq!(out.log.evals.len(), 2);
        assert!(out.log.evals.iter().all(|e| e.critic_loss.is_none()));
        assert_eq!(out.log.episodes, 4);
        assert_eq!(out.log.values.len(), 200);
    }

    #[test]
    fn all_variants_train_and_log() {
        for agent in AgentVariant::ALL {
            let out = run_training(&tiny(agent)).unwrap();
            let log = &out.log;
            assert_eq!(log.status, RunStatus::Completed);
            assert_eq!(log.evals.len(), 3);
            for w in log.evals.windows(2) {
                assert!(w[0].env_step < w[1].env_step);
            }
            let last = log.evals.last().unwrap();
            assert!(last.critic_loss.unwrap().is_finite());
            assert_eq!(last.d.is_none(), agent.is_twin());
            assert_eq!(last.alpha.is_none(), agent.is_twin());
            if agent.is_calibrated() {
                // updates at episode ends 150, 200, 250, 300 (interval 50, warmup 100)
                assert_eq!(log.calibrations.len(), 4, "{agent}");
                assert!(log.calibrations.iter().all(|c| c.batch > 0));
            } else {
                assert!(log.calibrations.is_empty());
            }
        }
    }

    #[test]
    fn same_seed_same_log_and_seed_matters() {
        let cfg = tiny(AgentVariant::AccTqc);
        let a = run_training(&cfg).unwrap();
        let b = run_training(&cfg).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.agent, b.agent);
        let c = run_training(&RunConfig { seed: 2, ..cfg }).unwrap();
        assert_ne!(a.log.evals, c.log.evals);
    }

    #[test]
    fn suite_preserves_order_and_isolation() {
        let cfgs: Vec<RunConfig> = (0..3)
            .map(|s| RunConfig { seed: s, total_steps: 150, ..tiny(AgentVariant::Td3) })
            .collect();
        let one = run_suite(&cfgs, 1).unwrap();
        let many = run_suite(&cfgs, 3).unwrap();
        for ((x, y), cfg) in one.iter().zip(&many).zip(&cfgs) {
            let (x, y) = (x.as_ref().unwrap(), y.as_ref().unwrap());
            assert_eq!(x, y);
            assert_eq!(x.config.seed, cfg.seed);
        }
        assert!(run_suite(&[], 2).unwrap().is_empty());
    }

    #[test]
    fn bad_config_reports_failure() {
        let err = run_training(&RunConfig { gamma: 2.0, ..tiny(AgentVariant::Sac) }).unwrap_err();
        assert!(matches!(err.error, Error::Config(_)));
        assert_eq!(err.log.steps_completed, 0);
    }

    #[test]
    fn divergence_aborts_with_partial_log() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            lr: 1e300,
            output_dir: Some(dir.path().to_path_buf()),
            ..tiny(AgentVariant::TqcFixed)
        };
        let err = run_training(&cfg).unwrap_err();
        assert!(matches!(err.error, Error::NonFinite(_)), "{}", err.error);
        assert!(err.log.steps_completed >= 100);
        let name = cfg.run_name();
        let summary = fs::read_to_string(dir.path().join(format!("{name}.summary.jsonl"))).unwrap();
        assert!(summary.contains("\"status\":\"aborted\""));
        assert!(dir.path().join(format!("{name}.csv")).exists());
    }
}
