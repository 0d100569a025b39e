//! Agent variants and their training updates.
//!
//! All agents act in the normalized box `[-1, 1]^k`. The variants differ in
//! the critic and in where the pessimism parameter comes from:
//!
//! | variant     | critic                         | pessimism                 |
//! |-------------|--------------------------------|---------------------------|
//! | `sac`       | 2 nets × 1 atom, min target    | fixed (`d = 0.5`)         |
//! | `tqc_fixed` | `N` nets × `M` atoms           | fixed `d`                 |
//! | `acc_tqc`   | `N` nets × `M` atoms           | calibrated `d`            |
//! | `td3`       | twin scalar critics            | fixed `β = 0`             |
//! | `acc_td3`   | twin scalar critics            | calibrated `β ∈ [0, 1]`   |

mod policy;
mod quantile;
mod td3;

pub use policy::{
    log_one_minus_tanh_sq, squashed_log_prob, CriticGrad, DeterministicPolicy, PolicyObjective, StochasticPolicy,
    Temperature, LOG_STD_MAX, LOG_STD_MIN,
};
pub use quantile::{ActorStats, QuantileAgent, QuantileAgentConfig};
pub use td3::{td3_targets, Td3Agent, Td3Config, Td3Step};

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::Checkpoint;
use crate::replay::ReplayBuffer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AgentVariant {
    Sac,
    TqcFixed,
    AccTqc,
    Td3,
    AccTd3,
}

impl AgentVariant {
    pub const ALL: [AgentVariant; 5] = [
        AgentVariant::Sac,
        AgentVariant::TqcFixed,
        AgentVariant::AccTqc,
        AgentVariant::Td3,
        AgentVariant::AccTd3,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentVariant::Sac => "sac",
            AgentVariant::TqcFixed => "tqc_fixed",
            AgentVariant::AccTqc => "acc_tqc",
            AgentVariant::Td3 => "td3",
            AgentVariant::AccTd3 => "acc_td3",
        }
    }

    pub fn is_calibrated(self) -> bool {
        matches!(self, AgentVariant::AccTqc | AgentVariant::AccTd3)
    }

    pub fn is_twin(self) -> bool {
        matches!(self, AgentVariant::Td3 | AgentVariant::AccTd3)
    }
}

impl fmt::Display for AgentVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AgentVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown agent `{s}` (expected sac | tqc_fixed | acc_tqc | td3 | acc_td3)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMode {
    Explore,
    Evaluate,
}

/// A chosen action with its log-probability under the acting policy
/// (zero for deterministic actors and uniform warmup actions).
#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub action: Vec<f64>,
    pub log_prob: f64,
}

/// Uniform action over the normalized box, used during warmup.
pub fn uniform_action<R: Rng + ?Sized>(action_dim: usize, rng: &mut R) -> Action {
    Action {
        action: (0..action_dim).map(|_| rng.random_range(-1.0..=1.0)).collect(),
        log_prob: 0.0,
    }
}

/// Losses from one training iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainStats {
    /// Mean critic loss over the iteration's critic steps.
    pub critic_loss: f64,
    pub actor_loss: Option<f64>,
    /// Entropy weight after the iteration, for stochastic actors.
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Agent {
    Quantile(QuantileAgent),
    Td3(Td3Agent),
}

impl Agent {
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], mode: ActionMode, rng: &mut R) -> Result<Action> {
        match (self, mode) {
            (Agent::Quantile(a), ActionMode::Explore) => {
                let (action, log_prob) = a.policy.sample(obs, rng)?;
                Ok(Action { action, log_prob })
            }
            (Agent::Quantile(a), ActionMode::Evaluate) => Ok(Action {
                action: a.policy.mean_action(obs)?,
                log_prob: 0.0,
            }),
            (Agent::Td3(a), ActionMode::Explore) => Ok(Action {
                action: a.actor.explore(obs, rng)?,
                log_prob: 0.0,
            }),
            (Agent::Td3(a), ActionMode::Evaluate) => Ok(Action {
                action: a.actor.act(obs)?,
                log_prob: 0.0,
            }),
        }
    }

    /// Current entropy weight, for stochastic actors.
    pub fn alpha(&self) -> Option<f64> {
        match self {
            Agent::Quantile(a) => Some(a.temperature.alpha()),
            Agent::Td3(_) => None,
        }
    }

    /// Value estimate `Q̂` for each `state ⊕ action` row: the mean over all
    /// online atoms, or the mean of both twin critics.
    pub fn value_batch(&self, inputs: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        match self {
            Agent::Quantile(a) => a.critic.mean_value_batch(inputs),
            Agent::Td3(a) => a.value_batch(inputs),
        }
    }

    pub fn value(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        let x = [obs, action].concat();
        let view = ArrayView2::from_shape((1, x.len()), &x).expect("single row");
        Ok(self.value_batch(view)?[0])
    }

    /// One training iteration: `critic_updates` critic steps, each on a fresh
    /// minibatch, then `actor_updates` actor steps for stochastic actors.
    /// Twin-critic agents schedule their actor through the policy delay
    /// instead. `pessimism` is `d` for quantile critics and `β` for twins.
    #[allow(clippy::too_many_arguments)]
    pub fn train<R1: Rng + ?Sized, R2: Rng + ?Sized>(
        &mut self,
        buffer: &ReplayBuffer,
        batch_size: usize,
        critic_updates: usize,
        actor_updates: usize,
        pessimism: f64,
        buffer_rng: &mut R1,
        update_rng: &mut R2,
    ) -> Result<TrainStats> {
        let mut critic_loss = 0.0;
        let mut actor_loss = None;
        for _ in 0..critic_updates {
            let batch = buffer.sample_batch(batch_size, buffer_rng)?;
            match self {
                Agent::Quantile(a) => {
                    td3::check_batch(&batch, a.critic.input_dim() - a.policy.action_dim(), a.policy.action_dim())?;
                    critic_loss += a.critic_update(&batch, pessimism, update_rng)?;
                }
                Agent::Td3(a) => {
                    let step = a.update(&batch, pessimism, update_rng)?;
                    critic_loss += step.critic_loss;
                    actor_loss = step.actor_loss.or(actor_loss);
                }
            }
        }
        if let Agent::Quantile(a) = self {
            for _ in 0..actor_updates {
                let batch = buffer.sample_batch(batch_size, buffer_rng)?;
                actor_loss = Some(a.actor_update(&batch, update_rng)?.loss);
            }
        }
        Ok(TrainStats {
            critic_loss: critic_loss / critic_updates.max(1) as f64,
            actor_loss,
            alpha: self.alpha(),
        })
    }

    pub fn save(&self, ck: &mut Checkpoint) {
        match self {
            Agent::Quantile(a) => a.save(ck),
            Agent::Td3(a) => a.save(ck),
        }
    }

    pub fn load(&mut self, ck: &Checkpoint) -> Result<()> {
        match self {
            Agent::Quantile(a) => a.load(ck),
            Agent::Td3(a) => a.load(ck),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replay::Transition;
    use crate::rng::stream;

    #[test]
    fn variant_names_round_trip() {
        for v in AgentVariant::ALL {
            assert_eq!(v.as_str().parse::<AgentVariant>().unwrap(), v);
        }
        assert!("ddpg".parse::<AgentVariant>().is_err());
        assert!(AgentVariant::AccTd3.is_calibrated() && AgentVariant::AccTd3.is_twin());
        assert!(!AgentVariant::TqcFixed.is_calibrated());
    }

    /// Kolmogorov-Smirnov distance of warmup actions from U[-1, 1].
    #[test]
    fn warmup_actions_are_uniform() {
        let mut rng = stream(1, "explore");
        let n = 20_000;
        let mut xs: Vec<f64> = (0..n).map(|_| uniform_action(1, &mut rng).action[0]).collect();
        xs.sort_by(f64::total_cmp);
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let cdf = (x + 1.0) / 2.0;
                (cdf - i as f64 / n as f64).abs().max((cdf - (i + 1) as f64 / n as f64).abs())
            })
            .fold(0.0, f64::max);
        // 1% critical value is 1.63 / sqrt(n)
        assert!(ks < 1.63 / (n as f64).sqrt(), "{ks}");
        assert!(xs[0] >= -1.0 && xs[n - 1] <= 1.0);
    }

    fn agents() -> Vec<Agent> {
        let mut rng = stream(2, "init");
        let q = QuantileAgentConfig {
            n_nets: 2,
            n_atoms: 3,
            critic_hidden: vec![8],
            policy_hidden: vec![8],
            lr: 1e-3,
            kappa: 1.0,
            gamma: 0.99,
            tau: 0.005,
            init_alpha: 1.0,
        };
        let t = Td3Config {
            critic_hidden: vec![8],
            policy_hidden: vec![8],
            lr: 1e-3,
            gamma: 0.99,
            tau: 0.005,
            policy_delay: 2,
            explore_noise: 0.1,
            target_noise: 0.2,
            noise_clip: 0.5,
        };
        vec![
            Agent::Quantile(QuantileAgent::new(3, 2, &q, &mut rng).unwrap()),
            Agent::Td3(Td3Agent::new(3, 2, &t, &mut rng).unwrap()),
        ]
    }

    #[test]
    fn evaluate_is_deterministic_and_explore_in_bounds() {
        for agent in agents() {
            let mut rng = stream(3, "explore");
            let s = [0.3, -0.2, 1.0];
            let a1 = agent.act(&s, ActionMode::Evaluate, &mut rng).unwrap();
            let a2 = agent.act(&s, ActionMode::Evaluate, &mut rng).unwrap();
            assert_eq!(a1, a2);
            for _ in 0..100 {
                let a = agent.act(&s, ActionMode::Explore, &mut rng).unwrap();
                assert!(a.action.iter().all(|x| (-1.0..=1.0).contains(x)));
                assert!(a.log_prob.is_finite());
            }
        }
    }

    #[test]
    fn train_iteration_and_checkpoint_round_trip() {
        let mut buf = ReplayBuffer::new(100, 3, 2).unwrap();
        for i in 0..20 {
            let x = i as f64 / 20.0;
            buf.push(&Transition {
                state: vec![x, -x, 0.5],
                action: vec![x, 0.1],
                reward: -x,
                next_state: vec![x + 0.05, -x, 0.5],
                true_terminal: false,
                timeout: i == 19,
            })
            .unwrap();
        }
        for mut agent in agents() {
            let (mut b, mut u) = (stream(4, "buffer"), stream(4, "update"));
            let pess = if matches!(agent, Agent::Td3(_)) { 0.5 } else { 1.0 };
            let st = agent.train(&buf, 8, 2, 1, pess, &mut b, &mut u).unwrap();
            assert!(st.critic_loss.is_finite());
            assert!(st.actor_loss.is_some());
            let mut ck = Checkpoint::default();
            agent.save(&mut ck);
            let mut fresh = agents().into_iter().find(|a| std::mem::discriminant(a) == std::mem::discriminant(&agent)).unwrap();
            fresh.load(&ck).unwrap();
            let s = [0.1, 0.2, 0.3];
            let mut r = stream(0, "eval");
            assert_eq!(
                fresh.act(&s, ActionMode::Evaluate, &mut r).unwrap(),
                agent.act(&s, ActionMode::Evaluate, &mut r).unwrap()
            );
            assert_eq!(fresh.value(&s, &[0.0, 0.0]).unwrap(), agent.value(&s, &[0.0, 0.0]).unwrap());
        }
    }
}
