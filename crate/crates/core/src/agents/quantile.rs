//! Entropy-regularized actor with a truncated quantile critic ensemble.
//!
//! Covers three variants through one update path: fixed-`d` truncation,
//! calibrated truncation, and the two-critic point-estimate baseline
//! (`N = 2`, `M = 1`, `d = 0.5`, which keeps the smaller of the two target
//! values).

use ndarray::{s, Array2, ArrayView2};
use rand::Rng;

use super::policy::{PolicyObjective, StochasticPolicy, Temperature};
use crate::critic::{build_truncated_targets, QuantileEnsemble};
use crate::error::Result;
use crate::nn::{AdamConfig, Checkpoint};
use crate::replay::Batch;

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileAgentConfig {
    pub n_nets: usize,
    pub n_atoms: usize,
    pub critic_hidden: Vec<usize>,
    pub policy_hidden: Vec<usize>,
    pub lr: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub tau: f64,
    pub init_alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActorStats {
    pub loss: f64,
    pub alpha: f64,
    pub mean_log_prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileAgent {
    pub policy: StochasticPolicy,
    pub critic: QuantileEnsemble,
    pub temperature: Temperature,
    gamma: f64,
    tau: f64,
}

pub(crate) fn stack(states: ArrayView2<'_, f64>, actions: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut x = Array2::zeros((states.nrows(), states.ncols() + actions.ncols()));
    x.slice_mut(s![.., ..states.ncols()]).assign(&states);
    x.slice_mut(s![.., states.ncols()..]).assign(&actions);
    x
}

impl QuantileAgent {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, action_dim: usize, cfg: &QuantileAgentConfig, rng: &mut R) -> Result<Self> {
        let adam = AdamConfig::with_lr(cfg.lr);
        let critic = QuantileEnsemble::new(
            obs_dim,
            action_dim,
            cfg.n_nets,
            cfg.n_atoms,
            &cfg.critic_hidden,
            adam,
            cfg.kappa,
            rng,
        )?;
        let policy = StochasticPolicy::new(obs_dim, action_dim, &cfg.policy_hidden, adam, rng)?;
        Ok(Self {
            policy,
            critic,
            temperature: Temperature::new(cfg.init_alpha, -(action_dim as f64), adam)?,
            gamma: cfg.gamma,
            tau: cfg.tau,
        })
    }

    /// One critic step with truncation `d`, followed by the target update.
    /// Returns the critic loss.
    pub fn critic_update<R: Rng + ?Sized>(&mut self, batch: &Batch, d: f64, rng: &mut R) -> Result<f64> {
        let (next_actions, next_logp) = self.policy.sample_batch(batch.next_states.view(), rng)?;
        let next_inputs = stack(batch.next_states.view(), next_actions.view());
        let pooled = self.critic.target_atoms_batch(next_inputs.view())?;
        let alpha = self.temperature.alpha();
        let n = self.critic.n_nets();
        let targets = (0..batch.len())
            .map(|b| {
                build_truncated_targets(
                    pooled.row(b).as_slice().expect("row-major pool"),
                    n,
                    batch.rewards[b],
                    self.gamma,
                    batch.true_terminal[b],
                    alpha * next_logp[b],
                    d,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let inputs = stack(batch.states.view(), batch.actions.view());
        let step = self.critic.train_step(inputs.view(), &targets)?;
        self.critic.soft_update(self.tau)?;
        Ok(step.loss)
    }

    /// Policy step against the online ensemble mean, then a temperature step.
    pub fn actor_update<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<ActorStats> {
        let alpha = self.temperature.alpha();
        let critic = &self.critic;
        let mut grad = |x: ArrayView2<'_, f64>| critic.mean_value_input_grad(x);
        let PolicyObjective { loss, mean_log_prob, .. } =
            self.policy.update(batch.states.view(), alpha, &mut grad, rng)?;
        self.temperature.update(mean_log_prob)?;
        Ok(ActorStats {
            loss,
            alpha: self.temperature.alpha(),
            mean_log_prob,
        })
    }

    pub fn save(&self, ck: &mut Checkpoint) {
        self.policy.save("policy", ck);
        self.critic.save("critic", ck);
    }

    pub fn load(&mut self, ck: &Checkpoint) -> Result<()> {
        self.policy.load("policy", ck)?;
        self.critic.load("critic", ck)
    }
}
