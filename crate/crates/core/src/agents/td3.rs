//! Twin deterministic critics with a convex pessimism blend.
//!
//! Each critic bootstraps from `β·Q_k' + (1 − β)·min(Q_1', Q_2')`; `β = 0`
//! recovers the usual clipped double-Q target.

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use super::policy::DeterministicPolicy;
use super::quantile::stack;
use crate::error::{check_dim, Error, Result};
use crate::nn::{polyak_update, Activation, Adam, AdamConfig, Checkpoint, DenseNet};
use crate::replay::Batch;

/// Targets for both critics from their target values at the next state.
pub fn td3_targets(reward: f64, gamma: f64, true_terminal: bool, q1: f64, q2: f64, beta: f64) -> (f64, f64) {
    if true_terminal {
        return (reward, reward);
    }
    let m = q1.min(q2);
    (
        reward + gamma * (beta * q1 + (1.0 - beta) * m),
        reward + gamma * (beta * q2 + (1.0 - beta) * m),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Td3Config {
    pub critic_hidden: Vec<usize>,
    pub policy_hidden: Vec<usize>,
    pub lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub policy_delay: usize,
    pub explore_noise: f64,
    pub target_noise: f64,
    pub noise_clip: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Td3Step {
    /// Sum of both critics' mean squared errors.
    pub critic_loss: f64,
    /// Present on steps where the actor was updated.
    pub actor_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Td3Agent {
    pub actor: DeterministicPolicy,
    critics: Vec<DenseNet>,
    targets: Vec<DenseNet>,
    optims: Vec<Adam>,
    gamma: f64,
    tau: f64,
    policy_delay: usize,
    critic_steps: u64,
}

impl Td3Agent {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, action_dim: usize, cfg: &Td3Config, rng: &mut R) -> Result<Self> {
        if cfg.policy_delay == 0 {
            return Err(Error::Config("policy delay must be at least 1".into()));
        }
        let adam = AdamConfig::with_lr(cfg.lr);
        let mut widths = vec![obs_dim + action_dim];
        widths.extend_from_slice(&cfg.critic_hidden);
        widths.push(1);
        let critics = (0..2)
            .map(|_| DenseNet::new(&widths, Activation::Relu, Activation::Identity, rng))
            .collect::<Result<Vec<_>>>()?;
        let mut actor = DeterministicPolicy::new(obs_dim, action_dim, &cfg.policy_hidden, adam, rng)?;
        actor.explore_std = cfg.explore_noise;
        actor.target_noise = cfg.target_noise;
        actor.noise_clip = cfg.noise_clip;
        Ok(Self {
            actor,
            targets: critics.clone(),
            optims: critics.iter().map(|c| Adam::new(c.num_params(), adam)).collect(),
            critics,
            gamma: cfg.gamma,
            tau: cfg.tau,
            policy_delay: cfg.policy_delay,
            critic_steps: 0,
        })
    }

    pub fn critics(&self) -> &[DenseNet] {
        &self.critics
    }

    /// Mean of both online critics for each `state ⊕ action` row.
    pub fn value_batch(&self, inputs: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let a = self.critics[0].forward_batch(inputs)?;
        let b = self.critics[1].forward_batch(inputs)?;
        Ok(a.iter().zip(b.iter()).map(|(x, y)| 0.5 * (x + y)).collect())
    }

    /// One critic step with blend weight `beta`; every `policy_delay`-th call
    /// also updates the actor and all target networks.
    pub fn update<R: Rng + ?Sized>(&mut self, batch: &Batch, beta: f64, rng: &mut R) -> Result<Td3Step> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::Argument(format!("blend weight must lie in [0, 1], got {beta}")));
        }
        let n = batch.len();
        let next_actions = self.actor.smoothed_target_actions(batch.next_states.view(), rng)?;
        let next_in = stack(batch.next_states.view(), next_actions.view());
        let t1 = self.targets[0].forward_batch(next_in.view())?;
        let t2 = self.targets[1].forward_batch(next_in.view())?;
        let mut y = [vec![0.0; n], vec![0.0; n]];
        for b in 0..n {
            let (y1, y2) = td3_targets(batch.rewards[b], self.gamma, batch.true_terminal[b], t1[[b, 0]], t2[[b, 0]], beta);
            y[0][b] = y1;
            y[1][b] = y2;
        }
        let inputs = stack(batch.states.view(), batch.actions.view());
        let mut critic_loss = 0.0;
        for (k, (net, opt)) in self.critics.iter_mut().zip(self.optims.iter_mut()).enumerate() {
            let tape = net.forward_tape(inputs.view())?;
            let mut upstream = Array2::zeros((n, 1));
            for b in 0..n {
                let err = tape.output()[[b, 0]] - y[k][b];
                critic_loss += err * err / n as f64;
                upstream[[b, 0]] = 2.0 * err / n as f64;
            }
            let mut grads = vec![0.0; net.num_params()];
            net.backward(&tape, upstream.view(), Some(&mut grads))?;
            opt.step(net.params_mut(), &grads)?;
        }
        if !critic_loss.is_finite() {
            return Err(Error::NonFinite("critic loss".into()));
        }
        self.critic_steps += 1;
        let mut actor_loss = None;
        if self.critic_steps.is_multiple_of(self.policy_delay as u64) {
            let q1 = &self.critics[0];
            let mut grad = |x: ArrayView2<'_, f64>| -> Result<(Vec<f64>, Array2<f64>)> {
                let tape = q1.forward_tape(x)?;
                let up = Array2::from_elem((x.nrows(), 1), 1.0);
                let g = q1.backward(&tape, up.view(), None)?;
                Ok((tape.output().column(0).to_vec(), g))
            };
            actor_loss = Some(self.actor.update(batch.states.view(), &mut grad)?.loss);
            self.actor.soft_update(self.tau)?;
            for (t, o) in self.targets.iter_mut().zip(&self.critics) {
                polyak_update(t.params_mut(), o.params(), self.tau)?;
            }
        }
        Ok(Td3Step { critic_loss, actor_loss })
    }

    pub fn save(&self, ck: &mut Checkpoint) {
        self.actor.save("actor", ck);
        for (k, (c, t)) in self.critics.iter().zip(&self.targets).enumerate() {
            ck.push_net(&format!("critic.online{k}"), c);
            ck.push_net(&format!("critic.target{k}"), t);
        }
    }

    pub fn load(&mut self, ck: &Checkpoint) -> Result<()> {
        self.actor.load("actor", ck)?;
        for (k, (c, t)) in self.critics.iter_mut().zip(self.targets.iter_mut()).enumerate() {
            ck.load_net(&format!("critic.online{k}"), c)?;
            ck.load_net(&format!("critic.target{k}"), t)?;
        }
        Ok(())
    }
}

/// Checks that a batch is shaped for an agent with these dimensions.
pub(crate) fn check_batch(batch: &Batch, obs_dim: usize, action_dim: usize) -> Result<()> {
    check_dim("batch states", obs_dim, batch.states.ncols())?;
    check_dim("batch actions", action_dim, batch.actions.ncols())
}
