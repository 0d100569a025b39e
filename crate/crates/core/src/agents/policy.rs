//! Actor networks.

use ndarray::{s, Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::nn::{polyak_update, Activation, Adam, AdamConfig, Checkpoint, DenseNet};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `ln(1 − tanh²u)` without cancellation for large `|u|`.
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

/// Log-density of `a = tanh(μ + σε)` for one coordinate, given `ε`, `ln σ`
/// and the pre-squash value `u`.
pub fn squashed_log_prob(eps: f64, log_std: f64, u: f64) -> f64 {
    -0.5 * eps * eps - log_std - HALF_LN_2PI - log_one_minus_tanh_sq(u)
}

/// Critic feedback for a batch of `state ⊕ action` rows: per-row values and
/// their gradient with respect to the whole input row.
pub type CriticGrad<'a> = dyn FnMut(ArrayView2<'_, f64>) -> Result<(Vec<f64>, Array2<f64>)> + 'a;

fn concat_inputs(states: ArrayView2<'_, f64>, actions: &Array2<f64>) -> Array2<f64> {
    let mut x = Array2::zeros((states.nrows(), states.ncols() + actions.ncols()));
    x.slice_mut(s![.., ..states.ncols()]).assign(&states);
    x.slice_mut(s![.., states.ncols()..]).assign(actions);
    x
}

/// Result of evaluating an actor objective on a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyObjective {
    pub loss: f64,
    pub grads: Vec<f64>,
    /// Batch mean of `log π(a|s)`; zero for deterministic actors.
    pub mean_log_prob: f64,
}

/// Tanh-squashed Gaussian actor. The trunk emits `[μ, ln σ]` per action
/// dimension; `ln σ` is clamped to `[LOG_STD_MIN, LOG_STD_MAX]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticPolicy {
    net: DenseNet,
    optim: Adam,
    action_dim: usize,
}

struct Forward {
    mean: Array2<f64>,
    log_std: Array2<f64>,
    clamped: Array2<bool>,
}

impl StochasticPolicy {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        adam: AdamConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let mut widths = vec![obs_dim];
        widths.extend_from_slice(hidden);
        widths.push(2 * action_dim);
        let net = DenseNet::new(&widths, Activation::Relu, Activation::Identity, rng)?;
        Ok(Self {
            optim: Adam::new(net.num_params(), adam),
            net,
            action_dim,
        })
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut DenseNet {
        &mut self.net
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn split(&self, out: &Array2<f64>) -> Forward {
        let k = self.action_dim;
        let raw = out.slice(s![.., k..]);
        Forward {
            mean: out.slice(s![.., ..k]).to_owned(),
            log_std: raw.mapv(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)),
            clamped: raw.mapv(|v| !(LOG_STD_MIN..=LOG_STD_MAX).contains(&v)),
        }
    }

    /// `tanh(μ(s))`, the deterministic evaluation action.
    pub fn mean_action(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let out = self.net.forward(obs)?;
        Ok(out[..self.action_dim].iter().map(|m| m.tanh()).collect())
    }

    pub fn draw_noise<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Array2<f64> {
        Array2::from_shape_simple_fn((n, self.action_dim), || rng.sample(StandardNormal))
    }

    /// Squashed actions and their log-probabilities for given noise.
    pub fn actions_with_noise(&self, states: ArrayView2<'_, f64>, eps: &Array2<f64>) -> Result<(Array2<f64>, Vec<f64>)> {
        check_dim("policy noise rows", states.nrows(), eps.nrows())?;
        let f = self.split(&self.net.forward_batch(states)?);
        let mut actions = Array2::zeros(eps.raw_dim());
        let mut logp = vec![0.0; states.nrows()];
        for ((b, i), a) in actions.indexed_iter_mut() {
            let u = f.mean[[b, i]] + f.log_std[[b, i]].exp() * eps[[b, i]];
            *a = u.tanh();
            logp[b] += squashed_log_prob(eps[[b, i]], f.log_std[[b, i]], u);
        }
        if logp.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite("policy log-probability".into()));
        }
        Ok((actions, logp))
    }

    pub fn sample_batch<R: Rng + ?Sized>(&self, states: ArrayView2<'_, f64>, rng: &mut R) -> Result<(Array2<f64>, Vec<f64>)> {
        let eps = self.draw_noise(states.nrows(), rng);
        self.actions_with_noise(states, &eps)
    }

    /// One exploratory action and its log-probability.
    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<(Vec<f64>, f64)> {
        let x = ArrayView2::from_shape((1, obs.len()), obs).map_err(|e| Error::Argument(e.to_string()))?;
        let (a, lp) = self.sample_batch(x, rng)?;
        Ok((a.into_raw_vec_and_offset().0, lp[0]))
    }

    /// Loss `mean(α·log π(a|s) − Q̄(s, a))` with `a` reparameterized by `eps`,
    /// and its gradient with respect to the trunk parameters.
    pub fn objective(
        &self,
        states: ArrayView2<'_, f64>,
        eps: &Array2<f64>,
        alpha: f64,
        critic: &mut CriticGrad<'_>,
    ) -> Result<PolicyObjective> {
        let k = self.action_dim;
        let n = states.nrows();
        check_dim("policy noise rows", n, eps.nrows())?;
        check_dim("policy noise width", k, eps.ncols())?;
        let tape = self.net.forward_tape(states)?;
        let f = self.split(tape.output());
        let std = f.log_std.mapv(f64::exp);
        let u = &f.mean + &(&std * eps);
        let actions = u.mapv(f64::tanh);
        let mut logp = vec![0.0; n];
        for ((b, i), &ui) in u.indexed_iter() {
            logp[b] += squashed_log_prob(eps[[b, i]], f.log_std[[b, i]], ui);
        }
        if logp.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite("policy log-probability".into()));
        }
        let inputs = concat_inputs(states, &actions);
        let (q, dq) = critic(inputs.view())?;
        check_dim("critic values", n, q.len())?;
        let obs_dim = states.ncols();
        let scale = 1.0 / n as f64;
        let mut upstream = Array2::zeros((n, 2 * k));
        for b in 0..n {
            for i in 0..k {
                let a = actions[[b, i]];
                let dl_du = 2.0 * alpha * a - dq[[b, obs_dim + i]] * (1.0 - a * a);
                upstream[[b, i]] = dl_du * scale;
                upstream[[b, k + i]] = if f.clamped[[b, i]] {
                    0.0
                } else {
                    (dl_du * std[[b, i]] * eps[[b, i]] - alpha) * scale
                };
            }
        }
        let mut grads = vec![0.0; self.net.num_params()];
        self.net.backward(&tape, upstream.view(), Some(&mut grads))?;
        let loss = logp.iter().zip(&q).map(|(lp, q)| alpha * lp - q).sum::<f64>() * scale;
        if !loss.is_finite() {
            return Err(Error::NonFinite("policy loss".into()));
        }
        Ok(PolicyObjective {
            loss,
            grads,
            mean_log_prob: logp.iter().sum::<f64>() * scale,
        })
    }

    /// Draws fresh noise, evaluates the objective and takes one Adam step.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        states: ArrayView2<'_, f64>,
        alpha: f64,
        critic: &mut CriticGrad<'_>,
        rng: &mut R,
    ) -> Result<PolicyObjective> {
        let eps = self.draw_noise(states.nrows(), rng);
        let obj = self.objective(states, &eps, alpha, critic)?;
        self.optim.step(self.net.params_mut(), &obj.grads)?;
        Ok(obj)
    }

    pub fn save(&self, prefix: &str, ck: &mut Checkpoint) {
        ck.push_net(prefix, &self.net);
    }

    pub fn load(&mut self, prefix: &str, ck: &Checkpoint) -> Result<()> {
        ck.load_net(prefix, &mut self.net)
    }
}

/// Learned entropy weight `α = exp(log α)`, trained so the policy entropy
/// tracks `target_entropy`.
#[derive(Debug, Clone, PartialEq)]
pub struct Temperature {
    log_alpha: f64,
    target_entropy: f64,
    optim: Adam,
}

impl Temperature {
    pub fn new(init_alpha: f64, target_entropy: f64, adam: AdamConfig) -> Result<Self> {
        if !(init_alpha > 0.0) || !init_alpha.is_finite() {
            return Err(Error::Config(format!("initial temperature must be positive, got {init_alpha}")));
        }
        Ok(Self {
            log_alpha: init_alpha.ln(),
            target_entropy,
            optim: Adam::new(1, adam),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn log_alpha(&self) -> f64 {
        self.log_alpha
    }

    pub fn target_entropy(&self) -> f64 {
        self.target_entropy
    }

    /// Loss `−ln α·(mean log π + target)`; returns it and steps `ln α`.
    pub fn update(&mut self, mean_log_prob: f64) -> Result<f64> {
        let slack = mean_log_prob + self.target_entropy;
        let loss = -self.log_alpha * slack;
        let mut p = [self.log_alpha];
        self.optim.step(&mut p, &[-slack])?;
        self.log_alpha = p[0];
        Ok(loss)
    }
}

/// Tanh-headed deterministic actor with a Polyak-averaged target copy.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicPolicy {
    net: DenseNet,
    target: DenseNet,
    optim: Adam,
    pub explore_std: f64,
    pub target_noise: f64,
    pub noise_clip: f64,
}

impl DeterministicPolicy {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        adam: AdamConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let mut widths = vec![obs_dim];
        widths.extend_from_slice(hidden);
        widths.push(action_dim);
        let net = DenseNet::new(&widths, Activation::Relu, Activation::Tanh, rng)?;
        Ok(Self {
            target: net.clone(),
            optim: Adam::new(net.num_params(), adam),
            net,
            explore_std: 0.1,
            target_noise: 0.2,
            noise_clip: 0.5,
        })
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn target(&self) -> &DenseNet {
        &self.target
    }

    pub fn act(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.net.forward(obs)
    }

    pub fn explore<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let mut a = self.act(obs)?;
        for ai in &mut a {
            let n: f64 = rng.sample(StandardNormal);
            *ai = (*ai + self.explore_std * n).clamp(-1.0, 1.0);
        }
        Ok(a)
    }

    /// Target actions with clipped Gaussian smoothing noise.
    pub fn smoothed_target_actions<R: Rng + ?Sized>(&self, states: ArrayView2<'_, f64>, rng: &mut R) -> Result<Array2<f64>> {
        let mut a = self.target.forward_batch(states)?;
        for v in a.iter_mut() {
            let n: f64 = rng.sample(StandardNormal);
            *v = (*v + (self.target_noise * n).clamp(-self.noise_clip, self.noise_clip)).clamp(-1.0, 1.0);
        }
        Ok(a)
    }

    /// Loss `−mean Q(s, π(s))` and its parameter gradient.
    pub fn objective(&self, states: ArrayView2<'_, f64>, critic: &mut CriticGrad<'_>) -> Result<PolicyObjective> {
        let n = states.nrows();
        let tape = self.net.forward_tape(states)?;
        let inputs = concat_inputs(states, tape.output());
        let (q, dq) = critic(inputs.view())?;
        check_dim("critic values", n, q.len())?;
        let upstream = dq.slice(s![.., states.ncols()..]).mapv(|g| -g / n as f64);
        let mut grads = vec![0.0; self.net.num_params()];
        self.net.backward(&tape, upstream.view(), Some(&mut grads))?;
        let loss = -q.iter().sum::<f64>() / n as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite("actor loss".into()));
        }
        Ok(PolicyObjective {
            loss,
            grads,
            mean_log_prob: 0.0,
        })
    }

    pub fn update(&mut self, states: ArrayView2<'_, f64>, critic: &mut CriticGrad<'_>) -> Result<PolicyObjective> {
        let obj = self.objective(states, critic)?;
        self.optim.step(self.net.params_mut(), &obj.grads)?;
        Ok(obj)
    }

    pub fn soft_update(&mut self, tau: f64) -> Result<()> {
        polyak_update(self.target.params_mut(), self.net.params(), tau)
    }

    pub fn save(&self, prefix: &str, ck: &mut Checkpoint) {
        ck.push_net(&format!("{prefix}.online"), &self.net);
        ck.push_net(&format!("{prefix}.target"), &self.target);
    }

    pub fn load(&mut self, prefix: &str, ck: &Checkpoint) -> Result<()> {
        ck.load_net(&format!("{prefix}.online"), &mut self.net)?;
        ck.load_net(&format!("{prefix}.target"), &mut self.target)
    }
}
