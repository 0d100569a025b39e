//! Online calibration of the pessimism parameter from observed returns.
//!
//! A [`Calibrator`] holds a scalar `β` in `[β_min, β_max]` where larger
//! values mean a less pessimistic critic target. For truncated quantile
//! critics `β = d_max − d`; for twin critics `β` is the weight on each
//! critic's own target. Every `T_d` environment steps (checked at episode
//! ends, after a warmup) the summed residual `C = Σ (Q̂(s,a) − R(s,a))` over
//! recent on-policy returns moves `β` by `−α·C/ma`, where `ma` is a moving
//! average of `|C|`.

use std::collections::VecDeque;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Return-to-go `R_t = x_t + γ·R_{t+1}` with `x_t = r_t` (plus the entropy
/// bonus when `include_entropy` is set).
pub fn discounted_returns(
    rewards: &[f64],
    entropy_bonuses: &[f64],
    gamma: f64,
    include_entropy: bool,
) -> Result<Vec<f64>> {
    if rewards.len() != entropy_bonuses.len() {
        return Err(Error::Dimension {
            context: "entropy bonuses",
            expected: rewards.len(),
            got: entropy_bonuses.len(),
        });
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Argument(format!("discount must lie in [0, 1], got {gamma}")));
    }
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        let x = if include_entropy {
            rewards[t] + entropy_bonuses[t]
        } else {
            rewards[t]
        };
        acc = x + gamma * acc;
        out[t] = acc;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeReturnRecord {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    /// Discounted return-to-go from this step.
    pub ret: f64,
    pub episode: u64,
    pub step: usize,
}

/// Drops the last `window` records of an episode that ended by timeout;
/// their returns are cut short by the horizon rather than by the task.
pub fn trim_timeout_tail(mut records: Vec<EpisodeReturnRecord>, timed_out: bool, window: usize) -> Vec<EpisodeReturnRecord> {
    if timed_out {
        records.truncate(records.len().saturating_sub(window));
    }
    records
}

/// `Q̂_β = q + β·|q|/K`, a family that is monotone in `β` for any estimate.
pub fn generic_qbeta(q_hat: f64, beta: f64, k: f64) -> f64 {
    beta * q_hat.abs() / k + q_hat
}

/// `argmin_β |Q̂_β − mean(samples)|` over `[beta_min, beta_max]` for an
/// increasing family, by bisection to width `1e-10`.
pub fn beta_star<F: Fn(f64) -> f64>(samples: &[f64], q_family: F, beta_min: f64, beta_max: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Argument("beta_star needs at least one sample".into()));
    }
    if !(beta_min <= beta_max) {
        return Err(Error::Argument(format!("empty interval [{beta_min}, {beta_max}]")));
    }
    let target = samples.iter().sum::<f64>() / samples.len() as f64;
    if target <= q_family(beta_min) {
        return Ok(beta_min);
    }
    if target >= q_family(beta_max) {
        return Ok(beta_max);
    }
    let (mut lo, mut hi) = (beta_min, beta_max);
    let (mut q_lo, mut q_hi) = (q_family(lo), q_family(hi));
    while hi - lo > 1e-10 {
        // secant probe: lands exactly on the root for linear families
        let s = lo + (target - q_lo) * ((hi - lo) / (q_hi - q_lo));
        if s > lo && s < hi && q_family(s) == target {
            return Ok(s);
        }
        let mid = 0.5 * (lo + hi);
        let q = q_family(mid);
        if q == target {
            return Ok(mid);
        }
        if q < target {
            (lo, q_lo) = (mid, q);
        } else {
            (hi, q_hi) = (mid, q);
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibratorConfig {
    pub beta_min: f64,
    pub beta_max: f64,
    pub beta_init: f64,
    /// Step size `α`.
    pub lr: f64,
    /// Minimum environment steps between updates (`T_d`).
    pub interval: usize,
    /// No update while total steps are at or below this (`T_d_init`).
    pub warmup: usize,
    /// Record cap `S_R`.
    pub batch_cap: usize,
    /// Moving-average rate `τ_d`.
    pub ma_rate: f64,
    /// Steps dropped from the end of each timeout episode.
    pub timeout_exclusion: usize,
}

impl CalibratorConfig {
    /// Truncation calibration: `β = d_max − d`, starting from `d_init`.
    pub fn for_truncation(d_init: f64, d_max: f64) -> Self {
        Self {
            beta_min: 0.0,
            beta_max: d_max,
            beta_init: d_max - d_init,
            lr: 0.1,
            interval: 1000,
            warmup: 25_000,
            batch_cap: 5000,
            ma_rate: 0.05,
            timeout_exclusion: 0,
        }
    }

    /// Twin-critic calibration: `β ∈ [0, 1]` weights each critic's own target.
    pub fn for_twin(beta_init: f64) -> Self {
        Self {
            beta_min: 0.0,
            beta_max: 1.0,
            beta_init,
            ..Self::for_truncation(0.0, 1.0)
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.beta_min <= self.beta_max
            && (self.beta_min..=self.beta_max).contains(&self.beta_init)
            && self.lr >= 0.0
            && self.lr.is_finite()
            && self.interval >= 1
            && self.batch_cap >= 1
            && self.ma_rate > 0.0
            && self.ma_rate <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid calibrator settings: {self:?}")))
        }
    }
}

/// One applied update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationRow {
    pub env_step: usize,
    /// Summed residual `Σ (Q̂ − R)`.
    pub c: f64,
    pub ma: f64,
    pub beta: f64,
    /// Records used for this update.
    pub batch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CalibrationOutcome {
    NotDue,
    /// Due, but no returns were stored; the counter keeps running.
    EmptyBatch,
    Updated(CalibrationRow),
}

#[derive(Debug, Clone)]
pub struct Calibrator {
    cfg: CalibratorConfig,
    beta: f64,
    t_d: usize,
    ma: Option<f64>,
    episodes: VecDeque<Vec<EpisodeReturnRecord>>,
    n_records: usize,
}

impl Calibrator {
    pub fn new(cfg: CalibratorConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            beta: cfg.beta_init,
            cfg,
            t_d: 0,
            ma: None,
            episodes: VecDeque::new(),
            n_records: 0,
        })
    }

    pub fn config(&self) -> &CalibratorConfig {
        &self.cfg
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn ma(&self) -> Option<f64> {
        self.ma
    }

    pub fn steps_since_update(&self) -> usize {
        self.t_d
    }

    pub fn n_records(&self) -> usize {
        self.n_records
    }

    pub fn n_episodes(&self) -> usize {
        self.episodes.len()
    }

    pub fn episodes(&self) -> impl Iterator<Item = &[EpisodeReturnRecord]> {
        self.episodes.iter().map(Vec::as_slice)
    }

    /// Counts one environment step.
    pub fn tick(&mut self) {
        self.t_d += 1;
    }

    /// Stores the returns of one finished episode.
    pub fn record_episode(&mut self, records: Vec<EpisodeReturnRecord>, timed_out: bool) -> Result<()> {
        let records = trim_timeout_tail(records, timed_out, self.cfg.timeout_exclusion);
        if records.is_empty() {
            return Ok(());
        }
        if records.iter().any(|r| !r.ret.is_finite()) {
            return Err(Error::NonFinite("episode return".into()));
        }
        if records.iter().any(|r| r.episode != records[0].episode) {
            return Err(Error::Argument("records span more than one episode".into()));
        }
        self.n_records += records.len();
        self.episodes.push_back(records);
        Ok(())
    }

    pub fn is_due(&self, total_env_steps: usize) -> bool {
        self.t_d >= self.cfg.interval && total_env_steps > self.cfg.warmup
    }

    /// Applies an update if one is due. `q_estimator` maps rows of
    /// `state ⊕ action` to value estimates.
    pub fn maybe_update<F>(&mut self, q_estimator: F, total_env_steps: usize) -> Result<CalibrationOutcome>
    where
        F: FnOnce(&Array2<f64>) -> Result<Vec<f64>>,
    {
        if !self.is_due(total_env_steps) {
            return Ok(CalibrationOutcome::NotDue);
        }
        if self.n_records == 0 {
            return Ok(CalibrationOutcome::EmptyBatch);
        }
        let first = &self.episodes[0][0];
        let width = first.state.len() + first.action.len();
        let mut inputs = Array2::zeros((self.n_records, width));
        let mut returns = Vec::with_capacity(self.n_records);
        for (row, rec) in self.episodes.iter().flatten().enumerate() {
            let mut r = inputs.row_mut(row);
            let (s, a) = r.as_slice_mut().expect("row-major").split_at_mut(rec.state.len());
            s.copy_from_slice(&rec.state);
            a.copy_from_slice(&rec.action);
            returns.push(rec.ret);
        }
        let q = q_estimator(&inputs)?;
        if q.len() != returns.len() {
            return Err(Error::Dimension {
                context: "calibration estimates",
                expected: returns.len(),
                got: q.len(),
            });
        }
        let c: f64 = q.iter().zip(&returns).map(|(q, r)| q - r).sum();
        if !c.is_finite() {
            return Err(Error::NonFinite("calibration residual".into()));
        }
        Ok(CalibrationOutcome::Updated(self.apply(c, total_env_steps)))
    }

    /// The update proper, given the residual sum.
    pub fn apply(&mut self, c: f64, total_env_steps: usize) -> CalibrationRow {
        let ma = match self.ma {
            None => c.abs(),
            Some(m) => (1.0 - self.cfg.ma_rate) * m + self.cfg.ma_rate * c.abs(),
        };
        self.ma = Some(ma);
        let step = if ma > 0.0 { self.cfg.lr * c / ma } else { 0.0 };
        self.beta = (self.beta - step).clamp(self.cfg.beta_min, self.cfg.beta_max);
        self.t_d = 0;
        let batch = self.n_records;
        self.prune();
        CalibrationRow {
            env_step: total_env_steps,
            c,
            ma,
            beta: self.beta,
            batch,
        }
    }

    /// Drops oldest episodes while over the cap, keeping at least one.
    pub fn prune(&mut self) {
        while self.n_records > self.cfg.batch_cap && self.episodes.len() > 1 {
            let old = self.episodes.pop_front().expect("more than one episode");
            self.n_records -= old.len();
        }
    }
}
