//! Desk-scale episodic continuous-control tasks.
//!
//! Environments are value-like: `step` is a pure function of the state and
//! the action, and the step counter lives in the state so the timeout flag
//! needs no hidden bookkeeping. Agents act in the normalized box `[-1, 1]^k`;
//! [`Env::scale_action`] maps into the task's bounds.

mod pendulum;
mod pointmass;

pub use pendulum::Pendulum;
pub use pointmass::PointMass;

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::rng::StreamRng;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub id: EnvId,
    /// Length of the observation vector fed to agents.
    pub obs_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub max_episode_steps: usize,
    /// Lower bound on any single-step reward.
    pub reward_floor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub physical: Vec<f64>,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next: EnvState,
    pub reward: f64,
    pub true_terminal: bool,
    pub timeout: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.true_terminal || self.timeout
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EnvId {
    Pendulum,
    PointMass,
}

impl EnvId {
    pub const ALL: [EnvId; 2] = [EnvId::Pendulum, EnvId::PointMass];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvId::Pendulum => "pendulum",
            EnvId::PointMass => "pointmass",
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pendulum" => Ok(EnvId::Pendulum),
            "pointmass" => Ok(EnvId::PointMass),
            other => Err(Error::Config(format!(
                "unknown environment `{other}` (expected pendulum | pointmass)"
            ))),
        }
    }
}

/// Registry: builds the environment for an id. `max_episode_steps` of `None`
/// keeps the task default.
pub fn make(id: EnvId, max_episode_steps: Option<usize>) -> Result<Env> {
    let env = match id {
        EnvId::Pendulum => Env::Pendulum(Pendulum::default()),
        EnvId::PointMass => Env::PointMass(PointMass::default()),
    };
    match max_episode_steps {
        Some(0) => Err(Error::Config("max episode length must be at least 1".into())),
        Some(n) => Ok(env.with_max_steps(n)),
        None => Ok(env),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Env {
    Pendulum(Pendulum),
    PointMass(PointMass),
}

impl Env {
    pub fn spec(&self) -> EnvSpec {
        match self {
            Env::Pendulum(e) => e.spec(),
            Env::PointMass(e) => e.spec(),
        }
    }

    fn with_max_steps(self, n: usize) -> Self {
        match self {
            Env::Pendulum(mut e) => {
                e.max_steps = n;
                Env::Pendulum(e)
            }
            Env::PointMass(mut e) => {
                e.max_steps = n;
                Env::PointMass(e)
            }
        }
    }

    pub fn reset(&self, rng: &mut StreamRng) -> EnvState {
        match self {
            Env::Pendulum(e) => e.reset(rng),
            Env::PointMass(e) => e.reset(rng),
        }
    }

    pub fn observe(&self, state: &EnvState) -> Vec<f64> {
        match self {
            Env::Pendulum(e) => e.observe(state),
            Env::PointMass(e) => e.observe(state),
        }
    }

    /// Advances one step. The action is in the task's own units and is
    /// clipped to the bounds.
    pub fn step(&self, state: &EnvState, action: &[f64]) -> Result<StepResult> {
        let spec = self.spec();
        check_dim("env action", spec.action_dim, action.len())?;
        let clipped: Vec<f64> = action
            .iter()
            .zip(spec.action_low.iter().zip(&spec.action_high))
            .map(|(a, (lo, hi))| a.clamp(*lo, *hi))
            .collect();
        let (physical, reward, true_terminal) = match self {
            Env::Pendulum(e) => e.dynamics(&state.physical, &clipped),
            Env::PointMass(e) => e.dynamics(&state.physical, &clipped),
        };
        if physical.iter().any(|v| !v.is_finite()) || !reward.is_finite() {
            return Err(Error::EnvFault(format!("{} produced a non-finite state", spec.id)));
        }
        let t = state.t + 1;
        Ok(StepResult {
            next: EnvState { physical, t },
            reward,
            true_terminal,
            timeout: !true_terminal && t >= spec.max_episode_steps,
        })
    }

    /// Maps a normalized action in `[-1, 1]^k` onto the task bounds.
    pub fn scale_action(&self, normalized: &[f64]) -> Vec<f64> {
        let spec = self.spec();
        normalized
            .iter()
            .zip(spec.action_low.iter().zip(&spec.action_high))
            .map(|(a, (lo, hi))| lo + 0.5 * (a.clamp(-1.0, 1.0) + 1.0) * (hi - lo))
            .collect()
    }
}

/// Uniform draw on `[lo, hi)` per coordinate.
pub(crate) fn uniform_vec(rng: &mut StreamRng, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    lo.iter()
        .zip(hi)
        .map(|(l, h)| rng.random_range(*l..*h))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn ids_round_trip() {
        for id in EnvId::ALL {
            assert_eq!(id.as_str().parse::<EnvId>().unwrap(), id);
        }
        assert!("mujoco".parse::<EnvId>().is_err());
    }

    #[test]
    fn timeout_set_exactly_once_at_max_length() {
        for id in EnvId::ALL {
            let env = make(id, Some(17)).unwrap();
            let mut rng = stream(1, "env");
            let mut s = env.reset(&mut rng);
            let mut timeouts = 0;
            for step in 1..=17 {
                let r = env.step(&s, &vec![0.3; env.spec().action_dim]).unwrap();
                assert!(!r.true_terminal);
                if r.timeout {
                    timeouts += 1;
                    assert_eq!(step, 17);
                }
                s = r.next;
            }
            assert_eq!(timeouts, 1);
        }
    }

    #[test]
    fn rewards_respect_documented_floor() {
        use rand::Rng;
        for id in EnvId::ALL {
            let env = make(id, None).unwrap();
            let spec = env.spec();
            let mut rng = stream(2, "env");
            let mut s = env.reset(&mut rng);
            for _ in 0..5000 {
                let a: Vec<f64> = (0..spec.action_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let r = env.step(&s, &env.scale_action(&a)).unwrap();
                assert!(r.reward >= spec.reward_floor, "{id}: {} below floor", r.reward);
                assert!(r.reward <= 0.0);
                s = if r.done() { env.reset(&mut rng) } else { r.next };
            }
        }
    }

    #[test]
    fn step_is_pure() {
        let env = make(EnvId::Pendulum, None).unwrap();
        let s = EnvState { physical: vec![0.4, -1.1], t: 3 };
        assert_eq!(env.step(&s, &[0.7]).unwrap(), env.step(&s, &[0.7]).unwrap());
    }

    #[test]
    fn scale_action_maps_box() {
        let env = make(EnvId::Pendulum, None).unwrap();
        assert_eq!(env.scale_action(&[-1.0]), vec![-2.0]);
        assert_eq!(env.scale_action(&[1.0]), vec![2.0]);
        assert_eq!(env.scale_action(&[0.0]), vec![0.0]);
        assert!(env.step(&EnvState { physical: vec![0.0, 0.0], t: 0 }, &[0.0, 1.0]).is_err());
    }
}
