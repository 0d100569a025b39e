//! Torque-limited pendulum swing-up.
//!
//! State `(θ, θ̇)` with `θ = 0` upright; observation `(cos θ, sin θ, θ̇)`.
//! Dynamics `θ̈ = 3g/(2l)·sin θ + 3/(m l²)·u`, semi-implicit Euler (velocity
//! first), speed clipped to `±max_speed`. Reward
//! `−(wrap(θ)² + 0.1·θ̇² + 0.001·u²)` on the pre-step state.
//!
//! Initial state: `θ ~ U[−π, π)`, `θ̇ ~ U[−1, 1)`.

use std::f64::consts::PI;

use super::{uniform_vec, EnvId, EnvSpec, EnvState};
use crate::rng::StreamRng;

#[derive(Debug, Clone, PartialEq)]
pub struct Pendulum {
    pub gravity: f64,
    pub mass: f64,
    pub length: f64,
    pub dt: f64,
    pub max_torque: f64,
    pub max_speed: f64,
    pub max_steps: usize,
}

impl Default for Pendulum {
    fn default() -> Self {
        Self {
            gravity: 10.0,
            mass: 1.0,
            length: 1.0,
            dt: 0.05,
            max_torque: 2.0,
            max_speed: 8.0,
            max_steps: 200,
        }
    }
}

/// Wraps an angle into `[−π, π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

impl Pendulum {
    pub fn spec(&self) -> EnvSpec {
        EnvSpec {
            id: EnvId::Pendulum,
            obs_dim: 3,
            action_dim: 1,
            action_low: vec![-self.max_torque],
            action_high: vec![self.max_torque],
            max_episode_steps: self.max_steps,
            reward_floor: -(PI * PI + 0.1 * self.max_speed * self.max_speed
                + 0.001 * self.max_torque * self.max_torque),
        }
    }

    pub fn reset(&self, rng: &mut StreamRng) -> EnvState {
        EnvState {
            physical: uniform_vec(rng, &[-PI, -1.0], &[PI, 1.0]),
            t: 0,
        }
    }

    pub fn observe(&self, state: &EnvState) -> Vec<f64> {
        let (theta, omega) = (state.physical[0], state.physical[1]);
        vec![theta.cos(), theta.sin(), omega]
    }

    pub fn angular_acceleration(&self, theta: f64, torque: f64) -> f64 {
        3.0 * self.gravity / (2.0 * self.length) * theta.sin()
            + 3.0 / (self.mass * self.length * self.length) * torque
    }

    /// Energy per unit inertia; conserved by the unforced continuous dynamics.
    pub fn energy(&self, theta: f64, omega: f64) -> f64 {
        0.5 * omega * omega + 3.0 * self.gravity / (2.0 * self.length) * theta.cos()
    }

    pub(super) fn dynamics(&self, physical: &[f64], action: &[f64]) -> (Vec<f64>, f64, bool) {
        let (theta, omega) = (physical[0], physical[1]);
        let u = action[0];
        let reward = -(wrap_angle(theta).powi(2) + 0.1 * omega * omega + 0.001 * u * u);
        let omega_next = (omega + self.angular_acceleration(theta, u) * self.dt)
            .clamp(-self.max_speed, self.max_speed);
        let theta_next = wrap_angle(theta + omega_next * self.dt);
        (vec![theta_next, omega_next], reward, false)
    }
}
