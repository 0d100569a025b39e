//! Planar double integrator driven toward the origin.
//!
//! State and observation `(x, y, vx, vy)`. Each step `v ← clip(v + u·dt)`,
//! `p ← p + v·dt`; positions are confined to `[−arena, arena]²` and the
//! velocity component into a wall is zeroed. Reward
//! `−‖p' − goal‖² − 0.01·‖u‖²` on the post-step position.
//!
//! Initial state: `p ~ U[−1, 1)²`, `v = 0`.

use super::{uniform_vec, EnvId, EnvSpec, EnvState};
use crate::rng::StreamRng;

#[derive(Debug, Clone, PartialEq)]
pub struct PointMass {
    pub dt: f64,
    pub max_speed: f64,
    pub arena: f64,
    pub goal: [f64; 2],
    pub max_steps: usize,
}

impl Default for PointMass {
    fn default() -> Self {
        Self {
            dt: 0.1,
            max_speed: 1.0,
            arena: 2.0,
            goal: [0.0, 0.0],
            max_steps: 1000,
        }
    }
}

impl PointMass {
    pub fn spec(&self) -> EnvSpec {
        let far = (self.arena + self.goal[0].abs()).powi(2) + (self.arena + self.goal[1].abs()).powi(2);
        EnvSpec {
            id: EnvId::PointMass,
            obs_dim: 4,
            action_dim: 2,
            action_low: vec![-1.0, -1.0],
            action_high: vec![1.0, 1.0],
            max_episode_steps: self.max_steps,
            reward_floor: -(far + 0.01 * 2.0),
        }
    }

    pub fn reset(&self, rng: &mut StreamRng) -> EnvState {
        let p = uniform_vec(rng, &[-1.0, -1.0], &[1.0, 1.0]);
        EnvState {
            physical: vec![p[0], p[1], 0.0, 0.0],
            t: 0,
        }
    }

    pub fn observe(&self, state: &EnvState) -> Vec<f64> {
        state.physical.clone()
    }

    pub(super) fn dynamics(&self, physical: &[f64], action: &[f64]) -> (Vec<f64>, f64, bool) {
        let mut next = vec![0.0; 4];
        let mut dist2 = 0.0;
        for k in 0..2 {
            let mut v = (physical[2 + k] + action[k] * self.dt).clamp(-self.max_speed, self.max_speed);
            let mut p = physical[k] + v * self.dt;
            if p.abs() > self.arena {
                p = p.clamp(-self.arena, self.arena);
                v = 0.0;
            }
            next[k] = p;
            next[2 + k] = v;
            dist2 += (p - self.goal[k]).powi(2);
        }
        let effort = action[0] * action[0] + action[1] * action[1];
        (next, -dist2 - 0.01 * effort, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn goal_at_rest_is_a_fixed_point() {
        let pm = PointMass::default();
        let (next, r, done) = pm.dynamics(&[0.0, 0.0, 0.0, 0.0], &[0.0, 0.0]);
        assert_eq!(next, vec![0.0; 4]);
        assert_eq!(r, 0.0);
        assert!(!done);
    }

    #[test]
    fn walls_stop_motion() {
        let pm = PointMass::default();
        let (next, _, _) = pm.dynamics(&[1.99, 0.0, 1.0, 0.0], &[1.0, 0.0]);
        assert_eq!(next[0], 2.0);
        assert_eq!(next[2], 0.0);
    }

    #[test]
    fn reset_mean_is_centred() {
        let pm = PointMass::default();
        let mut rng = crate::rng::stream(3, "env");
        let n = 10_000;
        let mut mean = [0.0; 2];
        for _ in 0..n {
            let s = pm.reset(&mut rng);
            assert_eq!(&s.physical[2..], &[0.0, 0.0]);
            mean[0] += s.physical[0] / n as f64;
            mean[1] += s.physical[1] / n as f64;
        }
        let se = 1.0 / 3f64.sqrt() / (n as f64).sqrt();
        assert!(mean[0].abs() < 3.0 * se && mean[1].abs() < 3.0 * se);
    }
}
