//! Uniform replay storage and the on-policy return tracker.

use ndarray::Array2;
use rand::Rng;

use crate::calibrator::{discounted_returns, EpisodeReturnRecord};
use crate::error::{check_dim, Error, Result};

/// One environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    /// Normalized action in `[-1, 1]^k`.
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub true_terminal: bool,
    pub timeout: bool,
}

/// Column-stacked minibatch, one row per sampled transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Vec<f64>,
    pub next_states: Array2<f64>,
    pub true_terminal: Vec<bool>,
    pub timeout: Vec<bool>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Fixed-capacity ring buffer with flat per-field storage. Slots are
/// allocated on demand, so a large capacity costs nothing until filled.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    action_dim: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_states: Vec<f64>,
    true_terminal: Vec<bool>,
    timeout: Vec<bool>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, action_dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be at least 1".into()));
        }
        Ok(Self {
            capacity,
            obs_dim,
            action_dim,
            states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_states: Vec::new(),
            true_terminal: Vec::new(),
            timeout: Vec::new(),
            cursor: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn push(&mut self, t: &Transition) -> Result<()> {
        check_dim("replay state", self.obs_dim, t.state.len())?;
        check_dim("replay next state", self.obs_dim, t.next_state.len())?;
        check_dim("replay action", self.action_dim, t.action.len())?;
        if self.len() < self.capacity {
            self.states.extend_from_slice(&t.state);
            self.actions.extend_from_slice(&t.action);
            self.rewards.push(t.reward);
            self.next_states.extend_from_slice(&t.next_state);
            self.true_terminal.push(t.true_terminal);
            self.timeout.push(t.timeout);
        } else {
            let (o, a, c) = (self.obs_dim, self.action_dim, self.cursor);
            self.states[c * o..(c + 1) * o].copy_from_slice(&t.state);
            self.actions[c * a..(c + 1) * a].copy_from_slice(&t.action);
            self.rewards[c] = t.reward;
            self.next_states[c * o..(c + 1) * o].copy_from_slice(&t.next_state);
            self.true_terminal[c] = t.true_terminal;
            self.timeout[c] = t.timeout;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        Ok(())
    }

    fn slot(&self, i: usize) -> Transition {
        let (o, a) = (self.obs_dim, self.action_dim);
        Transition {
            state: self.states[i * o..(i + 1) * o].to_vec(),
            action: self.actions[i * a..(i + 1) * a].to_vec(),
            reward: self.rewards[i],
            next_state: self.next_states[i * o..(i + 1) * o].to_vec(),
            true_terminal: self.true_terminal[i],
            timeout: self.timeout[i],
        }
    }

    /// The `i`-th stored transition counting from the oldest.
    pub fn get(&self, i: usize) -> Option<Transition> {
        if i >= self.len() {
            return None;
        }
        let start = if self.len() < self.capacity { 0 } else { self.cursor };
        Some(self.slot((start + i) % self.capacity))
    }

    fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.is_empty() {
            return Err(Error::Usage("cannot sample from an empty replay buffer".into()));
        }
        Ok((0..n).map(|_| rng.random_range(0..self.len())).collect())
    }

    /// `n` uniform draws with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Transition>> {
        Ok(self.draw(n, rng)?.into_iter().map(|i| self.slot(i)).collect())
    }

    /// Same draws as [`ReplayBuffer::sample`], laid out as matrices.
    pub fn sample_batch<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Batch> {
        let idx = self.draw(n, rng)?;
        let (o, a) = (self.obs_dim, self.action_dim);
        let gather = |src: &[f64], w: usize| {
            let mut v = Vec::with_capacity(n * w);
            for &i in &idx {
                v.extend_from_slice(&src[i * w..(i + 1) * w]);
            }
            Array2::from_shape_vec((n, w), v).expect("gathered rows")
        };
        Ok(Batch {
            states: gather(&self.states, o),
            actions: gather(&self.actions, a),
            rewards: idx.iter().map(|&i| self.rewards[i]).collect(),
            next_states: gather(&self.next_states, o),
            true_terminal: idx.iter().map(|&i| self.true_terminal[i]).collect(),
            timeout: idx.iter().map(|&i| self.timeout[i]).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
struct TrackedStep {
    state: Vec<f64>,
    action: Vec<f64>,
    reward: f64,
    entropy_bonus: f64,
}

/// Collects the steps of the running episode and turns them into
/// return-to-go records once the episode has ended.
#[derive(Debug, Clone, Default)]
pub struct ReturnTracker {
    steps: Vec<TrackedStep>,
    ended: bool,
    episodes: u64,
}

impl ReturnTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Number of episodes flushed so far.
    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    pub fn push(
        &mut self,
        state: &[f64],
        action: &[f64],
        reward: f64,
        entropy_bonus: f64,
        episode_end: bool,
    ) -> Result<()> {
        if self.ended {
            return Err(Error::Usage("episode already ended; call finish_episode first".into()));
        }
        if !reward.is_finite() || !entropy_bonus.is_finite() {
            return Err(Error::NonFinite("tracked reward".into()));
        }
        self.steps.push(TrackedStep {
            state: state.to_vec(),
            action: action.to_vec(),
            reward,
            entropy_bonus,
        });
        self.ended = episode_end;
        Ok(())
    }

    pub fn finish_episode(&mut self, gamma: f64, include_entropy: bool) -> Result<Vec<EpisodeReturnRecord>> {
        if !self.ended {
            return Err(Error::Usage("finish_episode called before the episode ended".into()));
        }
        let rewards: Vec<f64> = self.steps.iter().map(|s| s.reward).collect();
        let bonuses: Vec<f64> = self.steps.iter().map(|s| s.entropy_bonus).collect();
        let returns = discounted_returns(&rewards, &bonuses, gamma, include_entropy)?;
        let episode = self.episodes;
        let records = self
            .steps
            .drain(..)
            .zip(returns)
            .enumerate()
            .map(|(step, (s, ret))| EpisodeReturnRecord {
                state: s.state,
                action: s.action,
                ret,
                episode,
                step,
            })
            .collect();
        self.ended = false;
        self.episodes += 1;
        Ok(records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;
    use std::collections::VecDeque;

    fn tr(x: f64) -> Transition {
        Transition {
            state: vec![x, -x],
            action: vec![x / 10.0],
            reward: x,
            next_state: vec![x + 1.0, 0.0],
            true_terminal: x as i64 % 3 == 0,
            timeout: x as i64 % 5 == 0,
        }
    }

    #[test]
    fn overflow_drops_oldest() {
        let mut buf = ReplayBuffer::new(4, 2, 1).unwrap();
        for i in 0..5 {
            buf.push(&tr(i as f64)).unwrap();
        }
        assert_eq!(buf.len(), 4);
        assert_eq!(buf.get(0).unwrap(), tr(1.0));
        assert_eq!(buf.get(3).unwrap(), tr(4.0));
        assert!(buf.get(4).is_none());
    }

    #[test]
    fn single_item_sampling() {
        let mut buf = ReplayBuffer::new(8, 2, 1).unwrap();
        assert!(buf.sample(1, &mut stream(0, "buffer")).is_err());
        buf.push(&tr(7.0)).unwrap();
        let batch = buf.sample(5, &mut stream(0, "buffer")).unwrap();
        assert_eq!(batch, vec![tr(7.0); 5]);
    }

    #[test]
    fn batch_layout_matches_list_sample() {
        let mut buf = ReplayBuffer::new(16, 2, 1).unwrap();
        for i in 0..20 {
            buf.push(&tr(i as f64)).unwrap();
        }
        let list = buf.sample(9, &mut stream(4, "buffer")).unwrap();
        let batch = buf.sample_batch(9, &mut stream(4, "buffer")).unwrap();
        assert_eq!(batch.len(), 9);
        for (b, t) in list.iter().enumerate() {
            assert_eq!(batch.states.row(b).to_vec(), t.state);
            assert_eq!(batch.actions.row(b).to_vec(), t.action);
            assert_eq!(batch.next_states.row(b).to_vec(), t.next_state);
            assert_eq!(batch.rewards[b], t.reward);
            assert_eq!(batch.true_terminal[b], t.true_terminal);
            assert_eq!(batch.timeout[b], t.timeout);
        }
        assert!(buf.push(&Transition { state: vec![0.0], ..tr(1.0) }).is_err());
    }

    #[test]
    fn sampling_is_uniform() {
        let mut buf = ReplayBuffer::new(10, 2, 1).unwrap();
        for i in 0..10 {
            buf.push(&tr(i as f64)).unwrap();
        }
        let n = 100_000;
        let mut counts = [0usize; 10];
        for t in buf.sample(n, &mut stream(5, "buffer")).unwrap() {
            counts[t.reward as usize] += 1;
        }
        let p = 0.1;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - n as f64 * p).powi(2) / (n as f64 * p))
            .sum();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 3.0 * sd, "{counts:?}");
        }
        // 9 degrees of freedom; 99.9% quantile is about 27.9
        assert!(chi2 < 27.9, "chi2 = {chi2}");
    }

    proptest! {
        #[test]
        fn buffer_matches_list_model(cap in 1usize..8, ops in proptest::collection::vec(0u8..4, 0..60)) {
            let mut buf = ReplayBuffer::new(cap, 2, 1).unwrap();
            let mut model: VecDeque<Transition> = VecDeque::new();
            let mut rng = stream(1, "buffer");
            for (k, op) in ops.into_iter().enumerate() {
                if op == 0 && !model.is_empty() {
                    for t in buf.sample(3, &mut rng).unwrap() {
                        prop_assert!(model.contains(&t));
                    }
                } else {
                    let t = tr(k as f64);
                    buf.push(&t).unwrap();
                    model.push_back(t);
                    if model.len() > cap {
                        model.pop_front();
                    }
                }
                prop_assert_eq!(buf.len(), model.len());
                for (i, t) in model.iter().enumerate() {
                    prop_assert_eq!(&buf.get(i).unwrap(), t);
                }
            }
        }

        #[test]
        fn tracker_returns_match_forward_sums(
            rewards in proptest::collection::vec(-10.0f64..10.0, 1..40),
            gamma in 0.0f64..=1.0,
        ) {
            let mut tr = ReturnTracker::new();
            let last = rewards.len() - 1;
            for (i, r) in rewards.iter().enumerate() {
                tr.push(&[i as f64], &[0.0], *r, 0.0, i == last).unwrap();
            }
            let recs = tr.finish_episode(gamma, false).unwrap();
            prop_assert_eq!(recs.len(), rewards.len());
            prop_assert!(tr.is_empty());
            for (t, rec) in recs.iter().enumerate() {
                let direct: f64 = (t..rewards.len()).map(|i| gamma.powi((i - t) as i32) * rewards[i]).sum();
                prop_assert!((rec.ret - direct).abs() <= 1e-9 * (1.0 + direct.abs()));
                prop_assert_eq!(rec.step, t);
                prop_assert_eq!(rec.state[0], t as f64);
            }
        }
    }

    #[test]
    fn tracker_lifecycle() {
        let mut tr = ReturnTracker::new();
        tr.push(&[0.0], &[0.0], 1.0, 0.0, false).unwrap();
        assert!(tr.finish_episode(1.0, false).is_err());
        tr.push(&[0.0], &[0.0], 1.0, 0.0, false).unwrap();
        tr.push(&[0.0], &[0.0], 1.0, 0.0, true).unwrap();
        assert!(tr.push(&[0.0], &[0.0], 1.0, 0.0, false).is_err());
        let recs = tr.finish_episode(1.0, false).unwrap();
        assert_eq!(recs.iter().map(|r| r.ret).collect::<Vec<_>>(), vec![3.0, 2.0, 1.0]);
        assert!(recs.iter().all(|r| r.episode == 0));
        tr.push(&[0.0], &[0.0], -2.5, 0.0, true).unwrap();
        let single = tr.finish_episode(0.99, false).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].ret, -2.5);
        assert_eq!(single[0].episode, 1);
        assert_eq!(tr.episodes(), 2);
    }
}
