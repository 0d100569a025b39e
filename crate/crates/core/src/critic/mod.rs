//! Distributional quantile critics.
//!
//! An ensemble of `N` networks, each mapping `state ⊕ action` to `M` quantile
//! atoms. Targets are built by pooling the `N·M` next-state atoms of the
//! target networks, sorting them and dropping the `round(d·N)` largest.

mod loss;
mod targets;

pub use loss::{huber, quantile_huber_loss, PreparedTargets};
pub use targets::{build_truncated_targets, dropped_count, TargetSet};

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::nn::{polyak_update, Activation, Adam, AdamConfig, Checkpoint, DenseNet};

/// Quantile midpoints `(2m - 1) / (2M)` for `m = 1..=M`.
pub fn quantile_fractions(n_atoms: usize) -> Result<Vec<f64>> {
    if n_atoms == 0 {
        return Err(Error::Argument("number of atoms must be at least 1".into()));
    }
    let m = n_atoms as f64;
    Ok((1..=n_atoms).map(|i| (2.0 * i as f64 - 1.0) / (2.0 * m)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileEnsemble {
    online: Vec<DenseNet>,
    target: Vec<DenseNet>,
    optims: Vec<Adam>,
    fractions: Vec<f64>,
    state_dim: usize,
    action_dim: usize,
    kappa: f64,
}

/// Outcome of one gradient step over a batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticStep {
    /// Loss averaged over samples and summed over networks.
    pub loss: f64,
}

impl QuantileEnsemble {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        n_nets: usize,
        n_atoms: usize,
        hidden: &[usize],
        adam: AdamConfig,
        kappa: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if n_nets == 0 {
            return Err(Error::Config("ensemble needs at least one network".into()));
        }
        if !(kappa > 0.0) {
            return Err(Error::Config(format!("huber kappa must be positive, got {kappa}")));
        }
        let fractions = quantile_fractions(n_atoms)?;
        let mut widths = vec![state_dim + action_dim];
        widths.extend_from_slice(hidden);
        widths.push(n_atoms);
        let online = (0..n_nets)
            .map(|_| DenseNet::new(&widths, Activation::Relu, Activation::Identity, rng))
            .collect::<Result<Vec<_>>>()?;
        let optims = online
            .iter()
            .map(|n| Adam::new(n.num_params(), adam))
            .collect();
        Ok(Self {
            target: online.clone(),
            online,
            optims,
            fractions,
            state_dim,
            action_dim,
            kappa,
        })
    }

    pub fn n_nets(&self) -> usize {
        self.online.len()
    }

    pub fn n_atoms(&self) -> usize {
        self.fractions.len()
    }

    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }

    pub fn input_dim(&self) -> usize {
        self.state_dim + self.action_dim
    }

    pub fn online(&self) -> &[DenseNet] {
        &self.online
    }

    pub fn online_mut(&mut self) -> &mut [DenseNet] {
        &mut self.online
    }

    pub fn target(&self) -> &[DenseNet] {
        &self.target
    }

    fn input(&self, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        check_dim("critic state", self.state_dim, state.len())?;
        check_dim("critic action", self.action_dim, action.len())?;
        Ok([state, action].concat())
    }

    /// Online atoms for one state-action pair, one row per network.
    pub fn predict_atoms(&self, state: &[f64], action: &[f64]) -> Result<Array2<f64>> {
        let x = self.input(state, action)?;
        let mut out = Array2::zeros((self.n_nets(), self.n_atoms()));
        for (n, net) in self.online.iter().enumerate() {
            let atoms = net.forward(&x)?;
            out.row_mut(n).assign(&ndarray::ArrayView1::from(&atoms));
        }
        Ok(out)
    }

    /// Mean over all `N·M` online atoms.
    pub fn mean_value(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        let atoms = self.predict_atoms(state, action)?;
        Ok(atoms.sum() / atoms.len() as f64)
    }

    /// Mean over all online atoms for each `state ⊕ action` row.
    pub fn mean_value_batch(&self, inputs: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let scale = 1.0 / (self.n_nets() * self.n_atoms()) as f64;
        let mut values = vec![0.0; inputs.nrows()];
        for net in &self.online {
            let out = net.forward_batch(inputs)?;
            for (v, row) in values.iter_mut().zip(out.outer_iter()) {
                *v += row.sum() * scale;
            }
        }
        Ok(values)
    }

    /// Target-network atoms for a batch of `state ⊕ action` rows. Row `b` of
    /// the result holds the pooled `N·M` atoms of sample `b` (network-major).
    pub fn target_atoms_batch(&self, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let (b, m) = (inputs.nrows(), self.n_atoms());
        let mut pooled = Array2::zeros((b, self.n_nets() * m));
        for (n, net) in self.target.iter().enumerate() {
            let out = net.forward_batch(inputs)?;
            pooled
                .slice_mut(ndarray::s![.., n * m..(n + 1) * m])
                .assign(&out);
        }
        Ok(pooled)
    }

    /// One Adam step per network on the quantile Huber loss against the
    /// per-sample target sets (one set per input row, shared by all networks).
    pub fn train_step(&mut self, inputs: ArrayView2<'_, f64>, targets: &[TargetSet]) -> Result<CriticStep> {
        check_dim("critic batch", inputs.nrows(), targets.len())?;
        if targets.is_empty() {
            return Err(Error::Argument("empty critic batch".into()));
        }
        let batch = targets.len() as f64;
        let prepared = targets
            .iter()
            .map(PreparedTargets::new)
            .collect::<Result<Vec<_>>>()?;
        let mut total = 0.0;
        for (net, opt) in self.online.iter_mut().zip(self.optims.iter_mut()) {
            let tape = net.forward_tape(inputs)?;
            let pred = tape.output();
            let mut upstream = Array2::zeros(pred.raw_dim());
            for (b, target) in prepared.iter().enumerate() {
                let row = pred.row(b);
                let (l, g) = target.loss(
                    row.as_slice().expect("row-major prediction"),
                    &self.fractions,
                    self.kappa,
                )?;
                total += l / batch;
                for (u, gi) in upstream.row_mut(b).iter_mut().zip(g) {
                    *u = gi / batch;
                }
            }
            let mut grads = vec![0.0; net.num_params()];
            net.backward(&tape, upstream.view(), Some(&mut grads))?;
            opt.step(net.params_mut(), &grads)?;
        }
        if !total.is_finite() {
            return Err(Error::NonFinite("critic loss".into()));
        }
        Ok(CriticStep { loss: total })
    }

    /// Mean value over all atoms and its gradient with respect to the critic
    /// input, for each input row. No parameters change.
    pub fn mean_value_input_grad(&self, inputs: ArrayView2<'_, f64>) -> Result<(Vec<f64>, Array2<f64>)> {
        let scale = 1.0 / (self.n_nets() * self.n_atoms()) as f64;
        let mut values = vec![0.0; inputs.nrows()];
        let mut grad = Array2::zeros(inputs.raw_dim());
        let upstream = Array2::from_elem((inputs.nrows(), self.n_atoms()), scale);
        for net in &self.online {
            let tape = net.forward_tape(inputs)?;
            for (v, row) in values.iter_mut().zip(tape.output().outer_iter()) {
                *v += row.sum() * scale;
            }
            grad += &net.backward(&tape, upstream.view(), None)?;
        }
        Ok((values, grad))
    }

    pub fn soft_update(&mut self, tau: f64) -> Result<()> {
        for (t, o) in self.target.iter_mut().zip(&self.online) {
            polyak_update(t.params_mut(), o.params(), tau)?;
        }
        Ok(())
    }

    pub fn save(&self, prefix: &str, ck: &mut Checkpoint) {
        for (n, net) in self.online.iter().enumerate() {
            ck.push_net(&format!("{prefix}.online{n}"), net);
        }
        for (n, net) in self.target.iter().enumerate() {
            ck.push_net(&format!("{prefix}.target{n}"), net);
        }
    }

    pub fn load(&mut self, prefix: &str, ck: &Checkpoint) -> Result<()> {
        for (n, net) in self.online.iter_mut().enumerate() {
            ck.load_net(&format!("{prefix}.online{n}"), net)?;
        }
        for (n, net) in self.target.iter_mut().enumerate() {
            ck.load_net(&format!("{prefix}.target{n}"), net)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fraction_midpoints() {
        assert_eq!(quantile_fractions(1).unwrap(), vec![0.5]);
        assert_eq!(quantile_fractions(2).unwrap(), vec![0.25, 0.75]);
        let f = quantile_fractions(25).unwrap();
        assert!((f[0] - 0.02).abs() < 1e-15);
        assert!((f[24] - 0.98).abs() < 1e-15);
        for w in f.windows(2) {
            assert!((w[1] - w[0] - 0.04).abs() < 1e-12);
        }
        assert!(quantile_fractions(0).is_err());
    }

    fn ensemble(seed: u64) -> QuantileEnsemble {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        QuantileEnsemble::new(3, 1, 3, 4, &[8, 8], AdamConfig::default(), 1.0, &mut rng).unwrap()
    }

    #[test]
    fn predict_matches_per_network_forward() {
        let ens = ensemble(1);
        let (s, a) = ([0.1, -0.2, 0.3], [0.5]);
        let atoms = ens.predict_atoms(&s, &a).unwrap();
        assert_eq!(atoms.dim(), (3, 4));
        for (n, net) in ens.online().iter().enumerate() {
            let want = net.forward(&[0.1, -0.2, 0.3, 0.5]).unwrap();
            assert_eq!(atoms.row(n).to_vec(), want);
        }
    }

    #[test]
    fn mean_value_matches_double_loop() {
        let ens = ensemble(2);
        let (s, a) = ([1.0, 0.0, -1.0], [-0.3]);
        let atoms = ens.predict_atoms(&s, &a).unwrap();
        let mut sum = 0.0;
        for n in 0..3 {
            for m in 0..4 {
                sum += atoms[[n, m]];
            }
        }
        assert!((ens.mean_value(&s, &a).unwrap() - sum / 12.0).abs() < 1e-14);
        let x = ndarray::arr2(&[[1.0, 0.0, -1.0, -0.3]]);
        assert!((ens.mean_value_batch(x.view()).unwrap()[0] - sum / 12.0).abs() < 1e-12);
    }

    #[test]
    fn zero_heads_give_zero_atoms() {
        let mut ens = ensemble(3);
        for net in ens.online_mut() {
            net.params_mut().iter_mut().for_each(|p| *p = 0.0);
        }
        assert_eq!(ens.mean_value(&[1.0, 2.0, 3.0], &[0.0]).unwrap(), 0.0);
        assert!(ens.predict_atoms(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn target_pool_layout_is_network_major() {
        let ens = ensemble(4);
        let x = ndarray::arr2(&[[0.2, 0.1, -0.4, 0.9]]);
        let pooled = ens.target_atoms_batch(x.view()).unwrap();
        assert_eq!(pooled.dim(), (1, 12));
        let second = ens.target()[1].forward(&[0.2, 0.1, -0.4, 0.9]).unwrap();
        for (got, want) in pooled.row(0).slice(ndarray::s![4..8]).iter().zip(&second) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn training_moves_atoms_toward_constant_target() {
        let mut ens = ensemble(5);
        let x = ndarray::arr2(&[[0.2, 0.1, -0.4, 0.9]]);
        let target = TargetSet::from_atoms(vec![3.0; 12]);
        let before = ens.mean_value(&[0.2, 0.1, -0.4], &[0.9]).unwrap();
        let mut last = f64::INFINITY;
        for _ in 0..300 {
            last = ens.train_step(x.view(), std::slice::from_ref(&target)).unwrap().loss;
        }
        let after = ens.mean_value(&[0.2, 0.1, -0.4], &[0.9]).unwrap();
        assert!((after - 3.0).abs() < (before - 3.0).abs());
        assert!(last.is_finite());
    }
}
