use crate::error::{Error, Result};

/// Kept target atoms for one transition, sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSet {
    pub atoms: Vec<f64>,
    pub reward: f64,
    pub gamma: f64,
    pub entropy_term: f64,
}

impl TargetSet {
    /// Wraps already-final target values (sorted on construction).
    pub fn from_atoms(mut atoms: Vec<f64>) -> Self {
        atoms.sort_unstable_by(f64::total_cmp);
        Self {
            atoms,
            reward: 0.0,
            gamma: 0.0,
            entropy_term: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().sum::<f64>() / self.atoms.len() as f64
    }
}

/// Number of pooled atoms dropped for truncation `d` with `n_nets` networks:
/// `d·N` rounded to the nearest integer, halves rounding up.
pub fn dropped_count(d: f64, n_nets: usize) -> usize {
    (d * n_nets as f64 + 0.5).floor() as usize
}

/// Pools the next-state atoms of all networks, drops the `round(d·N)`
/// largest, and maps each kept atom `z` to `r + γ·(z − entropy_term)`.
/// True terminal transitions map every kept atom to `r`; timeouts are not
/// terminal and bootstrap normally.
///
/// `pooled_atoms` holds the `N·M` atoms in any order.
pub fn build_truncated_targets(
    pooled_atoms: &[f64],
    n_nets: usize,
    reward: f64,
    gamma: f64,
    true_terminal: bool,
    entropy_term: f64,
    d: f64,
) -> Result<TargetSet> {
    if n_nets == 0 || !pooled_atoms.len().is_multiple_of(n_nets) {
        return Err(Error::Argument(format!(
            "{} pooled atoms cannot come from {n_nets} networks",
            pooled_atoms.len()
        )));
    }
    if !(d >= 0.0) || !d.is_finite() {
        return Err(Error::Argument(format!("truncation d must be finite and >= 0, got {d}")));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Argument(format!("discount must lie in [0, 1], got {gamma}")));
    }
    let drop = dropped_count(d, n_nets);
    if drop > pooled_atoms.len() {
        return Err(Error::Argument(format!(
            "cannot drop {drop} of {} pooled atoms",
            pooled_atoms.len()
        )));
    }
    if pooled_atoms.iter().any(|z| !z.is_finite()) || !reward.is_finite() || !entropy_term.is_finite() {
        return Err(Error::NonFinite("target atoms".into()));
    }
    let keep = pooled_atoms.len() - drop;
    let atoms = if true_terminal {
        vec![reward; keep]
    } else {
        let mut sorted = pooled_atoms.to_vec();
        sorted.sort_unstable_by(f64::total_cmp);
        sorted.truncate(keep);
        for z in &mut sorted {
            *z = reward + gamma * (*z - entropy_term);
        }
        sorted
    };
    Ok(TargetSet {
        atoms,
        reward,
        gamma,
        entropy_term,
    })
}
