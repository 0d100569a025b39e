use super::TargetSet;
use crate::error::{check_dim, Error, Result};

/// Huber loss with threshold `kappa`.
#[inline]
pub fn huber(u: f64, kappa: f64) -> f64 {
    let a = u.abs();
    if a <= kappa {
        0.5 * u * u
    } else {
        kappa * (a - 0.5 * kappa)
    }
}

/// Prefix sums of the centred targets `y − ȳ` and `(y − ȳ)²`, shared by
/// every network that regresses onto the same target set.
#[derive(Debug, Clone)]
pub struct PreparedTargets<'a> {
    ys: &'a [f64],
    centre: f64,
    p1: Vec<f64>,
    p2: Vec<f64>,
}

impl<'a> PreparedTargets<'a> {
    pub fn new(targets: &'a TargetSet) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::Argument("empty target set".into()));
        }
        let ys = targets.atoms.as_slice();
        let centre = targets.mean();
        let mut p1 = Vec::with_capacity(ys.len() + 1);
        let mut p2 = Vec::with_capacity(ys.len() + 1);
        let (mut s1, mut s2) = (0.0, 0.0);
        p1.push(0.0);
        p2.push(0.0);
        for &y in ys {
            let c = y - centre;
            s1 += c;
            s2 += c * c;
            p1.push(s1);
            p2.push(s2);
        }
        Ok(Self { ys, centre, p1, p2 })
    }

    /// `(Σu², Σu)` over `ys[i..j]` with `u = y − θ`, `t = θ − ȳ`.
    #[inline]
    fn band(&self, i: usize, j: usize, t: f64) -> (f64, f64) {
        let n = (j - i) as f64;
        let sum_c = self.p1[j] - self.p1[i];
        let sq = (self.p2[j] - self.p2[i]) - 2.0 * t * sum_c + n * t * t;
        (sq.max(0.0), sum_c - n * t)
    }

    /// Loss and gradient for one set of predicted atoms; see
    /// [`quantile_huber_loss`].
    pub fn loss(&self, pred: &[f64], fractions: &[f64], kappa: f64) -> Result<(f64, Vec<f64>)> {
        check_dim("quantile fractions", pred.len(), fractions.len())?;
        let (ys, p1) = (self.ys, &self.p1);
        let k = ys.len();
        let norm = 1.0 / (k * pred.len()) as f64;
        let mut loss = 0.0;
        let mut grad = vec![0.0; pred.len()];
        for ((&theta, &tau), g) in pred.iter().zip(fractions).zip(grad.iter_mut()) {
            // [0, lo): u < -κ | [lo, mid): -κ <= u < 0 | [mid, hi): 0 <= u <= κ | [hi, k): u > κ
            let lo = ys.partition_point(|&y| y < theta - kappa);
            let mid = lo + ys[lo..].partition_point(|&y| y < theta);
            let hi = mid + ys[mid..].partition_point(|&y| y <= theta + kappa);
            let t = theta - self.centre;
            let (n_lo, n_hi) = (lo as f64, (k - hi) as f64);
            let lower_tail = n_lo * (t - 0.5 * kappa) - p1[lo];
            let upper_tail = (p1[k] - p1[hi]) - n_hi * (t + 0.5 * kappa);
            let (sq_neg, sum_neg) = self.band(lo, mid, t);
            let (sq_pos, sum_pos) = self.band(mid, hi, t);
            loss += (1.0 - tau) * (kappa * lower_tail + 0.5 * sq_neg)
                + tau * (kappa * upper_tail + 0.5 * sq_pos);
            // du/dθ = -1
            let d = (1.0 - tau) * (kappa * n_lo - sum_neg) - tau * (kappa * n_hi + sum_pos);
            *g = d * norm;
        }
        Ok((loss * norm, grad))
    }
}

/// Quantile Huber loss of predicted atoms against a target set:
///
/// `L = 1/(K·M) Σ_m Σ_i |τ_m − 1(u < 0)| · huber(u)`, `u = y_i − θ_m`,
///
/// returned with its gradient with respect to each predicted atom.
///
/// Targets are sorted, so for each atom they split into four contiguous runs
/// (linear tail below, quadratic band below and above `θ`, linear tail
/// above) whose contributions follow from prefix sums. Cost is
/// `O(K + M log K)`.
pub fn quantile_huber_loss(
    pred: &[f64],
    targets: &TargetSet,
    fractions: &[f64],
    kappa: f64,
) -> Result<(f64, Vec<f64>)> {
    check_dim("quantile fractions", pred.len(), fractions.len())?;
    PreparedTargets::new(targets)?.loss(pred, fractions, kappa)
}
