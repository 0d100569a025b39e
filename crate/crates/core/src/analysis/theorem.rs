use rand::Rng;

use crate::calibrator::beta_star;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McResult {
    /// Mean estimate minus the true value.
    pub bias: f64,
    /// Standard error of the mean estimate.
    pub std_error: f64,
    pub n_trials: usize,
}

/// Monte-Carlo bias of the single-sample calibrated estimator: each trial
/// draws one return, fits `β*` for the family `Q̂_β = β` on
/// `[q_min, q_max]` (a clamp of the sample into the bounds) and records the
/// estimate.
pub fn theorem1_mc<S, R>(mut sampler: S, q_true: f64, q_min: f64, q_max: f64, n_trials: usize, rng: &mut R) -> Result<McResult>
where
    S: FnMut(&mut R) -> f64,
    R: Rng + ?Sized,
{
    if !(q_min <= q_true && q_true <= q_max) {
        return Err(Error::Argument(format!("need q_min <= Q <= q_max, got {q_min}, {q_true}, {q_max}")));
    }
    if n_trials < 2 {
        return Err(Error::Argument("need at least two trials".into()));
    }
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_trials {
        let x = sampler(rng);
        let err = beta_star(&[x], |b| b, q_min, q_max)? - q_true;
        sum += err;
        sum_sq += err * err;
    }
    let n = n_trials as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(McResult {
        bias: mean,
        std_error: (var / n).sqrt(),
        n_trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn point_mass_has_zero_bias() {
        let mut rng = stream(1, "mc");
        for q in [0.0, 1.7, -3.3] {
            let r = theorem1_mc(|_| q, q, q - 0.5, q + 0.5, 1000, &mut rng).unwrap();
            assert_eq!(r.bias, 0.0);
            assert_eq!(r.std_error, 0.0);
        }
    }

    #[test]
    fn symmetric_bounds_unbiased_and_error_shrinks() {
        let normal = Normal::new(1.0, 1.0).unwrap();
        let small = theorem1_mc(|r| normal.sample(r), 1.0, 0.0, 2.0, 20_000, &mut stream(2, "mc")).unwrap();
        let large = theorem1_mc(|r| normal.sample(r), 1.0, 0.0, 2.0, 80_000, &mut stream(3, "mc")).unwrap();
        assert!(small.bias.abs() <= 3.0 * small.std_error);
        assert!(large.bias.abs() <= 3.0 * large.std_error);
        let ratio = small.std_error / large.std_error;
        assert!((1.8..2.2).contains(&ratio), "{ratio}");
        assert!(theorem1_mc(|_| 0.0, 3.0, 0.0, 2.0, 10, &mut stream(0, "mc")).is_err());
    }
}
