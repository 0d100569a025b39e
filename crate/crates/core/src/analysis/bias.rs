/// Guards the relative error against near-zero returns.
pub const BIAS_EPS: f64 = 1e-6;

/// A value estimate taken when the action was chosen, paired with the
/// discounted return that followed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValuePoint {
    /// Environment step (1-based) at which the action was taken.
    pub step: usize,
    pub estimate: f64,
    pub realized: f64,
    /// The episode containing this step ended by timeout.
    pub timeout_episode: bool,
    /// Steps remaining in the episode after this one.
    pub steps_to_end: usize,
}

impl ValuePoint {
    fn kept(&self, tail: usize) -> bool {
        !(self.timeout_episode && self.steps_to_end < tail)
    }

    pub fn normalized_error(&self) -> f64 {
        (self.estimate - self.realized).abs() / self.realized.abs().max(BIAS_EPS)
    }
}

/// Mean normalized error `|Q̂ − R| / max(|R|, ε)` over the points, leaving
/// out the last `tail` steps of timeout episodes. `None` if nothing remains.
pub fn normalized_abs_error(points: &[ValuePoint], tail: usize) -> Option<f64> {
    let (sum, n) = points
        .iter()
        .filter(|p| p.kept(tail))
        .fold((0.0, 0usize), |(s, n), p| (s + p.normalized_error(), n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Normalized error per window of `window` steps: window `k` covers steps
/// `k·window + 1 ..= (k+1)·window` and is reported as `((k+1)·window, err)`.
/// Windows with no kept points are skipped.
pub fn value_bias_curve(points: &[ValuePoint], window: usize, tail: usize) -> Vec<(usize, f64)> {
    if window == 0 {
        return Vec::new();
    }
    let mut sums: std::collections::BTreeMap<usize, (f64, usize)> = Default::default();
    for p in points.iter().filter(|p| p.kept(tail) && p.step > 0) {
        let e = sums.entry((p.step - 1) / window).or_default();
        e.0 += p.normalized_error();
        e.1 += 1;
    }
    sums.into_iter()
        .map(|(k, (s, n))| ((k + 1) * window, s / n as f64))
        .collect()
}
