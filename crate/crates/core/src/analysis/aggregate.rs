use rand::Rng;

use crate::error::{Error, Result};

/// Interquartile mean: sorts, discards `floor(n/4)` values from each end and
/// averages the rest.
pub fn iqm(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Argument("iqm of an empty list".into()));
    }
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    let cut = v.len() / 4;
    let mid = &v[cut..v.len() - cut];
    Ok(mid.iter().sum::<f64>() / mid.len() as f64)
}

/// Linearly interpolated percentile of sorted data, `p ∈ [0, 1]`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let h = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (i, frac) = (h.floor() as usize, h - h.floor());
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// How raw returns of one task become normalized scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Normalizer {
    /// Divide by the best observed return.
    Best(f64),
    /// `(x − min) / (max − min)`, used when the best return is not positive
    /// and division would flip or blow up the scale.
    MinMax { min: f64, max: f64 },
}

impl Normalizer {
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            Normalizer::Best(b) => x / b,
            Normalizer::MinMax { min, max } if max > min => (x - min) / (max - min),
            Normalizer::MinMax { .. } => 1.0,
        }
    }
}

/// One normalizer per task from every return observed on it, across all
/// algorithms and evaluation points. Scores are relative to this run set.
pub fn task_normalizers(per_task: &[Vec<f64>]) -> Result<Vec<Normalizer>> {
    per_task
        .iter()
        .map(|v| {
            if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Argument("normalizer needs finite returns".into()));
            }
            let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = v.iter().copied().fold(f64::INFINITY, f64::min);
            Ok(if max > 0.0 {
                Normalizer::Best(max)
            } else {
                Normalizer::MinMax { min, max }
            })
        })
        .collect()
}

/// Runs of one task: `runs[r][p]` is run `r` at evaluation point `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskScores {
    pub name: String,
    pub runs: Vec<Vec<f64>>,
}

/// Scores of one algorithm over several tasks, all runs sharing the same
/// evaluation points.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    tasks: Vec<TaskScores>,
    n_points: usize,
}

impl ScoreMatrix {
    pub fn new(tasks: Vec<TaskScores>) -> Result<Self> {
        let n_points = tasks
            .first()
            .and_then(|t| t.runs.first())
            .map(Vec::len)
            .ok_or_else(|| Error::Argument("score matrix needs at least one run".into()))?;
        for t in &tasks {
            if t.runs.is_empty() {
                return Err(Error::Argument(format!("task `{}` has no runs", t.name)));
            }
            if t.runs.iter().any(|r| r.len() != n_points) {
                return Err(Error::Argument(format!("task `{}` has ragged runs", t.name)));
            }
        }
        Ok(Self { tasks, n_points })
    }

    /// Applies one normalizer per task.
    pub fn normalized(&self, norms: &[Normalizer]) -> Result<Self> {
        if norms.len() != self.tasks.len() {
            return Err(Error::Argument("one normalizer per task required".into()));
        }
        let tasks = self
            .tasks
            .iter()
            .zip(norms)
            .map(|(t, n)| TaskScores {
                name: t.name.clone(),
                runs: t.runs.iter().map(|r| r.iter().map(|&x| n.apply(x)).collect()).collect(),
            })
            .collect();
        Ok(Self {
            tasks,
            n_points: self.n_points,
        })
    }

    pub fn tasks(&self) -> &[TaskScores] {
        &self.tasks
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// All runs of all tasks at evaluation point `p`.
    pub fn pooled(&self, p: usize) -> Vec<f64> {
        self.tasks.iter().flat_map(|t| t.runs.iter().map(move |r| r[p])).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CiPoint {
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
    /// Every task had a single run, so resampling cannot vary anything.
    pub degenerate: bool,
}

/// Pointwise percentile intervals: each replicate resamples runs with
/// replacement within every task (the same run draw for all points) and
/// recomputes `statistic` on the pooled scores.
pub fn stratified_bootstrap_ci<F, R>(
    scores: &ScoreMatrix,
    statistic: F,
    n_resamples: usize,
    level: f64,
    rng: &mut R,
) -> Result<Vec<CiPoint>>
where
    F: Fn(&[f64]) -> Result<f64>,
    R: Rng + ?Sized,
{
    if n_resamples < 100 {
        return Err(Error::Argument(format!("need at least 100 resamples, got {n_resamples}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Argument(format!("confidence level must lie in (0, 1), got {level}")));
    }
    let n_points = scores.n_points();
    let total: usize = scores.tasks.iter().map(|t| t.runs.len()).sum();
    let mut reps = vec![Vec::with_capacity(n_resamples); n_points];
    let mut pooled = vec![0.0; total];
    let mut draw = vec![0usize; total];
    for _ in 0..n_resamples {
        let mut k = 0;
        for t in &scores.tasks {
            for _ in 0..t.runs.len() {
                draw[k] = rng.random_range(0..t.runs.len());
                k += 1;
            }
        }
        for (p, rep) in reps.iter_mut().enumerate() {
            let mut k = 0;
            for t in &scores.tasks {
                for _ in 0..t.runs.len() {
                    pooled[k] = t.runs[draw[k]][p];
                    k += 1;
                }
            }
            rep.push(statistic(&pooled)?);
        }
    }
    let degenerate = scores.tasks.iter().all(|t| t.runs.len() == 1);
    let tail = (1.0 - level) / 2.0;
    reps.into_iter()
        .enumerate()
        .map(|(p, mut rep)| {
            rep.sort_unstable_by(f64::total_cmp);
            Ok(CiPoint {
                estimate: statistic(&scores.pooled(p))?,
                lo: percentile(&rep, tail),
                hi: percentile(&rep, 1.0 - tail),
                degenerate,
            })
        })
        .collect()
}

/// Centered moving average of odd width `size`; windows are truncated at the
/// ends. Meant for display only.
pub fn uniform_filter(values: &[f64], size: usize) -> Result<Vec<f64>> {
    if size == 0 || size.is_multiple_of(2) {
        return Err(Error::Argument(format!("filter size must be odd, got {size}")));
    }
    let half = size / 2;
    let mut prefix = vec![0.0; values.len() + 1];
    for (i, v) in values.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    Ok((0..values.len())
        .map(|i| {
            let (a, b) = (i.saturating_sub(half), (i + half + 1).min(values.len()));
            (prefix[b] - prefix[a]) / (b - a) as f64
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn iqm_examples() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(iqm(&v).unwrap(), 50.5);
        assert_eq!(iqm(&[4.0; 7]).unwrap(), 4.0);
        assert!(iqm(&[]).is_err());
        let clean = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        let mut dirty = clean;
        dirty[7] = 1e9;
        assert_eq!(iqm(&clean).unwrap(), iqm(&dirty).unwrap());
        assert_eq!(iqm(&[3.0]).unwrap(), 3.0);
    }

    proptest! {
        #[test]
        fn iqm_ignores_order_and_tails(mut v in proptest::collection::vec(-100.0f64..100.0, 4..40), seed in 0u64..1000) {
            let base = iqm(&v).unwrap();
            let mut rng = stream(seed, "shuffle");
            use rand::seq::SliceRandom;
            v.shuffle(&mut rng);
            prop_assert!((iqm(&v).unwrap() - base).abs() < 1e-9);
            v.sort_by(f64::total_cmp);
            let cut = v.len() / 4;
            for x in &mut v[..cut] {
                *x -= 1000.0;
            }
            let n = v.len();
            for x in &mut v[n - cut..] {
                *x += 1000.0;
            }
            prop_assert!((iqm(&v).unwrap() - base).abs() < 1e-9);
        }
    }

    #[test]
    fn percentile_interpolates() {
        let s = [0.0, 10.0, 20.0];
        assert_eq!(percentile(&s, 0.25), 5.0);
        assert_eq!(percentile(&s, 1.0), 20.0);
        assert_eq!(percentile(&[7.0], 0.3), 7.0);
    }

    fn matrix(tasks: &[Vec<Vec<f64>>]) -> ScoreMatrix {
        ScoreMatrix::new(
            tasks
                .iter()
                .enumerate()
                .map(|(i, runs)| TaskScores {
                    name: format!("t{i}"),
                    runs: runs.clone(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn bootstrap_basic_properties() {
        let same = matrix(&[vec![vec![2.0, 3.0]; 5], vec![vec![2.0, 3.0]; 4]]);
        let ci = stratified_bootstrap_ci(&same, iqm, 200, 0.95, &mut stream(1, "boot")).unwrap();
        assert_eq!(ci[0], CiPoint { estimate: 2.0, lo: 2.0, hi: 2.0, degenerate: false });
        assert_eq!(ci[1].lo, 3.0);

        let mut rng = stream(2, "data");
        let runs: Vec<Vec<f64>> = (0..10).map(|_| vec![rng.random_range(0.0..1.0)]).collect();
        let m = matrix(&[runs.clone(), runs]);
        let ci = stratified_bootstrap_ci(&m, iqm, 500, 0.95, &mut stream(3, "boot")).unwrap();
        assert!(ci[0].lo <= ci[0].estimate && ci[0].estimate <= ci[0].hi);
        let again = stratified_bootstrap_ci(&m, iqm, 500, 0.95, &mut stream(3, "boot")).unwrap();
        assert_eq!(ci, again);

        let single = matrix(&[vec![vec![1.0]]]);
        assert!(stratified_bootstrap_ci(&single, iqm, 100, 0.95, &mut rng).unwrap()[0].degenerate);
        assert!(stratified_bootstrap_ci(&single, iqm, 99, 0.95, &mut rng).is_err());
        assert!(ScoreMatrix::new(vec![TaskScores { name: "x".into(), runs: vec![vec![1.0], vec![]] }]).is_err());
    }

    #[test]
    fn normalization() {
        let n = task_normalizers(&[vec![1.0, 4.0, -2.0], vec![-10.0, -5.0]]).unwrap();
        assert_eq!(n[0], Normalizer::Best(4.0));
        assert_eq!(n[0].apply(2.0), 0.5);
        assert_eq!(n[1], Normalizer::MinMax { min: -10.0, max: -5.0 });
        assert_eq!(n[1].apply(-5.0), 1.0);
        assert_eq!(n[1].apply(-7.5), 0.5);
        let m = matrix(&[vec![vec![4.0, 2.0]], vec![vec![-10.0, -5.0]]]);
        let norm = m.normalized(&n).unwrap();
        assert_eq!(norm.pooled(1), vec![0.5, 1.0]);
    }

    #[test]
    fn filter_smooths_and_keeps_constants() {
        assert_eq!(uniform_filter(&[1.0; 6], 3).unwrap(), vec![1.0; 6]);
        let f = uniform_filter(&[0.0, 3.0, 0.0, 3.0], 3).unwrap();
        assert_eq!(f, vec![1.5, 1.0, 2.0, 1.5]);
        assert!(uniform_filter(&[1.0], 4).is_err());
    }
}
