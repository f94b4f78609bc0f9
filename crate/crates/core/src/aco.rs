//! Continuous-domain ant colony optimization.
//!
//! The colony's pheromone model is a ranked archive of the `k` best
//! solutions found so far. Each ant picks a guide from the archive with
//! probability proportional to its rank weight and samples a new candidate
//! from per-dimension Gaussians centered on the guide, with widths set by
//! the archive's spread around it. Evaporation is the archive truncation:
//! after every iteration only the `k` best entries survive.
//!
//! Every candidate draws from its own counter-addressed random stream
//! `(seed, iteration, ant)`, so evaluating candidates in parallel gives
//! exactly the same trajectory as evaluating them one by one.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum AcoError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("objective invalid on domain")]
    InvalidObjective,
    #[error("initial guess {index} has length {found}, expected {expected}")]
    Guess {
        index: usize,
        expected: usize,
        found: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcoConfig {
    /// Candidates sampled per iteration.
    pub n_ants: usize,
    pub archive_size: usize,
    /// Locality of the rank weighting; small values favour the best ranks.
    pub q: f64,
    /// Width scale of the sampling kernels.
    pub xi: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Per-dimension `(lo, hi)`.
    pub bounds: Vec<(f64, f64)>,
}

impl AcoConfig {
    pub fn with_bounds(bounds: Vec<(f64, f64)>) -> Self {
        AcoConfig {
            n_ants: 20,
            archive_size: 25,
            q: 0.1,
            xi: 0.85,
            max_iter: 100,
            seed: 0,
            bounds,
        }
    }

    pub fn validate(&self, dims: usize) -> Result<(), AcoError> {
        let fail = |m: String| Err(AcoError::Config(m));
        if self.n_ants == 0 {
            return fail("n_ants must be >= 1".into());
        }
        if self.archive_size < 2 {
            return fail(format!("archive_size must be >= 2, got {}", self.archive_size));
        }
        if !(self.q > 0.0) || !self.q.is_finite() {
            return fail(format!("q must be > 0, got {}", self.q));
        }
        if !(self.xi > 0.0 && self.xi <= 1.0) {
            return fail(format!("xi must be in (0, 1], got {}", self.xi));
        }
        if self.max_iter == 0 {
            return fail("max_iter must be >= 1".into());
        }
        if self.bounds.len() != dims {
            return fail(format!("{} bounds for {} dimensions", self.bounds.len(), dims));
        }
        if let Some(j) = self
            .bounds
            .iter()
            .position(|&(lo, hi)| !(lo < hi) || !lo.is_finite() || !hi.is_finite())
        {
            return fail(format!("dimension {j}: need finite lo < hi, got {:?}", self.bounds[j]));
        }
        Ok(())
    }
}

/// Unnormalized Gaussian rank weights,
/// `w_l = exp(-(l-1)^2 / (2 q^2 k^2)) / (q k sqrt(2 pi))` for `l = 1..=k`.
pub fn rank_weights(k: usize, q: f64) -> Vec<f64> {
    let qk = q * k as f64;
    let norm = 1.0 / (qk * (2.0 * PI).sqrt());
    (0..k)
        .map(|l| {
            let l = l as f64;
            norm * (-(l * l) / (2.0 * qk * qk)).exp()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionArchive {
    pub solutions: Vec<Vec<f64>>,
    /// Ascending.
    pub objectives: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SolutionArchive {
    /// Sorts `entries` ascending (stable, so earlier entries win ties).
    /// NaN objectives are treated as `+inf`.
    pub fn from_entries(mut entries: Vec<(Vec<f64>, f64)>, q: f64) -> Self {
        for e in &mut entries {
            if e.1.is_nan() {
                e.1 = f64::INFINITY;
            }
        }
        entries.sort_by(|a, b| a.1.total_cmp(&b.1));
        let k = entries.len();
        let (solutions, objectives) = entries.into_iter().unzip();
        SolutionArchive {
            solutions,
            objectives,
            weights: rank_weights(k, q),
        }
    }

    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    pub fn best(&self) -> (&[f64], f64) {
        (&self.solutions[0], self.objectives[0])
    }

    fn pick_guide<R: Rng>(&self, rng: &mut R) -> usize {
        let total: f64 = self.weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        for (i, w) in self.weights.iter().enumerate() {
            if u < *w {
                return i;
            }
            u -= w;
        }
        self.weights.len() - 1
    }
}

/// Folds `v` into `[lo, hi]` by repeated mirror reflection at the bounds.
pub fn reflect(v: f64, lo: f64, hi: f64) -> f64 {
    if v >= lo && v <= hi {
        return v;
    }
    let w = hi - lo;
    let t = (v - lo).rem_euclid(2.0 * w);
    let t = if t > w { 2.0 * w - t } else { t };
    (lo + t).clamp(lo, hi)
}

/// Guide index and candidate drawn around it.
pub fn sample_candidate<R: Rng>(
    archive: &SolutionArchive,
    xi: f64,
    bounds: &[(f64, f64)],
    rng: &mut R,
) -> (usize, Vec<f64>) {
    let g = archive.pick_guide(rng);
    let k = archive.len();
    let guide = &archive.solutions[g];
    let v = bounds
        .iter()
        .enumerate()
        .map(|(j, &(lo, hi))| {
            let spread: f64 = archive
                .solutions
                .iter()
                .enumerate()
                .filter(|&(r, _)| r != g)
                .map(|(_, s)| (s[j] - guide[j]).abs())
                .sum();
            let sd = (xi * spread / (k - 1) as f64).max(1e-9 * (hi - lo));
            let z: f64 = StandardNormal.sample(rng);
            reflect(guide[j] + sd * z, lo, hi)
        })
        .collect();
    (g, v)
}

/// Merges evaluated candidates into the archive and keeps the best `k`.
/// Ties keep insertion order (archive first). Returns the new archive and
/// the number of NaN candidates discarded.
pub fn update_archive(archive: &SolutionArchive, candidates: Vec<(Vec<f64>, f64)>, q: f64) -> (SolutionArchive, usize) {
    let k = archive.len();
    let mut entries: Vec<(Vec<f64>, f64)> = archive
        .solutions
        .iter()
        .cloned()
        .zip(archive.objectives.iter().copied())
        .collect();
    let mut discarded = 0;
    for c in candidates {
        if c.1.is_nan() {
            discarded += 1;
        } else {
            entries.push(c);
        }
    }
    let mut merged = SolutionArchive::from_entries(entries, q);
    merged.solutions.truncate(k);
    merged.objectives.truncate(k);
    merged.weights = rank_weights(k, q);
    (merged, discarded)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub best_vector: Vec<f64>,
    pub best_objective: f64,
    /// Best-so-far objective after each iteration.
    pub history: Vec<f64>,
    pub evaluations: usize,
    /// NaN-valued candidates dropped during the run.
    pub discarded: usize,
}

pub fn optimize<F>(objective: F, dims: usize, config: &AcoConfig) -> Result<OptResult, AcoError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    optimize_observed(objective, dims, config, &[], |_, _| {})
}

/// As [`optimize`], but the first archive slots are filled with `initial`
/// (reflected into bounds) instead of uniform draws.
pub fn optimize_from<F>(
    objective: F,
    dims: usize,
    config: &AcoConfig,
    initial: &[Vec<f64>],
) -> Result<OptResult, AcoError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    optimize_observed(objective, dims, config, initial, |_, _| {})
}

/// Full optimizer loop; `observe(iteration, archive)` sees the archive after
/// initialization (iteration 0) and after every update.
pub fn optimize_observed<F, O>(
    objective: F,
    dims: usize,
    config: &AcoConfig,
    initial: &[Vec<f64>],
    mut observe: O,
) -> Result<OptResult, AcoError>
where
    F: Fn(&[f64]) -> f64 + Sync,
    O: FnMut(usize, &SolutionArchive),
{
    config.validate(dims)?;
    let k = config.archive_size;
    for (index, g) in initial.iter().enumerate() {
        if g.len() != dims {
            return Err(AcoError::Guess {
                index,
                expected: dims,
                found: g.len(),
            });
        }
    }
    let bounds = &config.bounds;

    let start: Vec<Vec<f64>> = (0..k)
        .map(|slot| match initial.get(slot) {
            Some(g) => g.iter().zip(bounds).map(|(&v, &(lo, hi))| reflect(v, lo, hi)).collect(),
            None => {
                let mut r = rng::substream(config.seed, rng::stream_id(0, slot as u64));
                bounds
                    .iter()
                    .map(|&(lo, hi)| lo + (hi - lo) * r.random::<f64>())
                    .collect()
            }
        })
        .collect();
    let scores: Vec<f64> = start.par_iter().map(|v| objective(v)).collect();
    if scores.iter().all(|s| !s.is_finite()) {
        return Err(AcoError::InvalidObjective);
    }
    let mut archive = SolutionArchive::from_entries(start.into_iter().zip(scores).collect(), config.q);
    observe(0, &archive);

    let mut history = Vec::with_capacity(config.max_iter);
    let mut discarded = 0;
    for it in 1..=config.max_iter {
        let batch: Vec<(Vec<f64>, f64)> = (0..config.n_ants)
            .into_par_iter()
            .map(|ant| {
                let mut r = rng::substream(config.seed, rng::stream_id(it as u64, ant as u64));
                let (_, cand) = sample_candidate(&archive, config.xi, bounds, &mut r);
                let f = objective(&cand);
                (cand, f)
            })
            .collect();
        let (next, dropped) = update_archive(&archive, batch, config.q);
        archive = next;
        discarded += dropped;
        history.push(archive.objectives[0]);
        observe(it, &archive);
    }

    let (best, f) = archive.best();
    Ok(OptResult {
        best_vector: best.to_vec(),
        best_objective: f,
        history,
        evaluations: k + config.n_ants * config.max_iter,
        discarded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    fn cube(dims: usize, lo: f64, hi: f64) -> AcoConfig {
        AcoConfig::with_bounds(vec![(lo, hi); dims])
    }

    #[test]
    fn weights_formula() {
        let (k, q) = (25, 0.1);
        let w = rank_weights(k, q);
        assert_eq!(w.len(), 25);
        assert!((w[0] - 1.0 / (q * k as f64 * (2.0 * PI).sqrt())).abs() < 1e-15);
        assert!(w.windows(2).all(|p| p[1] < p[0]));
        // qk = 2.5: w1/w2 = exp(1 / (2 * 2.5^2))
        let expected = (1.0f64 / (2.0 * 2.5 * 2.5)).exp();
        assert!((w[0] / w[1] - expected).abs() < 1e-12);
    }

    #[test]
    fn reflection_lands_inside() {
        assert_eq!(reflect(1.2, 0.0, 1.0), 0.8);
        assert_eq!(reflect(-0.25, 0.0, 1.0), 0.25);
        assert!((reflect(2.3, 0.0, 1.0) - 0.3).abs() < 1e-12);
        assert!((reflect(-3.7, -1.0, 1.0) - 0.3).abs() < 1e-12);
        assert_eq!(reflect(0.5, 0.0, 1.0), 0.5);
    }

    fn archive_of(entries: Vec<(Vec<f64>, f64)>) -> SolutionArchive {
        SolutionArchive::from_entries(entries, 0.1)
    }

    #[test]
    fn collapsed_archive_samples_its_point() {
        let a = archive_of(vec![(vec![0.3, -0.2], 1.0); 5]);
        let bounds = vec![(-1.0, 1.0); 2];
        let mut r = rng::substream(1, 1);
        for _ in 0..100 {
            let (_, v) = sample_candidate(&a, 0.85, &bounds, &mut r);
            assert!((v[0] - 0.3).abs() < 1e-7 && (v[1] + 0.2).abs() < 1e-7);
        }
    }

    #[test]
    fn guide_frequencies_match_weights() {
        let k = 25;
        let a = archive_of((0..k).map(|i| (vec![i as f64 / k as f64], i as f64)).collect());
        let bounds = vec![(0.0, 1.0)];
        let draws = 100_000;
        let mut counts = vec![0usize; k];
        let mut r = rng::substream(2024, 0);
        for _ in 0..draws {
            counts[sample_candidate(&a, 0.85, &bounds, &mut r).0] += 1;
        }
        let total: f64 = a.weights.iter().sum();
        for (c, w) in counts.iter().zip(&a.weights) {
            let p = w / total;
            let mean = p * draws as f64;
            let sd = (draws as f64 * p * (1.0 - p)).sqrt();
            assert!(
                (*c as f64 - mean).abs() <= 3.0 * sd.max(1e-9) + 1e-9,
                "count {c} vs {mean} +- {sd}"
            );
        }
    }

    #[test]
    fn samples_respect_bounds() {
        let a = archive_of((0..10).map(|i| (vec![-1.0 + 0.2 * i as f64, 0.9], i as f64)).collect());
        let bounds = vec![(-1.0, 1.0), (0.0, 1.0)];
        let mut r = rng::substream(3, 3);
        for _ in 0..5000 {
            let (_, v) = sample_candidate(&a, 1.0, &bounds, &mut r);
            assert!(v.iter().zip(&bounds).all(|(x, &(lo, hi))| *x >= lo && *x <= hi));
        }
    }

    #[test]
    fn update_keeps_order_and_elitism() {
        let a = archive_of(vec![(vec![0.0], 1.0), (vec![1.0], 2.0), (vec![2.0], 3.0)]);
        let (same, _) = update_archive(&a, vec![(vec![9.0], 10.0), (vec![8.0], 4.0)], 0.1);
        assert_eq!(same.solutions, a.solutions);
        assert_eq!(same.objectives, a.objectives);
        assert_eq!(same.weights, a.weights);
        let (b, _) = update_archive(&a, vec![(vec![5.0], 0.5)], 0.1);
        assert_eq!(b.solutions[0], vec![5.0]);
        assert_eq!(b.objectives, vec![0.5, 1.0, 2.0]);
        let (t, _) = update_archive(&a, vec![(vec![7.0], 1.0)], 0.1);
        assert_eq!(t.solutions[..2], [vec![0.0], vec![7.0]]);
        let (n, dropped) = update_archive(&a, vec![(vec![7.0], f64::NAN)], 0.1);
        assert_eq!((n.objectives.clone(), dropped), (a.objectives.clone(), 1));
    }

    #[test]
    fn update_equals_sort_and_truncate() {
        let mut r = rng::substream(4, 4);
        for _ in 0..50 {
            let k = 6;
            let a = archive_of(
                (0..k)
                    .map(|i| (vec![i as f64], (r.random::<f64>() * 10.0).floor()))
                    .collect(),
            );
            let cands: Vec<(Vec<f64>, f64)> = (0..5)
                .map(|i| (vec![100.0 + i as f64], (r.random::<f64>() * 10.0).floor()))
                .collect();
            // oracle: insertion sort over (objective, insertion position)
            let mut all: Vec<(f64, usize, Vec<f64>)> = Vec::new();
            for (pos, (s, f)) in a
                .solutions
                .iter()
                .zip(&a.objectives)
                .chain(cands.iter().map(|(s, f)| (s, f)))
                .enumerate()
            {
                let at = all.iter().position(|e| e.0 > *f).unwrap_or(all.len());
                all.insert(at, (*f, pos, s.clone()));
            }
            all.truncate(k);
            let (got, _) = update_archive(&a, cands, 0.1);
            assert_eq!(got.objectives, all.iter().map(|e| e.0).collect::<Vec<_>>());
            assert_eq!(got.solutions, all.iter().map(|e| e.2.clone()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn sphere_converges() {
        let cfg = AcoConfig {
            seed: 7,
            ..cube(5, -1.0, 1.0)
        };
        let res = optimize(sphere, 5, &cfg).unwrap();
        assert!(res.best_objective < 1e-3, "best {}", res.best_objective);
        assert_eq!(res.history.len(), 100);
        assert_eq!(res.evaluations, 25 + 20 * 100);
    }

    #[test]
    fn constant_objective_flat_history() {
        let res = optimize(|_| 4.5, 3, &cube(3, 0.0, 1.0)).unwrap();
        assert!(res.history.iter().all(|&h| h == 4.5));
        assert_eq!(res.best_objective, 4.5);
    }

    #[test]
    fn seeded_runs_identical_across_pools() {
        let cfg = AcoConfig {
            seed: 99,
            max_iter: 30,
            ..cube(4, -2.0, 3.0)
        };
        let f = |x: &[f64]| sphere(x) + (5.0 * x[0]).sin();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let many = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
        let mut trace_a = Vec::new();
        let mut trace_b = Vec::new();
        let a = one.install(|| optimize_observed(f, 4, &cfg, &[], |_, ar| trace_a.push(ar.clone())).unwrap());
        let b = many.install(|| optimize_observed(f, 4, &cfg, &[], |_, ar| trace_b.push(ar.clone())).unwrap());
        assert_eq!(a, b);
        assert_eq!(trace_a, trace_b);
        assert_eq!(a, optimize(f, 4, &cfg).unwrap());
    }

    #[test]
    fn invalid_objective_everywhere() {
        let err = optimize(|_| f64::INFINITY, 2, &cube(2, 0.0, 1.0)).unwrap_err();
        assert_eq!(err, AcoError::InvalidObjective);
        let err = optimize(|_| f64::NAN, 2, &cube(2, 0.0, 1.0)).unwrap_err();
        assert_eq!(err, AcoError::InvalidObjective);
    }

    #[test]
    fn nan_candidates_counted() {
        let f = |x: &[f64]| if x[0] > 0.5 { f64::NAN } else { x[0] };
        let cfg = AcoConfig {
            max_iter: 10,
            ..cube(1, 0.0, 1.0)
        };
        let res = optimize(f, 1, &cfg).unwrap();
        assert!(res.best_objective.is_finite());
        assert!(res.discarded > 0);
    }

    #[test]
    fn initial_guess_is_used() {
        let cfg = AcoConfig {
            max_iter: 1,
            n_ants: 1,
            ..cube(2, -1.0, 1.0)
        };
        let res = optimize_from(sphere, 2, &cfg, &[vec![0.0, 0.0]]).unwrap();
        assert_eq!(res.best_objective, 0.0);
        assert!(matches!(
            optimize_from(sphere, 2, &cfg, &[vec![0.0]]),
            Err(AcoError::Guess { .. })
        ));
    }

    #[test]
    fn config_validation() {
        let base = cube(2, 0.0, 1.0);
        assert!(AcoConfig {
            n_ants: 0,
            ..base.clone()
        }
        .validate(2)
        .is_err());
        assert!(AcoConfig {
            archive_size: 1,
            ..base.clone()
        }
        .validate(2)
        .is_err());
        assert!(AcoConfig {
            xi: 0.0,
            ..base.clone()
        }
        .validate(2)
        .is_err());
        assert!(AcoConfig {
            bounds: vec![(1.0, 1.0); 2],
            ..base.clone()
        }
        .validate(2)
        .is_err());
        assert!(base.validate(3).is_err());
        assert!(base.validate(2).is_ok());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(50))]

            #[test]
            fn history_monotone_and_archive_sorted(seed in any::<u64>()) {
                let cfg = AcoConfig { seed, max_iter: 25, n_ants: 8, archive_size: 10, ..cube(3, -2.0, 2.0) };
                let rastrigin = |x: &[f64]| x.iter().map(|v| v * v - (6.0 * v).cos() + 1.0).sum::<f64>();
                let mut best_seen = f64::INFINITY;
                let mut ok = true;
                let res = optimize_observed(rastrigin, 3, &cfg, &[], |_, a| {
                    ok &= a.objectives.windows(2).all(|w| w[0] <= w[1]);
                    ok &= a.solutions.iter().flatten().all(|v| (-2.0..=2.0).contains(v));
                    // elitism
                    ok &= a.objectives[0] <= best_seen;
                    best_seen = best_seen.min(a.objectives[0]);
                }).unwrap();
                prop_assert!(ok);
                prop_assert!(res.history.windows(2).all(|w| w[1] <= w[0]));
            }
        }
    }
}
