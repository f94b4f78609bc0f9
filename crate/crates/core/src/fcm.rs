//! Fuzzy c-means clustering.

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum FcmError {
    #[error("need at least c = {c} points, got {n}")]
    TooFewPoints { n: usize, c: usize },
    #[error("input contains NaN or infinite values (row {0})")]
    NonFinite(usize),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FcmConfig {
    pub c: usize,
    pub m: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for FcmConfig {
    fn default() -> Self {
        FcmConfig {
            c: 10,
            m: 2.0,
            tol: 1e-5,
            max_iter: 200,
            seed: 0,
        }
    }
}

impl FcmConfig {
    pub fn validate(&self) -> Result<(), FcmError> {
        if self.c < 2 {
            return Err(FcmError::Config(format!("c must be >= 2, got {}", self.c)));
        }
        if !(self.m > 1.0) || !self.m.is_finite() {
            return Err(FcmError::Config(format!("m must be > 1, got {}", self.m)));
        }
        if !(self.tol > 0.0) {
            return Err(FcmError::Config(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(FcmError::Config("max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcmResult {
    /// `c x d`, one row per cluster.
    pub centers: Vec<Vec<f64>>,
    /// `n x c`, rows sum to one.
    pub memberships: Vec<Vec<f64>>,
    pub objective: f64,
    pub iterations: usize,
    /// Objective after every iteration.
    pub history: Vec<f64>,
}

/// Squared distance treated as coincidence; absorbs round-off in weighted means.
pub const COINCIDENT_SQ_DIST: f64 = 1e-24;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Membership row of one point given the current centers.
///
/// A point coinciding with a center (squared distance at most
/// [`COINCIDENT_SQ_DIST`]) belongs fully to the first such center.
fn membership_row(x: &[f64], centers: &[Vec<f64>], m: f64) -> Vec<f64> {
    let d2: Vec<f64> = centers.iter().map(|v| sq_dist(x, v)).collect();
    let c = centers.len();
    if let Some(hit) = d2.iter().position(|&d| d <= COINCIDENT_SQ_DIST) {
        let mut u = vec![0.0; c];
        u[hit] = 1.0;
        return u;
    }
    let e = 1.0 / (m - 1.0);
    let mut u: Vec<f64> = (0..c)
        .map(|i| 1.0 / d2.iter().map(|&dj| (d2[i] / dj).powf(e)).sum::<f64>())
        .collect();
    let s: f64 = u.iter().sum();
    u.iter_mut().for_each(|v| *v /= s);
    u
}

/// Weighted means; a cluster with zero total weight keeps `previous`.
fn update_centers(data: &[Vec<f64>], u: &[Vec<f64>], m: f64, previous: Option<&[Vec<f64>]>) -> Vec<Vec<f64>> {
    let c = u[0].len();
    let d = data[0].len();
    let mut num = vec![vec![0.0; d]; c];
    let mut den = vec![0.0; c];
    for (x, row) in data.iter().zip(u) {
        for i in 0..c {
            let w = row[i].powf(m);
            den[i] += w;
            for (acc, xj) in num[i].iter_mut().zip(x) {
                *acc += w * xj;
            }
        }
    }
    num.into_iter()
        .zip(den)
        .enumerate()
        .map(|(i, (v, w))| {
            if w > 0.0 {
                v.into_iter().map(|a| a / w).collect()
            } else {
                previous.map_or_else(|| vec![0.0; d], |p| p[i].clone())
            }
        })
        .collect()
}

/// `J = sum_i sum_k u_ki^m |x_k - v_i|^2`.
pub fn fcm_objective(
    data: &[Vec<f64>],
    centers: &[Vec<f64>],
    memberships: &[Vec<f64>],
    m: f64,
) -> Result<f64, FcmError> {
    if data.len() != memberships.len() {
        return Err(FcmError::Dimension(format!(
            "{} points but {} membership rows",
            data.len(),
            memberships.len()
        )));
    }
    let d = centers.first().map_or(0, Vec::len);
    if centers.iter().any(|v| v.len() != d) || data.iter().any(|x| x.len() != d) {
        return Err(FcmError::Dimension("point and center lengths differ".into()));
    }
    if memberships.iter().any(|r| r.len() != centers.len()) {
        return Err(FcmError::Dimension(format!(
            "membership rows must have {} entries",
            centers.len()
        )));
    }
    Ok(data
        .iter()
        .zip(memberships)
        .map(|(x, row)| {
            centers
                .iter()
                .zip(row)
                .map(|(v, &u)| u.powf(m) * sq_dist(x, v))
                .sum::<f64>()
        })
        .sum())
}

/// Alternating membership/center updates until the objective decrease
/// falls below `tol` or `max_iter` is reached.
pub fn fcm_cluster(data: &[Vec<f64>], config: &FcmConfig) -> Result<FcmResult, FcmError> {
    config.validate()?;
    let (n, c) = (data.len(), config.c);
    if n < c {
        return Err(FcmError::TooFewPoints { n, c });
    }
    let d = data[0].len();
    if d == 0 {
        return Err(FcmError::Dimension("points have no coordinates".into()));
    }
    for (k, x) in data.iter().enumerate() {
        if x.len() != d {
            return Err(FcmError::Dimension(format!(
                "row {k} has {} coordinates, expected {d}",
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(FcmError::NonFinite(k));
        }
    }

    let mut u: Vec<Vec<f64>> = (0..n as u64)
        .map(|k| {
            let mut r = rng::substream(config.seed, k);
            let mut row: Vec<f64> = (0..c).map(|_| r.random::<f64>() + 1e-12).collect();
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
            row
        })
        .collect();

    let mut centers: Option<Vec<Vec<f64>>> = None;
    let mut history = Vec::new();
    let mut objective = f64::INFINITY;
    for _ in 0..config.max_iter {
        let v = update_centers(data, &u, config.m, centers.as_deref());
        u = data.par_iter().map(|x| membership_row(x, &v, config.m)).collect();
        let j = fcm_objective(data, &v, &u, config.m)?;
        centers = Some(v);
        let prev = objective;
        objective = j;
        history.push(j);
        if prev - j < config.tol {
            break;
        }
    }

    Ok(FcmResult {
        centers: centers.expect("max_iter >= 1"),
        memberships: u,
        objective,
        iterations: history.len(),
        history,
    })
}
