//! First-order Takagi-Sugeno fuzzy inference with Gaussian premises.
//!
//! Rule `i` fires with `w_i = prod_j exp(-(x_j - c_ij)^2 / (2 s_ij^2))` and
//! proposes `a_i . x + b_i`; the output is the firing-weighted mean of the
//! proposals. All inputs live in the normalizer's `[0, 1]` space.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::dataset::{FeatureMatrix, FeatureStage, Normalizer};
use crate::fcm::FcmResult;

pub const SIGMA_FLOOR: f64 = 1e-3;
pub const SIGMA_CAP: f64 = 1.0;
pub const DEFAULT_DAMPING: f64 = 1e-6;

/// Iterative-refinement passes applied after the damped solve.
const REFINE_STEPS: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum FisError {
    #[error("arity mismatch: expected {expected}, got {found}")]
    Arity { expected: usize, found: usize },
    #[error("parameter vector has length {found}, expected {expected}")]
    VectorLength { expected: usize, found: usize },
    #[error("all rule premises are degenerate at this input")]
    Degenerate,
    #[error("model has no rules")]
    NoRules,
    #[error("least-squares system could not be solved")]
    Singular,
    #[error("training set is empty")]
    EmptyTraining,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMf {
    pub center: f64,
    pub sigma: f64,
}

impl GaussianMf {
    pub fn new(center: f64, sigma: f64) -> Self {
        GaussianMf {
            center,
            sigma: clamp_sigma(sigma),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.log_eval(x).exp()
    }

    pub fn log_eval(&self, x: f64) -> f64 {
        let t = (x - self.center) / self.sigma;
        -0.5 * t * t
    }
}

fn clamp_sigma(s: f64) -> f64 {
    if s.is_nan() {
        SIGMA_FLOOR
    } else {
        s.clamp(SIGMA_FLOOR, SIGMA_CAP)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub premise: Vec<GaussianMf>,
    /// `d` weights followed by the bias.
    pub consequent: Vec<f64>,
}

impl Rule {
    pub fn arity(&self) -> usize {
        self.premise.len()
    }

    pub fn log_strength(&self, x: &[f64]) -> f64 {
        self.premise.iter().zip(x).map(|(mf, &v)| mf.log_eval(v)).sum()
    }

    pub fn output(&self, x: &[f64]) -> f64 {
        let d = self.arity();
        self.consequent[d] + self.consequent[..d].iter().zip(x).map(|(a, v)| a * v).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FisModel {
    pub rules: Vec<Rule>,
    pub stage: FeatureStage,
    pub normalizer: Normalizer,
}

impl FisModel {
    pub fn new(rules: Vec<Rule>, stage: FeatureStage, normalizer: Normalizer) -> Result<Self, FisError> {
        if rules.is_empty() {
            return Err(FisError::NoRules);
        }
        let d = stage.arity();
        for r in &rules {
            if r.premise.len() != d {
                return Err(FisError::Arity {
                    expected: d,
                    found: r.premise.len(),
                });
            }
            if r.consequent.len() != d + 1 {
                return Err(FisError::Arity {
                    expected: d + 1,
                    found: r.consequent.len(),
                });
            }
        }
        if normalizer.arity() != d {
            return Err(FisError::Arity {
                expected: d,
                found: normalizer.arity(),
            });
        }
        Ok(FisModel {
            rules,
            stage,
            normalizer,
        })
    }

    pub fn arity(&self) -> usize {
        self.stage.arity()
    }

    pub fn n_rules(&self) -> usize {
        self.rules.len()
    }

    fn check(&self, x: &[f64]) -> Result<(), FisError> {
        if x.len() != self.arity() {
            return Err(FisError::Arity {
                expected: self.arity(),
                found: x.len(),
            });
        }
        Ok(())
    }

    pub fn firing_strengths(&self, x: &[f64]) -> Result<Vec<f64>, FisError> {
        self.check(x)?;
        Ok(self.rules.iter().map(|r| r.log_strength(x).exp()).collect())
    }

    /// Firing strengths divided by their sum, computed with a max shift in
    /// log space so far-away inputs do not underflow to 0/0.
    pub fn normalized_strengths(&self, x: &[f64]) -> Result<Vec<f64>, FisError> {
        self.check(x)?;
        let logs: Vec<f64> = self.rules.iter().map(|r| r.log_strength(x)).collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return Err(FisError::Degenerate);
        }
        let mut w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= s);
        Ok(w)
    }

    /// Output at a normalized input. Not clamped.
    pub fn predict(&self, x: &[f64]) -> Result<f64, FisError> {
        let w = self.normalized_strengths(x)?;
        let y: f64 = w.iter().zip(&self.rules).map(|(wi, r)| wi * r.output(x)).sum();
        if y.is_finite() {
            Ok(y)
        } else {
            Err(FisError::Degenerate)
        }
    }

    pub fn predict_all(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>, FisError> {
        rows.iter().map(|x| self.predict(x)).collect()
    }

    /// Sum of squared errors over a normalized data set.
    pub fn sse(&self, data: &FeatureMatrix) -> Result<f64, FisError> {
        let mut acc = 0.0;
        for (x, &y) in data.rows.iter().zip(&data.targets) {
            let e = self.predict(x)? - y;
            acc += e * e;
        }
        Ok(acc)
    }

    pub fn rmse(&self, data: &FeatureMatrix) -> Result<f64, FisError> {
        if data.is_empty() {
            return Err(FisError::EmptyTraining);
        }
        Ok((self.sse(data)? / data.len() as f64).sqrt())
    }

    /// Least-squares consequents with the premises held fixed.
    ///
    /// Regressors are `wbar_i * [x, 1]` stacked over rules. The normal
    /// equations are damped by `damping * I` and the damped solution is then
    /// polished by a few steps of iterative refinement, which removes most
    /// of the ridge bias along well-determined directions while keeping
    /// rank-deficient directions near zero.
    pub fn fit_consequents(&self, train: &FeatureMatrix, damping: f64) -> Result<FisModel, FisError> {
        if train.is_empty() {
            return Err(FisError::EmptyTraining);
        }
        let d = self.arity();
        let c = self.n_rules();
        let p = c * (d + 1);
        let mut ata = DMatrix::<f64>::zeros(p, p);
        let mut atb = DVector::<f64>::zeros(p);
        let mut phi = vec![0.0; p];
        for (x, &y) in train.rows.iter().zip(&train.targets) {
            let w = self.normalized_strengths(x)?;
            fill_regressors(&w, x, &mut phi);
            for a in 0..p {
                let pa = phi[a];
                if pa == 0.0 {
                    continue;
                }
                atb[a] += pa * y;
                for b in a..p {
                    ata[(a, b)] += pa * phi[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                ata[(a, b)] = ata[(b, a)];
            }
        }
        let theta = solve_damped(&ata, &atb, damping)?;
        let mut out = self.clone();
        for (i, r) in out.rules.iter_mut().enumerate() {
            r.consequent
                .copy_from_slice(&theta.as_slice()[i * (d + 1)..(i + 1) * (d + 1)]);
        }
        Ok(out)
    }

    pub fn premise_len(&self) -> usize {
        2 * self.n_rules() * self.arity()
    }

    pub fn consequent_len(&self) -> usize {
        self.n_rules() * (self.arity() + 1)
    }

    /// Rule-major, feature-minor `(center, sigma)` pairs.
    pub fn encode_premise(&self) -> Vec<f64> {
        self.rules
            .iter()
            .flat_map(|r| r.premise.iter().flat_map(|mf| [mf.center, mf.sigma]))
            .collect()
    }

    /// Inverse of [`FisModel::encode_premise`] on top of `self` as template;
    /// sigmas are clamped to `[SIGMA_FLOOR, SIGMA_CAP]`.
    pub fn decode_premise(&self, v: &[f64]) -> Result<FisModel, FisError> {
        if v.len() != self.premise_len() {
            return Err(FisError::VectorLength {
                expected: self.premise_len(),
                found: v.len(),
            });
        }
        let mut out = self.clone();
        let mut it = v.chunks_exact(2);
        for r in &mut out.rules {
            for mf in &mut r.premise {
                let pair = it.next().expect("length checked");
                *mf = GaussianMf::new(pair[0], pair[1]);
            }
        }
        Ok(out)
    }

    /// Rule-major consequents, each `d` weights then bias.
    pub fn encode_consequents(&self) -> Vec<f64> {
        self.rules.iter().flat_map(|r| r.consequent.iter().copied()).collect()
    }

    pub fn decode_consequents(&self, v: &[f64]) -> Result<FisModel, FisError> {
        if v.len() != self.consequent_len() {
            return Err(FisError::VectorLength {
                expected: self.consequent_len(),
                found: v.len(),
            });
        }
        let mut out = self.clone();
        for (r, chunk) in out.rules.iter_mut().zip(v.chunks_exact(self.arity() + 1)) {
            r.consequent.copy_from_slice(chunk);
        }
        Ok(out)
    }
}

fn fill_regressors(w: &[f64], x: &[f64], phi: &mut [f64]) {
    let d = x.len();
    for (i, &wi) in w.iter().enumerate() {
        let base = i * (d + 1);
        for (j, &xj) in x.iter().enumerate() {
            phi[base + j] = wi * xj;
        }
        phi[base + d] = wi;
    }
}

/// Solves `(A + damping I) t = b`, then refines toward `A t = b`.
/// The damping is raised tenfold if the factorization fails numerically.
fn solve_damped(a: &DMatrix<f64>, b: &DVector<f64>, damping: f64) -> Result<DVector<f64>, FisError> {
    let p = a.nrows();
    let mut lambda = damping.max(f64::MIN_POSITIVE);
    for _ in 0..12 {
        let mut m = a.clone();
        for i in 0..p {
            m[(i, i)] += lambda;
        }
        if let Some(ch) = m.cholesky() {
            let mut t = ch.solve(b);
            for _ in 0..REFINE_STEPS {
                let r = b - a * &t;
                t += ch.solve(&r);
            }
            if t.iter().all(|v| v.is_finite()) {
                return Ok(t);
            }
        }
        lambda *= 10.0;
    }
    Err(FisError::Singular)
}

/// Rule base seeded from clusters: centers from the cluster centers, widths
/// from the membership-weighted spread of each feature about the center,
/// consequents fitted by damped least squares.
pub fn init_from_fcm(
    fcm: &FcmResult,
    train: &FeatureMatrix,
    stage: FeatureStage,
    normalizer: Normalizer,
    damping: f64,
) -> Result<FisModel, FisError> {
    let d = stage.arity();
    if train.arity() != d {
        return Err(FisError::Arity {
            expected: d,
            found: train.arity(),
        });
    }
    if fcm.memberships.len() != train.len() {
        return Err(FisError::Arity {
            expected: train.len(),
            found: fcm.memberships.len(),
        });
    }
    let mut rules = Vec::with_capacity(fcm.centers.len());
    for (i, center) in fcm.centers.iter().enumerate() {
        if center.len() != d {
            return Err(FisError::Arity {
                expected: d,
                found: center.len(),
            });
        }
        let mut wsum = 0.0;
        let mut var = vec![0.0; d];
        for (x, u) in train.rows.iter().zip(&fcm.memberships) {
            let w = u[i];
            wsum += w;
            for j in 0..d {
                var[j] += w * (x[j] - center[j]).powi(2);
            }
        }
        let premise = center
            .iter()
            .zip(&var)
            .map(|(&c, &v)| {
                let sd = if wsum > 0.0 { (v / wsum).sqrt() } else { 0.0 };
                GaussianMf::new(c, sd)
            })
            .collect();
        rules.push(Rule {
            premise,
            consequent: vec![0.0; d + 1],
        });
    }
    FisModel::new(rules, stage, normalizer)?.fit_consequents(train, damping)
}
