//! Analytic bubble-plume field over a cylindrical column.
//!
//! The gas plume is an axisymmetric Gaussian whose half-width grows
//! linearly above the sparger. Holdup and superficial velocity share the
//! same shape; pressure is hydrostatic through the aerated mixture, using
//! the closed-form cross-sectional mean holdup.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::{DataSet, FeatureStage, Sample};
use crate::rng;

/// Length of the linear onset of the plume above the sparger (m).
pub const RAMP_LENGTH: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("point ({x}, {y}, {z}) lies outside the column")]
    OutsideColumn { x: f64, y: f64, z: f64 },
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid plume parameters: {0}")]
    Params(String),
    #[error("sample count must be >= 1")]
    ZeroCount,
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReactorGeometry {
    pub height: f64,
    pub diameter: f64,
    pub sparger_height: f64,
}

impl Default for ReactorGeometry {
    fn default() -> Self {
        ReactorGeometry {
            height: 2.6,
            diameter: 0.288,
            sparger_height: 0.5,
        }
    }
}

impl ReactorGeometry {
    pub fn radius(&self) -> f64 {
        0.5 * self.diameter
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let ok = self.height.is_finite()
            && self.diameter.is_finite()
            && self.diameter > 0.0
            && self.sparger_height >= 0.0
            && self.height > self.sparger_height;
        if ok {
            Ok(())
        } else {
            Err(SynthError::Geometry(format!(
                "need height > sparger_height >= 0 and diameter > 0, got {self:?}"
            )))
        }
    }

    /// Inside test with a 1e-9 relative allowance on the wall so that
    /// midpoints of interior points are never rejected by round-off.
    pub fn contains(&self, x: f64, y: f64, z: f64) -> bool {
        let r2 = self.radius() * self.radius();
        x * x + y * y <= r2 * (1.0 + 1e-9) && z >= -1e-9 * self.height && z <= self.height * (1.0 + 1e-9)
    }

    fn check(&self, x: f64, y: f64, z: f64) -> Result<(), SynthError> {
        if self.contains(x, y, z) {
            Ok(())
        } else {
            Err(SynthError::OutsideColumn { x, y, z })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlumeParams {
    pub alpha_max: f64,
    pub sigma0: f64,
    pub spread: f64,
    pub u_max: f64,
    pub rho_liquid: f64,
    pub g: f64,
    pub p_atm: f64,
    pub noise_sd: f64,
}

impl Default for PlumeParams {
    fn default() -> Self {
        PlumeParams {
            alpha_max: 0.15,
            sigma0: 0.03,
            spread: 0.02,
            u_max: 0.25,
            rho_liquid: 998.0,
            g: 9.81,
            p_atm: 101_325.0,
            noise_sd: 0.005,
        }
    }
}

impl PlumeParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let mut bad = Vec::new();
        if !(self.alpha_max > 0.0 && self.alpha_max < 1.0) {
            bad.push("alpha_max must be in (0, 1)");
        }
        if !(self.sigma0 > 0.0) {
            bad.push("sigma0 must be > 0");
        }
        if !(self.spread >= 0.0) {
            bad.push("spread must be >= 0");
        }
        if !(self.noise_sd >= 0.0) {
            bad.push("noise_sd must be >= 0");
        }
        let all = [
            self.alpha_max,
            self.sigma0,
            self.spread,
            self.u_max,
            self.rho_liquid,
            self.g,
            self.p_atm,
            self.noise_sd,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            bad.push("all parameters must be finite");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(SynthError::Params(bad.join("; ")))
        }
    }
}

/// Plume half-width at height `z`.
pub fn plume_sigma(z: f64, geom: &ReactorGeometry, params: &PlumeParams) -> f64 {
    params.sigma0 + params.spread * (z - geom.sparger_height).max(0.0)
}

/// Linear onset factor in `[0, 1]`.
pub fn ramp(z: f64, geom: &ReactorGeometry) -> f64 {
    ((z - geom.sparger_height) / RAMP_LENGTH).clamp(0.0, 1.0)
}

fn shape(x: f64, y: f64, z: f64, geom: &ReactorGeometry, params: &PlumeParams) -> f64 {
    let s = plume_sigma(z, geom, params);
    let r2 = x * x + y * y;
    (-r2 / (2.0 * s * s)).exp() * ramp(z, geom)
}

pub fn holdup_at(p: [f64; 3], geom: &ReactorGeometry, params: &PlumeParams) -> Result<f64, SynthError> {
    let [x, y, z] = p;
    geom.check(x, y, z)?;
    Ok((params.alpha_max * shape(x, y, z, geom, params)).clamp(0.0, 1.0))
}

pub fn velocity_at(p: [f64; 3], geom: &ReactorGeometry, params: &PlumeParams) -> Result<f64, SynthError> {
    let [x, y, z] = p;
    geom.check(x, y, z)?;
    Ok(params.u_max * shape(x, y, z, geom, params))
}

/// Cross-sectional mean holdup at height `z`:
/// `alpha_max * ramp * (2 s^2 / R^2) * (1 - exp(-R^2 / (2 s^2)))`.
pub fn mean_holdup(z: f64, geom: &ReactorGeometry, params: &PlumeParams) -> f64 {
    let s = plume_sigma(z, geom, params);
    let big_r = geom.radius();
    let a = big_r * big_r / (2.0 * s * s);
    // (1 - e^{-a}) / a, written with exp_m1 for small a
    params.alpha_max * ramp(z, geom) * (-(-a).exp_m1() / a)
}

pub fn pressure_at(p: [f64; 3], geom: &ReactorGeometry, params: &PlumeParams) -> Result<f64, SynthError> {
    let [x, y, z] = p;
    geom.check(x, y, z)?;
    let head = (geom.height - z).max(0.0);
    Ok(params.p_atm + params.rho_liquid * params.g * head * (1.0 - mean_holdup(z, geom, params)))
}

/// Noise-free sample at a point.
pub fn sample_at(p: [f64; 3], geom: &ReactorGeometry, params: &PlumeParams) -> Result<Sample, SynthError> {
    Ok(Sample {
        x: p[0],
        y: p[1],
        z: p[2],
        pressure: pressure_at(p, geom, params)?,
        superficial_velocity: velocity_at(p, geom, params)?,
        volume_fraction: holdup_at(p, geom, params)?,
    })
}

/// Uniform point in the column for sample index `i`: polar sampling with
/// `r = R * sqrt(u)` for area-correct radial density.
pub fn uniform_point(geom: &ReactorGeometry, seed: u64, i: u64) -> [f64; 3] {
    let mut rng = rng::substream(seed, rng::stream_id(1, i));
    let u: f64 = rng.random();
    let theta = 2.0 * PI * rng.random::<f64>();
    let z = geom.height * rng.random::<f64>();
    let r = geom.radius() * u.sqrt();
    [r * theta.cos(), r * theta.sin(), z]
}

/// `n` noisy samples, uniform in the column, in sampling-index order.
pub fn generate_dataset(
    geom: &ReactorGeometry,
    params: &PlumeParams,
    n: usize,
    seed: u64,
) -> Result<DataSet, SynthError> {
    geom.validate()?;
    params.validate()?;
    if n == 0 {
        return Err(SynthError::ZeroCount);
    }
    let noise = Normal::new(0.0, params.noise_sd).map_err(|e| SynthError::Params(e.to_string()))?;
    let samples = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let p = uniform_point(geom, seed, i);
            let mut s = sample_at(p, geom, params)?;
            if params.noise_sd > 0.0 {
                let mut nrng = rng::substream(seed, rng::stream_id(2, i));
                s.volume_fraction = (s.volume_fraction + noise.sample(&mut nrng)).clamp(0.0, 1.0);
            }
            Ok(s)
        })
        .collect::<Result<Vec<_>, SynthError>>()?;
    Ok(DataSet::new(samples, FeatureStage::XYZPV5))
}

/// Applies `key=value` lines (blank lines and `#` comments ignored) onto
/// geometry and plume parameters.
pub fn apply_config(text: &str, geom: &mut ReactorGeometry, params: &mut PlumeParams) -> Result<(), SynthError> {
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| SynthError::Config { line: i + 1, msg };
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected key=value, got `{line}`")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| err(format!("cannot parse `{}` as a number", v.trim())))?;
        let slot = match k.trim() {
            "height" => &mut geom.height,
            "diameter" => &mut geom.diameter,
            "sparger_height" => &mut geom.sparger_height,
            "alpha_max" => &mut params.alpha_max,
            "sigma0" => &mut params.sigma0,
            "spread" => &mut params.spread,
            "u_max" => &mut params.u_max,
            "rho_liquid" => &mut params.rho_liquid,
            "g" => &mut params.g,
            "p_atm" => &mut params.p_atm,
            "noise_sd" => &mut params.noise_sd,
            other => return Err(err(format!("unknown key `{other}`"))),
        };
        *slot = v;
    }
    geom.validate()?;
    params.validate()
}
