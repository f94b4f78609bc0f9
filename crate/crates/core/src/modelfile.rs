//! Plain-text container for trained models.
//!
//! ```text
//! antfis-model v1
//! [config]
//! p=0.7
//! ...
//! [rule.0]
//! center=0.41,0.52
//! sigma=0.1,0.2
//! consequent=0.3,-0.1,0.05
//! ```
//!
//! Sections appear in a fixed order, vectors are comma separated and every
//! float is written in its shortest exactly round-tripping form, so
//! `render(parse(render(m)))` reproduces the same bytes.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::aco::AcoConfig;
use crate::dataset::{EvalReport, FeatureStage, Normalizer, FEATURE_NAMES};
use crate::fcm::FcmConfig;
use crate::fis::{FisModel, GaussianMf, Rule};
use crate::trainer::{FcmSummary, TrainConfig, TrainedModel, TuningMode};

pub const MAGIC: &str = "antfis-model v1";

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("missing [{section}] {key}")]
    Missing { section: String, key: String },
    #[error("[{section}] {key}: {msg}")]
    Value { section: String, key: String, msg: String },
    #[error("inconsistent model: {0}")]
    Invalid(String),
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

fn write_report(out: &mut String, name: &str, r: &EvalReport) {
    let _ = writeln!(out, "[{name}]");
    let _ = writeln!(out, "pearson_r={:?}", r.pearson_r);
    let _ = writeln!(out, "rmse={:?}", r.rmse);
    let _ = writeln!(out, "mae={:?}", r.mae);
    let _ = writeln!(out, "n={}", r.n);
}

pub fn render(m: &TrainedModel) -> String {
    let c = &m.config;
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC}");
    let _ = writeln!(s, "[config]");
    let _ = writeln!(s, "p={:?}", c.p);
    let _ = writeln!(s, "stage={}", c.stage);
    let _ = writeln!(s, "n_rules={}", c.n_rules);
    let _ = writeln!(s, "damping={:?}", c.damping);
    let _ = writeln!(s, "tuning={}", c.tuning);
    let _ = writeln!(s, "seed={}", c.seed);
    let _ = writeln!(s, "fcm.c={}", c.fcm.c);
    let _ = writeln!(s, "fcm.m={:?}", c.fcm.m);
    let _ = writeln!(s, "fcm.tol={:?}", c.fcm.tol);
    let _ = writeln!(s, "fcm.max_iter={}", c.fcm.max_iter);
    let _ = writeln!(s, "fcm.seed={}", c.fcm.seed);
    let _ = writeln!(s, "aco.n_ants={}", c.aco.n_ants);
    let _ = writeln!(s, "aco.archive_size={}", c.aco.archive_size);
    let _ = writeln!(s, "aco.q={:?}", c.aco.q);
    let _ = writeln!(s, "aco.xi={:?}", c.aco.xi);
    let _ = writeln!(s, "aco.max_iter={}", c.aco.max_iter);
    let _ = writeln!(s, "aco.seed={}", c.aco.seed);

    let _ = writeln!(s, "[normalizer]");
    for (name, (lo, hi)) in FEATURE_NAMES.iter().zip(&m.fis.normalizer.ranges) {
        let _ = writeln!(s, "{name}={lo:?},{hi:?}");
    }
    for (i, r) in m.fis.rules.iter().enumerate() {
        let centers: Vec<f64> = r.premise.iter().map(|mf| mf.center).collect();
        let sigmas: Vec<f64> = r.premise.iter().map(|mf| mf.sigma).collect();
        let _ = writeln!(s, "[rule.{i}]");
        let _ = writeln!(s, "center={}", join(&centers));
        let _ = writeln!(s, "sigma={}", join(&sigmas));
        let _ = writeln!(s, "consequent={}", join(&r.consequent));
    }
    let _ = writeln!(s, "[fcm]");
    let _ = writeln!(s, "objective={:?}", m.fcm.objective);
    let _ = writeln!(s, "iterations={}", m.fcm.iterations);
    for (i, v) in m.fcm.centers.iter().enumerate() {
        let _ = writeln!(s, "center.{i}={}", join(v));
    }
    write_report(&mut s, "train_report", &m.train_report);
    write_report(&mut s, "test_report", &m.test_report);
    let _ = writeln!(s, "[convergence]");
    let _ = writeln!(s, "best_rmse={}", join(&m.convergence));
    s
}

struct Section {
    name: String,
    entries: Vec<(String, String)>,
}

impl Section {
    fn raw(&self, key: &str) -> Result<&str, ModelFileError> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| ModelFileError::Missing {
                section: self.name.clone(),
                key: key.into(),
            })
    }

    fn value_err(&self, key: &str, msg: impl Into<String>) -> ModelFileError {
        ModelFileError::Value {
            section: self.name.clone(),
            key: key.into(),
            msg: msg.into(),
        }
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T, ModelFileError> {
        let v = self.raw(key)?;
        v.parse()
            .map_err(|_| self.value_err(key, format!("cannot parse `{v}`")))
    }

    fn floats(&self, key: &str) -> Result<Vec<f64>, ModelFileError> {
        let v = self.raw(key)?;
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',')
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| self.value_err(key, format!("cannot parse `{t}`")))
            })
            .collect()
    }
}

fn split_sections(text: &str) -> Result<Vec<Section>, ModelFileError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l == MAGIC => {}
        _ => {
            return Err(ModelFileError::Syntax {
                line: 1,
                msg: format!("expected `{MAGIC}`"),
            })
        }
    }
    let mut out: Vec<Section> = Vec::new();
    for (i, line) in lines {
        let ln = i + 1;
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            out.push(Section {
                name: name.to_string(),
                entries: Vec::new(),
            });
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ModelFileError::Syntax {
            line: ln,
            msg: format!("expected key=value, got `{line}`"),
        })?;
        let sec = out.last_mut().ok_or_else(|| ModelFileError::Syntax {
            line: ln,
            msg: "entry before first section".into(),
        })?;
        sec.entries.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

fn section<'a>(all: &'a [Section], name: &str) -> Result<&'a Section, ModelFileError> {
    all.iter()
        .find(|s| s.name == name)
        .ok_or_else(|| ModelFileError::Missing {
            section: name.into(),
            key: "(section)".into(),
        })
}

fn read_report(all: &[Section], name: &str) -> Result<EvalReport, ModelFileError> {
    let s = section(all, name)?;
    Ok(EvalReport {
        pearson_r: s.get("pearson_r")?,
        rmse: s.get("rmse")?,
        mae: s.get("mae")?,
        n: s.get("n")?,
    })
}

pub fn parse(text: &str) -> Result<TrainedModel, ModelFileError> {
    let all = split_sections(text)?;
    let cs = section(&all, "config")?;
    let stage: FeatureStage = cs.get("stage")?;
    let n_rules: usize = cs.get("n_rules")?;
    let tuning: TuningMode = cs.get("tuning")?;
    let config = TrainConfig {
        p: cs.get("p")?,
        stage,
        n_rules,
        fcm: FcmConfig {
            c: cs.get("fcm.c")?,
            m: cs.get("fcm.m")?,
            tol: cs.get("fcm.tol")?,
            max_iter: cs.get("fcm.max_iter")?,
            seed: cs.get("fcm.seed")?,
        },
        aco: AcoConfig {
            n_ants: cs.get("aco.n_ants")?,
            archive_size: cs.get("aco.archive_size")?,
            q: cs.get("aco.q")?,
            xi: cs.get("aco.xi")?,
            max_iter: cs.get("aco.max_iter")?,
            seed: cs.get("aco.seed")?,
            bounds: Vec::new(),
        },
        damping: cs.get("damping")?,
        tuning,
        seed: cs.get("seed")?,
    };

    let d = stage.arity();
    let ns = section(&all, "normalizer")?;
    let ranges = stage
        .feature_names()
        .iter()
        .map(|name| match ns.floats(name)?.as_slice() {
            &[lo, hi] if hi > lo => Ok((lo, hi)),
            _ => Err(ns.value_err(name, "expected `min,max` with max > min")),
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut rules = Vec::with_capacity(n_rules);
    for i in 0..n_rules {
        let rs = section(&all, &format!("rule.{i}"))?;
        let centers = rs.floats("center")?;
        let sigmas = rs.floats("sigma")?;
        let consequent = rs.floats("consequent")?;
        if centers.len() != d || sigmas.len() != d {
            return Err(rs.value_err("center", format!("rule needs {d} centers and sigmas")));
        }
        let premise = centers
            .iter()
            .zip(&sigmas)
            .map(|(&c, &s)| {
                let mf = GaussianMf::new(c, s);
                if mf.sigma == s {
                    Ok(mf)
                } else {
                    Err(rs.value_err("sigma", format!("{s} outside the allowed width range")))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        rules.push(Rule { premise, consequent });
    }
    let fis =
        FisModel::new(rules, stage, Normalizer::new(ranges)).map_err(|e| ModelFileError::Invalid(e.to_string()))?;

    let fs = section(&all, "fcm")?;
    let iterations: usize = fs.get("iterations")?;
    let centers = (0..n_rules)
        .map(|i| fs.floats(&format!("center.{i}")))
        .collect::<Result<Vec<_>, _>>()?;
    let fcm = FcmSummary {
        centers,
        objective: fs.get("objective")?,
        iterations,
    };

    let convergence = section(&all, "convergence")?.floats("best_rmse")?;
    Ok(TrainedModel {
        fis,
        config,
        fcm,
        train_report: read_report(&all, "train_report")?,
        test_report: read_report(&all, "test_report")?,
        convergence,
    })
}

pub fn save(path: impl AsRef<Path>, m: &TrainedModel) -> Result<(), ModelFileError> {
    let path = path.as_ref();
    std::fs::write(path, render(m)).map_err(|source| ModelFileError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load(path: impl AsRef<Path>) -> Result<TrainedModel, ModelFileError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ModelFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse(&text)
}
