//! Node-level samples: CSV ingestion, staged feature projection, splitting,
//! min-max normalization and regression metrics.

use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::rng;

/// Canonical CSV header, in column order.
pub const HEADER: [&str; 6] = [
    "x",
    "y",
    "z",
    "pressure",
    "air_superficial_velocity",
    "air_volume_fraction",
];

/// Names of the five candidate input features, in staging order.
pub const FEATURE_NAMES: [&str; 5] = ["x", "y", "z", "pressure", "air_superficial_velocity"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("header mismatch: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("row {row}: {msg}")]
    Row { row: usize, msg: String },
    #[error("row {row}: air_volume_fraction {value} outside [0, 1]")]
    VolumeFraction { row: usize, value: f64 },
    #[error("no samples")]
    Empty,
    #[error("split fraction {0} outside (0, 1)")]
    Fraction(f64),
    #[error("need at least 2 samples to split, got {0}")]
    TooFewToSplit(usize),
    #[error("feature `{0}` is constant; cannot normalize")]
    ConstantFeature(&'static str),
    #[error("arity mismatch: expected {expected} features, got {found}")]
    Arity { expected: usize, found: usize },
    #[error("metrics need equal lengths >= 2 (pred {pred}, target {target})")]
    MetricLength { pred: usize, target: usize },
    #[error("{0} has zero variance; R is undefined")]
    ZeroVariance(&'static str),
    #[error("invalid sample: {0}")]
    InvalidSample(String),
}

/// One reactor node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub pressure: f64,
    pub superficial_velocity: f64,
    pub volume_fraction: f64,
}

impl Sample {
    /// All five candidate features in staging order.
    pub fn features(&self) -> [f64; 5] {
        [self.x, self.y, self.z, self.pressure, self.superficial_velocity]
    }

    pub fn validate(&self) -> Result<(), String> {
        let all = [
            self.x,
            self.y,
            self.z,
            self.pressure,
            self.superficial_velocity,
            self.volume_fraction,
        ];
        if let Some(i) = all.iter().position(|v| !v.is_finite()) {
            return Err(format!("{} is not finite", HEADER[i]));
        }
        if !(0.0..=1.0).contains(&self.volume_fraction) {
            return Err(format!("air_volume_fraction {} outside [0, 1]", self.volume_fraction));
        }
        Ok(())
    }
}

/// How many of `(x, y, z, pressure, superficial_velocity)` are used as inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureStage {
    X1,
    XY2,
    XYZ3,
    XYZP4,
    XYZPV5,
}

impl FeatureStage {
    pub const ALL: [FeatureStage; 5] = [
        FeatureStage::X1,
        FeatureStage::XY2,
        FeatureStage::XYZ3,
        FeatureStage::XYZP4,
        FeatureStage::XYZPV5,
    ];

    pub fn arity(self) -> usize {
        match self {
            FeatureStage::X1 => 1,
            FeatureStage::XY2 => 2,
            FeatureStage::XYZ3 => 3,
            FeatureStage::XYZP4 => 4,
            FeatureStage::XYZPV5 => 5,
        }
    }

    pub fn from_arity(k: usize) -> Option<Self> {
        Self::ALL.get(k.checked_sub(1)?).copied()
    }

    pub fn feature_names(self) -> &'static [&'static str] {
        &FEATURE_NAMES[..self.arity()]
    }

    /// The stage's input features of `s`.
    pub fn project(self, s: &Sample) -> Vec<f64> {
        s.features()[..self.arity()].to_vec()
    }
}

impl fmt::Display for FeatureStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.arity())
    }
}

impl FromStr for FeatureStage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim()
            .parse::<usize>()
            .ok()
            .and_then(FeatureStage::from_arity)
            .ok_or_else(|| format!("feature stage must be 1..=5, got `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    pub samples: Vec<Sample>,
    pub stage: FeatureStage,
}

impl DataSet {
    pub fn new(samples: Vec<Sample>, stage: FeatureStage) -> Self {
        DataSet { samples, stage }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn with_stage(&self, stage: FeatureStage) -> DataSet {
        DataSet {
            samples: self.samples.clone(),
            stage,
        }
    }

    /// Raw (unnormalized) stage features, one row per sample.
    pub fn feature_rows(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| self.stage.project(s)).collect()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.volume_fraction).collect()
    }

    fn subset(&self, idx: &[usize]) -> DataSet {
        DataSet {
            samples: idx.iter().map(|&i| self.samples[i]).collect(),
            stage: self.stage,
        }
    }
}

/// Normalized inputs paired with their (untouched) targets.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn arity(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }
}

/// Reads a canonical six-column CSV.
pub fn load_dataset(path: impl AsRef<Path>, stage: FeatureStage) -> Result<DataSet, DatasetError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_dataset(file, stage)
}

pub fn read_dataset<R: std::io::Read>(reader: R, stage: FeatureStage) -> Result<DataSet, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| DatasetError::Row {
        row: 0,
        msg: e.to_string(),
    })?;
    if headers.iter().ne(HEADER.iter().copied()) {
        return Err(DatasetError::Header {
            expected: HEADER.join(","),
            found: headers.iter().collect::<Vec<_>>().join(","),
        });
    }

    let mut samples = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| DatasetError::Row {
            row,
            msg: e.to_string(),
        })?;
        if rec.len() != HEADER.len() {
            return Err(DatasetError::Row {
                row,
                msg: format!("expected {} fields, found {}", HEADER.len(), rec.len()),
            });
        }
        let mut v = [0.0; 6];
        for (j, field) in rec.iter().enumerate() {
            v[j] = field.parse::<f64>().map_err(|_| DatasetError::Row {
                row,
                msg: format!("column {}: cannot parse `{}` as a number", HEADER[j], field),
            })?;
            if !v[j].is_finite() {
                return Err(DatasetError::Row {
                    row,
                    msg: format!("column {} is not finite", HEADER[j]),
                });
            }
        }
        if !(0.0..=1.0).contains(&v[5]) {
            return Err(DatasetError::VolumeFraction { row, value: v[5] });
        }
        samples.push(Sample {
            x: v[0],
            y: v[1],
            z: v[2],
            pressure: v[3],
            superficial_velocity: v[4],
            volume_fraction: v[5],
        });
    }
    if samples.is_empty() {
        return Err(DatasetError::Empty);
    }
    Ok(DataSet { samples, stage })
}

/// Writes samples in the canonical schema. Floats use the shortest
/// representation that round-trips exactly.
pub fn write_samples<W: Write>(out: W, samples: &[Sample]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for s in samples {
        w.write_record([
            s.x.to_string(),
            s.y.to_string(),
            s.z.to_string(),
            s.pressure.to_string(),
            s.superficial_velocity.to_string(),
            s.volume_fraction.to_string(),
        ])?;
    }
    w.flush()
}

pub fn save_dataset(path: impl AsRef<Path>, data: &DataSet) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let io_err = |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    write_samples(std::io::BufWriter::new(file), &data.samples).map_err(io_err)
}

/// Index sets of a seeded permutation split. `train` holds `round(p * n)`
/// indices, kept within `[1, n - 1]` so neither side is empty.
pub fn split_indices(n: usize, p: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), DatasetError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(DatasetError::Fraction(p));
    }
    if n < 2 {
        return Err(DatasetError::TooFewToSplit(n));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = rng::substream(seed, 0);
    idx.shuffle(&mut rng);
    let n_train = ((p * n as f64).round() as usize).clamp(1, n - 1);
    let test = idx.split_off(n_train);
    Ok((idx, test))
}

pub fn split(data: &DataSet, p: f64, seed: u64) -> Result<(DataSet, DataSet), DatasetError> {
    let (tr, te) = split_indices(data.len(), p, seed)?;
    Ok((data.subset(&tr), data.subset(&te)))
}

/// Per-feature `(min, max)` learned from a training partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub ranges: Vec<(f64, f64)>,
}

impl Normalizer {
    pub fn new(ranges: Vec<(f64, f64)>) -> Self {
        Normalizer { ranges }
    }

    pub fn arity(&self) -> usize {
        self.ranges.len()
    }

    /// Maps one raw feature row into normalized space (no clipping).
    pub fn transform(&self, row: &[f64]) -> Result<Vec<f64>, DatasetError> {
        if row.len() != self.ranges.len() {
            return Err(DatasetError::Arity {
                expected: self.ranges.len(),
                found: row.len(),
            });
        }
        Ok(row
            .iter()
            .zip(&self.ranges)
            .map(|(&v, &(lo, hi))| (v - lo) / (hi - lo))
            .collect())
    }
}

pub fn fit_normalizer(train: &DataSet) -> Result<Normalizer, DatasetError> {
    if train.is_empty() {
        return Err(DatasetError::Empty);
    }
    let d = train.stage.arity();
    let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); d];
    for s in &train.samples {
        for (r, v) in ranges.iter_mut().zip(train.stage.project(s)) {
            r.0 = r.0.min(v);
            r.1 = r.1.max(v);
        }
    }
    for (j, &(lo, hi)) in ranges.iter().enumerate() {
        if !(hi > lo) {
            return Err(DatasetError::ConstantFeature(FEATURE_NAMES[j]));
        }
    }
    Ok(Normalizer { ranges })
}

/// Normalizes the stage features of `data`; apply exactly once.
pub fn apply_normalizer(norm: &Normalizer, data: &DataSet) -> Result<FeatureMatrix, DatasetError> {
    let rows = data
        .samples
        .iter()
        .map(|s| norm.transform(&data.stage.project(s)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FeatureMatrix {
        rows,
        targets: data.targets(),
    })
}

/// Fit statistics of predictions against targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub pearson_r: f64,
    pub rmse: f64,
    pub mae: f64,
    pub n: usize,
}

pub fn eval_metrics(pred: &[f64], target: &[f64]) -> Result<EvalReport, DatasetError> {
    let n = pred.len();
    if n != target.len() || n < 2 {
        return Err(DatasetError::MetricLength {
            pred: n,
            target: target.len(),
        });
    }
    let nf = n as f64;
    let mp = pred.iter().sum::<f64>() / nf;
    let mt = target.iter().sum::<f64>() / nf;
    let (mut sxy, mut sxx, mut syy, mut se, mut sa) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&p, &t) in pred.iter().zip(target) {
        let (dp, dt) = (p - mp, t - mt);
        sxy += dp * dt;
        sxx += dp * dp;
        syy += dt * dt;
        se += (p - t) * (p - t);
        sa += (p - t).abs();
    }
    if syy <= 0.0 {
        return Err(DatasetError::ZeroVariance("target"));
    }
    if sxx <= 0.0 {
        return Err(DatasetError::ZeroVariance("prediction"));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    Ok(EvalReport {
        pearson_r: r,
        rmse: (se / nf).sqrt(),
        mae: sa / nf,
        n,
    })
}
