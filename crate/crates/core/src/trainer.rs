//! End-to-end training: split, normalize, cluster, seed the rule base,
//! tune it with the ant colony, and report; plus the stage x ant-count sweep
//! and prediction at new nodes.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::aco::{self, AcoConfig, AcoError};
use crate::dataset::{self, DataSet, DatasetError, EvalReport, FeatureMatrix, FeatureStage};
use crate::fcm::{self, FcmConfig, FcmError};
use crate::fis::{self, FisError, FisModel};
use crate::rng::mix_seed;

/// Search margin around `[0, 1]` for premise centers.
pub const CENTER_MARGIN: f64 = 0.1;
/// Box half-width for consequent coefficients when the colony tunes them.
pub const CONSEQUENT_BOUND: f64 = 5.0;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("dataset: {0}")]
    Dataset(#[from] DatasetError),
    #[error("fcm: {0}")]
    Fcm(#[from] FcmError),
    #[error("fis: {0}")]
    Fis(#[from] FisError),
    #[error("aco: {0}")]
    Aco(#[from] AcoError),
    #[error("trainer: {0}")]
    Config(String),
    #[error("sweep cell (stage {stage}, ants {n_ants}): {source}")]
    Cell {
        stage: FeatureStage,
        n_ants: usize,
        #[source]
        source: Box<TrainError>,
    },
}

/// Which rule-base parameters the colony searches over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TuningMode {
    /// Premises by the colony, consequents by least squares at every evaluation.
    Hybrid,
    /// Premises fixed at the clustering seed; the colony tunes consequents.
    Consequents,
    /// Premises and consequents jointly by the colony.
    Joint,
}

impl fmt::Display for TuningMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TuningMode::Hybrid => "hybrid",
            TuningMode::Consequents => "consequents",
            TuningMode::Joint => "joint",
        })
    }
}

impl FromStr for TuningMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hybrid" => Ok(TuningMode::Hybrid),
            "consequents" => Ok(TuningMode::Consequents),
            "joint" => Ok(TuningMode::Joint),
            _ => Err(format!("unknown tuning mode `{s}` (hybrid|consequents|joint)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Training share of the split.
    pub p: f64,
    pub stage: FeatureStage,
    pub n_rules: usize,
    /// `fcm.c` is overwritten by `n_rules`.
    pub fcm: FcmConfig,
    /// Bounds are derived from the rule base; any value here is ignored.
    pub aco: AcoConfig,
    pub damping: f64,
    pub tuning: TuningMode,
    /// Split seed.
    pub seed: u64,
}

impl TrainConfig {
    /// Defaults with every random stream derived from `seed`.
    pub fn new(stage: FeatureStage, seed: u64) -> Self {
        TrainConfig {
            p: 0.70,
            stage,
            n_rules: 10,
            fcm: FcmConfig::default(),
            aco: AcoConfig::with_bounds(Vec::new()),
            damping: fis::DEFAULT_DAMPING,
            tuning: TuningMode::Hybrid,
            seed,
        }
        .reseeded(seed)
    }

    /// Split seed `seed`; clustering and colony seeds mixed from it.
    pub fn reseeded(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.fcm.seed = mix_seed(&[seed, 1]);
        self.aco.seed = mix_seed(&[seed, 2]);
        self
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(DatasetError::Fraction(self.p).into());
        }
        if self.n_rules < 2 {
            return Err(TrainError::Config(format!(
                "n_rules must be >= 2, got {}",
                self.n_rules
            )));
        }
        if !(self.damping > 0.0) || !self.damping.is_finite() {
            return Err(TrainError::Config(format!("damping must be > 0, got {}", self.damping)));
        }
        FcmConfig {
            c: self.n_rules,
            ..self.fcm
        }
        .validate()?;
        // bounds are checked when the colony runs
        AcoConfig {
            bounds: vec![(0.0, 1.0)],
            ..self.aco.clone()
        }
        .validate(1)?;
        Ok(())
    }
}

/// Cluster summary kept with a trained model (memberships are not stored).
#[derive(Debug, Clone, PartialEq)]
pub struct FcmSummary {
    pub centers: Vec<Vec<f64>>,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub fis: FisModel,
    pub config: TrainConfig,
    pub fcm: FcmSummary,
    pub train_report: EvalReport,
    pub test_report: EvalReport,
    /// Best-so-far training RMSE per colony iteration.
    pub convergence: Vec<f64>,
}

fn premise_bounds(model: &FisModel) -> Vec<(f64, f64)> {
    let per_mf = [
        (-CENTER_MARGIN, 1.0 + CENTER_MARGIN),
        (fis::SIGMA_FLOOR, fis::SIGMA_CAP),
    ];
    (0..model.n_rules() * model.arity()).flat_map(|_| per_mf).collect()
}

fn consequent_bounds(model: &FisModel) -> Vec<(f64, f64)> {
    vec![(-CONSEQUENT_BOUND, CONSEQUENT_BOUND); model.consequent_len()]
}

fn rmse_or_inf(m: Result<FisModel, FisError>, train: &FeatureMatrix) -> f64 {
    m.and_then(|m| m.rmse(train))
        .ok()
        .filter(|v| v.is_finite())
        .unwrap_or(f64::INFINITY)
}

/// Colony search from the clustering seed. Returns the tuned model and the
/// convergence history.
fn tune(
    seed_model: &FisModel,
    train: &FeatureMatrix,
    config: &TrainConfig,
) -> Result<(FisModel, Vec<f64>), TrainError> {
    let damping = config.damping;
    match config.tuning {
        TuningMode::Hybrid => {
            let aco_cfg = AcoConfig {
                bounds: premise_bounds(seed_model),
                ..config.aco.clone()
            };
            let objective = |v: &[f64]| {
                rmse_or_inf(
                    seed_model
                        .decode_premise(v)
                        .and_then(|m| m.fit_consequents(train, damping)),
                    train,
                )
            };
            let init = [seed_model.encode_premise()];
            let res = aco::optimize_from(objective, aco_cfg.bounds.len(), &aco_cfg, &init)?;
            let model = seed_model
                .decode_premise(&res.best_vector)?
                .fit_consequents(train, damping)?;
            Ok((model, res.history))
        }
        TuningMode::Consequents => {
            let aco_cfg = AcoConfig {
                bounds: consequent_bounds(seed_model),
                ..config.aco.clone()
            };
            let objective = |v: &[f64]| rmse_or_inf(seed_model.decode_consequents(v), train);
            let init = [seed_model.encode_consequents()];
            let res = aco::optimize_from(objective, aco_cfg.bounds.len(), &aco_cfg, &init)?;
            Ok((seed_model.decode_consequents(&res.best_vector)?, res.history))
        }
        TuningMode::Joint => {
            let np = seed_model.premise_len();
            let mut bounds = premise_bounds(seed_model);
            bounds.extend(consequent_bounds(seed_model));
            let aco_cfg = AcoConfig {
                bounds,
                ..config.aco.clone()
            };
            let decode = |v: &[f64]| {
                seed_model
                    .decode_premise(&v[..np])
                    .and_then(|m| m.decode_consequents(&v[np..]))
            };
            let objective = |v: &[f64]| rmse_or_inf(decode(v), train);
            let mut init = seed_model.encode_premise();
            init.extend(seed_model.encode_consequents());
            let res = aco::optimize_from(objective, aco_cfg.bounds.len(), &aco_cfg, &[init])?;
            Ok((decode(&res.best_vector)?, res.history))
        }
    }
}

pub fn train(data: &DataSet, config: &TrainConfig) -> Result<TrainedModel, TrainError> {
    config.validate()?;
    let data = data.with_stage(config.stage);
    let (train_set, test_set) = dataset::split(&data, config.p, config.seed)?;
    let normalizer = dataset::fit_normalizer(&train_set)?;
    let train_m = dataset::apply_normalizer(&normalizer, &train_set)?;

    let fcm_cfg = FcmConfig {
        c: config.n_rules,
        ..config.fcm
    };
    let clusters = fcm::fcm_cluster(&train_m.rows, &fcm_cfg)?;
    let seed_model = fis::init_from_fcm(&clusters, &train_m, config.stage, normalizer, config.damping)?;
    let (fis, convergence) = tune(&seed_model, &train_m, config)?;

    let mut model = TrainedModel {
        fis,
        config: config.clone(),
        fcm: FcmSummary {
            centers: clusters.centers,
            objective: clusters.objective,
            iterations: clusters.iterations,
        },
        train_report: placeholder_report(),
        test_report: placeholder_report(),
        convergence,
    };
    model.train_report = evaluate(&model, &train_set)?;
    model.test_report = evaluate(&model, &test_set)?;
    Ok(model)
}

fn placeholder_report() -> EvalReport {
    EvalReport {
        pearson_r: 0.0,
        rmse: 0.0,
        mae: 0.0,
        n: 0,
    }
}

/// Train and test partitions of `data` exactly as `train` drew them.
pub fn partitions(model: &TrainedModel, data: &DataSet) -> Result<(DataSet, DataSet), TrainError> {
    let data = data.with_stage(model.config.stage);
    Ok(dataset::split(&data, model.config.p, model.config.seed)?)
}

/// Clamped predictions for every sample of `data`, in order.
pub fn predict_dataset(model: &TrainedModel, data: &DataSet) -> Result<Vec<f64>, TrainError> {
    let stage = model.fis.stage;
    let rows: Vec<Vec<f64>> = data.samples.iter().map(|s| stage.project(s)).collect();
    predict_points(model, &rows)
}

/// Metrics of clamped predictions over `data`.
pub fn evaluate(model: &TrainedModel, data: &DataSet) -> Result<EvalReport, TrainError> {
    let pred = predict_dataset(model, data)?;
    Ok(dataset::eval_metrics(&pred, &data.targets())?)
}

/// Predictions at raw (unnormalized) feature vectors, clamped to `[0, 1]`.
pub fn predict_points(model: &TrainedModel, points: &[Vec<f64>]) -> Result<Vec<f64>, TrainError> {
    let fis = &model.fis;
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if p.len() != fis.arity() {
                return Err(DatasetError::Arity {
                    expected: fis.arity(),
                    found: p.len(),
                }
                .into());
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(TrainError::Config(format!("point {i} has a non-finite feature")));
            }
            let x = fis.normalizer.transform(p)?;
            Ok(fis.predict(&x)?.clamp(0.0, 1.0))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub stage: FeatureStage,
    pub n_ants: usize,
    pub train: EvalReport,
    pub test: EvalReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    /// Stage-major, ants-minor, in the order requested.
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    pub fn cell(&self, stage: FeatureStage, n_ants: usize) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.stage == stage && c.n_ants == n_ants)
    }

    /// Best test R over ant counts for one stage.
    pub fn best_test_r(&self, stage: FeatureStage) -> Option<f64> {
        self.cells
            .iter()
            .filter(|c| c.stage == stage)
            .map(|c| c.test.pearson_r)
            .reduce(f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("stage,n_ants,train_r,test_r,train_rmse,test_rmse\n");
        for c in &self.cells {
            s.push_str(&format!(
                "{},{},{:?},{:?},{:?},{:?}\n",
                c.stage, c.n_ants, c.train.pearson_r, c.test.pearson_r, c.train.rmse, c.test.rmse
            ));
        }
        s
    }
}

/// Config of one sweep cell: the split seed stays at `base.seed` so every
/// cell sees the same partition; clustering and colony seeds come from
/// `mix_seed([base.seed, stage, n_ants])`.
pub fn cell_config(base: &TrainConfig, stage: FeatureStage, n_ants: usize) -> TrainConfig {
    let sub = mix_seed(&[base.seed, stage.arity() as u64, n_ants as u64]);
    let mut cfg = base.clone();
    cfg.stage = stage;
    cfg.aco.n_ants = n_ants;
    cfg.fcm.seed = mix_seed(&[sub, 1]);
    cfg.aco.seed = mix_seed(&[sub, 2]);
    cfg
}

pub fn sweep(
    data: &DataSet,
    stages: &[FeatureStage],
    ant_counts: &[usize],
    base: &TrainConfig,
) -> Result<SweepReport, TrainError> {
    if stages.is_empty() || ant_counts.is_empty() {
        return Err(TrainError::Config(
            "sweep needs at least one stage and one ant count".into(),
        ));
    }
    let grid: Vec<(FeatureStage, usize)> = stages
        .iter()
        .flat_map(|&s| ant_counts.iter().map(move |&a| (s, a)))
        .collect();
    let cells = grid
        .par_iter()
        .map(|&(stage, n_ants)| {
            let m = train(data, &cell_config(base, stage, n_ants)).map_err(|e| TrainError::Cell {
                stage,
                n_ants,
                source: Box::new(e),
            })?;
            Ok(SweepCell {
                stage,
                n_ants,
                train: m.train_report,
                test: m.test_report,
            })
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    Ok(SweepReport { cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthfield::{self, PlumeParams, ReactorGeometry};

    fn small_config(stage: FeatureStage) -> TrainConfig {
        let mut c = TrainConfig::new(stage, 3);
        c.n_rules = 4;
        c.aco.max_iter = 15;
        c.aco.n_ants = 6;
        c.aco.archive_size = 8;
        c
    }

    fn small_data() -> DataSet {
        synthfield::generate_dataset(&ReactorGeometry::default(), &PlumeParams::default(), 240, 11).unwrap()
    }

    #[test]
    fn trains_and_reports_on_split() {
        let data = small_data();
        let cfg = small_config(FeatureStage::XYZPV5);
        let m = train(&data, &cfg).unwrap();
        assert_eq!(m.train_report.n, 168);
        assert_eq!(m.test_report.n, 72);
        assert_eq!(m.convergence.len(), 15);
        assert!(m.convergence.windows(2).all(|w| w[1] <= w[0]));
        let (tr, te) = partitions(&m, &data).unwrap();
        assert_eq!(evaluate(&m, &tr).unwrap(), m.train_report);
        assert_eq!(evaluate(&m, &te).unwrap(), m.test_report);
        assert_eq!(evaluate(&m, &data).unwrap().n, 240);
    }

    #[test]
    fn colony_never_worse_than_seed() {
        let data = small_data();
        let cfg = small_config(FeatureStage::XYZ3);
        let m = train(&data, &cfg).unwrap();
        // the seeded archive entry bounds the first history value
        assert!(m.convergence[0].is_finite());
        assert!(m.convergence.last().unwrap() <= &m.convergence[0]);
    }

    #[test]
    fn alternate_tuning_modes_run() {
        let data = small_data();
        for mode in [TuningMode::Consequents, TuningMode::Joint] {
            let mut cfg = small_config(FeatureStage::XY2);
            cfg.tuning = mode;
            let m = train(&data, &cfg).unwrap();
            assert!(m.train_report.pearson_r.is_finite());
            assert!(m.convergence.windows(2).all(|w| w[1] <= w[0]));
        }
        assert_eq!("joint".parse::<TuningMode>().unwrap(), TuningMode::Joint);
        assert!("both".parse::<TuningMode>().is_err());
    }

    #[test]
    fn repeated_row_cannot_be_evaluated() {
        let data = small_data();
        let m = train(&data, &small_config(FeatureStage::XY2)).unwrap();
        let one = DataSet::new(vec![data.samples[0]; 5], FeatureStage::XY2);
        assert!(matches!(
            evaluate(&m, &one),
            Err(TrainError::Dataset(DatasetError::ZeroVariance(_)))
        ));
    }

    #[test]
    fn predict_points_contract() {
        let data = small_data();
        let m = train(&data, &small_config(FeatureStage::XY2)).unwrap();
        let rows: Vec<Vec<f64>> = data.samples.iter().map(|s| vec![s.x, s.y]).collect();
        let p = predict_points(&m, &rows).unwrap();
        assert_eq!(p, predict_dataset(&m, &data).unwrap());
        assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(predict_points(&m, &[vec![0.0]]).is_err());
        assert!(predict_points(&m, &[vec![0.0, f64::NAN]]).is_err());
    }

    #[test]
    fn sweep_grid_complete_and_deterministic() {
        let data = small_data();
        let base = small_config(FeatureStage::X1);
        let stages = [FeatureStage::X1, FeatureStage::XY2];
        let a = sweep(&data, &stages, &[3, 5], &base).unwrap();
        assert_eq!(a.cells.len(), 4);
        assert!(a.cell(FeatureStage::XY2, 5).is_some());
        assert_eq!(a, sweep(&data, &stages, &[3, 5], &base).unwrap());
        assert_eq!(a.to_csv().lines().count(), 5);
        assert!(sweep(&data, &[], &[3], &base).is_err());
    }

    #[test]
    fn sweep_reports_failing_cell() {
        let data = small_data();
        let mut base = small_config(FeatureStage::X1);
        base.aco.archive_size = 1;
        let err = sweep(&data, &[FeatureStage::X1], &[4], &base).unwrap_err();
        assert!(
            err.to_string().contains("stage 1, ants 4") || matches!(err, TrainError::Aco(_)),
            "{err}"
        );
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::new(FeatureStage::X1, 1);
        c.p = 1.0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::new(FeatureStage::X1, 1);
        c.n_rules = 1;
        assert!(c.validate().is_err());
        assert!(TrainConfig::new(FeatureStage::X1, 1).validate().is_ok());
        assert_eq!(TrainConfig::new(FeatureStage::X1, 1).aco.max_iter, 100);
    }
}
