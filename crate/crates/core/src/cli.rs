//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::aco::AcoError;
use crate::dataset::{self, DataSet, DatasetError, FeatureStage};
use crate::fcm::FcmError;
use crate::modelfile::{self, ModelFileError};
use crate::synthfield::{self, PlumeParams, ReactorGeometry, SynthError};
use crate::trainer::{self, TrainConfig, TrainError, TuningMode};

#[derive(Debug, Parser)]
#[command(
    name = "antfis",
    version,
    about = "FCM-seeded fuzzy inference tuned by ant colony optimization"
)]
struct Cli {
    /// Worker threads (0 = all cores). Results do not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic bubble-column dataset.
    GenData(GenDataArgs),
    /// Train a model on one feature stage.
    Train(TrainArgs),
    /// Evaluate a saved model on a dataset.
    Eval(EvalArgs),
    /// Train every (stage, ant count) cell and write the R table.
    Sweep(SweepArgs),
    /// Predict holdup at new nodes.
    Predict(PredictArgs),
    /// Write scatter and convergence data for plotting.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct GenDataArgs {
    /// Number of nodes [reference setting]
    #[arg(long, default_value_t = 1500)]
    n: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// key=value file overriding geometry and plume parameters
    #[arg(long)]
    config: Option<PathBuf>,
    /// Target noise standard deviation (overrides the config file)
    #[arg(long)]
    noise_sd: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct Hyper {
    /// Iterations of the colony [reference setting]
    #[arg(long, default_value_t = 100)]
    iters: usize,
    /// Training fraction [reference setting]
    #[arg(long, default_value_t = 0.70)]
    p: f64,
    /// Rules, equal to the number of clusters
    #[arg(long, default_value_t = 10)]
    rules: usize,
    /// Solution archive size
    #[arg(long, default_value_t = 25)]
    archive: usize,
    /// Parameters searched by the colony: hybrid, consequents or joint
    #[arg(long, default_value = "hybrid")]
    tuning: TuningMode,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

impl Hyper {
    fn config(&self, stage: FeatureStage, ants: usize) -> TrainConfig {
        let mut c = TrainConfig::new(stage, self.seed);
        c.p = self.p;
        c.n_rules = self.rules;
        c.fcm.c = self.rules;
        c.aco.max_iter = self.iters;
        c.aco.n_ants = ants;
        c.aco.archive_size = self.archive;
        c.tuning = self.tuning;
        c
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Number of leading features used (1 = x ... 5 = x,y,z,pressure,velocity)
    #[arg(long, default_value = "5")]
    stage: FeatureStage,
    /// Ants per iteration [reference setting]
    #[arg(long, default_value_t = 20)]
    ants: usize,
    #[command(flatten)]
    hyper: Hyper,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Rows to evaluate: all, train or test [reference setting: all]
    #[arg(long, default_value = "all")]
    partition: String,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    data: PathBuf,
    /// Stages as a range or list, e.g. 1-5 or 1,3,5
    #[arg(long, default_value = "1-5")]
    stages: String,
    /// Ant counts [reference settings]
    #[arg(long, default_value = "20,30,40")]
    ants: String,
    #[command(flatten)]
    hyper: Hyper,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV whose header names the model's stage features
    #[arg(long)]
    points: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Writes <prefix>_scatter_train.csv, <prefix>_scatter_test.csv and <prefix>_convergence.csv
    #[arg(long)]
    out_prefix: String,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        Failure::Data(format!("dataset: {e}"))
    }
}

impl From<SynthError> for Failure {
    fn from(e: SynthError) -> Self {
        Failure::Data(format!("synthfield: {e}"))
    }
}

impl From<ModelFileError> for Failure {
    fn from(e: ModelFileError) -> Self {
        Failure::Data(format!("model: {e}"))
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        let code = train_code(&e);
        let msg = e.to_string();
        match code {
            1 => Failure::Usage(msg),
            2 => Failure::Data(msg),
            _ => Failure::Numerical(msg),
        }
    }
}

fn train_code(e: &TrainError) -> i32 {
    match e {
        TrainError::Dataset(DatasetError::Fraction(_)) | TrainError::Config(_) => 1,
        TrainError::Dataset(_) => 2,
        TrainError::Fcm(FcmError::Config(_)) | TrainError::Aco(AcoError::Config(_)) => 1,
        TrainError::Fcm(FcmError::TooFewPoints { .. } | FcmError::NonFinite(_)) => 2,
        TrainError::Fcm(_) | TrainError::Fis(_) | TrainError::Aco(_) => 3,
        TrainError::Cell { source, .. } => train_code(source),
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Data(format!("cannot write {}: {e}", path.display()))
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Parses `1-5`, `2` or `1,3,5`.
fn parse_stages(s: &str) -> Result<Vec<FeatureStage>, Failure> {
    let bad = || Failure::Usage(format!("invalid --stages `{s}`"));
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        if let Some((a, b)) = part.split_once('-') {
            let a: usize = a.trim().parse().map_err(|_| bad())?;
            let b: usize = b.trim().parse().map_err(|_| bad())?;
            if a > b {
                return Err(bad());
            }
            for k in a..=b {
                out.push(FeatureStage::from_arity(k).ok_or_else(bad)?);
            }
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    Ok(out)
}

fn parse_counts(s: &str) -> Result<Vec<usize>, Failure> {
    s.split(',')
        .map(|t| t.trim().parse::<usize>().ok().filter(|&n| n > 0))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Failure::Usage(format!("invalid --ants `{s}`")))
}

fn gen_data(a: &GenDataArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let mut geom = ReactorGeometry::default();
    let mut params = PlumeParams::default();
    if let Some(path) = &a.config {
        let text =
            std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))?;
        synthfield::apply_config(&text, &mut geom, &mut params)?;
    }
    if let Some(sd) = a.noise_sd {
        params.noise_sd = sd;
    }
    let data = synthfield::generate_dataset(&geom, &params, a.n, a.seed)?;
    dataset::save_dataset(&a.out, &data)?;
    let _ = writeln!(out, "wrote {} rows to {}", data.len(), a.out.display());
    Ok(())
}

fn load_all(path: &Path) -> Result<DataSet, Failure> {
    Ok(dataset::load_dataset(path, FeatureStage::XYZPV5)?)
}

fn train(a: &TrainArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let data = load_all(&a.data)?;
    let model = trainer::train(&data, &a.hyper.config(a.stage, a.ants))?;
    modelfile::save(&a.out, &model)?;
    let _ = writeln!(
        out,
        "train_R={:.6} test_R={:.6} train_RMSE={:.6} test_RMSE={:.6}",
        model.train_report.pearson_r, model.test_report.pearson_r, model.train_report.rmse, model.test_report.rmse
    );
    Ok(())
}

fn eval(a: &EvalArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let model = modelfile::load(&a.model)?;
    let data = load_all(&a.data)?;
    let rows = match a.partition.as_str() {
        "all" => data,
        "train" => trainer::partitions(&model, &data)?.0,
        "test" => trainer::partitions(&model, &data)?.1,
        other => {
            return Err(Failure::Usage(format!(
                "invalid --partition `{other}` (all, train, test)"
            )))
        }
    };
    let r = trainer::evaluate(&model, &rows)?;
    let _ = writeln!(
        out,
        "R={:.6} RMSE={:.6} MAE={:.6} n={}",
        r.pearson_r, r.rmse, r.mae, r.n
    );
    Ok(())
}

fn sweep(a: &SweepArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let stages = parse_stages(&a.stages)?;
    let ants = parse_counts(&a.ants)?;
    let data = load_all(&a.data)?;
    let base = a.hyper.config(FeatureStage::XYZPV5, ants[0]);
    let report = trainer::sweep(&data, &stages, &ants, &base)?;
    write_file(&a.out, &report.to_csv())?;
    for c in &report.cells {
        let _ = writeln!(
            out,
            "stage={} ants={} train_R={:.6} test_R={:.6}",
            c.stage, c.n_ants, c.train.pearson_r, c.test.pearson_r
        );
    }
    Ok(())
}

fn read_points(path: &Path, stage: FeatureStage) -> Result<Vec<Vec<f64>>, Failure> {
    let names = stage.feature_names();
    let mut rdr =
        csv::Reader::from_path(path).map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))?;
    let header = rdr
        .headers()
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?
        .clone();
    if header.iter().map(str::trim).ne(names.iter().copied()) {
        return Err(Failure::Data(format!(
            "{}: header must be `{}` for a stage-{stage} model",
            path.display(),
            names.join(",")
        )));
    }
    rdr.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(|e| Failure::Data(format!("{} row {}: {e}", path.display(), i + 1)))?;
            rec.iter()
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|_| Failure::Data(format!("{} row {}: cannot parse `{f}`", path.display(), i + 1)))
                })
                .collect()
        })
        .collect()
}

fn predict(a: &PredictArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let model = modelfile::load(&a.model)?;
    let points = read_points(&a.points, model.fis.stage)?;
    let pred = trainer::predict_points(&model, &points)?;
    let mut text = model.fis.stage.feature_names().join(",");
    text.push_str(",prediction\n");
    for (p, y) in points.iter().zip(&pred) {
        for v in p {
            let _ = write!(text, "{v},");
        }
        let _ = writeln!(text, "{y}");
    }
    write_file(&a.out, &text)?;
    let _ = writeln!(out, "wrote {} predictions to {}", pred.len(), a.out.display());
    Ok(())
}

fn scatter(model: &trainer::TrainedModel, data: &DataSet) -> Result<String, Failure> {
    let pred = trainer::predict_dataset(model, data)?;
    let mut s = String::from("target,prediction\n");
    for (t, p) in data.targets().iter().zip(&pred) {
        let _ = writeln!(s, "{t},{p}");
    }
    Ok(s)
}

fn report(a: &ReportArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let model = modelfile::load(&a.model)?;
    let data = load_all(&a.data)?;
    let (tr, te) = trainer::partitions(&model, &data)?;
    let files = [
        (format!("{}_scatter_train.csv", a.out_prefix), scatter(&model, &tr)?),
        (format!("{}_scatter_test.csv", a.out_prefix), scatter(&model, &te)?),
        (format!("{}_convergence.csv", a.out_prefix), {
            let mut s = String::from("iteration,best_rmse\n");
            for (i, v) in model.convergence.iter().enumerate() {
                let _ = writeln!(s, "{},{v}", i + 1);
            }
            s
        }),
    ];
    for (path, text) in &files {
        write_file(Path::new(path), text)?;
        let _ = writeln!(out, "wrote {path}");
    }
    Ok(())
}

fn dispatch(cmd: &Command, out: &mut dyn Write) -> Result<(), Failure> {
    match cmd {
        Command::GenData(a) => gen_data(a, out),
        Command::Train(a) => train(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Sweep(a) => sweep(a, out),
        Command::Predict(a) => predict(a, out),
        Command::Report(a) => report(a, out),
    }
}

/// Runs one command line (including the program name) and returns the exit code.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            if code == 0 {
                let _ = write!(out, "{e}");
            } else {
                let _ = write!(err, "{e}");
            }
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: thread pool: {e}");
            return 1;
        }
    };
    let mut buf = Vec::new();
    let result = pool.install(|| dispatch(&cli.command, &mut buf));
    let _ = out.write_all(&buf);
    match result {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message());
            f.code()
        }
    }
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(argv, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}
