//! Command-line front end. Each subcommand writes CSV or JSON to `--out`
//! (stdout when omitted); `align` writes a directory of files.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::alignment::{
    align_joint, AlignmentConfig, EuclideanNcc, NearestCentroid, TimeSeriesBatch, MAX_PREDICT_STEPS,
};
use crate::basis::{BasisFile, BasisMethod, CpaBasis};
use crate::error::{DifwError, Result};
use crate::gradient::{grad_grid, grad_scaling_squaring};
use crate::integrator::{integrate_grid, scaling_squaring};
use crate::oracle::{
    grad_check, precision_report, speed_report, FieldSweep, GradCheckConfig, OdeMethod, PrecisionConfig,
    SolverConfig, SpeedConfig,
};
use crate::prior::PriorCovariance;
use crate::tessellation::{Domain, Tessellation};

#[derive(Debug, Parser)]
#[command(name = "difw", version, about = "Closed-form CPA diffeomorphic warping of the unit interval")]
pub struct Cli {
    /// Worker threads for batch operations; results do not depend on it.
    #[arg(long, global = true, env = "DIFW_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Warp a uniform grid with one CPA field and write x, phi (and gradients).
    Warp(WarpArgs),
    /// Compare closed-form gradients with finite differences over prior draws.
    GradCheck(GradCheckArgs),
    /// Closed-form integration (and gradients) against a fixed-step ODE solver.
    Precision(PrecisionArgs),
    /// Time the closed form against the numeric solver and finite differences.
    Bench(BenchArgs),
    /// Jointly align the signals of a CSV file.
    Align(AlignArgs),
    /// Nearest-centroid classification with aligned and plain centroids.
    Ncc(NccArgs),
}

#[derive(Debug, Args)]
pub struct BasisArgs {
    /// Number of tessellation cells.
    #[arg(long, default_value_t = 16)]
    pub cells: usize,
    /// Force zero velocity at both ends of the domain.
    #[arg(long)]
    pub zero_boundary: bool,
    /// Null-space method: svd, qr, rref or sparse.
    #[arg(long, default_value_t = BasisMethod::Sparse)]
    pub method: BasisMethod,
    #[arg(long, default_value_t = 0.0)]
    pub x_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub x_max: f64,
    /// Exported basis JSON; overrides the flags above.
    #[arg(long)]
    pub basis: Option<PathBuf>,
}

impl BasisArgs {
    fn build(&self) -> Result<CpaBasis> {
        match &self.basis {
            Some(path) => {
                let text = read_text(path)?;
                let file: BasisFile = serde_json::from_str(&text).map_err(|e| json_error(path, &e))?;
                CpaBasis::from_file(&file)
            }
            None => {
                let tess = Tessellation::uniform(Domain::new(self.x_min, self.x_max)?, self.cells)?;
                CpaBasis::new(&tess, self.zero_boundary, self.method)
            }
        }
    }
}

#[derive(Debug, Args)]
pub struct WarpArgs {
    #[command(flatten)]
    pub basis: BasisArgs,
    /// Parameters: a JSON array, `zeros`, `prior` (seeded draw) or a JSON file.
    #[arg(long, default_value = "zeros")]
    pub theta: String,
    #[arg(long, default_value_t = 1000)]
    pub points: usize,
    /// Integration time.
    #[arg(long, default_value_t = 1.0)]
    pub time: f64,
    /// Approximate by scaling and squaring with this many squarings.
    #[arg(long)]
    pub squarings: Option<u32>,
    /// Append one dphi/dtheta column per parameter.
    #[arg(long)]
    pub grad: bool,
    #[arg(long, default_value_t = 1e-2)]
    pub lambda_sigma: f64,
    #[arg(long, default_value_t = 0.5)]
    pub lambda_smooth: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    #[arg(long, default_value_t = 16)]
    pub cells: usize,
    #[arg(long)]
    pub zero_boundary: bool,
    #[arg(long, default_value_t = BasisMethod::Sparse)]
    pub method: BasisMethod,
    /// Number of prior-sampled fields.
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 100)]
    pub points: usize,
    #[arg(long, default_value_t = 1.0)]
    pub time: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub lambda_sigma: f64,
    #[arg(long, default_value_t = 0.5)]
    pub lambda_smooth: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub fd_step: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub floor: f64,
    /// Exit with status 4 when the maximum relative error exceeds this.
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PrecisionArgs {
    #[arg(long, default_value_t = 16)]
    pub cells: usize,
    #[arg(long)]
    pub zero_boundary: bool,
    #[arg(long, default_value_t = BasisMethod::Sparse)]
    pub method: BasisMethod,
    /// Numeric method: rk4 or euler.
    #[arg(long, default_value_t = OdeMethod::Rk4)]
    pub solver: OdeMethod,
    #[arg(long, default_value_t = 100_000)]
    pub steps: usize,
    /// Step every point individually instead of through the per-cell step map.
    #[arg(long)]
    pub no_cache: bool,
    #[arg(long, default_value_t = 100)]
    pub fields: usize,
    #[arg(long, default_value_t = 1000)]
    pub points: usize,
    #[arg(long, default_value_t = 1.0)]
    pub time: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub lambda_sigma: f64,
    #[arg(long, default_value_t = 0.5)]
    pub lambda_smooth: f64,
    /// Also compare gradients against finite differences of the solver.
    #[arg(long)]
    pub gradient: bool,
    #[arg(long, default_value_t = 1e-6)]
    pub fd_step: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Summary JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-field errors as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 40)]
    pub batch: usize,
    #[arg(long, default_value_t = 1000)]
    pub points: usize,
    #[arg(long, default_value_t = 30)]
    pub cells: usize,
    #[arg(long, default_value_t = 20)]
    pub repetitions: usize,
    /// Accuracy the numeric solver is tuned to.
    #[arg(long, default_value_t = 1e-5)]
    pub target: f64,
    /// Prior variance scale of the timed fields.
    #[arg(long, default_value_t = 1.0)]
    pub lambda_sigma: f64,
    #[arg(long, default_value_t = 0.5)]
    pub lambda_smooth: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Summary JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Timings as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AlignmentArgs {
    #[arg(long, default_value_t = 16)]
    pub cells: usize,
    /// Let the warps move the end points of the domain.
    #[arg(long)]
    pub free_boundary: bool,
    #[arg(long, default_value_t = BasisMethod::Sparse)]
    pub method: BasisMethod,
    #[arg(long, default_value_t = 1)]
    pub layers: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lambda_sigma: f64,
    #[arg(long, default_value_t = 0.5)]
    pub lambda_smooth: f64,
    #[arg(long, default_value_t = 0)]
    pub squarings: u32,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Optimize theta directly instead of whitened coordinates.
    #[arg(long)]
    pub no_whiten: bool,
    /// Keep steps that increase the loss.
    #[arg(long)]
    pub no_monotone: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl AlignmentArgs {
    fn config(&self) -> AlignmentConfig {
        AlignmentConfig {
            n_cells: self.cells,
            zero_boundary: !self.free_boundary,
            basis_method: self.method,
            lambda_sigma: self.lambda_sigma,
            lambda_smooth: self.lambda_smooth,
            n_layers: self.layers,
            n_squarings: self.squarings,
            learning_rate: self.lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            whiten: !self.no_whiten,
            monotone: !self.no_monotone,
        }
    }
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    /// CSV with a header row; one signal per row, optional first column `label`.
    pub input: PathBuf,
    #[command(flatten)]
    pub alignment: AlignmentArgs,
    /// Output directory for aligned.csv, warps.csv, thetas.json and loss.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct NccArgs {
    /// Labelled training CSV (first column `label`).
    #[arg(long)]
    pub train: PathBuf,
    /// Labelled test CSV (first column `label`).
    #[arg(long)]
    pub test: PathBuf,
    #[command(flatten)]
    pub alignment: AlignmentArgs,
    /// Optimization steps per test signal and centroid.
    #[arg(long, default_value_t = MAX_PREDICT_STEPS)]
    pub predict_steps: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("difw: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(err: &DifwError) -> i32 {
    match err.root() {
        DifwError::InvalidArgument(_) | DifwError::OutOfDomain { .. } | DifwError::InvalidState(_) => 2,
        DifwError::Data { .. } | DifwError::Io { .. } => 3,
        _ => 4,
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.threads {
        Some(0) => Err(DifwError::invalid("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| DifwError::Internal(format!("cannot start the thread pool: {e}")))?
            .install(|| dispatch(cli.command)),
        None => dispatch(cli.command),
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Warp(a) => warp(a),
        Command::GradCheck(a) => grad_check_cmd(a),
        Command::Precision(a) => precision(a),
        Command::Bench(a) => bench(a),
        Command::Align(a) => align(a),
        Command::Ncc(a) => ncc(a),
    }
}

fn warp(args: WarpArgs) -> Result<()> {
    let basis = args.basis.build()?;
    let theta = parse_theta(&args.theta, &basis, args.lambda_sigma, args.lambda_smooth, args.seed)?;
    let field = basis.theta_to_field(&theta)?;
    let tess = basis.tessellation();
    let grid = tess.domain().uniform_grid(args.points);
    let (phi, grad) = match args.squarings {
        None => {
            let result = integrate_grid(tess, &field, &grid, args.time)?;
            let grad = if args.grad { Some(grad_grid(&basis, &field, &result)?) } else { None };
            (result.phi, grad)
        }
        Some(n) => {
            let phi = scaling_squaring(tess, &field, &grid, args.time, n)?;
            let grad = if args.grad {
                Some(grad_scaling_squaring(&basis, &field, &grid, args.time, n)?)
            } else {
                None
            };
            (phi, grad)
        }
    };
    let mut header = vec!["x".to_string(), "phi".to_string()];
    if args.grad {
        header.extend((0..basis.dim()).map(|k| format!("dphi_dtheta_{k}")));
    }
    let rows = grid.iter().zip(&phi).enumerate().map(|(p, (&x, &y))| {
        let mut row = vec![format_float(x), format_float(y)];
        if let Some(g) = &grad {
            row.extend(g.row(p).iter().map(|&v| format_float(v)));
        }
        row
    });
    write_csv(args.out.as_deref(), &header, rows)
}

fn parse_theta(spec: &str, basis: &CpaBasis, lambda_sigma: f64, lambda_smooth: f64, seed: u64) -> Result<Vec<f64>> {
    let d = basis.dim();
    let theta: Vec<f64> = match spec.trim() {
        "zeros" => vec![0.0; d],
        "prior" => PriorCovariance::new(basis, lambda_sigma, lambda_smooth)?.sample(seed),
        s if s.starts_with('[') => {
            serde_json::from_str(s).map_err(|e| DifwError::invalid(format!("--theta is not a JSON array: {e}")))?
        }
        path => {
            let path = Path::new(path);
            serde_json::from_str(&read_text(path)?).map_err(|e| json_error(path, &e))?
        }
    };
    if theta.len() != d {
        return Err(DifwError::invalid(format!(
            "theta has {} entries, the basis has dimension {d}",
            theta.len()
        )));
    }
    Ok(theta)
}

fn grad_check_cmd(args: GradCheckArgs) -> Result<()> {
    let config = GradCheckConfig {
        sweep: FieldSweep {
            n_cells: args.cells,
            zero_boundary: args.zero_boundary,
            method: args.method,
            lambda_sigma: args.lambda_sigma,
            lambda_smooth: args.lambda_smooth,
            seed: args.seed,
        },
        n_fields: args.trials,
        n_points: args.points,
        t: args.time,
        fd_step: args.fd_step,
        abs_floor: args.floor,
    };
    let report = grad_check(&config)?;
    write_json(args.out.as_deref(), &report)?;
    match args.tolerance {
        Some(tol) if !(report.max_rel_err <= tol) => Err(DifwError::Numeric(format!(
            "maximum relative gradient error {:e} exceeds {tol:e}",
            report.max_rel_err
        ))),
        _ => Ok(()),
    }
}

fn precision(args: PrecisionArgs) -> Result<()> {
    let config = PrecisionConfig {
        sweep: FieldSweep {
            n_cells: args.cells,
            zero_boundary: args.zero_boundary,
            method: args.method,
            lambda_sigma: args.lambda_sigma,
            lambda_smooth: args.lambda_smooth,
            seed: args.seed,
        },
        n_fields: args.fields,
        n_points: args.points,
        t: args.time,
        solver: SolverConfig {
            method: args.solver,
            n_steps: args.steps,
            cell_step_cache: !args.no_cache,
        },
        fd_step: args.fd_step,
    };
    let report = precision_report(&config, args.gradient)?;
    if let Some(path) = &args.csv {
        let header = ["field", "integration_error", "gradient_error"].map(String::from);
        let rows = report
            .per_field
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let gradient = f.gradient.map_or_else(String::new, format_float);
                vec![i.to_string(), format_float(f.integration), gradient]
            });
        write_csv(Some(path), &header, rows)?;
    }
    write_json(args.out.as_deref(), &report)
}

fn bench(args: BenchArgs) -> Result<()> {
    let config = SpeedConfig {
        batch: args.batch,
        n_points: args.points,
        n_cells: args.cells,
        repetitions: args.repetitions,
        target_accuracy: args.target,
        lambda_sigma: args.lambda_sigma,
        lambda_smooth: args.lambda_smooth,
        seed: args.seed,
        ..SpeedConfig::default()
    };
    let report = speed_report(&config)?;
    if let Some(path) = &args.csv {
        let header = ["method", "forward_ms", "backward_ms"].map(String::from);
        let rows = [
            ("closed_form", report.closed_forward_ms, report.closed_backward_ms),
            ("numeric", report.numeric_forward_ms, report.finite_difference_backward_ms),
        ]
        .map(|(m, f, b)| vec![m.to_string(), format_float(f), format_float(b)]);
        write_csv(Some(path), &header, rows)?;
    }
    write_json(args.out.as_deref(), &report)
}

#[derive(Serialize)]
struct ThetaFile<'a> {
    config: &'a AlignmentConfig,
    dim: usize,
    /// `thetas[signal][layer]`.
    thetas: &'a [Vec<Vec<f64>>],
}

fn align(args: AlignArgs) -> Result<()> {
    let input = read_signals(&args.input)?;
    let batch = input.batch()?;
    let config = args.alignment.config();
    let result = align_joint(&batch, &config)?;
    fs::create_dir_all(&args.out).map_err(|e| io_error(&args.out, e))?;

    let width = batch.len();
    let mut header: Vec<String> = Vec::new();
    if input.labels.is_some() {
        header.push("label".into());
    }
    header.extend((0..width).map(|t| format!("t{t}")));
    let labelled = |i: usize, values: &[f64]| {
        let mut row = Vec::with_capacity(values.len() + 1);
        if let Some(l) = &input.labels {
            row.push(l[i].to_string());
        }
        row.extend(values.iter().map(|&v| format_float(v)));
        row
    };
    let aligned = result.aligned.rows();
    write_csv(
        Some(&args.out.join("aligned.csv")),
        &header,
        aligned.iter().enumerate().map(|(i, r)| labelled(i, r)),
    )?;
    write_csv(
        Some(&args.out.join("warps.csv")),
        &header,
        result.warps.iter().enumerate().map(|(i, r)| labelled(i, r)),
    )?;
    let dim = result.thetas.first().and_then(|l| l.first()).map_or(0, Vec::len);
    write_json(
        Some(&args.out.join("thetas.json")),
        &ThetaFile { config: &config, dim, thetas: &result.thetas },
    )?;
    let header = ["step", "data", "reg", "total"].map(String::from);
    let rows = result
        .loss_history
        .iter()
        .enumerate()
        .map(|(s, r)| vec![s.to_string(), format_float(r.data), format_float(r.reg), format_float(r.total)]);
    write_csv(Some(&args.out.join("loss.csv")), &header, rows)
}

#[derive(Serialize)]
struct NccReport {
    n_train: usize,
    n_test: usize,
    classes: Vec<i64>,
    aligned_accuracy: f64,
    euclidean_accuracy: f64,
    aligned_predictions: Vec<i64>,
    euclidean_predictions: Vec<i64>,
}

fn ncc(args: NccArgs) -> Result<()> {
    let train = read_signals(&args.train)?;
    let test = read_signals(&args.test)?;
    let unlabelled = |path: &Path| DifwError::Data {
        file: path.display().to_string(),
        line: 1,
        message: "ncc needs a `label` first column".into(),
    };
    let train_labels = train.labels.as_ref().ok_or_else(|| unlabelled(&args.train))?;
    let test_labels = test.labels.as_ref().ok_or_else(|| unlabelled(&args.test))?;
    let mut classes = train_labels.clone();
    classes.sort_unstable();
    classes.dedup();
    let index_of = |l: &i64| classes.binary_search(l).expect("training label");
    let train_batch = TimeSeriesBatch::from_rows(train.rows.clone())?
        .with_labels(train_labels.iter().map(index_of).collect())?;
    let test_batch = TimeSeriesBatch::from_rows(test.rows.clone())?;

    let mut aligned = NearestCentroid::new(args.alignment.config());
    aligned.predict_steps = args.predict_steps;
    aligned.fit(&train_batch)?;
    let mut plain = EuclideanNcc::new();
    plain.fit(&train_batch)?;
    let to_labels = |p: Vec<usize>| p.into_iter().map(|k| classes[k]).collect::<Vec<i64>>();
    let aligned_predictions = to_labels(aligned.predict(&test_batch)?);
    let euclidean_predictions = to_labels(plain.predict(&test_batch)?);
    let score = |p: &[i64]| p.iter().zip(test_labels).filter(|(a, b)| a == b).count() as f64 / p.len() as f64;
    let report = NccReport {
        n_train: train.rows.len(),
        n_test: test.rows.len(),
        aligned_accuracy: score(&aligned_predictions),
        euclidean_accuracy: score(&euclidean_predictions),
        classes,
        aligned_predictions,
        euclidean_predictions,
    };
    write_json(args.out.as_deref(), &report)
}

/// Rows of a signal CSV plus the optional integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTable {
    pub labels: Option<Vec<i64>>,
    pub rows: Vec<Vec<f64>>,
}

impl SignalTable {
    fn batch(&self) -> Result<TimeSeriesBatch> {
        let batch = TimeSeriesBatch::from_rows(self.rows.clone())?;
        match &self.labels {
            None => Ok(batch),
            Some(labels) => {
                let mut classes = labels.clone();
                classes.sort_unstable();
                classes.dedup();
                let idx = labels.iter().map(|l| classes.binary_search(l).expect("present")).collect();
                batch.with_labels(idx)
            }
        }
    }
}

/// Reads a signal CSV. A header row is required; a first column named
/// `label` holds integer class labels.
pub fn read_signals(path: &Path) -> Result<SignalTable> {
    let name = path.display().to_string();
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let data_error = |line: usize, message: String| DifwError::Data { file: name.clone(), line, message };
    let header = reader.headers().map_err(|e| data_error(1, e.to_string()))?.clone();
    if header.is_empty() {
        return Err(data_error(1, "missing header row".into()));
    }
    let labelled = header.get(0).is_some_and(|h| h.eq_ignore_ascii_case("label"));
    let mut labels = labelled.then(Vec::new);
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            data_error(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let mut fields = record.iter();
        if let Some(labels) = labels.as_mut() {
            let raw = fields.next().unwrap_or("");
            let label = raw
                .parse::<i64>()
                .map_err(|_| data_error(line, format!("label '{raw}' is not an integer")))?;
            labels.push(label);
        }
        let row = fields
            .enumerate()
            .map(|(j, v)| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| data_error(line, format!("column {}: '{v}' is not a finite number", j + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(data_error(1, "no signal rows".into()));
    }
    Ok(SignalTable { labels, rows })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, source: io::Error) -> DifwError {
    DifwError::Io { path: path.display().to_string(), source }
}

fn json_error(path: &Path, e: &serde_json::Error) -> DifwError {
    DifwError::Data { file: path.display().to_string(), line: e.line(), message: e.to_string() }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| io_error(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Seventeen significant digits, enough to round-trip every double.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_csv<R>(path: Option<&Path>, header: &[String], rows: R) -> Result<()>
where
    R: IntoIterator<Item = Vec<String>>,
{
    let target = path.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf);
    let mut out = output(path)?;
    let write = || -> io::Result<()> {
        writeln!(out, "{}", header.join(","))?;
        for row in rows {
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()
    };
    write().map_err(|e| io_error(&target, e))
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let target = path.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf);
    let mut out = output(path)?;
    serde_json::to_writer_pretty(&mut out, value)
        .map_err(io::Error::from)
        .and_then(|()| writeln!(out))
        .and_then(|()| out.flush())
        .map_err(|e| io_error(&target, e))
}
