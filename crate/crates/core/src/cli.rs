//! Batch driver: one command per process, configured by a JSON document
//! with command-line overrides. Every JSON output echoes the resolved
//! configuration; CSV outputs written to a file get a `.config.json`
//! sidecar.

use crate::bessel_kernel::{heat_kernel_nd, IndexVector};
use crate::error::{contract, domain, Error, Result};
use crate::estimates::{
    pointwise_convergence_experiment, strong_type_experiment, verify_estimate, weak_type_experiment,
    write_weak_profiles_csv, EstimateId, SampleSpec, StrongOperator, StrongTypeSpec, WeakOperator, WeakTypeSpec,
};
use crate::measure_grid::DistributionProfile;
use crate::operators::{
    apply_semigroup, fractional_kernel, g_function, maximal_op, riesz_kernel, riesz_pv_with, riesz_truncated_many,
    FractionalForm, FractionalOrder, PvSpec, QuadratureSpec, Separable, Source,
};
use crate::par;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_IO: i32 = 74;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "BESSEL_HARMONICS_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Kernel,
    Apply,
    Maximal,
    Gfun,
    Riesz,
    Frac,
    Verify,
    Weaktype,
    Strongtype,
    Converge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    #[default]
    Json,
}

/// Everything a run depends on.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<CommandKind>,
    pub lambda: Vec<f64>,
    pub dim: Option<usize>,
    pub t: Option<f64>,
    pub x: Option<Vec<f64>>,
    pub y: Option<Vec<f64>>,
    /// time sequence of `converge`
    pub ts: Option<Vec<f64>>,
    pub id: Option<EstimateId>,
    pub p: Option<f64>,
    pub eps: Option<Vec<f64>>,
    pub beta: Option<f64>,
    pub form: Option<FractionalForm>,
    /// Riesz axis i (0-based)
    pub axis: usize,
    pub operator: Option<String>,
    /// defaults to an L¹-normalised bump of half-width 1/2 at (1, …, 1)
    pub source: Option<Separable>,
    pub quadrature: QuadratureSpec,
    pub pv: PvSpec,
    pub samples: SampleSpec,
    pub weak: WeakTypeSpec,
    pub strong: StrongTypeSpec,
    pub out: Option<PathBuf>,
    pub format: Format,
}

// ---------------------------------------------------------------------------
// command line

#[derive(Debug, Parser)]
#[command(
    name = "bessel-harmonics",
    version,
    about = "Multidimensional Bessel heat semigroup: kernels, operators and estimate checks",
    long_about = "Evaluates the heat semigroup of the multidimensional Bessel operator on (0,∞)^n with \
                  the measure ∏ x_j^{2λ_j} dx, its maximal operator, g-function, Riesz transforms and \
                  negative powers, and runs the kernel-estimate and boundedness experiments.\n\n\
                  Settings come from --config (a JSON RunConfig) overridden by flags. \
                  BESSEL_HARMONICS_THREADS caps the worker count."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<CommandArgs>,
    /// JSON RunConfig; flags override its fields
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum CommandArgs {
    /// Heat kernel W_t^Λ(x,y) = ∏_j W_t^{λ_j}(x_j,y_j). Needs --lambda, --t, --x, --y.
    Kernel(CommonArgs),
    /// Semigroup W_t^Λ f(x) applied to the configured source. Needs --t, --x.
    Apply(CommonArgs),
    /// Heat maximal operator sup_t |W_t^Λ f(x)| and the maximising t. Needs --x.
    Maximal(CommonArgs),
    /// Littlewood–Paley g-function (∫ t|∂_t W_t f(x)|² dt)^{1/2}. Needs --x.
    Gfun(CommonArgs),
    /// Riesz transform R_i: the kernel R_i(x,y) with --y, truncations R_{i,ε} f(x) and their
    /// maximum with --eps, otherwise the principal value. Axis from --axis.
    Riesz(CommonArgs),
    /// Kernel of the negative power Δ^{-β} at (x,y). Needs --beta, --x, --y.
    Frac(CommonArgs),
    /// Sup of LHS/RHS of a kernel inequality over its sample grid, with refinement drift.
    /// --id picks one estimate (all when omitted); --lambda is a single index.
    Verify(CommonArgs),
    /// Weak-(1,1) experiment: sup_γ γ·m{|T f_h| > γ} over L¹-normalised spikes.
    /// --operator: maximal, g_function, riesz_maximal, l_operator, h_lk.
    Weaktype(CommonArgs),
    /// Strong-type experiment: ‖T f_h‖_p / ‖f_h‖_p over a spike family.
    /// --operator: semigroup (uses --t), maximal, g_function, riesz_truncated (uses --eps).
    Strongtype(CommonArgs),
    /// Pointwise convergence |W_t f(x) − f(x)| as t → 0 with a fitted rate. Point from --x.
    Converge(CommonArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Bessel indices λ_1,…,λ_n, each > -1/2
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, value_name = "CSV")]
    pub lambda: Option<Vec<f64>>,
    /// Dimension n (must equal the number of indices)
    #[arg(long)]
    pub dim: Option<usize>,
    /// Time t > 0
    #[arg(long, allow_negative_numbers = true)]
    pub t: Option<f64>,
    /// Point x ∈ (0,∞)^n
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, value_name = "CSV")]
    pub x: Option<Vec<f64>>,
    /// Point y ∈ (0,∞)^n
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, value_name = "CSV")]
    pub y: Option<Vec<f64>>,
    /// Estimate id (A0 … C15, LEMMA5_LOWER, LEMMA5_UPPER)
    #[arg(long)]
    pub id: Option<String>,
    /// Lebesgue exponent p ∈ (1,∞)
    #[arg(long, allow_negative_numbers = true)]
    pub p: Option<f64>,
    /// Truncation radii ε
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, value_name = "CSV")]
    pub eps: Option<Vec<f64>>,
    /// Order β of Δ^{-β}
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    /// Riesz axis (0-based)
    #[arg(long)]
    pub axis: Option<usize>,
    /// Operator of an experiment
    #[arg(long)]
    pub operator: Option<String>,
    /// Output file (stdout when omitted)
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Output format
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

impl CommandArgs {
    fn split(self) -> (CommandKind, CommonArgs) {
        use CommandArgs::*;
        match self {
            Kernel(a) => (CommandKind::Kernel, a),
            Apply(a) => (CommandKind::Apply, a),
            Maximal(a) => (CommandKind::Maximal, a),
            Gfun(a) => (CommandKind::Gfun, a),
            Riesz(a) => (CommandKind::Riesz, a),
            Frac(a) => (CommandKind::Frac, a),
            Verify(a) => (CommandKind::Verify, a),
            Weaktype(a) => (CommandKind::Weaktype, a),
            Strongtype(a) => (CommandKind::Strongtype, a),
            Converge(a) => (CommandKind::Converge, a),
        }
    }
}

impl RunConfig {
    /// Flag values replace config values.
    pub fn apply_overrides(&mut self, command: Option<CommandKind>, a: CommonArgs) -> Result<()> {
        if command.is_some() {
            self.command = command;
        }
        if let Some(v) = a.lambda {
            self.lambda = v;
        }
        if a.dim.is_some() {
            self.dim = a.dim;
        }
        if a.t.is_some() {
            self.t = a.t;
        }
        if a.x.is_some() {
            self.x = a.x;
        }
        if a.y.is_some() {
            self.y = a.y;
        }
        if let Some(id) = a.id {
            self.id = Some(id.parse()?);
        }
        if a.p.is_some() {
            self.p = a.p;
        }
        if a.eps.is_some() {
            self.eps = a.eps;
        }
        if a.beta.is_some() {
            self.beta = a.beta;
        }
        if let Some(i) = a.axis {
            self.axis = i;
        }
        if a.operator.is_some() {
            self.operator = a.operator;
        }
        if a.out.is_some() {
            self.out = a.out;
        }
        if let Some(f) = a.format {
            self.format = f;
        }
        Ok(())
    }

    pub fn index_vector(&self) -> Result<IndexVector> {
        if self.lambda.is_empty() {
            return Err(domain("--lambda is required"));
        }
        let l = IndexVector::new(self.lambda.clone())?;
        if let Some(n) = self.dim {
            if n != l.dim() {
                return Err(domain(format!("--dim {n} does not match {} lambda values", l.dim())));
            }
        }
        Ok(l)
    }

    fn point(&self, v: &Option<Vec<f64>>, name: &str, n: usize) -> Result<Vec<f64>> {
        let p = v.clone().ok_or_else(|| domain(format!("--{name} is required")))?;
        if p.len() != n {
            return Err(domain(format!("--{name} has {} coordinates, dimension is {n}", p.len())));
        }
        Ok(p)
    }

    fn time(&self) -> Result<f64> {
        self.t.ok_or_else(|| domain("--t is required"))
    }

    fn source(&self, l: &IndexVector) -> Result<Separable> {
        match &self.source {
            Some(s) if s.factors.len() == l.dim() => Ok(s.clone()),
            Some(s) => Err(domain(format!("source has {} factors, dimension is {}", s.factors.len(), l.dim()))),
            None => Separable::spike(l, &vec![1.0; l.dim()], 0.5),
        }
    }
}

// ---------------------------------------------------------------------------
// execution

/// Result of a run: JSON payload and an optional CSV rendering.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub result: Value,
    pub csv: String,
}

fn csv_table(header: &[&str], rows: Vec<Vec<String>>) -> Result<String> {
    let mut wr = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    wr.write_record(header).map_err(io)?;
    for r in rows {
        wr.write_record(r).map_err(io)?;
    }
    let bytes = wr.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::Io(e.to_string()))
}

fn single(name: &str, v: f64) -> Result<Artifact> {
    Ok(Artifact { result: json!({ name: v }), csv: csv_table(&[name], vec![vec![v.to_string()]])? })
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

/// Run the configured command.
pub fn run(cfg: &RunConfig) -> Result<Artifact> {
    let cmd = cfg.command.ok_or_else(|| domain("no command given"))?;
    match cmd {
        CommandKind::Verify => return run_verify(cfg),
        CommandKind::Weaktype | CommandKind::Strongtype | CommandKind::Converge => return run_experiment(cmd, cfg),
        _ => {}
    }
    let l = cfg.index_vector()?;
    let n = l.dim();
    match cmd {
        CommandKind::Kernel => {
            let (x, y) = (cfg.point(&cfg.x, "x", n)?, cfg.point(&cfg.y, "y", n)?);
            single("value", heat_kernel_nd(&l, cfg.time()?, &x, &y)?)
        }
        CommandKind::Apply => {
            let x = cfg.point(&cfg.x, "x", n)?;
            let f = Source::separable(cfg.source(&l)?);
            single("value", apply_semigroup(&l, cfg.time()?, &f, &x)?)
        }
        CommandKind::Maximal => {
            let x = cfg.point(&cfg.x, "x", n)?;
            let f = Source::separable(cfg.source(&l)?);
            let m = maximal_op(&l, &f, &x, &cfg.quadrature)?;
            let csv = csv_table(&["value", "t"], vec![vec![m.value.to_string(), m.t.to_string()]])?;
            Ok(Artifact { result: to_value(&m)?, csv })
        }
        CommandKind::Gfun => {
            let x = cfg.point(&cfg.x, "x", n)?;
            let f = Source::separable(cfg.source(&l)?);
            single("value", g_function(&l, &f, &x, &cfg.quadrature)?)
        }
        CommandKind::Riesz => {
            let x = cfg.point(&cfg.x, "x", n)?;
            if cfg.y.is_some() {
                let y = cfg.point(&cfg.y, "y", n)?;
                return single("kernel", riesz_kernel(&l, cfg.axis, &x, &y)?);
            }
            let f = Source::separable(cfg.source(&l)?);
            match &cfg.eps {
                Some(eps) => {
                    let v = riesz_truncated_many(&l, cfg.axis, &f, &x, eps)?;
                    let max = v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
                    let rows = eps.iter().zip(&v).map(|(e, v)| vec![e.to_string(), v.to_string()]).collect();
                    Ok(Artifact {
                        result: json!({ "eps": eps, "truncated": v, "maximal": max }),
                        csv: csv_table(&["eps", "value"], rows)?,
                    })
                }
                None => single("pv", riesz_pv_with(&l, cfg.axis, &f, &x, cfg.pv)?),
            }
        }
        CommandKind::Frac => {
            let (x, y) = (cfg.point(&cfg.x, "x", n)?, cfg.point(&cfg.y, "y", n)?);
            let beta = cfg.beta.ok_or_else(|| domain("--beta is required"))?;
            let order = FractionalOrder::new(beta, &l, cfg.form.unwrap_or(FractionalForm::Plain))?;
            single("kernel", fractional_kernel(&l, order, &x, &y)?)
        }
        _ => unreachable!(),
    }
}

fn run_verify(cfg: &RunConfig) -> Result<Artifact> {
    if cfg.lambda.len() != 1 {
        return Err(domain(format!("verify takes a single --lambda, got {}", cfg.lambda.len())));
    }
    let lam = cfg.lambda[0];
    let ids: Vec<EstimateId> = match cfg.id {
        Some(id) => vec![id],
        None => EstimateId::ALL.to_vec(),
    };
    let mut reps = Vec::new();
    for id in ids {
        reps.push(verify_estimate(id, lam, &cfg.samples)?);
    }
    let rows = reps
        .iter()
        .map(|r| {
            vec![
                r.id.to_string(),
                r.lambda.to_string(),
                r.samples.to_string(),
                r.sup_ratio.to_string(),
                join(&r.argmax),
                r.drift.to_string(),
            ]
        })
        .collect();
    let csv = csv_table(&["id", "lambda", "samples", "sup_ratio", "argmax", "drift"], rows)?;
    let result = if reps.len() == 1 { to_value(&reps[0])? } else { to_value(&reps)? };
    Ok(Artifact { result, csv })
}

fn run_experiment(cmd: CommandKind, cfg: &RunConfig) -> Result<Artifact> {
    let l = cfg.index_vector()?;
    let n = l.dim();
    match cmd {
        CommandKind::Weaktype => {
            let op: WeakOperator = cfg.operator.as_deref().unwrap_or("maximal").parse()?;
            let mut spec = cfg.weak.clone();
            spec.options.riesz_axis = cfg.axis;
            let rep = weak_type_experiment(op, &l, &spec)?;
            let mut buf = Vec::new();
            write_weak_profiles_csv(&rep, &mut buf)?;
            Ok(Artifact { result: to_value(&rep)?, csv: String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))? })
        }
        CommandKind::Strongtype => {
            let op = match cfg.operator.as_deref().unwrap_or("maximal") {
                "semigroup" => StrongOperator::Semigroup { t: cfg.time()? },
                "maximal" => StrongOperator::Maximal,
                "g_function" => StrongOperator::GFunction,
                "riesz_truncated" => {
                    let eps = cfg.eps.as_ref().and_then(|e| e.first().copied());
                    StrongOperator::RieszTruncated { eps: eps.ok_or_else(|| domain("--eps is required"))? }
                }
                other => {
                    return Err(domain(format!(
                        "unknown operator '{other}' (semigroup, maximal, g_function, riesz_truncated)"
                    )))
                }
            };
            let mut spec: StrongTypeSpec = cfg.strong.clone();
            if let Some(p) = cfg.p {
                spec.p = p;
            }
            spec.options.riesz_axis = cfg.axis;
            let rep = strong_type_experiment(op, &l, &spec)?;
            let rows = rep
                .rows
                .iter()
                .map(|r| vec![r.h.to_string(), r.norm_f.to_string(), r.norm_tf.to_string(), r.ratio.to_string()])
                .collect();
            Ok(Artifact { result: to_value(&rep)?, csv: csv_table(&["h", "norm_f", "norm_tf", "ratio"], rows)? })
        }
        CommandKind::Converge => {
            let x = cfg.point(&cfg.x, "x", n)?;
            let ts = cfg.ts.clone().unwrap_or_else(|| (0..8).map(|k| 1e-2 * 0.5f64.powi(k)).collect());
            let rep = pointwise_convergence_experiment(&l, &cfg.source(&l)?, &[x], &ts)?;
            let rows = rep.t.iter().zip(&rep.rows[0].errors).map(|(t, e)| vec![t.to_string(), e.to_string()]).collect();
            Ok(Artifact { result: to_value(&rep)?, csv: csv_table(&["t", "error"], rows)? })
        }
        _ => unreachable!(),
    }
}

// ---------------------------------------------------------------------------
// output

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn pretty(v: &Value) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Render an artifact, echoing the config, and write it to `cfg.out` or `stdout`.
pub fn emit<W: Write>(cfg: &RunConfig, art: &Artifact, stdout: &mut W) -> Result<()> {
    let cfg_json = to_value(cfg)?;
    let body = match cfg.format {
        Format::Json => pretty(&json!({ "config": cfg_json, "result": art.result }))?,
        Format::Csv => art.csv.clone(),
    };
    match &cfg.out {
        Some(path) => {
            write_file(path, body.as_bytes())?;
            if cfg.format == Format::Csv {
                let mut side = path.as_os_str().to_owned();
                side.push(".config.json");
                write_file(Path::new(&side), pretty(&cfg_json)?.as_bytes())?;
            }
            Ok(())
        }
        None => stdout.write_all(body.as_bytes()).map_err(|e| Error::Io(e.to_string())),
    }
}

#[derive(Serialize)]
struct ProfileRecord {
    gamma: f64,
    measure: f64,
    gamma_times_measure: f64,
}

/// Write a distribution profile as CSV (`gamma,measure,gamma_times_measure`)
/// or as a JSON array of records with those keys.
pub fn emit_profile(profile: &DistributionProfile, path: &Path, format: Format) -> Result<()> {
    if profile.is_empty() {
        return Err(contract("cannot emit an empty profile"));
    }
    let recs: Vec<ProfileRecord> = profile
        .gammas
        .iter()
        .zip(&profile.measures)
        .map(|(&g, &m)| ProfileRecord { gamma: g, measure: m, gamma_times_measure: g * m })
        .collect();
    let body = match format {
        Format::Csv => csv_table(
            &["gamma", "measure", "gamma_times_measure"],
            recs.iter()
                .map(|r| vec![r.gamma.to_string(), r.measure.to_string(), r.gamma_times_measure.to_string()])
                .collect(),
        )?,
        Format::Json => pretty(&to_value(&recs)?)?,
    };
    write_file(path, body.as_bytes())
}

/// Exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Domain(_) | Error::Contract(_) => EXIT_VALIDATION,
        Error::NoConvergence { .. } | Error::NonFinite { .. } => EXIT_NUMERICAL,
        Error::Io(_) => EXIT_IO,
    }
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| domain(format!("invalid config {}: {e}", path.display())))
}

fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse().ok())
}

/// Parse `args`, run, and report. Returns the process exit status.
pub fn main_with<I, T, O, E>(args: I, stdout: &mut O, stderr: &mut E) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
    O: Write,
    E: Write,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { stdout.write_all(text.as_bytes()) } else { stderr.write_all(text.as_bytes()) };
            return code;
        }
    };
    par::configure_threads(threads_from_env());
    let resolved = (|| -> Result<RunConfig> {
        let mut cfg = match &cli.config {
            Some(p) => load_config(p)?,
            None => RunConfig::default(),
        };
        let (cmd, args) = match cli.command {
            Some(c) => {
                let (k, a) = c.split();
                (Some(k), a)
            }
            None => (None, CommonArgs::default()),
        };
        cfg.apply_overrides(cmd, args)?;
        Ok(cfg)
    })();
    let cfg = match resolved {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return exit_code(&e);
        }
    };
    if cfg.command.is_none() {
        let _ = writeln!(stderr, "error: no command given (use a subcommand or set \"command\" in --config)");
        return EXIT_USAGE;
    }
    match run(&cfg).and_then(|a| emit(&cfg, &a, stdout)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}
