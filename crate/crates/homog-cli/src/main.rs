//! Command-line interface over the homogenization library.
//!
//! Subcommands: `classify` (full pipeline + verdict), `effective` (invariant
//! measure and effective matrix only), `cell` (one corrector, exportable as
//! CSV), `rates` (ε-sweep Dirichlet rate study), `asymptotics` (anisotropic
//! measure-limit study), and `gallery` (dump the named coefficient specs).
//!
//! Exit codes: 0 on success, 1 on invalid input (flags, config files,
//! malformed specs), 2 on numerical failure (non-convergence, violated
//! smallness or positivity). Errors print to stderr as single-line JSON.
//! Every JSON document embeds the fully resolved run configuration and a
//! schema version, and rendering is deterministic: identical resolved
//! configurations produce byte-identical output.

use clap::{Args, Parser, Subcommand, ValueEnum};
use homog::gallery::{
    bad_diagonal, default_gallery, default_spec, realize, spec_from_json, two_step_perturbation,
    BadDiagonalConstruction, CoefficientSpec, TwoStepConstruction,
};
use homog::homogenize::{homogenize, solve_cell_problems, Homogenization};
use homog::krylov::SolverConfig;
use homog::matrix::SymMat;
use homog::periodic::invariant_measure;
use homog::rates::{run_asymptotic_study, run_rate_study, RateConfig};
use homog::report::{format_float, homogenization_json, sym_mat_json, Csv, Json, SCHEMA_VERSION};
use homog::torus::{PeriodicGrid, SymMatrixField};
use homog::HomogError;
use serde::Deserialize;
use std::fs;
use std::path::PathBuf;

fn main() {
    let code = match Cli::try_parse() {
        Ok(cli) => match run(cli) {
            Ok(()) => 0,
            Err(err) => {
                eprintln!("{}", error_json(err.kind(), &err.message()));
                if err.is_validation() {
                    1
                } else {
                    2
                }
            }
        },
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                0
            } else {
                eprintln!("{}", error_json("usage_error", &e.to_string()));
                1
            }
        }
    };
    std::process::exit(code);
}

fn error_json(kind: &str, message: &str) -> String {
    let mut doc = Json::obj();
    doc.push("schema_version", Json::Int(SCHEMA_VERSION as i64));
    doc.push("error", Json::str(kind));
    doc.push("message", Json::str(message));
    doc.render()
}

// ---------------------------------------------------------------------------
// Command-line grammar
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "homog",
    version,
    about = "Periodic homogenization of non-divergence-form elliptic operators",
    long_about = "Computes invariant measures, correctors, effective matrices, and the \
                  obstruction tensor of periodic coefficient fields; classifies fields by \
                  whether the tensor vanishes; and runs the Dirichlet-problem rate studies \
                  that exhibit the O(\u{3b5}) vs O(\u{3b5}\u{b2}) convergence dichotomy."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and classify the field by its obstruction tensor.
    #[command(after_help = "CSV columns: k,l,j,value — one obstruction entry per row \
                            (axis labels 1-based).\n\
                            Examples:\n  \
                            homog classify --spec identity --n 2 --N 64\n  \
                            homog classify --spec bad-diagonal --alpha \
                            \"exp(0.35*sin(2*pi*y1)*sin(2*pi*y2))\" --s 0.05 --N 64")]
    Classify(SpecArgs),
    /// Compute the invariant measure and the effective matrix only.
    #[command(after_help = "CSV columns: i,j,value — dense effective-matrix entries \
                            (1-based).")]
    Effective(SpecArgs),
    /// Solve the cell problems and export one corrector.
    #[command(after_help = "CSV columns: y1,..,yn,value — corrector node values on the \
                            periodic grid. JSON reports a summary instead of node data.")]
    Cell(CellArgs),
    /// Sweep ε and fit convergence slopes for the oscillatory Dirichlet problem.
    #[command(after_help = "CSV columns: epsilon,intervals,plain_error,corrected_error,\
                            z_sup,local_plain_slope,local_corrected_slope. Local slopes \
                            compare consecutive rows; the first row leaves them blank.\n\
                            Example:\n  \
                            homog rates --spec bad-diagonal --eps 4,8,16,32 --ipp 16 \
                            --data cubic:1,1,1")]
    Rates(RatesArgs),
    /// Sweep anisotropy strengths and measure the distance to the limit measure.
    #[command(after_help = "CSV columns: s,l2_distance,iterations.\n\
                            Example:\n  \
                            homog asymptotics --a1 \"1\" \
                            --a2 \"1+0.5*sin(2*pi*y1)*sin(2*pi*y2)\" \
                            --s-list 10,100,1000 --N 64")]
    Asymptotics(AsymptoticsArgs),
    /// List the named coefficient specs built into the gallery.
    #[command(after_help = "CSV columns: name,variant,spec — spec is the inline JSON \
                            form accepted by --spec.")]
    Gallery(GalleryArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON file with the same fields as the flags; flags override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    /// Torus nodes per axis (even, at least 4).
    #[arg(long = "N", value_name = "NODES")]
    nodes: Option<usize>,
    /// Relative residual target for the iterative solver.
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration cap for the iterative solver.
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Args, Clone)]
struct SpecArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Coefficient spec: a gallery name, inline JSON ('{...}'), or @file.json.
    #[arg(long)]
    spec: Option<String>,
    /// Dimension used when resolving named specs.
    #[arg(long = "n", value_name = "DIM")]
    dim: Option<usize>,
    /// Override α on a bad-diagonal spec.
    #[arg(long)]
    alpha: Option<String>,
    /// Override the strength s on a construction spec.
    #[arg(long)]
    s: Option<f64>,
    /// Override the seeding strength δ on a two-step spec.
    #[arg(long)]
    delta: Option<f64>,
    /// Override the seeding profile ξ(t) on a two-step spec.
    #[arg(long)]
    xi: Option<String>,
    /// Override a₁ on an anisotropic-family spec.
    #[arg(long)]
    a1: Option<String>,
    /// Override a₂ on an anisotropic-family spec.
    #[arg(long)]
    a2: Option<String>,
}

#[derive(Args, Clone)]
struct CellArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// First corrector index (1-based).
    #[arg(long)]
    k: Option<usize>,
    /// Second corrector index (1-based).
    #[arg(long)]
    l: Option<usize>,
}

#[derive(Args, Clone)]
struct RatesArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Comma-separated period denominators, e.g. 4,8,16,32 for ε = 1/4..1/32.
    #[arg(long, value_name = "DENOMS")]
    eps: Option<String>,
    /// Box grid intervals per period (mesh h = ε/ipp).
    #[arg(long)]
    ipp: Option<usize>,
    /// Driving cubic: cubic:k,l,j picks ū = x_k x_l x_j (1-based).
    #[arg(long, value_name = "CUBIC")]
    data: Option<String>,
}

#[derive(Args, Clone)]
struct AsymptoticsArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// First diagonal entry a₁(y) of the anisotropic family.
    #[arg(long)]
    a1: Option<String>,
    /// Second diagonal entry a₂(y); diag{a₁, s·a₂} is swept over s.
    #[arg(long)]
    a2: Option<String>,
    /// Comma-separated anisotropy strengths, e.g. 10,100,1000.
    #[arg(long = "s-list", value_name = "STRENGTHS")]
    s_list: Option<String>,
}

#[derive(Args, Clone)]
struct GalleryArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dimension at which to instantiate the named specs.
    #[arg(long = "n", value_name = "DIM")]
    dim: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, PartialEq)]
enum OutputFormat {
    Json,
    Csv,
}

impl OutputFormat {
    fn as_str(self) -> &'static str {
        match self {
            OutputFormat::Json => "json",
            OutputFormat::Csv => "csv",
        }
    }
}

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum CliError {
    Homog(HomogError),
    Io(String),
}

impl From<HomogError> for CliError {
    fn from(e: HomogError) -> Self {
        CliError::Homog(e)
    }
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Homog(e) => e.kind(),
            CliError::Io(_) => "io_error",
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Homog(e) => e.to_string(),
            CliError::Io(m) => m.clone(),
        }
    }

    fn is_validation(&self) -> bool {
        match self {
            CliError::Homog(e) => e.is_validation(),
            CliError::Io(_) => true,
        }
    }
}

fn spec_err(msg: impl Into<String>) -> CliError {
    CliError::Homog(HomogError::Spec(msg.into()))
}

// ---------------------------------------------------------------------------
// Configuration files and merging
// ---------------------------------------------------------------------------

/// Optional fields mirroring the flags; any flag given on the command line
/// overrides the corresponding field from the file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    spec: Option<serde_json::Value>,
    n: Option<usize>,
    #[serde(rename = "N")]
    nodes: Option<usize>,
    alpha: Option<String>,
    s: Option<f64>,
    delta: Option<f64>,
    xi: Option<String>,
    a1: Option<String>,
    a2: Option<String>,
    eps: Option<Vec<u64>>,
    ipp: Option<usize>,
    data: Option<String>,
    s_list: Option<Vec<f64>>,
    k: Option<usize>,
    l: Option<usize>,
    tol: Option<f64>,
    max_iter: Option<usize>,
    format: Option<String>,
    out: Option<String>,
}

fn load_config(path: &Option<PathBuf>) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| spec_err(format!("config {}: {e}", path.display())))
}

/// Everything shared by the spec-driven commands after merging flags,
/// config file, and defaults.
struct Resolved {
    spec: CoefficientSpec,
    dim: usize,
    nodes: usize,
    solver: SolverConfig,
    format: OutputFormat,
    out: Option<PathBuf>,
    file: FileConfig,
}

fn resolve_format(
    flag: Option<OutputFormat>,
    file: &FileConfig,
) -> Result<OutputFormat, CliError> {
    if let Some(f) = flag {
        return Ok(f);
    }
    match file.format.as_deref() {
        None => Ok(OutputFormat::Json),
        Some("json") => Ok(OutputFormat::Json),
        Some("csv") => Ok(OutputFormat::Csv),
        Some(other) => Err(spec_err(format!("unknown format {other:?}; use json or csv"))),
    }
}

fn resolve_solver(common: &CommonArgs, file: &FileConfig) -> SolverConfig {
    let defaults = SolverConfig::default();
    SolverConfig {
        tol: common.tol.or(file.tol).unwrap_or(defaults.tol),
        max_iter: common.max_iter.or(file.max_iter).unwrap_or(defaults.max_iter),
    }
}

fn resolve_spec_source(
    args: &SpecArgs,
    file: &FileConfig,
    dim: usize,
) -> Result<CoefficientSpec, CliError> {
    let spec = if let Some(src) = &args.spec {
        parse_spec_source(src, dim)?
    } else {
        match &file.spec {
            Some(serde_json::Value::String(src)) => parse_spec_source(src, dim)?,
            Some(obj @ serde_json::Value::Object(_)) => spec_from_json(&obj.to_string())?,
            Some(other) => {
                return Err(spec_err(format!(
                    "config field \"spec\" must be a name or an object, got {other}"
                )))
            }
            None => {
                return Err(spec_err(
                    "no coefficient spec given: pass --spec or put \"spec\" in the config file",
                ))
            }
        }
    };
    apply_overrides(
        spec,
        args.alpha.as_deref().or(file.alpha.as_deref()),
        args.s.or(file.s),
        args.delta.or(file.delta),
        args.xi.as_deref().or(file.xi.as_deref()),
        args.a1.as_deref().or(file.a1.as_deref()),
        args.a2.as_deref().or(file.a2.as_deref()),
    )
}

fn parse_spec_source(src: &str, dim: usize) -> Result<CoefficientSpec, CliError> {
    let t = src.trim();
    if t.starts_with('{') {
        Ok(spec_from_json(t)?)
    } else if let Some(path) = t.strip_prefix('@') {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read spec {path}: {e}")))?;
        Ok(spec_from_json(&text)?)
    } else {
        Ok(default_spec(t, dim)?)
    }
}

/// Replace construction parameters on a spec; rejecting parameters the
/// variant does not have keeps silently ignored flags from masking typos.
#[allow(clippy::too_many_arguments)]
fn apply_overrides(
    mut spec: CoefficientSpec,
    alpha: Option<&str>,
    s: Option<f64>,
    delta: Option<f64>,
    xi: Option<&str>,
    a1: Option<&str>,
    a2: Option<&str>,
) -> Result<CoefficientSpec, CliError> {
    if let Some(v) = alpha {
        match &mut spec {
            CoefficientSpec::BadDiagonal { alpha, .. } => *alpha = v.to_string(),
            _ => return Err(spec_err("--alpha applies only to bad-diagonal specs")),
        }
    }
    if let Some(v) = s {
        match &mut spec {
            CoefficientSpec::BadDiagonal { s, .. }
            | CoefficientSpec::TwoStepPerturbation { s, .. }
            | CoefficientSpec::AnisotropicFamily { s, .. } => *s = v,
            _ => return Err(spec_err("--s applies only to construction specs")),
        }
    }
    if let Some(v) = delta {
        match &mut spec {
            CoefficientSpec::TwoStepPerturbation { delta, .. } => *delta = v,
            _ => return Err(spec_err("--delta applies only to two-step specs")),
        }
    }
    if let Some(v) = xi {
        match &mut spec {
            CoefficientSpec::TwoStepPerturbation { xi, .. } => *xi = v.to_string(),
            _ => return Err(spec_err("--xi applies only to two-step specs")),
        }
    }
    if let Some(v) = a1 {
        match &mut spec {
            CoefficientSpec::AnisotropicFamily { a1, .. } => *a1 = v.to_string(),
            _ => return Err(spec_err("--a1 applies only to anisotropic-family specs")),
        }
    }
    if let Some(v) = a2 {
        match &mut spec {
            CoefficientSpec::AnisotropicFamily { a2, .. } => *a2 = v.to_string(),
            _ => return Err(spec_err("--a2 applies only to anisotropic-family specs")),
        }
    }
    Ok(spec)
}

fn resolve(args: &SpecArgs) -> Result<Resolved, CliError> {
    let file = load_config(&args.common.config)?;
    let dim = args.dim.or(file.n).unwrap_or(2);
    let nodes = args.common.nodes.or(file.nodes).unwrap_or(64);
    let spec = resolve_spec_source(args, &file, dim)?;
    Ok(Resolved {
        spec,
        dim,
        nodes,
        solver: resolve_solver(&args.common, &file),
        format: resolve_format(args.common.format, &file)?,
        out: args.common.out.clone().or_else(|| file.out.as_ref().map(PathBuf::from)),
        file,
    })
}

// ---------------------------------------------------------------------------
// Report scaffolding
// ---------------------------------------------------------------------------

fn spec_json(spec: &CoefficientSpec) -> Json {
    value_to_json(&serde_json::to_value(spec).expect("specs serialize infallibly"))
}

/// Convert parsed JSON to the deterministic renderer's representation.
/// `serde_json` keeps object keys sorted, so the conversion is stable.
fn value_to_json(v: &serde_json::Value) -> Json {
    match v {
        serde_json::Value::Null => Json::Null,
        serde_json::Value::Bool(b) => Json::Bool(*b),
        serde_json::Value::Number(n) => match n.as_i64() {
            Some(i) => Json::Int(i),
            None => Json::Float(n.as_f64().expect("JSON numbers are i64 or f64")),
        },
        serde_json::Value::String(s) => Json::str(s),
        serde_json::Value::Array(items) => {
            Json::Array(items.iter().map(value_to_json).collect())
        }
        serde_json::Value::Object(map) => {
            let mut o = Json::obj();
            for (k, val) in map {
                o.push(k, value_to_json(val));
            }
            o
        }
    }
}

/// Slopes can be undeterminable (all samples at the noise floor); render
/// those as null rather than crashing on a non-finite float.
fn float_or_null(v: f64) -> Json {
    if v.is_finite() {
        Json::Float(v)
    } else {
        Json::Null
    }
}

fn run_config_base(command: &str, r: &Resolved) -> Json {
    let mut rc = Json::obj();
    rc.push("command", Json::str(command));
    rc.push("spec", spec_json(&r.spec));
    rc.push("n", Json::Int(r.dim as i64));
    rc.push("N", Json::Int(r.nodes as i64));
    rc.push("tol", Json::Float(r.solver.tol));
    rc.push("max_iter", Json::Int(r.solver.max_iter as i64));
    rc.push("format", Json::str(r.format.as_str()));
    rc.push("out", out_json(&r.out));
    rc
}

fn out_json(out: &Option<PathBuf>) -> Json {
    match out {
        Some(p) => Json::str(&p.display().to_string()),
        None => Json::Null,
    }
}

fn document(run_config: Json) -> Json {
    let mut doc = Json::obj();
    doc.push("schema_version", Json::Int(SCHEMA_VERSION as i64));
    doc.push("run_config", run_config);
    doc
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// Spec realization with construction diagnostics
// ---------------------------------------------------------------------------

enum RealizedSpec {
    Plain(SymMatrixField),
    BadDiagonal(BadDiagonalConstruction),
    TwoStep(TwoStepConstruction),
}

impl RealizedSpec {
    fn field(&self) -> &SymMatrixField {
        match self {
            RealizedSpec::Plain(a) => a,
            RealizedSpec::BadDiagonal(c) => &c.a,
            RealizedSpec::TwoStep(c) => &c.a,
        }
    }
}

/// Realize the spec, keeping construction byproducts (exact predictions,
/// admissible ranges) when the spec is one of the obstructed constructions.
fn realize_with_details(
    spec: &CoefficientSpec,
    grid: PeriodicGrid,
    cfg: &SolverConfig,
) -> Result<RealizedSpec, CliError> {
    match spec {
        CoefficientSpec::BadDiagonal { alpha, s } => {
            Ok(RealizedSpec::BadDiagonal(bad_diagonal(alpha, *s, grid, cfg)?))
        }
        CoefficientSpec::TwoStepPerturbation { base, delta, xi, s } => {
            let base_field = realize(base, grid, cfg)?;
            Ok(RealizedSpec::TwoStep(two_step_perturbation(&base_field, *delta, xi, *s, cfg)?))
        }
        _ => Ok(RealizedSpec::Plain(realize(spec, grid, cfg)?)),
    }
}

/// Side-by-side block comparing a construction's exact prediction with the
/// independently computed obstruction entry.
fn construction_json(realized: &RealizedSpec, h: &Homogenization) -> Option<Json> {
    match realized {
        RealizedSpec::Plain(_) => None,
        RealizedSpec::BadDiagonal(c) => {
            let measured = h.obstruction.get(0, 0, 0);
            let mut block = Json::obj();
            block.push("construction", Json::str("bad-diagonal"));
            block.push("target_entry", Json::str("c[k=1,l=1,j=1]"));
            block.push("predicted_c", Json::Float(c.predicted_c));
            block.push("measured_c", Json::Float(measured));
            block.push("relative_gap", float_or_null(relative_gap(measured, c.predicted_c)));
            block.push("max_admissible_s", Json::Float(c.max_admissible_s));
            Some(block)
        }
        RealizedSpec::TwoStep(c) => {
            let j = c.target_axis;
            let measured = h.obstruction.get(j, j, j);
            let label = format!("c[k={0},l={0},j={0}]", j + 1);
            let mut block = Json::obj();
            block.push("construction", Json::str("two-step-perturbation"));
            block.push("target_entry", Json::str(&label));
            block.push("predicted_c", Json::Float(c.predicted_c));
            block.push("measured_c", Json::Float(measured));
            block.push("relative_gap", float_or_null(relative_gap(measured, c.predicted_c)));
            block.push("pre_step_c", Json::Float(c.pre_step_c));
            block.push("step1_applied", Json::Bool(c.step1_applied));
            block.push("max_admissible_s", Json::Float(c.max_admissible_s));
            block.push("distance_to_base", Json::Float(c.distance_to_base));
            Some(block)
        }
    }
}

fn relative_gap(measured: f64, predicted: f64) -> f64 {
    (measured - predicted).abs() / predicted.abs().max(f64::MIN_POSITIVE)
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Classify(args) => cmd_classify(args),
        Command::Effective(args) => cmd_effective(args),
        Command::Cell(args) => cmd_cell(args),
        Command::Rates(args) => cmd_rates(args),
        Command::Asymptotics(args) => cmd_asymptotics(args),
        Command::Gallery(args) => cmd_gallery(args),
    }
}

fn cmd_classify(args: SpecArgs) -> Result<(), CliError> {
    let r = resolve(&args)?;
    let grid = PeriodicGrid::new(r.dim, r.nodes)?;
    let realized = realize_with_details(&r.spec, grid, &r.solver)?;
    let h = homogenize(realized.field(), &r.solver)?;
    let text = match r.format {
        OutputFormat::Json => {
            let mut doc = document(run_config_base("classify", &r));
            doc.push("result", homogenization_json(&h));
            if let Some(block) = construction_json(&realized, &h) {
                doc.push("construction", block);
            }
            doc.render() + "\n"
        }
        OutputFormat::Csv => {
            let mut csv = Csv::new(&["k", "l", "j", "value"]);
            for (k, l, j, value) in h.obstruction.entries() {
                csv.push_row(&[
                    (k + 1).to_string(),
                    (l + 1).to_string(),
                    (j + 1).to_string(),
                    format_float(value),
                ]);
            }
            csv.render()
        }
    };
    emit(&r.out, &text)
}

fn cmd_effective(args: SpecArgs) -> Result<(), CliError> {
    let r = resolve(&args)?;
    let grid = PeriodicGrid::new(r.dim, r.nodes)?;
    let realized = realize_with_details(&r.spec, grid, &r.solver)?;
    let a = realized.field();
    let measure = invariant_measure(a, &r.solver)?;
    let mut abar = SymMat::zeros(r.dim)?;
    for k in 0..r.dim {
        for l in k..r.dim {
            let avg = a.entry(k, l).zip_map(&measure.r, |x, y| x * y).integrate();
            abar.set(k, l, avg);
        }
    }
    let text = match r.format {
        OutputFormat::Json => {
            let mut m = Json::obj();
            m.push("residual", Json::Float(measure.residual));
            m.push("iterations", Json::Int(measure.iterations as i64));
            m.push("min", Json::Float(measure.r.min()));
            m.push("max", Json::Float(measure.r.max()));
            let mut doc = document(run_config_base("effective", &r));
            doc.push("effective_matrix", sym_mat_json(&abar));
            doc.push("measure", m);
            doc.render() + "\n"
        }
        OutputFormat::Csv => {
            let mut csv = Csv::new(&["i", "j", "value"]);
            for i in 0..r.dim {
                for j in 0..r.dim {
                    csv.push_row(&[
                        (i + 1).to_string(),
                        (j + 1).to_string(),
                        format_float(abar.get(i, j)),
                    ]);
                }
            }
            csv.render()
        }
    };
    emit(&r.out, &text)
}

fn cmd_cell(args: CellArgs) -> Result<(), CliError> {
    let r = resolve(&args.spec)?;
    let k = args.k.or(r.file.k).unwrap_or(1);
    let l = args.l.or(r.file.l).unwrap_or(1);
    if k == 0 || l == 0 || k > r.dim || l > r.dim {
        return Err(spec_err(format!(
            "corrector indices are 1-based and at most the dimension {}; got k={k} l={l}",
            r.dim
        )));
    }
    let grid = PeriodicGrid::new(r.dim, r.nodes)?;
    let realized = realize_with_details(&r.spec, grid, &r.solver)?;
    let a = realized.field();
    let measure = invariant_measure(a, &r.solver)?;
    let cells = solve_cell_problems(a, &measure, &r.solver)?;
    let v = cells.corrector(k - 1, l - 1);
    let mut rc = run_config_base("cell", &r);
    rc.push("k", Json::Int(k as i64));
    rc.push("l", Json::Int(l as i64));
    let text = match r.format {
        OutputFormat::Json => {
            let mut corrector = Json::obj();
            corrector.push("k", Json::Int(k as i64));
            corrector.push("l", Json::Int(l as i64));
            corrector.push("sup", Json::Float(v.max_abs()));
            corrector.push("effective_entry", Json::Float(cells.effective_matrix().get(k - 1, l - 1)));
            corrector.push("max_residual", Json::Float(cells.max_residual));
            corrector.push("iterations", Json::Int(cells.iterations as i64));
            let mut doc = document(rc);
            doc.push("corrector", corrector);
            doc.render() + "\n"
        }
        OutputFormat::Csv => {
            let mut header: Vec<String> = (1..=r.dim).map(|d| format!("y{d}")).collect();
            header.push("value".to_string());
            let cols: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
            let mut csv = Csv::new(&cols);
            for node in 0..grid.len() {
                let y = grid.coords(node);
                let mut row: Vec<String> =
                    y[..r.dim].iter().map(|&c| format_float(c)).collect();
                row.push(format_float(v.value(node)));
                csv.push_row(&row);
            }
            csv.render()
        }
    };
    emit(&r.out, &text)
}

fn parse_eps_list(src: &str) -> Result<Vec<u64>, CliError> {
    let mut denoms = Vec::new();
    for part in src.split(',') {
        let d: u64 = part
            .trim()
            .parse()
            .map_err(|_| spec_err(format!("epsilon denominators must be integers, got {part:?}")))?;
        if d == 0 {
            return Err(spec_err("epsilon denominators must be positive"));
        }
        denoms.push(d);
    }
    if denoms.is_empty() {
        return Err(spec_err("--eps needs at least one denominator"));
    }
    Ok(denoms)
}

fn parse_data(src: &str) -> Result<(usize, usize, usize), CliError> {
    let err = || {
        spec_err(format!(
            "data must look like cubic:k,l,j with 1-based indices, got {src:?}"
        ))
    };
    let rest = src.trim().strip_prefix("cubic:").ok_or_else(err)?;
    let parts: Vec<&str> = rest.split(',').collect();
    if parts.len() != 3 {
        return Err(err());
    }
    let mut idx = [0usize; 3];
    for (slot, part) in idx.iter_mut().zip(&parts) {
        let v: usize = part.trim().parse().map_err(|_| err())?;
        if v == 0 {
            return Err(spec_err("cubic data indices are 1-based"));
        }
        *slot = v - 1;
    }
    Ok((idx[0], idx[1], idx[2]))
}

fn parse_s_list(src: &str) -> Result<Vec<f64>, CliError> {
    let mut out = Vec::new();
    for part in src.split(',') {
        let v: f64 = part
            .trim()
            .parse()
            .map_err(|_| spec_err(format!("strengths must be numbers, got {part:?}")))?;
        out.push(v);
    }
    if out.is_empty() {
        return Err(spec_err("--s-list needs at least one strength"));
    }
    Ok(out)
}

fn cmd_rates(args: RatesArgs) -> Result<(), CliError> {
    let r = resolve(&args.spec)?;
    let denoms = match (&args.eps, &r.file.eps) {
        (Some(src), _) => parse_eps_list(src)?,
        (None, Some(list)) if !list.is_empty() => list.clone(),
        _ => vec![4, 8, 16, 32],
    };
    let ipp = args.ipp.or(r.file.ipp).unwrap_or(16);
    let data_src = args
        .data
        .clone()
        .or_else(|| r.file.data.clone())
        .unwrap_or_else(|| "cubic:1,1,1".to_string());
    let indices = parse_data(&data_src)?;

    let grid = PeriodicGrid::new(r.dim, r.nodes)?;
    let realized = realize_with_details(&r.spec, grid, &r.solver)?;
    let rate_cfg = RateConfig {
        epsilons: denoms.iter().map(|&d| 1.0 / d as f64).collect(),
        intervals_per_period: ipp,
        indices,
        solver: r.solver,
    };
    let study = run_rate_study(realized.field(), &rate_cfg)?;

    let mut rc = run_config_base("rates", &r);
    rc.push("eps", Json::Array(denoms.iter().map(|&d| Json::Int(d as i64)).collect()));
    rc.push("ipp", Json::Int(ipp as i64));
    rc.push(
        "data",
        Json::str(&format!("cubic:{},{},{}", indices.0 + 1, indices.1 + 1, indices.2 + 1)),
    );

    let text = match r.format {
        OutputFormat::Json => {
            let samples: Vec<Json> = study
                .samples
                .iter()
                .map(|s| {
                    let mut row = Json::obj();
                    row.push("epsilon", Json::Float(s.epsilon));
                    row.push("intervals", Json::Int(s.intervals as i64));
                    row.push("plain_error", Json::Float(s.plain_error));
                    row.push("corrected_error", Json::Float(s.corrected_error));
                    row.push("z_sup", Json::Float(s.z_sup));
                    row.push("iterations", Json::Int(s.oscillatory_iterations as i64));
                    row
                })
                .collect();
            let mut st = Json::obj();
            st.push(
                "classification",
                Json::str(study.homogenization.verdict.classification.as_str()),
            );
            st.push("max_abs_c", Json::Float(study.homogenization.obstruction.max_abs()));
            st.push("samples", Json::Array(samples));
            st.push("plain_slope", float_or_null(study.plain_slope));
            st.push("corrected_slope", float_or_null(study.corrected_slope));
            let mut doc = document(rc);
            doc.push("study", st);
            doc.render() + "\n"
        }
        OutputFormat::Csv => {
            let mut csv = Csv::new(&[
                "epsilon",
                "intervals",
                "plain_error",
                "corrected_error",
                "z_sup",
                "local_plain_slope",
                "local_corrected_slope",
            ]);
            for (i, s) in study.samples.iter().enumerate() {
                let (sl0, sl1) = if i == 0 {
                    (String::new(), String::new())
                } else {
                    let prev = &study.samples[i - 1];
                    (
                        local_slope(prev.epsilon, prev.plain_error, s.epsilon, s.plain_error),
                        local_slope(
                            prev.epsilon,
                            prev.corrected_error,
                            s.epsilon,
                            s.corrected_error,
                        ),
                    )
                };
                csv.push_row(&[
                    format_float(s.epsilon),
                    s.intervals.to_string(),
                    format_float(s.plain_error),
                    format_float(s.corrected_error),
                    format_float(s.z_sup),
                    sl0,
                    sl1,
                ]);
            }
            csv.render()
        }
    };
    emit(&r.out, &text)
}

/// Pairwise log-log slope between two samples; blank when undeterminable.
fn local_slope(eps_prev: f64, err_prev: f64, eps: f64, err: f64) -> String {
    if !(err_prev > 0.0 && err > 0.0 && eps_prev > 0.0 && eps > 0.0 && eps != eps_prev) {
        return String::new();
    }
    let slope = (err_prev / err).ln() / (eps_prev / eps).ln();
    if slope.is_finite() {
        format_float(slope)
    } else {
        String::new()
    }
}

fn cmd_asymptotics(args: AsymptoticsArgs) -> Result<(), CliError> {
    let file = load_config(&args.common.config)?;
    let nodes = args.common.nodes.or(file.nodes).unwrap_or(64);
    let solver = resolve_solver(&args.common, &file);
    let format = resolve_format(args.common.format, &file)?;
    let out = args.common.out.clone().or_else(|| file.out.as_ref().map(PathBuf::from));
    let a1 = args
        .a1
        .clone()
        .or_else(|| file.a1.clone())
        .unwrap_or_else(|| "1".to_string());
    let a2 = args
        .a2
        .clone()
        .or_else(|| file.a2.clone())
        .unwrap_or_else(|| "1+0.5*sin(2*pi*y1)*sin(2*pi*y2)".to_string());
    let strengths = match (&args.s_list, &file.s_list) {
        (Some(src), _) => parse_s_list(src)?,
        (None, Some(list)) if !list.is_empty() => list.clone(),
        _ => vec![10.0, 100.0, 1000.0],
    };

    let grid = PeriodicGrid::new(2, nodes)?;
    let study = run_asymptotic_study(&a1, &a2, &strengths, grid, &solver)?;

    let mut rc = Json::obj();
    rc.push("command", Json::str("asymptotics"));
    rc.push("a1", Json::str(&a1));
    rc.push("a2", Json::str(&a2));
    rc.push("s_list", Json::floats(&strengths));
    rc.push("n", Json::Int(2));
    rc.push("N", Json::Int(nodes as i64));
    rc.push("tol", Json::Float(solver.tol));
    rc.push("max_iter", Json::Int(solver.max_iter as i64));
    rc.push("format", Json::str(format.as_str()));
    rc.push("out", out_json(&out));

    let text = match format {
        OutputFormat::Json => {
            let samples: Vec<Json> = study
                .samples
                .iter()
                .map(|s| {
                    let mut row = Json::obj();
                    row.push("s", Json::Float(s.s));
                    row.push("l2_distance", Json::Float(s.l2_distance));
                    row.push("iterations", Json::Int(s.iterations as i64));
                    row
                })
                .collect();
            let first = study.samples.first().map(|s| s.l2_distance).unwrap_or(0.0);
            let last = study.samples.last().map(|s| s.l2_distance).unwrap_or(0.0);
            let mut st = Json::obj();
            st.push("samples", Json::Array(samples));
            st.push(
                "final_over_initial",
                if first > 0.0 { Json::Float(last / first) } else { Json::Null },
            );
            let mut doc = document(rc);
            doc.push("study", st);
            doc.render() + "\n"
        }
        OutputFormat::Csv => {
            let mut csv = Csv::new(&["s", "l2_distance", "iterations"]);
            for s in &study.samples {
                csv.push_row(&[
                    format_float(s.s),
                    format_float(s.l2_distance),
                    s.iterations.to_string(),
                ]);
            }
            csv.render()
        }
    };
    emit(&out, &text)
}

fn cmd_gallery(args: GalleryArgs) -> Result<(), CliError> {
    let file = load_config(&args.common.config)?;
    let dim = args.dim.or(file.n).unwrap_or(2);
    let format = resolve_format(args.common.format, &file)?;
    let out = args.common.out.clone().or_else(|| file.out.as_ref().map(PathBuf::from));

    // Instantiate every named spec at the requested dimension, skipping the
    // constructions that only exist in two dimensions.
    let entries: Vec<(&str, CoefficientSpec)> = default_gallery()
        .into_iter()
        .map(|(name, _)| name)
        .filter_map(|name| default_spec(name, dim).ok().map(|spec| (name, spec)))
        .collect();

    let mut rc = Json::obj();
    rc.push("command", Json::str("gallery"));
    rc.push("n", Json::Int(dim as i64));
    rc.push("format", Json::str(format.as_str()));
    rc.push("out", out_json(&out));

    let text = match format {
        OutputFormat::Json => {
            let items: Vec<Json> = entries
                .iter()
                .map(|(name, spec)| {
                    let mut e = Json::obj();
                    e.push("name", Json::str(name));
                    e.push("spec", spec_json(spec));
                    e
                })
                .collect();
            let mut doc = document(rc);
            doc.push("entries", Json::Array(items));
            doc.render() + "\n"
        }
        OutputFormat::Csv => {
            let mut csv = Csv::new(&["name", "variant", "spec"]);
            for (name, spec) in &entries {
                let value = serde_json::to_value(spec).expect("specs serialize infallibly");
                let variant = value
                    .get("variant")
                    .and_then(|v| v.as_str())
                    .unwrap_or("unknown")
                    .to_string();
                csv.push_row(&[name.to_string(), variant, value.to_string()]);
            }
            csv.render()
        }
    };
    emit(&out, &text)
}

