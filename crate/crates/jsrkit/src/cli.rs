//! File formats and subcommand drivers behind the `jsrkit` binary.
//!
//! Every command is a pure function of its inputs, flags, and seed: the JSON
//! report it produces is byte-identical across reruns except for the
//! `timings` section, and a fingerprint over the stable part is embedded so
//! callers can diff runs cheaply. Human-readable summaries go to stdout,
//! machine-readable errors to stderr, and exit codes follow one contract:
//! 0 success, 1 invalid input (including reducible families), 2 exhausted
//! search or iteration budgets.

use crate::linalg::{spectral_radius, Matrix, MatrixFamily, Word};
use crate::multi::{certify_jsr, CertifyConfig, CertifyOutcome};
use crate::norm::{
    build_barabanov, certify, irreducibility_check, BarabanovNorm, BuildFailure, BuildOutcome,
    Irreducibility, NormError,
};
use crate::polytope::{AlgorithmConfig, InvariantBody, PartialState, PolytopeError};
use crate::positive::{monotone_barabanov, monotone_certify, PositiveError};
use crate::render::{body_off, body_svg, RenderError};
use crate::search::SearchError;
use crate::trajectory::{
    classify_law, decay_certificate, max_growth_trajectory, GrowthClass, SwitchingLaw,
    TrajectoryError,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::hash_map::DefaultHasher;
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("family has a common invariant subspace; joint spectral radius not certifiable by this method")]
    Reducible(Vec<Vec<f64>>),
    #[error("budget exhausted: {0}")]
    Budget(String),
    #[error("no certificate found: {0}")]
    NotFound(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Polytope(#[from] PolytopeError),
    #[error(transparent)]
    Multi(#[from] crate::multi::MultiError),
    #[error(transparent)]
    Norm(#[from] NormError),
    #[error(transparent)]
    Positive(#[from] PositiveError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Linalg(#[from] crate::linalg::LinalgError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Budget(_) | CliError::NotFound(_) => 2,
            _ => 1,
        }
    }

    /// Machine-readable error document for stderr.
    pub fn to_json(&self) -> Value {
        let mut doc = json!({"error": self.to_string(), "exit": self.exit_code()});
        if let CliError::Reducible(basis) = self {
            doc["invariant_subspace_basis"] = json!(basis);
        }
        doc
    }
}

// ---------------------------------------------------------------------------
// Input format
// ---------------------------------------------------------------------------

/// A matrix family on disk: row-major square matrices plus interpretation
/// flags.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilySpec {
    pub matrices: Vec<Vec<Vec<f64>>>,
    /// Entries are nonnegative and the monotone pipeline applies.
    #[serde(default)]
    pub nonnegative: bool,
    /// Transpose every member before any computation.
    #[serde(default)]
    pub transpose_first: bool,
}

impl FamilySpec {
    pub fn from_path(path: &Path) -> Result<FamilySpec, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn family(&self) -> Result<MatrixFamily, CliError> {
        if self.matrices.is_empty() {
            return Err(CliError::Input("family needs at least one matrix".into()));
        }
        let mut members = Vec::with_capacity(self.matrices.len());
        for (k, rows) in self.matrices.iter().enumerate() {
            let d = rows.len();
            if d == 0 || rows.iter().any(|r| r.len() != d) {
                return Err(CliError::Input(format!("matrix {} is not square", k + 1)));
            }
            let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
            let m = Matrix::from_rows(&refs)?;
            members.push(if self.transpose_first { m.transpose() } else { m });
        }
        Ok(MatrixFamily::new(members)?)
    }
}

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

#[derive(Debug, Parser)]
#[command(
    name = "jsrkit",
    version,
    about = "Joint spectral radius certification via invariant polytopes"
)]
pub struct Cli {
    /// Worker cap for parallel sections (default: JSRKIT_THREADS or all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Certify the joint spectral radius of a family.
    Jsr(JsrArgs),
    /// Build an extremal norm with a sampling certificate.
    Norm(NormArgs),
    /// Classify the growth of a switching law against the certified optimum.
    ClassifyLaw(ClassifyLawArgs),
    /// Draw a stored body (SVG for d=2, OFF mesh for d=3).
    Render(RenderArgs),
    /// Time the pipeline on seeded random families.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PipelineOpts {
    /// Longest candidate word scanned.
    #[arg(long, default_value_t = 8)]
    pub max_len: usize,
    /// Strict-interiority margin for dropping hull points.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Polygonal resolution for ellipse membership.
    #[arg(long)]
    pub facets: Option<usize>,
    /// Iteration cap for the body growth loop.
    #[arg(long)]
    pub max_iter: Option<usize>,
}

impl PipelineOpts {
    pub fn certify_config(&self) -> CertifyConfig {
        let mut algorithm = AlgorithmConfig::default();
        if let Some(d) = self.delta {
            algorithm.delta = d;
        }
        if let Some(m) = self.facets {
            algorithm.facets_m = m;
        }
        if let Some(i) = self.max_iter {
            algorithm.max_iter = i;
        }
        CertifyConfig {
            max_len: self.max_len,
            algorithm,
            ..CertifyConfig::default()
        }
    }

    fn config_json(&self, cfg: &CertifyConfig) -> Value {
        json!({
            "max_len": cfg.max_len,
            "delta": cfg.algorithm.delta,
            "facets_m": cfg.algorithm.facets_m,
            "max_iter": cfg.algorithm.max_iter,
            "max_nodes": cfg.algorithm.max_nodes,
            "search_budget": cfg.search_budget,
            "restarts": cfg.restarts,
        })
    }
}

#[derive(Debug, Args)]
pub struct JsrArgs {
    /// Family JSON file.
    pub family: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineOpts,
    /// Write the full JSON report here ("-" for stdout).
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NormArgs {
    pub family: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineOpts,
    /// Use the monotone (nonnegative-orthant) construction.
    #[arg(long)]
    pub monotone: bool,
    /// Certification sample count.
    #[arg(long, default_value_t = 1000)]
    pub certify: usize,
    /// Sampling seed.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassifyLawArgs {
    pub family: PathBuf,
    /// Switching law, inline JSON or a file path:
    /// {"prefix":[...],"period":[...]} or {"sample":[...]}.
    #[arg(long)]
    pub law: String,
    /// Starting point as comma-separated coordinates; adds a per-trajectory
    /// maximal-growth verdict.
    #[arg(long)]
    pub x0: Option<String>,
    #[command(flatten)]
    pub pipeline: PipelineOpts,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Body JSON: bare document, a report containing `result.body`, or a
    /// norm document containing `body`.
    pub body: PathBuf,
    /// Overlay the polar body (dashed) on planar drawings.
    #[arg(long)]
    pub polar: bool,
    /// Output path; `.svg` draws, `.off` emits a mesh.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchNormalization {
    /// Scale every member to unit spectral norm.
    Norm,
    /// Scale every member to unit spectral radius.
    Spec,
    /// Leave samples as drawn.
    None,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated dimensions, e.g. 2,4,6.
    #[arg(long, default_value = "2,3,4")]
    pub dims: String,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, value_enum, default_value_t = BenchNormalization::Spec)]
    pub normalization: BenchNormalization,
    /// Draw nonnegative families and run the monotone pipeline.
    #[arg(long)]
    pub nonnegative: bool,
    /// Fraction of entries zeroed in nonnegative mode.
    #[arg(long, default_value_t = 0.0)]
    pub sparsity: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub pipeline: PipelineOpts,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct CommandOutput {
    pub report: Value,
    pub summary: String,
    pub exit: i32,
}

/// Hash of the serialized report with the volatile keys removed; two runs
/// with identical inputs produce identical fingerprints.
pub fn report_fingerprint(report: &Value) -> u64 {
    let mut stable = report.clone();
    if let Some(map) = stable.as_object_mut() {
        map.remove("timings");
        map.remove("fingerprint");
    }
    let mut h = DefaultHasher::new();
    stable.to_string().hash(&mut h);
    h.finish()
}

fn finish_report(mut report: Value, started: Instant) -> Value {
    let fp = report_fingerprint(&report);
    report["fingerprint"] = json!(format!("{fp:016x}"));
    report["timings"] = json!({"total_ms": started.elapsed().as_secs_f64() * 1e3});
    report
}

fn base_report(command: &str, args: Value, config: Value) -> Value {
    json!({
        "command": command,
        "args": args,
        "config": config,
        "versions": {"jsrkit": env!("CARGO_PKG_VERSION")},
        "warnings": [],
        "result": Value::Null,
    })
}

pub fn word_string(w: &Word) -> String {
    w.iter().map(|l| l.to_string()).collect()
}

fn partial_state_json(p: &PartialState) -> Value {
    json!({
        "status": "budget",
        "iterations": p.iterations,
        "alive": p.alive,
        "total_nodes": p.total_nodes,
        "nu_lower": p.nu_lower,
        "nu_upper": p.nu_upper,
    })
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn certify_family(
    family: &MatrixFamily,
    nonnegative: bool,
    cfg: &CertifyConfig,
) -> Result<CertifyOutcome, CliError> {
    if nonnegative {
        Ok(monotone_certify(family, cfg)?)
    } else {
        if let Irreducibility::CommonInvariantSubspace(basis) = irreducibility_check(family) {
            return Err(CliError::Reducible(
                basis.iter().map(|b| b.as_slice().to_vec()).collect(),
            ));
        }
        Ok(certify_jsr(family, cfg)?)
    }
}

pub fn cmd_jsr(args: &JsrArgs) -> Result<CommandOutput, CliError> {
    let started = Instant::now();
    let spec = FamilySpec::from_path(&args.family)?;
    let family = spec.family()?;
    let cfg = args.pipeline.certify_config();
    let mut report = base_report(
        "jsr",
        json!({"family": args.family.display().to_string(), "nonnegative": spec.nonnegative}),
        args.pipeline.config_json(&cfg),
    );
    let mut summary = String::new();

    // A single matrix needs no polytope: its joint spectral radius is its
    // spectral radius.
    if family.len() == 1 {
        let rho = spectral_radius(&family.members()[0], 1e-12)?;
        let _ = writeln!(summary, "rho = {rho:.12}");
        let _ = writeln!(summary, "dominant word(s): 1");
        report["result"] = json!({
            "status": "halted",
            "rho": rho,
            "words": ["1"],
            "generators": 0,
            "raw_generators": 0,
            "restarts_used": 0,
            "body": Value::Null,
        });
        return Ok(CommandOutput {
            report: finish_report(report, started),
            summary,
            exit: 0,
        });
    }

    match certify_family(&family, spec.nonnegative, &cfg)? {
        CertifyOutcome::Certified {
            body,
            raw_generators,
            restarts_used,
            ..
        } => {
            let words: Vec<String> = body.candidate_words.iter().map(word_string).collect();
            let _ = writeln!(summary, "rho = {:.12}", body.nu);
            let _ = writeln!(summary, "dominant word(s): {}", words.join(", "));
            let _ = writeln!(
                summary,
                "body: {:?}, {} generators ({} before pruning), {} iterations, mu = {}",
                body.kind,
                body.generators.len(),
                raw_generators,
                body.iterations,
                body.mu.map_or("n/a".into(), |m| format!("{m:.6}")),
            );
            report["result"] = json!({
                "status": "halted",
                "rho": body.nu,
                "words": words,
                "generators": body.generators.len(),
                "raw_generators": raw_generators,
                "restarts_used": restarts_used,
                "body": body.to_json(),
            });
            Ok(CommandOutput {
                report: finish_report(report, started),
                summary,
                exit: 0,
            })
        }
        CertifyOutcome::Budget(p) => {
            let _ = writeln!(
                summary,
                "budget exhausted after {} iterations; {:.12} <= rho <= {:.12}",
                p.iterations, p.nu_lower, p.nu_upper
            );
            report["result"] = partial_state_json(&p);
            Ok(CommandOutput {
                report: finish_report(report, started),
                summary,
                exit: 2,
            })
        }
        CertifyOutcome::NotFound { reason } => Err(CliError::NotFound(reason)),
    }
}

fn norm_warnings(norm: &BarabanovNorm) -> Vec<String> {
    let mut warnings = Vec::new();
    if norm.flags.rational_mod_pi {
        warnings.push(
            "dominant rotation is rational mod pi: infinitely many invariant bodies exist and \
             the extremal norm is not unique"
                .into(),
        );
    }
    if norm.source_body.candidate_words.len() >= 2 {
        warnings.push(format!(
            "{} tied dominant products: the norm depends on the balancing choice",
            norm.source_body.candidate_words.len()
        ));
    }
    warnings
}

pub fn cmd_norm(args: &NormArgs) -> Result<CommandOutput, CliError> {
    let started = Instant::now();
    let spec = FamilySpec::from_path(&args.family)?;
    let family = spec.family()?;
    let cfg = args.pipeline.certify_config();
    let monotone = args.monotone || spec.nonnegative;
    let mut report = base_report(
        "norm",
        json!({
            "family": args.family.display().to_string(),
            "monotone": monotone,
            "certify": args.certify,
            "seed": args.seed,
        }),
        args.pipeline.config_json(&cfg),
    );
    let mut summary = String::new();

    let outcome = if monotone {
        monotone_barabanov(&family, &cfg)?
    } else {
        build_barabanov(&family, &cfg)?
    };
    let norm = match outcome {
        BuildOutcome::Built(norm) => norm,
        BuildOutcome::Failed(BuildFailure::Reducible(basis)) => {
            return Err(CliError::Reducible(
                basis.iter().map(|b| b.as_slice().to_vec()).collect(),
            ))
        }
        BuildOutcome::Failed(BuildFailure::Budget(p)) => {
            report["result"] = partial_state_json(&p);
            let _ = writeln!(
                summary,
                "budget exhausted; {:.12} <= rho <= {:.12}",
                p.nu_lower, p.nu_upper
            );
            return Ok(CommandOutput {
                report: finish_report(report, started),
                summary,
                exit: 2,
            });
        }
        BuildOutcome::Failed(BuildFailure::NoCertificate(reason)) => {
            return Err(CliError::NotFound(reason))
        }
    };

    let warnings = norm_warnings(&norm);
    report["warnings"] = json!(warnings);
    let certificate = certify(&norm, &family, args.certify.max(1), args.seed)?;
    let _ = writeln!(summary, "rho = {:.12}", norm.rho);
    let _ = writeln!(
        summary,
        "norm: {} with {} functionals; unique: {}",
        match norm.kind {
            crate::norm::NormKind::PiecewiseLinear(_) => "piecewise linear",
            crate::norm::NormKind::PiecewiseQuadratic(_) => "piecewise quadratic",
            crate::norm::NormKind::MonotoneLinear(_) => "monotone linear",
        },
        norm.functional_count(),
        norm.flags.unique,
    );
    let _ = writeln!(
        summary,
        "certificate: {} samples, max residual {:.3e}",
        certificate.samples, certificate.max_residual
    );
    for w in &warnings {
        let _ = writeln!(summary, "warning: {w}");
    }
    report["result"] = json!({
        "status": "built",
        "norm": norm.to_json(),
        "certificate": {
            "samples": certificate.samples,
            "max_residual": certificate.max_residual,
            "rho": certificate.rho,
            "delta_used": certificate.delta_used,
        },
    });
    Ok(CommandOutput {
        report: finish_report(report, started),
        summary,
        exit: 0,
    })
}

fn parse_law(raw: &str) -> Result<SwitchingLaw, CliError> {
    let text = if raw.trim_start().starts_with('{') {
        raw.to_string()
    } else {
        std::fs::read_to_string(raw).map_err(|e| CliError::Input(format!("{raw}: {e}")))?
    };
    let doc: Value = serde_json::from_str(&text)?;
    Ok(SwitchingLaw::from_json(&doc)?)
}

fn parse_x0(raw: &str, dim: usize) -> Result<DVector<f64>, CliError> {
    let coords: Result<Vec<f64>, _> = raw.split(',').map(|t| t.trim().parse::<f64>()).collect();
    let coords = coords.map_err(|e| CliError::Input(format!("bad --x0: {e}")))?;
    if coords.len() != dim {
        return Err(CliError::Input(format!(
            "--x0 has {} coordinates, family dimension is {dim}",
            coords.len()
        )));
    }
    Ok(DVector::from_vec(coords))
}

pub fn cmd_classify_law(args: &ClassifyLawArgs) -> Result<CommandOutput, CliError> {
    let started = Instant::now();
    let spec = FamilySpec::from_path(&args.family)?;
    let family = spec.family()?;
    let law = parse_law(&args.law)?;
    let cfg = args.pipeline.certify_config();
    let mut report = base_report(
        "classify-law",
        json!({
            "family": args.family.display().to_string(),
            "law": law.to_json(),
            "x0": args.x0,
        }),
        args.pipeline.config_json(&cfg),
    );
    let mut summary = String::new();
    let mut warnings: Vec<String> = Vec::new();

    let body = match certify_family(&family, spec.nonnegative, &cfg)? {
        CertifyOutcome::Certified { body, .. } => body,
        CertifyOutcome::Budget(p) => {
            report["result"] = partial_state_json(&p);
            let _ = writeln!(summary, "budget exhausted before classification");
            return Ok(CommandOutput {
                report: finish_report(report, started),
                summary,
                exit: 2,
            });
        }
        CertifyOutcome::NotFound { reason } => return Err(CliError::NotFound(reason)),
    };

    let decay = match decay_certificate(&body) {
        Ok(c) => Some(c),
        Err(TrajectoryError::NoDeadNodes) => {
            warnings.push("no decay certificate: the body run recorded no interior points".into());
            None
        }
        Err(e) => return Err(e.into()),
    };
    let verdict = classify_law(&law, &body.candidate_words, decay.as_ref());
    let class = match verdict.class {
        GrowthClass::FastestGrowth => "FastestGrowth",
        GrowthClass::DecaysToZero => "DecaysToZero",
        GrowthClass::Unknown(_) => "Unknown",
    };
    let _ = writeln!(summary, "law class: {class} ({})", verdict.witness);
    if let Some(rate) = verdict.decay_rate {
        let _ = writeln!(summary, "per-step decay rate <= {rate:.9}");
    }

    let mut trajectory = Value::Null;
    if let Some(x0_raw) = &args.x0 {
        let x0 = parse_x0(x0_raw, family.dim())?;
        match max_growth_trajectory(&family, &law, &x0, 1e-9) {
            Ok(v) => {
                let _ = writeln!(
                    summary,
                    "trajectory from x0: {} (overlap {:.3e}{})",
                    if v.maximal {
                        "achieves the maximal growth rate"
                    } else {
                        "misses the leading direction; grows strictly slower"
                    },
                    v.overlap,
                    if v.complex_extension {
                        ", complex leading pair"
                    } else {
                        ""
                    },
                );
                trajectory = json!({
                    "maximal": v.maximal,
                    "overlap": v.overlap,
                    "complex_extension": v.complex_extension,
                });
            }
            Err(TrajectoryError::NotPeriodic) => {
                warnings.push("finite sample law: no per-trajectory verdict".into());
            }
            Err(e) => return Err(e.into()),
        }
    }

    for w in &warnings {
        let _ = writeln!(summary, "warning: {w}");
    }
    report["warnings"] = json!(warnings);
    report["result"] = json!({
        "class": class,
        "witness": verdict.witness,
        "decay_rate": verdict.decay_rate,
        "decay_certificate": decay.map(|c| json!({"mu": c.mu, "block_len": c.block_len})),
        "trajectory": trajectory,
        "certified_words": body.candidate_words.iter().map(word_string).collect::<Vec<_>>(),
        "rho": body.nu,
    });
    Ok(CommandOutput {
        report: finish_report(report, started),
        summary,
        exit: 0,
    })
}

/// Accept a bare body document, a run report with `result.body`, or a norm
/// document with an embedded `body`.
pub fn load_body(doc: &Value) -> Result<InvariantBody, CliError> {
    let candidate = if doc.get("generators").is_some() {
        doc
    } else if let Some(b) = doc.pointer("/result/body") {
        b
    } else if let Some(b) = doc.pointer("/result/norm/body") {
        b
    } else if let Some(b) = doc.get("body") {
        b
    } else {
        return Err(CliError::Input(
            "no body found: expected a body document, a jsr report, or a norm document".into(),
        ));
    };
    Ok(InvariantBody::from_json(candidate)?)
}

pub fn cmd_render(args: &RenderArgs) -> Result<CommandOutput, CliError> {
    let started = Instant::now();
    let text = std::fs::read_to_string(&args.body)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.body.display())))?;
    let doc: Value = serde_json::from_str(&text)?;
    let body = load_body(&doc)?;
    let ext = args
        .out
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    let rendered = match ext.as_str() {
        "svg" => body_svg(&body, args.polar)?,
        "off" => body_off(&body)?,
        other => {
            return Err(CliError::Input(format!(
                "unsupported output extension {other:?}; use .svg or .off"
            )))
        }
    };
    std::fs::write(&args.out, &rendered)?;
    let mut report = base_report(
        "render",
        json!({
            "body": args.body.display().to_string(),
            "out": args.out.display().to_string(),
            "polar": args.polar,
        }),
        json!({}),
    );
    report["result"] = json!({
        "format": ext,
        "bytes": rendered.len(),
        "dim": body.dim,
        "generators": body.generators.len(),
    });
    let summary = format!(
        "wrote {} ({} bytes, {}d body with {} generators)\n",
        args.out.display(),
        rendered.len(),
        body.dim,
        body.generators.len(),
    );
    Ok(CommandOutput {
        report: finish_report(report, started),
        summary,
        exit: 0,
    })
}

// ---------------------------------------------------------------------------
// Bench
// ---------------------------------------------------------------------------

fn splitmix(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn random_pair(
    dim: usize,
    trial_seed: u64,
    normalization: BenchNormalization,
    nonnegative: bool,
    sparsity: f64,
) -> Result<MatrixFamily, CliError> {
    if nonnegative {
        return Ok(crate::positive::random_nonnegative_family(
            dim, 2, sparsity, trial_seed,
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    let mut members = Vec::with_capacity(2);
    for _ in 0..2 {
        loop {
            let rows: Vec<Vec<f64>> = (0..dim)
                .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
                .collect();
            let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
            let m = Matrix::from_rows(&refs)?;
            let scale = match normalization {
                BenchNormalization::Norm => m.as_dmatrix().clone().svd(false, false).singular_values[0],
                BenchNormalization::Spec => spectral_radius(&m, 1e-12)?,
                BenchNormalization::None => 1.0,
            };
            if scale > 1e-9 {
                let refs: Vec<Vec<f64>> = rows
                    .iter()
                    .map(|r| r.iter().map(|x| x / scale).collect())
                    .collect();
                let refs2: Vec<&[f64]> = refs.iter().map(|r| r.as_slice()).collect();
                members.push(Matrix::from_rows(&refs2)?);
                break;
            }
        }
    }
    Ok(MatrixFamily::new(members)?)
}

fn median(sorted: &mut [f64]) -> f64 {
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if sorted.is_empty() {
        return f64::NAN;
    }
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub fn cmd_bench(args: &BenchArgs) -> Result<CommandOutput, CliError> {
    let started = Instant::now();
    let dims: Result<Vec<usize>, _> = args
        .dims
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect();
    let dims = dims.map_err(|e| CliError::Input(format!("bad --dims: {e}")))?;
    if dims.is_empty() || args.trials == 0 {
        return Err(CliError::Input("need at least one dimension and one trial".into()));
    }
    if !(0.0..1.0).contains(&args.sparsity) {
        return Err(CliError::Input("--sparsity must be in [0,1)".into()));
    }
    let cfg = args.pipeline.certify_config();
    let mut report = base_report(
        "bench",
        json!({
            "dims": dims,
            "trials": args.trials,
            "normalization": format!("{:?}", args.normalization).to_lowercase(),
            "nonnegative": args.nonnegative,
            "sparsity": args.sparsity,
            "seed": args.seed,
        }),
        args.pipeline.config_json(&cfg),
    );

    let mut summary = String::new();
    let _ = writeln!(
        summary,
        "{:>5} {:>7} {:>9} {:>12} {:>10} {:>12}",
        "dim", "trials", "halted", "median ms", "median #V", "median rho"
    );
    let mut rows = Vec::new();
    let mut timing_rows = Vec::new();
    for &dim in &dims {
        let mut times = Vec::new();
        let mut vertices = Vec::new();
        let mut rhos = Vec::new();
        let mut halted = 0usize;
        let mut trial_results = Vec::new();
        for trial in 0..args.trials {
            let trial_seed = splitmix(
                args.seed ^ (dim as u64).wrapping_mul(0x100000001b3) ^ (trial as u64) << 17,
            );
            let family = random_pair(
                dim,
                trial_seed,
                args.normalization,
                args.nonnegative,
                args.sparsity,
            )?;
            let t = Instant::now();
            let outcome = certify_family(&family, args.nonnegative, &cfg);
            let elapsed_ms = t.elapsed().as_secs_f64() * 1e3;
            times.push(elapsed_ms);
            match outcome {
                Ok(CertifyOutcome::Certified { body, .. }) => {
                    halted += 1;
                    vertices.push(body.generators.len() as f64);
                    rhos.push(body.nu);
                    trial_results.push(json!({
                        "trial": trial,
                        "status": "halted",
                        "rho": body.nu,
                        "vertices": body.generators.len(),
                    }));
                }
                Ok(CertifyOutcome::Budget(p)) => {
                    trial_results.push(json!({
                        "trial": trial,
                        "status": "budget",
                        "nu_lower": p.nu_lower,
                        "nu_upper": p.nu_upper,
                    }));
                }
                Ok(CertifyOutcome::NotFound { reason }) => {
                    trial_results.push(json!({"trial": trial, "status": "not_found", "reason": reason}));
                }
                Err(CliError::Reducible(_)) => {
                    trial_results.push(json!({"trial": trial, "status": "reducible"}));
                }
                Err(e) => return Err(e),
            }
        }
        let med_ms = median(&mut times);
        let med_v = median(&mut vertices);
        let med_rho = median(&mut rhos);
        let _ = writeln!(
            summary,
            "{:>5} {:>7} {:>8}% {:>12.2} {:>10} {:>12.6}",
            dim,
            args.trials,
            100 * halted / args.trials,
            med_ms,
            if med_v.is_nan() { "-".into() } else { format!("{med_v:.0}") },
            med_rho,
        );
        rows.push(json!({
            "dim": dim,
            "trials": args.trials,
            "halted": halted,
            "median_vertices": if med_v.is_nan() { Value::Null } else { json!(med_v) },
            "median_rho": if med_rho.is_nan() { Value::Null } else { json!(med_rho) },
            "results": trial_results,
        }));
        timing_rows.push(json!({"dim": dim, "median_ms": med_ms}));
    }
    report["result"] = json!({"rows": rows});
    let mut report = finish_report(report, started);
    report["timings"]["per_dim"] = json!(timing_rows);
    Ok(CommandOutput {
        report,
        summary,
        exit: 0,
    })
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

fn setup_threads(flag: Option<usize>) {
    let n = flag.or_else(|| {
        std::env::var("JSRKIT_THREADS")
            .ok()
            .and_then(|s| s.parse().ok())
    });
    if let Some(n) = n {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

fn emit(out: &CommandOutput, json_target: Option<&PathBuf>) -> Result<(), CliError> {
    print!("{}", out.summary);
    if let Some(path) = json_target {
        let text = serde_json::to_string_pretty(&out.report)?;
        if path.as_os_str() == "-" {
            println!("{text}");
        } else {
            std::fs::write(path, text)?;
        }
    }
    Ok(())
}

pub fn run(cli: Cli) -> i32 {
    setup_threads(cli.threads);
    let result = match &cli.command {
        Command::Jsr(a) => cmd_jsr(a).map(|o| (o, a.json.clone())),
        Command::Norm(a) => cmd_norm(a).map(|o| (o, a.json.clone())),
        Command::ClassifyLaw(a) => cmd_classify_law(a).map(|o| (o, a.json.clone())),
        Command::Render(a) => cmd_render(a).map(|o| (o, None)),
        Command::Bench(a) => cmd_bench(a).map(|o| (o, a.json.clone())),
    };
    match result {
        Ok((out, json_target)) => {
            if let Err(e) = emit(&out, json_target.as_ref()) {
                eprintln!("{}", e.to_json());
                return e.exit_code();
            }
            out.exit
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_family(dir: &Path, name: &str, spec: &Value) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, spec.to_string()).unwrap();
        p
    }

    fn planar_spec() -> Value {
        json!({"matrices": [[[2.0, -2.0], [1.0, 2.0]], [[1.0, 2.0], [-1.0, -3.0]]]})
    }

    #[test]
    fn family_spec_validation() {
        let bad: FamilySpec =
            serde_json::from_value(json!({"matrices": [[[1.0, 2.0]]]})).unwrap();
        assert!(matches!(bad.family(), Err(CliError::Input(_))));
        let empty: FamilySpec = serde_json::from_value(json!({"matrices": []})).unwrap();
        assert!(matches!(empty.family(), Err(CliError::Input(_))));

        let spec: FamilySpec = serde_json::from_value(planar_spec()).unwrap();
        let fam = spec.family().unwrap();
        assert_eq!(fam.dim(), 2);
        let transposed: FamilySpec = serde_json::from_value(json!({
            "matrices": [[[2.0, -2.0], [1.0, 2.0]]],
            "transpose_first": true,
        }))
        .unwrap();
        let t = transposed.family().unwrap();
        assert_eq!(t.members()[0].as_dmatrix()[(0, 1)], 1.0);
    }

    #[test]
    fn jsr_command_certifies_planar_pair() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_family(dir.path(), "fam.json", &planar_spec());
        let out = cmd_jsr(&JsrArgs {
            family: path,
            pipeline: PipelineOpts {
                max_len: 8,
                delta: None,
                facets: None,
                max_iter: None,
            },
            json: None,
        })
        .unwrap();
        assert_eq!(out.exit, 0);
        assert!(out.summary.contains("dominant word(s): 1112"));
        let rho = out.report["result"]["rho"].as_f64().unwrap();
        assert!((rho - (24.0 + 792.0f64.sqrt()).powf(0.25)).abs() < 1e-9);
        assert_eq!(out.report["result"]["generators"], 5);
    }

    #[test]
    fn jsr_command_rejects_reducible_family() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_family(
            dir.path(),
            "fam.json",
            &json!({"matrices": [[[2.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, 3.0]]]}),
        );
        let err = cmd_jsr(&JsrArgs {
            family: path,
            pipeline: PipelineOpts {
                max_len: 4,
                delta: None,
                facets: None,
                max_iter: None,
            },
            json: None,
        })
        .unwrap_err();
        assert_eq!(err.exit_code(), 1);
        let doc = err.to_json();
        assert!(doc["invariant_subspace_basis"].is_array());
    }

    #[test]
    fn single_matrix_trivial_radius() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_family(
            dir.path(),
            "fam.json",
            &json!({"matrices": [[[2.0, 0.0], [0.0, 2.0]]]}),
        );
        let out = cmd_jsr(&JsrArgs {
            family: path,
            pipeline: PipelineOpts {
                max_len: 3,
                delta: None,
                facets: None,
                max_iter: None,
            },
            json: None,
        })
        .unwrap();
        assert_eq!(out.exit, 0);
        let rho = out.report["result"]["rho"].as_f64().unwrap();
        assert!((rho - 2.0).abs() < 1e-12);
        assert_eq!(out.report["result"]["words"][0], "1");
    }

    #[test]
    fn reports_are_reproducible_minus_timings() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_family(dir.path(), "fam.json", &planar_spec());
        let args = || JsrArgs {
            family: path.clone(),
            pipeline: PipelineOpts {
                max_len: 6,
                delta: None,
                facets: None,
                max_iter: None,
            },
            json: None,
        };
        let a = cmd_jsr(&args()).unwrap();
        let b = cmd_jsr(&args()).unwrap();
        assert_eq!(a.report["fingerprint"], b.report["fingerprint"]);
        assert_eq!(
            report_fingerprint(&a.report),
            report_fingerprint(&b.report)
        );
        let mut sa = a.report.clone();
        let mut sb = b.report.clone();
        sa.as_object_mut().unwrap().remove("timings");
        sb.as_object_mut().unwrap().remove("timings");
        assert_eq!(sa.to_string(), sb.to_string());
    }

    #[test]
    fn norm_command_emits_certificate_and_warnings() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_family(dir.path(), "fam.json", &planar_spec());
        let out = cmd_norm(&NormArgs {
            family: path,
            pipeline: PipelineOpts {
                max_len: 8,
                delta: None,
                facets: None,
                max_iter: None,
            },
            monotone: false,
            certify: 500,
            seed: 7,
            json: None,
        })
        .unwrap();
        assert_eq!(out.exit, 0);
        let res = &out.report["result"];
        assert_eq!(res["norm"]["kind"], "PiecewiseLinear");
        assert_eq!(res["norm"]["functionals"].as_array().unwrap().len(), 10);
        assert!(res["certificate"]["max_residual"].as_f64().unwrap() <= 1e-6);
        assert!(out.report["warnings"].as_array().unwrap().is_empty());

        // The pure rotation pair carries the rational-angle warning.
        let rot = write_family(
            dir.path(),
            "rot.json",
            &json!({"matrices": [
                [[0.0, 1.0], [-1.0, 0.0]],
                [[0.890, 0.646], [-0.129, -0.178]],
            ]}),
        );
        let out = cmd_norm(&NormArgs {
            family: rot,
            pipeline: PipelineOpts {
                max_len: 6,
                delta: None,
                facets: None,
                max_iter: None,
            },
            monotone: false,
            certify: 200,
            seed: 7,
            json: None,
        })
        .unwrap();
        assert_eq!(out.report["result"]["norm"]["kind"], "PiecewiseQuadratic");
        assert!(!out.report["warnings"].as_array().unwrap().is_empty());
    }

    #[test]
    fn classify_law_command_full_loop() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_family(dir.path(), "fam.json", &planar_spec());
        let mk = |law: &str, x0: Option<&str>| ClassifyLawArgs {
            family: path.clone(),
            law: law.into(),
            x0: x0.map(String::from),
            pipeline: PipelineOpts {
                max_len: 8,
                delta: None,
                facets: None,
                max_iter: None,
            },
            json: None,
        };
        let fast = cmd_classify_law(&mk(r#"{"prefix":[2],"period":[1,1,1,2]}"#, Some("1,0")))
            .unwrap();
        assert_eq!(fast.report["result"]["class"], "FastestGrowth");
        assert_eq!(fast.report["result"]["trajectory"]["maximal"], true);

        let slow = cmd_classify_law(&mk(r#"{"period":[1,2]}"#, None)).unwrap();
        assert_eq!(slow.report["result"]["class"], "DecaysToZero");
        assert!(slow.report["result"]["decay_rate"].as_f64().unwrap() < 1.0);

        let finite = cmd_classify_law(&mk(r#"{"sample":[1,2,1]}"#, None)).unwrap();
        assert_eq!(finite.report["result"]["class"], "Unknown");
    }

    #[test]
    fn render_command_writes_svg_and_off() {
        let dir = tempfile::tempdir().unwrap();
        let fam = write_family(dir.path(), "fam.json", &planar_spec());
        let report_path = dir.path().join("report.json");
        let out = cmd_jsr(&JsrArgs {
            family: fam,
            pipeline: PipelineOpts {
                max_len: 8,
                delta: None,
                facets: None,
                max_iter: None,
            },
            json: Some(report_path.clone()),
        })
        .unwrap();
        std::fs::write(
            &report_path,
            serde_json::to_string_pretty(&out.report).unwrap(),
        )
        .unwrap();

        let svg_path = dir.path().join("body.svg");
        let rendered = cmd_render(&RenderArgs {
            body: report_path.clone(),
            polar: true,
            out: svg_path.clone(),
        })
        .unwrap();
        assert_eq!(rendered.exit, 0);
        let svg = std::fs::read_to_string(&svg_path).unwrap();
        assert!(svg.starts_with("<?xml"));
        assert_eq!(svg.matches(r#"class="root""#).count(), 4);

        let bad = cmd_render(&RenderArgs {
            body: report_path,
            polar: false,
            out: dir.path().join("body.png"),
        });
        assert!(matches!(bad, Err(CliError::Input(_))));
    }

    #[test]
    fn bench_command_is_deterministic() {
        let mk = || BenchArgs {
            dims: "2".into(),
            trials: 2,
            normalization: BenchNormalization::Spec,
            nonnegative: false,
            sparsity: 0.0,
            seed: 11,
            pipeline: PipelineOpts {
                max_len: 4,
                delta: None,
                facets: None,
                max_iter: None,
            },
            json: None,
        };
        let a = cmd_bench(&mk()).unwrap();
        let b = cmd_bench(&mk()).unwrap();
        assert_eq!(a.report["fingerprint"], b.report["fingerprint"]);
        assert_eq!(a.report["result"], b.report["result"]);
        assert!(a.summary.contains("median"));
    }

    #[test]
    fn bench_nonnegative_mode() {
        let out = cmd_bench(&BenchArgs {
            dims: "6".into(),
            trials: 2,
            normalization: BenchNormalization::None,
            nonnegative: true,
            sparsity: 0.3,
            seed: 3,
            pipeline: PipelineOpts {
                max_len: 6,
                delta: None,
                facets: None,
                max_iter: None,
            },
            json: None,
        })
        .unwrap();
        let row = &out.report["result"]["rows"][0];
        assert_eq!(row["halted"], 2);
        assert!(row["median_vertices"].as_f64().unwrap() >= 1.0);
    }

    #[test]
    fn law_parsing_accepts_inline_and_file() {
        let dir = tempfile::tempdir().unwrap();
        let inline = parse_law(r#"{"period":[1,2]}"#).unwrap();
        let p = dir.path().join("law.json");
        std::fs::write(&p, r#"{"period":[1,2]}"#).unwrap();
        let from_file = parse_law(p.to_str().unwrap()).unwrap();
        assert_eq!(inline.to_json(), from_file.to_json());
        assert!(parse_law("/nonexistent/law.json").is_err());
    }
}
