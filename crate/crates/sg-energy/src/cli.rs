//! Command-line front end. One subcommand per pipeline stage; every output
//! file opens with a metadata header carrying the tool version and the full
//! run configuration, so a file is reproducible from its own first lines.
//! Wall time is reported on stderr and never written into the file, keeping
//! repeated runs byte-identical.

use std::env;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::distribution::{
    collect_distribution, enumerate_rows, fold_theta_thirds, montecarlo_convergence,
    EnumerationPlan, MonteCarloConfig, WeightedHistogram, WordMeasure, DEFAULT_LEAF_CAP,
    DEFAULT_THETA_BINS, DEFAULT_THIRD_BINS,
};
use crate::energy::{polar, EnergyModel, Word, EXACT_LEVEL_CAP, EXACT_LEVEL_HARD_CAP};
use crate::error::{Result, SgError};
use crate::exact::ratio_string;
use crate::harmonic::check_invertibility;
use crate::mat3::dot3;
use crate::verify::{
    run_check, VerifyParams, DEFAULT_DET_LENGTH, DEFAULT_DET_SAMPLES, DEFAULT_SEED,
    DEFAULT_VERIFY_DEPTH,
};
use crate::VERSION;

pub const ENV_SEED: &str = "SG_ENERGY_SEED";
pub const ENV_THREADS: &str = "SG_ENERGY_THREADS";

/// Schema tag written into every metadata header; bump on any change to the
/// emitted columns or JSON fields.
pub const SCHEMA_VERSION: u32 = 1;

/// Named in the metadata of every seeded run. Draws come from ChaCha8 with
/// the stream id keyed to the consuming check or sample index, so adding or
/// reordering consumers never shifts anyone else's randomness.
pub const RNG_DESCRIPTION: &str = "chacha8, streams keyed by check name and sample index";

#[derive(Parser)]
#[command(
    name = "sg-energy",
    version,
    about = "Harmonic structures and energy-coefficient statistics on level-l gaskets"
)]
struct TopCli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Derive the harmonic structure for one level and report it as JSON.
    Structure(StructureArgs),
    /// Coefficient readout for a single word.
    Coeffs(CoeffsArgs),
    /// Run the verification checks and emit their reports as JSON.
    Verify(VerifyArgs),
    /// Stream every depth-m word with its coefficient vector and weight.
    Enumerate(EnumerateArgs),
    /// Binned angular or radial distribution over all depth-m words.
    Histogram(HistogramArgs),
    /// Sample infinite words and report per-length quantiles of |sum b^2 - 1/2|.
    Montecarlo(McArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Exact,
    Float,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MeasureArg {
    /// Every symbol equally likely: weight (#S)^-|w|.
    Uniform,
    /// Cell weight nu(K_w); sampling conditions each letter on the path.
    Nu,
}

impl MeasureArg {
    fn to_measure(self) -> WordMeasure {
        match self {
            MeasureArg::Uniform => WordMeasure::Uniform,
            MeasureArg::Nu => WordMeasure::NuWeighted,
        }
    }

    fn label(self) -> &'static str {
        match self {
            MeasureArg::Uniform => "uniform",
            MeasureArg::Nu => "nu",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RangeArg {
    /// The whole circle (-pi, pi].
    Full,
    /// Folded onto (-pi/3, pi/3] by the threefold symmetry.
    Third,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum QuantityArg {
    /// Angular position of the coefficient vector.
    Theta,
    /// Distance from the barycenter, bounded by 1/sqrt(6).
    Radius,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum JsonFormat {
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CsvFormat {
    Csv,
}

#[derive(Args)]
struct StructureArgs {
    #[arg(long)]
    level: u32,
    /// Backend override; by default exact arithmetic is used up to the
    /// certification cap and the float backend beyond it.
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: JsonFormat,
}

#[derive(Args)]
struct CoeffsArgs {
    #[arg(long)]
    level: u32,
    /// Word as 1-based cell numbers separated by commas or dashes;
    /// empty or "e" is the root.
    #[arg(long, default_value = "e")]
    word: String,
    /// Boundary values v1,v2,v3 of one harmonic function; the coefficients
    /// then use that single function in place of the frame average.
    #[arg(long)]
    f: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: CsvFormat,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    level: u32,
    #[arg(long, default_value_t = DEFAULT_VERIFY_DEPTH)]
    depth: u32,
    /// Defaults to the SG_ENERGY_SEED environment variable, then a fixed seed.
    #[arg(long)]
    seed: Option<u64>,
    /// "all" or one named check (operator, lemmaA, powerlimit, thmB, bhs1,
    /// irr, detratio, density, sumsq).
    #[arg(long, default_value = "all")]
    check: String,
    /// Sample count for the det-ratio check.
    #[arg(long, default_value_t = DEFAULT_DET_SAMPLES)]
    samples: usize,
    /// Word length for the det-ratio check.
    #[arg(long, default_value_t = DEFAULT_DET_LENGTH)]
    length: usize,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: JsonFormat,
}

#[derive(Args)]
struct EnumerateArgs {
    #[arg(long)]
    level: u32,
    #[arg(long)]
    depth: u32,
    #[arg(long, value_enum, default_value = "uniform")]
    measure: MeasureArg,
    /// Refuse enumerations larger than this many leaves.
    #[arg(long, default_value_t = DEFAULT_LEAF_CAP)]
    max_leaves: u64,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: CsvFormat,
}

#[derive(Args)]
struct HistogramArgs {
    #[arg(long)]
    level: u32,
    #[arg(long)]
    depth: u32,
    /// Output bin count; defaults to 6000 on the full circle and 2000 on the
    /// folded third.
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long, value_enum)]
    range: Option<RangeArg>,
    #[arg(long, value_enum, default_value = "uniform")]
    measure: MeasureArg,
    #[arg(long, value_enum, default_value = "theta")]
    quantity: QuantityArg,
    #[arg(long, default_value_t = DEFAULT_LEAF_CAP)]
    max_leaves: u64,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: CsvFormat,
}

#[derive(Args)]
struct McArgs {
    #[arg(long, default_value_t = 2)]
    level: u32,
    #[arg(long, default_value_t = DEFAULT_DET_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = DEFAULT_DET_LENGTH)]
    length: usize,
    /// Defaults to the SG_ENERGY_SEED environment variable, then a fixed seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "uniform")]
    measure: MeasureArg,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: CsvFormat,
}

/// Everything that determines the bytes of one output. Serialized verbatim
/// into the metadata header; the output path itself is where the file lives,
/// not part of what it contains, so it is left out.
#[derive(Serialize, Default)]
struct RunConfig {
    command: &'static str,
    level: u32,
    backend: &'static str,
    format: &'static str,
    schema: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    depth: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    word: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    f: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    check: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    length: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bins: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    range: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    measure: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    quantity: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_leaves: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rng: Option<&'static str>,
}

impl RunConfig {
    fn header(&self) -> String {
        let body = serde_json::to_string(self).expect("config serializes");
        format!("# sg-energy {VERSION}\n# config: {body}\n")
    }
}

pub fn run<I>(args: I) -> i32
where
    I: IntoIterator<Item = String>,
{
    let cli = match TopCli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let start = Instant::now();
    let outcome = dispatch(cli.cmd);
    match outcome {
        Ok(code) => {
            eprintln!("wall time {:.3}s", start.elapsed().as_secs_f64());
            code
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<i32> {
    match cmd {
        Cmd::Structure(a) => {
            let text = cmd_structure(&a)?;
            emit(&a.out, &text)?;
            Ok(0)
        }
        Cmd::Coeffs(a) => {
            let text = cmd_coeffs(&a)?;
            emit(&a.out, &text)?;
            Ok(0)
        }
        Cmd::Verify(a) => {
            configure_threads(a.threads)?;
            let (text, code) = cmd_verify(&a)?;
            emit(&a.out, &text)?;
            Ok(code)
        }
        Cmd::Enumerate(a) => {
            configure_threads(a.threads)?;
            let mut sink = open_sink(&a.out)?;
            cmd_enumerate(&a, &mut sink)?;
            sink.flush()?;
            Ok(0)
        }
        Cmd::Histogram(a) => {
            configure_threads(a.threads)?;
            let text = cmd_histogram(&a)?;
            emit(&a.out, &text)?;
            Ok(0)
        }
        Cmd::Montecarlo(a) => {
            configure_threads(a.threads)?;
            let text = cmd_montecarlo(&a)?;
            emit(&a.out, &text)?;
            Ok(0)
        }
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn open_sink(out: &Option<PathBuf>) -> Result<Box<dyn io::Write>> {
    Ok(match out {
        Some(path) => Box::new(io::BufWriter::new(fs::File::create(path)?)),
        None => Box::new(io::BufWriter::new(io::stdout())),
    })
}

fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match env::var(ENV_SEED) {
        Ok(v) => v.trim().parse().map_err(|_| {
            SgError::InvalidArgument(format!("{ENV_SEED} must be an unsigned integer, got {v:?}"))
        }),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

/// Applies --threads, or SG_ENERGY_THREADS when the flag is absent. Pool
/// sizing is global and first-come; a repeat call keeps the existing pool.
fn configure_threads(flag: Option<usize>) -> Result<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match env::var(ENV_THREADS) {
            Ok(v) => Some(v.trim().parse().map_err(|_| {
                SgError::InvalidArgument(format!(
                    "{ENV_THREADS} must be a positive integer, got {v:?}"
                ))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(SgError::InvalidArgument(
                "thread count must be positive".into(),
            ));
        }
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

/// Model for the bulk pipelines: exact within the cap, float beyond it with
/// a note on stderr.
fn build_model(level: u32) -> Result<(EnergyModel, &'static str)> {
    if level <= EXACT_LEVEL_CAP {
        Ok((EnergyModel::build_exact(level)?, "exact"))
    } else {
        eprintln!(
            "level {level} is over the exact pipeline cap {EXACT_LEVEL_CAP}; using the float backend"
        );
        Ok((EnergyModel::build_float(level)?, "float"))
    }
}

fn sci(x: f64) -> String {
    format!("{x:.15e}")
}

fn cmd_structure(a: &StructureArgs) -> Result<String> {
    let use_exact = match a.backend {
        Some(BackendArg::Float) => false,
        Some(BackendArg::Exact) | None => {
            if a.level <= EXACT_LEVEL_HARD_CAP {
                true
            } else {
                eprintln!(
                    "level {} is over the exact certification cap {EXACT_LEVEL_HARD_CAP}; \
                     using the float backend",
                    a.level
                );
                false
            }
        }
    };
    let (model, backend) = if use_exact {
        (EnergyModel::build_exact(a.level)?, "exact")
    } else {
        (EnergyModel::build_float(a.level)?, "float")
    };
    let config = RunConfig {
        command: "structure",
        level: a.level,
        backend,
        format: "json",
        schema: SCHEMA_VERSION,
        ..RunConfig::default()
    };
    let report = structure_payload(&model);
    let doc = json!({
        "version": VERSION,
        "config": serde_json::to_value(&config).expect("config serializes"),
        "report": report,
    });
    Ok(format!(
        "{}\n",
        serde_json::to_string_pretty(&doc).expect("document serializes")
    ))
}

fn structure_payload(model: &EnergyModel) -> Value {
    match &model.exact {
        Some(hs) => {
            let inv = check_invertibility(hs);
            let maps: Vec<Vec<Vec<String>>> = hs
                .a_maps
                .iter()
                .map(|m| {
                    m.iter()
                        .map(|row| row.iter().map(ratio_string).collect())
                        .collect()
                })
                .collect();
            json!({
                "level": hs.level,
                "cells": model.num_symbols(),
                "points": model.structure.num_points(),
                "r": ratio_string(&hs.r),
                "gamma": ratio_string(&hs.gamma),
                "a_maps": maps,
                "determinants": hs.determinants.iter().map(ratio_string).collect::<Vec<_>>(),
                "min_abs_determinant": ratio_string(&inv.min_abs_det),
                "all_invertible": inv.all_invertible,
                "harmonic_identity_exact": hs.harmonic_identity_holds(),
            })
        }
        None => {
            let mut min_abs = f64::INFINITY;
            for d in &model.determinants {
                min_abs = min_abs.min(d.abs());
            }
            json!({
                "level": model.level(),
                "cells": model.num_symbols(),
                "points": model.structure.num_points(),
                "r": model.r,
                "gamma": model.gamma,
                "a_maps": model.a_maps,
                "determinants": model.determinants,
                "min_abs_determinant": min_abs,
                "all_invertible": min_abs > 0.0,
                "harmonic_identity_residual": float_identity_residual(model),
            })
        }
    }
}

/// Largest entry of sum_i A_i^T D A_i - r D; the float analogue of the exact
/// identity check.
fn float_identity_residual(model: &EnergyModel) -> f64 {
    let mut acc = [[0.0f64; 3]; 3];
    for a in &model.a_maps {
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for p in 0..3 {
                    for q in 0..3 {
                        s += a[p][i] * model.d[p][q] * a[q][j];
                    }
                }
                acc[i][j] += s;
            }
        }
    }
    let mut worst = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            worst = worst.max((acc[i][j] - model.r * model.d[i][j]).abs());
        }
    }
    worst
}

fn parse_triple(text: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(SgError::InvalidArgument(format!(
            "expected three comma-separated values, got {text:?}"
        )));
    }
    let mut out = [0.0; 3];
    for (slot, p) in out.iter_mut().zip(&parts) {
        *slot = p
            .parse()
            .map_err(|_| SgError::InvalidArgument(format!("bad number {p:?} in {text:?}")))?;
    }
    Ok(out)
}

fn cmd_coeffs(a: &CoeffsArgs) -> Result<String> {
    let (model, backend) = build_model(a.level)?;
    let w = Word::parse(&a.word)?;
    let config = RunConfig {
        command: "coeffs",
        level: a.level,
        backend,
        format: "csv",
        schema: SCHEMA_VERSION,
        word: Some(w.to_string()),
        f: a.f.clone(),
        ..RunConfig::default()
    };

    let (av, bv, radius, theta, sumsq) = match &a.f {
        None => {
            let av = model.a_coeffs(&w)?;
            let bv = model.b_coeffs(&w)?;
            let p = polar(&bv);
            (av, bv.b, p.radius, p.theta, bv.sum_sq())
        }
        Some(text) => {
            let f = parse_triple(text)?;
            // Only the mean-zero part of f carries energy; subtracting the
            // mean up front also makes a constant input read as exactly zero
            // instead of rounding noise.
            let fp = crate::mat3::project_mean_zero(&f);
            if fp == [0.0, 0.0, 0.0] {
                return Err(SgError::InvalidArgument(
                    "the boundary values have no mean-zero part; coefficients are undefined".into(),
                ));
            }
            let m = model.word_matrix(&w)?;
            let z = model.pullbacks(&m);
            let mut av = [0.0; 3];
            for j in 0..3 {
                let t = dot3(&z[j], &fp);
                av[j] = t * t;
            }
            let total: f64 = av.iter().sum();
            let b = [av[0] / total, av[1] / total, av[2] / total];
            // A single function can sit anywhere on the simplex, including
            // outside the open disk that frame-averaged vectors never leave,
            // so the polar readout is computed on the raw triple.
            let basis = crate::energy::plane_basis();
            let d = [b[0] - 1.0 / 3.0, b[1] - 1.0 / 3.0, b[2] - 1.0 / 3.0];
            let x = dot3(&d, &basis[0]);
            let y = dot3(&d, &basis[1]);
            let radius = (x * x + y * y).sqrt();
            let theta = if radius < 1e-14 { 0.0 } else { y.atan2(x) };
            let sumsq = b[0] * b[0] + b[1] * b[1] + b[2] * b[2];
            (av, b, radius, theta, sumsq)
        }
    };

    let mut out = config.header();
    out.push_str("word,a1,a2,a3,b1,b2,b3,r,theta,sumsq\n");
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{},{},{},{}",
        w,
        sci(av[0]),
        sci(av[1]),
        sci(av[2]),
        sci(bv[0]),
        sci(bv[1]),
        sci(bv[2]),
        sci(radius),
        sci(theta),
        sci(sumsq)
    );
    Ok(out)
}

fn cmd_verify(a: &VerifyArgs) -> Result<(String, i32)> {
    let (model, backend) = build_model(a.level)?;
    let seed = resolve_seed(a.seed)?;
    let params = VerifyParams {
        depth: a.depth,
        seed,
        samples: a.samples,
        length: a.length,
    };
    let reports = run_check(&model, &a.check, &params)?;
    let failures: Vec<_> = reports.iter().filter(|r| !r.passed()).collect();
    for r in &failures {
        let mut line = format!("check {} failed at level {}", r.check, r.level);
        if let Some(w) = &r.witness {
            if let Some(word) = &w.word {
                let _ = write!(line, "; word {word}");
            }
            if let Some(res) = w.residual {
                let _ = write!(line, "; residual {res:e}");
            }
            let _ = write!(line, "; {}", w.note);
        }
        eprintln!("{line}");
    }

    let config = RunConfig {
        command: "verify",
        level: a.level,
        backend,
        format: "json",
        schema: SCHEMA_VERSION,
        depth: Some(a.depth),
        check: Some(a.check.clone()),
        samples: Some(a.samples),
        length: Some(a.length),
        seed: Some(seed),
        rng: Some(RNG_DESCRIPTION),
        ..RunConfig::default()
    };
    let doc = json!({
        "version": VERSION,
        "config": serde_json::to_value(&config).expect("config serializes"),
        "reports": serde_json::to_value(&reports).expect("reports serialize"),
    });
    let text = format!(
        "{}\n",
        serde_json::to_string_pretty(&doc).expect("document serializes")
    );
    Ok((text, if failures.is_empty() { 0 } else { 1 }))
}

fn cmd_enumerate(a: &EnumerateArgs, sink: &mut dyn io::Write) -> Result<()> {
    let (model, backend) = build_model(a.level)?;
    let config = RunConfig {
        command: "enumerate",
        level: a.level,
        backend,
        format: "csv",
        schema: SCHEMA_VERSION,
        depth: Some(a.depth),
        measure: Some(a.measure.label()),
        max_leaves: Some(a.max_leaves),
        ..RunConfig::default()
    };
    sink.write_all(config.header().as_bytes())?;
    sink.write_all(b"word,b1,b2,b3,r,theta,weight\n")?;
    enumerate_rows(
        &model,
        a.depth,
        a.measure.to_measure(),
        a.max_leaves,
        &mut |row| {
            writeln!(
                sink,
                "{},{},{},{},{},{},{}",
                row.word,
                sci(row.b[0]),
                sci(row.b[1]),
                sci(row.b[2]),
                sci(row.radius),
                sci(row.theta),
                sci(row.weight)
            )?;
            Ok(())
        },
    )
}

fn histogram_rows(h: &WeightedHistogram) -> String {
    let mut out = String::with_capacity(h.bins() * 64);
    out.push_str("bin_lo,bin_hi,mass\n");
    for i in 0..h.bins() {
        let (lo, hi) = h.edges(i);
        let _ = writeln!(out, "{},{},{}", sci(lo), sci(hi), sci(h.mass[i]));
    }
    out
}

fn cmd_histogram(a: &HistogramArgs) -> Result<String> {
    let (model, backend) = build_model(a.level)?;
    let range = a.range.unwrap_or(RangeArg::Full);
    let (bins, range_label) = match a.quantity {
        QuantityArg::Theta => match range {
            RangeArg::Full => (a.bins.unwrap_or(DEFAULT_THETA_BINS), "full"),
            RangeArg::Third => (a.bins.unwrap_or(DEFAULT_THIRD_BINS), "third"),
        },
        QuantityArg::Radius => {
            if a.range == Some(RangeArg::Third) {
                eprintln!("--range applies to the angular histogram; ignored for radius");
            }
            (a.bins.unwrap_or(DEFAULT_THIRD_BINS), "full")
        }
    };
    if bins == 0 {
        return Err(SgError::InvalidArgument(
            "bin count must be positive".into(),
        ));
    }

    let mut plan = EnumerationPlan::summary_only(a.depth, a.measure.to_measure());
    plan.max_leaves = a.max_leaves;
    let quantity_label;
    match a.quantity {
        QuantityArg::Theta => {
            let global_bins = match range {
                RangeArg::Full => bins,
                RangeArg::Third => bins * 3,
            };
            if global_bins % 6 != 0 {
                eprintln!(
                    "{global_bins} circle bins is not a multiple of 6; \
                     angular mass is placed per word and the symmetry is only \
                     approximate at bin edges"
                );
            }
            plan.theta_bins = Some(global_bins);
            quantity_label = "theta";
        }
        QuantityArg::Radius => {
            plan.radius_bins = Some(bins);
            quantity_label = "radius";
        }
    }

    let summary = collect_distribution(&model, &plan)?;
    let h = match a.quantity {
        QuantityArg::Theta => {
            let global = summary.theta.expect("planned histogram");
            match range {
                RangeArg::Full => global,
                RangeArg::Third => fold_theta_thirds(&global)?,
            }
        }
        QuantityArg::Radius => summary.radius.expect("planned histogram"),
    };
    if h.out_of_range != 0.0 {
        eprintln!("out-of-range mass {:e}", h.out_of_range);
    }

    let config = RunConfig {
        command: "histogram",
        level: a.level,
        backend,
        format: "csv",
        schema: SCHEMA_VERSION,
        depth: Some(a.depth),
        bins: Some(bins),
        range: Some(range_label),
        measure: Some(a.measure.label()),
        quantity: Some(quantity_label),
        max_leaves: Some(a.max_leaves),
        ..RunConfig::default()
    };
    Ok(format!("{}{}", config.header(), histogram_rows(&h)))
}

fn cmd_montecarlo(a: &McArgs) -> Result<String> {
    let (model, backend) = build_model(a.level)?;
    let seed = resolve_seed(a.seed)?;
    let rows = montecarlo_convergence(
        &model,
        &MonteCarloConfig {
            samples: a.samples,
            length: a.length,
            seed,
            measure: a.measure.to_measure(),
        },
    )?;
    let config = RunConfig {
        command: "montecarlo",
        level: a.level,
        backend,
        format: "csv",
        schema: SCHEMA_VERSION,
        samples: Some(a.samples),
        length: Some(a.length),
        seed: Some(seed),
        measure: Some(a.measure.label()),
        rng: Some(RNG_DESCRIPTION),
        ..RunConfig::default()
    };
    let mut out = config.header();
    out.push_str("n,q10,median,q90\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            row.n,
            sci(row.q10),
            sci(row.median),
            sci(row.q90)
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(tokens: &[&str]) -> Cmd {
        let argv = std::iter::once("sg-energy")
            .chain(tokens.iter().copied())
            .map(String::from);
        TopCli::try_parse_from(argv).expect("parses").cmd
    }

    #[test]
    fn structure_report_carries_exact_strings() {
        let Cmd::Structure(a) = parse(&["structure", "--level", "2"]) else {
            panic!("wrong subcommand");
        };
        let text = cmd_structure(&a).unwrap();
        let doc: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(doc["report"]["r"], "3/5");
        assert_eq!(doc["report"]["gamma"], "3");
        assert_eq!(doc["report"]["cells"], 3);
        assert_eq!(doc["report"]["min_abs_determinant"], "3/25");
        assert_eq!(doc["report"]["all_invertible"], true);
        assert_eq!(doc["report"]["harmonic_identity_exact"], true);
        assert_eq!(doc["report"]["a_maps"][0][0][0], "1");
        assert_eq!(doc["report"]["a_maps"][0][1][0], "2/5");
        assert_eq!(doc["config"]["backend"], "exact");
        assert_eq!(doc["version"], VERSION);
    }

    #[test]
    fn structure_float_reports_a_residual() {
        let Cmd::Structure(a) = parse(&["structure", "--level", "3", "--backend", "float"]) else {
            panic!("wrong subcommand");
        };
        let text = cmd_structure(&a).unwrap();
        let doc: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(doc["config"]["backend"], "float");
        let res = doc["report"]["harmonic_identity_residual"]
            .as_f64()
            .unwrap();
        assert!(res < 1e-12, "residual {res}");
        assert!(doc["report"]["r"].is_number());
    }

    #[test]
    fn coeffs_row_matches_the_known_depth_one_values() {
        let Cmd::Coeffs(a) = parse(&["coeffs", "--level", "2", "--word", "1"]) else {
            panic!("wrong subcommand");
        };
        let text = cmd_coeffs(&a).unwrap();
        let data = text.lines().last().unwrap();
        let fields: Vec<&str> = data.split(',').collect();
        assert_eq!(fields[0], "1");
        let b1: f64 = fields[4].parse().unwrap();
        let b2: f64 = fields[5].parse().unwrap();
        assert!((b1 - 0.6).abs() < 1e-12);
        assert!((b2 - 0.2).abs() < 1e-12);
        let sumsq: f64 = fields[9].parse().unwrap();
        assert!((sumsq - 11.0 / 25.0).abs() < 1e-12);
    }

    #[test]
    fn coeffs_single_function_normalizes_the_squares() {
        let Cmd::Coeffs(a) = parse(&["coeffs", "--level", "2", "--word", "e", "--f", "1,0,0"])
        else {
            panic!("wrong subcommand");
        };
        let text = cmd_coeffs(&a).unwrap();
        let data = text.lines().last().unwrap();
        let fields: Vec<&str> = data.split(',').collect();
        let b: Vec<f64> = fields[4..7].iter().map(|s| s.parse().unwrap()).collect();
        assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // At the root the pullbacks are the operator columns and f = e_1
        // picks out their first entries squared: (4,1,1)/6.
        assert!((b[0] - 4.0 / 6.0).abs() < 1e-12);
        assert!((b[1] - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn coeffs_rejects_constant_boundary_values() {
        let Cmd::Coeffs(a) = parse(&["coeffs", "--level", "2", "--word", "1", "--f", "2,2,2"])
        else {
            panic!("wrong subcommand");
        };
        let err = cmd_coeffs(&a).unwrap_err();
        assert!(matches!(err, SgError::InvalidArgument(_)));
    }

    #[test]
    fn histogram_defaults_track_the_range() {
        let Cmd::Histogram(a) = parse(&[
            "histogram",
            "--level",
            "2",
            "--depth",
            "3",
            "--range",
            "third",
        ]) else {
            panic!("wrong subcommand");
        };
        let text = cmd_histogram(&a).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[1].contains("\"bins\":2000"));
        assert!(lines[1].contains("\"range\":\"third\""));
        assert_eq!(lines[2], "bin_lo,bin_hi,mass");
        assert_eq!(lines.len(), 3 + 2000);
        let first: f64 = lines[3].split(',').next().unwrap().parse().unwrap();
        assert!((first + std::f64::consts::PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn radius_histogram_spikes_at_depth_one() {
        let Cmd::Histogram(a) = parse(&[
            "histogram",
            "--level",
            "2",
            "--depth",
            "1",
            "--quantity",
            "radius",
            "--bins",
            "100",
        ]) else {
            panic!("wrong subcommand");
        };
        let text = cmd_histogram(&a).unwrap();
        let masses: Vec<f64> = text
            .lines()
            .skip(3)
            .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
            .collect();
        assert_eq!(masses.len(), 100);
        let hot: Vec<usize> = (0..100).filter(|&i| masses[i] > 0.0).collect();
        assert_eq!(hot.len(), 1);
        // depth-1 radius sqrt(8/75) lands in bin floor(sqrt(8/75)/(1/sqrt 6)/100).
        let r = (8.0f64 / 75.0).sqrt();
        let expect = (r / (1.0f64 / 6.0f64.sqrt()) * 100.0) as usize;
        assert_eq!(hot[0], expect);
        assert!((masses[hot[0]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn montecarlo_csv_has_the_documented_columns() {
        let Cmd::Montecarlo(a) = parse(&[
            "montecarlo",
            "--samples",
            "8",
            "--length",
            "12",
            "--seed",
            "5",
        ]) else {
            panic!("wrong subcommand");
        };
        let text = cmd_montecarlo(&a).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[2], "n,q10,median,q90");
        assert_eq!(lines.len(), 3 + 12);
        assert!(lines[1].contains("\"seed\":5"));
        assert!(lines[1].contains("\"rng\":"));
        let last: Vec<&str> = lines.last().unwrap().split(',').collect();
        assert_eq!(last[0], "12");
        let median: f64 = last[2].parse().unwrap();
        assert!(median < 0.5);
    }

    #[test]
    fn enumerate_lists_every_leaf_in_order() {
        let Cmd::Enumerate(a) = parse(&["enumerate", "--level", "2", "--depth", "2"]) else {
            panic!("wrong subcommand");
        };
        let mut buf = Vec::new();
        cmd_enumerate(&a, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[2], "word,b1,b2,b3,r,theta,weight");
        assert_eq!(lines.len(), 3 + 9);
        assert!(lines[3].starts_with("1-1,"));
        assert!(lines.last().unwrap().starts_with("3-3,"));
        let weight: f64 = lines[3].split(',').next_back().unwrap().parse().unwrap();
        assert!((weight - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn run_reports_usage_errors_with_exit_two() {
        let code = run(["sg-energy", "verify", "--level"]
            .iter()
            .map(|s| s.to_string()));
        assert_eq!(code, 2);
        let code = run(["sg-energy", "nonsense"].iter().map(|s| s.to_string()));
        assert_eq!(code, 2);
    }

    #[test]
    fn unknown_check_token_is_a_config_error() {
        let Cmd::Verify(a) = parse(&["verify", "--level", "2", "--check", "bogus"]) else {
            panic!("wrong subcommand");
        };
        assert!(matches!(cmd_verify(&a), Err(SgError::InvalidArgument(_))));
    }

    #[test]
    fn verify_single_check_passes_and_serializes() {
        let Cmd::Verify(a) = parse(&["verify", "--level", "2", "--check", "lemmaA", "--seed", "3"])
        else {
            panic!("wrong subcommand");
        };
        let (text, code) = cmd_verify(&a).unwrap();
        assert_eq!(code, 0);
        let doc: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(doc["reports"][0]["check"], "lemmaA");
        assert_eq!(doc["reports"][0]["status"], "pass");
        assert_eq!(doc["config"]["seed"], 3);
    }

    #[test]
    fn config_header_is_two_commented_lines() {
        let config = RunConfig {
            command: "histogram",
            level: 2,
            backend: "exact",
            format: "csv",
            schema: SCHEMA_VERSION,
            depth: Some(3),
            bins: Some(12),
            range: Some("full"),
            measure: Some("uniform"),
            ..RunConfig::default()
        };
        let h = config.header();
        let lines: Vec<&str> = h.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("# sg-energy "));
        assert!(lines[1].starts_with("# config: {\"command\":\"histogram\",\"level\":2"));
        assert!(!h.contains("wall"));
    }

    #[test]
    fn seed_resolution_prefers_the_flag() {
        assert_eq!(resolve_seed(Some(9)).unwrap(), 9);
        // With no flag and no env var the fixed default applies; the env
        // override path is covered by the process-level tests.
        if env::var(ENV_SEED).is_err() {
            assert_eq!(resolve_seed(None).unwrap(), DEFAULT_SEED);
        }
    }
}
