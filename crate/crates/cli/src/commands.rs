use std::fs;
use std::path::Path;

use serde::Serialize;
use urnlab::linalg::serde_rows;
use urnlab::moments::{self, AsymptoticSummary};
use urnlab::simulator::{self, CompareConfig, MonteCarloSummary, Standardization};
use urnlab::{presets, rng, spectral, DMatrix, SamplingMode, UrnError, UrnSpec};

use crate::output;
use crate::{Cli, Command, RunArgs, SpecSource};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INVALID_SPEC: u8 = 1;
pub const EXIT_IO: u8 = 2;
pub const EXIT_MODEL: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;
pub const EXIT_VERIFY_FAILED: u8 = 5;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn io(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_IO,
            message: message.into(),
        }
    }
}

impl From<UrnError> for CliError {
    fn from(e: UrnError) -> Self {
        let code = match e {
            UrnError::InvalidArgument(_) => EXIT_IO,
            UrnError::Model(_) | UrnError::Tenability(_) => EXIT_MODEL,
            UrnError::Numeric(_) => EXIT_NUMERIC,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::io(e.to_string())
    }
}

fn load(source: &SpecSource) -> Result<UrnSpec, CliError> {
    match (&source.spec, &source.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
            UrnSpec::from_json(&text).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
        }
        (None, Some(name)) => presets::by_name(name).ok_or_else(|| {
            CliError::io(format!(
                "unknown preset {name:?}; expected one of {}",
                presets::NAMES.join(", ")
            ))
        }),
        (None, None) => Err(CliError::io("no specification given")),
    }
}

fn load_valid(source: &SpecSource, mode: Option<SamplingMode>) -> Result<UrnSpec, CliError> {
    let spec = load(source)?.validated()?;
    Ok(match mode {
        Some(m) => spec.with_mode(m),
        None => spec,
    })
}

fn configure_threads(threads: usize) -> Result<(), CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::io(format!("thread pool: {e}")))
}

pub fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Validate { source, out } => {
            let report = urnlab::validate(&load(&source)?);
            output::json(&report, out.as_deref())?;
            Ok(if report.ok { EXIT_OK } else { EXIT_INVALID_SPEC })
        }
        Command::Expand { source, out } => {
            let spec = load_valid(&source, None)?;
            expand(&spec, out.as_deref())?;
            Ok(EXIT_OK)
        }
        Command::Classify {
            source,
            tol,
            tol_half,
            out,
        } => {
            let spec = load_valid(&source, None)?;
            let dec = spectral::decompose_with(&spec.core, tol, tol_half)?;
            output::json(&dec.report(), out.as_deref())?;
            Ok(EXIT_OK)
        }
        Command::Moments {
            source,
            n,
            every,
            mode,
            out,
        } => {
            let spec = load_valid(&source, mode)?;
            moments_csv(&spec, n, every, out.as_deref())?;
            Ok(EXIT_OK)
        }
        Command::Asymptotics { source, out } => {
            let spec = load_valid(&source, None)?;
            output::json(&moments::clt_params(&spec)?, out.as_deref())?;
            Ok(EXIT_OK)
        }
        Command::Simulate {
            source,
            run,
            record_y,
            csv,
            out,
        } => {
            configure_threads(cli.threads)?;
            let spec = load_valid(&source, run.mode)?;
            simulate(&spec, &run, record_y, csv.as_deref(), out.as_deref())?;
            Ok(EXIT_OK)
        }
        Command::Verify {
            source,
            run,
            z_max,
            skew_max,
            kurtosis_max,
            out,
        } => {
            configure_threads(cli.threads)?;
            let spec = load_valid(&source, run.mode)?;
            let cfg = CompareConfig {
                z_max,
                skew_max,
                kurtosis_max,
            };
            let theory = moments::clt_params(&spec).ok();
            let summary = simulator::monte_carlo(&spec, run.n, run.reps, run.seed)?;
            let exact = moments::trajectory(&spec, run.n);
            let report = simulator::compare(&summary, theory.as_ref(), &exact, &cfg)?;
            output::json(&report, out.as_deref())?;
            Ok(if report.passed { EXIT_OK } else { EXIT_VERIFY_FAILED })
        }
        Command::Preset { name } => {
            let spec = load(&SpecSource {
                spec: None,
                preset: Some(name),
            })?;
            output::json(&spec, None)?;
            Ok(EXIT_OK)
        }
    }
}

fn expand(spec: &UrnSpec, out: Option<&Path>) -> Result<(), CliError> {
    let m = urnlab::build_replacement_matrix(&spec.core, spec.s)?;
    let mut w = output::csv_writer(out)?;
    let mut header = vec!["sample".to_string()];
    header.extend((1..=spec.k).map(|i| format!("color_{i}")));
    w.write_record(&header)?;
    for (sample, row) in m.samples.iter().zip(&m.rows) {
        let mut rec = vec![sample.label()];
        rec.extend(row.iter().map(i64::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CliError::io(e.to_string()))
}

fn moments_csv(spec: &UrnSpec, n: u64, every: u64, out: Option<&Path>) -> Result<(), CliError> {
    if every == 0 {
        return Err(CliError::io("--every must be at least 1"));
    }
    let k = spec.k;
    let mut w = output::csv_writer(out)?;
    let mut header = vec!["n".to_string()];
    header.extend((1..=k).map(|i| format!("mu_{i}")));
    for i in 1..=k {
        header.extend((i..=k).map(|j| format!("sigma_{i}_{j}")));
    }
    w.write_record(&header)?;
    let mut failure = None;
    moments::walk(spec, n, |step, mu, sigma| {
        if failure.is_some() || (step % every != 0 && step != n) {
            return;
        }
        let mut rec = vec![step.to_string()];
        rec.extend(mu.iter().map(|&x| output::num(x)));
        for i in 0..k {
            rec.extend((i..k).map(|j| output::num(sigma[(i, j)])));
        }
        if let Err(e) = w.write_record(&rec) {
            failure = Some(e);
        }
    });
    if let Some(e) = failure {
        return Err(e.into());
    }
    w.flush().map_err(|e| CliError::io(e.to_string()))
}

#[derive(Serialize)]
struct YDiagnostics {
    steps: u64,
    /// Every `Y_n 1^T` vanished in exact integer arithmetic.
    annihilation_exact: bool,
    /// Average of `Y_n^T Y_n` over the second half of the path.
    #[serde(with = "serde_rows")]
    mean_yty: DMatrix<f64>,
    /// `B - b^2 v1^T v1`, the limit of the conditional second moment.
    #[serde(with = "serde_rows::option")]
    limit: Option<DMatrix<f64>>,
}

#[derive(Serialize)]
struct SimulateOutput<'a> {
    #[serde(flatten)]
    summary: &'a MonteCarloSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    y_diagnostics: Option<YDiagnostics>,
}

fn y_diagnostics(spec: &UrnSpec, run: &RunArgs, theory: Option<&AsymptoticSummary>) -> Result<YDiagnostics, CliError> {
    // one stream past the replications, so the extra path is independent of them
    let mut r = rng::stream(run.seed, run.reps);
    let t = simulator::simulate_one(spec, run.n, &mut r, true)?;
    let ys = t.y_seq.unwrap_or_default();
    let k = spec.k;
    let tail = &ys[ys.len() / 2..];
    let mut acc = DMatrix::zeros(k, k);
    for y in tail {
        let v = y.to_f64();
        for i in 0..k {
            for j in 0..k {
                acc[(i, j)] += v[i] * v[j];
            }
        }
    }
    if !tail.is_empty() {
        acc /= tail.len() as f64;
    }
    let limit = theory.map(|t| {
        let b2 = (spec.b * spec.b) as f64;
        DMatrix::from_fn(k, k, |i, j| t.b_matrix[(i, j)] - b2 * t.v1[i] * t.v1[j])
    });
    Ok(YDiagnostics {
        steps: run.n,
        annihilation_exact: ys.iter().all(|y| y.annihilates_ones()),
        mean_yty: acc,
        limit,
    })
}

fn simulate(
    spec: &UrnSpec,
    run: &RunArgs,
    record_y: bool,
    csv_out: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    if run.reps < 2 {
        return Err(CliError::io("--reps must be at least 2"));
    }
    let theory = moments::clt_params(spec).ok();
    let st = theory.as_ref().map(Standardization::from);
    let states = simulator::monte_carlo_states(spec, run.n, run.reps, run.seed)?;
    let summary = MonteCarloSummary::from_terminal_states(&states, run.n, run.seed, spec.mode, st.as_ref())?;
    if let Some(path) = csv_out {
        let mut w = output::csv_writer(Some(path))?;
        let mut header = vec!["rep".to_string()];
        header.extend((1..=spec.k).map(|i| format!("x_{i}")));
        w.write_record(&header)?;
        for (r, x) in states.iter().enumerate() {
            let mut rec = vec![r.to_string()];
            rec.extend(x.iter().map(i64::to_string));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| CliError::io(e.to_string()))?;
    }
    let y = if record_y {
        Some(y_diagnostics(spec, run, theory.as_ref())?)
    } else {
        None
    };
    output::json(
        &SimulateOutput {
            summary: &summary,
            y_diagnostics: y,
        },
        out,
    )
}
