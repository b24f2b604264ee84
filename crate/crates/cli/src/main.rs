//! `psdg`: validate grammars, sample executions, filter observation streams,
//! cross-check against enumeration and export the equivalent PCFG.
//!
//! Exit codes: 0 success, 1 grammar or model error, 2 I/O or input format
//! error, 3 zero-probability evidence under the `error` policy.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use psdg::generation::sample_trajectory;
use psdg::inference::{
    Filter, InferenceError, Observation, RecognizerOptions, StepReport, ZeroEvidencePolicy,
};
use psdg::oracle::{reference_reports, to_pcfg, DEFAULT_ENTRY_BOUND};
use psdg::{GrammarError, Psdg, StateSet};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "psdg",
    version,
    about = "Probabilistic state-dependent grammar toolkit"
)]
struct Cli {
    /// Output style for summaries and diagnostics
    #[arg(long, value_enum, global = true, default_value_t = Format::Text)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnZeroEvidence {
    Error,
    Reinit,
}

#[derive(Subcommand)]
enum Command {
    /// Check a grammar file and print its size statistics
    Validate { file: PathBuf },

    /// Sample executions as JSON lines
    Sample {
        file: PathBuf,
        #[arg(long, default_value_t = 20)]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of executions, using seeds seed, seed+1, ...
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        count: u64,
        /// Emit only the observation stream of the sampled states
        #[arg(long)]
        observations_only: bool,
    },

    /// Filter an observation stream read from standard input
    Infer {
        file: PathBuf,
        #[arg(long, default_value_t = RecognizerOptions::default().support_bound as u64, value_parser = clap::value_parser!(u64).range(1..))]
        support_bound: u64,
        #[arg(long, value_enum, default_value_t = OnZeroEvidence::Error)]
        on_zero_evidence: OnZeroEvidence,
    },

    /// Compare the recognizer with exhaustive enumeration on a stream read
    /// from standard input (vacuous observations for t < horizon if empty)
    OracleCheck {
        file: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        horizon: Option<u64>,
        /// Test hook: perturb every belief update
        #[arg(long, hide = true)]
        corrupt_update: bool,
    },

    /// Write the equivalent state-annotated PCFG
    ToPcfg {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const TOLERANCE: f64 = 1e-9;

struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn fail(code: u8) -> impl FnOnce(anyhow::Error) -> Failure {
    move |error| Failure { code, error }
}

fn io_failure(e: io::Error) -> Failure {
    Failure {
        code: 2,
        error: e.into(),
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Validate { file } => validate(file, cli.format),
        Command::Sample {
            file,
            horizon,
            seed,
            count,
            observations_only,
        } => sample(file, *horizon, *seed, *count, *observations_only),
        Command::Infer {
            file,
            support_bound,
            on_zero_evidence,
        } => infer(file, *support_bound as usize, *on_zero_evidence),
        Command::OracleCheck {
            file,
            horizon,
            corrupt_update,
        } => oracle_check(
            file,
            horizon.map(|h| h as usize),
            *corrupt_update,
            cli.format,
        ),
        Command::ToPcfg { file, out } => export_pcfg(file, out.as_deref()),
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(fail(2))
}

fn print_diagnostics(path: &Path, err: &GrammarError, format: Format) {
    for d in err.diagnostics() {
        match format {
            Format::Text => eprintln!("{}:{d}", path.display()),
            Format::Json => eprintln!(
                "{}",
                json!({ "file": path.display().to_string(), "diagnostic": d })
            ),
        }
    }
}

fn load(path: &Path, format: Format) -> Result<Psdg, Failure> {
    let text = read_text(path)?;
    Psdg::parse(&text).map_err(|e| {
        print_diagnostics(path, &e, format);
        Failure {
            code: 1,
            error: anyhow!("{} is not a valid grammar", path.display()),
        }
    })
}

fn validate(path: &Path, format: Format) -> Outcome {
    let g = load(path, format)?;
    let stats = [
        ("nonterminals", g.nonterminals().len()),
        ("terminals", g.terminals().len()),
        ("productions", g.productions().len()),
        ("depth", g.depth()),
        ("max_production_len", g.max_production_len()),
        ("states", g.space().size()),
    ];
    let mut out = io::stdout().lock();
    match format {
        Format::Text => {
            for (k, v) in stats {
                writeln!(out, "{k}: {v}").map_err(io_failure)?;
            }
        }
        Format::Json => {
            let map: serde_json::Map<_, _> = stats
                .iter()
                .map(|(k, v)| (k.to_string(), json!(v)))
                .collect();
            writeln!(out, "{}", serde_json::Value::Object(map)).map_err(io_failure)?;
        }
    }
    Ok(())
}

fn sample(path: &Path, horizon: usize, seed: u64, count: u64, observations_only: bool) -> Outcome {
    if observations_only && count > 1 {
        return Err(Failure {
            code: 2,
            error: anyhow!("--observations-only emits a single stream; use --count 1"),
        });
    }
    let g = load(path, Format::Text)?;
    let mut out = io::stdout().lock();
    for s in seed..seed.saturating_add(count) {
        let traj = sample_trajectory(&g, horizon, s);
        if observations_only {
            for t in 0..=traj.len() {
                let obs = Observation {
                    t,
                    constraint: StateSet::singleton(g.space(), traj.state(t)),
                };
                writeln!(out, "{}", obs.to_json(&g)).map_err(io_failure)?;
            }
        } else {
            out.write_all(traj.to_json_lines(&g).as_bytes())
                .map_err(io_failure)?;
        }
    }
    out.flush().map_err(io_failure)
}

/// Nonblank lines of standard input parsed as observations, with 1-based
/// line numbers in errors.
fn observations<'g>(g: &'g Psdg) -> impl Iterator<Item = Result<Observation, Failure>> + 'g {
    io::stdin()
        .lock()
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(move |(i, line)| {
            let line = line.map_err(io_failure)?;
            Observation::from_json(g, &line)
                .with_context(|| format!("line {}", i + 1))
                .map_err(fail(2))
        })
}

fn inference_failure(e: InferenceError) -> Failure {
    let code = match e {
        InferenceError::ZeroEvidence { .. } => 3,
        InferenceError::TimeOrder { .. } => 2,
        _ => 1,
    };
    Failure {
        code,
        error: e.into(),
    }
}

fn infer(path: &Path, support_bound: usize, policy: OnZeroEvidence) -> Outcome {
    let g = load(path, Format::Text)?;
    let options = RecognizerOptions {
        support_bound,
        ..RecognizerOptions::default()
    };
    let policy = match policy {
        OnZeroEvidence::Error => ZeroEvidencePolicy::Error,
        OnZeroEvidence::Reinit => ZeroEvidencePolicy::Reinit,
    };
    let mut filter = Filter::new(&g, options, policy).map_err(inference_failure)?;
    let mut out = io::stdout().lock();
    for obs in observations(&g) {
        let report = filter.observe(&obs?).map_err(inference_failure)?;
        if report.reinitialized {
            eprintln!(
                "warning: zero evidence at t={}; restarted from the prior",
                report.t
            );
        }
        writeln!(out, "{}", report.to_json(&g)).map_err(io_failure)?;
        out.flush().map_err(io_failure)?;
    }
    Ok(())
}

fn oracle_check(path: &Path, horizon: Option<usize>, corrupt: bool, format: Format) -> Outcome {
    let g = load(path, format)?;
    let mut stream: Vec<Observation> = observations(&g).collect::<Result<_, _>>()?;
    if stream.is_empty() {
        stream = (0..horizon.unwrap_or(4))
            .map(|t| Observation::vacuous(&g, t))
            .collect();
    }
    if let (Some(h), Some(last)) = (horizon, stream.last()) {
        if last.t >= h {
            return Err(Failure {
                code: 2,
                error: anyhow!("observation at t={} lies beyond the horizon {h}", last.t),
            });
        }
    }
    let expected = reference_reports(&g, &stream, DEFAULT_ENTRY_BOUND)
        .context("enumeration failed")
        .map_err(fail(1))?;
    let options = RecognizerOptions {
        corrupt_update: corrupt,
        ..RecognizerOptions::default()
    };
    let mut filter =
        Filter::new(&g, options, ZeroEvidencePolicy::Error).map_err(inference_failure)?;
    let mut got: Vec<StepReport> = Vec::new();
    for obs in &stream {
        got.push(filter.observe(obs).map_err(inference_failure)?);
    }
    let mut out = io::stdout().lock();
    if format == Format::Text {
        writeln!(
            out,
            "{:>4} {:>10} {:>10} {:>10} {:>10}",
            "t", "state", "explain", "predict", "evidence"
        )
        .map_err(io_failure)?;
    }
    let mut worst: f64 = 0.0;
    for (a, b) in got.iter().zip(&expected) {
        let d = a.deviation(b);
        worst = worst.max(d.max());
        let line = match format {
            Format::Text => format!(
                "{:>4} {:>10.3e} {:>10.3e} {:>10.3e} {:>10.3e}",
                a.t, d.state, d.explain, d.predict, d.evidence
            ),
            Format::Json => json!({
                "t": a.t, "state": d.state, "explain": d.explain,
                "predict": d.predict, "evidence": d.evidence,
            })
            .to_string(),
        };
        writeln!(out, "{line}").map_err(io_failure)?;
    }
    eprintln!(
        "max deviation {worst:.3e} over {} steps (tolerance {TOLERANCE:e})",
        got.len()
    );
    if worst <= TOLERANCE {
        Ok(())
    } else {
        Err(Failure {
            code: 1,
            error: anyhow!("recognizer disagrees with enumeration by {worst:.3e}"),
        })
    }
}

fn export_pcfg(path: &Path, out_path: Option<&Path>) -> Outcome {
    let g = load(path, Format::Text)?;
    let pcfg = to_pcfg(&g, 10_000_000).map_err(|e| fail(1)(e.into()))?;
    let text = pcfg.to_text(&g);
    match out_path {
        Some(p) => fs::write(p, &text)
            .with_context(|| format!("cannot write {}", p.display()))
            .map_err(fail(2))?,
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(io_failure)?;
            out.flush().map_err(io_failure)?;
        }
    }
    let q = g.space().size() as f64;
    let bound = g.productions().len() as f64 * q.powi(g.max_production_len() as i32 + 1);
    let tuples = pcfg.nonterminal_count();
    eprintln!(
        "{} productions ({:.3e} of the |P|*|Q|^(m+1) = {bound} bound); {tuples} tuple nonterminals ({:.3e} of |N|*|Q|^2); {} annotated terminals",
        pcfg.productions().len(),
        pcfg.productions().len() as f64 / bound,
        tuples as f64 / (g.nonterminals().len() as f64 * q * q),
        pcfg.terminal_count(),
    );
    Ok(())
}
