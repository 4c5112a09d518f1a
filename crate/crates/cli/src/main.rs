//! `hecke`: run property suites and numerical studies, write CSV tables and a JSON summary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hecke_core::collision::LimitStudy;
use hecke_core::suites::fits::FitRow;
use hecke_core::suites::operators::SpectrumRow;
use hecke_core::suites::{run_criterion, suite_criteria, Gate, Settings, SuiteReport, SUITES};
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "hecke", version, about = "Hecke operators on jets: verification suites and numerical studies")]
struct Cli {
    /// JSON run configuration; complex numbers are [re, im] pairs
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// output directory for CSV tables and summary.json
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// overrides the seed in the configuration
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// suite for `verify`; ladder (two_point, three_point) for `limit-study`
    #[arg(long, global = true)]
    suite: Option<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run verification suites: jets, rep, hecke, gaudin, limits (all when omitted)
    Verify { name: Option<String> },
    /// Top-k spectra along the x-path, reality and continuity gates; writes spectrum.csv
    Spectrum,
    /// Oper potential fits of the scalar eigenvalue curve; writes operfit.csv
    OperFit,
    /// |x| → ∞ degeneration study
    Asymptotics,
    /// Collision of points into a jet; writes limit_study.csv
    LimitStudy,
    /// First-order identity and second-order differential equation
    DiffeqCheck,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] hecke_core::Error),
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Core(hecke_core::Error::ConfigInvalid(_)) => 2,
            _ => 3,
        }
    }
}

fn load_settings(cli: &Cli) -> Result<Settings, CliError> {
    let mut s = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Io(p.clone(), e))?;
            serde_json::from_str::<Settings>(&text).map_err(|e| CliError::Config(e.to_string()))?
        }
        None => Settings::default(),
    };
    if let Some(seed) = cli.seed {
        s.seed = seed;
    }
    s.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(s)
}

fn criteria(cli: &Cli) -> Result<Vec<u32>, CliError> {
    let pick = |name: &str| {
        suite_criteria(name).map(|c| c.to_vec()).ok_or_else(|| CliError::Config(format!("unknown suite {name:?}; expected one of {SUITES:?}")))
    };
    Ok(match &cli.cmd {
        Cmd::Verify { name } => match name.as_deref().or(cli.suite.as_deref()) {
            Some(n) => pick(n)?,
            None => SUITES.iter().flat_map(|n| suite_criteria(n).unwrap_or(&[]).iter().copied()).collect(),
        },
        Cmd::Spectrum => vec![13],
        Cmd::OperFit => vec![11],
        Cmd::Asymptotics => vec![8],
        Cmd::LimitStudy => vec![12],
        Cmd::DiffeqCheck => vec![9, 10],
    })
}

fn table<T: serde::de::DeserializeOwned>(rep: &SuiteReport, key: &str) -> Result<Option<T>, CliError> {
    match rep.tables.get(key) {
        Some(v) => Ok(Some(serde_json::from_value(v.clone())?)),
        None => Ok(None),
    }
}

fn writer(out: &Path, name: &str) -> Result<csv::Writer<fs::File>, CliError> {
    let p = out.join(name);
    let f = fs::File::create(&p).map_err(|e| CliError::Io(p, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn write_spectrum(out: &Path, rep: &SuiteReport) -> Result<Vec<String>, CliError> {
    let Some(rows) = table::<Vec<SpectrumRow>>(rep, "spectrum")? else { return Ok(vec![]) };
    let mut w = writer(out, "spectrum.csv")?;
    w.write_record(["k", "x_re", "x_im", "beta", "residual"])?;
    for r in rows.iter().filter(|r| r.k < 25) {
        w.write_record([r.k.to_string(), r.x.re.to_string(), r.x.im.to_string(), r.beta.to_string(), r.residual.to_string()])?;
    }
    w.flush().map_err(|e| CliError::Io(out.join("spectrum.csv"), e))?;
    Ok(vec!["spectrum.csv".into()])
}

fn write_operfit(out: &Path, rep: &SuiteReport) -> Result<Vec<String>, CliError> {
    let Some(rows) = table::<Vec<FitRow>>(rep, "scalar_ladder")? else { return Ok(vec![]) };
    let Some(last) = rows.last() else { return Ok(vec![]) };
    let mut w = writer(out, "operfit.csv")?;
    w.write_record(["i", "j", "nu_re", "nu_im", "residual"])?;
    for (i, row) in last.fit.nu.iter().enumerate() {
        for (j, nu) in row.iter().enumerate() {
            w.write_record([i.to_string(), j.to_string(), nu.re.to_string(), nu.im.to_string(), last.fit.relative_residual.to_string()])?;
        }
    }
    w.flush().map_err(|e| CliError::Io(out.join("operfit.csv"), e))?;
    Ok(vec!["operfit.csv".into()])
}

fn write_limit(out: &Path, rep: &SuiteReport, ladder: &str) -> Result<Vec<String>, CliError> {
    let Some(st) = table::<LimitStudy>(rep, ladder)? else { return Ok(vec![]) };
    let mut w = writer(out, "limit_study.csv")?;
    w.write_record(["delta", "distance", "max_pointwise_error"])?;
    for r in &st.rows {
        w.write_record([r.delta.to_string(), r.distance.to_string(), r.max_pointwise_error.to_string()])?;
    }
    w.flush().map_err(|e| CliError::Io(out.join("limit_study.csv"), e))?;
    Ok(vec!["limit_study.csv".into()])
}

fn command_name(cmd: &Cmd) -> &'static str {
    match cmd {
        Cmd::Verify { .. } => "verify",
        Cmd::Spectrum => "spectrum",
        Cmd::OperFit => "oper-fit",
        Cmd::Asymptotics => "asymptotics",
        Cmd::LimitStudy => "limit-study",
        Cmd::DiffeqCheck => "diffeq-check",
    }
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    let settings = load_settings(cli)?;
    let selected = criteria(cli)?;
    let ladder = cli.suite.clone().unwrap_or_else(|| "two_point".into());
    if matches!(cli.cmd, Cmd::LimitStudy) && !matches!(ladder.as_str(), "two_point" | "three_point") {
        return Err(CliError::Config(format!("unknown ladder {ladder:?}; expected two_point or three_point")));
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Config(format!("threads: {e}")))?;
    }
    fs::create_dir_all(&cli.out).map_err(|e| CliError::Io(cli.out.clone(), e))?;

    let mut reports = vec![];
    for &c in &selected {
        let rep = run_criterion(c, &settings)?;
        eprintln!("criterion {c:>2}: {} ({:.1} s)", if rep.passed() { "pass" } else { "FAIL" }, rep.seconds);
        for g in rep.gates.iter().filter(|g| !g.pass) {
            eprintln!("    failed {}: {:.3e} ({})", g.name, g.value, g.detail);
        }
        reports.push((c, rep));
    }

    let mut outputs = vec![];
    for (_, rep) in &reports {
        match cli.cmd {
            Cmd::Spectrum => outputs.extend(write_spectrum(&cli.out, rep)?),
            Cmd::OperFit => outputs.extend(write_operfit(&cli.out, rep)?),
            Cmd::LimitStudy => outputs.extend(write_limit(&cli.out, rep, &ladder)?),
            _ => {}
        }
    }

    let passed = reports.iter().all(|(_, r)| r.passed());
    let gates: Vec<&Gate> = reports.iter().flat_map(|(_, r)| r.gates.iter()).collect();
    let crit: Vec<Value> = reports.iter().map(|(c, r)| json!({ "criterion": c, "passed": r.passed(), "seconds": r.seconds })).collect();
    let tables: serde_json::Map<String, Value> =
        reports.iter().flat_map(|(c, r)| r.tables.iter().map(move |(k, v)| (format!("{c}.{}.{k}", r.suite), v.clone()))).collect();
    let summary = json!({
        "schema": 1,
        "command": command_name(&cli.cmd),
        "seed": settings.seed,
        "passed": passed,
        "criteria": crit,
        "gates": gates,
        "tables": tables,
        "outputs": outputs,
        "settings": settings,
    });
    let p = cli.out.join("summary.json");
    fs::write(&p, serde_json::to_string_pretty(&summary)?).map_err(|e| CliError::Io(p, e))?;
    Ok(passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
