//! Command-line surface: weight-curve emission, dataset analysis,
//! single-trial simulation, and Monte Carlo power studies.
//!
//! Exit codes: 0 success, 2 usage or config problem, 3 unreadable or
//! malformed data, 4 numerical degeneracy (a test without usable variance).

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use switchlr::harness::{events_sweep, run_power_study, PowerStudyConfig, TestKind};
use switchlr::hypotests::{fleming_harrington, logrank, max_combo, mwlr, rmst_test, FHParams};
use switchlr::model::{hazard_ratio, rates_from_medians, weight_function, SwitchModelParams};
use switchlr::sim::{simulate_trial, ScenarioConfig};
use switchlr::survdata::{minimax_time, SurvivalDataset};
use switchlr::{Error, Result};

#[derive(Parser)]
#[command(
    name = "switchlr",
    version,
    about = "Survival tests and trial simulation for treatment switching. All times are months."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit the design hazard-ratio and weight curves on a time grid as CSV
    /// (columns p_prime,t,eta,w).
    Weights(WeightsArgs),
    /// Run tests on a dataset CSV and print one JSON object per test.
    Analyze(AnalyzeArgs),
    /// Simulate one trial and write its dataset CSV plus a JSON sidecar
    /// with the realized cutoff.
    Simulate(SimulateArgs),
    /// Run a Monte Carlo power study from a TOML config; writes results.csv
    /// and manifest.json. SWITCHLR_WORKERS caps the worker threads
    /// (default: all cores).
    Power(PowerArgs),
}

#[derive(Args)]
struct WeightsArgs {
    /// Assumed control PFS median (months).
    #[arg(long, default_value_t = 2.0)]
    pfs0: f64,
    /// Assumed control OS median (months).
    #[arg(long, default_value_t = 10.0)]
    os0: f64,
    /// Assumed experimental OS median (months).
    #[arg(long, default_value_t = 15.0)]
    os1: f64,
    /// Assumed switch probability. Omit to emit the whole curve family for
    /// p' in {0, 0.2, 0.4, 0.6, 0.8, 1}.
    #[arg(long = "p-prime")]
    p_prime: Option<f64>,
    /// Largest grid time (months).
    #[arg(long = "t-max", default_value_t = 40.0)]
    t_max: f64,
    /// Grid spacing (months).
    #[arg(long, default_value_t = 0.5)]
    step: f64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Dataset CSV (columns time,event,arm[,switch_time]).
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated tests: lr,mwlr,fh,maxcombo,rmst.
    #[arg(long)]
    tests: String,
    /// Design control PFS median for mwlr (months).
    #[arg(long)]
    pfs0: Option<f64>,
    /// Design control OS median for mwlr (months).
    #[arg(long)]
    os0: Option<f64>,
    /// Design experimental OS median for mwlr (months).
    #[arg(long)]
    os1: Option<f64>,
    /// Design switch probability for mwlr.
    #[arg(long = "p-prime")]
    p_prime: Option<f64>,
    /// Fleming-Harrington rho for the fh test.
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    /// Fleming-Harrington gamma for the fh test.
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario TOML; omit for the built-in reference design.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Seed (overrides a seed in the scenario file).
    #[arg(long)]
    seed: Option<u64>,
    /// Output dataset CSV path; the sidecar lands next to it as
    /// <out>.meta.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PowerArgs {
    /// Study config TOML.
    #[arg(long)]
    config: PathBuf,
    /// Seed (overrides a seed in the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides out_dir in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replications per scenario (overrides the config).
    #[arg(long, conflicts_with = "full")]
    replications: Option<usize>,
    /// Run the full 10000 replications per scenario instead of the desk
    /// default of 2000.
    #[arg(long)]
    full: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidParams(_) | Error::Config(_) => 2,
        Error::Data(_) | Error::Io(_) => 3,
        Error::DegenerateVariance(_) => 4,
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Weights(args) => weights(args),
        Command::Analyze(args) => analyze(args),
        Command::Simulate(args) => simulate(args),
        Command::Power(args) => power(args),
    }
}

fn weights(args: WeightsArgs) -> Result<()> {
    if !(args.t_max.is_finite() && args.t_max > 0.0) {
        return Err(Error::InvalidParams(format!("t-max must be positive, got {}", args.t_max)));
    }
    if !(args.step.is_finite() && args.step > 0.0) {
        return Err(Error::InvalidParams(format!("step must be positive, got {}", args.step)));
    }
    let family = match args.p_prime {
        Some(p) => vec![p],
        None => vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
    };

    let mut out = String::from("p_prime,t,eta,w\n");
    for &p_prime in &family {
        let params = SwitchModelParams::new(args.pfs0, args.os0, args.os1, p_prime)?;
        let rates = rates_from_medians(&params);
        let mut i = 0u64;
        loop {
            let t = i as f64 * args.step;
            if t > args.t_max + 1e-9 {
                break;
            }
            let eta = hazard_ratio(&rates, p_prime, t);
            let w = weight_function(&params, t);
            out.push_str(&format!("{p_prime},{t},{eta},{w}\n"));
            i += 1;
        }
    }
    write_text_output(args.out.as_deref(), &out)
}

fn write_text_output(path: Option<&std::path::Path>, text: &str) -> Result<()> {
    match path {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn parse_test_list(list: &str) -> Result<Vec<TestKind>> {
    let mut kinds = Vec::new();
    for raw in list.split(',') {
        let name = raw.trim();
        let kind = match name {
            "lr" => TestKind::Lr,
            "mwlr" => TestKind::Mwlr,
            "fh" => TestKind::Fh,
            "maxcombo" => TestKind::MaxCombo,
            "rmst" => TestKind::Rmst,
            other => {
                return Err(Error::InvalidParams(format!(
                    "unknown test `{other}` (expected lr, mwlr, fh, maxcombo, rmst)"
                )))
            }
        };
        kinds.push(kind);
    }
    if kinds.is_empty() {
        return Err(Error::InvalidParams("no tests requested".into()));
    }
    Ok(kinds)
}

/// One JSON result line with a fixed field order.
fn result_line(test: &str, u: f64, v: f64, z: f64, p: f64, tau: Option<f64>) -> String {
    match tau {
        Some(tau) => {
            format!("{{\"test\":\"{test}\",\"U\":{u},\"V\":{v},\"z\":{z},\"p\":{p},\"tau\":{tau}}}")
        }
        None => format!("{{\"test\":\"{test}\",\"U\":{u},\"V\":{v},\"z\":{z},\"p\":{p}}}"),
    }
}

fn error_line(test: &str, e: &Error) -> String {
    let message = serde_json::to_string(&e.to_string()).expect("string serialization");
    format!("{{\"test\":\"{test}\",\"error\":{message}}}")
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let kinds = parse_test_list(&args.tests)?;

    let design = if kinds.contains(&TestKind::Mwlr) {
        match (args.pfs0, args.os0, args.os1, args.p_prime) {
            (Some(pfs0), Some(os0), Some(os1), Some(p_prime)) => {
                Some(SwitchModelParams::new(pfs0, os0, os1, p_prime)?)
            }
            _ => {
                return Err(Error::InvalidParams(
                    "mwlr needs the full design: --pfs0, --os0, --os1 and --p-prime".into(),
                ))
            }
        }
    } else {
        None
    };
    let fh_params = FHParams::new(args.rho, args.gamma)?;

    let data = SurvivalDataset::read_csv_path(&args.data)?;

    let mut successes = 0usize;
    let mut last_error: Option<Error> = None;
    for kind in kinds {
        let line = match kind {
            TestKind::Lr => logrank(&data)
                .map(|r| result_line("lr", r.statistic_u, r.variance_v, r.z, r.p_one_sided, None)),
            TestKind::Mwlr => mwlr(&data, design.as_ref().expect("checked above")).map(|r| {
                result_line("mwlr", r.statistic_u, r.variance_v, r.z, r.p_one_sided, None)
            }),
            TestKind::Fh => fleming_harrington(&data, fh_params).map(|r| {
                result_line("fh", r.statistic_u, r.variance_v, r.z, r.p_one_sided, None)
            }),
            TestKind::MaxCombo => max_combo(&data).map(|r| {
                let best = &r.components[r.best_component()];
                result_line("maxcombo", best.statistic_u, best.variance_v, r.z_max, r.p_one_sided, None)
            }),
            TestKind::Rmst => rmst_test(&data).and_then(|r| {
                let tau = minimax_time(&data)?;
                Ok(result_line("rmst", r.statistic_u, r.variance_v, r.z, r.p_one_sided, Some(tau)))
            }),
        };
        match line {
            Ok(line) => {
                println!("{line}");
                successes += 1;
            }
            Err(e) => {
                println!("{}", error_line(kind.name(), &e));
                last_error = Some(e);
            }
        }
    }
    // Per-test failures are reported inline and only fail the run when
    // nothing succeeded.
    match last_error {
        Some(e) if successes == 0 => Err(e),
        _ => Ok(()),
    }
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let config = match &args.scenario {
        Some(path) => ScenarioConfig::from_toml_str(&fs::read_to_string(path)?)?,
        None => ScenarioConfig::default(),
    };
    let scenario = config.into_scenario(args.seed)?;
    let trial = simulate_trial(&scenario)?;

    let mut file = fs::File::create(&args.out)?;
    trial.dataset.write_csv(&mut file)?;

    #[derive(serde::Serialize)]
    struct Sidecar<'a> {
        scenario: &'a switchlr::sim::TrialScenario,
        cutoff_calendar: f64,
        n_events: usize,
        dataset_digest: String,
    }
    let sidecar = Sidecar {
        scenario: &scenario,
        cutoff_calendar: trial.cutoff_calendar,
        n_events: trial.dataset.n_events(),
        dataset_digest: format!("{:016x}", switchlr::harness::dataset_digest(&trial.dataset)),
    };
    let sidecar_path = args.out.with_extension("meta.json");
    fs::write(&sidecar_path, serde_json::to_string_pretty(&sidecar).expect("sidecar json"))?;

    println!(
        "wrote {} ({} records, {} events, cutoff {} months) and {}",
        args.out.display(),
        trial.dataset.len(),
        trial.dataset.n_events(),
        trial.cutoff_calendar,
        sidecar_path.display()
    );
    Ok(())
}

fn configure_workers() -> Result<()> {
    if let Ok(value) = std::env::var("SWITCHLR_WORKERS") {
        let workers: usize = value
            .trim()
            .parse()
            .ok()
            .filter(|&w| w >= 1)
            .ok_or_else(|| {
                Error::Config(format!("SWITCHLR_WORKERS must be a positive integer, got `{value}`"))
            })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| Error::Config(format!("worker pool setup failed: {e}")))?;
    }
    Ok(())
}

fn power(args: PowerArgs) -> Result<()> {
    configure_workers()?;
    let text = fs::read_to_string(&args.config)?;
    let mut config = PowerStudyConfig::from_toml_str(&text)?;

    // Desk-scale default: a config that does not pin the replication count
    // runs at 2000 unless --full (or an explicit --replications) asks for
    // more.
    let file_sets_m = toml::from_str::<toml::Value>(&text)
        .map(|v| v.get("replications").is_some())
        .unwrap_or(false);
    if let Some(m) = args.replications {
        config.replications = m;
    } else if args.full {
        config.replications = 10_000;
    } else if !file_sets_m {
        config.replications = 2_000;
    }

    if args.seed.is_some() {
        config.seed = args.seed;
    }
    let out_dir = args
        .out
        .or_else(|| config.out_dir.clone())
        .ok_or_else(|| Error::Config("no output directory: pass --out or set out_dir".into()))?;

    let result = if config.target_deaths.values().len() > 1 {
        events_sweep(&config)?
    } else {
        run_power_study(&config)?
    };

    fs::create_dir_all(&out_dir)?;
    let results_path = out_dir.join("results.csv");
    let manifest_path = out_dir.join("manifest.json");
    fs::write(&results_path, result.results_csv_string())?;
    fs::write(&manifest_path, result.manifest_json())?;
    println!("wrote {} and {}", results_path.display(), manifest_path.display());

    if result.fully_degenerate() {
        return Err(Error::DegenerateVariance(
            "some scenario produced only degenerate replications for a test (outputs were written)"
                .into(),
        ));
    }
    Ok(())
}
