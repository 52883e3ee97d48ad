use airs_crb::harness::{load_run_file, parse_case, write_csv, RunFile};
use airs_crb::optimizer::{run_benchmark, Scheme};
use airs_crb::{ChannelSet, Error, SensingCase};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Exit status for an invalid or unreadable config.
const EXIT_CONFIG: u8 = 3;
/// Exit status for a solver or numerical failure.
const EXIT_NUMERICAL: u8 = 4;
/// Exit status when a selftest check fails.
const EXIT_SELFTEST: u8 = 1;

#[derive(Parser, Debug)]
#[command(
    name = "airs-crb",
    version,
    about = "Min-max CRB beamforming for active-IRS assisted sensing"
)]
struct Cli {
    /// Override the seed from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Restrict to one sensing case.
    #[arg(long, global = true, value_parser = ["bs", "irs"])]
    case: Option<String>,
    /// Restrict to one scheme (proposed, transmit_only, reflective_only, passive_irs).
    #[arg(long, global = true)]
    scheme: Option<String>,
    /// Use the full-size BS array (M = 16) instead of the desk-scale default.
    #[arg(long, global = true)]
    full: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a parameter sweep and write one CSV row per (case, scheme, grid point, draw).
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Optimize one scenario and print the per-IRS CRBs of every scheme.
    Crb {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the built-in oracle and invariant checks.
    Selftest,
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_config() {
        EXIT_CONFIG
    } else {
        EXIT_NUMERICAL
    })
}

fn load(cli: &Cli, path: Option<&PathBuf>) -> Result<RunFile, Error> {
    let mut rf = match path {
        Some(p) => load_run_file(p)?,
        None => airs_crb::harness::parse_run_file("")?,
    };
    if let Some(seed) = cli.seed {
        rf.set_seed(seed);
    }
    if cli.full {
        rf.scenario.m = 16;
        rf.sweep.base.m = 16;
    }
    if let Some(c) = &cli.case {
        rf.sweep.cases = vec![parse_case(c)?];
    }
    if let Some(s) = &cli.scheme {
        rf.sweep.schemes = vec![s.parse()?];
    }
    Ok(rf)
}

fn sweep(cli: &Cli, config: &PathBuf, out: &PathBuf) -> ExitCode {
    let rf = match load(cli, Some(config)) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    let rows = match airs_crb::harness::run_sweep(&rf.sweep) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    if let Err(e) = write_csv(&rows, out) {
        return fail(&e);
    }
    let failed = rows.iter().filter(|r| !r.is_ok()).count();
    if failed > 0 {
        eprintln!(
            "{failed} of {} rows failed; see the error column",
            rows.len()
        );
    }
    println!("wrote {} rows to {}", rows.len(), out.display());
    ExitCode::SUCCESS
}

fn crb(cli: &Cli, config: Option<&PathBuf>) -> ExitCode {
    let rf = match load(cli, config) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    let cfg = &rf.sweep.base;
    let channel = match ChannelSet::synthesize(cfg, 0) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let cases: Vec<SensingCase> = rf.sweep.cases.clone();
    let schemes: Vec<Scheme> = rf.sweep.schemes.clone();
    println!(
        "case,scheme,max_crb,{}",
        (0..channel.len())
            .map(|l| format!("crb_irs_{l}"))
            .collect::<Vec<_>>()
            .join(",")
    );
    for case in cases {
        for &scheme in &schemes {
            match run_benchmark(scheme, case, &channel, cfg, &rf.opts) {
                Ok(tr) => {
                    let per: Vec<String> = tr.per_irs_crb.iter().map(|v| v.to_string()).collect();
                    println!(
                        "{},{},{},{}",
                        case.label(),
                        scheme,
                        tr.final_max_crb(),
                        per.join(",")
                    );
                }
                Err(e) => return fail(&e),
            }
        }
    }
    ExitCode::SUCCESS
}

fn selftest() -> ExitCode {
    let checks = airs_crb::selftest::run();
    let mut ok = true;
    for c in &checks {
        println!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
        ok &= c.passed;
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_SELFTEST)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("AIRS_CRB_LOG", "warn")).init();
    let cli = Cli::parse();
    log::debug!("{cli:?}");
    match &cli.command {
        Command::Sweep { config, out } => sweep(&cli, config, out),
        Command::Crb { config } => crb(&cli, config.as_ref()),
        Command::Selftest => selftest(),
    }
}
