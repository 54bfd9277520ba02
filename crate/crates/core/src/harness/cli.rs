//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 invalid usage or configuration, 2 runtime failure.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;

use crate::config::{validate, ConfigMap};
use crate::error::Error;
use crate::metrics::UtilitySpec;
use crate::solver::SolverSettings;

use super::campaign::{run_campaign, CampaignSpec, Sweep};
use super::scheme::Scheme;

#[derive(Debug, Parser)]
#[command(name = "risopt", about = "Monte Carlo campaigns for joint covariance and RIS optimization")]
struct Args {
    /// Scenario file (TOML key-value format).
    #[arg(long)]
    config: PathBuf,
    /// minrate | sumrate | minee | gee
    #[arg(long, default_value = "minrate")]
    utility: String,
    /// Scheme to run (repeatable), e.g. `regular`, `star:T_SN:ES`, `none`, `regular:rand`.
    #[arg(long = "scheme")]
    schemes: Vec<String>,
    /// Sweep one field: `<field>=<v1,v2,...>`.
    #[arg(long)]
    sweep: Option<String>,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for summary.csv and trials.csv.
    #[arg(long, default_value = "risopt-out")]
    out: PathBuf,
    /// Also write every channel realization as CSV.
    #[arg(long)]
    dump_channels: bool,
    #[arg(long)]
    verbose: bool,
}

fn usage_error(flag: &str, e: impl std::fmt::Display) -> i32 {
    eprintln!("error: {flag}: {e}");
    1
}

fn build_spec(args: &Args) -> Result<CampaignSpec, i32> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| usage_error("--config", format!("{}: {e}", args.config.display())))?;
    let base = ConfigMap::parse(&text).map_err(|e| usage_error("--config", e))?;
    let config = base.to_config().map_err(|e| usage_error("--config", e))?;
    if let Err(v) = validate(config) {
        return Err(usage_error("--config", v.join("; ")));
    }
    let utility: UtilitySpec = args.utility.parse().map_err(|e| usage_error("--utility", e))?;
    let schemes = if args.schemes.is_empty() {
        vec![Scheme::new(super::scheme::RisKind::Regular)]
    } else {
        args.schemes
            .iter()
            .map(|s| s.parse::<Scheme>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| usage_error("--scheme", e))?
    };
    let sweep = match &args.sweep {
        Some(s) => Some(s.parse::<Sweep>().map_err(|e| usage_error("--sweep", e))?),
        None => None,
    };
    if args.trials == 0 {
        return Err(usage_error("--trials", "must be >= 1"));
    }
    Ok(CampaignSpec {
        base,
        sweep,
        schemes,
        trials: args.trials,
        seed: args.seed,
        utility,
        settings: SolverSettings::default(),
        out: Some(args.out.clone()),
        dump_channels: args.dump_channels,
    })
}

/// Run the CLI with `args` (including the program name) and return the exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = if args.verbose { log::LevelFilter::Debug } else { log::LevelFilter::Warn };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();

    let spec = match build_spec(&args) {
        Ok(s) => s,
        Err(code) => return code,
    };
    match run_campaign(&spec) {
        Ok(result) => {
            let failed = result.failures();
            if failed == result.trials.len() {
                eprintln!("error: all {failed} trials failed");
                return 2;
            }
            if failed > 0 {
                eprintln!("warning: {failed} of {} trials failed (see log)", result.trials.len());
            }
            for row in &result.summary {
                println!(
                    "{}\t{}\t{:.6}\t±{:.6}\t(n={})",
                    row.sweep_value, row.scheme, row.utility_mean, row.utility_stderr, row.n_trials
                );
            }
            0
        }
        Err(e @ (Error::Config { .. } | Error::Invalid(_) | Error::Unknown { .. })) => {
            let flag = if spec.sweep.is_some() { "--sweep" } else { "--scheme" };
            usage_error(flag, e)
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
