//! Monte Carlo campaigns over schemes and scenario sweeps, and the CLI.

pub mod campaign;
pub mod cli;
pub mod scheme;

pub use campaign::{
    run_campaign, run_trial, solve_scheme, sweep_configs, trial_seed, write_outputs, CampaignResult, CampaignSpec,
    SummaryRow, Sweep, TrialResult,
};
pub use cli::cli_main;
pub use scheme::{RisKind, Scheme};
