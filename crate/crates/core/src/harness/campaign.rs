//! Monte Carlo trials and campaigns.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{generate_channel_set, ComplexChannelSet};
use crate::config::{validate, ConfigMap, IqiConfig, SystemConfig};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, CovarianceSet, UtilitySpec};
use crate::ris::membership;
use crate::solver::{ao_solve_from, initial_ris, Problem, SolveReport, SolverSettings};

use super::scheme::{RisKind, Scheme};

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `t`, independent of the schemes and sweep values run.
pub fn trial_seed(campaign_seed: u64, trial: usize) -> u64 {
    splitmix64(splitmix64(campaign_seed) ^ trial as u64)
}

/// Independent random streams of one trial.
#[derive(Debug, Clone, Copy)]
enum Stream {
    Channels = 0,
    RisInit = 1,
    Partition = 2,
    Solver = 3,
}

fn stream(seed: u64, s: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s as u64);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub seed: u64,
    pub trial: usize,
    pub sweep_value: String,
    pub scheme: String,
    pub users_per_cell: usize,
    pub utility: f64,
    /// `r[l][k]`, flattened.
    pub rates: Vec<f64>,
    pub ees: Vec<f64>,
    pub gee: f64,
    pub iterations: usize,
    pub wall_ms: f64,
    pub converged: bool,
    /// Largest decrease of the utility trace (0 when monotone).
    pub worst_decrease: f64,
    pub ris_violation: f64,
    pub covariance_violation: f64,
    /// Hash of the direct and BS-RIS channels of this trial.
    pub shared_channel_checksum: u64,
    pub error: Option<String>,
}

impl TrialResult {
    /// Equality of everything except the wall-clock time.
    pub fn same_outcome(&self, other: &TrialResult) -> bool {
        let mut a = self.clone();
        a.wall_ms = other.wall_ms;
        a == *other
    }
}

/// Run the solver for one scheme on one channel realization.
///
/// Returns the solve report and the complex channels used.
pub fn solve_scheme(
    base: &SystemConfig,
    scheme: &Scheme,
    spec: &UtilitySpec,
    settings: &SolverSettings,
    seed: u64,
) -> Result<(SolveReport, ComplexChannelSet, SystemConfig)> {
    let config = validate(scheme.apply(base)?).map_err(Error::Invalid)?;
    let mut channels = generate_channel_set(&config, &mut stream(seed, Stream::Channels));
    if scheme.kind == RisKind::None {
        channels = channels.without_ris();
    }
    let truth = Problem::new(&config, &channels);
    let design = if scheme.iqi_aware {
        truth.clone()
    } else {
        Problem::with_iqi(&config, &channels, &IqiConfig::ideal(config.subbands))
    };
    let ris0 = initial_ris(&config, &mut stream(seed, Stream::RisInit), &mut stream(seed, Stream::Partition))?;
    let covs0 = CovarianceSet::uniform(config.dims(), &config.power_budget);
    let mut s = settings.clone();
    s.freeze_ris |= !scheme.optimize_ris || scheme.kind == RisKind::None;
    let mut report = ao_solve_from(&design, spec, &s, covs0, ris0, &mut stream(seed, Stream::Solver))?;
    if !scheme.iqi_aware {
        let rc = truth.model.evaluate(&report.ris);
        report.evaluation = evaluate(spec, &rc, &report.covs, &truth.power_model)?;
    }
    let config = config.into_inner();
    Ok((report, channels, config))
}

/// Deterministic in `(base, scheme, spec, settings, seed)` apart from `wall_ms`.
pub fn run_trial(
    base: &SystemConfig,
    scheme: &Scheme,
    spec: &UtilitySpec,
    settings: &SolverSettings,
    seed: u64,
    trial: usize,
    sweep_value: &str,
) -> TrialResult {
    let start = Instant::now();
    let outcome = solve_scheme(base, scheme, spec, settings, seed);
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let mut result = TrialResult {
        seed,
        trial,
        sweep_value: sweep_value.to_string(),
        scheme: scheme.to_string(),
        users_per_cell: base.users_per_cell,
        utility: f64::NAN,
        rates: Vec::new(),
        ees: Vec::new(),
        gee: f64::NAN,
        iterations: 0,
        wall_ms,
        converged: false,
        worst_decrease: 0.0,
        ris_violation: f64::NAN,
        covariance_violation: f64::NAN,
        shared_channel_checksum: 0,
        error: None,
    };
    match outcome {
        Ok((report, channels, config)) => {
            result.utility = report.utility();
            result.rates = report.evaluation.rates.total.clone();
            result.ees = report.evaluation.ees.clone();
            result.gee = report.evaluation.gee;
            result.iterations = report.iterations;
            result.converged = report.converged;
            result.worst_decrease = report.worst_decrease();
            result.ris_violation = membership(&report.ris, config.feasibility_set, f64::INFINITY).worst_violation;
            result.covariance_violation = report.covs.worst_violation(&config.power_budget);
            result.shared_channel_checksum = channels.shared_links_checksum();
        }
        Err(e) => {
            log::warn!("trial {trial} (seed {seed}, scheme {scheme}, sweep {sweep_value}) failed: {e}");
            result.error = Some(e.to_string());
        }
    }
    result
}

/// One swept field and its values (as text, applied with [`ConfigMap::set_from_str`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub field: String,
    pub values: Vec<String>,
}

impl std::str::FromStr for Sweep {
    type Err = Error;

    /// `field=v1,v2,...`
    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::Unknown {
            what: "sweep",
            value: format!("{s} ({why})"),
        };
        let (field, list) = s.split_once('=').ok_or_else(|| bad("expected field=v1,v2,..."))?;
        let field = field.trim();
        if field.is_empty() {
            return Err(bad("empty field name"));
        }
        let values: Vec<String> = list.split(',').map(|v| v.trim().to_string()).collect();
        if values.iter().any(String::is_empty) {
            return Err(bad("empty value in list"));
        }
        Ok(Sweep {
            field: field.to_string(),
            values,
        })
    }
}

#[derive(Debug, Clone)]
pub struct CampaignSpec {
    pub base: ConfigMap,
    pub sweep: Option<Sweep>,
    pub schemes: Vec<Scheme>,
    pub trials: usize,
    pub seed: u64,
    pub utility: UtilitySpec,
    pub settings: SolverSettings,
    /// Directory for the CSV files; nothing is written when `None`.
    pub out: Option<PathBuf>,
    pub dump_channels: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub sweep_value: String,
    pub scheme: String,
    pub utility_mean: f64,
    pub utility_stderr: f64,
    pub n_trials: usize,
}

#[derive(Debug, Clone)]
pub struct CampaignResult {
    /// Ordered by sweep value, then scheme, then trial.
    pub trials: Vec<TrialResult>,
    pub summary: Vec<SummaryRow>,
}

impl CampaignResult {
    pub fn trials_for<'a>(&'a self, sweep_value: &'a str, scheme: &'a str) -> impl Iterator<Item = &'a TrialResult> + 'a {
        self.trials
            .iter()
            .filter(move |t| t.sweep_value == sweep_value && t.scheme == scheme)
    }

    pub fn failures(&self) -> usize {
        self.trials.iter().filter(|t| t.error.is_some()).count()
    }
}

/// Configurations of every sweep point (`("", base)` without a sweep).
pub fn sweep_configs(spec: &CampaignSpec) -> Result<Vec<(String, SystemConfig)>> {
    let points: Vec<Option<&str>> = match &spec.sweep {
        Some(s) => s.values.iter().map(|v| Some(v.as_str())).collect(),
        None => vec![None],
    };
    points
        .into_iter()
        .map(|v| {
            let mut map = spec.base.clone();
            if let (Some(s), Some(value)) = (&spec.sweep, v) {
                map.set_from_str(&s.field, value)?;
            }
            let config = map.to_config()?;
            let config = validate(config).map_err(Error::Invalid)?.into_inner();
            Ok((v.unwrap_or("").to_string(), config))
        })
        .collect()
}

fn thread_count() -> Option<usize> {
    std::env::var("RISOPT_THREADS").ok().and_then(|v| v.trim().parse().ok()).filter(|&n| n > 0)
}

/// Run every (sweep value, scheme, trial) combination. Trial `t` uses the
/// same seed for every scheme and sweep value, so comparisons are paired.
pub fn run_campaign(spec: &CampaignSpec) -> Result<CampaignResult> {
    if spec.trials == 0 {
        return Err(Error::Invalid(vec!["trials must be >= 1".into()]));
    }
    if spec.schemes.is_empty() {
        return Err(Error::Invalid(vec!["at least one scheme is required".into()]));
    }
    let configs = sweep_configs(spec)?;
    for (_, c) in &configs {
        for s in &spec.schemes {
            validate(s.apply(c)?).map_err(Error::Invalid)?;
        }
    }
    let jobs: Vec<(usize, usize, usize)> = (0..configs.len())
        .flat_map(|v| (0..spec.schemes.len()).flat_map(move |s| (0..spec.trials).map(move |t| (v, s, t))))
        .collect();
    let run = |&(v, s, t): &(usize, usize, usize)| {
        let (value, config) = &configs[v];
        let seed = trial_seed(spec.seed, t);
        let r = run_trial(config, &spec.schemes[s], &spec.utility, &spec.settings, seed, t, value);
        log::info!("sweep {value:?} scheme {} trial {t}: utility {:.6}", r.scheme, r.utility);
        r
    };
    let trials: Vec<TrialResult> = match thread_count() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Invalid(vec![format!("RISOPT_THREADS: {e}")]))?
            .install(|| jobs.par_iter().map(run).collect()),
        None => jobs.par_iter().map(run).collect(),
    };

    let mut summary = Vec::new();
    for (value, _) in &configs {
        for s in &spec.schemes {
            let name = s.to_string();
            let u: Vec<f64> = trials
                .iter()
                .filter(|t| &t.sweep_value == value && t.scheme == name && t.error.is_none())
                .map(|t| t.utility)
                .collect();
            let n = u.len();
            let mean = if n > 0 { u.iter().sum::<f64>() / n as f64 } else { f64::NAN };
            let stderr = if n > 1 {
                (u.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 / n as f64).sqrt()
            } else {
                0.0
            };
            summary.push(SummaryRow {
                sweep_value: value.clone(),
                scheme: name,
                utility_mean: mean,
                utility_stderr: stderr,
                n_trials: n,
            });
        }
    }
    let result = CampaignResult { trials, summary };
    if let Some(dir) = &spec.out {
        write_outputs(&result, dir)?;
        if spec.dump_channels {
            dump_channels(spec, &configs, dir)?;
        }
    }
    Ok(result)
}

/// `summary.csv` and `trials.csv` in `dir`.
pub fn write_outputs(result: &CampaignResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record(["sweep_value", "scheme", "utility_mean", "utility_stderr", "n_trials"])?;
    for r in &result.summary {
        w.write_record([
            r.sweep_value.clone(),
            r.scheme.clone(),
            format!("{:?}", r.utility_mean),
            format!("{:?}", r.utility_stderr),
            r.n_trials.to_string(),
        ])?;
    }
    w.flush()?;

    let max_users = result.trials.iter().map(|t| t.rates.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_path(dir.join("trials.csv"))?;
    let mut header: Vec<String> = ["seed", "sweep_value", "scheme", "utility", "iterations", "wall_ms"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..max_users).map(|u| format!("rate_u{u}")));
    w.write_record(&header)?;
    for t in &result.trials {
        let mut row = vec![
            t.seed.to_string(),
            t.sweep_value.clone(),
            t.scheme.clone(),
            format!("{:?}", t.utility),
            t.iterations.to_string(),
            format!("{:.3}", t.wall_ms),
        ];
        row.extend((0..max_users).map(|u| t.rates.get(u).map_or(String::new(), |r| format!("{r:?}"))));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn dump_channels(spec: &CampaignSpec, configs: &[(String, SystemConfig)], dir: &Path) -> Result<()> {
    let sub = dir.join("channels");
    std::fs::create_dir_all(&sub)?;
    for (v, (_, base)) in configs.iter().enumerate() {
        for (s, scheme) in spec.schemes.iter().enumerate() {
            let config = validate(scheme.apply(base)?).map_err(Error::Invalid)?;
            for t in 0..spec.trials {
                let seed = trial_seed(spec.seed, t);
                let mut ch = generate_channel_set(&config, &mut stream(seed, Stream::Channels));
                if scheme.kind == RisKind::None {
                    ch = ch.without_ris();
                }
                let file = std::fs::File::create(sub.join(format!("sweep{v}_scheme{s}_trial{t}.csv")))?;
                ch.write_csv(std::io::BufWriter::new(file))?;
            }
        }
    }
    Ok(())
}
