//! Alternating majorization-minimization over covariances and RIS coefficients.
//!
//! Each outer iteration maximizes the covariance-block surrogate (inside a
//! Dinkelbach loop for EE utilities), then the RIS-block surrogate, and
//! evaluates the true utility. Both steps start from the current point and
//! never return a worse surrogate value, so the utility trace is monotone.

pub mod dinkelbach;
pub mod projection;
pub mod spg;
pub mod update;

use std::io::Write;

use rand::{Rng, SeedableRng};

use crate::channel::ComplexChannelSet;
use crate::config::{FeasibilitySet, IqiConfig, OpMode, PowerModel, SystemConfig, ValidatedConfig};
use crate::error::Result;
use crate::impairment::RealChannelModel;
use crate::metrics::{evaluate, CovarianceSet, Evaluation, UtilitySpec};
use crate::ris::{membership, ms_partition, RisState};
use crate::surrogate::{rate_bounds_p, surrogate_utility, Block, ExpansionPointP, ExpansionPointPhi};

pub use dinkelbach::{dinkelbach, DinkelbachTrace};
pub use projection::{project_capped_simplex, project_covariances};
pub use update::{update_covariances, update_ris, CovarianceUpdate, RisUpdate};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub max_outer_iters: usize,
    /// Relative change of the utility that ends the outer loop.
    pub outer_tol: f64,
    pub inner_max_iters: usize,
    pub inner_tol: f64,
    /// Armijo sufficient-increase constant.
    pub armijo: f64,
    /// Backtracking factor.
    pub backtrack: f64,
    pub dinkelbach_tol: f64,
    pub dinkelbach_max_iters: usize,
    /// Overrides the configured CCP slack when set.
    pub epsilon_ccp: Option<f64>,
    /// Softmin temperature of min-type utilities relative to the mean rate
    /// at the first outer iteration (0 disables smoothing).
    pub softmin_rel: f64,
    /// The temperature halves every outer iteration down to this floor.
    pub softmin_floor: f64,
    /// Keep the initial RIS state (random-RIS baseline).
    pub freeze_ris: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            max_outer_iters: 100,
            outer_tol: 1e-4,
            inner_max_iters: 300,
            inner_tol: 1e-6,
            armijo: 1e-4,
            backtrack: 0.5,
            dinkelbach_tol: 1e-6,
            dinkelbach_max_iters: 30,
            epsilon_ccp: None,
            softmin_rel: 1e-2,
            softmin_floor: 1e-3,
            freeze_ris: false,
        }
    }
}

impl SolverSettings {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (name, x) in [
            ("outer_tol", self.outer_tol),
            ("inner_tol", self.inner_tol),
            ("dinkelbach_tol", self.dinkelbach_tol),
            ("armijo", self.armijo),
            ("backtrack", self.backtrack),
        ] {
            if !(x > 0.0 && x < 1.0) {
                v.push(format!("{name} must lie in (0, 1), got {x}"));
            }
        }
        for (name, x) in [
            ("max_outer_iters", self.max_outer_iters),
            ("inner_max_iters", self.inner_max_iters),
            ("dinkelbach_max_iters", self.dinkelbach_max_iters),
        ] {
            if x == 0 {
                v.push(format!("{name} must be positive"));
            }
        }
        if let Some(e) = self.epsilon_ccp {
            if !(e > 0.0 && e < 1.0) {
                v.push(format!("epsilon_ccp must lie in (0, 1), got {e}"));
            }
        }
        if self.softmin_rel < 0.0 {
            v.push("softmin_rel must be non-negative".into());
        }
        if !(self.softmin_floor >= 0.0 && self.softmin_floor <= self.softmin_rel.max(0.0)) {
            v.push("softmin_floor must lie in [0, softmin_rel]".into());
        }
        v
    }
}

/// Everything the optimizer needs about one channel realization.
#[derive(Debug, Clone)]
pub struct Problem {
    pub model: RealChannelModel,
    pub budgets: Vec<f64>,
    pub power_model: PowerModel,
    pub feasibility_set: FeasibilitySet,
    pub epsilon_ccp: f64,
}

impl Problem {
    pub fn new(config: &SystemConfig, channels: &ComplexChannelSet) -> Self {
        Problem::with_iqi(config, channels, &config.iqi)
    }

    /// Same problem with the I/Q-imbalance parameters replaced (e.g. the
    /// ideal-hardware model of an impairment-unaware design).
    pub fn with_iqi(config: &SystemConfig, channels: &ComplexChannelSet, iqi: &IqiConfig) -> Self {
        Problem {
            model: RealChannelModel::new(channels, iqi, config.noise_power),
            budgets: config.power_budget.clone(),
            power_model: config.power_model.clone(),
            feasibility_set: config.feasibility_set,
            epsilon_ccp: config.epsilon_ccp,
        }
    }
}

/// Random feasible starting state: uniform phases with amplitude `1/√N_s`
/// (ES) or unit in-group coefficients on a random partition (MS).
pub fn initial_ris<R: Rng + ?Sized, Q: Rng + ?Sized>(config: &SystemConfig, ris_rng: &mut R, partition_rng: &mut Q) -> Result<RisState> {
    let d = config.dims();
    let groups = match config.op_mode {
        OpMode::ModeSwitching => Some(
            (0..d.ris)
                .map(|_| ms_partition(partition_rng, d.elements, d.sectors))
                .collect::<Result<Vec<_>>>()?,
        ),
        OpMode::EnergySplitting => None,
    };
    RisState::random(d.ris, d.elements, d.sectors, config.feasibility_set, groups.as_deref(), ris_rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RisStepRecord {
    pub iteration: usize,
    pub accepted: bool,
    pub surrogate_prev: f64,
    pub surrogate_candidate: f64,
    pub degenerate: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub ris_worst_violation: f64,
    pub covariance_worst_violation: f64,
    pub degenerate_normalizations: usize,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    /// True utility before the first and after every outer iteration.
    pub objective_trace: Vec<f64>,
    /// Per-user rates matching `objective_trace`.
    pub rate_trace: Vec<Vec<f64>>,
    pub covs: CovarianceSet,
    pub ris: RisState,
    pub evaluation: Evaluation,
    pub iterations: usize,
    pub converged: bool,
    pub ris_steps: Vec<RisStepRecord>,
    pub dinkelbach: Vec<DinkelbachTrace>,
    pub feasibility: FeasibilityReport,
}

impl SolveReport {
    pub fn utility(&self) -> f64 {
        self.evaluation.utility
    }

    /// Largest decrease between consecutive trace entries (0 if monotone).
    pub fn worst_decrease(&self) -> f64 {
        self.objective_trace.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max)
    }

    /// CSV rows `iteration,utility,rate_<l>_<k>...` plus a final `summary` row.
    pub fn write_trace_csv<W: Write>(&self, w: W) -> Result<()> {
        let d = self.covs.dims();
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["iteration".to_string(), "utility".to_string()];
        for l in 0..d.cells {
            for k in 0..d.users {
                header.push(format!("rate_{l}_{k}"));
            }
        }
        out.write_record(&header)?;
        for (t, (u, rates)) in self.objective_trace.iter().zip(&self.rate_trace).enumerate() {
            let mut row = vec![t.to_string(), format!("{u:?}")];
            row.extend(rates.iter().map(|r| format!("{r:?}")));
            out.write_record(&row)?;
        }
        let mut row = vec!["summary".to_string(), format!("{:?}", self.utility())];
        row.extend(self.evaluation.rates.total.iter().map(|r| format!("{r:?}")));
        out.write_record(&row)?;
        out.flush()?;
        Ok(())
    }
}

/// Solve from the default start: uniform power split and a random RIS state
/// drawn from `rng`.
pub fn ao_solve<R: Rng + ?Sized>(
    config: &ValidatedConfig,
    channels: &ComplexChannelSet,
    spec: &UtilitySpec,
    settings: &SolverSettings,
    rng: &mut R,
) -> Result<SolveReport> {
    let problem = Problem::new(config, channels);
    let ris0 = {
        let mut partition_rng = rand_chacha::ChaCha8Rng::seed_from_u64(rng.random());
        initial_ris(config, rng, &mut partition_rng)?
    };
    let covs0 = CovarianceSet::uniform(config.dims(), &config.power_budget);
    ao_solve_from(&problem, spec, settings, covs0, ris0, rng)
}

/// Alternating optimization from an explicit starting point.
pub fn ao_solve_from<R: Rng + ?Sized>(
    problem: &Problem,
    spec: &UtilitySpec,
    settings: &SolverSettings,
    covs0: CovarianceSet,
    ris0: RisState,
    rng: &mut R,
) -> Result<SolveReport> {
    let model = &problem.model;
    let d = model.dims();
    let pm = &problem.power_model;
    let epsilon = settings.epsilon_ccp.unwrap_or(problem.epsilon_ccp);
    let ris_active = !settings.freeze_ris
        && (0..d.cells).any(|l| (0..d.users).any(|k| model.depends_on_ris(l, k)));

    let mut covs = project_covariances(&covs0, &problem.budgets);
    let mut ris = ris0;
    let mut rc = model.evaluate(&ris);
    let mut eval = evaluate(spec, &rc, &covs, pm)?;
    let mut objective_trace = vec![eval.utility];
    let mut rate_trace = vec![eval.rates.total.clone()];
    let mut ris_steps = Vec::new();
    let mut dinkelbach_traces = Vec::new();
    let mut degenerate_total = 0;
    let mut converged = false;
    let mut iterations = 0;

    let mut step_settings = settings.clone();
    for t in 1..=settings.max_outer_iters {
        iterations = t;
        let prev_utility = eval.utility;
        let settings = &step_settings;

        let exp_p = ExpansionPointP::new(&rc, &covs)?;
        covs = if spec.is_fractional() {
            let ratio = |c: &CovarianceSet| -> Result<f64> {
                let b = rate_bounds_p(&exp_p, c, false)?;
                Ok(surrogate_utility(spec, &b, Block::Ris { covs: c }, pm, None).0)
            };
            let solve = |c: &CovarianceSet, lambda: f64| -> Result<(CovarianceSet, f64)> {
                let u = update_covariances(&exp_p, c, spec, lambda, &problem.budgets, pm, settings)?;
                Ok((u.covs, u.value))
            };
            let (c, _, trace) = dinkelbach(
                covs.clone(),
                ratio,
                solve,
                None,
                settings.dinkelbach_tol,
                settings.dinkelbach_max_iters,
            )?;
            dinkelbach_traces.push(trace);
            c
        } else {
            update_covariances(&exp_p, &covs, spec, 0.0, &problem.budgets, pm, settings)?.covs
        };

        if ris_active {
            let exp_phi = ExpansionPointPhi::new(model, &ris, &covs)?;
            let step = update_ris(&exp_phi, model, spec, problem.feasibility_set, epsilon, pm, settings, rng)?;
            degenerate_total += step.degenerate;
            ris_steps.push(RisStepRecord {
                iteration: t,
                accepted: step.accepted,
                surrogate_prev: step.surrogate_prev,
                surrogate_candidate: step.surrogate_candidate,
                degenerate: step.degenerate,
            });
            if step.accepted {
                ris = step.ris;
                rc = model.evaluate(&ris);
            }
        }

        eval = evaluate(spec, &rc, &covs, pm)?;
        objective_trace.push(eval.utility);
        rate_trace.push(eval.rates.total.clone());
        log::debug!("outer iteration {t}: utility {:.6}", eval.utility);
        let change = (eval.utility - prev_utility).abs();
        let annealed = settings.softmin_rel <= settings.softmin_floor;
        if annealed && change <= settings.outer_tol * prev_utility.abs().max(1e-12) {
            converged = true;
            break;
        }
        step_settings.softmin_rel = (0.5 * step_settings.softmin_rel).max(step_settings.softmin_floor);
    }

    let feasibility = FeasibilityReport {
        ris_worst_violation: membership(&ris, problem.feasibility_set, f64::INFINITY).worst_violation,
        covariance_worst_violation: covs.worst_violation(&problem.budgets),
        degenerate_normalizations: degenerate_total,
    };
    Ok(SolveReport {
        objective_trace,
        rate_trace,
        covs,
        ris,
        evaluation: eval,
        iterations,
        converged,
        ris_steps,
        dinkelbach: dinkelbach_traces,
        feasibility,
    })
}
