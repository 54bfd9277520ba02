//! One MM step for each variable block.

use rand::Rng;

use crate::config::{FeasibilitySet, PowerModel};
use crate::error::Result;
use crate::impairment::RealChannelModel;
use crate::metrics::{CovarianceSet, UtilitySpec};
use crate::ris::{ccp_halfspace, project_ball_halfspace, project_star_halfspace, project_unit_ball, Halfspace, RisState};
use crate::surrogate::{rate_bounds_p, rate_bounds_phi, surrogate_utility, Block, ExpansionPointP, ExpansionPointPhi};

use super::projection::project_covariances;
use super::spg::{self, SpgSettings};
use super::SolverSettings;

/// Softmin temperature for min-type utilities, relative to the mean bound.
fn smoothing(spec: &UtilitySpec, settings: &SolverSettings, bounds: &[(f64, Option<Vec<f64>>)]) -> Option<f64> {
    match spec {
        UtilitySpec::MinRate | UtilitySpec::MinEe(_) if settings.softmin_rel > 0.0 => {
            let mean = bounds.iter().map(|b| b.0.abs()).sum::<f64>() / bounds.len().max(1) as f64;
            Some(settings.softmin_rel * mean.max(1e-9))
        }
        _ => None,
    }
}

fn spg_settings(s: &SolverSettings) -> SpgSettings {
    SpgSettings {
        max_iters: s.inner_max_iters,
        tol: s.inner_tol,
        armijo: s.armijo,
        backtrack: s.backtrack,
        ..SpgSettings::default()
    }
}

#[derive(Debug, Clone)]
pub struct CovarianceUpdate {
    pub covs: CovarianceSet,
    /// Exact surrogate utility at the returned point.
    pub value: f64,
    /// Exact surrogate utility at the warm start.
    pub value_start: f64,
    pub iterations: usize,
    /// Whether the inner solve improved on the warm start.
    pub improved: bool,
}

/// Maximize the covariance-block surrogate utility from `warm` (feasible).
/// `lambda` is the Dinkelbach parameter of fractional utilities (ignored
/// otherwise). Never returns a point worse than `warm`.
pub fn update_covariances(
    exp: &ExpansionPointP,
    warm: &CovarianceSet,
    spec: &UtilitySpec,
    lambda: f64,
    budgets: &[f64],
    pm: &PowerModel,
    settings: &SolverSettings,
) -> Result<CovarianceUpdate> {
    let template = warm.clone();
    let to_covs = |x: &[f64]| {
        let mut c = template.clone();
        c.set_from_vec(x);
        c
    };
    let exact = |c: &CovarianceSet| -> Result<f64> {
        let b = rate_bounds_p(exp, c, false)?;
        Ok(surrogate_utility(spec, &b, Block::Covariance { covs: c, lambda }, pm, None).0)
    };
    let start_bounds = rate_bounds_p(exp, warm, false)?;
    let value_start = surrogate_utility(spec, &start_bounds, Block::Covariance { covs: warm, lambda }, pm, None).0;
    let tau = smoothing(spec, settings, &start_bounds);

    let result = spg::maximize(
        &warm.to_vec(),
        |x| {
            let c = to_covs(x);
            let b = rate_bounds_p(exp, &c, true)?;
            let (v, g) = surrogate_utility(spec, &b, Block::Covariance { covs: &c, lambda }, pm, tau);
            Ok((v, g.unwrap_or_else(|| vec![0.0; x.len()])))
        },
        |x| {
            let c = to_covs(x);
            let b = rate_bounds_p(exp, &c, false)?;
            Ok(surrogate_utility(spec, &b, Block::Covariance { covs: &c, lambda }, pm, tau).0)
        },
        |x| Ok(project_covariances(&to_covs(x), budgets).to_vec()),
        &spg_settings(settings),
    )?;
    let iterations = result.iterations;
    let candidate = to_covs(&result.x);
    let value = exact(&candidate)?;
    if value >= value_start {
        Ok(CovarianceUpdate {
            covs: candidate,
            value,
            value_start,
            iterations,
            improved: value > value_start,
        })
    } else {
        Ok(CovarianceUpdate {
            covs: warm.clone(),
            value: value_start,
            value_start,
            iterations,
            improved: false,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RisUpdate {
    pub ris: RisState,
    /// Whether the new state replaced the previous one.
    pub accepted: bool,
    /// Exact surrogate utility at the previous state.
    pub surrogate_prev: f64,
    /// Exact surrogate utility of the candidate (after normalization).
    pub surrogate_candidate: f64,
    /// Zero-energy elements re-randomized during normalization.
    pub degenerate: usize,
    pub iterations: usize,
}

/// Maximize the RIS-block surrogate utility under `set`.
///
/// `T_U` is convex and handled directly. For `T_I`/`T_SN` the unit-energy
/// equality is relaxed to the unit ball intersected with the linearized
/// (CCP) half-space around the previous state (plus the STAR caps for
/// `T_SN`); the ascent result is normalized (and phase-corrected for
/// `T_SN`), and kept only if its surrogate value does not fall below the
/// previous one. Mode-switching states keep out-of-group coefficients at zero.
#[allow(clippy::too_many_arguments)]
pub fn update_ris<R: Rng + ?Sized>(
    exp: &ExpansionPointPhi,
    model: &RealChannelModel,
    spec: &UtilitySpec,
    set: FeasibilitySet,
    epsilon: f64,
    pm: &PowerModel,
    settings: &SolverSettings,
    rng: &mut R,
) -> Result<RisUpdate> {
    let prev = exp.ris_prev();
    let covs = exp.covs();
    let masked = prev.ms_assignment().is_some();
    // under mode switching the coupling constraint holds automatically
    let set = if masked && set == FeasibilitySet::StarCoupled {
        FeasibilitySet::Lossless
    } else {
        set
    };
    let (surfaces, elements, sectors) = (prev.surfaces(), prev.elements(), prev.sectors());
    let chunk = 2 * sectors;

    let mut active = vec![true; 2 * prev.coefficients().len()];
    if masked {
        for n in 0..surfaces {
            for m in 0..elements {
                let a = prev.active_sector(n, m).expect("mask present");
                for s in 0..sectors {
                    let base = 2 * ((n * elements + m) * sectors + s);
                    active[base] = s == a;
                    active[base + 1] = s == a;
                }
            }
        }
    }
    let halfspaces: Vec<Halfspace> = if set == FeasibilitySet::Unit {
        Vec::new()
    } else {
        (0..surfaces)
            .flat_map(|n| (0..elements).map(move |m| (n, m)))
            .map(|(n, m)| ccp_halfspace(prev.element(n, m), epsilon))
            .collect()
    };

    let to_state = |x: &[f64]| {
        let mut s = prev.clone();
        s.set_from_real(x);
        s
    };
    let exact = |s: &RisState| surrogate_utility(spec, &rate_bounds_phi(exp, model, s, false), Block::Ris { covs }, pm, None).0;
    let start_bounds = rate_bounds_phi(exp, model, prev, false);
    let surrogate_prev = surrogate_utility(spec, &start_bounds, Block::Ris { covs }, pm, None).0;
    let tau = smoothing(spec, settings, &start_bounds);

    let project = |x: &[f64]| -> Result<Vec<f64>> {
        let mut out = x.to_vec();
        for (e, c) in out.chunks_exact_mut(chunk).enumerate() {
            match set {
                FeasibilitySet::Unit => project_unit_ball(c),
                FeasibilitySet::Lossless => {
                    let p = project_ball_halfspace(c, &halfspaces[e])?;
                    c.copy_from_slice(&p);
                }
                FeasibilitySet::StarCoupled => {
                    let p = project_star_halfspace(c, &halfspaces[e])?;
                    c.copy_from_slice(&p);
                }
            }
        }
        for (v, a) in out.iter_mut().zip(&active) {
            if !a {
                *v = 0.0;
            }
        }
        Ok(out)
    };

    let result = spg::maximize(
        &prev.to_real(),
        |x| {
            let s = to_state(x);
            let b = rate_bounds_phi(exp, model, &s, true);
            let (v, g) = surrogate_utility(spec, &b, Block::Ris { covs }, pm, tau);
            let mut g = g.unwrap_or_else(|| vec![0.0; x.len()]);
            for (gv, a) in g.iter_mut().zip(&active) {
                if !a {
                    *gv = 0.0;
                }
            }
            Ok((v, g))
        },
        |x| {
            let s = to_state(x);
            Ok(surrogate_utility(spec, &rate_bounds_phi(exp, model, &s, false), Block::Ris { covs }, pm, tau).0)
        },
        project,
        &spg_settings(settings),
    )?;

    let mut candidate = to_state(&result.x);
    let mut degenerate = 0;
    if set != FeasibilitySet::Unit {
        degenerate = candidate.normalize_lossless(rng);
        if set == FeasibilitySet::StarCoupled {
            candidate.restore_star_phase();
        }
    }
    candidate.apply_ms_mask();
    let surrogate_candidate = exact(&candidate);
    let accepted = surrogate_candidate >= surrogate_prev;
    Ok(RisUpdate {
        ris: if accepted { candidate } else { prev.clone() },
        accepted,
        surrogate_prev,
        surrogate_candidate,
        degenerate,
        iterations: result.iterations,
    })
}
