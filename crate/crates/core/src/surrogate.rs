//! Concave minorizers of the user rates.
//!
//! Covariance block: `½log₂|D+S|` is concave in the covariances and
//! `−½log₂|D|` is convex, so the latter is replaced by its tangent at the
//! expansion point:
//!
//! ```text
//! r̄ = Σ_i ½log₂|D_i + S_i| − ½log₂|D̄_i| − Σ_n tr(A_n,i · ΔP_n,i),
//! A_n,i = H_nᵀ D̄_i⁻¹ H_n / (2 ln 2)
//! ```
//!
//! where `ΔP` is the change of every covariance that enters `D`.
//!
//! RIS block (covariances fixed, `V = H_own·P^{1/2}`, `Q = D̄⁻¹ − (D̄+S̄)⁻¹`):
//!
//! ```text
//! r̂ = r̄_prev + 1/(2 ln 2) · [ −tr(S̄ D̄⁻¹) + 2·tr(V̄ᵀ D̄⁻¹ V) − tr(Q·(S + D)) ]
//! ```
//!
//! which is the mean-square-error lower bound of `½log₂|I + D⁻¹VVᵀ|`,
//! concave in `V` and `S + D`, hence in the RIS coefficients.
//!
//! Both bounds touch the rate at the expansion point.

use std::f64::consts::LN_2;

use crate::config::PowerModel;
use crate::error::{Error, Result};
use crate::impairment::{RealChannelModel, RealChannelSet};
use crate::linalg::{frob_dot, logdet_and_inverse_spd, psd_sqrt, sandwich, symmetrize_in_place};
use crate::metrics::{interference_covariance, signal_covariance, CovarianceSet, UtilitySpec};
use crate::ris::RisState;
use crate::RMat;

const HALF_INV_LN2: f64 = 0.5 / LN_2;

fn aggregates(covs: &CovarianceSet) -> Vec<RMat> {
    let d = covs.dims();
    let mut out = Vec::with_capacity(d.cells * d.subbands);
    for n in 0..d.cells {
        for i in 0..d.subbands {
            out.push(covs.aggregate(n, i));
        }
    }
    out
}

/// Snapshot for the covariance-block bound.
#[derive(Debug, Clone)]
pub struct ExpansionPointP {
    rc: RealChannelSet,
    covs_prev: CovarianceSet,
    agg_prev: Vec<RMat>,
    /// `½log₂|D̄|` per `(l, k, i)`.
    r2_prev: Vec<f64>,
    /// `A_n` per `(l, k, i)` and interfering BS `n`.
    lin: Vec<Vec<RMat>>,
}

impl ExpansionPointP {
    pub fn new(rc: &RealChannelSet, covs_prev: &CovarianceSet) -> Result<Self> {
        let d = rc.dims();
        let mut r2_prev = Vec::with_capacity(d.num_users() * d.subbands);
        let mut lin = Vec::with_capacity(d.num_users() * d.subbands);
        for l in 0..d.cells {
            for k in 0..d.users {
                for i in 0..d.subbands {
                    let dm = interference_covariance(rc, covs_prev, l, k, i);
                    let (ld, inv) = logdet_and_inverse_spd(&dm).ok_or(Error::Singular { l, k, i })?;
                    r2_prev.push(HALF_INV_LN2 * ld);
                    lin.push(
                        (0..d.cells)
                            .map(|n| {
                                let h = rc.h(l, k, n, i);
                                let mut a = h.transpose() * &inv * h * HALF_INV_LN2;
                                symmetrize_in_place(&mut a);
                                a
                            })
                            .collect(),
                    );
                }
            }
        }
        Ok(ExpansionPointP {
            rc: rc.clone(),
            agg_prev: aggregates(covs_prev),
            covs_prev: covs_prev.clone(),
            r2_prev,
            lin,
        })
    }

    pub fn channels(&self) -> &RealChannelSet {
        &self.rc
    }

    pub fn covs_prev(&self) -> &CovarianceSet {
        &self.covs_prev
    }
}

/// Covariance-block bound of user `(l, k)` at `covs` and its gradient with
/// respect to every covariance entry (layout of [`CovarianceSet::to_vec`]).
pub fn rate_bound_p(exp: &ExpansionPointP, covs: &CovarianceSet, l: usize, k: usize) -> Result<(f64, Vec<f64>)> {
    let agg = aggregates(covs);
    rate_bound_p_with(exp, covs, &agg, l, k, true).map(|(v, g)| (v, g.unwrap_or_default()))
}

fn rate_bound_p_with(
    exp: &ExpansionPointP,
    covs: &CovarianceSet,
    agg: &[RMat],
    l: usize,
    k: usize,
    with_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    let d = covs.dims();
    let rc = &exp.rc;
    let block = d.tx_dim() * d.tx_dim();
    let mut grad = with_grad.then(|| vec![0.0; d.num_users() * d.subbands * block]);
    let mut value = 0.0;
    for i in 0..d.subbands {
        let ui = d.user_subband(l, k, i);
        let mut x = rc.noise(l, k, i).clone();
        for n in 0..d.cells {
            x += sandwich(rc.h(l, k, n, i), &agg[n * d.subbands + i]);
        }
        let (ld, xinv) = logdet_and_inverse_spd(&x).ok_or(Error::Singular { l, k, i })?;
        value += HALF_INV_LN2 * ld - exp.r2_prev[ui];
        for n in 0..d.cells {
            let a = &exp.lin[ui][n];
            let mut delta = &agg[n * d.subbands + i] - &exp.agg_prev[n * d.subbands + i];
            if n == l {
                delta -= covs.get(l, k, i) - exp.covs_prev.get(l, k, i);
            }
            value -= frob_dot(a, &delta);
            if let Some(g) = grad.as_mut() {
                let h = rc.h(l, k, n, i);
                let b = h.transpose() * &xinv * h * HALF_INV_LN2;
                for m in 0..d.users {
                    let off = d.user_subband(n, m, i) * block;
                    let own = n == l && m == k;
                    for (e, (bv, av)) in g[off..off + block].iter_mut().zip(b.iter().zip(a.iter())) {
                        *e += if own { *bv } else { bv - av };
                    }
                }
            }
        }
    }
    Ok((value, grad))
}

/// Covariance-block bounds of every user, optionally with gradients.
pub fn rate_bounds_p(exp: &ExpansionPointP, covs: &CovarianceSet, with_grad: bool) -> Result<Vec<(f64, Option<Vec<f64>>)>> {
    let d = covs.dims();
    let agg = aggregates(covs);
    let mut out = Vec::with_capacity(d.num_users());
    for l in 0..d.cells {
        for k in 0..d.users {
            out.push(rate_bound_p_with(exp, covs, &agg, l, k, with_grad)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
struct PhiCache {
    /// `r_prev` for this subband (bits).
    r_prev: f64,
    /// `−tr(S̄ D̄⁻¹)`.
    c0: f64,
    /// `D̄⁻¹ V̄`.
    w: RMat,
    q: RMat,
    p_sqrt: RMat,
}

/// Snapshot for the RIS-block bound.
#[derive(Debug, Clone)]
pub struct ExpansionPointPhi {
    ris_prev: RisState,
    covs: CovarianceSet,
    agg: Vec<RMat>,
    cache: Vec<PhiCache>,
}

impl ExpansionPointPhi {
    pub fn new(model: &RealChannelModel, ris_prev: &RisState, covs: &CovarianceSet) -> Result<Self> {
        let d = model.dims();
        let rc = model.evaluate(ris_prev);
        let mut cache = Vec::with_capacity(d.num_users() * d.subbands);
        for l in 0..d.cells {
            for k in 0..d.users {
                for i in 0..d.subbands {
                    let dm = interference_covariance(&rc, covs, l, k, i);
                    let p = covs.get(l, k, i);
                    let s = signal_covariance(rc.h(l, k, l, i), p);
                    let (ld, dinv) = logdet_and_inverse_spd(&dm).ok_or(Error::Singular { l, k, i })?;
                    let (lds, xinv) = logdet_and_inverse_spd(&(&dm + &s)).ok_or(Error::Singular { l, k, i })?;
                    let p_sqrt = psd_sqrt(p);
                    let v = rc.h(l, k, l, i) * &p_sqrt;
                    let mut q = &dinv - xinv;
                    symmetrize_in_place(&mut q);
                    cache.push(PhiCache {
                        r_prev: HALF_INV_LN2 * (lds - ld),
                        c0: -frob_dot(&s, &dinv),
                        w: &dinv * v,
                        q,
                        p_sqrt,
                    });
                }
            }
        }
        Ok(ExpansionPointPhi {
            ris_prev: ris_prev.clone(),
            covs: covs.clone(),
            agg: aggregates(covs),
            cache,
        })
    }

    pub fn ris_prev(&self) -> &RisState {
        &self.ris_prev
    }

    pub fn covs(&self) -> &CovarianceSet {
        &self.covs
    }
}

fn rate_bound_phi_with(
    exp: &ExpansionPointPhi,
    model: &RealChannelModel,
    rc: &RealChannelSet,
    l: usize,
    k: usize,
    with_grad: bool,
) -> (f64, Option<Vec<f64>>) {
    let d = rc.dims();
    let mut grad = with_grad.then(|| vec![0.0; 2 * d.num_coefficients()]);
    let depends = with_grad && model.depends_on_ris(l, k);
    let mut value = 0.0;
    for i in 0..d.subbands {
        let c = &exp.cache[d.user_subband(l, k, i)];
        let h_own = rc.h(l, k, l, i);
        let v = h_own * &c.p_sqrt;
        let mut bracket = c.c0 + 2.0 * frob_dot(&c.w, &v) - frob_dot(&c.q, rc.noise(l, k, i));
        for n in 0..d.cells {
            let h = rc.h(l, k, n, i);
            let qhp = &c.q * h * &exp.agg[n * d.subbands + i];
            bracket -= frob_dot(&qhp, h);
            if depends {
                let mut gh = qhp * (-2.0 * HALF_INV_LN2);
                if n == l {
                    gh += &c.w * &c.p_sqrt * (2.0 * HALF_INV_LN2);
                }
                model.pullback(l, k, n, i, &gh, grad.as_mut().expect("gradient requested"));
            }
        }
        value += c.r_prev + HALF_INV_LN2 * bracket;
    }
    (value, grad)
}

/// RIS-block bound of user `(l, k)` at `ris` and its gradient with respect to
/// the real coordinates of every coefficient (layout of [`RisState::to_real`]).
pub fn rate_bound_phi(exp: &ExpansionPointPhi, model: &RealChannelModel, ris: &RisState, l: usize, k: usize) -> (f64, Vec<f64>) {
    let rc = model.evaluate(ris);
    let (v, g) = rate_bound_phi_with(exp, model, &rc, l, k, true);
    (v, g.unwrap_or_default())
}

/// RIS-block bounds of every user, optionally with gradients.
pub fn rate_bounds_phi(
    exp: &ExpansionPointPhi,
    model: &RealChannelModel,
    ris: &RisState,
    with_grad: bool,
) -> Vec<(f64, Option<Vec<f64>>)> {
    let d = model.dims();
    let rc = model.evaluate(ris);
    let mut out = Vec::with_capacity(d.num_users());
    for l in 0..d.cells {
        for k in 0..d.users {
            out.push(rate_bound_phi_with(exp, model, &rc, l, k, with_grad));
        }
    }
    out
}

/// Which variable block a surrogate utility is built for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Block<'a> {
    /// Covariances are the variables. Fractional utilities use the
    /// parametric form `numerator − λ·cost`.
    Covariance { covs: &'a CovarianceSet, lambda: f64 },
    /// RIS coefficients are the variables and the covariances are fixed, so
    /// fractional utilities are evaluated as ratios with constant denominators.
    Ris { covs: &'a CovarianceSet },
}

/// Assemble the surrogate utility and a (sub)gradient from per-user bounds.
///
/// `MinRate`/`MinEe` use the lowest-index minimizing user. With
/// `smoothing = Some(τ)` the minimum is replaced by `−τ·ln Σ exp(−t_u/τ)`
/// (a lower bound within `τ·ln U`) and the gradient by the softmin-weighted
/// average.
pub fn surrogate_utility(
    spec: &UtilitySpec,
    bounds: &[(f64, Option<Vec<f64>>)],
    block: Block<'_>,
    pm: &PowerModel,
    smoothing: Option<f64>,
) -> (f64, Option<Vec<f64>>) {
    let covs = match block {
        Block::Covariance { covs, .. } | Block::Ris { covs } => covs,
    };
    let d = covs.dims();
    let with_grad = bounds.iter().all(|b| b.1.is_some()) && !bounds.is_empty();
    let glen = bounds.first().and_then(|b| b.1.as_ref()).map_or(0, Vec::len);
    let block_len = d.tx_dim() * d.tx_dim();
    let user_cost = |u: usize| -> f64 {
        let (l, k) = (u / d.users, u % d.users);
        pm.static_power + pm.amplifier_inefficiency * covs.user_power(l, k)
    };
    let total_cost = d.num_users() as f64 * pm.static_power + pm.amplifier_inefficiency * covs.total_power();

    // per-user term t_u = a_u·bound_u − b_u, gradient a_u·g_u − λη·[user blocks]
    let (scale, offset): (Vec<f64>, Vec<f64>) = (0..bounds.len())
        .map(|u| match (spec, block) {
            (UtilitySpec::MinEe(_), Block::Covariance { lambda, .. }) => (spec.weight(u), lambda * user_cost(u)),
            (UtilitySpec::MinEe(_), Block::Ris { .. }) => (spec.weight(u) / user_cost(u), 0.0),
            (UtilitySpec::Gee, Block::Ris { .. }) => (1.0 / total_cost, 0.0),
            _ => (1.0, 0.0),
        })
        .unzip();
    let terms: Vec<f64> = bounds.iter().enumerate().map(|(u, b)| scale[u] * b.0 - offset[u]).collect();
    let user_cost_grad = |u: usize, w: f64, g: &mut [f64]| {
        if let Block::Covariance { lambda, .. } = block {
            let (l, k) = (u / d.users, u % d.users);
            let n = d.tx_dim();
            for i in 0..d.subbands {
                let off = d.user_subband(l, k, i) * block_len;
                for r in 0..n {
                    g[off + r * n + r] -= w * lambda * pm.amplifier_inefficiency;
                }
            }
        }
    };

    match spec {
        UtilitySpec::SumRate | UtilitySpec::Gee => {
            let mut value: f64 = terms.iter().sum();
            if let (UtilitySpec::Gee, Block::Covariance { lambda, .. }) = (spec, block) {
                value -= lambda * total_cost;
            }
            let grad = with_grad.then(|| {
                let mut g = vec![0.0; glen];
                for (u, b) in bounds.iter().enumerate() {
                    for (e, v) in g.iter_mut().zip(b.1.as_ref().expect("gradient present")) {
                        *e += scale[u] * v;
                    }
                }
                if let (UtilitySpec::Gee, Block::Covariance { lambda, .. }) = (spec, block) {
                    let n = d.tx_dim();
                    for b in 0..d.num_users() * d.subbands {
                        for r in 0..n {
                            g[b * block_len + r * n + r] -= lambda * pm.amplifier_inefficiency;
                        }
                    }
                }
                g
            });
            (value, grad)
        }
        UtilitySpec::MinRate | UtilitySpec::MinEe(_) => {
            let weights: Vec<f64> = match smoothing {
                Some(tau) if tau > 0.0 => {
                    let m = terms.iter().copied().fold(f64::INFINITY, f64::min);
                    let e: Vec<f64> = terms.iter().map(|t| (-(t - m) / tau).exp()).collect();
                    let z: f64 = e.iter().sum();
                    e.iter().map(|v| v / z).collect()
                }
                _ => {
                    let mut best = 0;
                    for (u, t) in terms.iter().enumerate() {
                        if *t < terms[best] {
                            best = u;
                        }
                    }
                    (0..terms.len()).map(|u| if u == best { 1.0 } else { 0.0 }).collect()
                }
            };
            let value = match smoothing {
                Some(tau) if tau > 0.0 => {
                    let m = terms.iter().copied().fold(f64::INFINITY, f64::min);
                    m - tau * terms.iter().map(|t| (-(t - m) / tau).exp()).sum::<f64>().ln()
                }
                _ => terms.iter().copied().fold(f64::INFINITY, f64::min),
            };
            let grad = with_grad.then(|| {
                let mut g = vec![0.0; glen];
                for (u, b) in bounds.iter().enumerate() {
                    if weights[u] == 0.0 {
                        continue;
                    }
                    for (e, v) in g.iter_mut().zip(b.1.as_ref().expect("gradient present")) {
                        *e += weights[u] * scale[u] * v;
                    }
                    if matches!(spec, UtilitySpec::MinEe(_)) {
                        user_cost_grad(u, weights[u], &mut g);
                    }
                }
                g
            });
            (value, grad)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Dims;

    fn dims() -> Dims {
        Dims {
            cells: 1,
            users: 2,
            bs_antennas: 1,
            user_antennas: 1,
            ris: 0,
            elements: 0,
            subbands: 1,
            sectors: 1,
        }
    }

    fn bounds() -> Vec<(f64, Option<Vec<f64>>)> {
        vec![(1.0, Some(vec![1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0])), (2.0, Some(vec![0.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 4.0]))]
    }

    #[test]
    fn min_and_sum_combinations() {
        let covs = CovarianceSet::zeros(dims());
        let pm = PowerModel::default();
        let block = Block::Covariance { covs: &covs, lambda: 0.0 };
        let (v, g) = surrogate_utility(&UtilitySpec::MinRate, &bounds(), block, &pm, None);
        assert_eq!(v, 1.0);
        assert_eq!(g.unwrap(), bounds()[0].1.clone().unwrap());
        let (v, g) = surrogate_utility(&UtilitySpec::SumRate, &bounds(), block, &pm, None);
        assert_eq!(v, 3.0);
        assert_eq!(g.unwrap(), vec![1.0, 3.0, 0.0, 0.0, 2.0, 0.0, 0.0, 4.0]);
        let (v, _) = surrogate_utility(&UtilitySpec::Gee, &bounds(), block, &pm, None);
        assert_eq!(v, 3.0);
    }

    #[test]
    fn ties_pick_the_first_user() {
        let covs = CovarianceSet::zeros(dims());
        let mut b = bounds();
        b[1].0 = 1.0;
        let (_, g) = surrogate_utility(
            &UtilitySpec::MinRate,
            &b,
            Block::Covariance { covs: &covs, lambda: 0.0 },
            &PowerModel::default(),
            None,
        );
        assert_eq!(g.unwrap(), b[0].1.clone().unwrap());
    }

    #[test]
    fn softmin_is_a_close_lower_bound() {
        let covs = CovarianceSet::zeros(dims());
        let block = Block::Covariance { covs: &covs, lambda: 0.0 };
        let tau = 1e-2;
        let (v, g) = surrogate_utility(&UtilitySpec::MinRate, &bounds(), block, &PowerModel::default(), Some(tau));
        assert!(v <= 1.0 && v >= 1.0 - tau * 2f64.ln());
        let g = g.unwrap();
        assert!((g[0] - 1.0).abs() < 1e-12 && g[1].abs() < 1e-12);
    }

    #[test]
    fn parametric_costs() {
        let d = dims();
        let covs = CovarianceSet::uniform(d, &[2.0]);
        let pm = PowerModel {
            static_power: 0.5,
            amplifier_inefficiency: 2.0,
        };
        let block = Block::Covariance { covs: &covs, lambda: 0.25 };
        let (v, g) = surrogate_utility(&UtilitySpec::Gee, &bounds(), block, &pm, None);
        assert!((v - (3.0 - 0.25 * (1.0 + 2.0 * 2.0))).abs() < 1e-14);
        // diagonal entries of each 2x2 block lose λη = 0.5
        let g = g.unwrap();
        assert!((g[0] - 0.5).abs() < 1e-14 && (g[3] + 0.5).abs() < 1e-14);
        let (v, _) = surrogate_utility(&UtilitySpec::MinEe(vec![]), &bounds(), block, &pm, None);
        assert!((v - (1.0 - 0.25 * (0.5 + 2.0))).abs() < 1e-14);
        let (v, _) = surrogate_utility(&UtilitySpec::MinEe(vec![]), &bounds(), Block::Ris { covs: &covs }, &pm, None);
        assert!((v - 1.0 / 2.5).abs() < 1e-14);
    }
}
