//! Transmit covariances, achievable rates and energy efficiency.
//!
//! Everything is in the real domain: a user's rate on one subband is
//! `½·log₂|D + S| − ½·log₂|D|` with `S` the useful-signal covariance and `D`
//! noise plus interference (treated as noise).

use std::fmt;
use std::str::FromStr;

use crate::config::{Dims, PowerModel};
use crate::error::{Error, Result};
use crate::impairment::RealChannelSet;
use crate::linalg::{logdet_spd, min_eigenvalue, sandwich};
use crate::RMat;

/// Transmit covariances `P[l][k][i]` (`2N_B × 2N_B`).
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSet {
    dims: Dims,
    p: Vec<RMat>,
}

impl CovarianceSet {
    pub fn zeros(dims: Dims) -> Self {
        let n = dims.tx_dim();
        CovarianceSet {
            dims,
            p: vec![RMat::zeros(n, n); dims.num_users() * dims.subbands],
        }
    }

    /// Equal split of each budget over users, subbands and real dimensions:
    /// `P[l][k][i] = P_l / (2·N_B·K·N_i) · I`.
    pub fn uniform(dims: Dims, budgets: &[f64]) -> Self {
        let n = dims.tx_dim();
        let mut out = CovarianceSet::zeros(dims);
        for l in 0..dims.cells {
            let v = budgets[l] / (n * dims.users * dims.subbands) as f64;
            for k in 0..dims.users {
                for i in 0..dims.subbands {
                    *out.get_mut(l, k, i) = RMat::identity(n, n) * v;
                }
            }
        }
        out
    }

    pub fn from_blocks(dims: Dims, p: Vec<RMat>) -> Result<Self> {
        let n = dims.tx_dim();
        if p.len() != dims.num_users() * dims.subbands || p.iter().any(|m| m.shape() != (n, n)) {
            return Err(Error::Dimension("covariance blocks do not match dims".into()));
        }
        Ok(CovarianceSet { dims, p })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn get(&self, l: usize, k: usize, i: usize) -> &RMat {
        &self.p[self.dims.user_subband(l, k, i)]
    }

    pub fn get_mut(&mut self, l: usize, k: usize, i: usize) -> &mut RMat {
        let idx = self.dims.user_subband(l, k, i);
        &mut self.p[idx]
    }

    pub fn blocks(&self) -> &[RMat] {
        &self.p
    }

    pub fn blocks_mut(&mut self) -> &mut [RMat] {
        &mut self.p
    }

    /// `P_{n,i} = Σ_k P[n][k][i]`.
    pub fn aggregate(&self, n: usize, i: usize) -> RMat {
        let mut acc = RMat::zeros(self.dims.tx_dim(), self.dims.tx_dim());
        for k in 0..self.dims.users {
            acc += self.get(n, k, i);
        }
        acc
    }

    /// Total transmit power of BS `l`.
    pub fn bs_power(&self, l: usize) -> f64 {
        (0..self.dims.users)
            .flat_map(|k| (0..self.dims.subbands).map(move |i| (k, i)))
            .map(|(k, i)| self.get(l, k, i).trace())
            .sum()
    }

    /// Transmit power spent on user `(l, k)` over all subbands.
    pub fn user_power(&self, l: usize, k: usize) -> f64 {
        (0..self.dims.subbands).map(|i| self.get(l, k, i).trace()).sum()
    }

    pub fn total_power(&self) -> f64 {
        self.p.iter().map(|m| m.trace()).sum()
    }

    /// Real-vector view of all blocks, column-major block after block.
    pub fn to_vec(&self) -> Vec<f64> {
        self.p.iter().flat_map(|m| m.iter().copied()).collect()
    }

    pub fn set_from_vec(&mut self, x: &[f64]) {
        let mut it = x.iter();
        for m in self.p.iter_mut() {
            for v in m.iter_mut() {
                *v = *it.next().expect("vector length matches covariance set");
            }
        }
    }

    /// Worst violation of symmetry, PSD-ness and the per-BS budgets (0 if feasible).
    pub fn worst_violation(&self, budgets: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for m in &self.p {
            worst = worst.max((m - m.transpose()).amax());
            worst = worst.max(-min_eigenvalue(m));
        }
        for (l, b) in budgets.iter().enumerate().take(self.dims.cells) {
            worst = worst.max(self.bs_power(l) - b);
        }
        worst
    }

    pub fn is_feasible(&self, budgets: &[f64], tol: f64) -> bool {
        self.worst_violation(budgets) <= tol
    }
}

/// `S = H·P·Hᵀ`.
pub fn signal_covariance(h: &RMat, p: &RMat) -> RMat {
    sandwich(h, p)
}

/// Noise plus interference seen by user `(l, k)` on subband `i`.
pub fn interference_covariance(rc: &RealChannelSet, covs: &CovarianceSet, l: usize, k: usize, i: usize) -> RMat {
    let d = rc.dims();
    let mut acc = rc.noise(l, k, i).clone();
    for n in 0..d.cells {
        let h = rc.h(l, k, n, i);
        let p = if n == l {
            let mut own = covs.aggregate(l, i);
            own -= covs.get(l, k, i);
            own
        } else {
            covs.aggregate(n, i)
        };
        acc += sandwich(h, &p);
    }
    acc
}

/// Per-subband rate from the two log-determinants (natural log inputs).
pub(crate) fn rate_from_logdets(logdet_ds: f64, logdet_d: f64) -> f64 {
    (0.5 * (logdet_ds - logdet_d) / std::f64::consts::LN_2).max(0.0)
}

/// Rate of user `(l, k)`: total and per subband, in bits/s/Hz.
pub fn user_rate(rc: &RealChannelSet, covs: &CovarianceSet, l: usize, k: usize) -> Result<(f64, Vec<f64>)> {
    let d = rc.dims();
    let mut per = Vec::with_capacity(d.subbands);
    for i in 0..d.subbands {
        let dm = interference_covariance(rc, covs, l, k, i);
        let s = signal_covariance(rc.h(l, k, l, i), covs.get(l, k, i));
        let ld = logdet_spd(&dm).ok_or(Error::Singular { l, k, i })?;
        let lds = logdet_spd(&(dm + s)).ok_or(Error::Singular { l, k, i })?;
        per.push(rate_from_logdets(lds, ld));
    }
    Ok((per.iter().sum(), per))
}

/// Rates of every user.
#[derive(Debug, Clone, PartialEq)]
pub struct RateBreakdown {
    dims: Dims,
    /// `r[l][k][i]`.
    pub per_subband: Vec<f64>,
    /// `r[l][k]`.
    pub total: Vec<f64>,
}

impl RateBreakdown {
    pub fn rate(&self, l: usize, k: usize) -> f64 {
        self.total[self.dims.user(l, k)]
    }

    pub fn subband_rate(&self, l: usize, k: usize, i: usize) -> f64 {
        self.per_subband[self.dims.user_subband(l, k, i)]
    }

    pub fn sum_rate(&self) -> f64 {
        self.total.iter().sum()
    }
}

pub fn rate_breakdown(rc: &RealChannelSet, covs: &CovarianceSet) -> Result<RateBreakdown> {
    let d = rc.dims();
    let mut per_subband = Vec::with_capacity(d.num_users() * d.subbands);
    let mut total = Vec::with_capacity(d.num_users());
    for l in 0..d.cells {
        for k in 0..d.users {
            let (t, per) = user_rate(rc, covs, l, k)?;
            total.push(t);
            per_subband.extend(per);
        }
    }
    Ok(RateBreakdown {
        dims: d,
        per_subband,
        total,
    })
}

/// `r_lk / (p_c + η·Σ_i tr P_lk,i)`.
pub fn user_ee(rates: &RateBreakdown, covs: &CovarianceSet, pm: &PowerModel, l: usize, k: usize) -> f64 {
    rates.rate(l, k) / (pm.static_power + pm.amplifier_inefficiency * covs.user_power(l, k))
}

/// `Σ r_lk / (L·K·p_c + η·Σ_l tr P_l)`.
pub fn global_ee(rates: &RateBreakdown, covs: &CovarianceSet, pm: &PowerModel) -> f64 {
    let d = covs.dims();
    rates.sum_rate() / (d.num_users() as f64 * pm.static_power + pm.amplifier_inefficiency * covs.total_power())
}

/// Network utility to maximize.
#[derive(Debug, Clone, PartialEq)]
pub enum UtilitySpec {
    MinRate,
    SumRate,
    /// Weighted minimum EE; an empty weight list means all ones.
    MinEe(Vec<f64>),
    Gee,
}

impl UtilitySpec {
    pub fn is_fractional(&self) -> bool {
        matches!(self, UtilitySpec::MinEe(_) | UtilitySpec::Gee)
    }

    pub fn weight(&self, user: usize) -> f64 {
        match self {
            UtilitySpec::MinEe(w) if !w.is_empty() => w[user],
            _ => 1.0,
        }
    }
}

impl fmt::Display for UtilitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UtilitySpec::MinRate => "minrate",
            UtilitySpec::SumRate => "sumrate",
            UtilitySpec::MinEe(_) => "minee",
            UtilitySpec::Gee => "gee",
        })
    }
}

impl FromStr for UtilitySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "minrate" => Ok(UtilitySpec::MinRate),
            "sumrate" => Ok(UtilitySpec::SumRate),
            "minee" => Ok(UtilitySpec::MinEe(Vec::new())),
            "gee" => Ok(UtilitySpec::Gee),
            _ => Err(Error::Unknown {
                what: "utility",
                value: s.to_string(),
            }),
        }
    }
}

/// Combine per-user rates, per-user EEs and the GEE into the utility value.
pub fn utility_eval(spec: &UtilitySpec, rates: &[f64], ees: &[f64], gee: f64) -> f64 {
    match spec {
        UtilitySpec::MinRate => rates.iter().copied().fold(f64::INFINITY, f64::min),
        UtilitySpec::SumRate => rates.iter().sum(),
        UtilitySpec::MinEe(_) => ees
            .iter()
            .enumerate()
            .map(|(u, e)| spec.weight(u) * e)
            .fold(f64::INFINITY, f64::min),
        UtilitySpec::Gee => gee,
    }
}

/// Everything the solver reports about one operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub rates: RateBreakdown,
    pub ees: Vec<f64>,
    pub gee: f64,
    pub utility: f64,
}

pub fn evaluate(spec: &UtilitySpec, rc: &RealChannelSet, covs: &CovarianceSet, pm: &PowerModel) -> Result<Evaluation> {
    let d = rc.dims();
    let rates = rate_breakdown(rc, covs)?;
    let mut ees = Vec::with_capacity(d.num_users());
    for l in 0..d.cells {
        for k in 0..d.users {
            ees.push(user_ee(&rates, covs, pm, l, k));
        }
    }
    let gee = global_ee(&rates, covs, pm);
    let utility = utility_eval(spec, &rates.total, &ees, gee);
    Ok(Evaluation {
        rates,
        ees,
        gee,
        utility,
    })
}
