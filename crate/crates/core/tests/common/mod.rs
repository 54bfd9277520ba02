//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use risopt::channel::{generate_channel_set, ComplexChannelSet};
use risopt::config::{parse_config, validate, FeasibilitySet, ValidatedConfig};
use risopt::impairment::RealChannelModel;
use risopt::metrics::CovarianceSet;
use risopt::ris::RisState;
use risopt::RMat;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn config(text: &str) -> ValidatedConfig {
    validate(parse_config(text).expect("config parses")).expect("config validates")
}

pub const DESK: &str = "cells = 2\nusers_per_cell = 3\nbs_antennas = 2\nuser_antennas = 2\nris_elements = 16\nsubbands = 8\n";

/// A random desk-scale problem: dimensions, impairments, channels and a
/// feasible operating point.
pub struct Instance {
    pub config: ValidatedConfig,
    pub channels: ComplexChannelSet,
    pub model: RealChannelModel,
    pub covs: CovarianceSet,
    pub ris: RisState,
}

pub fn random_config(r: &mut ChaCha8Rng) -> ValidatedConfig {
    let cells = r.random_range(1..=2);
    let users = r.random_range(1..=3);
    let elements = r.random_range(2..=16);
    let subbands = r.random_range(1..=8);
    let sectors = r.random_range(1..=2);
    let a_t: f64 = r.random_range(0.7..=1.0);
    let a_r: f64 = r.random_range(0.7..=1.0);
    let psi: f64 = r.random_range(-0.3..0.3);
    let phi: f64 = r.random_range(-0.3..0.3);
    let power_db: f64 = r.random_range(0.0..15.0);
    config(&format!(
        "cells = {cells}\nusers_per_cell = {users}\nbs_antennas = 2\nuser_antennas = 2\nris_elements = {elements}\n\
         subbands = {subbands}\nsectors = {sectors}\npower_budget_db = {power_db}\n\
         iqi.a_t = {a_t}\niqi.a_r = {a_r}\niqi.psi_t = {psi}\niqi.phi_r = {phi}\n\
         geometry.user_placement = \"half\"\n"
    ))
}

/// Random symmetric PSD matrix with trace `trace`.
pub fn random_psd(r: &mut ChaCha8Rng, n: usize, trace: f64) -> RMat {
    let a = RMat::from_fn(n, n, |_, _| r.random::<f64>() - 0.5);
    let mut p = &a * a.transpose();
    let t = p.trace();
    p *= trace / t;
    (p.clone() + p.transpose()) * 0.5
}

/// Random feasible covariances using a random fraction of every budget.
pub fn random_covs(r: &mut ChaCha8Rng, config: &ValidatedConfig) -> CovarianceSet {
    let d = config.dims();
    let mut covs = CovarianceSet::zeros(d);
    for l in 0..d.cells {
        let blocks = d.users * d.subbands;
        let weights: Vec<f64> = (0..blocks).map(|_| r.random::<f64>() + 0.05).collect();
        let total: f64 = weights.iter().sum();
        let use_frac = r.random_range(0.3..1.0);
        for k in 0..d.users {
            for i in 0..d.subbands {
                let w = weights[k * d.subbands + i] / total;
                *covs.get_mut(l, k, i) = random_psd(r, d.tx_dim(), w * use_frac * config.power_budget[l]);
            }
        }
    }
    covs
}

/// Random state of `set` (uniform phases; lossy amplitudes for `T_U`).
pub fn random_ris(r: &mut ChaCha8Rng, config: &ValidatedConfig, set: FeasibilitySet) -> RisState {
    let d = config.dims();
    let mut s = RisState::random(d.ris, d.elements, d.sectors, set, None, r).expect("random state");
    if set == FeasibilitySet::Unit {
        for n in 0..d.ris {
            for m in 0..d.elements {
                let scale = r.random::<f64>().sqrt();
                for z in s.element_mut(n, m) {
                    *z *= scale;
                }
            }
        }
    }
    s
}

pub fn random_instance(seed: u64) -> Instance {
    let mut r = rng(seed);
    let config = random_config(&mut r);
    let channels = generate_channel_set(&config, &mut r);
    let model = RealChannelModel::new(&channels, &config.iqi, config.noise_power);
    let covs = random_covs(&mut r, &config);
    let ris = random_ris(&mut r, &config, FeasibilitySet::Unit);
    Instance {
        config,
        channels,
        model,
        covs,
        ris,
    }
}

/// `max(|a|, |b|, floor)`-relative difference.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Projection onto `{PSD blocks, Σ tr ≤ P_l}` by Dykstra's method on the
/// PSD cone and the trace half-space.
pub fn dykstra_covariances(covs: &CovarianceSet, budgets: &[f64]) -> CovarianceSet {
    let d = covs.dims();
    let n = d.tx_dim();
    let blocks = d.users * d.subbands;
    let mut x: Vec<RMat> = covs.blocks().to_vec();
    let mut p = vec![RMat::zeros(n, n); x.len()];
    let mut q = vec![RMat::zeros(n, n); x.len()];
    for _ in 0..20_000 {
        let mut change = 0.0f64;
        let y: Vec<RMat> = x
            .iter()
            .zip(&p)
            .map(|(x, p)| {
                let e = SymmetricEigen::new(x + p);
                let lam = e.eigenvalues.map(|v| v.max(0.0));
                &e.eigenvectors * RMat::from_diagonal(&lam) * e.eigenvectors.transpose()
            })
            .collect();
        for b in 0..x.len() {
            p[b] = &x[b] + &p[b] - &y[b];
        }
        let mut z: Vec<RMat> = y.iter().zip(&q).map(|(y, q)| y + q).collect();
        for l in 0..d.cells {
            let range = l * blocks..(l + 1) * blocks;
            let total: f64 = z[range.clone()].iter().map(|m| m.trace()).sum();
            if total > budgets[l] {
                let shift = (total - budgets[l]) / (n * blocks) as f64;
                for m in &mut z[range] {
                    for c in 0..n {
                        m[(c, c)] -= shift;
                    }
                }
            }
        }
        for b in 0..x.len() {
            q[b] = &y[b] + &q[b] - &z[b];
            change = change.max((&z[b] - &x[b]).amax());
        }
        x = z;
        if change < 1e-13 {
            break;
        }
    }
    CovarianceSet::from_blocks(d, x).unwrap()
}
