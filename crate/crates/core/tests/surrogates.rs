mod common;

use common::*;
use rand::Rng;
use risopt::config::FeasibilitySet;
use risopt::impairment::build_real_channels;
use risopt::metrics::{rate_breakdown, CovarianceSet};
use risopt::ris::RisState;
use risopt::surrogate::{rate_bound_p, rate_bound_phi, rate_bounds_p, rate_bounds_phi, ExpansionPointP, ExpansionPointPhi};

fn true_rates(inst: &Instance, ris: &RisState, covs: &CovarianceSet) -> Vec<f64> {
    let rc = build_real_channels(&inst.channels, ris, &inst.config.iqi, inst.config.noise_power);
    rate_breakdown(&rc, covs).unwrap().total
}

#[test]
fn covariance_bound_touches_and_minorizes() {
    for seed in 0..10 {
        let inst = random_instance(seed);
        let rc = inst.model.evaluate(&inst.ris);
        let exp = ExpansionPointP::new(&rc, &inst.covs).unwrap();
        let truth = true_rates(&inst, &inst.ris, &inst.covs);
        for (u, (v, _)) in rate_bounds_p(&exp, &inst.covs, false).unwrap().iter().enumerate() {
            assert!((v - truth[u]).abs() < 1e-9, "seed {seed} user {u}: {v} vs {}", truth[u]);
        }
        let mut r = rng(seed + 1000);
        for _ in 0..20 {
            let covs = random_covs(&mut r, &inst.config);
            let truth = true_rates(&inst, &inst.ris, &covs);
            for (u, (v, _)) in rate_bounds_p(&exp, &covs, false).unwrap().iter().enumerate() {
                assert!(*v <= truth[u] + 1e-9, "seed {seed} user {u}: bound {v} above rate {}", truth[u]);
            }
        }
    }
}

#[test]
fn ris_bound_touches_and_minorizes() {
    for seed in 0..10 {
        let inst = random_instance(seed);
        let exp = ExpansionPointPhi::new(&inst.model, &inst.ris, &inst.covs).unwrap();
        let truth = true_rates(&inst, &inst.ris, &inst.covs);
        for (u, (v, _)) in rate_bounds_phi(&exp, &inst.model, &inst.ris, false).iter().enumerate() {
            assert!((v - truth[u]).abs() < 1e-9, "seed {seed} user {u}: {v} vs {}", truth[u]);
        }
        let mut r = rng(seed + 2000);
        for _ in 0..20 {
            let ris = random_ris(&mut r, &inst.config, FeasibilitySet::Unit);
            let truth = true_rates(&inst, &ris, &inst.covs);
            for (u, (v, _)) in rate_bounds_phi(&exp, &inst.model, &ris, false).iter().enumerate() {
                assert!(*v <= truth[u] + 1e-9, "seed {seed} user {u}: bound {v} above rate {}", truth[u]);
            }
        }
    }
}

#[test]
fn covariance_bound_gradient_matches_central_differences() {
    let mut r = rng(7);
    for seed in 0..5 {
        let inst = random_instance(100 + seed);
        let d = inst.config.dims();
        let rc = inst.model.evaluate(&inst.ris);
        let exp = ExpansionPointP::new(&rc, &inst.covs).unwrap();
        let covs = random_covs(&mut r, &inst.config);
        let n = d.tx_dim();
        for _ in 0..10 {
            let (l, k) = (r.random_range(0..d.cells), r.random_range(0..d.users));
            let (_, g) = rate_bound_p(&exp, &covs, l, k).unwrap();
            let block = r.random_range(0..d.num_users() * d.subbands);
            let (a, c) = (r.random_range(0..n), r.random_range(0..n));
            let base = block * n * n;
            let analytic = if a == c { g[base + a + c * n] } else { g[base + a + c * n] + g[base + c + a * n] };
            let scale = covs.blocks()[block].trace().max(1e-3);
            let h = 1e-4 * scale;
            let eval = |t: f64| {
                let mut p = covs.clone();
                let m = &mut p.blocks_mut()[block];
                m[(a, c)] += t;
                if a != c {
                    m[(c, a)] += t;
                }
                rate_bound_p(&exp, &p, l, k).unwrap().0
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let gmax = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            assert!(rel_err(analytic, fd, 1e-6 * gmax) < 1e-5, "analytic {analytic} vs fd {fd}");
        }
    }
}

#[test]
fn ris_bound_gradient_matches_central_differences() {
    let mut r = rng(8);
    for seed in 0..5 {
        let inst = random_instance(200 + seed);
        let d = inst.config.dims();
        let exp = ExpansionPointPhi::new(&inst.model, &inst.ris, &inst.covs).unwrap();
        let at = random_ris(&mut r, &inst.config, FeasibilitySet::Unit);
        for _ in 0..10 {
            let (l, k) = (r.random_range(0..d.cells), r.random_range(0..d.users));
            let (_, g) = rate_bound_phi(&exp, &inst.model, &at, l, k);
            let j = r.random_range(0..g.len());
            // the bound is quadratic in the coefficients, so a large step is exact
            let h = 1e-2;
            let eval = |t: f64| {
                let mut x = at.to_real();
                x[j] += t;
                let mut s = at.clone();
                s.set_from_real(&x);
                rate_bound_phi(&exp, &inst.model, &s, l, k).0
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let gmax = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            assert!(rel_err(g[j], fd, 1e-6 * gmax.max(1e-12)) < 1e-5, "coordinate {j}: {} vs {fd}", g[j]);
        }
    }
}

#[test]
fn bounds_are_concave_along_segments() {
    let mut r = rng(9);
    for seed in 0..5 {
        let inst = random_instance(300 + seed);
        let rc = inst.model.evaluate(&inst.ris);
        let exp_p = ExpansionPointP::new(&rc, &inst.covs).unwrap();
        let exp_phi = ExpansionPointPhi::new(&inst.model, &inst.ris, &inst.covs).unwrap();
        for _ in 0..10 {
            let a = random_covs(&mut r, &inst.config);
            let b = random_covs(&mut r, &inst.config);
            let mut mid = a.clone();
            mid.set_from_vec(&a.to_vec().iter().zip(b.to_vec()).map(|(x, y)| 0.5 * (x + y)).collect::<Vec<_>>());
            let fa = rate_bounds_p(&exp_p, &a, false).unwrap();
            let fb = rate_bounds_p(&exp_p, &b, false).unwrap();
            let fm = rate_bounds_p(&exp_p, &mid, false).unwrap();
            for u in 0..fa.len() {
                assert!(fm[u].0 >= 0.5 * (fa[u].0 + fb[u].0) - 1e-10);
            }
            let sa = random_ris(&mut r, &inst.config, FeasibilitySet::Unit);
            let sb = random_ris(&mut r, &inst.config, FeasibilitySet::Unit);
            let mut sm = sa.clone();
            sm.set_from_real(&sa.to_real().iter().zip(sb.to_real()).map(|(x, y)| 0.5 * (x + y)).collect::<Vec<_>>());
            let fa = rate_bounds_phi(&exp_phi, &inst.model, &sa, false);
            let fb = rate_bounds_phi(&exp_phi, &inst.model, &sb, false);
            let fm = rate_bounds_phi(&exp_phi, &inst.model, &sm, false);
            for u in 0..fa.len() {
                assert!(fm[u].0 >= 0.5 * (fa[u].0 + fb[u].0) - 1e-10);
            }
        }
    }
}
