//! Euclidean projections used by the inner solvers.

use nalgebra::SymmetricEigen;

use crate::linalg::{symmetrize_in_place, symmetrized};
use crate::metrics::CovarianceSet;
use crate::RMat;

/// Project `v` onto `{λ ≥ 0, Σλ ≤ budget}` in place.
///
/// Negative entries are clipped; if the budget is still exceeded every entry
/// is shifted down by the `s > 0` solving `Σ max(λ − s, 0) = budget`, found
/// exactly from the sorted values.
pub fn project_capped_simplex(v: &mut [f64], budget: f64) {
    let budget = budget.max(0.0);
    v.iter_mut().for_each(|x| *x = x.max(0.0));
    let total: f64 = v.iter().sum();
    if total <= budget {
        return;
    }
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut shift = 0.0;
    for (idx, &x) in sorted.iter().enumerate() {
        cumulative += x;
        let s = (cumulative - budget) / (idx + 1) as f64;
        let next = sorted.get(idx + 1).copied().unwrap_or(f64::NEG_INFINITY);
        if s >= next && s < x {
            shift = s;
            break;
        }
        if idx + 1 == sorted.len() {
            shift = s;
        }
    }
    v.iter_mut().for_each(|x| *x = (*x - shift).max(0.0));
}

/// Euclidean projection onto `{every P PSD, Σ_{k,i} tr P[l][k][i] ≤ P_l}`.
///
/// Every block of a base station is eigendecomposed, the stacked eigenvalues
/// are projected onto the capped simplex and the blocks are reassembled.
pub fn project_covariances(covs: &CovarianceSet, budgets: &[f64]) -> CovarianceSet {
    let d = covs.dims();
    let mut out = covs.clone();
    for (l, &budget) in budgets.iter().enumerate().take(d.cells) {
        let idx: Vec<(usize, usize)> = (0..d.users)
            .flat_map(|k| (0..d.subbands).map(move |i| (k, i)))
            .collect();
        let eigs: Vec<SymmetricEigen<f64, nalgebra::Dyn>> = idx
            .iter()
            .map(|&(k, i)| SymmetricEigen::new(symmetrized(covs.get(l, k, i))))
            .collect();
        let mut lambda: Vec<f64> = eigs.iter().flat_map(|e| e.eigenvalues.iter().copied()).collect();
        let before = lambda.clone();
        project_capped_simplex(&mut lambda, budget);
        let n = d.tx_dim();
        for (b, (&(k, i), e)) in idx.iter().zip(&eigs).enumerate() {
            let new = &lambda[b * n..(b + 1) * n];
            let old = &before[b * n..(b + 1) * n];
            if new == old {
                *out.get_mut(l, k, i) = symmetrized(covs.get(l, k, i));
                continue;
            }
            let mut m = &e.eigenvectors * RMat::from_diagonal(&nalgebra::DVector::from_column_slice(new)) * e.eigenvectors.transpose();
            symmetrize_in_place(&mut m);
            *out.get_mut(l, k, i) = m;
        }
    }
    out
}
