//! Monotone spectral projected gradient ascent.
//!
//! Direction `d = Π(x + α·g) − x` with a Barzilai-Borwein step `α`, then an
//! Armijo backtrack along the segment `x + t·d`, which stays feasible for a
//! convex set. Every accepted iterate strictly improves the objective.

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpgSettings {
    pub max_iters: usize,
    /// Relative improvement below which an iteration counts as stalled.
    pub tol: f64,
    /// Consecutive stalled iterations before stopping.
    pub patience: usize,
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
}

impl Default for SpgSettings {
    fn default() -> Self {
        SpgSettings {
            max_iters: 300,
            tol: 1e-6,
            patience: 3,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpgResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Maximize `f` over the set with projection `project`, starting from `x0`
/// (projected first). `value_grad(x)` returns `(f(x), ∇f(x))`; `value(x)`
/// returns `f(x)` alone.
pub fn maximize<VG, V, P>(x0: &[f64], mut value_grad: VG, mut value: V, mut project: P, s: &SpgSettings) -> Result<SpgResult>
where
    VG: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    V: FnMut(&[f64]) -> Result<f64>,
    P: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut x = project(x0)?;
    let (mut f, mut g) = value_grad(&x)?;
    let scale = inf_norm(&x).max(1e-3);
    let gn = inf_norm(&g);
    if gn == 0.0 || !f.is_finite() {
        return Ok(SpgResult { x, value: f, iterations: 0 });
    }
    let mut alpha = scale / gn;
    let mut stalled = 0;
    let mut iterations = 0;
    while iterations < s.max_iters {
        iterations += 1;
        let trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi + alpha * gi).collect();
        let p = project(&trial)?;
        let dir: Vec<f64> = p.iter().zip(&x).map(|(a, b)| a - b).collect();
        if inf_norm(&dir) <= 1e-14 * (1.0 + inf_norm(&x)) {
            break;
        }
        let slope = dot(&g, &dir);
        if slope <= 0.0 {
            break;
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=s.max_backtracks {
            let cand: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + t * di).collect();
            let fc = value(&cand)?;
            if fc.is_finite() && fc >= f + s.armijo * t * slope {
                accepted = Some(cand);
                break;
            }
            t *= s.backtrack;
        }
        let Some(x_new) = accepted else { break };
        let (f_new, g_new) = value_grad(&x_new)?;
        let sv: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sts = dot(&sv, &sv);
        let sty = dot(&sv, &yv);
        // ascent on a concave function: sᵀy ≤ 0 along the curvature
        alpha = if sty < 0.0 { (sts / -sty).clamp(1e-12 * scale, 1e12 * scale) } else { (alpha * 4.0).min(1e12 * scale) };
        let gain = f_new - f;
        x = x_new;
        g = g_new;
        f = f_new;
        if gain <= s.tol * f.abs().max(1e-12) {
            stalled += 1;
            if stalled >= s.patience {
                break;
            }
        } else {
            stalled = 0;
        }
    }
    Ok(SpgResult { x, value: f, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concave_quadratic_on_a_box() {
        // max −(x−2)² − (y+1)² over [0,1]²  →  (1, 0)
        let f = |x: &[f64]| -(x[0] - 2.0).powi(2) - (x[1] + 1.0).powi(2);
        let r = maximize(
            &[0.5, 0.5],
            |x| Ok((f(x), vec![-2.0 * (x[0] - 2.0), -2.0 * (x[1] + 1.0)])),
            |x| Ok(f(x)),
            |x| Ok(x.iter().map(|v| v.clamp(0.0, 1.0)).collect()),
            &SpgSettings::default(),
        )
        .unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-9 && r.x[1].abs() < 1e-9);
    }

    #[test]
    fn interior_maximum_of_ill_conditioned_quadratic() {
        let f = |x: &[f64]| -100.0 * (x[0] - 0.3).powi(2) - 0.01 * (x[1] - 0.4).powi(2);
        let settings = SpgSettings {
            tol: 1e-14,
            max_iters: 2000,
            ..SpgSettings::default()
        };
        let r = maximize(
            &[0.0, 0.0],
            |x| Ok((f(x), vec![-200.0 * (x[0] - 0.3), -0.02 * (x[1] - 0.4)])),
            |x| Ok(f(x)),
            |x| Ok(x.to_vec()),
            &settings,
        )
        .unwrap();
        assert!((r.x[0] - 0.3).abs() < 1e-6 && (r.x[1] - 0.4).abs() < 1e-4, "{:?}", r.x);
    }
}
