//! Dinkelbach's method for `max N(x)/D(x)` (and its generalized min-ratio form).

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DinkelbachTrace {
    /// `λ` before every parametric solve, followed by the final ratio.
    pub lambdas: Vec<f64>,
    /// Parametric value `F(x_{t+1}; λ_t)` of every solve.
    pub gaps: Vec<f64>,
    pub converged: bool,
}

impl DinkelbachTrace {
    pub fn lambda_star(&self) -> f64 {
        self.lambdas.last().copied().unwrap_or(f64::NAN)
    }

    pub fn is_non_decreasing(&self, slack: f64) -> bool {
        self.lambdas.windows(2).all(|w| w[1] >= w[0] - slack)
    }
}

/// Run Dinkelbach iterations from `x0`.
///
/// `ratio(x)` evaluates the objective ratio (the minimum ratio in the
/// generalized form). `solve(x, λ)` returns a point improving the parametric
/// problem `max N − λ·D` from the warm start `x`, together with its
/// parametric value. Iteration stops once that value is at most `tol`; with
/// `λ₀` taken at `x0` and warm-started solves the `λ` sequence never
/// decreases. Running out of iterations is not an error: the best iterate is
/// returned with `converged = false`.
pub fn dinkelbach<S, R, F>(x0: S, mut ratio: R, mut solve: F, lambda0: Option<f64>, tol: f64, max_iters: usize) -> Result<(S, f64, DinkelbachTrace)>
where
    R: FnMut(&S) -> Result<f64>,
    F: FnMut(&S, f64) -> Result<(S, f64)>,
{
    let mut x = x0;
    let mut lambda = match lambda0 {
        Some(v) => v,
        None => ratio(&x)?,
    };
    let mut trace = DinkelbachTrace::default();
    for _ in 0..max_iters {
        trace.lambdas.push(lambda);
        let (next, gap) = solve(&x, lambda)?;
        trace.gaps.push(gap);
        x = next;
        let next_lambda = ratio(&x)?;
        if gap <= tol {
            trace.converged = true;
            lambda = next_lambda;
            break;
        }
        lambda = next_lambda;
    }
    if !trace.converged {
        log::warn!("Dinkelbach stopped after {max_iters} iterations without reaching tolerance {tol}");
    }
    trace.lambdas.push(lambda);
    Ok((x, lambda, trace))
}
