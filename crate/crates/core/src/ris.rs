//! RIS coefficient state and its feasibility sets.
//!
//! Each element `m` of surface `n` carries one complex coefficient per sector.
//! The sets are per element:
//!
//! - `T_U`: `Σ_s |φ_s|² ≤ 1`
//! - `T_I`: `Σ_s |φ_s|² = 1`
//! - `T_SN` (two sectors): `T_I` and `Re{φ₁* φ₂} = 0`, equivalently
//!   `|φ₁ ± φ₂|² ≤ 1` together with the unit-energy equality.
//!
//! Projections work on the real coordinates `[Re φ₁, Im φ₁, Re φ₂, ...]` of
//! one element.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::{FeasibilitySet, OpMode};
use crate::error::{Error, Result};
use crate::Complex64;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct RisState {
    surfaces: usize,
    elements: usize,
    sectors: usize,
    phi: Vec<Complex64>,
    /// Mode-switching assignment `[n][m] → sector`, if any.
    ms_assignment: Option<Vec<Vec<usize>>>,
}

impl RisState {
    pub fn zeros(surfaces: usize, elements: usize, sectors: usize) -> Self {
        RisState {
            surfaces,
            elements,
            sectors,
            phi: vec![ZERO; surfaces * elements * sectors],
            ms_assignment: None,
        }
    }

    pub fn from_coefficients(surfaces: usize, elements: usize, sectors: usize, phi: Vec<Complex64>) -> Result<Self> {
        if phi.len() != surfaces * elements * sectors {
            return Err(Error::Dimension(format!(
                "{} coefficients for {surfaces}x{elements}x{sectors}",
                phi.len()
            )));
        }
        Ok(RisState {
            surfaces,
            elements,
            sectors,
            phi,
            ms_assignment: None,
        })
    }

    /// Random start: i.i.d. uniform phases with amplitude `1/√N_s` (ES) or a
    /// unit coefficient in the active sector (MS). Feasible for every set;
    /// `T_SN` starts are phase-corrected.
    pub fn random<R: Rng + ?Sized>(
        surfaces: usize,
        elements: usize,
        sectors: usize,
        set: FeasibilitySet,
        ms_groups: Option<&[Vec<Vec<usize>>]>,
        rng: &mut R,
    ) -> Result<Self> {
        let mut s = RisState::zeros(surfaces, elements, sectors);
        let amp = 1.0 / (sectors as f64).sqrt();
        for z in s.phi.iter_mut() {
            let theta: f64 = rng.random::<f64>() * 2.0 * PI;
            *z = Complex64::from_polar(amp, theta);
        }
        if let Some(groups) = ms_groups {
            s.set_ms_groups(groups)?;
            s.apply_ms_mask();
            for z in s.phi.iter_mut() {
                if *z != ZERO {
                    *z /= z.norm();
                }
            }
        }
        if set == FeasibilitySet::StarCoupled {
            s.restore_star_phase();
        }
        Ok(s)
    }

    pub fn surfaces(&self) -> usize {
        self.surfaces
    }

    pub fn elements(&self) -> usize {
        self.elements
    }

    pub fn sectors(&self) -> usize {
        self.sectors
    }

    fn index(&self, n: usize, m: usize, s: usize) -> usize {
        (n * self.elements + m) * self.sectors + s
    }

    pub fn coefficient(&self, n: usize, m: usize, s: usize) -> Complex64 {
        self.phi[self.index(n, m, s)]
    }

    pub fn set_coefficient(&mut self, n: usize, m: usize, s: usize, v: Complex64) {
        let idx = self.index(n, m, s);
        self.phi[idx] = v;
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.phi
    }

    /// Sector vector of element `(n, m)`.
    pub fn element(&self, n: usize, m: usize) -> &[Complex64] {
        let start = self.index(n, m, 0);
        &self.phi[start..start + self.sectors]
    }

    pub fn element_mut(&mut self, n: usize, m: usize) -> &mut [Complex64] {
        let start = self.index(n, m, 0);
        &mut self.phi[start..start + self.sectors]
    }

    /// Real view `[Re, Im, Re, Im, ...]` in coefficient order.
    pub fn to_real(&self) -> Vec<f64> {
        self.phi.iter().flat_map(|z| [z.re, z.im]).collect()
    }

    pub fn set_from_real(&mut self, x: &[f64]) {
        for (z, c) in self.phi.iter_mut().zip(x.chunks_exact(2)) {
            *z = Complex64::new(c[0], c[1]);
        }
    }

    pub fn ms_assignment(&self) -> Option<&[Vec<usize>]> {
        self.ms_assignment.as_deref()
    }

    /// Active sector of element `(n, m)` under mode switching.
    pub fn active_sector(&self, n: usize, m: usize) -> Option<usize> {
        self.ms_assignment.as_ref().map(|a| a[n][m])
    }

    /// Attach mode-switching groups (`groups[n][s]` = elements of sector `s`).
    pub fn set_ms_groups(&mut self, groups: &[Vec<Vec<usize>>]) -> Result<()> {
        if groups.len() != self.surfaces {
            return Err(Error::Dimension("one group list per surface expected".into()));
        }
        let mut assign = vec![vec![usize::MAX; self.elements]; self.surfaces];
        for (n, g) in groups.iter().enumerate() {
            if g.len() != self.sectors {
                return Err(Error::Dimension(format!("surface {n}: {} groups for {} sectors", g.len(), self.sectors)));
            }
            for (s, members) in g.iter().enumerate() {
                for &m in members {
                    if m >= self.elements || assign[n][m] != usize::MAX {
                        return Err(Error::Dimension(format!("surface {n}: groups are not a partition")));
                    }
                    assign[n][m] = s;
                }
            }
            if assign[n].contains(&usize::MAX) {
                return Err(Error::Dimension(format!("surface {n}: groups do not cover every element")));
            }
        }
        self.ms_assignment = Some(assign);
        Ok(())
    }

    /// Zero every out-of-group coefficient (no-op without groups).
    pub fn apply_ms_mask(&mut self) {
        let Some(assign) = self.ms_assignment.clone() else {
            return;
        };
        for n in 0..self.surfaces {
            for m in 0..self.elements {
                let active = assign[n][m];
                for (s, z) in self.element_mut(n, m).iter_mut().enumerate() {
                    if s != active {
                        *z = ZERO;
                    }
                }
            }
        }
    }

    /// Scale every element to unit sector energy. Zero elements are replaced by
    /// a uniformly random unit vector (restricted to the active sector under
    /// mode switching); returns how many were replaced.
    pub fn normalize_lossless<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        let mut degenerate = 0;
        for n in 0..self.surfaces {
            for m in 0..self.elements {
                let active = self.active_sector(n, m);
                let e = self.element_mut(n, m);
                let norm = e.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if norm > 0.0 && norm.is_finite() {
                    e.iter_mut().for_each(|z| *z /= norm);
                    continue;
                }
                degenerate += 1;
                log::debug!("element ({n},{m}) has zero energy; drawing a random unit vector");
                let mut draw = || -> Complex64 {
                    let re: f64 = StandardNormal.sample(rng);
                    let im: f64 = StandardNormal.sample(rng);
                    Complex64::new(re, im)
                };
                match active {
                    Some(a) => {
                        let z = draw();
                        e.iter_mut().for_each(|x| *x = ZERO);
                        e[a] = if z.norm() > 0.0 { z / z.norm() } else { Complex64::new(1.0, 0.0) };
                    }
                    None => {
                        e.iter_mut().for_each(|x| *x = draw());
                        let s = e.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                        e.iter_mut().for_each(|z| *z /= s);
                    }
                }
            }
        }
        degenerate
    }

    /// Rotate `φ₂` of every two-sector element to the nearest phase with
    /// `Re{φ₁* φ₂} = 0`; magnitudes are unchanged.
    pub fn restore_star_phase(&mut self) {
        if self.sectors != 2 {
            return;
        }
        for z in self.phi.chunks_exact_mut(2) {
            let (a, b) = (z[0], z[1]);
            if a.norm() == 0.0 || b.norm() == 0.0 {
                continue;
            }
            let alpha = a.arg();
            let beta = b.arg();
            let up = alpha + PI / 2.0;
            let down = alpha - PI / 2.0;
            let dist = |t: f64| (Complex64::from_polar(1.0, beta - t)).arg().abs();
            let target = if dist(up) <= dist(down) { up } else { down };
            z[1] = Complex64::from_polar(b.norm(), target);
        }
    }

    /// CSV rows `n,m,n_s,re,im`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["n", "m", "n_s", "re", "im"])?;
        for n in 0..self.surfaces {
            for m in 0..self.elements {
                for s in 0..self.sectors {
                    let z = self.coefficient(n, m, s);
                    out.write_record([
                        n.to_string(),
                        m.to_string(),
                        s.to_string(),
                        format!("{:?}", z.re),
                        format!("{:?}", z.im),
                    ])?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Membership
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Membership {
    pub member: bool,
    pub worst_violation: f64,
    /// Element `(n, m)` with the largest violation.
    pub worst_element: Option<(usize, usize)>,
}

/// Check every per-element constraint of `set` (and the mode-switching mask,
/// if the state carries one) within `tol`.
pub fn membership(state: &RisState, set: FeasibilitySet, tol: f64) -> Membership {
    let mut worst = 0.0f64;
    let mut at = None;
    for n in 0..state.surfaces {
        for m in 0..state.elements {
            let e = state.element(n, m);
            let energy: f64 = e.iter().map(|z| z.norm_sqr()).sum();
            let mut v = match set {
                FeasibilitySet::Unit => (energy - 1.0).max(0.0),
                FeasibilitySet::Lossless | FeasibilitySet::StarCoupled => (energy - 1.0).abs(),
            };
            if set == FeasibilitySet::StarCoupled {
                if e.len() == 2 {
                    v = v.max((e[0].conj() * e[1]).re.abs());
                } else {
                    v = f64::INFINITY;
                }
            }
            if let Some(active) = state.active_sector(n, m) {
                for (s, z) in e.iter().enumerate() {
                    if s != active {
                        v = v.max(z.norm());
                    }
                }
            }
            if v > worst || (at.is_none() && v.is_infinite()) {
                worst = v;
                at = Some((n, m));
            }
        }
    }
    Membership {
        member: worst <= tol,
        worst_violation: worst,
        worst_element: at,
    }
}

// ---------------------------------------------------------------------------
// Per-element projections
// ---------------------------------------------------------------------------

/// Euclidean projection onto the unit ball: scale by `min(1, 1/‖x‖)`.
pub fn project_unit_ball(x: &mut [f64]) {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 1.0 {
        x.iter_mut().for_each(|v| *v /= norm);
    }
}

pub fn project_unit_ball_complex(v: &[Complex64]) -> Vec<Complex64> {
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let scale = if norm > 1.0 { 1.0 / norm } else { 1.0 };
    v.iter().map(|z| z * scale).collect()
}

/// Half-space `normal · x ≥ bound` in the real coordinates of one element.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub bound: f64,
}

impl Halfspace {
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        dot(&self.normal, x) >= self.bound - tol
    }

    fn project(&self, x: &mut [f64]) {
        let a2 = dot(&self.normal, &self.normal);
        let gap = self.bound - dot(&self.normal, x);
        if gap > 0.0 && a2 > 0.0 {
            let t = gap / a2;
            x.iter_mut().zip(&self.normal).for_each(|(v, a)| *v += t * a);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Linearization of `Σ_s |φ_s|² ≥ 1` around `prev`, relaxed by `epsilon`:
/// `Σ_s (2 Re{prev_s* φ_s} − |prev_s|²) ≥ 1 − ε`.
pub fn ccp_halfspace(prev: &[Complex64], epsilon: f64) -> Halfspace {
    let energy: f64 = prev.iter().map(|z| z.norm_sqr()).sum();
    Halfspace {
        normal: prev.iter().flat_map(|z| [2.0 * z.re, 2.0 * z.im]).collect(),
        bound: 1.0 - epsilon + energy,
    }
}

/// Left-hand side `Σ_s (2 Re{prev_s* φ_s} − |prev_s|²)` of the CCP constraint.
pub fn ccp_value(prev: &[Complex64], phi: &[Complex64]) -> f64 {
    prev.iter()
        .zip(phi)
        .map(|(p, f)| 2.0 * (p.conj() * f).re - p.norm_sqr())
        .sum()
}

/// Euclidean projection onto `{‖x‖ ≤ 1} ∩ halfspace`.
///
/// Closed form by KKT case analysis: the point itself, its radial scaling,
/// its projection on the hyperplane, or the nearest point of the
/// sphere-hyperplane intersection.
pub fn project_ball_halfspace(x: &[f64], hs: &Halfspace) -> Result<Vec<f64>> {
    let a = &hs.normal;
    let b = hs.bound;
    let a2 = dot(a, a);
    if a2 == 0.0 {
        if b > 0.0 {
            return Err(Error::EmptyFeasibleSet("zero half-space normal with positive bound".into()));
        }
        let mut y = x.to_vec();
        project_unit_ball(&mut y);
        return Ok(y);
    }
    // closest point of the hyperplane to the origin
    let c_scale = b / a2;
    let c_norm2 = c_scale * c_scale * a2;
    if b > 0.0 && c_norm2 > 1.0 + 1e-12 {
        return Err(Error::EmptyFeasibleSet(format!(
            "half-space lies outside the unit ball (distance {})",
            c_norm2.sqrt()
        )));
    }
    let norm2 = dot(x, x);
    let ax = dot(a, x);
    if norm2 <= 1.0 && ax >= b {
        return Ok(x.to_vec());
    }
    let mut y = x.to_vec();
    project_unit_ball(&mut y);
    if dot(a, &y) >= b {
        return Ok(y);
    }
    if ax < b {
        let mut z = x.to_vec();
        hs.project(&mut z);
        if dot(&z, &z) <= 1.0 {
            return Ok(z);
        }
    }
    // sphere ∩ hyperplane: c + r · w/‖w‖ with w the part of x orthogonal to a
    let r = (1.0 - c_norm2).max(0.0).sqrt();
    let t = ax / a2;
    let mut w: Vec<f64> = x.iter().zip(a).map(|(xi, ai)| xi - t * ai).collect();
    let mut wn = dot(&w, &w).sqrt();
    if wn < 1e-300 {
        // x is parallel to a; every point of the circle is equidistant
        w = orthogonal_unit(a);
        wn = 1.0;
    }
    Ok(a.iter()
        .zip(&w)
        .map(|(ai, wi)| c_scale * ai + r * wi / wn)
        .collect())
}

fn orthogonal_unit(a: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; a.len()];
    if a.len() < 2 {
        return w;
    }
    // rotate the first nonzero pair
    let i = a.iter().position(|v| *v != 0.0).unwrap_or(0);
    let j = if i + 1 < a.len() { i + 1 } else { i - 1 };
    w[i] = -a[j];
    w[j] = a[i];
    let n = dot(&w, &w).sqrt();
    if n == 0.0 {
        w[j] = 1.0;
        return w;
    }
    w.iter_mut().for_each(|v| *v /= n);
    w
}

/// Projection onto the STAR phase-coupling caps `|φ₁ ± φ₂|² ≤ 1`.
///
/// With `u = (φ₁+φ₂)/√2`, `v = (φ₁−φ₂)/√2` the set is `|u|, |v| ≤ 1/√2`.
pub fn project_star_caps(x: &mut [f64]) {
    debug_assert_eq!(x.len(), 4);
    let s = FRAC_1_SQRT_2;
    let mut u = [s * (x[0] + x[2]), s * (x[1] + x[3])];
    let mut v = [s * (x[0] - x[2]), s * (x[1] - x[3])];
    for w in [&mut u, &mut v] {
        let n = (w[0] * w[0] + w[1] * w[1]).sqrt();
        if n > s {
            w[0] *= s / n;
            w[1] *= s / n;
        }
    }
    x[0] = s * (u[0] + v[0]);
    x[1] = s * (u[1] + v[1]);
    x[2] = s * (u[0] - v[0]);
    x[3] = s * (u[1] - v[1]);
}

#[cfg(test)]
fn in_star_caps(x: &[f64], tol: f64) -> bool {
    let p = (x[0] + x[2]).powi(2) + (x[1] + x[3]).powi(2);
    let m = (x[0] - x[2]).powi(2) + (x[1] - x[3]).powi(2);
    p <= 1.0 + tol && m <= 1.0 + tol
}

/// Projection onto the STAR caps intersected with a half-space `a·y ≥ b`.
///
/// The KKT point is `y(μ) = P_caps(x + μa)` for the multiplier `μ ≥ 0`, and
/// `a·y(μ)` is non-decreasing in `μ`, so `μ` is found by bisection.
pub fn project_star_halfspace(x: &[f64], hs: &Halfspace) -> Result<Vec<f64>> {
    if x.len() != 4 {
        return Err(Error::Dimension("STAR projection needs two sectors".into()));
    }
    let shifted = |mu: f64| {
        let mut y: Vec<f64> = x.iter().zip(&hs.normal).map(|(xi, ai)| xi + mu * ai).collect();
        project_star_caps(&mut y);
        y
    };
    let y = shifted(0.0);
    if hs.contains(&y, 0.0) {
        return Ok(y);
    }
    let a2 = dot(&hs.normal, &hs.normal);
    if a2 == 0.0 {
        return Err(Error::EmptyFeasibleSet("STAR caps do not meet the CCP half-space".into()));
    }
    let (mut lo, mut hi) = (0.0, 1.0 / a2);
    while !hs.contains(&shifted(hi), 0.0) {
        if hi > 1e12 / a2 {
            // the caps only touch the hyperplane; accept the touching point
            let y = shifted(hi);
            return if hs.contains(&y, 1e-9) {
                Ok(y)
            } else {
                Err(Error::EmptyFeasibleSet("STAR caps do not meet the CCP half-space".into()))
            };
        }
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if hs.contains(&shifted(mid), 0.0) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(shifted(hi))
}

// ---------------------------------------------------------------------------
// Mode switching
// ---------------------------------------------------------------------------

/// Random partition of `0..elements` into `sectors` groups of size
/// `⌊elements/sectors⌋` or one more.
pub fn ms_partition<R: Rng + ?Sized>(rng: &mut R, elements: usize, sectors: usize) -> Result<Vec<Vec<usize>>> {
    if sectors == 0 || elements < sectors {
        return Err(Error::Dimension(format!(
            "cannot split {elements} elements into {sectors} sectors"
        )));
    }
    let mut idx: Vec<usize> = (0..elements).collect();
    idx.shuffle(rng);
    let base = elements / sectors;
    let extra = elements % sectors;
    let mut order: Vec<usize> = (0..sectors).collect();
    order.shuffle(rng);
    let mut sizes = vec![base; sectors];
    for &g in order.iter().take(extra) {
        sizes[g] += 1;
    }
    let mut groups = Vec::with_capacity(sectors);
    let mut it = idx.into_iter();
    for size in sizes {
        let mut g: Vec<usize> = it.by_ref().take(size).collect();
        g.sort_unstable();
        groups.push(g);
    }
    Ok(groups)
}

/// Whether `set` is meaningful for a surface with `sectors` sectors under `mode`.
pub fn set_is_valid(set: FeasibilitySet, sectors: usize, _mode: OpMode) -> bool {
    set != FeasibilitySet::StarCoupled || sectors == 2
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn state(v: &[Complex64]) -> RisState {
        RisState::from_coefficients(1, 1, v.len(), v.to_vec()).unwrap()
    }

    #[test]
    fn orthogonal_star_pair_is_in_every_set() {
        let s = state(&[c(FRAC_1_SQRT_2, 0.0), c(0.0, FRAC_1_SQRT_2)]);
        for set in [FeasibilitySet::Unit, FeasibilitySet::Lossless, FeasibilitySet::StarCoupled] {
            assert!(membership(&s, set, 1e-12).member, "{set}");
        }
    }

    #[test]
    fn lossy_element_is_only_in_unit_set() {
        let s = state(&[c(0.6, 0.0), c(0.3, 0.0)]);
        assert!(membership(&s, FeasibilitySet::Unit, 1e-12).member);
        let m = membership(&s, FeasibilitySet::Lossless, 1e-12);
        assert!(!m.member);
        assert!((m.worst_violation - 0.55).abs() < 1e-12);
        assert_eq!(m.worst_element, Some((0, 0)));
    }

    #[test]
    fn in_phase_pair_violates_coupling() {
        let s = state(&[c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0)]);
        assert!(membership(&s, FeasibilitySet::Lossless, 1e-12).member);
        assert!(!membership(&s, FeasibilitySet::StarCoupled, 1e-9).member);
    }

    #[test]
    fn ball_projection_cases() {
        let mut a = vec![0.3, 0.4];
        project_unit_ball(&mut a);
        assert_eq!(a, vec![0.3, 0.4]);
        let p = project_unit_ball_complex(&[c(2.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(p, vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut v: Vec<f64> = (0..6).map(|_| rng.random::<f64>() - 0.5).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x *= 3.0 / n);
        project_unit_ball(&mut v);
        assert!((v.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut s = state(&[c(0.6, 0.0), c(0.3, 0.0)]);
        assert_eq!(s.normalize_lossless(&mut rng), 0);
        assert!((s.coefficient(0, 0, 0).re - 0.894427190999916).abs() < 1e-12);
        assert!((s.coefficient(0, 0, 1).re - 0.447213595499958).abs() < 1e-12);
        let before = s.clone();
        s.normalize_lossless(&mut rng);
        for (a, b) in s.coefficients().iter().zip(before.coefficients()) {
            assert!((a - b).norm() < 1e-15);
        }
        let mut z = state(&[c(0.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(z.normalize_lossless(&mut rng), 1);
        assert!(membership(&z, FeasibilitySet::Lossless, 1e-12).member);
    }

    #[test]
    fn ccp_constraint_examples() {
        let hs = ccp_halfspace(&[c(1.0, 0.0), c(0.0, 0.0)], 0.1);
        assert_eq!(hs.normal, vec![2.0, 0.0, 0.0, 0.0]);
        assert!((hs.bound - 1.9).abs() < 1e-15);
        // a unit-energy previous point satisfies its own constraint with margin ε
        let prev = [c(0.6, 0.0), c(0.0, 0.8)];
        let hs = ccp_halfspace(&prev, 0.1);
        let x: Vec<f64> = prev.iter().flat_map(|z| [z.re, z.im]).collect();
        assert!((dot(&hs.normal, &x) - hs.bound - 0.1).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p: Vec<Complex64> = (0..3).map(|_| c(rng.random(), rng.random())).collect();
        let e: f64 = p.iter().map(|z| z.norm_sqr()).sum();
        assert!((ccp_value(&p, &p) - e).abs() < 1e-15);
    }

    #[test]
    fn ball_halfspace_projection_by_hand() {
        let hs = ccp_halfspace(&[c(1.0, 0.0), c(0.0, 0.0)], 0.1);
        let p = project_ball_halfspace(&[2.0, 0.0, 0.0, 0.0], &hs).unwrap();
        assert_eq!(p, vec![1.0, 0.0, 0.0, 0.0]);
        let inside = [0.99, 0.05, 0.0, 0.0];
        assert_eq!(project_ball_halfspace(&inside, &hs).unwrap(), inside.to_vec());
        let far = Halfspace { normal: vec![1.0, 0.0], bound: 2.0 };
        assert!(project_ball_halfspace(&[0.0, 0.0], &far).is_err());
    }

    #[test]
    fn star_projection_satisfies_caps() {
        let prev = [c(FRAC_1_SQRT_2, 0.0), c(0.0, FRAC_1_SQRT_2)];
        let hs = ccp_halfspace(&prev, 0.05);
        let p = project_star_halfspace(&[1.2, 0.4, 0.9, -0.3], &hs).unwrap();
        assert!(in_star_caps(&p, 1e-10));
        assert!(hs.contains(&p, 1e-10));
    }

    #[test]
    fn star_phase_restoration() {
        let mut s = state(&[c(0.8, 0.0), c(0.5, 0.33)]);
        s.restore_star_phase();
        let e = s.element(0, 0);
        assert!((e[0].conj() * e[1]).re.abs() < 1e-15);
        assert!((e[1].norm() - c(0.5, 0.33).norm()).abs() < 1e-15);
        assert!(e[1].im > 0.0);
    }

    #[test]
    fn partition_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = ms_partition(&mut rng, 8, 4).unwrap();
        assert!(g.iter().all(|x| x.len() == 2));
        let g = ms_partition(&mut rng, 9, 4).unwrap();
        let mut sizes: Vec<usize> = g.iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 2, 3]);
        assert!(ms_partition(&mut rng, 3, 4).is_err());
    }

    #[test]
    fn mask_zeroes_out_of_group_coefficients() {
        let mut s = RisState::from_coefficients(1, 2, 2, vec![c(0.5, 0.1), c(0.2, 0.3), c(0.1, 0.1), c(0.9, 0.0)]).unwrap();
        s.set_ms_groups(&[vec![vec![0], vec![1]]]).unwrap();
        s.apply_ms_mask();
        assert_eq!(s.coefficient(0, 0, 1), ZERO);
        assert_eq!(s.coefficient(0, 1, 0), ZERO);
        assert_eq!(s.coefficient(0, 0, 0), c(0.5, 0.1));
        let once = s.clone();
        s.apply_ms_mask();
        assert_eq!(s, once);
        // unit in-group magnitudes are lossless and trivially phase coupled
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        s.normalize_lossless(&mut rng);
        assert!(membership(&s, FeasibilitySet::Lossless, 1e-12).member);
        assert!(membership(&s, FeasibilitySet::StarCoupled, 1e-12).member);
    }

    #[test]
    fn random_start_is_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for set in [FeasibilitySet::Unit, FeasibilitySet::Lossless, FeasibilitySet::StarCoupled] {
            let s = RisState::random(2, 5, 2, set, None, &mut rng).unwrap();
            assert!(membership(&s, set, 1e-12).member);
        }
        let groups: Vec<_> = (0..2).map(|_| ms_partition(&mut rng, 5, 2).unwrap()).collect();
        let s = RisState::random(2, 5, 2, FeasibilitySet::Lossless, Some(&groups), &mut rng).unwrap();
        assert!(membership(&s, FeasibilitySet::StarCoupled, 1e-12).member);
    }
}
