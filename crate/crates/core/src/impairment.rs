//! I/Q imbalance as widely linear transforms, and the real-domain channel
//! model the optimizer works with.
//!
//! A widely linear transform (WLT) maps `x ↦ C1·x + C2·x*`. Stacking
//! `[Re x; Im x]` turns every WLT into an ordinary real matrix, so the
//! impaired link `rx ∘ H ∘ tx` becomes a real `2N_U × 2N_B` matrix.

use crate::channel::{effective_channel, ComplexChannelSet};
use crate::config::{Dims, IqiConfig};
use crate::error::{Error, Result};
use crate::linalg::frob_dot;
use crate::ris::RisState;
use crate::{CMat, Complex64, RMat};

/// Widely linear transform `y = c1·x + c2·x*`.
#[derive(Debug, Clone, PartialEq)]
pub struct WltPair {
    pub c1: CMat,
    pub c2: CMat,
}

impl WltPair {
    pub fn new(c1: CMat, c2: CMat) -> Result<Self> {
        if c1.shape() != c2.shape() {
            return Err(Error::Dimension(format!("WLT parts {:?} vs {:?}", c1.shape(), c2.shape())));
        }
        Ok(WltPair { c1, c2 })
    }

    /// Strictly linear transform `y = h·x`.
    pub fn linear(h: CMat) -> Self {
        let c2 = CMat::zeros(h.nrows(), h.ncols());
        WltPair { c1: h, c2 }
    }

    pub fn identity(dim: usize) -> Self {
        WltPair::linear(CMat::identity(dim, dim))
    }

    /// `self ∘ inner`: apply `inner` first, then `self`.
    pub fn after(&self, inner: &WltPair) -> Result<WltPair> {
        if self.c1.ncols() != inner.c1.nrows() {
            return Err(Error::Dimension(format!(
                "cannot compose {:?} after {:?}",
                self.c1.shape(),
                inner.c1.shape()
            )));
        }
        Ok(WltPair {
            c1: &self.c1 * &inner.c1 + &self.c2 * inner.c2.map(|z| z.conj()),
            c2: &self.c1 * &inner.c2 + &self.c2 * inner.c1.map(|z| z.conj()),
        })
    }

    pub fn apply(&self, x: &nalgebra::DVector<Complex64>) -> nalgebra::DVector<Complex64> {
        &self.c1 * x + &self.c2 * x.map(|z| z.conj())
    }
}

/// Device IQI coefficients `Γ₁ = (1 + a·e^{jθ})/2 · I`, `Γ₂ = I − Γ₁*`.
pub fn iqi_coefficients(amplitude: f64, phase: f64, dim: usize) -> WltPair {
    let g1 = (Complex64::new(1.0, 0.0) + Complex64::from_polar(amplitude, phase)) * 0.5;
    let g2 = Complex64::new(1.0, 0.0) - g1.conj();
    WltPair {
        c1: CMat::from_diagonal_element(dim, dim, g1),
        c2: CMat::from_diagonal_element(dim, dim, g2),
    }
}

/// End-to-end WLT of transmitter IQI, linear channel `h` and receiver IQI:
/// `(Γr1·H·Γt1 + Γr2·H*·Γt2*, Γr1·H·Γt2 + Γr2·H*·Γt1*)`.
pub fn compose_wlt(h: &CMat, tx: &WltPair, rx: &WltPair) -> Result<WltPair> {
    if rx.c1.ncols() != h.nrows() || h.ncols() != tx.c1.nrows() {
        return Err(Error::Dimension(format!(
            "rx {:?}, channel {:?}, tx {:?}",
            rx.c1.shape(),
            h.shape(),
            tx.c1.shape()
        )));
    }
    let hc = h.map(|z| z.conj());
    let conj = |m: &CMat| m.map(|z| z.conj());
    Ok(WltPair {
        c1: &rx.c1 * h * &tx.c1 + &rx.c2 * &hc * conj(&tx.c2),
        c2: &rx.c1 * h * &tx.c2 + &rx.c2 * &hc * conj(&tx.c1),
    })
}

/// Real matrix `M` with `[Re y; Im y] = M·[Re x; Im x]` for `y = c1·x + c2·x*`.
pub fn real_decompose_wlt(pair: &WltPair) -> RMat {
    let (m, n) = pair.c1.shape();
    let mut out = RMat::zeros(2 * m, 2 * n);
    for r in 0..m {
        for c in 0..n {
            let a = pair.c1[(r, c)];
            let b = pair.c2[(r, c)];
            out[(r, c)] = a.re + b.re;
            out[(r, n + c)] = -a.im + b.im;
            out[(m + r, c)] = a.im + b.im;
            out[(m + r, n + c)] = a.re - b.re;
        }
    }
    out
}

/// Real form of a strictly linear map.
pub fn realify(h: &CMat) -> RMat {
    let (m, n) = h.shape();
    let mut out = RMat::zeros(2 * m, 2 * n);
    for r in 0..m {
        for c in 0..n {
            let z = h[(r, c)];
            out[(r, c)] = z.re;
            out[(r, n + c)] = -z.im;
            out[(m + r, c)] = z.im;
            out[(m + r, n + c)] = z.re;
        }
    }
    out
}

/// Covariance `(σ²/2)·M·Mᵀ` of proper complex noise of power `σ²` passed
/// through the receiver WLT `M`.
pub fn effective_noise_covariance(rx: &WltPair, sigma2: f64) -> RMat {
    let m = real_decompose_wlt(rx);
    let mut c = &m * m.transpose() * (0.5 * sigma2);
    crate::linalg::symmetrize_in_place(&mut c);
    c
}

/// Real-domain channels and noise covariances for one RIS state.
#[derive(Debug, Clone, PartialEq)]
pub struct RealChannelSet {
    dims: Dims,
    /// `[l][k][j][i]`, `2N_U × 2N_B`.
    h: Vec<RMat>,
    /// `[l][k][i]`, `2N_U × 2N_U`.
    noise: Vec<RMat>,
}

impl RealChannelSet {
    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Channel from BS `j` to user `(l, k)` on subband `i`.
    pub fn h(&self, l: usize, k: usize, j: usize, i: usize) -> &RMat {
        &self.h[self.dims.link(l, k, j, i)]
    }

    pub fn noise(&self, l: usize, k: usize, i: usize) -> &RMat {
        &self.noise[self.dims.user_subband(l, k, i)]
    }
}

fn device_pairs(iqi: &IqiConfig, d: Dims, i: usize) -> (WltPair, WltPair) {
    (
        iqi_coefficients(iqi.tx_amplitude[i], iqi.tx_phase[i], d.bs_antennas),
        iqi_coefficients(iqi.rx_amplitude[i], iqi.rx_phase[i], d.user_antennas),
    )
}

fn noise_blocks(iqi: &IqiConfig, d: Dims, sigma2: f64) -> Vec<RMat> {
    let per_subband: Vec<RMat> = (0..d.subbands)
        .map(|i| effective_noise_covariance(&device_pairs(iqi, d, i).1, sigma2))
        .collect();
    let mut noise = Vec::with_capacity(d.num_users() * d.subbands);
    for _ in 0..d.num_users() {
        noise.extend(per_subband.iter().cloned());
    }
    noise
}

/// Direct construction: effective complex channel, then IQI, then real form.
pub fn build_real_channels(channels: &ComplexChannelSet, ris: &RisState, iqi: &IqiConfig, sigma2: f64) -> RealChannelSet {
    let d = channels.dims();
    let pairs: Vec<_> = (0..d.subbands).map(|i| device_pairs(iqi, d, i)).collect();
    let mut h = Vec::with_capacity(d.num_links());
    for l in 0..d.cells {
        for k in 0..d.users {
            for j in 0..d.cells {
                for (i, (tx, rx)) in pairs.iter().enumerate() {
                    let eff = effective_channel(channels, ris, l, k, j, i);
                    let pair = compose_wlt(&eff, tx, rx).expect("channel dims match device dims");
                    h.push(real_decompose_wlt(&pair));
                }
            }
        }
    }
    RealChannelSet {
        dims: d,
        h,
        noise: noise_blocks(iqi, d, sigma2),
    }
}

/// The real channels as an affine function of the RIS coefficients:
/// `H(φ) = H₀ + Σ_m (Re φ_m · A_m + Im φ_m · B_m)`, where `m` runs over the
/// coefficients of the surface and sector serving the user.
#[derive(Debug, Clone)]
pub struct RealChannelModel {
    dims: Dims,
    offset: Vec<RMat>,
    /// Per link: `(coefficient index, A_m, B_m)`.
    basis: Vec<Vec<(usize, RMat, RMat)>>,
    noise: Vec<RMat>,
}

impl RealChannelModel {
    pub fn new(channels: &ComplexChannelSet, iqi: &IqiConfig, sigma2: f64) -> Self {
        let d = channels.dims();
        let maps: Vec<(RMat, RMat)> = (0..d.subbands)
            .map(|i| {
                let (tx, rx) = device_pairs(iqi, d, i);
                (real_decompose_wlt(&tx), real_decompose_wlt(&rx))
            })
            .collect();
        let mut offset = Vec::with_capacity(d.num_links());
        let mut basis = Vec::with_capacity(d.num_links());
        let j_unit = Complex64::new(0.0, 1.0);
        for l in 0..d.cells {
            for k in 0..d.users {
                let cov = channels.coverage(l, k);
                for j in 0..d.cells {
                    for (i, (rt, rr)) in maps.iter().enumerate() {
                        offset.push(rr * realify(channels.direct(l, k, j, i)) * rt);
                        let mut terms = Vec::new();
                        if let Some(c) = cov {
                            let gu = channels.g_user(l, k, c.ris, i);
                            let gb = channels.g_bs(c.ris, j, i);
                            for m in 0..d.elements {
                                let outer = gu.column(m) * gb.row(m);
                                if outer.iter().all(|z| z.norm_sqr() == 0.0) {
                                    continue;
                                }
                                let a = rr * realify(&outer) * rt;
                                let b = rr * realify(&(outer * j_unit)) * rt;
                                terms.push((d.coefficient(c.ris, m, c.sector), a, b));
                            }
                        }
                        basis.push(terms);
                    }
                }
            }
        }
        RealChannelModel {
            dims: d,
            offset,
            basis,
            noise: noise_blocks(iqi, d, sigma2),
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Whether any link of user `(l, k)` depends on the RIS.
    pub fn depends_on_ris(&self, l: usize, k: usize) -> bool {
        (0..self.dims.cells)
            .flat_map(|j| (0..self.dims.subbands).map(move |i| (j, i)))
            .any(|(j, i)| !self.basis[self.dims.link(l, k, j, i)].is_empty())
    }

    pub fn link_channel(&self, ris: &RisState, l: usize, k: usize, j: usize, i: usize) -> RMat {
        let idx = self.dims.link(l, k, j, i);
        let phi = ris.coefficients();
        let mut h = self.offset[idx].clone();
        for (c, a, b) in &self.basis[idx] {
            let z = phi[*c];
            if z.re != 0.0 || z.im != 0.0 {
                h.zip_zip_apply(a, b, |x, av, bv| *x += z.re * av + z.im * bv);
            }
        }
        h
    }

    pub fn evaluate(&self, ris: &RisState) -> RealChannelSet {
        let d = self.dims;
        let mut h = Vec::with_capacity(d.num_links());
        for l in 0..d.cells {
            for k in 0..d.users {
                for j in 0..d.cells {
                    for i in 0..d.subbands {
                        h.push(self.link_channel(ris, l, k, j, i));
                    }
                }
            }
        }
        RealChannelSet {
            dims: d,
            h,
            noise: self.noise.clone(),
        }
    }

    /// Add the gradient of a function of `H(l,k,j,i)` with matrix gradient
    /// `g` to `grad`, indexed like [`RisState::to_real`].
    pub fn pullback(&self, l: usize, k: usize, j: usize, i: usize, g: &RMat, grad: &mut [f64]) {
        for (c, a, b) in &self.basis[self.dims.link(l, k, j, i)] {
            grad[2 * c] += frob_dot(g, a);
            grad[2 * c + 1] += frob_dot(g, b);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_cmat(rng: &mut ChaCha8Rng, r: usize, cc: usize) -> CMat {
        CMat::from_fn(r, cc, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    fn stack(v: &DVector<Complex64>) -> DVector<f64> {
        let n = v.len();
        DVector::from_fn(2 * n, |r, _| if r < n { v[r].re } else { v[r - n].im })
    }

    #[test]
    fn ideal_device() {
        let p = iqi_coefficients(1.0, 0.0, 2);
        assert_eq!(p.c1, CMat::identity(2, 2));
        assert_eq!(p.c2, CMat::zeros(2, 2));
    }

    #[test]
    fn coefficient_values() {
        let p = iqi_coefficients(0.9, 0.1, 1);
        let g1 = p.c1[(0, 0)];
        let g2 = p.c2[(0, 0)];
        // (1 + 0.9 cos 0.1)/2, 0.9 sin 0.1 / 2
        let re = (1.0 + 0.9 * 0.1f64.cos()) / 2.0;
        let im = 0.9 * 0.1f64.sin() / 2.0;
        assert!((g1 - c(re, im)).norm() < 1e-15);
        assert!((g2 - c(1.0 - re, im)).norm() < 1e-15);
        assert!((g1.re - 0.94775).abs() < 1e-5 && (g1.im - 0.044925).abs() < 1e-5);
        assert!((g1 + g2.conj() - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn compose_ideal_and_real_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = random_cmat(&mut rng, 2, 3);
        let p = compose_wlt(&h, &WltPair::identity(3), &WltPair::identity(2)).unwrap();
        assert_eq!(p.c1, h);
        assert!(p.c2.iter().all(|z| z.norm() == 0.0));
        let hr = h.map(|z| c(z.re, 0.0));
        let t = iqi_coefficients(0.8, 0.0, 3);
        let r = iqi_coefficients(0.8, 0.0, 2);
        let p = compose_wlt(&hr, &t, &r).unwrap();
        assert!(p.c1.iter().chain(p.c2.iter()).all(|z| z.im.abs() < 1e-15));
        assert!(compose_wlt(&h, &iqi_coefficients(0.8, 0.0, 2), &r).is_err());
    }

    #[test]
    fn compose_matches_signal_path() {
        // scalar: y = rx(h · tx(x)) evaluated step by step
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let h = random_cmat(&mut rng, 1, 1);
            let tx = iqi_coefficients(rng.random_range(0.5..1.0), rng.random_range(-0.5..0.5), 1);
            let rx = iqi_coefficients(rng.random_range(0.5..1.0), rng.random_range(-0.5..0.5), 1);
            let x = c(rng.random(), rng.random());
            let (t1, t2, r1, r2, hh) = (tx.c1[(0, 0)], tx.c2[(0, 0)], rx.c1[(0, 0)], rx.c2[(0, 0)], h[(0, 0)]);
            let s = t1 * x + t2 * x.conj();
            let y0 = hh * s;
            let y = r1 * y0 + r2 * y0.conj();
            let p = compose_wlt(&h, &tx, &rx).unwrap();
            let via = p.c1[(0, 0)] * x + p.c2[(0, 0)] * x.conj();
            assert!((y - via).norm() < 1e-14);
        }
    }

    #[test]
    fn decomposition_of_scalars() {
        let one = CMat::from_element(1, 1, c(1.0, 0.0));
        let zero = CMat::zeros(1, 1);
        let j = CMat::from_element(1, 1, c(0.0, 1.0));
        let m = real_decompose_wlt(&WltPair::new(one.clone(), zero.clone()).unwrap());
        assert_eq!(m, RMat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]));
        let m = real_decompose_wlt(&WltPair::new(j, zero.clone()).unwrap());
        assert_eq!(m, RMat::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]));
        let m = real_decompose_wlt(&WltPair::new(zero, one).unwrap());
        assert_eq!(m, RMat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]));
    }

    #[test]
    fn decomposition_acts_on_stacked_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = WltPair::new(random_cmat(&mut rng, 3, 2), random_cmat(&mut rng, 3, 2)).unwrap();
        let x = DVector::from_fn(2, |_, _| c(rng.random(), rng.random()));
        let lhs = stack(&p.apply(&x));
        let rhs = real_decompose_wlt(&p) * stack(&x);
        assert!((lhs - rhs).amax() < 1e-14);
    }

    #[test]
    fn decomposition_is_a_homomorphism() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = WltPair::new(random_cmat(&mut rng, 2, 3), random_cmat(&mut rng, 2, 3)).unwrap();
        let b = WltPair::new(random_cmat(&mut rng, 3, 2), random_cmat(&mut rng, 3, 2)).unwrap();
        let lhs = real_decompose_wlt(&a.after(&b).unwrap());
        let rhs = real_decompose_wlt(&a) * real_decompose_wlt(&b);
        assert!((lhs - rhs).amax() < 1e-14);
    }

    #[test]
    fn noise_covariances() {
        let ideal = effective_noise_covariance(&WltPair::identity(2), 0.3);
        assert!((ideal - RMat::identity(4, 4) * 0.15).amax() < 1e-16);
        let rx = iqi_coefficients(0.9, 0.0, 1);
        let cov = effective_noise_covariance(&rx, 2.0);
        // Γ₁ = 0.95, Γ₂ = 0.05, so M = diag(Γ₁+Γ₂, Γ₁−Γ₂) = diag(1, 0.9) and σ²/2 = 1
        let m = RMat::from_diagonal(&DVector::from_vec(vec![1.0, 0.9]));
        assert!((&cov - &m * m.transpose()).amax() < 1e-15);
    }

    #[test]
    fn noise_covariance_matches_samples() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rx = iqi_coefficients(0.7, 0.3, 1);
        let sigma2 = 1.5;
        let n = 100_000;
        let mut acc = RMat::zeros(2, 2);
        let s = (sigma2 / 2.0f64).sqrt();
        for _ in 0..n {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            let z = DVector::from_element(1, c(s * re, s * im));
            let y = stack(&rx.apply(&z));
            acc += &y * y.transpose();
        }
        acc /= n as f64;
        let cov = effective_noise_covariance(&rx, sigma2);
        assert!((acc - &cov).amax() < 0.02 * cov.amax());
    }
}
