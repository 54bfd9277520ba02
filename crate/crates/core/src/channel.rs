//! Frequency-domain channel realizations.
//!
//! Every link is drawn independently per subband. Links adjacent to a surface
//! (BS→RIS and RIS→user) are Rician, the direct BS→user links are Rayleigh.
//! Large-scale gain follows `ref_db − 10·α·log10(d / 1 m)`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::{Dims, SystemConfig, UserPlacement, ValidatedConfig};
use crate::error::{Error, Result};
use crate::ris::RisState;
use crate::{CMat, Complex64};

/// Small-scale fading law of one link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fading {
    Rayleigh,
    /// Rician with linear K-factor; `f64::INFINITY` is pure line of sight.
    Rician(f64),
}

/// Draw a `rows × cols` small-scale fading matrix with unit-power entries.
///
/// The line-of-sight part of the Rician law is the all-ones matrix.
pub fn sample_small_scale<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, kind: Fading) -> CMat {
    let (los, nlos) = match kind {
        Fading::Rayleigh => (0.0, 1.0),
        Fading::Rician(k) if k.is_infinite() => (1.0, 0.0),
        Fading::Rician(k) => ((k / (1.0 + k)).sqrt(), (1.0 / (1.0 + k)).sqrt()),
    };
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(los + nlos * FRAC_1_SQRT_2 * re, nlos * FRAC_1_SQRT_2 * im)
    })
}

/// Linear power gain of a link of length `distance` (clamped to 1 m).
pub fn pathloss_gain(distance: f64, exponent: f64, ref_db: f64) -> f64 {
    let d = distance.max(1.0);
    10f64.powf((ref_db - 10.0 * exponent * d.log10()) / 10.0)
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

/// Serving surface and sector of a user.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Coverage {
    pub ris: usize,
    pub sector: usize,
}

/// Resolved node positions of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub bs: Vec<[f64; 2]>,
    pub ris: Vec<[f64; 2]>,
    /// Surface normal direction (radians).
    pub ris_normal: Vec<f64>,
    /// Users in `(l, k)` order.
    pub users: Vec<[f64; 2]>,
}

/// Surface assigned to the users of cell `l`.
pub fn serving_ris(config: &SystemConfig, l: usize) -> usize {
    if l < config.ris_count {
        l
    } else {
        l % config.ris_count
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn wrap_angle(a: f64) -> f64 {
    let mut x = (a + PI).rem_euclid(2.0 * PI) - PI;
    if x < -PI {
        x += 2.0 * PI;
    }
    x
}

/// Build the node layout; random user drops consume `rng` in `(l, k)` order.
pub fn layout<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> Layout {
    let g = &config.geometry;
    let bs = g.bs_positions.clone().unwrap_or_else(|| {
        (0..config.cells)
            .map(|l| [l as f64 * g.cell_spacing, 0.0])
            .collect()
    });
    let mut ris = Vec::with_capacity(config.ris_count);
    let mut normal = Vec::with_capacity(config.ris_count);
    for n in 0..config.ris_count {
        let cell = n % config.cells;
        // extra surfaces in the same cell are rotated by a quarter turn
        let turn = (n / config.cells) as f64 * PI / 2.0;
        let (c, s) = (turn.cos(), turn.sin());
        let off = [0.8 * g.ris_distance, -0.6 * g.ris_distance];
        let pos = [
            bs[cell][0] + c * off[0] - s * off[1],
            bs[cell][1] + s * off[0] + c * off[1],
        ];
        ris.push(g.ris_positions.as_ref().map_or(pos, |p| p[n]));
        normal.push(
            g.ris_orientation_deg
                .as_ref()
                .map_or(PI / 2.0 + turn, |o| o[n].to_radians()),
        );
    }
    let users = match &g.user_positions {
        Some(p) => p.clone(),
        None => {
            let mut users = Vec::with_capacity(config.cells * config.users_per_cell);
            for l in 0..config.cells {
                let n = serving_ris(config, l);
                for k in 0..config.users_per_cell {
                    let r2: f64 = rng.random();
                    let radius = (1.0 + r2 * (g.user_radius.powi(2) - 1.0).max(0.0)).sqrt();
                    let u: f64 = rng.random();
                    let rel = match g.user_placement {
                        UserPlacement::Front => (u - 0.5) * PI,
                        UserPlacement::Half => (u - 0.5) * PI + if k % 2 == 1 { PI } else { 0.0 },
                        UserPlacement::Sectors(ns) => {
                            let w = 2.0 * PI / ns as f64;
                            (k % ns) as f64 * w + (u - 0.5) * w
                        }
                    };
                    let a = normal[n] + rel;
                    users.push([ris[n][0] + radius * a.cos(), ris[n][1] + radius * a.sin()]);
                }
            }
            users
        }
    };
    Layout {
        bs,
        ris,
        ris_normal: normal,
        users,
    }
}

/// Sector of a surface with `sectors` sectors that sees a point at relative
/// angle `angle` from its normal; `None` for the blind half of a regular RIS.
pub fn sector_of(angle: f64, sectors: usize) -> Option<usize> {
    let a = wrap_angle(angle);
    if sectors <= 1 {
        return (a.abs() <= PI / 2.0).then_some(0);
    }
    let w = 2.0 * PI / sectors as f64;
    let idx = ((a + w / 2.0).rem_euclid(2.0 * PI) / w).floor() as usize;
    Some(idx.min(sectors - 1))
}

pub fn coverage(config: &SystemConfig, layout: &Layout) -> Vec<Option<Coverage>> {
    let mut out = Vec::with_capacity(layout.users.len());
    for l in 0..config.cells {
        let n = serving_ris(config, l);
        for k in 0..config.users_per_cell {
            let u = layout.users[l * config.users_per_cell + k];
            let p = layout.ris[n];
            let angle = (u[1] - p[1]).atan2(u[0] - p[0]) - layout.ris_normal[n];
            out.push(sector_of(angle, config.sectors).map(|sector| Coverage { ris: n, sector }));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Channel set
// ---------------------------------------------------------------------------

/// Raw complex channels of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexChannelSet {
    dims: Dims,
    /// `[l][k][n][i]`, `N_U × N_R`.
    user_ris: Vec<CMat>,
    /// `[n][j][i]`, `N_R × N_B`.
    ris_bs: Vec<CMat>,
    /// `[l][k][j][i]`, `N_U × N_B`.
    direct: Vec<CMat>,
    coverage: Vec<Option<Coverage>>,
}

impl ComplexChannelSet {
    /// Assemble a channel set from explicit blocks, checking every dimension.
    pub fn from_parts(
        dims: Dims,
        user_ris: Vec<CMat>,
        ris_bs: Vec<CMat>,
        direct: Vec<CMat>,
        coverage: Vec<Option<Coverage>>,
    ) -> Result<Self> {
        let nu = dims.num_users();
        let check = |name: &str, v: &[CMat], count: usize, r: usize, c: usize| -> Result<()> {
            if v.len() != count {
                return Err(Error::Dimension(format!("{name}: {} blocks, expected {count}", v.len())));
            }
            if let Some(m) = v.iter().find(|m| m.shape() != (r, c)) {
                return Err(Error::Dimension(format!(
                    "{name}: block is {:?}, expected {:?}",
                    m.shape(),
                    (r, c)
                )));
            }
            Ok(())
        };
        check("user_ris", &user_ris, nu * dims.ris * dims.subbands, dims.user_antennas, dims.elements)?;
        check("ris_bs", &ris_bs, dims.ris * dims.cells * dims.subbands, dims.elements, dims.bs_antennas)?;
        check("direct", &direct, nu * dims.cells * dims.subbands, dims.user_antennas, dims.bs_antennas)?;
        if coverage.len() != nu {
            return Err(Error::Dimension("coverage length".into()));
        }
        if let Some(c) = coverage.iter().flatten().find(|c| c.ris >= dims.ris || c.sector >= dims.sectors) {
            return Err(Error::Dimension(format!("coverage {c:?} out of range")));
        }
        let mut set = ComplexChannelSet {
            dims,
            user_ris,
            ris_bs,
            direct,
            coverage,
        };
        set.zero_uncovered();
        Ok(set)
    }

    fn zero_uncovered(&mut self) {
        let d = self.dims;
        for l in 0..d.cells {
            for k in 0..d.users {
                let cov = self.coverage[d.user(l, k)];
                for n in 0..d.ris {
                    if cov.map_or(true, |c| c.ris != n) {
                        for i in 0..d.subbands {
                            let idx = self.user_ris_index(l, k, n, i);
                            self.user_ris[idx].fill(Complex64::new(0.0, 0.0));
                        }
                    }
                }
            }
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    fn user_ris_index(&self, l: usize, k: usize, n: usize, i: usize) -> usize {
        ((self.dims.user(l, k)) * self.dims.ris + n) * self.dims.subbands + i
    }

    pub fn g_user(&self, l: usize, k: usize, n: usize, i: usize) -> &CMat {
        &self.user_ris[self.user_ris_index(l, k, n, i)]
    }

    pub fn g_bs(&self, n: usize, j: usize, i: usize) -> &CMat {
        &self.ris_bs[(n * self.dims.cells + j) * self.dims.subbands + i]
    }

    pub fn direct(&self, l: usize, k: usize, j: usize, i: usize) -> &CMat {
        &self.direct[self.dims.link(l, k, j, i)]
    }

    pub fn coverage(&self, l: usize, k: usize) -> Option<Coverage> {
        self.coverage[self.dims.user(l, k)]
    }

    /// Same realization with every surface link removed (the No-RIS baseline).
    pub fn without_ris(&self) -> Self {
        let mut out = self.clone();
        for m in out.user_ris.iter_mut().chain(out.ris_bs.iter_mut()) {
            m.fill(Complex64::new(0.0, 0.0));
        }
        out
    }

    /// FNV-1a hash over every stored value.
    pub fn checksum(&self) -> u64 {
        hash_blocks(self.user_ris.iter().chain(&self.ris_bs).chain(&self.direct))
    }

    /// Hash of the links that do not depend on surface coverage (direct and BS→RIS).
    pub fn shared_links_checksum(&self) -> u64 {
        hash_blocks(self.ris_bs.iter().chain(&self.direct))
    }

    /// Write every block as CSV rows `link,l,k,n,j,i,row,col,re,im`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let d = self.dims;
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["link", "l", "k", "n", "j", "i", "row", "col", "re", "im"])?;
        let mut emit = |name: &str, idx: [Option<usize>; 5], m: &CMat| -> Result<()> {
            let f = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    let z = m[(r, c)];
                    out.write_record([
                        name.to_string(),
                        f(idx[0]),
                        f(idx[1]),
                        f(idx[2]),
                        f(idx[3]),
                        f(idx[4]),
                        r.to_string(),
                        c.to_string(),
                        format!("{:?}", z.re),
                        format!("{:?}", z.im),
                    ])?;
                }
            }
            Ok(())
        };
        for l in 0..d.cells {
            for k in 0..d.users {
                for n in 0..d.ris {
                    for i in 0..d.subbands {
                        emit("user_ris", [Some(l), Some(k), Some(n), None, Some(i)], self.g_user(l, k, n, i))?;
                    }
                }
            }
        }
        for n in 0..d.ris {
            for j in 0..d.cells {
                for i in 0..d.subbands {
                    emit("ris_bs", [None, None, Some(n), Some(j), Some(i)], self.g_bs(n, j, i))?;
                }
            }
        }
        for l in 0..d.cells {
            for k in 0..d.users {
                for j in 0..d.cells {
                    for i in 0..d.subbands {
                        emit("direct", [Some(l), Some(k), None, Some(j), Some(i)], self.direct(l, k, j, i))?;
                    }
                }
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn hash_blocks<'a>(blocks: impl Iterator<Item = &'a CMat>) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for m in blocks {
        for z in m.iter() {
            for bits in [z.re.to_bits(), z.im.to_bits()] {
                for b in bits.to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x100000001b3);
                }
            }
        }
    }
    h
}

/// Draw one channel realization.
///
/// The draw order (user drops, then BS→RIS, RIS→user and direct links) does
/// not depend on the number of sectors, so configurations that differ only in
/// surface type share every random draw.
pub fn generate_channel_set<R: Rng + ?Sized>(config: &ValidatedConfig, rng: &mut R) -> ComplexChannelSet {
    let lay = layout(config, rng);
    generate_with_layout(config, &lay, rng)
}

pub fn generate_with_layout<R: Rng + ?Sized>(config: &ValidatedConfig, lay: &Layout, rng: &mut R) -> ComplexChannelSet {
    let d = config.dims();
    let g = &config.geometry;
    let rician = Fading::Rician(config.fading.rician_kappa);
    let gain = |a: [f64; 2], b: [f64; 2], alpha: f64| pathloss_gain(dist(a, b), alpha, g.pathloss_ref_db).sqrt();

    let mut ris_bs = Vec::with_capacity(d.ris * d.cells * d.subbands);
    for n in 0..d.ris {
        for j in 0..d.cells {
            let amp = gain(lay.ris[n], lay.bs[j], g.pathloss_exponent_los);
            for _ in 0..d.subbands {
                ris_bs.push(sample_small_scale(rng, d.elements, d.bs_antennas, rician) * Complex64::new(amp, 0.0));
            }
        }
    }
    let sector_gain = g.effective_sector_gain(d.sectors);
    let mut user_ris = Vec::with_capacity(d.num_users() * d.ris * d.subbands);
    for l in 0..d.cells {
        for k in 0..d.users {
            let u = lay.users[d.user(l, k)];
            for n in 0..d.ris {
                let amp = gain(u, lay.ris[n], g.pathloss_exponent_los) * sector_gain;
                for _ in 0..d.subbands {
                    user_ris.push(sample_small_scale(rng, d.user_antennas, d.elements, rician) * Complex64::new(amp, 0.0));
                }
            }
        }
    }
    let mut direct = Vec::with_capacity(d.num_links());
    for l in 0..d.cells {
        for k in 0..d.users {
            let u = lay.users[d.user(l, k)];
            for j in 0..d.cells {
                let amp = gain(u, lay.bs[j], g.pathloss_exponent_nlos);
                for _ in 0..d.subbands {
                    direct.push(sample_small_scale(rng, d.user_antennas, d.bs_antennas, Fading::Rayleigh) * Complex64::new(amp, 0.0));
                }
            }
        }
    }
    let cov = coverage(config, lay);
    ComplexChannelSet::from_parts(d, user_ris, ris_bs, direct, cov).expect("generated blocks match dims")
}

/// `Σ_n G_user · Φ_n^{s(l,k)} · G_bs + F` for user `(l, k)`, BS `j`, subband `i`.
pub fn effective_channel(channels: &ComplexChannelSet, ris: &RisState, l: usize, k: usize, j: usize, i: usize) -> CMat {
    let mut h = channels.direct(l, k, j, i).clone();
    if let Some(cov) = channels.coverage(l, k) {
        let gu = channels.g_user(l, k, cov.ris, i);
        let gb = channels.g_bs(cov.ris, j, i);
        let d = channels.dims();
        for m in 0..d.elements {
            let phi = ris.coefficient(cov.ris, m, cov.sector);
            if phi == Complex64::new(0.0, 0.0) {
                continue;
            }
            for r in 0..d.user_antennas {
                let a = gu[(r, m)] * phi;
                for c in 0..d.bs_antennas {
                    h[(r, c)] += a * gb[(m, c)];
                }
            }
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{parse_config, validate};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(extra: &str) -> ValidatedConfig {
        let text = format!(
            "cells = 1\nusers_per_cell = 2\nbs_antennas = 2\nuser_antennas = 2\nris_elements = 4\nsubbands = 2\n{extra}"
        );
        validate(parse_config(&text).unwrap()).unwrap()
    }

    #[test]
    fn pure_los_is_all_ones() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = sample_small_scale(&mut rng, 3, 2, Fading::Rician(f64::INFINITY));
        assert!(m.iter().all(|z| *z == Complex64::new(1.0, 0.0)));
    }

    #[test]
    fn unit_second_moment() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for kind in [Fading::Rayleigh, Fading::Rician(2.0), Fading::Rician(0.0)] {
            let m = sample_small_scale(&mut rng, 1000, 100, kind);
            let p = m.iter().map(|z| z.norm_sqr()).sum::<f64>() / 1e5;
            assert!((p - 1.0).abs() < 0.02, "{kind:?}: {p}");
        }
    }

    #[test]
    fn doubling_distance_scales_power() {
        let r = pathloss_gain(20.0, 2.2, -30.0) / pathloss_gain(10.0, 2.2, -30.0);
        assert!((r - 10f64.powf(-2.2 * 2f64.log10())).abs() < 1e-12);
        assert!((r - 0.2176).abs() < 1e-3);
    }

    #[test]
    fn sectors_partition_the_circle() {
        assert_eq!(sector_of(0.3, 1), Some(0));
        assert_eq!(sector_of(PI - 0.1, 1), None);
        assert_eq!(sector_of(0.1, 2), Some(0));
        assert_eq!(sector_of(PI - 0.1, 2), Some(1));
        assert_eq!(sector_of(-PI + 0.1, 2), Some(1));
        assert_eq!(sector_of(PI / 2.0 + 0.01, 4), Some(1));
        assert_eq!(sector_of(-PI / 2.0 - 0.01, 4), Some(3));
    }

    #[test]
    fn uncovered_users_have_zero_ris_links() {
        let c = cfg("geometry.user_placement = \"half\"\n");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ch = generate_channel_set(&c, &mut rng);
        assert!(ch.coverage(0, 0).is_some());
        assert!(ch.coverage(0, 1).is_none());
        for i in 0..2 {
            assert!(ch.g_user(0, 1, 0, i).iter().all(|z| z.norm() == 0.0));
            assert!(ch.g_user(0, 0, 0, i).iter().any(|z| z.norm() > 0.0));
        }
    }

    #[test]
    fn star_and_regular_share_draws() {
        let reg = cfg("geometry.user_placement = \"half\"\n");
        let star = cfg("geometry.user_placement = \"half\"\nsectors = 2\n");
        let a = generate_channel_set(&reg, &mut ChaCha8Rng::seed_from_u64(9));
        let b = generate_channel_set(&star, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a.shared_links_checksum(), b.shared_links_checksum());
        assert_eq!(a.g_user(0, 0, 0, 1), b.g_user(0, 0, 0, 1));
        assert_eq!(b.coverage(0, 1), Some(Coverage { ris: 0, sector: 1 }));
    }

    #[test]
    fn zero_surface_leaves_direct_link() {
        let c = cfg("");
        let ch = generate_channel_set(&c, &mut ChaCha8Rng::seed_from_u64(4));
        let ris = RisState::zeros(1, 4, 1);
        assert_eq!(effective_channel(&ch, &ris, 0, 1, 0, 1), *ch.direct(0, 1, 0, 1));
    }
}
