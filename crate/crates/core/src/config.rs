//! Scenario description.
//!
//! A scenario is read from a flat key-value text file with dotted namespaces,
//! for example
//!
//! ```text
//! cells = 2
//! users_per_cell = 3
//! bs_antennas = 2
//! user_antennas = 2
//! ris_elements = 16
//! subbands = 8
//! power_budget_db = 10
//! power_model.eta = 2.5
//! iqi.a_t = 0.9
//! ```
//!
//! The syntax is TOML, so both `power_model.eta = 2.5` and a `[power_model]`
//! table are accepted; keys are flattened to their dotted form before lookup.
//! Physical quantities are SI, fields ending in `_db` are decibels.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::fmt::Write as _;
use std::ops::Deref;
use std::path::Path;
use std::str::FromStr;

use toml::Value;

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Enumerations
// ---------------------------------------------------------------------------

/// Feasibility set of the RIS coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeasibilitySet {
    /// Passive: per-element sector energy at most one.
    Unit,
    /// Passive and lossless: per-element sector energy exactly one.
    Lossless,
    /// STAR-RIS with coupled phases: lossless and `Re{φ¹*φ²} = 0`.
    StarCoupled,
}

impl fmt::Display for FeasibilitySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeasibilitySet::Unit => "T_U",
            FeasibilitySet::Lossless => "T_I",
            FeasibilitySet::StarCoupled => "T_SN",
        })
    }
}

impl FromStr for FeasibilitySet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "T_U" | "TU" => Ok(FeasibilitySet::Unit),
            "T_I" | "TI" => Ok(FeasibilitySet::Lossless),
            "T_SN" | "TSN" => Ok(FeasibilitySet::StarCoupled),
            _ => Err(Error::Unknown {
                what: "feasibility set",
                value: s.to_string(),
            }),
        }
    }
}

/// Operational mode of a multi-sector surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpMode {
    /// Energy splitting: every element is active in every sector.
    EnergySplitting,
    /// Mode switching: every element is active in exactly one sector.
    ModeSwitching,
}

impl fmt::Display for OpMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OpMode::EnergySplitting => "ES",
            OpMode::ModeSwitching => "MS",
        })
    }
}

impl FromStr for OpMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ES" => Ok(OpMode::EnergySplitting),
            "MS" => Ok(OpMode::ModeSwitching),
            _ => Err(Error::Unknown {
                what: "operational mode",
                value: s.to_string(),
            }),
        }
    }
}

/// How user positions are drawn around their serving RIS.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UserPlacement {
    /// All users in the reflection half-space.
    Front,
    /// Even-indexed users in front, odd-indexed users behind the surface.
    Half,
    /// User `k` lies in angular sector `k mod n` of the surface.
    Sectors(usize),
}

// ---------------------------------------------------------------------------
// Configuration types
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct PowerModel {
    /// Static circuit power per user (W).
    pub static_power: f64,
    /// Power-amplifier inefficiency (≥ 1).
    pub amplifier_inefficiency: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        PowerModel {
            static_power: 1.0,
            amplifier_inefficiency: 2.5,
        }
    }
}

/// Per-subband I/Q-imbalance parameters of the BS transmitters and user receivers.
#[derive(Debug, Clone, PartialEq)]
pub struct IqiConfig {
    pub tx_amplitude: Vec<f64>,
    pub tx_phase: Vec<f64>,
    pub rx_amplitude: Vec<f64>,
    pub rx_phase: Vec<f64>,
}

impl IqiConfig {
    pub fn ideal(subbands: usize) -> Self {
        IqiConfig {
            tx_amplitude: vec![1.0; subbands],
            tx_phase: vec![0.0; subbands],
            rx_amplitude: vec![1.0; subbands],
            rx_phase: vec![0.0; subbands],
        }
    }

    pub fn is_ideal(&self) -> bool {
        self.tx_amplitude.iter().chain(&self.rx_amplitude).all(|&a| a == 1.0)
            && self.tx_phase.iter().chain(&self.rx_phase).all(|&p| p == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FadingConfig {
    /// Rician K-factor (linear) of the RIS-adjacent links.
    pub rician_kappa: f64,
}

impl Default for FadingConfig {
    fn default() -> Self {
        FadingConfig {
            rician_kappa: db_to_linear(3.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryConfig {
    pub cell_spacing: f64,
    pub ris_distance: f64,
    pub user_radius: f64,
    pub user_placement: UserPlacement,
    pub pathloss_exponent_los: f64,
    pub pathloss_exponent_nlos: f64,
    pub pathloss_ref_db: f64,
    /// Amplitude gain per element of a multi-sector surface; `None` selects
    /// `sqrt(N_s)` for `N_s ≥ 3` and 1 otherwise.
    pub sector_gain: Option<f64>,
    pub bs_positions: Option<Vec<[f64; 2]>>,
    pub ris_positions: Option<Vec<[f64; 2]>>,
    /// Direction of each surface normal (degrees from the x axis).
    pub ris_orientation_deg: Option<Vec<f64>>,
    pub user_positions: Option<Vec<[f64; 2]>>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            cell_spacing: 100.0,
            ris_distance: 20.0,
            user_radius: 10.0,
            user_placement: UserPlacement::Front,
            pathloss_exponent_los: 2.2,
            pathloss_exponent_nlos: 3.75,
            pathloss_ref_db: -30.0,
            sector_gain: None,
            bs_positions: None,
            ris_positions: None,
            ris_orientation_deg: None,
            user_positions: None,
        }
    }
}

impl GeometryConfig {
    pub fn effective_sector_gain(&self, sectors: usize) -> f64 {
        self.sector_gain.unwrap_or(if sectors >= 3 {
            (sectors as f64).sqrt()
        } else {
            1.0
        })
    }
}

/// Complete scenario description.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Number of cells / base stations `L`.
    pub cells: usize,
    /// Users per cell `K`.
    pub users_per_cell: usize,
    pub bs_antennas: usize,
    pub user_antennas: usize,
    /// Number of surfaces `N`.
    pub ris_count: usize,
    /// Elements per surface `N_R`.
    pub ris_elements: usize,
    /// OFDM subbands `N_i`.
    pub subbands: usize,
    /// Sectors per surface `N_s` (1 regular, 2 STAR, ≥3 multi-sector).
    pub sectors: usize,
    /// Per-BS power budget (W).
    pub power_budget: Vec<f64>,
    /// Complex noise variance per receive antenna and subband (W).
    pub noise_power: f64,
    pub feasibility_set: FeasibilitySet,
    pub op_mode: OpMode,
    pub epsilon_ccp: f64,
    pub power_model: PowerModel,
    pub iqi: IqiConfig,
    pub fading: FadingConfig,
    pub geometry: GeometryConfig,
}

/// Problem dimensions derived from a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub cells: usize,
    pub users: usize,
    pub bs_antennas: usize,
    pub user_antennas: usize,
    pub ris: usize,
    pub elements: usize,
    pub subbands: usize,
    pub sectors: usize,
}

impl Dims {
    pub fn num_users(&self) -> usize {
        self.cells * self.users
    }

    /// Flat index of user `(l, k)`.
    pub fn user(&self, l: usize, k: usize) -> usize {
        l * self.users + k
    }

    /// Flat index of `(l, k, i)`.
    pub fn user_subband(&self, l: usize, k: usize, i: usize) -> usize {
        (l * self.users + k) * self.subbands + i
    }

    /// Flat index of the link `(l, k) ← j` in subband `i`.
    pub fn link(&self, l: usize, k: usize, j: usize, i: usize) -> usize {
        ((l * self.users + k) * self.cells + j) * self.subbands + i
    }

    pub fn num_links(&self) -> usize {
        self.num_users() * self.cells * self.subbands
    }

    /// Flat index of coefficient `(n, m, s)`.
    pub fn coefficient(&self, n: usize, m: usize, s: usize) -> usize {
        (n * self.elements + m) * self.sectors + s
    }

    pub fn num_coefficients(&self) -> usize {
        self.ris * self.elements * self.sectors
    }

    /// Real dimension of the transmit signal, `2 N_B`.
    pub fn tx_dim(&self) -> usize {
        2 * self.bs_antennas
    }

    /// Real dimension of the received signal, `2 N_U`.
    pub fn rx_dim(&self) -> usize {
        2 * self.user_antennas
    }
}

impl SystemConfig {
    pub fn dims(&self) -> Dims {
        Dims {
            cells: self.cells,
            users: self.users_per_cell,
            bs_antennas: self.bs_antennas,
            user_antennas: self.user_antennas,
            ris: self.ris_count,
            elements: self.ris_elements,
            subbands: self.subbands,
            sectors: self.sectors,
        }
    }

    /// Every invariant violation, in a stable order.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (name, val) in [
            ("cells", self.cells),
            ("users_per_cell", self.users_per_cell),
            ("bs_antennas", self.bs_antennas),
            ("user_antennas", self.user_antennas),
            ("ris_count", self.ris_count),
            ("ris_elements", self.ris_elements),
            ("subbands", self.subbands),
            ("sectors", self.sectors),
        ] {
            if val < 1 {
                v.push(format!("{name} must be >= 1"));
            }
        }
        if self.feasibility_set == FeasibilitySet::StarCoupled && self.sectors != 2 {
            v.push(format!("T_SN requires N_s=2 (got N_s={})", self.sectors));
        }
        if self.op_mode == OpMode::ModeSwitching && self.ris_elements < self.sectors {
            v.push("mode switching requires ris_elements >= sectors".into());
        }
        if self.power_budget.len() != self.cells {
            v.push(format!(
                "power_budget has {} entries, expected one per BS ({})",
                self.power_budget.len(),
                self.cells
            ));
        }
        if self.power_budget.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            v.push("P_l > 0 violated".into());
        }
        if !(self.noise_power > 0.0) || !self.noise_power.is_finite() {
            v.push("sigma2 > 0 violated".into());
        }
        if !(self.epsilon_ccp > 0.0 && self.epsilon_ccp < 1.0) {
            v.push("0 < epsilon_ccp < 1 violated".into());
        }
        if !(self.power_model.static_power >= 0.0) {
            v.push("power_model.p_c >= 0 violated".into());
        }
        if !(self.power_model.amplifier_inefficiency >= 1.0) {
            v.push("power_model.eta >= 1 violated".into());
        }
        let iqi = &self.iqi;
        for (name, vals) in [
            ("iqi.a_t", &iqi.tx_amplitude),
            ("iqi.psi_t", &iqi.tx_phase),
            ("iqi.a_r", &iqi.rx_amplitude),
            ("iqi.phi_r", &iqi.rx_phase),
        ] {
            if vals.len() != self.subbands {
                v.push(format!(
                    "{name} has {} entries, expected 1 or {}",
                    vals.len(),
                    self.subbands
                ));
            }
        }
        if iqi
            .tx_amplitude
            .iter()
            .chain(&iqi.rx_amplitude)
            .any(|&a| !(a > 0.0 && a <= 1.0))
        {
            v.push("IQI amplitudes must lie in (0, 1]".into());
        }
        if iqi
            .tx_phase
            .iter()
            .chain(&iqi.rx_phase)
            .any(|&p| !(p.abs() < FRAC_PI_2))
        {
            v.push("IQI phases must satisfy |phase| < pi/2".into());
        }
        if !(self.fading.rician_kappa >= 0.0) {
            v.push("fading.rician_kappa >= 0 violated".into());
        }
        let g = &self.geometry;
        for (name, val) in [
            ("geometry.cell_spacing", g.cell_spacing),
            ("geometry.ris_distance", g.ris_distance),
            ("geometry.user_radius", g.user_radius),
            ("geometry.pathloss_exponent_los", g.pathloss_exponent_los),
            ("geometry.pathloss_exponent_nlos", g.pathloss_exponent_nlos),
        ] {
            if !(val > 0.0) || !val.is_finite() {
                v.push(format!("{name} must be positive"));
            }
        }
        if !g.pathloss_ref_db.is_finite() {
            v.push("geometry.pathloss_ref_db must be finite".into());
        }
        if let Some(gain) = g.sector_gain {
            if !(gain > 0.0) {
                v.push("geometry.sector_gain must be positive".into());
            }
        }
        if let UserPlacement::Sectors(n) = g.user_placement {
            if n < 1 {
                v.push("geometry.placement_sectors must be >= 1".into());
            }
        }
        let check_len = |v: &mut Vec<String>, name: &str, got: Option<usize>, want: usize| {
            if let Some(got) = got {
                if got != want {
                    v.push(format!("{name} has {got} entries, expected {want}"));
                }
            }
        };
        check_len(&mut v, "geometry.bs_positions", g.bs_positions.as_ref().map(Vec::len), self.cells);
        check_len(&mut v, "geometry.ris_positions", g.ris_positions.as_ref().map(Vec::len), self.ris_count);
        check_len(
            &mut v,
            "geometry.ris_orientation_deg",
            g.ris_orientation_deg.as_ref().map(Vec::len),
            self.ris_count,
        );
        check_len(
            &mut v,
            "geometry.user_positions",
            g.user_positions.as_ref().map(Vec::len),
            self.cells * self.users_per_cell,
        );
        v
    }
}

/// A configuration that has passed [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedConfig(SystemConfig);

impl ValidatedConfig {
    pub fn into_inner(self) -> SystemConfig {
        self.0
    }

    pub fn as_config(&self) -> &SystemConfig {
        &self.0
    }
}

impl Deref for ValidatedConfig {
    type Target = SystemConfig;
    fn deref(&self) -> &SystemConfig {
        &self.0
    }
}

/// Check every invariant; returns the full list of violations on failure.
pub fn validate(config: SystemConfig) -> std::result::Result<ValidatedConfig, Vec<String>> {
    let v = config.violations();
    if v.is_empty() {
        Ok(ValidatedConfig(config))
    } else {
        Err(v)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

// ---------------------------------------------------------------------------
// Flat key-value map
// ---------------------------------------------------------------------------

/// Dotted-key view of a parsed config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigMap {
    entries: BTreeMap<String, Value>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config(error_key(&e), e.message().to_string()))?;
        let mut entries = BTreeMap::new();
        flatten("", &Value::Table(table), &mut entries);
        Ok(ConfigMap { entries })
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.get(key)
    }

    pub fn set(&mut self, key: impl Into<String>, value: Value) {
        self.entries.insert(key.into(), value);
    }

    pub fn remove(&mut self, key: &str) -> Option<Value> {
        self.entries.remove(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Apply an override given as text (`"16"`, `"0.9"`, `"T_I"`, `"[1, 2]"`).
    ///
    /// `iqi.a` is an alias that sets both `iqi.a_t` and `iqi.a_r`; `P` and
    /// `power_budget_db` replace any watt-valued budget.
    pub fn set_from_str(&mut self, key: &str, raw: &str) -> Result<()> {
        let value = parse_scalar(raw);
        match key {
            "iqi.a" => {
                self.set("iqi.a_t", value.clone());
                self.set("iqi.a_r", value);
            }
            "P" | "power_budget_db" => {
                self.remove("power_budget_w");
                self.set("power_budget_db", value);
            }
            "power_budget_w" => {
                self.remove("power_budget_db");
                self.set("power_budget_w", value);
            }
            "noise_power_db" => {
                self.remove("noise_power_w");
                self.set(key, value);
            }
            "noise_power_w" => {
                self.remove("noise_power_db");
                self.set(key, value);
            }
            _ => self.set(key, value),
        }
        Ok(())
    }

    pub fn to_config(&self) -> Result<SystemConfig> {
        let mut r = Reader {
            map: self.entries.clone(),
        };
        let cells = r.usize_req("cells")?;
        let users_per_cell = r.usize_req("users_per_cell")?;
        let bs_antennas = r.usize_req("bs_antennas")?;
        let user_antennas = r.usize_req("user_antennas")?;
        let ris_elements = r.usize_req("ris_elements")?;
        let subbands = r.usize_req("subbands")?;
        let ris_count = r.usize_opt("ris_count")?.unwrap_or(cells);
        let sectors = r.usize_opt("sectors")?.unwrap_or(1);

        let budget_db = r.f64_list_opt("power_budget_db")?;
        let budget_w = r.f64_list_opt("power_budget_w")?;
        let power_budget = match (budget_db, budget_w) {
            (Some(_), Some(_)) => {
                return Err(Error::config(
                    "power_budget_w",
                    "conflicts with power_budget_db; give exactly one",
                ))
            }
            (Some(db), None) => broadcast(db.into_iter().map(db_to_linear).collect(), cells),
            (None, Some(w)) => broadcast(w, cells),
            (None, None) => vec![db_to_linear(10.0); cells],
        };
        let noise_power = match (r.f64_opt("noise_power_db")?, r.f64_opt("noise_power_w")?) {
            (Some(_), Some(_)) => {
                return Err(Error::config(
                    "noise_power_w",
                    "conflicts with noise_power_db; give exactly one",
                ))
            }
            (Some(db), None) => db_to_linear(db),
            (None, Some(w)) => w,
            (None, None) => db_to_linear(-90.0),
        };
        let feasibility_set = match r.str_opt("feasibility_set")? {
            Some(s) => s
                .parse()
                .map_err(|_| Error::config("feasibility_set", format!("unknown set `{s}`")))?,
            None => FeasibilitySet::Lossless,
        };
        let op_mode = match r.str_opt("op_mode")? {
            Some(s) => s
                .parse()
                .map_err(|_| Error::config("op_mode", format!("unknown mode `{s}`")))?,
            None => OpMode::EnergySplitting,
        };
        let epsilon_ccp = r.f64_opt("epsilon_ccp")?.unwrap_or(0.05);

        let defaults = PowerModel::default();
        let power_model = PowerModel {
            static_power: r.f64_opt("power_model.p_c")?.unwrap_or(defaults.static_power),
            amplifier_inefficiency: r
                .f64_opt("power_model.eta")?
                .unwrap_or(defaults.amplifier_inefficiency),
        };

        let per_subband = |r: &mut Reader, key: &str, default: f64| -> Result<Vec<f64>> {
            Ok(match r.f64_list_opt(key)? {
                Some(v) => broadcast(v, subbands),
                None => vec![default; subbands],
            })
        };
        let iqi = IqiConfig {
            tx_amplitude: per_subband(&mut r, "iqi.a_t", 1.0)?,
            tx_phase: per_subband(&mut r, "iqi.psi_t", 0.0)?,
            rx_amplitude: per_subband(&mut r, "iqi.a_r", 1.0)?,
            rx_phase: per_subband(&mut r, "iqi.phi_r", 0.0)?,
        };

        let fading = match (r.f64_opt("fading.rician_kappa_db")?, r.f64_opt("fading.rician_kappa")?) {
            (Some(_), Some(_)) => {
                return Err(Error::config(
                    "fading.rician_kappa",
                    "conflicts with fading.rician_kappa_db; give exactly one",
                ))
            }
            (Some(db), None) => FadingConfig {
                rician_kappa: db_to_linear(db),
            },
            (None, Some(k)) => FadingConfig { rician_kappa: k },
            (None, None) => FadingConfig::default(),
        };

        let gd = GeometryConfig::default();
        let placement_sectors = r.usize_opt("geometry.placement_sectors")?;
        let user_placement = match r.str_opt("geometry.user_placement")?.as_deref() {
            None | Some("front") => UserPlacement::Front,
            Some("half") => UserPlacement::Half,
            Some("sectors") => UserPlacement::Sectors(placement_sectors.unwrap_or(sectors.max(1))),
            Some(other) => {
                return Err(Error::config(
                    "geometry.user_placement",
                    format!("unknown placement `{other}` (front|half|sectors)"),
                ))
            }
        };
        let geometry = GeometryConfig {
            cell_spacing: r.f64_opt("geometry.cell_spacing")?.unwrap_or(gd.cell_spacing),
            ris_distance: r.f64_opt("geometry.ris_distance")?.unwrap_or(gd.ris_distance),
            user_radius: r.f64_opt("geometry.user_radius")?.unwrap_or(gd.user_radius),
            user_placement,
            pathloss_exponent_los: r
                .f64_opt("geometry.pathloss_exponent_los")?
                .unwrap_or(gd.pathloss_exponent_los),
            pathloss_exponent_nlos: r
                .f64_opt("geometry.pathloss_exponent_nlos")?
                .unwrap_or(gd.pathloss_exponent_nlos),
            pathloss_ref_db: r.f64_opt("geometry.pathloss_ref_db")?.unwrap_or(gd.pathloss_ref_db),
            sector_gain: r.f64_opt("geometry.sector_gain")?,
            bs_positions: r.points_opt("geometry.bs_positions")?,
            ris_positions: r.points_opt("geometry.ris_positions")?,
            ris_orientation_deg: r.f64_list_opt("geometry.ris_orientation_deg")?,
            user_positions: r.points_opt("geometry.user_positions")?,
        };

        if let Some(key) = r.map.keys().next() {
            return Err(Error::config(key.clone(), "unknown key"));
        }

        Ok(SystemConfig {
            cells,
            users_per_cell,
            bs_antennas,
            user_antennas,
            ris_count,
            ris_elements,
            subbands,
            sectors,
            power_budget,
            noise_power,
            feasibility_set,
            op_mode,
            epsilon_ccp,
            power_model,
            iqi,
            fading,
            geometry,
        })
    }
}

fn error_key(e: &toml::de::Error) -> String {
    match e.span() {
        Some(span) => format!("<input@{}..{}>", span.start, span.end),
        None => "<input>".to_string(),
    }
}

fn flatten(prefix: &str, value: &Value, out: &mut BTreeMap<String, Value>) {
    match value {
        Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other.clone());
        }
    }
}

fn parse_scalar(raw: &str) -> Value {
    let raw = raw.trim();
    if let Ok(i) = raw.parse::<i64>() {
        return Value::Integer(i);
    }
    if let Ok(f) = raw.parse::<f64>() {
        return Value::Float(f);
    }
    if raw.starts_with('[') {
        if let Ok(t) = format!("v = {raw}").parse::<toml::Table>() {
            if let Some(v) = t.get("v") {
                return v.clone();
            }
        }
    }
    Value::String(raw.to_string())
}

fn broadcast(v: Vec<f64>, n: usize) -> Vec<f64> {
    if v.len() == 1 {
        vec![v[0]; n]
    } else {
        v
    }
}

struct Reader {
    map: BTreeMap<String, Value>,
}

impl Reader {
    fn usize_req(&mut self, key: &str) -> Result<usize> {
        self.usize_opt(key)?
            .ok_or_else(|| Error::config(key, "missing mandatory key"))
    }

    fn usize_opt(&mut self, key: &str) -> Result<Option<usize>> {
        match self.map.remove(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if i >= 0 => Ok(Some(i as usize)),
            Some(Value::Float(f)) if f >= 0.0 && f.fract() == 0.0 => Ok(Some(f as usize)),
            Some(other) => Err(Error::config(
                key,
                format!("expected a non-negative integer, found {}", other.type_str()),
            )),
        }
    }

    fn f64_opt(&mut self, key: &str) -> Result<Option<f64>> {
        match self.map.remove(key) {
            None => Ok(None),
            Some(v) => as_f64(&v)
                .map(Some)
                .ok_or_else(|| Error::config(key, format!("expected a number, found {}", v.type_str()))),
        }
    }

    fn f64_list_opt(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.map.remove(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| {
                    as_f64(v).ok_or_else(|| {
                        Error::config(key, format!("expected numbers, found {}", v.type_str()))
                    })
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(v) => as_f64(&v).map(|x| Some(vec![x])).ok_or_else(|| {
                Error::config(key, format!("expected a number or list, found {}", v.type_str()))
            }),
        }
    }

    fn str_opt(&mut self, key: &str) -> Result<Option<String>> {
        match self.map.remove(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(v) => Err(Error::config(key, format!("expected a string, found {}", v.type_str()))),
        }
    }

    fn points_opt(&mut self, key: &str) -> Result<Option<Vec<[f64; 2]>>> {
        let bad = || Error::config(key, "expected a list of [x, y] pairs");
        match self.map.remove(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|p| match p {
                    Value::Array(xy) if xy.len() == 2 => {
                        Ok([as_f64(&xy[0]).ok_or_else(bad)?, as_f64(&xy[1]).ok_or_else(bad)?])
                    }
                    _ => Err(bad()),
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(_) => Err(bad()),
        }
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Load / save
// ---------------------------------------------------------------------------

pub fn parse_config(text: &str) -> Result<SystemConfig> {
    ConfigMap::parse(text)?.to_config()
}

/// Read a config file. Invariants are checked separately by [`validate`],
/// except that the common `T_SN` / sector mismatch is reported here as well.
pub fn load_config(path: impl AsRef<Path>) -> Result<SystemConfig> {
    let text = std::fs::read_to_string(path)?;
    let config = parse_config(&text)?;
    if config.feasibility_set == FeasibilitySet::StarCoupled && config.sectors != 2 {
        return Err(Error::config("feasibility_set", "T_SN requires N_s=2"));
    }
    Ok(config)
}

/// Canonical text form of a configuration; `parse_config` inverts it exactly.
pub fn config_to_string(c: &SystemConfig) -> String {
    let mut s = String::new();
    let list = |v: &[f64]| {
        let items: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
        format!("[{}]", items.join(", "))
    };
    let points = |v: &[[f64; 2]]| {
        let items: Vec<String> = v.iter().map(|p| format!("[{:?}, {:?}]", p[0], p[1])).collect();
        format!("[{}]", items.join(", "))
    };
    let _ = writeln!(s, "cells = {}", c.cells);
    let _ = writeln!(s, "users_per_cell = {}", c.users_per_cell);
    let _ = writeln!(s, "bs_antennas = {}", c.bs_antennas);
    let _ = writeln!(s, "user_antennas = {}", c.user_antennas);
    let _ = writeln!(s, "ris_count = {}", c.ris_count);
    let _ = writeln!(s, "ris_elements = {}", c.ris_elements);
    let _ = writeln!(s, "subbands = {}", c.subbands);
    let _ = writeln!(s, "sectors = {}", c.sectors);
    let _ = writeln!(s, "power_budget_w = {}", list(&c.power_budget));
    let _ = writeln!(s, "noise_power_w = {:?}", c.noise_power);
    let _ = writeln!(s, "feasibility_set = \"{}\"", c.feasibility_set);
    let _ = writeln!(s, "op_mode = \"{}\"", c.op_mode);
    let _ = writeln!(s, "epsilon_ccp = {:?}", c.epsilon_ccp);
    let _ = writeln!(s, "power_model.p_c = {:?}", c.power_model.static_power);
    let _ = writeln!(s, "power_model.eta = {:?}", c.power_model.amplifier_inefficiency);
    let _ = writeln!(s, "iqi.a_t = {}", list(&c.iqi.tx_amplitude));
    let _ = writeln!(s, "iqi.psi_t = {}", list(&c.iqi.tx_phase));
    let _ = writeln!(s, "iqi.a_r = {}", list(&c.iqi.rx_amplitude));
    let _ = writeln!(s, "iqi.phi_r = {}", list(&c.iqi.rx_phase));
    let _ = writeln!(s, "fading.rician_kappa = {:?}", c.fading.rician_kappa);
    let g = &c.geometry;
    let _ = writeln!(s, "geometry.cell_spacing = {:?}", g.cell_spacing);
    let _ = writeln!(s, "geometry.ris_distance = {:?}", g.ris_distance);
    let _ = writeln!(s, "geometry.user_radius = {:?}", g.user_radius);
    match g.user_placement {
        UserPlacement::Front => {
            let _ = writeln!(s, "geometry.user_placement = \"front\"");
        }
        UserPlacement::Half => {
            let _ = writeln!(s, "geometry.user_placement = \"half\"");
        }
        UserPlacement::Sectors(n) => {
            let _ = writeln!(s, "geometry.user_placement = \"sectors\"");
            let _ = writeln!(s, "geometry.placement_sectors = {n}");
        }
    }
    let _ = writeln!(s, "geometry.pathloss_exponent_los = {:?}", g.pathloss_exponent_los);
    let _ = writeln!(s, "geometry.pathloss_exponent_nlos = {:?}", g.pathloss_exponent_nlos);
    let _ = writeln!(s, "geometry.pathloss_ref_db = {:?}", g.pathloss_ref_db);
    if let Some(gain) = g.sector_gain {
        let _ = writeln!(s, "geometry.sector_gain = {gain:?}");
    }
    if let Some(p) = &g.bs_positions {
        let _ = writeln!(s, "geometry.bs_positions = {}", points(p));
    }
    if let Some(p) = &g.ris_positions {
        let _ = writeln!(s, "geometry.ris_positions = {}", points(p));
    }
    if let Some(o) = &g.ris_orientation_deg {
        let _ = writeln!(s, "geometry.ris_orientation_deg = {}", list(o));
    }
    if let Some(p) = &g.user_positions {
        let _ = writeln!(s, "geometry.user_positions = {}", points(p));
    }
    s
}

pub fn save_config(config: &SystemConfig, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, config_to_string(config))?;
    Ok(())
}
