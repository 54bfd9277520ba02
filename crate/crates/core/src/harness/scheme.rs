//! Compared schemes and their text form.
//!
//! `<kind>[:T_U|T_I|T_SN][:ES|MS][:rand][:unaware]` where `kind` is one of
//! `none`, `regular` (one sector), `star` (two sectors) or `msbd` (the
//! configured sector count if at least 3, otherwise 4). `rand` keeps the
//! random initial RIS state; `unaware` designs for ideal hardware and is
//! scored on the impaired one.

use std::fmt;
use std::str::FromStr;

use crate::config::{FeasibilitySet, OpMode, SystemConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RisKind {
    None,
    Regular,
    Star,
    MultiSector,
}

impl RisKind {
    fn name(self) -> &'static str {
        match self {
            RisKind::None => "none",
            RisKind::Regular => "regular",
            RisKind::Star => "star",
            RisKind::MultiSector => "msbd",
        }
    }

    /// Sector count this kind uses on top of `config`.
    pub fn sectors(self, config: &SystemConfig) -> usize {
        match self {
            RisKind::None | RisKind::Regular => 1,
            RisKind::Star => 2,
            RisKind::MultiSector => {
                if config.sectors >= 3 {
                    config.sectors
                } else {
                    4
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scheme {
    pub kind: RisKind,
    /// `None` keeps the configured set (or `T_I` where it does not apply).
    pub feasibility: Option<FeasibilitySet>,
    pub op_mode: Option<OpMode>,
    pub optimize_ris: bool,
    pub iqi_aware: bool,
}

impl Scheme {
    pub fn new(kind: RisKind) -> Self {
        Scheme {
            kind,
            feasibility: None,
            op_mode: None,
            optimize_ris: true,
            iqi_aware: true,
        }
    }

    /// The configuration this scheme runs on.
    pub fn apply(&self, base: &SystemConfig) -> Result<SystemConfig> {
        let mut c = base.clone();
        c.sectors = self.kind.sectors(base);
        c.feasibility_set = match self.feasibility {
            Some(FeasibilitySet::StarCoupled) if c.sectors != 2 => {
                return Err(Error::Unknown {
                    what: "scheme",
                    value: format!("{self}: T_SN requires N_s=2"),
                })
            }
            Some(s) => s,
            None if base.feasibility_set == FeasibilitySet::StarCoupled && c.sectors != 2 => FeasibilitySet::Lossless,
            None => base.feasibility_set,
        };
        if let Some(m) = self.op_mode {
            c.op_mode = m;
        }
        if c.op_mode == OpMode::ModeSwitching && c.ris_elements < c.sectors {
            c.op_mode = OpMode::EnergySplitting;
        }
        Ok(c)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind.name())?;
        if let Some(s) = self.feasibility {
            write!(f, ":{s}")?;
        }
        if let Some(m) = self.op_mode {
            write!(f, ":{m}")?;
        }
        if !self.optimize_ris {
            f.write_str(":rand")?;
        }
        if !self.iqi_aware {
            f.write_str(":unaware")?;
        }
        Ok(())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::Unknown {
            what: "scheme",
            value: format!("{s} ({why})"),
        };
        let mut parts = s.split(':');
        let kind = match parts.next().unwrap_or("").trim().to_ascii_lowercase().as_str() {
            "none" | "noris" | "no-ris" => RisKind::None,
            "regular" => RisKind::Regular,
            "star" => RisKind::Star,
            "msbd" | "bd" => RisKind::MultiSector,
            _ => return Err(bad("kind must be none, regular, star or msbd")),
        };
        let mut scheme = Scheme::new(kind);
        for p in parts {
            let p = p.trim();
            if let Ok(set) = p.parse::<FeasibilitySet>() {
                if scheme.feasibility.replace(set).is_some() {
                    return Err(bad("feasibility set given twice"));
                }
            } else if let Ok(mode) = p.parse::<OpMode>() {
                if scheme.op_mode.replace(mode).is_some() {
                    return Err(bad("mode given twice"));
                }
            } else if p.eq_ignore_ascii_case("rand") {
                scheme.optimize_ris = false;
            } else if p.eq_ignore_ascii_case("unaware") {
                scheme.iqi_aware = false;
            } else {
                return Err(bad(&format!("unknown option `{p}`")));
            }
        }
        if kind == RisKind::None && (scheme.feasibility.is_some() || scheme.op_mode.is_some()) {
            return Err(bad("`none` takes no RIS options"));
        }
        Ok(scheme)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn round_trip() {
        for s in ["none", "regular", "star:T_SN:MS", "msbd:T_U:ES:rand", "regular:unaware", "star:T_I:rand:unaware"] {
            assert_eq!(s.parse::<Scheme>().unwrap().to_string(), s);
        }
        assert!("hyper".parse::<Scheme>().is_err());
        assert!("star:T_X".parse::<Scheme>().is_err());
        assert!("none:T_I".parse::<Scheme>().is_err());
    }

    #[test]
    fn sector_counts_and_sets() {
        let base = parse_config(
            "cells = 1\nusers_per_cell = 2\nbs_antennas = 2\nuser_antennas = 2\nris_elements = 8\nsubbands = 2\n",
        )
        .unwrap();
        let c = "star:T_SN".parse::<Scheme>().unwrap().apply(&base).unwrap();
        assert_eq!((c.sectors, c.feasibility_set), (2, FeasibilitySet::StarCoupled));
        assert_eq!("msbd".parse::<Scheme>().unwrap().apply(&base).unwrap().sectors, 4);
        assert!("regular:T_SN".parse::<Scheme>().unwrap().apply(&base).is_err());
        let c = "regular".parse::<Scheme>().unwrap().apply(&base).unwrap();
        assert_eq!((c.sectors, c.feasibility_set), (1, FeasibilitySet::Lossless));
    }
}
