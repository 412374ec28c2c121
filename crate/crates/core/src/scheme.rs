//! Internal level structure of the ensemble.
//!
//! An ensemble of `K` identical atoms populates a macroscopically occupied
//! reservoir level plus a handful of *tracked* levels: `N` register levels
//! (labelled `1..=N`) and optional auxiliary levels (Rydberg `r`, second
//! Rydberg `r2`, control `c`, excited `e`). Only tracked occupations are
//! stored; the reservoir holds whatever is left over.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Role of an auxiliary (non-register) level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtraRole {
    Rydberg,
    Rydberg2,
    Control,
    Excited,
}

impl ExtraRole {
    pub fn label(self) -> &'static str {
        match self {
            ExtraRole::Rydberg => "r",
            ExtraRole::Rydberg2 => "r2",
            ExtraRole::Control => "c",
            ExtraRole::Excited => "e",
        }
    }

    pub fn is_rydberg(self) -> bool {
        matches!(self, ExtraRole::Rydberg | ExtraRole::Rydberg2)
    }
}

/// A single internal level of the atoms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    /// The reservoir `|0⟩`; never tracked explicitly.
    Reservoir,
    /// Register level `i`, 1-based.
    Register(usize),
    Extra(ExtraRole),
}

impl Level {
    pub const RYDBERG: Level = Level::Extra(ExtraRole::Rydberg);
    pub const RYDBERG2: Level = Level::Extra(ExtraRole::Rydberg2);
    pub const CONTROL: Level = Level::Extra(ExtraRole::Control);
    pub const EXCITED: Level = Level::Extra(ExtraRole::Excited);

    pub fn is_rydberg(self) -> bool {
        matches!(self, Level::Extra(role) if role.is_rydberg())
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Level::Reservoir => f.write_str("0"),
            Level::Register(i) => write!(f, "{i}"),
            Level::Extra(role) => f.write_str(role.label()),
        }
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "0" | "reservoir" => Ok(Level::Reservoir),
            "r" => Ok(Level::RYDBERG),
            "r2" | "r'" => Ok(Level::RYDBERG2),
            "c" => Ok(Level::CONTROL),
            "e" => Ok(Level::EXCITED),
            _ => match s.parse::<usize>() {
                Ok(i) if i >= 1 => Ok(Level::Register(i)),
                _ => Err(Error::Domain(format!("unknown level label `{s}`"))),
            },
        }
    }
}

impl Serialize for Level {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Level {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockadeMode {
    /// Double Rydberg occupation is excluded from the basis.
    Hard,
    /// Rydberg pairs are kept and pay a finite interaction energy.
    Soft,
}

impl FromStr for BlockadeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(BlockadeMode::Hard),
            "soft" => Ok(BlockadeMode::Soft),
            _ => Err(Error::Domain(format!("unknown blockade mode `{s}`"))),
        }
    }
}

impl fmt::Display for BlockadeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BlockadeMode::Hard => "hard",
            BlockadeMode::Soft => "soft",
        })
    }
}

/// Rydberg–Rydberg interaction model.
///
/// In hard mode every Rydberg level holds at most one atom and, when two
/// Rydberg levels are present, at most one atom in total. The interaction
/// energies are ignored. In soft mode pairs are allowed up to
/// `rydberg_cap` per level and cost `interaction` (same level) or
/// `cross_interaction` (one atom in each level).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockadeConfig {
    pub mode: BlockadeMode,
    pub interaction: f64,
    pub cross_interaction: f64,
    pub rydberg_cap: usize,
}

impl BlockadeConfig {
    pub fn hard() -> Self {
        BlockadeConfig {
            mode: BlockadeMode::Hard,
            interaction: 0.0,
            cross_interaction: 0.0,
            rydberg_cap: 1,
        }
    }

    pub fn soft(interaction: f64, cross_interaction: f64, rydberg_cap: usize) -> Self {
        BlockadeConfig {
            mode: BlockadeMode::Soft,
            interaction,
            cross_interaction,
            rydberg_cap,
        }
    }

    fn validate(&self) -> Result<()> {
        match self.mode {
            BlockadeMode::Hard => {
                if self.rydberg_cap != 1 {
                    return Err(Error::Config(
                        "hard blockade requires a Rydberg cap of 1".into(),
                    ));
                }
            }
            BlockadeMode::Soft => {
                if !(self.interaction > 0.0 && self.cross_interaction > 0.0) {
                    return Err(Error::Config(
                        "soft blockade requires positive interaction energies".into(),
                    ));
                }
                if self.rydberg_cap < 2 {
                    return Err(Error::Config(
                        "soft blockade requires a Rydberg cap of at least 2".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// The ensemble's tracked levels, atom number and occupation caps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelScheme {
    pub register_levels: usize,
    pub extra_levels: Vec<ExtraRole>,
    pub total_atoms: u64,
    pub tracked_cap: usize,
    pub blockade: BlockadeConfig,
}

impl LevelScheme {
    pub fn new(
        register_levels: usize,
        extra_levels: Vec<ExtraRole>,
        total_atoms: u64,
        tracked_cap: usize,
        blockade: BlockadeConfig,
    ) -> Result<Self> {
        let scheme = LevelScheme {
            register_levels,
            extra_levels,
            total_atoms,
            tracked_cap,
            blockade,
        };
        scheme.validate()?;
        Ok(scheme)
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_atoms < self.tracked_cap as u64 {
            return Err(Error::Config(format!(
                "tracked cap {} exceeds the atom number {}",
                self.tracked_cap, self.total_atoms
            )));
        }
        for (k, role) in self.extra_levels.iter().enumerate() {
            if self.extra_levels[..k].contains(role) {
                return Err(Error::Config(format!(
                    "level `{}` listed twice",
                    role.label()
                )));
            }
        }
        self.blockade.validate()?;
        if self.has_rydberg() && self.blockade.rydberg_cap > self.tracked_cap.max(1) {
            return Err(Error::Config("Rydberg cap exceeds the tracked cap".into()));
        }
        Ok(())
    }

    /// Number of tracked levels (registers first, then extras in order).
    pub fn tracked_len(&self) -> usize {
        self.register_levels + self.extra_levels.len()
    }

    /// Tracked levels in storage order.
    pub fn levels(&self) -> Vec<Level> {
        (1..=self.register_levels)
            .map(Level::Register)
            .chain(self.extra_levels.iter().map(|&r| Level::Extra(r)))
            .collect()
    }

    /// Position of a tracked level in occupation vectors.
    pub fn position(&self, level: Level) -> Option<usize> {
        match level {
            Level::Reservoir => None,
            Level::Register(i) if i >= 1 && i <= self.register_levels => Some(i - 1),
            Level::Register(_) => None,
            Level::Extra(role) => self
                .extra_levels
                .iter()
                .position(|&r| r == role)
                .map(|k| self.register_levels + k),
        }
    }

    pub fn require(&self, level: Level) -> Result<usize> {
        self.position(level)
            .ok_or_else(|| Error::Domain(format!("level `{level}` is not tracked by this scheme")))
    }

    pub fn has(&self, level: Level) -> bool {
        self.position(level).is_some()
    }

    pub fn has_rydberg(&self) -> bool {
        self.extra_levels.iter().any(|r| r.is_rydberg())
    }

    /// Per-level occupation cap, indexed by storage position.
    pub fn level_caps(&self) -> Vec<usize> {
        self.levels()
            .into_iter()
            .map(|l| {
                if l.is_rydberg() {
                    self.blockade.rydberg_cap.min(self.tracked_cap)
                } else {
                    self.tracked_cap
                }
            })
            .collect()
    }

    /// Positions of the Rydberg levels.
    pub fn rydberg_positions(&self) -> Vec<usize> {
        self.levels()
            .into_iter()
            .enumerate()
            .filter(|(_, l)| l.is_rydberg())
            .map(|(k, _)| k)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_labels_round_trip() {
        for s in ["0", "1", "4", "r", "r2", "c", "e"] {
            let level: Level = s.parse().unwrap();
            assert_eq!(level.to_string(), s);
        }
        assert!("x".parse::<Level>().is_err());
        assert!("-1".parse::<Level>().is_err());
    }

    #[test]
    fn rejects_inconsistent_schemes() {
        let hard = BlockadeConfig::hard();
        assert!(LevelScheme::new(4, vec![ExtraRole::Rydberg], 1, 2, hard).is_err());
        assert!(
            LevelScheme::new(4, vec![ExtraRole::Rydberg, ExtraRole::Rydberg], 10, 2, hard).is_err()
        );
        let bad_soft = BlockadeConfig::soft(10.0, 10.0, 1);
        assert!(LevelScheme::new(4, vec![ExtraRole::Rydberg], 10, 2, bad_soft).is_err());
        let too_big = BlockadeConfig::soft(10.0, 10.0, 3);
        assert!(LevelScheme::new(4, vec![ExtraRole::Rydberg], 10, 2, too_big).is_err());
    }

    #[test]
    fn positions_follow_storage_order() {
        let s = LevelScheme::new(
            4,
            vec![ExtraRole::Rydberg, ExtraRole::Control],
            100,
            3,
            BlockadeConfig::hard(),
        )
        .unwrap();
        assert_eq!(s.position(Level::Register(1)), Some(0));
        assert_eq!(s.position(Level::RYDBERG), Some(4));
        assert_eq!(s.position(Level::CONTROL), Some(5));
        assert_eq!(s.position(Level::RYDBERG2), None);
        assert_eq!(s.position(Level::Register(5)), None);
        assert_eq!(s.position(Level::Reservoir), None);
        assert_eq!(s.level_caps(), vec![3, 3, 3, 3, 1, 3]);
    }
}
