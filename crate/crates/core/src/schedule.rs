//! Ordered pulse lists and their line-based text form.
//!
//! ```text
//! # comment
//! drive kind=rydberg lower=0 upper=r rabi=1.0e-3 phase=0 detuning=0 duration=3.14 reference=1000000
//! drive kind=raman lower=1 upper=3 rabi=1.57 phase=0 detuning=0 duration=1
//! light_shift level=c angle=-0.5
//! ```
//!
//! Numbers are written with 17 significant digits so a round trip is exact.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fockspace::{tokenize, StateVector};
use crate::pulses::{drive_kind, evolve, Drive, DriveKind, Pulse};
use crate::scheme::Level;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schedule {
    pub pulses: Vec<Pulse>,
}

impl Schedule {
    pub fn new() -> Self {
        Schedule::default()
    }

    pub fn len(&self) -> usize {
        self.pulses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pulses.is_empty()
    }

    pub fn push(&mut self, pulse: Pulse) {
        self.pulses.push(pulse);
    }

    pub fn extend(&mut self, other: impl IntoIterator<Item = Pulse>) {
        self.pulses.extend(other);
    }

    pub fn append(&mut self, other: &Schedule) {
        self.pulses.extend(other.pulses.iter().cloned());
    }

    /// Evolves `state` through every pulse in order.
    pub fn run(&self, state: &StateVector) -> Result<StateVector> {
        let mut current = state.clone();
        for (k, pulse) in self.pulses.iter().enumerate() {
            current = evolve(&current, pulse).map_err(|e| match e {
                Error::Numerical(msg) => Error::Numerical(format!("pulse {}: {msg}", k + 1)),
                other => other,
            })?;
        }
        Ok(current)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for pulse in &self.pulses {
            match pulse {
                Pulse::Drive(d) => {
                    let kind = match d.kind {
                        DriveKind::Raman => "raman",
                        DriveKind::RydbergDrive => "rydberg",
                    };
                    let _ = write!(
                        out,
                        "drive kind={kind} lower={} upper={} rabi={:.16e} phase={:.16e} detuning={:.16e} duration={:.16e}",
                        d.lower, d.upper, d.rabi, d.phase, d.detuning, d.duration
                    );
                    if let Some(r) = d.reference_occupancy {
                        let _ = write!(out, " reference={r}");
                    }
                    out.push('\n');
                }
                Pulse::LightShift { level, angle } => {
                    let _ = writeln!(out, "light_shift level={level} angle={angle:.16e}");
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut pulses = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let content = line.split('#').next().unwrap_or("");
            let tokens = tokenize(content);
            let Some(&(_, head)) = tokens.first() else {
                continue;
            };
            let mut fields = Fields::parse(lineno, &tokens[1..])?;
            let pulse = match head {
                "drive" => {
                    let lower: Level = fields.take_parsed("lower")?;
                    let upper: Level = fields.take_parsed("upper")?;
                    let (kind_col, kind) = fields.take("kind")?;
                    let expected = drive_kind(lower, upper);
                    let kind = match kind {
                        "raman" => DriveKind::Raman,
                        "rydberg" => DriveKind::RydbergDrive,
                        other => {
                            return Err(Error::parse(
                                lineno,
                                kind_col,
                                format!("unknown drive kind `{other}`"),
                            ))
                        }
                    };
                    if kind != expected {
                        return Err(Error::parse(
                            lineno,
                            kind_col,
                            "drive kind does not match the coupled levels",
                        ));
                    }
                    let reference_occupancy = if fields.has("reference") {
                        Some(fields.take_parsed("reference")?)
                    } else {
                        None
                    };
                    let drive = Drive {
                        kind,
                        lower,
                        upper,
                        rabi: fields.take_parsed("rabi")?,
                        phase: fields.take_parsed("phase")?,
                        detuning: fields.take_parsed("detuning")?,
                        duration: fields.take_parsed("duration")?,
                        reference_occupancy,
                    };
                    drive
                        .validate()
                        .map_err(|e| Error::parse(lineno, 1, e.to_string()))?;
                    Pulse::Drive(drive)
                }
                "light_shift" => Pulse::LightShift {
                    level: fields.take_parsed("level")?,
                    angle: fields.take_parsed("angle")?,
                },
                other => return Err(Error::parse(lineno, 1, format!("unknown step `{other}`"))),
            };
            fields.finish()?;
            pulses.push(pulse);
        }
        Ok(Schedule { pulses })
    }
}

impl FromIterator<Pulse> for Schedule {
    fn from_iter<I: IntoIterator<Item = Pulse>>(iter: I) -> Self {
        Schedule {
            pulses: iter.into_iter().collect(),
        }
    }
}

struct Fields<'a> {
    line: usize,
    entries: Vec<(usize, &'a str, &'a str)>,
}

impl<'a> Fields<'a> {
    fn parse(line: usize, tokens: &[(usize, &'a str)]) -> Result<Self> {
        let mut entries: Vec<(usize, &str, &str)> = Vec::new();
        for &(col, tok) in tokens {
            let Some((key, value)) = tok.split_once('=') else {
                return Err(Error::parse(
                    line,
                    col,
                    format!("expected key=value, found `{tok}`"),
                ));
            };
            if entries.iter().any(|&(_, k, _)| k == key) {
                return Err(Error::parse(line, col, format!("duplicate field `{key}`")));
            }
            entries.push((col, key, value));
        }
        Ok(Fields { line, entries })
    }

    fn has(&self, key: &str) -> bool {
        self.entries.iter().any(|&(_, k, _)| k == key)
    }

    fn take(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let pos = self
            .entries
            .iter()
            .position(|&(_, k, _)| k == key)
            .ok_or_else(|| Error::parse(self.line, 1, format!("missing field `{key}`")))?;
        let (col, _, value) = self.entries.remove(pos);
        Ok((col + key.len() + 1, value))
    }

    fn take_parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let (col, value) = self.take(key)?;
        value.parse().map_err(|_| {
            Error::parse(
                self.line,
                col,
                format!("invalid value `{value}` for `{key}`"),
            )
        })
    }

    fn finish(self) -> Result<()> {
        match self.entries.first() {
            Some(&(col, key, _)) => Err(Error::parse(
                self.line,
                col,
                format!("unknown field `{key}`"),
            )),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulses::{pi_pulse, Pulse};

    fn sample() -> Schedule {
        let mut s = Schedule::new();
        s.push(pi_pulse(Level::Reservoir, Level::RYDBERG, 1_000_000).unwrap());
        s.push(pi_pulse(Level::RYDBERG, Level::Register(1), 1).unwrap());
        s.push(Pulse::raman(
            Level::Register(1),
            Level::Register(3),
            0.5 * std::f64::consts::PI,
            -0.3,
        ));
        s.push(Pulse::light_shift(Level::CONTROL, 1.0 / 3.0));
        s
    }

    #[test]
    fn text_round_trip_is_exact() {
        let s = sample();
        let text = s.to_text();
        assert_eq!(Schedule::from_text(&text).unwrap(), s);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<Schedule>(&json).unwrap(), s);
    }

    #[test]
    fn parse_errors_carry_positions() {
        let err = Schedule::from_text("light_shift level=c angle=x\n").unwrap_err();
        assert!(
            matches!(
                err,
                Error::Parse {
                    line: 1,
                    column: 27,
                    ..
                }
            ),
            "{err}"
        );
        let err = Schedule::from_text("\n# c\nbogus a=1\n").unwrap_err();
        assert!(matches!(
            err,
            Error::Parse {
                line: 3,
                column: 1,
                ..
            }
        ));
        let err = Schedule::from_text("light_shift level=c angle=1 extra=2\n").unwrap_err();
        assert!(
            matches!(
                err,
                Error::Parse {
                    line: 1,
                    column: 29,
                    ..
                }
            ),
            "{err}"
        );
        let err = Schedule::from_text(
            "drive kind=raman lower=0 upper=r rabi=1 phase=0 detuning=0 duration=1\n",
        )
        .unwrap_err();
        assert!(
            matches!(
                err,
                Error::Parse {
                    line: 1,
                    column: 12,
                    ..
                }
            ),
            "{err}"
        );
        let err = Schedule::from_text("light_shift level=c\n").unwrap_err();
        assert!(err.to_string().contains("missing field `angle`"));
    }
}
