//! Experiment reports: headline numbers plus every simulated run with its
//! scheme, initial state, schedule and results, so a report can be replayed.
//!
//! Text layout (one item per line, blocks indented by two spaces):
//!
//! ```text
//! protocol phi_minus
//! fidelity 1.0000000000000000e0
//! config atoms 1000000
//! phase dtheta_10 3.1415926535897931e0
//! metric intermediate_fidelity 1.0000000000000000e0
//! distribution control minus=1.0000000000000000e0 plus=0.0000000000000000e0
//! note free text
//! run main
//! scheme registers=4 extras=r atoms=1000000 cap=4 blockade=hard interaction=0e0 cross=0e0 rydberg_cap=1
//! fidelity 1.0000000000000000e0
//! phase 0.0000000000000000e0
//! measure r 0=1.0000000000000000e0
//! initial
//!   0 0 0 0 0 1.0000000000000000e0 0.0000000000000000e0
//! schedule
//!   light_shift level=1 angle=1.0000000000000000e0
//! final
//!   ...
//! target
//!   ...
//! end
//! ```

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fockspace::{tokenize, Space, StateVector, C64};
use crate::schedule::Schedule;
use crate::scheme::{BlockadeConfig, BlockadeMode, ExtraRole, Level, LevelScheme};

/// Agreement required between a replay and the stored numbers.
pub const REPLAY_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Named {
    pub name: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelledProbability {
    pub label: String,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub name: String,
    pub outcomes: Vec<LabelledProbability>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Amplitude {
    pub occupation: Vec<u8>,
    pub re: f64,
    pub im: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub outcome: usize,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub level: Level,
    pub outcomes: Vec<Outcome>,
}

impl Measurement {
    pub fn of(state: &StateVector, level: Level) -> Result<Self> {
        let outcomes = state
            .measure_occupation(level)?
            .into_iter()
            .map(|b| Outcome {
                outcome: b.outcome,
                probability: b.probability,
            })
            .collect();
        Ok(Measurement { level, outcomes })
    }

    pub fn probability(&self, outcome: usize) -> f64 {
        self.outcomes
            .iter()
            .find(|o| o.outcome == outcome)
            .map_or(0.0, |o| o.probability)
    }
}

/// One simulated evolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub label: String,
    pub scheme: LevelScheme,
    pub initial: Vec<Amplitude>,
    pub schedule: Schedule,
    pub final_state: Vec<Amplitude>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<Amplitude>>,
    /// `|⟨target|final⟩|²`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fidelity: Option<f64>,
    /// `arg ⟨target|final⟩`, or `arg ⟨initial|final⟩` without a target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<f64>,
    #[serde(default)]
    pub measurements: Vec<Measurement>,
}

pub fn sparse(state: &StateVector) -> Vec<Amplitude> {
    state
        .space()
        .basis()
        .states()
        .zip(state.amplitudes().iter())
        .filter(|(_, a)| a.re != 0.0 || a.im != 0.0)
        .map(|(occ, a)| Amplitude {
            occupation: occ.to_vec(),
            re: a.re,
            im: a.im,
        })
        .collect()
}

pub fn dense(space: &Arc<Space>, amplitudes: &[Amplitude]) -> Result<StateVector> {
    let mut amps = nalgebra::DVector::from_element(space.dim(), C64::new(0.0, 0.0));
    for a in amplitudes {
        let idx = space.basis().index_of(&a.occupation).ok_or_else(|| {
            Error::Domain(format!(
                "occupation {:?} is outside the basis",
                a.occupation
            ))
        })?;
        amps[idx] = C64::new(a.re, a.im);
    }
    StateVector::from_amplitudes(space.clone(), amps)
}

impl Run {
    /// Simulates `schedule` from `initial` and records the requested
    /// comparisons and measurements.
    pub fn simulate(
        label: impl Into<String>,
        initial: &StateVector,
        schedule: &Schedule,
        target: Option<&StateVector>,
        measure: &[Level],
    ) -> Result<(Run, StateVector)> {
        let final_state = schedule.run(initial)?;
        let (fidelity, phase) = match target {
            Some(t) => {
                let overlap = t.inner(&final_state)?;
                let f = overlap.norm_sqr() / (t.norm().powi(2) * final_state.norm().powi(2));
                (Some(f.min(1.0)), Some(overlap.arg()))
            }
            None => (None, Some(initial.inner(&final_state)?.arg())),
        };
        let measurements = measure
            .iter()
            .map(|&l| Measurement::of(&final_state, l))
            .collect::<Result<Vec<_>>>()?;
        let run = Run {
            label: label.into(),
            scheme: initial.space().scheme().clone(),
            initial: sparse(initial),
            schedule: schedule.clone(),
            final_state: sparse(&final_state),
            target: target.map(sparse),
            fidelity,
            phase,
            measurements,
        };
        Ok((run, final_state))
    }

    /// Re-executes the schedule and returns the largest deviation from the
    /// stored numbers.
    pub fn replay(&self) -> Result<f64> {
        let space = Space::new(self.scheme.clone())?;
        let initial = dense(&space, &self.initial)?;
        let target = self.target.as_ref().map(|t| dense(&space, t)).transpose()?;
        let measure: Vec<Level> = self.measurements.iter().map(|m| m.level).collect();
        let (again, _) = Run::simulate(
            self.label.clone(),
            &initial,
            &self.schedule,
            target.as_ref(),
            &measure,
        )?;
        let stored = dense(&space, &self.final_state)?;
        let fresh = dense(&space, &again.final_state)?;
        let mut worst = (stored.amplitudes() - fresh.amplitudes())
            .iter()
            .fold(0.0f64, |m, d| m.max(d.norm()));
        let opt = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(x), Some(y)) => Ok((x - y).abs()),
            (None, None) => Ok(0.0),
            _ => Err(Error::Domain("replayed run has different fields".into())),
        };
        worst = worst.max(opt(self.fidelity, again.fidelity)?);
        let phase_dev = opt(self.phase, again.phase)?;
        // phases are compared on the circle
        worst = worst.max(phase_dev.min((2.0 * std::f64::consts::PI - phase_dev).abs()));
        for (m, n) in self.measurements.iter().zip(&again.measurements) {
            for o in &m.outcomes {
                worst = worst.max((o.probability - n.probability(o.outcome)).abs());
            }
            for o in &n.outcomes {
                worst = worst.max((o.probability - m.probability(o.outcome)).abs());
            }
        }
        Ok(worst)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfigEntry {
    pub key: String,
    pub value: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub protocol: String,
    /// Headline figure of merit compared against the run threshold.
    pub fidelity: f64,
    #[serde(default)]
    pub config: Vec<ConfigEntry>,
    #[serde(default)]
    pub phases: Vec<Named>,
    #[serde(default)]
    pub metrics: Vec<Named>,
    #[serde(default)]
    pub distributions: Vec<Distribution>,
    #[serde(default)]
    pub notes: Vec<String>,
    #[serde(default)]
    pub runs: Vec<Run>,
}

impl ExperimentReport {
    pub fn new(protocol: impl Into<String>, fidelity: f64) -> Self {
        ExperimentReport {
            protocol: protocol.into(),
            fidelity,
            config: Vec::new(),
            phases: Vec::new(),
            metrics: Vec::new(),
            distributions: Vec::new(),
            notes: Vec::new(),
            runs: Vec::new(),
        }
    }

    pub fn phase(&self, name: &str) -> Option<f64> {
        self.phases.iter().find(|n| n.name == name).map(|n| n.value)
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|n| n.name == name)
            .map(|n| n.value)
    }

    pub fn run(&self, label: &str) -> Option<&Run> {
        self.runs.iter().find(|r| r.label == label)
    }

    pub fn push_phase(&mut self, name: impl Into<String>, value: f64) {
        self.phases.push(Named {
            name: name.into(),
            value,
        });
    }

    pub fn push_metric(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.push(Named {
            name: name.into(),
            value,
        });
    }

    pub fn push_config(&mut self, key: impl Into<String>, value: impl ToString) {
        self.config.push(ConfigEntry {
            key: key.into(),
            value: value.to_string(),
        });
    }

    /// Checks probabilities and distribution sums.
    pub fn validate(&self) -> Result<()> {
        let check = |p: f64, what: &str| {
            if (-1e-12..=1.0 + 1e-12).contains(&p) {
                Ok(())
            } else {
                Err(Error::Numerical(format!(
                    "{what} probability {p} outside [0, 1]"
                )))
            }
        };
        for d in &self.distributions {
            let mut sum = 0.0;
            for o in &d.outcomes {
                check(o.probability, &d.name)?;
                sum += o.probability;
            }
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::Numerical(format!(
                    "distribution `{}` sums to {sum}",
                    d.name
                )));
            }
        }
        for r in &self.runs {
            for m in &r.measurements {
                let sum: f64 = m.outcomes.iter().map(|o| o.probability).sum();
                for o in &m.outcomes {
                    check(o.probability, &r.label)?;
                }
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(Error::Numerical(format!(
                        "run `{}` measurement sums to {sum}",
                        r.label
                    )));
                }
            }
        }
        Ok(())
    }

    /// Replays every run; returns the largest deviation found.
    pub fn replay(&self) -> Result<f64> {
        self.runs
            .iter()
            .map(|r| r.replay())
            .try_fold(0.0f64, |acc, d| Ok(acc.max(d?)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "protocol {}", self.protocol);
        let _ = writeln!(out, "fidelity {:.16e}", self.fidelity);
        for c in &self.config {
            let _ = writeln!(out, "config {} {}", c.key, c.value);
        }
        for p in &self.phases {
            let _ = writeln!(out, "phase {} {:.16e}", p.name, p.value);
        }
        for m in &self.metrics {
            let _ = writeln!(out, "metric {} {:.16e}", m.name, m.value);
        }
        for d in &self.distributions {
            let _ = write!(out, "distribution {}", d.name);
            for o in &d.outcomes {
                let _ = write!(out, " {}={:.16e}", o.label, o.probability);
            }
            out.push('\n');
        }
        for n in &self.notes {
            let _ = writeln!(out, "note {n}");
        }
        for r in &self.runs {
            let _ = writeln!(out, "run {}", r.label);
            let _ = writeln!(out, "scheme {}", scheme_line(&r.scheme));
            if let Some(f) = r.fidelity {
                let _ = writeln!(out, "fidelity {f:.16e}");
            }
            if let Some(p) = r.phase {
                let _ = writeln!(out, "phase {p:.16e}");
            }
            for m in &r.measurements {
                let _ = write!(out, "measure {}", m.level);
                for o in &m.outcomes {
                    let _ = write!(out, " {}={:.16e}", o.outcome, o.probability);
                }
                out.push('\n');
            }
            write_block(&mut out, "initial", &amplitude_lines(&r.initial));
            write_block(&mut out, "schedule", &r.schedule.to_text());
            write_block(&mut out, "final", &amplitude_lines(&r.final_state));
            if let Some(t) = &r.target {
                write_block(&mut out, "target", &amplitude_lines(t));
            }
            out.push_str("end\n");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        let mut report: Option<ExperimentReport> = None;
        let mut k = 0;
        let need = |r: &mut Option<ExperimentReport>, line: usize| -> Result<()> {
            if r.is_none() {
                Err(Error::parse(line, 1, "report must start with `protocol`"))
            } else {
                Ok(())
            }
        };
        while k < lines.len() {
            let lineno = k + 1;
            let line = lines[k];
            k += 1;
            if line.trim().is_empty() {
                continue;
            }
            let (head, rest) = split_head(line);
            match head {
                "protocol" => {
                    report = Some(ExperimentReport::new(rest.trim(), f64::NAN));
                }
                "fidelity" => {
                    need(&mut report, lineno)?;
                    report.as_mut().expect("checked").fidelity =
                        parse_f64(rest, lineno, head.len() + 2)?;
                }
                "config" => {
                    need(&mut report, lineno)?;
                    let (key, value) = split_head(rest);
                    report
                        .as_mut()
                        .expect("checked")
                        .push_config(key, value.trim());
                }
                "phase" | "metric" => {
                    need(&mut report, lineno)?;
                    let (name, value) = split_head(rest);
                    let v = parse_f64(value, lineno, head.len() + name.len() + 3)?;
                    let r = report.as_mut().expect("checked");
                    if head == "phase" {
                        r.push_phase(name, v);
                    } else {
                        r.push_metric(name, v);
                    }
                }
                "distribution" => {
                    need(&mut report, lineno)?;
                    let tokens = tokenize(line);
                    let name = tokens
                        .get(1)
                        .ok_or_else(|| {
                            Error::parse(lineno, line.len() + 1, "missing distribution name")
                        })?
                        .1;
                    let outcomes = tokens[2..]
                        .iter()
                        .map(|&(col, tok)| {
                            let (label, p) = tok.split_once('=').ok_or_else(|| {
                                Error::parse(lineno, col, "expected label=probability")
                            })?;
                            Ok(LabelledProbability {
                                label: label.to_string(),
                                probability: parse_f64(p, lineno, col + label.len() + 1)?,
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    report
                        .as_mut()
                        .expect("checked")
                        .distributions
                        .push(Distribution {
                            name: name.to_string(),
                            outcomes,
                        });
                }
                "note" => {
                    need(&mut report, lineno)?;
                    report
                        .as_mut()
                        .expect("checked")
                        .notes
                        .push(rest.trim().to_string());
                }
                "run" => {
                    need(&mut report, lineno)?;
                    let (run, next) = parse_run(&lines, k, rest.trim().to_string())?;
                    k = next;
                    report.as_mut().expect("checked").runs.push(run);
                }
                other => {
                    return Err(Error::parse(
                        lineno,
                        1,
                        format!("unknown report line `{other}`"),
                    ))
                }
            }
        }
        let report = report.ok_or_else(|| Error::parse(1, 1, "empty report"))?;
        if report.fidelity.is_nan() {
            return Err(Error::parse(1, 1, "report has no `fidelity` line"));
        }
        Ok(report)
    }
}

fn split_head(line: &str) -> (&str, &str) {
    let line = line.trim_start();
    match line.find(char::is_whitespace) {
        Some(i) => (&line[..i], &line[i..]),
        None => (line, ""),
    }
}

fn parse_f64(s: &str, line: usize, column: usize) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::parse(line, column, format!("invalid number `{}`", s.trim())))
}

fn write_block(out: &mut String, name: &str, body: &str) {
    let _ = writeln!(out, "{name}");
    for l in body.lines() {
        let _ = writeln!(out, "  {l}");
    }
}

fn amplitude_lines(amps: &[Amplitude]) -> String {
    let mut out = String::new();
    for a in amps {
        let occ: Vec<String> = a.occupation.iter().map(|n| n.to_string()).collect();
        let _ = writeln!(out, "{} {:.16e} {:.16e}", occ.join(" "), a.re, a.im);
    }
    out
}

fn parse_amplitudes(body: &[(usize, &str)], width: usize) -> Result<Vec<Amplitude>> {
    let mut out = Vec::new();
    for &(lineno, line) in body {
        let tokens = tokenize(line);
        if tokens.len() != width + 2 {
            return Err(Error::parse(
                lineno,
                1,
                format!(
                    "expected {width} occupations and two numbers, found {} fields",
                    tokens.len()
                ),
            ));
        }
        let occupation = tokens[..width]
            .iter()
            .map(|&(col, t)| {
                t.parse::<u8>()
                    .map_err(|_| Error::parse(lineno, col, format!("invalid occupation `{t}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let re = parse_f64(tokens[width].1, lineno, tokens[width].0)?;
        let im = parse_f64(tokens[width + 1].1, lineno, tokens[width + 1].0)?;
        out.push(Amplitude { occupation, re, im });
    }
    Ok(out)
}

fn scheme_line(s: &LevelScheme) -> String {
    let extras: Vec<&str> = s.extra_levels.iter().map(|r| r.label()).collect();
    format!(
        "registers={} extras={} atoms={} cap={} blockade={} interaction={:.16e} cross={:.16e} rydberg_cap={}",
        s.register_levels,
        if extras.is_empty() { "-".to_string() } else { extras.join(",") },
        s.total_atoms,
        s.tracked_cap,
        s.blockade.mode,
        s.blockade.interaction,
        s.blockade.cross_interaction,
        s.blockade.rydberg_cap
    )
}

fn parse_scheme(line: &str, lineno: usize) -> Result<LevelScheme> {
    let mut fields = std::collections::HashMap::new();
    for (col, tok) in tokenize(line).into_iter().skip(1) {
        let (k, v) = tok.split_once('=').ok_or_else(|| {
            Error::parse(lineno, col, format!("expected key=value, found `{tok}`"))
        })?;
        fields.insert(k, (col + k.len() + 1, v));
    }
    let get = |k: &str| {
        fields
            .get(k)
            .copied()
            .ok_or_else(|| Error::parse(lineno, 1, format!("scheme is missing `{k}`")))
    };
    fn num<T: std::str::FromStr>((col, v): (usize, &str), lineno: usize) -> Result<T> {
        v.parse()
            .map_err(|_| Error::parse(lineno, col, format!("invalid value `{v}`")))
    }
    let (ecol, extras) = get("extras")?;
    let extra_levels = if extras == "-" {
        Vec::new()
    } else {
        extras
            .split(',')
            .map(|e| match e.parse::<Level>() {
                Ok(Level::Extra(role)) => Ok(role),
                _ => Err(Error::parse(
                    lineno,
                    ecol,
                    format!("invalid auxiliary level `{e}`"),
                )),
            })
            .collect::<Result<Vec<ExtraRole>>>()?
    };
    let (bcol, mode) = get("blockade")?;
    let mode: BlockadeMode = mode
        .parse()
        .map_err(|_| Error::parse(lineno, bcol, format!("invalid blockade mode `{mode}`")))?;
    let blockade = BlockadeConfig {
        mode,
        interaction: num(get("interaction")?, lineno)?,
        cross_interaction: num(get("cross")?, lineno)?,
        rydberg_cap: num(get("rydberg_cap")?, lineno)?,
    };
    LevelScheme::new(
        num(get("registers")?, lineno)?,
        extra_levels,
        num(get("atoms")?, lineno)?,
        num(get("cap")?, lineno)?,
        blockade,
    )
    .map_err(|e| Error::parse(lineno, 1, e.to_string()))
}

fn parse_run(lines: &[&str], mut k: usize, label: String) -> Result<(Run, usize)> {
    let mut scheme = None;
    let mut fidelity = None;
    let mut phase = None;
    let mut measurements = Vec::new();
    let mut blocks: Vec<(String, Vec<(usize, &str)>)> = Vec::new();
    loop {
        let Some(&line) = lines.get(k) else {
            return Err(Error::parse(
                k,
                1,
                format!("run `{label}` is missing `end`"),
            ));
        };
        let lineno = k + 1;
        k += 1;
        if let Some(body) = line.strip_prefix("  ") {
            match blocks.last_mut() {
                Some((_, b)) => b.push((lineno, body)),
                None => return Err(Error::parse(lineno, 1, "indented line outside a block")),
            }
            continue;
        }
        let (head, rest) = split_head(line);
        match head {
            "" => {}
            "end" => break,
            "scheme" => scheme = Some(parse_scheme(line, lineno)?),
            "fidelity" => fidelity = Some(parse_f64(rest, lineno, 10)?),
            "phase" => phase = Some(parse_f64(rest, lineno, 7)?),
            "measure" => {
                let tokens = tokenize(line);
                let (lcol, ltok) = *tokens
                    .get(1)
                    .ok_or_else(|| Error::parse(lineno, line.len() + 1, "missing level"))?;
                let level: Level = ltok
                    .parse()
                    .map_err(|_| Error::parse(lineno, lcol, format!("invalid level `{ltok}`")))?;
                let outcomes = tokens[2..]
                    .iter()
                    .map(|&(col, tok)| {
                        let (o, p) = tok.split_once('=').ok_or_else(|| {
                            Error::parse(lineno, col, "expected outcome=probability")
                        })?;
                        Ok(Outcome {
                            outcome: o.parse().map_err(|_| {
                                Error::parse(lineno, col, format!("invalid outcome `{o}`"))
                            })?,
                            probability: parse_f64(p, lineno, col + o.len() + 1)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                measurements.push(Measurement { level, outcomes });
            }
            "initial" | "schedule" | "final" | "target" => {
                blocks.push((head.to_string(), Vec::new()))
            }
            other => {
                return Err(Error::parse(
                    lineno,
                    1,
                    format!("unknown run line `{other}`"),
                ))
            }
        }
    }
    let scheme =
        scheme.ok_or_else(|| Error::parse(k, 1, format!("run `{label}` has no scheme")))?;
    let width = scheme.tracked_len();
    let block = |name: &str| {
        blocks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, b)| b.as_slice())
    };
    let initial = parse_amplitudes(
        block("initial")
            .ok_or_else(|| Error::parse(k, 1, format!("run `{label}` has no initial state")))?,
        width,
    )?;
    let final_state = parse_amplitudes(
        block("final")
            .ok_or_else(|| Error::parse(k, 1, format!("run `{label}` has no final state")))?,
        width,
    )?;
    let target = block("target")
        .map(|b| parse_amplitudes(b, width))
        .transpose()?;
    let schedule = match block("schedule") {
        Some(body) => {
            let first = body.first().map_or(0, |(l, _)| *l);
            let text: String = body.iter().map(|(_, l)| format!("{l}\n")).collect();
            Schedule::from_text(&text).map_err(|e| match e {
                Error::Parse {
                    line,
                    column,
                    message,
                } => Error::Parse {
                    line: line + first - 1,
                    column: column + 2,
                    message,
                },
                other => other,
            })?
        }
        None => Schedule::new(),
    };
    Ok((
        Run {
            label,
            scheme,
            initial,
            schedule,
            final_state,
            target,
            fidelity,
            phase,
            measurements,
        },
        k,
    ))
}
