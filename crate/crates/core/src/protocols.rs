//! Scripted experiments on the four-register plaquette: state preparation,
//! collective Pauli operations, the controlled phase gate, braiding and the
//! spinon measurement.
//!
//! Every experiment returns an [`ExperimentReport`] whose runs carry the full
//! schedule, so the numbers can be reproduced with [`ExperimentReport::replay`].

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fockspace::{Space, StateVector, C64, ZERO};
use crate::optimizer::CompositeTransfer;
use crate::pulses::{
    area_pulse, composite_light_shift, composite_phase_pulse_on, evolve, pi_pulse, Pulse,
};
use crate::report::{Distribution, ExperimentReport, LabelledProbability, Run};
use crate::schedule::Schedule;
use crate::scheme::{BlockadeConfig, BlockadeMode, ExtraRole, Level, LevelScheme};
use crate::takagi::compile_unitary;
use crate::witnesses::{
    box_coeffs, double_box_coeffs, double_plus_pair_coeffs, phi_minus_coeffs, phi_plus_coeffs,
    spinon_rotation, u_phi_minus, u_phi_plus,
};

pub const DEFAULT_ATOMS: u64 = 1_000_000;

const R1: Level = Level::Register(1);
const R2: Level = Level::Register(2);
const R3: Level = Level::Register(3);
const R4: Level = Level::Register(4);

/// Ensemble size and blockade model shared by all experiments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub atoms: u64,
    pub blockade: BlockadeMode,
    /// Rydberg interaction in units of the effective Rabi frequency; only
    /// used with the soft blockade.
    pub v_over_omega: f64,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            atoms: DEFAULT_ATOMS,
            blockade: BlockadeMode::Hard,
            v_over_omega: 1e3,
            seed: 0,
        }
    }
}

impl ProtocolConfig {
    /// Four registers plus `extras`; the soft blockade adds one to the cap
    /// so a leaked Rydberg pair fits.
    pub fn scheme(&self, extras: &[ExtraRole], cap: usize) -> Result<LevelScheme> {
        let (blockade, cap) = match self.blockade {
            BlockadeMode::Hard => (BlockadeConfig::hard(), cap),
            BlockadeMode::Soft => {
                if !(self.v_over_omega > 0.0 && self.v_over_omega.is_finite()) {
                    return Err(Error::Config(format!(
                        "V/Ω must be positive and finite, got {}",
                        self.v_over_omega
                    )));
                }
                (
                    BlockadeConfig::soft(self.v_over_omega, self.v_over_omega, 2),
                    cap + 1,
                )
            }
        };
        LevelScheme::new(4, extras.to_vec(), self.atoms, cap, blockade)
    }

    fn space(&self, extras: &[ExtraRole], cap: usize) -> Result<Arc<Space>> {
        Space::new(self.scheme(extras, cap)?)
    }
}

/// Which auxiliary levels carry the conditional dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Two Rydberg levels with mutual blockade.
    TwoRydberg,
    /// One Rydberg level and a composite pulse.
    SingleRydberg,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::TwoRydberg => "two_rydberg",
            Variant::SingleRydberg => "single_rydberg",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_rydberg" => Ok(Variant::TwoRydberg),
            "single_rydberg" => Ok(Variant::SingleRydberg),
            _ => Err(Error::Domain(format!("unknown variant `{s}`"))),
        }
    }
}

/// Preparation targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preparation {
    PhiMinus,
    PhiPlus,
    BoxTwoRydberg,
    BoxSingleRydberg,
}

impl Preparation {
    pub const ALL: [Preparation; 4] = [
        Preparation::PhiMinus,
        Preparation::PhiPlus,
        Preparation::BoxTwoRydberg,
        Preparation::BoxSingleRydberg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preparation::PhiMinus => "phi_minus",
            Preparation::PhiPlus => "phi_plus",
            Preparation::BoxTwoRydberg => "box_two_rydberg",
            Preparation::BoxSingleRydberg => "box_single_rydberg",
        }
    }
}

impl fmt::Display for Preparation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preparation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preparation::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Domain(format!("unknown preparation target `{s}`")))
    }
}

/// State plus the schedule that produced it.
struct Sequence {
    initial: StateVector,
    state: StateVector,
    schedule: Schedule,
}

impl Sequence {
    fn vacuum(space: &Arc<Space>) -> Result<Self> {
        let initial = StateVector::register_state(space, &[0, 0, 0, 0])?;
        Ok(Sequence {
            state: initial.clone(),
            initial,
            schedule: Schedule::new(),
        })
    }

    fn space(&self) -> &Arc<Space> {
        self.initial.space()
    }

    fn push(&mut self, pulses: impl IntoIterator<Item = Pulse>) -> Result<()> {
        for p in pulses {
            self.state = evolve(&self.state, &p)?;
            self.schedule.push(p);
        }
        Ok(())
    }

    /// Reservoir count of the most probable basis state.
    fn reservoir(&self) -> u64 {
        let amps = self.state.amplitudes();
        let idx = (0..amps.len())
            .max_by(|&a, &b| amps[a].norm_sqr().total_cmp(&amps[b].norm_sqr()))
            .unwrap_or(0);
        self.space().basis().reservoir(idx)
    }

    fn load(&mut self, level: Level) -> Result<()> {
        let pos = self.space().scheme().require(Level::RYDBERG)?;
        let occupied: f64 = self
            .space()
            .basis()
            .states()
            .zip(self.state.amplitudes().iter())
            .filter(|(occ, _)| occ[pos] > 0)
            .map(|(_, a)| a.norm_sqr())
            .sum();
        if occupied > 0.5 {
            return Err(Error::Domain(
                "cannot load an atom while r is occupied".into(),
            ));
        }
        let n0 = self.reservoir();
        self.push(load_one_atom(level, n0)?.pulses)
    }

    fn amplitude(&self, registers: [u8; 4]) -> C64 {
        let mut occ = vec![0u8; self.space().scheme().tracked_len()];
        occ[..4].copy_from_slice(&registers);
        self.state.amplitude(&occ)
    }

    /// Light shift on `level` that aligns the phase of `fix` with `reference`.
    fn align_phase(&mut self, level: Level, reference: [u8; 4], fix: [u8; 4]) -> Result<f64> {
        let angle = wrap(self.amplitude(reference).arg() - self.amplitude(fix).arg());
        self.push([Pulse::light_shift(level, angle)])?;
        Ok(angle)
    }

    fn finish(&self, label: &str, target: Option<&StateVector>, measure: &[Level]) -> Result<Run> {
        let (run, _) = Run::simulate(label, &self.initial, &self.schedule, target, measure)?;
        Ok(run)
    }
}

fn wrap(angle: f64) -> f64 {
    let a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a - 2.0 * PI
    } else {
        a
    }
}

fn register_level(level: Level) -> Result<()> {
    match level {
        Level::Register(_) => Ok(()),
        other => Err(Error::Domain(format!("`{other}` is not a register level"))),
    }
}

fn compiled(u: &DMatrix<C64>) -> Result<Vec<Pulse>> {
    Ok(compile_unitary(u)?.pulses())
}

/// Superposition of single-atom register states with real amplitudes.
pub fn single_excitation_state(space: &Arc<Space>, amplitudes: &[f64; 4]) -> Result<StateVector> {
    let mut amps = DVector::from_element(space.dim(), ZERO);
    for (k, &a) in amplitudes.iter().enumerate() {
        let mut bits = [0u8; 4];
        bits[k] = 1;
        let e = StateVector::register_state(space, &bits)?;
        amps += e.amplitudes() * C64::new(a, 0.0);
    }
    StateVector::from_amplitudes(space.clone(), amps)
}

/// Moves one atom from the reservoir into `level` through `r`.
///
/// The first π pulse is calibrated for `reservoir` atoms in the reservoir,
/// the second for a single atom in `r`.
pub fn load_one_atom(level: Level, reservoir: u64) -> Result<Schedule> {
    register_level(level)?;
    Ok(Schedule::from_iter([
        pi_pulse(Level::Reservoir, Level::RYDBERG, reservoir)?,
        pi_pulse(level, Level::RYDBERG, 1)?,
    ]))
}

/// Collective bit flip of register `level`: π on `level ↔ r`, π on
/// `reservoir ↔ r` calibrated for `reference` reservoir atoms, π on
/// `level ↔ r`.
///
/// On branches whose reservoir occupancy matches `reference` this is `−X`;
/// elsewhere the middle pulse over- or under-rotates by `O(1/K)`.
pub fn sigma_x(level: Level, reference: u64) -> Result<Schedule> {
    register_level(level)?;
    Ok(Schedule::from_iter([
        pi_pulse(level, Level::RYDBERG, 1)?,
        pi_pulse(Level::Reservoir, Level::RYDBERG, reference)?,
        pi_pulse(level, Level::RYDBERG, 1)?,
    ]))
}

/// Phase `π` per atom in register `level`.
pub fn sigma_z(level: Level) -> Result<Pulse> {
    register_level(level)?;
    Ok(Pulse::light_shift(level, PI))
}

/// `Ωt` at which the composite pulse plus light shifts gives the phase
/// table `(0, π, π, π)`: `cos(√2Ωt) = 2 − √3`.
pub fn cz_operating_point() -> f64 {
    (2.0 - 3f64.sqrt()).acos() / SQRT_2
}

/// `Ωt` with `cos(√2Ωt) = √3 − 2`, the operating point obtained from the
/// commonly quoted doubly-occupied phase.
pub fn quoted_operating_point() -> f64 {
    (3f64.sqrt() - 2.0).acos() / SQRT_2
}

/// Phase gate between the control level `c` and register 1.
///
/// `TwoRydberg`: π on `c ↔ r`, 2π on `1 ↔ r′`, π on `c ↔ r`.
/// `SingleRydberg`: π on `c ↔ r`, the composite phase pulse on `1 ↔ r` at
/// `omega_t` (default [`cz_operating_point`]), π back to `c` with opposite
/// phase, and light shifts on `c` and `1` cancelling the single-occupation
/// phase.
pub fn controlled_phase(variant: Variant, omega_t: Option<f64>) -> Result<Schedule> {
    let c = Level::CONTROL;
    let r = Level::RYDBERG;
    let mut s = Schedule::new();
    match variant {
        Variant::TwoRydberg => {
            s.push(pi_pulse(c, r, 1)?);
            s.push(area_pulse(R1, Level::RYDBERG2, 2.0 * PI, 1)?);
            s.push(pi_pulse(c, r, 1)?);
        }
        Variant::SingleRydberg => {
            let wt = omega_t.unwrap_or_else(cz_operating_point);
            let alpha = composite_light_shift(wt)?;
            s.push(pi_pulse(c, r, 1)?);
            s.extend(composite_phase_pulse_on(R1, r, wt)?);
            s.push(pi_pulse(c, r, 1)?.with_phase(PI));
            s.push(Pulse::light_shift(c, alpha));
            s.push(Pulse::light_shift(R1, alpha));
        }
    }
    Ok(s)
}

/// Prepares `target` and reports its fidelity.
///
/// `params` are the three-segment transfer parameters used by
/// [`Preparation::PhiPlus`] and [`Preparation::BoxSingleRydberg`].
pub fn prepare(
    cfg: &ProtocolConfig,
    target: Preparation,
    params: &CompositeTransfer,
) -> Result<ExperimentReport> {
    match target {
        Preparation::PhiMinus => prepare_phi_minus(cfg),
        Preparation::PhiPlus => prepare_phi_plus(cfg, params),
        Preparation::BoxTwoRydberg => prepare_box(cfg, Variant::TwoRydberg, params),
        Preparation::BoxSingleRydberg => prepare_box(cfg, Variant::SingleRydberg, params),
    }
}

fn report_from(protocol: &str, run: Run) -> Result<ExperimentReport> {
    let fidelity = run
        .fidelity
        .ok_or_else(|| Error::Numerical("run has no target".into()))?;
    let mut report = ExperimentReport::new(protocol, fidelity);
    report.runs.push(run);
    Ok(report)
}

/// `|1100⟩` by two loads, then the Raman network for the fixed witness
/// unitary, giving the product of singlets on (1,3) and (2,4).
pub fn prepare_phi_minus(cfg: &ProtocolConfig) -> Result<ExperimentReport> {
    let space = cfg.space(&[ExtraRole::Rydberg], 4)?;
    let mut seq = Sequence::vacuum(&space)?;
    seq.load(R1)?;
    seq.load(R2)?;
    seq.push(compiled(&u_phi_minus())?)?;
    let target = StateVector::two_excitation_state(&space, &phi_minus_coeffs())?;
    report_from("phi_minus", seq.finish("phi_minus", Some(&target), &[])?)
}

/// Load, Raman split, reservoir excitation, composite transfer on `1 ↔ r`,
/// π from `r` into `level`, then a light shift on `level` so both branches
/// share one phase.
fn split_and_transfer(
    seq: &mut Sequence,
    report: &mut ExperimentReport,
    split_area: f64,
    level: Level,
    params: &CompositeTransfer,
) -> Result<()> {
    seq.load(R1)?;
    seq.push([Pulse::raman(R1, R2, split_area, FRAC_PI_2)])?;
    let n0 = seq.reservoir();
    seq.push([pi_pulse(Level::Reservoir, Level::RYDBERG, n0)?])?;
    seq.push(params.pulses_on(R1, Level::RYDBERG))?;
    seq.push([pi_pulse(level, Level::RYDBERG, 1)?])?;
    let fix = match level {
        Level::Register(3) => [0, 1, 1, 0],
        Level::Register(4) => [0, 1, 0, 1],
        other => {
            return Err(Error::Domain(format!(
                "unsupported transfer level `{other}`"
            )))
        }
    };
    report.push_phase("theta_a", params.phase_a);
    report.push_phase("theta_b", params.phase_b);
    let angle = seq.align_phase(level, [2, 0, 0, 0], fix)?;
    report.push_metric(format!("light_shift_{level}"), angle);
    Ok(())
}

/// Builds `√(2/3)|2000⟩ + √(1/3)|0110⟩` with the composite transfer, then
/// applies the Raman network for the fixed witness unitary.
pub fn prepare_phi_plus(
    cfg: &ProtocolConfig,
    params: &CompositeTransfer,
) -> Result<ExperimentReport> {
    params.verify()?;
    let space = cfg.space(&[ExtraRole::Rydberg], 4)?;
    let mut seq = Sequence::vacuum(&space)?;
    let mut report = ExperimentReport::new("phi_plus", f64::NAN);
    let split = 2.0 * (2.0f64 / 3.0).sqrt().acos();
    split_and_transfer(&mut seq, &mut report, split, R3, params)?;
    let mid_target = StateVector::two_excitation_state(&space, &double_plus_pair_coeffs())?;
    let mid = seq.finish("intermediate", Some(&mid_target), &[])?;
    report.push_metric("intermediate_fidelity", mid.fidelity.unwrap_or(0.0));
    seq.push(compiled(&u_phi_plus())?)?;
    let target = StateVector::two_excitation_state(&space, &phi_plus_coeffs())?;
    let run = seq.finish("phi_plus", Some(&target), &[])?;
    report.fidelity = run.fidelity.unwrap_or(0.0);
    report.runs.push(mid);
    report.runs.push(run);
    Ok(report)
}

/// Prepares `(|1010⟩ + |0101⟩)/√2`.
///
/// `TwoRydberg` loads registers 1 and 3, splits 1 into 1 and 2, then runs π
/// pulses on `1 ↔ r`, `3 ↔ r′`, `4 ↔ r′`, `1 ↔ r`: the atom in 3 moves to 4
/// only when 1 is empty.
///
/// `SingleRydberg` builds `(|2000⟩ + |0101⟩)/√2` with the composite transfer
/// and a final π from `r` into 4 (the equal split puts the second branch's
/// pair on (2,4)), then a `π/√2` pulse on `1 ↔ r` and a π pulse on `3 ↔ r`
/// move one atom of the doubly occupied level 1 into 3.
pub fn prepare_box(
    cfg: &ProtocolConfig,
    variant: Variant,
    params: &CompositeTransfer,
) -> Result<ExperimentReport> {
    let target_name = match variant {
        Variant::TwoRydberg => "box_two_rydberg",
        Variant::SingleRydberg => "box_single_rydberg",
    };
    let mut report = ExperimentReport::new(target_name, f64::NAN);
    let run = match variant {
        Variant::TwoRydberg => {
            let space = cfg.space(&[ExtraRole::Rydberg, ExtraRole::Rydberg2], 4)?;
            let mut seq = Sequence::vacuum(&space)?;
            box_two_rydberg_steps(&mut seq)?;
            let target = StateVector::two_excitation_state(&space, &box_coeffs())?;
            seq.finish(target_name, Some(&target), &[])?
        }
        Variant::SingleRydberg => {
            params.verify()?;
            let space = cfg.space(&[ExtraRole::Rydberg], 4)?;
            let mut seq = Sequence::vacuum(&space)?;
            split_and_transfer(&mut seq, &mut report, FRAC_PI_2, R4, params)?;
            let mid_target = StateVector::two_excitation_state(&space, &double_box_coeffs())?;
            let mid = seq.finish("intermediate", Some(&mid_target), &[])?;
            report.push_metric("intermediate_fidelity", mid.fidelity.unwrap_or(0.0));
            report.runs.push(mid);
            seq.push([
                area_pulse(R1, Level::RYDBERG, PI / SQRT_2, 1)?,
                pi_pulse(R3, Level::RYDBERG, 1)?,
            ])?;
            let angle = seq.align_phase(R3, [0, 1, 0, 1], [1, 0, 1, 0])?;
            report.push_metric("light_shift_3", angle);
            let target = StateVector::two_excitation_state(&space, &box_coeffs())?;
            seq.finish(target_name, Some(&target), &[])?
        }
    };
    report.fidelity = run.fidelity.unwrap_or(0.0);
    report.runs.push(run);
    Ok(report)
}

fn box_two_rydberg_steps(seq: &mut Sequence) -> Result<()> {
    let (r, r2) = (Level::RYDBERG, Level::RYDBERG2);
    seq.space().scheme().require(r2)?;
    seq.load(R1)?;
    seq.load(R3)?;
    seq.push([
        Pulse::raman(R1, R2, FRAC_PI_2, FRAC_PI_2),
        pi_pulse(R1, r, 1)?,
        pi_pulse(R3, r2, 1)?,
        pi_pulse(R4, r2, 1)?,
        pi_pulse(R1, r, 1)?,
    ])
}

const SECTORS: [(u8, u8); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];

/// Runs [`controlled_phase`] on the four `(n_c, n₁)` sectors and reports
/// the phases relative to `(0,0)`. The headline fidelity is the overlap
/// with the ideal table `(0, π, π, π)` up to a global phase.
pub fn controlled_phase_table(
    cfg: &ProtocolConfig,
    variant: Variant,
    omega_t: Option<f64>,
) -> Result<ExperimentReport> {
    let extras: &[ExtraRole] = match variant {
        Variant::TwoRydberg => &[ExtraRole::Rydberg, ExtraRole::Rydberg2, ExtraRole::Control],
        Variant::SingleRydberg => &[ExtraRole::Rydberg, ExtraRole::Control],
    };
    let space = cfg.space(extras, 4)?;
    let schedule = controlled_phase(variant, omega_t)?;
    let c_pos = space.scheme().require(Level::CONTROL)?;
    let mut report = ExperimentReport::new(format!("cz_{variant}"), f64::NAN);
    if let (Variant::SingleRydberg, Some(wt)) = (variant, omega_t) {
        report.push_metric("omega_t", wt);
    }
    let mut overlaps = Vec::new();
    for (nc, n1) in SECTORS {
        let mut occ = vec![0u8; space.scheme().tracked_len()];
        occ[0] = n1;
        occ[c_pos] = nc;
        let initial = StateVector::basis_state(&space, &occ)?;
        let (run, _) = Run::simulate(
            format!("sector_{nc}{n1}"),
            &initial,
            &schedule,
            Some(&initial),
            &[],
        )?;
        let (p, phase) = (run.fidelity.unwrap_or(0.0), run.phase.unwrap_or(0.0));
        overlaps.push(C64::from_polar(p.sqrt(), phase));
        report.push_metric(format!("return_{nc}{n1}"), p);
        report.runs.push(run);
    }
    let ideal = [0.0, PI, PI, PI];
    let mut sum = ZERO;
    let mut worst = 0.0f64;
    for (k, (nc, n1)) in SECTORS.into_iter().enumerate() {
        let rel = wrap(overlaps[k].arg() - overlaps[0].arg());
        report.push_phase(format!("dtheta_{nc}{n1}"), rel);
        worst = worst.max(wrap(rel - ideal[k]).abs());
        sum += overlaps[k] * C64::from_polar(1.0, -ideal[k]);
    }
    report.push_metric("max_phase_error", worst);
    report.fidelity = (sum / 4.0).norm_sqr();
    Ok(report)
}

/// Braiding run options.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BraidingOptions {
    pub with_flux: bool,
    pub gate: Variant,
}

impl Default for BraidingOptions {
    fn default() -> Self {
        BraidingOptions {
            with_flux: true,
            gate: Variant::TwoRydberg,
        }
    }
}

fn control_state(space: &Arc<Space>, terms: &[(u8, [u8; 4], f64)]) -> Result<StateVector> {
    let c_pos = space.scheme().require(Level::CONTROL)?;
    let mut amps = DVector::from_element(space.dim(), ZERO);
    for &(nc, regs, a) in terms {
        let mut occ = vec![0u8; space.scheme().tracked_len()];
        occ[..4].copy_from_slice(&regs);
        occ[c_pos] = nc;
        amps += StateVector::basis_state(space, &occ)?.amplitudes() * C64::new(a, 0.0);
    }
    StateVector::from_amplitudes(space.clone(), amps)
}

/// String-net braiding with a control qubit.
///
/// Prepares `|□⟩` (two-Rydberg variant), puts the control into
/// `(|0⟩+|1⟩)/√2` with a half-area reservoir pulse and a π pulse into `c`,
/// applies the controlled phase, the string `σ₄ˣσ₃ˣσ₂ˣσ₁ˣ` and the
/// controlled phase again, then maps the control basis
/// `{(|0⟩+|1⟩)/√2, (−|0⟩+|1⟩)/√2}` onto `n_r ∈ {0, 1}` and measures.
/// Without flux both phase gates are skipped.
pub fn braiding_experiment(
    cfg: &ProtocolConfig,
    options: BraidingOptions,
) -> Result<ExperimentReport> {
    let space = cfg.space(
        &[ExtraRole::Rydberg, ExtraRole::Rydberg2, ExtraRole::Control],
        5,
    )?;
    let mut seq = Sequence::vacuum(&space)?;
    box_two_rydberg_steps(&mut seq)?;
    let n0 = seq.reservoir();
    let half = area_pulse(Level::Reservoir, Level::RYDBERG, FRAC_PI_2, n0)?.with_phase(PI);
    seq.push([half.clone(), pi_pulse(Level::CONTROL, Level::RYDBERG, 1)?])?;
    let h = 0.5;
    let (a, b) = ([1, 0, 1, 0], [0, 1, 0, 1]);
    let prepared = control_state(&space, &[(0, a, h), (0, b, h), (1, a, h), (1, b, h)])?;
    let mut report = ExperimentReport::new(
        if options.with_flux {
            "braid"
        } else {
            "braid_no_flux"
        },
        f64::NAN,
    );
    report.push_metric("control_prep_fidelity", prepared.fidelity(&seq.state)?);
    let gate = controlled_phase(options.gate, None)?;
    if options.with_flux {
        seq.push(gate.pulses.iter().cloned())?;
        // the gate's phase on the whole control-1 sector flips the control branches' relative sign
        let signed = control_state(&space, &[(0, a, h), (0, b, -h), (1, a, h), (1, b, h)])?;
        report.push_metric("sign_structure_fidelity", signed.fidelity(&seq.state)?);
    }
    let reference = cfg
        .atoms
        .checked_sub(2)
        .filter(|&m| m > 0)
        .ok_or_else(|| Error::Config("braiding needs at least three atoms".into()))?;
    for k in 1..=4 {
        seq.push(sigma_x(Level::Register(k), reference)?.pulses)?;
    }
    if options.with_flux {
        seq.push(gate.pulses.iter().cloned())?;
    }
    seq.push([pi_pulse(Level::CONTROL, Level::RYDBERG, 1)?, half])?;
    let run = seq.finish("braid", None, &[Level::RYDBERG])?;
    let m = &run.measurements[0];
    let minus = m.probability(1);
    let plus = m.probability(0);
    let other: f64 = m
        .outcomes
        .iter()
        .filter(|o| o.outcome >= 2)
        .map(|o| o.probability)
        .sum();
    let mut outcomes = vec![
        LabelledProbability {
            label: "minus".into(),
            probability: minus,
        },
        LabelledProbability {
            label: "plus".into(),
            probability: plus,
        },
    ];
    if other > 0.0 {
        outcomes.push(LabelledProbability {
            label: "other".into(),
            probability: other,
        });
    }
    report.distributions.push(Distribution {
        name: "control".into(),
        outcomes,
    });
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let shot = seq.state.sample_occupation(Level::RYDBERG, &mut rng)?;
    report.push_metric("sampled_n_r", shot.outcome as f64);
    report.fidelity = if options.with_flux { minus } else { plus };
    report.push_metric("infidelity", 1.0 - report.fidelity);
    report.runs.push(run);
    Ok(report)
}

/// Braiding infidelity for each ensemble size.
pub fn braiding_k_sweep(
    cfg: &ProtocolConfig,
    options: BraidingOptions,
    atoms: &[u64],
) -> Result<Vec<(u64, f64)>> {
    atoms
        .iter()
        .map(|&k| {
            let r = braiding_experiment(&ProtocolConfig { atoms: k, ..*cfg }, options)?;
            Ok((k, 1.0 - r.fidelity))
        })
        .collect()
}

/// Infidelity of σ₁ˣ on `|□⟩` against ideal `X₁|□⟩` as a function of `K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub rows: Vec<(u64, f64)>,
    /// Least-squares slope of `log infidelity` against `log K`.
    pub slope: f64,
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(rows: &[(u64, f64)]) -> Result<f64> {
    if rows.len() < 2 || rows.iter().any(|&(_, y)| y <= 0.0) {
        return Err(Error::Numerical(
            "slope needs two or more positive points".into(),
        ));
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|&(x, y)| ((x as f64).ln(), y.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

pub fn sigma_x_scaling(atoms: &[u64]) -> Result<Scaling> {
    let rows = atoms
        .iter()
        .map(|&k| {
            let cfg = ProtocolConfig {
                atoms: k,
                ..ProtocolConfig::default()
            };
            let space = cfg.space(&[ExtraRole::Rydberg], 4)?;
            let boxed = StateVector::two_excitation_state(&space, &box_coeffs())?;
            let flipped = sigma_x(R1, k - 2)?.run(&boxed)?;
            let h = 0.5f64.sqrt();
            let mut ideal =
                StateVector::register_state(&space, &[0, 0, 1, 0])?.amplitudes() * C64::new(h, 0.0);
            ideal +=
                StateVector::register_state(&space, &[1, 1, 0, 1])?.amplitudes() * C64::new(h, 0.0);
            let ideal = StateVector::from_amplitudes(space.clone(), ideal)?;
            Ok((k, 1.0 - ideal.fidelity(&flipped)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let slope = log_log_slope(&rows)?;
    Ok(Scaling { rows, slope })
}

/// Preparation infidelity under the soft blockade for each `V/Ω`.
pub fn blockade_sweep(
    cfg: &ProtocolConfig,
    target: Preparation,
    params: &CompositeTransfer,
    v_over_omega: &[f64],
) -> Result<Vec<(f64, f64)>> {
    v_over_omega
        .iter()
        .map(|&v| {
            let soft = ProtocolConfig {
                blockade: BlockadeMode::Soft,
                v_over_omega: v,
                ..*cfg
            };
            Ok((v, 1.0 - prepare(&soft, target, params)?.fidelity))
        })
        .collect()
}

/// The three spinon states and the symmetric state, as amplitudes on
/// registers 1..4.
pub fn spinon_inputs() -> [(&'static str, [f64; 4]); 4] {
    let h = 0.5f64.sqrt();
    let t = (1.0f64 / 3.0).sqrt();
    [
        ("spinon_14", [0.0, h, -h, 0.0]),
        ("spinon_13", [0.0, -h, 0.0, h]),
        ("spinon_12", [0.0, 0.0, h, -h]),
        ("symmetric", [0.0, t, t, t]),
    ]
}

/// Single-atom map `diag(1, T)` with `T` the two-step rotation on levels
/// 2, 3, 4.
pub fn spinon_map() -> DMatrix<f64> {
    let mut w = DMatrix::identity(4, 4);
    w.view_mut((1, 1), (3, 3)).copy_from(&spinon_rotation());
    w
}

/// Reflection exchanging `e_2` and `v` (unit vectors).
fn reflection_onto(v: &[f64; 4]) -> DMatrix<f64> {
    let mut u = DVector::from_column_slice(v) * -1.0;
    u[1] += 1.0;
    let n = u.norm_squared();
    if n < 1e-30 {
        return DMatrix::identity(4, 4);
    }
    DMatrix::identity(4, 4) - &u * u.transpose() * (2.0 / n)
}

fn complex(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|x| C64::new(x, 0.0))
}

/// Loads one atom into register 2, rotates it into each input state with
/// compiled Raman pulses, applies [`spinon_map`] the same way and measures
/// the occupation of register 2. Spinons give 0, the symmetric state 1.
pub fn spinon_demo(cfg: &ProtocolConfig) -> Result<ExperimentReport> {
    let space = cfg.space(&[ExtraRole::Rydberg], 2)?;
    let map = spinon_map();
    let mut report = ExperimentReport::new("spinon", f64::NAN);
    let mut worst = 1.0f64;
    for (name, v) in spinon_inputs() {
        let mut seq = Sequence::vacuum(&space)?;
        seq.load(R2)?;
        // compiled pulses act as the transpose of the compiled matrix
        seq.push(compiled(&complex(&reflection_onto(&v).transpose()))?)?;
        let prepared = single_excitation_state(&space, &v)?;
        report.push_metric(
            format!("{name}_prep_fidelity"),
            prepared.fidelity(&seq.state)?,
        );
        seq.push(compiled(&complex(&map.transpose()))?)?;
        let out = &map * DVector::from_column_slice(&v);
        let expected = single_excitation_state(&space, &[out[0], out[1], out[2], out[3]])?;
        let run = seq.finish(name, Some(&expected), &[R2])?;
        let m = &run.measurements[0];
        let want = if name == "symmetric" { 1 } else { 0 };
        worst = worst.min(m.probability(want));
        let outcomes = m
            .outcomes
            .iter()
            .map(|o| LabelledProbability {
                label: o.outcome.to_string(),
                probability: o.probability,
            })
            .collect();
        report.distributions.push(Distribution {
            name: name.to_string(),
            outcomes,
        });
        report.runs.push(run);
    }
    report.fidelity = worst;
    Ok(report)
}
