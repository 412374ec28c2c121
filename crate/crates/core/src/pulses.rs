//! Piecewise-constant drives and exact time evolution.
//!
//! A drive couples two levels `lower → upper` (the lower level may be the
//! reservoir). In the rotating frame its many-body Hamiltonian is
//!
//! ```text
//! H = (Ω/2)(e^{iφ} a_u† a_l + e^{−iφ} a_l† a_u) − Δ n_u  [+ soft-blockade terms]
//! ```
//!
//! with reservoir operators contributing `√n_0`. The Hamiltonian conserves
//! every occupation except those of the two coupled levels, so it splits into
//! tiny blocks that are exponentiated exactly by Hermitian
//! eigendecomposition.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fockspace::{Space, StateVector, C64, ZERO};
use crate::scheme::{BlockadeMode, Level};

/// Bound on `‖U†U − I‖` accepted from a propagator block.
pub const UNITARITY_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveKind {
    /// Two-photon transition between stable levels.
    Raman,
    /// Transition to or from a Rydberg level.
    RydbergDrive,
}

/// One constant drive segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Drive {
    pub kind: DriveKind,
    pub lower: Level,
    pub upper: Level,
    /// Rabi frequency Ω ≥ 0.
    pub rabi: f64,
    /// Drive phase φ.
    pub phase: f64,
    /// Detuning Δ, entering as `−Δ n_upper`.
    pub detuning: f64,
    pub duration: f64,
    /// Occupancy the Rabi frequency was calibrated for, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_occupancy: Option<u64>,
}

impl Drive {
    pub fn area(&self) -> f64 {
        self.rabi * self.duration
    }

    pub fn detuning_area(&self) -> f64 {
        self.detuning * self.duration
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration >= 0.0 && self.rabi >= 0.0) {
            return Err(Error::Domain(
                "drive duration and Rabi frequency must be nonnegative".into(),
            ));
        }
        if self.upper == Level::Reservoir {
            return Err(Error::Domain(
                "the reservoir can only be the lower level of a drive".into(),
            ));
        }
        if self.lower == self.upper {
            return Err(Error::Domain("a drive needs two distinct levels".into()));
        }
        if ![self.rabi, self.phase, self.detuning, self.duration]
            .iter()
            .all(|x| x.is_finite())
        {
            return Err(Error::Domain("drive parameters must be finite".into()));
        }
        Ok(())
    }
}

/// A schedule element: a drive or an instantaneous occupation-dependent
/// phase (light shift).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Pulse {
    Drive(Drive),
    LightShift { level: Level, angle: f64 },
}

impl Pulse {
    pub fn raman(lower: Level, upper: Level, area: f64, phase: f64) -> Pulse {
        Pulse::Drive(Drive {
            kind: DriveKind::Raman,
            lower,
            upper,
            rabi: area,
            phase,
            detuning: 0.0,
            duration: 1.0,
            reference_occupancy: None,
        })
    }

    pub fn light_shift(level: Level, angle: f64) -> Pulse {
        Pulse::LightShift { level, angle }
    }

    pub fn as_drive(&self) -> Option<&Drive> {
        match self {
            Pulse::Drive(d) => Some(d),
            Pulse::LightShift { .. } => None,
        }
    }

    pub fn with_phase(mut self, phase: f64) -> Pulse {
        if let Pulse::Drive(d) = &mut self {
            d.phase = phase;
        }
        self
    }
}

/// Kind of drive implied by the pair of levels.
pub fn drive_kind(lower: Level, upper: Level) -> DriveKind {
    if lower.is_rydberg() || upper.is_rydberg() {
        DriveKind::RydbergDrive
    } else {
        DriveKind::Raman
    }
}

/// Resonant π pulse on `lower ↔ upper`, calibrated for the manifold whose
/// bosonic enhancement is `√reference_occupancy`.
///
/// The effective Rabi frequency `√m · Ω` is fixed at one unit, so
/// `Ω = 1/√m` and the duration is `π`. Branches whose actual enhancement
/// differs from `√m` see a different area; nothing is recalibrated per branch.
pub fn pi_pulse(lower: Level, upper: Level, reference_occupancy: u64) -> Result<Pulse> {
    area_pulse(lower, upper, PI, reference_occupancy)
}

/// Resonant pulse of effective area `area` on the reference manifold.
pub fn area_pulse(
    lower: Level,
    upper: Level,
    area: f64,
    reference_occupancy: u64,
) -> Result<Pulse> {
    if reference_occupancy == 0 {
        return Err(Error::Domain("reference occupancy must be positive".into()));
    }
    Ok(Pulse::Drive(Drive {
        kind: drive_kind(lower, upper),
        lower,
        upper,
        rabi: 1.0 / (reference_occupancy as f64).sqrt(),
        phase: 0.0,
        detuning: 0.0,
        duration: area,
        reference_occupancy: Some(reference_occupancy),
    }))
}

fn composite_trig(omega_t: f64) -> Result<(f64, f64, f64)> {
    if !(omega_t > 0.0 && omega_t.is_finite()) {
        return Err(Error::Domain("Ωt must be positive".into()));
    }
    let (s, c) = (SQRT_2 * omega_t).sin_cos();
    if s.abs() < 1e-9 {
        return Err(Error::Domain(format!(
            "sin(√2 Ωt) vanishes at Ωt = {omega_t}"
        )));
    }
    Ok((s, c, (1.0 + c * c).sqrt()))
}

/// Three equal-duration segments on `1 ↔ r` that imprint occupation-dependent
/// phases without moving population.
///
/// The segments have phases `0, π/2, π`; the outer two have area `Ωt` and no
/// detuning, the middle one has area `2π sin(√2Ωt)/√(1+cos²(√2Ωt))` and
/// detuning area `−2√2π cos(√2Ωt)/√(1+cos²(√2Ωt))`, which is a full 2π
/// rotation for singly occupied manifolds.
pub fn composite_phase_pulse(omega_t: f64) -> Result<Vec<Pulse>> {
    composite_phase_pulse_on(Level::Register(1), Level::RYDBERG, omega_t)
}

pub fn composite_phase_pulse_on(lower: Level, upper: Level, omega_t: f64) -> Result<Vec<Pulse>> {
    let (s, c, root) = composite_trig(omega_t)?;
    let t = omega_t;
    let seg = |area: f64, phase: f64, det_area: f64| {
        Pulse::Drive(Drive {
            kind: drive_kind(lower, upper),
            lower,
            upper,
            rabi: area / t,
            phase,
            detuning: det_area / t,
            duration: t,
            reference_occupancy: None,
        })
    };
    Ok(vec![
        seg(omega_t, 0.0, 0.0),
        seg(
            2.0 * PI * s / root,
            FRAC_PI_2,
            -2.0 * SQRT_2 * PI * c / root,
        ),
        seg(omega_t, PI, 0.0),
    ])
}

/// Branch phases `(Δθ₀₀, Δθ₁₀, Δθ₀₁, Δθ₁₁)` of the composite pulse in
/// closed form as commonly quoted: `Δθ₁₀ = Δθ₀₁ = π − √2π cos/√(1+cos²)` and
/// `Δθ₁₁ = √2π(1 − cos)/√(1+cos²)`, with `cos = cos(√2Ωt)`.
///
/// The `Δθ₁₁` expression selects the wrong eigenphase of the middle segment
/// on the doubly occupied manifold; see [`exact_phase_deltas`].
pub fn analytic_phase_deltas(omega_t: f64) -> Result<[f64; 4]> {
    let (_, c, root) = composite_trig(omega_t)?;
    let single = PI - SQRT_2 * PI * c / root;
    let double = SQRT_2 * PI * (1.0 - c) / root;
    Ok([0.0, single, single, double])
}

/// Branch phases of the composite pulse as produced by the dynamics.
///
/// On the doubly occupied manifold the state after the first segment sits
/// on the rotation axis of the second, so it only picks up the eigenphase
/// `Δ₂t/2 − ϑ/2` with `ϑ = 2√2π/√(1+cos²)` the generalized rotation angle.
/// That gives `Δθ₁₁ = −√2π(1 + cos)/√(1+cos²)`; the singly occupied
/// branches agree with [`analytic_phase_deltas`].
pub fn exact_phase_deltas(omega_t: f64) -> Result<[f64; 4]> {
    let (_, c, root) = composite_trig(omega_t)?;
    let single = PI - SQRT_2 * PI * c / root;
    let double = -SQRT_2 * PI * (1.0 + c) / root;
    Ok([0.0, single, single, double])
}

/// Light-shift angle `√2π cos(√2Ωt)/√(1+cos²(√2Ωt))` that cancels the
/// single-occupation part of the composite phase.
pub fn composite_light_shift(omega_t: f64) -> Result<f64> {
    let (_, c, root) = composite_trig(omega_t)?;
    Ok(SQRT_2 * PI * c / root)
}

struct Coupling {
    lower: Option<usize>,
    upper: usize,
}

fn coupling(space: &Space, drive: &Drive) -> Result<Coupling> {
    drive.validate()?;
    let scheme = space.scheme();
    let lower = match drive.lower {
        Level::Reservoir => None,
        l => Some(scheme.require(l)?),
    };
    let upper = scheme.require(drive.upper)?;
    Ok(Coupling { lower, upper })
}

/// Diagonal energy of a basis state: detuning plus soft-blockade terms.
fn diagonal(space: &Space, drive: &Drive, occ: &[u8]) -> f64 {
    let scheme = space.scheme();
    let upper = scheme.position(drive.upper).expect("validated");
    let mut e = -drive.detuning * occ[upper] as f64;
    if scheme.blockade.mode == BlockadeMode::Soft {
        let ryd = scheme.rydberg_positions();
        let v = scheme.blockade.interaction;
        let vx = scheme.blockade.cross_interaction;
        for (k, &a) in ryd.iter().enumerate() {
            let na = occ[a] as f64;
            e += 0.5 * v * na * (na - 1.0);
            for &b in &ryd[k + 1..] {
                e += vx * na * occ[b] as f64;
            }
        }
    }
    e
}

/// Nonzero entries `(row, col, value)` of the drive Hamiltonian with
/// `row > col` for off-diagonals, plus the diagonal.
/// Off-diagonal couplings `(row, col, value)` and the diagonal.
type Entries = (Vec<(usize, usize, C64)>, Vec<f64>);

fn hamiltonian_entries(space: &Space, drive: &Drive) -> Result<Entries> {
    let Coupling { lower, upper } = coupling(space, drive)?;
    let basis = space.basis();
    let diag: Vec<f64> = basis
        .states()
        .map(|occ| diagonal(space, drive, occ))
        .collect();
    let mut off = Vec::new();
    let half = 0.5 * drive.rabi;
    let raise = C64::from_polar(half, drive.phase);
    let mut target = Vec::with_capacity(space.scheme().tracked_len());
    for (col, occ) in basis.states().enumerate() {
        // a_u† a_l |occ⟩ = √n_l √(n_u + 1) |occ − e_l + e_u⟩
        let n_lower = match lower {
            Some(l) => occ[l] as f64,
            None => basis.reservoir(col) as f64,
        };
        if n_lower == 0.0 {
            continue;
        }
        target.clear();
        target.extend_from_slice(occ);
        if let Some(l) = lower {
            target[l] -= 1;
        }
        target[upper] += 1;
        if let Some(row) = basis.index_of(&target) {
            let amp = (n_lower * (occ[upper] as f64 + 1.0)).sqrt();
            off.push((row, col, raise * amp));
        }
    }
    Ok((off, diag))
}

/// Dense rotating-frame Hamiltonian of a drive over the whole basis.
pub fn build_hamiltonian(space: &Space, drive: &Drive) -> Result<DMatrix<C64>> {
    let (off, diag) = hamiltonian_entries(space, drive)?;
    let n = space.dim();
    let mut h = DMatrix::from_element(n, n, ZERO);
    for (k, e) in diag.into_iter().enumerate() {
        h[(k, k)] = C64::new(e, 0.0);
    }
    for (row, col, v) in off {
        h[(row, col)] = v;
        h[(col, row)] = v.conj();
    }
    Ok(h)
}

/// Exact propagator `exp(−iHt)` stored as independent dense blocks.
#[derive(Clone, Debug)]
pub struct Propagator {
    dim: usize,
    blocks: Vec<(Vec<usize>, DMatrix<C64>)>,
}

impl Propagator {
    pub fn new(space: &Space, drive: &Drive) -> Result<Self> {
        let (off, diag) = hamiltonian_entries(space, drive)?;
        let n = space.dim();
        // Connected components of the coupling graph.
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for &(r, c, _) in &off {
            let (a, b) = (find(&mut parent, r), find(&mut parent, c));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
        for k in 0..n {
            let root = find(&mut parent, k);
            groups.entry(root).or_default().push(k);
        }
        let mut roots: Vec<usize> = groups.keys().copied().collect();
        roots.sort_unstable();
        let mut entries_by_root: HashMap<usize, Vec<(usize, usize, C64)>> = HashMap::new();
        for (r, c, v) in off {
            let root = find(&mut parent, r);
            entries_by_root.entry(root).or_default().push((r, c, v));
        }
        let t = drive.duration;
        let mut blocks = Vec::with_capacity(roots.len());
        for root in roots {
            let members = groups.remove(&root).expect("root present");
            let m = members.len();
            let u = if m == 1 {
                let e = diag[members[0]];
                DMatrix::from_element(1, 1, C64::from_polar(1.0, -e * t))
            } else {
                let local: HashMap<usize, usize> =
                    members.iter().enumerate().map(|(k, &g)| (g, k)).collect();
                let mut h = DMatrix::from_element(m, m, ZERO);
                for (k, &g) in members.iter().enumerate() {
                    h[(k, k)] = C64::new(diag[g], 0.0);
                }
                for &(r, c, v) in entries_by_root.get(&root).into_iter().flatten() {
                    let (lr, lc) = (local[&r], local[&c]);
                    h[(lr, lc)] = v;
                    h[(lc, lr)] = v.conj();
                }
                exp_hermitian(&h, t)?
            };
            blocks.push((members, u));
        }
        Ok(Propagator { dim: n, blocks })
    }

    pub fn apply(&self, amplitudes: &DVector<C64>) -> DVector<C64> {
        let mut out = DVector::from_element(self.dim, ZERO);
        for (members, u) in &self.blocks {
            if members.len() == 1 {
                out[members[0]] = u[(0, 0)] * amplitudes[members[0]];
                continue;
            }
            for (i, &gi) in members.iter().enumerate() {
                let mut acc = ZERO;
                for (j, &gj) in members.iter().enumerate() {
                    acc += u[(i, j)] * amplitudes[gj];
                }
                out[gi] = acc;
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::from_element(self.dim, self.dim, ZERO);
        for (members, u) in &self.blocks {
            for (i, &gi) in members.iter().enumerate() {
                for (j, &gj) in members.iter().enumerate() {
                    m[(gi, gj)] = u[(i, j)];
                }
            }
        }
        m
    }

    /// Largest block size; exposes how the Hamiltonian decomposes.
    pub fn max_block(&self) -> usize {
        self.blocks.iter().map(|(m, _)| m.len()).max().unwrap_or(0)
    }
}

/// `exp(−iHt)` for Hermitian `H` via eigendecomposition.
pub fn exp_hermitian(h: &DMatrix<C64>, t: f64) -> Result<DMatrix<C64>> {
    let eig = SymmetricEigen::try_new(h.clone(), f64::EPSILON, 100_000).ok_or_else(|| {
        Error::Numerical(format!(
            "Hermitian eigendecomposition did not converge (dim {}, ‖H‖_F = {:.3e})",
            h.nrows(),
            h.norm()
        ))
    })?;
    let v = &eig.eigenvectors;
    let phases = DMatrix::from_diagonal(&DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues
            .iter()
            .map(|&e| C64::from_polar(1.0, -e * t)),
    ));
    let u = v * phases * v.adjoint();
    let residual = unitarity_residual(&u);
    if residual > UNITARITY_TOLERANCE {
        return Err(Error::Numerical(format!(
            "propagator block of dim {} has unitarity residual {residual:.3e}",
            h.nrows()
        )));
    }
    Ok(u)
}

/// Frobenius norm of `U†U − I`.
pub fn unitarity_residual(u: &DMatrix<C64>) -> f64 {
    let n = u.ncols();
    (u.adjoint() * u - DMatrix::<C64>::identity(n, n)).norm()
}

/// Applies one pulse to a state.
pub fn evolve(state: &StateVector, pulse: &Pulse) -> Result<StateVector> {
    match pulse {
        Pulse::LightShift { level, angle } => state.phase_on_occupation(*level, *angle),
        Pulse::Drive(drive) => {
            let prop = Propagator::new(state.space(), drive)?;
            Ok(state.with_amplitudes(prop.apply(state.amplitudes())))
        }
    }
}

/// Applies pulses in order.
pub fn evolve_all<'a>(
    state: &StateVector,
    pulses: impl IntoIterator<Item = &'a Pulse>,
) -> Result<StateVector> {
    let mut current = state.clone();
    for p in pulses {
        current = evolve(&current, p)?;
    }
    Ok(current)
}
