//! Permutation-symmetric ensemble states as bosonic occupation vectors.
//!
//! A symmetric state of `K` atoms is fully described by how many atoms sit
//! in each internal level, so the Hilbert space is spanned by occupation
//! vectors `(n_1, …, n_N, n_r, …)` over the tracked levels. The reservoir
//! occupation `n_0 = K − Σ n` is implicit and only enters through bosonic
//! matrix elements, which keeps the basis at a few dozen states even for
//! `K = 10⁶`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::scheme::{BlockadeMode, Level, LevelScheme};

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

/// Canonically ordered occupation-number basis.
///
/// States are sorted lexicographically by occupation vector, which makes the
/// dense index stable across runs and serializations.
#[derive(Clone, Debug)]
pub struct OccupationBasis {
    states: Vec<Box<[u8]>>,
    index: HashMap<Box<[u8]>, usize>,
    total_atoms: u64,
}

impl OccupationBasis {
    pub fn build(scheme: &LevelScheme) -> Result<Self> {
        let caps = scheme.level_caps();
        let rydberg = scheme.rydberg_positions();
        let joint_rydberg_cap = match scheme.blockade.mode {
            BlockadeMode::Hard => 1,
            BlockadeMode::Soft => usize::MAX,
        };
        let mut states = Vec::new();
        let mut current = vec![0u8; caps.len()];
        enumerate(&caps, 0, scheme.tracked_cap, &mut current, &mut states);
        states.retain(|occ| {
            rydberg.iter().map(|&k| occ[k] as usize).sum::<usize>() <= joint_rydberg_cap
        });
        if states.is_empty() {
            return Err(Error::Config("occupation caps admit no basis state".into()));
        }
        let index = states
            .iter()
            .enumerate()
            .map(|(k, s)| (s.clone(), k))
            .collect();
        Ok(OccupationBasis {
            states,
            index,
            total_atoms: scheme.total_atoms,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, index: usize) -> &[u8] {
        &self.states[index]
    }

    pub fn states(&self) -> impl Iterator<Item = &[u8]> {
        self.states.iter().map(|s| &s[..])
    }

    pub fn index_of(&self, occupation: &[u8]) -> Option<usize> {
        self.index.get(occupation).copied()
    }

    /// Implicit reservoir occupation of a basis state.
    pub fn reservoir(&self, index: usize) -> u64 {
        let tracked: u64 = self.states[index].iter().map(|&n| n as u64).sum();
        self.total_atoms - tracked
    }
}

fn enumerate(
    caps: &[usize],
    pos: usize,
    remaining: usize,
    current: &mut Vec<u8>,
    out: &mut Vec<Box<[u8]>>,
) {
    if pos == caps.len() {
        out.push(current.clone().into_boxed_slice());
        return;
    }
    for n in 0..=caps[pos].min(remaining) {
        current[pos] = n as u8;
        enumerate(caps, pos + 1, remaining - n, current, out);
    }
    current[pos] = 0;
}

/// A level scheme together with its basis; shared by every state on it.
#[derive(Debug)]
pub struct Space {
    scheme: LevelScheme,
    basis: OccupationBasis,
}

impl Space {
    pub fn new(scheme: LevelScheme) -> Result<Arc<Space>> {
        scheme.validate()?;
        if scheme.tracked_cap > u8::MAX as usize {
            return Err(Error::Config("tracked cap too large".into()));
        }
        let basis = OccupationBasis::build(&scheme)?;
        Ok(Arc::new(Space { scheme, basis }))
    }

    pub fn scheme(&self) -> &LevelScheme {
        &self.scheme
    }

    pub fn basis(&self) -> &OccupationBasis {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    fn same_as(self: &Arc<Self>, other: &Arc<Space>) -> bool {
        Arc::ptr_eq(self, other) || self.scheme == other.scheme
    }
}

/// Complex symmetric coefficient matrix `c` of a two-excitation state
/// `Σ_ij c_ij a_i† a_j† |vac⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricCoeffs {
    matrix: DMatrix<C64>,
}

impl SymmetricCoeffs {
    /// Symmetrizes `(A + Aᵀ)/2`, so the stored matrix is exactly symmetric.
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Domain("coefficient matrix must be square".into()));
        }
        let n = matrix.nrows();
        let sym = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                matrix[(i, i)]
            } else {
                let (a, b) = if i < j { (i, j) } else { (j, i) };
                (matrix[(a, b)] + matrix[(b, a)]) * 0.5
            }
        });
        Ok(SymmetricCoeffs { matrix: sym })
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Domain("coefficient matrix must be square".into()));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| C64::new(rows[i][j], 0.0)))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.matrix[(i, j)]
    }

    /// Squared norm of the state this matrix defines:
    /// `4 Σ_{i<j} |c_ij|² + 2 Σ_i |c_ii|²`.
    pub fn state_norm_sqr(&self) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for i in 0..n {
            acc += 2.0 * self.matrix[(i, i)].norm_sqr();
            for j in i + 1..n {
                acc += 4.0 * self.matrix[(i, j)].norm_sqr();
            }
        }
        acc
    }

    /// Rescaled so that the defined state has unit norm.
    pub fn normalized(&self) -> Result<Self> {
        let norm = self.state_norm_sqr().sqrt();
        if norm == 0.0 {
            return Err(Error::Domain("zero coefficient matrix".into()));
        }
        Ok(SymmetricCoeffs {
            matrix: self.matrix.map(|z| z / norm),
        })
    }

    /// Unitary congruence `Uᵀ c U`.
    pub fn congruence(&self, u: &DMatrix<C64>) -> Result<Self> {
        if u.nrows() != self.dim() || u.ncols() != self.dim() {
            return Err(Error::Domain("dimension mismatch in congruence".into()));
        }
        Self::new(u.transpose() * &self.matrix * u)
    }
}

/// Result of a projective occupation measurement.
#[derive(Clone, Debug)]
pub struct MeasurementBranch {
    pub outcome: usize,
    pub probability: f64,
    pub state: StateVector,
}

/// Complex amplitudes over the occupation basis.
#[derive(Clone, Debug)]
pub struct StateVector {
    space: Arc<Space>,
    amplitudes: DVector<C64>,
}

impl StateVector {
    pub fn from_amplitudes(space: Arc<Space>, amplitudes: DVector<C64>) -> Result<Self> {
        if amplitudes.len() != space.dim() {
            return Err(Error::Domain(format!(
                "expected {} amplitudes, got {}",
                space.dim(),
                amplitudes.len()
            )));
        }
        Ok(StateVector { space, amplitudes })
    }

    pub(crate) fn with_amplitudes(&self, amplitudes: DVector<C64>) -> Self {
        StateVector {
            space: self.space.clone(),
            amplitudes,
        }
    }

    /// Unit amplitude on one occupation vector over all tracked levels.
    pub fn basis_state(space: &Arc<Space>, occupation: &[u8]) -> Result<Self> {
        let idx = space.basis.index_of(occupation).ok_or_else(|| {
            Error::Domain(format!("occupation {occupation:?} is outside the basis"))
        })?;
        let mut amps = DVector::from_element(space.dim(), ZERO);
        amps[idx] = ONE;
        Ok(StateVector {
            space: space.clone(),
            amplitudes: amps,
        })
    }

    /// Register state with the given per-register occupations and nothing in
    /// the auxiliary levels.
    pub fn register_state(space: &Arc<Space>, bits: &[u8]) -> Result<Self> {
        let scheme = space.scheme();
        if bits.len() != scheme.register_levels {
            return Err(Error::Domain(format!(
                "expected {} register occupations, got {}",
                scheme.register_levels,
                bits.len()
            )));
        }
        let mut occ = vec![0u8; scheme.tracked_len()];
        occ[..bits.len()].copy_from_slice(bits);
        let total: usize = bits.iter().map(|&b| b as usize).sum();
        if total > scheme.tracked_cap {
            return Err(Error::Domain(format!(
                "register occupation {total} exceeds the tracked cap {}",
                scheme.tracked_cap
            )));
        }
        Self::basis_state(space, &occ)
    }

    /// Normalized `Σ_ij c_ij a_i† a_j† |vac⟩` over the register levels.
    pub fn two_excitation_state(space: &Arc<Space>, c: &SymmetricCoeffs) -> Result<Self> {
        let scheme = space.scheme();
        let n = c.dim();
        if n != scheme.register_levels {
            return Err(Error::Domain(format!(
                "coefficient matrix is {n}x{n} but the scheme has {} register levels",
                scheme.register_levels
            )));
        }
        if scheme.tracked_cap < 2 {
            return Err(Error::Domain(
                "two excitations need a tracked cap of at least 2".into(),
            ));
        }
        let mut amps = DVector::from_element(space.dim(), ZERO);
        let mut occ = vec![0u8; scheme.tracked_len()];
        for i in 0..n {
            for j in i..n {
                occ[i] += 1;
                occ[j] += 1;
                // a_i† a_j† |vac⟩ is |1_i 1_j⟩ for i ≠ j and √2 |2_i⟩ for i = j;
                // the i ≠ j pair appears twice in the double sum.
                let weight = if i == j {
                    c.get(i, i) * std::f64::consts::SQRT_2
                } else {
                    c.get(i, j) + c.get(j, i)
                };
                let idx = space.basis.index_of(&occ).ok_or_else(|| {
                    Error::Domain("register caps exclude a two-excitation state".into())
                })?;
                amps[idx] += weight;
                occ[i] -= 1;
                occ[j] -= 1;
            }
        }
        let norm = amps.norm();
        if norm == 0.0 {
            return Err(Error::Domain("zero coefficient matrix".into()));
        }
        amps /= C64::new(norm, 0.0);
        Ok(StateVector {
            space: space.clone(),
            amplitudes: amps,
        })
    }

    /// Inverse of [`StateVector::two_excitation_state`], at the state's own
    /// normalization.
    pub fn coeffs_from_state(&self) -> Result<SymmetricCoeffs> {
        let scheme = self.space.scheme();
        let n = scheme.register_levels;
        let mut c = DMatrix::from_element(n, n, ZERO);
        for (idx, occ) in self.space.basis.states().enumerate() {
            let amp = self.amplitudes[idx];
            if amp == ZERO {
                continue;
            }
            let register_total: usize = occ[..n].iter().map(|&k| k as usize).sum();
            let extras_empty = occ[n..].iter().all(|&k| k == 0);
            if register_total != 2 || !extras_empty {
                if amp.norm() > 1e-12 {
                    return Err(Error::Domain(format!(
                        "state has weight on {occ:?}, outside the two-excitation register sector"
                    )));
                }
                continue;
            }
            let occupied: Vec<usize> = (0..n).filter(|&k| occ[k] > 0).collect();
            match occupied.as_slice() {
                [i] => c[(*i, *i)] = amp / std::f64::consts::SQRT_2,
                [i, j] => {
                    c[(*i, *j)] = amp * 0.5;
                    c[(*j, *i)] = amp * 0.5;
                }
                _ => unreachable!("two excitations occupy one or two levels"),
            }
        }
        SymmetricCoeffs::new(c)
    }

    pub fn space(&self) -> &Arc<Space> {
        &self.space
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn amplitude(&self, occupation: &[u8]) -> C64 {
        self.space
            .basis
            .index_of(occupation)
            .map(|k| self.amplitudes[k])
            .unwrap_or(ZERO)
    }

    /// Amplitude of a register configuration with empty auxiliary levels.
    pub fn register_amplitude(&self, bits: &[u8]) -> C64 {
        let mut occ = vec![0u8; self.space.scheme().tracked_len()];
        occ[..bits.len()].copy_from_slice(bits);
        self.amplitude(&occ)
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        self.check_space(other)?;
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    /// `|⟨a|b⟩|²`.
    pub fn fidelity(&self, other: &StateVector) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr())
    }

    pub(crate) fn check_space(&self, other: &StateVector) -> Result<()> {
        if self.space.same_as(&other.space) {
            Ok(())
        } else {
            Err(Error::SchemeMismatch(
                "states live on different level schemes".into(),
            ))
        }
    }

    /// Multiplies each amplitude by `exp(i φ n_level)`.
    pub fn phase_on_occupation(&self, level: Level, phi: f64) -> Result<Self> {
        let pos = self.space.scheme().require(level)?;
        let amps = DVector::from_iterator(
            self.amplitudes.len(),
            self.amplitudes
                .iter()
                .zip(self.space.basis.states())
                .map(|(&a, occ)| a * C64::from_polar(1.0, phi * occ[pos] as f64)),
        );
        Ok(self.with_amplitudes(amps))
    }

    /// All branches of a projective measurement of `n_level`, each
    /// renormalized, in increasing outcome order.
    pub fn measure_occupation(&self, level: Level) -> Result<Vec<MeasurementBranch>> {
        let pos = self.space.scheme().require(level)?;
        let cap = self.space.scheme().level_caps()[pos];
        let total = self.amplitudes.norm_squared();
        if total == 0.0 {
            return Err(Error::Domain("cannot measure the zero vector".into()));
        }
        let mut branches = Vec::new();
        for outcome in 0..=cap {
            let projected = DVector::from_iterator(
                self.amplitudes.len(),
                self.amplitudes
                    .iter()
                    .zip(self.space.basis.states())
                    .map(|(&a, occ)| {
                        if occ[pos] as usize == outcome {
                            a
                        } else {
                            ZERO
                        }
                    }),
            );
            let weight = projected.norm_squared();
            if weight > 0.0 {
                let scale = C64::new(weight.sqrt(), 0.0);
                branches.push(MeasurementBranch {
                    outcome,
                    probability: weight / total,
                    state: self.with_amplitudes(projected / scale),
                });
            }
        }
        Ok(branches)
    }

    /// Draws one measurement outcome from a caller-supplied random stream.
    pub fn sample_occupation<R: Rng + ?Sized>(
        &self,
        level: Level,
        rng: &mut R,
    ) -> Result<MeasurementBranch> {
        let mut branches = self.measure_occupation(level)?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let last = branches.len() - 1;
        for (k, b) in branches.iter().enumerate() {
            acc += b.probability;
            if u < acc || k == last {
                return Ok(branches.swap_remove(k));
            }
        }
        unreachable!("measurement has at least one branch")
    }

    /// One line per nonzero amplitude: occupation vector, real part,
    /// imaginary part, both at 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let levels: Vec<String> = self
            .space
            .scheme()
            .levels()
            .iter()
            .map(|l| l.to_string())
            .collect();
        let _ = writeln!(out, "# levels: {}", levels.join(" "));
        for (amp, occ) in self.amplitudes.iter().zip(self.space.basis.states()) {
            if *amp == ZERO {
                continue;
            }
            let occ: Vec<String> = occ.iter().map(|n| n.to_string()).collect();
            let _ = writeln!(out, "{} {:.16e} {:.16e}", occ.join(" "), amp.re, amp.im);
        }
        out
    }

    /// Parses the format written by [`StateVector::to_text`].
    pub fn from_text(space: &Arc<Space>, text: &str) -> Result<Self> {
        let width = space.scheme().tracked_len();
        let mut amps = DVector::from_element(space.dim(), ZERO);
        for (lineno, line) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let trimmed = line.trim_start();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let tokens = tokenize(line);
            if tokens.len() != width + 2 {
                return Err(Error::parse(
                    lineno,
                    1,
                    format!(
                        "expected {} occupations and two floats, found {} fields",
                        width,
                        tokens.len()
                    ),
                ));
            }
            let mut occ = Vec::with_capacity(width);
            for &(col, tok) in &tokens[..width] {
                let n: u8 = tok.parse().map_err(|_| {
                    Error::parse(lineno, col, format!("invalid occupation `{tok}`"))
                })?;
                occ.push(n);
            }
            let parse_f = |(col, tok): (usize, &str)| -> Result<f64> {
                tok.parse()
                    .map_err(|_| Error::parse(lineno, col, format!("invalid number `{tok}`")))
            };
            let re = parse_f(tokens[width])?;
            let im = parse_f(tokens[width + 1])?;
            let idx = space.basis.index_of(&occ).ok_or_else(|| {
                Error::parse(
                    lineno,
                    tokens[0].0,
                    format!("occupation {occ:?} is outside the basis"),
                )
            })?;
            amps[idx] = C64::new(re, im);
        }
        StateVector::from_amplitudes(space.clone(), amps)
    }
}

/// Whitespace-separated tokens with their 1-based column.
pub(crate) fn tokenize(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (k, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((s + 1, &line[s..k]));
            }
        } else if start.is_none() {
            start = Some(k);
        }
    }
    if let Some(s) = start {
        out.push((s + 1, &line[s..]));
    }
    out
}
