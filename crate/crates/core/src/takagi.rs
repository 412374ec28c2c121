//! Autonne–Takagi factorization and Raman reachability of two-excitation
//! states.
//!
//! A uniform single-atom transformation `a_i† → Σ_j U_ij a_j†` maps the
//! coefficient matrix of a two-excitation state by unitary congruence,
//! `c ↦ Uᵀ c U`. Two states are connected this way exactly when `c c̄` and
//! `c̃ c̃̄` share their spectrum, and the connecting unitary follows from the
//! Takagi factors of both matrices.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::fockspace::{SymmetricCoeffs, C64, ONE, ZERO};
use crate::pulses::Pulse;
use crate::scheme::Level;

/// Default tolerance on spectra in [`reachable`].
pub const REACHABILITY_TOLERANCE: f64 = 1e-9;

/// Relative gap below which eigenvalues of `A Ā` share a block.
const CLUSTER_GAP: f64 = 1e-6;

/// `A = V Σ Vᵀ` with `V` unitary and `Σ` nonnegative, descending.
#[derive(Clone, Debug)]
pub struct TakagiFactorization {
    pub v: DMatrix<C64>,
    pub sigma: Vec<f64>,
}

impl TakagiFactorization {
    pub fn reconstruct(&self) -> DMatrix<C64> {
        let n = self.sigma.len();
        let mut scaled = self.v.clone();
        for k in 0..n {
            let s = C64::new(self.sigma[k], 0.0);
            for i in 0..n {
                scaled[(i, k)] *= s;
            }
        }
        scaled * self.v.transpose()
    }

    pub fn unitarity_residual(&self) -> f64 {
        let n = self.v.ncols();
        (self.v.adjoint() * &self.v - DMatrix::<C64>::identity(n, n)).norm()
    }
}

fn conj(m: &DMatrix<C64>) -> DMatrix<C64> {
    m.map(|z| z.conj())
}

/// Eigenvalues and eigenvectors of a Hermitian matrix, sorted descending.
fn hermitian_eigen_desc(h: &DMatrix<C64>) -> Result<(Vec<f64>, DMatrix<C64>)> {
    let n = h.nrows();
    let sym = (h + h.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 100_000).ok_or_else(|| {
        Error::Numerical(format!("Hermitian eigendecomposition failed (dim {n})"))
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok((values, vectors))
}

/// Takagi factorization of a small symmetric block through the real
/// symmetric embedding `[[Re Z, Im Z], [Im Z, −Re Z]]`, whose eigenpairs
/// `(σ, [x; y])` with `σ > 0` give Takagi vectors `x + i y`.
fn block_takagi(z: &DMatrix<C64>) -> Result<(Vec<f64>, DMatrix<C64>)> {
    let m = z.nrows();
    let embed = DMatrix::<f64>::from_fn(2 * m, 2 * m, |i, j| {
        let (bi, bj) = (i / m, j / m);
        let e = z[(i % m, j % m)];
        match (bi, bj) {
            (0, 0) => e.re,
            (1, 1) => -e.re,
            _ => e.im,
        }
    });
    let embed = (&embed + embed.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(embed, f64::EPSILON, 100_000).ok_or_else(|| {
        Error::Numerical(format!(
            "embedding eigendecomposition failed (dim {})",
            2 * m
        ))
    })?;
    let mut order: Vec<usize> = (0..2 * m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let sigma: Vec<f64> = order[..m]
        .iter()
        .map(|&k| eig.eigenvalues[k].max(0.0))
        .collect();
    let v = DMatrix::from_fn(m, m, |i, j| {
        let col = order[j];
        C64::new(eig.eigenvectors[(i, col)], eig.eigenvectors[(i + m, col)])
    });
    Ok((sigma, v))
}

/// Modified Gram–Schmidt on the columns, in place.
fn orthonormalize(v: &mut DMatrix<C64>) {
    let n = v.ncols();
    for j in 0..n {
        for k in 0..j {
            let proj = v.column(k).dotc(&v.column(j));
            let ck = v.column(k).clone_owned();
            let mut cj = v.column_mut(j);
            cj -= ck * proj;
        }
        let norm = v.column(j).norm();
        if norm > 0.0 {
            v.column_mut(j).unscale_mut(norm);
        }
    }
}

/// Takagi factorization of a complex symmetric matrix.
///
/// The eigenvectors of the Hermitian matrix `A Ā` are grouped into blocks
/// of (nearly) equal eigenvalue. Each block frame `P` reduces `A` to the
/// small symmetric matrix `P† A P̄`, which is factorized on its own; the
/// block Takagi vectors are then lifted back through `P`. Exact zero blocks
/// keep the eigenvector frame.
pub fn takagi_decompose(a: &SymmetricCoeffs) -> Result<TakagiFactorization> {
    let n = a.dim();
    let am = a.matrix();
    let scale = am.norm();
    if scale == 0.0 {
        return Ok(canonicalize(DMatrix::identity(n, n), vec![0.0; n]));
    }
    let normalized = am.map(|z| z / scale);
    let h = &normalized * conj(&normalized);
    let (lambda, p) = hermitian_eigen_desc(&h)?;

    let mut v = DMatrix::from_element(n, n, ZERO);
    let mut sigma = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && lambda[end - 1] - lambda[end] <= CLUSTER_GAP {
            end += 1;
        }
        let frame = p.columns(start, end - start).clone_owned();
        let z = frame.adjoint() * &normalized * conj(&frame);
        let (block_sigma, block_v) = if z.norm() <= 1e-15 {
            (
                vec![0.0; end - start],
                DMatrix::identity(end - start, end - start),
            )
        } else {
            block_takagi(&z)?
        };
        let lifted = &frame * block_v;
        for (k, col) in (start..end).enumerate() {
            v.set_column(col, &lifted.column(k));
            sigma[col] = block_sigma[k] * scale;
        }
        start = end;
    }

    // Sorting across blocks keeps the descending order exact when block
    // values straddle a boundary.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| sigma[y].total_cmp(&sigma[x]).then(x.cmp(&y)));
    let mut v = DMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    let sigma: Vec<f64> = order.iter().map(|&k| sigma[k]).collect();
    orthonormalize(&mut v);

    let fact = canonicalize(v, sigma);
    let unitarity = fact.unitarity_residual();
    let residual = (fact.reconstruct() - am).norm();
    if unitarity > 1e-10 || residual > 1e-9 * scale.max(1.0) {
        return Err(Error::Numerical(format!(
            "Takagi factorization residuals too large: ‖V†V − I‖ = {unitarity:.3e}, ‖VΣVᵀ − A‖ = {residual:.3e}"
        )));
    }
    Ok(fact)
}

/// Fixes the remaining column freedom: the first component of magnitude
/// above 1e−12 gets a positive real part (a sign for σ > 0, a full phase
/// for σ = 0).
fn canonicalize(mut v: DMatrix<C64>, sigma: Vec<f64>) -> TakagiFactorization {
    let n = v.ncols();
    for j in 0..n {
        let Some(lead) = (0..v.nrows()).map(|i| v[(i, j)]).find(|z| z.norm() > 1e-12) else {
            continue;
        };
        let factor = if sigma[j] > 0.0 {
            if lead.re < 0.0 {
                -ONE
            } else {
                ONE
            }
        } else {
            lead.conj() / lead.norm()
        };
        for i in 0..v.nrows() {
            v[(i, j)] *= factor;
        }
    }
    TakagiFactorization { v, sigma }
}

/// Eigenvalues of `c c̄`, descending.
pub fn spectrum(c: &SymmetricCoeffs) -> Result<Vec<f64>> {
    let m = c.matrix();
    Ok(hermitian_eigen_desc(&(m * conj(m)))?.0)
}

/// Whether `c̃ = Uᵀ c U` has a unitary solution: the spectra of `c c̄` and
/// `c̃ c̃̄` agree entrywise within `tol`.
pub fn reachable(c: &SymmetricCoeffs, target: &SymmetricCoeffs, tol: f64) -> Result<bool> {
    if c.dim() != target.dim() {
        return Err(Error::Domain(format!(
            "dimension mismatch: {} vs {}",
            c.dim(),
            target.dim()
        )));
    }
    let a = spectrum(c)?;
    let b = spectrum(target)?;
    Ok(a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= tol))
}

/// Unitary `U = V̄ Ṽᵀ` with `Uᵀ c U = c̃`.
pub fn synthesize_u(c: &SymmetricCoeffs, target: &SymmetricCoeffs) -> Result<DMatrix<C64>> {
    if !reachable(c, target, REACHABILITY_TOLERANCE)? {
        return Err(Error::Domain(
            "target is not reachable by single-atom transformations".into(),
        ));
    }
    let f = takagi_decompose(c)?;
    let g = takagi_decompose(target)?;
    let u = conj(&f.v) * g.v.transpose();
    let residual = (u.transpose() * c.matrix() * &u - target.matrix()).norm();
    if residual > 1e-9 * target.matrix().norm().max(1.0) {
        return Err(Error::Numerical(format!(
            "congruence residual {residual:.3e} exceeds tolerance"
        )));
    }
    Ok(u)
}

/// One two-level rotation produced by [`compile_unitary`].
#[derive(Clone, Debug, PartialEq)]
pub struct RamanRotation {
    pub lower: usize,
    pub upper: usize,
    pub area: f64,
    pub phase: f64,
}

/// Raman pulses and a final light-shift layer implementing
/// `a_i† → Σ_j U_ij a_j†` on the register levels.
#[derive(Clone, Debug)]
pub struct CompiledUnitary {
    pub rotations: Vec<RamanRotation>,
    /// Per-level phases applied after the rotations.
    pub phases: Vec<f64>,
}

impl CompiledUnitary {
    /// Pulse list on register levels `1..=n`, skipping zero light shifts.
    pub fn pulses(&self) -> Vec<Pulse> {
        self.pulses_on(
            &(1..=self.phases.len())
                .map(Level::Register)
                .collect::<Vec<_>>(),
        )
    }

    /// Pulse list with matrix index `k` mapped to `levels[k]`.
    pub fn pulses_on(&self, levels: &[Level]) -> Vec<Pulse> {
        let mut out: Vec<Pulse> = self
            .rotations
            .iter()
            .map(|r| Pulse::raman(levels[r.lower], levels[r.upper], r.area, r.phase))
            .collect();
        for (k, &phi) in self.phases.iter().enumerate() {
            if phi != 0.0 {
                out.push(Pulse::light_shift(levels[k], phi));
            }
        }
        out
    }

    /// Single-atom operator `W` (with `W|i⟩ = Σ_j U_ij |j⟩`) that the pulses
    /// implement.
    pub fn single_atom_operator(&self) -> DMatrix<C64> {
        let n = self.phases.len();
        let mut w = DMatrix::<C64>::identity(n, n);
        for r in &self.rotations {
            let g = rotation_matrix(n, r);
            w = g * w;
        }
        let d = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                C64::from_polar(1.0, self.phases[i])
            } else {
                ZERO
            }
        });
        d * w
    }
}

/// Single-atom matrix of a resonant Raman pulse of area `θ` and phase `φ`:
/// `cos(θ/2)` on the diagonal, `−i e^{iφ} sin(θ/2)` for `lower → upper`.
fn rotation_matrix(n: usize, r: &RamanRotation) -> DMatrix<C64> {
    let (s, c) = (0.5 * r.area).sin_cos();
    let mut g = DMatrix::<C64>::identity(n, n);
    let minus_i = C64::new(0.0, -1.0);
    g[(r.lower, r.lower)] = C64::new(c, 0.0);
    g[(r.upper, r.upper)] = C64::new(c, 0.0);
    g[(r.upper, r.lower)] = minus_i * C64::from_polar(s, r.phase);
    g[(r.lower, r.upper)] = minus_i * C64::from_polar(s, -r.phase);
    g
}

/// Decomposes a unitary into resonant two-level Raman rotations followed by
/// per-level light shifts.
///
/// Elimination runs column by column on `W† = Ū`, zeroing sub-diagonal
/// entries from the bottom up with rotations on `(column, row)`. Every
/// rotation is of the resonant-Raman form, and the leftover diagonal becomes
/// the light-shift layer.
pub fn compile_unitary(u: &DMatrix<C64>) -> Result<CompiledUnitary> {
    if !u.is_square() {
        return Err(Error::Domain("unitary must be square".into()));
    }
    let n = u.nrows();
    let residual = (u.adjoint() * u - DMatrix::<C64>::identity(n, n)).norm();
    if residual > 1e-10 {
        return Err(Error::Domain(format!(
            "matrix is not unitary (‖U†U − I‖ = {residual:.3e})"
        )));
    }
    let mut m = conj(u);
    let mut rotations = Vec::new();
    for j in 0..n {
        for i in (j + 1..n).rev() {
            let x = m[(j, j)];
            let y = m[(i, j)];
            if y.norm() <= 1e-15 {
                m[(i, j)] = ZERO;
                continue;
            }
            let area = 2.0 * y.norm().atan2(x.norm());
            let phase = if x.norm() == 0.0 {
                0.0
            } else {
                y.arg() - x.arg() - 0.5 * PI
            };
            let rot = RamanRotation {
                lower: j,
                upper: i,
                area,
                phase: wrap(phase),
            };
            m = rotation_matrix(n, &rot) * m;
            m[(i, j)] = ZERO;
            rotations.push(rot);
        }
    }
    // m is now diagonal with unit-modulus entries; W = m̄ · (rotations).
    let phases = (0..n).map(|k| wrap(-m[(k, k)].arg())).collect();
    Ok(CompiledUnitary { rotations, phases })
}

fn wrap(angle: f64) -> f64 {
    let a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a - 2.0 * PI
    } else {
        a
    }
}

/// Parses a complex matrix written row by row with whitespace-separated
/// `a+bi` tokens (`1`, `-0.5i`, `0.25-1e-3i`, `i`).
pub fn parse_matrix(text: &str) -> Result<DMatrix<C64>> {
    let mut rows: Vec<Vec<C64>> = Vec::new();
    let mut first_line = 0;
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let content = line.split('#').next().unwrap_or("");
        let tokens = crate::fockspace::tokenize(content);
        if tokens.is_empty() {
            continue;
        }
        if rows.is_empty() {
            first_line = lineno;
        }
        let row = tokens
            .iter()
            .map(|&(col, tok)| {
                parse_complex(tok).ok_or_else(|| {
                    Error::parse(lineno, col, format!("invalid complex number `{tok}`"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(prev) = rows.first() {
            if prev.len() != row.len() {
                return Err(Error::parse(
                    lineno,
                    1,
                    format!(
                        "row has {} entries, expected {} (from line {first_line})",
                        row.len(),
                        prev.len()
                    ),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse(1, 1, "empty matrix"));
    }
    let (r, c) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn parse_complex(tok: &str) -> Option<C64> {
    let tok = tok.trim();
    if tok.is_empty() {
        return None;
    }
    if let Some(body) = tok.strip_suffix('i') {
        // split at the last sign that is not part of an exponent
        let bytes = body.as_bytes();
        let mut split = None;
        for k in (1..bytes.len()).rev() {
            if (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E') {
                split = Some(k);
                break;
            }
        }
        let (re, im) = match split {
            Some(k) => (body[..k].parse::<f64>().ok()?, &body[k..]),
            None => (0.0, body),
        };
        let im = match im {
            "" | "+" => 1.0,
            "-" => -1.0,
            s => s.parse::<f64>().ok()?,
        };
        Some(C64::new(re, im))
    } else {
        tok.parse::<f64>().ok().map(|re| C64::new(re, 0.0))
    }
}

/// Writes a matrix in the format read by [`parse_matrix`].
pub fn format_matrix(m: &DMatrix<C64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .map(|j| format!("{:.16e}{:+.16e}i", m[(i, j)].re, m[(i, j)].im))
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}
