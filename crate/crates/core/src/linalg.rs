//! Dense real linear algebra for states and density operators.
//!
//! Every state and gate this crate deals with (X, Z, H, CNOT, controlled-XOR)
//! has real matrix elements, so amplitudes are `f64` and density operators are
//! real symmetric matrices. There is no complex support.
//!
//! Spectra come from a cyclic Jacobi eigensolver. Operators built from bit-flip
//! permutations are additionally diagonal in the Walsh-Hadamard basis; see
//! [`walsh_spectrum`] for the fast route used on operators too large for Jacobi.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the side length of any allocated matrix.
pub const DEFAULT_DIM_CAP: usize = 1 << 16;

const NORM_TOLERANCE: f64 = 1e-9;
const SYMMETRY_TOLERANCE: f64 = 1e-12;
const TRACE_TOLERANCE: f64 = 1e-10;
const PSD_TOLERANCE: f64 = 1e-10;

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_RELATIVE_OFF: f64 = 1e-13;

fn check_pow2(len: usize) -> Result<usize> {
    if len == 0 || !len.is_power_of_two() {
        return Err(Error::NotPowerOfTwo { len });
    }
    Ok(len.trailing_zeros() as usize)
}

/// Unit-norm real amplitude vector over `m` qubits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    amplitudes: Vec<f64>,
    qubits: usize,
}

impl StateVector {
    pub fn new(amplitudes: Vec<f64>) -> Result<Self> {
        let qubits = check_pow2(amplitudes.len())?;
        let norm = amplitudes.iter().map(|a| a * a).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::NotNormalized { norm });
        }
        Ok(Self { amplitudes, qubits })
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(qubits: usize, index: usize) -> Result<Self> {
        let dim = 1usize << qubits;
        if index >= dim {
            return Err(Error::InvalidParameter(format!("basis index {index} out of range for {qubits} qubits")));
        }
        let mut amplitudes = vec![0.0; dim];
        amplitudes[index] = 1.0;
        Ok(Self { amplitudes, qubits })
    }

    /// Skips the normalisation check; callers guarantee unit norm.
    pub(crate) fn from_raw(amplitudes: Vec<f64>) -> Self {
        let qubits = amplitudes.len().trailing_zeros() as usize;
        debug_assert!(amplitudes.len().is_power_of_two());
        Self { amplitudes, qubits }
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<f64> {
        self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &StateVector) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { left: self.dim(), right: other.dim() });
        }
        Ok(self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a * b).sum())
    }

    /// Indices with amplitude magnitude above `tol`, ascending.
    pub fn support(&self, tol: f64) -> Vec<usize> {
        self.amplitudes
            .iter()
            .enumerate()
            .filter(|(_, a)| a.abs() > tol)
            .map(|(j, _)| j)
            .collect()
    }

    /// True if the vectors agree entrywise up to an overall sign.
    pub fn equals_up_to_sign(&self, other: &StateVector, tol: f64) -> bool {
        if self.dim() != other.dim() {
            return false;
        }
        let same = self.amplitudes.iter().zip(&other.amplitudes).all(|(a, b)| (a - b).abs() <= tol);
        let flipped = self.amplitudes.iter().zip(&other.amplitudes).all(|(a, b)| (a + b).abs() <= tol);
        same || flipped
    }
}

/// Real symmetric `d x d` matrix, dense, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymmetricMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![0.0; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = d;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch { left: dim, right: row.len() });
            }
            data.extend_from_slice(row);
        }
        Self::from_row_major(dim, data)
    }

    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch { left: dim * dim, right: data.len() });
        }
        let m = Self { dim, data };
        let deviation = m.asymmetry();
        let scale = m.max_abs().max(1.0);
        if deviation > SYMMETRY_TOLERANCE * scale {
            return Err(Error::NotSymmetric { deviation });
        }
        Ok(m)
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self::from_row_major(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Adds `weight * v v^T`, with `v` given by its sparse `(index, value)` entries.
    pub(crate) fn add_sparse_outer(&mut self, entries: &[(usize, f64)], weight: f64) {
        for &(i, a) in entries {
            let row = i * self.dim;
            for &(j, b) in entries {
                self.data[row + j] += weight * a * b;
            }
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in i + 1..self.dim {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn scale(&self, factor: f64) -> SymmetricMatrix {
        Self { dim: self.dim, data: self.data.iter().map(|x| x * factor).collect() }
    }

    pub fn add(&self, other: &SymmetricMatrix) -> Result<SymmetricMatrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &SymmetricMatrix) -> Result<SymmetricMatrix> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add_assign_scaled(&mut self, other: &SymmetricMatrix, factor: f64) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { left: self.dim, right: other.dim });
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
        Ok(())
    }

    fn zip_with(&self, other: &SymmetricMatrix, f: impl Fn(f64, f64) -> f64) -> Result<SymmetricMatrix> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { left: self.dim, right: other.dim });
        }
        Ok(Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn max_abs_diff(&self, other: &SymmetricMatrix) -> Result<f64> {
        Ok(self.sub(other)?.max_abs())
    }

    /// `v^T M v`.
    pub fn quadratic_form(&self, v: &[f64]) -> Result<f64> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch { left: self.dim, right: v.len() });
        }
        Ok((0..self.dim)
            .map(|i| v[i] * self.row(i).iter().zip(v).map(|(m, x)| m * x).sum::<f64>())
            .sum())
    }

    pub fn to_json(&self) -> MatrixJson {
        MatrixJson { dim: self.dim, rows: self.rows() }
    }
}

/// `{"dim": d, "rows": [[...], ...]}` debugging export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub dim: usize,
    pub rows: Vec<Vec<f64>>,
}

impl TryFrom<MatrixJson> for SymmetricMatrix {
    type Error = Error;

    fn try_from(json: MatrixJson) -> Result<Self> {
        if json.rows.len() != json.dim {
            return Err(Error::DimensionMismatch { left: json.dim, right: json.rows.len() });
        }
        SymmetricMatrix::from_rows(&json.rows)
    }
}

/// Unit-trace, positive semidefinite [`SymmetricMatrix`] over `m` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: SymmetricMatrix,
    qubits: usize,
}

impl DensityMatrix {
    /// Checks symmetry, power-of-two dimension, unit trace and the PSD floor.
    pub fn new(matrix: SymmetricMatrix) -> Result<Self> {
        let rho = Self::from_ensemble(matrix)?;
        let min = eigenvalues_symmetric(&rho.matrix)?.last().copied().unwrap_or(0.0);
        if min < -PSD_TOLERANCE {
            return Err(Error::InvalidParameter(format!("matrix is not PSD (min eigenvalue {min:e})")));
        }
        Ok(rho)
    }

    /// For convex combinations of pure states, which are PSD by construction.
    /// Checks everything except the spectrum.
    pub(crate) fn from_ensemble(matrix: SymmetricMatrix) -> Result<Self> {
        let qubits = check_pow2(matrix.dim())?;
        let trace = matrix.trace();
        if (trace - 1.0).abs() > TRACE_TOLERANCE {
            return Err(Error::NotUnitTrace { trace });
        }
        Ok(Self { matrix, qubits })
    }

    /// Maximally mixed state `I / 2^m`.
    pub fn maximally_mixed(qubits: usize) -> Self {
        let dim = 1usize << qubits;
        Self { matrix: SymmetricMatrix::identity(dim).scale(1.0 / dim as f64), qubits }
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &SymmetricMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> SymmetricMatrix {
        self.matrix
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    /// Born probability `⟨v|ρ|v⟩`.
    pub fn expectation(&self, v: &StateVector) -> Result<f64> {
        self.matrix.quadratic_form(v.amplitudes())
    }
}

/// `|v⟩⟨v|`.
pub fn outer(v: &StateVector) -> Result<DensityMatrix> {
    let norm = v.norm();
    if (norm - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::NotNormalized { norm });
    }
    let dim = v.dim();
    let a = v.amplitudes();
    let mut m = SymmetricMatrix::zeros(dim);
    for i in 0..dim {
        for j in 0..dim {
            m.data[i * dim + j] = a[i] * a[j];
        }
    }
    Ok(DensityMatrix { matrix: m, qubits: v.qubits() })
}

pub fn kron(a: &SymmetricMatrix, b: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    kron_capped(a, b, DEFAULT_DIM_CAP)
}

pub fn kron_capped(a: &SymmetricMatrix, b: &SymmetricMatrix, cap: usize) -> Result<SymmetricMatrix> {
    let dim = a
        .dim
        .checked_mul(b.dim)
        .ok_or(Error::DimensionCap { dim: usize::MAX, cap })?;
    if dim > cap {
        return Err(Error::DimensionCap { dim, cap });
    }
    let mut out = SymmetricMatrix::zeros(dim);
    for i in 0..a.dim {
        for j in 0..a.dim {
            let aij = a.get(i, j);
            if aij == 0.0 {
                continue;
            }
            for k in 0..b.dim {
                let row = (i * b.dim + k) * dim + j * b.dim;
                for (slot, bkl) in out.data[row..row + b.dim].iter_mut().zip(b.row(k)) {
                    *slot = aij * bkl;
                }
            }
        }
    }
    Ok(out)
}

/// `m^{⊗power}`; the zeroth power is the 1x1 matrix `[1]`.
pub fn kron_power(m: &SymmetricMatrix, power: usize, cap: usize) -> Result<SymmetricMatrix> {
    let mut acc = SymmetricMatrix::identity(1);
    for _ in 0..power {
        acc = kron_capped(&acc, m, cap)?;
    }
    Ok(acc)
}

/// Eigen-decomposition of a real symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Descending.
    pub values: Vec<f64>,
    /// `vectors[i]` is the unit eigenvector for `values[i]`.
    pub vectors: Vec<Vec<f64>>,
    pub sweeps: usize,
}

impl SymmetricEigen {
    /// `Q Λ Q^T`.
    pub fn reconstruct(&self) -> SymmetricMatrix {
        let dim = self.values.len();
        let mut m = SymmetricMatrix::zeros(dim);
        for (lambda, v) in self.values.iter().zip(&self.vectors) {
            let entries: Vec<(usize, f64)> = v.iter().copied().enumerate().collect();
            m.add_sparse_outer(&entries, *lambda);
        }
        m
    }
}

pub fn eigenvalues_symmetric(m: &SymmetricMatrix) -> Result<Vec<f64>> {
    Ok(jacobi(m, false)?.values)
}

pub fn eigen_symmetric(m: &SymmetricMatrix) -> Result<SymmetricEigen> {
    jacobi(m, true)
}

/// Cyclic Jacobi: sweep every off-diagonal pair, rotating it to zero, until the
/// off-diagonal Frobenius norm drops below `1e-13 * ||M||_F`.
fn jacobi(m: &SymmetricMatrix, want_vectors: bool) -> Result<SymmetricEigen> {
    let n = m.dim;
    let deviation = m.asymmetry();
    if deviation > SYMMETRY_TOLERANCE * m.max_abs().max(1.0) {
        return Err(Error::NotSymmetric { deviation });
    }
    let mut a = m.data.clone();
    // Row r of `vt` is the r-th eigenvector; rows keep the updates contiguous.
    let mut vt = if want_vectors { SymmetricMatrix::identity(n).data } else { Vec::new() };
    let frob = m.frobenius();
    let target = JACOBI_RELATIVE_OFF * frob;
    let skip = 1e-18 * frob;

    let off_norm = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i * n + j] * a[i * n + j];
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    while off_norm(&a) > target {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence { sweeps });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() <= skip {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[p * n + k];
                    let akq = a[q * n + k];
                    let new_p = c * akp - s * akq;
                    let new_q = s * akp + c * akq;
                    a[p * n + k] = new_p;
                    a[k * n + p] = new_p;
                    a[q * n + k] = new_q;
                    a[k * n + q] = new_q;
                }
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                if want_vectors {
                    let (head, tail) = vt.split_at_mut(q * n);
                    let vp = &mut head[p * n..(p + 1) * n];
                    let vq = &mut tail[..n];
                    for (x, y) in vp.iter_mut().zip(vq.iter_mut()) {
                        let (xp, xq) = (*x, *y);
                        *x = c * xp - s * xq;
                        *y = s * xp + c * xq;
                    }
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = if want_vectors {
        order.iter().map(|&i| vt[i * n..(i + 1) * n].to_vec()).collect()
    } else {
        Vec::new()
    };
    Ok(SymmetricEigen { values, vectors, sweeps })
}

/// `tr|M|`, the sum of absolute eigenvalues.
pub fn trace_norm(m: &SymmetricMatrix) -> Result<f64> {
    Ok(eigenvalues_symmetric(m)?.iter().map(|x| x.abs()).sum())
}

/// `½ tr|ρ − σ|`.
pub fn trace_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    let diff = rho.matrix.sub(&sigma.matrix)?;
    Ok((0.5 * trace_norm(&diff)?).clamp(0.0, 1.0))
}

/// Optimal equal-prior success probability for telling `rho` from `sigma`.
pub fn helstrom_success(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    Ok(0.5 + 0.5 * trace_distance(rho, sigma)?)
}

/// In-place unnormalised fast Walsh-Hadamard transform.
pub fn fwht(v: &mut [f64]) {
    let n = v.len();
    debug_assert!(n.is_power_of_two());
    let mut h = 1;
    while h < n {
        for block in (0..n).step_by(2 * h) {
            for j in block..block + h {
                let (x, y) = (v[j], v[j + h]);
                v[j] = x + y;
                v[j + h] = x - y;
            }
        }
        h *= 2;
    }
}

/// Spectrum of a matrix that is diagonal in the Walsh-Hadamard basis.
///
/// Computes `W M W` with `W = H^{⊗m}` (normalised), rejects the matrix if any
/// off-diagonal entry exceeds `1e-10 * max(1, ||M||_max)`, and returns the
/// diagonal in Walsh order. Sums of bit-flip permutation matrices, such as the
/// ensemble operators averaged over a one-time key, pass this check.
pub fn walsh_spectrum(m: &SymmetricMatrix) -> Result<Vec<f64>> {
    let dim = m.dim;
    check_pow2(dim)?;
    let mut t = m.data.clone();
    for row in t.chunks_mut(dim) {
        fwht(row);
    }
    let mut col = vec![0.0; dim];
    for j in 0..dim {
        for i in 0..dim {
            col[i] = t[i * dim + j];
        }
        fwht(&mut col);
        for i in 0..dim {
            t[i * dim + j] = col[i];
        }
    }
    let norm = 1.0 / dim as f64;
    let mut residual = 0.0f64;
    let mut diag = Vec::with_capacity(dim);
    for i in 0..dim {
        for j in 0..dim {
            let x = t[i * dim + j] * norm;
            if i == j {
                diag.push(x);
            } else {
                residual = residual.max(x.abs());
            }
        }
    }
    if residual > 1e-10 * m.max_abs().max(1.0) {
        return Err(Error::NotWalshDiagonal { residual });
    }
    Ok(diag)
}

/// Kronecker product of two diagonals.
pub fn kron_diagonal(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().flat_map(|&x| b.iter().map(move |&y| x * y)).collect()
}

/// CSV with header `index,eigenvalue`.
pub fn eigenvalues_csv(values: &[f64]) -> String {
    let mut out = String::from("index,eigenvalue\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{i},{v:e}");
    }
    out
}
