//! Dense complex linear algebra used by every other module.
//!
//! Matrices are `nalgebra` dynamic matrices of `Complex64`. The vectorization
//! convention is row-major throughout: `vec(|ψ⟩⟨φ|) = |ψ⟩ ⊗ conj(|φ⟩)`, which
//! makes `(A ⊗ B) vec(X) = vec(A X Bᵀ)` and `vec(Φ(ρ)) = (Σ K ⊗ conj(K)) vec(ρ)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{shape_err, Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;

/// Absolute max-entry tolerance used to accept a matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(d: usize) -> ComplexMatrix {
    ComplexMatrix::identity(d, d)
}

pub fn zeros(rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::zeros(rows, cols)
}

pub fn sigma_x() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn sigma_y() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
}

pub fn sigma_z() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

/// `|1⟩⟨0|`.
pub fn sigma_plus() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[ZERO, ZERO, ONE, ZERO])
}

/// `|0⟩⟨1|`.
pub fn sigma_minus() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO])
}

/// Computational basis ket `|i⟩` in dimension `d`.
pub fn ket(d: usize, i: usize) -> ComplexVector {
    let mut v = ComplexVector::zeros(d);
    v[i] = ONE;
    v
}

/// Matrix unit `|i⟩⟨j|` of size `d × d`.
pub fn matrix_unit(d: usize, i: usize, j: usize) -> ComplexMatrix {
    let mut m = zeros(d, d);
    m[(i, j)] = ONE;
    m
}

pub fn outer(a: &ComplexVector, b: &ComplexVector) -> ComplexMatrix {
    a * b.adjoint()
}

pub fn trace(m: &ComplexMatrix) -> Complex64 {
    m.diagonal().sum()
}

/// Hilbert–Schmidt inner product `Tr(A† B)`.
pub fn hs_inner(a: &ComplexMatrix, b: &ComplexMatrix) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Largest absolute entry.
pub fn max_abs(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn is_finite(m: &ComplexMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn is_square(m: &ComplexMatrix) -> bool {
    m.nrows() == m.ncols()
}

pub fn is_hermitian(m: &ComplexMatrix, tol: f64) -> bool {
    is_square(m) && max_abs_diff(m, &m.adjoint()) <= tol
}

pub fn is_unitary(m: &ComplexMatrix, tol: f64) -> bool {
    is_square(m) && max_abs_diff(&(m.adjoint() * m), &identity(m.nrows())) <= tol
}

/// `(H + H†) / 2`.
pub fn hermitian_part(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Row-major vectorization.
pub fn vec(m: &ComplexMatrix) -> ComplexVector {
    let (rows, cols) = m.shape();
    ComplexVector::from_fn(rows * cols, |k, _| m[(k / cols, k % cols)])
}

/// Inverse of [`vec`] for a `rows × cols` shape.
pub fn unvec(v: &ComplexVector, rows: usize, cols: usize) -> Result<ComplexMatrix> {
    if v.len() != rows * cols {
        return shape_err(format!(
            "cannot unvec a vector of length {} into {rows}x{cols}",
            v.len()
        ));
    }
    Ok(ComplexMatrix::from_fn(rows, cols, |i, j| v[i * cols + j]))
}

/// Kronecker product with block structure `A_ij · B`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// Kronecker product of a sequence of factors, left to right.
pub fn kron_all<'a>(factors: impl IntoIterator<Item = &'a ComplexMatrix>) -> ComplexMatrix {
    factors
        .into_iter()
        .fold(identity(1), |acc, f| acc.kronecker(f))
}

/// Integer square root of `n`, if `n` is a perfect square.
pub fn exact_sqrt(n: usize) -> Option<usize> {
    let r = (n as f64).sqrt().round() as usize;
    (r * r == n).then_some(r)
}

/// Reshuffle of a `d² × d²` matrix: `(M^R)_{(i,j),(k,l)} = M_{(i,k),(j,l)}`.
pub fn reshuffle(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = m.nrows();
    if !is_square(m) {
        return shape_err(format!("reshuffle needs a square matrix, got {:?}", m.shape()));
    }
    let d = exact_sqrt(n).ok_or_else(|| {
        Error::Shape(format!("reshuffle needs a d²×d² matrix, got dimension {n}"))
    })?;
    Ok(ComplexMatrix::from_fn(n, n, |row, col| {
        let (i, j) = (row / d, row % d);
        let (k, l) = (col / d, col % d);
        m[(i * d + k, j * d + l)]
    }))
}

/// Matrix exponential by scaling and squaring with a Padé kernel.
pub fn matrix_exponential(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !is_square(a) {
        return shape_err(format!("exponential of non-square {:?} matrix", a.shape()));
    }
    Ok(a.exp())
}

/// Spectral decomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Sorted descending.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in the order of `values`.
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    pub fn vector(&self, k: usize) -> ComplexVector {
        self.vectors.column(k).into_owned()
    }

    /// `V f(Λ) V†`.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (k, &lam) in self.values.iter().enumerate() {
            let s = f(lam);
            for r in 0..n {
                scaled[(r, k)] *= s;
            }
        }
        scaled * self.vectors.adjoint()
    }
}

/// Eigendecomposition of a Hermitian matrix.
///
/// The input is symmetrized as `(H + H†)/2` after the Hermiticity check, and
/// eigenvalues are returned in descending order with ties kept in the order
/// the solver produced them.
pub fn hermitian_eig(h: &ComplexMatrix) -> Result<HermitianEigen> {
    if !is_square(h) {
        return shape_err(format!("eigendecomposition of non-square {:?} matrix", h.shape()));
    }
    let asym = max_abs_diff(h, &h.adjoint());
    if asym > HERMITIAN_TOL {
        return Err(Error::Domain(format!(
            "matrix is not Hermitian (max |H - H†| = {asym:e})"
        )));
    }
    let eig = hermitian_part(h).symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    // stable sort keeps ties in original index order
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = ComplexMatrix::from_columns(
        &order
            .iter()
            .map(|&k| eig.eigenvectors.column(k))
            .collect::<Vec<_>>(),
    );
    Ok(HermitianEigen { values, vectors })
}

/// Principal square root of a positive semidefinite matrix.
///
/// Eigenvalues below `1e-14 · λ_max` are treated as zero.
pub fn psd_sqrt(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let eig = hermitian_eig(a)?;
    let floor = 1e-14 * eig.values.first().copied().unwrap_or(0.0).max(0.0);
    Ok(eig.map_values(|l| if l > floor { l.sqrt() } else { 0.0 }))
}

/// Sum of singular values.
pub fn nuclear_norm(a: &ComplexMatrix) -> f64 {
    a.singular_values().iter().sum()
}

/// `(1/2) ‖A − B‖₁` for Hermitian `A`, `B`.
pub fn trace_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return shape_err(format!("trace distance of {:?} and {:?}", a.shape(), b.shape()));
    }
    let eig = hermitian_eig(&(a - b))?;
    Ok(0.5 * eig.values.iter().map(|l| l.abs()).sum::<f64>())
}
