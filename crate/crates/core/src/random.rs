//! Random-instance generators for states, unitaries, and channels.
//!
//! Channels are drawn as isometry columns of unitarized Gaussian matrices and
//! states as normalized Wishart products, so both cover full measure of their
//! respective sets.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::channels::{DensityOperator, KrausChannel};
use crate::linalg::{c, hermitian_part, outer, trace, ComplexMatrix, ComplexVector};

/// Matrix of i.i.d. standard complex Gaussian entries.
pub fn ginibre<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// `rows × cols` matrix with orthonormal columns (`rows ≥ cols`).
pub fn isometry<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> ComplexMatrix {
    assert!(rows >= cols, "isometry needs rows >= cols");
    let qr = ginibre(rng, rows, cols).qr();
    let r = qr.r();
    let mut q = qr.q();
    // phase fix makes the distribution Haar
    for k in 0..cols {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { c(1.0, 0.0) };
        for i in 0..rows {
            q[(i, k)] *= phase;
        }
    }
    q
}

/// Haar-random unitary.
pub fn unitary<R: Rng + ?Sized>(rng: &mut R, d: usize) -> ComplexMatrix {
    isometry(rng, d, d)
}

pub fn hermitian<R: Rng + ?Sized>(rng: &mut R, d: usize) -> ComplexMatrix {
    hermitian_part(&ginibre(rng, d, d))
}

/// Full-rank Wishart state `G G† / Tr(G G†)`.
pub fn density<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DensityOperator {
    density_of_rank(rng, d, d)
}

pub fn density_of_rank<R: Rng + ?Sized>(rng: &mut R, d: usize, rank: usize) -> DensityOperator {
    let g = ginibre(rng, d, rank);
    let w = &g * g.adjoint();
    let t = trace(&w);
    DensityOperator::from_matrix_unchecked(w / t)
}

pub fn pure_ket<R: Rng + ?Sized>(rng: &mut R, d: usize) -> ComplexVector {
    let v = ginibre(rng, d, 1).column(0).into_owned();
    let n = v.norm();
    v / c(n, 0.0)
}

pub fn pure_state<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DensityOperator {
    let v = pure_ket(rng, d);
    DensityOperator::from_matrix_unchecked(outer(&v, &v))
}

/// CPTP channel on dimension `d` with `rank` Kraus operators.
pub fn channel<R: Rng + ?Sized>(rng: &mut R, d: usize, rank: usize) -> KrausChannel {
    let v = isometry(rng, rank * d, d);
    let ops = (0..rank)
        .map(|k| v.rows(k * d, d).into_owned())
        .collect();
    KrausChannel::new(ops).expect("isometry blocks form a valid Kraus set")
}
