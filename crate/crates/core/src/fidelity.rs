//! Fidelity, superfidelity and their channel versions.
//!
//! The channel superfidelity of `Φ = {Aᵢ}` and `Ψ = {Bⱼ}` on input `σ` is
//!
//! ```text
//! G_ch = Σᵢⱼ |Tr σAᵢ†Bⱼ|² + √(1 − Σᵢⱼ |Tr σAᵢ†Aⱼ|²) · √(1 − Σᵢⱼ |Tr σBᵢ†Bⱼ|²)
//! ```
//!
//! which equals the superfidelity of the extended outputs
//! `(Φ ⊗ 1)(|ζ⟩⟨ζ|)`, `(Ψ ⊗ 1)(|ζ⟩⟨ζ|)` for every purification `ζ` of `σ`.
//! The `*_oracle` functions evaluate that definition directly.

use std::fmt;

use crate::channels::{erasure_channel, purify, DensityOperator, KrausChannel};
use crate::error::{shape_err, Error, Result};
use crate::linalg::{
    self, hs_inner, is_hermitian, is_unitary, matrix_exponential, nuclear_norm, psd_sqrt, trace,
    ComplexMatrix, HERMITIAN_TOL, I,
};

/// A similarity measure in `[0, 1]`; values are clamped on construction.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SimilarityValue(f64);

impl SimilarityValue {
    pub fn new(value: f64) -> Self {
        Self(value.clamp(0.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<SimilarityValue> for f64 {
    fn from(v: SimilarityValue) -> f64 {
        v.0
    }
}

impl fmt::Display for SimilarityValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

/// Coefficient `c₁` of the linear term in `G_ch ≈ 1 − c₁ ε`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SensitivityCoefficient(f64);

impl SensitivityCoefficient {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Purity deficits below this are round-off on a pure state.
pub const PURITY_FLOOR: f64 = 1e-13;

/// `1 − purity`, with deficits under [`PURITY_FLOOR`] set to zero so that a
/// pure state contributes an exact zero under the square root.
fn mixedness(purity: f64) -> f64 {
    let deficit = 1.0 - purity;
    if deficit < PURITY_FLOOR {
        0.0
    } else {
        deficit
    }
}

fn same_dim(a: &DensityOperator, b: &DensityOperator) -> Result<()> {
    if a.dim() != b.dim() {
        return shape_err(format!("state dimensions differ: {} vs {}", a.dim(), b.dim()));
    }
    Ok(())
}

fn check_channel(ch: &KrausChannel, sigma: &DensityOperator) -> Result<()> {
    if ch.d_in() != ch.d_out() || ch.d_in() != sigma.dim() {
        return shape_err(format!(
            "channel {}->{} does not act on states of dimension {}",
            ch.d_in(),
            ch.d_out(),
            sigma.dim()
        ));
    }
    Ok(())
}

fn check_hermitian(h: &ComplexMatrix, d: usize) -> Result<()> {
    if h.shape() != (d, d) {
        return shape_err(format!("Hamiltonian {:?} does not act on dimension {d}", h.shape()));
    }
    if !is_hermitian(h, HERMITIAN_TOL) {
        return Err(Error::Domain("Hamiltonian is not Hermitian".into()));
    }
    Ok(())
}

/// `F(A, B) = ‖√A √B‖₁`.
pub fn fidelity(a: &DensityOperator, b: &DensityOperator) -> Result<SimilarityValue> {
    same_dim(a, b)?;
    let sa = psd_sqrt(a.matrix())?;
    let sb = psd_sqrt(b.matrix())?;
    Ok(SimilarityValue::new(nuclear_norm(&(sa * sb))))
}

/// `G(ρ, σ) = Tr ρσ + √(1 − Tr ρ²) √(1 − Tr σ²)`.
pub fn superfidelity(rho: &DensityOperator, sigma: &DensityOperator) -> Result<SimilarityValue> {
    same_dim(rho, sigma)?;
    let overlap = hs_inner(rho.matrix(), sigma.matrix()).re;
    Ok(SimilarityValue::new(
        overlap + mixedness(rho.purity()).sqrt() * mixedness(sigma.purity()).sqrt(),
    ))
}

/// `F_ch(Φ; σ) = √(Σᵢ |Tr σAᵢ|²)`.
pub fn channel_fidelity(ch: &KrausChannel, sigma: &DensityOperator) -> Result<SimilarityValue> {
    check_channel(ch, sigma)?;
    let s: f64 = ch
        .operators()
        .iter()
        .map(|a| trace(&(sigma.matrix() * a)).norm_sqr())
        .sum();
    Ok(SimilarityValue::new(s.sqrt()))
}

/// `Σᵢⱼ |Tr σAᵢ†Bⱼ|²`.
fn pair_overlap(a: &[ComplexMatrix], b: &[ComplexMatrix], sigma: &ComplexMatrix) -> f64 {
    // Tr(σ A† B) = ⟨A, Bσ⟩_HS
    let b_sigma: Vec<_> = b.iter().map(|bj| bj * sigma).collect();
    a.iter()
        .flat_map(|ai| b_sigma.iter().map(move |bs| hs_inner(ai, bs).norm_sqr()))
        .sum()
}

/// The three trace sums entering the channel superfidelity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuperfidelityTerms {
    /// `Σᵢⱼ |Tr σAᵢ†Bⱼ|²`
    pub cross: f64,
    /// `Σᵢⱼ |Tr σAᵢ†Aⱼ|²`, the purity of `Φ`'s extended output.
    pub purity_a: f64,
    /// `Σᵢⱼ |Tr σBᵢ†Bⱼ|²`
    pub purity_b: f64,
}

impl SuperfidelityTerms {
    pub fn value(&self) -> SimilarityValue {
        SimilarityValue::new(
            self.cross + mixedness(self.purity_a).sqrt() * mixedness(self.purity_b).sqrt(),
        )
    }
}

pub fn channel_superfidelity_terms(
    a: &KrausChannel,
    b: &KrausChannel,
    sigma: &DensityOperator,
) -> Result<SuperfidelityTerms> {
    check_channel(a, sigma)?;
    check_channel(b, sigma)?;
    let s = sigma.matrix();
    Ok(SuperfidelityTerms {
        cross: pair_overlap(a.operators(), b.operators(), s),
        purity_a: pair_overlap(a.operators(), a.operators(), s),
        purity_b: pair_overlap(b.operators(), b.operators(), s),
    })
}

/// Channel superfidelity `G_ch(Φ, Ψ; σ)` evaluated from the Kraus sets.
pub fn channel_superfidelity(
    a: &KrausChannel,
    b: &KrausChannel,
    sigma: &DensityOperator,
) -> Result<SimilarityValue> {
    Ok(channel_superfidelity_terms(a, b, sigma)?.value())
}

/// Superfidelity of the two extended outputs for one explicit purification
/// of `σ` on a `d_z`-dimensional environment.
pub fn channel_superfidelity_oracle(
    a: &KrausChannel,
    b: &KrausChannel,
    sigma: &DensityOperator,
    d_z: usize,
    u: Option<&ComplexMatrix>,
) -> Result<SimilarityValue> {
    check_channel(a, sigma)?;
    check_channel(b, sigma)?;
    let zeta = purify(sigma, d_z, u)?;
    superfidelity(&a.apply_extended(&zeta)?, &b.apply_extended(&zeta)?)
}

/// Two-channel fidelity on purified outputs, in the squared convention
/// `F(·,·)²` that the superfidelity bounds from above.
///
/// Uses the default purification of `σ`.
pub fn two_channel_fidelity_oracle(
    a: &KrausChannel,
    b: &KrausChannel,
    sigma: &DensityOperator,
    d_z: usize,
) -> Result<SimilarityValue> {
    check_channel(a, sigma)?;
    check_channel(b, sigma)?;
    let zeta = purify(sigma, d_z, None)?;
    let f = fidelity(&a.apply_extended(&zeta)?, &b.apply_extended(&zeta)?)?.value();
    Ok(SimilarityValue::new(f * f))
}

/// `Σᵢ |Tr σU†Aᵢ|²` for a unitary reference `U` and `Ψ = {Aᵢ}`.
///
/// This is `G_ch({U}, Ψ; σ)`, and also the square of
/// `channel_fidelity(U†Ψ; σ)` (the latter carries a square root).
pub fn unitary_reference_overlap(
    u: &ComplexMatrix,
    ch: &KrausChannel,
    sigma: &DensityOperator,
) -> Result<f64> {
    check_channel(ch, sigma)?;
    if u.shape() != (sigma.dim(), sigma.dim()) {
        return shape_err("reference unitary has the wrong dimension");
    }
    let sigma_u_dag = sigma.matrix() * u.adjoint();
    Ok(ch
        .operators()
        .iter()
        .map(|a| trace(&(&sigma_u_dag * a)).norm_sqr())
        .sum())
}

/// Erasure-versus-unitary channel superfidelity and its trace-inequality bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErasureComparison {
    /// `G_ch(erasure(ξ), {U}; σ)` from the Kraus formula.
    pub gch: SimilarityValue,
    /// `Tr σ² U†ξU`.
    pub trace_form: f64,
    /// `Σᵢ λᵢ↓ μᵢ↓` over the sorted spectra of `ξ` and `σ`.
    pub bound: f64,
}

pub fn erasure_unitary_gch(
    xi: &DensityOperator,
    u: &ComplexMatrix,
    sigma: &DensityOperator,
) -> Result<ErasureComparison> {
    same_dim(xi, sigma)?;
    if !is_unitary(u, 1e-10) || u.nrows() != xi.dim() {
        return Err(Error::Domain("reference operator is not unitary".into()));
    }
    let gch = channel_superfidelity(
        &erasure_channel(xi),
        &KrausChannel::unitary(u.clone())?,
        sigma,
    )?;
    let s = sigma.matrix();
    let trace_form = trace(&(s * s * u.adjoint() * xi.matrix() * u)).re;
    // eigen() sorts descending
    let bound = xi
        .eigen()
        .values
        .iter()
        .zip(sigma.eigen().values.iter())
        .map(|(l, m)| l * m)
        .sum();
    Ok(ErasureComparison {
        gch,
        trace_form,
        bound,
    })
}

/// `c₁ = 2 Σᵢⱼ Im[Tr(σAᵢ†HAⱼ) · conj(Tr(σAᵢ†Aⱼ))]`.
///
/// Both `Tr(σAᵢ†HAⱼ)` and `Tr(σAᵢ†Aⱼ)` are Hermitian in `(i, j)`, so the sum is
/// the trace of a product of two Hermitian matrices and `c₁` vanishes up to
/// round-off: the leading dependence of `perturbed_gch` on `ε` is quadratic.
pub fn first_order_sensitivity(
    ch: &KrausChannel,
    h: &ComplexMatrix,
    sigma: &DensityOperator,
) -> Result<SensitivityCoefficient> {
    check_channel(ch, sigma)?;
    check_hermitian(h, sigma.dim())?;
    let s = sigma.matrix();
    let ops = ch.operators();
    let mut total = 0.0;
    for ai in ops {
        for aj in ops {
            let with_h = hs_inner(ai, &(h * aj * s));
            let plain = hs_inner(ai, &(aj * s));
            total += (with_h * plain.conj()).im;
        }
    }
    Ok(SensitivityCoefficient(2.0 * total))
}

/// `Ψ = {U_ε Aᵢ}` with `U_ε = exp(−iεH)`.
pub fn perturbed_channel(ch: &KrausChannel, h: &ComplexMatrix, eps: f64) -> Result<KrausChannel> {
    check_hermitian(h, ch.d_out())?;
    let u = matrix_exponential(&(h * (-I * eps)))?;
    KrausChannel::new(ch.operators().iter().map(|a| &u * a).collect())
}

/// `1 + Σᵢⱼ |Tr σAᵢ†U_εAⱼ|² − Σᵢⱼ |Tr σAᵢ†Aⱼ|²`.
pub fn perturbed_gch(
    ch: &KrausChannel,
    h: &ComplexMatrix,
    eps: f64,
    sigma: &DensityOperator,
) -> Result<SimilarityValue> {
    check_channel(ch, sigma)?;
    check_hermitian(h, sigma.dim())?;
    let u = matrix_exponential(&(h * (-I * eps)))?;
    let rotated: Vec<_> = ch.operators().iter().map(|a| &u * a).collect();
    let s = sigma.matrix();
    let moved = pair_overlap(ch.operators(), &rotated, s);
    let still = pair_overlap(ch.operators(), ch.operators(), s);
    Ok(SimilarityValue::new(1.0 + moved - still))
}

/// `(1/2)‖ρ − σ‖₁` on states.
pub fn trace_distance(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    linalg::trace_distance(rho.matrix(), sigma.matrix())
}
