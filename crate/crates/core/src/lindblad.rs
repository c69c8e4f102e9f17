//! Markovian master equations in the row-major vectorized picture.
//!
//! For `ρ̇ = −i[H, ρ] + Σₖ γₖ (LₖρLₖ† − ½{Lₖ†Lₖ, ρ})` the generator `F` satisfies
//! `vec(ρ̇) = −F vec(ρ)` with
//!
//! ```text
//! F = i(H⊗1 − 1⊗H̄) − Σₖ γₖ [Lₖ⊗L̄ₖ − ½ Lₖ†Lₖ⊗1 − ½ 1⊗(Lₖ†Lₖ)‾]
//! ```
//!
//! and the propagator over time `T` is the natural representation `e^{−FT}`.

use serde::{Deserialize, Serialize};

use crate::channels::{choi_from_natural, kraus_from_choi, DensityOperator, KrausChannel, SuperoperatorMatrix};
use crate::error::{shape_err, Error, Result};
use crate::fidelity::{channel_superfidelity, SimilarityValue};
use crate::linalg::{
    self, identity, is_hermitian, kron, matrix_exponential, sigma_minus, sigma_plus, sigma_z,
    trace, ComplexMatrix, HERMITIAN_TOL, I,
};

/// A jump operator `L` with its nonnegative rate `γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpTerm {
    pub operator: ComplexMatrix,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LindbladGenerator {
    hamiltonian: ComplexMatrix,
    jumps: Vec<JumpTerm>,
}

impl LindbladGenerator {
    pub fn new(hamiltonian: ComplexMatrix, jumps: Vec<JumpTerm>) -> Result<Self> {
        let d = hamiltonian.nrows();
        if !is_hermitian(&hamiltonian, HERMITIAN_TOL) {
            return Err(Error::Domain("Hamiltonian is not Hermitian".into()));
        }
        for (k, j) in jumps.iter().enumerate() {
            if j.operator.shape() != (d, d) {
                return shape_err(format!("jump operator {k} does not act on dimension {d}"));
            }
            if !(j.rate >= 0.0 && j.rate.is_finite()) {
                return Err(Error::Domain(format!("jump rate {k} is {}", j.rate)));
            }
        }
        Ok(Self { hamiltonian, jumps })
    }

    pub fn hamiltonian(&self) -> &ComplexMatrix {
        &self.hamiltonian
    }

    pub fn jumps(&self) -> &[JumpTerm] {
        &self.jumps
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    /// `F` with `vec(ρ̇) = −F vec(ρ)`.
    pub fn generator_matrix(&self) -> SuperoperatorMatrix {
        let d = self.dim();
        let id = identity(d);
        let h = &self.hamiltonian;
        let mut f = (kron(h, &id) - kron(&id, &h.conjugate())) * I;
        for JumpTerm { operator: l, rate } in &self.jumps {
            let ldl = l.adjoint() * l;
            let dissipator = kron(l, &l.conjugate())
                - kron(&ldl, &id).scale(0.5)
                - kron(&id, &ldl.conjugate()).scale(0.5);
            f -= dissipator.scale(*rate);
        }
        SuperoperatorMatrix::new(f).expect("generator is d²×d²")
    }

    pub fn propagator(&self, time: f64) -> Result<Propagator> {
        propagator_from_generator(&self.generator_matrix(), time)
    }
}

/// `e^{−FT}` together with its duration.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagator {
    matrix: SuperoperatorMatrix,
    time: f64,
}

impl Propagator {
    pub fn matrix(&self) -> &SuperoperatorMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> SuperoperatorMatrix {
        self.matrix
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Maximum deviation from trace preservation, `‖vec(1)† M − vec(1)†‖_max`.
    pub fn trace_residual(&self) -> f64 {
        let d = self.matrix.d();
        let vid = linalg::vec(&identity(d));
        let left = vid.adjoint() * self.matrix.matrix();
        left.iter()
            .zip(vid.iter())
            .map(|(a, b)| (a - b.conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Kraus form via the Choi matrix.
    pub fn to_channel(&self) -> Result<KrausChannel> {
        kraus_from_choi(&choi_from_natural(&self.matrix), None)
    }
}

pub fn propagator_from_generator(f: &SuperoperatorMatrix, time: f64) -> Result<Propagator> {
    if !(time >= 0.0 && time.is_finite()) {
        return Err(Error::Domain(format!("propagation time must be >= 0, got {time}")));
    }
    let m = matrix_exponential(&(f.matrix() * linalg::c(-time, 0.0)))?;
    Ok(Propagator {
        matrix: SuperoperatorMatrix::new(m)?,
        time,
    })
}

/// Default qubit frequency when the caller does not pick one; `G_ch` between
/// the detuned and undetuned channels does not depend on it.
pub const DEFAULT_OMEGA: f64 = 1.0;

/// Single qubit with detuning error `ε` and relaxation rates `γ₊ = γ₋ = 1`:
/// `H = (Ω+ε)σ_z/2`, jumps `σ₋` and `σ₊`.
pub fn single_qubit_generator(omega: f64, eps: f64) -> LindbladGenerator {
    let h = sigma_z() * linalg::c((omega + eps) / 2.0, 0.0);
    let jumps = vec![
        JumpTerm {
            operator: sigma_minus(),
            rate: 1.0,
        },
        JumpTerm {
            operator: sigma_plus(),
            rate: 1.0,
        },
    ];
    LindbladGenerator::new(h, jumps).expect("single-qubit generator is valid")
}

/// Channel `Φ_T^ε` from `e^{−FT}` → reshuffle → Kraus extraction.
pub fn single_qubit_channel(omega: f64, eps: f64, time: f64) -> Result<KrausChannel> {
    single_qubit_generator(omega, eps).propagator(time)?.to_channel()
}

fn populations(rho0: &DensityOperator) -> Result<(f64, f64)> {
    if rho0.dim() != 2 {
        return shape_err(format!("expected a qubit state, got dimension {}", rho0.dim()));
    }
    let m = rho0.matrix();
    Ok((m[(0, 0)].re, m[(1, 1)].re))
}

/// `1 − 2e^{−2T}(1 − cos εT) ρ₀₀ ρ₁₁`.
pub fn analytic_gch_single_qubit(rho0: &DensityOperator, eps: f64, time: f64) -> Result<SimilarityValue> {
    let (p0, p1) = populations(rho0)?;
    Ok(SimilarityValue::new(
        1.0 - 2.0 * (-2.0 * time).exp() * (1.0 - (eps * time).cos()) * p0 * p1,
    ))
}

/// `1 − ε²T² e^{−2T} ρ₀₀ ρ₁₁`.
pub fn quadratic_approx_gch(rho0: &DensityOperator, eps: f64, time: f64) -> Result<SimilarityValue> {
    let (p0, p1) = populations(rho0)?;
    let et = eps * time;
    Ok(SimilarityValue::new(1.0 - et * et * (-2.0 * time).exp() * p0 * p1))
}

/// `G_ch(Φ_T^0, Φ_T^ε; ρ₀)` through the full numerical pipeline.
pub fn numeric_gch_single_qubit(
    omega: f64,
    rho0: &DensityOperator,
    eps: f64,
    time: f64,
) -> Result<SimilarityValue> {
    let reference = single_qubit_channel(omega, 0.0, time)?;
    let detuned = single_qubit_channel(omega, eps, time)?;
    channel_superfidelity(&reference, &detuned, rho0)
}

/// Grid over `(ε, T)` comparing the numerical pipeline with the closed form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SingleQubitSweep {
    #[serde(default = "default_omega")]
    pub omega: f64,
    pub epsilons: Vec<f64>,
    pub times: Vec<f64>,
    #[serde(with = "crate::io::matrix_serde")]
    pub rho0: ComplexMatrix,
}

fn default_omega() -> f64 {
    DEFAULT_OMEGA
}

impl Default for SingleQubitSweep {
    fn default() -> Self {
        let plus = DensityOperator::pure(&linalg::ComplexVector::from_element(2, linalg::ONE));
        Self {
            omega: DEFAULT_OMEGA,
            epsilons: vec![0.0, 0.05, 0.1, 0.5],
            times: vec![0.1, 0.5, 1.0, 2.0, 5.0],
            rho0: plus.into_matrix(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    #[serde(rename = "T")]
    pub time: f64,
    pub gch_numeric: f64,
    pub gch_analytic: f64,
    pub abs_error: f64,
}

impl SingleQubitSweep {
    pub fn run(&self) -> Result<Vec<SweepRow>> {
        let rho0 = DensityOperator::new(self.rho0.clone())?;
        let mut rows = Vec::with_capacity(self.epsilons.len() * self.times.len());
        for &epsilon in &self.epsilons {
            for &time in &self.times {
                let numeric = numeric_gch_single_qubit(self.omega, &rho0, epsilon, time)?.value();
                let analytic = analytic_gch_single_qubit(&rho0, epsilon, time)?.value();
                rows.push(SweepRow {
                    epsilon,
                    time,
                    gch_numeric: numeric,
                    gch_analytic: analytic,
                    abs_error: (numeric - analytic).abs(),
                });
            }
        }
        Ok(rows)
    }
}

/// `Tr ρ` after propagation; used to check trace preservation on sample inputs.
pub fn propagated_trace(p: &Propagator, rho: &ComplexMatrix) -> Result<f64> {
    Ok(trace(&p.matrix().apply_matrix(rho)?).re)
}
