//! Quantum states and channels in Kraus, natural and Choi form.

use crate::error::{shape_err, Error, Result};
use crate::linalg::{
    self, c, exact_sqrt, hermitian_eig, hermitian_part, identity, is_finite, kron, max_abs_diff,
    outer, psd_sqrt, reshuffle, trace, unvec, vec, ComplexMatrix, ComplexVector, HermitianEigen,
};

/// Eigenvalues at or below this are treated as outside the support of a state.
pub const SUPPORT_TOL: f64 = 1e-12;

/// Positive semidefinite, unit-trace operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    matrix: ComplexMatrix,
}

impl DensityOperator {
    /// Tolerance on Hermiticity, positivity and unit trace used by [`DensityOperator::new`].
    pub const TOL: f64 = 1e-10;

    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        Self::with_tolerance(matrix, Self::TOL)
    }

    pub fn with_tolerance(matrix: ComplexMatrix, tol: f64) -> Result<Self> {
        if !linalg::is_square(&matrix) {
            return shape_err(format!("density operator must be square, got {:?}", matrix.shape()));
        }
        if !is_finite(&matrix) {
            return Err(Error::Domain("density operator has non-finite entries".into()));
        }
        let asym = max_abs_diff(&matrix, &matrix.adjoint());
        if asym > tol {
            return Err(Error::Domain(format!("density operator is not Hermitian ({asym:e})")));
        }
        let matrix = hermitian_part(&matrix);
        let tr = trace(&matrix).re;
        if (tr - 1.0).abs() > tol {
            return Err(Error::Domain(format!("density operator has trace {tr}")));
        }
        let min = hermitian_eig(&matrix)?.values.last().copied().unwrap_or(0.0);
        if min < -tol {
            return Err(Error::Domain(format!(
                "density operator has negative eigenvalue {min:e}"
            )));
        }
        Ok(Self { matrix })
    }

    /// Wraps a matrix known to be a state up to round-off;
    /// only the Hermitian part is kept.
    pub fn from_matrix_unchecked(matrix: ComplexMatrix) -> Self {
        Self {
            matrix: hermitian_part(&matrix),
        }
    }

    /// `|ψ⟩⟨ψ|` for the normalized `ψ`.
    pub fn pure(psi: &ComplexVector) -> Self {
        let n = psi.norm();
        let v = psi / c(n, 0.0);
        Self::from_matrix_unchecked(outer(&v, &v))
    }

    pub fn basis(d: usize, i: usize) -> Self {
        Self::pure(&linalg::ket(d, i))
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self {
            matrix: identity(d) / c(d as f64, 0.0),
        }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `Tr ρ²`.
    pub fn purity(&self) -> f64 {
        linalg::hs_inner(&self.matrix, &self.matrix).re
    }

    pub fn eigen(&self) -> HermitianEigen {
        hermitian_eig(&self.matrix).expect("density operators are Hermitian")
    }

    /// Number of eigenvalues above [`SUPPORT_TOL`].
    pub fn rank(&self) -> usize {
        self.eigen().values.iter().filter(|&&l| l > SUPPORT_TOL).count()
    }

    /// `ρ ⊗ τ`.
    pub fn tensor(&self, other: &DensityOperator) -> Self {
        Self::from_matrix_unchecked(kron(&self.matrix, &other.matrix))
    }

    /// `U ρ U†`.
    pub fn conjugate_by(&self, u: &ComplexMatrix) -> Result<Self> {
        if u.ncols() != self.dim() {
            return shape_err("unitary and state dimensions differ");
        }
        Ok(Self::from_matrix_unchecked(u * &self.matrix * u.adjoint()))
    }

    /// `p ρ + (1 − p) τ`.
    pub fn mix(&self, p: f64, other: &DensityOperator) -> Result<Self> {
        if self.dim() != other.dim() {
            return shape_err("cannot mix states of different dimension");
        }
        Ok(Self::from_matrix_unchecked(
            self.matrix.scale(p) + other.matrix.scale(1.0 - p),
        ))
    }

    /// Partial trace over the trailing `d_z`-dimensional factor.
    pub fn partial_trace_env(&self, d: usize, d_z: usize) -> Result<Self> {
        partial_trace_env(&self.matrix, d, d_z).map(Self::from_matrix_unchecked)
    }
}

/// `Tr_Z` of an operator on `X ⊗ Z` with `dim X = d`, `dim Z = d_z`.
pub fn partial_trace_env(rho: &ComplexMatrix, d: usize, d_z: usize) -> Result<ComplexMatrix> {
    if rho.shape() != (d * d_z, d * d_z) {
        return shape_err(format!(
            "partial trace of {:?} operator over {d}x{d_z} factorization",
            rho.shape()
        ));
    }
    Ok(ComplexMatrix::from_fn(d, d, |a, b| {
        (0..d_z).map(|z| rho[(a * d_z + z, b * d_z + z)]).sum()
    }))
}

/// Completely positive map in Kraus form, `Φ(ρ) = Σ Kᵢ ρ Kᵢ†`.
///
/// Trace preservation is not enforced at construction; see
/// [`KrausChannel::validate_cptp`].
#[derive(Debug, Clone, PartialEq)]
pub struct KrausChannel {
    operators: Vec<ComplexMatrix>,
    d_in: usize,
    d_out: usize,
}

impl KrausChannel {
    pub fn new(operators: Vec<ComplexMatrix>) -> Result<Self> {
        let first = operators
            .first()
            .ok_or_else(|| Error::Shape("a Kraus set needs at least one operator".into()))?;
        let (d_out, d_in) = first.shape();
        if d_in == 0 || d_out == 0 {
            return shape_err("Kraus operators must be non-empty matrices");
        }
        for (k, op) in operators.iter().enumerate() {
            if op.shape() != (d_out, d_in) {
                return shape_err(format!(
                    "Kraus operator {k} has shape {:?}, expected {:?}",
                    op.shape(),
                    (d_out, d_in)
                ));
            }
            if !is_finite(op) {
                return Err(Error::Domain(format!("Kraus operator {k} has non-finite entries")));
            }
        }
        Ok(Self {
            operators,
            d_in,
            d_out,
        })
    }

    pub fn identity(d: usize) -> Self {
        Self::new(vec![identity(d)]).expect("identity is a valid Kraus set")
    }

    /// Unitary channel `ρ ↦ U ρ U†`. Unitarity is not checked here.
    pub fn unitary(u: ComplexMatrix) -> Result<Self> {
        if !linalg::is_square(&u) {
            return shape_err("unitary channel needs a square operator");
        }
        Self::new(vec![u])
    }

    pub fn operators(&self) -> &[ComplexMatrix] {
        &self.operators
    }

    pub fn into_operators(self) -> Vec<ComplexMatrix> {
        self.operators
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    /// Number of Kraus operators.
    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }

    /// `Σ Kᵢ† Kᵢ`.
    pub fn completeness(&self) -> ComplexMatrix {
        self.operators
            .iter()
            .fold(linalg::zeros(self.d_in, self.d_in), |acc, k| acc + k.adjoint() * k)
    }

    /// `‖Σ Kᵢ† Kᵢ − I‖_max`.
    pub fn tp_residual(&self) -> f64 {
        max_abs_diff(&self.completeness(), &identity(self.d_in))
    }

    /// Trace preservation to `tol`; complete positivity is implied by the Kraus form.
    pub fn validate_cptp(&self, tol: f64) -> bool {
        self.tp_residual() <= tol
    }

    /// `Σ Kᵢ A Kᵢ†` for an arbitrary operator `A`.
    pub fn apply_matrix(&self, a: &ComplexMatrix) -> Result<ComplexMatrix> {
        if a.shape() != (self.d_in, self.d_in) {
            return shape_err(format!(
                "channel input dimension {} does not match operator {:?}",
                self.d_in,
                a.shape()
            ));
        }
        Ok(self
            .operators
            .iter()
            .fold(linalg::zeros(self.d_out, self.d_out), |acc, k| {
                acc + k * a * k.adjoint()
            }))
    }

    pub fn apply(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        self.apply_matrix(rho.matrix())
            .map(DensityOperator::from_matrix_unchecked)
    }

    /// `(Φ ⊗ 1_Z)(|ζ⟩⟨ζ|)` as a state on `X ⊗ Z`.
    pub fn apply_extended(&self, zeta: &Purification) -> Result<DensityOperator> {
        if zeta.d != self.d_in {
            return shape_err(format!(
                "purification system dimension {} does not match channel input {}",
                zeta.d, self.d_in
            ));
        }
        // (K ⊗ 1) vec(X) = vec(K X)
        let x = zeta.as_matrix();
        let n = self.d_out * zeta.d_z;
        let out = self.operators.iter().fold(linalg::zeros(n, n), |acc, k| {
            let v = vec(&(k * &x));
            acc + outer(&v, &v)
        });
        Ok(DensityOperator::from_matrix_unchecked(out))
    }

    /// Conjugate map with Kraus set `{Kᵢ†}`; generally not trace preserving.
    pub fn adjoint(&self) -> Self {
        Self {
            operators: self.operators.iter().map(|k| k.adjoint()).collect(),
            d_in: self.d_out,
            d_out: self.d_in,
        }
    }

    /// Kraus set `{Aᵢ† Bⱼ}` of `Φ† ∘ Ψ`, where `self = Φ = {Aᵢ}` and
    /// `other = Ψ = {Bⱼ}`, ordered `i`-major.
    pub fn compose_adjoint_with(&self, other: &KrausChannel) -> Result<Self> {
        if self.d_out != other.d_out {
            return shape_err(format!(
                "output dimensions differ: {} vs {}",
                self.d_out, other.d_out
            ));
        }
        let operators = self
            .operators
            .iter()
            .flat_map(|a| {
                let a_dag = a.adjoint();
                other.operators.iter().map(move |b| &a_dag * b)
            })
            .collect();
        Self::new(operators)
    }

    /// `M = Σ Kᵢ ⊗ conj(Kᵢ)`, so that `M vec(ρ) = vec(Φ(ρ))`.
    pub fn natural_representation(&self) -> Result<SuperoperatorMatrix> {
        if self.d_in != self.d_out {
            return shape_err("natural representation is only formed for d_in == d_out");
        }
        let n = self.d_in * self.d_in;
        let m = self
            .operators
            .iter()
            .fold(linalg::zeros(n, n), |acc, k| acc + kron(k, &k.conjugate()));
        SuperoperatorMatrix::new(m)
    }

    pub fn choi(&self) -> Result<ChoiMatrix> {
        Ok(choi_from_natural(&self.natural_representation()?))
    }
}

/// `d² × d²` matrix acting on row-major vectorized operators.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperoperatorMatrix {
    matrix: ComplexMatrix,
    d: usize,
}

impl SuperoperatorMatrix {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let d = square_root_dim(&matrix, "superoperator")?;
        Ok(Self { matrix, d })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            matrix: identity(d * d),
            d,
        }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn apply_matrix(&self, a: &ComplexMatrix) -> Result<ComplexMatrix> {
        if a.shape() != (self.d, self.d) {
            return shape_err("operator dimension does not match superoperator");
        }
        unvec(&(&self.matrix * vec(a)), self.d, self.d)
    }

    pub fn apply(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        self.apply_matrix(rho.matrix())
            .map(DensityOperator::from_matrix_unchecked)
    }

    /// The map "`self`, then `later`", i.e. `later · self`.
    pub fn then(&self, later: &SuperoperatorMatrix) -> Result<Self> {
        if self.d != later.d {
            return shape_err("cannot compose superoperators of different dimension");
        }
        Ok(Self {
            matrix: &later.matrix * &self.matrix,
            d: self.d,
        })
    }
}

/// Choi matrix: the reshuffled natural representation.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiMatrix {
    matrix: ComplexMatrix,
    d: usize,
}

impl ChoiMatrix {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let d = square_root_dim(&matrix, "Choi matrix")?;
        Ok(Self { matrix, d })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let eig = hermitian_part(&self.matrix).symmetric_eigenvalues();
        eig.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn to_natural(&self) -> SuperoperatorMatrix {
        SuperoperatorMatrix {
            matrix: reshuffle(&self.matrix).expect("Choi matrices are d²×d²"),
            d: self.d,
        }
    }
}

fn square_root_dim(m: &ComplexMatrix, what: &str) -> Result<usize> {
    if !linalg::is_square(m) {
        return shape_err(format!("{what} must be square, got {:?}", m.shape()));
    }
    exact_sqrt(m.nrows())
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::Shape(format!("{what} dimension {} is not d²", m.nrows())))
}

pub fn choi_from_natural(m: &SuperoperatorMatrix) -> ChoiMatrix {
    ChoiMatrix {
        matrix: reshuffle(&m.matrix).expect("superoperators are d²×d²"),
        d: m.d,
    }
}

/// Kraus operators `√λᵢ unvec(|λᵢ⟩)` from the eigendecomposition of a Choi matrix.
///
/// Eigenvalues `≤ tol` are dropped; an eigenvalue `< −tol` means the map is not
/// completely positive. The default `tol` is `1e-10 · λ_max`.
pub fn kraus_from_choi(choi: &ChoiMatrix, tol: Option<f64>) -> Result<KrausChannel> {
    let d = choi.d;
    let asym = max_abs_diff(&choi.matrix, &choi.matrix.adjoint());
    if asym > 1e-8 {
        return Err(Error::Domain(format!("Choi matrix is not Hermitian ({asym:e})")));
    }
    let eig = hermitian_eig(&hermitian_part(&choi.matrix))?;
    let lam_max = eig.values.first().copied().unwrap_or(0.0);
    let tol = tol.unwrap_or(1e-10 * lam_max.abs());
    let lam_min = eig.values.last().copied().unwrap_or(0.0);
    if lam_min < -tol {
        return Err(Error::NotCompletelyPositive(lam_min));
    }
    let operators = eig
        .values
        .iter()
        .enumerate()
        .take_while(|(_, &l)| l > tol)
        .map(|(k, &l)| unvec(&eig.vector(k), d, d).map(|m| m * c(l.sqrt(), 0.0)))
        .collect::<Result<Vec<_>>>()?;
    if operators.is_empty() {
        return Err(Error::Domain("Choi matrix has no eigenvalue above tolerance".into()));
    }
    KrausChannel::new(operators)
}

/// Pure state `|ζ⟩ ∈ X ⊗ Z` whose reduction to `X` is a given state.
#[derive(Debug, Clone, PartialEq)]
pub struct Purification {
    state: ComplexVector,
    d: usize,
    d_z: usize,
}

impl Purification {
    pub fn state(&self) -> &ComplexVector {
        &self.state
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn d_z(&self) -> usize {
        self.d_z
    }

    /// `unvec(|ζ⟩)` as a `d × d_z` matrix.
    pub fn as_matrix(&self) -> ComplexMatrix {
        unvec(&self.state, self.d, self.d_z).expect("purification length is d·d_z")
    }

    /// `|ζ⟩⟨ζ|`.
    pub fn density(&self) -> DensityOperator {
        DensityOperator::from_matrix_unchecked(outer(&self.state, &self.state))
    }

    /// `Tr_Z |ζ⟩⟨ζ|`.
    pub fn reduced(&self) -> DensityOperator {
        let x = self.as_matrix();
        DensityOperator::from_matrix_unchecked(&x * x.adjoint())
    }
}

/// Columns of the eigenvectors of `σ` spanning its support, as a `d × rank` matrix.
fn support_basis(eig: &HermitianEigen) -> ComplexMatrix {
    let rank = eig.values.iter().filter(|&&l| l > SUPPORT_TOL).count();
    eig.vectors.columns(0, rank).into_owned()
}

/// `|ζ⟩ = vec(√σ U)` for an operator `U: Z → X` with `U U† = Π_im(σ)`.
///
/// Without `u`, the eigenvectors spanning the support of `σ` are used, padded
/// with zero columns up to `d_z`.
pub fn purify(
    sigma: &DensityOperator,
    d_z: usize,
    u: Option<&ComplexMatrix>,
) -> Result<Purification> {
    let d = sigma.dim();
    let eig = sigma.eigen();
    let support = support_basis(&eig);
    let rank = support.ncols();
    if d_z < rank {
        return Err(Error::InsufficientEnvironment { d_z, rank });
    }
    let u = match u {
        Some(u) => {
            if u.shape() != (d, d_z) {
                return Err(Error::Isometry(format!(
                    "expected a {d}x{d_z} operator, got {:?}",
                    u.shape()
                )));
            }
            let projector = &support * support.adjoint();
            let err = max_abs_diff(&(u * u.adjoint()), &projector);
            if err > 1e-10 {
                return Err(Error::Isometry(format!(
                    "U U† differs from the support projector by {err:e}"
                )));
            }
            u.clone()
        }
        None => {
            let mut u = linalg::zeros(d, d_z);
            u.columns_mut(0, rank).copy_from(&support);
            u
        }
    };
    let x = psd_sqrt(sigma.matrix())? * u;
    Ok(Purification {
        state: vec(&x),
        d,
        d_z,
    })
}

/// Channel sending every input to `ξ`, with Kraus set `{√λᵢ |λᵢ⟩⟨j|}`.
pub fn erasure_channel(xi: &DensityOperator) -> KrausChannel {
    let d = xi.dim();
    let eig = xi.eigen();
    let mut operators = Vec::new();
    for (i, &lam) in eig.values.iter().enumerate() {
        if lam <= SUPPORT_TOL {
            continue;
        }
        let v = eig.vector(i) * c(lam.sqrt(), 0.0);
        for j in 0..d {
            operators.push(outer(&v, &linalg::ket(d, j)));
        }
    }
    KrausChannel::new(operators).expect("a state has at least one positive eigenvalue")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{matrix_unit, sigma_x, sigma_z, ONE, ZERO};
    use crate::random;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    fn plus() -> DensityOperator {
        DensityOperator::pure(&ComplexVector::from_vec(vec![ONE, ONE]))
    }

    fn dephasing() -> KrausChannel {
        KrausChannel::new(vec![matrix_unit(2, 0, 0), matrix_unit(2, 1, 1)]).unwrap()
    }

    #[test]
    fn density_operator_validation() {
        assert!(DensityOperator::new(identity(2) * c(0.5, 0.0)).is_ok());
        assert!(DensityOperator::new(identity(2)).is_err());
        assert!(DensityOperator::new(sigma_x()).is_err());
        let mut nonherm = identity(2) * c(0.5, 0.0);
        nonherm[(0, 1)] = ONE;
        assert!(DensityOperator::new(nonherm).is_err());
        let negative = ComplexMatrix::from_row_slice(2, 2, &[c(1.5, 0.0), ZERO, ZERO, c(-0.5, 0.0)]);
        assert!(DensityOperator::new(negative).is_err());
    }

    #[test]
    fn validate_cptp_examples() {
        assert!(KrausChannel::identity(2).validate_cptp(1e-8));
        let half = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let ch = KrausChannel::new(vec![sigma_x() * half, sigma_z() * half]).unwrap();
        assert!(ch.validate_cptp(1e-8));
        let ch = KrausChannel::new(vec![identity(2) * c(2.0, 0.0)]).unwrap();
        assert!(!ch.validate_cptp(1e-8));
        assert!((ch.tp_residual() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn kraus_set_shape_errors() {
        assert!(KrausChannel::new(vec![]).is_err());
        assert!(KrausChannel::new(vec![identity(2), identity(3)]).is_err());
    }

    #[test]
    fn apply_examples() {
        let rho = random::density(&mut rng(), 3);
        let out = KrausChannel::identity(3).apply(&rho).unwrap();
        assert!(max_abs_diff(out.matrix(), rho.matrix()) < 1e-15);

        let xi = random::density(&mut rng(), 3);
        let out = erasure_channel(&xi).apply(&rho).unwrap();
        assert!(max_abs_diff(out.matrix(), xi.matrix()) < 1e-12);

        let out = dephasing().apply(&plus()).unwrap();
        assert!(max_abs_diff(out.matrix(), DensityOperator::maximally_mixed(2).matrix()) < 1e-15);

        assert!(KrausChannel::identity(2).apply(&rho).is_err());
    }

    #[test]
    fn apply_extended_examples() {
        let mut r = rng();
        let sigma = random::density(&mut r, 2);
        let zeta = purify(&sigma, 2, None).unwrap();
        let out = KrausChannel::identity(2).apply_extended(&zeta).unwrap();
        assert!(max_abs_diff(out.matrix(), zeta.density().matrix()) < 1e-15);

        // product purification ψ ⊗ φ
        let psi = random::pure_ket(&mut r, 2);
        let phi = random::pure_ket(&mut r, 3);
        let zeta = Purification {
            state: psi.kronecker(&phi),
            d: 2,
            d_z: 3,
        };
        let ch = random::channel(&mut r, 2, 3);
        let out = ch.apply_extended(&zeta).unwrap();
        let expected = kron(
            ch.apply(&DensityOperator::pure(&psi)).unwrap().matrix(),
            &outer(&phi, &phi),
        );
        assert!(max_abs_diff(out.matrix(), &expected) < 1e-14);

        // dephasing on half of a Bell pair
        let bell = purify(&DensityOperator::maximally_mixed(2), 2, Some(&identity(2))).unwrap();
        let out = dephasing().apply_extended(&bell).unwrap();
        let mut expected = linalg::zeros(4, 4);
        expected[(0, 0)] = c(0.5, 0.0);
        expected[(3, 3)] = c(0.5, 0.0);
        assert!(max_abs_diff(out.matrix(), &expected) < 1e-15);
    }

    #[test]
    fn apply_extended_with_trivial_environment_is_apply() {
        let mut r = rng();
        let psi = random::pure_ket(&mut r, 3);
        let sigma = DensityOperator::pure(&psi);
        let zeta = purify(&sigma, 1, None).unwrap();
        let ch = random::channel(&mut r, 3, 2);
        let ext = ch.apply_extended(&zeta).unwrap();
        let direct = ch.apply(&sigma).unwrap();
        assert!(max_abs_diff(ext.matrix(), direct.matrix()) < 1e-14);
    }

    #[test]
    fn adjoint_examples() {
        let u = random::unitary(&mut rng(), 3);
        let adj = KrausChannel::unitary(u.clone()).unwrap().adjoint();
        assert_eq!(adj.operators(), &[u.adjoint()]);
        assert_eq!(dephasing().adjoint(), dephasing());
    }

    #[test]
    fn adjoint_trace_identity() {
        let mut r = rng();
        let ch = random::channel(&mut r, 3, 4);
        let adj = ch.adjoint();
        for _ in 0..5 {
            let a = random::ginibre(&mut r, 3, 3);
            let b = random::ginibre(&mut r, 3, 3);
            let lhs = trace(&(ch.apply_matrix(&a).unwrap() * &b));
            let rhs = trace(&(&a * adj.apply_matrix(&b).unwrap()));
            assert!((lhs - rhs).norm() < 1e-12);
        }
        // conjugate of a CPTP map need not be trace preserving
        assert!(!random::channel(&mut r, 3, 2).adjoint().validate_cptp(1e-8));
    }

    #[test]
    fn compose_adjoint_examples() {
        let mut r = rng();
        let id = KrausChannel::identity(2);
        assert_eq!(id.compose_adjoint_with(&id).unwrap(), id);

        let u = random::unitary(&mut r, 2);
        let v = random::unitary(&mut r, 2);
        let composed = KrausChannel::unitary(u.clone())
            .unwrap()
            .compose_adjoint_with(&KrausChannel::unitary(v.clone()).unwrap())
            .unwrap();
        assert!(max_abs_diff(&composed.operators()[0], &(u.adjoint() * v)) < 1e-15);

        let a = random::channel(&mut r, 3, 2);
        let b = random::channel(&mut r, 3, 3);
        let composed = a.compose_adjoint_with(&b).unwrap();
        assert_eq!(composed.len(), 6);
        let rho = random::density(&mut r, 3);
        let two_step = a.adjoint().apply_matrix(b.apply(&rho).unwrap().matrix()).unwrap();
        assert!(max_abs_diff(&composed.apply_matrix(rho.matrix()).unwrap(), &two_step) < 1e-12);
        // i-major ordering
        let expected = a.operators()[1].adjoint() * &b.operators()[2];
        assert!(max_abs_diff(&composed.operators()[5], &expected) < 1e-15);

        assert!(a.compose_adjoint_with(&KrausChannel::identity(2)).is_err());
    }

    #[test]
    fn natural_representation_examples() {
        let m = KrausChannel::identity(2).natural_representation().unwrap();
        assert_eq!(m.matrix(), &identity(4));

        let u = random::unitary(&mut rng(), 2);
        let m = KrausChannel::unitary(u.clone()).unwrap().natural_representation().unwrap();
        assert!(max_abs_diff(m.matrix(), &kron(&u, &u.conjugate())) < 1e-15);

        let mut r = rng();
        let ch = random::channel(&mut r, 3, 3);
        let rho = random::density(&mut r, 3);
        let m = ch.natural_representation().unwrap();
        let lhs = m.apply(&rho).unwrap();
        assert!(max_abs_diff(lhs.matrix(), ch.apply(&rho).unwrap().matrix()) < 1e-12);
    }

    #[test]
    fn choi_examples() {
        let v = vec(&identity(2));
        let choi = choi_from_natural(&SuperoperatorMatrix::identity(2));
        assert_eq!(choi.matrix(), &outer(&v, &v));

        let x = vec(&sigma_x());
        let choi = KrausChannel::unitary(sigma_x()).unwrap().choi().unwrap();
        assert!(max_abs_diff(choi.matrix(), &outer(&x, &x)) < 1e-15);

        let m = random::channel(&mut rng(), 2, 2).natural_representation().unwrap();
        assert_eq!(&choi_from_natural(&m).to_natural(), &m);
    }

    #[test]
    fn kraus_from_choi_identity() {
        let v = vec(&identity(2));
        let choi = ChoiMatrix::new(outer(&v, &v)).unwrap();
        let ch = kraus_from_choi(&choi, None).unwrap();
        assert_eq!(ch.len(), 1);
        let k = &ch.operators()[0];
        // identity up to a global phase
        let phase = k[(0, 0)];
        assert!((phase.norm() - 1.0).abs() < 1e-12);
        assert!(max_abs_diff(&(k / phase), &identity(2)) < 1e-12);
    }

    #[test]
    fn kraus_from_choi_dephasing() {
        let ch = kraus_from_choi(&dephasing().choi().unwrap(), None).unwrap();
        assert_eq!(ch.len(), 2);
        for k in ch.operators() {
            // each operator is a phase times E00 or E11
            assert!(k[(0, 1)].norm() < 1e-14 && k[(1, 0)].norm() < 1e-14);
            let (a, b) = (k[(0, 0)].norm(), k[(1, 1)].norm());
            assert!((a - 1.0).abs() < 1e-12 && b < 1e-12 || (b - 1.0).abs() < 1e-12 && a < 1e-12);
        }
    }

    #[test]
    fn kraus_from_choi_rejects_non_cp() {
        let mut m = identity(4);
        m[(3, 3)] = c(-1.0, 0.0);
        let err = kraus_from_choi(&ChoiMatrix::new(m).unwrap(), Some(1e-10)).unwrap_err();
        assert!(matches!(err, Error::NotCompletelyPositive(l) if (l + 1.0).abs() < 1e-12));
    }

    #[test]
    fn purify_examples() {
        let z = purify(&DensityOperator::basis(2, 0), 1, None).unwrap();
        assert_eq!(z.d_z(), 1);
        assert!((z.state()[0].norm() - 1.0).abs() < 1e-14 && z.state()[1].norm() < 1e-14);

        let z = purify(&DensityOperator::maximally_mixed(2), 2, Some(&identity(2))).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let expected = [h, 0.0, 0.0, h];
        for (x, e) in z.state().iter().zip(expected) {
            assert!((x - c(e, 0.0)).norm() < 1e-15);
        }

        let sigma = random::density(&mut rng(), 3);
        let z = purify(&sigma, 3, None).unwrap();
        assert!((z.state().norm() - 1.0).abs() < 1e-12);
        assert!(max_abs_diff(z.reduced().matrix(), sigma.matrix()) < 1e-10);
    }

    #[test]
    fn purify_errors() {
        let sigma = random::density(&mut rng(), 3);
        assert_eq!(
            purify(&sigma, 2, None).unwrap_err(),
            Error::InsufficientEnvironment { d_z: 2, rank: 3 }
        );
        let not_iso = identity(3) * c(2.0, 0.0);
        assert!(matches!(purify(&sigma, 3, Some(&not_iso)), Err(Error::Isometry(_))));
        assert!(matches!(purify(&sigma, 3, Some(&identity(2))), Err(Error::Isometry(_))));
    }

    #[test]
    fn partial_trace_examples() {
        let mut r = rng();
        let a = random::ginibre(&mut r, 2, 2);
        let b = random::density(&mut r, 3);
        let pt = partial_trace_env(&kron(&a, b.matrix()), 2, 3).unwrap();
        assert!(max_abs_diff(&pt, &a) < 1e-14);

        let bell = purify(&DensityOperator::maximally_mixed(2), 2, Some(&identity(2))).unwrap();
        let pt = bell.density().partial_trace_env(2, 2).unwrap();
        assert!(max_abs_diff(pt.matrix(), DensityOperator::maximally_mixed(2).matrix()) < 1e-15);

        let rho = random::density(&mut r, 6);
        let pt = partial_trace_env(rho.matrix(), 2, 3).unwrap();
        assert!((trace(&pt) - trace(rho.matrix())).norm() < 1e-12);

        assert!(partial_trace_env(rho.matrix(), 2, 2).is_err());
    }

    #[test]
    fn erasure_examples() {
        let ch = erasure_channel(&DensityOperator::basis(2, 0));
        assert_eq!(ch.len(), 2);
        // |0⟩⟨0| and |0⟩⟨1| up to the eigenvector's phase
        for (j, k) in ch.operators().iter().enumerate() {
            let p = k[(0, j)];
            assert!((p.norm() - 1.0).abs() < 1e-14);
            assert!(max_abs_diff(&(k / p), &matrix_unit(2, 0, j)) < 1e-14);
        }
        assert!(ch.validate_cptp(1e-12));

        let ch = erasure_channel(&DensityOperator::maximally_mixed(2));
        assert_eq!(ch.len(), 4);
        for k in ch.operators() {
            assert!((k.norm() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-14);
        }
    }
}
