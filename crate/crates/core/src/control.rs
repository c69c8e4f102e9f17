//! Heisenberg spin chain with piecewise-constant controls on the first qubit,
//! per-qubit dephasing, a gradient pulse optimizer and a control-noise sweep.
//!
//! Qubit 1 is the first (most significant) tensor factor. Over interval `k`
//! of length `T/N` the Hamiltonian is
//! `J Σᵢ Σ_α σ_α^i σ_α^{i+1} + h_x[k] σ_x^1 + h_y[k] σ_y^1`, and each qubit
//! dephases through the jump `σ_z^i` at rate `γ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{choi_from_natural, kraus_from_choi, DensityOperator, KrausChannel, SuperoperatorMatrix};
use crate::error::{shape_err, Error, Result};
use crate::fidelity::{channel_superfidelity, SimilarityValue};
use crate::linalg::{
    c, hermitian_eig, identity, is_unitary, kron, kron_all, matrix_exponential, sigma_x, sigma_y,
    sigma_z, zeros, ComplexMatrix, I,
};
use crate::lindblad::{JumpTerm, LindbladGenerator};

/// Largest chain this module will simulate; the superoperator has `4ⁿ` rows.
pub const MAX_QUBITS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinChainConfig {
    pub n_qubits: usize,
    #[serde(rename = "J")]
    pub coupling: f64,
    pub gamma: f64,
    #[serde(rename = "N")]
    pub n_intervals: usize,
    #[serde(rename = "T")]
    pub total_time: f64,
    pub max_amplitude: f64,
}

impl SpinChainConfig {
    /// Three qubits, `J = 1`, `γ = 0.1`, `N = 64`, `T = 6.1`, `max|h| = 10`.
    pub fn three_qubit_not() -> Self {
        Self {
            n_qubits: 3,
            coupling: 1.0,
            gamma: 0.1,
            n_intervals: 64,
            total_time: 6.1,
            max_amplitude: 10.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_qubits == 0 || self.n_qubits > MAX_QUBITS {
            return bad(format!("n_qubits must be in 1..={MAX_QUBITS}, got {}", self.n_qubits));
        }
        if self.n_intervals == 0 {
            return bad("N must be at least 1".into());
        }
        if !(self.total_time > 0.0 && self.total_time.is_finite()) {
            return bad(format!("T must be positive, got {}", self.total_time));
        }
        if !(self.max_amplitude > 0.0 && self.max_amplitude.is_finite()) {
            return bad(format!("max_amplitude must be positive, got {}", self.max_amplitude));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be >= 0, got {}", self.gamma));
        }
        if !self.coupling.is_finite() {
            return bad("J must be finite".into());
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn dt(&self) -> f64 {
        self.total_time / self.n_intervals as f64
    }

    pub fn closed(&self) -> Self {
        Self { gamma: 0.0, ..*self }
    }
}

/// Control amplitudes, one `(h_x, h_y)` pair per interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    pub hx: Vec<f64>,
    pub hy: Vec<f64>,
    /// Total duration covered by the schedule.
    pub total_time: f64,
}

impl PulseSchedule {
    pub fn zeros(config: &SpinChainConfig) -> Self {
        Self {
            hx: vec![0.0; config.n_intervals],
            hy: vec![0.0; config.n_intervals],
            total_time: config.total_time,
        }
    }

    pub fn len(&self) -> usize {
        self.hx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hx.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.hx.iter().chain(&self.hy).fold(0.0, |m, h| m.max(h.abs()))
    }

    pub fn validate(&self, config: &SpinChainConfig) -> Result<()> {
        check_lengths(config, &self.hx, &self.hy)?;
        if self.hx.iter().chain(&self.hy).any(|h| !h.is_finite()) {
            return Err(Error::Config("pulse amplitudes must be finite".into()));
        }
        let peak = self.max_abs();
        if peak > config.max_amplitude {
            return Err(Error::Config(format!(
                "pulse amplitude {peak} exceeds max_amplitude {}",
                config.max_amplitude
            )));
        }
        if (self.total_time - config.total_time).abs() > 1e-12 * config.total_time {
            return Err(Error::Config(format!(
                "schedule covers T = {}, config has T = {}",
                self.total_time, config.total_time
            )));
        }
        Ok(())
    }
}

fn check_lengths(config: &SpinChainConfig, hx: &[f64], hy: &[f64]) -> Result<()> {
    if hx.len() != config.n_intervals || hy.len() != config.n_intervals {
        return Err(Error::Config(format!(
            "expected {} intervals, got hx: {}, hy: {}",
            config.n_intervals,
            hx.len(),
            hy.len()
        )));
    }
    Ok(())
}

/// `op` on qubit `site` (0-based, 0 = first factor) of an `n`-qubit register.
pub fn site_operator(op: &ComplexMatrix, site: usize, n: usize) -> ComplexMatrix {
    let id = identity(2);
    kron_all((0..n).map(|i| if i == site { op } else { &id }))
}

pub fn drift_hamiltonian(config: &SpinChainConfig) -> Result<ComplexMatrix> {
    let n = config.n_qubits;
    if n < 2 {
        return Err(Error::Domain(format!("the drift needs at least two qubits, got {n}")));
    }
    let d = 1 << n;
    let mut h = zeros(d, d);
    for pauli in [sigma_x(), sigma_y(), sigma_z()] {
        for i in 0..n - 1 {
            h += site_operator(&pauli, i, n) * site_operator(&pauli, i + 1, n);
        }
    }
    Ok(h * c(config.coupling, 0.0))
}

pub fn control_hamiltonian(hx: f64, hy: f64, n_qubits: usize) -> ComplexMatrix {
    site_operator(&sigma_x(), 0, n_qubits) * c(hx, 0.0) + site_operator(&sigma_y(), 0, n_qubits) * c(hy, 0.0)
}

/// Operators reused across intervals.
struct ChainOperators {
    drift: ComplexMatrix,
    x1: ComplexMatrix,
    y1: ComplexMatrix,
    jumps: Vec<JumpTerm>,
}

impl ChainOperators {
    fn new(config: &SpinChainConfig) -> Self {
        let n = config.n_qubits;
        let d = config.dim();
        let drift = if n >= 2 {
            drift_hamiltonian(config).expect("n >= 2")
        } else {
            zeros(d, d)
        };
        let jumps = if config.gamma > 0.0 {
            (0..n)
                .map(|i| JumpTerm {
                    operator: site_operator(&sigma_z(), i, n),
                    rate: config.gamma,
                })
                .collect()
        } else {
            Vec::new()
        };
        Self {
            drift,
            x1: site_operator(&sigma_x(), 0, n),
            y1: site_operator(&sigma_y(), 0, n),
            jumps,
        }
    }

    fn hamiltonian(&self, hx: f64, hy: f64) -> ComplexMatrix {
        &self.drift + &self.x1 * c(hx, 0.0) + &self.y1 * c(hy, 0.0)
    }

    fn generator(&self, hx: f64, hy: f64) -> LindbladGenerator {
        LindbladGenerator::new(self.hamiltonian(hx, hy), self.jumps.clone())
            .expect("chain generator is valid")
    }
}

fn interval_propagators(config: &SpinChainConfig, hx: &[f64], hy: &[f64]) -> Result<Vec<ComplexMatrix>> {
    let ops = ChainOperators::new(config);
    let dt = config.dt();
    hx.iter()
        .zip(hy)
        .map(|(&x, &y)| Ok(ops.generator(x, y).propagator(dt)?.into_matrix().into_matrix()))
        .collect()
}

/// Natural representation of the whole schedule, composed newest-on-the-left.
/// Amplitudes are not checked against `max_amplitude`.
pub fn evolve_amplitudes(config: &SpinChainConfig, hx: &[f64], hy: &[f64]) -> Result<SuperoperatorMatrix> {
    config.validate()?;
    check_lengths(config, hx, hy)?;
    let d2 = config.dim() * config.dim();
    let total = interval_propagators(config, hx, hy)?
        .into_iter()
        .fold(identity(d2), |acc, m| m * acc);
    SuperoperatorMatrix::new(total)
}

pub fn evolve_superoperator(config: &SpinChainConfig, pulses: &PulseSchedule) -> Result<SuperoperatorMatrix> {
    config.validate()?;
    pulses.validate(config)?;
    evolve_amplitudes(config, &pulses.hx, &pulses.hy)
}

pub fn evolve_channel(config: &SpinChainConfig, pulses: &PulseSchedule) -> Result<KrausChannel> {
    let m = evolve_superoperator(config, pulses)?;
    kraus_from_choi(&choi_from_natural(&m), None)
}

fn channel_from_amplitudes(config: &SpinChainConfig, hx: &[f64], hy: &[f64]) -> Result<KrausChannel> {
    let m = evolve_amplitudes(config, hx, hy)?;
    kraus_from_choi(&choi_from_natural(&m), None)
}

/// Time-ordered product `U_N ⋯ U_1` of the closed-system interval unitaries.
pub fn evolve_unitary(config: &SpinChainConfig, pulses: &PulseSchedule) -> Result<ComplexMatrix> {
    config.validate()?;
    pulses.validate(config)?;
    let ops = ChainOperators::new(config);
    let step = c(0.0, -config.dt());
    pulses.hx.iter().zip(&pulses.hy).try_fold(identity(config.dim()), |acc, (&x, &y)| {
        Ok(matrix_exponential(&(ops.hamiltonian(x, y) * step))? * acc)
    })
}

/// The flip `σ_x` on qubit `k` (1-based) of an `n`-qubit register.
pub fn not_gate(k: usize, n: usize) -> Result<ComplexMatrix> {
    if k == 0 || k > n {
        return Err(Error::Config(format!("qubit {k} is outside a {n}-qubit register")));
    }
    Ok(site_operator(&sigma_x(), k - 1, n))
}

/// Gate names: `NOTk` (flip of qubit `k`, 1-based) and `I`.
pub fn parse_target(name: &str, n: usize) -> Result<ComplexMatrix> {
    let trimmed = name.trim();
    if trimmed.eq_ignore_ascii_case("I") || trimmed.eq_ignore_ascii_case("identity") {
        return Ok(identity(1 << n));
    }
    let k = trimmed
        .strip_prefix("NOT")
        .or_else(|| trimmed.strip_prefix("not"))
        .and_then(|rest| rest.parse::<usize>().ok())
        .ok_or_else(|| Error::Config(format!("unknown target gate {name:?}")))?;
    not_gate(k, n)
}

fn maximally_mixed_for(ch: &KrausChannel) -> DensityOperator {
    DensityOperator::maximally_mixed(ch.d_in())
}

/// `G_ch(Φ, {U}; 1/d)`.
pub fn gate_fidelity(ch: &KrausChannel, target: &ComplexMatrix) -> Result<SimilarityValue> {
    if !is_unitary(target, 1e-10) {
        return Err(Error::Domain("target gate is not unitary".into()));
    }
    if target.shape() != (ch.d_out(), ch.d_in()) {
        return shape_err(format!(
            "target is {}x{}, channel maps {} -> {}",
            target.nrows(),
            target.ncols(),
            ch.d_in(),
            ch.d_out()
        ));
    }
    let reference = KrausChannel::unitary(target.clone())?;
    channel_superfidelity(ch, &reference, &maximally_mixed_for(ch))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    pub max_iters: usize,
    pub target_fidelity: f64,
    pub restarts: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            target_fidelity: 0.99,
            restarts: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub pulses: PulseSchedule,
    pub fidelity: f64,
    pub iterations: usize,
    pub reached_target: bool,
    pub seed: u64,
}

/// Figure of merit and its gradient with respect to `(hx, hy)`.
trait Objective {
    fn value(&self, hx: &[f64], hy: &[f64]) -> Result<f64>;
    fn value_and_gradient(&self, hx: &[f64], hy: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)>;
}

/// `|Tr U_T†U|² / d²` with exact interval derivatives from the spectral form
/// of `d e^{−iH dt}`.
struct ClosedObjective {
    ops: ChainOperators,
    target_dag: ComplexMatrix,
    dt: f64,
    d: usize,
}

struct IntervalUnitary {
    u: ComplexMatrix,
    du_x: ComplexMatrix,
    du_y: ComplexMatrix,
}

impl ClosedObjective {
    fn interval(&self, hx: f64, hy: f64, with_derivative: bool) -> Result<IntervalUnitary> {
        let eig = hermitian_eig(&self.ops.hamiltonian(hx, hy))?;
        let v = &eig.vectors;
        let phases: Vec<_> = eig.values.iter().map(|&l| (I * (-l * self.dt)).exp()).collect();
        let diag = ComplexMatrix::from_fn(self.d, self.d, |a, b| if a == b { phases[a] } else { c(0.0, 0.0) });
        let u = v * diag * v.adjoint();
        if !with_derivative {
            let z = zeros(0, 0);
            return Ok(IntervalUnitary { u, du_x: z.clone(), du_y: z });
        }
        let lam = &eig.values;
        let gamma = ComplexMatrix::from_fn(self.d, self.d, |a, b| {
            let gap = lam[a] - lam[b];
            if gap.abs() > 1e-9 * (1.0 + lam[a].abs()) {
                (phases[a] - phases[b]) / gap
            } else {
                I * (-self.dt) * phases[a]
            }
        });
        let frechet = |h: &ComplexMatrix| v * (v.adjoint() * h * v).component_mul(&gamma) * v.adjoint();
        Ok(IntervalUnitary {
            du_x: frechet(&self.ops.x1),
            du_y: frechet(&self.ops.y1),
            u,
        })
    }
}

impl Objective for ClosedObjective {
    fn value(&self, hx: &[f64], hy: &[f64]) -> Result<f64> {
        let mut u = identity(self.d);
        for (&x, &y) in hx.iter().zip(hy) {
            u = self.interval(x, y, false)?.u * u;
        }
        let overlap = (&self.target_dag * u).trace() / c(self.d as f64, 0.0);
        Ok(overlap.norm_sqr())
    }

    fn value_and_gradient(&self, hx: &[f64], hy: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let steps = hx
            .iter()
            .zip(hy)
            .map(|(&x, &y)| self.interval(x, y, true))
            .collect::<Result<Vec<_>>>()?;
        let n = steps.len();
        // before[k] = U_{k-1}⋯U_1, after[k] = U_T† U_N⋯U_{k+1}
        let mut before = Vec::with_capacity(n);
        let mut acc = identity(self.d);
        for s in &steps {
            before.push(acc.clone());
            acc = &s.u * acc;
        }
        let scale = c(1.0 / self.d as f64, 0.0);
        let overlap = (&self.target_dag * &acc).trace() * scale;
        let mut after = self.target_dag.clone();
        let (mut gx, mut gy) = (vec![0.0; n], vec![0.0; n]);
        for k in (0..n).rev() {
            let s = &steps[k];
            let dx = (&after * &s.du_x * &before[k]).trace() * scale;
            let dy = (&after * &s.du_y * &before[k]).trace() * scale;
            gx[k] = 2.0 * (overlap.conj() * dx).re;
            gy[k] = 2.0 * (overlap.conj() * dy).re;
            after = after * &s.u;
        }
        Ok((overlap.norm_sqr(), gx, gy))
    }
}

/// `Re Tr(W†M) / d²` with `W = U_T ⊗ Ū_T`, which equals the gate fidelity of
/// the channel with natural representation `M`. Interval derivatives use the
/// first-order splitting `∂e^{−F dt} ≈ −dt (∂F) e^{−F dt}`.
struct OpenObjective {
    ops: ChainOperators,
    w_dag: ComplexMatrix,
    gen_x: ComplexMatrix,
    gen_y: ComplexMatrix,
    dt: f64,
    d2: usize,
}

impl OpenObjective {
    fn propagators(&self, hx: &[f64], hy: &[f64]) -> Result<Vec<ComplexMatrix>> {
        hx.iter()
            .zip(hy)
            .map(|(&x, &y)| Ok(self.ops.generator(x, y).propagator(self.dt)?.into_matrix().into_matrix()))
            .collect()
    }

    fn score(&self, m: &ComplexMatrix) -> f64 {
        (&self.w_dag * m).trace().re / self.d2 as f64
    }
}

impl Objective for OpenObjective {
    fn value(&self, hx: &[f64], hy: &[f64]) -> Result<f64> {
        let total = self
            .propagators(hx, hy)?
            .into_iter()
            .fold(identity(self.d2), |acc, m| m * acc);
        Ok(self.score(&total))
    }

    fn value_and_gradient(&self, hx: &[f64], hy: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let props = self.propagators(hx, hy)?;
        let n = props.len();
        // through[k] = M_k ⋯ M_1
        let mut through = Vec::with_capacity(n);
        let mut acc = identity(self.d2);
        for m in &props {
            acc = m * acc;
            through.push(acc.clone());
        }
        let value = self.score(&acc);
        let mut after = self.w_dag.clone();
        let (mut gx, mut gy) = (vec![0.0; n], vec![0.0; n]);
        let scale = -self.dt / self.d2 as f64;
        for k in (0..n).rev() {
            gx[k] = scale * (&after * &self.gen_x * &through[k]).trace().re;
            gy[k] = scale * (&after * &self.gen_y * &through[k]).trace().re;
            after = after * &props[k];
        }
        Ok((value, gx, gy))
    }
}

fn objective_for(config: &SpinChainConfig, target: &ComplexMatrix) -> Result<Box<dyn Objective>> {
    let d = config.dim();
    if target.shape() != (d, d) {
        return shape_err(format!("target must be {d}x{d}"));
    }
    if !is_unitary(target, 1e-10) {
        return Err(Error::Domain("target gate is not unitary".into()));
    }
    let ops = ChainOperators::new(config);
    let dt = config.dt();
    if config.gamma == 0.0 {
        return Ok(Box::new(ClosedObjective {
            ops,
            target_dag: target.adjoint(),
            dt,
            d,
        }));
    }
    let id = identity(d);
    let ham_derivative = |h: &ComplexMatrix| (kron(h, &id) - kron(&id, &h.conjugate())) * I;
    Ok(Box::new(OpenObjective {
        w_dag: kron(target, &target.conjugate()).adjoint(),
        gen_x: ham_derivative(&ops.x1),
        gen_y: ham_derivative(&ops.y1),
        ops,
        dt,
        d2: d * d,
    }))
}

fn clip(values: &mut [f64], bound: f64) {
    for v in values {
        *v = v.clamp(-bound, bound);
    }
}

const HISTORY: usize = 10;

/// Limited-memory curvature pairs for the quasi-Newton ascent direction.
struct CurvatureHistory {
    pairs: std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl CurvatureHistory {
    fn new() -> Self {
        Self {
            pairs: std::collections::VecDeque::with_capacity(HISTORY),
        }
    }

    /// `s` is the parameter step, `y` the change of the gradient of `−f`.
    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        if sy <= 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            return;
        }
        if self.pairs.len() == HISTORY {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
    }

    /// Two-loop recursion applied to the ascent gradient `g`; the map is
    /// linear, so this is the ascent direction directly.
    fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        let mut alpha = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alpha.push(a);
        }
        if let Some((s, y, _)) = self.pairs.back() {
            let scale = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|qi| *qi *= scale);
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alpha.into_iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        q
    }

    fn clear(&mut self) {
        self.pairs.clear();
    }
}

/// Gradient ascent on the gate fidelity with an L-BFGS direction, Armijo
/// backtracking, and clipping of every trial point to `±max_amplitude`.
///
/// Amplitudes start uniform in `[−1, 1] · max_amplitude / 10`. When the
/// quasi-Newton direction yields no ascent the history is dropped and the
/// plain gradient is tried; the run stops if that fails too.
pub fn optimize_pulses(
    config: &SpinChainConfig,
    target: &ComplexMatrix,
    seed: u64,
    max_iters: usize,
    target_fidelity: f64,
) -> Result<OptimizationResult> {
    config.validate()?;
    if !(target_fidelity > 0.0 && target_fidelity < 1.0) {
        return Err(Error::Config(format!("target fidelity must lie in (0, 1), got {target_fidelity}")));
    }
    let objective = objective_for(config, target)?;
    let bound = config.max_amplitude;
    let n = config.n_intervals;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init_scale = bound / 10.0;
    let mut x: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-1.0..=1.0) * init_scale).collect();

    let eval = |x: &[f64]| objective.value_and_gradient(&x[..n], &x[n..]).map(|(f, gx, gy)| (f, [gx, gy].concat()));
    let (mut fid, mut grad) = eval(&x)?;
    let mut history = CurvatureHistory::new();
    let mut iterations = 0;
    while fid < target_fidelity && iterations < max_iters {
        iterations += 1;
        let mut step = None;
        for use_history in [true, false] {
            if !use_history {
                history.clear();
            }
            let mut dir = history.direction(&grad);
            if history.pairs.is_empty() {
                let norm = dot(&grad, &grad).sqrt().max(1e-300);
                let first = (bound / 10.0) / norm;
                dir.iter_mut().for_each(|v| *v *= first);
            }
            if let Some(trial) = backtrack(objective.as_ref(), &x, &dir, &grad, fid, bound, n)? {
                step = Some(trial);
                break;
            }
            if history.pairs.is_empty() {
                break;
            }
        }
        let Some((x_new, f_new)) = step else { break };
        let (_, g_new) = eval(&x_new)?;
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = grad.iter().zip(&g_new).map(|(g0, g1)| g0 - g1).collect();
        history.push(s, y);
        x = x_new;
        fid = f_new;
        grad = g_new;
    }
    let hy = x.split_off(n);
    Ok(OptimizationResult {
        pulses: PulseSchedule {
            hx: x,
            hy,
            total_time: config.total_time,
        },
        fidelity: fid,
        iterations,
        reached_target: fid >= target_fidelity,
        seed,
    })
}

/// Armijo backtracking along `dir` with projection onto the amplitude box.
fn backtrack(
    objective: &dyn Objective,
    x: &[f64],
    dir: &[f64],
    grad: &[f64],
    f0: f64,
    bound: f64,
    n: usize,
) -> Result<Option<(Vec<f64>, f64)>> {
    let mut alpha = 1.0;
    for _ in 0..40 {
        let mut trial: Vec<f64> = x.iter().zip(dir).map(|(xi, di)| xi + alpha * di).collect();
        clip(&mut trial, bound);
        let moved: Vec<f64> = trial.iter().zip(x).map(|(a, b)| a - b).collect();
        let predicted = dot(grad, &moved);
        if predicted > 0.0 {
            let f = objective.value(&trial[..n], &trial[n..])?;
            if f >= f0 + 1e-4 * predicted {
                return Ok(Some((trial, f)));
            }
        }
        alpha *= 0.5;
    }
    Ok(None)
}

/// Independent runs seeded `seed, seed + 1, …`; returns the first run that
/// reaches the target in seed order, otherwise the best one.
pub fn optimize_with_restarts(
    config: &SpinChainConfig,
    target: &ComplexMatrix,
    seed: u64,
    settings: &OptimizerSettings,
) -> Result<OptimizationResult> {
    let runs = (0..settings.restarts.max(1) as u64)
        .into_par_iter()
        .map(|k| {
            optimize_pulses(
                config,
                target,
                seed.wrapping_add(k),
                settings.max_iters,
                settings.target_fidelity,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let first_hit = runs.iter().position(|r| r.reached_target);
    let best = first_hit.unwrap_or_else(|| {
        (0..runs.len())
            .max_by(|&a, &b| runs[a].fidelity.total_cmp(&runs[b].fidelity))
            .expect("at least one run")
    });
    Ok(runs.into_iter().nth(best).expect("index in range"))
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one trial: `seed ⊕ splitmix64(splitmix64(s_index) ⊕ trial)`.
pub fn trial_seed(seed: u64, s_index: usize, trial: usize) -> u64 {
    seed ^ splitmix64(splitmix64(s_index as u64) ^ trial as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSweepResult {
    pub s_values: Vec<f64>,
    /// `samples[i][t]` is trial `t` at `s_values[i]`.
    pub samples: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NoiseSweepResult {
    pub fn from_samples(s_values: Vec<f64>, samples: Vec<Vec<f64>>) -> Self {
        let stat = |f: fn(&[f64]) -> f64| samples.iter().map(|v| f(v)).collect::<Vec<_>>();
        let mean = stat(|v| v.iter().sum::<f64>() / v.len() as f64);
        let min = stat(|v| v.iter().copied().fold(f64::INFINITY, f64::min));
        let max = stat(|v| v.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        Self {
            s_values,
            samples,
            mean,
            min,
            max,
        }
    }

    pub fn spread(&self, i: usize) -> f64 {
        self.max[i] - self.min[i]
    }
}

/// `G_ch` between the channel of `pulses` and that of `pulses` plus one
/// independent `N(0, s)` draw per control per interval, on input `1/2ⁿ`.
///
/// For each trial the x noise for all intervals is drawn first, then the y
/// noise. Perturbed amplitudes are not clipped. A trial whose draws are all
/// zero reproduces the reference channel and scores exactly 1.
pub fn noise_sweep(
    config: &SpinChainConfig,
    pulses: &PulseSchedule,
    s_values: &[f64],
    trials: usize,
    seed: u64,
) -> Result<NoiseSweepResult> {
    if trials == 0 {
        return Err(Error::Config("at least one trial is required".into()));
    }
    if let Some(bad) = s_values.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
        return Err(Error::Config(format!("noise levels must be >= 0, got {bad}")));
    }
    let reference = evolve_channel(config, pulses)?;
    let sigma = maximally_mixed_for(&reference);
    let n = config.n_intervals;

    let samples = s_values
        .iter()
        .enumerate()
        .map(|(si, &s)| {
            let noise = Normal::new(0.0, s).expect("s is finite and nonnegative");
            (0..trials)
                .into_par_iter()
                .map(|t| {
                    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, si, t));
                    let nx: Vec<f64> = (0..n).map(|_| noise.sample(&mut rng)).collect();
                    let ny: Vec<f64> = (0..n).map(|_| noise.sample(&mut rng)).collect();
                    if nx.iter().chain(&ny).all(|&e| e == 0.0) {
                        return Ok(1.0);
                    }
                    let hx: Vec<f64> = pulses.hx.iter().zip(&nx).map(|(h, e)| h + e).collect();
                    let hy: Vec<f64> = pulses.hy.iter().zip(&ny).map(|(h, e)| h + e).collect();
                    let perturbed = channel_from_amplitudes(config, &hx, &hy)?;
                    Ok(channel_superfidelity(&reference, &perturbed, &sigma)?.value())
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NoiseSweepResult::from_samples(s_values.to_vec(), samples))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    pub c: f64,
    /// `max |mean − (1 − c s²)| / mean` over the fitted points.
    pub rel_error: f64,
    pub s_cutoff: f64,
}

/// Least-squares fit of `mean = 1 − c s²` over `s ≤ s_cutoff`.
pub fn quadratic_fit(s_values: &[f64], means: &[f64], s_cutoff: f64) -> Result<QuadraticFit> {
    if s_values.len() != means.len() {
        return shape_err("s values and means differ in length");
    }
    let points: Vec<(f64, f64)> = s_values
        .iter()
        .zip(means)
        .filter(|(s, _)| **s <= s_cutoff)
        .map(|(&s, &m)| (s, m))
        .collect();
    if points.len() < 3 {
        return Err(Error::Fit(format!(
            "need at least 3 points with s <= {s_cutoff}, have {}",
            points.len()
        )));
    }
    let s4: f64 = points.iter().map(|(s, _)| s.powi(4)).sum();
    if s4 == 0.0 {
        return Err(Error::Fit("all noise levels in the fit window are zero".into()));
    }
    let c = points.iter().map(|(s, m)| s * s * (1.0 - m)).sum::<f64>() / s4;
    let rel_error = points
        .iter()
        .map(|(s, m)| (m - (1.0 - c * s * s)).abs() / m.abs())
        .fold(0.0, f64::max);
    Ok(QuadraticFit { c, rel_error, s_cutoff })
}

pub fn fit_sweep(result: &NoiseSweepResult, s_cutoff: f64) -> Result<QuadraticFit> {
    quadratic_fit(&result.s_values, &result.mean, s_cutoff)
}

/// Everything needed to rerun the chain experiment from one file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub chain: SpinChainConfig,
    #[serde(default = "default_target")]
    pub target: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_s_values")]
    pub s_values: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
    /// Upper end of the fit window; defaults to the middle of the `s` grid.
    #[serde(default)]
    pub s_cutoff: Option<f64>,
}

fn default_target() -> String {
    "NOT3".into()
}

/// `0, 0.02, …, 0.2`.
pub fn default_s_values() -> Vec<f64> {
    (0..=10).map(|k| k as f64 * 0.02).collect()
}

fn default_trials() -> usize {
    100
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            chain: SpinChainConfig::three_qubit_not(),
            target: default_target(),
            seed: 0,
            s_values: default_s_values(),
            trials: default_trials(),
            optimizer: OptimizerSettings::default(),
            s_cutoff: None,
        }
    }
}

impl Default for SpinChainConfig {
    fn default() -> Self {
        Self::three_qubit_not()
    }
}

impl ExperimentConfig {
    pub fn target_gate(&self) -> Result<ComplexMatrix> {
        parse_target(&self.target, self.chain.n_qubits)
    }

    pub fn fit_cutoff(&self) -> f64 {
        self.s_cutoff.unwrap_or_else(|| {
            let max = self.s_values.iter().copied().fold(0.0, f64::max);
            max / 2.0 + 1e-12
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs_diff, trace};
    use crate::random;

    fn small(n: usize, gamma: f64, coupling: f64) -> SpinChainConfig {
        SpinChainConfig {
            n_qubits: n,
            coupling,
            gamma,
            n_intervals: 8,
            total_time: 2.0,
            max_amplitude: 10.0,
        }
    }

    fn random_pulses(config: &SpinChainConfig, seed: u64) -> PulseSchedule {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = config.n_intervals;
        PulseSchedule {
            hx: (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
            hy: (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
            total_time: config.total_time,
        }
    }

    fn unit_trace_phase(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
        // distance up to a global phase
        let overlap = (b.adjoint() * a).trace();
        let phase = overlap / overlap.norm();
        max_abs_diff(a, &(b * phase))
    }

    #[test]
    fn config_validation() {
        assert!(SpinChainConfig::three_qubit_not().validate().is_ok());
        let bad = [
            SpinChainConfig { n_qubits: 0, ..SpinChainConfig::three_qubit_not() },
            SpinChainConfig { n_intervals: 0, ..SpinChainConfig::three_qubit_not() },
            SpinChainConfig { total_time: 0.0, ..SpinChainConfig::three_qubit_not() },
            SpinChainConfig { max_amplitude: -1.0, ..SpinChainConfig::three_qubit_not() },
            SpinChainConfig { gamma: -0.1, ..SpinChainConfig::three_qubit_not() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
        }
    }

    #[test]
    fn config_json_uses_short_names() {
        let json = r#"{"n_qubits":3,"J":1.0,"gamma":0.1,"N":64,"T":6.1,"max_amplitude":10.0,
                       "target":"NOT3","seed":7,"s_values":[0.0,0.1],"trials":100}"#;
        let cfg: ExperimentConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.chain, SpinChainConfig::three_qubit_not());
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.optimizer, OptimizerSettings::default());
    }

    #[test]
    fn two_site_heisenberg_spectrum() {
        let h = drift_hamiltonian(&small(2, 0.0, 1.0)).unwrap();
        let eig = hermitian_eig(&h).unwrap();
        let expected = [1.0, 1.0, 1.0, -3.0];
        for (l, e) in eig.values.iter().zip(expected) {
            assert!((l - e).abs() < 1e-12);
        }
    }

    #[test]
    fn drift_examples() {
        let h = drift_hamiltonian(&small(3, 0.0, 0.0)).unwrap();
        assert_eq!(h, zeros(8, 8));
        assert!(matches!(drift_hamiltonian(&small(1, 0.0, 1.0)), Err(Error::Domain(_))));

        let h = drift_hamiltonian(&small(3, 0.0, 1.0)).unwrap();
        assert!(max_abs_diff(&h, &h.adjoint()) < 1e-15);
        let sz_total = (0..3).fold(zeros(8, 8), |acc, i| acc + site_operator(&sigma_z(), i, 3));
        let commutator = &h * &sz_total - &sz_total * &h;
        assert!(commutator.norm() < 1e-12);
    }

    #[test]
    fn control_examples() {
        assert_eq!(control_hamiltonian(0.0, 0.0, 3), zeros(8, 8));
        assert_eq!(control_hamiltonian(1.0, 0.0, 1), sigma_x());
        let h = control_hamiltonian(0.3, -1.7, 3);
        assert!(max_abs_diff(&h, &h.adjoint()) < 1e-15);
        assert!(trace(&h).norm() < 1e-15);
        let expected = kron(&sigma_y(), &identity(4)) * c(-1.7, 0.0) + kron(&sigma_x(), &identity(4)) * c(0.3, 0.0);
        assert!(max_abs_diff(&h, &expected) < 1e-15);
    }

    #[test]
    fn trivial_evolution_is_identity() {
        let cfg = small(2, 0.0, 0.0);
        let ch = evolve_channel(&cfg, &PulseSchedule::zeros(&cfg)).unwrap();
        assert_eq!(ch.len(), 1);
        assert!(unit_trace_phase(&ch.operators()[0], &identity(4)) < 1e-12);
    }

    #[test]
    fn closed_evolution_is_the_unitary_product() {
        let cfg = small(3, 0.0, 1.0);
        let pulses = random_pulses(&cfg, 3);
        let ch = evolve_channel(&cfg, &pulses).unwrap();
        assert_eq!(ch.len(), 1);
        let k = &ch.operators()[0];
        assert!(is_unitary(k, 1e-8));
        let u = evolve_unitary(&cfg, &pulses).unwrap();
        assert!(unit_trace_phase(k, &u) < 1e-8);
    }

    #[test]
    fn open_evolution_is_cptp() {
        let cfg = small(3, 0.2, 1.0);
        let pulses = random_pulses(&cfg, 4);
        let m = evolve_superoperator(&cfg, &pulses).unwrap();
        assert!(choi_from_natural(&m).min_eigenvalue() > -1e-7);
        let ch = evolve_channel(&cfg, &pulses).unwrap();
        assert!(ch.tp_residual() < 1e-7);
        assert!(ch.len() > 1);
    }

    #[test]
    fn strong_dephasing_kills_coherences() {
        let cfg = SpinChainConfig {
            gamma: 20.0,
            ..small(1, 0.0, 0.0)
        };
        let ch = evolve_channel(&cfg, &PulseSchedule::zeros(&cfg)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let out = ch.apply(&random::density(&mut rng, 2)).unwrap();
            assert!(out.matrix()[(0, 1)].norm() < 1e-6);
        }
    }

    #[test]
    fn schedule_validation() {
        let cfg = small(2, 0.0, 1.0);
        let mut p = PulseSchedule::zeros(&cfg);
        p.hx[0] = 10.5;
        assert!(matches!(evolve_channel(&cfg, &p), Err(Error::Config(_))));
        let short = PulseSchedule {
            hx: vec![0.0; 3],
            hy: vec![0.0; 3],
            total_time: 2.0,
        };
        assert!(matches!(evolve_channel(&cfg, &short), Err(Error::Config(_))));
    }

    #[test]
    fn targets() {
        let not3 = parse_target("NOT3", 3).unwrap();
        assert_eq!(not3, kron_all([&identity(2), &identity(2), &sigma_x()]));
        assert_eq!(parse_target("I", 2).unwrap(), identity(4));
        assert!(parse_target("NOT4", 3).is_err());
        assert!(parse_target("CNOT", 3).is_err());
    }

    #[test]
    fn gate_fidelity_examples() {
        let target = parse_target("NOT3", 3).unwrap();
        let exact = KrausChannel::unitary(target.clone()).unwrap();
        assert!((gate_fidelity(&exact, &target).unwrap().value() - 1.0).abs() < 1e-12);

        let wrong = KrausChannel::unitary(&target * site_operator(&sigma_x(), 1, 3)).unwrap();
        assert!(gate_fidelity(&wrong, &target).unwrap().value() < 1.0 - 1e-6);

        let g = gate_fidelity(&KrausChannel::identity(8), &target).unwrap().value();
        assert!(g.abs() < 1e-15);

        assert!(matches!(gate_fidelity(&exact, &(target * c(2.0, 0.0))), Err(Error::Domain(_))));
    }

    #[test]
    fn closed_objective_matches_gate_fidelity() {
        let cfg = small(2, 0.0, 1.0);
        let target = parse_target("NOT2", 2).unwrap();
        let pulses = random_pulses(&cfg, 9);
        let obj = objective_for(&cfg, &target).unwrap();
        let f = obj.value(&pulses.hx, &pulses.hy).unwrap();
        let g = gate_fidelity(&evolve_channel(&cfg, &pulses).unwrap(), &target).unwrap();
        assert!((f - g.value()).abs() < 1e-10);
    }

    #[test]
    fn open_objective_matches_gate_fidelity() {
        let cfg = small(2, 0.3, 1.0);
        let target = parse_target("NOT2", 2).unwrap();
        let pulses = random_pulses(&cfg, 10);
        let obj = objective_for(&cfg, &target).unwrap();
        let f = obj.value(&pulses.hx, &pulses.hy).unwrap();
        let g = gate_fidelity(&evolve_channel(&cfg, &pulses).unwrap(), &target).unwrap();
        assert!((f - g.value()).abs() < 1e-10);
    }

    fn central_difference(obj: &dyn Objective, hx: &[f64], hy: &[f64], k: usize, on_x: bool) -> f64 {
        let h = 1e-6;
        let shifted = |delta: f64| {
            let (mut x, mut y) = (hx.to_vec(), hy.to_vec());
            if on_x {
                x[k] += delta;
            } else {
                y[k] += delta;
            }
            obj.value(&x, &y).unwrap()
        };
        (shifted(h) - shifted(-h)) / (2.0 * h)
    }

    #[test]
    fn closed_gradient_is_exact() {
        let cfg = small(3, 0.0, 1.0);
        let target = parse_target("NOT3", 3).unwrap();
        let p = random_pulses(&cfg, 11);
        let obj = objective_for(&cfg, &target).unwrap();
        let (_, gx, gy) = obj.value_and_gradient(&p.hx, &p.hy).unwrap();
        for k in [0, 3, 7] {
            assert!((gx[k] - central_difference(obj.as_ref(), &p.hx, &p.hy, k, true)).abs() < 1e-7);
            assert!((gy[k] - central_difference(obj.as_ref(), &p.hx, &p.hy, k, false)).abs() < 1e-7);
        }
    }

    #[test]
    fn open_gradient_error_shrinks_with_interval_length() {
        let target = parse_target("NOT2", 2).unwrap();
        let rel_error = |n_intervals: usize| {
            let cfg = SpinChainConfig {
                n_intervals,
                ..small(2, 0.1, 1.0)
            };
            let (hx, hy) = (vec![1.0; n_intervals], vec![-0.5; n_intervals]);
            let obj = objective_for(&cfg, &target).unwrap();
            let (_, gx, _) = obj.value_and_gradient(&hx, &hy).unwrap();
            let fd = central_difference(obj.as_ref(), &hx, &hy, 0, true);
            (gx[0] - fd).abs() / fd.abs()
        };
        let (coarse, fine) = (rel_error(16), rel_error(64));
        assert!(fine < coarse / 2.0, "{coarse} -> {fine}");
        assert!(fine < 0.1, "{fine}");
    }

    #[test]
    fn single_qubit_flip_is_found() {
        let cfg = SpinChainConfig {
            n_qubits: 1,
            coupling: 0.0,
            gamma: 0.0,
            n_intervals: 16,
            total_time: std::f64::consts::PI,
            max_amplitude: 10.0,
        };
        let target = sigma_x();
        let r = optimize_pulses(&cfg, &target, 1, 500, 0.999).unwrap();
        assert!(r.reached_target, "{}", r.fidelity);
        let g = gate_fidelity(&evolve_channel(&cfg, &r.pulses).unwrap(), &target).unwrap();
        assert!(g.value() >= 0.999);
        assert_eq!(optimize_pulses(&cfg, &target, 1, 500, 0.999).unwrap(), r);
    }

    #[test]
    fn optimizer_respects_amplitude_bound() {
        let cfg = SpinChainConfig {
            max_amplitude: 0.5,
            ..small(2, 0.0, 1.0)
        };
        let target = parse_target("NOT2", 2).unwrap();
        let r = optimize_pulses(&cfg, &target, 2, 50, 0.999).unwrap();
        assert!(r.pulses.max_abs() <= 0.5);
        assert!(r.pulses.validate(&cfg).is_ok());
        assert!(optimize_pulses(&cfg, &target, 2, 50, 1.0).is_err());
    }

    #[test]
    fn trial_seeds_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for si in 0..11 {
            for t in 0..100 {
                assert!(seen.insert(trial_seed(42, si, t)));
            }
        }
    }

    #[test]
    fn sweep_basics() {
        let cfg = small(2, 0.1, 1.0);
        let pulses = random_pulses(&cfg, 13);
        let r = noise_sweep(&cfg, &pulses, &[0.0, 0.05, 0.2], 6, 3).unwrap();
        assert!(r.samples[0].iter().all(|&g| g == 1.0));
        assert_eq!(r.mean[0], 1.0);
        for i in 0..3 {
            assert!(r.min[i] <= r.mean[i] && r.mean[i] <= r.max[i]);
            assert!(r.samples[i].iter().all(|g| (0.0..=1.0).contains(g)));
        }
        assert!(r.mean[2] < r.mean[1]);
        assert_eq!(noise_sweep(&cfg, &pulses, &[0.0, 0.05, 0.2], 6, 3).unwrap(), r);
        assert!(noise_sweep(&cfg, &pulses, &[-0.1], 6, 3).is_err());
        assert!(noise_sweep(&cfg, &pulses, &[0.1], 0, 3).is_err());
    }

    #[test]
    fn fit_recovers_exact_model() {
        let s: Vec<f64> = (0..6).map(|k| 0.02 * k as f64).collect();
        let means: Vec<f64> = s.iter().map(|s| 1.0 - 2.0 * s * s).collect();
        let fit = quadratic_fit(&s, &means, 0.1).unwrap();
        assert!((fit.c - 2.0).abs() < 1e-12);
        assert!(fit.rel_error < 1e-14);

        let mut rev_s = s.clone();
        let mut rev_m = means.clone();
        rev_s.reverse();
        rev_m.reverse();
        assert!((quadratic_fit(&rev_s, &rev_m, 0.1).unwrap().c - fit.c).abs() < 1e-15);

        assert!(matches!(quadratic_fit(&[0.0; 4], &[1.0; 4], 0.1), Err(Error::Fit(_))));
        assert!(matches!(quadratic_fit(&s[..2], &means[..2], 0.1), Err(Error::Fit(_))));
    }
}
