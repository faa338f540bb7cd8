//! Qubit-cavity Hamiltonians, the classical drive displacement and time
//! evolution.
//!
//! The register is `(cavity, qubit)` with the qubit index fastest. Qubit level
//! 0 is `|g>`, level 1 is `|e>`, and `sigma_z = diag(-1, +1)`, so
//! `sigma_+ = |e><g|`.

use std::f64::consts::{FRAC_PI_2, PI};

use log::warn;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gates;
use crate::hilbert::{reduced_density, LinearOperator, Matrix, StateVector, SubsystemLayout, C64};

const QUBIT: usize = 1;
const I: C64 = C64::new(0.0, 1.0);

/// Lab-frame drive frequency used by the calibrated presets, in units of `g`.
pub const DEFAULT_DRIVE_FREQUENCY: f64 = 50.0;
pub const DEFAULT_N_MAX: usize = 4;
/// `g / 2pi` in Hz for SI-scaled runs.
pub const SI_COUPLING_HZ: f64 = 100.0e6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseParams {
    pub omega_r: f64,
    pub nu: f64,
    pub g: f64,
    pub omega_d: f64,
    pub epsilon: C64,
    pub n_max: usize,
}

impl PulseParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.omega_r, self.nu, self.g, self.omega_d, self.epsilon.re, self.epsilon.im];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParams("non-finite parameter".into()));
        }
        if self.g < 0.0 {
            return Err(Error::InvalidParams(format!("coupling g = {} is negative", self.g)));
        }
        if self.n_max < 1 {
            return Err(Error::InvalidParams("n_max must be at least 1".into()));
        }
        Ok(())
    }

    /// Resonant qubit and cavity (`nu = omega_r`), undriven.
    pub fn resonant(g: f64, omega_r: f64, n_max: usize) -> Self {
        Self {
            omega_r,
            nu: omega_r,
            g,
            omega_d: 0.0,
            epsilon: C64::new(0.0, 0.0),
            n_max,
        }
    }

    /// Dispersive x-rotation preset with `g = 1`: cavity detuning
    /// `delta = ratio`, Rabi frequency `rabi` and the qubit detuning that
    /// cancels the dispersive shift of `|e,0>`, `Delta = g^2/delta`.
    pub fn dispersive_x(ratio: f64, rabi: f64, n_max: usize) -> Self {
        let (g, delta) = (1.0, ratio);
        let detuning = g * g / delta;
        Self {
            omega_r: DEFAULT_DRIVE_FREQUENCY + delta,
            nu: DEFAULT_DRIVE_FREQUENCY + detuning,
            g,
            omega_d: DEFAULT_DRIVE_FREQUENCY,
            epsilon: C64::new(rabi * delta / (2.0 * g), 0.0),
            n_max,
        }
    }

    /// Dispersive z-rotation preset with `g = 1`.
    pub fn dispersive_z(ratio: f64, detuning: f64, rabi: f64, n_max: usize) -> Self {
        Self {
            nu: DEFAULT_DRIVE_FREQUENCY + detuning,
            ..Self::dispersive_x(ratio, rabi, n_max)
        }
    }

    /// Moves the drive to `omega_d`, shifting `omega_r` and `nu` with it so
    /// `delta` and `Delta` are unchanged.
    pub fn with_drive_frequency(&self, omega_d: f64) -> Self {
        let shift = omega_d - self.omega_d;
        Self {
            omega_r: self.omega_r + shift,
            nu: self.nu + shift,
            omega_d,
            ..*self
        }
    }

    /// Every rate multiplied by `factor` (unit conversion).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            omega_r: self.omega_r * factor,
            nu: self.nu * factor,
            g: self.g * factor,
            omega_d: self.omega_d * factor,
            epsilon: self.epsilon * factor,
            n_max: self.n_max,
        }
    }

    pub fn layout(&self) -> SubsystemLayout {
        SubsystemLayout::pulse_level(self.n_max)
    }

    pub fn dim(&self) -> usize {
        2 * (self.n_max + 1)
    }

    /// `delta = omega_r - omega_d`.
    pub fn delta(&self) -> f64 {
        self.omega_r - self.omega_d
    }

    /// `Delta = nu - omega_d`.
    pub fn detuning(&self) -> f64 {
        self.nu - self.omega_d
    }

    /// `Omega = 2 g epsilon / delta`.
    pub fn rabi(&self) -> Result<C64> {
        let delta = self.delta();
        if delta == 0.0 {
            return Err(Error::ZeroRate {
                quantity: "delta",
                context: "the Rabi frequency 2 g epsilon / delta needs an off-resonant drive",
            });
        }
        Ok(self.epsilon * (2.0 * self.g / delta))
    }

    /// `chi = Delta + g^2/delta + |Omega|^2 / (2 Delta)`.
    pub fn chi(&self) -> Result<f64> {
        let detuning = self.detuning();
        if detuning == 0.0 {
            return Err(Error::ZeroRate {
                quantity: "Delta",
                context: "chi contains Omega^2 / (2 Delta)",
            });
        }
        let rabi = self.rabi()?;
        Ok(detuning + self.g * self.g / self.delta() + rabi.norm_sqr() / (2.0 * detuning))
    }
}

/// Cavity-only `a` truncated at `n_max` photons.
fn annihilation(n_max: usize) -> Matrix {
    let d = n_max + 1;
    let mut a = Matrix::zeros(d, d);
    for k in 1..d {
        a[(k - 1, k)] = C64::new((k as f64).sqrt(), 0.0);
    }
    a
}

/// Ladder and qubit operators on `cavity(n_max) ⊗ qubit`.
struct Ops {
    a: Matrix,
    ad: Matrix,
    n: Matrix,
    sz: Matrix,
    sp: Matrix,
    sm: Matrix,
}

impl Ops {
    fn new(n_max: usize) -> Self {
        let a_c = annihilation(n_max);
        let d = n_max + 1;
        let i_c = Matrix::identity(d, d);
        let i_q = Matrix::identity(2, 2);
        let mut sz_q = Matrix::zeros(2, 2);
        sz_q[(0, 0)] = C64::new(-1.0, 0.0);
        sz_q[(1, 1)] = C64::new(1.0, 0.0);
        let mut sp_q = Matrix::zeros(2, 2);
        sp_q[(1, 0)] = C64::new(1.0, 0.0);
        let a = a_c.kronecker(&i_q);
        let ad = a.adjoint();
        Self {
            n: &ad * &a,
            sz: i_c.kronecker(&sz_q),
            sp: i_c.kronecker(&sp_q),
            sm: i_c.kronecker(&sp_q.adjoint()),
            a,
            ad,
        }
    }
}

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn hermitian(m: Matrix) -> LinearOperator {
    // Builders are Hermitian by construction; symmetrize away rounding.
    let h = (&m + m.adjoint()) * re(0.5);
    LinearOperator::hermitian(h).expect("symmetrized matrix is Hermitian")
}

/// `H = omega_r a^dag a + (nu/2) sigma_z - g (a^dag sigma_- + a sigma_+)`.
pub fn build_jc(p: &PulseParams) -> Result<LinearOperator> {
    p.validate()?;
    let o = Ops::new(p.n_max);
    let coupling = &o.ad * &o.sm + &o.a * &o.sp;
    Ok(hermitian(&o.n * re(p.omega_r) + &o.sz * re(p.nu / 2.0) - coupling * re(p.g)))
}

/// `h(t) = epsilon a^dag e^{-i omega_d t} + h.c.`
pub fn build_drive(p: &PulseParams, t: f64) -> Result<LinearOperator> {
    p.validate()?;
    let o = Ops::new(p.n_max);
    let c = p.epsilon * C64::from_polar(1.0, -p.omega_d * t);
    Ok(hermitian(&o.ad * c + &o.a * c.conj()))
}

/// `H_D = omega_r a^dag a + (nu/2) sigma_z - g[(a + alpha) sigma_+ + (a^dag + alpha^*) sigma_-]`.
pub fn build_displaced(p: &PulseParams, alpha: C64) -> Result<LinearOperator> {
    p.validate()?;
    let o = Ops::new(p.n_max);
    let id = Matrix::identity(p.dim(), p.dim());
    let up = (&o.a + &id * alpha) * &o.sp;
    let down = (&o.ad + &id * alpha.conj()) * &o.sm;
    Ok(hermitian(&o.n * re(p.omega_r) + &o.sz * re(p.nu / 2.0) - (up + down) * re(p.g)))
}

/// `H_RF = delta a^dag a + (Delta/2) sigma_z + (Omega sigma_+ + Omega^* sigma_-)/2 - g (a sigma_+ + a^dag sigma_-)`.
///
/// For real `epsilon` the drive term is `(Omega/2) sigma_x`; a complex drive
/// amplitude rotates the axis within the x-y plane.
pub fn build_rotating(p: &PulseParams) -> Result<LinearOperator> {
    p.validate()?;
    let rabi = p.rabi()?;
    let o = Ops::new(p.n_max);
    let drive = (&o.sp * rabi + &o.sm * rabi.conj()) * re(0.5);
    let coupling = &o.a * &o.sp + &o.ad * &o.sm;
    Ok(hermitian(
        &o.n * re(p.delta()) + &o.sz * re(p.detuning() / 2.0) + drive - coupling * re(p.g),
    ))
}

/// `H_x = delta a^dag a + ((Delta + g^2/delta)/2) sigma_z + (Omega/2) sigma_x`.
pub fn build_dispersive_x(p: &PulseParams) -> Result<LinearOperator> {
    p.validate()?;
    let rabi = p.rabi()?;
    let delta = p.delta();
    if delta.abs() < 5.0 * p.g {
        warn!("dispersive x-rotation outside its regime: |delta|/g = {:.3} < 5", delta.abs() / p.g);
    }
    let o = Ops::new(p.n_max);
    let drive = (&o.sp * rabi + &o.sm * rabi.conj()) * re(0.5);
    let z = (p.detuning() + p.g * p.g / delta) / 2.0;
    Ok(hermitian(&o.n * re(delta) + &o.sz * re(z) + drive))
}

/// `H_z = delta a^dag a + (chi/2) sigma_z`.
pub fn build_dispersive_z(p: &PulseParams) -> Result<LinearOperator> {
    p.validate()?;
    let chi = p.chi()?;
    let rabi = p.rabi()?.norm();
    if rabi > 0.0 && p.detuning().abs() < 5.0 * rabi {
        warn!(
            "dispersive z-rotation outside its regime: |Delta|/|Omega| = {:.3} < 5",
            p.detuning().abs() / rabi
        );
    }
    let o = Ops::new(p.n_max);
    Ok(hermitian(&o.n * re(p.delta()) + &o.sz * re(chi / 2.0)))
}

/// Truncated `D(alpha) = exp(alpha a^dag - alpha^* a)` on the cavity alone.
pub fn displacement(alpha: C64, n_max: usize) -> Result<LinearOperator> {
    let a = annihilation(n_max);
    // D = exp(-i K) with K = i (alpha a^dag - alpha^* a) Hermitian.
    let k = hermitian((a.adjoint() * alpha - &a * alpha.conj()) * I);
    LinearOperator::new(propagator(&k, 1.0)?)
}

/// Closed-form solution of `i alpha' = omega_r alpha + epsilon e^{-i omega_d t}`, `alpha(0) = 0`.
///
/// On resonance (`delta = 0`) the secular solution `-i epsilon t e^{-i omega_r t}`
/// is returned.
pub fn classical_alpha(p: &PulseParams, t: f64) -> Result<C64> {
    p.validate()?;
    let delta = p.delta();
    if delta == 0.0 {
        warn!("resonant drive: displacement grows secularly");
        return Ok(-I * p.epsilon * t * C64::from_polar(1.0, -p.omega_r * t));
    }
    let osc = C64::from_polar(1.0, -p.omega_d * t) - C64::from_polar(1.0, -p.omega_r * t);
    Ok(-(p.epsilon / delta) * osc)
}

/// RK4 integration of the displacement equation with `steps` equal steps.
pub fn alpha_numeric(p: &PulseParams, t: f64, steps: usize) -> Result<C64> {
    p.validate()?;
    if steps == 0 {
        return Err(Error::InvalidEvolution("need at least one step".into()));
    }
    let f = |s: f64, a: C64| -I * (a * p.omega_r + p.epsilon * C64::from_polar(1.0, -p.omega_d * s));
    let h = t / steps as f64;
    let mut a = C64::new(0.0, 0.0);
    for k in 0..steps {
        let s = k as f64 * h;
        let k1 = f(s, a);
        let k2 = f(s + h / 2.0, a + k1 * (h / 2.0));
        let k3 = f(s + h / 2.0, a + k2 * (h / 2.0));
        let k4 = f(s + h, a + k3 * h);
        a += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    Ok(a)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Method {
    MatrixExponential,
    FixedStepRk4 { step: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionSpec {
    pub hamiltonian: LinearOperator,
    pub duration: f64,
    pub method: Method,
}

impl EvolutionSpec {
    pub fn new(hamiltonian: LinearOperator, duration: f64, method: Method) -> Result<Self> {
        let spec = Self {
            hamiltonian,
            duration,
            method,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.hamiltonian.is_hermitian() {
            return Err(Error::NotHermitian {
                deviation: self.hamiltonian.hermiticity_deviation(),
            });
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidEvolution(format!("duration {} must be finite and >= 0", self.duration)));
        }
        if let Method::FixedStepRk4 { step } = self.method {
            if step.is_nan() || step <= 0.0 || (self.duration > 0.0 && step > self.duration / 10.0) {
                return Err(Error::InvalidEvolution(format!(
                    "RK4 step {step} must be positive and at most duration/10"
                )));
            }
        }
        Ok(())
    }
}

/// `exp(-i H t)` through the Hermitian eigendecomposition.
pub fn propagator(h: &LinearOperator, t: f64) -> Result<Matrix> {
    if !h.is_hermitian() {
        return Err(Error::NotHermitian {
            deviation: h.hermiticity_deviation(),
        });
    }
    let eig = h.matrix().clone().symmetric_eigen();
    let v = &eig.eigenvectors;
    let phases = Matrix::from_diagonal(&eig.eigenvalues.map(|e| C64::from_polar(1.0, -e * t)));
    Ok(v * phases * v.adjoint())
}

pub fn evolve(spec: &EvolutionSpec, state: &StateVector) -> Result<StateVector> {
    spec.validate()?;
    if spec.hamiltonian.dim() != state.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.dim(),
            actual: spec.hamiltonian.dim(),
        });
    }
    let out = match spec.method {
        Method::MatrixExponential => propagator(&spec.hamiltonian, spec.duration)? * state.amplitudes(),
        Method::FixedStepRk4 { step } => {
            let h = spec.hamiltonian.matrix();
            rk4(state.amplitudes(), 0.0, spec.duration, step, |_, v| h * v)
        }
    };
    StateVector::new(state.layout().clone(), out)
}

/// Integrates `psi' = -i H(t) psi` with classical RK4. `apply_h(t, v)`
/// returns `H(t) v`. The step is shrunk so it divides `duration` exactly.
pub fn rk4<F>(psi: &DVector<C64>, t0: f64, duration: f64, step: f64, apply_h: F) -> DVector<C64>
where
    F: Fn(f64, &DVector<C64>) -> DVector<C64>,
{
    let steps = (duration / step).ceil().max(0.0) as usize;
    if steps == 0 {
        return psi.clone();
    }
    let h = duration / steps as f64;
    let f = |t: f64, v: &DVector<C64>| apply_h(t, v) * -I;
    let mut v = psi.clone();
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let k1 = f(t, &v);
        let k2 = f(t + h / 2.0, &(&v + &k1 * re(h / 2.0)));
        let k3 = f(t + h / 2.0, &(&v + &k2 * re(h / 2.0)));
        let k4 = f(t + h, &(&v + &k3 * re(h)));
        v += (k1 + k2 * re(2.0) + k3 * re(2.0) + k4) * re(h / 6.0);
    }
    v
}

/// `(<sigma_x>, <sigma_y>, <sigma_z>)` of the qubit.
pub fn qubit_bloch(state: &StateVector) -> Result<[f64; 3]> {
    let rho = reduced_density(state, QUBIT)?;
    // sigma_x = sigma_+ + sigma_-, sigma_y = -i (sigma_+ - sigma_-).
    let coherence = rho[(0, 1)];
    Ok([2.0 * coherence.re, -2.0 * coherence.im, (rho[(1, 1)] - rho[(0, 0)]).re])
}

/// `|n, q>` on the pulse layout, `q = 0` for `|g>`.
pub fn fock_state(p: &PulseParams, photons: usize, excited: bool) -> Result<StateVector> {
    StateVector::basis(p.layout(), &[photons, usize::from(excited)])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "angle")]
pub enum GateKind {
    XRotation(f64),
    ZRotation(f64),
    Iswap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subspace {
    /// `{|g0>, |g1>, |e0>}` for the exchange gate, the cavity-vacuum qubit
    /// block for rotations.
    SingleExcitation,
    /// `{|g0>, |g1>, |e0>, |e1>}` for the exchange gate, cavity photon numbers
    /// 0 and 1 for rotations.
    Full,
}

/// `angle/|Omega|`, `angle/chi` or `pi/(2g)`.
pub fn gate_time(kind: GateKind, p: &PulseParams) -> Result<f64> {
    p.validate()?;
    let (angle, rate, quantity) = match kind {
        GateKind::XRotation(angle) => (angle, p.rabi()?.norm(), "Omega"),
        GateKind::ZRotation(angle) => (angle, p.chi()?, "chi"),
        GateKind::Iswap => (FRAC_PI_2, p.g, "g"),
    };
    if rate == 0.0 {
        return Err(Error::ZeroRate {
            quantity,
            context: "gate time is angle / rate",
        });
    }
    Ok((angle / rate).abs())
}

/// The gate a pulse of the given kind should realize: `exp(-i angle sigma/2)`
/// for rotations, `U(pi/2)` for the exchange gate.
pub fn ideal_gate(kind: GateKind) -> LinearOperator {
    let rotation = |sigma: Matrix, angle: f64| {
        let h = LinearOperator::hermitian(sigma * re(0.5)).expect("Pauli is Hermitian");
        LinearOperator::new(propagator(&h, angle).expect("Hermitian")).expect("square")
    };
    match kind {
        GateKind::XRotation(angle) => rotation(crate::oracle::Pauli::X.matrix(), angle),
        GateKind::ZRotation(angle) => {
            let mut sz = Matrix::zeros(2, 2);
            sz[(0, 0)] = re(-1.0);
            sz[(1, 1)] = re(1.0);
            rotation(sz, angle)
        }
        GateKind::Iswap => gates::u_theta(FRAC_PI_2).operator().clone(),
    }
}

pub fn pulse_gate_fidelity(ideal: &LinearOperator, p: &PulseParams, kind: GateKind, subspace: Subspace) -> Result<f64> {
    pulse_gate_fidelity_at(ideal, p, kind, subspace, gate_time(kind, p)?)
}

/// `|tr(U_ideal^dag U_pulse)|/d` on the chosen subspace after a pulse of the
/// given duration.
///
/// The exchange gate runs under `build_jc` and is compared in the interaction
/// picture of `omega_r a^dag a + (nu/2) sigma_z`, conjugated by the cavity
/// parity `(-1)^{a^dag a}` (the coupling sign of the Hamiltonian is opposite to
/// the `-i sin` of the ideal gate). Rotations run under `build_rotating` and
/// are compared in the frame of `delta a^dag a`.
pub fn pulse_gate_fidelity_at(
    ideal: &LinearOperator,
    p: &PulseParams,
    kind: GateKind,
    subspace: Subspace,
    duration: f64,
) -> Result<f64> {
    p.validate()?;
    let (hamiltonian, frame, parity, expected_dim) = match kind {
        GateKind::Iswap => (build_jc(p)?, (p.omega_r, p.nu), true, 4),
        GateKind::XRotation(_) | GateKind::ZRotation(_) => (build_rotating(p)?, (p.delta(), 0.0), false, 2),
    };
    if ideal.dim() != expected_dim {
        return Err(Error::DimensionMismatch {
            expected: expected_dim,
            actual: ideal.dim(),
        });
    }
    let mut u = propagator(&hamiltonian, duration)?;
    let level = |index: usize| (index / 2, index % 2);
    for row in 0..u.nrows() {
        let (n, q) = level(row);
        let sz = if q == 1 { 1.0 } else { -1.0 };
        let phase = C64::from_polar(1.0, (frame.0 * n as f64 + frame.1 * sz / 2.0) * duration);
        let sign = if parity && n % 2 == 1 { -1.0 } else { 1.0 };
        for col in 0..u.ncols() {
            let col_sign = if parity && level(col).0 % 2 == 1 { -1.0 } else { 1.0 };
            u[(row, col)] *= phase * (sign * col_sign);
        }
    }
    // Pulse-register indices in the ideal gate's basis order.
    let (indices, target): (Vec<usize>, Matrix) = match (kind, subspace) {
        (GateKind::Iswap, Subspace::SingleExcitation) => (vec![0, 2, 1], ideal.matrix().view((0, 0), (3, 3)).into()),
        (GateKind::Iswap, Subspace::Full) => (vec![0, 2, 1, 3], ideal.matrix().clone()),
        (_, Subspace::SingleExcitation) => (vec![0, 1], ideal.matrix().clone()),
        (_, Subspace::Full) => (vec![0, 1, 2, 3], Matrix::identity(2, 2).kronecker(ideal.matrix())),
    };
    let d = indices.len();
    let mut overlap = C64::new(0.0, 0.0);
    for (i, &pi) in indices.iter().enumerate() {
        for (j, &pj) in indices.iter().enumerate() {
            overlap += target[(i, j)].conj() * u[(pi, pj)];
        }
    }
    Ok((overlap.norm() / d as f64).min(1.0))
}

/// Time of the first maximum of `<sigma_z>` under `build_rotating`, starting
/// from `|g,0>` (`<sigma_z> = -1`), searched on `[0, horizon]`.
pub fn pi_pulse_time(p: &PulseParams, horizon: f64) -> Result<f64> {
    const SAMPLES: usize = 20_000;
    let h = build_rotating(p)?;
    let eig = h.matrix().clone().symmetric_eigen();
    let start = fock_state(p, 0, false)?;
    let coeffs = eig.eigenvectors.adjoint() * start.amplitudes();
    let sz = |t: f64| -> f64 {
        let phased = coeffs.zip_map(&eig.eigenvalues, |c, e| c * C64::from_polar(1.0, -e * t));
        let psi = &eig.eigenvectors * phased;
        psi.iter()
            .enumerate()
            .map(|(k, a)| a.norm_sqr() * if k % 2 == 1 { 1.0 } else { -1.0 })
            .sum()
    };
    let dt = horizon / SAMPLES as f64;
    let values: Vec<f64> = (0..=SAMPLES).map(|k| sz(k as f64 * dt)).collect();
    let k = (1..SAMPLES)
        .find(|&k| values[k] > 0.0 && values[k] >= values[k - 1] && values[k] >= values[k + 1])
        .ok_or_else(|| Error::InvalidEvolution(format!("no <sigma_z> maximum before t = {horizon}")))?;
    // Parabolic refinement through the three samples around the peak.
    let (a, b, c) = (values[k - 1], values[k], values[k + 1]);
    let denom = a - 2.0 * b + c;
    let offset = if denom.abs() > 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
    Ok((k as f64 + offset) * dt)
}

/// One point of the dispersive x-rotation sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub ratio: f64,
    pub fidelity: f64,
    pub pi_time: f64,
    pub predicted_time: f64,
}

impl SweepPoint {
    pub fn timing_error(&self) -> f64 {
        (self.pi_time - self.predicted_time).abs() / self.predicted_time
    }
}

/// pi x-rotation fidelity and timing at `delta/g = ratio` with `Omega = rabi * g`.
pub fn x_rotation_point(ratio: f64, rabi: f64, n_max: usize) -> Result<SweepPoint> {
    let p = PulseParams::dispersive_x(ratio, rabi, n_max);
    let kind = GateKind::XRotation(PI);
    let predicted_time = gate_time(kind, &p)?;
    Ok(SweepPoint {
        ratio,
        fidelity: pulse_gate_fidelity(&ideal_gate(kind), &p, kind, Subspace::SingleExcitation)?,
        pi_time: pi_pulse_time(&p, 1.5 * predicted_time)?,
        predicted_time,
    })
}

/// Largest deviation between lab-frame and displaced-frame qubit observables.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameComparison {
    pub max_bloch_deviation: f64,
    pub min_state_fidelity: f64,
    pub samples: usize,
}

/// Evolves `|g,0>` under `build_jc + build_drive(t)` and under
/// `build_displaced(alpha(t))` with the same RK4 step, comparing qubit
/// observables and `D(alpha(t)) psi_D` against `psi_lab` every `sample_every`
/// steps.
pub fn frame_equivalence(p: &PulseParams, duration: f64, step: f64, sample_every: usize) -> Result<FrameComparison> {
    p.validate()?;
    let o = Ops::new(p.n_max);
    let h_jc = build_jc(p)?.into_matrix();
    let coupling_up = &o.sp * re(p.g);
    let coupling_down = &o.sm * re(p.g);
    let lab = |t: f64, v: &DVector<C64>| {
        let c = p.epsilon * C64::from_polar(1.0, -p.omega_d * t);
        &h_jc * v + (&o.ad * v) * c + (&o.a * v) * c.conj()
    };
    let displaced = |t: f64, v: &DVector<C64>| {
        let alpha = classical_alpha(p, t).expect("validated");
        &h_jc * v - (&coupling_up * v) * alpha - (&coupling_down * v) * alpha.conj()
    };
    let steps = (duration / step).ceil() as usize;
    let chunk = sample_every.max(1);
    let h = duration / steps as f64;
    let layout = p.layout();
    let mut psi_lab = fock_state(p, 0, false)?.amplitudes().clone();
    let mut psi_d = psi_lab.clone();
    let mut result = FrameComparison {
        max_bloch_deviation: 0.0,
        min_state_fidelity: 1.0,
        samples: 0,
    };
    let mut k = 0;
    while k < steps {
        let n = chunk.min(steps - k);
        let t0 = k as f64 * h;
        psi_lab = rk4(&psi_lab, t0, n as f64 * h, h, lab);
        psi_d = rk4(&psi_d, t0, n as f64 * h, h, displaced);
        k += n;
        let t = k as f64 * h;
        let a = StateVector::new(layout.clone(), psi_lab.clone())?;
        let b = StateVector::new(layout.clone(), psi_d.clone())?;
        let (ba, bb) = (qubit_bloch(&a)?, qubit_bloch(&b)?);
        let dev = ba.iter().zip(&bb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let shifted = crate::hilbert::apply(&displacement(classical_alpha(p, t)?, p.n_max)?, &[0], &b)?;
        let fid = crate::hilbert::fidelity(&a, &shifted)?;
        result.max_bloch_deviation = result.max_bloch_deviation.max(dev);
        result.min_state_fidelity = result.min_state_fidelity.min(fid);
        result.samples += 1;
    }
    Ok(result)
}
