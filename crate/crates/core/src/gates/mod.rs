//! Ideal gate library.
//!
//! Two-qubit matrices are written over their targets in the order given,
//! first target most significant. For [`u_theta`] that is
//! `{|g0>, |g1>, |e0>, |e1>}` (qubit first, cavity second); both [`u_theta`]
//! and [`u_c`] are symmetric under exchange of their two factors, so callers
//! may list the cavity first. Controlled gates take the cavity (control) first.

mod circuit;

pub use circuit::{reset_subsystem, Circuit, ResetState, Step, StepOutcome};

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4};

use crate::error::{Error, Result};
use crate::hilbert::{LinearOperator, Matrix, C64};
use crate::oracle::Pauli;

/// Unitarity tolerance for every gate in the library.
pub const GATE_UNITARY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct GateOp {
    name: String,
    operator: LinearOperator,
    arity: usize,
    param: Option<f64>,
}

impl GateOp {
    pub fn new(name: impl Into<String>, matrix: Matrix, param: Option<f64>) -> Result<Self> {
        let name = name.into();
        let operator = LinearOperator::new(matrix)?;
        let arity = match operator.dim() {
            2 => 1,
            4 => 2,
            d => {
                return Err(Error::DimensionMismatch {
                    expected: 4,
                    actual: d,
                })
            }
        };
        let deviation = operator.unitarity_deviation();
        if deviation >= GATE_UNITARY_TOL {
            return Err(Error::NotUnitary { deviation });
        }
        Ok(Self {
            name,
            operator,
            arity,
            param,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn operator(&self) -> &LinearOperator {
        &self.operator
    }

    pub fn matrix(&self) -> &Matrix {
        self.operator.matrix()
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn param(&self) -> Option<f64> {
        self.param
    }
}

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn im(x: f64) -> C64 {
    C64::new(0.0, x)
}

fn fixed(name: &str, size: usize, entries: &[C64]) -> GateOp {
    GateOp::new(name, Matrix::from_row_slice(size, size, entries), None)
        .expect("library gate is unitary")
}

pub fn hadamard() -> GateOp {
    let h = FRAC_1_SQRT_2;
    fixed("h", 2, &[re(h), re(h), re(h), re(-h)])
}

pub fn pauli(p: Pauli) -> GateOp {
    let name = match p {
        Pauli::I => "i",
        Pauli::X => "x",
        Pauli::Y => "y",
        Pauli::Z => "z",
    };
    GateOp::new(name, p.matrix(), None).expect("Pauli is unitary")
}

/// `diag(e^{-i pi/4}, e^{+i pi/4})`.
pub fn z_half() -> GateOp {
    z_half_with_sign(1.0)
}

fn z_half_with_sign(sign: f64) -> GateOp {
    let a = C64::from_polar(1.0, -sign * FRAC_PI_4);
    fixed("z_half", 2, &[a, re(0.0), re(0.0), a.conj()])
}

/// Resonant qubit-cavity exchange at `theta = g t`.
pub fn u_theta(theta: f64) -> GateOp {
    let (s, c) = theta.sin_cos();
    let (o, l) = (re(0.0), re(1.0));
    #[rustfmt::skip]
    let m = Matrix::from_row_slice(4, 4, &[
        l, o,        o,        o,
        o, re(c),    im(-s),   o,
        o, im(-s),   re(c),    o,
        o, o,        o,        l,
    ]);
    GateOp::new("u_theta", m, Some(theta)).expect("u_theta is unitary")
}

fn u_c_literal() -> GateOp {
    let (o, l) = (re(0.0), re(1.0));
    #[rustfmt::skip]
    let entries = [
        l, o, o, o,
        o, o, l, o,
        o, l, o, o,
        o, o, o, -l,
    ];
    fixed("uc", 4, &entries)
}

/// `(I ⊗ Z_half) · U(pi/2) · (I ⊗ Z_half)` for a given `Z_half` sign.
fn u_c_composed(sign: f64) -> Matrix {
    let zh = LinearOperator::identity(2).kron(z_half_with_sign(sign).operator());
    zh.matrix() * u_theta(FRAC_PI_2).matrix() * zh.matrix()
}

/// Swap with a controlled phase flip: `|11> -> -|11>`.
///
/// Checked at construction against the composition of [`z_half`] and
/// `U(pi/2)`; a failing check means the basis conventions have drifted.
pub fn u_c_checked() -> Result<GateOp> {
    let literal = u_c_literal();
    for sign in [1.0, -1.0] {
        let composed = LinearOperator::new(u_c_composed(sign))?;
        if unitary_distance_up_to_phase(&composed, literal.operator())? < 1e-12 {
            return Ok(literal);
        }
    }
    Err(Error::CompositionCheck(
        "(I x Z_half) U(pi/2) (I x Z_half) differs from the swap/phase-flip gate for both Z_half signs".into(),
    ))
}

pub fn u_c() -> GateOp {
    u_c_checked().expect("u_c composition check")
}

pub fn cz() -> GateOp {
    let (o, l) = (re(0.0), re(1.0));
    fixed("cz", 4, &[l, o, o, o, o, l, o, o, o, o, l, o, o, o, o, -l])
}

pub fn swap() -> GateOp {
    let (o, l) = (re(0.0), re(1.0));
    fixed("swap", 4, &[l, o, o, o, o, o, l, o, o, l, o, o, o, o, o, l])
}

/// `|0><0| ⊗ P + |1><1| ⊗ I` with the cavity as control.
fn controlled_on_zero(name: &str, p: &Matrix) -> GateOp {
    let mut m = Matrix::zeros(4, 4);
    m.view_mut((0, 0), (2, 2)).copy_from(p);
    m.view_mut((2, 2), (2, 2)).copy_from(&Matrix::identity(2, 2));
    GateOp::new(name, m, None).expect("controlled Pauli is unitary")
}

/// `U_z = |0><0| ⊗ sigma_z + |1><1| ⊗ I`.
pub fn controlled_z_on_spin() -> GateOp {
    controlled_on_zero("u_z", &Pauli::Z.matrix())
}

/// `U_x = |0><0| ⊗ sigma_x + |1><1| ⊗ I`, equal to `U_z` conjugated by a
/// Hadamard on the spin.
pub fn controlled_x_on_spin() -> GateOp {
    controlled_on_zero("u_x", &Pauli::X.matrix())
}

/// Cavity-controlled fractional Pauli `|0><0| ⊗ P^{theta/pi} + |1><1| ⊗ I`
/// with `sin(theta/2) = eta`.
///
/// Acting on `|+>_cav ⊗ |phi>`, the cavity-`|0>` branch carries `P|phi>` with
/// amplitude `eta` relative to the untouched `|1>` branch. `eta = 1` gives
/// [`controlled_x_on_spin`] / [`controlled_z_on_spin`] exactly, `eta = 0` the
/// identity.
pub fn controlled_partial(p: Pauli, eta: f64) -> Result<GateOp> {
    if !(-1.0..=1.0).contains(&eta) || eta.is_nan() {
        return Err(Error::InvalidEta(eta));
    }
    let name = match p {
        Pauli::X => "u_x_eta",
        Pauli::Z => "u_z_eta",
        other => {
            return Err(Error::InvalidTargets {
                targets: vec![],
                reason: format!("partial controlled gate needs X or Z, got {}", other.letter()),
            })
        }
    };
    let theta = 2.0 * eta.asin();
    let e = C64::from_polar(1.0, theta);
    let identity = Matrix::identity(2, 2);
    let block = &identity * ((re(1.0) + e) * 0.5) + p.matrix() * ((re(1.0) - e) * 0.5);
    let mut m = Matrix::zeros(4, 4);
    m.view_mut((0, 0), (2, 2)).copy_from(&block);
    m.view_mut((2, 2), (2, 2)).copy_from(&identity);
    GateOp::new(name, m, Some(eta))
}

/// Looks a gate up by its library name.
pub fn gate_by_name(name: &str, param: Option<f64>) -> Result<GateOp> {
    let need = |what: &str| {
        param.ok_or_else(|| Error::InvalidTargets {
            targets: vec![],
            reason: format!("gate {name} needs parameter {what}"),
        })
    };
    match name {
        "h" => Ok(hadamard()),
        "i" => Ok(pauli(Pauli::I)),
        "x" => Ok(pauli(Pauli::X)),
        "y" => Ok(pauli(Pauli::Y)),
        "z" => Ok(pauli(Pauli::Z)),
        "z_half" => Ok(z_half()),
        "u_theta" => Ok(u_theta(need("theta")?)),
        "uc" => u_c_checked(),
        "cz" => Ok(cz()),
        "swap" => Ok(swap()),
        "u_z" => Ok(controlled_z_on_spin()),
        "u_x" => Ok(controlled_x_on_spin()),
        "u_x_eta" => controlled_partial(Pauli::X, need("eta")?),
        "u_z_eta" => controlled_partial(Pauli::Z, need("eta")?),
        other => Err(Error::InvalidTargets {
            targets: vec![],
            reason: format!("unknown gate {other:?}"),
        }),
    }
}

/// `1 - |tr(U^dagger V)| / d`; zero iff `U = e^{i phi} V`.
pub fn unitary_distance_up_to_phase(u: &LinearOperator, v: &LinearOperator) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            expected: u.dim(),
            actual: v.dim(),
        });
    }
    let overlap = (u.matrix().adjoint() * v.matrix()).trace().norm() / u.dim() as f64;
    Ok((1.0 - overlap).max(0.0))
}

/// Every fixed gate in the library.
pub fn library() -> Vec<GateOp> {
    vec![
        hadamard(),
        pauli(Pauli::X),
        pauli(Pauli::Y),
        pauli(Pauli::Z),
        z_half(),
        u_theta(FRAC_PI_2),
        u_c(),
        cz(),
        swap(),
        controlled_z_on_spin(),
        controlled_x_on_spin(),
    ]
}
