//! Exact stabilizer simulation used to cross-check every gate-level state.
//!
//! Pauli phases are tracked as powers of `i`; no floating point enters the
//! tableau arithmetic. Conjugation tables are derived once from the dense gate
//! matrices, so a convention change in the gate library shows up here too.

mod pauli;
mod tableau;

pub use pauli::{Pauli, PauliString, MAX_QUBITS};
pub use tableau::{PauliMeasurement, StabilizerTableau};

use std::borrow::Cow;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::gates::GateOp;
use crate::hilbert::{max_abs, LinearOperator, C64};

/// Images `U P U^dagger` of every local Pauli `P` on the gate's qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct CliffordTable {
    name: String,
    arity: usize,
    images: Vec<PauliString>,
}

impl CliffordTable {
    pub fn from_gate(gate: &GateOp) -> Result<Self> {
        Self::from_operator(gate.name(), gate.operator())
    }

    pub fn from_operator(name: &str, op: &LinearOperator) -> Result<Self> {
        let dim = op.dim();
        if !dim.is_power_of_two() || dim < 2 {
            return Err(Error::NotClifford(format!("{name}: dimension {dim}")));
        }
        let arity = dim.trailing_zeros() as usize;
        let u = op.matrix();
        let candidates: Vec<PauliString> = (0..1usize << (2 * arity)).map(|c| local_pauli(arity, c)).collect();
        let dense: Vec<_> = candidates.iter().map(PauliString::to_matrix).collect();
        let mut images = Vec::with_capacity(candidates.len());
        for p in &candidates {
            let conj = u * p.to_matrix() * u.adjoint();
            let image = candidates
                .iter()
                .zip(&dense)
                .find_map(|(q, qm)| {
                    let overlap: C64 = (qm * &conj).trace() / dim as f64;
                    [1i8, -1].into_iter().find_map(|s| {
                        let diff = &conj - qm * C64::new(f64::from(s), 0.0);
                        ((overlap - C64::new(f64::from(s), 0.0)).norm() < 1e-9 && max_abs(&diff) < 1e-9)
                            .then(|| q.with_sign(s))
                    })
                })
                .ok_or_else(|| Error::NotClifford(format!("{name}: image of {p} is not a Pauli")))?;
            images.push(image);
        }
        Ok(Self {
            name: name.to_string(),
            arity,
            images,
        })
    }

    /// Table for a gate, reused across calls for parameter-free library gates.
    pub fn cached(gate: &GateOp) -> Result<Cow<'static, Self>> {
        static TABLES: OnceLock<Vec<CliffordTable>> = OnceLock::new();
        let tables = TABLES.get_or_init(|| {
            crate::gates::library()
                .iter()
                .filter_map(|g| Self::from_gate(g).ok())
                .collect()
        });
        if gate.param().is_none() {
            if let Some(t) = tables.iter().find(|t| t.name == gate.name()) {
                return Ok(Cow::Borrowed(t));
            }
        }
        Self::from_gate(gate).map(Cow::Owned)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    /// Image of a local (phase-free) Pauli string on the gate's qubits.
    pub fn image(&self, local: &PauliString) -> &PauliString {
        &self.images[local_code(local)]
    }

    pub fn images(&self) -> impl Iterator<Item = (PauliString, &PauliString)> {
        self.images
            .iter()
            .enumerate()
            .map(|(c, img)| (local_pauli(self.arity, c), img))
    }
}

/// Local Pauli with code digits in base 4, qubit 0 most significant.
fn local_pauli(arity: usize, code: usize) -> PauliString {
    let letters: Vec<Pauli> = (0..arity)
        .map(|q| Pauli::from_code(code >> (2 * (arity - 1 - q))))
        .collect();
    PauliString::from_letters(&letters)
}

fn local_code(p: &PauliString) -> usize {
    let k = p.num_qubits();
    (0..k).fold(0, |acc, q| acc | (p.get(q).code() << (2 * (k - 1 - q))))
}
