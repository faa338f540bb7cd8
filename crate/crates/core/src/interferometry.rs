//! Ramsey-type anyon interferometry on the gate-level register.
//!
//! An electric pair is created on role 3, a magnetic pair is created
//! conditionally on the cavity, one magnetic defect is carried around the
//! electric one and fused back. The cavity ends in `|->` when the loop
//! encloses an electric defect.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::gates::{self, Circuit, ResetState};
use crate::hilbert::{
    fidelity, minus_vector, plus_vector, reduced_cavity_state, Matrix, MeasurePolicy, StateVector, Subsystem,
    SubsystemLayout, CAVITY, C64,
};
use crate::oracle::{Pauli, PauliString, StabilizerTableau};
use crate::toric::{prepare_ground_state, round_sig, MinimalLattice, PreparedState, LOOP_ROLES};

/// Threshold on the cavity overlap for a definite phase.
pub const PHASE_THRESHOLD: f64 = 0.999;
/// Tolerance on the ground-state loop stabilizer.
pub const LOOP_TOL: f64 = 1e-9;

/// Role receiving the electric pair.
pub const E_PAIR_ROLE: usize = 3;
/// Role where the magnetic pair is created and fused.
pub const M_PAIR_ROLE: usize = 4;
/// Default path of the moving magnetic defect.
pub const DEFAULT_LOOP: [usize; 4] = [6, 5, 3, 4];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Braiding,
    ControlNoEPair,
    HaltAfterCreation,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Self::Braiding, Self::ControlNoEPair, Self::HaltAfterCreation];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Braiding => "braiding",
            Self::ControlNoEPair => "control_no_e_pair",
            Self::HaltAfterCreation => "halt_after_creation",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown variant {s:?} (braiding | control_no_e_pair | halt_after_creation)"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Plus,
    Minus,
    Indeterminate,
}

impl Phase {
    pub fn from_fidelities(fidelity_plus: f64, fidelity_minus: f64) -> Self {
        if fidelity_minus > PHASE_THRESHOLD {
            Self::Minus
        } else if fidelity_plus > PHASE_THRESHOLD {
            Self::Plus
        } else {
            Self::Indeterminate
        }
    }

    pub fn sign(self) -> Option<i8> {
        match self {
            Self::Plus => Some(1),
            Self::Minus => Some(-1),
            Self::Indeterminate => None,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Plus => write!(f, "+1"),
            Self::Minus => write!(f, "-1"),
            Self::Indeterminate => write!(f, "indeterminate"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InterferometryResult {
    pub variant: Variant,
    pub lattice: MinimalLattice,
    /// Cavity plus spins after the last gate.
    pub state: StateVector,
    pub cavity_block: Matrix,
    pub fidelity_plus: f64,
    pub fidelity_minus: f64,
    pub phase: Phase,
    pub transcript: Circuit,
    pub control_run: bool,
    /// Oracle value of `X` on the cavity: +1, -1, or 0 when not a stabilizer.
    pub oracle_cavity_x: i8,
    /// `<X3 X5 X6>` on the prepared ground state.
    pub ground_loop_expectation: f64,
}

impl InterferometryResult {
    pub fn to_json(&self) -> serde_json::Value {
        let block: Vec<Vec<[f64; 2]>> = (0..2)
            .map(|r| {
                (0..2)
                    .map(|c| [round_sig(self.cavity_block[(r, c)].re), round_sig(self.cavity_block[(r, c)].im)])
                    .collect()
            })
            .collect();
        json!({
            "variant": self.variant,
            "fidelity_plus": round_sig(self.fidelity_plus),
            "fidelity_minus": round_sig(self.fidelity_minus),
            "phase": self.phase.to_string(),
            "control_run": self.control_run,
            "oracle_cavity_x": self.oracle_cavity_x,
            "ground_loop_expectation": round_sig(self.ground_loop_expectation),
            "cavity_block": block,
            "transcript": self.transcript.to_string(),
        })
    }
}

/// Phase read off a result's cavity fidelities.
pub fn braiding_phase(result: &InterferometryResult) -> Phase {
    Phase::from_fidelities(result.fidelity_plus, result.fidelity_minus)
}

fn check_loop_order(order: &[usize]) -> Result<()> {
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    let mut expected = DEFAULT_LOOP.to_vec();
    expected.sort_unstable();
    if sorted != expected || order.last() != Some(&M_PAIR_ROLE) {
        return Err(Error::InvalidTargets {
            targets: order.to_vec(),
            reason: "loop must visit roles 3, 5, 6 once each and end on role 4".into(),
        });
    }
    Ok(())
}

/// Gate sequence applied after the ground-state preparation.
pub fn interferometry_circuit(lattice: &MinimalLattice, variant: Variant, loop_order: &[usize]) -> Result<Circuit> {
    check_loop_order(loop_order)?;
    let mut c = Circuit::new(SubsystemLayout::gate_level());
    if variant != Variant::ControlNoEPair {
        c.push_gate(gates::pauli(Pauli::Z), &[lattice.physical(E_PAIR_ROLE)])?;
    }
    c.push_reset(CAVITY, ResetState::Plus)?;
    c.push_gate(gates::controlled_x_on_spin(), &[CAVITY, lattice.physical(M_PAIR_ROLE)])?;
    if variant != Variant::HaltAfterCreation {
        for &role in loop_order {
            c.push_gate(gates::controlled_x_on_spin(), &[CAVITY, lattice.physical(role)])?;
        }
    }
    Ok(c)
}

/// Spin-side Pauli applied on the cavity-`|0>` branch by the controlled
/// gates of a variant (six-spin string).
pub fn branch_operator(lattice: &MinimalLattice, variant: Variant, loop_order: &[usize]) -> Result<PauliString> {
    check_loop_order(loop_order)?;
    let mut roles = vec![M_PAIR_ROLE];
    if variant != Variant::HaltAfterCreation {
        roles.extend_from_slice(loop_order);
    }
    Ok(roles
        .iter()
        .fold(PauliString::identity(crate::hilbert::SPIN_COUNT), |acc, &r| {
            acc.mul(&lattice.on_roles(Pauli::X, &[r]))
        }))
}

/// Cavity Bloch signs `[X, Y, Z]` from the oracle after the sequence,
/// starting from a six-spin ground-state tableau.
pub fn oracle_cavity_bloch(
    lattice: &MinimalLattice,
    ground: &StabilizerTableau,
    variant: Variant,
    loop_order: &[usize],
) -> Result<[i8; 3]> {
    let circuit = interferometry_circuit(lattice, variant, loop_order)?;
    let mut t = StabilizerTableau::zero_state(1).tensor(ground);
    for step in circuit.steps() {
        t = step.apply_to_tableau(&t, None)?;
    }
    let n = t.num_qubits();
    Ok([Pauli::X, Pauli::Y, Pauli::Z].map(|p| t.expectation(&PauliString::single(n, CAVITY, p))))
}

/// Oracle value of the cavity `X` stabilizer for the default loop.
pub fn oracle_cavity_x(lattice: &MinimalLattice, ground: &StabilizerTableau, variant: Variant) -> Result<i8> {
    Ok(oracle_cavity_bloch(lattice, ground, variant, &DEFAULT_LOOP)?[0])
}

/// Prepares the ground state (postselected) and runs a variant.
pub fn run_interferometry(lattice: &MinimalLattice, variant: Variant) -> Result<InterferometryResult> {
    let prepared = prepare_ground_state(lattice, MeasurePolicy::PostselectPlus)?;
    run_on(&prepared, variant, &DEFAULT_LOOP)
}

/// Runs a variant on an already prepared ground state.
pub fn run_on(prepared: &PreparedState, variant: Variant, loop_order: &[usize]) -> Result<InterferometryResult> {
    let lattice = &prepared.lattice;
    let loop_op = lattice.loop_operator();
    let ground_loop_expectation = loop_op.expectation_in(&prepared.state)?;
    if (ground_loop_expectation - 1.0).abs() > LOOP_TOL {
        let roles: Vec<String> = LOOP_ROLES.iter().map(|r| format!("X{r}")).collect();
        return Err(Error::LabelingMiscalibrated {
            operator: roles.join(""),
            value: ground_loop_expectation,
        });
    }
    let transcript = interferometry_circuit(lattice, variant, loop_order)?;
    let cavity = StateVector::basis(SubsystemLayout::new(vec![Subsystem::new("cavity", 2)])?, &[0])?;
    let mut state = cavity.tensor(&prepared.state)?;
    for step in transcript.steps() {
        state = step.apply_to_state(&state)?.state;
    }
    let cavity_block = reduced_cavity_state(&state)?;
    let trace = cavity_block.trace();
    if (trace - C64::new(1.0, 0.0)).norm() > 1e-9 {
        return Err(Error::Invariant(format!("cavity block trace {trace}")));
    }
    let overlap = |v: Vec<C64>| -> f64 {
        let bra = nalgebra::DVector::from_vec(v);
        (bra.adjoint() * &cavity_block * &bra)[(0, 0)].re
    };
    let fidelity_plus = overlap(plus_vector());
    let fidelity_minus = overlap(minus_vector());
    let bloch = oracle_cavity_bloch(lattice, &prepared.tableau, variant, loop_order)?;
    Ok(InterferometryResult {
        variant,
        lattice: lattice.clone(),
        state,
        cavity_block,
        fidelity_plus,
        fidelity_minus,
        phase: Phase::from_fidelities(fidelity_plus, fidelity_minus),
        transcript,
        control_run: variant == Variant::ControlNoEPair,
        oracle_cavity_x: bloch[0],
        ground_loop_expectation,
    })
}

/// Branch probability and spin-state fidelity with `reference` for each
/// cavity `X` outcome that occurs with nonzero probability.
pub fn conditioned_spin_fidelities(result: &InterferometryResult, reference: &StateVector) -> Result<Vec<(i8, f64, f64)>> {
    [(1i8, result.fidelity_plus, plus_vector()), (-1, result.fidelity_minus, minus_vector())]
        .into_iter()
        .filter(|(_, p, _)| *p > 1e-12)
        .map(|(outcome, p, bra)| {
            let spins = result.state.contract(CAVITY, &bra)?;
            Ok((outcome, p, fidelity(&spins, reference)?))
        })
        .collect()
}

/// Spin state expected after the protocol: `Z3|ground>` when an electric
/// pair was created, the ground state otherwise.
pub fn expected_spin_state(prepared: &PreparedState, variant: Variant) -> Result<StateVector> {
    match variant {
        Variant::ControlNoEPair => Ok(prepared.state.clone()),
        _ => crate::toric::create_e_pair(&prepared.state, &prepared.lattice, E_PAIR_ROLE),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prepared() -> PreparedState {
        prepare_ground_state(&MinimalLattice::calibrated(), MeasurePolicy::PostselectPlus).unwrap()
    }

    #[test]
    fn braiding_reads_minus() {
        let r = run_on(&prepared(), Variant::Braiding, &DEFAULT_LOOP).unwrap();
        assert!((r.fidelity_minus - 1.0).abs() < 1e-9);
        assert_eq!(r.phase, Phase::Minus);
        assert_eq!(r.oracle_cavity_x, -1);
        assert!(!r.control_run);
    }

    #[test]
    fn control_reads_plus() {
        let r = run_on(&prepared(), Variant::ControlNoEPair, &DEFAULT_LOOP).unwrap();
        assert!((r.fidelity_plus - 1.0).abs() < 1e-9);
        assert_eq!(r.phase, Phase::Plus);
        assert_eq!(r.oracle_cavity_x, 1);
        assert!(r.control_run);
    }

    #[test]
    fn halt_leaves_cavity_mixed() {
        let p = prepared();
        let r = run_on(&p, Variant::HaltAfterCreation, &DEFAULT_LOOP).unwrap();
        let half = Matrix::identity(2, 2) * C64::new(0.5, 0.0);
        assert!((&r.cavity_block - half).iter().all(|d| d.norm() < 1e-9));
        assert_eq!(r.phase, Phase::Indeterminate);
        assert_eq!(oracle_cavity_bloch(&p.lattice, &p.tableau, Variant::HaltAfterCreation, &DEFAULT_LOOP).unwrap(), [0, 0, 0]);
    }

    #[test]
    fn fidelities_bounded() {
        let p = prepared();
        for v in Variant::ALL {
            let r = run_on(&p, v, &DEFAULT_LOOP).unwrap();
            assert!(r.fidelity_plus + r.fidelity_minus <= 1.0 + 1e-9);
            assert_eq!(braiding_phase(&r), r.phase);
        }
    }

    #[test]
    fn phase_thresholds() {
        assert_eq!(Phase::from_fidelities(0.0, 1.0), Phase::Minus);
        assert_eq!(Phase::from_fidelities(1.0, 0.0), Phase::Plus);
        assert_eq!(Phase::from_fidelities(0.5, 0.5), Phase::Indeterminate);
        assert_eq!(Phase::from_fidelities(0.001, 0.999), Phase::Indeterminate);
    }

    #[test]
    fn branch_operator_is_loop() {
        let l = MinimalLattice::calibrated();
        assert_eq!(branch_operator(&l, Variant::Braiding, &DEFAULT_LOOP).unwrap(), l.loop_operator());
        assert_eq!(
            branch_operator(&l, Variant::HaltAfterCreation, &DEFAULT_LOOP).unwrap(),
            l.on_roles(Pauli::X, &[4])
        );
    }

    #[test]
    fn spin_state_returns_to_excited_ground() {
        let p = prepared();
        for v in [Variant::Braiding, Variant::ControlNoEPair] {
            let r = run_on(&p, v, &DEFAULT_LOOP).unwrap();
            let reference = expected_spin_state(&p, v).unwrap();
            let branches = conditioned_spin_fidelities(&r, &reference).unwrap();
            assert_eq!(branches.len(), 1);
            assert!((branches[0].2 - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn loop_order_with_four_last_is_irrelevant() {
        let p = prepared();
        for order in [[3, 5, 6, 4], [5, 6, 3, 4], [6, 3, 5, 4]] {
            let r = run_on(&p, Variant::Braiding, &order).unwrap();
            assert_eq!(r.phase, Phase::Minus);
        }
        assert!(run_on(&p, Variant::Braiding, &[6, 5, 4, 3]).is_err());
        assert!(run_on(&p, Variant::Braiding, &[6, 5, 5, 4]).is_err());
    }

    #[test]
    fn miscalibrated_labeling_is_rejected() {
        let l = MinimalLattice::relabeled([3, 2, 1, 4, 5, 6]).unwrap();
        let p = prepare_ground_state(&l, MeasurePolicy::PostselectPlus).unwrap();
        match run_on(&p, Variant::Braiding, &DEFAULT_LOOP) {
            Err(Error::LabelingMiscalibrated { operator, value }) => {
                assert_eq!(operator, "X3X5X6");
                assert!(value.abs() < 1e-9);
            }
            other => panic!("expected a labeling error, got {:?}", other.map(|r| r.phase)),
        }
    }

    #[test]
    fn variant_names_roundtrip() {
        for v in Variant::ALL {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        assert!("loop".parse::<Variant>().is_err());
    }

    #[test]
    fn json_has_rounded_fidelities() {
        let r = run_on(&prepared(), Variant::Braiding, &DEFAULT_LOOP).unwrap();
        let j = r.to_json();
        assert_eq!(j["phase"], "-1");
        assert_eq!(j["variant"], "braiding");
        assert!(j["transcript"].as_str().unwrap().contains("u_x"));
    }
}
