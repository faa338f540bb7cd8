//! Six-spin minimal toric code: ground-state preparation, stabilizer
//! bookkeeping and defect creation.
//!
//! Spins are addressed by role labels 1..6. A [`MinimalLattice`] maps each role
//! to a physical spin and records a Hadamard frame applied after the
//! preparation circuit, so that the prepared graph state becomes a CSS state.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::gates::{self, Circuit, GateOp, Step, StepOutcome};
use crate::hilbert::{
    fidelity, measure_x, minus_vector, plus_vector, spin_label, MeasurePolicy, StateVector, SubsystemLayout, CAVITY, SPIN_COUNT,
};
use crate::interferometry::{self, Variant};
use crate::oracle::{Pauli, PauliString, StabilizerTableau};

/// Statevector/tableau agreement demanded after every preparation step.
pub const STEP_FIDELITY_TOL: f64 = 1e-9;

/// Physical spins coupled to the cavity, in order.
pub const PREPARATION_SEQUENCE: [usize; 7] = [2, 1, 3, 6, 5, 4, 6];
/// Physical spin initialized in `|0>` rather than `|+>`.
pub const GROUND_SPIN: usize = 4;
/// Role labels of the X-loop residue that must stabilize the ground state.
pub const LOOP_ROLES: [usize; 3] = [3, 5, 6];

/// Shipped labeling: the paper's spin labels unchanged.
pub const CALIBRATED_PERMUTATION: [usize; 6] = [1, 2, 3, 4, 5, 6];
/// Shipped frame: Hadamards on these physical spins after the preparation.
pub const CALIBRATED_FRAME: [usize; 4] = [2, 3, 5, 6];
/// X-type operator supports (role labels) under the shipped labeling.
pub const CALIBRATED_X_SUPPORTS: [[usize; 3]; 4] = [[1, 2, 3], [1, 2, 4], [1, 2, 5], [3, 4, 6]];
/// Z-type operator supports (role labels) under the shipped labeling.
pub const CALIBRATED_Z_SUPPORTS: [[usize; 4]; 2] = [[1, 3, 4, 5], [2, 3, 4, 5]];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectKind {
    /// `sigma_z`: flips X-type operators.
    Electric,
    /// `sigma_x`: flips Z-type operators.
    Magnetic,
}

impl DefectKind {
    pub fn pauli(self) -> Pauli {
        match self {
            Self::Electric => Pauli::Z,
            Self::Magnetic => Pauli::X,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinimalLattice {
    /// `permutation[r - 1]` is the physical spin playing role `r`.
    permutation: [usize; SPIN_COUNT],
    /// Physical spins receiving a Hadamard after the preparation circuit.
    hadamard_frame: Vec<usize>,
    /// Role-label supports.
    x_supports: Vec<Vec<usize>>,
    z_supports: Vec<Vec<usize>>,
}

impl MinimalLattice {
    pub fn new(
        permutation: [usize; SPIN_COUNT],
        hadamard_frame: Vec<usize>,
        x_supports: Vec<Vec<usize>>,
        z_supports: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let mut seen = [false; SPIN_COUNT];
        for &p in &permutation {
            if !(1..=SPIN_COUNT).contains(&p) || std::mem::replace(&mut seen[p - 1], true) {
                return Err(Error::InvalidLattice(format!("{permutation:?} is not a permutation of 1..6")));
            }
        }
        let mut frame = hadamard_frame;
        frame.sort_unstable();
        frame.dedup();
        if frame.iter().any(|s| !(1..=SPIN_COUNT).contains(s)) {
            return Err(Error::InvalidLattice(format!("frame {frame:?} names a spin outside 1..6")));
        }
        for support in x_supports.iter().chain(&z_supports) {
            let mut sorted = support.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if !(3..=4).contains(&sorted.len()) || sorted.len() != support.len() {
                return Err(Error::InvalidLattice(format!("support {support:?} must hold 3 or 4 distinct spins")));
            }
            if sorted.iter().any(|s| !(1..=SPIN_COUNT).contains(s)) {
                return Err(Error::InvalidLattice(format!("support {support:?} names a spin outside 1..6")));
            }
        }
        Ok(Self {
            permutation,
            hadamard_frame: frame,
            x_supports,
            z_supports,
        })
    }

    /// The shipped calibration.
    pub fn calibrated() -> Self {
        Self::new(
            CALIBRATED_PERMUTATION,
            CALIBRATED_FRAME.to_vec(),
            CALIBRATED_X_SUPPORTS.iter().map(|s| s.to_vec()).collect(),
            CALIBRATED_Z_SUPPORTS.iter().map(|s| s.to_vec()).collect(),
        )
        .expect("shipped labeling is valid")
    }

    /// A labeling override that keeps the calibrated frame and the declared
    /// operators (in physical labels), relabeling roles only.
    pub fn relabeled(permutation: [usize; SPIN_COUNT]) -> Result<Self> {
        let base = Self::calibrated();
        let probe = Self::new(permutation, base.hadamard_frame.clone(), vec![], vec![])?;
        let to_roles = |supports: &[Vec<usize>]| -> Vec<Vec<usize>> {
            supports
                .iter()
                .map(|s| {
                    let mut r: Vec<usize> = s.iter().map(|&role| probe.role_of(base.physical(role))).collect();
                    r.sort_unstable();
                    r
                })
                .collect()
        };
        Self::new(
            permutation,
            base.hadamard_frame.clone(),
            to_roles(&base.x_supports),
            to_roles(&base.z_supports),
        )
    }

    pub fn permutation(&self) -> [usize; SPIN_COUNT] {
        self.permutation
    }

    pub fn hadamard_frame(&self) -> &[usize] {
        &self.hadamard_frame
    }

    pub fn x_supports(&self) -> &[Vec<usize>] {
        &self.x_supports
    }

    pub fn z_supports(&self) -> &[Vec<usize>] {
        &self.z_supports
    }

    /// Physical spin (1..6) playing `role`.
    pub fn physical(&self, role: usize) -> usize {
        self.permutation[role - 1]
    }

    pub fn role_of(&self, physical: usize) -> usize {
        self.permutation
            .iter()
            .position(|&p| p == physical)
            .map(|i| i + 1)
            .expect("permutation is a bijection")
    }

    pub fn check_role(role: usize) -> Result<()> {
        if (1..=SPIN_COUNT).contains(&role) {
            Ok(())
        } else {
            Err(Error::InvalidTargets {
                targets: vec![role],
                reason: "spin roles are 1..6".into(),
            })
        }
    }

    /// Six-qubit Pauli (qubit `k - 1` is physical spin `k`) with `p` on the
    /// given roles.
    pub fn on_roles(&self, p: Pauli, roles: &[usize]) -> PauliString {
        let qubits: Vec<usize> = roles.iter().map(|&r| self.physical(r) - 1).collect();
        PauliString::on(SPIN_COUNT, p, &qubits)
    }

    pub fn x_generators(&self) -> Vec<PauliString> {
        self.x_supports.iter().map(|s| self.on_roles(Pauli::X, s)).collect()
    }

    pub fn z_generators(&self) -> Vec<PauliString> {
        self.z_supports.iter().map(|s| self.on_roles(Pauli::Z, s)).collect()
    }

    /// X-type then Z-type generators.
    pub fn declared_generators(&self) -> Vec<PauliString> {
        let mut all = self.x_generators();
        all.extend(self.z_generators());
        all
    }

    /// `X_3 X_5 X_6` in role labels.
    pub fn loop_operator(&self) -> PauliString {
        self.on_roles(Pauli::X, &LOOP_ROLES)
    }

    /// Number of declared operators of the type flipped by `kind` that
    /// contain `role`.
    pub fn declared_flip_count(&self, role: usize, kind: DefectKind) -> usize {
        let supports = match kind {
            DefectKind::Electric => &self.x_supports,
            DefectKind::Magnetic => &self.z_supports,
        };
        supports.iter().filter(|s| s.contains(&role)).count()
    }
}

impl fmt::Display for MinimalLattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "roles->spins {:?}, hadamard frame {:?}", self.permutation, self.hadamard_frame)
    }
}

/// Ground state produced by the preparation circuit.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedState {
    pub lattice: MinimalLattice,
    /// Six spins after the cavity readout.
    pub state: StateVector,
    pub tableau: StabilizerTableau,
    pub transcript: Circuit,
    pub outcome: i8,
    pub probability: f64,
    /// Canonical (row-reduced) stabilizer generators from the oracle.
    pub generators: Vec<PauliString>,
    /// Smallest statevector/tableau fidelity over all circuit steps.
    pub min_step_fidelity: f64,
}

impl PreparedState {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "labeling": {
                "permutation": self.lattice.permutation,
                "hadamard_frame": self.lattice.hadamard_frame,
                "x_supports": self.lattice.x_supports,
                "z_supports": self.lattice.z_supports,
            },
            "measurement": {"outcome": self.outcome, "probability": round_sig(self.probability)},
            "generators": self.generators.iter().map(|g| g.to_string()).collect::<Vec<_>>(),
            "min_step_fidelity": round_sig(self.min_step_fidelity),
            "transcript": self.transcript.to_string(),
        })
    }
}

/// Rounds to 12 significant digits for reports.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

/// The preparation circuit on the gate-level register: cavity-spin exchange
/// gates, the cavity readout, then the lattice's Hadamard frame.
pub fn preparation_circuit(lattice: &MinimalLattice, policy: MeasurePolicy) -> Result<Circuit> {
    let mut c = Circuit::new(SubsystemLayout::gate_level());
    for spin in 1..=SPIN_COUNT {
        let state = if spin == GROUND_SPIN {
            gates::ResetState::Zero
        } else {
            gates::ResetState::Plus
        };
        c.push_reset(spin, state)?;
    }
    c.push_reset(CAVITY, gates::ResetState::Plus)?;
    for spin in PREPARATION_SEQUENCE {
        c.push_gate(gates::u_c(), &[CAVITY, spin])?;
    }
    c.push_measure_x(CAVITY, policy)?;
    for &spin in &lattice.hadamard_frame {
        c.push_gate(gates::hadamard(), &[spin])?;
    }
    Ok(c)
}

fn initial_register() -> Result<(StateVector, StabilizerTableau)> {
    let state = StateVector::basis(SubsystemLayout::gate_level(), &[0; SPIN_COUNT + 1])?;
    Ok((state, StabilizerTableau::zero_state(SPIN_COUNT + 1)))
}

/// Runs the preparation on a state vector and on the oracle in lockstep.
pub fn prepare_ground_state(lattice: &MinimalLattice, policy: MeasurePolicy) -> Result<PreparedState> {
    run_preparation(lattice, policy, None)
}

/// Both readout branches, `+` first; a branch of zero probability is omitted.
pub fn prepare_branches(lattice: &MinimalLattice) -> Result<Vec<PreparedState>> {
    [1, -1]
        .into_iter()
        .map(|o| run_preparation(lattice, MeasurePolicy::BothBranches, Some(o)))
        .filter(|r| !matches!(r, Err(Error::ZeroProbabilityBranch { .. })))
        .collect()
}

fn run_preparation(lattice: &MinimalLattice, policy: MeasurePolicy, branch: Option<i8>) -> Result<PreparedState> {
    let circuit = preparation_circuit(lattice, policy)?;
    let (mut state, mut tableau) = initial_register()?;
    let layout = SubsystemLayout::gate_level();
    let mut min_fid: f64 = 1.0;
    let mut measured = None;
    for (index, step) in circuit.steps().iter().enumerate() {
        let out = match (step, branch) {
            (Step::MeasureX { subsystem, .. }, Some(wanted)) => {
                let m = measure_x(*subsystem, &state, MeasurePolicy::BothBranches)?;
                let b = m
                    .branches()
                    .into_iter()
                    .find(|b| b.outcome == wanted)
                    .ok_or(Error::ZeroProbabilityBranch { probability: 0.0 })?
                    .clone();
                StepOutcome {
                    state: b.state,
                    measurement: Some((b.outcome, b.probability)),
                }
            }
            _ => step.apply_to_state(&state)?,
        };
        state = out.state;
        let forced = out.measurement.map(|(o, _)| o);
        if let Some(m) = out.measurement {
            measured = Some(m);
        }
        tableau = step.apply_to_tableau(&tableau, forced)?;
        let f = fidelity(&state, &tableau.to_statevector_with(layout.clone())?)?;
        if f < 1.0 - STEP_FIDELITY_TOL {
            return Err(Error::OracleMismatch { step: index, fidelity: f });
        }
        min_fid = min_fid.min(f);
    }
    let (outcome, probability) = measured.expect("circuit contains the cavity readout");
    let bra = if outcome == 1 { plus_vector() } else { minus_vector() };
    let spins = state.contract(CAVITY, &bra)?;
    let spin_tableau = tableau.remove_qubit(CAVITY)?;
    let generators = spin_tableau.canonical_generators();
    if generators.len() != SPIN_COUNT {
        return Err(Error::Invariant(format!("{} generators instead of 6", generators.len())));
    }
    let f = fidelity(&spins, &spin_tableau.to_statevector_with(SubsystemLayout::spins())?)?;
    if f < 1.0 - STEP_FIDELITY_TOL {
        return Err(Error::OracleMismatch {
            step: circuit.len(),
            fidelity: f,
        });
    }
    Ok(PreparedState {
        lattice: lattice.clone(),
        state: spins,
        tableau: spin_tableau,
        transcript: circuit,
        outcome,
        probability,
        generators,
        min_step_fidelity: min_fid.min(f),
    })
}

/// `<psi|P|psi>` for each six-spin Pauli string.
pub fn stabilizer_expectations(state: &StateVector, ops: &[PauliString]) -> Result<Vec<f64>> {
    ops.iter().map(|p| p.expectation_in(state)).collect()
}

/// Subsystem index of a role's physical spin in `layout`.
fn spin_index(layout: &SubsystemLayout, lattice: &MinimalLattice, role: usize) -> Result<usize> {
    MinimalLattice::check_role(role)?;
    let label = spin_label(lattice.physical(role));
    layout
        .index_of(&label)
        .ok_or_else(|| Error::LayoutMismatch(format!("layout has no subsystem {label:?}")))
}

fn apply_single(state: &StateVector, lattice: &MinimalLattice, role: usize, gate: GateOp) -> Result<StateVector> {
    let index = spin_index(state.layout(), lattice, role)?;
    crate::hilbert::apply(gate.operator(), &[index], state)
}

/// `sigma_z` on a role: a pair of electric defects.
pub fn create_e_pair(state: &StateVector, lattice: &MinimalLattice, role: usize) -> Result<StateVector> {
    apply_single(state, lattice, role, gates::pauli(Pauli::Z))
}

/// `sigma_x` on a role: a pair of magnetic defects.
pub fn create_m_pair(state: &StateVector, lattice: &MinimalLattice, role: usize) -> Result<StateVector> {
    apply_single(state, lattice, role, gates::pauli(Pauli::X))
}

/// Cavity-controlled defect creation with relative branch amplitude `eta`;
/// `eta = 1` is `U_z` (electric) or `U_x` (magnetic).
pub fn conditional_excitation(
    state: &StateVector,
    lattice: &MinimalLattice,
    role: usize,
    kind: DefectKind,
    eta: f64,
) -> Result<StateVector> {
    let index = spin_index(state.layout(), lattice, role)?;
    let gate = conditional_gate(kind, eta)?;
    crate::hilbert::apply(gate.operator(), &[CAVITY, index], state)
}

pub(crate) fn conditional_gate(kind: DefectKind, eta: f64) -> Result<GateOp> {
    if eta == 1.0 {
        Ok(match kind {
            DefectKind::Electric => gates::controlled_z_on_spin(),
            DefectKind::Magnetic => gates::controlled_x_on_spin(),
        })
    } else {
        gates::controlled_partial(kind.pauli(), eta)
    }
}

/// Indices (into `ops`) whose expectation changes sign between two states.
pub fn flipped(before: &StateVector, after: &StateVector, ops: &[PauliString]) -> Result<Vec<usize>> {
    let a = stabilizer_expectations(before, ops)?;
    let b = stabilizer_expectations(after, ops)?;
    Ok((0..ops.len()).filter(|&i| a[i] * b[i] < -0.5).collect())
}

/// Outcome of the labeling search.
#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    pub lattice: MinimalLattice,
    pub candidates: usize,
    pub valid: usize,
}

/// CSS decomposition of a stabilizer group: X-only and Z-only generators of
/// weight 3 or 4, all with sign +1, chosen greedily by (weight, support).
type Supports = Vec<Vec<usize>>;

fn css_supports(tableau: &StabilizerTableau) -> Option<(Supports, Supports)> {
    let elements = tableau.group_elements();
    let pick = |is_type: fn(&PauliString) -> bool, mask: fn(&PauliString) -> u64| -> (usize, Supports) {
        let of_type: Vec<&PauliString> = elements.iter().filter(|e| !e.is_identity() && is_type(e)).collect();
        let rank = xor_rank(of_type.iter().map(|e| mask(e)));
        let mut candidates: Vec<&PauliString> = of_type
            .into_iter()
            .filter(|e| e.sign() == Some(1) && (3..=4).contains(&e.weight()))
            .collect();
        candidates.sort_by_key(|e| (e.weight(), e.support()));
        let mut chosen: Vec<&PauliString> = vec![];
        for c in candidates {
            if xor_rank(chosen.iter().map(|e| mask(e)).chain([mask(c)])) > chosen.len() {
                chosen.push(c);
            }
        }
        (rank, chosen.iter().map(|e| e.support().iter().map(|q| q + 1).collect()).collect::<Supports>())
    };
    let (rx, xs) = pick(PauliString::is_x_type, PauliString::x_mask);
    let (rz, zs) = pick(PauliString::is_z_type, PauliString::z_mask);
    (rx + rz == SPIN_COUNT && xs.len() == rx && zs.len() == rz).then_some((xs, zs))
}

fn xor_rank(vectors: impl Iterator<Item = u64>) -> usize {
    let mut basis: Vec<u64> = vec![];
    for mut v in vectors {
        for b in &basis {
            v = v.min(v ^ b);
        }
        if v != 0 {
            basis.push(v);
        }
    }
    basis.len()
}

fn permutations() -> Vec<[usize; SPIN_COUNT]> {
    fn extend(prefix: &mut Vec<usize>, out: &mut Vec<[usize; SPIN_COUNT]>) {
        if prefix.len() == SPIN_COUNT {
            out.push(prefix.clone().try_into().expect("six entries"));
            return;
        }
        for s in 1..=SPIN_COUNT {
            if !prefix.contains(&s) {
                prefix.push(s);
                extend(prefix, out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::with_capacity(720);
    extend(&mut Vec::with_capacity(SPIN_COUNT), &mut out);
    out
}

/// Exhaustive search over the 720 role permutations and 64 Hadamard frames.
///
/// A candidate is valid when the framed state is CSS with +1 generators of
/// weight 3 or 4, `X_3 X_5 X_6` (roles) stabilizes it with eigenvalue +1,
/// and the oracle interferometry reads `-X`, `+X` and a maximally mixed
/// cavity for the braiding, control and halted variants. Among valid
/// candidates the one moving the fewest labels wins, then the smallest
/// frame, then lexicographic order.
pub fn calibrate_labeling() -> Result<Calibration> {
    let perms = permutations();
    type Rank = (usize, usize, [usize; SPIN_COUNT], Vec<usize>);
    let mut best: Option<(Rank, MinimalLattice)> = None;
    let (mut candidates, mut valid) = (0, 0);
    for frame_bits in 0u32..1 << SPIN_COUNT {
        let frame: Vec<usize> = (1..=SPIN_COUNT).filter(|s| frame_bits >> (s - 1) & 1 == 1).collect();
        let identity = MinimalLattice::new(CALIBRATED_PERMUTATION, frame.clone(), vec![], vec![])?;
        let prepared = prepare_tableau(&identity)?;
        candidates += perms.len();
        let Some((xs, zs)) = css_supports(&prepared) else {
            continue;
        };
        for &perm in &perms {
            let probe = MinimalLattice::new(perm, frame.clone(), vec![], vec![])?;
            if prepared.expectation(&probe.loop_operator()) != 1 {
                continue;
            }
            let to_roles = |supports: &[Vec<usize>]| -> Vec<Vec<usize>> {
                supports
                    .iter()
                    .map(|s| {
                        let mut r: Vec<usize> = s.iter().map(|&p| probe.role_of(p)).collect();
                        r.sort_unstable();
                        r
                    })
                    .collect()
            };
            let mut x_roles = to_roles(&xs);
            let mut z_roles = to_roles(&zs);
            x_roles.sort();
            z_roles.sort();
            let lattice = MinimalLattice::new(perm, frame.clone(), x_roles, z_roles)?;
            let bloch = |v| interferometry::oracle_cavity_bloch(&lattice, &prepared, v, &interferometry::DEFAULT_LOOP);
            if bloch(Variant::Braiding)? != [-1, 0, 0]
                || bloch(Variant::ControlNoEPair)? != [1, 0, 0]
                || bloch(Variant::HaltAfterCreation)? != [0, 0, 0]
            {
                continue;
            }
            valid += 1;
            let moved = (0..SPIN_COUNT).filter(|&i| perm[i] != i + 1).count();
            let key = (moved, frame.len(), perm, frame.clone());
            if best.as_ref().is_none_or(|(k, _)| key < *k) {
                best = Some((key, lattice));
            }
        }
    }
    let (_, lattice) = best.ok_or_else(|| Error::Invariant("no labeling closes the interferometry loop".into()))?;
    Ok(Calibration {
        lattice,
        candidates,
        valid,
    })
}

/// Oracle-only preparation (postselected `+`), returning the six-spin tableau.
pub fn prepare_tableau(lattice: &MinimalLattice) -> Result<StabilizerTableau> {
    let circuit = preparation_circuit(lattice, MeasurePolicy::PostselectPlus)?;
    let mut t = StabilizerTableau::zero_state(SPIN_COUNT + 1);
    for step in circuit.steps() {
        t = step.apply_to_tableau(&t, Some(1))?;
    }
    t.remove_qubit(CAVITY)
}
