use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use super::{CliffordTable, Pauli, PauliString, MAX_QUBITS};
use crate::error::{Error, Result};
use crate::gates::GateOp;
use crate::hilbert::{StateVector, SubsystemLayout, C64};

/// Largest register converted to a dense state vector.
pub const MAX_DENSE_QUBITS: usize = 12;

/// Stabilizer state as `n` stabilizer and `n` destabilizer rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StabilizerTableau {
    n: usize,
    stabilizers: Vec<PauliString>,
    destabilizers: Vec<PauliString>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PauliMeasurement {
    pub outcome: i8,
    pub deterministic: bool,
    pub tableau: StabilizerTableau,
}

impl StabilizerTableau {
    /// `|0...0>`.
    pub fn zero_state(n: usize) -> Self {
        assert!(n <= MAX_QUBITS);
        Self {
            n,
            stabilizers: (0..n).map(|q| PauliString::single(n, q, Pauli::Z)).collect(),
            destabilizers: (0..n).map(|q| PauliString::single(n, q, Pauli::X)).collect(),
        }
    }

    /// Builds a tableau from `n` independent, commuting, Hermitian generators.
    pub fn from_generators(generators: Vec<PauliString>) -> Result<Self> {
        let n = generators.len();
        if n == 0 || generators.iter().any(|g| g.num_qubits() != n) {
            return Err(Error::InvalidGenerators(format!(
                "need exactly one generator per qubit, got {n}"
            )));
        }
        for (i, g) in generators.iter().enumerate() {
            if !g.is_hermitian() {
                return Err(Error::InvalidGenerators(format!("{g} is not Hermitian")));
            }
            if let Some(h) = generators[..i].iter().find(|h| !h.commutes_with(g)) {
                return Err(Error::InvalidGenerators(format!("{g} anticommutes with {h}")));
            }
        }
        if gf2_rank(generators.iter().map(symplectic_vector).collect()) != n {
            return Err(Error::InvalidGenerators("generators are not independent".into()));
        }
        let mut destabilizers: Vec<PauliString> = Vec::with_capacity(n);
        for i in 0..n {
            let mut rows: Vec<(u128, bool)> = generators
                .iter()
                .enumerate()
                .map(|(j, s)| (symplectic_dual(s), i == j))
                .collect();
            rows.extend(destabilizers.iter().map(|d| (symplectic_dual(d), false)));
            let solution = gf2_solve(rows, 2 * n)
                .ok_or_else(|| Error::InvalidGenerators("no destabilizer basis".into()))?;
            destabilizers.push(from_symplectic(n, solution));
        }
        let t = Self {
            n,
            stabilizers: generators,
            destabilizers,
        };
        t.check_invariants()?;
        Ok(t)
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn stabilizers(&self) -> &[PauliString] {
        &self.stabilizers
    }

    pub fn destabilizers(&self) -> &[PauliString] {
        &self.destabilizers
    }

    pub fn check_invariants(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Invariant(format!("tableau: {m}")));
        for (i, s) in self.stabilizers.iter().enumerate() {
            if !s.is_hermitian() {
                return fail(format!("stabilizer {s} has phase ±i"));
            }
            for (j, t) in self.stabilizers.iter().enumerate().skip(i + 1) {
                if !s.commutes_with(t) {
                    return fail(format!("stabilizers {i} and {j} anticommute"));
                }
            }
            for (j, d) in self.destabilizers.iter().enumerate() {
                if s.commutes_with(d) == (i == j) {
                    return fail(format!("destabilizer {j} pairs wrongly with stabilizer {i}"));
                }
            }
        }
        if gf2_rank(self.stabilizers.iter().map(symplectic_vector).collect()) != self.n {
            return fail("stabilizers are dependent".into());
        }
        Ok(())
    }

    pub fn apply_clifford(&self, table: &CliffordTable, targets: &[usize]) -> Result<Self> {
        if targets.len() != table.arity() {
            return Err(Error::InvalidTargets {
                targets: targets.to_vec(),
                reason: format!("{} expects {} targets", table.name(), table.arity()),
            });
        }
        for (i, &t) in targets.iter().enumerate() {
            if t >= self.n || targets[..i].contains(&t) {
                return Err(Error::InvalidTargets {
                    targets: targets.to_vec(),
                    reason: "out of range or duplicate".into(),
                });
            }
        }
        let conjugate = |row: &PauliString| {
            let image = table.image(&row.restrict(targets));
            let mut out = row.clone();
            for (i, &t) in targets.iter().enumerate() {
                out.set(t, image.get(i));
            }
            out.times_i_pow(image.phase())
        };
        Ok(Self {
            n: self.n,
            stabilizers: self.stabilizers.iter().map(conjugate).collect(),
            destabilizers: self.destabilizers.iter().map(conjugate).collect(),
        })
    }

    pub fn apply_gate(&self, gate: &GateOp, targets: &[usize]) -> Result<Self> {
        self.apply_clifford(&*CliffordTable::cached(gate)?, targets)
    }

    /// Measures Hermitian `p`. A random outcome resolves to `postselect`, or
    /// to `+1` when no postselection is requested.
    pub fn measure_pauli(&self, p: &PauliString, postselect: Option<i8>) -> Result<PauliMeasurement> {
        self.check_string(p)?;
        let sign = p.sign().ok_or_else(|| Error::MalformedPauli {
            input: p.to_string(),
            reason: "measured operator must be Hermitian".into(),
        })?;
        let bare = p.unsigned();
        match self.stabilizers.iter().position(|s| !s.commutes_with(&bare)) {
            None => {
                let outcome = sign * self.deterministic_value(&bare);
                if let Some(r) = postselect {
                    if r != outcome {
                        return Err(Error::ImpossiblePostselection {
                            requested: r,
                            actual: outcome,
                        });
                    }
                }
                Ok(PauliMeasurement {
                    outcome,
                    deterministic: true,
                    tableau: self.clone(),
                })
            }
            Some(k) => {
                let outcome = postselect.unwrap_or(1);
                let pivot = self.stabilizers[k].clone();
                let mut next = self.clone();
                for (j, s) in next.stabilizers.iter_mut().enumerate() {
                    if j != k && !s.commutes_with(&bare) {
                        *s = s.mul(&pivot);
                    }
                }
                for (j, d) in next.destabilizers.iter_mut().enumerate() {
                    if j != k && !d.commutes_with(&bare) {
                        *d = d.mul(&pivot);
                    }
                }
                next.destabilizers[k] = pivot;
                next.stabilizers[k] = bare.with_sign(outcome * sign);
                Ok(PauliMeasurement {
                    outcome,
                    deterministic: false,
                    tableau: next,
                })
            }
        }
    }

    /// `+1`/`-1` if `±p` is in the stabilizer group, `0` otherwise (also for
    /// non-Hermitian strings).
    pub fn expectation(&self, p: &PauliString) -> i8 {
        if p.num_qubits() != self.n || !p.is_hermitian() {
            return 0;
        }
        if self.stabilizers.iter().any(|s| !s.commutes_with(p)) {
            return 0;
        }
        p.sign().unwrap_or(0) * self.deterministic_value(&p.unsigned())
    }

    /// Value of a phase-free `p` that commutes with every stabilizer.
    fn deterministic_value(&self, p: &PauliString) -> i8 {
        let product = self
            .stabilizers
            .iter()
            .zip(&self.destabilizers)
            .filter(|(_, d)| !d.commutes_with(p))
            .fold(PauliString::identity(self.n), |acc, (s, _)| acc.mul(s));
        debug_assert_eq!(product.unsigned(), *p);
        // p = i^{-phase} * product and product stabilizes the state.
        match product.phase() {
            0 => 1,
            2 => -1,
            _ => 0,
        }
    }

    /// All `2^n` elements of the stabilizer group.
    pub fn group_elements(&self) -> Vec<PauliString> {
        let mut elements = vec![PauliString::identity(self.n)];
        for s in &self.stabilizers {
            let extra: Vec<_> = elements.iter().map(|e| e.mul(s)).collect();
            elements.extend(extra);
        }
        elements
    }

    /// Stabilizer rows in reduced row-echelon form over the symplectic bits.
    pub fn canonical_generators(&self) -> Vec<PauliString> {
        let mut rows = self.stabilizers.clone();
        let mut pivot_row = 0;
        let columns = (0..self.n).map(|q| (q, true)).chain((0..self.n).map(|q| (q, false)));
        for (q, x_col) in columns {
            let bit = |p: &PauliString| {
                let mask = if x_col { p.x_mask() } else { p.z_mask() };
                mask >> q & 1 == 1
            };
            let Some(found) = (pivot_row..rows.len()).find(|&r| bit(&rows[r])) else {
                continue;
            };
            rows.swap(pivot_row, found);
            let pivot = rows[pivot_row].clone();
            for (r, row) in rows.iter_mut().enumerate() {
                if r != pivot_row && bit(row) {
                    *row = row.mul(&pivot);
                }
            }
            pivot_row += 1;
            if pivot_row == rows.len() {
                break;
            }
        }
        rows
    }

    /// Drops a qubit that is in a pure single-qubit stabilizer state.
    pub fn remove_qubit(&self, q: usize) -> Result<Self> {
        if q >= self.n || self.n == 1 {
            return Err(Error::InvalidTargets {
                targets: vec![q],
                reason: "cannot remove qubit".into(),
            });
        }
        let local = [Pauli::X, Pauli::Y, Pauli::Z]
            .into_iter()
            .map(|p| PauliString::single(self.n, q, p))
            .find_map(|p| match self.expectation(&p) {
                0 => None,
                s => Some(p.with_sign(s)),
            })
            .ok_or_else(|| Error::Invariant(format!("qubit {q} is entangled with the rest")))?;
        let rows: Vec<PauliString> = self
            .stabilizers
            .iter()
            .map(|s| if s.get(q) == Pauli::I { s.clone() } else { s.mul(&local) })
            .filter(|s| !s.is_identity())
            .map(|s| s.without_qubit(q))
            .collect();
        let reduced = Self::from_generators(Self::independent_subset(rows, self.n - 1))?;
        Ok(reduced)
    }

    fn independent_subset(rows: Vec<PauliString>, want: usize) -> Vec<PauliString> {
        let mut chosen: Vec<PauliString> = Vec::with_capacity(want);
        for r in rows {
            let mut trial: Vec<u128> = chosen.iter().map(symplectic_vector).collect();
            trial.push(symplectic_vector(&r));
            if gf2_rank(trial) == chosen.len() + 1 {
                chosen.push(r);
            }
        }
        chosen
    }

    /// Relabels qubits so that new qubit `i` is old qubit `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            n: self.n,
            stabilizers: self.stabilizers.iter().map(|s| s.permuted(order)).collect(),
            destabilizers: self.destabilizers.iter().map(|d| d.permuted(order)).collect(),
        }
    }

    pub fn tensor(&self, other: &Self) -> Self {
        let pad_right = |p: &PauliString| p.tensor(&PauliString::identity(other.n));
        let pad_left = |p: &PauliString| PauliString::identity(self.n).tensor(p);
        Self {
            n: self.n + other.n,
            stabilizers: self
                .stabilizers
                .iter()
                .map(pad_right)
                .chain(other.stabilizers.iter().map(pad_left))
                .collect(),
            destabilizers: self
                .destabilizers
                .iter()
                .map(pad_right)
                .chain(other.destabilizers.iter().map(pad_left))
                .collect(),
        }
    }

    pub fn to_statevector(&self) -> Result<StateVector> {
        self.to_statevector_with(SubsystemLayout::qubits(self.n))
    }

    /// The stabilized state, up to global phase, on a qubit `layout`.
    pub fn to_statevector_with(&self, layout: SubsystemLayout) -> Result<StateVector> {
        if self.n > MAX_DENSE_QUBITS {
            return Err(Error::TooLarge(self.n));
        }
        if !layout.is_qubit_register() || layout.len() != self.n {
            return Err(Error::LayoutMismatch(format!(
                "tableau on {} qubits vs layout of {} subsystems",
                self.n,
                layout.len()
            )));
        }
        let dim = 1usize << self.n;
        for seed in 0..dim {
            let mut v = DVector::zeros(dim);
            v[seed] = C64::new(1.0, 0.0);
            for s in &self.stabilizers {
                v = (&v + s.apply_to_amplitudes(&v)) * C64::new(0.5, 0.0);
            }
            if v.norm() > 1e-6 {
                return StateVector::new(layout, v);
            }
        }
        Err(Error::Invariant("stabilizer projector annihilated every basis state".into()))
    }

    fn check_string(&self, p: &PauliString) -> Result<()> {
        if p.num_qubits() != self.n {
            return Err(Error::MalformedPauli {
                input: p.to_string(),
                reason: format!("expected {} qubits", self.n),
            });
        }
        Ok(())
    }
}

impl fmt::Display for StabilizerTableau {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# stabilizers")?;
        for s in &self.stabilizers {
            writeln!(f, "{s}")?;
        }
        writeln!(f, "# destabilizers")?;
        for d in &self.destabilizers {
            writeln!(f, "{d}")?;
        }
        Ok(())
    }
}

impl FromStr for StabilizerTableau {
    type Err = Error;

    /// Parses the [`Display`](fmt::Display) form. Without a destabilizer
    /// section the destabilizers are reconstructed.
    fn from_str(s: &str) -> Result<Self> {
        let mut stabilizers = Vec::new();
        let mut destabilizers = Vec::new();
        let mut in_destab = false;
        for line in s.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(comment) = line.strip_prefix('#') {
                in_destab = comment.trim() == "destabilizers";
                continue;
            }
            let p: PauliString = line.parse()?;
            if in_destab {
                destabilizers.push(p);
            } else {
                stabilizers.push(p);
            }
        }
        if destabilizers.is_empty() {
            return Self::from_generators(stabilizers);
        }
        let t = Self {
            n: stabilizers.len(),
            stabilizers,
            destabilizers,
        };
        if t.destabilizers.len() != t.n || t.stabilizers.iter().any(|p| p.num_qubits() != t.n) {
            return Err(Error::InvalidGenerators("row count does not match qubit count".into()));
        }
        t.check_invariants()?;
        Ok(t)
    }
}

/// `(x | z << n)` packed into a `u128`.
fn symplectic_vector(p: &PauliString) -> u128 {
    u128::from(p.x_mask()) | (u128::from(p.z_mask()) << p.num_qubits())
}

/// Coefficients of the linear form `d -> <d, p>` in the layout of
/// [`symplectic_vector`].
fn symplectic_dual(p: &PauliString) -> u128 {
    u128::from(p.z_mask()) | (u128::from(p.x_mask()) << p.num_qubits())
}

fn from_symplectic(n: usize, v: u128) -> PauliString {
    let mask = (1u128 << n) - 1;
    let x = (v & mask) as u64;
    let z = ((v >> n) & mask) as u64;
    let letters: Vec<Pauli> = (0..n)
        .map(|q| match (x >> q & 1, z >> q & 1) {
            (0, 0) => Pauli::I,
            (1, 0) => Pauli::X,
            (1, 1) => Pauli::Y,
            _ => Pauli::Z,
        })
        .collect();
    PauliString::from_letters(&letters)
}

fn gf2_rank(mut rows: Vec<u128>) -> usize {
    let mut rank = 0;
    for bit in 0..128 {
        let Some(p) = (rank..rows.len()).find(|&r| rows[r] >> bit & 1 == 1) else {
            continue;
        };
        rows.swap(rank, p);
        let pivot = rows[rank];
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && *row >> bit & 1 == 1 {
                *row ^= pivot;
            }
        }
        rank += 1;
    }
    rank
}

/// Any solution of `A d = b` over GF(2) with `vars` unknowns.
fn gf2_solve(mut rows: Vec<(u128, bool)>, vars: usize) -> Option<u128> {
    let mut pivots = Vec::new();
    let mut rank = 0;
    for bit in 0..vars {
        let Some(p) = (rank..rows.len()).find(|&r| rows[r].0 >> bit & 1 == 1) else {
            continue;
        };
        rows.swap(rank, p);
        let pivot = rows[rank];
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && row.0 >> bit & 1 == 1 {
                row.0 ^= pivot.0;
                row.1 ^= pivot.1;
            }
        }
        pivots.push(bit);
        rank += 1;
    }
    if rows[rank..].iter().any(|&(a, b)| a == 0 && b) {
        return None;
    }
    Some(
        pivots
            .iter()
            .zip(&rows)
            .filter(|(_, row)| row.1)
            .fold(0u128, |acc, (&bit, _)| acc | (1 << bit)),
    )
}
