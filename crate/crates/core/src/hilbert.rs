//! Dense state vectors over a hybrid register of one truncated bosonic mode
//! and a handful of two-level spins.
//!
//! Amplitudes are stored row-major over the layout order: subsystem 0 is the
//! slowest-varying index. At gate level every subsystem has dimension 2 and
//! subsystem 0 is the cavity restricted to Fock states `|0>` and `|1>`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Matrix = DMatrix<C64>;

/// Largest tolerated deviation of a state norm from one.
pub const NORM_TOL: f64 = 1e-12;
/// Default tolerance used by [`apply`] when checking unitarity.
pub const UNITARY_TOL: f64 = 1e-10;
/// Branches below this Born probability are treated as impossible.
pub const MIN_BRANCH_PROBABILITY: f64 = 1e-14;

pub const CAVITY: usize = 0;
pub const SPIN_COUNT: usize = 6;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subsystem {
    pub label: String,
    pub dim: usize,
}

impl Subsystem {
    pub fn new(label: impl Into<String>, dim: usize) -> Self {
        Self {
            label: label.into(),
            dim,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsystemLayout {
    subsystems: Vec<Subsystem>,
}

impl SubsystemLayout {
    pub fn new(subsystems: Vec<Subsystem>) -> Result<Self> {
        if subsystems.is_empty() {
            return Err(Error::InvalidLayout("layout has no subsystems".into()));
        }
        for (i, s) in subsystems.iter().enumerate() {
            if s.dim == 0 {
                return Err(Error::InvalidLayout(format!(
                    "subsystem {:?} has dimension 0",
                    s.label
                )));
            }
            if subsystems[..i].iter().any(|o| o.label == s.label) {
                return Err(Error::InvalidLayout(format!(
                    "duplicate label {:?}",
                    s.label
                )));
            }
        }
        Ok(Self { subsystems })
    }

    /// Cavity (two Fock levels) followed by spins 1..6.
    pub fn gate_level() -> Self {
        let mut subsystems = vec![Subsystem::new("cavity", 2)];
        subsystems.extend((1..=SPIN_COUNT).map(|k| Subsystem::new(spin_label(k), 2)));
        Self { subsystems }
    }

    /// Spins 1..6 without the cavity.
    pub fn spins() -> Self {
        Self {
            subsystems: (1..=SPIN_COUNT)
                .map(|k| Subsystem::new(spin_label(k), 2))
                .collect(),
        }
    }

    /// `n` anonymous qubits labelled `q0..q{n-1}`.
    pub fn qubits(n: usize) -> Self {
        Self {
            subsystems: (0..n).map(|k| Subsystem::new(format!("q{k}"), 2)).collect(),
        }
    }

    /// Cavity truncated at `n_max` photons, followed by one qubit.
    pub fn pulse_level(n_max: usize) -> Self {
        Self {
            subsystems: vec![Subsystem::new("cavity", n_max + 1), Subsystem::new("qubit", 2)],
        }
    }

    pub fn len(&self) -> usize {
        self.subsystems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsystems.is_empty()
    }

    pub fn subsystems(&self) -> &[Subsystem] {
        &self.subsystems
    }

    pub fn dim(&self, index: usize) -> usize {
        self.subsystems[index].dim
    }

    pub fn total_dim(&self) -> usize {
        self.subsystems.iter().map(|s| s.dim).product()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.subsystems.iter().position(|s| s.label == label)
    }

    pub fn is_qubit_register(&self) -> bool {
        self.subsystems.iter().all(|s| s.dim == 2)
    }

    /// Stride of each subsystem in the flat amplitude index.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.len()];
        for i in (0..self.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.subsystems[i + 1].dim;
        }
        strides
    }

    /// Layout with subsystem `index` removed.
    pub fn without(&self, index: usize) -> Result<Self> {
        if index >= self.len() || self.len() == 1 {
            return Err(Error::InvalidLayout(format!(
                "cannot remove subsystem {index} from a layout of {}",
                self.len()
            )));
        }
        let mut subsystems = self.subsystems.clone();
        subsystems.remove(index);
        Ok(Self { subsystems })
    }

    /// Concatenation `self ⊗ other`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        let mut subsystems = self.subsystems.clone();
        subsystems.extend(other.subsystems.iter().cloned());
        Self::new(subsystems)
    }

    fn check_targets(&self, targets: &[usize]) -> Result<usize> {
        if targets.is_empty() {
            return Err(Error::InvalidTargets {
                targets: targets.to_vec(),
                reason: "empty".into(),
            });
        }
        for (i, &t) in targets.iter().enumerate() {
            if t >= self.len() {
                return Err(Error::InvalidTargets {
                    targets: targets.to_vec(),
                    reason: format!("index {t} out of range for {} subsystems", self.len()),
                });
            }
            if targets[..i].contains(&t) {
                return Err(Error::InvalidTargets {
                    targets: targets.to_vec(),
                    reason: format!("duplicate index {t}"),
                });
            }
        }
        Ok(targets.iter().map(|&t| self.dim(t)).product())
    }

    /// Flat-index offsets of the target block (row-major over `targets`) and
    /// the base indices of every block (all target digits zero).
    fn block_structure(&self, targets: &[usize]) -> (Vec<usize>, Vec<usize>) {
        let strides = self.strides();
        let mut offsets = vec![0usize];
        for &t in targets {
            let mut next = Vec::with_capacity(offsets.len() * self.dim(t));
            for &o in &offsets {
                for d in 0..self.dim(t) {
                    next.push(o + d * strides[t]);
                }
            }
            offsets = next;
        }
        let bases = (0..self.total_dim())
            .filter(|&i| {
                targets
                    .iter()
                    .all(|&t| (i / strides[t]).is_multiple_of(self.dim(t)))
            })
            .collect();
        (offsets, bases)
    }
}

pub fn spin_label(k: usize) -> String {
    format!("spin{k}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearOperator {
    matrix: Matrix,
    hermitian: bool,
}

impl LinearOperator {
    pub fn new(matrix: Matrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::NotSquare {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
            });
        }
        Ok(Self {
            matrix,
            hermitian: false,
        })
    }

    /// Wraps a matrix that must be Hermitian to within `1e-12` per entry.
    pub fn hermitian(matrix: Matrix) -> Result<Self> {
        let mut op = Self::new(matrix)?;
        let deviation = op.hermiticity_deviation();
        if deviation >= 1e-12 {
            return Err(Error::NotHermitian { deviation });
        }
        op.hermitian = true;
        Ok(op)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: Matrix::identity(dim, dim),
            hermitian: true,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            matrix: Matrix::zeros(dim, dim),
            hermitian: true,
        }
    }

    pub fn from_rows(rows: &[&[C64]]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::NotSquare {
                rows: n,
                cols: rows.first().map_or(0, |r| r.len()),
            });
        }
        Self::new(Matrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        max_abs(&(&self.matrix - self.matrix.adjoint()))
    }

    pub fn unitarity_deviation(&self) -> f64 {
        let n = self.dim();
        max_abs(&(self.matrix.adjoint() * &self.matrix - Matrix::identity(n, n)))
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_deviation() < tol
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
            hermitian: self.hermitian,
        }
    }

    pub fn compose(&self, rhs: &Self) -> Result<Self> {
        if self.dim() != rhs.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: rhs.dim(),
            });
        }
        Self::new(&self.matrix * &rhs.matrix)
    }

    pub fn kron(&self, rhs: &Self) -> Self {
        Self {
            matrix: self.matrix.kronecker(&rhs.matrix),
            hermitian: self.hermitian && rhs.hermitian,
        }
    }

    pub fn to_sparse(&self) -> SparseOperator {
        let mut entries = Vec::new();
        for j in 0..self.dim() {
            for i in 0..self.dim() {
                let v = self.matrix[(i, j)];
                if v != C64::new(0.0, 0.0) {
                    entries.push((i, j, v));
                }
            }
        }
        SparseOperator {
            dim: self.dim(),
            entries,
        }
    }
}

/// Coordinate-format operator, produced by [`embed_sparse`].
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    pub dim: usize,
    pub entries: Vec<(usize, usize, C64)>,
}

impl SparseOperator {
    pub fn to_dense(&self) -> LinearOperator {
        let mut m = Matrix::zeros(self.dim, self.dim);
        for &(i, j, v) in &self.entries {
            m[(i, j)] += v;
        }
        LinearOperator {
            matrix: m,
            hermitian: false,
        }
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn mul_vec(&self, v: &DVector<C64>) -> DVector<C64> {
        let mut out = DVector::zeros(self.dim);
        for &(i, j, a) in &self.entries {
            out[i] += a * v[j];
        }
        out
    }
}

pub(crate) fn max_abs(m: &Matrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    layout: SubsystemLayout,
    amplitudes: DVector<C64>,
}

impl StateVector {
    /// Normalizes `amplitudes`; fails on a length mismatch or zero vector.
    pub fn new(layout: SubsystemLayout, amplitudes: DVector<C64>) -> Result<Self> {
        if amplitudes.len() != layout.total_dim() {
            return Err(Error::DimensionMismatch {
                expected: layout.total_dim(),
                actual: amplitudes.len(),
            });
        }
        let norm = amplitudes.norm();
        if norm < 1e-300 {
            return Err(Error::ZeroNorm);
        }
        Ok(Self {
            layout,
            amplitudes: amplitudes / C64::new(norm, 0.0),
        })
    }

    pub fn from_vec(layout: SubsystemLayout, amplitudes: Vec<C64>) -> Result<Self> {
        Self::new(layout, DVector::from_vec(amplitudes))
    }

    /// Computational basis state with the given digit per subsystem.
    pub fn basis(layout: SubsystemLayout, digits: &[usize]) -> Result<Self> {
        if digits.len() != layout.len() {
            return Err(Error::DimensionMismatch {
                expected: layout.len(),
                actual: digits.len(),
            });
        }
        let strides = layout.strides();
        let mut index = 0;
        for (i, &d) in digits.iter().enumerate() {
            if d >= layout.dim(i) {
                return Err(Error::InvalidTargets {
                    targets: vec![i],
                    reason: format!("digit {d} exceeds dimension {}", layout.dim(i)),
                });
            }
            index += d * strides[i];
        }
        let mut amps = DVector::zeros(layout.total_dim());
        amps[index] = C64::new(1.0, 0.0);
        Ok(Self {
            layout,
            amplitudes: amps,
        })
    }

    /// Tensor product of one local vector per subsystem.
    pub fn product(layout: SubsystemLayout, factors: &[Vec<C64>]) -> Result<Self> {
        if factors.len() != layout.len() {
            return Err(Error::DimensionMismatch {
                expected: layout.len(),
                actual: factors.len(),
            });
        }
        let mut amps = DVector::from_element(1, C64::new(1.0, 0.0));
        for (i, f) in factors.iter().enumerate() {
            if f.len() != layout.dim(i) {
                return Err(Error::DimensionMismatch {
                    expected: layout.dim(i),
                    actual: f.len(),
                });
            }
            amps = amps.kronecker(&DVector::from_column_slice(f));
        }
        Self::new(layout, amps)
    }

    pub fn layout(&self) -> &SubsystemLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Self) -> Result<C64> {
        self.require_same_layout(other)?;
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    pub fn tensor(&self, other: &Self) -> Result<Self> {
        Ok(Self {
            layout: self.layout.concat(&other.layout)?,
            amplitudes: self.amplitudes.kronecker(&other.amplitudes),
        })
    }

    /// `<psi| op |psi>` for `op` acting on `targets`.
    pub fn expectation(&self, op: &LinearOperator, targets: &[usize]) -> Result<C64> {
        let image = apply_raw(op, targets, self)?;
        Ok(self.amplitudes.dotc(&image))
    }

    /// Projects subsystem `index` onto `bra` and removes it from the layout.
    pub fn contract(&self, index: usize, bra: &[C64]) -> Result<Self> {
        let layout = self.layout.without(index)?;
        if bra.len() != self.layout.dim(index) {
            return Err(Error::DimensionMismatch {
                expected: self.layout.dim(index),
                actual: bra.len(),
            });
        }
        let strides = self.layout.strides();
        let d = self.layout.dim(index);
        let stride = strides[index];
        let outer = self.dim() / (d * stride);
        let mut amps = DVector::zeros(layout.total_dim());
        for hi in 0..outer {
            for lo in 0..stride {
                let mut acc = C64::new(0.0, 0.0);
                for (k, b) in bra.iter().enumerate() {
                    acc += b.conj() * self.amplitudes[hi * d * stride + k * stride + lo];
                }
                amps[hi * stride + lo] = acc;
            }
        }
        Self::new(layout, amps)
    }

    /// Reorders subsystems so that new subsystem `i` is old subsystem `order[i]`.
    pub fn permute(&self, order: &[usize]) -> Result<Self> {
        let n = self.layout.len();
        let mut seen = vec![false; n];
        if order.len() != n || order.iter().any(|&o| o >= n || std::mem::replace(&mut seen[o], true)) {
            return Err(Error::InvalidTargets {
                targets: order.to_vec(),
                reason: "not a permutation of the layout".into(),
            });
        }
        let layout = SubsystemLayout::new(
            order
                .iter()
                .map(|&o| self.layout.subsystems[o].clone())
                .collect(),
        )?;
        let old_strides = self.layout.strides();
        let new_strides = layout.strides();
        let mut amps = DVector::zeros(self.dim());
        for new_index in 0..self.dim() {
            let mut old_index = 0;
            for (i, &o) in order.iter().enumerate() {
                let digit = (new_index / new_strides[i]) % layout.dim(i);
                old_index += digit * old_strides[o];
            }
            amps[new_index] = self.amplitudes[old_index];
        }
        Ok(Self {
            layout,
            amplitudes: amps,
        })
    }

    fn require_same_layout(&self, other: &Self) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::LayoutMismatch(format!(
                "{} subsystems vs {} subsystems",
                self.layout.len(),
                other.layout.len()
            )));
        }
        Ok(())
    }

    pub(crate) fn from_raw(layout: SubsystemLayout, amplitudes: DVector<C64>) -> Self {
        Self { layout, amplitudes }
    }
}

/// Full-register operator acting as `op` on `targets` and as the identity
/// elsewhere.
pub fn embed(op: &LinearOperator, targets: &[usize], layout: &SubsystemLayout) -> Result<LinearOperator> {
    let sparse = embed_sparse(op, targets, layout)?;
    let mut dense = sparse.to_dense();
    dense.hermitian = op.hermitian;
    Ok(dense)
}

pub fn embed_sparse(
    op: &LinearOperator,
    targets: &[usize],
    layout: &SubsystemLayout,
) -> Result<SparseOperator> {
    let block = layout.check_targets(targets)?;
    if block != op.dim() {
        return Err(Error::DimensionMismatch {
            expected: block,
            actual: op.dim(),
        });
    }
    let (offsets, bases) = layout.block_structure(targets);
    let mut entries = Vec::new();
    for &base in &bases {
        for (r, &ro) in offsets.iter().enumerate() {
            for (c, &co) in offsets.iter().enumerate() {
                let v = op.matrix[(r, c)];
                if v != C64::new(0.0, 0.0) {
                    entries.push((base + ro, base + co, v));
                }
            }
        }
    }
    Ok(SparseOperator {
        dim: layout.total_dim(),
        entries,
    })
}

fn apply_raw(op: &LinearOperator, targets: &[usize], state: &StateVector) -> Result<DVector<C64>> {
    let layout = state.layout();
    let block = layout.check_targets(targets)?;
    if block != op.dim() {
        return Err(Error::DimensionMismatch {
            expected: block,
            actual: op.dim(),
        });
    }
    let (offsets, bases) = layout.block_structure(targets);
    let input = state.amplitudes();
    let mut out = DVector::zeros(input.len());
    for &base in &bases {
        for (r, &ro) in offsets.iter().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for (c, &co) in offsets.iter().enumerate() {
                acc += op.matrix[(r, c)] * input[base + co];
            }
            out[base + ro] = acc;
        }
    }
    Ok(out)
}

/// Applies a unitary `op` to `targets`, returning a new state.
pub fn apply(op: &LinearOperator, targets: &[usize], state: &StateVector) -> Result<StateVector> {
    let deviation = op.unitarity_deviation();
    if deviation >= UNITARY_TOL {
        return Err(Error::NotUnitary { deviation });
    }
    let out = apply_raw(op, targets, state)?;
    Ok(StateVector::from_raw(state.layout.clone(), out))
}

/// Applies an arbitrary operator and renormalizes the result.
pub fn apply_nonunitary(
    op: &LinearOperator,
    targets: &[usize],
    state: &StateVector,
) -> Result<StateVector> {
    let out = apply_raw(op, targets, state)?;
    StateVector::new(state.layout.clone(), out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MeasurePolicy {
    PostselectPlus,
    Sample { seed: u64 },
    BothBranches,
}

impl fmt::Display for MeasurePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::PostselectPlus => write!(f, "postselect_plus"),
            Self::Sample { seed } => write!(f, "sample:{seed}"),
            Self::BothBranches => write!(f, "both_branches"),
        }
    }
}

impl FromStr for MeasurePolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "postselect_plus" => Ok(Self::PostselectPlus),
            "both_branches" => Ok(Self::BothBranches),
            "sample" => Ok(Self::Sample { seed: 0 }),
            _ => match s.strip_prefix("sample:") {
                Some(seed) => seed
                    .parse()
                    .map(|seed| Self::Sample { seed })
                    .map_err(|e| format!("bad seed in {s:?}: {e}")),
                None => Err(format!(
                    "unknown measurement policy {s:?} (postselect_plus | sample[:seed] | both_branches)"
                )),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct XBranch {
    pub outcome: i8,
    pub probability: f64,
    pub state: StateVector,
}

#[derive(Clone, Debug, PartialEq)]
pub enum XMeasurement {
    Selected(XBranch),
    Both {
        plus: Option<XBranch>,
        minus: Option<XBranch>,
    },
}

impl XMeasurement {
    /// The reported branch: the selected one, or `+` (falling back to `-`)
    /// under `BothBranches`.
    pub fn primary(&self) -> &XBranch {
        match self {
            Self::Selected(b) => b,
            Self::Both { plus, minus } => plus
                .as_ref()
                .or(minus.as_ref())
                .expect("at least one branch has nonzero probability"),
        }
    }

    pub fn branches(&self) -> Vec<&XBranch> {
        match self {
            Self::Selected(b) => vec![b],
            Self::Both { plus, minus } => plus.iter().chain(minus.iter()).collect(),
        }
    }
}

pub fn plus_vector() -> Vec<C64> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    vec![C64::new(h, 0.0), C64::new(h, 0.0)]
}

pub fn minus_vector() -> Vec<C64> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    vec![C64::new(h, 0.0), C64::new(-h, 0.0)]
}

pub fn zero_vector() -> Vec<C64> {
    vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]
}

pub fn one_vector() -> Vec<C64> {
    vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)]
}

fn x_projector(sign: i8) -> LinearOperator {
    let s = f64::from(sign) * 0.5;
    LinearOperator::hermitian(Matrix::from_row_slice(
        2,
        2,
        &[C64::new(0.5, 0.0), C64::new(s, 0.0), C64::new(s, 0.0), C64::new(0.5, 0.0)],
    ))
    .expect("projector is Hermitian")
}

/// Projective measurement of a two-level subsystem in the `|±>` basis.
pub fn measure_x(subsystem: usize, state: &StateVector, policy: MeasurePolicy) -> Result<XMeasurement> {
    let layout = state.layout();
    layout.check_targets(&[subsystem])?;
    if layout.dim(subsystem) != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            actual: layout.dim(subsystem),
        });
    }
    let branch = |sign: i8| -> Result<(f64, DVector<C64>)> {
        let projected = apply_raw(&x_projector(sign), &[subsystem], state)?;
        Ok((projected.norm_squared(), projected))
    };
    let finish = |sign: i8, (probability, amps): (f64, DVector<C64>)| -> Result<XBranch> {
        if probability < MIN_BRANCH_PROBABILITY {
            return Err(Error::ZeroProbabilityBranch { probability });
        }
        Ok(XBranch {
            outcome: sign,
            probability,
            state: StateVector::new(layout.clone(), amps)?,
        })
    };
    match policy {
        MeasurePolicy::PostselectPlus => Ok(XMeasurement::Selected(finish(1, branch(1)?)?)),
        MeasurePolicy::Sample { seed } => {
            let plus = branch(1)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u: f64 = rng.random();
            if u < plus.0 {
                Ok(XMeasurement::Selected(finish(1, plus)?))
            } else {
                Ok(XMeasurement::Selected(finish(-1, branch(-1)?)?))
            }
        }
        MeasurePolicy::BothBranches => {
            let plus = finish(1, branch(1)?).ok();
            let minus = finish(-1, branch(-1)?).ok();
            Ok(XMeasurement::Both { plus, minus })
        }
    }
}

/// Reduced density matrix of one subsystem (partial trace over the rest).
pub fn reduced_density(state: &StateVector, subsystem: usize) -> Result<Matrix> {
    let layout = state.layout();
    layout.check_targets(&[subsystem])?;
    let d = layout.dim(subsystem);
    let stride = layout.strides()[subsystem];
    let outer = state.dim() / (d * stride);
    let amps = state.amplitudes();
    let mut rho = Matrix::zeros(d, d);
    for hi in 0..outer {
        for lo in 0..stride {
            for a in 0..d {
                let va = amps[hi * d * stride + a * stride + lo];
                for b in 0..d {
                    let vb = amps[hi * d * stride + b * stride + lo];
                    rho[(a, b)] += va * vb.conj();
                }
            }
        }
    }
    Ok(rho)
}

/// 2x2 reduced state of the cavity for a gate-level register.
pub fn reduced_cavity_state(state: &StateVector) -> Result<Matrix> {
    let layout = state.layout();
    if !layout.is_qubit_register() || layout.subsystems()[CAVITY].label != "cavity" {
        return Err(Error::LayoutMismatch(
            "reduced_cavity_state needs a gate-level layout with the cavity first".into(),
        ));
    }
    reduced_density(state, CAVITY)
}

/// `|<a|b>|^2`.
pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64> {
    Ok(a.inner(b)?.norm_sqr().min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn sigma_x() -> LinearOperator {
        LinearOperator::from_rows(&[&[c(0.0), c(1.0)], &[c(1.0), c(0.0)]]).unwrap()
    }

    fn sigma_z() -> LinearOperator {
        LinearOperator::from_rows(&[&[c(1.0), c(0.0)], &[c(0.0), c(-1.0)]]).unwrap()
    }

    fn hadamard() -> LinearOperator {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        LinearOperator::from_rows(&[&[c(h), c(h)], &[c(h), c(-h)]]).unwrap()
    }

    #[test]
    fn layout_rejects_duplicate_labels_and_zero_dims() {
        assert!(SubsystemLayout::new(vec![Subsystem::new("a", 2), Subsystem::new("a", 2)]).is_err());
        assert!(SubsystemLayout::new(vec![Subsystem::new("a", 0)]).is_err());
        let l = SubsystemLayout::gate_level();
        assert_eq!(l.total_dim(), 128);
        assert_eq!(l.index_of("spin4"), Some(4));
        assert_eq!(SubsystemLayout::pulse_level(4).total_dim(), 10);
    }

    #[test]
    fn embed_identity_is_identity() {
        let layout = SubsystemLayout::gate_level();
        let op = embed(&LinearOperator::identity(2), &[3], &layout).unwrap();
        assert_eq!(op.matrix(), &Matrix::identity(128, 128));
    }

    #[test]
    fn embed_sigma_x_on_first_of_two_qubits() {
        let layout = SubsystemLayout::qubits(2);
        let op = embed(&sigma_x(), &[0], &layout).unwrap();
        let expected = sigma_x().kron(&LinearOperator::identity(2));
        assert_eq!(op.matrix(), expected.matrix());
    }

    #[test]
    fn embed_sigma_z_leaves_all_zero_state() {
        let layout = SubsystemLayout::gate_level();
        let psi = StateVector::basis(layout.clone(), &[0; 7]).unwrap();
        let op = embed(&sigma_z(), &[3], &layout).unwrap();
        let out = op.matrix() * psi.amplitudes();
        assert_eq!(&out, psi.amplitudes());
    }

    #[test]
    fn embed_rejects_bad_targets() {
        let layout = SubsystemLayout::qubits(3);
        assert!(matches!(
            embed(&sigma_x(), &[3], &layout),
            Err(Error::InvalidTargets { .. })
        ));
        let two = sigma_x().kron(&sigma_x());
        assert!(matches!(
            embed(&two, &[1, 1], &layout),
            Err(Error::InvalidTargets { .. })
        ));
        assert!(matches!(
            embed(&two, &[1], &layout),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn apply_matches_embedded_matrix_for_mixed_dimensions() {
        let layout = SubsystemLayout::new(vec![
            Subsystem::new("a", 3),
            Subsystem::new("b", 2),
            Subsystem::new("c", 2),
        ])
        .unwrap();
        let amps: Vec<C64> = (0..12).map(|k| C64::new(k as f64 + 1.0, 0.5 * k as f64)).collect();
        let psi = StateVector::from_vec(layout.clone(), amps).unwrap();
        let op = hadamard().kron(&sigma_x());
        for targets in [[2usize, 1usize], [1, 2]] {
            let direct = apply(&op, &targets, &psi).unwrap();
            let full = embed(&op, &targets, &layout).unwrap();
            let via = full.matrix() * psi.amplitudes();
            assert_abs_diff_eq!((direct.amplitudes() - via).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn apply_identity_and_flips() {
        let layout = SubsystemLayout::spins();
        let psi = StateVector::basis(layout.clone(), &[0; 6]).unwrap();
        let same = apply(&LinearOperator::identity(2), &[2], &psi).unwrap();
        assert_eq!(same, psi);
        let flipped = apply(&sigma_x(), &[2], &psi).unwrap();
        assert_eq!(flipped, StateVector::basis(layout, &[0, 0, 1, 0, 0, 0]).unwrap());
        // input is untouched
        assert_eq!(psi.amplitudes()[0], c(1.0));
    }

    #[test]
    fn hadamard_on_zero_gives_plus() {
        let layout = SubsystemLayout::qubits(1);
        let zero = StateVector::basis(layout.clone(), &[0]).unwrap();
        let plus = StateVector::product(layout, &[plus_vector()]).unwrap();
        let out = apply(&hadamard(), &[0], &zero).unwrap();
        assert_abs_diff_eq!(fidelity(&out, &plus).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn apply_rejects_nonunitary() {
        let layout = SubsystemLayout::qubits(1);
        let zero = StateVector::basis(layout, &[0]).unwrap();
        let proj = LinearOperator::from_rows(&[&[c(1.0), c(0.0)], &[c(0.0), c(0.0)]]).unwrap();
        assert!(matches!(apply(&proj, &[0], &zero), Err(Error::NotUnitary { .. })));
        assert!(apply_nonunitary(&proj, &[0], &zero).is_ok());
    }

    #[test]
    fn measure_x_on_eigenstates() {
        let layout = SubsystemLayout::qubits(2);
        let plus = StateVector::product(layout.clone(), &[plus_vector(), one_vector()]).unwrap();
        let m = measure_x(0, &plus, MeasurePolicy::PostselectPlus).unwrap();
        let b = m.primary();
        assert_eq!(b.outcome, 1);
        assert_abs_diff_eq!(b.probability, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(fidelity(&b.state, &plus).unwrap(), 1.0, epsilon = 1e-14);

        let minus = StateVector::product(layout, &[minus_vector(), one_vector()]).unwrap();
        let m = measure_x(0, &minus, MeasurePolicy::BothBranches).unwrap();
        let b = m.primary();
        assert_eq!(b.outcome, -1);
        assert_abs_diff_eq!(b.probability, 1.0, epsilon = 1e-14);
        assert!(matches!(
            measure_x(0, &minus, MeasurePolicy::PostselectPlus),
            Err(Error::ZeroProbabilityBranch { .. })
        ));
    }

    #[test]
    fn measure_x_on_bell_state_is_unbiased() {
        // Born rule on (|00> + |11>)/sqrt2: P(+) = |<+0|psi>|^2 + |<+1|psi>|^2 = 1/4 + 1/4.
        let layout = SubsystemLayout::qubits(2);
        let bell = StateVector::from_vec(layout, vec![c(1.0), c(0.0), c(0.0), c(1.0)]).unwrap();
        let m = measure_x(0, &bell, MeasurePolicy::BothBranches).unwrap();
        let probs: Vec<f64> = m.branches().iter().map(|b| b.probability).collect();
        assert_eq!(probs.len(), 2);
        for p in &probs {
            assert_abs_diff_eq!(*p, 0.5, epsilon = 1e-14);
        }
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let layout = SubsystemLayout::qubits(2);
        let bell = StateVector::from_vec(layout, vec![c(1.0), c(0.0), c(0.0), c(1.0)]).unwrap();
        let outcomes: Vec<i8> = (0..32)
            .map(|seed| {
                measure_x(0, &bell, MeasurePolicy::Sample { seed })
                    .unwrap()
                    .primary()
                    .outcome
            })
            .collect();
        let again: Vec<i8> = (0..32)
            .map(|seed| {
                measure_x(0, &bell, MeasurePolicy::Sample { seed })
                    .unwrap()
                    .primary()
                    .outcome
            })
            .collect();
        assert_eq!(outcomes, again);
        assert!(outcomes.contains(&1) && outcomes.contains(&-1));
    }

    #[test]
    fn reduced_cavity_of_product_and_entangled_states() {
        let layout = SubsystemLayout::gate_level();
        let mut factors = vec![minus_vector()];
        factors.extend((0..6).map(|_| plus_vector()));
        let psi = StateVector::product(layout.clone(), &factors).unwrap();
        let rho = reduced_cavity_state(&psi).unwrap();
        let expected = Matrix::from_row_slice(2, 2, &[c(0.5), c(-0.5), c(-0.5), c(0.5)]);
        assert_abs_diff_eq!(max_abs(&(rho - expected)), 0.0, epsilon = 1e-12);

        let mut amps = vec![c(0.0); 128];
        amps[0] = c(1.0);
        amps[64 + 32] = c(1.0);
        let ent = StateVector::from_vec(layout, amps).unwrap();
        let rho = reduced_cavity_state(&ent).unwrap();
        assert_abs_diff_eq!(max_abs(&(rho - Matrix::identity(2, 2) * c(0.5))), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn fidelity_examples() {
        let layout = SubsystemLayout::qubits(1);
        let zero = StateVector::basis(layout.clone(), &[0]).unwrap();
        let one = StateVector::basis(layout.clone(), &[1]).unwrap();
        let plus = StateVector::product(layout.clone(), &[plus_vector()]).unwrap();
        assert_abs_diff_eq!(fidelity(&plus, &plus).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(fidelity(&zero, &one).unwrap(), 0.0);
        assert_abs_diff_eq!(fidelity(&plus, &zero).unwrap(), 0.5, epsilon = 1e-15);
        let other = StateVector::basis(SubsystemLayout::qubits(2), &[0, 0]).unwrap();
        assert!(matches!(fidelity(&zero, &other), Err(Error::LayoutMismatch(_))));
    }

    #[test]
    fn contract_and_permute() {
        let layout = SubsystemLayout::qubits(3);
        let psi = StateVector::product(layout, &[plus_vector(), one_vector(), zero_vector()]).unwrap();
        let rest = psi.contract(0, &plus_vector()).unwrap();
        let expected = StateVector::product(
            SubsystemLayout::new(vec![Subsystem::new("q1", 2), Subsystem::new("q2", 2)]).unwrap(),
            &[one_vector(), zero_vector()],
        )
        .unwrap();
        assert_abs_diff_eq!(fidelity(&rest, &expected).unwrap(), 1.0, epsilon = 1e-14);

        let swapped = psi.permute(&[2, 1, 0]).unwrap();
        assert_eq!(swapped.layout().subsystems()[0].label, "q2");
        let rho = reduced_density(&swapped, 2).unwrap();
        assert_abs_diff_eq!(rho[(0, 1)].re, 0.5, epsilon = 1e-14);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn random_state(n: usize, seed: &[f64]) -> StateVector {
            let layout = SubsystemLayout::qubits(n);
            let amps = (0..1 << n)
                .map(|k| C64::new(seed[k % seed.len()] + k as f64 * 0.1, seed[(k + 1) % seed.len()]))
                .collect();
            StateVector::from_vec(layout, amps).unwrap()
        }

        fn rotation(theta: f64, phi: f64) -> LinearOperator {
            let (s, c) = theta.sin_cos();
            let e = C64::from_polar(1.0, phi);
            LinearOperator::from_rows(&[&[C64::new(c, 0.0), -e.conj() * s], &[e * s, C64::new(c, 0.0)]])
                .unwrap()
        }

        proptest! {
            #[test]
            fn unitary_apply_preserves_norm(seed in proptest::collection::vec(-1.0f64..1.0, 4),
                                            theta in 0.0f64..6.3, phi in 0.0f64..6.3, t in 0usize..4) {
                let psi = random_state(4, &seed);
                let out = apply(&rotation(theta, phi), &[t], &psi).unwrap();
                prop_assert!((out.norm() - 1.0).abs() <= NORM_TOL);
            }

            #[test]
            fn embed_respects_composition(a in 0.0f64..6.3, b in 0.0f64..6.3, t in 0usize..3) {
                let layout = SubsystemLayout::qubits(3);
                let (ra, rb) = (rotation(a, b), rotation(b, a));
                let lhs = embed(&ra.compose(&rb).unwrap(), &[t], &layout).unwrap();
                let rhs = embed(&ra, &[t], &layout).unwrap().compose(&embed(&rb, &[t], &layout).unwrap()).unwrap();
                prop_assert!(max_abs(&(lhs.matrix() - rhs.matrix())) < 1e-12);
            }

            #[test]
            fn measure_x_probabilities_sum_to_one(seed in proptest::collection::vec(-1.0f64..1.0, 5), t in 0usize..3) {
                let psi = random_state(3, &seed);
                let m = measure_x(t, &psi, MeasurePolicy::BothBranches).unwrap();
                let total: f64 = m.branches().iter().map(|b| b.probability).sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
            }

            #[test]
            fn reduced_cavity_of_product_is_pure(theta in 0.0f64..3.2, phi in 0.0f64..6.3,
                                                 seed in proptest::collection::vec(-1.0f64..1.0, 3)) {
                let cav = vec![C64::new((theta / 2.0).cos(), 0.0), C64::from_polar((theta / 2.0).sin(), phi)];
                let cav_state = StateVector::product(SubsystemLayout::new(vec![Subsystem::new("cavity", 2)]).unwrap(), std::slice::from_ref(&cav)).unwrap();
                let spins = random_state(6, &seed);
                let spins = StateVector::from_vec(SubsystemLayout::spins(), spins.amplitudes().iter().copied().collect()).unwrap();
                let psi = cav_state.tensor(&spins).unwrap();
                let rho = reduced_cavity_state(&psi).unwrap();
                let v = nalgebra::DVector::from_vec(cav);
                let expected = &v * v.adjoint();
                prop_assert!(max_abs(&(rho - expected)) < 1e-12);
            }
        }
    }
}
