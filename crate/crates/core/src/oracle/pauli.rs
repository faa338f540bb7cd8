use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::hilbert::{LinearOperator, Matrix, StateVector, C64};

pub const MAX_QUBITS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    fn bits(self) -> (bool, bool) {
        match self {
            Pauli::I => (false, false),
            Pauli::X => (true, false),
            Pauli::Y => (true, true),
            Pauli::Z => (false, true),
        }
    }

    fn from_bits(x: bool, z: bool) -> Self {
        match (x, z) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (true, true) => Pauli::Y,
            (false, true) => Pauli::Z,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    /// Index used by conjugation tables.
    pub(crate) fn code(self) -> usize {
        match self {
            Pauli::I => 0,
            Pauli::X => 1,
            Pauli::Y => 2,
            Pauli::Z => 3,
        }
    }

    pub(crate) fn from_code(code: usize) -> Self {
        Self::ALL[code & 3]
    }

    pub fn matrix(self) -> Matrix {
        let o = C64::new(0.0, 0.0);
        let l = C64::new(1.0, 0.0);
        let i = C64::new(0.0, 1.0);
        let entries = match self {
            Pauli::I => [l, o, o, l],
            Pauli::X => [o, l, l, o],
            Pauli::Y => [o, -i, i, o],
            Pauli::Z => [l, o, o, -l],
        };
        Matrix::from_row_slice(2, 2, &entries)
    }

    /// `self * rhs = i^k * letter`.
    fn product(self, rhs: Self) -> (Self, u8) {
        use Pauli::*;
        let k = match (self, rhs) {
            (X, Y) | (Y, Z) | (Z, X) => 1,
            (Y, X) | (Z, Y) | (X, Z) => 3,
            _ => 0,
        };
        let (ax, az) = self.bits();
        let (bx, bz) = rhs.bits();
        (Self::from_bits(ax ^ bx, az ^ bz), k)
    }
}

/// `i^phase` times a tensor product of Hermitian single-qubit Paulis.
///
/// Qubit `q` is bit `q` of the masks and character `q` of the text form.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PauliString {
    n: usize,
    x: u64,
    z: u64,
    phase: u8,
}

impl PauliString {
    pub fn identity(n: usize) -> Self {
        assert!(n <= MAX_QUBITS, "at most {MAX_QUBITS} qubits");
        Self { n, x: 0, z: 0, phase: 0 }
    }

    pub fn single(n: usize, qubit: usize, p: Pauli) -> Self {
        let mut s = Self::identity(n);
        s.set(qubit, p);
        s
    }

    /// The same letter on every listed qubit.
    pub fn on(n: usize, p: Pauli, qubits: &[usize]) -> Self {
        let mut s = Self::identity(n);
        for &q in qubits {
            s.set(q, p);
        }
        s
    }

    pub fn from_letters(letters: &[Pauli]) -> Self {
        let mut s = Self::identity(letters.len());
        for (q, &p) in letters.iter().enumerate() {
            s.set(q, p);
        }
        s
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn phase(&self) -> u8 {
        self.phase
    }

    pub fn x_mask(&self) -> u64 {
        self.x
    }

    pub fn z_mask(&self) -> u64 {
        self.z
    }

    pub fn get(&self, q: usize) -> Pauli {
        Pauli::from_bits(self.x >> q & 1 == 1, self.z >> q & 1 == 1)
    }

    pub fn set(&mut self, q: usize, p: Pauli) {
        assert!(q < self.n, "qubit {q} out of range for {} qubits", self.n);
        let (x, z) = p.bits();
        self.x = (self.x & !(1 << q)) | (u64::from(x) << q);
        self.z = (self.z & !(1 << q)) | (u64::from(z) << q);
    }

    pub fn letters(&self) -> Vec<Pauli> {
        (0..self.n).map(|q| self.get(q)).collect()
    }

    /// Copy with phase `+1`.
    pub fn unsigned(&self) -> Self {
        Self { phase: 0, ..self.clone() }
    }

    pub fn negated(&self) -> Self {
        Self {
            phase: (self.phase + 2) % 4,
            ..self.clone()
        }
    }

    /// `i^k * self`.
    pub fn times_i_pow(&self, k: u8) -> Self {
        Self {
            phase: (self.phase + k) % 4,
            ..self.clone()
        }
    }

    pub fn with_sign(&self, sign: i8) -> Self {
        Self {
            phase: if sign < 0 { 2 } else { 0 },
            ..self.clone()
        }
    }

    /// `Some(±1)` for Hermitian strings.
    pub fn sign(&self) -> Option<i8> {
        match self.phase {
            0 => Some(1),
            2 => Some(-1),
            _ => None,
        }
    }

    pub fn is_hermitian(&self) -> bool {
        self.phase.is_multiple_of(2)
    }

    pub fn is_identity(&self) -> bool {
        self.x == 0 && self.z == 0
    }

    pub fn is_x_type(&self) -> bool {
        self.z == 0
    }

    pub fn is_z_type(&self) -> bool {
        self.x == 0
    }

    pub fn weight(&self) -> usize {
        (self.x | self.z).count_ones() as usize
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.n).filter(|&q| (self.x | self.z) >> q & 1 == 1).collect()
    }

    pub fn commutes_with(&self, other: &Self) -> bool {
        ((self.x & other.z) ^ (self.z & other.x)).count_ones().is_multiple_of(2)
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        assert_eq!(self.n, rhs.n, "Pauli strings of different length");
        let mut phase = u32::from(self.phase) + u32::from(rhs.phase);
        let mut overlap = (self.x | self.z) & (rhs.x | rhs.z);
        while overlap != 0 {
            let q = overlap.trailing_zeros() as usize;
            overlap &= overlap - 1;
            phase += u32::from(self.get(q).product(rhs.get(q)).1);
        }
        Self {
            n: self.n,
            x: self.x ^ rhs.x,
            z: self.z ^ rhs.z,
            phase: (phase % 4) as u8,
        }
    }

    /// Restriction to `qubits` (in the given order), phase dropped.
    pub(crate) fn restrict(&self, qubits: &[usize]) -> Self {
        Self::from_letters(&qubits.iter().map(|&q| self.get(q)).collect::<Vec<_>>())
    }

    /// Relabels qubits so that new qubit `i` is old qubit `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let mut out = Self::identity(order.len());
        for (i, &o) in order.iter().enumerate() {
            out.set(i, self.get(o));
        }
        out.phase = self.phase;
        out
    }

    pub fn tensor(&self, other: &Self) -> Self {
        let mut out = Self::identity(self.n + other.n);
        out.x = self.x | (other.x << self.n);
        out.z = self.z | (other.z << self.n);
        out.phase = (self.phase + other.phase) % 4;
        out
    }

    pub fn without_qubit(&self, q: usize) -> Self {
        let order: Vec<usize> = (0..self.n).filter(|&k| k != q).collect();
        let mut out = self.permuted(&order);
        out.phase = self.phase;
        out
    }

    fn phase_factor(&self) -> C64 {
        match self.phase {
            0 => C64::new(1.0, 0.0),
            1 => C64::new(0.0, 1.0),
            2 => C64::new(-1.0, 0.0),
            _ => C64::new(0.0, -1.0),
        }
    }

    /// Dense `2^n x 2^n` matrix; qubit 0 is the most significant factor.
    pub fn to_matrix(&self) -> Matrix {
        let mut m = Matrix::from_element(1, 1, self.phase_factor());
        for q in 0..self.n {
            m = m.kronecker(&self.get(q).matrix());
        }
        m
    }

    pub fn to_operator(&self) -> LinearOperator {
        LinearOperator::new(self.to_matrix()).expect("square")
    }

    /// Flat-index masks for a register where qubit 0 is the slowest index.
    fn flat_masks(&self) -> (usize, usize) {
        let mut xm = 0usize;
        let mut zm = 0usize;
        for q in 0..self.n {
            let bit = 1usize << (self.n - 1 - q);
            if self.x >> q & 1 == 1 {
                xm |= bit;
            }
            if self.z >> q & 1 == 1 {
                zm |= bit;
            }
        }
        (xm, zm)
    }

    pub(crate) fn apply_to_amplitudes(&self, amps: &DVector<C64>) -> DVector<C64> {
        let (xm, zm) = self.flat_masks();
        let ys = (self.x & self.z).count_ones() as u8;
        let base = Self { phase: (self.phase + ys) % 4, ..self.clone() }.phase_factor();
        let mut out = DVector::zeros(amps.len());
        for (i, a) in amps.iter().enumerate() {
            let sign = if (i & zm).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
            out[i ^ xm] = base * sign * a;
        }
        out
    }

    pub fn apply_to(&self, state: &StateVector) -> Result<StateVector> {
        self.check_register(state)?;
        Ok(StateVector::from_raw(
            state.layout().clone(),
            self.apply_to_amplitudes(state.amplitudes()),
        ))
    }

    /// `<psi|P|psi>`; real for Hermitian `P`.
    pub fn expectation_in(&self, state: &StateVector) -> Result<f64> {
        self.check_register(state)?;
        Ok(state
            .amplitudes()
            .dotc(&self.apply_to_amplitudes(state.amplitudes()))
            .re)
    }

    fn check_register(&self, state: &StateVector) -> Result<()> {
        if !state.layout().is_qubit_register() || state.layout().len() != self.n {
            return Err(Error::LayoutMismatch(format!(
                "Pauli string on {} qubits vs register of {} subsystems",
                self.n,
                state.layout().len()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = ["+", "+i", "-", "-i"][self.phase as usize];
        write!(f, "{prefix}")?;
        for q in 0..self.n {
            write!(f, "{}", self.get(q).letter())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let malformed = |reason: &str| Error::MalformedPauli {
            input: s.to_string(),
            reason: reason.to_string(),
        };
        let t = s.trim();
        let (phase, body) = if let Some(r) = t.strip_prefix("+i") {
            (1, r)
        } else if let Some(r) = t.strip_prefix("-i") {
            (3, r)
        } else if let Some(r) = t.strip_prefix('+') {
            (0, r)
        } else if let Some(r) = t.strip_prefix('-') {
            (2, r)
        } else if let Some(r) = t.strip_prefix('i') {
            (1, r)
        } else {
            (0, t)
        };
        if body.is_empty() {
            return Err(malformed("no Pauli letters"));
        }
        if body.len() > MAX_QUBITS {
            return Err(malformed("too many qubits"));
        }
        let letters = body
            .chars()
            .map(|c| match c {
                'I' | '_' => Ok(Pauli::I),
                'X' => Ok(Pauli::X),
                'Y' => Ok(Pauli::Y),
                'Z' => Ok(Pauli::Z),
                other => Err(malformed(&format!("unexpected character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let mut p = Self::from_letters(&letters);
        p.phase = phase;
        Ok(p)
    }
}
