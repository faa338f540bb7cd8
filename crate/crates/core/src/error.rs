use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid target list {targets:?}: {reason}")]
    InvalidTargets { targets: Vec<usize>, reason: String },

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("operator is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("operator is not Hermitian (max |M - M^dagger| = {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("operator is not unitary (max |U^dagger U - I| = {deviation:e})")]
    NotUnitary { deviation: f64 },

    #[error("state has zero norm")]
    ZeroNorm,

    #[error("requested measurement branch has probability {probability:e}")]
    ZeroProbabilityBranch { probability: f64 },

    #[error("invalid pulse parameters: {0}")]
    InvalidParams(String),

    #[error("{quantity} is zero; {context}")]
    ZeroRate {
        quantity: &'static str,
        context: &'static str,
    },

    #[error("invalid evolution spec: {0}")]
    InvalidEvolution(String),

    #[error("gate {0} is not Clifford")]
    NotClifford(String),

    #[error("gate composition check failed: {0}")]
    CompositionCheck(String),

    #[error("malformed Pauli string {input:?}: {reason}")]
    MalformedPauli { input: String, reason: String },

    #[error("invalid stabilizer generators: {0}")]
    InvalidGenerators(String),

    #[error("postselection on +{requested} impossible: outcome is deterministically {actual}")]
    ImpossiblePostselection { requested: i8, actual: i8 },

    #[error("register of {0} qubits is too large for dense conversion")]
    TooLarge(usize),

    #[error("oracle disagrees with state vector after step {step} (fidelity {fidelity})")]
    OracleMismatch { step: usize, fidelity: f64 },

    #[error("labeling miscalibrated: <{operator}> = {value} on the prepared ground state")]
    LabelingMiscalibrated { operator: String, value: f64 },

    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("eta = {0} outside [-1, 1]")]
    InvalidEta(f64),

    #[error("circuit parse error on line {line}: {reason}")]
    CircuitParse { line: usize, reason: String },

    #[error("{0}")]
    Invariant(String),
}
