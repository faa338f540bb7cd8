use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use super::{gate_by_name, GateOp};
use crate::error::{Error, Result};
use crate::hilbert::{
    apply, measure_x, plus_vector, reduced_density, zero_vector, MeasurePolicy, StateVector, Subsystem,
    SubsystemLayout, C64, NORM_TOL,
};
use crate::oracle::{Pauli, PauliString, StabilizerTableau};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResetState {
    Zero,
    Plus,
}

impl ResetState {
    fn vector(self) -> Vec<C64> {
        match self {
            Self::Zero => zero_vector(),
            Self::Plus => plus_vector(),
        }
    }

    fn keyword(self) -> &'static str {
        match self {
            Self::Zero => "zero",
            Self::Plus => "plus",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Step {
    Gate { gate: GateOp, targets: Vec<usize> },
    MeasureX { subsystem: usize, policy: MeasurePolicy },
    Reset { subsystem: usize, state: ResetState },
}

/// Result of one step on a state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub state: StateVector,
    /// `(outcome, probability)` for measurements.
    pub measurement: Option<(i8, f64)>,
}

impl Step {
    pub fn apply_to_state(&self, state: &StateVector) -> Result<StepOutcome> {
        match self {
            Self::Gate { gate, targets } => Ok(StepOutcome {
                state: apply(gate.operator(), targets, state)?,
                measurement: None,
            }),
            Self::MeasureX { subsystem, policy } => {
                let m = measure_x(*subsystem, state, *policy)?;
                let b = m.primary();
                Ok(StepOutcome {
                    state: b.state.clone(),
                    measurement: Some((b.outcome, b.probability)),
                })
            }
            Self::Reset { subsystem, state: target } => Ok(StepOutcome {
                state: reset_subsystem(state, *subsystem, &target.vector())?,
                measurement: None,
            }),
        }
    }

    /// Same step on a tableau. Random measurement outcomes resolve to
    /// `forced` (defaulting to `+1`).
    pub fn apply_to_tableau(&self, tableau: &StabilizerTableau, forced: Option<i8>) -> Result<StabilizerTableau> {
        let n = tableau.num_qubits();
        match self {
            Self::Gate { gate, targets } => tableau.apply_gate(gate, targets),
            Self::MeasureX { subsystem, .. } => {
                let x = PauliString::single(n, *subsystem, Pauli::X);
                Ok(tableau.measure_pauli(&x, forced)?.tableau)
            }
            Self::Reset { subsystem, state } => {
                let (basis, fix) = match state {
                    ResetState::Zero => (Pauli::Z, Pauli::X),
                    ResetState::Plus => (Pauli::X, Pauli::Z),
                };
                let m = tableau.measure_pauli(&PauliString::single(n, *subsystem, basis), None)?;
                if m.outcome == 1 {
                    Ok(m.tableau)
                } else {
                    m.tableau.apply_gate(&super::pauli(fix), &[*subsystem])
                }
            }
        }
    }
}

/// Replaces a subsystem in a product state with `target`.
pub fn reset_subsystem(state: &StateVector, index: usize, target: &[C64]) -> Result<StateVector> {
    let rho = reduced_density(state, index)?;
    let purity = (&rho * &rho).trace().re;
    if (1.0 - purity).abs() > 1e-9 {
        return Err(Error::Invariant(format!(
            "reset of subsystem {index} which is entangled (purity {purity:.12})"
        )));
    }
    // rho = |v><v|, so any nonzero column is proportional to v.
    let j = (0..rho.ncols())
        .max_by(|&a, &b| rho[(a, a)].re.total_cmp(&rho[(b, b)].re))
        .expect("nonempty");
    let col = rho.column(j);
    let norm = col.norm();
    if norm < NORM_TOL {
        return Err(Error::ZeroNorm);
    }
    let v: Vec<C64> = col.iter().map(|c| c / norm).collect();
    let rest = state.contract(index, &v)?;
    let layout = state.layout();
    let d = layout.dim(index);
    if target.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: target.len(),
        });
    }
    let stride = layout.strides()[index];
    let outer = state.dim() / (d * stride);
    let mut amps = DVector::zeros(state.dim());
    for hi in 0..outer {
        for lo in 0..stride {
            let r = rest.amplitudes()[hi * stride + lo];
            for (k, t) in target.iter().enumerate() {
                amps[hi * d * stride + k * stride + lo] = t * r;
            }
        }
    }
    StateVector::new(layout.clone(), amps)
}

/// A flat list of gate, measurement and reset steps over a fixed layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    layout: SubsystemLayout,
    steps: Vec<Step>,
}

impl Circuit {
    pub fn new(layout: SubsystemLayout) -> Self {
        Self { layout, steps: vec![] }
    }

    pub fn layout(&self) -> &SubsystemLayout {
        &self.layout
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    fn check_qubit(&self, index: usize) -> Result<()> {
        if index >= self.layout.len() || self.layout.dim(index) != 2 {
            return Err(Error::InvalidTargets {
                targets: vec![index],
                reason: "not a two-level subsystem of the layout".into(),
            });
        }
        Ok(())
    }

    pub fn push_gate(&mut self, gate: GateOp, targets: &[usize]) -> Result<&mut Self> {
        if targets.len() != gate.arity() {
            return Err(Error::InvalidTargets {
                targets: targets.to_vec(),
                reason: format!("gate {} acts on {} subsystems", gate.name(), gate.arity()),
            });
        }
        for (i, &t) in targets.iter().enumerate() {
            self.check_qubit(t)?;
            if targets[..i].contains(&t) {
                return Err(Error::InvalidTargets {
                    targets: targets.to_vec(),
                    reason: "repeated target".into(),
                });
            }
        }
        self.steps.push(Step::Gate {
            gate,
            targets: targets.to_vec(),
        });
        Ok(self)
    }

    pub fn push_measure_x(&mut self, subsystem: usize, policy: MeasurePolicy) -> Result<&mut Self> {
        self.check_qubit(subsystem)?;
        self.steps.push(Step::MeasureX { subsystem, policy });
        Ok(self)
    }

    pub fn push_reset(&mut self, subsystem: usize, state: ResetState) -> Result<&mut Self> {
        self.check_qubit(subsystem)?;
        self.steps.push(Step::Reset { subsystem, state });
        Ok(self)
    }

    pub fn extend(&mut self, other: &Circuit) -> Result<&mut Self> {
        if other.layout != self.layout {
            return Err(Error::LayoutMismatch("circuits over different layouts".into()));
        }
        self.steps.extend(other.steps.iter().cloned());
        Ok(self)
    }

    /// Runs every step on a state vector; returns the final state and the
    /// measurement record.
    pub fn run(&self, initial: &StateVector) -> Result<(StateVector, Vec<(i8, f64)>)> {
        if initial.layout() != &self.layout {
            return Err(Error::LayoutMismatch("initial state does not match circuit layout".into()));
        }
        let mut state = initial.clone();
        let mut record = vec![];
        for step in &self.steps {
            let out = step.apply_to_state(&state)?;
            record.extend(out.measurement);
            state = out.state;
        }
        Ok((state, record))
    }

    /// Runs every step on a tableau, resolving random outcomes to `+1`.
    pub fn run_tableau(&self, initial: &StabilizerTableau) -> Result<StabilizerTableau> {
        self.steps
            .iter()
            .try_fold(initial.clone(), |t, step| step.apply_to_tableau(&t, None))
    }
}

/// One step per line:
///
/// ```text
/// layout cavity:2 spin1:2
/// reset 0 plus
/// uc 0 1
/// u_x_eta 0 1 eta=0.5
/// measure_x 0 postselect_plus
/// ```
impl fmt::Display for Circuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "layout")?;
        for s in self.layout.subsystems() {
            write!(f, " {}:{}", s.label, s.dim)?;
        }
        writeln!(f)?;
        for step in &self.steps {
            match step {
                Step::Gate { gate, targets } => {
                    write!(f, "{}", gate.name())?;
                    for t in targets {
                        write!(f, " {t}")?;
                    }
                    if let Some(p) = gate.param() {
                        let key = if gate.name() == "u_theta" { "theta" } else { "eta" };
                        write!(f, " {key}={p:?}")?;
                    }
                    writeln!(f)?;
                }
                Step::MeasureX { subsystem, policy } => writeln!(f, "measure_x {subsystem} {policy}")?,
                Step::Reset { subsystem, state } => writeln!(f, "reset {subsystem} {}", state.keyword())?,
            }
        }
        Ok(())
    }
}

impl FromStr for Circuit {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut circuit: Option<Circuit> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let err = |reason: String| Error::CircuitParse { line, reason };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut words = content.split_whitespace();
            let head = words.next().expect("nonempty line");
            let rest: Vec<&str> = words.collect();
            if head == "layout" {
                if circuit.is_some() {
                    return Err(err("duplicate layout line".into()));
                }
                let subsystems = rest
                    .iter()
                    .map(|w| {
                        let (label, dim) = w.split_once(':').ok_or_else(|| err(format!("bad subsystem {w:?}")))?;
                        let dim = dim.parse().map_err(|e| err(format!("bad dimension in {w:?}: {e}")))?;
                        Ok(Subsystem::new(label, dim))
                    })
                    .collect::<Result<Vec<_>>>()?;
                circuit = Some(Circuit::new(SubsystemLayout::new(subsystems)?));
                continue;
            }
            let c = circuit.as_mut().ok_or_else(|| err("steps before layout line".into()))?;
            let index = |w: &str| w.parse::<usize>().map_err(|e| err(format!("bad subsystem index {w:?}: {e}")));
            let wrap = |e: Error| err(e.to_string());
            match head {
                "measure_x" => {
                    let [s, p] = rest[..] else {
                        return Err(err("expected: measure_x <subsystem> <policy>".into()));
                    };
                    let policy = p.parse().map_err(err)?;
                    c.push_measure_x(index(s)?, policy).map_err(wrap)?;
                }
                "reset" => {
                    let [s, st] = rest[..] else {
                        return Err(err("expected: reset <subsystem> <zero|plus>".into()));
                    };
                    let state = match st {
                        "zero" => ResetState::Zero,
                        "plus" => ResetState::Plus,
                        other => return Err(err(format!("unknown reset state {other:?}"))),
                    };
                    c.push_reset(index(s)?, state).map_err(wrap)?;
                }
                name => {
                    let mut targets = vec![];
                    let mut param = None;
                    for w in rest {
                        if let Some((_, v)) = w.split_once('=') {
                            param = Some(v.parse::<f64>().map_err(|e| err(format!("bad parameter {w:?}: {e}")))?);
                        } else {
                            targets.push(index(w)?);
                        }
                    }
                    let gate = gate_by_name(name, param).map_err(wrap)?;
                    c.push_gate(gate, &targets).map_err(wrap)?;
                }
            }
        }
        circuit.ok_or(Error::CircuitParse {
            line: 0,
            reason: "missing layout line".into(),
        })
    }
}
