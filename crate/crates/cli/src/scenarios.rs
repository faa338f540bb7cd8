use std::f64::consts::{FRAC_PI_2, PI};

use serde::Serialize;
use serde_json::{json, Value};
use toric_cqed::gates::{self, unitary_distance_up_to_phase};
use toric_cqed::interferometry::{run_on, InterferometryResult, Phase, Variant, DEFAULT_LOOP};
use toric_cqed::oracle::{CliffordTable, Pauli};
use toric_cqed::pulse::{self, GateKind, PulseParams, Subspace, SweepPoint, SI_COUPLING_HZ};
use toric_cqed::toric::{
    create_e_pair, create_m_pair, flipped, prepare_branches, prepare_ground_state, round_sig, stabilizer_expectations,
    DefectKind, MinimalLattice, PreparedState,
};
use toric_cqed::{Error, LinearOperator, MeasurePolicy};

use crate::config::{GateChoice, RunConfig, Scenario, Units};
use crate::report::{sci, Check, Report};

/// Name of the check that guards the interferometry labeling.
pub const LOOP_CHECK: &str = "ground-state loop stabilizer";
/// Largest allowed change of a sweep fidelity when `n_max` grows by 2.
pub const TRUNCATION_TOL: f64 = 1e-8;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Physics(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::LabelingMiscalibrated { .. }
            | Error::OracleMismatch { .. }
            | Error::Invariant(_)
            | Error::CompositionCheck(_) => Self::Physics(e.to_string()),
            other => Self::Usage(other.to_string()),
        }
    }
}

/// One CSV line of a pulse run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PulseRow {
    pub gate: &'static str,
    pub ratio: Option<f64>,
    pub n_max: usize,
    pub fidelity: f64,
    pub gate_time: f64,
    pub pi_time: Option<f64>,
    pub timing_error: Option<f64>,
    pub fidelity_reference: Option<f64>,
}

impl PulseRow {
    fn rounded(mut self) -> Self {
        let r = |x: Option<f64>| x.map(round_sig);
        self.ratio = r(self.ratio);
        self.fidelity = round_sig(self.fidelity);
        self.gate_time = round_sig(self.gate_time);
        self.pi_time = r(self.pi_time);
        self.timing_error = r(self.timing_error);
        self.fidelity_reference = r(self.fidelity_reference);
        self
    }
}

pub struct Outcome {
    pub report: Report,
    pub rows: Option<Vec<PulseRow>>,
}

pub fn run(config: &RunConfig) -> Result<Outcome, Failure> {
    match config.scenario {
        Scenario::Prepare => prepare(config),
        Scenario::Interfere => interfere(config),
        Scenario::PulseFidelity => pulse_fidelity(config),
        Scenario::Sweep => sweep(config),
        Scenario::Selfcheck => Ok(Outcome {
            report: selfcheck(config)?,
            rows: None,
        }),
    }
}

fn lattice(config: &RunConfig) -> Result<MinimalLattice, Failure> {
    match config.labeling {
        Some(p) => MinimalLattice::relabeled(p).map_err(|e| Failure::Usage(e.to_string())),
        None => Ok(MinimalLattice::calibrated()),
    }
}

fn time_out(config: &RunConfig, t: f64) -> f64 {
    match config.units {
        Units::Dimensionless => t,
        Units::Si => t / (2.0 * PI * SI_COUPLING_HZ),
    }
}

fn loop_check(prepared: &PreparedState) -> Result<Check, Failure> {
    let value = prepared.lattice.loop_operator().expectation_in(&prepared.state)?;
    Ok(Check::new(
        LOOP_CHECK,
        (value - 1.0).abs() <= 1e-9,
        format!("<X3 X5 X6> = {}", round_sig(value)),
    ))
}

fn step_check(prepared: &PreparedState) -> Check {
    Check::new(
        "prep/oracle agreement",
        prepared.min_step_fidelity >= 1.0 - 1e-9,
        format!("min step fidelity {}", round_sig(prepared.min_step_fidelity)),
    )
}

fn generator_check(prepared: &PreparedState) -> Result<Check, Failure> {
    let values = stabilizer_expectations(&prepared.state, &prepared.generators)?;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let oracle_ok = prepared.generators.iter().all(|g| prepared.tableau.expectation(g) == 1);
    Ok(Check::new(
        "ground-state stabilizers",
        min >= 1.0 - 1e-9 && oracle_ok && values.len() == 6,
        format!("{} generators, min <g> = {}", values.len(), round_sig(min)),
    ))
}

fn prepare(config: &RunConfig) -> Result<Outcome, Failure> {
    let lattice = lattice(config)?;
    let branches = match config.policy {
        MeasurePolicy::BothBranches => prepare_branches(&lattice)?,
        policy => vec![prepare_ground_state(&lattice, policy)?],
    };
    let mut checks = vec![];
    let mut results = vec![];
    for b in &branches {
        let declared = lattice.declared_generators();
        let values = stabilizer_expectations(&b.state, &declared)?;
        let mut entry = b.to_json();
        entry["declared_expectations"] = json!(declared
            .iter()
            .zip(&values)
            .map(|(p, v)| json!({"operator": p.to_string(), "value": v}))
            .collect::<Vec<_>>());
        results.push(entry);
        checks.push(step_check(b));
        checks.push(generator_check(b)?);
    }
    checks.push(loop_check(&branches[0])?);
    let report = Report::new(config, json!({ "branches": results }), checks);
    Ok(Outcome { report, rows: None })
}

fn expected_phase(variant: Variant) -> Phase {
    match variant {
        Variant::Braiding => Phase::Minus,
        Variant::ControlNoEPair => Phase::Plus,
        Variant::HaltAfterCreation => Phase::Indeterminate,
    }
}

fn variant_check(result: &Result<InterferometryResult, Error>, variant: Variant) -> Check {
    let name = format!("interferometry {variant}");
    match result {
        Ok(r) => {
            let oracle = match variant {
                Variant::Braiding => r.oracle_cavity_x == -1,
                Variant::ControlNoEPair => r.oracle_cavity_x == 1,
                Variant::HaltAfterCreation => r.oracle_cavity_x == 0,
            };
            let block_ok = match variant {
                Variant::Braiding => r.fidelity_minus >= 1.0 - 1e-9,
                Variant::ControlNoEPair => r.fidelity_plus >= 1.0 - 1e-9,
                Variant::HaltAfterCreation => {
                    let half = toric_cqed::hilbert::Matrix::identity(2, 2) * toric_cqed::C64::new(0.5, 0.0);
                    (&r.cavity_block - half).iter().all(|d| d.norm() <= 1e-9)
                }
            };
            Check::new(
                name,
                oracle && block_ok && r.phase == expected_phase(variant),
                format!(
                    "phase {}, F+ = {}, F- = {}, oracle X = {}",
                    r.phase,
                    round_sig(r.fidelity_plus),
                    round_sig(r.fidelity_minus),
                    r.oracle_cavity_x
                ),
            )
        }
        Err(e) => Check::new(name, false, e.to_string()),
    }
}

fn interfere(config: &RunConfig) -> Result<Outcome, Failure> {
    let lattice = lattice(config)?;
    let prepared = prepare_ground_state(&lattice, config.policy)?;
    let lc = loop_check(&prepared)?;
    let run = run_on(&prepared, config.variant, &DEFAULT_LOOP);
    let results = match &run {
        Ok(r) => r.to_json(),
        Err(Error::LabelingMiscalibrated { .. }) => Value::Null,
        Err(e) => return Err(Failure::from(e.clone())),
    };
    let mut checks = vec![lc, variant_check(&run, config.variant)];
    if let Ok(r) = &run {
        checks.push(Check::new(
            "cavity fidelity bound",
            r.fidelity_plus + r.fidelity_minus <= 1.0 + 1e-9,
            format!("F+ + F- = {}", round_sig(r.fidelity_plus + r.fidelity_minus)),
        ));
    }
    Ok(Outcome {
        report: Report::new(config, results, checks),
        rows: None,
    })
}

fn x_row(config: &RunConfig, point: &SweepPoint, n_max: usize) -> PulseRow {
    PulseRow {
        gate: "x",
        ratio: Some(point.ratio),
        n_max,
        fidelity: point.fidelity,
        gate_time: time_out(config, point.predicted_time),
        pi_time: Some(time_out(config, point.pi_time)),
        timing_error: Some(point.timing_error()),
        fidelity_reference: None,
    }
}

/// Evaluates `f` on every ratio in its own thread, keeping input order.
fn parallel<T: Send>(ratios: &[f64], f: impl Fn(f64) -> Result<T, Error> + Sync) -> Result<Vec<T>, Error> {
    std::thread::scope(|s| {
        let f = &f;
        let handles: Vec<_> = ratios.iter().map(|&r| s.spawn(move || f(r))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    })
}

fn monotone_check(rows: &[PulseRow]) -> Check {
    let mut sorted: Vec<&PulseRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.ratio.partial_cmp(&b.ratio).expect("finite ratios"));
    let ok = sorted.windows(2).all(|w| w[1].fidelity >= w[0].fidelity);
    Check::new(
        "fidelity nondecreasing in detuning",
        ok,
        sorted
            .iter()
            .map(|r| format!("{}:{}", r.ratio.unwrap_or(0.0), sci(1.0 - r.fidelity)))
            .collect::<Vec<_>>()
            .join(" "),
    )
}

fn pulse_fidelity(config: &RunConfig) -> Result<Outcome, Failure> {
    let rows: Vec<PulseRow> = match config.gate {
        GateChoice::X => parallel(&config.ratio_sweep, |r| pulse::x_rotation_point(r, config.rabi, config.n_max))?
            .iter()
            .map(|p| x_row(config, p, config.n_max))
            .collect(),
        GateChoice::Z => parallel(&config.ratio_sweep, |r| {
            let p = PulseParams::dispersive_z(r, config.detuning, config.rabi, config.n_max);
            let kind = GateKind::ZRotation(FRAC_PI_2);
            Ok(PulseRow {
                gate: "z",
                ratio: Some(r),
                n_max: config.n_max,
                fidelity: pulse::pulse_gate_fidelity(&pulse::ideal_gate(kind), &p, kind, Subspace::SingleExcitation)?,
                gate_time: time_out(config, pulse::gate_time(kind, &p)?),
                pi_time: None,
                timing_error: None,
                fidelity_reference: None,
            })
        })?,
        GateChoice::Iswap => {
            let p = PulseParams::resonant(1.0, config.omega_r, config.n_max);
            let kind = GateKind::Iswap;
            vec![PulseRow {
                gate: "iswap",
                ratio: None,
                n_max: config.n_max,
                fidelity: pulse::pulse_gate_fidelity(&pulse::ideal_gate(kind), &p, kind, Subspace::SingleExcitation)?,
                gate_time: time_out(config, pulse::gate_time(kind, &p)?),
                pi_time: None,
                timing_error: None,
                fidelity_reference: None,
            }]
        }
    };
    let rows: Vec<PulseRow> = rows.into_iter().map(PulseRow::rounded).collect();
    let mut checks = vec![Check::new(
        "fidelity in [0, 1]",
        rows.iter().all(|r| (0.0..=1.0 + 1e-12).contains(&r.fidelity)),
        format!("{} points", rows.len()),
    )];
    if config.gate == GateChoice::X && rows.len() > 1 {
        checks.push(monotone_check(&rows));
    }
    let results = json!({ "units": config.units, "points": rows });
    Ok(Outcome {
        report: Report::new(config, results, checks),
        rows: Some(rows),
    })
}

fn sweep(config: &RunConfig) -> Result<Outcome, Failure> {
    let reference_n = config.n_max + 2;
    let pairs = parallel(&config.ratio_sweep, |r| {
        Ok((
            pulse::x_rotation_point(r, config.rabi, config.n_max)?,
            pulse::x_rotation_point(r, config.rabi, reference_n)?,
        ))
    })?;
    let mut warnings = vec![];
    let rows: Vec<PulseRow> = pairs
        .iter()
        .map(|(p, reference)| {
            let diff = (p.fidelity - reference.fidelity).abs();
            if diff > TRUNCATION_TOL {
                let msg = format!(
                    "ratio {}: fidelity moves by {} from n_max={} to n_max={reference_n}; raise --n-max",
                    p.ratio,
                    sci(diff),
                    config.n_max
                );
                log::warn!("{msg}");
                warnings.push(msg);
            }
            PulseRow {
                fidelity_reference: Some(reference.fidelity),
                ..x_row(config, p, config.n_max)
            }
            .rounded()
        })
        .collect();
    let mut checks = vec![monotone_check(&rows)];
    if let Some(row) = rows.iter().find(|r| r.ratio == Some(10.0)) {
        checks.push(Check::new(
            "fidelity at delta/g = 10",
            row.fidelity >= 0.99,
            format!("F = {}", row.fidelity),
        ));
    }
    let timed: Vec<&PulseRow> = rows.iter().filter(|r| r.ratio.unwrap_or(0.0) >= 10.0).collect();
    if !timed.is_empty() {
        let worst = timed.iter().filter_map(|r| r.timing_error).fold(0.0, f64::max);
        checks.push(Check::new("pi-pulse timing", worst < 0.05, format!("worst relative error {}", sci(worst))));
    }
    let results = json!({
        "units": config.units,
        "reference_n_max": reference_n,
        "points": rows,
        "warnings": warnings,
    });
    Ok(Outcome {
        report: Report::new(config, results, checks),
        rows: Some(rows),
    })
}

fn library_checks() -> Result<Vec<Check>, Failure> {
    let mut library = gates::library();
    library.push(gates::controlled_partial(Pauli::X, 0.5)?);
    let worst = library
        .iter()
        .map(|g| g.operator().unitarity_deviation())
        .fold(0.0, f64::max);
    let unitarity = Check::new("gate unitarity", worst < 1e-12, format!("max deviation {}", sci(worst)));

    let iz = LinearOperator::identity(2).kron(gates::z_half().operator());
    let composed = iz.compose(gates::u_theta(FRAC_PI_2).operator())?.compose(&iz)?;
    let distance = unitary_distance_up_to_phase(&composed, gates::u_c().operator())?;
    let composition = Check::new("U^c composition", distance < 1e-12, format!("distance {}", sci(distance)));

    let mut compared = 0;
    let mut mismatched = vec![];
    for g in gates::library() {
        let table = CliffordTable::from_gate(&g)?;
        let u = g.matrix();
        for (p, image) in table.images() {
            compared += 1;
            let conj = u * p.to_matrix() * u.adjoint();
            let diff = (conj - image.to_matrix()).iter().map(|d| d.norm()).fold(0.0, f64::max);
            if diff > 1e-12 {
                mismatched.push(format!("{}:{p}", g.name()));
            }
        }
    }
    let tables = Check::new(
        "Clifford tables",
        mismatched.is_empty(),
        if mismatched.is_empty() {
            format!("{compared} conjugations match")
        } else {
            format!("mismatch {}", mismatched.join(","))
        },
    );
    Ok(vec![unitarity, composition, tables])
}

fn pairing_check(prepared: &PreparedState) -> Result<Check, Failure> {
    let l = &prepared.lattice;
    let (x_ops, z_ops) = (l.x_generators(), l.z_generators());
    let mut counts = vec![];
    let mut ok = true;
    for role in 1..=6 {
        let e = flipped(&prepared.state, &create_e_pair(&prepared.state, l, role)?, &x_ops)?;
        let m = flipped(&prepared.state, &create_m_pair(&prepared.state, l, role)?, &z_ops)?;
        ok &= e.len() == l.declared_flip_count(role, DefectKind::Electric)
            && m.len() == l.declared_flip_count(role, DefectKind::Magnetic);
        counts.push(format!("{}{}", e.len(), m.len()));
    }
    Ok(Check::new("defect pairing", ok, format!("e/m flips per role {}", counts.join(" "))))
}

pub fn selfcheck(config: &RunConfig) -> Result<Report, Failure> {
    let lattice = lattice(config)?;
    let mut checks = library_checks()?;
    let prepared = prepare_ground_state(&lattice, MeasurePolicy::PostselectPlus)?;
    checks.push(step_check(&prepared));
    checks.push(generator_check(&prepared)?);
    checks.push(loop_check(&prepared)?);
    checks.push(pairing_check(&prepared)?);
    let mut results = serde_json::Map::new();
    for v in Variant::ALL {
        let run = run_on(&prepared, v, &DEFAULT_LOOP);
        if let Ok(r) = &run {
            results.insert(v.to_string(), r.to_json());
        }
        checks.push(variant_check(&run, v));
    }
    Ok(Report::new(config, Value::Object(results), checks))
}
