//! One pass/fail line per acceptance criterion. Runs without the libtest
//! harness so the lines always print.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::PathBuf;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use serde_json::Value;
use toric_cqed::gates::{self, unitary_distance_up_to_phase};
use toric_cqed::hilbert::Matrix;
use toric_cqed::interferometry::{run_on, Variant, DEFAULT_LOOP};
use toric_cqed::oracle::CliffordTable;
use toric_cqed::pulse::{self, EvolutionSpec, Method, PulseParams, DEFAULT_N_MAX};
use toric_cqed::toric::{
    create_e_pair, create_m_pair, flipped, prepare_ground_state, stabilizer_expectations, MinimalLattice,
};
use toric_cqed::{LinearOperator, MeasurePolicy, C64};

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn u_c_reconstruction() -> Outcome {
    let iz = LinearOperator::identity(2).kron(gates::z_half().operator());
    let composed = iz.compose(gates::u_theta(FRAC_PI_2).operator()).map_err(err)?.compose(&iz).map_err(err)?;
    let d = unitary_distance_up_to_phase(&composed, gates::u_c().operator()).map_err(err)?;
    check(d < 1e-12, format!("distance {d:.3e} < 1e-12"))
}

fn ground_state_suite() -> Outcome {
    let g = prepare_ground_state(&MinimalLattice::calibrated(), MeasurePolicy::PostselectPlus).map_err(err)?;
    let values = stabilizer_expectations(&g.state, &g.generators).map_err(err)?;
    let in_range = values.iter().all(|v| (1.0 - 1e-9..=1.0 + 1e-12).contains(v));
    let oracle = g.generators.iter().all(|p| g.tableau.expectation(p) == 1);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    check(
        values.len() == 6 && in_range && oracle && g.min_step_fidelity >= 1.0 - 1e-9,
        format!(
            "{} generators, min <g> = {min:.12}, oracle +1 = {oracle}, min step fidelity = {:.12}",
            values.len(),
            g.min_step_fidelity
        ),
    )
}

fn braiding_phase() -> Outcome {
    let p = prepare_ground_state(&MinimalLattice::calibrated(), MeasurePolicy::PostselectPlus).map_err(err)?;
    let b = run_on(&p, Variant::Braiding, &DEFAULT_LOOP).map_err(err)?;
    let c = run_on(&p, Variant::ControlNoEPair, &DEFAULT_LOOP).map_err(err)?;
    let h = run_on(&p, Variant::HaltAfterCreation, &DEFAULT_LOOP).map_err(err)?;
    let half = Matrix::identity(2, 2) * C64::new(0.5, 0.0);
    let halt_dev = (&h.cavity_block - half).iter().map(|d| d.norm()).fold(0.0, f64::max);
    check(
        b.fidelity_minus >= 1.0 - 1e-9 && b.oracle_cavity_x == -1 && c.fidelity_plus >= 1.0 - 1e-9 && halt_dev <= 1e-9,
        format!(
            "braiding F- = {:.12} oracle X = {}, control F+ = {:.12}, halt |rho - I/2| = {halt_dev:.3e}",
            b.fidelity_minus, b.oracle_cavity_x, c.fidelity_plus
        ),
    )
}

fn defect_pairing() -> Outcome {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden/generators.json");
    let table: Value = serde_json::from_str(&std::fs::read_to_string(&path).map_err(err)?).map_err(err)?;
    let g = prepare_ground_state(&MinimalLattice::calibrated(), MeasurePolicy::PostselectPlus).map_err(err)?;
    let l = &g.lattice;
    let (x_ops, z_ops) = (l.x_generators(), l.z_generators());
    let mut bad = vec![];
    for role in 1..=6 {
        let e_state = create_e_pair(&g.state, l, role).map_err(err)?;
        let m_state = create_m_pair(&g.state, l, role).map_err(err)?;
        let e = flipped(&g.state, &e_state, &x_ops).map_err(err)?;
        let m = flipped(&g.state, &m_state, &z_ops).map_err(err)?;
        let cross = flipped(&g.state, &e_state, &z_ops).map_err(err)?.len() + flipped(&g.state, &m_state, &x_ops).map_err(err)?.len();
        let e_ok = e.iter().all(|&i| l.x_supports()[i].contains(&role))
            && Some(e.len() as u64) == table["flip_counts"]["electric"][role - 1].as_u64();
        let m_ok = m.iter().all(|&i| l.z_supports()[i].contains(&role))
            && Some(m.len() as u64) == table["flip_counts"]["magnetic"][role - 1].as_u64();
        if !(e_ok && m_ok && cross == 0) {
            bad.push(role);
        }
    }
    check(bad.is_empty(), format!("6 spins x 2 defect types, mismatched roles {bad:?}"))
}

fn vacuum_rabi() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut transfer = f64::INFINITY;
    for n_max in [2, 4] {
        let p = PulseParams::resonant(1.0, 10.0, n_max);
        let h = pulse::build_jc(&p).map_err(err)?;
        let start = pulse::fock_state(&p, 0, true).map_err(err)?;
        let target = pulse::fock_state(&p, 1, false).map_err(err)?;
        let pop = |t: f64| -> Result<f64, String> {
            let spec = EvolutionSpec::new(h.clone(), t, Method::MatrixExponential).map_err(err)?;
            Ok(target.inner(&pulse::evolve(&spec, &start).map_err(err)?).map_err(err)?.norm_sqr())
        };
        for k in 0..=200 {
            let t = k as f64 * 2.0 * PI / 200.0;
            worst = worst.max((pop(t)? - (p.g * t).sin().powi(2)).abs());
        }
        transfer = transfer.min(pop(PI / (2.0 * p.g))?);
    }
    check(
        worst < 1e-8 && transfer >= 1.0 - 1e-8,
        format!("max |P - sin^2(gt)| = {worst:.3e}, P(pi/2g) = {transfer:.12}"),
    )
}

fn dispersive_validity() -> Outcome {
    let points: Vec<_> = [5.0, 10.0, 20.0, 50.0]
        .iter()
        .map(|&r| pulse::x_rotation_point(r, 1.0, DEFAULT_N_MAX))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let monotone = points.windows(2).all(|w| w[1].fidelity >= w[0].fidelity);
    let timing = points[1..].iter().map(|p| p.timing_error()).fold(0.0, f64::max);
    let summary: Vec<String> = points.iter().map(|p| format!("{}:{:.6}", p.ratio, p.fidelity)).collect();
    check(
        points[1].fidelity >= 0.99 && monotone && timing < 0.05,
        format!("F by delta/g {}, worst timing error {timing:.3e}", summary.join(" ")),
    )
}

fn frame_equivalence() -> Outcome {
    let p = PulseParams::dispersive_x(10.0, 0.2, 6).with_drive_frequency(2.0);
    let periods = 10.0 * 2.0 * PI / p.rabi().map_err(err)?.norm();
    let r = pulse::frame_equivalence(&p, periods, 0.002, 250).map_err(err)?;
    let mut alpha_dev: f64 = 0.0;
    for q in [p, PulseParams { omega_d: p.omega_r, ..p }] {
        for t in [0.7, 3.1, 9.4] {
            let closed = pulse::classical_alpha(&q, t).map_err(err)?;
            let numeric = pulse::alpha_numeric(&q, t, 20_000).map_err(err)?;
            alpha_dev = alpha_dev.max((closed - numeric).norm());
        }
    }
    check(
        r.max_bloch_deviation < 1e-6 && alpha_dev < 1e-8,
        format!(
            "max Bloch deviation {:.3e} over t = {periods:.1} ({} samples), alpha deviation {alpha_dev:.3e}",
            r.max_bloch_deviation, r.samples
        ),
    )
}

fn clifford_equivalence() -> Outcome {
    let mut compared = 0;
    let mut bad = vec![];
    for g in gates::library() {
        let table = CliffordTable::from_gate(&g).map_err(err)?;
        let u = g.matrix();
        for (p, image) in table.images() {
            compared += 1;
            let diff = (u * p.to_matrix() * u.adjoint() - image.to_matrix()).iter().map(|d| d.norm()).fold(0.0, f64::max);
            if diff > 1e-12 {
                bad.push(format!("{}:{p}", g.name()));
            }
        }
    }
    check(bad.is_empty(), format!("{compared} conjugations compared, mismatches {bad:?}"))
}

fn determinism() -> Outcome {
    let dir = std::env::temp_dir().join(format!("toric-cqed-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(err)?;
    let mut reports = vec![];
    for i in 0..2 {
        let out = dir.join(format!("selfcheck-{i}.json"));
        let status = Command::new(env!("CARGO_BIN_EXE_toric-cqed"))
            .args(["selfcheck", "--seed", "11", "--out"])
            .arg(&out)
            .output()
            .map_err(err)?;
        if !status.status.success() {
            return Err(format!("selfcheck exited with {}", status.status));
        }
        reports.push(std::fs::read(&out).map_err(err)?);
    }
    std::fs::remove_dir_all(&dir).map_err(err)?;
    check(
        reports[0] == reports[1] && !reports[0].is_empty(),
        format!("two selfcheck reports, {} bytes each, identical = {}", reports[0].len(), reports[0] == reports[1]),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("1 exchange-gate reconstruction", Duration::from_secs(1), u_c_reconstruction),
        ("2 ground-state stabilizers", Duration::from_secs(1), ground_state_suite),
        ("3 braiding phase", Duration::from_secs(1), braiding_phase),
        ("4 defect pairing", Duration::from_secs(1), defect_pairing),
        ("5 vacuum Rabi oscillation", Duration::from_secs(10), vacuum_rabi),
        ("6 dispersive validity", Duration::from_secs(60), dispersive_validity),
        ("7 frame equivalence", Duration::from_secs(30), frame_equivalence),
        ("8 Clifford oracle equivalence", Duration::from_secs(1), clifford_equivalence),
        ("9 determinism", Duration::from_secs(30), determinism),
    ];
    let mut failed = 0;
    for (name, budget, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let (pass, detail) = match outcome {
            Ok(d) if elapsed <= budget => (true, d),
            Ok(d) => (false, format!("{d}; over budget {budget:?}")),
            Err(d) => (false, d),
        };
        failed += usize::from(!pass);
        println!(
            "{}  criterion {name}: {detail} [{:.2} s]",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    println!("{}/9 acceptance criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
