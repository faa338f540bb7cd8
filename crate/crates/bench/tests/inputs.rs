use toric_cqed::interferometry::{run_on, Phase, Variant, DEFAULT_LOOP};
use toric_cqed::pulse::{self, PulseParams};
use toric_cqed::toric::{prepare_ground_state, prepare_tableau, MinimalLattice};
use toric_cqed::MeasurePolicy;

#[test]
fn benchmarked_calls_succeed_once() {
    let lattice = MinimalLattice::calibrated();
    let prepared = prepare_ground_state(&lattice, MeasurePolicy::PostselectPlus).unwrap();
    assert_eq!(prepare_tableau(&lattice).unwrap(), prepared.tableau);
    assert_eq!(run_on(&prepared, Variant::Braiding, &DEFAULT_LOOP).unwrap().phase, Phase::Minus);
    for n_max in [2, 4, 8] {
        let h = pulse::build_rotating(&PulseParams::dispersive_x(10.0, 1.0, n_max)).unwrap();
        let u = pulse::propagator(&h, 3.0).unwrap();
        assert_eq!(u.nrows(), 2 * (n_max + 1));
    }
    let p = PulseParams::dispersive_x(10.0, 0.2, 4).with_drive_frequency(2.0);
    assert!(pulse::frame_equivalence(&p, 5.0, 0.002, 100).unwrap().max_bloch_deviation < 1e-6);
}
