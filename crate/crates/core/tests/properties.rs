mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use plaquette_sim::fockspace::{Space, StateVector, C64};
use plaquette_sim::pulses::{drive_kind, evolve, unitarity_residual, Drive, Propagator, Pulse};
use plaquette_sim::scheme::{BlockadeConfig, ExtraRole, Level, LevelScheme};
use plaquette_sim::takagi::{
    compile_unitary, reachable, synthesize_u, takagi_decompose, REACHABILITY_TOLERANCE,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

const EXTRAS: [ExtraRole; 3] = [ExtraRole::Rydberg, ExtraRole::Rydberg2, ExtraRole::Control];

fn space(atoms: u64, soft: Option<f64>) -> Arc<Space> {
    let blockade = match soft {
        Some(v) => BlockadeConfig::soft(v, v, 2),
        None => BlockadeConfig::hard(),
    };
    Space::new(LevelScheme::new(4, EXTRAS.to_vec(), atoms, 3, blockade).unwrap()).unwrap()
}

fn random_pulse(rng: &mut ChaCha8Rng, space: &Space) -> Pulse {
    let mut levels = vec![Level::Reservoir];
    levels.extend(space.scheme().levels());
    if rng.random_bool(0.15) {
        let level = levels[rng.random_range(1..levels.len())];
        return Pulse::light_shift(level, rng.random_range(-PI..PI));
    }
    let lower = levels[rng.random_range(0..levels.len())];
    let upper = loop {
        let u = levels[rng.random_range(1..levels.len())];
        if u != lower {
            break u;
        }
    };
    let mut rabi = rng.random_range(0.0..3.0);
    if lower == Level::Reservoir {
        rabi /= (space.scheme().total_atoms as f64).sqrt();
    }
    Pulse::Drive(Drive {
        kind: drive_kind(lower, upper),
        lower,
        upper,
        rabi,
        phase: rng.random_range(0.0..2.0 * PI),
        detuning: rng.random_range(-3.0..3.0),
        duration: rng.random_range(0.0..3.0),
        reference_occupancy: None,
    })
}

fn random_state(rng: &mut ChaCha8Rng, space: &Arc<Space>) -> StateVector {
    let v = DVector::from_fn(space.dim(), |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let n = v.norm();
    StateVector::from_amplitudes(space.clone(), v / C64::new(n, 0.0)).unwrap()
}

fn atoms() -> impl Strategy<Value = u64> {
    prop_oneof![Just(10u64), Just(1_000), Just(1_000_000)]
}

fn blockade() -> impl Strategy<Value = Option<f64>> {
    prop_oneof![Just(None), (1.0f64..1000.0).prop_map(Some)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn every_pulse_is_unitary(seed in any::<u64>(), k in atoms(), soft in blockade()) {
        let space = space(k, soft);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..5 {
            if let Pulse::Drive(d) = random_pulse(&mut rng, &space) {
                let u = Propagator::new(&space, &d).unwrap().to_dense();
                prop_assert!(unitarity_residual(&u) <= 1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn norm_is_kept_over_long_schedules(seed in any::<u64>(), k in atoms(), soft in blockade()) {
        let space = space(k, soft);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut psi = random_state(&mut rng, &space);
        for _ in 0..100 {
            let p = random_pulse(&mut rng, &space);
            psi = evolve(&psi, &p).unwrap();
        }
        prop_assert!((psi.norm() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn raman_pulses_conserve_sector_populations(seed in any::<u64>(), i in 1usize..=4, j in 1usize..=4, area in 0.0f64..7.0, phase in 0.0f64..6.3) {
        prop_assume!(i != j);
        let space = space(1_000, None);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let psi = random_state(&mut rng, &space);
        let out = evolve(&psi, &Pulse::raman(Level::Register(i), Level::Register(j), area, phase)).unwrap();
        let sector = |occ: &[u8]| (occ[..4].iter().map(|&n| n as usize).sum::<usize>(), occ[4], occ[5], occ[6]);
        let mut before = std::collections::BTreeMap::new();
        let mut after = std::collections::BTreeMap::new();
        for (idx, occ) in space.basis().states().enumerate() {
            *before.entry(sector(occ)).or_insert(0.0) += psi.amplitudes()[idx].norm_sqr();
            *after.entry(sector(occ)).or_insert(0.0) += out.amplitudes()[idx].norm_sqr();
        }
        for (key, p) in before {
            prop_assert!((p - after[&key]).abs() <= 1e-12);
        }
    }
}

proptest! {
    #[test]
    fn hard_mode_has_no_double_rydberg_states(cap in 1usize..5, n in 1usize..5, two in any::<bool>()) {
        let extras = if two { vec![ExtraRole::Rydberg, ExtraRole::Rydberg2] } else { vec![ExtraRole::Rydberg] };
        let space = Space::new(LevelScheme::new(n, extras, 100, cap, BlockadeConfig::hard()).unwrap()).unwrap();
        let ryd = space.scheme().rydberg_positions();
        for occ in space.basis().states() {
            let total: u8 = ryd.iter().map(|&p| occ[p]).sum();
            prop_assert!(total <= 1);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn takagi_reconstructs(seed in any::<u64>(), n in 1usize..7, degenerate in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = if degenerate { degenerate_symmetric(&mut rng, n) } else { random_symmetric(&mut rng, n) };
        let c = plaquette_sim::fockspace::SymmetricCoeffs::new(a).unwrap();
        let t = takagi_decompose(&c).unwrap();
        let scale = c.matrix().norm().max(1.0);
        prop_assert!((t.reconstruct() - c.matrix()).norm() <= 1e-9 * scale);
        prop_assert!(t.unitarity_residual() <= 1e-10);
        prop_assert!(t.sigma.windows(2).all(|w| w[0] >= w[1]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn reachability_is_an_equivalence(seed in any::<u64>(), n in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = coeffs(random_symmetric(&mut rng, n));
        let d = c.congruence(&random_unitary(&mut rng, n)).unwrap();
        let e = d.congruence(&random_unitary(&mut rng, n)).unwrap();
        let f = coeffs(random_symmetric(&mut rng, n));
        let tol = REACHABILITY_TOLERANCE;
        prop_assert!(reachable(&c, &c, tol).unwrap());
        prop_assert!(reachable(&c, &d, tol).unwrap() && reachable(&d, &c, tol).unwrap());
        prop_assert!(reachable(&d, &e, tol).unwrap() && reachable(&c, &e, tol).unwrap());
        prop_assert_eq!(reachable(&c, &f, tol).unwrap(), reachable(&f, &c, tol).unwrap());
        prop_assert_eq!(reachable(&c, &f, tol).unwrap(), oracle_reachable(&c, &f, tol));
    }

    #[test]
    fn coefficients_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = coeffs(random_symmetric(&mut rng, 4));
        let space = Space::new(LevelScheme::new(4, vec![], 2, 2, BlockadeConfig::hard()).unwrap()).unwrap();
        let psi = StateVector::two_excitation_state(&space, &c).unwrap();
        let back = psi.coeffs_from_state().unwrap();
        prop_assert!((back.matrix() - c.matrix()).norm() <= 1e-12);
    }

    #[test]
    fn compiled_pulses_realize_the_congruence(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = coeffs(random_symmetric(&mut rng, 4));
        let target = c.congruence(&random_unitary(&mut rng, 4)).unwrap();
        let u = synthesize_u(&c, &target).unwrap();
        prop_assert!((u.transpose() * c.matrix() * &u - target.matrix()).norm() <= 1e-9);
        let compiled = compile_unitary(&u).unwrap();
        prop_assert!((compiled.single_atom_operator() - u.transpose()).norm() <= 1e-10);
        let space = Space::new(LevelScheme::new(4, vec![], 2, 2, BlockadeConfig::hard()).unwrap()).unwrap();
        let mut psi = StateVector::two_excitation_state(&space, &c).unwrap();
        for p in compiled.pulses() {
            psi = evolve(&psi, &p).unwrap();
        }
        let want = StateVector::two_excitation_state(&space, &target).unwrap();
        prop_assert!(want.fidelity(&psi).unwrap() >= 1.0 - 1e-10);
    }
}

#[test]
fn identity_drive_is_identity() {
    let space = space(1_000, None);
    let d = Drive {
        kind: drive_kind(Level::Register(1), Level::RYDBERG),
        lower: Level::Register(1),
        upper: Level::RYDBERG,
        rabi: 0.0,
        phase: 0.3,
        detuning: 0.0,
        duration: 2.0,
        reference_occupancy: None,
    };
    let u = Propagator::new(&space, &d).unwrap().to_dense();
    assert!((u - DMatrix::<C64>::identity(space.dim(), space.dim())).norm() < 1e-15);
}

#[test]
fn searches_are_deterministic_per_seed() {
    use plaquette_sim::optimizer::{optimize_transfer, restarts_csv, SearchBudget};
    let a = optimize_transfer(2, SearchBudget::new(200, 11)).unwrap();
    let b = optimize_transfer(2, SearchBudget::new(200, 11)).unwrap();
    assert_eq!(restarts_csv(&a.penalty), restarts_csv(&b.penalty));
    assert_eq!(restarts_csv(&a.eliminated), restarts_csv(&b.eliminated));
    assert_eq!(a.best_transfer.to_bits(), b.best_transfer.to_bits());
}
