//! End-to-end acceptance checks, one PASS/FAIL line per criterion.
//!
//! Exits nonzero when any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use plaquette_sim::fockspace::{Space, StateVector, SymmetricCoeffs};
use plaquette_sim::optimizer::{
    default_scan_grid, derive_composite_transfer_params, optimize_transfer, scan_phase_gate,
    CompositeTransfer, SearchBudget,
};
use plaquette_sim::protocols::*;
use plaquette_sim::pulses::{evolve, unitarity_residual, Drive, Propagator, Pulse};
use plaquette_sim::scheme::{BlockadeConfig, BlockadeMode, ExtraRole, Level, LevelScheme};
use plaquette_sim::takagi::{
    reachable, spectrum, synthesize_u, takagi_decompose, REACHABILITY_TOLERANCE,
};
use plaquette_sim::witnesses::*;
use plaquette_sim::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

struct Check {
    passed: bool,
    detail: String,
}

fn check(passed: bool, detail: impl Into<String>) -> Check {
    Check {
        passed,
        detail: detail.into(),
    }
}

fn close(got: &[f64], want: &[f64], tol: f64) -> bool {
    got.len() == want.len() && got.iter().zip(want).all(|(a, b)| (a - b).abs() <= tol)
}

fn show(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.6}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn takagi_spectra() -> Result<Check> {
    let s8 = spectrum(&phi_minus_coeffs())?;
    let s9 = spectrum(&pair_12_coeffs())?;
    let s11 = spectrum(&phi_plus_coeffs())?;
    let ok = close(&s8, &[0.25, 0.25, 0.0, 0.0], 1e-9)
        && close(&s9, &[0.25, 0.25, 0.0, 0.0], 1e-9)
        && close(&s11, &[1.0 / 3.0, 1.0 / 12.0, 1.0 / 12.0, 0.0], 1e-9);
    Ok(check(
        ok,
        format!(
            "phi_minus {} pair_12 {} phi_plus {}",
            show(&s8),
            show(&s9),
            show(&s11)
        ),
    ))
}

fn fixed_witnesses() -> Result<Check> {
    let minus = pair_12_coeffs().congruence(&u_phi_minus())?;
    let plus = double_plus_pair_coeffs().congruence(&u_phi_plus())?;
    let dm = (minus.matrix() - phi_minus_coeffs().matrix())
        .iter()
        .fold(0.0f64, |m, z| m.max(z.norm()));
    let dp = (plus.matrix() - phi_plus_coeffs().matrix())
        .iter()
        .fold(0.0f64, |m, z| m.max(z.norm()));
    let worst = dm.max(dp);
    Ok(check(
        worst <= 1e-12,
        format!("max entry deviation {worst:.2e}"),
    ))
}

fn congruence_and_oracle() -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(2..7);
        let c = coeffs(random_symmetric(&mut rng, n));
        let t = c.congruence(&random_unitary(&mut rng, n))?;
        let u = synthesize_u(&c, &t)?;
        worst = worst.max((u.transpose() * c.matrix() * &u - t.matrix()).norm());
    }
    let mut disagreements = 0;
    let mut reachable_pairs = 0;
    for k in 0..1000 {
        let n = rng.random_range(2..7);
        let c = coeffs(random_symmetric(&mut rng, n));
        let t = if k % 2 == 0 {
            c.congruence(&random_unitary(&mut rng, n))?
        } else {
            coeffs(random_symmetric(&mut rng, n))
        };
        let got = reachable(&c, &t, REACHABILITY_TOLERANCE)?;
        reachable_pairs += got as usize;
        if got != oracle_reachable(&c, &t, REACHABILITY_TOLERANCE) {
            disagreements += 1;
        }
    }
    Ok(check(
        worst <= 1e-9 && disagreements == 0,
        format!("max residual {worst:.2e}, oracle disagreements {disagreements}/1000 ({reachable_pairs} reachable)"),
    ))
}

fn preparations() -> Result<Check> {
    let params = CompositeTransfer::reference();
    let hard = ProtocolConfig::default();
    let soft = ProtocolConfig {
        blockade: BlockadeMode::Soft,
        ..hard
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for target in Preparation::ALL {
        let h = prepare(&hard, target, &params)?.fidelity;
        let s = prepare(&soft, target, &params)?.fidelity;
        let sweep = blockade_sweep(&hard, target, &params, &[10.0, 100.0, 1000.0])?;
        let decreasing = sweep.windows(2).all(|w| w[1].1 < w[0].1);
        ok &= h >= 1.0 - 1e-6 && s >= 1.0 - 1e-3 && decreasing;
        parts.push(format!(
            "{target}: hard 1-{:.1e} soft 1-{:.1e} sweep [{:.1e} {:.1e} {:.1e}]",
            1.0 - h,
            1.0 - s,
            sweep[0].1,
            sweep[1].1,
            sweep[2].1
        ));
    }
    Ok(check(ok, parts.join("; ")))
}

fn pulse_searches() -> Result<Check> {
    let two = optimize_transfer(2, SearchBudget::new(1000, 0))?;
    let one = optimize_transfer(1, SearchBudget::new(1000, 0))?;
    let (three, _) = derive_composite_transfer_params(SearchBudget::new(200, 0))?;
    let reproduces = (two.best_transfer - 0.7337).abs() <= 1e-3;
    let three_ok = three.transfer >= 1.0 - 1e-8 && three.retention >= 1.0 - 1e-8;
    Ok(check(
        reproduces && three_ok,
        format!(
            "two segments {:.6} (methods agree: {}), target 0.7337 +- 0.001; one segment {:.6}; three segments transfer {:.12} retention {:.12}",
            two.best_transfer,
            two.agree,
            one.best_transfer,
            three.transfer,
            three.retention
        ),
    ))
}

fn phase_gate() -> Result<Check> {
    let scan = scan_phase_gate(&default_scan_grid(50))?;
    let quoted = scan.max_dev_analytic.iter().copied().fold(0.0, f64::max);
    let exact = scan.max_dev_exact.iter().copied().fold(0.0, f64::max);
    let cfg = ProtocolConfig::default();
    let at_quoted =
        controlled_phase_table(&cfg, Variant::SingleRydberg, Some(quoted_operating_point()))?;
    let at_exact =
        controlled_phase_table(&cfg, Variant::SingleRydberg, Some(cz_operating_point()))?;
    let err_quoted = at_quoted.metric("max_phase_error").unwrap_or(f64::INFINITY);
    let err_exact = at_exact.metric("max_phase_error").unwrap_or(f64::INFINITY);
    Ok(check(
        quoted <= 1e-8 && err_quoted <= 1e-6,
        format!(
            "scan vs quoted closed form {quoted:.2e} (10,01,11: {:.1e} {:.1e} {:.1e}), vs exact closed form {exact:.2e}; \
             (0,pi,pi,pi) error at cos=sqrt3-2 {err_quoted:.2e}, at cos=2-sqrt3 {err_exact:.2e}",
            scan.max_dev_analytic[0], scan.max_dev_analytic[1], scan.max_dev_analytic[2]
        ),
    ))
}

fn braiding() -> Result<Check> {
    let cfg = ProtocolConfig::default();
    let flux = braiding_experiment(&cfg, BraidingOptions::default())?;
    let none = braiding_experiment(
        &cfg,
        BraidingOptions {
            with_flux: false,
            ..BraidingOptions::default()
        },
    )?;
    let scaling = sigma_x_scaling(&[100, 1_000, 10_000])?;
    let slope_ok = (scaling.slope + 2.0).abs() <= 0.2;
    Ok(check(
        flux.fidelity >= 1.0 - 1e-4 && none.fidelity >= 1.0 - 1e-4 && slope_ok,
        format!(
            "flux minus 1-{:.1e}, no flux plus 1-{:.1e}, sigma_x slope {:.4}",
            1.0 - flux.fidelity,
            1.0 - none.fidelity,
            scaling.slope
        ),
    ))
}

fn spinons() -> Result<Check> {
    let r = spinon_demo(&ProtocolConfig::default())?;
    let mut worst = 0.0f64;
    for d in &r.distributions {
        let want = if d.name == "symmetric" { "1" } else { "0" };
        let p = d
            .outcomes
            .iter()
            .find(|o| o.label == want)
            .map_or(0.0, |o| o.probability);
        worst = worst.max((1.0 - p).abs());
    }
    Ok(check(
        worst <= 1e-10 && r.distributions.len() == 4,
        format!("largest deviation from the expected outcome {worst:.2e}"),
    ))
}

fn random_drive(rng: &mut ChaCha8Rng, space: &Space) -> Pulse {
    let mut levels = vec![Level::Reservoir];
    levels.extend(space.scheme().levels());
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
        kind: plaquette_sim::pulses::drive_kind(lower, upper),
        lower,
        upper,
        rabi,
        phase: rng.random_range(0.0..std::f64::consts::TAU),
        detuning: rng.random_range(-3.0..3.0),
        duration: rng.random_range(0.0..3.0),
        reference_occupancy: None,
    })
}

fn property_spot_checks() -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let extras = vec![ExtraRole::Rydberg, ExtraRole::Rydberg2, ExtraRole::Control];
    let hard = Space::new(LevelScheme::new(
        4,
        extras.clone(),
        1_000_000,
        3,
        BlockadeConfig::hard(),
    )?)?;
    let soft = Space::new(LevelScheme::new(
        4,
        extras,
        1_000,
        3,
        BlockadeConfig::soft(100.0, 100.0, 2),
    )?)?;

    let mut unitarity = 0.0f64;
    for _ in 0..200 {
        for space in [&hard, &soft] {
            if let Pulse::Drive(d) = random_drive(&mut rng, space) {
                unitarity =
                    unitarity.max(unitarity_residual(&Propagator::new(space, &d)?.to_dense()));
            }
        }
    }

    let mut drift = 0.0f64;
    for space in [&hard, &soft] {
        for _ in 0..5 {
            let occ = space
                .basis()
                .states()
                .nth(rng.random_range(0..space.dim()))
                .unwrap()
                .to_vec();
            let mut psi = StateVector::basis_state(space, &occ)?;
            for _ in 0..100 {
                psi = evolve(&psi, &random_drive(&mut rng, space))?;
            }
            drift = drift.max((psi.norm() - 1.0).abs());
        }
    }

    let ryd = hard.scheme().rydberg_positions();
    let double_rydberg = hard
        .basis()
        .states()
        .filter(|occ| ryd.iter().map(|&p| occ[p]).sum::<u8>() >= 2)
        .count();

    let mut reconstruction = 0.0f64;
    for k in 0..1000 {
        let n = rng.random_range(1..7);
        let a = if k % 2 == 0 {
            random_symmetric(&mut rng, n)
        } else {
            degenerate_symmetric(&mut rng, n)
        };
        let c = SymmetricCoeffs::new(a)?;
        let t = takagi_decompose(&c)?;
        reconstruction =
            reconstruction.max((t.reconstruct() - c.matrix()).norm() / c.matrix().norm().max(1.0));
    }

    Ok(check(
        unitarity <= 1e-12 && drift <= 1e-10 && double_rydberg == 0 && reconstruction <= 1e-9,
        format!(
            "unitarity {unitarity:.2e}, norm drift {drift:.2e}, double-Rydberg basis states {double_rydberg}, takagi residual {reconstruction:.2e}"
        ),
    ))
}

type Criterion = (&'static str, fn() -> Result<Check>);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("takagi spectra", takagi_spectra),
        ("fixed witnesses", fixed_witnesses),
        (
            "synthesized congruence and reachability oracle",
            congruence_and_oracle,
        ),
        ("preparation fidelities", preparations),
        ("constant-pulse searches", pulse_searches),
        ("composite phase gate", phase_gate),
        ("braiding and sigma_x scaling", braiding),
        ("spinon measurement", spinons),
        ("property spot checks", property_spot_checks),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (passed, detail) = match run() {
            Ok(c) => (c.passed, c.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += !passed as usize;
        let status = if passed { "PASS" } else { "FAIL" };
        println!(
            "{status} {} {name} [{:.1}s]: {detail}",
            k + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
