//! Acceptance criteria. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; exits nonzero if any fails.

use std::f64::consts::FRAC_PI_2;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use spinchern_core::lab::{detect_plateaus, run_sweep, sweep_jumps, SweepConfig, SweepMethod};
use spinchern_core::pulsesim::{
    closed_form_timings, compile_zz, perturbed_fidelity, simulate_protocol_trotter,
    verify_sequence, verify_trotter_step,
};
use spinchern_core::quench::{evolve_quench_unchecked, linear_zone_scan, QuenchProtocol};
use spinchern_core::spectral::{
    chern_integral, chern_lattice, curvature_spectral, find_crossings, SphereGrid,
};
use spinchern_core::{
    build_heisenberg, eigh, ChainSpec, Error, FieldPoint, MoleculeSpec, StateVector,
};

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn spec(n: usize, j: f64) -> ChainSpec {
    ChainSpec::new(n, j).unwrap()
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

/// Plateau means of a sweep checked against `theory` (same order, ascending J).
fn plateau_check(n: usize, method: SweepMethod, theory: &[f64], tol: f64) -> (bool, String) {
    let cfg = SweepConfig::new(n, method).unwrap();
    let rows = run_sweep(&cfg).unwrap();
    let plateaus = detect_plateaus(&rows).unwrap();
    let means: Vec<f64> = plateaus.iter().map(|p| p.plateau_mean).collect();
    let mut sorted_theory = theory.to_vec();
    sorted_theory.sort_by(f64::total_cmp);
    let mut sorted_means = means.clone();
    sorted_means.sort_by(f64::total_cmp);
    let ok = sorted_means.len() == sorted_theory.len()
        && sorted_means
            .iter()
            .zip(&sorted_theory)
            .all(|(m, t)| (m - t).abs() <= tol);
    let shown: Vec<String> = means.iter().map(|m| format!("{m:.6}")).collect();
    (
        ok,
        format!(
            "{method} means [{}] vs {theory:?} (tol {tol:e})",
            shown.join(", ")
        ),
    )
}

fn plateau_criterion(
    n: usize,
    theory: &[f64],
    dyn_tol: f64,
    spectral: bool,
    budget: Duration,
) -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    if spectral {
        let (ok, d) = plateau_check(n, SweepMethod::Spectral, theory, 1e-6);
        pass &= ok;
        parts.push(d);
    }
    let (ok, d) = plateau_check(n, SweepMethod::Dynamical, theory, dyn_tol);
    pass &= ok;
    parts.push(d);
    let elapsed = start.elapsed();
    pass &= elapsed < budget;
    parts.push(format!("runtime {} (< {})", secs(elapsed), secs(budget)));
    outcome(pass, parts.join("; "))
}

fn criterion_1() -> Outcome {
    plateau_criterion(2, &[0.0, 1.0], 0.02, true, Duration::from_secs(5))
}

fn criterion_2() -> Outcome {
    plateau_criterion(3, &[0.5, 1.5], 0.03, true, Duration::from_secs(20))
}

fn criterion_3() -> Outcome {
    plateau_criterion(4, &[0.0, 1.0, 2.0], 0.05, false, Duration::from_secs(120))
}

fn criterion_4() -> Outcome {
    let grid = SphereGrid::new(64, 64).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for n in 1..=4 {
        let s = spec(n, 1.0);
        let integral = chern_integral(s, grid).unwrap();
        let reduced = 2.0
            * curvature_spectral(s, FieldPoint::equator(1.0))
                .unwrap()
                .f_phitheta;
        let lattice = chern_lattice(s, SphereGrid::new(24, 24).unwrap()).unwrap();
        pass &= (integral - reduced).abs() <= 1e-3 && lattice == n as i64;
        parts.push(format!(
            "N={n}: integral {integral:.6}, 2F {reduced:.6}, lattice {lattice}"
        ));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_5() -> Outcome {
    let s = spec(2, 1.0);
    let limit = curvature_spectral(s, FieldPoint::equator(1.0))
        .unwrap()
        .f_phitheta;
    let scan = linear_zone_scan(s, &[1.0, 5.0], 4000).unwrap();
    let (r1, r5) = (scan[0].1 / limit, scan[1].1 / limit);
    let a = (r1 - 1.0).abs() <= 0.05;
    let b = (r5 - 1.0).abs() > 0.10;
    outcome(
        a && b,
        format!(
            "(M/v)/F at v=1.0: {r1:.4} (within 5%: {}); at v=5: {r5:.4} (beyond 10%: {})",
            if a { "yes" } else { "no" },
            if b { "yes" } else { "no" }
        ),
    )
}

fn criterion_6() -> Outcome {
    let crossings = find_crossings(spec(2, 0.0), (-2.0, 2.0)).unwrap();
    let located = crossings.len() == 1 && (crossings[0] + 0.5).abs() <= 1e-6;
    let cfg = SweepConfig::new(2, SweepMethod::Spectral).unwrap();
    let step = cfg.j_values[1] - cfg.j_values[0];
    let jumps = sweep_jumps(&run_sweep(&cfg).unwrap());
    let jump_ok = jumps.len() == 1 && (jumps[0] + 0.5).abs() <= step;
    outcome(
        located && jump_ok,
        format!("find_crossings {crossings:?}; sweep jumps {jumps:?} (grid step {step})"),
    )
}

fn criterion_7() -> Outcome {
    let taus = [0.1, 0.05, 0.025, 0.0125];
    let errors: Vec<f64> = taus
        .iter()
        .map(|&t| {
            let r = verify_trotter_step(spec(3, 1.0), 0.9, t).unwrap();
            (&r.effective_propagator - &r.target_propagator).frobenius_norm()
        })
        .collect();
    let xs: Vec<f64> = taus.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let slope = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let slope_ok = (slope - 3.0).abs() <= 0.3;

    let proto = QuenchProtocol::new(0.1, 300).unwrap();
    let mut worst: f64 = 0.0;
    for (n, j) in [(2, 1.0), (3, 1.0), (3, -1.0)] {
        let exact = evolve_quench_unchecked(spec(n, j), &proto).unwrap().m_phi;
        let trot = simulate_protocol_trotter(spec(n, j), &proto).unwrap().m_phi;
        worst = worst.max((exact - trot).abs());
    }
    outcome(
        slope_ok && worst <= 1e-2,
        format!(
            "local-error slope {slope:.3} (N=3); max |m_phi trotter - exact| at n=300: {worst:.2e}"
        ),
    )
}

fn molecule(n: usize, couplings: &[((usize, usize), f64)]) -> MoleculeSpec {
    let mut table = vec![vec![0.0; n]; n];
    for &((i, j), v) in couplings {
        table[i][j] = v;
        table[j][i] = v;
    }
    MoleculeSpec::new(
        (0..n).map(|i| format!("S{i}")).collect(),
        vec![0.0; n],
        table,
    )
    .unwrap()
}

fn criterion_8() -> Outcome {
    let three = molecule(3, &[((0, 1), 100.0), ((1, 2), -50.0), ((0, 2), 20.0)]);
    let four = molecule(
        4,
        &[
            ((0, 1), 150.0),
            ((1, 2), -60.0),
            ((2, 3), 80.0),
            ((0, 2), 15.0),
            ((1, 3), 7.0),
            ((0, 3), 11.0),
        ],
    );
    let mut min_fid: f64 = 1.0;
    for m in [&three, &four] {
        let c = compile_zz(m, 1.0, 0.02).unwrap();
        min_fid = min_fid.min(verify_sequence(&c, m).unwrap().fidelity);
    }
    let fid_ok = min_fid >= 1.0 - 1e-10;

    let (j12, j23) = (100.0, -50.0);
    let expected = [j12 / (2.0 * (j12 - j23)), -j23 / (2.0 * (j12 - j23))];
    let closed = closed_form_timings(&three).unwrap().unwrap();
    let fractions = compile_zz(&three, 1.0, 0.02).unwrap().fractions();
    let has = |x: f64| fractions.iter().any(|f| (f - x).abs() < 1e-12);
    let closed_ok = closed == expected && has(expected[0]) && has(expected[1]);

    let equal = molecule(3, &[((0, 1), 80.0), ((1, 2), 80.0), ((0, 2), 10.0)]);
    let degenerate_ok = matches!(
        compile_zz(&equal, 1.0, 0.02),
        Err(Error::DegenerateCouplings(_))
    );
    outcome(
        fid_ok && closed_ok && degenerate_ok,
        format!(
            "min fidelity 1-{:.1e}; N=3 timings {closed:?} in solver fractions: {closed_ok}; equal couplings rejected: {degenerate_ok}",
            1.0 - min_fid
        ),
    )
}

fn criterion_9() -> Outcome {
    let proto = QuenchProtocol::new(0.1, 300).unwrap();
    let f = perturbed_fidelity(spec(2, 1.0), &proto, 5.0, 20240607, 20).unwrap();
    outcome(
        f >= 0.99,
        format!("min over 20 trials of period-averaged fidelity {f:.5} (N=2, 5 deg)"),
    )
}

fn ground(s: ChainSpec, theta: f64, phi: f64) -> StateVector {
    eigh(&build_heisenberg(s, FieldPoint::unit(theta, phi)).unwrap())
        .unwrap()
        .ground_state()
}

/// Curvature from the Berry phase around a small plaquette centred on `(θ, φ)`.
fn plaquette_curvature(s: ChainSpec, theta: f64, phi: f64, delta: f64) -> f64 {
    let h = delta / 2.0;
    let corners = [
        ground(s, theta - h, phi - h),
        ground(s, theta + h, phi - h),
        ground(s, theta + h, phi + h),
        ground(s, theta - h, phi + h),
    ];
    let product = (0..4).fold(spinchern_core::qcore::c64(1.0, 0.0), |acc, k| {
        acc * corners[k].inner(&corners[(k + 1) % 4])
    });
    product.arg() / (delta * delta)
}

fn criterion_10() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for n in 1..=4 {
        for j in [-1.5, -1.0, 1.0, 1.5] {
            for theta in [0.4, FRAC_PI_2, 2.2] {
                let s = spec(n, j);
                let f = curvature_spectral(s, FieldPoint::unit(theta, 0.7))
                    .unwrap()
                    .f_phitheta;
                let fd = plaquette_curvature(s, theta, 0.7, 1e-3);
                worst = worst.max((f - fd).abs());
                cases += 1;
            }
        }
    }
    outcome(
        worst <= 1e-4,
        format!("{cases} grid points, max |F_spectral - F_plaquette| = {worst:.2e}"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("plateau quantization N=2", criterion_1),
        ("plateau quantization N=3", criterion_2),
        ("plateau quantization N=4", criterion_3),
        ("Chern reduction", criterion_4),
        ("linear zone", criterion_5),
        ("crossing location N=2", criterion_6),
        ("Trotter order", criterion_7),
        ("refocusing compiler", criterion_8),
        ("pulse-error robustness", criterion_9),
        ("curvature oracle equivalence", criterion_10),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "[{}] {:>2}. {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            k + 1,
            o.detail
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
