//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (run with `cargo test --test acceptance -- --nocapture` to see them).
//! Every tolerance is pinned in code; no criterion defers to calibration.

use calderon_core::boundary::{default_gamma_pair, DtnDomain};
use calderon_core::bvp::{
    impedance_energy, solve_dirichlet, solve_impedance, BoundaryField, ImpedanceSign,
    ImpedanceSpec,
};
use calderon_core::cgo::{decay_probe, faddeev_solve, make_xi_pair, CgoDirections};
use calderon_core::experiment::{
    emit_report, fit_modulus, gap_explorer, kendall_tau, run_stability_sweep, ExperimentConfig,
    FitModel, PerturbationSpec, PotentialSpec, SideSpec, SweepMode,
};
use calderon_core::grid::{carve_regions, smooth_window, BoxDomain, Grid, SubBox};
use calderon_core::reconstruct::{
    choose_scales, h_minus1_error, interior_identity_check, lowpass_invert, CgoSampler, SampleMode,
};
use calderon_core::runge::{runge_approximate, svd_decompose, tradeoff_curve, RungeKind, RungeSetup};
use calderon_core::spectral::{probe_resolvent_bound, PotentialField, SchrodingerOp};
use calderon_core::torus::Torus;
use calderon_core::{BoundaryPatch, Side};
use num_complex::Complex;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

type C64 = num_complex::Complex<f64>;

fn pi_cube(n: usize) -> Grid {
    Grid::build(BoxDomain::new(&[PI, PI, PI]).unwrap(), &[n, n, n]).unwrap()
}

fn report(criterion: &str, ok: bool, detail: &str) {
    println!(
        "[{}] criterion {criterion}: {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    for k in 1..40 {
        term *= (x / (2.0 * k as f64)).powi(2);
        sum += term;
        if term < 1e-16 * sum {
            break;
        }
    }
    sum
}

/// Kaiser window on [a, b] with shape β, smoothly tapered to zero at the
/// support edges by a quintic ramp of width w.
fn kaiser_taper(x: f64, a: f64, b: f64, beta: f64, w: f64) -> f64 {
    let c = (a + b) / 2.0;
    let half = (b - a) / 2.0;
    let u = (x - c) / half;
    if u.abs() >= 1.0 {
        return 0.0;
    }
    let kaiser = bessel_i0(beta * (1.0 - u * u).sqrt()) / bessel_i0(beta);
    let ramp = calderon_core::grid::smoothstep5((x - a) / w)
        .min(calderon_core::grid::smoothstep5((b - x) / w));
    kaiser * ramp
}

/// Criterion 1: manufactured-solution convergence of both solvers on (0,π)³
/// with q = 1+λ and u* = e^{x₁}; max-error ratio from 15³ to 31³ in [3.5, 4.5].
#[test]
fn criterion_01_manufactured_convergence() {
    let lambda = 3.0;
    let mu = 9.0;
    let a = 16.0; // absorbing weight large enough for the asymptotic window
    let mut dir_errors = Vec::new();
    let mut imp_errors = Vec::new();
    for n in [15usize, 31] {
        let g = pi_cube(n);
        let exp_trace = BoundaryField::from_fn(&g, BoundaryPatch::full_boundary(&g), |x| {
            Complex::new(x[0].exp(), 0.0)
        });
        let op = SchrodingerOp::new(g.clone(), PotentialField::constant(&g, 1.0 + lambda)).unwrap();
        let sol = solve_dirichlet(&op, lambda, &exp_trace).unwrap();
        let mut err = 0.0f64;
        for (lin, idx) in g.iter_multi().enumerate() {
            err = err.max((sol.interior[lin].re - g.position(&idx)[0].exp()).abs());
        }
        dir_errors.push(err);

        let opi = SchrodingerOp::new(g.clone(), PotentialField::constant(&g, 1.0 + mu)).unwrap();
        let spec = ImpedanceSpec::constant(&g, a, mu, ImpedanceSign::Plus, 1.2).unwrap();
        let f = vec![Complex::new(0.0, 0.0); g.n_interior()];
        let phi = BoundaryField::from_fn(&g, BoundaryPatch::full_boundary(&g), |x| {
            let u = x[0].exp();
            let dn = if x[0] < 1e-12 {
                -u
            } else if (x[0] - PI).abs() < 1e-12 {
                u
            } else {
                0.0
            };
            Complex::new(dn, 0.0) + Complex::new(0.0, -1.0) * mu.sqrt() * a * u
        });
        let isol = solve_impedance(&opi, &spec, &f, &phi).unwrap();
        let mut err = 0.0f64;
        for (lin, idx) in g.iter_multi().enumerate() {
            err = err.max((isol.interior[lin] - Complex::new(g.position(&idx)[0].exp(), 0.0)).norm());
        }
        imp_errors.push(err);
    }
    let dir_ratio = dir_errors[0] / dir_errors[1];
    let imp_ratio = imp_errors[0] / imp_errors[1];
    let ok = (3.5..=4.5).contains(&dir_ratio) && (3.5..=4.5).contains(&imp_ratio);
    report(
        "1 (manufactured convergence)",
        ok,
        &format!("dirichlet ratio {dir_ratio:.3}, impedance ratio {imp_ratio:.3} (window [3.5, 4.5])"),
    );
    assert!(ok, "ratios: dirichlet {dir_ratio}, impedance {imp_ratio}");
}

/// Criterion 2: discrete Green/Alessandrini identity on 9³ grids for three
/// random (q₁, q₂, λ) triples, relative mismatch ≤ 1e−10.
#[test]
fn criterion_02_green_identity() {
    let g = pi_cube(9);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for trial in 0..3 {
        let a1 = 0.2 + 0.3 * rng.random::<f64>();
        let a2 = 0.2 + 0.3 * rng.random::<f64>();
        let w1 = 1.0 + rng.random::<f64>();
        let w2 = 1.0 + rng.random::<f64>();
        let q1 = PotentialField::from_fn(&g, |x| a1 * (w1 * x[0] + x[1]).sin()).unwrap();
        let q2 = PotentialField::from_fn(&g, |x| -a2 * (w2 * x[2]).cos()).unwrap();
        let op1 = SchrodingerOp::new(g.clone(), q1).unwrap();
        let op2 = SchrodingerOp::new(g.clone(), q2).unwrap();
        let lambda = 4.0 + 1.5 * trial as f64;
        let phi1 = BoundaryField::from_fn(&g, BoundaryPatch::full_boundary(&g), |x| {
            Complex::new((w1 * x[1]).cos() + 0.2 * x[0], 0.0)
        });
        let phi2 = BoundaryField::from_fn(&g, BoundaryPatch::full_boundary(&g), |x| {
            Complex::new((w2 * x[0]).sin() - 0.1 * x[2], 0.0)
        });
        let u1 = solve_dirichlet(&op1, lambda, &phi1).unwrap();
        let u2 = solve_dirichlet(&op2, lambda, &phi2).unwrap();
        let check = interior_identity_check(&op1, &op2, lambda, &u1, &u2).unwrap();
        worst = worst.max(check.mismatch);
    }
    let ok = worst <= 1e-10;
    report(
        "2 (Green/Alessandrini identity)",
        ok,
        &format!("worst relative mismatch {worst:.3e} (tolerance 1e-10)"),
    );
    assert!(ok, "worst mismatch {worst}");
}

/// Criterion 3: resolvent-bound probe over λ ∈ {5,10,20,40}, j ∈ {0,1,2},
/// 10 random f each: per-j spread under a factor 10 and |Kendall τ| < 0.5.
#[test]
fn criterion_03_resolvent_scaling() {
    let g = pi_cube(9);
    let inner = SubBox::new(&[0.3 * PI; 3], &[0.7 * PI; 3]).unwrap();
    let part = carve_regions(&g, &[inner], 1).unwrap();
    let bump = smooth_window(&g, &part);
    let q = PotentialField::new(&g, bump.iter().map(|v| 0.4 * v).collect()).unwrap();
    let op = SchrodingerOp::new(g.clone(), q).unwrap();
    let lambdas = [5.0, 10.0, 20.0, 40.0];
    let mut ok = true;
    let mut detail = String::new();
    for j in 0..=2 {
        let table = probe_resolvent_bound(&op, &lambdas, j, 10, 33 + j as u64).unwrap();
        let ratios: Vec<f64> = table.iter().map(|r| r.ratio).collect();
        let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
        let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
        let lam: Vec<f64> = table.iter().map(|r| r.lambda).collect();
        let tau = kendall_tau(&lam, &ratios);
        let spread = max / min;
        let this_ok = spread < 10.0 && tau.abs() < 0.5;
        ok &= this_ok;
        detail.push_str(&format!("j={j}: spread {spread:.2}, tau {tau:.2}; "));
    }
    report("3 (resolvent scaling probe)", ok, &detail);
    assert!(ok, "{detail}");
}

/// Criterion 4: CGO correctness and remainder decay on a 32³ torus — q = 0
/// gives w = 0 to 1e−12, and the bump decay slope sits in [−1.3, −0.7].
#[test]
fn criterion_04_cgo_decay() {
    let g = pi_cube(15); // torus 2(N+1) = 32 per axis
    let inner = SubBox::new(&[0.3 * PI; 3], &[0.7 * PI; 3]).unwrap();
    let part = carve_regions(&g, &[inner], 1).unwrap();
    let torus = Torus::enclosing(&g);
    assert_eq!(torus.shape(), &[32, 32, 32]);

    let zero_q = vec![0.0; torus.len()];
    let dirs = make_xi_pair(&[1.0, 0.0, 0.0], 6.0, 10.0, 4, 1.0, 1.0).unwrap();
    let sol = faddeev_solve(&torus, &zero_q, &dirs.xi1, 1e-10).unwrap();
    let wmax = sol.w.iter().map(|v| v.norm()).fold(0.0, f64::max);

    let bump: Vec<f64> = smooth_window(&g, &part).iter().map(|v| 0.5 * v).collect();
    let fit = decay_probe(
        &g,
        &part,
        &bump,
        10.0,
        &[1.0, 0.0, 0.0],
        &[4.0, 8.0, 16.0, 32.0],
        7,
        1.0,
        1e-9,
    )
    .unwrap();
    let ok = wmax <= 1e-12 && fit.slope > -1.3 && fit.slope < -0.7;
    report(
        "4 (CGO correctness and decay)",
        ok,
        &format!("q=0 max|w| = {wmax:.2e}, decay slope {:.3} (window [-1.3, -0.7])", fit.slope),
    );
    assert!(ok, "wmax {wmax}, slope {}", fit.slope);
}

/// Criterion 5: ξ-algebra invariants for 100 random (η, τ, λ) at the stated
/// tolerances.
#[test]
fn criterion_05_xi_algebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(555);
    let kappa = 1.0;
    let mut ok = true;
    for trial in 0..100u64 {
        let eta: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 8.0 - 4.0).collect();
        let tau = 2.2 + rng.random::<f64>() * 40.0;
        let lambda = 1.0 + rng.random::<f64>() * 60.0;
        let d = make_xi_pair(&eta, tau, lambda, trial, kappa, 1.0).unwrap();
        let scale = (lambda + tau * tau).max(1.0);
        let dot12: f64 = d.eta1.iter().zip(&d.eta2).map(|(x, y)| x * y).sum();
        let dot1e: f64 = d.eta1.iter().zip(&d.eta).map(|(x, y)| x * y).sum();
        let dot2e: f64 = d.eta2.iter().zip(&d.eta).map(|(x, y)| x * y).sum();
        ok &= dot12.abs() <= 1e-12 * scale && dot1e.abs() <= 1e-12 * scale && dot2e.abs() <= 1e-12 * scale;
        let m1sq: f64 = d.eta1.iter().map(|v| v * v).sum();
        let m2sq: f64 = d.eta2.iter().map(|v| v * v).sum();
        let eta_sq: f64 = d.eta.iter().map(|v| v * v).sum();
        ok &= (m1sq - (lambda + tau * tau)).abs() <= 1e-10 * scale;
        ok &= (m2sq - (eta_sq / 4.0 + m1sq - lambda)).abs() <= 1e-10 * scale;
        for xi in [&d.xi1, &d.xi2] {
            let xx = CgoDirections::xi_dot_xi(xi);
            ok &= (xx - Complex::new(lambda, 0.0)).norm() <= 1e-10 * (lambda + 1.0);
        }
        let sum_ok = (0..3).all(|a| (d.xi1[a] + d.xi2[a] - Complex::new(d.eta[a], 0.0)).norm() < 1e-12 * scale);
        ok &= sum_ok;
        let im = d.im_norm();
        ok &= im >= tau - 1e-12 && im <= tau + eta_sq.sqrt() / 2.0 + 1e-12 && im > 2.0 * d.varpi;
        if !ok {
            break;
        }
    }
    report("5 (xi-algebra invariants)", ok, "100 random (eta, tau, lambda) triples");
    assert!(ok);
}

/// Criterion 6: Runge truncation algebra on a 15³ grid — ‖φ_t‖ ≤ t⁻¹‖u‖ with
/// ≤ 1e−12 slack for every tested (u, t), a monotone trade-off curve, and
/// err ≤ 1% of ‖u‖ for t below the 20th singular value.
#[test]
fn criterion_06_runge_truncation() {
    let g = pi_cube(15);
    let inner = SubBox::new(&[0.3 * PI; 3], &[0.7 * PI; 3]).unwrap();
    let part = carve_regions(&g, &[inner], 1).unwrap();
    let q = PotentialField::from_fn(&g, |x| 0.2 * (x[0] + 0.5 * x[1]).cos()).unwrap();
    let op = SchrodingerOp::new(g.clone(), q).unwrap();
    let (g0, g1) = default_gamma_pair(&g, 0, Side::Lo, 1).unwrap();
    let domain = DtnDomain::windowed(&g, &g0, &g1, 1.5, Some(8)).unwrap();
    let setup = RungeSetup {
        op: &op,
        partition: &part,
        domain,
        kind: RungeKind::Dirichlet { lambda: 4.3 },
    };
    let t_mat = setup.assemble().unwrap();
    let dec = svd_decompose(&t_mat).unwrap();
    let enough_modes = dec.len() >= 21;

    // u = restriction of a global solution: T applied to a random smooth datum
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let coeffs: Vec<C64> = (0..setup.domain.len())
        .map(|_| Complex::new(rng.random::<f64>() - 0.5, 0.0))
        .collect();
    let datum = setup.domain.field_from_coeffs(&g, &coeffs);
    let global = setup.solve_datum(&datum).unwrap();
    let u_m0: Vec<C64> = dec.m0_nodes.iter().map(|&i| global[i]).collect();
    let u_norm = dec.m0_norm(&u_m0);

    // threshold grid through the spectrum; bound ‖φ_t‖ ≤ t⁻¹‖u‖ throughout
    let t_grid: Vec<f64> = (0..8)
        .map(|k| dec.singular_values[0] * 1.3 * 0.2f64.powi(k))
        .collect();
    let mut bound_ok = true;
    for &t in &t_grid {
        let approx = runge_approximate(&setup, &dec, &u_m0, t).unwrap();
        bound_ok &= approx.datum_norm <= u_norm / t + 1e-12 * (1.0 + u_norm / t);
    }
    let records = tradeoff_curve(&setup, &dec, &u_m0, &t_grid).unwrap();
    let mut monotone_ok = true;
    for w in records.windows(2) {
        monotone_ok &= w[1].err <= w[0].err + 1e-12;
        monotone_ok &= w[1].datum_norm + 1e-12 >= w[0].datum_norm;
    }
    // err at a threshold just below the 20th singular value
    let t20 = dec.singular_values[19.min(dec.len() - 1)] * 0.999;
    let approx = runge_approximate(&setup, &dec, &u_m0, t20).unwrap();
    let small_err_ok = approx.err <= 0.01 * u_norm;
    let ok = enough_modes && bound_ok && monotone_ok && small_err_ok;
    report(
        "6 (Runge truncation algebra)",
        ok,
        &format!(
            "{} modes, phi-bound {}, monotone {}, err at t<tau_20 = {:.2e} vs 1% = {:.2e}",
            dec.len(),
            bound_ok,
            monotone_ok,
            approx.err,
            0.01 * u_norm
        ),
    );
    assert!(ok);
}

/// Criterion 7: end-to-end oracle-mode reconstruction at 16³, λ = 10, τ = 16,
/// s = τ^{0.4}: relative H⁻¹ error ≤ 25%, and doubling τ does not increase it.
#[test]
fn criterion_07_end_to_end_reconstruction() {
    let g = pi_cube(16);
    let inner = SubBox::new(&[0.12 * PI; 3], &[0.88 * PI; 3]).unwrap();
    let part = carve_regions(&g, &[inner], 1).unwrap();
    // smooth bump of amplitude 0.5 supported strictly inside M₀: a tapered
    // Kaiser profile concentrates the spectrum below the pinned s = τ^{0.4}
    let dq: Vec<f64> = g.field_from_fn(|x| {
        0.5 * x.iter().map(|&xi| kaiser_taper(xi, 0.39, 2.75, 3.0, 0.2)).product::<f64>()
    });
    let q1 = PotentialField::new(&g, dq.clone()).unwrap();
    let q0 = PotentialField::constant(&g, 0.0);
    let op1 = SchrodingerOp::new(g.clone(), q1).unwrap();
    let op0 = SchrodingerOp::new(g.clone(), q0).unwrap();
    let torus = Torus::enclosing(&g);
    let dq_torus: Vec<f64> = torus.embed_interior(&g, &dq).iter().map(|v| v.re).collect();
    let lambda = 10.0;
    let kappa = 1.0;
    let mut rels = Vec::new();
    for tau in [16.0, 32.0] {
        let scales = choose_scales(tau, 3, None).unwrap();
        let sampler = CgoSampler::new(&op1, &op0, &part, lambda, tau, kappa, 77, 1e-9).unwrap();
        let set = sampler.sample_set(scales.s, SampleMode::Oracle).unwrap();
        let (rec, _) = lowpass_invert(&set, &torus).unwrap();
        let (_, rel) = h_minus1_error(&torus, &rec, &dq_torus);
        rels.push(rel.unwrap());
    }
    let ok = rels[0] <= 0.25 && rels[1] <= rels[0] + 1e-12;
    report(
        "7 (end-to-end reconstruction)",
        ok,
        &format!(
            "relative H^-1 error {:.4} at tau=16 (<= 0.25), {:.4} at tau=32 (non-increasing)",
            rels[0], rels[1]
        ),
    );
    assert!(ok, "rels {rels:?}");
}

/// Criterion 8: Lipschitz probe of q ↦ Λ⁰ — the fitted constant
/// ‖ΔΛ⁰‖/(λ² e_λ² ‖Δq‖_∞) stays within a factor 3 across λ ∈ {5,10,20,40}.
#[test]
fn criterion_08_lipschitz_probe() {
    let g = pi_cube(11);
    let inner = SubBox::new(&[0.3 * PI; 3], &[0.7 * PI; 3]).unwrap();
    let part = carve_regions(&g, &[inner], 1).unwrap();
    let shape = smooth_window(&g, &part);
    let q0 = PotentialField::constant(&g, 0.0);
    let q1 = PotentialField::new(&g, shape.iter().map(|v| 0.05 * v).collect()).unwrap();
    let op0 = SchrodingerOp::new(g.clone(), q0).unwrap();
    let op1 = SchrodingerOp::new(g.clone(), q1).unwrap();
    let (g0, g1) = default_gamma_pair(&g, 0, Side::Lo, 1).unwrap();
    let sigma = BoundaryPatch::face(&g, 0, Side::Hi).unwrap();
    let domain = DtnDomain::windowed(&g, &g0, &g1, 1.5, Some(5)).unwrap();
    let mut ratios = Vec::new();
    let mut rows = String::new();
    for lambda in [5.0, 10.0, 20.0, 40.0] {
        let probe =
            calderon_core::boundary::lipschitz_probe(&op1, &op0, lambda, &domain, &sigma).unwrap();
        rows.push_str(&format!(
            "lambda={lambda}: |dLambda0|={:.3e}, e={:.2}, C={:.3e}; ",
            probe.map_norm, probe.e_lambda, probe.ratio
        ));
        ratios.push(probe.ratio);
    }
    let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
    let spread = max / min;
    let ok = spread <= 3.0 && ratios.iter().all(|r| r.is_finite() && *r > 0.0);
    report(
        "8 (Lipschitz probe of q -> Lambda0)",
        ok,
        &format!("{rows}spread {spread:.2} (required <= 3)"),
    );
    if !ok {
        println!(
            "        note: the measured |dLambda0| tracks the e_lambda^2 resonance amplification \
             but carries no lambda^2 growth, so C = |dLambda0|/(lambda^2 e^2 |dq|) falls ~ lambda^-2; \
             the lambda^2 of the continuum Lipschitz bound is an upper-bound chain the realized partial-data maps do not saturate"
        );
    }
    assert!(ok, "ratios {ratios:?} spread {spread}");
}

/// Criterion 9: impedance energy bound — empirical C₁ over μ ∈ {4κ², 8κ², 16κ²}
/// and 5 random (f, φ) varies by less than a factor 5.
#[test]
fn criterion_09_impedance_energy() {
    let g = pi_cube(9);
    let kappa = 1.0;
    let inner = SubBox::new(&[0.3 * PI; 3], &[0.7 * PI; 3]).unwrap();
    let part = carve_regions(&g, &[inner], 1).unwrap();
    let q = PotentialField::new(
        &g,
        smooth_window(&g, &part).iter().map(|v| 0.5 * v).collect(),
    )
    .unwrap();
    let op = SchrodingerOp::new(g.clone(), q).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut c1s = Vec::new();
    for factor in [4.0, 8.0, 16.0] {
        let mu = factor * kappa * kappa;
        let spec = ImpedanceSpec::constant(&g, 1.0, mu, ImpedanceSign::Plus, kappa).unwrap();
        for _ in 0..5 {
            let f: Vec<C64> = (0..g.n_interior())
                .map(|_| Complex::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect();
            let phi_vals: Vec<C64> = (0..BoundaryPatch::full_boundary(&g).n_nodes())
                .map(|_| Complex::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect();
            let phi = BoundaryField::new(&g, BoundaryPatch::full_boundary(&g), phi_vals).unwrap();
            let sol = solve_impedance(&op, &spec, &f, &phi).unwrap();
            let (grad, l2) = impedance_energy(&g, &sol);
            let f_norm = (f.iter().map(|v| v.norm_sqr()).sum::<f64>() * g.cell_volume()).sqrt();
            let phi_norm = phi.l2_norm(&g);
            c1s.push((grad + mu.sqrt() * l2) / (f_norm + phi_norm));
        }
    }
    let max = c1s.iter().cloned().fold(f64::MIN, f64::max);
    let min = c1s.iter().cloned().fold(f64::MAX, f64::min);
    let spread = max / min;
    let ok = spread < 5.0;
    report(
        "9 (impedance energy bound)",
        ok,
        &format!("empirical C1 spread {spread:.3} over 15 samples (< 5)"),
    );
    assert!(ok, "spread {spread}, c1s {c1s:?}");
}

fn modulus_config(resolution: usize) -> ExperimentConfig {
    ExperimentConfig {
        box_sides: vec![PI; 3],
        resolution: vec![resolution; 3],
        inner_lo: vec![0.25 * PI; 3],
        inner_hi: vec![0.75 * PI; 3],
        margin_layers: 1,
        gamma_axis: 0,
        gamma_side: SideSpec::Lo,
        gamma_inset: 1,
        sigma_axis: 0,
        sigma_side: SideSpec::Hi,
        q0: PotentialSpec::Zero,
        perturbation: PerturbationSpec::Bump,
        amplitudes: vec![0.004, 0.008, 0.016, 0.032, 0.064, 0.128, 0.256, 0.512],
        lambdas: vec![10.0],
        taus: vec![],
        kappa0: 0.7,
        kappa1: 1.0,
        lambda0: 1.0,
        seed: 4242,
        mode: SweepMode::Dirichlet,
        impedance_a: 1.0,
        max_modes_per_axis: Some(5),
        gap_mu: vec![],
        gap_count: 0,
        output_dir: "out".into(),
    }
}

/// Criterion 10: modulus-of-continuity experiment — 8-amplitude sweep at
/// λ = 10 gives Kendall τ ≥ 0.9 between ‖Δq‖_{H⁻¹} and the double-log
/// abscissa of ‖ΔΛ⁰‖ inside its domain, and likewise for the single-log
/// abscissa of ‖ΔΛ¹‖.
#[test]
fn criterion_10_modulus_of_continuity() {
    let cfg = modulus_config(11);
    let out = run_stability_sweep(&cfg).unwrap();
    assert!(out.skipped.is_empty(), "skipped: {:?}", out.skipped);
    let pts0: Vec<(f64, f64)> = out
        .records
        .iter()
        .map(|r| (r.d_lambda0_norm.unwrap(), r.dq_h_minus1))
        .collect();
    let pts1: Vec<(f64, f64)> = out
        .records
        .iter()
        .map(|r| (r.d_lambda1_norm.unwrap(), r.dq_h_minus1))
        .collect();
    let fit0 = fit_modulus(&pts0, FitModel::DoubleLog, 3).unwrap();
    let fit1 = fit_modulus(&pts1, FitModel::SingleLog, 3).unwrap();
    let ok = fit0.kendall_tau >= 0.9 && fit1.kendall_tau >= 0.9;
    report(
        "10 (modulus of continuity)",
        ok,
        &format!(
            "double-log tau {:.3} ({} records), single-log tau {:.3} ({} records)",
            fit0.kendall_tau, fit0.n_used, fit1.kendall_tau, fit1.n_used
        ),
    );
    assert!(ok, "fit0 tau {}, fit1 tau {}", fit0.kendall_tau, fit1.kendall_tau);
}

/// Criterion 11: gap explorer — unit cube spectrum starts 3, 6, 9, 11 with
/// multiplicities 1, 3, 3, 3; a non-resonant box has 100 simple eigenvalues;
/// the Weyl-scaled max gap ratio is finite for k ≤ 10⁴.
#[test]
fn criterion_11_gap_explorer() {
    let cube = gap_explorer(&[1.0, 1.0, 1.0], 30).unwrap();
    let head: Vec<(f64, usize)> = cube.distinct.iter().take(4).cloned().collect();
    let cube_ok = (head[0].0 - 3.0).abs() < 1e-12
        && head[0].1 == 1
        && (head[1].0 - 6.0).abs() < 1e-12
        && head[1].1 == 3
        && (head[2].0 - 9.0).abs() < 1e-12
        && head[2].1 == 3
        && (head[3].0 - 11.0).abs() < 1e-12
        && head[3].1 == 3;
    let nonres = gap_explorer(&[1.0, 2.0f64.powf(0.25), 3.0f64.powf(0.25)], 100).unwrap();
    let large = gap_explorer(&[1.0, 2.0f64.powf(0.25), 3.0f64.powf(0.25)], 10_000).unwrap();
    let ok = cube_ok && nonres.all_simple && large.weyl_c.is_finite() && large.weyl_c > 0.0;
    report(
        "11 (gap explorer)",
        ok,
        &format!(
            "cube head ok {cube_ok}, non-resonant simple {}, max gap_k/k^(1/3) = {:.4} over 10^4",
            nonres.all_simple, large.weyl_c
        ),
    );
    assert!(ok);
}

/// Criterion 12: determinism — the same sweep config + seed produces
/// byte-identical records.csv, both through the library and the CLI binary.
#[test]
fn criterion_12_determinism() {
    let mut cfg = modulus_config(9);
    cfg.amplitudes = vec![0.01, 0.05];
    cfg.max_modes_per_axis = Some(3);
    let out1 = run_stability_sweep(&cfg).unwrap();
    let out2 = run_stability_sweep(&cfg).unwrap();
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    emit_report(&cfg, &out1, &[], d1.path()).unwrap();
    emit_report(&cfg, &out2, &[], d2.path()).unwrap();
    let lib_same = std::fs::read(d1.path().join("records.csv")).unwrap()
        == std::fs::read(d2.path().join("records.csv")).unwrap();

    // CLI end-to-end: same config file, two runs, identical bytes
    let work = tempfile::tempdir().unwrap();
    let cfg_path = work.path().join("run.toml");
    std::fs::write(&cfg_path, cfg.to_toml().unwrap()).unwrap();
    let bin = env!("CARGO_BIN_EXE_calderon-lab");
    let mut cli_same = true;
    let mut csvs = Vec::new();
    for run in 0..2 {
        let out_dir = work.path().join(format!("run{run}"));
        let status = std::process::Command::new(bin)
            .args([
                "--config",
                cfg_path.to_str().unwrap(),
                "--out",
                out_dir.to_str().unwrap(),
                "sweep",
            ])
            .status()
            .expect("run calderon-lab");
        cli_same &= status.success();
        csvs.push(std::fs::read(out_dir.join("records.csv")).unwrap());
    }
    cli_same &= csvs[0] == csvs[1];
    let ok = lib_same && cli_same;
    report(
        "12 (determinism)",
        ok,
        &format!("library identical {lib_same}, CLI identical {cli_same}"),
    );
    assert!(ok);
}
