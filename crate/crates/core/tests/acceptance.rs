//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.
//!
//! Run with `cargo test -p transverse-core --test acceptance`.

use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::sync::Arc;
use std::time::Instant;
use transverse_core::asymptotics::{
    block_order_slopes, high_freq_sign, low_freq_coefficient, orientation_index, verify_block_reduction,
    IndexConclusion, DEFAULT_K_LADDER,
};
use transverse_core::evans::{evans, evans_scan, monodromy};
use transverse_core::kernel::{build_w, check_delta_w, kernel_basis, verify_inverse_column};
use transverse_core::tracking::{
    evans_factorization, solve_conjugator, triangularized_blocks, BlockSystem, CMat, SolveOptions,
};
use transverse_core::wave::{complete_k, jacobi_elliptic, EllipticModulus};
use transverse_core::wave::cnoidal_wave;
use transverse_core::{
    compute_invariants, gradients, integrate_profile, kdv_jacobian_closed_form, NonlinearitySpec, Sigma,
    Tolerances, WaveParams, WaveProfile,
};

type Outcome = Result<String, String>;

fn c(x: f64) -> Complex64 {
    Complex64::from(x)
}

fn tol() -> Tolerances {
    Tolerances::default()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn kdv_test_wave(sigma: Sigma) -> WaveParams {
    WaveParams::new(0.0, -0.05, 1.0, NonlinearitySpec::kdv(), sigma).unwrap()
}

fn mkdv_dnoidal(sigma: Sigma) -> WaveParams {
    WaveParams::new(0.0, -0.5, 1.0, NonlinearitySpec::mkdv(), sigma).unwrap().with_well(0.5, 2.0)
}

fn mkdv_cnoidal(sigma: Sigma) -> WaveParams {
    WaveParams::new(0.0, 0.5, 1.0, NonlinearitySpec::mkdv(), sigma).unwrap()
}

fn profile(p: &WaveParams) -> Result<WaveProfile, String> {
    integrate_profile(p, 256, &tol()).map_err(|e| e.to_string())
}

/// KdV wave (`f = u²/2`) with `E` a fraction `theta` of the way from the
/// bottom of the well to the separatrix level.
fn kdv_point(a: f64, cc: f64, theta: f64) -> WaveParams {
    let base = WaveParams::new(a, 0.0, cc, NonlinearitySpec::kdv(), Sigma::Plus).unwrap();
    let pot = base.potential();
    let disc = (cc * cc + 2.0 * a).sqrt();
    let (top, bottom) = (pot.v(cc - disc, 0), pot.v(cc + disc, 0));
    base.with_aec(a, bottom + theta * (top - bottom), cc)
}

fn kdv_points() -> Vec<WaveParams> {
    vec![
        kdv_point(0.0, 1.0, 0.3),
        kdv_point(0.2, 1.5, 0.5),
        kdv_point(-0.1, 1.0, 0.7),
        kdv_point(0.5, 2.0, 0.2),
        kdv_point(0.0, 0.8, 0.9),
    ]
}

fn ac01_unit_determinant() -> Outcome {
    let p = profile(&kdv_test_wave(Sigma::Plus))?;
    let mut rng = StdRng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut worst_assembled = 0.0f64;
    for _ in 0..24 {
        let r = 50.0 * rng.random::<f64>();
        let angle = std::f64::consts::TAU * rng.random::<f64>();
        let mu = Complex64::from_polar(r, angle);
        let k = rng.random_range(-1.0..=1.0);
        let m = monodromy(&p, mu, k, &tol()).map_err(|e| e.to_string())?;
        worst = worst.max((m.determinant() - 1.0).norm());
        if r <= 5.0 {
            worst_assembled = worst_assembled.max((m.assembled_determinant() - 1.0).norm());
        }
    }
    check(
        worst <= 1e-8,
        format!("24 points, |mu|<=50: max |det-1| = {worst:.2e} (assembled product, |mu|<=5: {worst_assembled:.2e})"),
    )
}

fn ac02_evenness() -> Outcome {
    let p = profile(&kdv_test_wave(Sigma::Plus))?;
    let mut rng = StdRng::seed_from_u64(11);
    let mut worst = 0.0f64;
    let mut k_exact = true;
    for i in 0..10 {
        let (mu, k) = if i == 0 { (0.9, 0.4) } else { (rng.random_range(0.05..3.0), rng.random_range(0.05..1.0)) };
        let d = |m: f64, kk: f64| evans(&p, c(m), kk, c(1.0), &tol()).map_err(|e| e.to_string()).map(|v| v.value().unwrap());
        let (dp, dm) = (d(mu, k)?, d(-mu, k)?);
        worst = worst.max((dp - dm).norm() / dp.norm().max(1.0));
        k_exact &= d(mu, -k)? == dp;
    }
    check(
        worst <= 1e-8 && k_exact,
        format!("10 points: max |D(mu)-D(-mu)|/max(1,|D|) = {worst:.2e}, k-evenness exact: {k_exact}"),
    )
}

fn ac03_translation_zero() -> Outcome {
    let p = profile(&kdv_test_wave(Sigma::Plus))?;
    let m = monodromy(&p, c(0.0), 0.0, &tol()).map_err(|e| e.to_string())?;
    let scale = m.matrix.iter().fold(1.0f64, |s, z| s.max(z.norm()));
    let d = evans(&p, c(0.0), 0.0, c(1.0), &tol()).map_err(|e| e.to_string())?.value().unwrap().norm();
    check(d <= 1e-7 * scale, format!("|D(0,0,1)| = {d:.2e}, matrix scale {scale:.2e}"))
}

fn ac04_low_frequency() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, plus, minus) in [
        ("KdV", kdv_test_wave(Sigma::Plus), kdv_test_wave(Sigma::Minus)),
        ("mKdV dn", mkdv_dnoidal(Sigma::Plus), mkdv_dnoidal(Sigma::Minus)),
    ] {
        let rp = low_freq_coefficient(&profile(&plus)?, &DEFAULT_K_LADDER, &tol()).map_err(|e| e.to_string())?;
        let rm = low_freq_coefficient(&profile(&minus)?, &DEFAULT_K_LADDER, &tol()).map_err(|e| e.to_string())?;
        let fit_tol = 10.0 * rp.fit_residual.max(rm.fit_residual);
        let sigma_gap = (rp.fitted_c4 - rm.fitted_c4).abs() / rp.fitted_c4.abs();
        ok &= rp.relative_error < 5e-3 && rm.relative_error < 5e-3;
        ok &= rp.predicted_c4 == rm.predicted_c4 && sigma_gap <= fit_tol;
        lines.push(format!(
            "{name}: c4 fit {:.5e} vs {:.5e} (rel {:.2e}), sigma gap {sigma_gap:.1e} <= {fit_tol:.1e}",
            rp.fitted_c4, rp.predicted_c4, rp.relative_error
        ));
    }
    check(ok, lines.join("; "))
}

fn ac05_high_frequency() -> Outcome {
    let mut ok = true;
    let mut count = 0;
    let t0 = Instant::now();
    for sigma in [Sigma::Plus, Sigma::Minus] {
        let p = profile(&kdv_test_wave(sigma))?;
        for k in [0.3, 0.5] {
            let rep = high_freq_sign(&p, k, &[50.0, 100.0, 200.0], &tol()).map_err(|e| e.to_string())?;
            for probe in &rep.probes {
                ok &= probe.sign as f64 == sigma.value();
                count += 1;
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    check(ok && secs < 60.0, format!("{count} probes, sign D = sign sigma: {ok}, {secs:.2}s"))
}

fn ac06_consistency_triangle() -> Outcome {
    let grid: Vec<f64> = (1..=200).map(|i| 0.005 * i as f64).collect();
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, params) in [
        ("KdV +1", kdv_test_wave(Sigma::Plus)),
        ("mKdV dn +1", mkdv_dnoidal(Sigma::Plus)),
        ("mKdV cn -1", mkdv_cnoidal(Sigma::Minus)),
    ] {
        let p = profile(&params)?;
        let idx = orientation_index(&p, &tol()).map_err(|e| e.to_string())?;
        let rep = evans_scan(&p, &grid, 0.1, c(1.0), &tol()).map_err(|e| e.to_string())?;
        let root = rep.roots.iter().find(|r| r.mu_star > 0.0);
        let good = idx.conclusion == IndexConclusion::UnstableDetected && root.is_some_and(|r| r.width <= 1e-6);
        ok &= good;
        lines.push(match root {
            Some(r) => format!("{name}: mu* = {:.6} (width {:.1e})", r.mu_star, r.width),
            None => format!("{name}: no root"),
        });
    }
    check(ok, lines.join("; "))
}

fn ac07_kdv_closed_form() -> Outcome {
    let mut worst = 0.0f64;
    let mut positive = true;
    for p in kdv_points() {
        let closed = kdv_jacobian_closed_form(&p, &tol()).map_err(|e| e.to_string())?;
        let fd = gradients(&p, tol().fd_h_rel, &tol()).map_err(|e| e.to_string())?.jacobian_tm();
        worst = worst.max((closed - fd).abs() / fd.abs());
        positive &= closed > 0.0 && fd > 0.0;
    }
    check(worst <= 1e-5 && positive, format!("5 points: max rel diff {worst:.2e}, all positive: {positive}"))
}

fn ac08_gradient_identity() -> Outcome {
    let mut worst = 0.0f64;
    let mut min_e = f64::INFINITY;
    for p in kdv_points() {
        min_e = min_e.min(p.e.abs());
        let g = gradients(&p, tol().fd_h_rel, &tol()).map_err(|e| e.to_string())?;
        worst = worst.max(g.identity_residual(&p));
    }
    check(worst <= 1e-6 && min_e > 1e-3, format!("5 points (min |E| = {min_e:.3}): max residual {worst:.2e}"))
}

fn ac09_kernel() -> Outcome {
    let p = integrate_profile(&kdv_test_wave(Sigma::Plus), 1024, &tol()).map_err(|e| e.to_string())?;
    let basis = kernel_basis(&p, &tol()).map_err(|e| e.to_string())?;
    let res = basis.residuals();
    let w = build_w(&basis);
    let dw = check_delta_w(&p, &basis, &w, &tol()).map_err(|e| e.to_string())?;
    check(
        res.max() <= 1e-6 && dw.max_rel_error <= 1e-6,
        format!(
            "residuals ux {:.1e} ua {:.1e} uE {:.1e} phi {:.1e}; dW rel err {:.1e} (display without the T_E x u_x terms: {:.2})",
            res.ux, res.ua, res.ue, res.phi, dw.max_rel_error, dw.max_rel_error_without_te_terms
        ),
    )
}

fn ac10_inverse_column() -> Outcome {
    let p = integrate_profile(&kdv_test_wave(Sigma::Plus), 1024, &tol()).map_err(|e| e.to_string())?;
    let basis = kernel_basis(&p, &tol()).map_err(|e| e.to_string())?;
    let rep = verify_inverse_column(&build_w(&basis), &basis);
    check(rep.sup_residual <= 1e-7, format!("sup |W v - e4| = {:.2e}", rep.sup_residual))
}

fn ac11_block_reduction() -> Outcome {
    let p = profile(&kdv_test_wave(Sigma::Plus))?;
    let rep = verify_block_reduction(&p, 400.0, 0.5).map_err(|e| e.to_string())?;
    let (slope, first) = block_order_slopes(&p, 400.0, 0.5).map_err(|e| e.to_string())?;
    let ok = rep.q_diag_error <= 1e-14
        && rep.avg_a1x.abs() <= 1e-10
        && rep.avg_a1_a1x.abs() <= 1e-10
        && (slope + 2.0).abs() <= 0.4;
    check(
        ok,
        format!(
            "Q diag err {:.1e}; averages {:.1e}, {:.1e}; lower-left slope {slope:.3} (target -2; first-order S {first:.3})",
            rep.q_diag_error, rep.avg_a1x, rep.avg_a1_a1x
        ),
    )
}

fn ac12_tracking() -> Outcome {
    let scalar = |x: f64| CMat::from_element(1, 1, c(x));
    let sys = BlockSystem::constant(2.0, scalar(1.0), scalar(-1.0), scalar(1.0), scalar(1.0), 0.1).map_err(|e| e.to_string())?;
    let conj = solve_conjugator(&sys, &SolveOptions::default()).map_err(|e| e.to_string())?;
    let exact = -1.0 + 1.1f64.sqrt();
    let fp_err = conj.phi.iter().map(|p| (p[(0, 0)] - exact).norm()).fold(0.0, f64::max);
    let tri = triangularized_blocks(&sys, &conj, 1e-10).map_err(|e| e.to_string())?;
    let fact = evans_factorization(&tri, 1e-13).map_err(|e| e.to_string())?;

    let (t, eps) = (3.0, 0.2);
    let omega = std::f64::consts::TAU / t;
    let mut four = BlockSystem::constant(t, scalar(1.0), scalar(-1.0), scalar(0.0), scalar(1.0), 0.0).map_err(|e| e.to_string())?;
    four.delta = Arc::new(move |x| eps * (omega * x).cos());
    four.eta = Arc::new(|_| 1.0);
    let fc = solve_conjugator(&four, &SolveOptions::default()).map_err(|e| e.to_string())?;
    let fourier_err = fc
        .grid
        .iter()
        .zip(&fc.phi)
        .map(|(x, p)| {
            let exact = (Complex64::new(0.0, omega * x).exp() * eps / Complex64::new(2.0, omega)).re;
            (p[(0, 0)] - exact).norm()
        })
        .fold(0.0, f64::max);
    let periodic = conj.periodicity_error.max(fc.periodicity_error);
    let ok = fp_err <= 1e-12 && fourier_err <= 1e-10 && tri.residual <= 1e-10 && periodic <= 1e-10 && fact.relative_error <= 1e-10;
    check(
        ok,
        format!(
            "fixed point {fp_err:.1e}; Fourier {fourier_err:.1e}; conjugation residual {:.1e}; periodicity {periodic:.1e}; factorization {:.1e}",
            tri.residual, fact.relative_error
        ),
    )
}

fn ac13_elliptic() -> Outcome {
    let mut ident = 0.0f64;
    let mut period = 0.0f64;
    for i in 0..40 {
        let k = 0.999 * i as f64 / 40.0;
        let m = EllipticModulus::new(k).unwrap();
        let kappa = 0.7;
        let kk = complete_k(m);
        for j in 0..50 {
            let x = -10.0 + 0.4 * j as f64;
            let (s, cn, d) = jacobi_elliptic(x, m);
            ident = ident.max((s * s + cn * cn - 1.0).abs()).max((d * d + k * k * s * s - 1.0).abs());
            let a = jacobi_elliptic(kappa * x + kk, m).1;
            let b = jacobi_elliptic(kappa * (x + 2.0 * kk / kappa) + kk, m).1;
            period = period.max((a * a - b * b).abs());
        }
    }
    let w = cnoidal_wave(0.1, 1.0, EllipticModulus::new(0.8).unwrap(), Sigma::Plus, 256).map_err(|e| e.to_string())?;
    let ode = integrate_profile(&w.params, 256, &tol()).map_err(|e| e.to_string())?;
    let diff = ode.u.iter().zip(&w.profile.u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    check(
        ident <= 1e-12 && period <= 1e-10 && diff <= 1e-8,
        format!("identities {ident:.1e}; cn^2 period {period:.1e}; closed form vs ODE {diff:.1e}"),
    )
}

fn ac14_jensen() -> Outcome {
    let mut waves = kdv_points();
    waves.push(kdv_test_wave(Sigma::Plus));
    waves.push(mkdv_dnoidal(Sigma::Plus));
    waves.push(mkdv_cnoidal(Sigma::Plus));
    let mut min_rel = f64::INFINITY;
    for p in &waves {
        let inv = compute_invariants(p, &tol()).map_err(|e| e.to_string())?;
        min_rel = min_rel.min(inv.jensen_gap() / (inv.p * inv.t));
    }
    check(min_rel > 0.0, format!("{} waves: min (PT - M^2)/(PT) = {min_rel:.3e}", waves.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 14] = [
        ("monodromy determinant", ac01_unit_determinant),
        ("evenness in mu and k", ac02_evenness),
        ("translation-mode zero", ac03_translation_zero),
        ("low-frequency k^4 coefficient", ac04_low_frequency),
        ("high-frequency sign", ac05_high_frequency),
        ("index / scan consistency", ac06_consistency_triangle),
        ("KdV closed-form Jacobian", ac07_kdv_closed_form),
        ("gradient identity", ac08_gradient_identity),
        ("kernel residuals and dW", ac09_kernel),
        ("explicit inverse column", ac10_inverse_column),
        ("block-reduction structure", ac11_block_reduction),
        ("tracking conjugator", ac12_tracking),
        ("elliptic layer", ac13_elliptic),
        ("Jensen positivity", ac14_jensen),
    ];
    let t0 = Instant::now();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("AC{:02} PASS {name} [{secs:.2}s]: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("AC{:02} FAIL {name} [{secs:.2}s]: {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {}/{} passed in {:.1}s",
        criteria.len() - failed,
        criteria.len(),
        t0.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
