//! Acceptance criteria. Each test prints one `acceptance N ... PASS|FAIL` line.

mod common;

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use delaymargin::criteria::{a_n_sequence, hyperbolicity_test, stability_test, Verdict};
use delaymargin::linalg::{expm, identity, inverse, singular_extremes, spectral_abscissa as matrix_abscissa, spectral_norm, CMat};
use delaymargin::model::{ComplexMatrix, SystemSpec};
use delaymargin::resolvent::{char_matrix, in_resolvent_set};
use delaymargin::roots::{critical_delay, refine_root, spectral_abscissa, RootOptions, Window};
use delaymargin::simulator::{default_horizon, default_step, estimate_decay, random_history};
use delaymargin::small_delay::{
    destabilizing_sequence, i1_matrix, i1_i2_norms, rewriting_factor, rewritten_system, robustness_margin, semigroup_bound,
    shifted_example_spec, shifted_unstable_root, skew_feedback_spec, MarginMode,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn report(id: u32, name: &str, failures: &[String], detail: &str) {
    let status = if failures.is_empty() { "PASS" } else { "FAIL" };
    println!("acceptance {id} ({name}): {status} - {detail}");
    for f in failures.iter().take(10) {
        println!("    counterexample: {f}");
    }
    assert!(failures.is_empty(), "acceptance {id} failed with {} counterexamples", failures.len());
}

fn scalar(z: f64) -> ComplexMatrix {
    ComplexMatrix::scalar(Complex64::new(z, 0.0))
}

fn acceptance_1_scalar_sharp_boundary() {
    let mut failures = Vec::new();
    let mut details = Vec::new();
    for d in [-0.5f64, -1.0, -2.0] {
        let exact = PI / (2.0 * d.abs());
        let start = Instant::now();
        let cd = critical_delay(&scalar(0.0), &scalar(d), 0.3 * exact, 1.8 * exact);
        let elapsed = start.elapsed();
        match cd {
            Ok(cd) => {
                let err = (cd.tau - exact).abs();
                details.push(format!("d={d}: tau*={:.9} err={err:.1e} {:.2}s", cd.tau, elapsed.as_secs_f64()));
                if err >= 1e-5 || !cd.destabilizing {
                    failures.push(format!("d={d}: tau*={} expected {exact}", cd.tau));
                }
                if elapsed >= Duration::from_secs(5) {
                    failures.push(format!("d={d}: runtime {elapsed:?}"));
                }
            }
            Err(e) => failures.push(format!("d={d}: {e}")),
        }
    }
    report(1, "scalar sharp boundary", &failures, &details.join("; "));
}

fn acceptance_2_example_destabilization() {
    let d = -1.0;
    let mus = [10.0, 100.0, 1000.0];
    let seq = destabilizing_sequence(&mus, d).unwrap();
    let results: Vec<(String, Option<String>)> = seq
        .entries
        .par_iter()
        .map(|e| {
            let spec = skew_feedback_spec(&[e.mu], d, e.tau).unwrap();
            let sigma = char_matrix(&spec, e.root).sigma_min;
            let bc_abscissa = matrix_abscissa(&(spec.b().as_mat() + spec.feedback_data().unwrap().c.as_mat())).unwrap();
            let hist = random_history(spec.max_delay(), 1, 11).unwrap();
            let h = default_step(&spec).unwrap();
            let dec = estimate_decay(&spec, &hist, 30.0, h).unwrap();
            let line = format!(
                "mu={}: tau={:.6} root=i{} residual={:.1e} sigma_min={:.1e} rate={:+.4} (step {:.1e}, converged {})",
                e.mu, e.tau, e.root.im, e.residual, sigma, dec.estimate.rate, dec.step, dec.converged
            );
            let bad = e.residual >= 1e-10
                || sigma >= 1e-10
                || e.root.re != 0.0
                || (e.root.im - (e.mu + d)).abs() > 0.0
                || dec.estimate.rate.abs() >= 0.02
                || !dec.converged
                || bc_abscissa != -1.0;
            (line.clone(), bad.then_some(line))
        })
        .collect();
    let failures: Vec<String> = results.iter().filter_map(|r| r.1.clone()).collect();
    let detail = results.iter().map(|r| r.0.clone()).collect::<Vec<_>>().join("; ");
    report(2, "example destabilization", &failures, &detail);
}

fn acceptance_3_shifted_root() {
    let mut failures = Vec::new();
    let mut worst = (0.0f64, 0.0f64);
    for (rho, mu) in [(-0.5, 1.0), (0.0, 2.0), (-1.0, 1.5)] {
        for tau in [0.01, 0.1, 0.5] {
            let eps = shifted_unstable_root(rho, mu, tau).unwrap();
            let residual = (mu * (-eps * tau).exp() + rho - eps).abs();
            let spec = shifted_example_spec(rho, mu, tau).unwrap();
            let root = refine_root(&spec, Complex64::new(eps + 1e-3, PI / tau));
            let re_err = root.as_ref().map(|r| (r.lambda.re - eps).abs()).unwrap_or(f64::INFINITY);
            worst = (worst.0.max(residual), worst.1.max(re_err));
            if !(eps > 0.0) || residual >= 1e-10 || re_err >= 1e-8 {
                failures.push(format!("rho={rho} mu={mu} tau={tau}: eps={eps} residual={residual:.1e} re_err={re_err:.1e}"));
            }
        }
    }
    report(3, "shifted-root theorem", &failures, &format!("9 cases, max residual {:.1e}, max |Re λ − ε| {:.1e}", worst.0, worst.1));
}

fn strip_window(spec: &SystemSpec, half_width: f64) -> Window {
    let y = spec.b().norm() + spec.phi().norm_bound(-half_width) + 1.0;
    Window::new(-half_width, half_width, -y, y).unwrap()
}

fn acceptance_4_criterion_soundness() {
    let start = Instant::now();
    let outcomes: Vec<(usize, usize, Vec<String>)> = (0..200u64)
        .into_par_iter()
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let spec = common::random_spec(&mut rng);
            let mut fails = Vec::new();
            let (mut hyp, mut stab) = (0, 0);
            if let Ok(rep) = hyperbolicity_test(&spec) {
                if rep.passed() {
                    hyp += 1;
                    let m = rep.constants.margin.expect("passing test reports a margin");
                    let opts = RootOptions { window: Some(strip_window(&spec, 0.999 * m)), self_check: false, ..RootOptions::default() };
                    match spectral_abscissa(&spec, &opts) {
                        Ok(rs) if rs.roots.is_empty() && rs.winding.is_none_or(|w| w.abs() < 0.5) => {}
                        Ok(rs) => fails.push(format!("seed {seed}: root {:?} inside hyperbolic strip {m}", rs.rightmost().map(|r| r.lambda))),
                        Err(e) => fails.push(format!("seed {seed}: strip search failed: {e}")),
                    }
                }
            }
            let ab = matrix_abscissa(spec.b().as_mat()).unwrap();
            if ab < 0.0 {
                let alpha = ab * rng.gen_range(0.0..0.8);
                if let Ok(rep) = stability_test(&spec, alpha) {
                    if rep.passed() {
                        stab += 1;
                        match spectral_abscissa(&spec, &RootOptions::default()) {
                            Ok(rs) if rs.abscissa.is_some_and(|a| a < alpha) => {}
                            Ok(rs) => fails.push(format!("seed {seed}: abscissa {:?} not below alpha {alpha}", rs.abscissa)),
                            Err(e) => fails.push(format!("seed {seed}: root search failed: {e}")),
                        }
                    }
                }
            }
            (hyp, stab, fails)
        })
        .collect();
    let hyp: usize = outcomes.iter().map(|o| o.0).sum();
    let stab: usize = outcomes.iter().map(|o| o.1).sum();
    let mut failures: Vec<String> = outcomes.into_iter().flat_map(|o| o.2).collect();
    let elapsed = start.elapsed();
    if elapsed >= Duration::from_secs(600) {
        failures.push(format!("runtime {elapsed:?}"));
    }
    report(
        4,
        "criterion soundness",
        &failures,
        &format!("200 specs, {hyp} hyperbolicity passes, {stab} stability passes confirmed, {:.1}s", elapsed.as_secs_f64()),
    );
}

fn acceptance_5_margin_soundness() {
    let outcomes: Vec<(f64, Vec<String>)> = (0..50u64)
        .into_par_iter()
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(5000 + seed);
            let (b, c) = common::random_stable_pair(&mut rng);
            let m = match robustness_margin(&b, &c, MarginMode::Stable) {
                Ok(m) => m,
                Err(e) => return (0.0, vec![format!("seed {seed}: margin failed: {e}")]),
            };
            let mut fails = Vec::new();
            if !(m.kappa > 0.0) {
                fails.push(format!("seed {seed}: kappa = {}", m.kappa));
            }
            for f in [0.25, 0.5, 0.9] {
                let tau = f * m.kappa;
                let spec = SystemSpec::feedback(b.clone(), c.clone(), tau).unwrap();
                match spectral_abscissa(&spec, &RootOptions::default()) {
                    Ok(rs) if rs.abscissa.is_some_and(|a| a < 0.0) => {}
                    Ok(rs) => fails.push(format!("seed {seed}: tau={tau:.3e} abscissa {:?}", rs.abscissa)),
                    Err(e) => fails.push(format!("seed {seed}: tau={tau:.3e}: {e}")),
                }
            }
            (m.kappa, fails)
        })
        .collect();
    let mut failures: Vec<String> = outcomes.iter().flat_map(|o| o.1.clone()).collect();
    let kmin = outcomes.iter().map(|o| o.0).fold(f64::INFINITY, f64::min);
    let kmax = outcomes.iter().map(|o| o.0).fold(0.0, f64::max);
    let m = robustness_margin(&scalar(0.0), &scalar(-1.0), MarginMode::Stable).unwrap();
    let cd = critical_delay(&scalar(0.0), &scalar(-1.0), 0.5 * m.kappa, 4.0).unwrap();
    let ratio = cd.tau / m.kappa;
    if !(m.kappa <= 0.5 && 0.5 < cd.tau && (cd.tau - PI / 2.0).abs() < 1e-6) {
        failures.push(format!("B=0, C=-1: kappa={} tau*={}", m.kappa, cd.tau));
    }
    report(
        5,
        "robustness-margin soundness",
        &failures,
        &format!(
            "50 pairs x 3 delays, kappa in [{kmin:.3e}, {kmax:.3e}]; B=0,C=-1: kappa={:.6} tau*={:.9} ratio tau*/kappa={ratio:.3}",
            m.kappa, cd.tau
        ),
    );
}

fn acceptance_6_oracle_triangle() {
    let mut specs = Vec::new();
    let mut seed = 0u64;
    while specs.len() < 30 {
        let mut rng = ChaCha8Rng::seed_from_u64(6000 + seed);
        seed += 1;
        let spec = common::random_spec(&mut rng);
        if let Ok(rs) = spectral_abscissa(&spec, &RootOptions::default()) {
            if rs.certified && rs.abscissa.is_some_and(|a| a < 0.0) {
                specs.push((seed, spec, rs));
            }
        }
    }
    let outcomes: Vec<(f64, Vec<String>)> = specs
        .par_iter()
        .map(|(seed, spec, rs)| {
            let a = rs.abscissa.unwrap();
            let mut fails = Vec::new();
            for r in &rs.roots {
                let m = in_resolvent_set(spec, r.lambda);
                if m.in_resolvent_set || m.margin >= 1e-8 {
                    fails.push(format!("seed {seed}: root {} has sigma_min {:.1e}", r.lambda, m.margin));
                }
            }
            let hist = random_history(spec.max_delay(), spec.n(), *seed).unwrap();
            let h = default_step(spec).unwrap();
            match estimate_decay(spec, &hist, default_horizon(Some(a)), h) {
                Ok(d) => {
                    let err = (d.estimate.rate - a).abs();
                    if err >= 0.02f64.max(0.05 * a.abs()) || !d.converged {
                        fails.push(format!("seed {seed}: rate {:.5} vs abscissa {a:.5} (converged {})", d.estimate.rate, d.converged));
                    }
                    (err, fails)
                }
                Err(e) => {
                    fails.push(format!("seed {seed}: simulation failed: {e}"));
                    (f64::INFINITY, fails)
                }
            }
        })
        .collect();
    let worst = outcomes.iter().map(|o| o.0).fold(0.0, f64::max);
    let failures: Vec<String> = outcomes.into_iter().flat_map(|o| o.1).collect();
    let roots: usize = specs.iter().map(|s| s.2.roots.len()).sum();
    report(6, "oracle triangle", &failures, &format!("30 specs, {roots} roots singular, max |rate − abscissa| {worst:.2e}"));
}

fn acceptance_7_transformation_exactness() {
    let outcomes: Vec<(usize, usize, Vec<String>)> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(7000 + seed);
            let n = rng.gen_range(1..=3usize);
            let b = common::random_matrix(&mut rng, n, 0.8, false) - identity(n) * Complex64::new(rng.gen_range(0.0..1.0), 0.0);
            let c = common::random_matrix(&mut rng, n, 0.6, false);
            let tau = rng.gen_range(0.1..1.5);
            let spec = SystemSpec::feedback(ComplexMatrix::new(b).unwrap(), ComplexMatrix::new(c).unwrap(), tau).unwrap();
            let rw = rewritten_system(&spec).unwrap();
            let mut fails = Vec::new();
            let direct = match spectral_abscissa(&spec, &RootOptions::default()) {
                Ok(d) => d,
                Err(e) => return (0, 0, vec![format!("seed {seed}: direct roots: {e}")]),
            };
            let rewritten = match spectral_abscissa(&rw, &RootOptions { window: Some(direct.window), ..RootOptions::default() }) {
                Ok(r) => r,
                Err(e) => return (0, 0, vec![format!("seed {seed}: rewritten roots: {e}")]),
            };
            for r in &direct.roots {
                let near = rewritten.roots.iter().map(|q| (q.lambda - r.lambda).norm()).fold(f64::INFINITY, f64::min);
                if near >= 1e-8 {
                    fails.push(format!("seed {seed}: direct root {} missing from rewritten set (distance {near:.1e})", r.lambda));
                }
            }
            let mut extra = 0;
            for q in &rewritten.roots {
                let cm = char_matrix(&spec, q.lambda);
                if cm.sigma_min < 1e-8 * cm.scale.max(1.0) {
                    continue;
                }
                extra += q.multiplicity;
                let e = rewriting_factor(&spec, q.lambda).unwrap();
                let (emax, emin) = singular_extremes(&e);
                let scale = q.lambda.norm() + spec.b().norm() + 2.0 * spectral_norm(spec.feedback_data().unwrap().c.as_mat()) * semigroup_bound(spec.b().as_mat()) + emax;
                if emin >= 1e-8 * scale {
                    fails.push(format!("seed {seed}: rewritten root {} is neither a direct nor a rewriting-factor root", q.lambda));
                }
            }
            (direct.total_multiplicity(), extra, fails)
        })
        .collect();
    let matched: usize = outcomes.iter().map(|o| o.0).sum();
    let extra: usize = outcomes.iter().map(|o| o.1).sum();
    let failures: Vec<String> = outcomes.into_iter().flat_map(|o| o.2).collect();
    report(
        7,
        "transformation exactness",
        &failures,
        &format!("20 cases: {matched} direct roots reproduced within 1e-8; {extra} additional rewritten roots, all zeros of the rewriting factor"),
    );
}

/// `R(iω, B + C)`.
fn resolvent(b: &CMat, c: &CMat, omega: f64) -> CMat {
    let n = b.nrows();
    inverse(&(identity(n) * Complex64::new(0.0, omega) - b - c)).unwrap()
}

fn acceptance_8_inequalities() {
    let mut failures = Vec::new();
    let mut checks = 0usize;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(8000 + seed);
        let (b, c) = common::random_stable_pair(&mut rng);
        let (bm, cm) = (b.as_mat(), c.as_mat());
        let k = semigroup_bound(bm);
        let nc = spectral_norm(cm);
        let lam = matrix_abscissa(bm).unwrap().max(0.0) + 1.0;
        let n = b.dim();
        let r_lam = spectral_norm(&inverse(&(identity(n) * Complex64::new(lam, 0.0) - bm)).unwrap());
        for _ in 0..10 {
            let omega = rng.gen_range(-20.0..20.0);
            let tau = [0.01, 0.1, 0.5, 1.0][rng.gen_range(0..4)];
            let r = resolvent(bm, cm, omega);
            let (i1, i2) = i1_i2_norms(bm, cm, tau, omega).unwrap();
            let i2_bound = tau * nc * nc * k * spectral_norm(&r);
            let lb = spectral_norm(&((identity(n) * Complex64::new(lam, 0.0) - bm) * &r));
            let i1_bound = tau * k * (r_lam * lam + 1.0) * nc * lb;
            checks += 2;
            if i2 > i2_bound * (1.0 + 1e-10) {
                failures.push(format!("seed {seed}: |I2|={i2:.6e} > {i2_bound:.6e} (omega={omega:.3}, tau={tau})"));
            }
            if i1 > i1_bound * (1.0 + 1e-10) {
                failures.push(format!("seed {seed}: |I1|={i1:.6e} > {i1_bound:.6e} (omega={omega:.3}, tau={tau})"));
            }
            let direct = spectral_norm(&i1_matrix(bm, cm, tau, omega).unwrap());
            if (direct - i1).abs() > 1e-12 * (1.0 + i1) {
                failures.push(format!("seed {seed}: inconsistent I1 evaluation"));
            }
        }
        let _ = expm(bm);
    }
    for seed in 0..12u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(8500 + seed);
        let spec = common::random_point_spec(&mut rng);
        let base = a_n_sequence(&spec, 0.0, 6).unwrap();
        if base.a_n[0] != 1.0 || base.a_n_sampled[0] != 1.0 {
            failures.push(format!("seed {seed}: a_0 != 1"));
        }
        for m in 1..=3 {
            for j in 1..=3 {
                checks += 1;
                if base.a_n_sampled[m + j] > base.a_n[m] * base.a_n[j] * (1.0 + 1e-8) {
                    failures.push(format!("seed {seed}: a_{} = {} > a_{m} a_{j}", m + j, base.a_n_sampled[m + j]));
                }
            }
        }
        for alpha in [0.1, 0.5] {
            let s = a_n_sequence(&spec, alpha, 6).unwrap();
            for nn in 0..=6 {
                checks += 1;
                if s.a_n_sampled[nn] > base.a_n[nn] * (1.0 + 1e-8) {
                    failures.push(format!("seed {seed}: a_{nn}({alpha}) = {} > a_{nn}(0) = {}", s.a_n_sampled[nn], base.a_n[nn]));
                }
            }
        }
        if let Ok(rep) = hyperbolicity_test(&spec) {
            if rep.verdict == Verdict::Hyperbolic && base.a_n[1] < 1.0 && base.a.is_none() {
                failures.push(format!("seed {seed}: first-power pass without series pass"));
            }
        }
    }
    report(8, "bound inequalities", &failures, &format!("{checks} inequality checks across (omega, tau, alpha) samples"));
}

fn main() {
    let criteria: [(u32, fn()); 8] = [
        (1, acceptance_1_scalar_sharp_boundary),
        (2, acceptance_2_example_destabilization),
        (3, acceptance_3_shifted_root),
        (4, acceptance_4_criterion_soundness),
        (5, acceptance_5_margin_soundness),
        (6, acceptance_6_oracle_triangle),
        (7, acceptance_7_transformation_exactness),
        (8, acceptance_8_inequalities),
    ];
    let failed: Vec<u32> = criteria.iter().filter(|(_, f)| std::panic::catch_unwind(f).is_err()).map(|(id, _)| *id).collect();
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed.len(), criteria.len());
    if !failed.is_empty() {
        println!("acceptance: failed {failed:?}");
        std::process::exit(1);
    }
}
