//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use formation_core::attack::{corrupt_broadcasts, SelectorMask, SpoofAttack};
use formation_core::detection::{Detector, ThresholdProfile};
use formation_core::dynamics::{closed_loop_matrix, honest_aggregates, nominal_step, SimState};
use formation_core::experiment::{
    FormationConfig, InitBox, MethodReport, Scenario, ScenarioConfig,
};
use formation_core::mitigation::{HallucinationParams, MitigationMethod};
use formation_core::stability::{
    certify, empirical_decrease_check, error_system, lyapunov_residual, solve_discrete_lyapunov,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Criterion<'a> = Box<dyn FnOnce() -> Outcome + 'a>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn spoofed() -> Scenario {
    Scenario::new(ScenarioConfig::spoofed_pentagon()).expect("reference scenario")
}

fn report(reports: &[MethodReport], method: MitigationMethod) -> &MethodReport {
    reports.iter().find(|r| r.method == method).expect("method present")
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn all_four() -> Vec<MethodReport> {
    spoofed()
        .monte_carlo(&MitigationMethod::STANDARD_SET, false)
        .expect("monte carlo")
}

fn c1_no_mitigation_steady_state() -> Outcome {
    let (reports, elapsed) = timed(|| spoofed().monte_carlo(&[MitigationMethod::None], false).unwrap());
    let r = &reports[0];
    let vinf = r.vinf.as_ref().unwrap().mean;
    let pass = (vinf - 1.44).abs() <= 1e-3 && r.diverged == 0 && elapsed < Duration::from_secs(1);
    outcome(
        pass,
        format!("mean Vinf = {vinf:.6} (1.44 ± 1e-3), runtime {:.3}s (< 1s)", elapsed.as_secs_f64()),
    )
}

fn c2_huber_steady_state(reports: &[MethodReport]) -> Outcome {
    let vinf = report(reports, MitigationMethod::Huber).vinf.as_ref().unwrap().mean;
    outcome((vinf - 0.125).abs() <= 1e-3, format!("mean Vinf = {vinf:.6} (0.125 ± 1e-3)"))
}

fn c3_wmsr(reports: &[MethodReport]) -> Outcome {
    let r = report(reports, MitigationMethod::Wmsr);
    let vinf = r.vinf.as_ref().unwrap().mean;
    let t1 = r.t1pct.as_ref().map_or(f64::NAN, |s| s.mean);
    let pass = vinf <= 1e-10 && r.settled == r.records.len() && (15.0..=25.0).contains(&t1);
    outcome(
        pass,
        format!("mean Vinf = {vinf:.3e} (≤ 1e-10), mean T1% = {t1:.2} over {} settled (in [15, 25])", r.settled),
    )
}

fn c4_sosh(reports: &[MethodReport]) -> Outcome {
    let r = report(reports, MitigationMethod::Sosh);
    let none = report(reports, MitigationMethod::None);
    let vinf = r.vinf.as_ref().unwrap().mean;
    let t1 = r.t1pct.as_ref().map_or(f64::NAN, |s| s.mean);
    let dominated = r
        .records
        .iter()
        .zip(&none.records)
        .filter(|(a, b)| {
            a.trial == b.trial
                && matches!((&a.metrics, &b.metrics), (Some(x), Some(y)) if x.auc < y.auc)
        })
        .count();
    let pass = vinf <= 1e-4
        && r.settled == r.records.len()
        && (6.0..=11.0).contains(&t1)
        && dominated == r.records.len();
    outcome(
        pass,
        format!(
            "mean Vinf = {vinf:.3e} (≤ 1e-4), mean T1% = {t1:.2} (in [6, 11]), AUC below no-mitigation in {dominated}/{} paired trials",
            r.records.len()
        ),
    )
}

fn c5_no_mitigation_auc(reports: &[MethodReport]) -> Outcome {
    let auc = report(reports, MitigationMethod::None).auc.as_ref().unwrap().mean;
    let (lo, hi) = (8.87 * 0.85, 8.87 * 1.15);
    outcome(
        (lo..=hi).contains(&auc),
        format!("mean AUC = {auc:.4} (8.87 ± 15% = [{lo:.4}, {hi:.4}])"),
    )
}

fn c6_nominal_settling() -> Outcome {
    let mut settle = BTreeSet::new();
    for seed in [0u64, 1, 42, 2024, u64::MAX] {
        let s = Scenario::new(ScenarioConfig {
            base_seed: seed,
            trials: 10,
            ..ScenarioConfig::default()
        })
        .unwrap();
        // methods that reduce to the plain update when nothing is flagged
        let nominal = [MitigationMethod::None, MitigationMethod::Sosh, MitigationMethod::Oracle];
        for r in &s.monte_carlo(&nominal, false).unwrap() {
            for rec in &r.records {
                settle.insert(rec.metrics.as_ref().and_then(|m| m.t1pct));
            }
        }
    }
    outcome(
        settle.len() == 1 && settle.contains(&Some(9)),
        format!("T1% values over 5 seeds × 10 trials × {{none, sosh, oracle}}: {settle:?} (exactly 9)"),
    )
}

fn reference_error_system() -> (DMatrix<f64>, formation_core::stability::ErrorSystem) {
    let s = spoofed();
    let gamma = closed_loop_matrix(&s.graph, 2, &s.params);
    let sys = error_system(&gamma, 5, 2).unwrap();
    (gamma, sys)
}

fn c7_certificate() -> Outcome {
    let (_, sys) = reference_error_system();
    let (q, alpha) = solve_discrete_lyapunov(&sys.gamma_e).unwrap();
    let stable = certify(0.3, &q, alpha);
    let unstable = certify(0.7, &q, alpha);
    let pass = (stable.lambda_max_qe - 16.0 / 7.0).abs() <= 1e-9
        && alpha == 1.0
        && (stable.threshold - 0.4375).abs() <= 1e-9
        && stable.stable
        && (stable.margin - 0.3475).abs() <= 1e-9
        && !unstable.stable;
    outcome(
        pass,
        format!(
            "λmax(Q_e) = {:.12} (16/7 ± 1e-9), α = {alpha}, threshold = {:.12}, γ=0.3 stable={} margin {:.12}, γ=0.7 stable={}",
            stable.lambda_max_qe, stable.threshold, stable.stable, stable.margin, unstable.stable
        ),
    )
}

fn c8_lyapunov_solver() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let m = rng.random_range(1..=20);
        let a = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        let rho = formation_core::eigen::spectral_radius(&a).max(1e-12);
        let target = rng.random_range(0.0..0.9);
        let g = a * (target / rho);
        let (q, alpha) = solve_discrete_lyapunov(&g).unwrap();
        worst = worst.max(lyapunov_residual(&g, &q, alpha));
    }
    let mut diag_err: f64 = 0.0;
    for _ in 0..20 {
        let m = rng.random_range(1..=20);
        let d: Vec<f64> = (0..m).map(|_| rng.random_range(-0.99..0.99)).collect();
        let (q, _) = solve_discrete_lyapunov(&DMatrix::from_diagonal(&DVector::from_vec(d.clone()))).unwrap();
        for (i, r) in d.iter().enumerate() {
            diag_err = diag_err.max((q[(i, i)] - 1.0 / (1.0 - r * r)).abs());
        }
    }
    outcome(
        worst <= 1e-8 && diag_err <= 1e-10,
        format!("worst residual over 100 random Schur matrices = {worst:.3e} (≤ 1e-8), worst diagonal error = {diag_err:.3e} (≤ 1e-10)"),
    )
}

fn c9_detection() -> Outcome {
    // residual at step 1 from a random start
    let s = spoofed();
    let attack = &s.config.attacks;
    let mut rng = s.trial_rng(0);
    let initial = s.sample_initial(&mut rng);
    let state = SimState::new(initial.clone());
    let y0 = corrupt_broadcasts(&state.states, attack, 0);
    let mut det = Detector::bootstrap(&s.graph, &y0);
    let mut aggs = honest_aggregates(&s.graph, &y0);
    aggs[2] = honest_aggregates(&s.graph, &state.states)[2].clone();
    let next = nominal_step(&state, &s.spec, &s.graph, &s.params, &aggs).unwrap();
    det.propagate(&y0, &s.spec, &s.graph, s.params.dt, None);
    let y1 = corrupt_broadcasts(&next.states, attack, 1);
    let profile = ThresholdProfile::noiseless(5, 4.0, 1e-6);
    let expected = 0.2 * 18f64.sqrt();
    let mut residual_err: f64 = 0.0;
    let mut flags_ok = true;
    for i in [0, 1, 3, 4] {
        let r = det.neighbor_residuals(i, &y1).into_iter().find(|(j, _)| *j == 2).unwrap().1;
        residual_err = residual_err.max((r - expected).abs());
        flags_ok &= det.detect(i, &y1, &profile) == &BTreeSet::from([2]);
    }
    let record = s.simulate(MitigationMethod::Sosh, &initial, &mut rng, false).unwrap();
    flags_ok &= record.first_flag == vec![None, None, Some(1), None, None];

    // false alarms under noise, no attack
    let noisy = Scenario::new(ScenarioConfig {
        steps: 10_000,
        detection: formation_core::experiment::DetectionConfig {
            noise_std: 0.01,
            kappa: 4.0,
            ..Default::default()
        },
        ..ScenarioConfig::default()
    })
    .unwrap();
    let rec = noisy.run_trial(MitigationMethod::None, 0, false).unwrap();
    let rate = rec.exceedances as f64 / rec.residual_checks as f64;
    outcome(
        flags_ok && residual_err <= 1e-6 && rate <= 0.0625,
        format!(
            "honest agents flag node 2 at k=1: {flags_ok}; residual error vs 0.84853 = {residual_err:.2e} (≤ 1e-6); false-flag rate σ=0.01 κ=4 over 1e4 steps = {:.4}% ({} / {}, ≤ 6.25%)",
            100.0 * rate,
            rec.exceedances,
            rec.residual_checks
        ),
    )
}

fn c10_empirical_decrease() -> Outcome {
    let (gamma, sys) = reference_error_system();
    let (q, alpha) = solve_discrete_lyapunov(&sys.gamma_e).unwrap();
    let params = HallucinationParams::new(0.3, 1.0).unwrap();
    match empirical_decrease_check(&sys, &gamma, &q, alpha, &SelectorMask::new([2]), &params, 2, 1000, 0.05, 10) {
        Ok(r) => outcome(
            true,
            format!(
                "1000/1000 samples decrease (‖e‖ ≤ 0.05); α = {}, r_e = {:.4}, fitted C = {:.4e}, worst V⁺/V = {:.4}",
                r.alpha, r.r_e, r.fitted_c, r.worst_ratio
            ),
        ),
        Err(e) => outcome(false, format!("{e}")),
    }
}

fn summary_text(reports: &[MethodReport]) -> String {
    let mut out = String::new();
    for r in reports {
        for rec in &r.records {
            let m = rec.metrics.as_ref();
            out.push_str(&format!(
                "{},{},{:?},{:?},{:?},{:?},{}\n",
                r.method,
                rec.trial,
                m.map(|m| m.v100),
                m.map(|m| m.vinf),
                m.map(|m| m.auc),
                m.and_then(|m| m.t1pct),
                rec.diverged()
            ));
        }
    }
    out
}

fn c11_determinism_and_invariance(reports: &[MethodReport]) -> Outcome {
    let again = summary_text(&all_four());
    let identical = again == summary_text(reports);

    let shift = [10.0, -7.0];
    let shifted = Scenario::new(ScenarioConfig {
        init_box: InitBox {
            lower: vec![-0.5 + shift[0], -0.5 + shift[1]],
            upper: vec![1.5 + shift[0], 1.5 + shift[1]],
        },
        ..ScenarioConfig::spoofed_pentagon()
    })
    .unwrap();
    let base = spoofed();
    let mut translation: f64 = 0.0;
    for method in MitigationMethod::STANDARD_SET {
        for t in 0..5 {
            let a = base.run_trial(method, t, false).unwrap();
            let b = shifted.run_trial(method, t, false).unwrap();
            for (x, y) in a.v.iter().zip(&b.v) {
                translation = translation.max((x - y).abs());
            }
        }
    }

    // relabel agents by a fixed permutation: new index perm[i] holds old agent i
    let perm = [3usize, 0, 4, 2, 1];
    let old = FormationConfig::Polygon { radius: 1.0 }.build(5).unwrap();
    let mut points = vec![Vec::new(); 5];
    for (i, &p) in perm.iter().enumerate() {
        points[p] = old.position(i).as_slice().to_vec();
    }
    let relabeled = Scenario::new(ScenarioConfig {
        formation: FormationConfig::Explicit(points),
        attacks: vec![SpoofAttack::constant(perm[2], DVector::from_vec(vec![3.0, 3.0]))],
        ..ScenarioConfig::default()
    })
    .unwrap();
    let mut relabel: f64 = 0.0;
    for method in MitigationMethod::STANDARD_SET {
        for t in 0..5 {
            let mut rng = base.trial_rng(t);
            let init = base.sample_initial(&mut rng);
            let a = base.simulate(method, &init, &mut rng.clone(), false).unwrap();
            let mut permuted = init.clone();
            for (i, &p) in perm.iter().enumerate() {
                permuted[p] = init[i].clone();
            }
            let b = relabeled.simulate(method, &permuted, &mut rng, false).unwrap();
            let (ma, mb) = (a.metrics.unwrap(), b.metrics.unwrap());
            let scale = ma.auc.abs().max(1.0);
            relabel = relabel
                .max((ma.v100 - mb.v100).abs() / scale)
                .max((ma.vinf - mb.vinf).abs() / scale)
                .max((ma.auc - mb.auc).abs() / scale);
            if ma.t1pct != mb.t1pct {
                relabel = f64::INFINITY;
            }
        }
    }
    outcome(
        identical && translation < 1e-10 && relabel < 1e-10,
        format!(
            "repeat run byte-identical: {identical}; max |ΔV[k]| under init translation = {translation:.2e} (< 1e-10); max metric change under relabeling = {relabel:.2e}"
        ),
    )
}

fn c12_runtime(suite_start: Instant) -> Outcome {
    let (_, elapsed) = timed(all_four);
    let suite = suite_start.elapsed();
    outcome(
        elapsed < Duration::from_secs(10) && suite < Duration::from_secs(60),
        format!(
            "4 methods × 30 trials × 200 steps in {:.3}s (< 10s); suite so far {:.3}s (< 60s)",
            elapsed.as_secs_f64(),
            suite.as_secs_f64()
        ),
    )
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        outcome(false, format!("panicked: {msg}"))
    })
}

fn main() -> ExitCode {
    let start = Instant::now();
    let reports = all_four();
    let criteria: Vec<(&str, Criterion<'_>)> = vec![
        ("no-mitigation steady state", Box::new(c1_no_mitigation_steady_state)),
        ("Huber steady state", Box::new(|| c2_huber_steady_state(&reports))),
        ("W-MSR", Box::new(|| c3_wmsr(&reports))),
        ("SOSH (γ = 0.3)", Box::new(|| c4_sosh(&reports))),
        ("no-mitigation AUC", Box::new(|| c5_no_mitigation_auc(&reports))),
        ("nominal settling", Box::new(c6_nominal_settling)),
        ("certificate", Box::new(c7_certificate)),
        ("Lyapunov solver", Box::new(c8_lyapunov_solver)),
        ("detection", Box::new(c9_detection)),
        ("empirical Lyapunov decrease", Box::new(c10_empirical_decrease)),
        ("determinism & invariances", Box::new(|| c11_determinism_and_invariance(&reports))),
        ("runtime budget", Box::new(move || c12_runtime(start))),
    ];
    let mut failed = 0;
    for (idx, (name, check)) in criteria.into_iter().enumerate() {
        let o = guarded(check);
        if !o.pass {
            failed += 1;
        }
        println!(
            "[{}] {:>2}. {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            idx + 1,
            o.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", 12 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
