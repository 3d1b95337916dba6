//! End-to-end estimator runs: bound monitors, relaxed-vs-exact pairing, and
//! the minimum property of returned window solutions.

use mhe_core::certify::{derive_betas, diagnostic_alphas, domination_alphas};
use mhe_core::cost;
use mhe_core::dual::{dist, dist_sq};
use mhe_core::mhe::{
    compute_lambda, monitor_maxform_bound, monitor_exponential_bound, truth_decision, CostSpec,
    ErrorScale, Estimator, RhoFunction, StepRecord,
};
use mhe_core::optimize::StopMode;
use mhe_core::systems::{self, fig1_scenarios, fig2_scenarios, Scenario};
use mhe_core::{SystemModel, Trajectory};

fn run_scenario(
    scenario: &Scenario,
    run: u64,
    stop_mode: Option<StopMode>,
) -> (SystemModel<systems::Builtin>, Trajectory, Vec<StepRecord>) {
    let model = scenario.validate().unwrap();
    let (w, v) = scenario.draw_noise(run);
    let inputs = scenario.inputs();
    let tr = model
        .simulate(&scenario.x0, &inputs, &w, &v, scenario.t_max)
        .unwrap();
    let mut cfg = scenario.estimator_config(run);
    if let Some(mode) = stop_mode {
        cfg.stop_mode = mode;
    }
    let mut est = Estimator::new(&model, cfg).unwrap();
    let mut records = Vec::with_capacity(scenario.t_max);
    for t in 0..scenario.t_max {
        records.push(est.step(&tr.outputs[t], &tr.inputs[t]).unwrap());
    }
    (model, tr, records)
}

fn estimates_with_prior(prior: &[f64], records: &[StepRecord]) -> Vec<Vec<f64>> {
    let mut estimates = Vec::with_capacity(records.len() + 1);
    estimates.push(prior.to_vec());
    estimates.extend(records.iter().map(|r| r.estimate.clone()));
    estimates
}

#[test]
fn noise_free_quadratic_run_satisfies_practical_bound_and_converges() {
    let scenarios = fig1_scenarios(1);
    let s = &scenarios[0];
    let (_, tr, records) = run_scenario(s, 0, None);
    let split = compute_lambda(2.0, 7.0 / 16.0, 3, 0.99).unwrap();
    let report = monitor_exponential_bound(
        &tr.states,
        &estimates_with_prior(&s.xbar0, &records),
        &tr.w,
        &tr.v,
        2.0,
        70.0 / 3.0,
        2357.0 / 48.0,
        split,
        s.estimator.epsilon,
    );
    assert_eq!(report.violations, 0);
    // Terminal squared error under the practical floor.
    let terminal = dist_sq(&tr.states[s.t_max], &records.last().unwrap().estimate);
    assert!(terminal <= 2e-4, "terminal err_sq = {terminal:e}");
    // Relaxed stopping met its tolerance at every step.
    for rec in &records {
        assert!(!rec.report.capped);
        assert!(rec.report.grad_norm <= rec.eps_hat);
    }
}

#[test]
fn noisy_quadratic_run_satisfies_practical_bound() {
    let scenarios = fig1_scenarios(5);
    let s = &scenarios[1];
    let (_, tr, records) = run_scenario(s, 3, None);
    let split = compute_lambda(2.0, 7.0 / 16.0, 3, 0.99).unwrap();
    let report = monitor_exponential_bound(
        &tr.states,
        &estimates_with_prior(&s.xbar0, &records),
        &tr.w,
        &tr.v,
        2.0,
        70.0 / 3.0,
        2357.0 / 48.0,
        split,
        s.estimator.epsilon,
    );
    assert_eq!(report.violations, 0, "rows: {:?}", report.rows.iter().filter(|r| !r.satisfied).collect::<Vec<_>>());
}

#[test]
fn relaxed_solves_use_fewer_iterations_than_exact_on_the_same_windows() {
    // Drive the relaxed estimator; re-solve each window with the exact rule
    // from the same warm start by replaying the same trajectory on an
    // exact-mode estimator fed with the relaxed estimator's predictions.
    let scenarios = fig1_scenarios(9);
    let s = &scenarios[1];
    let model = s.validate().unwrap();
    let (w, v) = s.draw_noise(0);
    let inputs = s.inputs();
    let tr = model.simulate(&s.x0, &inputs, &w, &v, s.t_max).unwrap();

    let relaxed_cfg = s.estimator_config(0);
    let mut exact_cfg = relaxed_cfg.clone();
    exact_cfg.stop_mode = StopMode::Exact;

    let mut relaxed = Estimator::new(&model, relaxed_cfg).unwrap();
    let mut total_relaxed = 0usize;
    let mut total_exact = 0usize;
    for t in 0..s.t_max {
        let rec = relaxed.step(&tr.outputs[t], &tr.inputs[t]).unwrap();
        total_relaxed += rec.report.iterations;
        // Same window problem, exact rule, same warm start.
        let spec = match &s.estimator.cost {
            CostSpec::Quadratic(q) => *q,
            _ => unreachable!(),
        };
        let mut z0 = rec.window.prior.clone();
        z0.resize(3 + 3 * rec.window.len, 0.0);
        let stop = mhe_core::StopRule::exact(exact_cfg.max_iters);
        let win = rec.window.clone();
        let (_, exact_report) = mhe_core::optimize::descend(
            |z| cost::eval_quadratic(&model, &spec, &win, z),
            |z| cost::grad_quadratic(&model, &spec, &win, z),
            &z0,
            &mhe_core::AxisBox::unbounded(z0.len()),
            &stop,
        )
        .unwrap();
        assert!(
            rec.report.iterations <= exact_report.iterations,
            "t={}: relaxed {} > exact {}",
            rec.t,
            rec.report.iterations,
            exact_report.iterations
        );
        total_exact += exact_report.iterations;
    }
    assert!(total_relaxed < total_exact);
}

#[test]
fn maxform_runs_satisfy_the_minimum_property() {
    for (scenarios, idx, run) in [
        (fig2_scenarios(11), 1, 0u64), // example2, window 3, noisy
        (fig1_scenarios(13), 2, 0u64), // example1, window 5, noise-free
    ] {
        let s = &scenarios[idx];
        let (model, tr, records) = run_scenario(s, run, None);
        let spec = match &s.estimator.cost {
            CostSpec::MaxForm(mf) => mf.clone(),
            _ => unreachable!(),
        };
        for rec in &records {
            let truth = truth_decision(&model, &tr, &rec.window, false).flatten();
            let cost_truth = cost::eval_maxform(&model, &spec, &rec.window, &truth);
            let z_min = rec.minimizer.flatten();
            let slack = rec.eps_hat * dist(&truth, &z_min) + 1e-9;
            assert!(
                rec.cost_at_minimizer <= cost_truth + slack,
                "{} t={}: J(min) {} > J(truth) {} + slack {}",
                s.name,
                rec.t,
                rec.cost_at_minimizer,
                cost_truth,
                slack
            );
        }
    }
}

#[test]
fn example1_maxform_bound_monitor_reports_no_violations_noise_free() {
    let scenarios = fig1_scenarios(17);
    let s = &scenarios[2];
    let (_, tr, records) = run_scenario(s, 0, None);
    let betas = derive_betas(&systems::example1_lyapunov(), false).unwrap();
    let alphas = domination_alphas(&betas, 5).unwrap();
    let rho_x = RhoFunction {
        beta: betas.beta_x,
        alpha: alphas.alpha_x,
    };
    let rho_w = RhoFunction {
        beta: betas.beta_w,
        alpha: alphas.alpha_w,
    };
    let rho_v = RhoFunction {
        beta: betas.beta_v,
        alpha: alphas.alpha_v,
    };
    let report = monitor_maxform_bound(
        &tr.states,
        &estimates_with_prior(&s.xbar0, &records),
        &tr.w,
        &tr.v,
        &rho_x,
        &rho_w,
        &rho_v,
        ErrorScale::Direct,
        alphas.c,
    );
    assert_eq!(report.violations, 0);
}

#[test]
fn example2_maxform_diagnostic_monitor_runs() {
    let scenarios = fig2_scenarios(19);
    let s = &scenarios[3];
    let (_, tr, records) = run_scenario(s, 0, None);
    let cert = systems::example2_certificate();
    let spec = cert.lyapunov_spec().unwrap();
    let betas = derive_betas(&spec, true).unwrap();
    let alphas = diagnostic_alphas(&betas);
    let c1 = match cert {
        mhe_core::certify::Certificate::Uioss { c1, .. } => c1,
        _ => unreachable!(),
    };
    let report = monitor_maxform_bound(
        &tr.states,
        &estimates_with_prior(&s.xbar0, &records),
        &tr.w,
        &tr.v,
        &RhoFunction {
            beta: betas.beta_x,
            alpha: alphas.alpha_x,
        },
        &RhoFunction {
            beta: betas.beta_w,
            alpha: alphas.alpha_w,
        },
        &RhoFunction {
            beta: betas.beta_v,
            alpha: alphas.alpha_v,
        },
        ErrorScale::LogQuad { c1 },
        alphas.c,
    );
    // Diagnostic only: violations are recorded, not fatal.
    assert_eq!(report.rows.len(), s.t_max + 1);
}

#[test]
fn fig2_noise_free_estimator_converges_by_a_factor_of_ten() {
    for idx in [0usize, 2] {
        let scenarios = fig2_scenarios(23);
        let s = &scenarios[idx];
        let (_, tr, records) = run_scenario(s, 0, None);
        let initial = dist(&s.x0, &s.xbar0);
        let terminal = dist(&tr.states[s.t_max], &records.last().unwrap().estimate);
        assert!(
            terminal <= initial / 10.0,
            "{}: terminal {terminal} vs initial {initial}",
            s.name
        );
    }
}
