//! Subcommand implementations. Exit-code policy: parse/config failures exit 1,
//! violated guaranteed bounds (quadratic estimators) exit 2, bench assertion
//! failures exit 3. Diagnostic (max-form) bound violations only warn.

use std::path::Path;

use mhe_core::certify::{
    certificate_search, check_dissipation, check_domination_conditions, derive_betas,
    min_window_sqrt_exact, sampled_sup_ratio, select_parameters_exact,
    select_parameters_relaxed, domination_alphas, Certificate, ComparisonFn, Ratio, RatioConstants,
};
use mhe_core::cost;
use mhe_core::mhe::CostSpec;
use mhe_core::model::AxisBox;
use mhe_core::optimize::{convexity_falsifier, descend, ConvexityVerdict, StopRule};
use mhe_core::systems::{self, fig1_scenarios, fig2_scenarios, Scenario};
use mhe_core::Window;
use serde_json::json;

use crate::artifacts::{self, format_float, write_run_artifacts, Summary};
use crate::config::parse_scenario;
use crate::run::{execute_run, execute_runs};

pub struct RunFlags {
    pub seed: Option<u64>,
    pub out: std::path::PathBuf,
    pub svg: bool,
    pub runs: u64,
}

fn load_scenario(config_path: &Path, seed: Option<u64>) -> Result<Scenario, String> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| format!("cannot read {}: {e}", config_path.display()))?;
    let cfg = parse_scenario(&text).map_err(|e| e.to_string())?;
    let mut scenario = cfg.to_scenario().map_err(|e| e.to_string())?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    Ok(scenario)
}

/// `estimate`: run a scenario config end to end, write artifacts, and apply
/// the exit-code policy.
pub fn cmd_estimate(config_path: &Path, flags: &RunFlags) -> Result<i32, String> {
    let scenario = load_scenario(config_path, flags.seed)?;
    run_scenarios(std::slice::from_ref(&scenario), flags)
}

fn run_scenarios(scenarios: &[Scenario], flags: &RunFlags) -> Result<i32, String> {
    let mut exit = 0;
    for scenario in scenarios {
        let results = execute_runs(scenario, flags.runs).map_err(|e| e.to_string())?;
        for result in &results {
            write_run_artifacts(result, &flags.out, flags.svg)
                .map_err(|e| format!("cannot write artifacts: {e}"))?;
            let summary = Summary::from_run(result);
            println!(
                "{} run {}: max err_sq {}, bound violations {}, min-property violations {}, iterations {}",
                summary.name,
                summary.run,
                format_float(summary.max_err_sq),
                summary.bound_violations,
                summary.min_property_violations,
                summary.total_iterations,
            );
            if summary.bound_violations > 0 {
                if result.quadratic {
                    eprintln!(
                        "error: {}: guaranteed bound violated at {} steps",
                        summary.name, summary.bound_violations
                    );
                    exit = 2;
                } else {
                    eprintln!(
                        "warning: {}: diagnostic bound exceeded at {} steps (approximate minimax solve)",
                        summary.name, summary.bound_violations
                    );
                }
            }
        }
    }
    Ok(exit)
}

/// `reproduce-fig1` / `reproduce-fig2`: the built-in scenario sets.
pub fn cmd_reproduce(which: u8, flags: &RunFlags) -> Result<i32, String> {
    let seed = flags.seed.unwrap_or(1);
    let scenarios = match which {
        1 => fig1_scenarios(seed),
        _ => fig2_scenarios(seed),
    };
    run_scenarios(&scenarios, flags)
}

fn ratio_json(r: Ratio) -> serde_json::Value {
    json!({
        "fraction": format!("{}/{}", r.num(), r.den()),
        "value": r.to_f64(),
    })
}

fn kl_json(k: &mhe_core::cost::KlFunction) -> serde_json::Value {
    json!({ "kappa": k.kappa, "q": k.q, "eta_b": k.eta })
}

/// `certify`: detectability checks and parameter synthesis for a registered
/// model, printed as a JSON report.
pub fn cmd_certify(model_name: &str, samples: usize, seed: u64) -> Result<i32, String> {
    match model_name {
        "example1" => cmd_certify_example1(samples, seed),
        "example2" => cmd_certify_example2(samples, seed),
        other => Err(format!(
            "unknown model {other:?}; registry: {:?}",
            systems::MODEL_NAMES
        )),
    }
}

fn cmd_certify_example1(samples: usize, seed: u64) -> Result<i32, String> {
    let model = systems::build_example1();
    let spec = systems::example1_lyapunov();
    let domain = systems::example1_dissipation_domain();
    let dissipation = check_dissipation(&model, &spec, &domain, samples, seed);

    // Control: a deliberately tightened decrease rate must be falsified.
    let mut mutated = spec.clone();
    mutated.alpha3 = ComparisonFn::power(15.0 / 16.0, 2.0);
    let mutation = check_dissipation(&model, &mutated, &domain, samples, seed);

    let betas = derive_betas(&spec, false).map_err(|e| e.to_string())?;
    let n_min_maxform =
        min_window_sqrt_exact(Ratio::new(23, 32), Ratio::int(2)).map_err(|e| e.to_string())?;
    let pass_at_n_min = domination_alphas(&betas, n_min_maxform)
        .map(|alphas| check_domination_conditions(&betas, &alphas, n_min_maxform).pass)
        .unwrap_or(false);
    let fails_below = domination_alphas(&betas, n_min_maxform - 1).is_err();

    let (c_x, c_v, c_w, eta) = (
        Ratio::int(1),
        Ratio::new(140, 3),
        Ratio::new(146, 3),
        Ratio::new(7, 16),
    );
    let relaxed = select_parameters_relaxed(c_x, c_v, c_w, eta).map_err(|e| e.to_string())?;
    let exact = select_parameters_exact(c_x, c_v, c_w, eta).map_err(|e| e.to_string())?;

    let convexity = example1_convexity_verdicts(seed);

    let report = json!({
        "model": "example1",
        "dissipation": {
            "samples": dissipation.samples,
            "max_residual": dissipation.max_residual,
            "passes": dissipation.passes(),
            "worst_point": dissipation.worst_point,
        },
        "mutation_control": {
            "decrease_rate": "1/16",
            "max_residual": mutation.max_residual,
            "violation_found": mutation.max_residual > 0.0,
        },
        "kl_penalties": {
            "beta_x": kl_json(&betas.beta_x),
            "beta_w": kl_json(&betas.beta_w),
            "beta_y": kl_json(&betas.beta_y),
            "beta_v": kl_json(&betas.beta_v),
            "sigma_slope": betas.sigma_slope,
        },
        "window_conditions": {
            "n_min": n_min_maxform,
            "pass_at_n_min": pass_at_n_min,
            "fails_below_n_min": fails_below,
        },
        "cost_parameters": {
            "relaxed_stopping": {
                "mu": ratio_json(relaxed.mu),
                "nu": ratio_json(relaxed.nu),
                "omega": ratio_json(relaxed.omega),
                "n_min": relaxed.n_min,
            },
            "exact_stopping": {
                "mu": ratio_json(exact.mu),
                "nu": ratio_json(exact.nu),
                "omega": ratio_json(exact.omega),
                "n_min": exact.n_min,
            },
        },
        "convexity": convexity,
    });
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    let ok =
        dissipation.passes() && mutation.max_residual > 0.0 && pass_at_n_min && fails_below;
    Ok(if ok { 0 } else { 2 })
}

fn example1_convexity_verdicts(seed: u64) -> serde_json::Value {
    let model = systems::build_example1();
    let spec = systems::example1_quadratic(3);
    let len = 3;
    let inputs: Vec<Vec<f64>> = (0..len).map(|t| vec![(0.2 * t as f64).sin()]).collect();
    let zeros_w = vec![vec![0.0; 3]; len];
    let zeros_v = vec![vec![0.0; 1]; len];
    let tr = model
        .simulate(&[2.0, 2.0, 2.0], &inputs, &zeros_w, &zeros_v, len)
        .unwrap();
    let win = Window {
        len,
        prior: vec![-2.0, -2.0, -2.0],
        measurements: tr.outputs.clone(),
        inputs,
        time: len,
    };
    let dim = 3 + 3 * len;
    let verdict_json = |v: &ConvexityVerdict| match v {
        ConvexityVerdict::Witness { gap, tau, .. } => {
            json!({ "witness_found": true, "gap": gap, "tau": tau })
        }
        ConvexityVerdict::NoWitnessFound { samples } => {
            json!({ "witness_found": false, "samples": samples })
        }
    };
    let wide = convexity_falsifier(
        |z| cost::eval_quadratic(&model, &spec, &win, z),
        &AxisBox::uniform(dim, -2.5, 2.5),
        100_000,
        seed,
    );
    let mut center = tr.states[0].clone();
    center.resize(dim, 0.0);
    let local_box = AxisBox::new(
        center.iter().map(|c| c - 0.25).collect(),
        center.iter().map(|c| c + 0.25).collect(),
    )
    .unwrap();
    let local = convexity_falsifier(
        |z| cost::eval_quadratic(&model, &spec, &win, z),
        &local_box,
        100_000,
        seed,
    );
    json!({
        "note": "sampling falsification, not a proof",
        "wide_operating_box": verdict_json(&wide),
        "true_trajectory_neighbourhood": verdict_json(&local),
    })
}

fn cmd_certify_example2(samples: usize, seed: u64) -> Result<i32, String> {
    let model = systems::build_example2();
    let cert = systems::example2_certificate();
    let (c0, constants) = match cert {
        Certificate::Uioss {
            c0,
            c1,
            c_w,
            c_y,
            c_v,
        } => (c0, RatioConstants { c1, c_w, c_y, c_v }),
        _ => unreachable!(),
    };
    let (sup, at) = sampled_sup_ratio(&model, &constants, samples, seed);
    let within = sup <= c0 + 0.05 && sup < 1.0;

    let spec = cert.lyapunov_spec().unwrap();
    let betas = derive_betas(&spec, true).map_err(|e| e.to_string())?;

    let fresh = certificate_search(&model, 6, seed);
    let search_json = match &fresh {
        Ok(found) => json!({
            "succeeded": true,
            "c0": found.c0,
            "constants": {
                "c1": found.constants.c1,
                "c_w": found.constants.c_w,
                "c_y": found.constants.c_y,
                "c_v": found.constants.c_v,
            },
        }),
        Err(e) => json!({ "succeeded": false, "error": e.to_string() }),
    };

    let report = json!({
        "model": "example2",
        "certificate": {
            "kind": "falsification-tested",
            "c0": c0,
            "c1": constants.c1,
            "c_w": constants.c_w,
            "c_y": constants.c_y,
            "c_v": constants.c_v,
            "sigma_slope": (1.0 + c0) / 2.0,
        },
        "validation": {
            "samples": samples,
            "sampled_sup": sup,
            "within_margin": within,
            "sup_point": at,
        },
        "fresh_search": search_json,
        "kl_penalties": {
            "beta_x": kl_json(&betas.beta_x),
            "beta_w": kl_json(&betas.beta_w),
            "beta_y": kl_json(&betas.beta_y),
            "beta_v": kl_json(&betas.beta_v),
            "sigma_slope": betas.sigma_slope,
        },
        "monitor_scale": { "log_quad_c1": constants.c1 },
    });
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    Ok(if within && fresh.is_ok() { 0 } else { 2 })
}

/// `bench`: relaxed vs exact stopping on identical data. Drives the relaxed
/// estimator and re-solves every window with the exact rule from the same
/// warm start (the only pairing on which the per-step comparison is
/// meaningful), plus a full exact-mode run for error statistics.
pub fn cmd_bench(config_path: &Path, flags: &RunFlags) -> Result<i32, String> {
    let scenario = load_scenario(config_path, flags.seed)?;
    let quad_spec = match &scenario.estimator.cost {
        CostSpec::Quadratic(q) => *q,
        CostSpec::MaxForm(_) => {
            return Err("bench compares stopping rules of the quadratic estimator; \
                 the config uses the max-form cost"
                .to_string())
        }
    };
    let model = scenario.validate().map_err(|e| e.to_string())?;

    let mut rows = Vec::new();
    let mut violations = 0usize;
    let mut totals = (0usize, 0usize, 0usize, 0usize);
    let mut err_relaxed = Vec::new();
    let mut err_exact = Vec::new();
    for run in 0..flags.runs {
        let relaxed = execute_run(&scenario, run).map_err(|e| e.to_string())?;

        // Paired exact re-solves on the relaxed trajectory's windows.
        for rec in &relaxed.records {
            let win = rec.window.clone();
            let mut z0 = win.prior.clone();
            z0.resize(model.dims().n * (1 + win.len), 0.0);
            let stop = StopRule::exact(scenario.estimator.max_iters);
            let (_, exact_report) = descend(
                |z| cost::eval_quadratic(&model, &quad_spec, &win, z),
                |z| cost::grad_quadratic(&model, &quad_spec, &win, z),
                &z0,
                &AxisBox::unbounded(z0.len()),
                &stop,
            )
            .map_err(|e| e.to_string())?;
            if rec.report.iterations > exact_report.iterations {
                violations += 1;
            }
            totals.0 += rec.report.iterations;
            totals.1 += exact_report.iterations;
            totals.2 += rec.report.ls_evals;
            totals.3 += exact_report.ls_evals;
            rows.push(format!(
                "{},{},{},{},{},{},{},{},{}",
                run,
                rec.t,
                format_float(rec.eps_hat),
                rec.report.iterations,
                exact_report.iterations,
                rec.report.ls_evals,
                exact_report.ls_evals,
                format_float(rec.report.grad_norm),
                format_float(exact_report.grad_norm),
            ));
        }
        err_relaxed.push(relaxed.terminal_err_sq());

        // Independent exact-mode run for error statistics.
        let mut exact_scenario = scenario.clone();
        exact_scenario.estimator.stop_mode = mhe_core::optimize::StopMode::Exact;
        let exact_run = execute_run(&exact_scenario, run).map_err(|e| e.to_string())?;
        err_exact.push(exact_run.terminal_err_sq());
    }

    let csv = format!(
        "run,t,eps_hat,iters_relaxed,iters_exact,ls_evals_relaxed,ls_evals_exact,grad_relaxed,grad_exact\n{}\n",
        rows.join("\n")
    );
    let csv_path = flags.out.join(format!("{}-bench.csv", scenario.name));
    artifacts::write_text(&csv_path, &csv).map_err(|e| e.to_string())?;

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    println!(
        "bench {}: runs {}, total iterations relaxed {} vs exact {}, total line-search evals {} vs {}",
        scenario.name, flags.runs, totals.0, totals.1, totals.2, totals.3
    );
    println!(
        "terminal err_sq mean: relaxed {} vs exact {}",
        format_float(mean(&err_relaxed)),
        format_float(mean(&err_exact))
    );
    println!("per-step comparison written to {}", csv_path.display());
    if violations > 0 {
        eprintln!("error: relaxed stopping used more iterations than exact at {violations} steps");
        return Ok(3);
    }
    if totals.0 >= totals.1 {
        eprintln!("error: relaxed stopping did not reduce total iterations");
        return Ok(3);
    }
    Ok(0)
}
