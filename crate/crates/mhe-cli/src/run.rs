//! The estimation pipeline: simulate a scenario, drive the estimator, attach
//! bound monitors and minimum-property diagnostics, and fan Monte Carlo runs
//! out over threads.

use mhe_core::certify::{diagnostic_alphas, domination_alphas, Certificate};
use mhe_core::cost;
use mhe_core::dual::{dist, dist_sq};
use mhe_core::mhe::{
    compute_lambda, monitor_maxform_bound, monitor_exponential_bound, truth_decision, BoundReport,
    CostSpec, ErrorScale, Estimator, MheError, RhoFunction, StepRecord,
};
use mhe_core::optimize::StopMode;
use mhe_core::systems::{self, Scenario, ScenarioError};
use mhe_core::Trajectory;

#[derive(Debug)]
pub enum RunError {
    Scenario(ScenarioError),
    Estimator(MheError),
    Model(mhe_core::model::ModelError),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Scenario(e) => write!(f, "{e}"),
            RunError::Estimator(e) => write!(f, "{e}"),
            RunError::Model(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for RunError {}

/// Offline minimum-property check of one step: the returned minimizer's cost
/// against the cost of the true windowed trajectory plus the first-order
/// slack `ε̂_t·‖truth − minimizer‖ + 1e-9`.
#[derive(Clone, Debug)]
pub struct MinPropertyRow {
    pub t: usize,
    pub cost_at_minimizer: f64,
    pub cost_at_truth: f64,
    pub distance: f64,
    pub slack: f64,
    pub ok: bool,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub scenario: Scenario,
    pub run_index: u64,
    pub trajectory: Trajectory,
    /// `x̂_{t|t}` for `t = 0..=T`, with the initial prior at `t = 0`.
    pub estimates: Vec<Vec<f64>>,
    pub records: Vec<StepRecord>,
    pub bound: BoundReport,
    pub min_property: Vec<MinPropertyRow>,
    pub quadratic: bool,
}

impl RunResult {
    pub fn bound_violations(&self) -> usize {
        self.bound.violations
    }

    pub fn min_property_violations(&self) -> usize {
        self.min_property.iter().filter(|r| !r.ok).count()
    }

    pub fn total_iterations(&self) -> usize {
        self.records.iter().map(|r| r.report.iterations).sum()
    }

    pub fn total_ls_evals(&self) -> usize {
        self.records.iter().map(|r| r.report.ls_evals).sum()
    }

    pub fn capped_steps(&self) -> usize {
        self.records.iter().filter(|r| r.report.capped).count()
    }

    pub fn terminal_err_sq(&self) -> f64 {
        dist_sq(
            self.trajectory.states.last().unwrap(),
            self.estimates.last().unwrap(),
        )
    }
}

/// The bound monitor for a scenario's estimator.
fn monitor(
    scenario: &Scenario,
    trajectory: &Trajectory,
    estimates: &[Vec<f64>],
) -> Result<BoundReport, RunError> {
    match &scenario.estimator.cost {
        CostSpec::Quadratic(q) => {
            let split = compute_lambda(q.mu, q.eta, q.horizon, 0.99)
                .map_err(RunError::Estimator)?;
            let epsilon = match scenario.estimator.stop_mode {
                StopMode::Relaxed => scenario.estimator.epsilon,
                StopMode::Exact => 0.0,
            };
            Ok(monitor_exponential_bound(
                &trajectory.states,
                estimates,
                &trajectory.w,
                &trajectory.v,
                q.mu,
                q.nu,
                q.omega,
                split,
                epsilon,
            ))
        }
        CostSpec::MaxForm(m) => {
            let betas = mhe_core::certify::BetaSet {
                beta_x: m.beta_x,
                beta_w: m.beta_w,
                beta_y: m.beta_y,
                beta_v: m.beta_v,
                sigma_slope: m.beta_x.eta,
            };
            let alphas = domination_alphas(&betas, m.horizon)
                .unwrap_or_else(|_| diagnostic_alphas(&betas));
            let scale = monitor_error_scale(&scenario.model);
            Ok(monitor_maxform_bound(
                &trajectory.states,
                estimates,
                &trajectory.w,
                &trajectory.v,
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
                scale,
                alphas.c,
            ))
        }
    }
}

/// How a max-form bound value converts back to a squared state error: the
/// registry's second system certifies on the log-quadratic Lyapunov scale.
pub fn monitor_error_scale(model_name: &str) -> ErrorScale {
    if model_name == "example2" {
        match systems::example2_certificate() {
            Certificate::Uioss { c1, .. } => ErrorScale::LogQuad { c1 },
            _ => ErrorScale::Direct,
        }
    } else {
        ErrorScale::Direct
    }
}

/// Execute one seeded run of a scenario.
pub fn execute_run(scenario: &Scenario, run_index: u64) -> Result<RunResult, RunError> {
    let model = scenario.validate().map_err(RunError::Scenario)?;
    let (w, v) = scenario.draw_noise(run_index);
    let inputs = scenario.inputs();
    let trajectory = model
        .simulate(&scenario.x0, &inputs, &w, &v, scenario.t_max)
        .map_err(RunError::Model)?;

    let cfg = scenario.estimator_config(scenario.seed ^ run_index.wrapping_mul(0x9E37_79B9));
    let quadratic = matches!(cfg.cost, CostSpec::Quadratic(_));
    let mut estimator = Estimator::new(&model, cfg).map_err(RunError::Estimator)?;

    let mut records = Vec::with_capacity(scenario.t_max);
    let mut estimates = Vec::with_capacity(scenario.t_max + 1);
    estimates.push(scenario.xbar0.clone());
    for t in 0..scenario.t_max {
        let rec = estimator
            .step(&trajectory.outputs[t], &trajectory.inputs[t])
            .map_err(RunError::Estimator)?;
        estimates.push(rec.estimate.clone());
        records.push(rec);
    }

    let bound = monitor(scenario, &trajectory, &estimates)?;

    let min_property = records
        .iter()
        .map(|rec| {
            let truth = truth_decision(&model, &trajectory, &rec.window, quadratic);
            let z_truth = truth.flatten();
            let cost_at_truth = match &scenario.estimator.cost {
                CostSpec::Quadratic(q) => cost::eval_quadratic(&model, q, &rec.window, &z_truth),
                CostSpec::MaxForm(m) => cost::eval_maxform(&model, m, &rec.window, &z_truth),
            };
            let z_min = rec.minimizer.flatten();
            let distance = dist(&z_truth, &z_min);
            let slack = rec.eps_hat * distance + 1e-9;
            MinPropertyRow {
                t: rec.t,
                cost_at_minimizer: rec.cost_at_minimizer,
                cost_at_truth,
                distance,
                slack,
                ok: rec.cost_at_minimizer <= cost_at_truth + slack,
            }
        })
        .collect();

    Ok(RunResult {
        scenario: scenario.clone(),
        run_index,
        trajectory,
        estimates,
        records,
        bound,
        min_property,
        quadratic,
    })
}

/// Execute `runs` Monte Carlo repetitions concurrently (two workers), with
/// results in run order.
pub fn execute_runs(scenario: &Scenario, runs: u64) -> Result<Vec<RunResult>, RunError> {
    if runs <= 1 {
        return Ok(vec![execute_run(scenario, 0)?]);
    }
    let mut slots: Vec<Option<Result<RunResult, RunError>>> = Vec::new();
    slots.resize_with(runs as usize, || None);
    let next = std::sync::atomic::AtomicU64::new(0);
    let slots_mutex = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..2 {
            scope.spawn(|| loop {
                let run = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if run >= runs {
                    break;
                }
                let result = execute_run(scenario, run);
                let mut guard = slots_mutex.lock().unwrap();
                guard[run as usize] = Some(result);
            });
        }
    });
    slots.into_iter().map(|s| s.unwrap()).collect()
}
