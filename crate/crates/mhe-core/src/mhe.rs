//! The moving-horizon estimator loop and its runtime error-bound monitors.
//!
//! At each time `t` the estimator assembles the window of the last
//! `M = min(t, N)` measurement/input pairs, anchors it at the prediction
//! (the initial prior while `t ≤ N`, afterwards the estimate produced `N`
//! steps earlier), warm-starts the decision vector at `(x̄, 0[, 0])`, runs the
//! descent engine, and rolls the minimizer forward to the estimate
//! `x̂_{t|t}`.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::cost::{
    self, CostError, DecisionLayout, DecisionVector, MaxFormCost, QuadraticCost, Window,
};
use crate::dual::dist_sq;
use crate::model::{AxisBox, ModelError, Plant, SystemModel, Trajectory};
use crate::optimize::{
    descend, epsilon_schedule, minimize_multistart, MultiStart, OptimError, OptimReport, StopMode,
    StopRule, EXACT_TOL,
};

/// Which window cost the estimator minimizes.
#[derive(Clone, Debug, PartialEq)]
pub enum CostSpec {
    Quadratic(QuadraticCost),
    MaxForm(MaxFormCost),
}

impl CostSpec {
    pub fn horizon(&self) -> usize {
        match self {
            CostSpec::Quadratic(q) => q.horizon,
            CostSpec::MaxForm(m) => m.horizon,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MheError {
    Cost(CostError),
    Model(ModelError),
    Optim(OptimError),
    /// 4μη^N ≥ 1 for a quadratic config with relaxed stopping.
    ContractionViolated { mu: f64, eta: f64, horizon: usize },
    LambdaPrecondition { mu: f64, eta: f64, horizon: usize },
    MissingPrediction { t: usize },
}

impl core::fmt::Display for MheError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            MheError::Cost(e) => write!(f, "{e}"),
            MheError::Model(e) => write!(f, "{e}"),
            MheError::Optim(e) => write!(f, "{e}"),
            MheError::ContractionViolated { mu, eta, horizon } => write!(
                f,
                "relaxed stopping requires 4*mu*eta^N < 1 (mu={mu}, eta={eta}, N={horizon})"
            ),
            MheError::LambdaPrecondition { mu, eta, horizon } => write!(
                f,
                "decay-rate split requires 4*mu*eta^N < 1 (mu={mu}, eta={eta}, N={horizon})"
            ),
            MheError::MissingPrediction { t } => {
                write!(f, "no stored estimate available as prediction at time {t}")
            }
        }
    }
}

impl From<OptimError> for MheError {
    fn from(e: OptimError) -> Self {
        MheError::Optim(e)
    }
}

impl From<ModelError> for MheError {
    fn from(e: ModelError) -> Self {
        MheError::Model(e)
    }
}

/// Estimator configuration: cost, stopping rule, initial prior, and solver
/// knobs.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorConfig {
    pub cost: CostSpec,
    pub stop_mode: StopMode,
    /// Tolerance parameter ε of the relaxed stopping rule.
    pub epsilon: f64,
    pub prior0: Vec<f64>,
    pub max_iters: usize,
    /// Multi-start options for the max-form solver.
    pub multistart: MultiStart,
}

impl EstimatorConfig {
    /// Validate the contraction precondition for quadratic configs with
    /// relaxed stopping.
    pub fn validate(&self) -> Result<(), MheError> {
        if let (CostSpec::Quadratic(q), StopMode::Relaxed) = (&self.cost, self.stop_mode) {
            if 4.0 * q.mu * libm::pow(q.eta, q.horizon as f64) >= 1.0 {
                return Err(MheError::ContractionViolated {
                    mu: q.mu,
                    eta: q.eta,
                    horizon: q.horizon,
                });
            }
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.cost.horizon()
    }

    /// The gradient tolerance used at time `t`.
    pub fn grad_tol_at(&self, t: usize) -> Result<f64, MheError> {
        match self.stop_mode {
            StopMode::Exact => Ok(EXACT_TOL),
            StopMode::Relaxed => match &self.cost {
                CostSpec::Quadratic(q) => {
                    Ok(epsilon_schedule(self.epsilon, q.eta, q.mu, q.horizon, t)?)
                }
                // The schedule parameters (mu, eta) have no max-form analogue;
                // the tolerance stays at the configured ε.
                CostSpec::MaxForm(_) => Ok(self.epsilon),
            },
        }
    }
}

/// The result of one estimator step, with enough context to recheck the
/// minimum property offline.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub estimate: Vec<f64>,
    pub report: OptimReport,
    pub eps_hat: f64,
    pub window: Window,
    pub minimizer: DecisionVector,
    /// True (unsmoothed) cost at the returned minimizer.
    pub cost_at_minimizer: f64,
}

/// Estimator state: current time, the measurement/input window, and the ring
/// of stored estimates that become predictions `N` steps later.
pub struct Estimator<'a, P: Plant> {
    model: &'a SystemModel<P>,
    config: EstimatorConfig,
    t: usize,
    window_y: VecDeque<Vec<f64>>,
    window_u: VecDeque<Vec<f64>>,
    stored: VecDeque<(usize, Vec<f64>)>,
}

impl<'a, P: Plant> Estimator<'a, P> {
    pub fn new(model: &'a SystemModel<P>, config: EstimatorConfig) -> Result<Self, MheError> {
        config.validate()?;
        Ok(Estimator {
            model,
            config,
            t: 0,
            window_y: VecDeque::new(),
            window_u: VecDeque::new(),
            stored: VecDeque::new(),
        })
    }

    pub fn time(&self) -> usize {
        self.t
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    /// The prediction anchoring the window at time `t`.
    fn prediction(&self, t: usize) -> Result<Vec<f64>, MheError> {
        let n_hor = self.config.horizon();
        if t <= n_hor {
            Ok(self.config.prior0.clone())
        } else {
            let k = t - n_hor;
            self.stored
                .iter()
                .find(|(stored_k, _)| *stored_k == k)
                .map(|(_, est)| est.clone())
                .ok_or(MheError::MissingPrediction { t })
        }
    }

    /// Ingest the measurement/input pair `(y_{t-1}, u_{t-1})` and produce the
    /// estimate `x̂_{t|t}`. An optimizer that exhausts its iteration budget
    /// still produces an estimate; the report's `capped` flag records it.
    pub fn step(&mut self, y_new: &[f64], u_new: &[f64]) -> Result<StepRecord, MheError> {
        let d = self.model.dims();
        let n_hor = self.config.horizon();
        let t = self.t + 1;

        self.window_y.push_back(y_new.to_vec());
        self.window_u.push_back(u_new.to_vec());
        if self.window_y.len() > n_hor {
            self.window_y.pop_front();
            self.window_u.pop_front();
        }
        let m_len = self.window_y.len();
        debug_assert_eq!(m_len, t.min(n_hor));

        let window = Window {
            len: m_len,
            prior: self.prediction(t)?,
            measurements: self.window_y.iter().cloned().collect(),
            inputs: self.window_u.iter().cloned().collect(),
            time: t,
        };
        window.validate().map_err(MheError::Cost)?;

        let eps_hat = self.config.grad_tol_at(t)?;
        let stop = StopRule {
            grad_tol: eps_hat,
            max_iters: self.config.max_iters,
        };

        let (layout, z_star, report, additive) = match &self.config.cost {
            CostSpec::Quadratic(spec) => {
                let layout = DecisionLayout::quadratic(d.n, m_len);
                let mut z0 = Vec::with_capacity(layout.dim());
                z0.extend_from_slice(&window.prior);
                z0.resize(layout.dim(), 0.0);
                let bounds = AxisBox::unbounded(layout.dim());
                let (z, report) = descend(
                    |z| cost::eval_quadratic(self.model, spec, &window, z),
                    |z| cost::grad_quadratic(self.model, spec, &window, z),
                    &z0,
                    &bounds,
                    &stop,
                )?;
                (layout, z, report, true)
            }
            CostSpec::MaxForm(spec) => {
                let layout = DecisionLayout::maxform(d, m_len);
                let mut z0 = Vec::with_capacity(layout.dim());
                z0.extend_from_slice(&window.prior);
                z0.resize(layout.dim(), 0.0);
                let bounds = AxisBox::product(&[
                    (&self.model.x_box, 1),
                    (&self.model.w_box, m_len),
                    (&self.model.v_box, m_len),
                ]);
                let mut opts = self.config.multistart.clone();
                opts.seed ^= (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                let (z, report) = minimize_multistart(
                    |z| cost::eval_maxform(self.model, spec, &window, z),
                    |z, tau| cost::smoothed_maxform(self.model, spec, &window, z, tau),
                    |z, tau| cost::grad_smoothed_maxform(self.model, spec, &window, z, tau),
                    &z0,
                    &bounds,
                    &opts,
                    &stop,
                )?;
                (layout, z, report, false)
            }
        };

        let estimate = cost::rollout_estimate(self.model, &window, &z_star, layout, additive);
        self.stored.push_back((t, estimate.clone()));
        while let Some(&(k, _)) = self.stored.front() {
            if k + n_hor <= t {
                self.stored.pop_front();
            } else {
                break;
            }
        }
        self.t = t;

        let cost_at_minimizer = report.cost;
        Ok(StepRecord {
            t,
            estimate,
            eps_hat,
            minimizer: DecisionVector::unflatten(&z_star, layout),
            cost_at_minimizer,
            window,
            report,
        })
    }
}

/// The decision vector of the true windowed trajectory, for minimum-property
/// checks. Quadratic mode reconstructs the additive state disturbance
/// `x_{i+1} − f(x_i, u_i, 0)`; max form takes the simulated `w` and `v`.
pub fn truth_decision<P: Plant>(
    model: &SystemModel<P>,
    trajectory: &Trajectory,
    window: &Window,
    quadratic: bool,
) -> DecisionVector {
    let d = model.dims();
    let t = window.time;
    let m_len = window.len;
    let start = t - m_len;
    let anchor = trajectory.states[start].clone();
    if quadratic {
        let zero_w = vec![0.0; d.nw];
        let mut w = Vec::with_capacity(m_len);
        let mut fx = vec![0.0; d.n];
        for i in start..t {
            model
                .plant
                .f(&trajectory.states[i], &trajectory.inputs[i], &zero_w, &mut fx);
            w.push(
                trajectory.states[i + 1]
                    .iter()
                    .zip(&fx)
                    .map(|(xn, fi)| xn - fi)
                    .collect(),
            );
        }
        DecisionVector {
            anchor,
            w,
            v: None,
        }
    } else {
        DecisionVector {
            anchor,
            w: trajectory.w[start..t].to_vec(),
            v: Some(trajectory.v[start..t].to_vec()),
        }
    }
}

/// The decay-rate split behind the closed-loop bound: the largest
/// `α ∈ (0,1)` with `4με^{αN} ≤ θ` and the resulting `λ = η^{1−α}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LambdaSplit {
    pub alpha: f64,
    pub lambda: f64,
}

/// Compute the split for margin `θ ∈ (0,1)`: `α = ln(θ/(4μ)) / (N·ln η)`
/// clipped into `(0,1)`, `λ = η^{1−α}`. Requires `4μη^N < 1`.
pub fn compute_lambda(
    mu: f64,
    eta: f64,
    horizon: usize,
    theta: f64,
) -> Result<LambdaSplit, MheError> {
    debug_assert!(theta > 0.0 && theta < 1.0);
    if !(4.0 * mu * libm::pow(eta, horizon as f64) < 1.0) {
        return Err(MheError::LambdaPrecondition {
            mu,
            eta,
            horizon,
        });
    }
    let raw = libm::log(theta / (4.0 * mu)) / (horizon as f64 * libm::log(eta));
    let alpha = raw.clamp(1e-12, 1.0 - 1e-12);
    let lambda = libm::pow(eta, 1.0 - alpha);
    // The clip must not have loosened the contraction below the margin.
    if 4.0 * mu * libm::pow(eta, alpha * horizon as f64) > theta * (1.0 + 1e-9) {
        return Err(MheError::LambdaPrecondition {
            mu,
            eta,
            horizon,
        });
    }
    Ok(LambdaSplit { alpha, lambda })
}

/// One monitored step: squared estimation error against the bound value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundRow {
    pub t: usize,
    pub err_sq: f64,
    pub bound: f64,
    pub satisfied: bool,
}

/// Per-run bound monitoring result.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub lambda: f64,
    pub alpha_exponent: f64,
    pub rows: Vec<BoundRow>,
    pub violations: usize,
    pub max_err_sq: f64,
}

impl BoundReport {
    fn from_rows(lambda: f64, alpha_exponent: f64, rows: Vec<BoundRow>) -> Self {
        let violations = rows.iter().filter(|r| !r.satisfied).count();
        let max_err_sq = rows.iter().map(|r| r.err_sq).fold(0.0, f64::max);
        BoundReport {
            lambda,
            alpha_exponent,
            rows,
            violations,
            max_err_sq,
        }
    }
}

const BOUND_SLACK: f64 = 1e-12;

/// Monitor the practical exponential bound
/// `|x_t − x̂_{t|t}|² ≤ 4μ|x₀−x̄₀|²λ^t + 2ν Σ λ^{t−1−i}|v_i|²
///  + 4ω Σ λ^{t−1−i}|w_i|² + ε²`
/// along a run (`ε = 0` recovers the exact-minimization bound).
#[allow(clippy::too_many_arguments)]
pub fn monitor_exponential_bound(
    true_states: &[Vec<f64>],
    estimates: &[Vec<f64>],
    w: &[Vec<f64>],
    v: &[Vec<f64>],
    mu: f64,
    nu: f64,
    omega: f64,
    split: LambdaSplit,
    epsilon: f64,
) -> BoundReport {
    debug_assert_eq!(true_states.len(), estimates.len());
    let lambda = split.lambda;
    let initial_gap_sq = dist_sq(&true_states[0], &estimates[0]);
    let mut sum_v = 0.0;
    let mut sum_w = 0.0;
    let mut lambda_pow_t = 1.0;
    let mut rows = Vec::with_capacity(true_states.len());
    for t in 0..true_states.len() {
        if t > 0 {
            // Discounted sums over i = 0..t-1.
            sum_v = lambda * sum_v + crate::dual::norm_sq::<f64>(&v[t - 1]);
            sum_w = lambda * sum_w + crate::dual::norm_sq::<f64>(&w[t - 1]);
            lambda_pow_t *= lambda;
        }
        let err_sq = dist_sq(&true_states[t], &estimates[t]);
        let bound = 4.0 * mu * initial_gap_sq * lambda_pow_t
            + 2.0 * nu * sum_v
            + 4.0 * omega * sum_w
            + epsilon * epsilon;
        rows.push(BoundRow {
            t,
            err_sq,
            bound,
            satisfied: err_sq <= bound + BOUND_SLACK,
        });
    }
    BoundReport::from_rows(lambda, split.alpha, rows)
}

/// `ρ(s, t) = 2β(2s, t) ⊕ α(s, t)`: the closed-form stability gains of the
/// max-form estimator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RhoFunction {
    pub beta: crate::cost::KlFunction,
    pub alpha: crate::cost::KlFunction,
}

impl RhoFunction {
    pub fn eval(&self, s: f64, t: usize) -> f64 {
        (2.0 * self.beta.eval(2.0 * s, t)).max(self.alpha.eval(s, t))
    }
}

/// How a ρ-bound value maps back to a squared state-space error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ErrorScale {
    /// ρ bounds `|x_t − x̂_t|` directly; the row bound is ρ².
    Direct,
    /// ρ bounds `ln(c1·|x_t − x̂_t|² + 1)`; the row bound is `(e^ρ − 1)/c1`.
    LogQuad { c1: f64 },
}

/// Monitor the max-form robust-stability bound
/// `ρ_x(|x₀−x̄₀|, t) ⊕ max_i ρ_w(|w_i|, t−1−i) ⊕ max_i ρ_v(|v_i|, t−1−i)`.
/// Diagnostic: the max-form solves are approximate, so violations are
/// reported rather than fatal.
#[allow(clippy::too_many_arguments)]
pub fn monitor_maxform_bound(
    true_states: &[Vec<f64>],
    estimates: &[Vec<f64>],
    w: &[Vec<f64>],
    v: &[Vec<f64>],
    rho_x: &RhoFunction,
    rho_w: &RhoFunction,
    rho_v: &RhoFunction,
    scale: ErrorScale,
    alpha_exponent: f64,
) -> BoundReport {
    debug_assert_eq!(true_states.len(), estimates.len());
    let initial_gap = crate::dual::dist(&true_states[0], &estimates[0]);
    let mut rows = Vec::with_capacity(true_states.len());
    for t in 0..true_states.len() {
        let mut rho = rho_x.eval(initial_gap, t);
        for i in 0..t {
            let age = t - 1 - i;
            rho = rho.max(rho_w.eval(crate::dual::norm::<f64>(&w[i]), age));
            rho = rho.max(rho_v.eval(crate::dual::norm::<f64>(&v[i]), age));
        }
        let bound = match scale {
            ErrorScale::Direct => rho * rho,
            ErrorScale::LogQuad { c1 } => (libm::exp(rho) - 1.0) / c1,
        };
        let err_sq = dist_sq(&true_states[t], &estimates[t]);
        rows.push(BoundRow {
            t,
            err_sq,
            bound,
            satisfied: err_sq <= bound + BOUND_SLACK,
        });
    }
    BoundReport::from_rows(rho_x.beta.eta, alpha_exponent, rows)
}
