//! Window costs for the moving-horizon estimator.
//!
//! Two forms are supported over a window of `M = min(t, N)` measurements:
//!
//! - [`QuadraticCost`]: discounted least squares
//!   `μ·η^M·|x̂−x̄|² + Σ_i η^{M-1-i} (ν·|y_i−h(x̂_i)|² + ω·|ŵ_i|²)`
//!   with the additive rollout `x̂_{i+1} = f(x̂_i, u_i, 0) + ŵ_i`;
//! - [`MaxFormCost`]: the maximum of class-KL penalties
//!   `β_x(2|x̂−x̄|, M) ⊕ max_i β_w(2|ŵ_i|,·) ⊕ max_i β_y(|y_i−h(x̂_i,v̂_i)|,·)
//!   ⊕ max_i β_v(2|v̂_i|,·)` with the rollout `x̂_{i+1} = f(x̂_i, u_i, ŵ_i)`.
//!
//! The max form is minimized through a log-sum-exp smoothing
//! ([`smoothed_maxform`]); the unsmoothed value is only ever evaluated, never
//! differentiated.

use alloc::vec;
use alloc::vec::Vec;

use crate::dual::{self, gradient, Dual, Real};
use crate::model::{Plant, SystemModel};

/// Parametric class-KL function `(s, k) ↦ κ·s^q·η^k` with `κ ≥ 0`, `q > 0`,
/// and decay base `η ∈ (0, 1)`. Construct through [`KlFunction::new`]; small
/// decay powers are precomputed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KlFunction {
    pub kappa: f64,
    pub q: f64,
    pub eta: f64,
    decay_cache: [f64; 8],
}

impl KlFunction {
    pub fn new(kappa: f64, q: f64, eta: f64) -> Self {
        debug_assert!(kappa >= 0.0 && q > 0.0 && eta > 0.0 && eta < 1.0);
        let mut decay_cache = [1.0; 8];
        for k in 1..8 {
            decay_cache[k] = decay_cache[k - 1] * eta;
        }
        KlFunction {
            kappa,
            q,
            eta,
            decay_cache,
        }
    }

    /// Scaled-linear member `s ↦ κ·s·η^k`.
    pub fn linear(kappa: f64, eta: f64) -> Self {
        KlFunction::new(kappa, 1.0, eta)
    }

    fn decay(&self, k: usize) -> f64 {
        if k < 8 {
            self.decay_cache[k]
        } else {
            libm::pow(self.eta, k as f64)
        }
    }

    pub fn eval(&self, s: f64, k: usize) -> f64 {
        self.eval_t(s, k)
    }

    pub fn eval_t<T: Real>(&self, s: T, k: usize) -> T {
        let decay = T::constant(self.kappa * self.decay(k));
        if self.q == 1.0 {
            decay * s
        } else if self.q == 2.0 {
            decay * s * s
        } else if s.value() <= 0.0 {
            T::constant(0.0)
        } else {
            decay * (T::constant(self.q) * s.ln()).exp()
        }
    }
}

/// Weights of the discounted quadratic window cost.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadraticCost {
    pub mu: f64,
    pub nu: f64,
    pub omega: f64,
    pub eta: f64,
    /// Window length bound N.
    pub horizon: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CostError {
    BadWeight(&'static str),
    BadWindow(&'static str),
}

impl core::fmt::Display for CostError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            CostError::BadWeight(w) => write!(f, "invalid cost weight: {w}"),
            CostError::BadWindow(w) => write!(f, "invalid window: {w}"),
        }
    }
}

impl QuadraticCost {
    pub fn new(mu: f64, nu: f64, omega: f64, eta: f64, horizon: usize) -> Result<Self, CostError> {
        if !(mu > 0.0 && nu > 0.0 && omega > 0.0) {
            return Err(CostError::BadWeight("mu, nu, omega must be positive"));
        }
        if !(eta > 0.0 && eta < 1.0) {
            return Err(CostError::BadWeight("eta must lie in (0, 1)"));
        }
        if horizon < 1 {
            return Err(CostError::BadWeight("window length N must be >= 1"));
        }
        Ok(QuadraticCost {
            mu,
            nu,
            omega,
            eta,
            horizon,
        })
    }
}

/// The four KL penalties of the max-form window cost.
#[derive(Clone, Debug, PartialEq)]
pub struct MaxFormCost {
    pub beta_x: KlFunction,
    pub beta_w: KlFunction,
    pub beta_y: KlFunction,
    pub beta_v: KlFunction,
    pub horizon: usize,
}

/// A window of data the estimator fits at time `t`: the prediction `x̄_{t-M}`
/// and the last `M` measurement/input pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub len: usize,
    pub prior: Vec<f64>,
    pub measurements: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    /// Absolute time `t` the window ends at.
    pub time: usize,
}

impl Window {
    pub fn validate(&self) -> Result<(), CostError> {
        if self.measurements.len() != self.len || self.inputs.len() != self.len {
            return Err(CostError::BadWindow("sequence lengths must equal the window length"));
        }
        Ok(())
    }
}

/// Shape of the flattened decision vector: anchor state, then `steps` blocks
/// of disturbance estimates, then (max form only) `steps` blocks of
/// measurement-noise estimates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecisionLayout {
    pub n: usize,
    pub w_dim: usize,
    pub v_dim: Option<usize>,
    pub steps: usize,
}

impl DecisionLayout {
    pub fn quadratic(n: usize, steps: usize) -> Self {
        DecisionLayout {
            n,
            w_dim: n,
            v_dim: None,
            steps,
        }
    }

    pub fn maxform(dims: crate::model::Dims, steps: usize) -> Self {
        DecisionLayout {
            n: dims.n,
            w_dim: dims.nw,
            v_dim: Some(dims.m),
            steps,
        }
    }

    pub fn dim(&self) -> usize {
        self.n + self.steps * (self.w_dim + self.v_dim.unwrap_or(0))
    }

    pub fn anchor<'a, T>(&self, z: &'a [T]) -> &'a [T] {
        &z[..self.n]
    }

    pub fn w_block<'a, T>(&self, z: &'a [T], i: usize) -> &'a [T] {
        let start = self.n + i * self.w_dim;
        &z[start..start + self.w_dim]
    }

    pub fn v_block<'a, T>(&self, z: &'a [T], i: usize) -> &'a [T] {
        let v_dim = self.v_dim.expect("layout has no v block");
        let start = self.n + self.steps * self.w_dim + i * v_dim;
        &z[start..start + v_dim]
    }
}

/// Structured view of the optimizer's unknowns: the window anchor state and
/// the per-step disturbance estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionVector {
    pub anchor: Vec<f64>,
    pub w: Vec<Vec<f64>>,
    pub v: Option<Vec<Vec<f64>>>,
}

impl DecisionVector {
    pub fn layout(&self) -> DecisionLayout {
        DecisionLayout {
            n: self.anchor.len(),
            w_dim: self.w.first().map_or(0, Vec::len),
            v_dim: self.v.as_ref().map(|v| v.first().map_or(0, Vec::len)),
            steps: self.w.len(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.anchor.clone();
        for b in &self.w {
            out.extend_from_slice(b);
        }
        if let Some(v) = &self.v {
            for b in v {
                out.extend_from_slice(b);
            }
        }
        out
    }

    pub fn unflatten(z: &[f64], layout: DecisionLayout) -> Self {
        debug_assert_eq!(z.len(), layout.dim());
        let anchor = layout.anchor(z).to_vec();
        let w = (0..layout.steps).map(|i| layout.w_block(z, i).to_vec()).collect();
        let v = layout
            .v_dim
            .map(|_| (0..layout.steps).map(|i| layout.v_block(z, i).to_vec()).collect());
        DecisionVector { anchor, w, v }
    }
}

/// Discounted quadratic window cost at the flat decision vector `z`
/// (anchor + additive state disturbances, no v̂ block).
pub fn eval_quadratic<P: Plant, T: Real>(
    model: &SystemModel<P>,
    spec: &QuadraticCost,
    win: &Window,
    z: &[T],
) -> T {
    let d = model.dims();
    let m_len = win.len;
    let layout = DecisionLayout::quadratic(d.n, m_len);
    debug_assert_eq!(z.len(), layout.dim());
    let anchor = layout.anchor(z);

    // One scratch allocation: x | x_next | y_hat | u | zero_w | zero_v.
    let mut scratch = vec![T::constant(0.0); 2 * d.n + 2 * d.m + d.p + d.nw];
    let (x, rest) = scratch.split_at_mut(d.n);
    let (x_next, rest) = rest.split_at_mut(d.n);
    let (y_hat, rest) = rest.split_at_mut(d.m);
    let (u_t, rest) = rest.split_at_mut(d.p);
    let (zero_w, zero_v) = rest.split_at_mut(d.nw);
    x.copy_from_slice(anchor);

    debug_assert!(m_len < 32);
    let mut eta_pow = [1.0f64; 32];
    for k in 1..=m_len {
        eta_pow[k] = eta_pow[k - 1] * spec.eta;
    }

    // Prior term μ η^M |x̂ - x̄|².
    let mut prior_gap = T::constant(0.0);
    for i in 0..d.n {
        let g = anchor[i] - T::constant(win.prior[i]);
        prior_gap = prior_gap + g * g;
    }
    let mut total = T::constant(spec.mu * eta_pow[m_len]) * prior_gap;

    for i in 0..m_len {
        let discount = eta_pow[m_len - 1 - i];
        model.plant.h(x, zero_v, y_hat);
        let mut res = T::constant(0.0);
        for j in 0..d.m {
            let r = T::constant(win.measurements[i][j]) - y_hat[j];
            res = res + r * r;
        }
        let w_i = layout.w_block(z, i);
        total = total
            + T::constant(spec.nu * discount) * res
            + T::constant(spec.omega * discount) * dual::norm_sq(w_i);
        for j in 0..d.p {
            u_t[j] = T::constant(win.inputs[i][j]);
        }
        model.plant.f(x, u_t, zero_w, x_next);
        for j in 0..d.n {
            x[j] = x_next[j] + w_i[j];
        }
    }
    total
}

/// Gradient of [`eval_quadratic`] by forward-mode duals.
pub fn grad_quadratic<P: Plant>(
    model: &SystemModel<P>,
    spec: &QuadraticCost,
    win: &Window,
    z: &[f64],
) -> Vec<f64> {
    gradient(|zd: &[Dual]| eval_quadratic(model, spec, win, zd), z)
}

/// Roll the minimizing decision vector forward to the window-end state
/// estimate. `additive` selects the quadratic-mode rollout
/// `f(x̂, u, 0) + ŵ` over the native `f(x̂, u, ŵ)`.
pub fn rollout_estimate<P: Plant>(
    model: &SystemModel<P>,
    win: &Window,
    z: &[f64],
    layout: DecisionLayout,
    additive: bool,
) -> Vec<f64> {
    let d = model.dims();
    let mut x = layout.anchor(z).to_vec();
    let zero_w = vec![0.0; d.nw];
    let mut x_next = vec![0.0; d.n];
    for i in 0..win.len {
        let w_i = layout.w_block(z, i);
        if additive {
            model.plant.f(&x, &win.inputs[i], &zero_w, &mut x_next);
            for j in 0..d.n {
                x[j] = x_next[j] + w_i[j];
            }
        } else {
            model.plant.f(&x, &win.inputs[i], w_i, &mut x_next);
            x.copy_from_slice(&x_next);
        }
    }
    x
}

/// All penalty terms of the max-form cost, in a fixed order (anchor term,
/// then per-step w/y/v terms).
pub fn maxform_terms<P: Plant, T: Real>(
    model: &SystemModel<P>,
    spec: &MaxFormCost,
    win: &Window,
    z: &[T],
    terms: &mut Vec<T>,
) {
    let d = model.dims();
    let m_len = win.len;
    let layout = DecisionLayout::maxform(d, m_len);
    debug_assert_eq!(z.len(), layout.dim());
    terms.clear();

    // One scratch allocation: x | x_next | y_res | u.
    let mut scratch = vec![T::constant(0.0); 2 * d.n + d.m + d.p];
    let (x, rest) = scratch.split_at_mut(d.n);
    let (x_next, rest) = rest.split_at_mut(d.n);
    let (y_res, u_t) = rest.split_at_mut(d.m);

    let two = T::constant(2.0);
    let anchor = layout.anchor(z);
    let mut gap_sq = T::constant(0.0);
    for i in 0..d.n {
        let g = anchor[i] - T::constant(win.prior[i]);
        gap_sq = gap_sq + g * g;
    }
    terms.push(spec.beta_x.eval_t(two * gap_sq.sqrt(), m_len));
    x.copy_from_slice(anchor);

    for i in 0..m_len {
        let age = m_len - 1 - i;
        let w_i = layout.w_block(z, i);
        let v_i = layout.v_block(z, i);
        terms.push(spec.beta_w.eval_t(two * dual::norm(w_i), age));
        model.plant.h(x, v_i, y_res);
        for j in 0..d.m {
            y_res[j] = T::constant(win.measurements[i][j]) - y_res[j];
        }
        terms.push(spec.beta_y.eval_t(dual::norm(y_res), age));
        terms.push(spec.beta_v.eval_t(two * dual::norm(v_i), age));
        for j in 0..d.p {
            u_t[j] = T::constant(win.inputs[i][j]);
        }
        model.plant.f(x, u_t, w_i, x_next);
        x.copy_from_slice(x_next);
    }
}

/// The max-form window cost (exact maximum; evaluation only).
pub fn eval_maxform<P: Plant>(
    model: &SystemModel<P>,
    spec: &MaxFormCost,
    win: &Window,
    z: &[f64],
) -> f64 {
    let mut terms = Vec::new();
    maxform_terms(model, spec, win, z, &mut terms);
    terms.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
}

/// Log-sum-exp smoothing of the max-form cost at temperature `τ > 0`:
/// `τ·ln Σ_j exp(term_j / τ)`. Satisfies
/// `eval_maxform ≤ smoothed ≤ eval_maxform + τ·ln(#terms)`.
pub fn smoothed_maxform<P: Plant, T: Real>(
    model: &SystemModel<P>,
    spec: &MaxFormCost,
    win: &Window,
    z: &[T],
    tau: f64,
) -> T {
    debug_assert!(tau > 0.0);
    let mut terms = Vec::new();
    maxform_terms(model, spec, win, z, &mut terms);
    // Shift by the max value (a constant) to keep the exponentials bounded.
    let shift = terms
        .iter()
        .map(|t| t.value())
        .fold(f64::NEG_INFINITY, f64::max);
    let inv_tau = T::constant(1.0 / tau);
    let mut acc = T::constant(0.0);
    for &t in &terms {
        acc = acc + ((t - T::constant(shift)) * inv_tau).exp();
    }
    T::constant(tau) * acc.ln() + T::constant(shift)
}

/// Gradient of [`smoothed_maxform`] by forward-mode duals.
pub fn grad_smoothed_maxform<P: Plant>(
    model: &SystemModel<P>,
    spec: &MaxFormCost,
    win: &Window,
    z: &[f64],
    tau: f64,
) -> Vec<f64> {
    gradient(|zd: &[Dual]| smoothed_maxform(model, spec, win, zd, tau), z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::systems;

    fn window_from_truth(
        model: &SystemModel<systems::Builtin>,
        x_start: &[f64],
        len: usize,
        t: usize,
        prior: Vec<f64>,
    ) -> Window {
        let d = model.dims();
        let inputs: Vec<Vec<f64>> = (0..len).map(|_| vec![0.0; d.p]).collect();
        let w = vec![vec![0.0; d.nw]; len];
        let v = vec![vec![0.0; d.m]; len];
        let tr = model.simulate(x_start, &inputs, &w, &v, len).unwrap();
        Window {
            len,
            prior,
            measurements: tr.outputs,
            inputs,
            time: t,
        }
    }

    #[test]
    fn quadratic_cost_is_zero_at_exact_fit() {
        let model = systems::build_example1();
        let spec = QuadraticCost::new(2.0, 70.0 / 3.0, 2357.0 / 48.0, 7.0 / 16.0, 3).unwrap();
        let x0 = [0.3, -0.4, 0.8];
        let win = window_from_truth(&model, &x0, 3, 3, x0.to_vec());
        let z = DecisionVector {
            anchor: x0.to_vec(),
            w: vec![vec![0.0; 3]; 3],
            v: None,
        }
        .flatten();
        let j = eval_quadratic(&model, &spec, &win, &z);
        assert!(j.abs() < 1e-24, "cost at truth = {j}");
        let g = grad_quadratic(&model, &spec, &win, &z);
        assert!(g.iter().all(|gi| gi.abs() < 1e-11), "gradient at exact fit: {g:?}");
    }

    #[test]
    fn quadratic_cost_single_step_window_matches_hand_sum() {
        // M = 1, mu = 2, eta = 7/16, anchor-prior gap (1,0,0), w = 0:
        // J = 2·(7/16)·1 + nu·r² with r the output residual.
        let model = systems::build_example1();
        let nu = 5.0;
        let spec = QuadraticCost::new(2.0, nu, 1.0, 7.0 / 16.0, 3).unwrap();
        let prior = vec![0.5, 1.0, -0.2];
        let anchor = vec![1.5, 1.0, -0.2];
        let y = vec![2.0];
        let win = Window {
            len: 1,
            prior,
            measurements: vec![y.clone()],
            inputs: vec![vec![0.0]],
            time: 1,
        };
        let z = DecisionVector {
            anchor: anchor.clone(),
            w: vec![vec![0.0; 3]],
            v: None,
        }
        .flatten();
        let r = y[0] - (anchor[0] + anchor[2] * anchor[2]);
        let expected = 2.0 * (7.0 / 16.0) + nu * r * r;
        let j = eval_quadratic(&model, &spec, &win, &z);
        assert!((j - expected).abs() < 1e-14, "{j} vs {expected}");
    }

    #[test]
    fn quadratic_gradient_scales_linearly_with_weights() {
        let model = systems::build_example1();
        let base = QuadraticCost::new(2.0, 70.0 / 3.0, 2357.0 / 48.0, 7.0 / 16.0, 3).unwrap();
        let scaled = QuadraticCost::new(
            3.0 * base.mu,
            3.0 * base.nu,
            3.0 * base.omega,
            base.eta,
            3,
        )
        .unwrap();
        let win = window_from_truth(&model, &[2.0, 2.0, 2.0], 3, 3, vec![-2.0, -2.0, -2.0]);
        let mut rng = Rng::new(5, 0);
        let z: Vec<f64> = (0..12).map(|_| rng.next_uniform(-1.0, 1.0)).collect();
        let g1 = grad_quadratic(&model, &base, &win, &z);
        let g3 = grad_quadratic(&model, &scaled, &win, &z);
        for (a, b) in g1.iter().zip(&g3) {
            assert!((3.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn maxform_cost_is_zero_at_exact_fit() {
        let model = systems::build_example2();
        let spec = systems::example2_maxform(4);
        let x0 = [0.4, -0.2];
        let win = window_from_truth(&model, &x0, 4, 4, x0.to_vec());
        let z = DecisionVector {
            anchor: x0.to_vec(),
            w: vec![vec![0.0]; 4],
            v: Some(vec![vec![0.0]; 4]),
        }
        .flatten();
        assert_eq!(eval_maxform(&model, &spec, &win, &z), 0.0);
    }

    #[test]
    fn log_sum_exp_sandwich_holds_on_random_points() {
        let model = systems::build_example2();
        let spec = systems::example2_maxform(3);
        let win = window_from_truth(&model, &[1.0, 1.0], 3, 3, vec![-1.0, -1.0]);
        let layout = DecisionLayout::maxform(model.dims(), 3);
        let n_terms = 1 + 3 * 3;
        let mut rng = Rng::new(77, 0);
        for _ in 0..1000 {
            let z: Vec<f64> = (0..layout.dim()).map(|_| rng.next_uniform(-1.5, 1.5)).collect();
            let exact = eval_maxform(&model, &spec, &win, &z);
            for tau in [1e-1, 1e-2, 1e-3] {
                let smooth = smoothed_maxform(&model, &spec, &win, &z, tau);
                assert!(smooth >= exact - 1e-12);
                assert!(smooth <= exact + tau * (n_terms as f64).ln() + 1e-12);
            }
        }
    }

    #[test]
    fn smoothed_equals_term_plus_tau_log_count_for_equal_terms() {
        // Two equal terms a give a + tau·ln 2; a single-term window gives the
        // term itself. Checked through the KL machinery by a direct LSE of the
        // term list, which the sandwich test above exercises end to end; here
        // we pin the arithmetic identity on a constant list.
        let tau = 0.05;
        let a = 1.25;
        let lse = |terms: &[f64]| {
            let shift = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            tau * terms.iter().map(|t| ((t - shift) / tau).exp()).sum::<f64>().ln() + shift
        };
        assert!((lse(&[a]) - a).abs() < 1e-15);
        assert!((lse(&[a, a]) - (a + tau * 2.0_f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn decision_vector_flattening_round_trips() {
        let mut rng = Rng::new(31, 2);
        for steps in [1usize, 3, 5] {
            let layout = DecisionLayout {
                n: 3,
                w_dim: 2,
                v_dim: Some(1),
                steps,
            };
            let z: Vec<f64> = (0..layout.dim()).map(|_| rng.next_uniform(-4.0, 4.0)).collect();
            let dv = DecisionVector::unflatten(&z, layout);
            assert_eq!(dv.flatten(), z);
            assert_eq!(dv.layout(), layout);
        }
    }

    #[test]
    fn quadratic_discount_ordering_weights_recent_residuals_more() {
        // With all residuals equal, the term for a more recent index i carries
        // discount eta^{M-1-i}, which increases with i.
        let spec = QuadraticCost::new(1.0, 1.0, 1.0, 7.0 / 16.0, 4).unwrap();
        let m_len = 4;
        let terms: Vec<f64> = (0..m_len)
            .map(|i| libm::pow(spec.eta, (m_len - 1 - i) as f64))
            .collect();
        for i in 1..m_len {
            assert!(terms[i] > terms[i - 1]);
        }
    }
}
