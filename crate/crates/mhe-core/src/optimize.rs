//! The descent engine: gradient method with exact line search, relaxed
//! stopping, box projection, multi-start smoothing for nonsmooth objectives,
//! and a sampling convexity falsifier.

use alloc::vec::Vec;

use crate::model::AxisBox;
use crate::rng::Rng;

/// Gradient-norm threshold standing in for an exact zero-gradient exit.
pub const EXACT_TOL: f64 = 1e-9;

const LS_INITIAL_STEP: f64 = 1e-8;
const LS_MAX_DOUBLINGS: u32 = 60;
const LS_REL_TOL: f64 = 1e-10;
// Absolute floor so brackets collapsing onto the origin terminate.
const LS_ABS_TOL: f64 = 1e-18;
const GOLDEN_RATIO: f64 = 0.618_033_988_749_894_9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopMode {
    /// Run to the machine zero-gradient threshold [`EXACT_TOL`].
    Exact,
    /// Stop once the gradient norm falls below a per-step tolerance.
    Relaxed,
}

/// Termination rule for [`descend`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StopRule {
    pub grad_tol: f64,
    pub max_iters: usize,
}

impl StopRule {
    pub fn exact(max_iters: usize) -> Self {
        StopRule {
            grad_tol: EXACT_TOL,
            max_iters,
        }
    }

    pub fn relaxed(grad_tol: f64, max_iters: usize) -> Self {
        debug_assert!(grad_tol >= 0.0 && max_iters >= 1);
        StopRule {
            grad_tol,
            max_iters,
        }
    }
}

/// What a descent run did. `capped` is set when the run terminated without
/// meeting the gradient criterion (iteration cap, or the line search could no
/// longer decrease the cost at floating-point resolution).
#[derive(Clone, Debug, PartialEq)]
pub struct OptimReport {
    pub iterations: usize,
    pub grad_norm: f64,
    pub cost: f64,
    pub capped: bool,
    pub ls_evals: usize,
    /// Cost after each accepted iterate, starting at the initial point.
    pub cost_trace: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum OptimError {
    NonFiniteObjective,
    SchedulePrecondition {
        mu: f64,
        eta: f64,
        horizon: usize,
    },
    AllStartsFailed,
}

impl core::fmt::Display for OptimError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            OptimError::NonFiniteObjective => write!(f, "objective became non-finite during line search"),
            OptimError::SchedulePrecondition { mu, eta, horizon } => write!(
                f,
                "tolerance schedule requires 4*mu*eta^N < 1 (mu={mu}, eta={eta}, N={horizon})"
            ),
            OptimError::AllStartsFailed => write!(f, "every multi-start descent failed"),
        }
    }
}

/// Outcome of one exact line search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSearch {
    pub alpha: f64,
    pub phi: f64,
    pub evals: usize,
    /// No increase of φ was found before the doubling cap.
    pub capped: bool,
}

/// Minimize `φ` over `α ≥ 0`: bracket by doubling from 1e-8 until φ
/// increases, then golden-section to relative tolerance 1e-10. Returns the
/// best evaluated point (α = 0 included), so `φ(α*) ≤ φ(0)` always.
pub fn line_search_exact<F: FnMut(f64) -> f64>(phi: F) -> Result<LineSearch, OptimError> {
    line_search_exact_from(phi, LS_INITIAL_STEP)
}

/// [`line_search_exact`] with a caller-chosen first bracket step. The
/// descent loop scales it so the expected first-order decrease
/// `α·|∇J|²` stays resolvable against the cost's rounding floor; a fixed
/// 1e-8 start goes blind once `|∇J|² · 1e-8` drops under one ulp of J.
pub fn line_search_exact_from<F: FnMut(f64) -> f64>(
    mut phi: F,
    initial_step: f64,
) -> Result<LineSearch, OptimError> {
    let mut evals = 0usize;
    let mut best = (0.0f64, {
        evals += 1;
        let p0 = phi(0.0);
        if p0.is_nan() {
            return Err(OptimError::NonFiniteObjective);
        }
        p0
    });
    let track = |a: f64, p: f64, best: &mut (f64, f64)| {
        if p < best.1 {
            *best = (a, p);
        }
    };

    // Doubling phase: alpha_j = initial_step * 2^j. +inf counts as an
    // increase; NaN is an error.
    let mut prev2 = 0.0f64;
    let mut prev = 0.0f64;
    let mut prev_phi = best.1;
    let mut alpha = initial_step.max(LS_INITIAL_STEP);
    let mut bracket = None;
    for _ in 0..=LS_MAX_DOUBLINGS {
        evals += 1;
        let p = phi(alpha);
        if p.is_nan() {
            return Err(OptimError::NonFiniteObjective);
        }
        track(alpha, p, &mut best);
        if p > prev_phi {
            bracket = Some((prev2, alpha));
            break;
        }
        prev2 = prev;
        prev = alpha;
        prev_phi = p;
        alpha *= 2.0;
    }

    let (mut lo, mut hi) = match bracket {
        Some(b) => b,
        None => {
            // Monotone decrease to the doubling cap.
            return Ok(LineSearch {
                alpha: prev,
                phi: prev_phi,
                evals,
                capped: true,
            });
        }
    };

    // Golden-section on [lo, hi].
    let mut x1 = hi - GOLDEN_RATIO * (hi - lo);
    let mut x2 = lo + GOLDEN_RATIO * (hi - lo);
    evals += 2;
    let mut f1 = phi(x1);
    let mut f2 = phi(x2);
    if f1.is_nan() || f2.is_nan() {
        return Err(OptimError::NonFiniteObjective);
    }
    track(x1, f1, &mut best);
    track(x2, f2, &mut best);
    while hi - lo > LS_REL_TOL * hi + LS_ABS_TOL {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN_RATIO * (hi - lo);
            evals += 1;
            f1 = phi(x1);
            if f1.is_nan() {
                return Err(OptimError::NonFiniteObjective);
            }
            track(x1, f1, &mut best);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN_RATIO * (hi - lo);
            evals += 1;
            f2 = phi(x2);
            if f2.is_nan() {
                return Err(OptimError::NonFiniteObjective);
            }
            track(x2, f2, &mut best);
        }
    }

    Ok(LineSearch {
        alpha: best.0,
        phi: best.1,
        evals,
        capped: false,
    })
}

fn projected_gradient_norm(z: &[f64], grad: &[f64], bounds: &AxisBox) -> f64 {
    let mut acc = 0.0;
    for i in 0..z.len() {
        let stepped = (z[i] - grad[i]).clamp(bounds.lo[i], bounds.hi[i]);
        let d = z[i] - stepped;
        acc += d * d;
    }
    libm::sqrt(acc)
}

/// Solve the symmetric linear system `A x = b` in place by Gaussian
/// elimination with partial pivoting (tiny systems from the corral solver).
fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) -> bool {
    let n = b.len();
    for col in 0..n {
        let mut pivot = col;
        for row in (col + 1)..n {
            if libm::fabs(a[row][col]) > libm::fabs(a[pivot][col]) {
                pivot = row;
            }
        }
        if libm::fabs(a[pivot][col]) < 1e-300 {
            return false;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        let diag = a[col][col];
        for row in (col + 1)..n {
            let factor = a[row][col] / diag;
            if factor != 0.0 {
                for k in col..n {
                    a[row][k] -= factor * a[col][k];
                }
                b[row] -= factor * b[col];
            }
        }
    }
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in (col + 1)..n {
            acc -= a[col][k] * b[k];
        }
        b[col] = acc / a[col][col];
    }
    true
}

/// Affine minimum-norm combination of the corral vertices: minimize
/// `‖Σ λ_i v_i‖²` subject to `Σ λ_i = 1` (weights may be negative).
fn affine_min_norm(vertices: &[&[f64]]) -> Option<Vec<f64>> {
    let k = vertices.len();
    let mut a = alloc::vec![alloc::vec![0.0; k + 1]; k + 1];
    let mut b = alloc::vec![0.0; k + 1];
    for i in 0..k {
        for jj in 0..k {
            a[i][jj] = 2.0 * vertices[i].iter().zip(vertices[jj]).map(|(x, y)| x * y).sum::<f64>();
        }
        a[i][k] = 1.0;
        a[k][i] = 1.0;
    }
    b[k] = 1.0;
    if solve_dense(&mut a, &mut b) {
        b.truncate(k);
        Some(b)
    } else {
        None
    }
}

/// Minimum-norm point of the convex hull of the bundle gradients, by Wolfe's
/// corral algorithm (exact up to rounding, finite termination; corrals stay
/// at most dimension-plus-one vertices).
pub fn min_norm_point(bundle: &[Vec<f64>]) -> Vec<f64> {
    let dim = bundle[0].len();
    let norm_sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    // Start from the shortest vertex.
    let mut start = 0;
    let mut best = f64::INFINITY;
    for (i, g) in bundle.iter().enumerate() {
        let n = norm_sq(g);
        if n < best {
            best = n;
            start = i;
        }
    }
    let mut corral: Vec<usize> = alloc::vec![start];
    let mut weights: Vec<f64> = alloc::vec![1.0];
    let mut x: Vec<f64> = bundle[start].clone();

    for _ in 0..200 {
        // Optimality: every vertex satisfies <x, v> >= ||x||^2 (within slack).
        let x_sq = norm_sq(&x);
        let mut best_dot = f64::INFINITY;
        let mut best_v = 0;
        for (i, g) in bundle.iter().enumerate() {
            let dot: f64 = x.iter().zip(g).map(|(a, b)| a * b).sum();
            if dot < best_dot {
                best_dot = dot;
                best_v = i;
            }
        }
        if best_dot >= x_sq - 1e-12 * x_sq.max(1e-300) || corral.contains(&best_v) {
            return x;
        }
        corral.push(best_v);
        weights.push(0.0);

        // Minor cycle: pull x toward the affine minimizer, dropping vertices
        // whose weight would cross zero.
        loop {
            let vertices: Vec<&[f64]> = corral.iter().map(|&i| bundle[i].as_slice()).collect();
            let affine = match affine_min_norm(&vertices) {
                Some(a) => a,
                None => return x,
            };
            if affine.iter().all(|&l| l > 1e-12) {
                weights = affine;
                break;
            }
            // Largest feasible step toward the affine point.
            let mut theta = 1.0f64;
            for (w, l) in weights.iter().zip(&affine) {
                if *l < 1e-12 {
                    let denom = w - l;
                    if denom > 1e-300 {
                        theta = theta.min(w / denom);
                    }
                }
            }
            for (w, l) in weights.iter_mut().zip(&affine) {
                *w = *w + theta * (l - *w);
            }
            // Drop zeroed vertices.
            let mut keep_idx = 0;
            let mut any_dropped = false;
            while keep_idx < weights.len() {
                if weights[keep_idx] <= 1e-12 {
                    weights.remove(keep_idx);
                    corral.remove(keep_idx);
                    any_dropped = true;
                } else {
                    keep_idx += 1;
                }
            }
            if corral.is_empty() {
                return x;
            }
            if !any_dropped {
                break;
            }
            if corral.len() > dim + 1 {
                break;
            }
        }
        // Recompose x from the corral weights.
        for c in x.iter_mut() {
            *c = 0.0;
        }
        let total: f64 = weights.iter().sum();
        for (w, &i) in weights.iter().zip(&corral) {
            for (c, gi) in x.iter_mut().zip(&bundle[i]) {
                *c += (w / total) * gi;
            }
        }
    }
    x
}

/// Projected gradient descent with exact line search along the projected
/// path. Terminates when the projected-gradient norm falls below
/// `stop.grad_tol`; the cost never increases across iterations.
///
/// The window costs are only piecewise-C¹ (absolute values inside the model
/// maps and norms of disturbance blocks), and a plain gradient step stalls on
/// a derivative jump. When a line search stops producing a resolvable
/// decrease, the loop switches to the minimum-norm direction of a two-point
/// gradient bundle sampled across the jump; if that direction's norm falls
/// below the tolerance, the iterate is stationary in the bundle sense and the
/// reported gradient norm is the bundle norm.
pub fn descend<J, G>(
    j: J,
    grad_j: G,
    z0: &[f64],
    bounds: &AxisBox,
    stop: &StopRule,
) -> Result<(Vec<f64>, OptimReport), OptimError>
where
    J: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let mut z = z0.to_vec();
    bounds.project(&mut z);
    let mut fz = j(&z);
    if !fz.is_finite() {
        return Err(OptimError::NonFiniteObjective);
    }
    let mut trace = Vec::new();
    trace.push(fz);
    let mut ls_evals = 0usize;
    let mut iterations = 0usize;
    let mut grad = grad_j(&z);
    let mut pg_norm = projected_gradient_norm(&z, &grad, bounds);
    let mut trial = z.clone();
    let mut probe = z.clone();
    // Accepted step length of the previous iteration, reused to seed the
    // bracket (step lengths vary slowly along a descent).
    let mut alpha_prev = 0.0f64;
    // Gradient bundle for kink recovery; persists while the iterate rides a
    // crease, cleared on a plain gradient step.
    let mut bundle: Vec<Vec<f64>> = Vec::new();
    let mut bundle_fresh = false;

    let report = |iterations, grad_norm, cost, capped, ls_evals, trace| OptimReport {
        iterations,
        grad_norm,
        cost,
        capped,
        ls_evals,
        cost_trace: trace,
    };

    while pg_norm > stop.grad_tol {
        if iterations >= stop.max_iters {
            return Ok((z, report(iterations, pg_norm, fz, true, ls_evals, trace)));
        }
        iterations += 1;

        // A decrease below ~2000 ulps of J is indistinguishable from
        // rounding; treat it as a stall.
        let floor = 4.4e-13 * (libm::fabs(fz) + 1e-300);
        let mut search = |dir: &[f64], z_ref: &[f64], fz: f64| -> Result<LineSearch, OptimError> {
            // Scale the first bracket step so the expected decrease
            // alpha·|dir|² is at least ~1e4 ulps of the current cost, and
            // seed it with the previous accepted step.
            let d_sq: f64 = dir.iter().map(|d| d * d).sum();
            let initial_step = (1e4 * f64::EPSILON * (libm::fabs(fz) + 1e-300)
                / d_sq.max(1e-300))
            .max(LS_INITIAL_STEP)
            .max(alpha_prev * 0.25);
            let trial_ref = &mut trial;
            line_search_exact_from(
                |alpha| {
                    for ((t, &zi), &di) in trial_ref.iter_mut().zip(z_ref).zip(dir) {
                        *t = zi - alpha * di;
                    }
                    bounds.project(trial_ref);
                    j(trial_ref)
                },
                initial_step,
            )
        };

        let ls = search(&grad, &z, fz)?;
        ls_evals += ls.evals;
        let mut accepted = if fz - ls.phi > floor {
            bundle.clear();
            bundle_fresh = false;
            Some((ls.alpha, grad.clone(), ls.phi))
        } else {
            None
        };

        if accepted.is_none() {
            // The iterate sits on a derivative jump (the window costs are
            // only piecewise-C¹): ride the kink with a gradient bundle.
            // Descend along the minimum-norm point of the sampled
            // subdifferential hull; certify stationarity when that point's
            // norm drops below the tolerance on a freshly sampled bundle.
            let full_sample =
                |z: &[f64], seed: usize, bundle: &mut Vec<Vec<f64>>, probe: &mut Vec<f64>| {
                    bundle.clear();
                    let mut rng = Rng::new(0xB11D, seed as u64);
                    // One-sided coordinate probes pick up axis-aligned
                    // pieces; random two-radius ball probes cover sign
                    // combinations of intersecting kink surfaces.
                    for i in 0..z.len() {
                        for sign in [-1.0, 1.0] {
                            probe.copy_from_slice(z);
                            probe[i] += sign * 1e-7 * (1.0 + libm::fabs(z[i]));
                            bounds.project(probe);
                            bundle.push(grad_j(probe));
                        }
                    }
                    for radius in [1e-9, 1e-6] {
                        for _ in 0..16 {
                            for (p, &zi) in probe.iter_mut().zip(z.iter()) {
                                *p = zi + rng.next_uniform(-radius, radius) * (1.0 + libm::fabs(zi));
                            }
                            bounds.project(probe);
                            bundle.push(grad_j(probe));
                        }
                    }
                };

            for _pass in 0..4 {
                if bundle.is_empty() {
                    full_sample(&z, iterations, &mut bundle, &mut probe);
                    bundle_fresh = true;
                }
                bundle.push(grad.clone());
                let dir = min_norm_point(&bundle);
                let dir_pg = projected_gradient_norm(&z, &dir, bounds);
                if dir_pg <= stop.grad_tol {
                    if bundle_fresh {
                        return Ok((z, report(iterations, dir_pg, fz, false, ls_evals, trace)));
                    }
                    // Stale evidence: resample at the current iterate and
                    // re-evaluate before certifying.
                    full_sample(&z, iterations, &mut bundle, &mut probe);
                    bundle_fresh = true;
                    continue;
                }
                let ls2 = search(&dir, &z, fz)?;
                ls_evals += ls2.evals;
                if fz - ls2.phi > floor {
                    accepted = Some((ls2.alpha, dir, ls2.phi));
                    // Keep the bundle for the next iteration, marked stale;
                    // piece gradients drift slowly along the kink.
                    bundle_fresh = false;
                    if bundle.len() > 72 {
                        let excess = bundle.len() - 72;
                        bundle.drain(..excess);
                    }
                    break;
                }
                if bundle_fresh {
                    // Even the freshly sampled direction cannot decrease the
                    // cost: genuine floor.
                    break;
                }
                full_sample(&z, iterations, &mut bundle, &mut probe);
                bundle_fresh = true;
            }
        }

        match accepted {
            Some((alpha, dir, phi)) => {
                for (zi, di) in z.iter_mut().zip(&dir) {
                    *zi -= alpha * di;
                }
                bounds.project(&mut z);
                fz = phi;
                alpha_prev = alpha;
                trace.push(fz);
                grad = grad_j(&z);
                pg_norm = projected_gradient_norm(&z, &grad, bounds);
            }
            None => {
                // No direction yields a resolvable decrease: the iterate sits
                // at the cost's floating-point floor.
                return Ok((z, report(iterations, pg_norm, fz, true, ls_evals, trace)));
            }
        }
    }

    Ok((
        z,
        OptimReport {
            iterations,
            grad_norm: pg_norm,
            cost: fz,
            capped: false,
            ls_evals,
            cost_trace: trace,
        },
    ))
}

/// The per-step gradient tolerance of the relaxed stopping rule:
/// `ε̂_t = ε·η^{t/2}` while the window is still growing (`t ≤ N`) and the
/// constant `ε·η^{N/2}·sqrt(1 − 4μη^N)` afterwards. Requires `4μη^N < 1`.
pub fn epsilon_schedule(
    epsilon: f64,
    eta: f64,
    mu: f64,
    horizon: usize,
    t: usize,
) -> Result<f64, OptimError> {
    debug_assert!(t >= 1);
    let contraction = 4.0 * mu * libm::pow(eta, horizon as f64);
    if !(contraction < 1.0) {
        return Err(OptimError::SchedulePrecondition {
            mu,
            eta,
            horizon,
        });
    }
    Ok(if t <= horizon {
        epsilon * libm::pow(eta, t as f64 / 2.0)
    } else {
        epsilon * libm::pow(eta, horizon as f64 / 2.0) * libm::sqrt(1.0 - contraction)
    })
}

/// Options for the multi-start smoothed solver.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiStart {
    pub starts: usize,
    /// Smoothing temperatures, annealed in order.
    pub tau_ladder: Vec<f64>,
    pub seed: u64,
    /// Sampling half-width on coordinates whose constraint box is unbounded.
    pub sample_radius: f64,
    /// Temperature of the final polish pass, which descends the *true*
    /// objective along smoothed-gradient rays to shed the O(τ) smoothing
    /// bias of the last ladder stage. Zero disables it.
    pub polish_tau: f64,
}

impl Default for MultiStart {
    fn default() -> Self {
        MultiStart {
            starts: 8,
            tau_ladder: alloc::vec![1e-1, 1e-2, 1e-3, 1e-4],
            seed: 0,
            sample_radius: 1.0,
            polish_tau: 1e-7,
        }
    }
}

/// Iteration cap per smoothed annealing stage: the stages only have to land
/// in the right basin; the polish pass does the endgame on the true
/// objective.
const STAGE_ITER_CAP: usize = 200;
/// Candidates kept after the first annealing stage.
const PRUNE_KEEP: usize = 3;

/// Minimize a nonsmooth objective through its smoothed surrogate: descend on
/// `j_smooth(·, τ)` with `τ` annealed over the ladder, from the warm start
/// plus `starts − 1` seeded samples, returning the best final point under the
/// true objective (ties broken by start index). After the first stage only
/// the best few candidates are annealed further; a final pass descends the
/// true objective directly (accepting only genuine decreases) to shed the
/// smoothing bias.
pub fn minimize_multistart<JT, JS, GS>(
    j_true: JT,
    j_smooth: JS,
    grad_smooth: GS,
    z0: &[f64],
    bounds: &AxisBox,
    opts: &MultiStart,
    stop: &StopRule,
) -> Result<(Vec<f64>, OptimReport), OptimError>
where
    JT: Fn(&[f64]) -> f64,
    JS: Fn(&[f64], f64) -> f64,
    GS: Fn(&[f64], f64) -> Vec<f64>,
{
    debug_assert!(opts.starts >= 1);
    let mut total_iterations = 0usize;
    let mut total_evals = 0usize;
    let stage_stop = StopRule {
        grad_tol: stop.grad_tol,
        max_iters: stop.max_iters.min(STAGE_ITER_CAP),
    };

    // Stage 1 at the coarsest temperature, from every start.
    let first_tau = opts.tau_ladder.first().copied().unwrap_or(1e-1);
    let mut candidates: Vec<(f64, usize, Vec<f64>, OptimReport)> = Vec::new();
    for start in 0..opts.starts.max(1) {
        let z_start = if start == 0 {
            z0.to_vec()
        } else {
            let mut rng = Rng::new(opts.seed, start as u64);
            bounds.sample_around(z0, opts.sample_radius, &mut rng)
        };
        if let Ok((z_new, report)) = descend(
            |p| j_smooth(p, first_tau),
            |p| grad_smooth(p, first_tau),
            &z_start,
            bounds,
            &stage_stop,
        ) {
            total_iterations += report.iterations;
            total_evals += report.ls_evals;
            candidates.push((j_true(&z_new), start, z_new, report));
        }
    }
    if candidates.is_empty() {
        return Err(OptimError::AllStartsFailed);
    }
    candidates.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    candidates.truncate(PRUNE_KEEP);

    // Remaining ladder stages and the polish pass on the survivors.
    let mut best: Option<(f64, usize, Vec<f64>, OptimReport)> = None;
    for (_, start, mut z, mut last_report) in candidates {
        let mut failed = false;
        for &tau in opts.tau_ladder.iter().skip(1) {
            match descend(
                |p| j_smooth(p, tau),
                |p| grad_smooth(p, tau),
                &z,
                bounds,
                &stage_stop,
            ) {
                Ok((z_new, report)) => {
                    total_iterations += report.iterations;
                    total_evals += report.ls_evals;
                    z = z_new;
                    last_report = report;
                }
                Err(_) => {
                    failed = true;
                    break;
                }
            }
        }
        if !failed && opts.polish_tau > 0.0 {
            // Line searches evaluate the true objective, so only genuine
            // improvements are accepted; at kink points the surrogate
            // direction stops helping and the pass exits quickly.
            match descend(
                &j_true,
                |p| grad_smooth(p, opts.polish_tau),
                &z,
                bounds,
                stop,
            ) {
                Ok((z_new, report)) => {
                    total_iterations += report.iterations;
                    total_evals += report.ls_evals;
                    z = z_new;
                    last_report = report;
                }
                Err(_) => failed = true,
            }
        }
        if failed {
            continue;
        }
        let score = j_true(&z);
        let replace = match &best {
            None => true,
            Some((s, b_start, _, _)) => score < *s || (score == *s && start < *b_start),
        };
        if replace {
            best = Some((score, start, z, last_report));
        }
    }

    match best {
        Some((score, _, mut z, mut report)) => {
            let mut score = score;
            // Scale-adaptive tail on the winner: re-anneal the temperature
            // with the current cost so the smoothing bias τ·ln(#terms) drops
            // below the cost scale itself. Matters when the window data is
            // near-perfectly explainable and the minimax value is tiny.
            if opts.polish_tau > 0.0 {
                let ladder_floor = opts.tau_ladder.last().copied().unwrap_or(1e-4);
                let mut last_tau = f64::INFINITY;
                for _ in 0..6 {
                    let tau = (0.02 * score).min(ladder_floor);
                    if tau >= last_tau || tau < 1e-16 {
                        break;
                    }
                    last_tau = tau;
                    if let Ok((z_new, r)) = descend(
                        |p| j_smooth(p, tau),
                        |p| grad_smooth(p, tau),
                        &z,
                        bounds,
                        &stage_stop,
                    ) {
                        total_iterations += r.iterations;
                        total_evals += r.ls_evals;
                        if j_true(&z_new) < score {
                            z = z_new;
                        }
                    }
                    if let Ok((z_new, r)) = descend(
                        &j_true,
                        |p| grad_smooth(p, tau),
                        &z,
                        bounds,
                        &stage_stop,
                    ) {
                        total_iterations += r.iterations;
                        total_evals += r.ls_evals;
                        if j_true(&z_new) < score {
                            z = z_new;
                        }
                    }
                    score = j_true(&z);
                }
            }
            // Coordinate sweeps on the winner: the disturbance blocks enter
            // the cost through norm cones at the origin, and exact
            // line searches one coordinate at a time slide along those kinks
            // where ray descent cannot.
            if opts.polish_tau > 0.0 {
                'sweeps: for _ in 0..4 {
                    let mut improved = false;
                    for i in 0..z.len() {
                        for sign in [1.0, -1.0] {
                            let initial = 1e-6 * (1.0 + libm::fabs(z[i]));
                            let zc = &z;
                            let ls = {
                                let mut trial = zc.clone();
                                match line_search_exact_from(
                                    |alpha| {
                                        trial[i] = (zc[i] + sign * alpha)
                                            .clamp(bounds.lo[i], bounds.hi[i]);
                                        j_true(&trial)
                                    },
                                    initial,
                                ) {
                                    Ok(ls) => ls,
                                    Err(_) => break 'sweeps,
                                }
                            };
                            total_evals += ls.evals;
                            if score - ls.phi > 4.4e-13 * (libm::fabs(score) + 1e-300) {
                                z[i] = (z[i] + sign * ls.alpha).clamp(bounds.lo[i], bounds.hi[i]);
                                score = ls.phi;
                                total_iterations += 1;
                                improved = true;
                            }
                        }
                    }
                    if !improved {
                        break;
                    }
                }
            }
            report.cost = score;
            report.iterations = total_iterations;
            report.ls_evals = total_evals;
            Ok((z, report))
        }
        None => Err(OptimError::AllStartsFailed),
    }
}

/// Verdict of the sampling convexity falsifier.
#[derive(Clone, Debug, PartialEq)]
pub enum ConvexityVerdict {
    /// A triple violating the convexity inequality by more than 1e-9.
    Witness {
        xi: Vec<f64>,
        zeta: Vec<f64>,
        tau: f64,
        gap: f64,
    },
    /// No violation found; explicitly not a convexity proof.
    NoWitnessFound { samples: usize },
}

/// Sample `(ξ, ζ, τ)` uniformly and report a witness whenever
/// `τ·g(ξ) + (1-τ)·g(ζ) − g(τξ + (1-τ)ζ) < -1e-9`.
pub fn convexity_falsifier<G>(
    g: G,
    domain: &AxisBox,
    samples: usize,
    seed: u64,
) -> ConvexityVerdict
where
    G: Fn(&[f64]) -> f64,
{
    let mut rng = Rng::new(seed, 0xC0);
    let center = alloc::vec![0.0; domain.dim()];
    for _ in 0..samples {
        let xi = domain.sample_around(&center, 1.0, &mut rng);
        let zeta = domain.sample_around(&center, 1.0, &mut rng);
        let tau = rng.next_unit();
        let mix: Vec<f64> = xi
            .iter()
            .zip(&zeta)
            .map(|(&a, &b)| tau * a + (1.0 - tau) * b)
            .collect();
        let gap = tau * g(&xi) + (1.0 - tau) * g(&zeta) - g(&mix);
        if gap < -1e-9 {
            return ConvexityVerdict::Witness {
                xi,
                zeta,
                tau,
                gap,
            };
        }
    }
    ConvexityVerdict::NoWitnessFound { samples }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    #[test]
    fn line_search_finds_quadratic_minimum() {
        let ls = line_search_exact(|a| (a - 3.0) * (a - 3.0)).unwrap();
        assert!((ls.alpha - 3.0).abs() < 1e-8, "alpha = {}", ls.alpha);
        assert!(!ls.capped);
    }

    #[test]
    fn line_search_collapses_on_monotone_increase() {
        let ls = line_search_exact(|a| a).unwrap();
        assert!(ls.alpha <= LS_INITIAL_STEP);
        assert_eq!(ls.phi, 0.0);
    }

    #[test]
    fn line_search_caps_on_monotone_decrease() {
        let ls = line_search_exact(|a| -a).unwrap();
        assert!(ls.capped);
        assert!(ls.alpha >= 1e9);
    }

    #[test]
    fn descent_solves_spherical_quadratic_in_one_iteration() {
        let target = [1.0, -2.0, 0.5];
        let j = |z: &[f64]| crate::dual::dist_sq(z, &target);
        let g = |z: &[f64]| -> Vec<f64> {
            z.iter().zip(&target).map(|(zi, ti)| 2.0 * (zi - ti)).collect()
        };
        let (z, report) = descend(
            j,
            g,
            &[0.0, 0.0, 0.0],
            &AxisBox::unbounded(3),
            &StopRule::exact(100),
        )
        .unwrap();
        assert_eq!(report.iterations, 1, "grad norm {}", report.grad_norm);
        assert!(crate::dual::dist(&z, &target) < 1e-8);
        assert!(!report.capped);
    }

    #[test]
    fn relaxed_never_uses_more_iterations_than_exact() {
        // Ill-conditioned quadratic with zero minimum: same start, same
        // problem.
        let j = |z: &[f64]| z[0] * z[0] + 50.0 * z[1] * z[1];
        let g = |z: &[f64]| vec![2.0 * z[0], 100.0 * z[1]];
        let z0 = [4.0, -3.0];
        let b = AxisBox::unbounded(2);
        let (_, exact) = descend(j, g, &z0, &b, &StopRule::exact(10_000)).unwrap();
        let (_, relaxed) = descend(j, g, &z0, &b, &StopRule::relaxed(0.1, 10_000)).unwrap();
        assert!(relaxed.iterations <= exact.iterations);
        assert!(relaxed.grad_norm <= 0.1);
        assert!(exact.grad_norm <= EXACT_TOL, "grad: {}", exact.grad_norm);
    }

    #[test]
    fn descent_cost_trace_is_monotone() {
        let j = |z: &[f64]| {
            let a = z[0] - 1.0;
            let b = z[1] + 2.0;
            a * a * a * a + 10.0 * b * b + a * a
        };
        let g = |z: &[f64]| {
            let a = z[0] - 1.0;
            let b = z[1] + 2.0;
            vec![4.0 * a * a * a + 2.0 * a, 20.0 * b]
        };
        let (_, report) = descend(j, g, &[5.0, 5.0], &AxisBox::unbounded(2), &StopRule::relaxed(1e-6, 5_000)).unwrap();
        for k in 1..report.cost_trace.len() {
            assert!(report.cost_trace[k] <= report.cost_trace[k - 1]);
        }
    }

    #[test]
    fn descent_respects_box_constraints() {
        // Unconstrained minimum at (2, 2); box caps it at (1, 1).
        let j = |z: &[f64]| crate::dual::dist_sq(z, &[2.0, 2.0]);
        let g = |z: &[f64]| vec![2.0 * (z[0] - 2.0), 2.0 * (z[1] - 2.0)];
        let b = AxisBox::uniform(2, -1.0, 1.0);
        let (z, report) = descend(j, g, &[0.0, -0.5], &b, &StopRule::exact(1_000)).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-9 && (z[1] - 1.0).abs() < 1e-9);
        assert!(!report.capped, "projected gradient should vanish at the face");
    }

    #[test]
    fn exact_line_search_gives_orthogonal_successive_directions() {
        // One descent step on a convex quadratic: the new gradient is
        // orthogonal to the search direction.
        let h = [[3.0, 0.4], [0.4, 1.0]];
        let j = |z: &[f64]| {
            0.5 * (h[0][0] * z[0] * z[0] + 2.0 * h[0][1] * z[0] * z[1] + h[1][1] * z[1] * z[1])
        };
        let g = |z: &[f64]| {
            vec![
                h[0][0] * z[0] + h[0][1] * z[1],
                h[0][1] * z[0] + h[1][1] * z[1],
            ]
        };
        let z0 = [1.0, 1.0];
        let g0 = g(&z0);
        let ls = line_search_exact(|a| j(&[z0[0] - a * g0[0], z0[1] - a * g0[1]])).unwrap();
        let z1 = [z0[0] - ls.alpha * g0[0], z0[1] - ls.alpha * g0[1]];
        let g1 = g(&z1);
        let dot = g0[0] * g1[0] + g0[1] * g1[1];
        assert!(dot.abs() < 1e-6, "dot = {dot}");
    }

    #[test]
    fn epsilon_schedule_matches_direct_evaluation() {
        let e1 = epsilon_schedule(0.01, 7.0 / 16.0, 2.0, 3, 1).unwrap();
        assert!((e1 - 6.614378277661477e-3).abs() < 1e-12);
        let e10 = epsilon_schedule(0.01, 7.0 / 16.0, 2.0, 3, 10).unwrap();
        assert!((e10 - 1.6625528427559994e-3).abs() < 1e-12);
        // Constant past the horizon, strictly positive, non-increasing.
        let mut prev = f64::INFINITY;
        for t in 1..30 {
            let e = epsilon_schedule(0.01, 7.0 / 16.0, 2.0, 3, t).unwrap();
            assert!(e > 0.0 && e <= prev);
            if t > 3 {
                assert_eq!(e, e10);
            }
            prev = e;
        }
    }

    #[test]
    fn epsilon_schedule_rejects_violated_precondition() {
        assert!(matches!(
            epsilon_schedule(0.01, 0.9, 2.0, 3, 1),
            Err(OptimError::SchedulePrecondition { .. })
        ));
    }

    #[test]
    fn multistart_equals_descend_on_convex_smooth_objective() {
        let j = |z: &[f64]| crate::dual::dist_sq(z, &[0.3, -0.7]);
        let g = |z: &[f64]| vec![2.0 * (z[0] - 0.3), 2.0 * (z[1] + 0.7)];
        let b = AxisBox::uniform(2, -2.0, 2.0);
        let stop = StopRule::relaxed(1e-8, 1_000);
        let opts = MultiStart {
            starts: 1,
            tau_ladder: vec![1.0],
            seed: 1,
            sample_radius: 1.0,
            polish_tau: 0.0,
        };
        // Temperature is ignored by this smooth surrogate.
        let (z_ms, _) =
            minimize_multistart(j, |z, _| j(z), |z, _| g(z), &[1.5, 1.5], &b, &opts, &stop).unwrap();
        let (z_d, _) = descend(j, g, &[1.5, 1.5], &b, &stop).unwrap();
        assert_eq!(z_ms, z_d);
    }

    #[test]
    fn multistart_finds_global_basin_of_two_well_objective() {
        // j(z) = min(|z-1| + 0.05, |z+1|) + z²/100: two basins, the global
        // one near z = -1. Brute-force grid oracle on [-2, 2].
        let j = |z: &[f64]| {
            let d = ((z[0] - 1.0).abs() + 0.05).min((z[0] + 1.0).abs());
            d + z[0] * z[0] / 100.0
        };
        let smooth = |z: &[f64], tau: f64| {
            // softmin(a,b) = -tau log(e^{-a/tau} + e^{-b/tau})
            let a = (z[0] - 1.0).abs() + 0.05;
            let b = (z[0] + 1.0).abs();
            let m = a.min(b);
            let lse = -tau * (((m - a) / tau).exp() + ((m - b) / tau).exp()).ln() + m;
            lse + z[0] * z[0] / 100.0
        };
        let gsm = |z: &[f64], tau: f64| crate::dual::gradient(
            |zd| {
                use crate::dual::{Dual, Real};
                let a = (zd[0] - Dual::constant(1.0)).abs() + Dual::constant(0.05);
                let b = (zd[0] + Dual::constant(1.0)).abs();
                let m = a.value().min(b.value());
                let ta = Dual::constant(1.0 / tau);
                let lse = -((-(a - Dual::constant(m)) * ta).exp()
                    + (-(b - Dual::constant(m)) * ta).exp())
                .ln()
                    * Dual::constant(tau)
                    + Dual::constant(m);
                lse + zd[0] * zd[0] * Dual::constant(0.01)
            },
            z,
        );
        let mut grid_best = f64::INFINITY;
        let mut at = 0.0;
        for i in 0..=4000 {
            let x = -2.0 + i as f64 * 0.001;
            let v = j(&[x]);
            if v < grid_best {
                grid_best = v;
                at = x;
            }
        }
        assert!(at < 0.0, "oracle picks the left basin: {at}");

        let b = AxisBox::uniform(1, -2.0, 2.0);
        let opts = MultiStart {
            starts: 8,
            tau_ladder: vec![1e-1, 1e-2, 1e-3, 1e-4],
            seed: 42,
            sample_radius: 1.0,
            polish_tau: 1e-7,
        };
        let stop = StopRule::relaxed(1e-7, 2_000);
        // Start in the wrong (right) basin.
        let (z, rep) = minimize_multistart(j, smooth, gsm, &[1.2], &b, &opts, &stop).unwrap();
        assert!(rep.cost <= grid_best + 1e-3, "{} vs {}", rep.cost, grid_best);
        assert!(z[0] < 0.0);

        // Single start from the wrong basin stays there; multistart is no worse.
        let opts1 = MultiStart {
            starts: 1,
            ..opts.clone()
        };
        let (_, rep1) = minimize_multistart(j, smooth, gsm, &[1.2], &b, &opts1, &stop).unwrap();
        assert!(rep.cost <= rep1.cost + 1e-12);
    }

    #[test]
    fn multistart_is_seed_reproducible() {
        let j = |z: &[f64]| (z[0] * z[0] - 1.0) * (z[0] * z[0] - 1.0) + 0.1 * z[0];
        let smooth = |z: &[f64], _| j(z);
        let g = |z: &[f64], _| vec![4.0 * z[0] * (z[0] * z[0] - 1.0) + 0.1];
        let b = AxisBox::uniform(1, -3.0, 3.0);
        let opts = MultiStart {
            starts: 6,
            tau_ladder: vec![1.0],
            seed: 7,
            sample_radius: 1.0,
            polish_tau: 0.0,
        };
        let stop = StopRule::relaxed(1e-9, 2_000);
        let (z1, _) = minimize_multistart(j, smooth, g, &[2.0], &b, &opts, &stop).unwrap();
        let (z2, _) = minimize_multistart(j, smooth, g, &[2.0], &b, &opts, &stop).unwrap();
        assert_eq!(z1, z2);
    }

    #[test]
    fn convexity_falsifier_accepts_convex_and_rejects_concave() {
        let b = AxisBox::uniform(2, -1.0, 1.0);
        let convex = convexity_falsifier(crate::dual::norm_sq::<f64>, &b, 100_000, 3);
        assert!(matches!(convexity_falsifier_result(&convex), false), "{convex:?}");
        let concave = convexity_falsifier(|z: &[f64]| -crate::dual::norm_sq(z), &b, 100_000, 3);
        assert!(matches!(convexity_falsifier_result(&concave), true), "{concave:?}");
    }

    fn convexity_falsifier_result(v: &ConvexityVerdict) -> bool {
        matches!(v, ConvexityVerdict::Witness { .. })
    }
}
