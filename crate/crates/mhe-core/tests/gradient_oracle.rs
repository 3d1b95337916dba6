//! Dual-number gradients against an independent central-difference oracle.

use mhe_core::cost;
use mhe_core::rng::Rng;
use mhe_core::systems;
use mhe_core::Window;

/// The oracle: central differences with step `h`, independent of the
/// forward-mode path.
fn central_diff<F: Fn(&[f64]) -> f64>(f: F, z: &[f64], h: f64) -> Vec<f64> {
    let mut grad = Vec::with_capacity(z.len());
    for i in 0..z.len() {
        let mut zp = z.to_vec();
        let mut zm = z.to_vec();
        zp[i] += h;
        zm[i] -= h;
        grad.push((f(&zp) - f(&zm)) / (2.0 * h));
    }
    grad
}

fn assert_grad_close(analytic: &[f64], oracle: &[f64], what: &str) {
    let norm: f64 = analytic.iter().map(|g| g * g).sum::<f64>().sqrt();
    for (i, (a, o)) in analytic.iter().zip(oracle).enumerate() {
        let tol = 1e-6_f64.max(1e-4 * norm) * o.abs().max(1.0);
        assert!(
            (a - o).abs() <= tol.max(1e-6),
            "{what}: coord {i}: dual {a} vs fd {o} (norm {norm})"
        );
    }
}

fn random_window(
    model: &mhe_core::SystemModel<systems::Builtin>,
    len: usize,
    rng: &mut Rng,
) -> Window {
    let d = model.dims();
    Window {
        len,
        prior: (0..d.n).map(|_| rng.next_uniform(-2.0, 2.0)).collect(),
        measurements: (0..len)
            .map(|_| (0..d.m).map(|_| rng.next_uniform(-3.0, 3.0)).collect())
            .collect(),
        inputs: (0..len)
            .map(|_| (0..d.p).map(|_| rng.next_uniform(-1.0, 1.0)).collect())
            .collect(),
        time: len,
    }
}

#[test]
fn quadratic_gradient_matches_central_differences_on_100_points() {
    let model = systems::build_example1();
    let spec = systems::example1_quadratic(3);
    let mut rng = Rng::new(2718, 0);
    for trial in 0..100 {
        let len = 1 + (trial % 3);
        let win = random_window(&model, len, &mut rng);
        let dim = 3 + 3 * len;
        let z: Vec<f64> = (0..dim).map(|_| rng.next_uniform(-1.5, 1.5)).collect();
        let g = cost::grad_quadratic(&model, &spec, &win, &z);
        let fd = central_diff(
            |p| cost::eval_quadratic(&model, &spec, &win, p),
            &z,
            1e-6,
        );
        assert_grad_close(&g, &fd, &format!("quadratic trial {trial}"));
    }
}

#[test]
fn smoothed_maxform_gradient_matches_central_differences_on_100_points() {
    for (name, model, spec) in [
        ("example1", systems::build_example1(), systems::example1_maxform(3)),
        ("example2", systems::build_example2(), systems::example2_maxform(3)),
    ] {
        let d = model.dims();
        let mut rng = Rng::new(31415, 7);
        for trial in 0..100 {
            let len = 1 + (trial % 3);
            let win = random_window(&model, len, &mut rng);
            let dim = d.n + len * (d.nw + d.m);
            // Random points avoid the measure-zero norm kinks almost surely.
            let z: Vec<f64> = (0..dim).map(|_| rng.next_uniform(-1.0, 1.0)).collect();
            for tau in [1e-1, 1e-3] {
                let g = cost::grad_smoothed_maxform(&model, &spec, &win, &z, tau);
                let fd = central_diff(
                    |p| cost::smoothed_maxform(&model, &spec, &win, p, tau),
                    &z,
                    1e-6,
                );
                assert_grad_close(&g, &fd, &format!("{name} maxform trial {trial} tau {tau}"));
            }
        }
    }
}
