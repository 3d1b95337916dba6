//! Built-in benchmark systems, their detectability data, scenario
//! definitions, and seeded noise generation.
//!
//! Two systems are registered by name:
//!
//! - `"example1"` — a third-order system with saturating nonlinearities,
//!   a known input, additive process noise on every state, and additive
//!   measurement noise. It admits a quadratic incremental Lyapunov function
//!   with exponential decay, so both the quadratic and the max-form
//!   estimators apply.
//! - `"example2"` — a second-order system whose noise-free solutions decay
//!   slower than any exponential and whose measurement noise enters the
//!   output map multiplicatively; only the max-form estimator applies, with
//!   penalties derived from a log-quadratic certificate.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::certify::{
    derive_betas, Certificate, ComparisonFn, DissipationDomain, LyapunovSpec,
};
use crate::cost::{MaxFormCost, QuadraticCost};
use crate::dual::Real;
use crate::mhe::{CostSpec, EstimatorConfig, MheError};
use crate::model::{AxisBox, Dims, Plant, SystemModel};
use crate::optimize::{MultiStart, StopMode};
use crate::rng::Stream;

/// The registered benchmark plants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Builtin {
    Example1,
    Example2,
}

impl Plant for Builtin {
    fn dims(&self) -> Dims {
        match self {
            Builtin::Example1 => Dims {
                n: 3,
                m: 1,
                p: 1,
                nw: 3,
            },
            Builtin::Example2 => Dims {
                n: 2,
                m: 1,
                p: 0,
                nw: 1,
            },
        }
    }

    fn f<T: Real>(&self, x: &[T], u: &[T], w: &[T], out: &mut [T]) {
        match self {
            Builtin::Example1 => {
                let quarter = T::constant(0.25);
                let one = T::constant(1.0);
                out[0] = x[0] * quarter + (x[1].abs() + one).ln() * quarter + w[0];
                out[1] = (x[0] + x[2] * x[2]).atan() + w[1];
                out[2] = (x[1] + x[2]).sin() * quarter + u[0] + w[2];
            }
            Builtin::Example2 => {
                let one = T::constant(1.0);
                out[0] = x[0] / (x[0] * x[0] + one).sqrt() + T::constant(0.1) * x[1] * x[1];
                out[1] = T::constant(0.5) * x[1].sin() + w[0];
            }
        }
    }

    fn h<T: Real>(&self, x: &[T], v: &[T], out: &mut [T]) {
        match self {
            Builtin::Example1 => {
                out[0] = x[0] + x[2] * x[2] + v[0];
            }
            Builtin::Example2 => {
                out[0] = x[0] + x[1] * x[1] + (x[0] + x[1]).atan() * v[0];
            }
        }
    }
}

/// Third-order benchmark, unconstrained domains.
pub fn build_example1() -> SystemModel<Builtin> {
    SystemModel::unconstrained(Builtin::Example1)
}

/// Second-order benchmark with multiplicative measurement noise:
/// states in [-2,2]², process noise in [-0.01,0.01], measurement noise in
/// [-0.5,0.5].
pub fn build_example2() -> SystemModel<Builtin> {
    SystemModel {
        plant: Builtin::Example2,
        x_box: AxisBox::uniform(2, -2.0, 2.0),
        w_box: AxisBox::uniform(1, -0.01, 0.01),
        v_box: AxisBox::uniform(1, -0.5, 0.5),
        u_box: AxisBox::unbounded(0),
    }
}

/// Look a model up by registry name.
pub fn model_by_name(name: &str) -> Option<SystemModel<Builtin>> {
    match name {
        "example1" => Some(build_example1()),
        "example2" => Some(build_example2()),
        _ => None,
    }
}

pub const MODEL_NAMES: [&str; 2] = ["example1", "example2"];

/// Quadratic incremental Lyapunov data of example1:
/// `V = |x−z|²` decreasing at rate 7/16 with supply rates `3|Δw|²` and
/// `2|Δh|²`.
pub fn example1_lyapunov() -> LyapunovSpec {
    LyapunovSpec {
        v: ComparisonFn::power(1.0, 2.0),
        alpha1: ComparisonFn::power(1.0, 2.0),
        alpha2: ComparisonFn::power(1.0, 2.0),
        alpha3: ComparisonFn::power(9.0 / 16.0, 2.0),
        sigma_w: ComparisonFn::power(3.0, 2.0),
        sigma_y: ComparisonFn::power(2.0, 2.0),
        sigma_v: None,
    }
}

/// Exponential-detectability gains of example1.
pub fn example1_certificate() -> Certificate {
    Certificate::Ueioss {
        c_x: 1.0,
        c_v: 140.0 / 3.0,
        c_w: 146.0 / 3.0,
        eta: 7.0 / 16.0,
    }
}

/// Log-quadratic certificate constants of example2 (falsification-tested).
pub fn example2_certificate() -> Certificate {
    Certificate::Uioss {
        c0: 0.8751,
        c1: 6.3899,
        c_w: 5.0010,
        c_y: 0.1822,
        c_v: 4.9997,
    }
}

/// Sampling domain used to stress the example1 dissipation inequality.
pub fn example1_dissipation_domain() -> DissipationDomain {
    DissipationDomain {
        x: AxisBox::uniform(3, -5.0, 5.0),
        w: AxisBox::uniform(3, -1.0, 1.0),
        u: AxisBox::uniform(1, -1.0, 1.0),
        v: AxisBox::uniform(1, 0.0, 0.0),
    }
}

/// The synthesized quadratic cost of example1: weights (2, 70/3, 2357/48),
/// discount 7/16.
pub fn example1_quadratic(horizon: usize) -> QuadraticCost {
    QuadraticCost::new(2.0, 70.0 / 3.0, 2357.0 / 48.0, 7.0 / 16.0, horizon)
        .expect("static weights are valid")
}

/// Max-form penalties of example1 from its Lyapunov data.
pub fn example1_maxform(horizon: usize) -> MaxFormCost {
    let betas = derive_betas(&example1_lyapunov(), false).expect("static data is in family");
    MaxFormCost {
        beta_x: betas.beta_x,
        beta_w: betas.beta_w,
        beta_y: betas.beta_y,
        beta_v: betas.beta_v,
        horizon,
    }
}

/// Max-form penalties of example2 from its certificate.
pub fn example2_maxform(horizon: usize) -> MaxFormCost {
    let spec = example2_certificate()
        .lyapunov_spec()
        .expect("certificate is log-quadratic");
    let betas = derive_betas(&spec, true).expect("static data is in family");
    MaxFormCost {
        beta_x: betas.beta_x,
        beta_w: betas.beta_w,
        beta_y: betas.beta_y,
        beta_v: betas.beta_v,
        horizon,
    }
}

// ---------------------------------------------------------------------------
// Noise and input laws.
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseLaw {
    Zero,
    Gaussian { sigma: f64 },
    Uniform { lo: f64, hi: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScenarioError {
    UnknownModel(String),
    BadLaw(&'static str),
    /// A stochastic law would leave a finite domain box.
    LawOutsideBox(&'static str),
    DimensionMismatch(&'static str),
    Estimator(MheError),
}

impl core::fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ScenarioError::UnknownModel(name) => {
                write!(f, "unknown model {name:?}; registry: {MODEL_NAMES:?}")
            }
            ScenarioError::BadLaw(w) => write!(f, "invalid noise law: {w}"),
            ScenarioError::LawOutsideBox(w) => {
                write!(f, "noise law does not respect the domain box: {w}")
            }
            ScenarioError::DimensionMismatch(w) => write!(f, "dimension mismatch: {w}"),
            ScenarioError::Estimator(e) => write!(f, "{e}"),
        }
    }
}

impl NoiseLaw {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        match *self {
            NoiseLaw::Zero => Ok(()),
            NoiseLaw::Gaussian { sigma } => {
                if sigma >= 0.0 {
                    Ok(())
                } else {
                    Err(ScenarioError::BadLaw("gaussian sigma must be nonnegative"))
                }
            }
            NoiseLaw::Uniform { lo, hi } => {
                if lo <= hi {
                    Ok(())
                } else {
                    Err(ScenarioError::BadLaw("uniform bounds must satisfy lo <= hi"))
                }
            }
        }
    }

    fn respects(&self, lo: f64, hi: f64) -> bool {
        match *self {
            NoiseLaw::Zero => lo <= 0.0 && 0.0 <= hi,
            // An unbounded law is only compatible with an unbounded box.
            NoiseLaw::Gaussian { sigma } => sigma == 0.0 || (lo == f64::NEG_INFINITY && hi == f64::INFINITY),
            NoiseLaw::Uniform { lo: a, hi: b } => a >= lo && b <= hi,
        }
    }

    pub fn sample(&self, stream: &Stream, index: u64) -> f64 {
        match *self {
            NoiseLaw::Zero => 0.0,
            NoiseLaw::Gaussian { sigma } => stream.gaussian_at(index, sigma),
            NoiseLaw::Uniform { lo, hi } => stream.uniform_at(index, lo, hi),
        }
    }
}

/// Deterministic input sequences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InputLaw {
    Zero,
    /// `u_t = amp · sin(freq · t)` on the first input channel.
    Sinusoid { amp: f64, freq: f64 },
}

impl InputLaw {
    pub fn eval(&self, t: usize, p: usize) -> Vec<f64> {
        let mut u = vec![0.0; p];
        if p == 0 {
            return u;
        }
        if let InputLaw::Sinusoid { amp, freq } = *self {
            u[0] = amp * libm::sin(freq * t as f64);
        }
        u
    }
}

/// Generate a seeded noise sequence: one stream per channel, one index per
/// time step.
pub fn noise_gen(law: NoiseLaw, seed: u64, channel: u64, len: usize) -> Vec<f64> {
    let stream = Stream::new(seed, channel);
    (0..len).map(|t| law.sample(&stream, t as u64)).collect()
}

// ---------------------------------------------------------------------------
// Scenarios.
// ---------------------------------------------------------------------------

/// Estimator knobs carried by a scenario (the prior lives at scenario level).
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorSettings {
    pub cost: CostSpec,
    pub stop_mode: StopMode,
    pub epsilon: f64,
    pub max_iters: usize,
    pub starts: usize,
    pub tau_ladder: Vec<f64>,
    pub sample_radius: f64,
}

/// A complete simulation-plus-estimation experiment definition.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub model: String,
    pub x0: Vec<f64>,
    pub xbar0: Vec<f64>,
    pub input: InputLaw,
    pub noise_w: NoiseLaw,
    pub noise_v: NoiseLaw,
    pub t_max: usize,
    pub estimator: EstimatorSettings,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<SystemModel<Builtin>, ScenarioError> {
        let model =
            model_by_name(&self.model).ok_or_else(|| ScenarioError::UnknownModel(self.model.clone()))?;
        let d = model.dims();
        if self.x0.len() != d.n || self.xbar0.len() != d.n {
            return Err(ScenarioError::DimensionMismatch("x0/xbar0 length"));
        }
        self.noise_w.validate()?;
        self.noise_v.validate()?;
        for i in 0..d.nw {
            if !self.noise_w.respects(model.w_box.lo[i], model.w_box.hi[i]) {
                return Err(ScenarioError::LawOutsideBox("process noise"));
            }
        }
        for i in 0..d.m {
            if !self.noise_v.respects(model.v_box.lo[i], model.v_box.hi[i]) {
                return Err(ScenarioError::LawOutsideBox("measurement noise"));
            }
        }
        let cfg = self.estimator_config(self.seed);
        cfg.validate().map_err(ScenarioError::Estimator)?;
        Ok(model)
    }

    /// The estimator configuration for a given run seed (the multi-start
    /// sampler is keyed by it).
    pub fn estimator_config(&self, run_seed: u64) -> EstimatorConfig {
        EstimatorConfig {
            cost: self.estimator.cost.clone(),
            stop_mode: self.estimator.stop_mode,
            epsilon: self.estimator.epsilon,
            prior0: self.xbar0.clone(),
            max_iters: self.estimator.max_iters,
            multistart: MultiStart {
                starts: self.estimator.starts,
                tau_ladder: self.estimator.tau_ladder.clone(),
                seed: run_seed,
                sample_radius: self.estimator.sample_radius,
                ..MultiStart::default()
            },
        }
    }

    /// Per-run noise sequences; channels are independent streams keyed by
    /// `(seed, run, channel)`.
    pub fn draw_noise(&self, run: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let model = model_by_name(&self.model).expect("validated");
        let d = model.dims();
        let w: Vec<Vec<f64>> = (0..self.t_max)
            .map(|t| {
                (0..d.nw)
                    .map(|i| {
                        let stream = Stream::new(self.seed, run * 128 + i as u64);
                        self.noise_w.sample(&stream, t as u64)
                    })
                    .collect()
            })
            .collect();
        let v: Vec<Vec<f64>> = (0..self.t_max)
            .map(|t| {
                (0..d.m)
                    .map(|j| {
                        let stream = Stream::new(self.seed, run * 128 + 64 + j as u64);
                        self.noise_v.sample(&stream, t as u64)
                    })
                    .collect()
            })
            .collect();
        (w, v)
    }

    pub fn inputs(&self) -> Vec<Vec<f64>> {
        let model = model_by_name(&self.model).expect("validated");
        let p = model.dims().p;
        (0..self.t_max).map(|t| self.input.eval(t, p)).collect()
    }
}

fn fig1_base(name: &str, noisy: bool, estimator: EstimatorSettings, seed: u64) -> Scenario {
    Scenario {
        name: String::from(name),
        model: String::from("example1"),
        x0: vec![2.0, 2.0, 2.0],
        xbar0: vec![-2.0, -2.0, -2.0],
        input: InputLaw::Sinusoid {
            amp: 1.0,
            freq: 0.2,
        },
        noise_w: if noisy {
            NoiseLaw::Gaussian { sigma: 0.1 }
        } else {
            NoiseLaw::Zero
        },
        noise_v: if noisy {
            NoiseLaw::Gaussian { sigma: 0.5 }
        } else {
            NoiseLaw::Zero
        },
        t_max: 60,
        estimator,
        seed,
    }
}

fn quadratic_settings(horizon: usize) -> EstimatorSettings {
    EstimatorSettings {
        cost: CostSpec::Quadratic(example1_quadratic(horizon)),
        stop_mode: StopMode::Relaxed,
        epsilon: 0.01,
        max_iters: 100_000,
        starts: 1,
        tau_ladder: vec![1e-1, 1e-2, 1e-3, 1e-4],
        sample_radius: 1.0,
    }
}

fn maxform_settings(cost: MaxFormCost) -> EstimatorSettings {
    EstimatorSettings {
        cost: CostSpec::MaxForm(cost),
        stop_mode: StopMode::Relaxed,
        epsilon: 0.01,
        max_iters: 1_500,
        starts: 8,
        tau_ladder: vec![1e-1, 1e-2, 1e-3, 1e-4],
        sample_radius: 1.0,
    }
}

/// The first figure-reproduction recipe: example1 from `x0 = (2,2,2)`,
/// prior `(-2,-2,-2)`, input `sin(0.2 t)`, with a window-3 quadratic
/// estimator and a window-5 max-form estimator, noise-free and noisy
/// (gaussian dispersions 0.1 / 0.5).
pub fn fig1_scenarios(seed: u64) -> Vec<Scenario> {
    vec![
        fig1_base("fig1-mhe3-noisefree", false, quadratic_settings(3), seed),
        fig1_base("fig1-mhe3-noisy", true, quadratic_settings(3), seed),
        fig1_base(
            "fig1-mhe5-noisefree",
            false,
            maxform_settings(example1_maxform(5)),
            seed,
        ),
        fig1_base(
            "fig1-mhe5-noisy",
            true,
            maxform_settings(example1_maxform(5)),
            seed,
        ),
    ]
}

fn fig2_base(name: &str, noisy: bool, horizon: usize, seed: u64) -> Scenario {
    Scenario {
        name: String::from(name),
        model: String::from("example2"),
        x0: vec![1.0, 1.0],
        xbar0: vec![-1.0, -1.0],
        input: InputLaw::Zero,
        noise_w: if noisy {
            NoiseLaw::Uniform {
                lo: -0.01,
                hi: 0.01,
            }
        } else {
            NoiseLaw::Zero
        },
        noise_v: if noisy {
            NoiseLaw::Uniform { lo: -0.5, hi: 0.5 }
        } else {
            NoiseLaw::Zero
        },
        t_max: 60,
        estimator: maxform_settings(example2_maxform(horizon)),
        seed,
    }
}

/// The second figure-reproduction recipe: example2 from `x0 = (1,1)`,
/// prior `(-1,-1)`, window-3 and window-4 max-form estimators, noise-free
/// and with uniform noises in [-0.01,0.01] and [-0.5,0.5].
pub fn fig2_scenarios(seed: u64) -> Vec<Scenario> {
    vec![
        fig2_base("fig2-mhe3-noisefree", false, 3, seed),
        fig2_base("fig2-mhe3-noisy", true, 3, seed),
        fig2_base("fig2-mhe4-noisefree", false, 4, seed),
        fig2_base("fig2-mhe4-noisy", true, 4, seed),
    ]
}
