//! Scenario JSON schema and its mapping onto the core types.

use mhe_core::cost::{KlFunction, MaxFormCost, QuadraticCost};
use mhe_core::mhe::CostSpec;
use mhe_core::optimize::StopMode;
use mhe_core::systems::{EstimatorSettings, InputLaw, NoiseLaw, Scenario};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub model: String,
    pub x0: Vec<f64>,
    pub xbar0: Vec<f64>,
    #[serde(default)]
    pub input: InputConfig,
    pub noise: NoiseConfig,
    #[serde(rename = "T")]
    pub t_max: usize,
    pub estimator: EstimatorConfigDto,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputConfig {
    #[default]
    Zero,
    Sinusoid {
        amp: f64,
        freq: f64,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub w: NoiseLawDto,
    pub v: NoiseLawDto,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseLawDto {
    Zero,
    Gaussian { sigma: f64 },
    Uniform { lo: f64, hi: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfigDto {
    pub cost: CostDto,
    #[serde(default)]
    pub stop: StopDto,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_starts")]
    pub starts: usize,
    #[serde(default = "default_tau_ladder")]
    pub tau_ladder: Vec<f64>,
    #[serde(default = "default_sample_radius")]
    pub sample_radius: f64,
}

fn default_epsilon() -> f64 {
    0.01
}
fn default_max_iters() -> usize {
    100_000
}
fn default_starts() -> usize {
    8
}
fn default_tau_ladder() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3, 1e-4]
}
fn default_sample_radius() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Default)]
#[serde(rename_all = "snake_case")]
pub enum StopDto {
    Exact,
    #[default]
    Relaxed,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostDto {
    Quadratic {
        mu: f64,
        nu: f64,
        omega: f64,
        eta: f64,
        #[serde(rename = "N")]
        n: usize,
    },
    MaxForm {
        beta_x: KlDto,
        beta_w: KlDto,
        beta_y: KlDto,
        beta_v: KlDto,
        #[serde(rename = "N")]
        n: usize,
    },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct KlDto {
    pub kappa: f64,
    #[serde(default = "default_q")]
    pub q: f64,
    pub eta_b: f64,
}

fn default_q() -> f64 {
    1.0
}

#[derive(Debug)]
pub enum ConfigError {
    /// Parse failure with a JSON-pointer-style path to the offending key.
    Parse { path: String, message: String },
    Invalid(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Parse { path, message } => {
                write!(f, "config parse error at `{path}`: {message}")
            }
            ConfigError::Invalid(msg) => write!(f, "invalid config: {msg}"),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Parse a scenario config, reporting the path to the offending key on
/// failure.
pub fn parse_scenario(json: &str) -> Result<ScenarioConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(json);
    serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

impl From<KlDto> for KlFunction {
    fn from(d: KlDto) -> Self {
        KlFunction::new(d.kappa, d.q, d.eta_b)
    }
}

impl From<KlFunction> for KlDto {
    fn from(k: KlFunction) -> Self {
        KlDto {
            kappa: k.kappa,
            q: k.q,
            eta_b: k.eta,
        }
    }
}

impl ScenarioConfig {
    pub fn to_scenario(&self) -> Result<Scenario, ConfigError> {
        let cost = match &self.estimator.cost {
            CostDto::Quadratic {
                mu,
                nu,
                omega,
                eta,
                n,
            } => CostSpec::Quadratic(
                QuadraticCost::new(*mu, *nu, *omega, *eta, *n)
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?,
            ),
            CostDto::MaxForm {
                beta_x,
                beta_w,
                beta_y,
                beta_v,
                n,
            } => CostSpec::MaxForm(MaxFormCost {
                beta_x: (*beta_x).into(),
                beta_w: (*beta_w).into(),
                beta_y: (*beta_y).into(),
                beta_v: (*beta_v).into(),
                horizon: *n,
            }),
        };
        let scenario = Scenario {
            name: self
                .name
                .clone()
                .unwrap_or_else(|| format!("{}-run", self.model)),
            model: self.model.clone(),
            x0: self.x0.clone(),
            xbar0: self.xbar0.clone(),
            input: match self.input {
                InputConfig::Zero => InputLaw::Zero,
                InputConfig::Sinusoid { amp, freq } => InputLaw::Sinusoid { amp, freq },
            },
            noise_w: match self.noise.w {
                NoiseLawDto::Zero => NoiseLaw::Zero,
                NoiseLawDto::Gaussian { sigma } => NoiseLaw::Gaussian { sigma },
                NoiseLawDto::Uniform { lo, hi } => NoiseLaw::Uniform { lo, hi },
            },
            noise_v: match self.noise.v {
                NoiseLawDto::Zero => NoiseLaw::Zero,
                NoiseLawDto::Gaussian { sigma } => NoiseLaw::Gaussian { sigma },
                NoiseLawDto::Uniform { lo, hi } => NoiseLaw::Uniform { lo, hi },
            },
            t_max: self.t_max,
            estimator: EstimatorSettings {
                cost,
                stop_mode: match self.estimator.stop {
                    StopDto::Exact => StopMode::Exact,
                    StopDto::Relaxed => StopMode::Relaxed,
                },
                epsilon: self.estimator.epsilon,
                max_iters: self.estimator.max_iters,
                starts: self.estimator.starts,
                tau_ladder: self.estimator.tau_ladder.clone(),
                sample_radius: self.estimator.sample_radius,
            },
            seed: self.seed,
        };
        scenario
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(scenario)
    }

    pub fn from_scenario(s: &Scenario) -> Self {
        ScenarioConfig {
            name: Some(s.name.clone()),
            model: s.model.clone(),
            x0: s.x0.clone(),
            xbar0: s.xbar0.clone(),
            input: match s.input {
                InputLaw::Zero => InputConfig::Zero,
                InputLaw::Sinusoid { amp, freq } => InputConfig::Sinusoid { amp, freq },
            },
            noise: NoiseConfig {
                w: match s.noise_w {
                    NoiseLaw::Zero => NoiseLawDto::Zero,
                    NoiseLaw::Gaussian { sigma } => NoiseLawDto::Gaussian { sigma },
                    NoiseLaw::Uniform { lo, hi } => NoiseLawDto::Uniform { lo, hi },
                },
                v: match s.noise_v {
                    NoiseLaw::Zero => NoiseLawDto::Zero,
                    NoiseLaw::Gaussian { sigma } => NoiseLawDto::Gaussian { sigma },
                    NoiseLaw::Uniform { lo, hi } => NoiseLawDto::Uniform { lo, hi },
                },
            },
            t_max: s.t_max,
            estimator: EstimatorConfigDto {
                cost: match &s.estimator.cost {
                    CostSpec::Quadratic(q) => CostDto::Quadratic {
                        mu: q.mu,
                        nu: q.nu,
                        omega: q.omega,
                        eta: q.eta,
                        n: q.horizon,
                    },
                    CostSpec::MaxForm(m) => CostDto::MaxForm {
                        beta_x: m.beta_x.into(),
                        beta_w: m.beta_w.into(),
                        beta_y: m.beta_y.into(),
                        beta_v: m.beta_v.into(),
                        n: m.horizon,
                    },
                },
                stop: match s.estimator.stop_mode {
                    StopMode::Exact => StopDto::Exact,
                    StopMode::Relaxed => StopDto::Relaxed,
                },
                epsilon: s.estimator.epsilon,
                max_iters: s.estimator.max_iters,
                starts: s.estimator.starts,
                tau_ladder: s.estimator.tau_ladder.clone(),
                sample_radius: s.estimator.sample_radius,
            },
            seed: s.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mhe_core::systems::{fig1_scenarios, fig2_scenarios};

    #[test]
    fn scenario_round_trips_through_json_bit_exactly() {
        for s in fig1_scenarios(42).into_iter().chain(fig2_scenarios(17)) {
            let dto = ScenarioConfig::from_scenario(&s);
            let json = serde_json::to_string_pretty(&dto).unwrap();
            let reparsed = parse_scenario(&json).unwrap();
            assert_eq!(dto, reparsed);
            let back = reparsed.to_scenario().unwrap();
            assert_eq!(s, back);
        }
    }

    #[test]
    fn bad_field_name_reports_a_pointer() {
        let json = r#"{
            "model": "example1",
            "x0": [2, 2, 2],
            "xbar0": [-2, -2, -2],
            "noise": {"w": {"law": "zero"}, "v": {"law": "zeroo"}},
            "T": 10,
            "estimator": {"cost": {"type": "quadratic", "mu": 2, "nu": 23.3, "omega": 49.1, "eta": 0.4375, "N": 3}},
            "seed": 1
        }"#;
        let err = parse_scenario(json).unwrap_err();
        match err {
            ConfigError::Parse { path, .. } => assert!(path.contains("noise.v"), "path: {path}"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn unknown_model_is_rejected_with_registry_listing() {
        let json = r#"{
            "model": "example9",
            "x0": [0],
            "xbar0": [0],
            "noise": {"w": {"law": "zero"}, "v": {"law": "zero"}},
            "T": 1,
            "estimator": {"cost": {"type": "quadratic", "mu": 2, "nu": 1, "omega": 1, "eta": 0.4, "N": 2}},
            "seed": 1
        }"#;
        let cfg = parse_scenario(json).unwrap();
        let err = cfg.to_scenario().unwrap_err();
        assert!(err.to_string().contains("example1"));
    }
}
