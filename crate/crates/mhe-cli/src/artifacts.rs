//! Run artifacts: the per-step CSV, the summary JSON, and the config hash.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::run::RunResult;

/// Canonical float formatting: 17 significant digits, scientific notation.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// FNV-1a over the canonical config JSON.
pub fn config_hash(config: &ScenarioConfig) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in json.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x100_0000_01b3);
    }
    format!("{hash:016x}")
}

/// The per-run CSV: one row per time step including `t = 0` (prior row).
pub fn render_csv(result: &RunResult) -> String {
    let n = result.trajectory.states[0].len();
    let mut out = String::new();
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("x_true_{i}")));
    header.extend((0..n).map(|i| format!("x_hat_{i}")));
    for col in ["err_sq", "bound", "satisfied", "grad_norm", "iters", "eps_hat"] {
        header.push(col.to_string());
    }
    out.push_str(&header.join(","));
    out.push('\n');

    for t in 0..=result.scenario.t_max {
        let mut row = vec![t.to_string()];
        row.extend(result.trajectory.states[t].iter().map(|&x| format_float(x)));
        row.extend(result.estimates[t].iter().map(|&x| format_float(x)));
        let bound_row = &result.bound.rows[t];
        row.push(format_float(bound_row.err_sq));
        row.push(format_float(bound_row.bound));
        row.push(if bound_row.satisfied { "1" } else { "0" }.to_string());
        if t == 0 {
            row.push(format_float(0.0));
            row.push("0".to_string());
            row.push(format_float(0.0));
        } else {
            let rec = &result.records[t - 1];
            row.push(format_float(rec.report.grad_norm));
            row.push(rec.report.iterations.to_string());
            row.push(format_float(rec.eps_hat));
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
pub struct Summary {
    pub name: String,
    pub seed: u64,
    pub run: u64,
    pub config_hash: String,
    pub steps: usize,
    pub bound_violations: usize,
    pub min_property_violations: usize,
    pub max_err_sq: f64,
    pub terminal_err_sq: f64,
    pub lambda: f64,
    pub alpha_exponent: f64,
    pub total_iterations: usize,
    pub total_line_search_evals: usize,
    pub capped_steps: usize,
    pub config: ScenarioConfig,
}

impl Summary {
    pub fn from_run(result: &RunResult) -> Self {
        let config = ScenarioConfig::from_scenario(&result.scenario);
        Summary {
            name: result.scenario.name.clone(),
            seed: result.scenario.seed,
            run: result.run_index,
            config_hash: config_hash(&config),
            steps: result.scenario.t_max,
            bound_violations: result.bound_violations(),
            min_property_violations: result.min_property_violations(),
            max_err_sq: result.bound.max_err_sq,
            terminal_err_sq: result.terminal_err_sq(),
            lambda: result.bound.lambda,
            alpha_exponent: result.bound.alpha_exponent,
            total_iterations: result.total_iterations(),
            total_line_search_evals: result.total_ls_evals(),
            capped_steps: result.capped_steps(),
            config,
        }
    }
}

pub fn write_text(path: &Path, content: &str) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(content.as_bytes())
}

pub fn write_run_artifacts(
    result: &RunResult,
    out_dir: &Path,
    svg: bool,
) -> std::io::Result<(std::path::PathBuf, std::path::PathBuf)> {
    let stem = if result.run_index == 0 {
        result.scenario.name.clone()
    } else {
        format!("{}-run{}", result.scenario.name, result.run_index)
    };
    let csv_path = out_dir.join(format!("{stem}.csv"));
    write_text(&csv_path, &render_csv(result))?;
    let summary = Summary::from_run(result);
    let json_path = out_dir.join(format!("{stem}.json"));
    let mut json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    json.push('\n');
    write_text(&json_path, &json)?;
    if svg {
        write_text(
            &out_dir.join(format!("{stem}-states.svg")),
            &crate::svg::states_plot(result),
        )?;
        write_text(
            &out_dir.join(format!("{stem}-error.svg")),
            &crate::svg::error_plot(result),
        )?;
    }
    Ok((csv_path, json_path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_has_17_significant_digits() {
        assert_eq!(format_float(0.5), "5.0000000000000000e-1");
        assert_eq!(format_float(1.0 / 3.0), "3.3333333333333331e-1");
        // Round-trips exactly.
        let x = 0.1234567890123456789;
        let s = format_float(x);
        assert_eq!(s.parse::<f64>().unwrap(), x);
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let scenarios = mhe_core::systems::fig1_scenarios(1);
        let a = ScenarioConfig::from_scenario(&scenarios[0]);
        let b = ScenarioConfig::from_scenario(&scenarios[1]);
        assert_eq!(config_hash(&a), config_hash(&a));
        assert_ne!(config_hash(&a), config_hash(&b));
    }
}
