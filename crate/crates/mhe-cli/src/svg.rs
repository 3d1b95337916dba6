//! Static SVG line plots: true vs estimated state components, and the
//! squared error against its monitored bound on a log scale.

use crate::run::RunResult;

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 56.0;

const SERIES_COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

struct Frame {
    t_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, t: f64) -> f64 {
        MARGIN + (WIDTH - 2.0 * MARGIN) * t / self.t_max.max(1.0)
    }

    fn y(&self, v: f64) -> f64 {
        let span = (self.y_max - self.y_min).max(1e-12);
        HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - self.y_min) / span
    }
}

fn polyline(frame: &Frame, values: &[(f64, f64)], color: &str, dashed: bool) -> String {
    let points: Vec<String> = values
        .iter()
        .map(|&(t, v)| format!("{:.2},{:.2}", frame.x(t), frame.y(v)))
        .collect();
    let dash = if dashed { " stroke-dasharray=\"6 4\"" } else { "" };
    format!(
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\"{dash} points=\"{}\"/>\n",
        points.join(" ")
    )
}

fn document(title: &str, frame: &Frame, body: String, legend: &[(String, &str)]) -> String {
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{title}</text>\n",
        WIDTH / 2.0
    ));
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN,
        t = MARGIN,
    ));
    for k in 0..=4 {
        let v = frame.y_min + (frame.y_max - frame.y_min) * k as f64 / 4.0;
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{v:.3}</text>\n",
            MARGIN - 6.0,
            frame.y(v) + 4.0
        ));
        let t_tick = frame.t_max * k as f64 / 4.0;
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{t_tick:.0}</text>\n",
            frame.x(t_tick),
            HEIGHT - MARGIN + 16.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">t</text>\n",
        WIDTH / 2.0,
        HEIGHT - 14.0
    ));
    svg.push_str(&body);
    for (i, (label, color)) in legend.iter().enumerate() {
        let y = MARGIN + 16.0 * i as f64;
        svg.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{y}\" x2=\"{x2}\" y2=\"{y}\" stroke=\"{color}\" stroke-width=\"2\"/>\n<text x=\"{tx}\" y=\"{ty}\" font-family=\"sans-serif\" font-size=\"11\">{label}</text>\n",
            x = WIDTH - MARGIN - 150.0,
            x2 = WIDTH - MARGIN - 126.0,
            tx = WIDTH - MARGIN - 120.0,
            ty = y + 4.0,
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// True and estimated state components over time.
pub fn states_plot(result: &RunResult) -> String {
    let n = result.trajectory.states[0].len();
    let t_max = result.scenario.t_max;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for t in 0..=t_max {
        for i in 0..n {
            y_min = y_min.min(result.trajectory.states[t][i]).min(result.estimates[t][i]);
            y_max = y_max.max(result.trajectory.states[t][i]).max(result.estimates[t][i]);
        }
    }
    let frame = Frame {
        t_max: t_max as f64,
        y_min,
        y_max,
    };
    let mut body = String::new();
    let mut legend = Vec::new();
    for i in 0..n {
        let color = SERIES_COLORS[i % SERIES_COLORS.len()];
        let truth: Vec<(f64, f64)> = (0..=t_max)
            .map(|t| (t as f64, result.trajectory.states[t][i]))
            .collect();
        let est: Vec<(f64, f64)> = (0..=t_max)
            .map(|t| (t as f64, result.estimates[t][i]))
            .collect();
        body.push_str(&polyline(&frame, &truth, color, false));
        body.push_str(&polyline(&frame, &est, color, true));
        legend.push((format!("x_{i} (solid true, dashed estimate)"), color));
    }
    document(
        &format!("{}: state and estimate", result.scenario.name),
        &frame,
        body,
        &legend,
    )
}

/// log10 of the squared error and of the monitored bound.
pub fn error_plot(result: &RunResult) -> String {
    let t_max = result.scenario.t_max;
    let log = |v: f64| v.max(1e-30).log10();
    let err: Vec<(f64, f64)> = (0..=t_max)
        .map(|t| (t as f64, log(result.bound.rows[t].err_sq)))
        .collect();
    let bound: Vec<(f64, f64)> = (0..=t_max)
        .map(|t| (t as f64, log(result.bound.rows[t].bound)))
        .collect();
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for &(_, v) in err.iter().chain(&bound) {
        y_min = y_min.min(v);
        y_max = y_max.max(v);
    }
    let frame = Frame {
        t_max: t_max as f64,
        y_min,
        y_max,
    };
    let mut body = String::new();
    body.push_str(&polyline(&frame, &err, SERIES_COLORS[0], false));
    body.push_str(&polyline(&frame, &bound, SERIES_COLORS[1], true));
    document(
        &format!("{}: log10 squared error vs bound", result.scenario.name),
        &frame,
        body,
        &[
            ("log10 |x - xhat|^2".to_string(), SERIES_COLORS[0]),
            ("log10 bound".to_string(), SERIES_COLORS[1]),
        ],
    )
}
