//! Direct SVG emission for the benchmark figures, no plotting dependency.
//!
//! Every chart uses a fixed 800x600 canvas. Data-bearing elements carry
//! `data-*` attributes with the underlying values so tests assert on parsed
//! geometry instead of bytes:
//!
//! * `robustness.svg` — one `<rect class="bar" data-approach data-value>`
//!   per approach, value = success rate in [0, 1].
//! * `rmse.svg` — `<rect class="bar" data-approach data-measure data-value>`
//!   grouped into a translational panel (meters) and a rotational panel
//!   (degrees).
//! * `trajectory.svg` — top view (map X right, map Y up):
//!   `<path class="gt" data-frame data-x data-y>` ground-truth pluses and
//!   `<path class="est" data-frame data-x data-y>` estimate crosses.

use std::fmt::Write as _;
use std::path::Path;

use super::{Approach, ExperimentResult, MetricsReport};
use crate::estimation::Outcome;
use crate::Result;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN: f64 = 60.0;

fn open_svg(title: &str) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    )
    .unwrap();
    writeln!(s, "<title>{title}</title>").unwrap();
    writeln!(
        s,
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"
    )
    .unwrap();
    s
}

fn axis_lines(s: &mut String) {
    writeln!(
        s,
        "<line x1=\"{MARGIN}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        HEIGHT - MARGIN,
        WIDTH - MARGIN,
        HEIGHT - MARGIN
    )
    .unwrap();
    writeln!(
        s,
        "<line x1=\"{MARGIN}\" y1=\"{MARGIN}\" x2=\"{MARGIN}\" y2=\"{}\" stroke=\"black\"/>",
        HEIGHT - MARGIN
    )
    .unwrap();
}

/// Success-rate bar chart, one bar per approach.
pub fn write_robustness_svg(result: &ExperimentResult, path: &Path) -> Result<()> {
    let mut s = open_svg("Robustness: fraction of successful estimates per approach");
    axis_lines(&mut s);
    let n = result.approaches.len().max(1);
    let span = WIDTH - 2.0 * MARGIN;
    let slot = span / n as f64;
    let bar_w = slot * 0.6;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    for (i, (approach, m)) in result
        .approaches
        .iter()
        .zip(&result.metrics)
        .enumerate()
    {
        let value = m.success_rate;
        let h = plot_h * value;
        let x = MARGIN + i as f64 * slot + (slot - bar_w) / 2.0;
        let y = HEIGHT - MARGIN - h;
        writeln!(
            s,
            "<rect class=\"bar\" data-approach=\"{}\" data-value=\"{}\" x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"steelblue\"/>",
            approach.label(),
            value,
            x,
            y,
            bar_w,
            h
        )
        .unwrap();
        writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\" font-size=\"14\">{}</text>",
            x + bar_w / 2.0,
            HEIGHT - MARGIN + 20.0,
            approach.label()
        )
        .unwrap();
        writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"12\">{:.1}%</text>",
            x + bar_w / 2.0,
            y - 6.0,
            value * 100.0
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    std::fs::write(path, s)?;
    Ok(())
}

const TRANSLATION_MEASURES: [(&str, fn(&MetricsReport) -> f64); 3] = [
    ("rmse_x", |m| m.rmse_x),
    ("rmse_y", |m| m.rmse_y),
    ("rmse_z", |m| m.rmse_z),
];
const ROTATION_MEASURES: [(&str, fn(&MetricsReport) -> f64); 3] = [
    ("rmse_alpha", |m| m.rmse_alpha),
    ("rmse_beta", |m| m.rmse_beta),
    ("rmse_gamma", |m| m.rmse_gamma),
];

/// Grouped RMSE bars: translational errors in the upper panel (meters),
/// rotational errors in the lower panel (degrees).
pub fn write_rmse_svg(result: &ExperimentResult, path: &Path) -> Result<()> {
    let mut s = open_svg("Translational and rotational RMS errors per approach");
    let panel_h = (HEIGHT - 3.0 * MARGIN) / 2.0;
    for (panel, measures) in [(0, &TRANSLATION_MEASURES), (1, &ROTATION_MEASURES)] {
        let top = MARGIN + panel as f64 * (panel_h + MARGIN);
        let bottom = top + panel_h;
        writeln!(
            s,
            "<line x1=\"{MARGIN}\" y1=\"{bottom:.2}\" x2=\"{:.2}\" y2=\"{bottom:.2}\" stroke=\"black\"/>",
            WIDTH - MARGIN
        )
        .unwrap();
        let max_value = measures
            .iter()
            .flat_map(|(_, get)| result.metrics.iter().map(get))
            .fold(1e-12f64, f64::max);
        let groups = measures.len();
        let span = WIDTH - 2.0 * MARGIN;
        let group_w = span / groups as f64;
        let n_app = result.approaches.len().max(1);
        let bar_w = group_w * 0.8 / n_app as f64;
        for (g, (measure, get)) in measures.iter().enumerate() {
            for (i, (approach, m)) in result
                .approaches
                .iter()
                .zip(&result.metrics)
                .enumerate()
            {
                let value = get(m);
                let h = panel_h * (value / max_value).min(1.0);
                let x = MARGIN + g as f64 * group_w + group_w * 0.1 + i as f64 * bar_w;
                let y = bottom - h;
                writeln!(
                    s,
                    "<rect class=\"bar\" data-approach=\"{}\" data-measure=\"{}\" data-value=\"{}\" x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
                    approach.label(),
                    measure,
                    value,
                    x,
                    y,
                    bar_w,
                    h,
                    if *approach == Approach::Proposed { "indianred" } else { "steelblue" }
                )
                .unwrap();
            }
            writeln!(
                s,
                "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"14\">{}</text>",
                MARGIN + g as f64 * group_w + group_w / 2.0,
                bottom + 20.0,
                measure
            )
            .unwrap();
        }
    }
    s.push_str("</svg>\n");
    std::fs::write(path, s)?;
    Ok(())
}

/// Top-view trajectory: ground-truth pluses and the proposed approach's
/// estimate crosses, both in map coordinates projected onto the X-Y plane.
pub fn write_trajectory_svg(result: &ExperimentResult, path: &Path) -> Result<()> {
    let mut s = open_svg("Trajectory, top view: ground truth (plus) vs estimates (cross)");

    let proposed = result
        .reports_for(Approach::Proposed)
        .unwrap_or(&[]);

    // World window from ground truth plus a margin.
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in &result.ground_truth {
        let t = p.translation();
        x0 = x0.min(t.x);
        x1 = x1.max(t.x);
        y0 = y0.min(t.y);
        y1 = y1.max(t.y);
    }
    if !(x0.is_finite() && x1.is_finite()) {
        x0 = 0.0;
        x1 = 1.0;
        y0 = 0.0;
        y1 = 1.0;
    }
    let pad = 1.0;
    x0 -= pad;
    x1 += pad;
    y0 -= pad;
    y1 += pad;
    let sx = (WIDTH - 2.0 * MARGIN) / (x1 - x0);
    let sy = (HEIGHT - 2.0 * MARGIN) / (y1 - y0);
    let scale = sx.min(sy);
    let to_canvas = |x: f64, y: f64| -> (f64, f64) {
        (
            MARGIN + (x - x0) * scale,
            HEIGHT - MARGIN - (y - y0) * scale,
        )
    };

    for (i, pose) in result.ground_truth.iter().enumerate() {
        let t = pose.translation();
        let (cx, cy) = to_canvas(t.x, t.y);
        writeln!(
            s,
            "<path class=\"gt\" data-frame=\"{i}\" data-x=\"{}\" data-y=\"{}\" d=\"M {:.2} {:.2} L {:.2} {:.2} M {:.2} {:.2} L {:.2} {:.2}\" stroke=\"red\" fill=\"none\"/>",
            t.x,
            t.y,
            cx - 4.0,
            cy,
            cx + 4.0,
            cy,
            cx,
            cy - 4.0,
            cx,
            cy + 4.0
        )
        .unwrap();
    }
    for report in proposed {
        if let Outcome::Success(pose) = &report.outcome {
            let t = pose.translation();
            let (cx, cy) = to_canvas(t.x, t.y);
            writeln!(
                s,
                "<path class=\"est\" data-frame=\"{}\" data-x=\"{}\" data-y=\"{}\" d=\"M {:.2} {:.2} L {:.2} {:.2} M {:.2} {:.2} L {:.2} {:.2}\" stroke=\"blue\" fill=\"none\"/>",
                report.frame_index,
                t.x,
                t.y,
                cx - 3.0,
                cy - 3.0,
                cx + 3.0,
                cy + 3.0,
                cx - 3.0,
                cy + 3.0,
                cx + 3.0,
                cy - 3.0
            )
            .unwrap();
        }
    }
    s.push_str("</svg>\n");
    std::fs::write(path, s)?;
    Ok(())
}
