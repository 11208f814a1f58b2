//! Plain SVG output for sweeps. Output is a pure function of the input so
//! charts can be compared byte for byte.

use std::fmt::Write as _;

use super::{StudyDataset, SweepResult};
use crate::electro_optics::CurveSamples;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 64.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const CR_COLOR: &str = "#1f77b4";
const VSAT_COLOR: &str = "#d62728";

#[derive(Debug, Clone, PartialEq)]
pub struct ChartSet {
    /// Intensity against voltage for every curve entry; `None` without curves.
    pub curves: Option<String>,
    pub bars: String,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Tick step near `span / 5` from the 1-2-5 series.
fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let m = raw / mag;
    let f = if m <= 1.0 {
        1.0
    } else if m <= 2.0 {
        2.0
    } else if m <= 5.0 {
        5.0
    } else {
        10.0
    };
    f * mag
}

/// Axis from 0 to a round number at or above `max`.
fn axis(max: f64) -> (f64, f64) {
    let max = if max.is_finite() && max > 0.0 { max } else { 1.0 };
    let step = nice_step(max);
    ((max / step - 1e-9).ceil() * step, step)
}

fn fmt_tick(v: f64) -> String {
    let r = (v * 1000.0).round() / 1000.0;
    if r == 0.0 {
        "0".into()
    } else {
        format!("{r}")
    }
}

struct Frame {
    out: String,
}

impl Frame {
    fn new(title: &str) -> Frame {
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(title)
        );
        let _ = writeln!(
            out,
            r#"<rect x="{LEFT}" y="{TOP}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
            plot_w(),
            plot_h()
        );
        Frame { out }
    }

    fn y_axis(&mut self, max: f64, step: f64, right: bool, label: &str, color: &str) {
        let x = if right { LEFT + plot_w() } else { LEFT };
        let (dx, anchor) = if right { (6.0, "start") } else { (-6.0, "end") };
        let mut v = 0.0;
        let mut k = 0;
        while v <= max + step * 1e-6 {
            let y = y_px(v, max);
            let _ = writeln!(
                self.out,
                r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black"/>"#,
                x + dx / 2.0
            );
            let _ = writeln!(
                self.out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="{anchor}" fill="{color}">{}</text>"#,
                x + dx,
                y + 4.0,
                fmt_tick(v)
            );
            k += 1;
            v = step * f64::from(k);
        }
        let lx = if right { WIDTH - 14.0 } else { 16.0 };
        let ly = TOP + plot_h() / 2.0;
        let _ = writeln!(
            self.out,
            r#"<text x="{lx:.2}" y="{ly:.2}" text-anchor="middle" fill="{color}" transform="rotate(-90 {lx:.2} {ly:.2})">{}</text>"#,
            escape(label)
        );
    }

    fn x_label(&mut self, label: &str) {
        let _ = writeln!(
            self.out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + plot_w() / 2.0,
            HEIGHT - 12.0,
            escape(label)
        );
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

fn plot_w() -> f64 {
    WIDTH - LEFT - RIGHT
}

fn plot_h() -> f64 {
    HEIGHT - TOP - BOTTOM
}

fn y_px(v: f64, max: f64) -> f64 {
    TOP + plot_h() * (1.0 - v / max)
}

/// Line chart of intensity against voltage, one series per curve.
pub fn line_chart(title: &str, series: &[(String, CurveSamples)]) -> String {
    let v_max = series.iter().flat_map(|(_, c)| c.voltages()).fold(0.0, f64::max);
    let i_max = series.iter().flat_map(|(_, c)| c.intensities()).fold(0.0, f64::max);
    let (x_top, x_step) = axis(v_max);
    let (y_top, y_step) = axis(i_max);
    let x_px = |v: f64| LEFT + plot_w() * v / x_top;

    let mut f = Frame::new(title);
    f.y_axis(y_top, y_step, false, "Intensity (a.u.)", "black");
    let mut k = 0;
    let mut v = 0.0;
    while v <= x_top + x_step * 1e-6 {
        let x = x_px(v);
        let y = TOP + plot_h();
        let _ = writeln!(
            f.out,
            r#"<line x1="{x:.2}" y1="{y:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#,
            y + 4.0
        );
        let _ = writeln!(
            f.out,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            y + 18.0,
            fmt_tick(v)
        );
        k += 1;
        v = x_step * f64::from(k);
    }
    f.x_label("Voltage (V)");

    for (i, (name, curve)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = curve
            .points()
            .iter()
            .map(|&(v, y)| format!("{:.2},{:.2}", x_px(v), y_px(y, y_top)))
            .collect();
        let _ = writeln!(
            f.out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let ly = TOP + 16.0 + 16.0 * i as f64;
        let lx = LEFT + 12.0;
        let _ = writeln!(
            f.out,
            r#"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/>"#,
            ly - 4.0,
            lx + 18.0,
            ly - 4.0
        );
        let _ = writeln!(
            f.out,
            r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#,
            lx + 24.0,
            escape(name)
        );
    }
    f.finish()
}

/// Grouped bars: CR on the left axis, V_sat on the right.
pub fn bar_chart(title: &str, result: &SweepResult) -> String {
    let cr_max = result.rows.iter().filter_map(|r| r.cr).fold(0.0, f64::max);
    let vs_max = result.rows.iter().filter_map(|r| r.v_sat).fold(0.0, f64::max);
    let (cr_top, cr_step) = axis(cr_max);
    let (vs_top, vs_step) = axis(vs_max);

    let mut f = Frame::new(title);
    f.y_axis(cr_top, cr_step, false, "Contrast ratio", CR_COLOR);
    f.y_axis(vs_top, vs_step, true, "V_sat (V)", VSAT_COLOR);
    f.x_label(result.variable.label());

    let n = result.rows.len().max(1) as f64;
    let slot = plot_w() / n;
    let bar = slot * 0.3;
    let base = TOP + plot_h();
    for (i, row) in result.rows.iter().enumerate() {
        let cx = LEFT + slot * (i as f64 + 0.5);
        for (value, top, color, x) in [
            (row.cr, cr_top, CR_COLOR, cx - bar),
            (row.v_sat, vs_top, VSAT_COLOR, cx),
        ] {
            if let Some(v) = value {
                let y = y_px(v, top);
                let _ = writeln!(
                    f.out,
                    r#"<rect x="{x:.2}" y="{y:.2}" width="{bar:.2}" height="{:.2}" fill="{color}"/>"#,
                    base - y
                );
            }
        }
        let _ = writeln!(
            f.out,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            base + 18.0,
            escape(&row.value.to_string())
        );
    }
    f.finish()
}

/// Both charts for a dataset and its sweep.
pub fn emit_charts(dataset: &StudyDataset, result: &SweepResult) -> ChartSet {
    let curves = dataset.curves();
    ChartSet {
        curves: (!curves.is_empty()).then(|| line_chart(&format!("{}: response curves", dataset.name), &curves)),
        bars: bar_chart(&format!("{}: CR and V_sat", dataset.name), result),
    }
}
