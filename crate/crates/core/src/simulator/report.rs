//! Simulation reports as config-format text, and rendering them to images.

use thiserror::Error;

use super::{Contrast, LuminanceMap, ReportMetrics, SimulationReport};
use crate::config::kv::{Document, KvError, SectionReader, Writer};
use crate::geometry::Side;
use crate::image::encode_ppm_bytes;
use crate::schedule::{PanelRef, TimingConfig};

const REPORT_FORMAT: &str = "duoglass-report-1";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error("not a simulation report (expected `format = {REPORT_FORMAT}`)")]
    Format,
}

fn write_map(w: &mut Writer, name: &str, map: &LuminanceMap) {
    w.section(name);
    for row in 0..map.rows {
        let cells: Vec<String> = (0..map.cols)
            .map(|c| {
                let [r, g, b] = map.get(row, c);
                format!("{r},{g},{b}")
            })
            .collect();
        w.kv(&format!("row{row}"), cells.join(" "));
    }
}

pub fn serialize_report(r: &SimulationReport) -> String {
    let mut w = Writer::default();
    w.section("report")
        .kv("format", REPORT_FORMAT)
        .kv("panel", &r.panel.name)
        .kv("cols", r.panel.cols)
        .kv("rows", r.panel.rows)
        .kv("frame_rate", r.timing.frame_rate_hz)
        .kv("subframes_per_frame", r.timing.subframes_per_frame)
        .kv("drive_frequency", r.timing.drive_frequency_hz)
        .kv("settle_margin", r.timing.settle_margin)
        .kv("dt_ms", r.dt_ms)
        .kv("luminance_scale", r.luminance_scale)
        .kv("warmup_frames", r.warmup_frames);
    let m = &r.metrics;
    w.section("metrics")
        .kv("brightness_white", m.brightness_white)
        .kv("panel_cr_front", m.panel_cr[0])
        .kv("panel_cr_back", m.panel_cr[1])
        .kv("crosstalk", m.crosstalk)
        .kv("transparency", m.transparency)
        .kv("white_peak", m.white_peak);
    write_map(&mut w, "front", &r.luminance_front);
    write_map(&mut w, "back", &r.luminance_back);
    w.finish()
}

fn read_map(doc: &Document, name: &'static str, cols: u32, rows: u32) -> Result<LuminanceMap, KvError> {
    let mut r = SectionReader::of(doc, name);
    let mut values = Vec::with_capacity((cols * rows) as usize);
    for row in 0..rows {
        let key = format!("row{row}");
        let entry = r.raw(&key);
        let text = r.require(&key, entry)?;
        let mut n = 0;
        for cell in text.value.split_ascii_whitespace() {
            let parts: Vec<&str> = cell.split(',').collect();
            let parsed: Vec<f64> = parts.iter().filter_map(|p| p.parse().ok()).collect();
            if parsed.len() != 3 || parsed.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(KvError::Type {
                    line: text.line,
                    key,
                    expected: "`r,g,b` triples of non-negative numbers",
                    value: cell.to_string(),
                });
            }
            values.push([parsed[0], parsed[1], parsed[2]]);
            n += 1;
        }
        if n != cols {
            return Err(r.invalid(&key, format!("expected {cols} pixels, found {n}")));
        }
    }
    r.finish()?;
    Ok(LuminanceMap { cols, rows, values })
}

fn contrast(r: &mut SectionReader<'_>, key: &str) -> Result<Contrast, KvError> {
    let v = r.string(key);
    let v = r.require(key, v)?;
    if v == "inf" {
        return Ok(Contrast::Infinite);
    }
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(Contrast::Finite(x)),
        _ => Err(r.invalid(key, format!("expected a number or `inf`, found `{v}`"))),
    }
}

pub fn parse_report(text: &str) -> Result<SimulationReport, ReportError> {
    let doc = Document::parse(text)?;
    doc.check_sections(
        &["report", "metrics", "front", "back"],
        &["report", "metrics", "front", "back"],
    )?;
    let mut r = SectionReader::of(&doc, "report");
    if r.string("format").as_deref() != Some(REPORT_FORMAT) {
        return Err(ReportError::Format);
    }
    macro_rules! req {
        ($r:ident . $f:ident ( $k:literal )) => {{
            let v = $r.$f($k)?;
            $r.require($k, v)?
        }};
    }
    let name = r.string("panel");
    let panel = PanelRef {
        name: r.require("panel", name)?,
        cols: req!(r.u32("cols")),
        rows: req!(r.u32("rows")),
    };
    let timing = TimingConfig {
        frame_rate_hz: req!(r.f64("frame_rate")),
        subframes_per_frame: req!(r.u32("subframes_per_frame")),
        drive_frequency_hz: req!(r.f64("drive_frequency")),
        settle_margin: req!(r.f64("settle_margin")),
    };
    let dt_ms = req!(r.f64("dt_ms"));
    let luminance_scale = req!(r.f64("luminance_scale"));
    let warmup_frames = req!(r.u32("warmup_frames"));
    r.finish()?;

    let mut mr = SectionReader::of(&doc, "metrics");
    let metrics = ReportMetrics {
        brightness_white: req!(mr.f64("brightness_white")),
        panel_cr: [
            contrast(&mut mr, "panel_cr_front")?,
            contrast(&mut mr, "panel_cr_back")?,
        ],
        crosstalk: {
            let v = mr.string("crosstalk");
            match mr.require("crosstalk", v)?.as_str() {
                "inf" => f64::INFINITY,
                s => s
                    .parse()
                    .map_err(|_| mr.invalid("crosstalk", format!("bad value `{s}`")))?,
            }
        },
        transparency: req!(mr.f64("transparency")),
        white_peak: req!(mr.f64("white_peak")),
    };
    mr.finish()?;
    Ok(SimulationReport {
        luminance_front: read_map(&doc, "front", panel.cols, panel.rows)?,
        luminance_back: read_map(&doc, "back", panel.cols, panel.rows)?,
        panel,
        timing,
        dt_ms,
        luminance_scale,
        warmup_frames,
        metrics,
    })
}

/// Binary P6 image of one side as its viewer sees it.
///
/// Each channel is `round(255 * min(L / white_peak, 1))`, linear with no
/// gamma, so full white renders as 255 and zero luminance as 0.
pub fn render_side(report: &SimulationReport, side: Side) -> Vec<u8> {
    let map = report.map(side);
    let peak = report.metrics.white_peak;
    let bytes: Vec<u8> = map
        .values
        .iter()
        .flatten()
        .map(|&l| {
            if peak > 0.0 {
                (255.0 * (l / peak).min(1.0)).round() as u8
            } else {
                0
            }
        })
        .collect();
    encode_ppm_bytes(map.cols, map.rows, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(front: Vec<[f64; 3]>) -> SimulationReport {
        let back = vec![[0.25, 0.0, 3.0]; front.len()];
        SimulationReport {
            panel: PanelRef {
                name: "stage2".into(),
                cols: 2,
                rows: 1,
            },
            timing: TimingConfig::default(),
            dt_ms: 0.05,
            luminance_scale: 1.2345678901234567,
            warmup_frames: 4,
            luminance_front: LuminanceMap {
                cols: 2,
                rows: 1,
                values: front,
            },
            luminance_back: LuminanceMap {
                cols: 2,
                rows: 1,
                values: back,
            },
            metrics: ReportMetrics {
                brightness_white: 16.0,
                panel_cr: [Contrast::Finite(4.34), Contrast::Infinite],
                crosstalk: 0.0,
                transparency: 0.65,
                white_peak: 2.0,
            },
        }
    }

    #[test]
    fn text_round_trip() {
        let r = report(vec![[0.1, 0.2, 0.3], [1.0 / 3.0, 2.0, 0.0]]);
        let text = serialize_report(&r);
        let back = parse_report(&text).unwrap();
        assert_eq!(back, r);
        assert_eq!(serialize_report(&back), text);
    }

    #[test]
    fn two_level_render() {
        let r = report(vec![[0.5, 0.5, 0.5], [2.0, 2.0, 2.0]]);
        let bytes = render_side(&r, Side::A);
        assert_eq!(&bytes[..11], b"P6\n2 1\n255\n");
        assert_eq!(&bytes[11..], &[64, 64, 64, 255, 255, 255]);
        // channels above the white peak saturate
        assert_eq!(&render_side(&r, Side::B)[11..], &[32, 0, 255, 32, 0, 255]);
    }

    #[test]
    fn rejects_other_documents() {
        assert!(matches!(
            parse_report("[report]\nformat = nope\n"),
            Err(ReportError::Format)
        ));
    }
}
