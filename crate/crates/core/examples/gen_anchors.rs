//! Regenerates the anchor curves and dataset files under `data/`.
//!
//! Each curve is the model logistic pinned to a reference (i_min, i_max,
//! v_sat) triple, sampled 0..20 V in 0.1 V steps and rounded to 6 decimals.
//! The widths are not given; they are plausible fill-ins and no check
//! depends on them.
//!
//!     cargo run --example gen_anchors

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use duoglass::electro_optics::{write_curve_csv, CurveSamples, ResponseCurve};

const PROVENANCE: &str = "reconstructed from reference scalar values";

struct Anchor {
    file: &'static str,
    i_min: f64,
    i_max: f64,
    v_sat: f64,
    width: f64,
}

const fn a(file: &'static str, i_min: f64, i_max: f64, v_sat: f64, width: f64) -> Anchor {
    Anchor {
        file,
        i_min,
        i_max,
        v_sat,
        width,
    }
}

const HCM009: Anchor = a("hcm009.csv", 0.22, 5.28, 10.5, 1.0);
const RM257: Anchor = a("rm257.csv", 0.26, 4.1, 12.0, 1.2);

const CONCENTRATION: [(f64, Anchor); 5] = [
    (4.0, a("conc_4pct.csv", 0.30, 4.2, 9.6, 1.1)),
    (5.0, a("conc_5pct.csv", 0.25, 4.7, 10.0, 1.0)),
    (6.0, HCM009),
    (7.0, a("conc_7pct.csv", 0.24, 4.9, 11.2, 1.2)),
    (8.0, a("conc_8pct.csv", 0.27, 4.5, 10.8, 1.1)),
];

const UV: [(f64, Anchor); 6] = [
    (2.0, a("uv_2.csv", 0.14, 2.6, 10.4, 0.9)),
    (4.0, a("uv_4.csv", 0.17, 3.5, 10.1, 0.95)),
    (6.0, a("uv_6.csv", 0.20, 4.4, 9.9, 1.0)),
    (8.0, HCM009),
    (10.0, a("uv_10.csv", 0.21, 4.6, 10.8, 1.1)),
    (12.0, a("uv_12.csv", 0.19, 3.8, 11.1, 1.2)),
];

fn write_curve(dir: &Path, anchor: &Anchor) {
    let curve = ResponseCurve::with_saturation(anchor.i_min, anchor.i_max, anchor.v_sat, anchor.width)
        .unwrap_or_else(|| panic!("{}: no curve reaches 90% at {} V", anchor.file, anchor.v_sat));
    let points = (0..=200)
        .map(|k| {
            let v = f64::from(k) / 10.0;
            (v, (curve.intensity(v) * 1e6).round() / 1e6)
        })
        .collect();
    let samples = CurveSamples::new(points).expect("valid samples");
    let file = fs::File::create(dir.join(anchor.file)).expect("create csv");
    write_curve_csv(&samples, file).expect("write csv");
}

fn header(out: &mut String, name: &str, variable: &str, note: &str) {
    out.push_str("# Written by examples/gen_anchors.rs; do not edit by hand.\n");
    out.push_str("# Curves are logistic reconstructions; only i_min, i_max and v_sat are anchored.\n");
    let _ = writeln!(out, "[dataset]\nname = {name}\nvariable = {variable}\nnote = {note}");
}

fn curve_entry(out: &mut String, value: impl std::fmt::Display, file: &str) {
    let _ = writeln!(
        out,
        "\n[entry]\nvalue = {value}\ncurve = anchors/{file}\nprovenance = {PROVENANCE}"
    );
}

fn main() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let anchors = root.join("anchors");
    fs::create_dir_all(&anchors).expect("create data/anchors");

    for anchor in [&HCM009, &RM257]
        .into_iter()
        .chain(CONCENTRATION.iter().map(|(_, a)| a))
        .chain(UV.iter().map(|(_, a)| a))
    {
        write_curve(&anchors, anchor);
    }

    let mut s = String::new();
    header(&mut s, "monomer", "monomer", "monomer concentration unspecified");
    curve_entry(&mut s, "HCM-009", HCM009.file);
    curve_entry(&mut s, "RM-257", RM257.file);
    for name in ["BAB-6", "RM-82"] {
        let _ = writeln!(s, "\n[entry]\nvalue = {name}\nv_sat = 9\nprovenance = {PROVENANCE}");
    }
    s.push_str("\n[checks]\nv_sat_order = BAB-6 ~ RM-82 < HCM-009 < RM-257\nsimilar_within_v = 0.5\n");
    fs::write(root.join("monomer.dataset"), s).expect("write");

    let mut s = String::new();
    header(
        &mut s,
        "concentration",
        "concentration_pct",
        "HCM-009, UV cure 8 mW/cm2",
    );
    for (pct, anchor) in &CONCENTRATION {
        curve_entry(&mut s, pct, anchor.file);
    }
    s.push_str("\n[checks]\nargmax_cr = 6\nargmax_v_sat = 7\n");
    fs::write(root.join("concentration.dataset"), s).expect("write");

    let mut s = String::new();
    header(&mut s, "uv_intensity", "uv_intensity_mw_cm2", "6% HCM-009");
    for (mw, anchor) in &UV {
        curve_entry(&mut s, mw, anchor.file);
    }
    s.push_str("\n[checks]\nargmax_cr = 8\nargmin_v_sat = 6\nmin_v_sat = 9.9\nmin_v_sat_within_v = 0.05\nrising_after_min = true\n");
    fs::write(root.join("uv_intensity.dataset"), s).expect("write");

    let mut s = String::new();
    header(&mut s, "cell_gap", "cell_gap_um", "no reference curves; ordering only");
    for gap in [2, 3, 4] {
        let _ = write!(s, "\n[entry]\nvalue = {gap}\nprovenance = {PROVENANCE}\n");
        if gap == 2 {
            s.push_str("selected = true\n");
        }
    }
    s.push_str("\n[checks]\nselected = 2\n");
    fs::write(root.join("cell_gap.dataset"), s).expect("write");
}
