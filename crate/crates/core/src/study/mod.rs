//! Parametric material studies: datasets of curves, sweeps over them and
//! structural checks on the results.
//!
//! A dataset is a config-format file with one `[dataset]` header, one
//! `[entry]` per study point and an optional `[checks]` section:
//!
//! ```text
//! [dataset]
//! name = concentration
//! variable = concentration_pct
//!
//! [entry]
//! value = 6
//! curve = anchors/hcm009.csv   # or scalar i_min / i_max / v_sat keys
//! provenance = user-supplied
//!
//! [checks]
//! argmax_cr = 6
//! ```

mod charts;

pub use charts::{bar_chart, emit_charts, line_chart, ChartSet};

use std::cmp::Ordering;
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::config::kv::{Document, KvError, SectionReader};
use crate::electro_optics::{curve_metrics, read_curve_csv, CurveSamples};

pub const SWEEP_CSV_HEADER: &str = "variable,value,i_min_au,i_max_au,cr,v_sat_v";
pub const BUILTIN_DATASETS: [&str; 4] = ["monomer", "concentration", "uv_intensity", "cell_gap"];

const VALUE_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error("dataset has no entries")]
    Empty,
    #[error("line {line}: duplicate variable value `{value}`")]
    DuplicateValue { line: usize, value: String },
    #[error("line {line}: curve `{path}`: {message}")]
    Curve { line: usize, path: String, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variable {
    Monomer,
    ConcentrationPct,
    UvIntensity,
    CellGap,
}

impl Variable {
    pub fn as_str(self) -> &'static str {
        match self {
            Variable::Monomer => "monomer",
            Variable::ConcentrationPct => "concentration_pct",
            Variable::UvIntensity => "uv_intensity_mw_cm2",
            Variable::CellGap => "cell_gap_um",
        }
    }

    pub fn parse(s: &str) -> Option<Variable> {
        [
            Variable::Monomer,
            Variable::ConcentrationPct,
            Variable::UvIntensity,
            Variable::CellGap,
        ]
        .into_iter()
        .find(|v| v.as_str() == s)
    }

    /// Axis label for charts.
    pub fn label(self) -> &'static str {
        match self {
            Variable::Monomer => "Monomer",
            Variable::ConcentrationPct => "Concentration (%)",
            Variable::UvIntensity => "UV intensity (mW/cm2)",
            Variable::CellGap => "Cell gap (um)",
        }
    }

    fn is_numeric(self) -> bool {
        self != Variable::Monomer
    }
}

/// Value of the study variable for one entry.
#[derive(Debug, Clone, PartialEq)]
pub enum VarValue {
    Number(f64),
    Label(String),
}

impl VarValue {
    fn parse(variable: Variable, s: &str) -> Option<VarValue> {
        if variable.is_numeric() {
            s.parse::<f64>().ok().filter(|v| v.is_finite()).map(VarValue::Number)
        } else {
            Some(VarValue::Label(s.to_string()))
        }
    }

    pub fn matches(&self, other: &VarValue) -> bool {
        match (self, other) {
            (VarValue::Number(a), VarValue::Number(b)) => (a - b).abs() <= VALUE_EPS * a.abs().max(1.0),
            (VarValue::Label(a), VarValue::Label(b)) => a == b,
            _ => false,
        }
    }

    fn order(&self, other: &VarValue) -> Ordering {
        match (self, other) {
            (VarValue::Number(a), VarValue::Number(b)) => a.total_cmp(b),
            (VarValue::Label(a), VarValue::Label(b)) => a.cmp(b),
            (VarValue::Number(_), VarValue::Label(_)) => Ordering::Less,
            (VarValue::Label(_), VarValue::Number(_)) => Ordering::Greater,
        }
    }
}

impl fmt::Display for VarValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarValue::Number(v) => write!(f, "{v}"),
            VarValue::Label(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EntryData {
    Curve(CurveSamples),
    /// Reference scalars only; any of them may be absent.
    Scalars {
        i_min: Option<f64>,
        i_max: Option<f64>,
        v_sat: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub value: VarValue,
    pub data: EntryData,
    pub provenance: String,
    pub selected: bool,
}

/// Structural claims that [`check_anchors`] verifies.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnchorClaims {
    pub argmax_cr: Option<VarValue>,
    pub argmax_v_sat: Option<VarValue>,
    pub argmin_v_sat: Option<VarValue>,
    pub min_v_sat: Option<f64>,
    pub min_v_sat_within_v: Option<f64>,
    pub rising_after_min: bool,
    /// Groups in increasing V_sat order; members of a group are similar.
    pub v_sat_order: Option<Vec<Vec<String>>>,
    pub similar_within_v: Option<f64>,
    pub selected: Option<VarValue>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyDataset {
    pub name: String,
    pub variable: Variable,
    pub note: Option<String>,
    pub entries: Vec<DatasetEntry>,
    pub claims: AnchorClaims,
}

impl StudyDataset {
    /// Every curve and intensity scalar multiplied by `k`.
    pub fn scaled(&self, k: f64) -> StudyDataset {
        let mut out = self.clone();
        for e in &mut out.entries {
            e.data = match &e.data {
                EntryData::Curve(c) => EntryData::Curve(c.scaled(k).expect("positive scale keeps samples valid")),
                EntryData::Scalars { i_min, i_max, v_sat } => EntryData::Scalars {
                    i_min: i_min.map(|v| v * k),
                    i_max: i_max.map(|v| v * k),
                    v_sat: *v_sat,
                },
            };
        }
        out
    }

    /// Curves of the entries that have them, labelled by variable value.
    pub fn curves(&self) -> Vec<(String, CurveSamples)> {
        self.entries
            .iter()
            .filter_map(|e| match &e.data {
                EntryData::Curve(c) => Some((e.value.to_string(), c.clone())),
                EntryData::Scalars { .. } => None,
            })
            .collect()
    }
}

fn parse_groups(s: &str) -> Vec<Vec<String>> {
    s.split('<')
        .map(|g| g.split('~').map(|m| m.trim().to_string()).collect())
        .collect()
}

/// Parses a dataset; `load_curve` returns the CSV text for a `curve` path.
pub fn parse_dataset(
    text: &str,
    load_curve: &dyn Fn(&str) -> Result<String, String>,
) -> Result<StudyDataset, DatasetError> {
    let doc = Document::parse(text)?;
    doc.check_sections(&["dataset", "entry", "checks"], &["dataset", "checks"])?;
    let mut r = SectionReader::of(&doc, "dataset");
    let name = r.string("name");
    let name = r.require("name", name)?;
    let var = r.string("variable");
    let var = r.require("variable", var)?;
    let variable = Variable::parse(&var).ok_or_else(|| {
        r.invalid(
            "variable",
            format!("unknown variable `{var}` (monomer, concentration_pct, uv_intensity_mw_cm2, cell_gap_um)"),
        )
    })?;
    let note = r.string("note");
    r.finish()?;

    let value_of = |r: &SectionReader<'_>, key: &str, raw: &str| {
        VarValue::parse(variable, raw)
            .ok_or_else(|| r.invalid(key, format!("`{raw}` is not a valid {}", variable.as_str())))
    };

    let mut entries: Vec<DatasetEntry> = Vec::new();
    for section in doc.sections_named("entry") {
        let mut r = SectionReader::new(section);
        let raw = r.raw("value").map(|e| (e.value.clone(), e.line));
        let (raw, line) = r.require("value", raw)?;
        let value = value_of(&r, "value", &raw)?;
        if entries.iter().any(|e| e.value.matches(&value)) {
            return Err(DatasetError::DuplicateValue { line, value: raw });
        }
        let provenance = r.string("provenance");
        let provenance = r.require("provenance", provenance)?;
        let selected = r.parsed::<bool>("selected", "true or false")?.unwrap_or(false);
        let data = match r.raw("curve") {
            Some(e) => {
                let csv = load_curve(&e.value).map_err(|message| DatasetError::Curve {
                    line: e.line,
                    path: e.value.clone(),
                    message,
                })?;
                let samples = read_curve_csv(csv.as_bytes()).map_err(|err| DatasetError::Curve {
                    line: e.line,
                    path: e.value.clone(),
                    message: err.to_string(),
                })?;
                for k in ["i_min", "i_max", "v_sat"] {
                    if r.has(k) {
                        return Err(r.invalid(k, "an entry has either a curve or scalars, not both").into());
                    }
                }
                EntryData::Curve(samples)
            }
            None => EntryData::Scalars {
                i_min: r.f64("i_min")?,
                i_max: r.f64("i_max")?,
                v_sat: r.f64("v_sat")?,
            },
        };
        r.finish()?;
        entries.push(DatasetEntry {
            value,
            data,
            provenance,
            selected,
        });
    }
    if entries.is_empty() {
        return Err(DatasetError::Empty);
    }

    let mut r = SectionReader::of(&doc, "checks");
    let value_claim = |r: &mut SectionReader<'_>, key: &str| -> Result<Option<VarValue>, KvError> {
        match r.string(key) {
            Some(raw) => value_of(r, key, &raw).map(Some),
            None => Ok(None),
        }
    };
    let claims = AnchorClaims {
        argmax_cr: value_claim(&mut r, "argmax_cr")?,
        argmax_v_sat: value_claim(&mut r, "argmax_v_sat")?,
        argmin_v_sat: value_claim(&mut r, "argmin_v_sat")?,
        min_v_sat: r.f64("min_v_sat")?,
        min_v_sat_within_v: r.f64("min_v_sat_within_v")?,
        rising_after_min: r.parsed::<bool>("rising_after_min", "true or false")?.unwrap_or(false),
        v_sat_order: r.string("v_sat_order").map(|s| parse_groups(&s)),
        similar_within_v: r.f64("similar_within_v")?,
        selected: value_claim(&mut r, "selected")?,
    };
    r.finish()?;
    Ok(StudyDataset {
        name,
        variable,
        note,
        entries,
        claims,
    })
}

/// Loads a dataset file; curve paths resolve against its directory.
pub fn load_dataset(path: &Path) -> Result<StudyDataset, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let dir = path.parent().unwrap_or(Path::new("."));
    parse_dataset(&text, &|p| {
        std::fs::read_to_string(dir.join(p)).map_err(|e| e.to_string())
    })
}

fn embedded_curve(path: &str) -> Result<String, String> {
    let text = match path {
        "anchors/hcm009.csv" => include_str!("../../data/anchors/hcm009.csv"),
        "anchors/rm257.csv" => include_str!("../../data/anchors/rm257.csv"),
        "anchors/conc_4pct.csv" => include_str!("../../data/anchors/conc_4pct.csv"),
        "anchors/conc_5pct.csv" => include_str!("../../data/anchors/conc_5pct.csv"),
        "anchors/conc_7pct.csv" => include_str!("../../data/anchors/conc_7pct.csv"),
        "anchors/conc_8pct.csv" => include_str!("../../data/anchors/conc_8pct.csv"),
        "anchors/uv_2.csv" => include_str!("../../data/anchors/uv_2.csv"),
        "anchors/uv_4.csv" => include_str!("../../data/anchors/uv_4.csv"),
        "anchors/uv_6.csv" => include_str!("../../data/anchors/uv_6.csv"),
        "anchors/uv_10.csv" => include_str!("../../data/anchors/uv_10.csv"),
        "anchors/uv_12.csv" => include_str!("../../data/anchors/uv_12.csv"),
        _ => return Err(format!("no embedded curve `{path}`")),
    };
    Ok(text.to_string())
}

/// CSV text of an embedded anchor curve, e.g. `anchors/hcm009.csv`.
pub fn embedded_curve_csv(path: &str) -> Option<String> {
    embedded_curve(path).ok()
}

/// One of [`BUILTIN_DATASETS`].
pub fn builtin_dataset(name: &str) -> Option<StudyDataset> {
    let text = match name {
        "monomer" => include_str!("../../data/monomer.dataset"),
        "concentration" => include_str!("../../data/concentration.dataset"),
        "uv_intensity" => include_str!("../../data/uv_intensity.dataset"),
        "cell_gap" => include_str!("../../data/cell_gap.dataset"),
        _ => return None,
    };
    Some(parse_dataset(text, &embedded_curve).expect("embedded datasets are valid"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: VarValue,
    pub i_min: Option<f64>,
    pub i_max: Option<f64>,
    pub cr: Option<f64>,
    pub v_sat: Option<f64>,
    /// Why metrics are missing, for curve entries that failed.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub variable: Variable,
    pub rows: Vec<SweepRow>,
}

fn row_for(e: &DatasetEntry) -> SweepRow {
    match &e.data {
        EntryData::Curve(c) => match curve_metrics(c) {
            Ok(m) => SweepRow {
                value: e.value.clone(),
                i_min: Some(m.i_min),
                i_max: Some(m.i_max),
                cr: Some(m.cr),
                v_sat: Some(m.v_sat),
                error: None,
            },
            Err(err) => SweepRow {
                value: e.value.clone(),
                i_min: None,
                i_max: None,
                cr: None,
                v_sat: None,
                error: Some(err.to_string()),
            },
        },
        EntryData::Scalars { i_min, i_max, v_sat } => SweepRow {
            value: e.value.clone(),
            i_min: *i_min,
            i_max: *i_max,
            cr: match (i_min, i_max) {
                (Some(lo), Some(hi)) if *lo > 0.0 => Some(hi / lo),
                _ => None,
            },
            v_sat: *v_sat,
            error: None,
        },
    }
}

/// Metrics for every entry, sorted by variable value.
pub fn run_sweep(dataset: &StudyDataset) -> SweepResult {
    let mut rows: Vec<SweepRow> = dataset.entries.par_iter().map(row_for).collect();
    rows.sort_by(|a, b| a.value.order(&b.value));
    SweepResult {
        variable: dataset.variable,
        rows,
    }
}

pub fn sweep_csv(result: &SweepResult) -> String {
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in &result.rows {
        let value = match &r.value {
            VarValue::Label(s) if s.contains([',', '"']) => format!("\"{}\"", s.replace('"', "\"\"")),
            v => v.to_string(),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            result.variable.as_str(),
            value,
            opt(r.i_min),
            opt(r.i_max),
            opt(r.cr),
            opt(r.v_sat)
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorCheck {
    pub name: String,
    pub passed: bool,
    /// Too few rows to test the claim; passes vacuously.
    pub degenerate: bool,
    pub detail: String,
}

impl AnchorCheck {
    fn new(name: String, passed: bool, detail: String) -> Self {
        AnchorCheck {
            name,
            passed,
            degenerate: false,
            detail,
        }
    }

    fn degenerate(name: String) -> Self {
        AnchorCheck {
            name,
            passed: true,
            degenerate: true,
            detail: "fewer than two rows carry this metric".into(),
        }
    }
}

impl fmt::Display for AnchorCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = match (self.passed, self.degenerate) {
            (true, true) => "PASS (degenerate)",
            (true, false) => "PASS",
            (false, _) => "FAIL",
        };
        write!(f, "{status} {}: {}", self.name, self.detail)
    }
}

fn extreme(
    rows: &[SweepRow],
    metric: fn(&SweepRow) -> Option<f64>,
    better: fn(f64, f64) -> bool,
) -> Option<(usize, f64, usize)> {
    let mut best: Option<(usize, f64)> = None;
    let mut count = 0;
    for (i, r) in rows.iter().enumerate() {
        if let Some(v) = metric(r) {
            count += 1;
            if best.is_none_or(|(_, b)| better(v, b)) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, v)| (i, v, count))
}

fn extreme_check(
    rows: &[SweepRow],
    name: String,
    want: &VarValue,
    metric: fn(&SweepRow) -> Option<f64>,
    better: fn(f64, f64) -> bool,
) -> (AnchorCheck, Option<usize>) {
    match extreme(rows, metric, better) {
        Some((i, v, n)) if n >= 2 => {
            let got = &rows[i].value;
            let ok = got.matches(want);
            let detail = if ok {
                format!("at {got} ({v})")
            } else {
                format!("at {got} ({v}), expected {want}")
            };
            (AnchorCheck::new(name, ok, detail), Some(i))
        }
        _ => (AnchorCheck::degenerate(name), None),
    }
}

fn v_sat_order(rows: &[SweepRow], groups: &[Vec<String>], within: f64) -> AnchorCheck {
    let name = format!(
        "V_sat order {}",
        groups.iter().map(|g| g.join(" ~ ")).collect::<Vec<_>>().join(" < ")
    );
    let mut values: Vec<Vec<f64>> = Vec::new();
    for g in groups {
        let mut vs = Vec::new();
        for label in g {
            let found = rows
                .iter()
                .find(|r| r.value.matches(&VarValue::Label(label.clone())))
                .and_then(|r| r.v_sat);
            match found {
                Some(v) => vs.push(v),
                None => return AnchorCheck::new(name, false, format!("no V_sat for {label}")),
            }
        }
        values.push(vs);
    }
    for (g, vs) in groups.iter().zip(&values) {
        let lo = vs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo > within {
            return AnchorCheck::new(
                name,
                false,
                format!("{} differ by {} V (> {within} V)", g.join(" ~ "), hi - lo),
            );
        }
    }
    for k in 1..groups.len() {
        let prev = values[k - 1].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let next = values[k].iter().copied().fold(f64::INFINITY, f64::min);
        if !(prev < next) {
            return AnchorCheck::new(
                name,
                false,
                format!(
                    "{} ({prev} V) is not below {} ({next} V)",
                    groups[k - 1].join(" ~ "),
                    groups[k].join(" ~ ")
                ),
            );
        }
    }
    let detail = groups
        .iter()
        .zip(&values)
        .map(|(g, vs)| {
            g.iter()
                .zip(vs)
                .map(|(l, v)| format!("{l} {v} V"))
                .collect::<Vec<_>>()
                .join(", ")
        })
        .collect::<Vec<_>>()
        .join("; ");
    AnchorCheck::new(name, true, detail)
}

/// Verifies the dataset's structural claims against a sweep of it.
pub fn check_anchors(result: &SweepResult, dataset: &StudyDataset) -> Vec<AnchorCheck> {
    let rows = &result.rows;
    let c = &dataset.claims;
    let mut out = Vec::new();
    let gt = |a: f64, b: f64| a > b;
    let lt = |a: f64, b: f64| a < b;
    if let Some(want) = &c.argmax_cr {
        out.push(extreme_check(rows, "argmax CR".into(), want, |r| r.cr, gt).0);
    }
    if let Some(want) = &c.argmax_v_sat {
        out.push(extreme_check(rows, "argmax V_sat".into(), want, |r| r.v_sat, gt).0);
    }
    if let Some(want) = &c.argmin_v_sat {
        let (check, at) = extreme_check(rows, "argmin V_sat".into(), want, |r| r.v_sat, lt);
        out.push(check);
        if let (Some(i), Some(target)) = (at, c.min_v_sat) {
            let tol = c.min_v_sat_within_v.unwrap_or(0.05);
            let got = rows[i].v_sat.expect("argmin row has v_sat");
            out.push(AnchorCheck::new(
                "minimum V_sat".into(),
                (got - target).abs() <= tol,
                format!("{got} V, expected {target} +/- {tol} V"),
            ));
        }
        if let (Some(i), true) = (at, c.rising_after_min) {
            let after: Vec<(&VarValue, f64)> = rows[i..]
                .iter()
                .filter_map(|r| r.v_sat.map(|v| (&r.value, v)))
                .collect();
            let bad = after.windows(2).find(|w| !(w[1].1 > w[0].1));
            out.push(match bad {
                None => AnchorCheck::new(
                    "V_sat rising after minimum".into(),
                    true,
                    format!("{} rows after {}", after.len() - 1, rows[i].value),
                ),
                Some(w) => AnchorCheck::new(
                    "V_sat rising after minimum".into(),
                    false,
                    format!(
                        "V_sat at {} ({}) does not exceed {} ({})",
                        w[1].0, w[1].1, w[0].0, w[0].1
                    ),
                ),
            });
        }
    }
    if let Some(groups) = &c.v_sat_order {
        out.push(v_sat_order(rows, groups, c.similar_within_v.unwrap_or(0.5)));
    }
    if let Some(want) = &c.selected {
        let chosen: Vec<&DatasetEntry> = dataset.entries.iter().filter(|e| e.selected).collect();
        out.push(match chosen[..] {
            [e] if e.value.matches(want) => AnchorCheck::new("selected".into(), true, format!("{} selected", e.value)),
            [e] => AnchorCheck::new(
                "selected".into(),
                false,
                format!("{} selected, expected {want}", e.value),
            ),
            _ => AnchorCheck::new(
                "selected".into(),
                false,
                format!("{} entries marked selected, expected exactly one", chosen.len()),
            ),
        });
    }
    out
}
