//! Run configuration files.
//!
//! ```text
//! [panel]
//! preset = stage2          # stage1 | stage2 | stage3 | custom
//! mask_size_um = 90        # any PanelSpec field overrides the preset
//!
//! [material]
//! name = HCM-009           # a preset, or any name plus all six parameters
//!
//! [mask]
//! off_state_background = auto
//! ```
//!
//! Sections: `panel`, `material`, `timing`, `led`, `mask`, `stack`,
//! `simulation`, `io`. Every key is optional; missing keys take the defaults
//! listed by [`RunConfig::default`] and are reported in
//! [`ParsedConfig::defaults_used`]. Unknown keys and sections are errors.

pub mod kv;

use std::path::PathBuf;

use kv::{Document, KvError, SectionReader, Writer};

use crate::electro_optics::{MaterialResponse, ResponseCurve};
use crate::geometry::{OpticalStack, PanelSpec, Stage};
use crate::schedule::TimingConfig;
use crate::simulator::{calibrate_luminance, Edges, LedConfig, MaskModel, SimError, SimulationSetup, DEFAULT_DT_MS};

pub use kv::KvError as ConfigError;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationParams {
    pub dt_ms: f64,
    /// Fixed luminance scale; `None` calibrates it from the material.
    pub luminance_scale: Option<f64>,
}

impl Default for SimulationParams {
    fn default() -> Self {
        SimulationParams {
            dt_ms: DEFAULT_DT_MS,
            luminance_scale: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IoPaths {
    pub front: Option<PathBuf>,
    pub back: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for IoPaths {
    fn default() -> Self {
        IoPaths {
            front: None,
            back: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub panel: PanelSpec,
    pub material: MaterialResponse,
    pub timing: TimingConfig,
    pub led: LedConfig,
    pub mask: MaskModel,
    pub stack: OpticalStack,
    pub simulation: SimulationParams,
    pub io: IoPaths,
}

impl Default for RunConfig {
    /// Stage-3 panel, HCM-009, 60 Hz, default LEDs and an ideal mask.
    fn default() -> Self {
        RunConfig {
            panel: PanelSpec::stage3(),
            material: MaterialResponse::hcm009(),
            timing: TimingConfig::default(),
            led: LedConfig::default(),
            mask: MaskModel::default(),
            stack: OpticalStack::default(),
            simulation: SimulationParams::default(),
            io: IoPaths::default(),
        }
    }
}

impl RunConfig {
    /// Simulation inputs, calibrating the luminance scale when it is `auto`.
    pub fn setup(&self) -> Result<SimulationSetup, SimError> {
        let luminance_scale = match self.simulation.luminance_scale {
            Some(k) => k,
            None => calibrate_luminance(&self.material, &self.led)?,
        };
        let setup = SimulationSetup {
            spec: self.panel.clone(),
            material: self.material.clone(),
            led: self.led,
            mask: self.mask,
            stack: self.stack,
            dt_ms: self.simulation.dt_ms,
            luminance_scale,
        };
        setup.validate()?;
        Ok(setup)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedConfig {
    pub config: RunConfig,
    /// `section.key` for every setting that took its default.
    pub defaults_used: Vec<String>,
}

const SECTIONS: [&str; 8] = [
    "panel",
    "material",
    "timing",
    "led",
    "mask",
    "stack",
    "simulation",
    "io",
];

struct Ctx<'a> {
    r: SectionReader<'a>,
    section: &'static str,
    defaults: &'a mut Vec<String>,
}

impl Ctx<'_> {
    fn note(&mut self, key: &str) {
        self.defaults.push(format!("{}.{key}", self.section));
    }

    fn f64(&mut self, key: &str, slot: &mut f64) -> Result<(), KvError> {
        match self.r.f64(key)? {
            Some(v) => *slot = v,
            None => self.note(key),
        }
        Ok(())
    }

    fn u32(&mut self, key: &str, slot: &mut u32) -> Result<(), KvError> {
        match self.r.u32(key)? {
            Some(v) => *slot = v,
            None => self.note(key),
        }
        Ok(())
    }

    /// Number, or `auto` for `None`.
    fn auto_f64(&mut self, key: &str, slot: &mut Option<f64>) -> Result<(), KvError> {
        let Some(e) = self.r.raw(key) else {
            self.note(key);
            return Ok(());
        };
        if e.value == "auto" {
            *slot = None;
            return Ok(());
        }
        match e.value.parse::<f64>() {
            Ok(v) if v.is_finite() => *slot = Some(v),
            _ => {
                return Err(KvError::Type {
                    line: e.line,
                    key: key.to_string(),
                    expected: "a number or `auto`",
                    value: e.value.clone(),
                })
            }
        }
        Ok(())
    }

    fn path(&mut self, key: &str) -> Option<PathBuf> {
        let v = self.r.string(key).map(PathBuf::from);
        if v.is_none() {
            self.note(key);
        }
        v
    }
}

fn reader<'a>(doc: &'a Document, section: &'static str, defaults: &'a mut Vec<String>) -> Ctx<'a> {
    Ctx {
        r: SectionReader::of(doc, section),
        section,
        defaults,
    }
}

fn parse_panel(doc: &Document, defaults: &mut Vec<String>) -> Result<PanelSpec, KvError> {
    let mut c = reader(doc, "panel", defaults);
    let preset = c.r.string("preset");
    let mut p = match preset.as_deref() {
        None => {
            c.note("preset");
            PanelSpec::stage3()
        }
        Some("custom") => PanelSpec {
            stage: Stage::Custom,
            ..PanelSpec::stage3()
        },
        Some(name) => PanelSpec::preset(name).ok_or_else(|| {
            c.r.invalid(
                "preset",
                format!("unknown panel preset `{name}` (stage1, stage2, stage3, custom)"),
            )
        })?,
    };
    c.u32("pixel_cols", &mut p.pixel_cols)?;
    c.u32("pixel_rows", &mut p.pixel_rows)?;
    c.u32("subpixels_per_pixel_side", &mut p.subpixels_per_pixel_side)?;
    c.f64("subpixel_pitch_um", &mut p.subpixel_pitch_um)?;
    c.f64("unit_cell_pitch_um", &mut p.unit_cell_pitch_um)?;
    c.f64("mask_size_um", &mut p.mask_size_um)?;
    c.f64("stripe_active_width_um", &mut p.stripe_active_width_um)?;
    c.f64("stripe_inactive_width_um", &mut p.stripe_inactive_width_um)?;
    c.f64("cell_gap_um", &mut p.cell_gap_um)?;
    c.f64("panel_width_in", &mut p.panel_width_in)?;
    c.f64("panel_height_in", &mut p.panel_height_in)?;
    let line = c.r.line();
    c.r.finish()?;
    p.validate().map_err(|e| KvError::Invalid {
        line,
        key: "panel".into(),
        message: e.to_string(),
    })?;
    Ok(p)
}

fn parse_material(doc: &Document, defaults: &mut Vec<String>) -> Result<MaterialResponse, KvError> {
    let mut c = reader(doc, "material", defaults);
    let name = c.r.string("name");
    let keys = ["i_min", "i_max", "v_mid", "v_width", "tau_on_ms", "tau_off_ms"];
    let mut m = match name.as_deref() {
        None => {
            c.note("name");
            MaterialResponse::hcm009()
        }
        Some(n) => match MaterialResponse::preset(n) {
            Some(m) => m,
            None => {
                // a custom material must spell out every parameter
                if let Some(k) = keys.iter().find(|k| !c.r.has(k)) {
                    return Err(c.r.invalid(
                        "name",
                        format!(
                            "`{n}` is not a preset ({}); a custom material needs `{k}`",
                            MaterialResponse::PRESETS.join(", ")
                        ),
                    ));
                }
                MaterialResponse {
                    name: n.to_string(),
                    ..MaterialResponse::hcm009()
                }
            }
        },
    };
    let mut curve: ResponseCurve = m.curve;
    c.f64("i_min", &mut curve.i_min)?;
    c.f64("i_max", &mut curve.i_max)?;
    c.f64("v_mid", &mut curve.v_mid)?;
    c.f64("v_width", &mut curve.v_width)?;
    m.curve = curve;
    c.f64("tau_on_ms", &mut m.tau_on_ms)?;
    c.f64("tau_off_ms", &mut m.tau_off_ms)?;
    let line = c.r.line();
    c.r.finish()?;
    m.validate().map_err(|e| KvError::Invalid {
        line,
        key: "material".into(),
        message: e.to_string(),
    })?;
    Ok(m)
}

/// Parses a run configuration; an empty text gives [`RunConfig::default`].
pub fn parse_config(text: &str) -> Result<ParsedConfig, KvError> {
    let doc = Document::parse(text)?;
    doc.check_sections(&SECTIONS, &SECTIONS)?;
    let mut defaults = Vec::new();
    let panel = parse_panel(&doc, &mut defaults)?;
    let material = parse_material(&doc, &mut defaults)?;

    let mut timing = TimingConfig::default();
    let mut c = reader(&doc, "timing", &mut defaults);
    c.f64("frame_rate", &mut timing.frame_rate_hz)?;
    c.u32("subframes_per_frame", &mut timing.subframes_per_frame)?;
    c.f64("drive_frequency", &mut timing.drive_frequency_hz)?;
    c.f64("settle_margin", &mut timing.settle_margin)?;
    let line = c.r.line();
    c.r.finish()?;
    timing.validate().map_err(|e| KvError::Invalid {
        line,
        key: "timing".into(),
        message: e.to_string(),
    })?;

    let mut led = LedConfig::default();
    let mut c = reader(&doc, "led", &mut defaults);
    c.f64("flux_r", &mut led.flux[0])?;
    c.f64("flux_g", &mut led.flux[1])?;
    c.f64("flux_b", &mut led.flux[2])?;
    c.f64("coupling_efficiency", &mut led.coupling_efficiency)?;
    match c.r.raw("edges") {
        Some(e) => {
            led.edges = Edges::parse(&e.value).ok_or_else(|| KvError::Type {
                line: e.line,
                key: "edges".into(),
                expected: "left, right or both",
                value: e.value.clone(),
            })?
        }
        None => c.note("edges"),
    }
    c.f64("flux_depletion", &mut led.flux_depletion)?;
    let line = c.r.line();
    c.r.finish()?;
    led.validate().map_err(|e| KvError::Invalid {
        line,
        key: "led".into(),
        message: e.to_string(),
    })?;

    let mut mask = MaskModel::default();
    let mut c = reader(&doc, "mask", &mut defaults);
    c.f64("blocking_efficiency", &mut mask.blocking_efficiency)?;
    c.auto_f64("off_state_background", &mut mask.off_state_background)?;
    let line = c.r.line();
    c.r.finish()?;
    mask.validate().map_err(|e| KvError::Invalid {
        line,
        key: "mask".into(),
        message: e.to_string(),
    })?;

    let mut stack = OpticalStack::default();
    let mut c = reader(&doc, "stack", &mut defaults);
    c.f64("t_interfaces", &mut stack.t_interfaces)?;
    c.f64("t_ito", &mut stack.t_ito)?;
    let line = c.r.line();
    c.r.finish()?;
    stack.validate().map_err(|e| KvError::Invalid {
        line,
        key: "stack".into(),
        message: e.to_string(),
    })?;

    let mut simulation = SimulationParams::default();
    let mut c = reader(&doc, "simulation", &mut defaults);
    c.f64("dt_ms", &mut simulation.dt_ms)?;
    c.auto_f64("luminance_scale", &mut simulation.luminance_scale)?;
    if !(simulation.dt_ms > 0.0) {
        return Err(c.r.invalid("dt_ms", "must be > 0"));
    }
    if simulation.luminance_scale.is_some_and(|s| s <= 0.0) {
        return Err(c.r.invalid("luminance_scale", "must be > 0"));
    }
    c.r.finish()?;

    let mut io = IoPaths::default();
    let mut c = reader(&doc, "io", &mut defaults);
    io.front = c.path("front");
    io.back = c.path("back");
    if let Some(p) = c.path("output_dir") {
        io.output_dir = p;
    }
    c.r.finish()?;

    Ok(ParsedConfig {
        config: RunConfig {
            panel,
            material,
            timing,
            led,
            mask,
            stack,
            simulation,
            io,
        },
        defaults_used: defaults,
    })
}

fn auto(v: Option<f64>) -> String {
    v.map_or_else(|| "auto".to_string(), |x| x.to_string())
}

/// Writes every setting explicitly; parsing the result gives back `c`.
pub fn serialize_config(c: &RunConfig) -> String {
    let mut w = Writer::default();
    let p = &c.panel;
    w.section("panel")
        .kv("preset", p.stage.as_str())
        .kv("pixel_cols", p.pixel_cols)
        .kv("pixel_rows", p.pixel_rows)
        .kv("subpixels_per_pixel_side", p.subpixels_per_pixel_side)
        .kv("subpixel_pitch_um", p.subpixel_pitch_um)
        .kv("unit_cell_pitch_um", p.unit_cell_pitch_um)
        .kv("mask_size_um", p.mask_size_um)
        .kv("stripe_active_width_um", p.stripe_active_width_um)
        .kv("stripe_inactive_width_um", p.stripe_inactive_width_um)
        .kv("cell_gap_um", p.cell_gap_um)
        .kv("panel_width_in", p.panel_width_in)
        .kv("panel_height_in", p.panel_height_in);
    let m = &c.material;
    w.section("material")
        .kv("name", &m.name)
        .kv("i_min", m.curve.i_min)
        .kv("i_max", m.curve.i_max)
        .kv("v_mid", m.curve.v_mid)
        .kv("v_width", m.curve.v_width)
        .kv("tau_on_ms", m.tau_on_ms)
        .kv("tau_off_ms", m.tau_off_ms);
    let t = &c.timing;
    w.section("timing")
        .kv("frame_rate", t.frame_rate_hz)
        .kv("subframes_per_frame", t.subframes_per_frame)
        .kv("drive_frequency", t.drive_frequency_hz)
        .kv("settle_margin", t.settle_margin);
    let l = &c.led;
    w.section("led")
        .kv("flux_r", l.flux[0])
        .kv("flux_g", l.flux[1])
        .kv("flux_b", l.flux[2])
        .kv("coupling_efficiency", l.coupling_efficiency)
        .kv("edges", l.edges.as_str())
        .kv("flux_depletion", l.flux_depletion);
    w.section("mask")
        .kv("blocking_efficiency", c.mask.blocking_efficiency)
        .kv("off_state_background", auto(c.mask.off_state_background));
    w.section("stack")
        .kv("t_interfaces", c.stack.t_interfaces)
        .kv("t_ito", c.stack.t_ito);
    w.section("simulation")
        .kv("dt_ms", c.simulation.dt_ms)
        .kv("luminance_scale", auto(c.simulation.luminance_scale));
    w.section("io");
    if let Some(f) = &c.io.front {
        w.kv("front", f.display());
    }
    if let Some(b) = &c.io.back {
        w.kv("back", b.display());
    }
    w.kv("output_dir", c.io.output_dir.display());
    w.finish()
}
