//! Time-domain simulation of a drive schedule on the panel.
//!
//! Every sub-pixel on one electrode follows the same trajectory, so the
//! simulation runs per electrode. The state is the scattering level above
//! the 0 V floor, `x = I - i_min`. Inside each interval where the drive
//! amplitude is constant, `x` relaxes exponentially towards the steady-state
//! excess of that amplitude, and the light it scatters is integrated in
//! closed form. Steps never straddle a sub-frame or drive-window boundary.
//!
//! Luminance seen by the viewer of side `s` at pixel `p`, colour `c`:
//!
//! ```text
//! L = k_c(p) * ( X_s,c(p) / T  +  bg * T_c / T  +  (1 - b) * X_s',c(p) / T )
//! k_c(p) = scale * coupling * flux_c * frac_subpixel * weight(p)
//! ```
//!
//! where `X_s,c` is the integral of `x` over the colour-`c` sub-frames, `T`
//! the frame period, `T_c` the time the colour-`c` LED is lit, `bg` the
//! off-state background and `b` the mask blocking efficiency. The last term
//! is light leaking through the mask from the opposite sub-pixel.

mod report;

pub use report::{parse_report, render_side, serialize_report, ReportError};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::electro_optics::{MaterialError, MaterialResponse};
use crate::geometry::{electrode_map, panel_transparency, ElectrodeMap, GeometryError, OpticalStack, PanelSpec, Side};
use crate::image::RgbImage;
use crate::schedule::{
    compile_schedule, validate_schedule, DriveSchedule, FramePair, PanelRef, ScheduleError, TimingConfig, Violation,
};

pub const DEFAULT_DT_MS: f64 = 0.05;
/// Full-white brightness the luminance scale is calibrated to, cd/m².
pub const WHITE_TARGET_CD_M2: f64 = 16.0;
pub const MAX_WARMUP_FRAMES: u32 = 1000;
const PERIODIC_TOL: f64 = 1e-9;
/// Deviation allowed by the obversion check.
pub const OBVERSION_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("schedule is invalid: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidSchedule(Vec<Violation>),
    #[error("schedule is for a {sched_cols}x{sched_rows} panel but the panel is {cols}x{rows}")]
    Mismatch {
        sched_cols: u32,
        sched_rows: u32,
        cols: u32,
        rows: u32,
    },
    #[error("time step {dt_ms} ms is unstable: must be > 0 and <= min(tau_on, tau_off) / 4 = {limit_ms} ms")]
    Step { dt_ms: f64, limit_ms: f64 },
    #[error("LED config: {0}")]
    Led(String),
    #[error("mask model: {0}")]
    Mask(String),
    #[error("luminance scale must be finite and > 0 (got {0})")]
    Scale(f64),
    #[error("calibration undefined: full white produces no light (check LED fluxes)")]
    CalibrationUndefined,
    #[error("no periodic state after {0} warm-up frames")]
    NoPeriodicState(u32),
}

/// Edges of the waveguide that carry LEDs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edges {
    Left,
    Right,
    Both,
}

impl Edges {
    pub fn as_str(self) -> &'static str {
        match self {
            Edges::Left => "left",
            Edges::Right => "right",
            Edges::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Option<Edges> {
        match s {
            "left" => Some(Edges::Left),
            "right" => Some(Edges::Right),
            "both" => Some(Edges::Both),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedConfig {
    /// Radiant flux per colour (R, G, B), a.u.
    pub flux: [f64; 3],
    pub coupling_efficiency: f64,
    pub edges: Edges,
    /// Linear loss of guided flux across the panel width, as a fraction of
    /// the injected flux. Zero gives uniform flux.
    pub flux_depletion: f64,
}

impl Default for LedConfig {
    fn default() -> Self {
        LedConfig {
            flux: [1.0; 3],
            coupling_efficiency: 0.5,
            edges: Edges::Both,
            flux_depletion: 0.0,
        }
    }
}

impl LedConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if let Some(f) = self.flux.iter().find(|f| !(f.is_finite() && **f >= 0.0)) {
            return Err(SimError::Led(format!("fluxes must be finite and >= 0 (got {f})")));
        }
        let c = self.coupling_efficiency;
        if !(c > 0.0 && c <= 1.0) {
            return Err(SimError::Led(format!(
                "coupling_efficiency must lie in (0, 1] (got {c})"
            )));
        }
        let d = self.flux_depletion;
        if !(0.0..1.0).contains(&d) {
            return Err(SimError::Led(format!("flux_depletion must lie in [0, 1) (got {d})")));
        }
        Ok(())
    }

    /// Relative guided flux reaching panel column `col`.
    pub fn flux_weight(&self, col: u32, cols: u32) -> f64 {
        let u = (f64::from(col) + 0.5) / f64::from(cols);
        let d = self.flux_depletion;
        match self.edges {
            Edges::Left => 1.0 - d * u,
            Edges::Right => 1.0 - d * (1.0 - u),
            // half the flux enters from each side
            Edges::Both => 0.5 * (1.0 - d * u) + 0.5 * (1.0 - d * (1.0 - u)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskModel {
    pub blocking_efficiency: f64,
    /// Luminance floor in material units. `None` uses the material's `i_min`.
    pub off_state_background: Option<f64>,
}

impl Default for MaskModel {
    fn default() -> Self {
        MaskModel {
            blocking_efficiency: 1.0,
            off_state_background: None,
        }
    }
}

impl MaskModel {
    pub fn validate(&self) -> Result<(), SimError> {
        let b = self.blocking_efficiency;
        if !(0.0..=1.0).contains(&b) {
            return Err(SimError::Mask(format!(
                "blocking_efficiency must lie in [0, 1] (got {b})"
            )));
        }
        if let Some(bg) = self.off_state_background {
            if !(bg.is_finite() && bg >= 0.0) {
                return Err(SimError::Mask(format!(
                    "off_state_background must be finite and >= 0 (got {bg})"
                )));
            }
        }
        Ok(())
    }

    pub fn background(&self, m: &MaterialResponse) -> f64 {
        self.off_state_background.unwrap_or(m.curve.i_min)
    }
}

/// Everything besides the schedule that a simulation needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSetup {
    pub spec: PanelSpec,
    pub material: MaterialResponse,
    pub led: LedConfig,
    pub mask: MaskModel,
    pub stack: OpticalStack,
    pub dt_ms: f64,
    /// cd/m² per (material a.u. x flux a.u.).
    pub luminance_scale: f64,
}

impl SimulationSetup {
    /// Default LED, mask and stack with a calibrated luminance scale.
    pub fn new(spec: PanelSpec, material: MaterialResponse) -> Result<Self, SimError> {
        let led = LedConfig::default();
        let luminance_scale = calibrate_luminance(&material, &led)?;
        Ok(SimulationSetup {
            spec,
            material,
            led,
            mask: MaskModel::default(),
            stack: OpticalStack::default(),
            dt_ms: DEFAULT_DT_MS,
            luminance_scale,
        })
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.material.validate()?;
        self.led.validate()?;
        self.mask.validate()?;
        self.stack.validate()?;
        self.spec.validate()?;
        let limit_ms = self.material.tau_on_ms.min(self.material.tau_off_ms) / 4.0;
        if !(self.dt_ms > 0.0 && self.dt_ms <= limit_ms) {
            return Err(SimError::Step {
                dt_ms: self.dt_ms,
                limit_ms,
            });
        }
        if !(self.luminance_scale.is_finite() && self.luminance_scale > 0.0) {
            return Err(SimError::Scale(self.luminance_scale));
        }
        Ok(())
    }
}

/// Per-pixel RGB luminance as one viewer sees it, cd/m².
///
/// The back map is stored in the back viewer's orientation, so it lines up
/// with the back input image.
#[derive(Debug, Clone, PartialEq)]
pub struct LuminanceMap {
    pub cols: u32,
    pub rows: u32,
    pub values: Vec<[f64; 3]>,
}

impl LuminanceMap {
    pub fn get(&self, row: u32, col: u32) -> [f64; 3] {
        self.values[(row * self.cols + col) as usize]
    }

    /// Mean over pixels of R + G + B.
    pub fn mean_white(&self) -> f64 {
        self.values.iter().map(|v| v[0] + v[1] + v[2]).sum::<f64>() / self.values.len() as f64
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().flatten().copied().fold(0.0, f64::max)
    }
}

/// Contrast ratio that may be unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Contrast {
    Finite(f64),
    /// Black level is exactly zero.
    Infinite,
}

impl Contrast {
    pub fn of(white: f64, black: f64) -> Contrast {
        if black == 0.0 {
            Contrast::Infinite
        } else {
            Contrast::Finite(white / black)
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Contrast::Finite(v) => v,
            Contrast::Infinite => f64::INFINITY,
        }
    }
}

impl std::fmt::Display for Contrast {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Contrast::Finite(v) => write!(f, "{v}"),
            Contrast::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportMetrics {
    /// Full-white brightness, mean over both sides, cd/m².
    pub brightness_white: f64,
    /// Full-white over all-black mean luminance, front then back.
    pub panel_cr: [Contrast; 2],
    /// Leaked over intended luminance, worst side.
    pub crosstalk: f64,
    pub transparency: f64,
    /// Brightest channel of the full-white reference; renders map it to 255.
    pub white_peak: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub panel: PanelRef,
    pub timing: TimingConfig,
    pub dt_ms: f64,
    pub luminance_scale: f64,
    pub warmup_frames: u32,
    pub luminance_front: LuminanceMap,
    pub luminance_back: LuminanceMap,
    pub metrics: ReportMetrics,
}

impl SimulationReport {
    pub fn map(&self, side: Side) -> &LuminanceMap {
        match side {
            Side::A => &self.luminance_front,
            Side::B => &self.luminance_back,
        }
    }
}

/// Luminance of one frame without reference metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameLuminance {
    pub front: LuminanceMap,
    pub back: LuminanceMap,
    /// Leaked over intended luminance per side.
    pub crosstalk: [f64; 2],
    /// Frames simulated until the periodic state was reached, worst electrode.
    pub warmup_frames: u32,
}

impl FrameLuminance {
    pub fn map(&self, side: Side) -> &LuminanceMap {
        match side {
            Side::A => &self.front,
            Side::B => &self.back,
        }
    }
}

#[derive(Clone, Copy)]
struct Segment {
    color: usize,
    len_ms: f64,
    /// Index of the sub-frame, for driven segments.
    drive: Option<usize>,
}

fn segments(s: &DriveSchedule) -> Vec<Segment> {
    let f = s.timing.drive_frequency_hz;
    let mut out = Vec::with_capacity(2 * s.subframes.len());
    for (k, sf) in s.subframes.iter().enumerate() {
        let active = sf.active_ms(f).min(sf.duration_ms);
        let color = sf.color.index();
        if active > 0.0 {
            out.push(Segment {
                color,
                len_ms: active,
                drive: Some(k),
            });
        }
        if sf.duration_ms > active {
            out.push(Segment {
                color,
                len_ms: sf.duration_ms - active,
                drive: None,
            });
        }
    }
    out
}

/// One frame of exact exponential relaxation; returns the end state and the
/// per-colour integrals of `x` in a.u.·ms.
fn run_frame(segs: &[(usize, f64, f64)], x0: f64, m: &MaterialResponse, dt: f64) -> (f64, [f64; 3]) {
    let mut x = x0;
    let mut integral = [0.0; 3];
    for &(color, len, target) in segs {
        let mut left = len;
        while left > 0.0 {
            // fold a sliver remainder into this step
            let h = if left <= dt * (1.0 + 1e-9) { left } else { dt };
            left -= h;
            if left < 0.0 {
                left = 0.0;
            }
            let tau = if target > x { m.tau_on_ms } else { m.tau_off_ms };
            let moved = -(-h / tau).exp_m1();
            integral[color] += target * h + (x - target) * tau * moved;
            let next = x + (target - x) * moved;
            x = next.clamp(x.min(target), x.max(target));
        }
    }
    (x, integral)
}

/// Warm-up until successive frames agree, then return the last frame.
fn periodic_integrals(segs: &[(usize, f64, f64)], m: &MaterialResponse, dt: f64) -> Result<([f64; 3], u32), SimError> {
    let mut x = 0.0;
    let mut prev: Option<[f64; 3]> = None;
    for frame in 1..=MAX_WARMUP_FRAMES {
        let (end, cur) = run_frame(segs, x, m, dt);
        x = end;
        if let Some(p) = prev {
            let scale = cur.iter().chain(&p).fold(0.0f64, |a, v| a.max(v.abs()));
            let diff = cur.iter().zip(&p).fold(0.0f64, |a, (c, q)| a.max((c - q).abs()));
            if diff <= PERIODIC_TOL * scale {
                return Ok((cur, frame));
            }
        }
        prev = Some(cur);
    }
    Err(SimError::NoPeriodicState(MAX_WARMUP_FRAMES))
}

fn check_schedule(s: &DriveSchedule, setup: &SimulationSetup) -> Result<ElectrodeMap, SimError> {
    setup.validate()?;
    let map = electrode_map(&setup.spec)?;
    if s.panel.cols != map.cols() || s.panel.rows != map.rows() {
        return Err(SimError::Mismatch {
            sched_cols: s.panel.cols,
            sched_rows: s.panel.rows,
            cols: map.cols(),
            rows: map.rows(),
        });
    }
    let violations = validate_schedule(s);
    if !violations.is_empty() {
        return Err(SimError::InvalidSchedule(violations));
    }
    Ok(map)
}

/// Simulates the periodic state of `s` and returns both viewers' maps.
pub fn simulate_luminance(s: &DriveSchedule, setup: &SimulationSetup) -> Result<FrameLuminance, SimError> {
    let map = check_schedule(s, setup)?;
    let m = &setup.material;
    let segs = segments(s);
    let period = s.timing.frame_period_ms();
    let mut lit_ms = [0.0; 3];
    for seg in &segs {
        lit_ms[seg.color] += seg.len_ms;
    }

    let electrodes: Vec<_> = map.all_electrodes().collect();
    let per_electrode: Vec<([f64; 3], u32)> = electrodes
        .par_iter()
        .map(|&e| {
            let local: Vec<(usize, f64, f64)> = segs
                .iter()
                .map(|seg| {
                    let target = seg.drive.map_or(0.0, |k| {
                        let v = s.subframes[k].amplitudes.get(&e).copied().unwrap_or(0.0);
                        m.curve.intensity(v) - m.curve.i_min
                    });
                    (seg.color, seg.len_ms, target.max(0.0))
                })
                .collect();
            periodic_integrals(&local, m, setup.dt_ms)
        })
        .collect::<Result<_, _>>()?;

    let cell = setup.spec.unit_cell();
    let frac = [cell.frac_subpixel_a, cell.frac_subpixel_b];
    let bg = setup.mask.background(m);
    let leak = 1.0 - setup.mask.blocking_efficiency;
    let (cols, rows) = (map.cols(), map.rows());
    let n = map.pixel_count() as usize;
    // own emission per side in panel coordinates
    let own = |side: Side, k: usize| -> [f64; 3] {
        let (base, f) = match side {
            Side::A => (0, frac[0]),
            Side::B => (n, frac[1]),
        };
        let col = (k % cols as usize) as u32;
        let w = setup.led.flux_weight(col, cols);
        let x = per_electrode[base + k].0;
        std::array::from_fn(|c| {
            let gain = setup.luminance_scale * setup.led.coupling_efficiency * setup.led.flux[c] * f * w;
            gain * x[c] / period
        })
    };
    let floor = |side: Side, k: usize| -> [f64; 3] {
        let f = if side == Side::A { frac[0] } else { frac[1] };
        let col = (k % cols as usize) as u32;
        let w = setup.led.flux_weight(col, cols);
        std::array::from_fn(|c| {
            let gain = setup.luminance_scale * setup.led.coupling_efficiency * setup.led.flux[c] * f * w;
            gain * bg * lit_ms[c] / period
        })
    };

    let mut maps = Vec::with_capacity(2);
    let mut crosstalk = [0.0; 2];
    for (si, side) in [Side::A, Side::B].into_iter().enumerate() {
        let mut values = vec![[0.0; 3]; n];
        let (mut sum_own, mut sum_leak) = (0.0, 0.0);
        for row in 0..rows {
            for vc in 0..cols {
                let pc = if side == Side::A { vc } else { cols - 1 - vc };
                let k = (row * cols + pc) as usize;
                let o = own(side, k);
                let fl = floor(side, k);
                let mut v: [f64; 3] = std::array::from_fn(|c| o[c] + fl[c]);
                if leak > 0.0 {
                    let other = own(side.opposite(), k);
                    for c in 0..3 {
                        v[c] += leak * other[c];
                        sum_leak += leak * other[c];
                    }
                }
                sum_own += o.iter().sum::<f64>();
                values[(row * cols + vc) as usize] = v;
            }
        }
        crosstalk[si] = if sum_leak == 0.0 {
            0.0
        } else if sum_own == 0.0 {
            f64::INFINITY
        } else {
            sum_leak / sum_own
        };
        maps.push(LuminanceMap { cols, rows, values });
    }
    let back = maps.pop().expect("two maps");
    let front = maps.pop().expect("two maps");
    Ok(FrameLuminance {
        front,
        back,
        crosstalk,
        warmup_frames: per_electrode.iter().map(|p| p.1).max().unwrap_or(0),
    })
}

fn reference(setup: &SimulationSetup, timing: &TimingConfig, level: f64) -> Result<FrameLuminance, SimError> {
    let (cols, rows) = (setup.spec.pixel_cols, setup.spec.pixel_rows);
    let frames = FramePair::uniform(cols, rows, [level; 3], [level; 3]);
    let s = compile_schedule(&frames, &setup.spec, &setup.material, timing)?;
    simulate_luminance(&s, setup)
}

/// Simulates `s` and measures it against full-white and all-black frames
/// driven with the same timing.
pub fn simulate_frame(s: &DriveSchedule, setup: &SimulationSetup) -> Result<SimulationReport, SimError> {
    let frame = simulate_luminance(s, setup)?;
    let white = reference(setup, &s.timing, 1.0)?;
    let black = reference(setup, &s.timing, 0.0)?;
    let panel_cr =
        [Side::A, Side::B].map(|side| Contrast::of(white.map(side).mean_white(), black.map(side).mean_white()));
    let transparency = panel_transparency(&setup.spec, &setup.stack)?.transparency;
    Ok(SimulationReport {
        panel: s.panel.clone(),
        timing: s.timing,
        dt_ms: setup.dt_ms,
        luminance_scale: setup.luminance_scale,
        warmup_frames: frame.warmup_frames,
        metrics: ReportMetrics {
            brightness_white: 0.5 * (white.front.mean_white() + white.back.mean_white()),
            panel_cr,
            crosstalk: frame.crosstalk[0].max(frame.crosstalk[1]),
            transparency,
            white_peak: white.front.peak().max(white.back.peak()),
        },
        luminance_front: frame.front,
        luminance_back: frame.back,
    })
}

/// Scale constant that makes sustained full white on the default stage-2
/// panel read [`WHITE_TARGET_CD_M2`].
pub fn calibrate_luminance(m: &MaterialResponse, led: &LedConfig) -> Result<f64, SimError> {
    let setup = SimulationSetup {
        spec: PanelSpec::stage2(),
        material: m.clone(),
        led: *led,
        mask: MaskModel::default(),
        stack: OpticalStack::default(),
        dt_ms: DEFAULT_DT_MS.min(m.tau_on_ms.min(m.tau_off_ms) / 4.0),
        luminance_scale: 1.0,
    };
    let white = reference(&setup, &TimingConfig::default(), 1.0)?;
    let b1 = 0.5 * (white.front.mean_white() + white.back.mean_white());
    if !(b1.is_finite() && b1 > 0.0) {
        return Err(SimError::CalibrationUndefined);
    }
    Ok(WHITE_TARGET_CD_M2 / b1)
}

/// Ratio of mean full-white to mean all-black luminance, front then back.
pub fn panel_contrast(on: &SimulationReport, off: &SimulationReport) -> [Contrast; 2] {
    [Side::A, Side::B].map(|side| Contrast::of(on.map(side).mean_white(), off.map(side).mean_white()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObversionReport {
    pub trials: u32,
    /// Largest relative change of the back map while the front image varied.
    pub max_dev_back: f64,
    /// Largest relative change of the front map while the back image varied.
    pub max_dev_front: f64,
    pub bit_identical: bool,
    pub max_crosstalk: f64,
    pub passed: bool,
}

fn random_image(rng: &mut ChaCha8Rng, cols: u32, rows: u32) -> RgbImage {
    let px = (0..cols * rows)
        .map(|_| [rng.random(), rng.random(), rng.random()])
        .collect();
    RgbImage::from_pixels(cols, rows, px).expect("sized")
}

fn max_rel_dev(a: &LuminanceMap, b: &LuminanceMap) -> (f64, bool) {
    let mut dev = 0.0f64;
    let mut same = true;
    for (p, q) in a.values.iter().flatten().zip(b.values.iter().flatten()) {
        same &= p.to_bits() == q.to_bits();
        let d = (p - q).abs();
        if d > 0.0 {
            dev = dev.max(d / p.abs().max(q.abs()));
        }
    }
    (dev, same)
}

/// Varies one side's image over `trials` random draws and checks that the
/// other side's luminance never moves.
pub fn obversion_check(
    setup: &SimulationSetup,
    timing: &TimingConfig,
    trials: u32,
    seed: u64,
) -> Result<ObversionReport, SimError> {
    let (cols, rows) = (setup.spec.pixel_cols, setup.spec.pixel_rows);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fixed_front = random_image(&mut rng, cols, rows);
    let fixed_back = random_image(&mut rng, cols, rows);
    let mut report = ObversionReport {
        trials,
        max_dev_back: 0.0,
        max_dev_front: 0.0,
        bit_identical: true,
        max_crosstalk: 0.0,
        passed: true,
    };
    for side in [Side::A, Side::B] {
        let mut first: Option<LuminanceMap> = None;
        for _ in 0..trials {
            let varied = random_image(&mut rng, cols, rows);
            let frames = match side {
                Side::A => FramePair {
                    front: varied,
                    back: fixed_back.clone(),
                },
                Side::B => FramePair {
                    front: fixed_front.clone(),
                    back: varied,
                },
            };
            let s = compile_schedule(&frames, &setup.spec, &setup.material, timing)?;
            let lum = simulate_luminance(&s, setup)?;
            report.max_crosstalk = report.max_crosstalk.max(lum.crosstalk[0]).max(lum.crosstalk[1]);
            let watched = lum.map(side.opposite()).clone();
            match &first {
                None => first = Some(watched),
                Some(f) => {
                    let (dev, same) = max_rel_dev(f, &watched);
                    report.bit_identical &= same;
                    match side {
                        Side::A => report.max_dev_back = report.max_dev_back.max(dev),
                        Side::B => report.max_dev_front = report.max_dev_front.max(dev),
                    }
                }
            }
        }
    }
    report.passed = report.max_dev_back <= OBVERSION_TOL && report.max_dev_front <= OBVERSION_TOL;
    Ok(report)
}
