//! Field-sequential drive schedules.
//!
//! A frame is split into six equal sub-frames in the order R_A, R_B, G_A,
//! G_B, B_A, B_B. During a sub-frame only the electrodes of its side are
//! driven, with a 1 kHz (by default) square wave whose RMS amplitude encodes
//! the grey level of that colour channel. The square wave runs for a whole
//! number of cycles and the remainder of the sub-frame is a 0 V tail, so
//! every electrode sees zero mean voltage.

mod format;

pub use format::{parse_schedule, serialize_schedule, ScheduleParseError, SCHEDULE_FORMAT_VERSION};

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::electro_optics::{grayscale_voltage, MaterialError, MaterialResponse};
use crate::geometry::{electrode_map, ElectrodeId, ElectrodeMap, GeometryError, PanelSpec, Side};
use crate::image::RgbImage;

/// Slack used when counting whole drive cycles in a sub-frame, so that
/// `3.0000000000000004` cycles still counts as 3.
const CYCLE_EPS: f64 = 1e-9;
/// Allowed mismatch between the summed sub-frame durations and the frame
/// period (1e-9 s).
const FRAME_SUM_TOL_MS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Color {
    R,
    G,
    B,
}

impl Color {
    pub const ALL: [Color; 3] = [Color::R, Color::G, Color::B];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Color::R => "R",
            Color::G => "G",
            Color::B => "B",
        }
    }

    pub fn parse(s: &str) -> Option<Color> {
        match s {
            "R" => Some(Color::R),
            "G" => Some(Color::G),
            "B" => Some(Color::B),
            _ => None,
        }
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("invalid timing: {0}")]
    Timing(String),
    #[error("{which} image is {got_cols}x{got_rows} but the panel has {cols}x{rows} pixels")]
    Dimensions {
        which: &'static str,
        got_cols: u32,
        got_rows: u32,
        cols: u32,
        rows: u32,
    },
    #[error("sub-frame of {subframe_ms} ms holds no full cycle of the {drive_frequency_hz} Hz drive")]
    Quantization { subframe_ms: f64, drive_frequency_hz: f64 },
    #[error("only 6 sub-frames per frame (3 colours x 2 sides) are supported, got {0}")]
    UnsupportedSubframes(u32),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Material(#[from] MaterialError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingConfig {
    pub frame_rate_hz: f64,
    pub subframes_per_frame: u32,
    /// Square-wave fundamental.
    pub drive_frequency_hz: f64,
    /// Multiplier `k` on `tau_on + tau_off` in the feasibility bound.
    pub settle_margin: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            frame_rate_hz: 60.0,
            subframes_per_frame: 6,
            drive_frequency_hz: 1000.0,
            settle_margin: 1.0,
        }
    }
}

impl TimingConfig {
    pub fn validate(&self) -> Result<(), ScheduleError> {
        let bad = |m: String| Err(ScheduleError::Timing(m));
        if !(self.frame_rate_hz.is_finite() && self.frame_rate_hz > 0.0) {
            return bad(format!("frame_rate_hz must be > 0 (got {})", self.frame_rate_hz));
        }
        if self.subframes_per_frame == 0 {
            return bad("subframes_per_frame must be at least 1".into());
        }
        let min_drive = 2.0 * self.frame_rate_hz * f64::from(self.subframes_per_frame);
        if !(self.drive_frequency_hz.is_finite() && self.drive_frequency_hz >= min_drive) {
            return bad(format!(
                "drive_frequency_hz must be >= 2 * frame_rate * subframes = {min_drive} (got {})",
                self.drive_frequency_hz
            ));
        }
        if !(self.settle_margin.is_finite() && self.settle_margin >= 0.0) {
            return bad(format!("settle_margin must be >= 0 (got {})", self.settle_margin));
        }
        Ok(())
    }

    pub fn frame_period_ms(&self) -> f64 {
        1000.0 / self.frame_rate_hz
    }

    pub fn subframe_ms(&self) -> f64 {
        1000.0 / (self.frame_rate_hz * f64::from(self.subframes_per_frame))
    }

    /// Drive half-cycles that fit in one sub-frame; always even.
    pub fn half_cycles_per_subframe(&self) -> u32 {
        let cycles = (self.subframe_ms() * self.drive_frequency_hz / 1000.0 + CYCLE_EPS).floor();
        2 * cycles as u32
    }

    pub fn quantization(&self) -> Quantization {
        let half_cycles = self.half_cycles_per_subframe();
        let subframe_ms = self.subframe_ms();
        let active_ms = active_ms(half_cycles, self.drive_frequency_hz);
        Quantization {
            subframe_ms,
            full_cycles: half_cycles / 2,
            active_ms,
            idle_ms: (subframe_ms - active_ms).max(0.0),
        }
    }
}

fn active_ms(half_cycles: u32, drive_frequency_hz: f64) -> f64 {
    f64::from(half_cycles) * 500.0 / drive_frequency_hz
}

/// How a sub-frame splits into driven cycles and an idle tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantization {
    pub subframe_ms: f64,
    pub full_cycles: u32,
    pub active_ms: f64,
    pub idle_ms: f64,
}

/// Front and back content for one frame.
///
/// The back image is given as the back viewer sees it, so its column `c`
/// lands on panel column `cols - 1 - c`.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePair {
    pub front: RgbImage,
    pub back: RgbImage,
}

impl FramePair {
    pub fn uniform(cols: u32, rows: u32, front: [f64; 3], back: [f64; 3]) -> Self {
        FramePair {
            front: RgbImage::filled(cols, rows, front),
            back: RgbImage::filled(cols, rows, back),
        }
    }

    pub fn swapped(&self) -> Self {
        FramePair {
            front: self.back.clone(),
            back: self.front.clone(),
        }
    }

    fn check(&self, cols: u32, rows: u32) -> Result<(), ScheduleError> {
        for (which, img) in [("front", &self.front), ("back", &self.back)] {
            if img.width() != cols || img.height() != rows {
                return Err(ScheduleError::Dimensions {
                    which,
                    got_cols: img.width(),
                    got_rows: img.height(),
                    cols,
                    rows,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubFrame {
    pub color: Color,
    pub side: Side,
    pub duration_ms: f64,
    /// Driven half-cycles of the square wave; even when DC balanced.
    pub half_cycles: u32,
    /// RMS amplitude per electrode, volts.
    pub amplitudes: BTreeMap<ElectrodeId, f64>,
}

impl SubFrame {
    pub fn polarity_cycles(&self) -> f64 {
        f64::from(self.half_cycles) / 2.0
    }

    pub fn active_ms(&self, drive_frequency_hz: f64) -> f64 {
        active_ms(self.half_cycles, drive_frequency_hz)
    }
}

/// Which panel a schedule was compiled for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PanelRef {
    pub name: String,
    pub cols: u32,
    pub rows: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriveSchedule {
    pub format_version: u32,
    pub panel: PanelRef,
    pub timing: TimingConfig,
    pub subframes: Vec<SubFrame>,
}

impl DriveSchedule {
    pub fn electrode_map(&self) -> ElectrodeMap {
        ElectrodeMap::for_grid(self.panel.cols, self.panel.rows)
    }
}

/// Sub-frame order within a frame.
pub const SUBFRAME_ORDER: [(Color, Side); 6] = [
    (Color::R, Side::A),
    (Color::R, Side::B),
    (Color::G, Side::A),
    (Color::G, Side::B),
    (Color::B, Side::A),
    (Color::B, Side::B),
];

/// Builds the drive schedule for one frame.
pub fn compile_schedule(
    frames: &FramePair,
    spec: &PanelSpec,
    m: &MaterialResponse,
    timing: &TimingConfig,
) -> Result<DriveSchedule, ScheduleError> {
    timing.validate()?;
    m.validate()?;
    let map = electrode_map(spec)?;
    if timing.subframes_per_frame != 6 {
        return Err(ScheduleError::UnsupportedSubframes(timing.subframes_per_frame));
    }
    frames.check(map.cols(), map.rows())?;
    let half_cycles = timing.half_cycles_per_subframe();
    if half_cycles == 0 {
        return Err(ScheduleError::Quantization {
            subframe_ms: timing.subframe_ms(),
            drive_frequency_hz: timing.drive_frequency_hz,
        });
    }
    let cols = map.cols();
    let n = map.pixel_count();
    let subframes = SUBFRAME_ORDER
        .iter()
        .map(|&(color, side)| {
            let amps: Vec<(ElectrodeId, f64)> = (0..n)
                .into_par_iter()
                .map(|k| {
                    let (row, col) = (k / cols, k % cols);
                    let (img, panel_col) = match side {
                        Side::A => (&frames.front, col),
                        Side::B => (&frames.back, cols - 1 - col),
                    };
                    let level = img.get(row, col)[color.index()];
                    (map.electrode(side, row, panel_col), grayscale_voltage(m, level))
                })
                .collect();
            SubFrame {
                color,
                side,
                duration_ms: timing.subframe_ms(),
                half_cycles,
                amplitudes: amps.into_iter().collect(),
            }
        })
        .collect();
    Ok(DriveSchedule {
        format_version: SCHEDULE_FORMAT_VERSION,
        panel: PanelRef {
            name: spec.stage.as_str().to_string(),
            cols,
            rows: map.rows(),
        },
        timing: *timing,
        subframes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityReport {
    pub subframe_ms: f64,
    /// `k (tau_on + tau_off)`.
    pub bound_ms: f64,
    /// `subframe_ms / bound_ms`; infinite when the bound is 0.
    pub margin_ratio: f64,
    pub feasible: bool,
}

/// Whether each sub-frame is long enough for a full switch on and off.
pub fn check_feasibility(timing: &TimingConfig, m: &MaterialResponse) -> FeasibilityReport {
    let subframe_ms = timing.subframe_ms();
    let bound_ms = timing.settle_margin * (m.tau_on_ms + m.tau_off_ms);
    FeasibilityReport {
        subframe_ms,
        bound_ms,
        margin_ratio: if bound_ms > 0.0 {
            subframe_ms / bound_ms
        } else {
            f64::INFINITY
        },
        feasible: subframe_ms >= bound_ms,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    UnsupportedVersion(u32),
    Timing(String),
    EmptyPanel,
    SubframeCount {
        expected: u32,
        found: usize,
    },
    Duration {
        index: usize,
        duration_ms: f64,
    },
    NoActiveCycles {
        index: usize,
    },
    DcImbalance {
        index: usize,
        half_cycles: u32,
    },
    ActiveOverrun {
        index: usize,
        active_ms: f64,
        duration_ms: f64,
    },
    UnknownElectrode {
        index: usize,
        electrode: ElectrodeId,
    },
    SideMixing {
        index: usize,
        declared: Side,
        electrode: ElectrodeId,
    },
    Amplitude {
        index: usize,
        electrode: ElectrodeId,
        volts: f64,
    },
    FrameDuration {
        total_ms: f64,
        expected_ms: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            UnsupportedVersion(v) => write!(f, "format version {v} is not supported"),
            Timing(m) => write!(f, "timing: {m}"),
            EmptyPanel => write!(f, "panel reference has no pixels"),
            SubframeCount { expected, found } => {
                write!(f, "timing declares {expected} sub-frames but the schedule has {found}")
            }
            Duration { index, duration_ms } => {
                write!(f, "sub-frame {index}: duration {duration_ms} ms is not positive")
            }
            NoActiveCycles { index } => write!(f, "sub-frame {index}: no drive cycles"),
            DcImbalance { index, half_cycles } => write!(
                f,
                "sub-frame {index}: DC imbalance, {half_cycles} half-cycles is not a whole number of cycles"
            ),
            ActiveOverrun {
                index,
                active_ms,
                duration_ms,
            } => write!(
                f,
                "sub-frame {index}: driven time {active_ms} ms exceeds duration {duration_ms} ms"
            ),
            UnknownElectrode { index, electrode } => {
                write!(f, "sub-frame {index}: electrode {electrode} is not on this panel")
            }
            SideMixing {
                index,
                declared,
                electrode,
            } => write!(
                f,
                "sub-frame {index}: side mixing, electrode {electrode} does not belong to side {declared}"
            ),
            Amplitude {
                index,
                electrode,
                volts,
            } => write!(
                f,
                "sub-frame {index}: electrode {electrode} amplitude {volts} V is not a finite value >= 0"
            ),
            FrameDuration { total_ms, expected_ms } => write!(
                f,
                "sub-frame durations sum to {total_ms} ms, frame period is {expected_ms} ms"
            ),
        }
    }
}

/// Checks every structural and DC-balance rule; returns all violations.
pub fn validate_schedule(s: &DriveSchedule) -> Vec<Violation> {
    let mut out = Vec::new();
    if s.format_version != SCHEDULE_FORMAT_VERSION {
        out.push(Violation::UnsupportedVersion(s.format_version));
    }
    let timing_ok = match s.timing.validate() {
        Ok(()) => true,
        Err(e) => {
            out.push(Violation::Timing(e.to_string()));
            false
        }
    };
    if s.panel.cols == 0 || s.panel.rows == 0 {
        out.push(Violation::EmptyPanel);
    }
    if s.subframes.len() != s.timing.subframes_per_frame as usize {
        out.push(Violation::SubframeCount {
            expected: s.timing.subframes_per_frame,
            found: s.subframes.len(),
        });
    }
    let map = s.electrode_map();
    let mut total = 0.0;
    for (index, sf) in s.subframes.iter().enumerate() {
        total += sf.duration_ms;
        if !(sf.duration_ms.is_finite() && sf.duration_ms > 0.0) {
            out.push(Violation::Duration {
                index,
                duration_ms: sf.duration_ms,
            });
        }
        if sf.half_cycles == 0 {
            out.push(Violation::NoActiveCycles { index });
        } else if sf.half_cycles % 2 != 0 {
            out.push(Violation::DcImbalance {
                index,
                half_cycles: sf.half_cycles,
            });
        }
        if timing_ok {
            let active = sf.active_ms(s.timing.drive_frequency_hz);
            if active > sf.duration_ms + FRAME_SUM_TOL_MS {
                out.push(Violation::ActiveOverrun {
                    index,
                    active_ms: active,
                    duration_ms: sf.duration_ms,
                });
            }
        }
        for (&electrode, &volts) in &sf.amplitudes {
            match map.side_of(electrode) {
                None => out.push(Violation::UnknownElectrode { index, electrode }),
                Some(side) if side != sf.side => out.push(Violation::SideMixing {
                    index,
                    declared: sf.side,
                    electrode,
                }),
                Some(_) => {}
            }
            if !(volts.is_finite() && volts >= 0.0) {
                out.push(Violation::Amplitude {
                    index,
                    electrode,
                    volts,
                });
            }
        }
    }
    if timing_ok {
        let expected = s.timing.frame_period_ms();
        if (total - expected).abs() > FRAME_SUM_TOL_MS {
            out.push(Violation::FrameDuration {
                total_ms: total,
                expected_ms: expected,
            });
        }
    }
    out
}
