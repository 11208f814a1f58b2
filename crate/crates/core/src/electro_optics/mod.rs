//! Voltage to scattering response of the polymer-stabilised LC layer.
//!
//! The steady-state curve is a logistic in voltage, shifted and rescaled so
//! that it starts exactly at `i_min` at 0 V and approaches `i_max`
//! asymptotically. Switching between levels is first order with separate
//! rise and decay time constants.

mod fit;
mod metrics;

pub use fit::{fit_response, FitError, FitReport, MAX_FIT_ITERATIONS};
pub use metrics::{
    curve_metrics, read_curve_csv, write_curve_csv, CurveError, CurveMetrics, CurveSamples, CURVE_CSV_HEADER,
};

use thiserror::Error;

/// Drive amplitude at which a full-scale level is clamped, in widths above
/// the midpoint.
pub const CLAMP_WIDTHS: f64 = 20.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaterialError {
    #[error("material `{name}`: i_max ({i_max}) must exceed i_min ({i_min}) and i_min must be >= 0")]
    Intensities { name: String, i_min: f64, i_max: f64 },
    #[error("material `{name}`: v_width must be > 0 (got {v_width})")]
    Width { name: String, v_width: f64 },
    #[error("material `{name}`: v_mid must be finite")]
    Midpoint { name: String },
    #[error("material `{name}`: switching times must be > 0 (tau_on {tau_on} ms, tau_off {tau_off} ms)")]
    Tau { name: String, tau_on: f64, tau_off: f64 },
}

/// Four-parameter steady-state curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseCurve {
    /// Scattered intensity at 0 V, a.u.
    pub i_min: f64,
    /// Asymptotic intensity, a.u.
    pub i_max: f64,
    /// Logistic midpoint, volts.
    pub v_mid: f64,
    /// Logistic width, volts.
    pub v_width: f64,
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl ResponseCurve {
    fn floor_sigmoid(&self) -> f64 {
        logistic(-self.v_mid / self.v_width)
    }

    /// Normalised response in [0, 1): 0 at 0 V, rising towards 1.
    pub fn normalized(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        let s0 = self.floor_sigmoid();
        let s = logistic((v - self.v_mid) / self.v_width);
        ((s - s0) / (1.0 - s0)).max(0.0)
    }

    pub fn intensity(&self, v: f64) -> f64 {
        self.i_min + (self.i_max - self.i_min) * self.normalized(v)
    }

    /// Voltage used for a full-scale level.
    pub fn clamp_voltage(&self) -> f64 {
        (self.v_mid + CLAMP_WIDTHS * self.v_width).max(0.0)
    }

    /// Inverse of [`ResponseCurve::normalized`], clamped to
    /// `[0, clamp_voltage]`.
    pub fn voltage_for_level(&self, level: f64) -> f64 {
        let level = level.clamp(0.0, 1.0);
        if level == 0.0 {
            return 0.0;
        }
        let clamp = self.clamp_voltage();
        if level == 1.0 {
            return clamp;
        }
        let s0 = self.floor_sigmoid();
        let s = s0 + level * (1.0 - s0);
        if s >= 1.0 {
            return clamp;
        }
        let v = self.v_mid + self.v_width * (s / (1.0 - s)).ln();
        v.max(0.0).min(clamp)
    }

    /// Curve with the given floor, ceiling and width whose 90% crossing
    /// falls at `v_sat`. `None` if no midpoint achieves it.
    pub fn with_saturation(i_min: f64, i_max: f64, v_sat: f64, v_width: f64) -> Option<ResponseCurve> {
        let curve = |v_mid| ResponseCurve {
            i_min,
            i_max,
            v_mid,
            v_width,
        };
        // the 90% crossing sits at least w ln 9 above the midpoint
        let mut hi = v_sat - v_width * 9f64.ln();
        let mut lo = hi - 60.0 * v_width;
        if curve(lo).saturation_voltage() > v_sat || !(v_width > 0.0) {
            return None;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if curve(mid).saturation_voltage() < v_sat {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let c = curve(0.5 * (lo + hi));
        let hit = (c.saturation_voltage() - v_sat).abs() <= 1e-9 * v_sat.abs().max(1.0);
        (hit && c.clamp_voltage() > v_sat).then_some(c)
    }

    /// 90% crossing of the model curve.
    pub fn saturation_voltage(&self) -> f64 {
        self.voltage_for_level(0.9)
    }

    pub fn contrast_ratio(&self) -> f64 {
        self.i_max / self.i_min
    }
}

/// Electro-optic response of one LC mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialResponse {
    pub name: String,
    pub curve: ResponseCurve,
    /// Rise time constant, milliseconds.
    pub tau_on_ms: f64,
    /// Decay time constant, milliseconds.
    pub tau_off_ms: f64,
}

impl MaterialResponse {
    /// 6% HCM-009, UV-cured at 8 mW/cm².
    ///
    /// CR = 5.28 / 0.22 = 24; the midpoint is solved so the 90% crossing of
    /// the curve sits at 10.5 V.
    pub fn hcm009() -> Self {
        MaterialResponse {
            name: "HCM-009".into(),
            curve: ResponseCurve {
                i_min: 0.22,
                i_max: 5.28,
                v_mid: 8.302_500_020_250_52,
                v_width: 1.0,
            },
            tau_on_ms: 1.0,
            tau_off_ms: 2.0,
        }
    }

    /// RM-257: I_max 4.1, I_min 0.26, 90% crossing at 12 V.
    pub fn rm257() -> Self {
        MaterialResponse {
            name: "RM-257".into(),
            curve: ResponseCurve {
                i_min: 0.26,
                i_max: 4.1,
                v_mid: 9.362_785_584_332_726,
                v_width: 1.2,
            },
            tau_on_ms: 1.0,
            tau_off_ms: 2.0,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "HCM-009" => Some(Self::hcm009()),
            "RM-257" => Some(Self::rm257()),
            _ => None,
        }
    }

    pub const PRESETS: &'static [&'static str] = &["HCM-009", "RM-257"];

    pub fn validate(&self) -> Result<(), MaterialError> {
        let c = &self.curve;
        if !(c.i_min >= 0.0 && c.i_max > c.i_min && c.i_max.is_finite()) {
            return Err(MaterialError::Intensities {
                name: self.name.clone(),
                i_min: c.i_min,
                i_max: c.i_max,
            });
        }
        if !(c.v_width > 0.0 && c.v_width.is_finite()) {
            return Err(MaterialError::Width {
                name: self.name.clone(),
                v_width: c.v_width,
            });
        }
        if !c.v_mid.is_finite() {
            return Err(MaterialError::Midpoint {
                name: self.name.clone(),
            });
        }
        if !(self.tau_on_ms > 0.0 && self.tau_off_ms > 0.0)
            || !(self.tau_on_ms.is_finite() && self.tau_off_ms.is_finite())
        {
            return Err(MaterialError::Tau {
                name: self.name.clone(),
                tau_on: self.tau_on_ms,
                tau_off: self.tau_off_ms,
            });
        }
        Ok(())
    }

    /// Time constant used when moving from `start` towards `target`.
    pub fn tau_for(&self, start: f64, target: f64) -> f64 {
        if target > start {
            self.tau_on_ms
        } else {
            self.tau_off_ms
        }
    }
}

/// Steady-state scattered intensity at drive amplitude `v` (volts, RMS).
pub fn steady_intensity(m: &MaterialResponse, v: f64) -> f64 {
    m.curve.intensity(v)
}

/// First-order relaxation from `start` towards `target` after `t_ms`.
pub fn step_response(m: &MaterialResponse, t_ms: f64, start: f64, target: f64) -> f64 {
    let tau = m.tau_for(start, target);
    let y = start + (target - start) * -(-t_ms / tau).exp_m1();
    // rounding can step past the target by one ulp
    y.clamp(start.min(target), start.max(target))
}

/// Drive amplitude that produces the fraction `level` of the intensity
/// swing. Level 0 maps to 0 V and level 1 to the clamp voltage.
pub fn grayscale_voltage(m: &MaterialResponse, level: f64) -> f64 {
    m.curve.voltage_for_level(level)
}
