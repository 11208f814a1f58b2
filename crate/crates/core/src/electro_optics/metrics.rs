use std::io::{Read, Write};

use thiserror::Error;

pub const CURVE_CSV_HEADER: [&str; 2] = ["voltage_v", "intensity_au"];

#[derive(Debug, Error)]
pub enum CurveError {
    #[error("a curve needs at least 2 samples (got {0})")]
    TooFewSamples(usize),
    #[error("voltages must be strictly increasing (sample {index}: {prev} V then {next} V)")]
    NotIncreasing { index: usize, prev: f64, next: f64 },
    #[error("sample {index} has invalid intensity {value} (must be finite and >= 0)")]
    BadIntensity { index: usize, value: f64 },
    #[error("sample {index} has non-finite voltage")]
    BadVoltage { index: usize },
    #[error("contrast ratio undefined: minimum intensity is 0")]
    CrUndefined,
    #[error("saturation voltage undefined: curve is flat")]
    SaturationUndefined,
    #[error("csv: expected header `voltage_v,intensity_au`, found `{0}`")]
    Header(String),
    #[error("csv line {line}: {msg}")]
    Row { line: u64, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Voltage–intensity samples with strictly increasing voltage.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSamples {
    points: Vec<(f64, f64)>,
}

impl CurveSamples {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, CurveError> {
        if points.len() < 2 {
            return Err(CurveError::TooFewSamples(points.len()));
        }
        for (index, &(v, i)) in points.iter().enumerate() {
            if !v.is_finite() {
                return Err(CurveError::BadVoltage { index });
            }
            if !(i.is_finite() && i >= 0.0) {
                return Err(CurveError::BadIntensity { index, value: i });
            }
        }
        if let Some(index) = points.windows(2).position(|w| w[1].0 <= w[0].0) {
            return Err(CurveError::NotIncreasing {
                index: index + 1,
                prev: points[index].0,
                next: points[index + 1].0,
            });
        }
        Ok(CurveSamples { points })
    }

    /// Samples `f` at `n` evenly spaced voltages on `[v0, v1]`.
    pub fn sample(v0: f64, v1: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self, CurveError> {
        let step = (v1 - v0) / (n.max(2) - 1) as f64;
        let pts = (0..n).map(|k| {
            let v = v0 + k as f64 * step;
            (v, f(v))
        });
        Self::new(pts.collect())
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn voltages(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.0)
    }

    pub fn intensities(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.1)
    }

    pub fn scaled(&self, k: f64) -> Result<Self, CurveError> {
        Self::new(self.points.iter().map(|&(v, i)| (v, i * k)).collect())
    }

    pub fn shifted(&self, dv: f64) -> Result<Self, CurveError> {
        Self::new(self.points.iter().map(|&(v, i)| (v + dv, i)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveMetrics {
    pub i_min: f64,
    pub i_max: f64,
    pub cr: f64,
    pub v_sat: f64,
}

/// Contrast ratio and saturation voltage of a sampled curve.
///
/// `v_sat` is the first voltage at which the intensity reaches
/// `i_min + 0.9 (i_max - i_min)`, interpolated linearly between the
/// bracketing samples.
pub fn curve_metrics(samples: &CurveSamples) -> Result<CurveMetrics, CurveError> {
    let pts = samples.points();
    let i_min = samples.intensities().fold(f64::INFINITY, f64::min);
    let i_max = samples.intensities().fold(f64::NEG_INFINITY, f64::max);
    if i_min == 0.0 {
        return Err(CurveError::CrUndefined);
    }
    if i_max == i_min {
        return Err(CurveError::SaturationUndefined);
    }
    let threshold = i_min + 0.9 * (i_max - i_min);
    // i_max is a sample, so some sample always reaches the threshold
    let k = pts
        .iter()
        .position(|&(_, i)| i >= threshold)
        .ok_or(CurveError::SaturationUndefined)?;
    let v_sat = if k == 0 {
        pts[0].0
    } else {
        let (v0, i0) = pts[k - 1];
        let (v1, i1) = pts[k];
        v0 + (threshold - i0) / (i1 - i0) * (v1 - v0)
    };
    Ok(CurveMetrics {
        i_min,
        i_max,
        cr: i_max / i_min,
        v_sat,
    })
}

pub fn read_curve_csv(reader: impl Read) -> Result<CurveSamples, CurveError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() != 2 || header.get(0) != Some(CURVE_CSV_HEADER[0]) || header.get(1) != Some(CURVE_CSV_HEADER[1]) {
        return Err(CurveError::Header(header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut points = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize, what: &str| -> Result<f64, CurveError> {
            let raw = rec.get(i).unwrap_or("");
            raw.parse::<f64>().map_err(|_| CurveError::Row {
                line,
                msg: format!("bad {what} `{raw}`"),
            })
        };
        points.push((field(0, "voltage")?, field(1, "intensity")?));
    }
    CurveSamples::new(points)
}

pub fn write_curve_csv(samples: &CurveSamples, writer: impl Write) -> Result<(), CurveError> {
    let mut w = csv::WriterBuilder::new().from_writer(writer);
    w.write_record(CURVE_CSV_HEADER)?;
    for &(v, i) in samples.points() {
        w.write_record([v.to_string(), i.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> CurveSamples {
        CurveSamples::sample(0.0, 10.0, 11, |v| 0.5 + 0.45 * v).unwrap()
    }

    #[test]
    fn linear_ramp_closed_form() {
        let m = curve_metrics(&ramp()).unwrap();
        assert_eq!(m.i_min, 0.5);
        assert!((m.i_max - 5.0).abs() < 1e-12);
        assert!((m.cr - 10.0).abs() < 1e-12);
        assert!((m.v_sat - 9.0).abs() < 1e-12);
    }

    #[test]
    fn error_cases() {
        let zero = CurveSamples::new(vec![(0.0, 0.0), (1.0, 2.0)]).unwrap();
        assert!(matches!(curve_metrics(&zero), Err(CurveError::CrUndefined)));
        let flat = CurveSamples::new(vec![(0.0, 1.0), (1.0, 1.0), (2.0, 1.0)]).unwrap();
        assert!(matches!(curve_metrics(&flat), Err(CurveError::SaturationUndefined)));
        assert!(matches!(
            CurveSamples::new(vec![(0.0, 1.0)]),
            Err(CurveError::TooFewSamples(1))
        ));
        assert!(matches!(
            CurveSamples::new(vec![(0.0, 1.0), (0.0, 2.0)]),
            Err(CurveError::NotIncreasing { index: 1, .. })
        ));
        assert!(matches!(
            CurveSamples::new(vec![(0.0, -1.0), (1.0, 2.0)]),
            Err(CurveError::BadIntensity { index: 0, .. })
        ));
    }

    #[test]
    fn csv_round_trip_and_header() {
        let s = ramp();
        let mut buf = Vec::new();
        write_curve_csv(&s, &mut buf).unwrap();
        assert!(buf.starts_with(b"voltage_v,intensity_au\n"));
        let back = read_curve_csv(buf.as_slice()).unwrap();
        assert_eq!(back, s);

        let bad = "volts,intensity\n0,1\n1,2\n";
        assert!(matches!(read_curve_csv(bad.as_bytes()), Err(CurveError::Header(_))));
        let bad = "voltage_v,intensity_au\n0,1\n1,abc\n";
        match read_curve_csv(bad.as_bytes()) {
            Err(CurveError::Row { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn curve() -> impl Strategy<Value = CurveSamples> {
            (0.05f64..1.0, 1.0f64..8.0, 2.0f64..15.0, 0.3f64..2.0).prop_map(|(lo, span, mid, w)| {
                CurveSamples::sample(0.0, 20.0, 81, |v| lo + span / (1.0 + (-(v - mid) / w).exp())).unwrap()
            })
        }

        proptest! {
            #[test]
            fn scale_covariant(c in curve(), k in 0.01f64..100.0) {
                let a = curve_metrics(&c).unwrap();
                let b = curve_metrics(&c.scaled(k).unwrap()).unwrap();
                prop_assert!((b.i_min - k * a.i_min).abs() <= 1e-12 * b.i_min);
                prop_assert!((b.i_max - k * a.i_max).abs() <= 1e-12 * b.i_max);
                prop_assert!((b.cr - a.cr).abs() <= 1e-12 * a.cr);
                prop_assert!((b.v_sat - a.v_sat).abs() <= 1e-9);
            }

            #[test]
            fn shift_covariant(c in curve(), dv in -10.0f64..10.0) {
                let a = curve_metrics(&c).unwrap();
                let b = curve_metrics(&c.shifted(dv).unwrap()).unwrap();
                prop_assert!((b.v_sat - (a.v_sat + dv)).abs() <= 1e-9);
                prop_assert_eq!(a.cr, b.cr);
            }
        }
    }
}
