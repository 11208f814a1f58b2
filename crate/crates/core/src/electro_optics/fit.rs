//! Levenberg–Marquardt fit of the four-parameter response curve.
//!
//! The width is optimised as `ln(v_width)` so it stays positive.

use nalgebra::{Matrix4, Vector4};
use thiserror::Error;

use super::{CurveSamples, ResponseCurve};

pub const MAX_FIT_ITERATIONS: usize = 500;

const LAMBDA_START: f64 = 1e-3;
const LAMBDA_MAX: f64 = 1e12;
/// Lower bound on the fitted width, as a fraction of the voltage span.
const WIDTH_FLOOR_FRACTION: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("fit is underdetermined: {0} samples for 4 parameters")]
    Underdetermined(usize),
    #[error("fit did not converge after {iterations} iterations ({reason}); best residual {}", .best.residual)]
    NoConvergence {
        iterations: usize,
        reason: &'static str,
        best: Box<FitReport>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub curve: ResponseCurve,
    /// Final sum of squared intensity residuals.
    pub residual: f64,
    pub iterations: usize,
    /// Cost after the initial guess and after every accepted step.
    pub residual_history: Vec<f64>,
}

struct Model<'a> {
    v: &'a [f64],
    y: &'a [f64],
}

type Params = Vector4<f64>;

fn sigma(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn to_curve(p: &Params) -> ResponseCurve {
    ResponseCurve {
        i_min: p[0],
        i_max: p[1],
        v_mid: p[2],
        v_width: p[3].exp(),
    }
}

impl Model<'_> {
    /// Residual vector and Jacobian rows for parameters `p`.
    fn evaluate(&self, p: &Params, jac: Option<&mut Vec<Vector4<f64>>>) -> (Vec<f64>, f64) {
        let (lo, hi, mid, w) = (p[0], p[1], p[2], p[3].exp());
        let x0 = -mid / w;
        let s0 = sigma(x0);
        let d0 = s0 * (1.0 - s0);
        let denom = 1.0 - s0;
        let mut residuals = Vec::with_capacity(self.v.len());
        let mut rows = jac;
        if let Some(r) = rows.as_deref_mut() {
            r.clear();
        }
        let mut cost = 0.0;
        for (&v, &y) in self.v.iter().zip(self.y) {
            let (n, dn_dmid, dn_du) = if v <= 0.0 {
                (0.0, 0.0, 0.0)
            } else {
                let x = (v - mid) / w;
                let s = sigma(x);
                let d = s * (1.0 - s);
                let n = (s - s0) / denom;
                let ds_dmid = -d / w;
                let ds0_dmid = -d0 / w;
                let ds_du = -d * x;
                let ds0_du = -d0 * x0;
                let dn = |ds: f64, ds0: f64| (ds * (1.0 - s0) - ds0 * (1.0 - s)) / (denom * denom);
                (n, dn(ds_dmid, ds0_dmid), dn(ds_du, ds0_du))
            };
            let f = lo + (hi - lo) * n;
            let r = f - y;
            cost += r * r;
            residuals.push(r);
            if let Some(rows) = rows.as_deref_mut() {
                rows.push(Vector4::new(1.0 - n, n, (hi - lo) * dn_dmid, (hi - lo) * dn_du));
            }
        }
        (residuals, cost)
    }
}

fn initial_guess(v: &[f64], y: &[f64]) -> Option<Params> {
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 1e-12 * hi.abs().max(1.0)) {
        return None;
    }
    let crossing = |frac: f64| -> f64 {
        let t = lo + frac * span;
        match y.iter().position(|&yi| yi >= t) {
            Some(0) | None => v[0],
            Some(k) => v[k - 1] + (t - y[k - 1]) / (y[k] - y[k - 1]) * (v[k] - v[k - 1]),
        }
    };
    let mid = crossing(0.5);
    let vspan = v[v.len() - 1] - v[0];
    // 10–90% rise of a logistic spans 2 ln 9 widths
    let width = ((crossing(0.9) - crossing(0.1)) / (2.0 * 9f64.ln())).max(1e-3 * vspan);
    Some(Vector4::new(lo, hi, mid, width.ln()))
}

/// Least-squares estimate of `(i_min, i_max, v_mid, v_width)`.
///
/// Accepted steps never increase the summed squared residual.
pub fn fit_response(samples: &CurveSamples) -> Result<FitReport, FitError> {
    if samples.len() < 4 {
        return Err(FitError::Underdetermined(samples.len()));
    }
    let v: Vec<f64> = samples.voltages().collect();
    let y: Vec<f64> = samples.intensities().collect();
    let model = Model { v: &v, y: &y };
    let vspan = v[v.len() - 1] - v[0];
    let width_floor = (WIDTH_FLOOR_FRACTION * vspan).ln();

    let Some(mut p) = initial_guess(&v, &y) else {
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let p = Vector4::new(mean, mean, 0.5 * (v[0] + v[v.len() - 1]), width_floor);
        let (_, cost) = model.evaluate(&p, None);
        return Err(FitError::NoConvergence {
            iterations: 0,
            reason: "flat curve, width at lower bound",
            best: Box::new(FitReport {
                curve: to_curve(&p),
                residual: cost,
                iterations: 0,
                residual_history: vec![cost],
            }),
        });
    };

    let mut rows = Vec::with_capacity(v.len());
    let (mut res, mut cost) = model.evaluate(&p, Some(&mut rows));
    let mut history = vec![cost];
    let mut lambda = LAMBDA_START;
    let scale = y.iter().map(|yi| yi * yi).sum::<f64>().max(f64::MIN_POSITIVE);

    for iter in 1..=MAX_FIT_ITERATIONS {
        let mut jtj = Matrix4::<f64>::zeros();
        let mut jtr = Vector4::<f64>::zeros();
        for (row, r) in rows.iter().zip(&res) {
            jtj += row * row.transpose();
            jtr += row * *r;
        }
        if jtr.amax() <= 1e-15 * scale.sqrt() {
            return Ok(done(p, cost, iter - 1, history));
        }

        let mut accepted = false;
        while lambda <= LAMBDA_MAX {
            let mut a = jtj;
            for k in 0..4 {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-jtr)) else {
                lambda *= 4.0;
                continue;
            };
            let mut trial = p + step;
            trial[3] = trial[3].max(width_floor);
            let (_, trial_cost) = model.evaluate(&trial, None);
            if trial_cost.is_finite() && trial_cost <= cost {
                let improvement = cost - trial_cost;
                let small_step = step.amax() <= 1e-12 * (1.0 + p.amax());
                p = trial;
                (res, cost) = model.evaluate(&p, Some(&mut rows));
                history.push(cost);
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if improvement <= 1e-15 * cost.max(1e-300) || small_step || cost <= 1e-28 * scale {
                    return Ok(done(p, cost, iter, history));
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // no downhill step at any damping: stationary to working precision
            return Ok(done(p, cost, iter, history));
        }
    }
    Err(FitError::NoConvergence {
        iterations: MAX_FIT_ITERATIONS,
        reason: "iteration cap reached",
        best: Box::new(done(p, cost, MAX_FIT_ITERATIONS, history)),
    })
}

fn done(p: Params, cost: f64, iterations: usize, residual_history: Vec<f64>) -> FitReport {
    FitReport {
        curve: to_curve(&p),
        residual: cost,
        iterations,
        residual_history,
    }
}
