//! Strategies and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use duoglass::config::{IoPaths, RunConfig, SimulationParams};
use duoglass::electro_optics::{grayscale_voltage, MaterialResponse, ResponseCurve};
use duoglass::geometry::{ElectrodeId, OpticalStack, PanelSpec, Side, Stage};
use duoglass::image::RgbImage;
use duoglass::schedule::{Color, DriveSchedule, FramePair, PanelRef, SubFrame, TimingConfig};
use duoglass::simulator::{Edges, LedConfig, MaskModel, SimulationSetup};

pub fn manifest_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(rel)
}

pub fn random_image(rng: &mut ChaCha8Rng, cols: u32, rows: u32) -> RgbImage {
    let px = (0..cols * rows)
        .map(|_| [rng.random(), rng.random(), rng.random()])
        .collect();
    RgbImage::from_pixels(cols, rows, px).unwrap()
}

pub fn random_frames(seed: u64, cols: u32, rows: u32) -> FramePair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FramePair {
        front: random_image(&mut rng, cols, rows),
        back: random_image(&mut rng, cols, rows),
    }
}

// ---- strategies -------------------------------------------------------

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e3..1e3f64,
        prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO,
        Just(-0.0),
    ]
}

fn subframe(cols: u32, rows: u32) -> impl Strategy<Value = SubFrame> {
    let n = 2 * cols * rows;
    (
        prop::sample::select(vec![Color::R, Color::G, Color::B]),
        prop::sample::select(vec![Side::A, Side::B]),
        finite(),
        any::<u32>(),
        prop::collection::btree_map(0..n + 4, finite(), 0..8),
    )
        .prop_map(|(color, side, duration_ms, half_cycles, amps)| SubFrame {
            color,
            side,
            duration_ms,
            half_cycles,
            amplitudes: amps
                .into_iter()
                .map(|(k, v)| (ElectrodeId(k), v))
                .collect::<BTreeMap<_, _>>(),
        })
}

/// Syntactically arbitrary schedules; most do not validate.
pub fn schedule_strategy() -> impl Strategy<Value = DriveSchedule> {
    ("[A-Za-z0-9_.-]{1,12}", 0u32..6, 0u32..6)
        .prop_flat_map(|(name, cols, rows)| {
            (
                Just(name),
                Just(cols),
                Just(rows),
                (finite(), any::<u32>(), finite(), finite()),
                prop::collection::vec(subframe(cols, rows), 0..8),
            )
        })
        .prop_map(|(name, cols, rows, (fr, sf, df, sm), subframes)| DriveSchedule {
            format_version: 1,
            panel: PanelRef { name, cols, rows },
            timing: TimingConfig {
                frame_rate_hz: fr,
                subframes_per_frame: sf,
                drive_frequency_hz: df,
                settle_margin: sm,
            },
            subframes,
        })
}

fn panel_strategy() -> impl Strategy<Value = PanelSpec> {
    (
        prop::sample::select(vec![Stage::Stage1, Stage::Stage2, Stage::Stage3, Stage::Custom]),
        (1u32..12, 1u32..12, 1u32..40),
        (5.0..150.0f64, 0.0..1.0f64, 0.0..1.0f64),
        (1.0..300.0f64, 1.0..300.0f64, 0.5..6.0f64),
        (1.0..3.0f64, 1.0..3.0f64),
    )
        .prop_map(
            |(stage, (cols, rows, subs), (sub, mask_f, extra), (sa, si, gap), (sx, sy))| {
                let (cols, rows) = if stage == Stage::Stage1 { (1, 1) } else { (cols, rows) };
                let unit = 2.0 * sub * (1.0 + extra);
                let mut p = PanelSpec {
                    stage,
                    pixel_cols: cols,
                    pixel_rows: rows,
                    subpixels_per_pixel_side: subs,
                    subpixel_pitch_um: sub,
                    unit_cell_pitch_um: unit,
                    mask_size_um: mask_f * unit / 2.0,
                    stripe_active_width_um: sa,
                    stripe_inactive_width_um: si,
                    cell_gap_um: gap,
                    panel_width_in: 1.0,
                    panel_height_in: 1.0,
                };
                let (w, h) = p.active_size_um();
                p.panel_width_in = w / 25400.0 * sx;
                p.panel_height_in = h / 25400.0 * sy;
                p
            },
        )
}

fn material_strategy() -> impl Strategy<Value = MaterialResponse> {
    (
        prop_oneof![
            Just("HCM-009".to_string()),
            Just("RM-257".to_string()),
            "[a-z][a-z0-9_-]{0,10}"
        ],
        (0.0..1.0f64, 0.1..10.0f64, -5.0..20.0f64, 0.05..3.0f64),
        (0.05..5.0f64, 0.05..5.0f64),
    )
        .prop_map(
            |(name, (i_min, span, v_mid, v_width), (tau_on_ms, tau_off_ms))| MaterialResponse {
                name,
                curve: ResponseCurve {
                    i_min,
                    i_max: i_min + span,
                    v_mid,
                    v_width,
                },
                tau_on_ms,
                tau_off_ms,
            },
        )
}

fn path_strategy() -> impl Strategy<Value = PathBuf> {
    "[a-z0-9_][a-z0-9_./-]{0,20}".prop_map(PathBuf::from)
}

/// Valid run configurations.
pub fn config_strategy() -> impl Strategy<Value = RunConfig> {
    (
        panel_strategy(),
        material_strategy(),
        (1.0..240.0f64, 1u32..9, 1.0..4.0f64, 0.0..3.0f64),
        (
            [0.0..2.0f64, 0.0..2.0f64, 0.0..2.0f64],
            0.01..=1.0f64,
            prop::sample::select(vec![Edges::Left, Edges::Right, Edges::Both]),
            0.0..0.99f64,
        ),
        (
            0.0..=1.0f64,
            prop::option::of(0.0..5.0f64),
            0.01..=1.0f64,
            0.01..=1.0f64,
        ),
        (0.001..1.0f64, prop::option::of(0.1..1e3f64)),
        (
            prop::option::of(path_strategy()),
            prop::option::of(path_strategy()),
            path_strategy(),
        ),
    )
        .prop_map(
            |(
                panel,
                material,
                (fr, sf, df_mult, sm),
                (flux, ce, edges, dep),
                (be, bg, ti, tito),
                (dt, ls),
                (f, b, o),
            )| {
                RunConfig {
                    panel,
                    material,
                    timing: TimingConfig {
                        frame_rate_hz: fr,
                        subframes_per_frame: sf,
                        drive_frequency_hz: 2.0 * fr * f64::from(sf) * df_mult,
                        settle_margin: sm,
                    },
                    led: LedConfig {
                        flux,
                        coupling_efficiency: ce,
                        edges,
                        flux_depletion: dep,
                    },
                    mask: MaskModel {
                        blocking_efficiency: be,
                        off_state_background: bg,
                    },
                    stack: OpticalStack {
                        t_interfaces: ti,
                        t_ito: tito,
                    },
                    simulation: SimulationParams {
                        dt_ms: dt,
                        luminance_scale: ls,
                    },
                    io: IoPaths {
                        front: f,
                        back: b,
                        output_dir: o,
                    },
                }
            },
        )
}

/// Image dimensions and raw RGB bytes.
pub fn ppm_strategy() -> impl Strategy<Value = (u32, u32, Vec<u8>)> {
    (1u32..12, 1u32..12)
        .prop_flat_map(|(w, h)| prop::collection::vec(any::<u8>(), (w * h * 3) as usize).prop_map(move |b| (w, h, b)))
}

// ---- oracles ----------------------------------------------------------

/// Sustained full-white brightness (mean of both viewers' R+G+B) from the
/// exact periodic solution of the relaxation model.
///
/// Each segment maps the excess intensity affinely, `x -> t + (x - t) a`,
/// so one frame is a single affine map whose fixed point is the periodic
/// start state. Integrals over each segment are then closed-form.
pub fn analytic_white_brightness(setup: &SimulationSetup, timing: &TimingConfig) -> f64 {
    let m = &setup.material;
    let target = m.curve.intensity(grayscale_voltage(m, 1.0)) - m.curve.i_min;
    let sub = 1000.0 / timing.frame_rate_hz / 6.0;
    let cycles = (sub * timing.drive_frequency_hz / 1000.0 + 1e-9).floor();
    let active = cycles * 1000.0 / timing.drive_frequency_hz;
    let order = [Side::A, Side::B, Side::A, Side::B, Side::A, Side::B];
    let period = 6.0 * sub;
    let bg = setup.mask.background(m);
    let cell = setup.spec.unit_cell();

    let mut total = 0.0;
    for (side, frac) in [(Side::A, cell.frac_subpixel_a), (Side::B, cell.frac_subpixel_b)] {
        // (colour, length, target, tau)
        let mut segs = Vec::new();
        for (k, &s) in order.iter().enumerate() {
            let color = k / 2;
            if s == side {
                segs.push((color, active, target, m.tau_on_ms));
            } else {
                segs.push((color, active, 0.0, m.tau_off_ms));
            }
            segs.push((color, sub - active, 0.0, m.tau_off_ms));
        }
        let (mut a, mut b) = (1.0, 0.0);
        for &(_, len, t, tau) in &segs {
            let e = (-len / tau).exp();
            // x -> t + (a x + b - t) e
            a *= e;
            b = t + (b - t) * e;
        }
        let mut x = b / (1.0 - a);
        let mut integral = [0.0; 3];
        for &(c, len, t, tau) in &segs {
            let e = (-len / tau).exp();
            integral[c] += t * len + (x - t) * tau * (1.0 - e);
            x = t + (x - t) * e;
        }
        let cols = setup.spec.pixel_cols;
        let mean_w: f64 = (0..cols).map(|col| setup.led.flux_weight(col, cols)).sum::<f64>() / f64::from(cols);
        let white: f64 = (0..3)
            .map(|c| {
                let k = setup.luminance_scale * setup.led.coupling_efficiency * setup.led.flux[c] * frac * mean_w;
                k * (integral[c] + bg * 2.0 * sub) / period
            })
            .sum();
        total += white;
    }
    total / 2.0
}

/// Per-colour floor luminance that a pixel in column `col` shows on `side`
/// regardless of its drive.
pub fn floor_luminance(setup: &SimulationSetup, timing: &TimingConfig, col: u32, side: Side) -> [f64; 3] {
    let cell = setup.spec.unit_cell();
    let frac = if side == Side::A {
        cell.frac_subpixel_a
    } else {
        cell.frac_subpixel_b
    };
    let w = setup.led.flux_weight(col, setup.spec.pixel_cols);
    let bg = setup.mask.background(&setup.material);
    // each colour lights two of six sub-frames
    let lit_share = 2.0 / f64::from(timing.subframes_per_frame);
    std::array::from_fn(|c| {
        setup.luminance_scale * setup.led.coupling_efficiency * setup.led.flux[c] * frac * w * bg * lit_share
    })
}
