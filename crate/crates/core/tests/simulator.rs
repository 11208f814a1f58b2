mod common;

use duoglass::config::{parse_config, RunConfig};
use duoglass::electro_optics::MaterialResponse;
use duoglass::geometry::{PanelSpec, Side};
use duoglass::image::RgbImage;
use duoglass::parallel::with_threads;
use duoglass::schedule::{compile_schedule, FramePair, TimingConfig};
use duoglass::simulator::{
    serialize_report, simulate_frame, simulate_luminance, Contrast, FrameLuminance, LedConfig, SimulationSetup,
    WHITE_TARGET_CD_M2,
};

use common::{analytic_white_brightness, floor_luminance, manifest_path, random_frames};

fn run(setup: &SimulationSetup, timing: &TimingConfig, frames: &FramePair) -> FrameLuminance {
    let s = compile_schedule(frames, &setup.spec, &setup.material, timing).unwrap();
    simulate_luminance(&s, setup).unwrap()
}

fn white(setup: &SimulationSetup) -> FramePair {
    let (c, r) = (setup.spec.pixel_cols, setup.spec.pixel_rows);
    FramePair::uniform(c, r, [1.0; 3], [1.0; 3])
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

#[test]
fn calibrated_white_matches_target_and_oracle() {
    let setup = SimulationSetup::new(PanelSpec::stage2(), MaterialResponse::hcm009()).unwrap();
    let timing = TimingConfig::default();
    let lum = run(&setup, &timing, &white(&setup));
    let sim = 0.5 * (lum.front.mean_white() + lum.back.mean_white());
    assert!(rel(sim, WHITE_TARGET_CD_M2) < 1e-9, "{sim}");
    let oracle = analytic_white_brightness(&setup, &timing);
    assert!(rel(sim, oracle) < 1e-9, "sim {sim} oracle {oracle}");
}

#[test]
fn periodic_oracle_across_settings() {
    let led = LedConfig {
        flux: [0.8, 1.1, 0.6],
        flux_depletion: 0.3,
        ..LedConfig::default()
    };
    for (m, fr, df) in [
        (MaterialResponse::hcm009(), 50.0, 1000.0),
        (MaterialResponse::rm257(), 60.0, 2000.0),
        (MaterialResponse::hcm009(), 45.0, 700.0),
    ] {
        let mut setup = SimulationSetup::new(PanelSpec::stage3(), m).unwrap();
        setup.led = led;
        setup.mask.off_state_background = Some(0.4);
        let timing = TimingConfig {
            frame_rate_hz: fr,
            drive_frequency_hz: df,
            ..TimingConfig::default()
        };
        let lum = run(&setup, &timing, &white(&setup));
        let sim = 0.5 * (lum.front.mean_white() + lum.back.mean_white());
        let oracle = analytic_white_brightness(&setup, &timing);
        assert!(rel(sim, oracle) < 1e-9, "{fr} Hz: sim {sim} oracle {oracle}");
    }
}

#[test]
fn leakage_is_linear_in_blocking_loss() {
    let mut setup = SimulationSetup::new(PanelSpec::stage3(), MaterialResponse::hcm009()).unwrap();
    setup.led.flux_depletion = 0.25;
    setup.led.edges = duoglass::simulator::Edges::Left;
    let timing = TimingConfig::default();
    let frames = random_frames(7, 10, 10);
    let ideal = run(&setup, &timing, &frames);
    assert_eq!(ideal.crosstalk, [0.0, 0.0]);
    let cols = setup.spec.pixel_cols;
    for b in [0.9, 0.5, 0.0] {
        setup.mask.blocking_efficiency = b;
        let leaky = run(&setup, &timing, &frames);
        for (si, side) in [Side::A, Side::B].into_iter().enumerate() {
            let (mine, other) = match side {
                Side::A => (&ideal.front, &ideal.back),
                Side::B => (&ideal.back, &ideal.front),
            };
            let (mut sum_own, mut sum_leak) = (0.0, 0.0);
            for row in 0..10 {
                for vc in 0..cols {
                    // the same physical pixel seen from the other side is mirrored
                    let oc = cols - 1 - vc;
                    let pc = if side == Side::A { vc } else { oc };
                    let own = mine.get(row, vc);
                    let fl = floor_luminance(&setup, &timing, pc, side);
                    let other_own = other.get(row, oc);
                    let ofl = floor_luminance(&setup, &timing, pc, side.opposite());
                    let got = leaky.map(side).get(row, vc);
                    for c in 0..3 {
                        let leak = (1.0 - b) * (other_own[c] - ofl[c]);
                        assert!(rel(got[c], own[c] + leak) < 1e-12, "b={b} {side:?} ({row},{vc})");
                        sum_own += own[c] - fl[c];
                        sum_leak += leak;
                    }
                }
            }
            let expect = sum_leak / sum_own;
            assert!(
                rel(leaky.crosstalk[si], expect) < 1e-9,
                "{} vs {expect}",
                leaky.crosstalk[si]
            );
        }
    }
}

fn grey_image(seed: u64, cols: u32, rows: u32) -> RgbImage {
    let colour = random_frames(seed, cols, rows).front;
    let px = colour.pixels().iter().map(|p| [p[0]; 3]).collect();
    RgbImage::from_pixels(cols, rows, px).unwrap()
}

#[test]
fn swapping_grey_images_swaps_maps() {
    let setup = SimulationSetup::new(PanelSpec::stage3(), MaterialResponse::hcm009()).unwrap();
    let timing = TimingConfig::default();
    let frames = FramePair {
        front: grey_image(1, 10, 10),
        back: grey_image(2, 10, 10),
    };
    let a = run(&setup, &timing, &frames);
    let b = run(&setup, &timing, &frames.swapped());
    for (x, y) in [(&a.front, &b.back), (&a.back, &b.front)] {
        for (p, q) in x.values.iter().flatten().zip(y.values.iter().flatten()) {
            assert!(rel(*p, *q) < 1e-9, "{p} vs {q}");
        }
    }
}

#[test]
fn swapping_colour_images_is_only_approximate() {
    // within a colour the front sub-frame precedes the back one, so the
    // residual response lands in different colour fields
    let setup = SimulationSetup::new(PanelSpec::stage2(), MaterialResponse::hcm009()).unwrap();
    let timing = TimingConfig::default();
    let frames = random_frames(3, 4, 4);
    let a = run(&setup, &timing, &frames);
    let b = run(&setup, &timing, &frames.swapped());
    let worst = a
        .front
        .values
        .iter()
        .flatten()
        .zip(b.back.values.iter().flatten())
        .map(|(p, q)| rel(*p, *q))
        .fold(0.0, f64::max);
    assert!(worst > 1e-6, "{worst}");
    let (sa, sb): (f64, f64) = (a.front.mean_white(), b.back.mean_white());
    assert!(rel(sa, sb) < 1e-9, "white sums agree: {sa} vs {sb}");
}

#[test]
fn halving_dt_changes_little() {
    let mut setup = SimulationSetup::new(PanelSpec::stage3(), MaterialResponse::rm257()).unwrap();
    let timing = TimingConfig::default();
    let frames = random_frames(11, 10, 10);
    let coarse = run(&setup, &timing, &frames);
    setup.dt_ms /= 2.0;
    let fine = run(&setup, &timing, &frames);
    for (x, y) in [(&coarse.front, &fine.front), (&coarse.back, &fine.back)] {
        for (p, q) in x.values.iter().flatten().zip(y.values.iter().flatten()) {
            assert!(rel(*p, *q) < 5e-3, "{p} vs {q}");
        }
    }
}

fn asbuilt() -> RunConfig {
    let text = std::fs::read_to_string(manifest_path("configs/stage2-asbuilt.conf")).unwrap();
    parse_config(&text).unwrap().config
}

fn panel_cr(c: &RunConfig) -> f64 {
    let setup = c.setup().unwrap();
    let s = compile_schedule(&white(&setup), &c.panel, &c.material, &c.timing).unwrap();
    let r = simulate_frame(&s, &setup).unwrap();
    let [front, back] = r.metrics.panel_cr.map(Contrast::value);
    assert!(rel(front, back) < 1e-12, "{front} vs {back}");
    front
}

#[test]
fn panel_contrast_falls_with_background() {
    let mut c = asbuilt();
    let material_cr = c.material.curve.contrast_ratio();
    let mut last = f64::INFINITY;
    for bg in [0.01, 0.1, 0.22, 0.5, 0.745914, 1.0, 2.0] {
        c.mask.off_state_background = Some(bg);
        let cr = panel_cr(&c);
        assert!(cr < last, "bg {bg}: {cr} >= {last}");
        if bg >= c.material.curve.i_min {
            assert!(cr <= material_cr, "bg {bg}: {cr} > {material_cr}");
        }
        last = cr;
    }
    c.mask.off_state_background = Some(0.0);
    let setup = c.setup().unwrap();
    let s = compile_schedule(&white(&setup), &c.panel, &c.material, &c.timing).unwrap();
    assert_eq!(
        simulate_frame(&s, &setup).unwrap().metrics.panel_cr[0],
        Contrast::Infinite
    );
}

#[test]
fn asbuilt_config_reproduces_contrast() {
    let cr = panel_cr(&asbuilt());
    assert!((cr - 4.34).abs() < 1e-3, "{cr}");
}

#[test]
fn report_is_thread_count_independent() {
    let c = RunConfig::default();
    let frames = random_frames(5, 10, 10);
    let go = |n| {
        with_threads(Some(n), || {
            let setup = c.setup().unwrap();
            let s = compile_schedule(&frames, &c.panel, &c.material, &c.timing).unwrap();
            serialize_report(&simulate_frame(&s, &setup).unwrap())
        })
        .unwrap()
    };
    let one = go(1);
    for n in [2, 3, 8] {
        assert_eq!(go(n), one, "{n} threads");
    }
}

#[test]
fn mismatched_schedule_is_rejected() {
    let setup = SimulationSetup::new(PanelSpec::stage2(), MaterialResponse::hcm009()).unwrap();
    let frames = random_frames(1, 10, 10);
    let s = compile_schedule(&frames, &PanelSpec::stage3(), &setup.material, &TimingConfig::default()).unwrap();
    assert!(matches!(
        simulate_luminance(&s, &setup),
        Err(duoglass::simulator::SimError::Mismatch { .. })
    ));
}
