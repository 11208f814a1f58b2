//! Finds the off-state background that gives the as-built stage-2 panel
//! its measured contrast ratio of 4.34, for `configs/stage2-asbuilt.conf`.
//!
//!     cargo run --release --example tune_asbuilt

use duoglass::config::RunConfig;
use duoglass::geometry::PanelSpec;
use duoglass::schedule::{compile_schedule, FramePair};
use duoglass::simulator::{simulate_frame, Contrast};

const TARGET_CR: f64 = 4.34;

fn panel_cr(background: f64) -> f64 {
    let mut c = RunConfig {
        panel: PanelSpec::stage2(),
        ..RunConfig::default()
    };
    c.mask.off_state_background = Some(background);
    let setup = c.setup().expect("valid setup");
    let frames = FramePair::uniform(c.panel.pixel_cols, c.panel.pixel_rows, [1.0; 3], [1.0; 3]);
    let s = compile_schedule(&frames, &c.panel, &c.material, &c.timing).expect("schedule");
    match simulate_frame(&s, &setup).expect("simulation").metrics.panel_cr[0] {
        Contrast::Finite(v) => v,
        Contrast::Infinite => f64::INFINITY,
    }
}

fn main() {
    let (mut lo, mut hi) = (0.0, 5.28);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if panel_cr(mid) > TARGET_CR {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let bg = 0.5 * (lo + hi);
    println!("off_state_background = {bg:.6}");
    println!("panel CR at {bg:.6}: {}", panel_cr((bg * 1e6).round() / 1e6));
}
