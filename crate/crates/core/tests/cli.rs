mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use duoglass::image::{encode_ppm, RgbImage};

use common::manifest_path;

fn duoglass(args: &[&str]) -> Output {
    duoglass_env(args, &[])
}

fn duoglass_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_duoglass"));
    cmd.args(args).current_dir(env!("CARGO_MANIFEST_DIR"));
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .parse()
        .unwrap()
}

fn write_ppm(path: &Path, cols: u32, rows: u32, rgb: [f64; 3]) {
    fs::write(path, encode_ppm(&RgbImage::filled(cols, rows, rgb))).unwrap();
}

#[test]
fn no_arguments_is_a_usage_error() {
    let o = duoglass(&[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage:"));
    assert!(o.stdout.is_empty());
    assert_eq!(duoglass(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(duoglass(&["--help"]).status.code(), Some(0));
}

#[test]
fn metrics_on_embedded_and_file_curves() {
    let o = duoglass(&["metrics", "hcm009"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!((value(&text, "cr") - 24.0).abs() < 0.5);
    assert!((value(&text, "v_sat_v") - 10.5).abs() < 0.1);
    let from_file = duoglass(&["metrics", "data/anchors/hcm009.csv"]);
    assert_eq!(stdout(&from_file), text);
    let missing = duoglass(&["metrics", "no-such.csv"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(missing.stdout.is_empty());
}

#[test]
fn fit_prints_parameters() {
    let o = duoglass(&["fit", "rm257"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!((value(&text, "i_max") - 4.1).abs() < 0.01);
    assert!((value(&text, "v_sat_v") - 12.0).abs() < 0.05);
}

#[test]
fn transparency_of_preset_and_config() {
    let o = duoglass(&["transparency", "stage3"]);
    assert_eq!(o.status.code(), Some(0));
    assert!((value(&stdout(&o), "mask_loss") - 0.18).abs() < 1e-12);
    let c = duoglass(&["transparency", "configs/stage3.conf"]);
    assert_eq!(stdout(&c), stdout(&o));
}

#[test]
fn config_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.conf");
    fs::write(&cfg, "[timing]\nframe_rate = sixty\n").unwrap();
    let o = duoglass(&["transparency", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("line 2") && err.contains("frame_rate"), "{err}");
    fs::write(&cfg, "[mask]\nblocking = 1\n").unwrap();
    let o = duoglass(&["transparency", cfg.to_str().unwrap()]);
    assert!(stderr(&o).contains("unknown key `blocking`"));
}

#[test]
fn feasibility_exit_codes() {
    let o = duoglass(&["schedule", "feasibility", "configs/slow-material.conf"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("feasible = false"));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("fifty.conf");
    let text = fs::read_to_string(manifest_path("configs/slow-material.conf"))
        .unwrap()
        .replace("frame_rate = 60", "frame_rate = 50");
    fs::write(&cfg, text).unwrap();
    let o = duoglass(&["schedule", "feasibility", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn compile_then_validate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.txt");
    let o = duoglass(&[
        "schedule",
        "compile",
        "configs/stage2-asbuilt.conf",
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = duoglass(&["schedule", "validate", out.to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(0));
    assert_eq!(stdout(&v), "valid\n");

    let text = fs::read_to_string(&out)
        .unwrap()
        .replacen("half_cycles=4", "half_cycles=3", 1);
    fs::write(&out, text).unwrap();
    let v = duoglass(&["schedule", "validate", out.to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(1));
    assert!(stderr(&v).contains("DC imbalance"));

    fs::write(&out, "DUOGLASS-SCHEDULE v2\n").unwrap();
    let v = duoglass(&["schedule", "validate", out.to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(1));
    assert!(stderr(&v).contains("version 2"));
}

#[test]
fn simulate_writes_outputs_and_leaves_inputs_alone() {
    let dir = tempfile::tempdir().unwrap();
    let front = dir.path().join("f.ppm");
    let back = dir.path().join("b.ppm");
    write_ppm(&front, 4, 4, [1.0, 0.5, 0.0]);
    write_ppm(&back, 4, 4, [0.2, 0.2, 0.2]);
    let before = (fs::read(&front).unwrap(), fs::read(&back).unwrap());
    let out = dir.path().join("out");
    let o = duoglass(&[
        "simulate",
        "configs/stage2-asbuilt.conf",
        front.to_str().unwrap(),
        back.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!((value(&stdout(&o), "panel_cr_front") - 4.34).abs() < 1e-3);
    assert_eq!((fs::read(&front).unwrap(), fs::read(&back).unwrap()), before);
    for f in ["report.txt", "schedule.txt", "front.ppm", "back.ppm"] {
        assert!(out.join(f).exists(), "{f}");
    }

    let again = dir.path().join("again");
    let r = duoglass(&[
        "render",
        out.join("report.txt").to_str().unwrap(),
        "-o",
        again.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(0), "{}", stderr(&r));
    for f in ["front.ppm", "back.ppm"] {
        assert_eq!(fs::read(again.join(f)).unwrap(), fs::read(out.join(f)).unwrap());
    }
}

#[test]
fn simulate_rejects_wrong_image_size() {
    let dir = tempfile::tempdir().unwrap();
    let front = dir.path().join("f.ppm");
    let back = dir.path().join("b.ppm");
    write_ppm(&front, 3, 4, [1.0; 3]);
    write_ppm(&back, 4, 4, [1.0; 3]);
    let o = duoglass(&[
        "simulate",
        "configs/stage2-asbuilt.conf",
        front.to_str().unwrap(),
        back.to_str().unwrap(),
        "-o",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("3x4") && err.contains("4x4"), "{err}");
}

#[test]
fn simulate_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str| {
        let out = dir.path().join(format!("t{threads}"));
        let o = duoglass_env(
            &["simulate", "configs/stage3.conf", "-o", out.to_str().unwrap()],
            &[("DUOGLASS_THREADS", threads)],
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        ["report.txt", "front.ppm", "back.ppm", "schedule.txt"].map(|f| fs::read(out.join(f)).unwrap())
    };
    assert_eq!(run("1"), run("8"));
    let bad = duoglass_env(&["simulate", "configs/stage3.conf"], &[("DUOGLASS_THREADS", "zero")]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn sweeps_check_and_chart() {
    for name in ["monomer", "concentration", "uv_intensity", "cell_gap"] {
        let o = duoglass(&["sweep", name, "--check"]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", stderr(&o));
        assert!(stdout(&o).starts_with("variable,value,i_min_au,i_max_au,cr,v_sat_v\n"));
    }
    let dir = tempfile::tempdir().unwrap();
    let o = duoglass(&[
        "sweep",
        "data/uv_intensity.dataset",
        "--charts",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), stdout(&duoglass(&["sweep", "uv_intensity"])));
    assert!(dir.path().join("uv_intensity_curves.svg").exists());
    assert!(dir.path().join("uv_intensity_metrics.svg").exists());
}

#[test]
fn failing_check_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(manifest_path("data/concentration.dataset"))
        .unwrap()
        .replace("argmax_cr = 6", "argmax_cr = 5");
    let path = dir.path().join("c.dataset");
    fs::write(&path, text).unwrap();
    fs::create_dir(dir.path().join("anchors")).unwrap();
    for f in fs::read_dir(manifest_path("data/anchors")).unwrap() {
        let f = f.unwrap();
        fs::copy(f.path(), dir.path().join("anchors").join(f.file_name())).unwrap();
    }
    let o = duoglass(&["sweep", path.to_str().unwrap(), "--check"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("FAIL argmax CR: at 6 (23.99980909090909), expected 5"));
}
