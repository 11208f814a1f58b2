//! The `duoglass` command line.
//!
//! Exit codes: 0 success, 1 validation failure (bad input data, failed
//! checks, infeasible timing), 2 usage error. Data goes to stdout or to
//! files; diagnostics go to stderr.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{parse_config, RunConfig};
use crate::electro_optics::{curve_metrics, fit_response, read_curve_csv, CurveSamples, FitError};
use crate::geometry::{panel_transparency, PanelSpec, Side};
use crate::image::read_image;
use crate::parallel::{threads_from_env, with_threads};
use crate::schedule::{
    check_feasibility, compile_schedule, parse_schedule, serialize_schedule, validate_schedule, FramePair,
};
use crate::simulator::{parse_report, render_side, serialize_report, simulate_frame};
use crate::study::{
    builtin_dataset, check_anchors, embedded_curve_csv, emit_charts, load_dataset, run_sweep, sweep_csv, StudyDataset,
    BUILTIN_DATASETS,
};

#[derive(Parser, Debug)]
#[command(
    name = "duoglass",
    version,
    about = "Drive compilation and optical simulation for dual-sided transparent waveguide displays",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Contrast ratio and saturation voltage of a sampled curve.
    Metrics {
        /// CSV with header `voltage_v,intensity_au`, or an embedded anchor
        /// name such as `hcm009` or `rm257`.
        curve: String,
    },
    /// Least-squares fit of the four-parameter response model.
    Fit { curve: String },
    /// Transparency budget of a config file or panel preset.
    Transparency {
        /// Config path, or `stage1`, `stage2`, `stage3`.
        source: String,
    },
    /// Compile, validate or check drive schedules.
    #[command(subcommand)]
    Schedule(ScheduleCommand),
    /// Simulate one frame pair and write a report plus rendered images.
    Simulate {
        config: PathBuf,
        /// Front image (P3/P6); defaults to `[io] front` of the config.
        front: Option<PathBuf>,
        /// Back image as the back viewer sees it; defaults to `[io] back`.
        back: Option<PathBuf>,
        /// Output directory; defaults to `[io] output_dir`.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Metrics for every entry of a study dataset, as CSV.
    Sweep {
        /// Dataset file, or a built-in: monomer, concentration,
        /// uv_intensity, cell_gap.
        dataset: String,
        /// Write the CSV here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Write SVG charts into this directory.
        #[arg(long)]
        charts: Option<PathBuf>,
        /// Verify the dataset's structural claims; exit 1 if any fails.
        #[arg(long)]
        check: bool,
    },
    /// Render a simulation report to front.ppm and back.ppm.
    Render {
        report: PathBuf,
        #[arg(short, long, default_value = ".")]
        output: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
enum ScheduleCommand {
    /// Compile a frame pair into a drive schedule.
    Compile {
        config: PathBuf,
        front: Option<PathBuf>,
        back: Option<PathBuf>,
        /// Write the schedule here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Check a schedule file for structural violations.
    Validate { schedule: PathBuf },
    /// Whether the config's timing leaves room for the material to switch.
    Feasibility { config: PathBuf },
}

enum Failure {
    Usage(String),
    Invalid(String),
}

type Outcome = Result<(), Failure>;

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure::Invalid(e.to_string())
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Outcome {
    fs::write(path, bytes).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn emit(out: &mut dyn Write, text: &str) -> Outcome {
    out.write_all(text.as_bytes())
        .map_err(|e| Failure::Invalid(format!("stdout: {e}")))
}

fn load_curve(arg: &str) -> Result<CurveSamples, Failure> {
    let path = Path::new(arg);
    let text = if path.exists() {
        read_text(path)?
    } else if let Some(text) = embedded_curve_csv(&format!("anchors/{arg}.csv")) {
        text
    } else {
        return Err(Failure::Invalid(format!(
            "{arg}: no such file or embedded anchor (hcm009, rm257, ...)"
        )));
    };
    read_curve_csv(text.as_bytes()).map_err(|e| Failure::Invalid(format!("{arg}: {e}")))
}

struct Loaded {
    config: RunConfig,
    dir: PathBuf,
}

fn load_config(path: &Path, err: &mut dyn Write) -> Result<Loaded, Failure> {
    let text = read_text(path)?;
    let parsed = parse_config(&text).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    if !parsed.defaults_used.is_empty() {
        let _ = writeln!(err, "note: defaults used for {}", parsed.defaults_used.join(", "));
    }
    Ok(Loaded {
        config: parsed.config,
        dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
    })
}

/// CLI paths win; config paths are relative to the config file.
fn frame_pair(loaded: &Loaded, front: Option<PathBuf>, back: Option<PathBuf>) -> Result<FramePair, Failure> {
    let pick = |cli: Option<PathBuf>, cfg: &Option<PathBuf>, which: &str| {
        cli.or_else(|| cfg.as_ref().map(|p| loaded.dir.join(p)))
            .ok_or_else(|| Failure::Usage(format!("no {which} image: pass it as an argument or set [io] {which}")))
    };
    let front = pick(front, &loaded.config.io.front, "front")?;
    let back = pick(back, &loaded.config.io.back, "back")?;
    let read = |p: &Path| read_image(p).map_err(|e| Failure::Invalid(format!("{}: {e}", p.display())));
    Ok(FramePair {
        front: read(&front)?,
        back: read(&back)?,
    })
}

fn metrics(curve: &str, out: &mut dyn Write) -> Outcome {
    let m = curve_metrics(&load_curve(curve)?).map_err(invalid)?;
    emit(
        out,
        &format!(
            "i_min = {}\ni_max = {}\ncr = {}\nv_sat_v = {}\n",
            m.i_min, m.i_max, m.cr, m.v_sat
        ),
    )
}

fn fit(curve: &str, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let samples = load_curve(curve)?;
    let report = match fit_response(&samples) {
        Ok(r) => r,
        Err(e @ FitError::NoConvergence { .. }) => {
            let _ = writeln!(err, "error: {e}");
            return Err(Failure::Invalid("fit did not converge".into()));
        }
        Err(e) => return Err(invalid(e)),
    };
    let c = report.curve;
    emit(
        out,
        &format!(
            "i_min = {}\ni_max = {}\nv_mid_v = {}\nv_width_v = {}\ncr = {}\nv_sat_v = {}\nresidual = {}\niterations = {}\n",
            c.i_min,
            c.i_max,
            c.v_mid,
            c.v_width,
            c.contrast_ratio(),
            c.saturation_voltage(),
            report.residual,
            report.iterations
        ),
    )
}

fn transparency(source: &str, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let path = Path::new(source);
    let config = match PanelSpec::preset(source) {
        Some(spec) if !path.exists() => RunConfig {
            panel: spec,
            ..RunConfig::default()
        },
        _ => load_config(path, err)?.config,
    };
    let b = panel_transparency(&config.panel, &config.stack).map_err(invalid)?;
    emit(
        out,
        &format!(
            "panel = {}\nmask_loss = {}\nt_interfaces = {}\nt_ito = {}\ntransparency = {}\n",
            config.panel.stage.as_str(),
            b.mask_loss,
            b.t_interfaces,
            b.t_ito,
            b.transparency
        ),
    )
}

fn schedule(cmd: ScheduleCommand, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    match cmd {
        ScheduleCommand::Compile {
            config,
            front,
            back,
            output,
        } => {
            let loaded = load_config(&config, err)?;
            let frames = frame_pair(&loaded, front, back)?;
            let c = &loaded.config;
            let s = compile_schedule(&frames, &c.panel, &c.material, &c.timing).map_err(invalid)?;
            let text = serialize_schedule(&s);
            match output {
                Some(p) => write_file(&p, text.as_bytes()),
                None => emit(out, &text),
            }
        }
        ScheduleCommand::Validate { schedule } => {
            let s = parse_schedule(&read_text(&schedule)?)
                .map_err(|e| Failure::Invalid(format!("{}: {e}", schedule.display())))?;
            let violations = validate_schedule(&s);
            if violations.is_empty() {
                return emit(out, "valid\n");
            }
            for v in &violations {
                let _ = writeln!(err, "violation: {v}");
            }
            Err(Failure::Invalid(format!("{} violation(s)", violations.len())))
        }
        ScheduleCommand::Feasibility { config } => {
            let c = load_config(&config, err)?.config;
            c.timing.validate().map_err(invalid)?;
            let f = check_feasibility(&c.timing, &c.material);
            emit(
                out,
                &format!(
                    "subframe_ms = {}\nbound_ms = {}\nmargin_ratio = {}\nfeasible = {}\n",
                    f.subframe_ms, f.bound_ms, f.margin_ratio, f.feasible
                ),
            )?;
            if f.feasible {
                Ok(())
            } else {
                Err(Failure::Invalid(format!(
                    "sub-frame of {} ms is shorter than the {} ms switching bound",
                    f.subframe_ms, f.bound_ms
                )))
            }
        }
    }
}

fn simulate(
    config: &Path,
    front: Option<PathBuf>,
    back: Option<PathBuf>,
    output: Option<PathBuf>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Outcome {
    let loaded = load_config(config, err)?;
    let frames = frame_pair(&loaded, front, back)?;
    let c = &loaded.config;
    let dir = output.unwrap_or_else(|| loaded.dir.join(&c.io.output_dir));
    let threads = threads_from_env().map_err(|e| Failure::Usage(e.to_string()))?;
    let report = with_threads(threads, || -> Result<_, String> {
        let s = compile_schedule(&frames, &c.panel, &c.material, &c.timing).map_err(|e| e.to_string())?;
        let setup = c.setup().map_err(|e| e.to_string())?;
        let report = simulate_frame(&s, &setup).map_err(|e| e.to_string())?;
        Ok((s, report))
    })
    .map_err(invalid)?
    .map_err(Failure::Invalid)?;
    let (s, report) = report;
    fs::create_dir_all(&dir).map_err(|e| Failure::Invalid(format!("{}: {e}", dir.display())))?;
    write_file(&dir.join("schedule.txt"), serialize_schedule(&s).as_bytes())?;
    write_file(&dir.join("report.txt"), serialize_report(&report).as_bytes())?;
    write_file(&dir.join("front.ppm"), &render_side(&report, Side::A))?;
    write_file(&dir.join("back.ppm"), &render_side(&report, Side::B))?;
    let m = &report.metrics;
    emit(
        out,
        &format!(
            "brightness_white = {}\npanel_cr_front = {}\npanel_cr_back = {}\ncrosstalk = {}\ntransparency = {}\nwarmup_frames = {}\n",
            m.brightness_white, m.panel_cr[0], m.panel_cr[1], m.crosstalk, m.transparency, report.warmup_frames
        ),
    )
}

fn dataset(arg: &str) -> Result<StudyDataset, Failure> {
    let path = Path::new(arg);
    if !path.exists() {
        if let Some(d) = builtin_dataset(arg) {
            return Ok(d);
        }
        return Err(Failure::Invalid(format!(
            "{arg}: no such file or built-in dataset ({})",
            BUILTIN_DATASETS.join(", ")
        )));
    }
    load_dataset(path).map_err(|e| Failure::Invalid(format!("{arg}: {e}")))
}

fn sweep(
    arg: &str,
    output: Option<PathBuf>,
    charts: Option<PathBuf>,
    check: bool,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Outcome {
    let d = dataset(arg)?;
    let threads = threads_from_env().map_err(|e| Failure::Usage(e.to_string()))?;
    let result = with_threads(threads, || run_sweep(&d)).map_err(invalid)?;
    for row in &result.rows {
        if let Some(e) = &row.error {
            let _ = writeln!(err, "warning: {} = {}: {e}", d.variable.as_str(), row.value);
        }
    }
    let csv = sweep_csv(&result);
    match output {
        Some(p) => write_file(&p, csv.as_bytes())?,
        None => emit(out, &csv)?,
    }
    if let Some(dir) = charts {
        fs::create_dir_all(&dir).map_err(|e| Failure::Invalid(format!("{}: {e}", dir.display())))?;
        let set = emit_charts(&d, &result);
        if let Some(svg) = set.curves {
            write_file(&dir.join(format!("{}_curves.svg", d.name)), svg.as_bytes())?;
        }
        write_file(&dir.join(format!("{}_metrics.svg", d.name)), set.bars.as_bytes())?;
    }
    if check {
        let checks = check_anchors(&result, &d);
        for c in &checks {
            let _ = writeln!(err, "{c}");
        }
        let failed = checks.iter().filter(|c| !c.passed).count();
        if failed > 0 {
            return Err(Failure::Invalid(format!("{failed} check(s) failed")));
        }
    }
    Ok(())
}

fn render(report: &Path, dir: &Path) -> Outcome {
    let r = parse_report(&read_text(report)?).map_err(|e| Failure::Invalid(format!("{}: {e}", report.display())))?;
    fs::create_dir_all(dir).map_err(|e| Failure::Invalid(format!("{}: {e}", dir.display())))?;
    write_file(&dir.join("front.ppm"), &render_side(&r, Side::A))?;
    write_file(&dir.join("back.ppm"), &render_side(&r, Side::B))
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = err.write_all(text.as_bytes());
                2
            } else {
                let _ = out.write_all(text.as_bytes());
                0
            };
        }
    };
    let result = match cli.command {
        Command::Metrics { curve } => metrics(&curve, out),
        Command::Fit { curve } => fit(&curve, out, err),
        Command::Transparency { source } => transparency(&source, out, err),
        Command::Schedule(cmd) => schedule(cmd, out, err),
        Command::Simulate {
            config,
            front,
            back,
            output,
        } => simulate(&config, front, back, output, out, err),
        Command::Sweep {
            dataset,
            output,
            charts,
            check,
        } => sweep(&dataset, output, charts, check, out, err),
        Command::Render { report, output } => render(&report, &output),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            2
        }
        Err(Failure::Invalid(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            1
        }
    }
}
