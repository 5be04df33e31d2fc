//! Command-line entry point.
//!
//! Subcommands operate on a run directory: `synth` renders the configured
//! scene into it, `doa`/`detect`/`localize` consume the recording and each
//! other's CSV artifacts, `report` turns everything into plot-ready tables,
//! and `experiment static|dynamic` chains the whole sequence. Errors print as
//! `error[<code>]: <message>` and set a matching process exit code. Set
//! `SONOLOC_LOG=quiet` to silence progress lines.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{Config, EstimatorKind, ScenarioConfig};
use crate::detect::{build_template, detection_series, gate, SpectralTemplate};
use crate::doa::{block_centers, doa_pipeline, srp_pipeline, DoaEstimate};
use crate::localize::{
    error_summary, localize_source, to_global_bearing, BearingObservation,
};
use crate::report::{self, LocalizationReport, SceneInfo, TruthRecord};
use crate::spectra::power_spectrogram;
use crate::synth::{render, Motion, MultichannelRecording, Scene};
use crate::wav::{read_wav, write_wav};
use crate::{Error, Result, F};

/// Length of the auto-rendered clean template reference, seconds.
const REFERENCE_LEN_S: F = 2.0;
/// Report spectrograms are max-pooled down to at most this many cells.
const SPECTROGRAM_MAX_TIMES: usize = 600;
const SPECTROGRAM_MAX_FREQS: usize = 256;

#[derive(Parser)]
#[command(name = "sonoloc", version, about = "Acoustic source mapping toolkit")]
struct Cli {
    /// TOML config; defaults to the built-in preset for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config's base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the config's estimator.
    #[arg(long, global = true, value_enum)]
    estimator: Option<EstimatorArg>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Pipeline,
    SrpPhat,
}

#[derive(Subcommand)]
enum Command {
    /// Render the configured scene: recording.wav, truth.csv, scene.json.
    Synth,
    /// Estimate per-block directions of arrival into estimates.csv.
    Doa,
    /// Score each block against the spectral template into detection.csv.
    Detect,
    /// Fuse detection-gated bearings into localization.json.
    Localize,
    /// Run a full scenario end to end into the output directory.
    Experiment {
        #[command(subcommand)]
        kind: ExperimentKind,
    },
    /// Build plot-ready tables under report/ from an experiment directory.
    Report,
    /// Print a full configuration to stdout.
    Defaults {
        /// Print the dynamic drive-by preset instead of the static rotation.
        #[arg(long)]
        dynamic: bool,
    },
}

#[derive(Subcommand, Clone, Copy)]
enum ExperimentKind {
    /// Static platform sweeping headings past a fixed source.
    Static,
    /// Platform driving past an intermittent leak.
    Dynamic,
}

pub fn run() {
    let cli = Cli::parse();
    if let Err(e) = execute(cli) {
        let (code, exit) = e.code();
        eprintln!("error[{code}]: {e}");
        std::process::exit(exit);
    }
}

fn info(msg: std::fmt::Arguments) {
    if !matches!(
        std::env::var("SONOLOC_LOG").as_deref(),
        Ok("quiet") | Ok("off")
    ) {
        eprintln!("[sonoloc] {msg}");
    }
}

macro_rules! info {
    ($($arg:tt)*) => { info(format_args!($($arg)*)) };
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => match &cli.cmd {
            Command::Experiment {
                kind: ExperimentKind::Dynamic,
            }
            | Command::Defaults { dynamic: true } => Config::dynamic_experiment(),
            _ => Config::static_experiment(),
        },
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(est) = cli.estimator {
        cfg.estimator.kind = match est {
            EstimatorArg::Pipeline => EstimatorKind::Pipeline,
            EstimatorArg::SrpPhat => EstimatorKind::SrpPhat,
        };
    }
    cfg.validate()?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.out));
    match cli.cmd {
        Command::Synth => cmd_synth(&cfg, &out),
        Command::Doa => cmd_doa(&cfg, &out),
        Command::Detect => cmd_detect(&cfg, &out),
        Command::Localize => cmd_localize(&cfg, &out),
        Command::Experiment { kind } => cmd_experiment(&cfg, &out, kind),
        Command::Report => cmd_report(&cfg, &out),
        Command::Defaults { .. } => {
            print!("{}", cfg.to_toml_string());
            Ok(())
        }
    }
}

fn artifact(out: &Path, name: &str) -> PathBuf {
    out.join(name)
}

fn load_recording(out: &Path) -> Result<MultichannelRecording> {
    let path = artifact(out, report::RECORDING_FILE);
    if !path.exists() {
        return Err(Error::MissingArtifact(format!(
            "{} (run `synth` first)",
            path.display()
        )));
    }
    read_wav(&path)
}

fn cmd_synth(cfg: &Config, out: &Path) -> Result<()> {
    let scene = cfg.scene()?;
    let duration = cfg.duration_s(&scene)?;
    info!(
        "rendering {:.1} s x {} ch at {} Hz (seed {})",
        duration,
        scene.geometry.n_mics(),
        cfg.synth.sample_rate,
        cfg.seed
    );
    let rec = render(&scene, cfg.synth.sample_rate, duration, cfg.seed)?;
    std::fs::create_dir_all(out)?;
    write_wav(&artifact(out, report::RECORDING_FILE), &rec)?;
    let times = block_centers(
        rec.len(),
        rec.sample_rate,
        rec.start_time,
        cfg.framing.block_len_s,
    );
    report::write_truth_csv(
        &artifact(out, report::TRUTH_FILE),
        &report::truth_records(&scene, &times),
    )?;
    report::write_scene_json(
        &artifact(out, report::SCENE_FILE),
        &SceneInfo {
            sample_rate: cfg.synth.sample_rate,
            duration_s: duration,
            seed: cfg.seed,
            snr_db: scene.noise_snr_db,
            leak_index: scene.leak_index,
            source_positions: scene.sources.iter().map(|s| s.position).collect(),
        },
    )?;
    info!("wrote {}", out.display());
    Ok(())
}

fn cmd_doa(cfg: &Config, out: &Path) -> Result<()> {
    let rec = load_recording(out)?;
    let geometry = cfg.geometry()?;
    let pcfg = cfg.pipeline_config()?;
    info!(
        "estimating {} blocks with {}",
        block_centers(rec.len(), rec.sample_rate, 0.0, cfg.framing.block_len_s).len(),
        cfg.estimator.kind
    );
    let blocks = match cfg.estimator.kind {
        EstimatorKind::Pipeline => doa_pipeline(&rec, &geometry, &pcfg)?,
        EstimatorKind::SrpPhat => srp_pipeline(&rec, &geometry, &pcfg)?,
    };
    report::write_estimates_csv(
        &artifact(out, report::ESTIMATES_FILE),
        &blocks,
        &cfg.estimator.kind.to_string(),
    )?;
    info!("wrote {}", artifact(out, report::ESTIMATES_FILE).display());
    Ok(())
}

/// Template reference: an explicitly configured recording, or a clean render
/// of the scenario's tracked source alone (no noise, no motion, no gaps).
fn template(cfg: &Config) -> Result<SpectralTemplate> {
    let spec = cfg.frame_spec()?;
    let band = (cfg.detect.band_hz[0], cfg.detect.band_hz[1]);
    let reference = match &cfg.detect.template_wav {
        Some(path) => read_wav(Path::new(path))?,
        None => {
            let scene = cfg.scene()?;
            let target = scene.leak_index.unwrap_or(0);
            let mut source = scene.sources[target].clone();
            source.mute.clear();
            let reference_scene = Scene {
                sources: vec![source],
                noise_snr_db: None,
                geometry: scene.geometry.clone(),
                motion: Motion::Static(scene.pose_at(0.0)),
                leak_index: Some(0),
                duration_hint: None,
            };
            render(
                &reference_scene,
                cfg.synth.sample_rate,
                REFERENCE_LEN_S,
                cfg.seed.wrapping_add(1),
            )?
        }
    };
    let template = build_template(&reference, band, &spec)?;
    if template.low_contrast {
        info!(
            "template contrast {:.2} dB is low; scores may be unreliable",
            template.contrast_db
        );
    }
    Ok(template)
}

fn cmd_detect(cfg: &Config, out: &Path) -> Result<()> {
    let rec = load_recording(out)?;
    let template = template(cfg)?;
    let series = detection_series(
        &rec,
        &cfg.frame_spec()?,
        cfg.framing.block_len_s,
        &template,
        cfg.detect.threshold,
    )?;
    report::write_detection_csv(&artifact(out, report::DETECTION_FILE), &series)?;
    info!(
        "wrote {} ({} of {} blocks active)",
        artifact(out, report::DETECTION_FILE).display(),
        series.points.iter().filter(|p| p.active).count(),
        series.points.len()
    );
    Ok(())
}

fn find_truth(truth: &[TruthRecord], time: F) -> Result<&TruthRecord> {
    truth
        .iter()
        .find(|r| (r.time - time).abs() <= 1e-6)
        .ok_or_else(|| Error::Misaligned(format!("no truth record at {time:.6} s")))
}

fn cmd_localize(cfg: &Config, out: &Path) -> Result<()> {
    let (blocks, estimator) = report::read_estimates_csv(&artifact(out, report::ESTIMATES_FILE))?;
    let series = report::read_detection_csv(
        &artifact(out, report::DETECTION_FILE),
        cfg.detect.threshold,
    )?;
    let truth = report::read_truth_csv(&artifact(out, report::TRUTH_FILE))?;
    // Align the strongest estimate of each block with the detection series;
    // blocks that produced no estimate stay as empty placeholders.
    let aligned: Vec<Vec<DoaEstimate>> = series
        .points
        .iter()
        .map(|p| {
            blocks
                .iter()
                .find(|b| {
                    b.first()
                        .is_some_and(|e| (e.block_time - p.time).abs() <= 1e-6)
                })
                .map(|b| vec![b[0]])
                .unwrap_or_default()
        })
        .collect();
    let gated = gate(&aligned, &series, cfg.detect.threshold)?;
    if gated.is_empty() {
        return Err(Error::InsufficientGeometry(format!(
            "no block passed the detection gate at threshold {}; lower \
             detect.threshold or check the template",
            cfg.detect.threshold
        )));
    }
    let observations = gated
        .iter()
        .map(|e| {
            let rec = find_truth(&truth, e.block_time)?;
            Ok(BearingObservation::new(
                rec.pose,
                to_global_bearing(&rec.pose, e.azimuth_deg),
                1.0,
                e.block_time,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let est = localize_source(&observations)?;
    let scene_path = artifact(out, report::SCENE_FILE);
    let truth_xy = if scene_path.exists() {
        let info = report::read_scene_json(&scene_path)?;
        let target = info.leak_index.unwrap_or(0);
        info.source_positions.get(target).map(|p| [p[0], p[1]])
    } else {
        None
    };
    let rep = LocalizationReport::new(&estimator, observations.len(), &est, truth_xy);
    report::write_localization_json(&artifact(out, report::LOCALIZATION_FILE), &rep)?;
    match rep.error_m {
        Some(err) => info!(
            "source at ({:.2}, {:.2}) m, dispersion {:.2} m, error {err:.2} m",
            rep.x_m, rep.y_m, rep.dispersion_m
        ),
        None => info!(
            "source at ({:.2}, {:.2}) m, dispersion {:.2} m",
            rep.x_m, rep.y_m, rep.dispersion_m
        ),
    }
    Ok(())
}

fn cmd_report(cfg: &Config, out: &Path) -> Result<()> {
    let rec = load_recording(out)?;
    let truth = report::read_truth_csv(&artifact(out, report::TRUTH_FILE))?;
    let (blocks, _) = report::read_estimates_csv(&artifact(out, report::ESTIMATES_FILE))?;
    let series = report::read_detection_csv(
        &artifact(out, report::DETECTION_FILE),
        cfg.detect.threshold,
    )?;
    let dir = artifact(out, report::REPORT_DIR);
    std::fs::create_dir_all(&dir)?;
    let sg = report::decimate_spectrogram(
        &power_spectrogram(&rec, &cfg.frame_spec()?)?,
        SPECTROGRAM_MAX_TIMES,
        SPECTROGRAM_MAX_FREQS,
    );
    report::write_spectrogram_csv(&dir.join("spectrogram.csv"), &sg)?;
    let scene_path = artifact(out, report::SCENE_FILE);
    let target = if scene_path.exists() {
        report::read_scene_json(&scene_path)?.leak_index.unwrap_or(0)
    } else {
        0
    };
    let errors =
        report::write_doa_vs_truth_csv(&dir.join("doa_vs_truth.csv"), &blocks, &truth, target)?;
    report::write_detection_overlay_csv(&dir.join("detection_overlay.csv"), &series, &truth)?;
    if !errors.is_empty() {
        let summary = error_summary(&errors)?;
        report::write_cdf_csv(&dir.join("cdf.csv"), ("error_deg", "fraction"), &summary.cdf)?;
        info!(
            "bearing error median {:.2} deg, p95 {:.2} deg over {} blocks",
            summary.median,
            summary.p95,
            errors.len()
        );
    }
    info!("wrote {}", dir.display());
    Ok(())
}

fn cmd_experiment(cfg: &Config, out: &Path, kind: ExperimentKind) -> Result<()> {
    cmd_synth(cfg, out)?;
    cmd_doa(cfg, out)?;
    cmd_detect(cfg, out)?;
    // Bearing rays from a platform that never translates all share one
    // origin, so localization only runs for scenarios with motion.
    let localizable = matches!(cfg.scenario, ScenarioConfig::LinearDrive { .. });
    match kind {
        ExperimentKind::Static => {}
        ExperimentKind::Dynamic => {
            if localizable {
                cmd_localize(cfg, out)?;
            } else {
                info!("scenario has no platform translation; skipping localization");
            }
        }
    }
    cmd_report(cfg, out)
}
