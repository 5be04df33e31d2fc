//! Run-directory artifacts: deterministic CSV/JSON writers and parsers.
//!
//! All numeric fields are written with six decimal places so a rerun with the
//! same seed produces byte-identical files. Parsers validate headers and
//! report the offending file and line on error.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detect::{DetectionPoint, DetectionSeries};
use crate::doa::DoaEstimate;
use crate::localize::{circular_error, Pose2D, SourcePositionEstimate};
use crate::spectra::Spectrogram;
use crate::synth::Scene;
use crate::{Error, Result, F};

pub const TRUTH_FILE: &str = "truth.csv";
pub const RECORDING_FILE: &str = "recording.wav";
pub const SCENE_FILE: &str = "scene.json";
pub const ESTIMATES_FILE: &str = "estimates.csv";
pub const DETECTION_FILE: &str = "detection.csv";
pub const LOCALIZATION_FILE: &str = "localization.json";
pub const CDF_FILE: &str = "cdf.csv";
pub const REPORT_DIR: &str = "report";

/// Ground truth sampled at block centers.
#[derive(Debug, Clone)]
pub struct TruthRecord {
    pub time: F,
    pub pose: Pose2D,
    /// Array-relative azimuth of every scene source, degrees.
    pub source_azimuths_deg: Vec<F>,
    pub leak_active: bool,
}

/// Sample the scene's ground truth at the given times (block centers).
pub fn truth_records(scene: &Scene, times: &[F]) -> Vec<TruthRecord> {
    times
        .iter()
        .map(|&t| TruthRecord {
            time: t,
            pose: scene.pose_at(t),
            source_azimuths_deg: (0..scene.sources.len())
                .map(|s| scene.relative_azimuth(t, s))
                .collect(),
            leak_active: scene.leak_active(t),
        })
        .collect()
}

fn num(x: F) -> String {
    format!("{x:.6}")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn read_csv(path: &Path, expected_header_prefix: &str) -> Result<Vec<Vec<String>>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(format!("{}", path.display())));
    }
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if !header.starts_with(expected_header_prefix) {
        return Err(Error::InvalidArgument(format!(
            "{}: header {header:?} does not start with {expected_header_prefix:?}",
            path.display()
        )));
    }
    Ok(lines
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect())
}

fn parse_f(path: &Path, row: usize, field: &str) -> Result<F> {
    field.parse::<F>().map_err(|_| {
        Error::InvalidArgument(format!(
            "{} row {}: {field:?} is not a number",
            path.display(),
            row + 1
        ))
    })
}

fn parse_flag(path: &Path, row: usize, field: &str) -> Result<bool> {
    match field {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(Error::InvalidArgument(format!(
            "{} row {}: {field:?} is not 0 or 1",
            path.display(),
            row + 1
        ))),
    }
}

pub fn write_truth_csv(path: &Path, records: &[TruthRecord]) -> Result<()> {
    let n_src = records.first().map_or(0, |r| r.source_azimuths_deg.len());
    let mut text = String::from("time,x_m,y_m,heading_deg");
    for s in 0..n_src {
        let _ = write!(text, ",azimuth_src{s}_deg");
    }
    text.push_str(",leak_active\n");
    for r in records {
        let _ = write!(
            text,
            "{},{},{},{}",
            num(r.time),
            num(r.pose.x),
            num(r.pose.y),
            num(r.pose.heading_deg)
        );
        for a in &r.source_azimuths_deg {
            let _ = write!(text, ",{}", num(*a));
        }
        let _ = writeln!(text, ",{}", r.leak_active as u8);
    }
    write_text(path, &text)
}

pub fn read_truth_csv(path: &Path) -> Result<Vec<TruthRecord>> {
    let rows = read_csv(path, "time,x_m,y_m,heading_deg")?;
    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        if row.len() < 5 {
            return Err(Error::InvalidArgument(format!(
                "{} row {}: expected at least 5 fields, got {}",
                path.display(),
                i + 1,
                row.len()
            )));
        }
        let n_src = row.len() - 5;
        out.push(TruthRecord {
            time: parse_f(path, i, &row[0])?,
            pose: Pose2D::new(
                parse_f(path, i, &row[1])?,
                parse_f(path, i, &row[2])?,
                parse_f(path, i, &row[3])?,
            ),
            source_azimuths_deg: (0..n_src)
                .map(|s| parse_f(path, i, &row[4 + s]))
                .collect::<Result<_>>()?,
            leak_active: parse_flag(path, i, &row[row.len() - 1])?,
        });
    }
    Ok(out)
}

pub fn write_estimates_csv(
    path: &Path,
    blocks: &[Vec<DoaEstimate>],
    estimator: &str,
) -> Result<()> {
    let mut text = String::from("time,azimuth_deg,elevation_deg,power,estimator\n");
    for block in blocks {
        for e in block {
            let _ = writeln!(
                text,
                "{},{},{},{},{estimator}",
                num(e.block_time),
                num(e.azimuth_deg),
                num(e.elevation_deg),
                num(e.power)
            );
        }
    }
    write_text(path, &text)
}

/// Read estimates back, regrouped into blocks by identical timestamps.
/// Returns the blocks and the estimator tag.
pub fn read_estimates_csv(path: &Path) -> Result<(Vec<Vec<DoaEstimate>>, String)> {
    let rows = read_csv(path, "time,azimuth_deg,elevation_deg,power,estimator")?;
    let mut blocks: Vec<Vec<DoaEstimate>> = Vec::new();
    let mut last_time: Option<String> = None;
    let mut estimator = String::new();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != 5 {
            return Err(Error::InvalidArgument(format!(
                "{} row {}: expected 5 fields, got {}",
                path.display(),
                i + 1,
                row.len()
            )));
        }
        let est = DoaEstimate {
            block_time: parse_f(path, i, &row[0])?,
            azimuth_deg: parse_f(path, i, &row[1])?,
            elevation_deg: parse_f(path, i, &row[2])?,
            power: parse_f(path, i, &row[3])?,
        };
        if estimator.is_empty() {
            estimator = row[4].clone();
        }
        if last_time.as_deref() == Some(row[0].as_str()) {
            blocks.last_mut().unwrap().push(est);
        } else {
            blocks.push(vec![est]);
            last_time = Some(row[0].clone());
        }
    }
    Ok((blocks, estimator))
}

pub fn write_detection_csv(path: &Path, series: &DetectionSeries) -> Result<()> {
    let mut text = String::from("time,score,active\n");
    for p in &series.points {
        let _ = writeln!(text, "{},{},{}", num(p.time), num(p.score), p.active as u8);
    }
    write_text(path, &text)
}

pub fn read_detection_csv(path: &Path, threshold: F) -> Result<DetectionSeries> {
    let rows = read_csv(path, "time,score,active")?;
    let mut points = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        if row.len() != 3 {
            return Err(Error::InvalidArgument(format!(
                "{} row {}: expected 3 fields, got {}",
                path.display(),
                i + 1,
                row.len()
            )));
        }
        points.push(DetectionPoint {
            time: parse_f(path, i, &row[0])?,
            score: parse_f(path, i, &row[1])?,
            active: parse_flag(path, i, &row[2])?,
        });
    }
    Ok(DetectionSeries { points, threshold })
}

/// Scene metadata written next to the recording so downstream commands can
/// compare against the true source positions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneInfo {
    pub sample_rate: F,
    pub duration_s: F,
    pub seed: u64,
    pub snr_db: Option<F>,
    pub leak_index: Option<usize>,
    pub source_positions: Vec<[F; 3]>,
}

pub fn write_scene_json(path: &Path, info: &SceneInfo) -> Result<()> {
    let text = serde_json::to_string_pretty(info).expect("scene info serializes");
    write_text(path, &(text + "\n"))
}

pub fn read_scene_json(path: &Path) -> Result<SceneInfo> {
    if !path.exists() {
        return Err(Error::MissingArtifact(format!("{}", path.display())));
    }
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub estimator: String,
    /// Gated bearing observations that fed the solver.
    pub n_observations: usize,
    pub intersections_used: usize,
    pub degenerate_pairs: usize,
    pub x_m: F,
    pub y_m: F,
    pub dispersion_m: F,
    /// Distance to the true source position, when the scene truth is known.
    pub error_m: Option<F>,
}

impl LocalizationReport {
    pub fn new(
        estimator: &str,
        n_observations: usize,
        est: &SourcePositionEstimate,
        truth: Option<[F; 2]>,
    ) -> Self {
        Self {
            estimator: estimator.to_owned(),
            n_observations,
            intersections_used: est.intersections_used,
            degenerate_pairs: est.degenerate_pairs,
            x_m: est.point[0],
            y_m: est.point[1],
            dispersion_m: est.dispersion,
            error_m: truth.map(|t| {
                ((est.point[0] - t[0]).powi(2) + (est.point[1] - t[1]).powi(2)).sqrt()
            }),
        }
    }
}

pub fn write_localization_json(path: &Path, report: &LocalizationReport) -> Result<()> {
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    write_text(path, &(text + "\n"))
}

/// Empirical CDF as (value, cumulative fraction) rows.
pub fn write_cdf_csv(path: &Path, header: (&str, &str), cdf: &[(F, F)]) -> Result<()> {
    let mut text = format!("{},{}\n", header.0, header.1);
    for (v, p) in cdf {
        let _ = writeln!(text, "{},{}", num(*v), num(*p));
    }
    write_text(path, &text)
}

/// Max-pool a spectrogram down to at most `max_times` x `max_freqs` cells so
/// report tables stay small. Pool cell times/frequencies are group centers.
pub fn decimate_spectrogram(sg: &Spectrogram, max_times: usize, max_freqs: usize) -> Spectrogram {
    let nt = sg.times.len();
    let nf = sg.freqs.len();
    let mt = max_times.max(1).min(nt);
    let mf = max_freqs.max(1).min(nf);
    let t_bounds: Vec<usize> = (0..=mt).map(|g| g * nt / mt).collect();
    let f_bounds: Vec<usize> = (0..=mf).map(|g| g * nf / mf).collect();
    let mut times = Vec::with_capacity(mt);
    let mut freqs = Vec::with_capacity(mf);
    let mut db = ndarray::Array2::zeros((mt, mf));
    for gt in 0..mt {
        let (t0, t1) = (t_bounds[gt], t_bounds[gt + 1]);
        times.push(sg.times[(t0 + t1 - 1) / 2]);
        for gf in 0..mf {
            let (f0, f1) = (f_bounds[gf], f_bounds[gf + 1]);
            if gt == 0 {
                freqs.push(sg.freqs[(f0 + f1 - 1) / 2]);
            }
            let mut v = F::NEG_INFINITY;
            for t in t0..t1 {
                for f in f0..f1 {
                    v = v.max(sg.db[[t, f]]);
                }
            }
            db[[gt, gf]] = v;
        }
    }
    Spectrogram { times, freqs, db }
}

/// Long-format spectrogram table: one row per (time, frequency) cell.
pub fn write_spectrogram_csv(path: &Path, sg: &Spectrogram) -> Result<()> {
    let mut text = String::from("time,freq_hz,power_db\n");
    for (ti, t) in sg.times.iter().enumerate() {
        for (fi, f) in sg.freqs.iter().enumerate() {
            let _ = writeln!(text, "{},{},{}", num(*t), num(*f), num(sg.db[[ti, fi]]));
        }
    }
    write_text(path, &text)
}

/// Strongest estimate per block against the true azimuth of the tracked
/// source. Returns the circular errors, one per written row.
pub fn write_doa_vs_truth_csv(
    path: &Path,
    blocks: &[Vec<DoaEstimate>],
    truth: &[TruthRecord],
    source: usize,
) -> Result<Vec<F>> {
    let mut text = String::from("time,azimuth_deg,true_azimuth_deg,error_deg\n");
    let mut errors = Vec::new();
    for block in blocks {
        let Some(best) = block.first() else { continue };
        let Some(rec) = truth
            .iter()
            .find(|r| (r.time - best.block_time).abs() <= 1e-6)
        else {
            return Err(Error::Misaligned(format!(
                "no truth record at block time {:.6}",
                best.block_time
            )));
        };
        let true_az = *rec.source_azimuths_deg.get(source).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "truth has {} sources, wanted index {source}",
                rec.source_azimuths_deg.len()
            ))
        })?;
        let err = circular_error(best.azimuth_deg, true_az);
        let _ = writeln!(
            text,
            "{},{},{},{}",
            num(best.block_time),
            num(best.azimuth_deg),
            num(true_az),
            num(err)
        );
        errors.push(err);
    }
    write_text(path, &text)?;
    Ok(errors)
}

/// Detection score series joined with the true emission flag.
pub fn write_detection_overlay_csv(
    path: &Path,
    series: &DetectionSeries,
    truth: &[TruthRecord],
) -> Result<()> {
    if series.points.len() != truth.len() {
        return Err(Error::Misaligned(format!(
            "{} detection points vs {} truth records",
            series.points.len(),
            truth.len()
        )));
    }
    let mut text = String::from("time,score,active,leak_active\n");
    for (p, r) in series.points.iter().zip(truth) {
        if (p.time - r.time).abs() > 1e-6 {
            return Err(Error::Misaligned(format!(
                "detection at {:.6} s vs truth at {:.6} s",
                p.time, r.time
            )));
        }
        let _ = writeln!(
            text,
            "{},{},{},{}",
            num(p.time),
            num(p.score),
            p.active as u8,
            r.leak_active as u8
        );
    }
    write_text(path, &text)
}
