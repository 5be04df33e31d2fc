//! Python bindings for the sonoloc acoustic inspection toolkit.
//!
//! Build with `cargo build -p sonoloc-py` (or `--release`); the produced
//! `libsonoloc_py.so` imports as `sonoloc_py` once renamed, which
//! `python/smoke_test.py` automates. Errors from the core library surface
//! as `ValueError` with the library's message text.

use std::path::Path;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use sonoloc::array::{make_uca, ArrayGeometry};
use sonoloc::config::Config;
use sonoloc::detect::{build_template, detection_series};
use sonoloc::doa::{block_centers, doa_pipeline, srp_pipeline, AngleGrid, PipelineConfig};
use sonoloc::localize::{
    error_summary, localize_source, to_global_bearing, BearingObservation, Pose2D,
};
use sonoloc::spectra::{FrameSpec, Window};
use sonoloc::synth::render;
use sonoloc::wav::{read_wav, write_wav};
use sonoloc::F;

fn py_err(e: sonoloc::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Microphone array geometry plus the steering model built on it.
#[pyclass(from_py_object)]
#[derive(Clone)]
struct Geometry {
    inner: ArrayGeometry,
}

#[pymethods]
impl Geometry {
    /// Arbitrary microphone positions in meters with a speed of sound in m/s.
    #[new]
    #[pyo3(signature = (positions, speed_of_sound = 343.0))]
    fn new(positions: Vec<(F, F, F)>, speed_of_sound: F) -> PyResult<Self> {
        let positions = positions.into_iter().map(|(x, y, z)| [x, y, z]).collect();
        Ok(Self {
            inner: ArrayGeometry::new(positions, speed_of_sound).map_err(py_err)?,
        })
    }

    /// Uniform circular array in the z = 0 plane, microphone 0 on +x.
    #[staticmethod]
    fn uca(n_mics: usize, radius_m: F) -> PyResult<Self> {
        Ok(Self {
            inner: make_uca(n_mics, radius_m).map_err(py_err)?,
        })
    }

    #[getter]
    fn n_mics(&self) -> usize {
        self.inner.n_mics()
    }

    #[getter]
    fn positions(&self) -> Vec<(F, F, F)> {
        self.inner
            .positions()
            .iter()
            .map(|p| (p[0], p[1], p[2]))
            .collect()
    }

    /// Upper band edge the subspace pipeline accepts without spatial aliasing.
    #[getter]
    fn spatial_nyquist_hz(&self) -> F {
        self.inner.spatial_nyquist()
    }

    /// Plane-wave arrival delays in seconds relative to the array centroid.
    fn delays(&self, azimuth_deg: F, elevation_deg: F) -> Vec<F> {
        self.inner.delays(azimuth_deg, elevation_deg)
    }

    /// Far-field steering vector as (re, im) pairs, one per microphone.
    fn steering(&self, f_hz: F, azimuth_deg: F, elevation_deg: F) -> Vec<(F, F)> {
        self.inner
            .steering_vector(f_hz, azimuth_deg, elevation_deg)
            .iter()
            .map(|c| (c.re, c.im))
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Geometry(n_mics={}, spatial_nyquist_hz={:.1})",
            self.inner.n_mics(),
            self.inner.spatial_nyquist()
        )
    }
}

/// One per-block direction estimate.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Estimate {
    /// Block center, seconds from the start of the recording.
    #[pyo3(get)]
    time: F,
    #[pyo3(get)]
    azimuth_deg: F,
    #[pyo3(get)]
    elevation_deg: F,
    #[pyo3(get)]
    power: F,
}

#[pymethods]
impl Estimate {
    fn __repr__(&self) -> String {
        format!(
            "Estimate(time={:.3}, azimuth_deg={:.2}, elevation_deg={:.2}, power={:.3e})",
            self.time, self.azimuth_deg, self.elevation_deg, self.power
        )
    }
}

/// One detection-series block: template-correlation score and its verdict.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct DetectionSample {
    #[pyo3(get)]
    time: F,
    #[pyo3(get)]
    score: F,
    #[pyo3(get)]
    active: bool,
}

#[pymethods]
impl DetectionSample {
    fn __repr__(&self) -> String {
        format!(
            "DetectionSample(time={:.3}, score={:.3}, active={})",
            self.time, self.score, self.active
        )
    }
}

/// Bearing-only position fix with its quality counters.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct PositionEstimate {
    #[pyo3(get)]
    x_m: F,
    #[pyo3(get)]
    y_m: F,
    /// Median distance of the surviving ray intersections from the fix, m.
    #[pyo3(get)]
    dispersion_m: F,
    #[pyo3(get)]
    intersections_used: usize,
    #[pyo3(get)]
    degenerate_pairs: usize,
}

#[pymethods]
impl PositionEstimate {
    fn __repr__(&self) -> String {
        format!(
            "PositionEstimate(x_m={:.3}, y_m={:.3}, dispersion_m={:.3}, \
             intersections_used={}, degenerate_pairs={})",
            self.x_m, self.y_m, self.dispersion_m, self.intersections_used, self.degenerate_pairs
        )
    }
}

/// Median, 95th percentile, and empirical CDF of absolute errors.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct ErrorStats {
    #[pyo3(get)]
    median: F,
    #[pyo3(get)]
    p95: F,
    /// (error value, cumulative probability) pairs, non-decreasing to 1.
    #[pyo3(get)]
    cdf: Vec<(F, F)>,
}

#[pymethods]
impl ErrorStats {
    fn __repr__(&self) -> String {
        format!(
            "ErrorStats(median={:.4}, p95={:.4}, n={})",
            self.median,
            self.p95,
            self.cdf.len()
        )
    }
}

/// Smallest absolute angular difference between two bearings, degrees.
#[pyfunction]
fn circular_error(estimate_deg: F, truth_deg: F) -> F {
    sonoloc::localize::circular_error(estimate_deg, truth_deg)
}

/// Summary statistics over absolute angular errors in degrees.
#[pyfunction]
fn summarize_errors(errors: Vec<F>) -> PyResult<ErrorStats> {
    let s = error_summary(&errors).map_err(py_err)?;
    Ok(ErrorStats {
        median: s.median,
        p95: s.p95,
        cdf: s.cdf,
    })
}

/// Bearing-only source position from `(x_m, y_m, heading_deg, azimuth_deg)`
/// observations, where `azimuth_deg` is relative to the platform heading as
/// the DoA estimators report it. Needs bearings from at least two distinct
/// positions; rays from near-parallel or co-located pairs are dropped.
#[pyfunction]
fn localize(observations: Vec<(F, F, F, F)>) -> PyResult<PositionEstimate> {
    let obs: Vec<BearingObservation> = observations
        .iter()
        .enumerate()
        .map(|(i, &(x, y, heading_deg, azimuth_deg))| {
            let pose = Pose2D::new(x, y, heading_deg);
            let bearing = to_global_bearing(&pose, azimuth_deg);
            BearingObservation::new(pose, bearing, 1.0, i as F)
        })
        .collect();
    let est = localize_source(&obs).map_err(py_err)?;
    Ok(PositionEstimate {
        x_m: est.point[0],
        y_m: est.point[1],
        dispersion_m: est.dispersion,
        intersections_used: est.intersections_used,
        degenerate_pairs: est.degenerate_pairs,
    })
}

/// Per-block direction-of-arrival estimates from a multichannel WAV file.
///
/// `estimator` is `"pipeline"` (beamformer guess, coherent-subspace focusing,
/// subspace peak search; the band must stay below the array's spatial
/// Nyquist frequency) or `"srp-phat"` (whitened steered power, any band).
/// Returns one list of estimates per analysis block; the pipeline may report
/// several sources per block, srp-phat exactly one.
#[pyfunction]
#[pyo3(signature = (path, geometry, estimator = "pipeline", band = (200.0, 2000.0),
    frame_len = 4096, hop = 2048, block_len_s = 0.5, az_step_deg = 1.0,
    el_step_deg = 5.0, el_range_deg = (-30.0, 60.0), rho = 0.1))]
#[allow(clippy::too_many_arguments)]
fn doa_wav(
    path: &str,
    geometry: Geometry,
    estimator: &str,
    band: (F, F),
    frame_len: usize,
    hop: usize,
    block_len_s: F,
    az_step_deg: F,
    el_step_deg: F,
    el_range_deg: (F, F),
    rho: F,
) -> PyResult<Vec<Vec<Estimate>>> {
    let rec = read_wav(Path::new(path)).map_err(py_err)?;
    let cfg = PipelineConfig {
        band,
        frame: FrameSpec::new(frame_len, hop, Window::Hann).map_err(py_err)?,
        block_len_s,
        grid: AngleGrid::new(az_step_deg, el_step_deg, el_range_deg).map_err(py_err)?,
        rho,
        ..PipelineConfig::default()
    };
    let blocks = match estimator {
        "pipeline" => doa_pipeline(&rec, &geometry.inner, &cfg),
        "srp-phat" => srp_pipeline(&rec, &geometry.inner, &cfg),
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown estimator {other:?}; use \"pipeline\" or \"srp-phat\""
            )))
        }
    }
    .map_err(py_err)?;
    Ok(blocks
        .into_iter()
        .map(|block| {
            block
                .into_iter()
                .map(|e| Estimate {
                    time: e.block_time,
                    azimuth_deg: e.azimuth_deg,
                    elevation_deg: e.elevation_deg,
                    power: e.power,
                })
                .collect()
        })
        .collect())
}

/// Per-block leak-detection scores for a WAV file against a spectral
/// template built from a clean reference recording of the target.
#[pyfunction]
#[pyo3(signature = (path, template_path, band = (4000.0, 20000.0), threshold = 0.5,
    frame_len = 4096, hop = 2048, block_len_s = 0.5))]
fn detect_wav(
    path: &str,
    template_path: &str,
    band: (F, F),
    threshold: F,
    frame_len: usize,
    hop: usize,
    block_len_s: F,
) -> PyResult<Vec<DetectionSample>> {
    let spec = FrameSpec::new(frame_len, hop, Window::Hann).map_err(py_err)?;
    let reference = read_wav(Path::new(template_path)).map_err(py_err)?;
    let template = build_template(&reference, band, &spec).map_err(py_err)?;
    let rec = read_wav(Path::new(path)).map_err(py_err)?;
    let series = detection_series(&rec, &spec, block_len_s, &template, threshold).map_err(py_err)?;
    Ok(series
        .points
        .into_iter()
        .map(|p| DetectionSample {
            time: p.time,
            score: p.score,
            active: p.active,
        })
        .collect())
}

/// Render a synthetic scene to a multichannel WAV file.
///
/// `config_toml` uses the same schema as the CLI's `--config` file; when
/// omitted, the static-rotation preset (or the drive-by preset with
/// `dynamic=True`) is rendered. Returns a dict with the recording facts and
/// per-block ground truth (`time`, `azimuth_deg` of the target relative to
/// the platform, platform pose, `leak_active`) at the block centers the
/// estimators will use.
#[pyfunction]
#[pyo3(signature = (path, config_toml = None, dynamic = false, seed = None))]
fn render_wav<'py>(
    py: Python<'py>,
    path: &str,
    config_toml: Option<&str>,
    dynamic: bool,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = match config_toml {
        Some(text) => Config::from_toml_str(text).map_err(py_err)?,
        None if dynamic => Config::dynamic_experiment(),
        None => Config::static_experiment(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(py_err)?;
    let scene = cfg.scene().map_err(py_err)?;
    let duration = cfg.duration_s(&scene).map_err(py_err)?;
    let rec = render(&scene, cfg.synth.sample_rate, duration, cfg.seed).map_err(py_err)?;
    write_wav(Path::new(path), &rec).map_err(py_err)?;

    let out = PyDict::new(py);
    out.set_item("sample_rate", rec.sample_rate)?;
    out.set_item("duration_s", duration)?;
    out.set_item("n_channels", rec.channels.len())?;
    out.set_item("seed", cfg.seed)?;
    let blocks = PyList::empty(py);
    for t in block_centers(
        rec.channels[0].len(),
        rec.sample_rate,
        rec.start_time,
        cfg.framing.block_len_s,
    ) {
        let pose = scene.pose_at(t);
        let b = PyDict::new(py);
        b.set_item("time", t)?;
        b.set_item("azimuth_deg", scene.relative_azimuth(t, 0))?;
        b.set_item("leak_active", scene.leak_active(t))?;
        b.set_item("x_m", pose.x)?;
        b.set_item("y_m", pose.y)?;
        b.set_item("heading_deg", pose.heading_deg)?;
        blocks.append(b)?;
    }
    out.set_item("blocks", blocks)?;
    Ok(out)
}

#[pymodule]
fn sonoloc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Geometry>()?;
    m.add_class::<Estimate>()?;
    m.add_class::<DetectionSample>()?;
    m.add_class::<PositionEstimate>()?;
    m.add_class::<ErrorStats>()?;
    m.add_function(wrap_pyfunction!(circular_error, m)?)?;
    m.add_function(wrap_pyfunction!(summarize_errors, m)?)?;
    m.add_function(wrap_pyfunction!(localize, m)?)?;
    m.add_function(wrap_pyfunction!(doa_wav, m)?)?;
    m.add_function(wrap_pyfunction!(detect_wav, m)?)?;
    m.add_function(wrap_pyfunction!(render_wav, m)?)?;
    Ok(())
}
