//! Direction-of-arrival estimation: the two-step wideband pipeline
//! (phase-mode beamformer guess, angle correction, coherent-subspace MUSIC,
//! angle correction) for signals below the spatial Nyquist limit, and
//! SRP-PHAT for broadband signals above it.

mod correction;
mod fdfib;
mod focus;
mod music;
mod srp;

pub use correction::{apply_correction, CorrectionTable};
pub use fdfib::{fdfib_guess, FdfibCandidate};
pub use focus::{css_focus, FocusedCovariance};
pub use music::{estimate_source_count, music_spectrum, source_count_from_matrix, MusicResult};
pub use srp::srp_phat;

use crate::array::ArrayGeometry;
use crate::spectra::{covariance, stft, FrameSpec};
use crate::synth::MultichannelRecording;
use crate::{Error, Result, F};

#[derive(Debug, Clone, Copy)]
pub struct DoaEstimate {
    /// Degrees in [0, 360).
    pub azimuth_deg: F,
    /// Degrees in [-90, 90].
    pub elevation_deg: F,
    /// Spectrum peak value, unitless, >= 0.
    pub power: F,
    /// Block center, seconds from the recording epoch.
    pub block_time: F,
}

/// Search grid over azimuth (full circle) and elevation.
#[derive(Debug, Clone, Copy)]
pub struct AngleGrid {
    pub az_step_deg: F,
    pub el_step_deg: F,
    pub el_range_deg: (F, F),
}

impl AngleGrid {
    pub fn new(az_step_deg: F, el_step_deg: F, el_range_deg: (F, F)) -> Result<Self> {
        if !(az_step_deg > 0.0) || (360.0 / az_step_deg).fract().abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "azimuth step {az_step_deg} deg must divide 360"
            )));
        }
        let span = el_range_deg.1 - el_range_deg.0;
        if span < 0.0 || el_range_deg.0 < -90.0 || el_range_deg.1 > 90.0 {
            return Err(Error::InvalidArgument(format!(
                "elevation range {el_range_deg:?} is invalid"
            )));
        }
        if span > 0.0 && (!(el_step_deg > 0.0) || (span / el_step_deg).fract().abs() > 1e-9) {
            return Err(Error::InvalidArgument(format!(
                "elevation step {el_step_deg} deg must divide the range {el_range_deg:?}"
            )));
        }
        Ok(Self {
            az_step_deg,
            el_step_deg,
            el_range_deg,
        })
    }

    pub fn azimuths(&self) -> Vec<F> {
        let n = (360.0 / self.az_step_deg).round() as usize;
        (0..n).map(|i| i as F * self.az_step_deg).collect()
    }

    pub fn elevations(&self) -> Vec<F> {
        let span = self.el_range_deg.1 - self.el_range_deg.0;
        if span == 0.0 {
            return vec![self.el_range_deg.0];
        }
        let n = (span / self.el_step_deg).round() as usize;
        (0..=n)
            .map(|i| self.el_range_deg.0 + i as F * self.el_step_deg)
            .collect()
    }
}

impl Default for AngleGrid {
    fn default() -> Self {
        Self {
            az_step_deg: 1.0,
            el_step_deg: 5.0,
            el_range_deg: (-30.0, 60.0),
        }
    }
}

/// Quadratic-interpolation offset of a peak from three equally spaced
/// samples, in grid-step units, clamped to half a step.
pub(crate) fn parabolic_offset(left: F, center: F, right: F) -> F {
    let denom = left - 2.0 * center + right;
    if denom >= -1e-300 {
        return 0.0;
    }
    (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Analysis band, Hz; the upper edge must respect the spatial Nyquist
    /// frequency of the array.
    pub band: (F, F),
    pub frame: FrameSpec,
    pub block_len_s: F,
    pub grid: AngleGrid,
    /// Source-count singular value ratio threshold.
    pub rho: F,
    /// Applied to the beamformer guesses before focusing.
    pub correction_pre: CorrectionTable,
    /// Applied to the subspace estimates.
    pub correction_post: CorrectionTable,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            band: (200.0, 2000.0),
            frame: FrameSpec::default(),
            block_len_s: 0.5,
            grid: AngleGrid::default(),
            rho: 0.1,
            correction_pre: CorrectionTable::identity(),
            correction_post: CorrectionTable::identity(),
        }
    }
}

/// Per-block wideband DoA estimation: covariance, beamformer guess,
/// correction, source counting, coherent-subspace focusing at the band's
/// geometric mean, MUSIC peak search, correction. Blocks with degenerate
/// input (e.g. silence) yield empty estimate lists rather than errors.
pub fn doa_pipeline(
    rec: &MultichannelRecording,
    geometry: &ArrayGeometry,
    cfg: &PipelineConfig,
) -> Result<Vec<Vec<DoaEstimate>>> {
    let nyquist = geometry.spatial_nyquist();
    if cfg.band.1 > nyquist + 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "analysis band upper edge {} Hz exceeds the array's spatial Nyquist frequency {:.2} Hz",
            cfg.band.1, nyquist
        )));
    }
    let f0 = (cfg.band.0 * cfg.band.1).sqrt();
    run_blocks(rec, geometry, cfg, |block, block_time| {
        let st = stft(block, &cfg.frame)?;
        let cov = equalize_channel_gains(covariance(&st, cfg.band)?);
        let candidates = fdfib_guess(&cov, geometry, &cfg.grid)?;
        let max_k = (geometry.n_mics().saturating_sub(2)).max(1);
        let mut preliminary: Vec<F> = candidates
            .iter()
            .take(max_k)
            .map(|c| cfg.correction_pre.apply_azimuth(c.azimuth_deg))
            .collect();
        // The focusing transforms are exact only at the anchor directions,
        // so one refocusing pass with anchors recentered on the first
        // subspace estimate removes most of the anchor interpolation bias.
        // Counting runs on the focused matrix, where a wideband source is
        // rank-1; the raw band average would smear it over extra
        // eigenvalues as its steering vector rotates with frequency.
        let mut result = None;
        for _ in 0..2 {
            let focused = css_focus(&cov, geometry, f0, &preliminary)?;
            let k = source_count_from_matrix(&focused.matrix, cfg.rho)?;
            let res = music_spectrum(&focused.matrix, geometry, f0, &cfg.grid, k)?;
            preliminary = res.peaks.iter().map(|p| p.azimuth_deg).collect();
            result = Some(res);
        }
        let result = result.expect("two focusing passes always ran");
        Ok(result
            .peaks
            .iter()
            .map(|p| {
                let mut e = apply_correction(p, &cfg.correction_post);
                e.block_time = block_time;
                e
            })
            .collect())
    })
}

/// Block-center timestamps both pipelines (and the detection series) assign
/// to a recording of `n_samples`. Ground-truth sidecars sampled at these
/// times line up with the per-block outputs exactly.
pub fn block_centers(n_samples: usize, sample_rate: F, start_time: F, block_len_s: F) -> Vec<F> {
    let block_samples = (block_len_s * sample_rate).round() as usize;
    if block_samples == 0 {
        return Vec::new();
    }
    (0..n_samples / block_samples)
        .map(|b| start_time + (b * block_samples + block_samples / 2) as F / sample_rate)
        .collect()
}

/// Per-block broadband steered-power estimation, one estimate per block.
/// Phase whitening removes the spatial-Nyquist restriction, so the analysis
/// band may sit far above the subspace pipeline's limit. Corrections do not
/// apply; they calibrate the beamformer/subspace path.
pub fn srp_pipeline(
    rec: &MultichannelRecording,
    geometry: &ArrayGeometry,
    cfg: &PipelineConfig,
) -> Result<Vec<Vec<DoaEstimate>>> {
    run_blocks(rec, geometry, cfg, |block, block_time| {
        let st = stft(block, &cfg.frame)?;
        let cov = covariance(&st, cfg.band)?;
        let mut est = srp_phat(&cov, geometry, &cfg.grid)?;
        est.block_time = block_time;
        Ok(vec![est])
    })
}

/// Scale each covariance bin to unit diagonal (a coherence matrix). The
/// steering model assumes equal channel magnitudes, but real channels differ
/// (microphone gain spread, 1/r amplitude taper across the array for nearby
/// sources); for a single source the normalization cancels those gains
/// exactly and it never hurts the far-field case.
fn equalize_channel_gains(mut cov: crate::spectra::SpectralCovarianceSet) -> crate::spectra::SpectralCovarianceSet {
    for r in &mut cov.matrices {
        let n = r.nrows();
        let gains: Vec<F> = (0..n).map(|i| r[(i, i)].re.max(0.0).sqrt()).collect();
        if gains.iter().any(|&g| !(g > 1e-15)) {
            continue;
        }
        for i in 0..n {
            for j in 0..n {
                r[(i, j)] /= crate::C::new(gains[i] * gains[j], 0.0);
            }
        }
    }
    cov
}

/// Split a recording into whole analysis blocks and run an estimator on
/// each; a block whose content is degenerate (silence, no usable modes)
/// contributes an empty list instead of failing the run.
fn run_blocks(
    rec: &MultichannelRecording,
    geometry: &ArrayGeometry,
    cfg: &PipelineConfig,
    estimator: impl Fn(&MultichannelRecording, F) -> Result<Vec<DoaEstimate>>,
) -> Result<Vec<Vec<DoaEstimate>>> {
    if rec.n_channels() != geometry.n_mics() {
        return Err(Error::InvalidArgument(format!(
            "recording has {} channels but the array has {} microphones",
            rec.n_channels(),
            geometry.n_mics()
        )));
    }
    let block_samples = (cfg.block_len_s * rec.sample_rate).round() as usize;
    if block_samples < cfg.frame.frame_len {
        return Err(Error::InvalidArgument(format!(
            "block of {block_samples} samples is shorter than one {}-sample frame",
            cfg.frame.frame_len
        )));
    }
    let n_blocks = rec.len() / block_samples;
    let mut out = Vec::with_capacity(n_blocks);
    for b in 0..n_blocks {
        let s0 = b * block_samples;
        let block = MultichannelRecording::new(
            rec.sample_rate,
            rec.channels
                .iter()
                .map(|c| c[s0..s0 + block_samples].to_vec())
                .collect(),
            rec.start_time + s0 as F / rec.sample_rate,
        )?;
        let block_time = rec.start_time + (s0 + block_samples / 2) as F / rec.sample_rate;
        match estimator(&block, block_time) {
            Ok(est) => out.push(est),
            Err(Error::DegenerateInput(_)) => out.push(Vec::new()),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
