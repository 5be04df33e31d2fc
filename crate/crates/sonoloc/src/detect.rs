//! Spectral-template leak detection. A template is the band-restricted,
//! mean-subtracted, unit-normalized average log-magnitude spectrum of a
//! reference recording; a block scores as the inner product between its own
//! normalized spectrum and the template. Mean subtraction in the dB domain
//! makes the score invariant to global gain, and identical normalization on
//! both sides makes it symmetric under swapping reference and block.

use crate::spectra::{stft, FrameSpec, Stft};
use crate::synth::MultichannelRecording;
use crate::{Error, Result, F};

/// Template contrast below this RMS (dB per bin, before normalization)
/// marks the reference as spectrally flat and the template as unreliable.
pub const LOW_CONTRAST_DB: F = 1.0;

#[derive(Debug, Clone)]
pub struct SpectralTemplate {
    /// Band the weights cover, Hz.
    pub band: (F, F),
    /// Bin center frequencies, Hz; fixes the layout scores must match.
    pub bin_freqs: Vec<F>,
    /// Zero-mean, unit-norm weights (all zero for a flat reference).
    pub weights: Vec<F>,
    /// RMS contrast of the reference spectrum in dB per bin.
    pub contrast_db: F,
    /// Set when the reference was too flat to carry a signature.
    pub low_contrast: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct DetectionPoint {
    /// Block center, seconds.
    pub time: F,
    pub score: F,
    pub active: bool,
}

#[derive(Debug, Clone)]
pub struct DetectionSeries {
    pub points: Vec<DetectionPoint>,
    pub threshold: F,
}

/// Per-bin average of the log-magnitude spectrum over all frames and
/// channels, restricted to `band`.
fn band_log_spectrum(st: &Stft, band: (F, F)) -> Result<(Vec<F>, Vec<F>)> {
    let bins = st.band_bins(band);
    if bins.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "band [{}, {}] Hz contains no bins at resolution {:.3} Hz",
            band.0,
            band.1,
            st.bin_hz()
        )));
    }
    let t = st.n_frames();
    let m = st.n_channels();
    let scale = 1.0 / (t * m) as F;
    let mut freqs = Vec::with_capacity(bins.len());
    let mut db = Vec::with_capacity(bins.len());
    for k in bins {
        let mut acc = 0.0;
        for f in 0..t {
            for c in 0..m {
                acc += 10.0 * (st.data[[f, k, c]].norm_sqr() + 1e-30).log10();
            }
        }
        freqs.push(st.bin_frequency(k));
        db.push(acc * scale);
    }
    Ok((freqs, db))
}

fn normalize(mut v: Vec<F>) -> (Vec<F>, F) {
    let mean = v.iter().sum::<F>() / v.len() as F;
    for x in &mut v {
        *x -= mean;
    }
    let norm = v.iter().map(|x| x * x).sum::<F>().sqrt();
    if norm > 1e-12 {
        for x in &mut v {
            *x /= norm;
        }
    } else {
        v.iter_mut().for_each(|x| *x = 0.0);
    }
    (v, norm)
}

/// Build a template from a reference recording of the target signature.
pub fn build_template(
    reference: &MultichannelRecording,
    band: (F, F),
    spec: &FrameSpec,
) -> Result<SpectralTemplate> {
    let st = stft(reference, spec)?;
    if st.n_frames() < 10 {
        return Err(Error::InvalidArgument(format!(
            "reference has {} frames; a template needs at least 10",
            st.n_frames()
        )));
    }
    let (bin_freqs, db) = band_log_spectrum(&st, band)?;
    let n = db.len() as F;
    let (weights, norm) = normalize(db);
    let contrast_db = norm / n.sqrt();
    Ok(SpectralTemplate {
        band,
        bin_freqs,
        weights,
        contrast_db,
        low_contrast: contrast_db < LOW_CONTRAST_DB,
    })
}

/// Inner-product score of a block's log-magnitude spectrum against a
/// template; the operand is normalized exactly like the template was, so
/// the score lies in [-1, 1].
pub fn detection_feature(block_spectrum_db: &[F], template: &SpectralTemplate) -> Result<F> {
    if block_spectrum_db.len() != template.weights.len() {
        return Err(Error::Misaligned(format!(
            "block spectrum has {} bins but the template has {}",
            block_spectrum_db.len(),
            template.weights.len()
        )));
    }
    let (v, _) = normalize(block_spectrum_db.to_vec());
    let score: F = v.iter().zip(&template.weights).map(|(a, b)| a * b).sum();
    Ok(score.clamp(-1.0, 1.0))
}

/// Score every whole block of a recording against the template. Blocks use
/// the same slicing as the DoA estimators so timestamps line up for gating.
pub fn detection_series(
    rec: &MultichannelRecording,
    spec: &FrameSpec,
    block_len_s: F,
    template: &SpectralTemplate,
    threshold: F,
) -> Result<DetectionSeries> {
    let block_samples = (block_len_s * rec.sample_rate).round() as usize;
    if block_samples < spec.frame_len {
        return Err(Error::InvalidArgument(format!(
            "block of {block_samples} samples is shorter than one {}-sample frame",
            spec.frame_len
        )));
    }
    let n_blocks = rec.len() / block_samples;
    let mut points = Vec::with_capacity(n_blocks);
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
        let st = stft(&block, spec)?;
        let (bin_freqs, db) = band_log_spectrum(&st, template.band)?;
        if bin_freqs.len() != template.bin_freqs.len()
            || bin_freqs
                .iter()
                .zip(&template.bin_freqs)
                .any(|(a, b)| (a - b).abs() > 1e-9)
        {
            return Err(Error::Misaligned(
                "block bin frequencies do not match the template layout".into(),
            ));
        }
        let score = detection_feature(&db, template)?;
        points.push(DetectionPoint {
            time: rec.start_time + (s0 + block_samples / 2) as F / rec.sample_rate,
            score,
            active: score > threshold,
        });
    }
    Ok(DetectionSeries { points, threshold })
}

/// Keep only DoA estimates from blocks whose detection score exceeds the
/// threshold. Estimate blocks and detection points must be the same blocks:
/// equal counts and matching timestamps.
pub fn gate(
    estimate_blocks: &[Vec<crate::doa::DoaEstimate>],
    series: &DetectionSeries,
    threshold: F,
) -> Result<Vec<crate::doa::DoaEstimate>> {
    if estimate_blocks.len() != series.points.len() {
        return Err(Error::Misaligned(format!(
            "{} estimate blocks vs {} detection points",
            estimate_blocks.len(),
            series.points.len()
        )));
    }
    let mut kept = Vec::new();
    for (ests, point) in estimate_blocks.iter().zip(&series.points) {
        for e in ests {
            if (e.block_time - point.time).abs() > 1e-6 {
                return Err(Error::Misaligned(format!(
                    "estimate at {} s vs detection block at {} s",
                    e.block_time, point.time
                )));
            }
            if point.score > threshold {
                kept.push(*e);
            }
        }
    }
    Ok(kept)
}
