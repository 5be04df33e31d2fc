//! Framing, windowed DFT analysis, and per-bin spectral covariance: the
//! shared front end of all estimators.

use crate::synth::MultichannelRecording;
use crate::{Error, Result, C, F};
use nalgebra::DMatrix;
use ndarray::{Array2, Array3};
use rustfft::FftPlanner;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Hann,
    Rect,
}

#[derive(Debug, Clone, Copy)]
pub struct FrameSpec {
    pub frame_len: usize,
    pub hop: usize,
    pub window: Window,
}

impl FrameSpec {
    pub fn new(frame_len: usize, hop: usize, window: Window) -> Result<Self> {
        if !frame_len.is_power_of_two() || frame_len == 0 {
            return Err(Error::InvalidArgument(format!(
                "frame length must be a power of two, got {frame_len}"
            )));
        }
        if hop == 0 || hop > frame_len {
            return Err(Error::InvalidArgument(format!(
                "hop must be in 1..={frame_len}, got {hop}"
            )));
        }
        Ok(Self {
            frame_len,
            hop,
            window,
        })
    }

    pub fn window_samples(&self) -> Vec<F> {
        match self.window {
            Window::Rect => vec![1.0; self.frame_len],
            Window::Hann => (0..self.frame_len)
                .map(|i| {
                    let x = std::f64::consts::PI * i as F / self.frame_len as F;
                    x.sin() * x.sin()
                })
                .collect(),
        }
    }
}

impl Default for FrameSpec {
    fn default() -> Self {
        Self {
            frame_len: 4096,
            hop: 2048,
            window: Window::Hann,
        }
    }
}

/// One-sided short-time spectra of a multichannel recording.
#[derive(Debug, Clone)]
pub struct Stft {
    pub sample_rate: F,
    pub frame_len: usize,
    pub hop: usize,
    /// (frame, bin, channel); bins 0..=frame_len/2.
    pub data: Array3<C>,
    /// Center time of each frame, seconds from the recording epoch.
    pub frame_times: Vec<F>,
}

impl Stft {
    pub fn n_frames(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn n_bins(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn n_channels(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn bin_hz(&self) -> F {
        self.sample_rate / self.frame_len as F
    }

    pub fn bin_frequency(&self, bin: usize) -> F {
        bin as F * self.bin_hz()
    }

    /// Bin indices whose center frequencies lie in [f_lo, f_hi].
    pub fn band_bins(&self, band: (F, F)) -> std::ops::Range<usize> {
        let lo = (band.0 / self.bin_hz()).ceil().max(0.0) as usize;
        let hi_raw = (band.1 / self.bin_hz()).floor() as usize;
        let hi = hi_raw.min(self.n_bins() - 1);
        lo..hi.saturating_add(1).max(lo)
    }
}

/// Windowed DFT frames for every channel. Frame f covers samples
/// [f*hop, f*hop + frame_len); bin k maps to frequency k*fs/frame_len.
pub fn stft(rec: &MultichannelRecording, spec: &FrameSpec) -> Result<Stft> {
    if rec.len() < spec.frame_len {
        return Err(Error::InvalidArgument(format!(
            "recording of {} samples is shorter than one {}-sample frame",
            rec.len(),
            spec.frame_len
        )));
    }
    let n_frames = (rec.len() - spec.frame_len) / spec.hop + 1;
    let n_bins = spec.frame_len / 2 + 1;
    let n_ch = rec.n_channels();
    let window = spec.window_samples();
    let fft = FftPlanner::new().plan_fft_forward(spec.frame_len);
    let mut data = Array3::zeros((n_frames, n_bins, n_ch));
    let mut buf = vec![C::new(0.0, 0.0); spec.frame_len];
    for (m, ch) in rec.channels.iter().enumerate() {
        for f in 0..n_frames {
            let off = f * spec.hop;
            for (b, (s, w)) in buf.iter_mut().zip(ch[off..off + spec.frame_len].iter().zip(&window)) {
                *b = C::new(s * w, 0.0);
            }
            fft.process(&mut buf);
            for k in 0..n_bins {
                data[[f, k, m]] = buf[k];
            }
        }
    }
    let frame_times = (0..n_frames)
        .map(|f| rec.start_time + (f * spec.hop + spec.frame_len / 2) as F / rec.sample_rate)
        .collect();
    Ok(Stft {
        sample_rate: rec.sample_rate,
        frame_len: spec.frame_len,
        hop: spec.hop,
        data,
        frame_times,
    })
}

/// Per-bin Hermitian covariance matrices averaged over frames.
#[derive(Debug, Clone)]
pub struct SpectralCovarianceSet {
    pub bin_freqs: Vec<F>,
    pub matrices: Vec<DMatrix<C>>,
    pub frames_averaged: usize,
}

impl SpectralCovarianceSet {
    pub fn n_mics(&self) -> usize {
        self.matrices.first().map_or(0, |m| m.nrows())
    }

    /// Frame-count-weighted combination with another covariance over the same
    /// bins, equal to the covariance over the union of the frame sets.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.bin_freqs.len() != other.bin_freqs.len()
            || self
                .bin_freqs
                .iter()
                .zip(&other.bin_freqs)
                .any(|(a, b)| (a - b).abs() > 1e-9)
        {
            return Err(Error::Misaligned("covariance bin layouts differ".into()));
        }
        let (ta, tb) = (self.frames_averaged as F, other.frames_averaged as F);
        let total = ta + tb;
        let matrices = self
            .matrices
            .iter()
            .zip(&other.matrices)
            .map(|(a, b)| (a * C::new(ta / total, 0.0)) + (b * C::new(tb / total, 0.0)))
            .collect();
        Ok(Self {
            bin_freqs: self.bin_freqs.clone(),
            matrices,
            frames_averaged: self.frames_averaged + other.frames_averaged,
        })
    }
}

/// R(f_k) = (1/T) sum_t x_t(f_k) x_t(f_k)^H over the frames, for bins in band.
pub fn covariance(stft: &Stft, band: (F, F)) -> Result<SpectralCovarianceSet> {
    if stft.n_frames() == 0 {
        return Err(Error::InvalidArgument("no frames".into()));
    }
    let bins = stft.band_bins(band);
    if bins.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "band [{}, {}] Hz contains no bins at resolution {:.3} Hz",
            band.0,
            band.1,
            stft.bin_hz()
        )));
    }
    let n_ch = stft.n_channels();
    let t = stft.n_frames();
    let scale = C::new(1.0 / t as F, 0.0);
    let mut bin_freqs = Vec::with_capacity(bins.len());
    let mut matrices = Vec::with_capacity(bins.len());
    for k in bins {
        let mut r = DMatrix::<C>::zeros(n_ch, n_ch);
        for f in 0..t {
            for i in 0..n_ch {
                let xi = stft.data[[f, k, i]];
                for j in i..n_ch {
                    r[(i, j)] += xi * stft.data[[f, k, j]].conj();
                }
            }
        }
        for i in 0..n_ch {
            for j in i..n_ch {
                let v = r[(i, j)] * scale;
                r[(i, j)] = v;
                if j != i {
                    r[(j, i)] = v.conj();
                }
            }
        }
        bin_freqs.push(stft.bin_frequency(k));
        matrices.push(r);
    }
    Ok(SpectralCovarianceSet {
        bin_freqs,
        matrices,
        frames_averaged: t,
    })
}

/// Time-frequency magnitude grid in dB, for reports.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    pub times: Vec<F>,
    pub freqs: Vec<F>,
    /// (time, frequency) -> dB magnitude.
    pub db: Array2<F>,
}

pub fn power_spectrogram(rec: &MultichannelRecording, spec: &FrameSpec) -> Result<Spectrogram> {
    let st = stft(rec, spec)?;
    let (n_frames, n_bins, n_ch) = (st.n_frames(), st.n_bins(), st.n_channels());
    let mut db = Array2::zeros((n_frames, n_bins));
    for f in 0..n_frames {
        for k in 0..n_bins {
            let mut p = 0.0;
            for m in 0..n_ch {
                p += st.data[[f, k, m]].norm_sqr();
            }
            db[[f, k]] = 10.0 * (p / n_ch as F + 1e-30).log10();
        }
    }
    Ok(Spectrogram {
        times: st.frame_times.clone(),
        freqs: (0..n_bins).map(|k| st.bin_frequency(k)).collect(),
        db,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn tone_recording(fs: F, f: F, n: usize, delays: &[F]) -> MultichannelRecording {
        let channels = delays
            .iter()
            .map(|d| {
                (0..n)
                    .map(|i| (2.0 * std::f64::consts::PI * f * (i as F / fs - d)).cos())
                    .collect()
            })
            .collect();
        MultichannelRecording::new(fs, channels, 0.0).unwrap()
    }

    #[test]
    fn on_bin_tone_has_no_leakage_with_rect_window() {
        let fs = 48000.0;
        let spec = FrameSpec::new(4096, 4096, Window::Rect).unwrap();
        let f = 32.0 * fs / 4096.0;
        let rec = tone_recording(fs, f, 4096, &[0.0]);
        let st = stft(&rec, &spec).unwrap();
        let peak = st.data[[0, 32, 0]].norm();
        assert!((peak - 2048.0).abs() < 1e-6);
        for k in 0..st.n_bins() {
            if k != 32 {
                let rel = st.data[[0, k, 0]].norm() / peak;
                assert!(
                    rel < 10f64.powf(-250.0 / 20.0),
                    "bin {k} leakage {:.1} dB",
                    20.0 * rel.log10()
                );
            }
        }
    }

    #[test]
    fn parseval_energy_match() {
        let fs = 48000.0;
        let spec = FrameSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let samples: Vec<F> = (0..4096).map(|_| rng.sample::<F, _>(StandardNormal)).collect();
        let rec = MultichannelRecording::new(fs, vec![samples.clone()], 0.0).unwrap();
        let st = stft(&rec, &spec).unwrap();
        let window = spec.window_samples();
        let e_time: F = samples
            .iter()
            .zip(&window)
            .map(|(s, w)| (s * w) * (s * w))
            .sum();
        // one-sided spectrum: interior bins count twice
        let mut e_freq = st.data[[0, 0, 0]].norm_sqr() + st.data[[0, 2048, 0]].norm_sqr();
        for k in 1..2048 {
            e_freq += 2.0 * st.data[[0, k, 0]].norm_sqr();
        }
        e_freq /= 4096.0;
        assert!(
            ((e_time - e_freq) / e_time).abs() < 1e-9,
            "time {e_time} vs freq {e_freq}"
        );
    }

    #[test]
    fn hann_main_lobe_span() {
        let fs = 48000.0;
        let spec = FrameSpec::new(4096, 4096, Window::Hann).unwrap();
        let f = 100.5 * fs / 4096.0; // halfway between bins
        let rec = tone_recording(fs, f, 4096, &[0.0]);
        let st = stft(&rec, &spec).unwrap();
        let mags: Vec<F> = (0..st.n_bins()).map(|k| st.data[[0, k, 0]].norm()).collect();
        // Reference is the continuous lobe-center amplitude (sum(w)/2 for a
        // unit cosine), not the scalloped peak bin, which at a half-bin
        // offset sits 1.4 dB low and would drag the first sidelobes above
        // the -31 dB line.
        let lobe_peak: F = spec.window_samples().iter().sum::<F>() / 2.0;
        let above: Vec<usize> = (0..mags.len())
            .filter(|&k| mags[k] > lobe_peak * 10f64.powf(-31.0 / 20.0))
            .collect();
        let span = above.last().unwrap() - above.first().unwrap() + 1;
        assert!(span <= 4, "main lobe spans {span} bins: {above:?}");
        assert!(above.contains(&100) && above.contains(&101));
    }

    #[test]
    fn covariance_zero_input_and_rank_one_tone() {
        let fs = 48000.0;
        let spec = FrameSpec::new(1024, 512, Window::Rect).unwrap();
        let zero = MultichannelRecording::new(fs, vec![vec![0.0; 4096]; 3], 0.0).unwrap();
        let cov = covariance(&stft(&zero, &spec).unwrap(), (100.0, 4000.0)).unwrap();
        for m in &cov.matrices {
            assert!(m.iter().all(|v| v.norm() == 0.0));
        }

        // far-field tone on an exact bin with arbitrary inter-channel delays:
        // the bin covariance is rank one
        let f = 64.0 * fs / 1024.0;
        let rec = tone_recording(fs, f, 8192, &[0.0, 1.3e-4, 2.9e-4, 7.7e-5, 2.1e-4]);
        let cov = covariance(&stft(&rec, &spec).unwrap(), (f - 1.0, f + 1.0)).unwrap();
        assert_eq!(cov.matrices.len(), 1);
        let sv = cov.matrices[0].clone().svd(false, false).singular_values;
        assert!(
            sv[1] / sv[0] <= 1e-6,
            "singular value ratio {:.3e}",
            sv[1] / sv[0]
        );
    }

    #[test]
    fn white_noise_covariance_approaches_scaled_identity() {
        let fs = 48000.0;
        let spec = FrameSpec::new(256, 128, Window::Hann).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 262144;
        let channels: Vec<Vec<F>> = (0..3)
            .map(|_| (0..n).map(|_| rng.sample::<F, _>(StandardNormal)).collect())
            .collect();
        let rec = MultichannelRecording::new(fs, channels, 0.0).unwrap();
        let st = stft(&rec, &spec).unwrap();
        let t = st.n_frames() as F;
        let cov = covariance(&st, (2000.0, 20000.0)).unwrap();
        for m in &cov.matrices {
            let diag_mean = (m[(0, 0)].re + m[(1, 1)].re + m[(2, 2)].re) / 3.0;
            for i in 0..3 {
                assert!((m[(i, i)].re / diag_mean - 1.0).abs() < 0.2);
                for j in 0..3 {
                    if i != j {
                        let rel = m[(i, j)].norm() / diag_mean;
                        assert!(rel < 4.0 / t.sqrt(), "off-diagonal {rel:.4}");
                    }
                }
            }
        }
    }

    fn random_recording(seed: u64, n: usize, ch: usize) -> MultichannelRecording {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let channels = (0..ch)
            .map(|_| {
                let f1 = 200.0 + rng.random::<F>() * 8000.0;
                let f2 = 200.0 + rng.random::<F>() * 8000.0;
                (0..n)
                    .map(|i| {
                        let t = i as F / 48000.0;
                        (2.0 * std::f64::consts::PI * f1 * t).sin()
                            + 0.5 * (2.0 * std::f64::consts::PI * f2 * t).cos()
                            + 0.3 * rng.sample::<F, _>(StandardNormal)
                    })
                    .collect()
            })
            .collect();
        MultichannelRecording::new(48000.0, channels, 0.0).unwrap()
    }

    #[test]
    fn covariance_is_hermitian_psd_on_random_input() {
        for seed in 0..8u64 {
            let rec = random_recording(seed, 8192, 4);
            let spec = FrameSpec::new(1024, 512, Window::Hann).unwrap();
            let cov = covariance(&stft(&rec, &spec).unwrap(), (100.0, 20000.0)).unwrap();
            for m in &cov.matrices {
                let norm = m.norm();
                let herm_err = (m - m.adjoint()).norm();
                assert!(herm_err <= 1e-9 * norm.max(1e-30));
                let trace = m.trace().re;
                let eig = m.clone().symmetric_eigen();
                for ev in eig.eigenvalues.iter() {
                    assert!(*ev >= -1e-9 * trace.max(1e-30), "eigenvalue {ev:.3e}");
                }
            }
        }
    }

    #[test]
    fn merge_equals_union_covariance() {
        let rec = random_recording(99, 16384, 3);
        let spec = FrameSpec::new(1024, 1024, Window::Hann).unwrap();
        let st = stft(&rec, &spec).unwrap();
        let n_front = 6 * 1024;
        let front = MultichannelRecording::new(
            48000.0,
            rec.channels.iter().map(|c| c[..n_front].to_vec()).collect(),
            0.0,
        )
        .unwrap();
        let back = MultichannelRecording::new(
            48000.0,
            rec.channels.iter().map(|c| c[n_front..].to_vec()).collect(),
            0.0,
        )
        .unwrap();
        let band = (500.0, 9000.0);
        let whole = covariance(&st, band).unwrap();
        let merged = covariance(&stft(&front, &spec).unwrap(), band)
            .unwrap()
            .merge(&covariance(&stft(&back, &spec).unwrap(), band).unwrap())
            .unwrap();
        assert_eq!(whole.frames_averaged, merged.frames_averaged);
        for (a, b) in whole.matrices.iter().zip(&merged.matrices) {
            assert!((a - b).norm() <= 1e-9 * a.norm().max(1e-30));
        }
    }

    #[test]
    fn band_selection_errors() {
        let rec = random_recording(1, 4096, 2);
        let spec = FrameSpec::default();
        let st = stft(&rec, &spec).unwrap();
        assert!(covariance(&st, (100.0, 101.0)).is_err(), "empty band");
        let too_short =
            MultichannelRecording::new(48000.0, vec![vec![0.0; 1024]; 2], 0.0).unwrap();
        assert!(stft(&too_short, &spec).is_err());
    }
}
