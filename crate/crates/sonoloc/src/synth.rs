//! Synthetic multichannel scene renderer: free-field point sources, a moving
//! platform, and seeded noise, providing ground truth for every experiment.

use crate::array::ArrayGeometry;
use crate::localize::{wrap_deg, Pose2D};
use crate::{Error, Result, C, F};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use std::path::PathBuf;

/// Platform pose is held constant within blocks of this many samples
/// (~10.7 ms at 96 kHz; at 1 m/s the intra-block pose error is ~11 mm).
pub const RENDER_BLOCK: usize = 1024;

const INTERP_HALF: usize = 16;
const INTERP_TAPS: usize = 2 * INTERP_HALF;
const BANDPASS_TAPS: usize = 2047;

/// Gap between the waypoint pair used to emulate a held pose under linear
/// interpolation.
const HOLD_EPS: F = 1e-6;

#[derive(Debug, Clone)]
pub struct MultichannelRecording {
    pub sample_rate: F,
    pub channels: Vec<Vec<F>>,
    pub start_time: F,
}

impl MultichannelRecording {
    pub fn new(sample_rate: F, channels: Vec<Vec<F>>, start_time: F) -> Result<Self> {
        if !(sample_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        if channels.is_empty() {
            return Err(Error::InvalidArgument("no channels".into()));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::InvalidArgument("channel lengths differ".into()));
        }
        Ok(Self {
            sample_rate,
            channels,
            start_time,
        })
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn duration(&self) -> F {
        self.len() as F / self.sample_rate
    }
}

#[derive(Debug, Clone)]
pub enum SignalKind {
    /// Band-limited white noise on [f_lo, f_hi].
    BandNoise { f_lo: F, f_hi: F },
    /// Pure tone.
    Tone { f: F },
    /// Mono sample playback, looped to the scene duration. The file's sample
    /// rate must match the render rate.
    Playback { path: PathBuf },
}

#[derive(Debug, Clone)]
pub struct SourceSpec {
    /// World coordinates, meters.
    pub position: [F; 3],
    pub signal: SignalKind,
    /// RMS amplitude of the emitted signal (received amplitude falls as 1/r).
    pub level: F,
    /// Intervals (start s, end s) during which the source is silent.
    pub mute: Vec<(F, F)>,
}

impl SourceSpec {
    pub fn new(position: [F; 3], signal: SignalKind, level: F) -> Self {
        Self {
            position,
            signal,
            level,
            mute: Vec::new(),
        }
    }

    pub fn active_at(&self, t: F) -> bool {
        !self.mute.iter().any(|(a, b)| t >= *a && t < *b)
    }
}

/// Piecewise-linear pose path. Headings interpolate along the shortest arc.
#[derive(Debug, Clone)]
pub struct Trajectory {
    waypoints: Vec<(F, Pose2D)>,
}

impl Trajectory {
    pub fn new(waypoints: Vec<(F, Pose2D)>) -> Result<Self> {
        if waypoints.is_empty() {
            return Err(Error::InvalidArgument("empty trajectory".into()));
        }
        if waypoints.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidArgument(
                "trajectory timestamps must be strictly increasing".into(),
            ));
        }
        Ok(Self { waypoints })
    }

    pub fn waypoints(&self) -> &[(F, Pose2D)] {
        &self.waypoints
    }

    pub fn end_time(&self) -> F {
        self.waypoints.last().unwrap().0
    }

    pub fn pose_at(&self, t: F) -> Pose2D {
        let w = &self.waypoints;
        if t <= w[0].0 {
            return w[0].1;
        }
        if t >= w[w.len() - 1].0 {
            return w[w.len() - 1].1;
        }
        let i = w.partition_point(|(wt, _)| *wt <= t) - 1;
        let (t0, p0) = w[i];
        let (t1, p1) = w[i + 1];
        let a = (t - t0) / (t1 - t0);
        // shortest-arc heading interpolation
        let mut dh = (p1.heading_deg - p0.heading_deg).rem_euclid(360.0);
        if dh > 180.0 {
            dh -= 360.0;
        }
        Pose2D::new(
            p0.x + a * (p1.x - p0.x),
            p0.y + a * (p1.y - p0.y),
            p0.heading_deg + a * dh,
        )
    }
}

#[derive(Debug, Clone)]
pub enum Motion {
    Static(Pose2D),
    Moving(Trajectory),
}

impl Motion {
    pub fn pose_at(&self, t: F) -> Pose2D {
        match self {
            Motion::Static(p) => *p,
            Motion::Moving(tr) => tr.pose_at(t),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub sources: Vec<SourceSpec>,
    /// SNR of the summed received source power against the added white noise.
    /// `None` adds no noise (except for empty scenes, which always render a
    /// unit-variance noise floor).
    pub noise_snr_db: Option<F>,
    pub geometry: ArrayGeometry,
    pub motion: Motion,
    /// Which source the detection ground truth tracks, if any.
    pub leak_index: Option<usize>,
    /// Natural duration of the scenario, set by the scenario builders.
    pub duration_hint: Option<F>,
}

impl Scene {
    pub fn new(geometry: ArrayGeometry, motion: Motion) -> Self {
        Self {
            sources: Vec::new(),
            noise_snr_db: None,
            geometry,
            motion,
            leak_index: None,
            duration_hint: None,
        }
    }

    pub fn pose_at(&self, t: F) -> Pose2D {
        self.motion.pose_at(t)
    }

    /// Ground-truth azimuth of a source relative to the array at time t.
    pub fn relative_azimuth(&self, t: F, source: usize) -> F {
        let pose = self.pose_at(t);
        let s = &self.sources[source].position;
        let bearing = (s[1] - pose.y).atan2(s[0] - pose.x).to_degrees();
        wrap_deg(bearing - pose.heading_deg)
    }

    /// Whether the leak source (if designated) is emitting at time t.
    pub fn leak_active(&self, t: F) -> bool {
        match self.leak_index {
            Some(i) => self.sources[i].active_at(t),
            None => !self.sources.is_empty(),
        }
    }
}

/// Scenario matching the static experiment: the platform holds position and
/// rotates by `step_deg` per segment, dwelling `dwell_s` on each heading,
/// covering the full azimuthal range.
pub fn static_rotation_scenario(step_deg: F, dwell_s: F, source: SourceSpec) -> Result<Scene> {
    if !(step_deg > 0.0) || !(dwell_s > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "step and dwell must be positive, got {step_deg} and {dwell_s}"
        )));
    }
    let steps = 360.0 / step_deg;
    if (steps - steps.round()).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "step {step_deg} deg does not divide 360"
        )));
    }
    let n_steps = steps.round() as usize;
    let mut waypoints = Vec::with_capacity(2 * n_steps);
    for k in 0..n_steps {
        let h = wrap_deg(k as F * step_deg);
        let t0 = k as F * dwell_s;
        waypoints.push((t0, Pose2D::new(0.0, 0.0, h)));
        waypoints.push((t0 + dwell_s - HOLD_EPS, Pose2D::new(0.0, 0.0, h)));
    }
    let mut scene = Scene::new(
        crate::array::make_uca(5, 0.068)?,
        Motion::Moving(Trajectory::new(waypoints)?),
    );
    scene.sources.push(source);
    scene.duration_hint = Some(n_steps as F * dwell_s);
    Ok(scene)
}

/// Scenario matching the dynamic experiment: constant-velocity drive past a
/// leak, optionally with a silent gap in the leak emission.
pub fn linear_drive_scenario(
    start: Pose2D,
    end: Pose2D,
    speed: F,
    mut leak: SourceSpec,
    gap: Option<(F, F)>,
) -> Result<Scene> {
    if !(speed > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "speed must be positive, got {speed}"
        )));
    }
    let dist = ((end.x - start.x).powi(2) + (end.y - start.y).powi(2)).sqrt();
    if dist <= 0.0 {
        return Err(Error::InvalidArgument(
            "start and end poses coincide".into(),
        ));
    }
    let duration = dist / speed;
    if let Some(g) = gap {
        if !(g.0 < g.1) {
            return Err(Error::InvalidArgument(format!(
                "gap interval must be ordered, got {g:?}"
            )));
        }
        leak.mute.push(g);
    }
    let mut scene = Scene::new(
        crate::array::make_uca(5, 0.068)?,
        Motion::Moving(Trajectory::new(vec![(0.0, start), (duration, end)])?),
    );
    scene.sources.push(leak);
    scene.leak_index = Some(0);
    scene.duration_hint = Some(duration);
    Ok(scene)
}

/// Render a scene to a multichannel recording.
///
/// Per channel, each source's signal is delayed by the exact propagation time
/// from the source to the microphone's world position (32-tap windowed-sinc
/// fractional delay) and scaled by 1/r; platform motion is quantized to
/// [`RENDER_BLOCK`]-sample blocks with the pose taken at the block center.
/// White Gaussian noise is added last, sized so the configured SNR holds
/// against the summed received source power. Rendering is deterministic in
/// the seed: channel noise and each source's waveform come from independent
/// seeded substreams.
pub fn render(
    scene: &Scene,
    sample_rate: F,
    duration: F,
    seed: u64,
) -> Result<MultichannelRecording> {
    if !(duration > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "duration must be positive, got {duration}"
        )));
    }
    if !(sample_rate > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sample rate must be positive, got {sample_rate}"
        )));
    }
    let n = (duration * sample_rate).round() as usize;
    if n == 0 {
        return Err(Error::InvalidArgument("zero-length render".into()));
    }
    let n_mics = scene.geometry.n_mics();
    let mut channels = vec![vec![0.0; n]; n_mics];

    if scene.sources.is_empty() {
        // Empty scene: unit noise floor, independent per channel.
        for (m, ch) in channels.iter_mut().enumerate() {
            let mut rng = noise_rng(seed, m);
            for v in ch.iter_mut() {
                *v = rng.sample::<F, _>(StandardNormal);
            }
        }
        return MultichannelRecording::new(sample_rate, channels, 0.0);
    }

    let n_blocks = n.div_ceil(RENDER_BLOCK);
    let c0 = scene.geometry.speed_of_sound;

    for (k, src) in scene.sources.iter().enumerate() {
        validate_source(src, sample_rate)?;
        // Worst-case delay over the whole trajectory, for padding.
        let mut max_dist: F = 0.0;
        for b in 0..n_blocks {
            let pose = scene.pose_at(block_center_time(b, sample_rate));
            for p in mic_world_positions(&scene.geometry, &pose) {
                max_dist = max_dist.max(dist3(&p, &src.position));
            }
        }
        let pad_front = (max_dist / c0 * sample_rate).ceil() as usize + INTERP_TAPS;
        let mut sig = generate_signal(src, n, sample_rate, seed, k)?;
        apply_mutes(&mut sig, &src.mute, sample_rate);
        // Padded emission timeline: sig_pad[i + pad_front] = s(i / fs).
        let mut sig_pad = vec![0.0; pad_front + n + INTERP_TAPS + 1];
        sig_pad[pad_front..pad_front + n].copy_from_slice(&sig);
        drop(sig);

        for b in 0..n_blocks {
            let i0 = b * RENDER_BLOCK;
            let i1 = (i0 + RENDER_BLOCK).min(n);
            let pose = scene.pose_at(block_center_time(b, sample_rate));
            let mics = mic_world_positions(&scene.geometry, &pose);
            for (m, mic) in mics.iter().enumerate() {
                let r = dist3(mic, &src.position);
                if r < 1e-3 {
                    return Err(Error::InvalidArgument(format!(
                        "source {k} coincides with microphone {m} (r = {r:.2e} m)"
                    )));
                }
                let gain = src.level / r;
                let delay = r / c0 * sample_rate;
                let d_ceil = delay.ceil();
                let frac = d_ceil - delay;
                let taps = windowed_sinc_taps(frac);
                // channel[i] += gain * s(i - delay); reads are in-bounds by
                // construction of the padding.
                let base = pad_front as isize - d_ceil as isize - (INTERP_HALF as isize - 1);
                let q0 = (base + i0 as isize) as usize;
                let ch = &mut channels[m];
                for (c, win) in ch[i0..i1]
                    .iter_mut()
                    .zip(sig_pad[q0..].windows(INTERP_TAPS))
                {
                    let mut acc = 0.0;
                    for (s, h) in win.iter().zip(&taps) {
                        acc += s * h;
                    }
                    *c += gain * acc;
                }
            }
        }
    }

    if let Some(snr_db) = scene.noise_snr_db {
        let p_sig: F = channels
            .iter()
            .flat_map(|ch| ch.iter().map(|v| v * v))
            .sum::<F>()
            / (n_mics * n) as F;
        if p_sig <= 0.0 {
            return Err(Error::DegenerateInput(
                "cannot size noise: rendered source power is zero".into(),
            ));
        }
        let sigma = (p_sig / (10.0f64).powf(snr_db / 10.0)).sqrt();
        for (m, ch) in channels.iter_mut().enumerate() {
            let mut rng = noise_rng(seed, m);
            for v in ch.iter_mut() {
                *v += sigma * rng.sample::<F, _>(StandardNormal);
            }
        }
    }

    MultichannelRecording::new(sample_rate, channels, 0.0)
}

fn block_center_time(block: usize, sample_rate: F) -> F {
    ((block * RENDER_BLOCK) as F + RENDER_BLOCK as F / 2.0) / sample_rate
}

fn noise_rng(seed: u64, channel: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(100 + channel as u64);
    rng
}

fn source_rng(seed: u64, source: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1000 + source as u64);
    rng
}

/// Microphone positions in the world frame for a platform pose: array-local
/// coordinates rotated by the heading about z, then translated.
pub fn mic_world_positions(geometry: &ArrayGeometry, pose: &Pose2D) -> Vec<[F; 3]> {
    let (s, c) = pose.heading_deg.to_radians().sin_cos();
    geometry
        .positions()
        .iter()
        .map(|p| {
            [
                c * p[0] - s * p[1] + pose.x,
                s * p[0] + c * p[1] + pose.y,
                p[2],
            ]
        })
        .collect()
}

fn dist3(a: &[F; 3], b: &[F; 3]) -> F {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

fn validate_source(src: &SourceSpec, fs: F) -> Result<()> {
    if !(src.level > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "source level must be positive, got {}",
            src.level
        )));
    }
    match &src.signal {
        SignalKind::Tone { f } => {
            if !(*f > 0.0 && *f < fs / 2.0) {
                return Err(Error::InvalidArgument(format!(
                    "tone at {f} Hz aliases at sample rate {fs} Hz"
                )));
            }
        }
        SignalKind::BandNoise { f_lo, f_hi } => {
            if !(*f_lo >= 0.0 && f_lo < f_hi && *f_hi <= fs / 2.0) {
                return Err(Error::InvalidArgument(format!(
                    "noise band [{f_lo}, {f_hi}] Hz is invalid at sample rate {fs} Hz"
                )));
            }
        }
        SignalKind::Playback { .. } => {}
    }
    Ok(())
}

fn generate_signal(src: &SourceSpec, n: usize, fs: F, seed: u64, index: usize) -> Result<Vec<F>> {
    match &src.signal {
        SignalKind::Tone { f } => {
            let amp = src.level * std::f64::consts::SQRT_2;
            Ok((0..n)
                .map(|i| amp * (2.0 * std::f64::consts::PI * f * i as F / fs).sin())
                .collect())
        }
        SignalKind::BandNoise { f_lo, f_hi } => {
            let mut rng = source_rng(seed, index);
            let white: Vec<F> = (0..n).map(|_| rng.sample::<F, _>(StandardNormal)).collect();
            let kernel = design_bandpass(*f_lo, *f_hi, fs, BANDPASS_TAPS);
            let mut sig = convolve_centered(&white, &kernel);
            normalize_rms(&mut sig, src.level)?;
            Ok(sig)
        }
        SignalKind::Playback { path } => {
            let rec = crate::wav::read_wav(path)?;
            if (rec.sample_rate - fs).abs() > 1e-6 {
                return Err(Error::InvalidArgument(format!(
                    "{}: sample rate {} does not match render rate {fs}",
                    path.display(),
                    rec.sample_rate
                )));
            }
            let base = &rec.channels[0];
            let mut sig: Vec<F> = (0..n).map(|i| base[i % base.len()]).collect();
            normalize_rms(&mut sig, src.level)?;
            Ok(sig)
        }
    }
}

fn normalize_rms(sig: &mut [F], level: F) -> Result<()> {
    let rms = (sig.iter().map(|v| v * v).sum::<F>() / sig.len() as F).sqrt();
    if rms <= 0.0 {
        return Err(Error::DegenerateInput("silent source signal".into()));
    }
    let g = level / rms;
    for v in sig.iter_mut() {
        *v *= g;
    }
    Ok(())
}

fn apply_mutes(sig: &mut [F], mutes: &[(F, F)], fs: F) {
    for (a, b) in mutes {
        let i0 = ((a * fs).round().max(0.0) as usize).min(sig.len());
        let i1 = ((b * fs).round().max(0.0) as usize).min(sig.len());
        sig[i0..i1].fill(0.0);
    }
}

/// Blackman-windowed sinc interpolation taps for a constant fractional offset,
/// normalized to unit DC gain. Tap t weights sample floor(p) - 15 + t when
/// reading s(p) with frac = ceil(p) - p.
fn windowed_sinc_taps(frac: F) -> [F; INTERP_TAPS] {
    let mut h = [0.0; INTERP_TAPS];
    let mut sum = 0.0;
    for (t, ht) in h.iter_mut().enumerate() {
        let x = frac + (INTERP_HALF as F - 1.0) - t as F;
        let v = sinc(x) * blackman(x / INTERP_HALF as F);
        *ht = v;
        sum += v;
    }
    for ht in h.iter_mut() {
        *ht /= sum;
    }
    h
}

fn sinc(x: F) -> F {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Blackman window on x in [-1, 1].
fn blackman(x: F) -> F {
    if x.abs() >= 1.0 {
        return 0.0;
    }
    let px = std::f64::consts::PI * x;
    0.42 + 0.5 * px.cos() + 0.08 * (2.0 * px).cos()
}

/// Linear-phase FIR bandpass (odd tap count, Blackman window). A zero lower
/// edge degenerates to a lowpass; a lowpass up to Nyquist degenerates to an
/// identity, so full-band white noise flows through the same path.
fn design_bandpass(f_lo: F, f_hi: F, fs: F, taps: usize) -> Vec<F> {
    debug_assert!(taps % 2 == 1);
    let mid = (taps / 2) as isize;
    let (w_lo, w_hi) = (2.0 * f_lo / fs, 2.0 * f_hi / fs);
    (0..taps as isize)
        .map(|m| {
            let x = (m - mid) as F;
            let ideal = w_hi * sinc(w_hi * x) - w_lo * sinc(w_lo * x);
            ideal * blackman(x / (mid as F + 1.0))
        })
        .collect()
}

/// FFT overlap-add convolution returning the same length as `signal`, with
/// the kernel's group delay (center tap) removed.
fn convolve_centered(signal: &[F], kernel: &[F]) -> Vec<F> {
    let klen = kernel.len();
    let fft_len = (4 * klen.next_power_of_two()).max(8192);
    let seg_len = fft_len - klen + 1;
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(fft_len);
    let inv = planner.plan_fft_inverse(fft_len);

    let mut kf: Vec<C> = kernel.iter().map(|v| C::new(*v, 0.0)).collect();
    kf.resize(fft_len, C::new(0.0, 0.0));
    fwd.process(&mut kf);

    let mut out = vec![0.0; signal.len() + klen - 1];
    let mut buf = vec![C::new(0.0, 0.0); fft_len];
    let mut pos = 0;
    while pos < signal.len() {
        let seg = &signal[pos..(pos + seg_len).min(signal.len())];
        for (b, s) in buf.iter_mut().zip(seg.iter()) {
            *b = C::new(*s, 0.0);
        }
        for b in buf.iter_mut().skip(seg.len()) {
            *b = C::new(0.0, 0.0);
        }
        fwd.process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&kf) {
            *b *= k;
        }
        inv.process(&mut buf);
        let scale = 1.0 / fft_len as F;
        let span = (seg.len() + klen - 1).min(out.len() - pos);
        for (o, b) in out[pos..pos + span].iter_mut().zip(&buf) {
            *o += b.re * scale;
        }
        pos += seg_len;
    }
    let lead = klen / 2;
    out[lead..lead + signal.len()].to_vec()
}
