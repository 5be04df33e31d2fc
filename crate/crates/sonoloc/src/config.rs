//! Experiment configuration: one TOML file describes geometry, framing,
//! estimator, detection, synthesis, and scenario. `Config::default()` is the
//! static rotation experiment; `Config::dynamic_experiment()` the drive-by
//! leak experiment. The `defaults` subcommand prints the full key tree.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::array::{make_uca, ArrayGeometry};
use crate::doa::{AngleGrid, CorrectionTable, PipelineConfig};
use crate::localize::Pose2D;
use crate::spectra::{FrameSpec, Window};
use crate::synth::{
    linear_drive_scenario, static_rotation_scenario, Scene, SignalKind, SourceSpec,
};
use crate::{Error, Result, F};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Base seed for every random stream in the run.
    pub seed: u64,
    /// Output directory; the `--out` flag overrides it.
    pub out: String,
    pub geometry: GeometryConfig,
    pub framing: FramingConfig,
    pub estimator: EstimatorConfig,
    pub detect: DetectConfig,
    pub synth: SynthConfig,
    pub scenario: ScenarioConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometryConfig {
    Uca {
        n_mics: usize,
        radius_m: F,
        speed_of_sound: F,
    },
    Custom {
        positions: Vec<[F; 3]>,
        speed_of_sound: F,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FramingConfig {
    pub frame_len: usize,
    pub hop: usize,
    pub window: WindowConfig,
    pub block_len_s: F,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum WindowConfig {
    Hann,
    Rect,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    pub band_hz: [F; 2],
    pub az_step_deg: F,
    pub el_step_deg: F,
    pub el_range_deg: [F; 2],
    /// Singular-value ratio threshold for source counting.
    pub rho: F,
    /// Azimuth correction points (measured, corrected) applied to the
    /// beamformer guesses.
    #[serde(default)]
    pub correction_pre: Vec<[F; 2]>,
    /// Correction points applied to the final subspace estimates.
    #[serde(default)]
    pub correction_post: Vec<[F; 2]>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Pipeline,
    SrpPhat,
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimatorKind::Pipeline => write!(f, "pipeline"),
            EstimatorKind::SrpPhat => write!(f, "srp-phat"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DetectConfig {
    /// Template band, Hz; must contain the signature of interest.
    pub band_hz: [F; 2],
    pub threshold: F,
    /// Reference recording for the template. When absent, experiment runs
    /// render a clean reference of the scenario's first source.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_wav: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub sample_rate: F,
    /// Recording length; omit to use the scenario's natural duration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<F>,
    /// Scene SNR in dB; omit for noise-free rendering.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<F>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioConfig {
    /// Platform holds position and sweeps the full circle in heading steps.
    StaticRotation {
        step_deg: F,
        dwell_s: F,
        /// First source is the scenario target; the rest are interferers.
        sources: Vec<SourceConfig>,
    },
    /// Platform drives a straight line past the target.
    LinearDrive {
        start_xy: [F; 2],
        end_xy: [F; 2],
        heading_deg: F,
        speed_mps: F,
        /// Optional emission gap (start s, end s) of the target source.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gap_s: Option<[F; 2]>,
        sources: Vec<SourceConfig>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub position: [F; 3],
    pub level: F,
    #[serde(default)]
    pub mute: Vec<[F; 2]>,
    pub signal: SignalConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalConfig {
    BandNoise { f_lo: F, f_hi: F },
    Tone { freq: F },
    Playback { wav: String },
}

impl Default for Config {
    fn default() -> Self {
        Self::static_experiment()
    }
}

impl Config {
    /// Static rotation experiment: a pump-like band-noise target at 5 m, a
    /// near-field motor-whine interferer just under 20 kHz, scene SNR 10 dB.
    pub fn static_experiment() -> Self {
        Self {
            seed: 0,
            out: "run".into(),
            geometry: GeometryConfig::Uca {
                n_mics: 5,
                radius_m: 0.068,
                speed_of_sound: 343.0,
            },
            framing: FramingConfig {
                frame_len: 4096,
                hop: 2048,
                window: WindowConfig::Hann,
                block_len_s: 0.5,
            },
            estimator: EstimatorConfig {
                kind: EstimatorKind::Pipeline,
                band_hz: [200.0, 2000.0],
                az_step_deg: 1.0,
                el_step_deg: 5.0,
                el_range_deg: [-30.0, 60.0],
                rho: 0.1,
                correction_pre: Vec::new(),
                correction_post: Vec::new(),
            },
            detect: DetectConfig {
                band_hz: [200.0, 44000.0],
                threshold: 0.0,
                template_wav: None,
            },
            synth: SynthConfig {
                sample_rate: 96000.0,
                duration_s: None,
                snr_db: Some(10.0),
            },
            scenario: ScenarioConfig::StaticRotation {
                step_deg: 5.0,
                dwell_s: 1.0,
                sources: vec![
                    SourceConfig {
                        position: [5.0, 0.0, 0.0],
                        level: 1.0,
                        mute: Vec::new(),
                        signal: SignalConfig::BandNoise {
                            f_lo: 200.0,
                            f_hi: 2000.0,
                        },
                    },
                    SourceConfig {
                        position: [0.25, 0.25, 0.0],
                        level: 0.1,
                        mute: Vec::new(),
                        signal: SignalConfig::BandNoise {
                            f_lo: 18500.0,
                            f_hi: 19500.0,
                        },
                    },
                ],
            },
        }
    }

    /// Dynamic drive-by experiment: a broadband leak above the array's
    /// unambiguous band, estimated with the whitened steered-power method,
    /// with a 1 s emission gap and a distant pump as ambient interference.
    pub fn dynamic_experiment() -> Self {
        let mut cfg = Self::static_experiment();
        cfg.estimator = EstimatorConfig {
            kind: EstimatorKind::SrpPhat,
            band_hz: [4000.0, 20000.0],
            az_step_deg: 1.0,
            el_step_deg: 5.0,
            el_range_deg: [0.0, 0.0],
            rho: 0.1,
            correction_pre: Vec::new(),
            correction_post: Vec::new(),
        };
        cfg.synth.snr_db = Some(15.0);
        cfg.scenario = ScenarioConfig::LinearDrive {
            start_xy: [0.0, 0.0],
            end_xy: [10.0, 0.0],
            heading_deg: 0.0,
            speed_mps: 0.5,
            gap_s: Some([9.0, 10.0]),
            sources: vec![
                SourceConfig {
                    position: [5.0, 3.0, 0.0],
                    level: 1.0,
                    mute: Vec::new(),
                    signal: SignalConfig::BandNoise {
                        f_lo: 4000.0,
                        f_hi: 20000.0,
                    },
                },
                SourceConfig {
                    position: [15.0, -10.0, 0.0],
                    level: 2.0,
                    mute: Vec::new(),
                    signal: SignalConfig::BandNoise {
                        f_lo: 200.0,
                        f_hi: 2000.0,
                    },
                },
            ],
        };
        cfg
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text)
            .map_err(|e| Error::Config(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn geometry(&self) -> Result<ArrayGeometry> {
        match &self.geometry {
            GeometryConfig::Uca {
                n_mics,
                radius_m,
                speed_of_sound,
            } => {
                if !(*speed_of_sound > 0.0) {
                    return Err(Error::Config(format!(
                        "speed of sound {speed_of_sound} must be positive"
                    )));
                }
                let mut g = make_uca(*n_mics, *radius_m)?;
                g.speed_of_sound = *speed_of_sound;
                Ok(g)
            }
            GeometryConfig::Custom {
                positions,
                speed_of_sound,
            } => ArrayGeometry::new(positions.clone(), *speed_of_sound),
        }
    }

    pub fn frame_spec(&self) -> Result<FrameSpec> {
        let window = match self.framing.window {
            WindowConfig::Hann => Window::Hann,
            WindowConfig::Rect => Window::Rect,
        };
        FrameSpec::new(self.framing.frame_len, self.framing.hop, window)
    }

    pub fn angle_grid(&self) -> Result<AngleGrid> {
        AngleGrid::new(
            self.estimator.az_step_deg,
            self.estimator.el_step_deg,
            (self.estimator.el_range_deg[0], self.estimator.el_range_deg[1]),
        )
    }

    pub fn pipeline_config(&self) -> Result<PipelineConfig> {
        Ok(PipelineConfig {
            band: (self.estimator.band_hz[0], self.estimator.band_hz[1]),
            frame: self.frame_spec()?,
            block_len_s: self.framing.block_len_s,
            grid: self.angle_grid()?,
            rho: self.estimator.rho,
            correction_pre: CorrectionTable::new(
                self.estimator.correction_pre.iter().map(|p| (p[0], p[1])).collect(),
            )?,
            correction_post: CorrectionTable::new(
                self.estimator.correction_post.iter().map(|p| (p[0], p[1])).collect(),
            )?,
        })
    }

    /// Build the scene this config describes (geometry, motion, sources).
    pub fn scene(&self) -> Result<Scene> {
        let mut scene = match &self.scenario {
            ScenarioConfig::StaticRotation {
                step_deg,
                dwell_s,
                sources,
            } => {
                let mut it = sources.iter();
                let target = it
                    .next()
                    .ok_or_else(|| Error::Config("scenario has no sources".into()))?;
                let mut scene =
                    static_rotation_scenario(*step_deg, *dwell_s, source_spec(target)?)?;
                for s in it {
                    scene.sources.push(source_spec(s)?);
                }
                scene
            }
            ScenarioConfig::LinearDrive {
                start_xy,
                end_xy,
                heading_deg,
                speed_mps,
                gap_s,
                sources,
            } => {
                let mut it = sources.iter();
                let target = it
                    .next()
                    .ok_or_else(|| Error::Config("scenario has no sources".into()))?;
                let mut scene = linear_drive_scenario(
                    Pose2D::new(start_xy[0], start_xy[1], *heading_deg),
                    Pose2D::new(end_xy[0], end_xy[1], *heading_deg),
                    *speed_mps,
                    source_spec(target)?,
                    gap_s.map(|g| (g[0], g[1])),
                )?;
                for s in it {
                    scene.sources.push(source_spec(s)?);
                }
                scene
            }
        };
        scene.geometry = self.geometry()?;
        scene.noise_snr_db = self.synth.snr_db;
        Ok(scene)
    }

    /// Recording length: configured duration or the scenario's natural one.
    pub fn duration_s(&self, scene: &Scene) -> Result<F> {
        if let Some(d) = self.synth.duration_s {
            return Ok(d);
        }
        scene.duration_hint.ok_or_else(|| {
            Error::Config("scenario has no natural duration; set synth.duration_s".into())
        })
    }

    pub fn validate(&self) -> Result<()> {
        let geometry = self.geometry()?;
        self.frame_spec()?;
        self.angle_grid()?;
        let fs = self.synth.sample_rate;
        if !(fs > 0.0) {
            return Err(Error::Config(format!(
                "sample rate {fs} Hz must be positive"
            )));
        }
        let block_samples = (self.framing.block_len_s * fs).round() as usize;
        if block_samples < self.framing.frame_len {
            return Err(Error::Config(format!(
                "block of {} s is {} samples at {} Hz, shorter than one {}-sample frame",
                self.framing.block_len_s, block_samples, fs, self.framing.frame_len
            )));
        }
        let band = self.estimator.band_hz;
        if !(band[0] >= 0.0 && band[0] < band[1]) {
            return Err(Error::Config(format!(
                "estimator band [{}, {}] Hz must be ordered and nonnegative",
                band[0], band[1]
            )));
        }
        if band[1] > fs / 2.0 {
            return Err(Error::Config(format!(
                "estimator band upper edge {} Hz exceeds half the sample rate {} Hz",
                band[1],
                fs / 2.0
            )));
        }
        if self.estimator.kind == EstimatorKind::Pipeline {
            let nyq = geometry.spatial_nyquist();
            if band[1] > nyq + 1e-9 {
                return Err(Error::Config(format!(
                    "estimator band upper edge {} Hz exceeds the array's spatial \
                     Nyquist frequency {nyq:.2} Hz; use srp-phat above it",
                    band[1]
                )));
            }
        }
        if !(self.estimator.rho > 0.0 && self.estimator.rho < 1.0) {
            return Err(Error::Config(format!(
                "rho {} must lie in (0, 1)",
                self.estimator.rho
            )));
        }
        CorrectionTable::new(
            self.estimator.correction_pre.iter().map(|p| (p[0], p[1])).collect(),
        )?;
        CorrectionTable::new(
            self.estimator.correction_post.iter().map(|p| (p[0], p[1])).collect(),
        )?;
        let dband = self.detect.band_hz;
        if !(dband[0] >= 0.0 && dband[0] < dband[1]) {
            return Err(Error::Config(format!(
                "detect band [{}, {}] Hz must be ordered and nonnegative",
                dband[0], dband[1]
            )));
        }
        if dband[1] > fs / 2.0 {
            return Err(Error::Config(format!(
                "detect band upper edge {} Hz exceeds half the sample rate {} Hz",
                dband[1],
                fs / 2.0
            )));
        }
        if let Some(w) = &self.detect.template_wav {
            if !Path::new(w).exists() {
                return Err(Error::Config(format!(
                    "detect.template_wav {w} does not exist"
                )));
            }
        }
        if let Some(d) = self.synth.duration_s {
            if !(d > 0.0) {
                return Err(Error::Config(format!(
                    "duration {d} s must be positive"
                )));
            }
        }
        let sources = match &self.scenario {
            ScenarioConfig::StaticRotation { sources, .. } => sources,
            ScenarioConfig::LinearDrive { sources, .. } => sources,
        };
        if sources.is_empty() {
            return Err(Error::Config("scenario has no sources".into()));
        }
        for (i, s) in sources.iter().enumerate() {
            if !(s.level > 0.0) {
                return Err(Error::Config(format!(
                    "source {i} level {} must be positive",
                    s.level
                )));
            }
            match &s.signal {
                SignalConfig::BandNoise { f_lo, f_hi } => {
                    if !(*f_lo >= 0.0 && f_lo < f_hi && *f_hi <= fs / 2.0) {
                        return Err(Error::Config(format!(
                            "source {i} band [{f_lo}, {f_hi}] Hz is invalid at sample \
                             rate {fs} Hz"
                        )));
                    }
                }
                SignalConfig::Tone { freq } => {
                    if !(*freq > 0.0 && *freq < fs / 2.0) {
                        return Err(Error::Config(format!(
                            "source {i} tone {freq} Hz is outside (0, {})",
                            fs / 2.0
                        )));
                    }
                }
                SignalConfig::Playback { wav } => {
                    if !Path::new(wav).exists() {
                        return Err(Error::Config(format!(
                            "source {i} playback file {wav} does not exist"
                        )));
                    }
                }
            }
            for m in &s.mute {
                if !(m[0] < m[1]) {
                    return Err(Error::Config(format!(
                        "source {i} mute interval [{}, {}] must be ordered",
                        m[0], m[1]
                    )));
                }
            }
        }
        Ok(())
    }
}

fn source_spec(cfg: &SourceConfig) -> Result<SourceSpec> {
    let signal = match &cfg.signal {
        SignalConfig::BandNoise { f_lo, f_hi } => SignalKind::BandNoise {
            f_lo: *f_lo,
            f_hi: *f_hi,
        },
        SignalConfig::Tone { freq } => SignalKind::Tone { f: *freq },
        SignalConfig::Playback { wav } => SignalKind::Playback { path: wav.clone().into() },
    };
    let mut spec = SourceSpec::new(cfg.position, signal, cfg.level);
    spec.mute = cfg.mute.iter().map(|m| (m[0], m[1])).collect();
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_toml() {
        for cfg in [Config::static_experiment(), Config::dynamic_experiment()] {
            cfg.validate().unwrap();
            let text = cfg.to_toml_string();
            let back = Config::from_toml_str(&text).unwrap();
            assert_eq!(cfg, back);
        }
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let mut text = Config::default().to_toml_string();
        text.push_str("\n[bogus]\nx = 1\n");
        let err = Config::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
        assert!(err.contains("line"), "no location in: {err}");
    }

    #[test]
    fn pipeline_band_above_spatial_nyquist_names_both_numbers() {
        let mut cfg = Config::static_experiment();
        cfg.estimator.band_hz = [200.0, 3000.0];
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("3000"), "{err}");
        assert!(err.contains("2145"), "{err}");
        // the same band is fine for the whitened estimator
        cfg.estimator.kind = EstimatorKind::SrpPhat;
        cfg.validate().unwrap();
    }

    #[test]
    fn short_block_rejected() {
        let mut cfg = Config::static_experiment();
        cfg.framing.block_len_s = 0.02;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("1920") && err.contains("4096"), "{err}");
    }

    #[test]
    fn static_scene_shape() {
        let cfg = Config::static_experiment();
        let scene = cfg.scene().unwrap();
        assert_eq!(scene.sources.len(), 2);
        assert_eq!(scene.leak_index, None);
        assert_eq!(cfg.duration_s(&scene).unwrap(), 72.0);
        assert_eq!(scene.noise_snr_db, Some(10.0));
    }

    #[test]
    fn dynamic_scene_shape() {
        let cfg = Config::dynamic_experiment();
        let scene = cfg.scene().unwrap();
        assert_eq!(scene.sources.len(), 2);
        assert_eq!(scene.leak_index, Some(0));
        assert_eq!(scene.sources[0].mute, vec![(9.0, 10.0)]);
        assert_eq!(cfg.duration_s(&scene).unwrap(), 20.0);
    }

    #[test]
    fn missing_files_are_named() {
        let mut cfg = Config::static_experiment();
        cfg.detect.template_wav = Some("/nonexistent/ref.wav".into());
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("/nonexistent/ref.wav"), "{err}");
    }

    #[test]
    fn estimator_kind_display_matches_flag_values() {
        assert_eq!(EstimatorKind::Pipeline.to_string(), "pipeline");
        assert_eq!(EstimatorKind::SrpPhat.to_string(), "srp-phat");
    }
}
