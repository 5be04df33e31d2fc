//! Multichannel WAV input/output (32-bit float, channel order = microphone
//! index order).

use crate::synth::MultichannelRecording;
use crate::{Error, Result, F};
use std::path::Path;

pub fn write_wav(path: &Path, rec: &MultichannelRecording) -> Result<()> {
    if rec.channels.is_empty() || rec.is_empty() {
        return Err(Error::InvalidArgument("refusing to write empty WAV".into()));
    }
    let spec = hound::WavSpec {
        channels: rec.channels.len() as u16,
        sample_rate: rec.sample_rate.round() as u32,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for i in 0..rec.len() {
        for ch in &rec.channels {
            w.write_sample(ch[i] as f32)?;
        }
    }
    w.finalize()?;
    Ok(())
}

pub fn read_wav(path: &Path) -> Result<MultichannelRecording> {
    let mut r = hound::WavReader::open(path)?;
    let spec = r.spec();
    let n_ch = spec.channels as usize;
    if n_ch == 0 {
        return Err(Error::InvalidArgument(format!(
            "{}: zero channels",
            path.display()
        )));
    }
    let mut channels: Vec<Vec<F>> = vec![Vec::new(); n_ch];
    match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => {
            for (i, s) in r.samples::<f32>().enumerate() {
                channels[i % n_ch].push(s? as F);
            }
        }
        (hound::SampleFormat::Int, bits) => {
            let scale = (1i64 << (bits - 1)) as F;
            for (i, s) in r.samples::<i32>().enumerate() {
                channels[i % n_ch].push(s? as F / scale);
            }
        }
        (fmt, bits) => {
            return Err(Error::InvalidArgument(format!(
                "{}: unsupported WAV format {fmt:?}/{bits}",
                path.display()
            )));
        }
    }
    let len = channels[0].len();
    if len == 0 {
        return Err(Error::InvalidArgument(format!(
            "{}: empty WAV",
            path.display()
        )));
    }
    if channels.iter().any(|c| c.len() != len) {
        return Err(Error::InvalidArgument(format!(
            "{}: truncated final frame",
            path.display()
        )));
    }
    MultichannelRecording::new(spec.sample_rate as F, channels, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_five_channels() {
        let dir = std::env::temp_dir().join("sonoloc-wav-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.wav");
        let channels: Vec<Vec<F>> = (0..5)
            .map(|c| (0..128).map(|i| ((c * 128 + i) as F / 1000.0).sin()).collect())
            .collect();
        let rec = MultichannelRecording::new(96000.0, channels, 0.0).unwrap();
        write_wav(&path, &rec).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.channels.len(), 5);
        assert_eq!(back.len(), 128);
        assert_eq!(back.sample_rate, 96000.0);
        for (a, b) in rec.channels.iter().zip(&back.channels) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-7, "f32 roundtrip should be near-exact");
            }
        }
        std::fs::remove_dir_all(&dir).ok();
    }
}
