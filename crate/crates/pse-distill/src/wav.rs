//! 16 kHz mono 16-bit PCM WAV I/O.
//!
//! Samples are normalized to [-1, 1] on read by dividing by 32768. Writing
//! quantizes with round-to-nearest onto the same grid, so a write/read
//! round-trip of already-quantized data is bit-exact.

use std::path::Path;

use crate::dsp::{Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};

fn wav_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Wav {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn read_wav(path: &Path) -> Result<Waveform> {
    let mut reader =
        hound::WavReader::open(path).map_err(|e| wav_err(path, e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(wav_err(path, format!("expected mono, got {} channels", spec.channels)));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(wav_err(
            path,
            format!("expected {SAMPLE_RATE} Hz, got {}", spec.sample_rate),
        ));
    }
    if spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(wav_err(path, "expected 16-bit integer PCM"));
    }
    let samples: std::result::Result<Vec<i16>, _> = reader.samples::<i16>().collect();
    let samples = samples.map_err(|e| wav_err(path, e.to_string()))?;
    Ok(Waveform::new(
        samples.iter().map(|&s| s as f64 / 32768.0).collect(),
    ))
}

pub fn write_wav(path: &Path, wave: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer =
        hound::WavWriter::create(path, spec).map_err(|e| wav_err(path, e.to_string()))?;
    for &s in wave.samples() {
        writer
            .write_sample(quantize(s))
            .map_err(|e| wav_err(path, e.to_string()))?;
    }
    writer.finalize().map_err(|e| wav_err(path, e.to_string()))?;
    Ok(())
}

/// Round-to-nearest onto the 16-bit grid, clamped.
pub fn quantize(s: f64) -> i16 {
    let v = (s * 32768.0).round();
    v.clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

/// Snaps a waveform onto the 16-bit grid in place (what a WAV round-trip
/// would produce). Used so that component/mixture additivity holds exactly
/// on disk as well as in memory.
pub fn quantize_in_place(wave: &mut Waveform) {
    for s in wave.samples_mut() {
        *s = quantize(*s) as f64 / 32768.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn roundtrip_is_bit_exact_after_quantization() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut wave = Waveform::new((0..1000).map(|_| rng.random_range(-0.9..0.9)).collect());
        quantize_in_place(&mut wave);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        write_wav(&path, &wave).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(wave.samples(), back.samples());
    }

    #[test]
    fn write_read_is_deterministic_bytes() {
        let wave = Waveform::new((0..500).map(|n| (n as f64 * 0.01).sin() * 0.5).collect());
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.wav");
        let b = dir.path().join("b.wav");
        write_wav(&a, &wave).unwrap();
        write_wav(&b, &wave).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }
}
