//! Time-frequency primitives shared by the models, losses, and metrics.
//!
//! Everything here operates on mono 16 kHz audio. The analysis grid is a
//! 20 ms Hann window with a 10 ms hop (320/160 samples), zero-padded to a
//! 512-point FFT, which yields 257 frequency bins. Frame `t` covers samples
//! `[t*hop, t*hop + window)`, so the framing itself is causal.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use once_cell::sync::Lazy;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};

/// All pipeline signals are 16 kHz.
pub const SAMPLE_RATE: u32 = 16_000;

// ─── Waveform ───────────────────────────────────────────────────────────────

/// Mono audio signal, nominal amplitude range [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    /// Wraps samples at the pipeline rate (16 kHz).
    pub fn new(samples: Vec<f64>) -> Self {
        Waveform {
            samples,
            sample_rate: SAMPLE_RATE,
        }
    }

    /// Checked constructor for external inputs: rejects non-16 kHz rates and
    /// non-finite samples.
    pub fn from_samples(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate != SAMPLE_RATE {
            return Err(Error::Config(format!(
                "sample rate must be {SAMPLE_RATE} Hz, got {sample_rate}"
            )));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("waveform contains NaN/Inf".into()));
        }
        Ok(Waveform::new(samples))
    }

    pub fn zeros(len: usize) -> Self {
        Waveform::new(vec![0.0; len])
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Sum of squared amplitudes.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }

    /// Mean squared amplitude.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.energy() / self.samples.len() as f64
        }
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    /// In-place scalar gain.
    pub fn scale(&mut self, gain: f64) {
        for s in &mut self.samples {
            *s *= gain;
        }
    }

    /// Sample-wise sum. Panics on length mismatch; callers align lengths first.
    pub fn add(&mut self, other: &Waveform) {
        assert_eq!(self.len(), other.len(), "waveform length mismatch in add");
        for (a, b) in self.samples.iter_mut().zip(other.samples.iter()) {
            *a += *b;
        }
    }
}

// ─── STFT configuration ─────────────────────────────────────────────────────

/// Analysis grid: 20 ms Hann window, 10 ms hop, 512-point FFT.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StftConfig {
    pub window_samples: usize,
    pub hop_samples: usize,
    pub fft_size: usize,
    pub mel_bands: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            window_samples: 320,
            hop_samples: 160,
            fft_size: 512,
            mel_bands: 40,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hop_samples * 2 != self.window_samples {
            return Err(Error::Config(format!(
                "hop ({}) must be half the window ({}) for COLA",
                self.hop_samples, self.window_samples
            )));
        }
        if self.fft_size < self.window_samples {
            return Err(Error::Config(format!(
                "fft_size ({}) must be >= window ({})",
                self.fft_size, self.window_samples
            )));
        }
        Ok(())
    }

    /// Number of frequency bins: fft_size/2 + 1.
    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frame count for a signal of `len` samples: 1 + floor((len-window)/hop).
    /// Errors when the signal does not fill one window.
    pub fn frame_count(&self, len: usize) -> Result<usize> {
        if len < self.window_samples {
            return Err(Error::SignalTooShort {
                len,
                min: self.window_samples,
            });
        }
        Ok(1 + (len - self.window_samples) / self.hop_samples)
    }

    pub fn hop_seconds(&self) -> f64 {
        self.hop_samples as f64 / SAMPLE_RATE as f64
    }

    /// Frames per second of audio (100 at the default 10 ms hop).
    pub fn frames_per_second(&self) -> usize {
        (SAMPLE_RATE as usize) / self.hop_samples
    }

    /// Periodic Hann window; satisfies COLA with unit gain at 50% overlap.
    pub fn window(&self) -> Vec<f64> {
        let n = self.window_samples;
        (0..n)
            .map(|k| 0.5 * (1.0 - (2.0 * PI * k as f64 / n as f64).cos()))
            .collect()
    }
}

// ─── Spectrogram and mel features ───────────────────────────────────────────

/// Complex STFT, frames x bins. Frame `t` covers samples
/// `[t*hop, t*hop + window)`.
#[derive(Debug, Clone)]
pub struct ComplexSpectrogram {
    pub values: Array2<Complex64>,
    pub config: StftConfig,
}

impl ComplexSpectrogram {
    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn bins(&self) -> usize {
        self.values.ncols()
    }

    pub fn zeros_like(&self) -> ComplexSpectrogram {
        ComplexSpectrogram {
            values: Array2::zeros(self.values.raw_dim()),
            config: self.config.clone(),
        }
    }
}

/// Log mel-filterbank energies, frames x 40, frame-aligned with the STFT.
#[derive(Debug, Clone)]
pub struct MelFeatureSequence {
    pub values: Array2<f64>,
    pub config: StftConfig,
}

impl MelFeatureSequence {
    pub fn frames(&self) -> usize {
        self.values.nrows()
    }
}

// ─── FFT plan cache ─────────────────────────────────────────────────────────

type PlanPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

static FFT_PLANS: Lazy<Mutex<HashMap<usize, PlanPair>>> = Lazy::new(|| Mutex::new(HashMap::new()));

fn fft_plans(size: usize) -> PlanPair {
    let mut cache = FFT_PLANS.lock().unwrap();
    cache
        .entry(size)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            (
                planner.plan_fft(size, FftDirection::Forward),
                planner.plan_fft(size, FftDirection::Inverse),
            )
        })
        .clone()
}

// ─── Core transforms ────────────────────────────────────────────────────────

/// Windows the signal into overlapping frames (frames x window_samples).
pub fn frame_signal(x: &Waveform, cfg: &StftConfig) -> Result<Array2<f64>> {
    let frames = cfg.frame_count(x.len())?;
    let mut out = Array2::zeros((frames, cfg.window_samples));
    let samples = x.samples();
    for t in 0..frames {
        let start = t * cfg.hop_samples;
        for n in 0..cfg.window_samples {
            out[[t, n]] = samples[start + n];
        }
    }
    Ok(out)
}

/// Overlap-adds frames (frames x window_samples) at the configured hop,
/// truncating or zero-padding to `out_len`.
pub fn overlap_add(frames: &Array2<f64>, cfg: &StftConfig, out_len: usize) -> Waveform {
    let t_count = frames.nrows();
    let natural = if t_count == 0 {
        0
    } else {
        (t_count - 1) * cfg.hop_samples + cfg.window_samples
    };
    let mut out = vec![0.0; natural.max(out_len)];
    for t in 0..t_count {
        let start = t * cfg.hop_samples;
        for n in 0..cfg.window_samples {
            out[start + n] += frames[[t, n]];
        }
    }
    out.truncate(out_len);
    out.resize(out_len, 0.0);
    Waveform::new(out)
}

/// Adjoint of `overlap_add`: scatters a gradient over the output waveform back
/// onto per-frame samples.
pub fn overlap_add_adjoint(d_wave: &[f64], cfg: &StftConfig, frames: usize) -> Array2<f64> {
    let mut out = Array2::zeros((frames, cfg.window_samples));
    for t in 0..frames {
        let start = t * cfg.hop_samples;
        for n in 0..cfg.window_samples {
            if start + n < d_wave.len() {
                out[[t, n]] = d_wave[start + n];
            }
        }
    }
    out
}

/// Short-time Fourier transform. Each frame is Hann-windowed, zero-padded to
/// `fft_size`, and transformed; bins 0..=fft_size/2 are kept.
pub fn stft(x: &Waveform, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    cfg.validate()?;
    let frames = cfg.frame_count(x.len())?;
    let bins = cfg.bins();
    let window = cfg.window();
    let (fwd, _) = fft_plans(cfg.fft_size);

    let mut values = Array2::zeros((frames, bins));
    let mut buf = vec![Complex64::default(); cfg.fft_size];
    let samples = x.samples();
    for t in 0..frames {
        let start = t * cfg.hop_samples;
        for n in 0..cfg.fft_size {
            let v = if n < cfg.window_samples {
                samples[start + n] * window[n]
            } else {
                0.0
            };
            buf[n] = Complex64::new(v, 0.0);
        }
        fwd.process(&mut buf);
        for f in 0..bins {
            values[[t, f]] = buf[f];
        }
    }
    Ok(ComplexSpectrogram {
        values,
        config: cfg.clone(),
    })
}

/// Inverse STFT by plain overlap-add. The periodic Hann window at 50% overlap
/// sums to exactly one, so the interior reconstructs without a normalization
/// pass; the first and last half-window taper.
pub fn istft(spec: &ComplexSpectrogram) -> Waveform {
    let cfg = &spec.config;
    let frames = spec.frames();
    if frames == 0 {
        return Waveform::new(Vec::new());
    }
    let (_, inv) = fft_plans(cfg.fft_size);
    let mut time_frames = Array2::zeros((frames, cfg.window_samples));
    let mut buf = vec![Complex64::default(); cfg.fft_size];
    let half = cfg.fft_size / 2;
    for t in 0..frames {
        buf[0] = spec.values[[t, 0]];
        buf[half] = spec.values[[t, half]];
        for f in 1..half {
            buf[f] = spec.values[[t, f]];
            buf[cfg.fft_size - f] = spec.values[[t, f]].conj();
        }
        inv.process(&mut buf);
        let scale = 1.0 / cfg.fft_size as f64;
        for n in 0..cfg.window_samples {
            time_frames[[t, n]] = buf[n].re * scale;
        }
    }
    let out_len = (frames - 1) * cfg.hop_samples + cfg.window_samples;
    overlap_add(&time_frames, cfg, out_len)
}

/// Adjoint of `stft` for backpropagation: maps a gradient over the complex
/// spectrogram (d/dRe + j·d/dIm per bin) to a gradient over the waveform.
///
/// Only the kept bins 0..=fft_size/2 are treated as independent outputs, so
/// `d x[n] = sum_f Re(g[f] * e^{+j 2π f n / N})`, which is the real part of an
/// unnormalized inverse FFT of the gradient padded with zeros.
pub fn stft_adjoint(d_spec: &Array2<Complex64>, cfg: &StftConfig, out_len: usize) -> Vec<f64> {
    let frames = d_spec.nrows();
    let bins = d_spec.ncols();
    let window = cfg.window();
    let (_, inv) = fft_plans(cfg.fft_size);
    let mut d_wave = vec![0.0; out_len];
    let mut buf = vec![Complex64::default(); cfg.fft_size];
    for t in 0..frames {
        for n in 0..cfg.fft_size {
            buf[n] = if n < bins {
                d_spec[[t, n]]
            } else {
                Complex64::default()
            };
        }
        inv.process(&mut buf);
        let start = t * cfg.hop_samples;
        for n in 0..cfg.window_samples {
            if start + n < out_len {
                d_wave[start + n] += buf[n].re * window[n];
            }
        }
    }
    d_wave
}

/// Power-law compression: returns (|X|^p, phase(X)) elementwise. Zero
/// magnitude maps to compressed value 0 and phase 0.
pub fn power_compress(spec: &ComplexSpectrogram, p: f64) -> Result<(Array2<f64>, Array2<f64>)> {
    if p <= 0.0 || p > 1.0 {
        return Err(Error::Config(format!(
            "compression exponent must be in (0, 1], got {p}"
        )));
    }
    let mags = spec.values.mapv(|v| v.norm().powf(p));
    let phases = spec.values.mapv(|v| if v.norm() == 0.0 { 0.0 } else { v.arg() });
    Ok((mags, phases))
}

/// Full linear convolution via FFT; output length is `x.len() + h.len() - 1`.
pub fn fft_convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let out_len = x.len() + h.len() - 1;
    let fft_len = out_len.next_power_of_two();
    let (fwd, inv) = fft_plans(fft_len);
    let mut a = vec![Complex64::default(); fft_len];
    let mut b = vec![Complex64::default(); fft_len];
    for (dst, &src) in a.iter_mut().zip(x.iter()) {
        dst.re = src;
    }
    for (dst, &src) in b.iter_mut().zip(h.iter()) {
        dst.re = src;
    }
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (av, bv) in a.iter_mut().zip(b.iter()) {
        *av *= bv;
    }
    inv.process(&mut a);
    let scale = 1.0 / fft_len as f64;
    a.iter().take(out_len).map(|v| v.re * scale).collect()
}

// ─── Mel filterbank ─────────────────────────────────────────────────────────

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filterbank spanning 0–8000 Hz.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// bands x bins weight matrix.
    pub weights: Array2<f64>,
}

impl MelFilterbank {
    pub fn new(cfg: &StftConfig) -> MelFilterbank {
        let bins = cfg.bins();
        let bands = cfg.mel_bands;
        let f_max = SAMPLE_RATE as f64 / 2.0;
        let mel_points: Vec<f64> = (0..bands + 2)
            .map(|i| mel_to_hz(hz_to_mel(f_max) * i as f64 / (bands + 1) as f64))
            .collect();
        let bin_hz: Vec<f64> = (0..bins)
            .map(|f| f as f64 * SAMPLE_RATE as f64 / cfg.fft_size as f64)
            .collect();
        let mut weights = Array2::zeros((bands, bins));
        for b in 0..bands {
            let (lo, mid, hi) = (mel_points[b], mel_points[b + 1], mel_points[b + 2]);
            for (f, &hz) in bin_hz.iter().enumerate() {
                let w = if hz >= lo && hz <= mid && mid > lo {
                    (hz - lo) / (mid - lo)
                } else if hz > mid && hz <= hi && hi > mid {
                    (hi - hz) / (hi - mid)
                } else {
                    0.0
                };
                weights[[b, f]] = w;
            }
        }
        MelFilterbank { weights }
    }

    /// Applies the filterbank to a power spectrum row (length bins).
    pub fn apply(&self, power_row: &Array1<f64>) -> Array1<f64> {
        self.weights.dot(power_row)
    }
}

/// Magnitude floor added before the log to keep silent frames finite.
pub const MEL_LOG_FLOOR: f64 = 1e-10;

/// Log mel-filterbank energies: ln(mel(|STFT|^2) + 1e-10), frame-aligned with
/// the spectrogram for the same config.
pub fn log_mel(x: &Waveform, cfg: &StftConfig) -> Result<MelFeatureSequence> {
    let spec = stft(x, cfg)?;
    let fb = MelFilterbank::new(cfg);
    Ok(log_mel_from_spectrogram(&spec, &fb))
}

/// Same as `log_mel` but reuses an existing spectrogram and filterbank.
pub fn log_mel_from_spectrogram(
    spec: &ComplexSpectrogram,
    fb: &MelFilterbank,
) -> MelFeatureSequence {
    let frames = spec.frames();
    let bands = fb.weights.nrows();
    let mut values = Array2::zeros((frames, bands));
    for t in 0..frames {
        let power: Array1<f64> = spec.values.row(t).mapv(|v| v.norm_sqr());
        let mel = fb.apply(&power);
        for b in 0..bands {
            values[[t, b]] = (mel[b] + MEL_LOG_FLOOR).ln();
        }
    }
    MelFeatureSequence {
        values,
        config: spec.config.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_wave(len: usize, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..len).map(|_| rng.random_range(-0.5..0.5)).collect())
    }

    #[test]
    fn zero_input_gives_zero_spectrogram() {
        let cfg = StftConfig::default();
        let spec = stft(&Waveform::zeros(3200), &cfg).unwrap();
        assert_eq!(spec.frames(), 19);
        assert_eq!(spec.bins(), 257);
        assert!(spec.values.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn too_short_signal_errors() {
        let cfg = StftConfig::default();
        let err = stft(&Waveform::zeros(100), &cfg).unwrap_err();
        assert!(matches!(err, Error::SignalTooShort { .. }));
    }

    #[test]
    fn impulse_frame_magnitude_is_flat() {
        // Impulse at sample 0: frame 0 content is window[0]*delta, and since
        // the periodic Hann has w[0] = 0 the spectrum is exactly zero; move
        // the impulse to sample 10 for a nonzero taper.
        let cfg = StftConfig::default();
        let mut x = vec![0.0; 3200];
        x[10] = 1.0;
        let spec = stft(&Waveform::new(x), &cfg).unwrap();
        let w = cfg.window();
        for f in 0..spec.bins() {
            assert!((spec.values[[0, f]].norm() - w[10]).abs() < 1e-12);
        }
    }

    #[test]
    fn sine_argmax_bin_matches_direct_dft() {
        let cfg = StftConfig::default();
        let x: Vec<f64> = (0..SAMPLE_RATE as usize)
            .map(|n| (2.0 * PI * 1000.0 * n as f64 / SAMPLE_RATE as f64).sin())
            .collect();
        let spec = stft(&Waveform::new(x.clone()), &cfg).unwrap();
        let expected_bin = (1000.0 / SAMPLE_RATE as f64 * cfg.fft_size as f64).round() as usize;
        assert_eq!(expected_bin, 32);
        for t in 0..spec.frames() {
            let argmax = (0..spec.bins())
                .max_by(|&a, &b| {
                    spec.values[[t, a]]
                        .norm()
                        .partial_cmp(&spec.values[[t, b]].norm())
                        .unwrap()
                })
                .unwrap();
            assert_eq!(argmax, expected_bin, "frame {t}");
        }

        // One frame against a direct DFT sum.
        let w = cfg.window();
        let t = 3;
        for f in [0usize, 17, 32, 100, 256] {
            let mut acc = Complex64::default();
            for n in 0..cfg.window_samples {
                let v = x[t * cfg.hop_samples + n] * w[n];
                let ang = -2.0 * PI * f as f64 * n as f64 / cfg.fft_size as f64;
                acc += Complex64::new(v * ang.cos(), v * ang.sin());
            }
            let got = spec.values[[t, f]];
            assert!((got - acc).norm() < 1e-9, "bin {f}: {got} vs {acc}");
        }
    }

    #[test]
    fn istft_roundtrip_interior() {
        let cfg = StftConfig::default();
        let x = random_wave(16000, 7);
        let spec = stft(&x, &cfg).unwrap();
        let y = istft(&spec);
        let lo = cfg.window_samples;
        let hi = y.len() - cfg.window_samples;
        let max_err = (lo..hi)
            .map(|n| (x.samples()[n] - y.samples()[n]).abs())
            .fold(0.0f64, f64::max);
        assert!(max_err < 1e-6, "interior error {max_err}");
    }

    #[test]
    fn istft_zero_spectrogram_is_zero() {
        let cfg = StftConfig::default();
        let spec = stft(&Waveform::zeros(3200), &cfg).unwrap();
        let y = istft(&spec);
        assert!(y.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn istft_single_frame_returns_windowed_segment() {
        let cfg = StftConfig::default();
        let sine: Vec<f64> = (0..cfg.window_samples)
            .map(|n| (2.0 * PI * 500.0 * n as f64 / SAMPLE_RATE as f64).sin())
            .collect();
        let spec = stft(&Waveform::new(sine.clone()), &cfg).unwrap();
        assert_eq!(spec.frames(), 1);
        let y = istft(&spec);
        let w = cfg.window();
        for n in 0..cfg.window_samples {
            assert!(
                (y.samples()[n] - w[n] * sine[n]).abs() < 1e-9,
                "sample {n}"
            );
        }
    }

    #[test]
    fn stft_frames_are_causal() {
        let cfg = StftConfig::default();
        let x = random_wave(4800, 11);
        let spec = stft(&x, &cfg).unwrap();
        // Perturb samples beyond frame 5's span; frames <= 5 must not change.
        let boundary = 5 * cfg.hop_samples + cfg.window_samples;
        let mut y = x.clone();
        for n in boundary..y.len() {
            y.samples_mut()[n] = 0.42 - y.samples()[n];
        }
        let spec2 = stft(&y, &cfg).unwrap();
        for t in 0..=5 {
            for f in 0..spec.bins() {
                assert_eq!(spec.values[[t, f]], spec2.values[[t, f]]);
            }
        }
    }

    #[test]
    fn power_compress_conventions() {
        let cfg = StftConfig::default();
        let mut spec = stft(&Waveform::zeros(3200), &cfg).unwrap();
        spec.values[[0, 0]] = Complex64::new(1.0, 0.0);
        spec.values[[0, 1]] = Complex64::new(0.0, 4.0);
        for p in [0.3, 0.5, 1.0] {
            let (mags, phases) = power_compress(&spec, p).unwrap();
            assert!((mags[[0, 0]] - 1.0).abs() < 1e-15);
            assert_eq!(mags[[1, 0]], 0.0);
            assert_eq!(phases[[1, 0]], 0.0);
            if p == 0.5 {
                assert!((mags[[0, 1]] - 2.0).abs() < 1e-12);
            }
        }
        assert!(power_compress(&spec, 0.0).is_err());
        assert!(power_compress(&spec, -0.3).is_err());
    }

    #[test]
    fn power_compress_identity_at_p1_and_monotone() {
        let cfg = StftConfig::default();
        let x = random_wave(3200, 3);
        let spec = stft(&x, &cfg).unwrap();
        let (m1, _) = power_compress(&spec, 1.0).unwrap();
        for (v, m) in spec.values.iter().zip(m1.iter()) {
            assert!((v.norm() - m).abs() < 1e-12);
        }
        let (m03, _) = power_compress(&spec, 0.3).unwrap();
        // Monotone: sort order of magnitudes is preserved.
        let mut idx: Vec<usize> = (0..m1.len()).collect();
        let f1: Vec<f64> = m1.iter().cloned().collect();
        let f03: Vec<f64> = m03.iter().cloned().collect();
        idx.sort_by(|&a, &b| f1[a].partial_cmp(&f1[b]).unwrap());
        for w in idx.windows(2) {
            assert!(f03[w[0]] <= f03[w[1]] + 1e-15);
        }
    }

    #[test]
    fn log_mel_zero_input_is_log_floor() {
        let cfg = StftConfig::default();
        let mel = log_mel(&Waveform::zeros(3200), &cfg).unwrap();
        let expect = MEL_LOG_FLOOR.ln();
        assert!(mel.values.iter().all(|&v| (v - expect).abs() < 1e-12));
    }

    #[test]
    fn log_mel_doubling_amplitude_adds_log4() {
        let cfg = StftConfig::default();
        // Tone plus a noise floor so every frame has energy far above 1e-10.
        let mut x = random_wave(4800, 5);
        for (n, s) in x.samples_mut().iter_mut().enumerate() {
            *s = 0.3 * (2.0 * PI * 440.0 * n as f64 / SAMPLE_RATE as f64).sin() + 0.01 * *s;
        }
        let mut x2 = x.clone();
        x2.scale(2.0);
        let a = log_mel(&x, &cfg).unwrap();
        let b = log_mel(&x2, &cfg).unwrap();
        for (va, vb) in a.values.iter().zip(b.values.iter()) {
            assert!((vb - va - 4f64.ln()).abs() < 1e-6);
        }
    }

    #[test]
    fn log_mel_matches_triangular_filter_oracle() {
        let cfg = StftConfig::default();
        let x = random_wave(4800, 9);
        let spec = stft(&x, &cfg).unwrap();
        let mel = log_mel(&x, &cfg).unwrap();
        assert_eq!(mel.frames(), spec.frames());

        // Brute-force oracle: rebuild each triangle from the mel break points
        // and sum bin powers directly.
        let f_max = SAMPLE_RATE as f64 / 2.0;
        let bands = cfg.mel_bands;
        let mel_points: Vec<f64> = (0..bands + 2)
            .map(|i| mel_to_hz(hz_to_mel(f_max) * i as f64 / (bands + 1) as f64))
            .collect();
        for t in [0usize, 7, mel.frames() - 1] {
            for b in 0..bands {
                let (lo, mid, hi) = (mel_points[b], mel_points[b + 1], mel_points[b + 2]);
                let mut acc = 0.0;
                for f in 0..cfg.bins() {
                    let hz = f as f64 * SAMPLE_RATE as f64 / cfg.fft_size as f64;
                    let w = if hz >= lo && hz <= mid {
                        (hz - lo) / (mid - lo)
                    } else if hz > mid && hz <= hi {
                        (hi - hz) / (hi - mid)
                    } else {
                        0.0
                    };
                    acc += w * spec.values[[t, f]].norm_sqr();
                }
                let expect = (acc + MEL_LOG_FLOOR).ln();
                let got = mel.values[[t, b]];
                assert!(
                    (got - expect).abs() / expect.abs().max(1.0) < 1e-6,
                    "frame {t} band {b}: {got} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn fft_convolve_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x: Vec<f64> = (0..200).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..37).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fast = fft_convolve(&x, &h);
        assert_eq!(fast.len(), 236);
        for n in 0..fast.len() {
            let mut acc = 0.0;
            for (k, &hv) in h.iter().enumerate() {
                if n >= k && n - k < x.len() {
                    acc += x[n - k] * hv;
                }
            }
            assert!((fast[n] - acc).abs() < 1e-9, "sample {n}");
        }
    }

    #[test]
    fn stft_adjoint_matches_finite_differences() {
        // <STFT(x), G> inner-product check: d/dx of Re<G, STFT(x)> equals the
        // adjoint applied to G.
        let cfg = StftConfig::default();
        let x = random_wave(800, 13);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let frames = cfg.frame_count(x.len()).unwrap();
        let g = Array2::from_shape_fn((frames, cfg.bins()), |_| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let loss = |w: &Waveform| -> f64 {
            let s = stft(w, &cfg).unwrap();
            s.values
                .iter()
                .zip(g.iter())
                .map(|(v, gv)| v.re * gv.re + v.im * gv.im)
                .sum()
        };
        let grad = stft_adjoint(&g, &cfg, x.len());
        let h = 1e-6;
        for n in [0usize, 100, 321, 500, 799] {
            let mut xp = x.clone();
            xp.samples_mut()[n] += h;
            let mut xm = x.clone();
            xm.samples_mut()[n] -= h;
            let fd = (loss(&xp) - loss(&xm)) / (2.0 * h);
            assert!(
                (fd - grad[n]).abs() < 1e-5 * (1.0 + fd.abs()),
                "sample {n}: fd {fd} vs analytic {}",
                grad[n]
            );
        }
    }
}
