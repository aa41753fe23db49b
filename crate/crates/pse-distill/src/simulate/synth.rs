//! Synthetic speech and noise so the full pipeline runs with zero external
//! downloads. Speakers get distinct fundamental frequencies in 100–300 Hz and
//! speaker-specific formant-like resonances; utterances are harmonic sources
//! under a syllabic amplitude envelope with genuine pauses. Noise clips are
//! colored noise with optional slow amplitude modulation.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use crate::dsp::{Waveform, SAMPLE_RATE};
use crate::wav::quantize_in_place;

/// Per-speaker voice parameters, deterministic in (speaker index, corpus seed).
#[derive(Debug, Clone)]
pub struct SpeakerVoice {
    pub f0: f64,
    pub formants: [f64; 3],
    pub formant_widths: [f64; 3],
    pub syllable_rate: f64,
}

pub fn speaker_voice(index: usize, n_speakers: usize, corpus_seed: u64) -> SpeakerVoice {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(corpus_seed, 0x5eec, index as u64));
    // Fundamentals spread geometrically over 100-300 Hz.
    let ratio = if n_speakers > 1 {
        (index as f64) / ((n_speakers - 1) as f64)
    } else {
        0.5
    };
    let f0 = 100.0 * 3f64.powf(ratio) * rng.random_range(0.97..1.03);
    SpeakerVoice {
        f0,
        formants: [
            rng.random_range(350.0..850.0),
            rng.random_range(950.0..2200.0),
            rng.random_range(2300.0..3200.0),
        ],
        formant_widths: [
            rng.random_range(80.0..140.0),
            rng.random_range(100.0..180.0),
            rng.random_range(150.0..250.0),
        ],
        syllable_rate: rng.random_range(2.5..4.0),
    }
}

/// Harmonic amplitude from the formant envelope plus a gentle spectral tilt.
fn harmonic_amplitude(voice: &SpeakerVoice, freq: f64) -> f64 {
    let mut a = 0.04;
    for (f, w) in voice.formants.iter().zip(voice.formant_widths.iter()) {
        let z = (freq - f) / w;
        a += (-0.5 * z * z).exp();
    }
    a * (voice.f0 / freq).powf(0.5)
}

/// One synthetic utterance: voiced syllable bursts with pauses, slight
/// vibrato, and a whisper of aspiration noise. Output is quantized onto the
/// 16-bit grid so in-memory and on-disk corpora agree exactly.
pub fn synth_utterance(voice: &SpeakerVoice, seed: u64, seconds: f64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x07fe, 1));
    let n = (seconds * SAMPLE_RATE as f64).round() as usize;
    let fs = SAMPLE_RATE as f64;

    // Syllable envelope: alternate voiced bursts and gaps.
    let mut envelope = vec![0.0f64; n];
    let mut pos = 0usize;
    while pos < n {
        let syllable = (fs / voice.syllable_rate * rng.random_range(0.6..1.1)) as usize;
        let voiced = rng.random_bool(0.72);
        let seg = syllable.min(n - pos);
        if voiced {
            let level = rng.random_range(0.6..1.0);
            for i in 0..seg {
                // Raised cosine on/off ramps over the burst.
                let x = i as f64 / seg as f64;
                envelope[pos + i] = level * (0.5 * (1.0 - (2.0 * PI * x).cos())).min(1.0);
            }
        }
        pos += seg;
    }

    let harmonics = ((7600.0 / voice.f0).floor() as usize).clamp(1, 48);
    let phases: Vec<f64> = (0..harmonics).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let amps: Vec<f64> = (1..=harmonics)
        .map(|h| harmonic_amplitude(voice, h as f64 * voice.f0))
        .collect();
    let vibrato_phase = rng.random_range(0.0..2.0 * PI);

    let mut out = vec![0.0f64; n];
    let mut phase_acc = phases;
    for (i, o) in out.iter_mut().enumerate() {
        let t = i as f64 / fs;
        let f0_now = voice.f0 * (1.0 + 0.015 * (2.0 * PI * 4.5 * t + vibrato_phase).sin());
        let mut v = 0.0;
        for (h, (acc, a)) in phase_acc.iter_mut().zip(amps.iter()).enumerate() {
            *acc += 2.0 * PI * (h as f64 + 1.0) * f0_now / fs;
            v += a * acc.sin();
        }
        let aspiration = 0.01 * rng.random_range(-1.0..1.0);
        *o = envelope[i] * (v + aspiration);
    }

    // Normalize to a consistent speech level.
    let rms = (out.iter().map(|s| s * s).sum::<f64>() / n as f64).sqrt();
    if rms > 0.0 {
        let gain = 0.08 / rms;
        for s in &mut out {
            *s = (*s * gain).clamp(-0.95, 0.95);
        }
    }
    let mut wave = Waveform::new(out);
    quantize_in_place(&mut wave);
    wave
}

/// Colored noise clip: one-pole filtered white noise with a random tilt and
/// optional slow amplitude modulation.
pub fn synth_noise_clip(seed: u64, seconds: f64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x401e, 2));
    let n = (seconds * SAMPLE_RATE as f64).round() as usize;
    let pole = rng.random_range(0.5..0.97);
    let modulated = rng.random_bool(0.5);
    let mod_rate = rng.random_range(0.5..6.0);
    let mod_depth = rng.random_range(0.2..0.7);
    let mut out = vec![0.0f64; n];
    let mut state = 0.0;
    for (i, o) in out.iter_mut().enumerate() {
        let white: f64 = rng.random_range(-1.0..1.0);
        state = pole * state + (1.0 - pole) * white;
        let mut v = state;
        if modulated {
            let t = i as f64 / SAMPLE_RATE as f64;
            v *= 1.0 - mod_depth * 0.5 * (1.0 - (2.0 * PI * mod_rate * t).cos());
        }
        *o = v;
    }
    let rms = (out.iter().map(|s| s * s).sum::<f64>() / n as f64).sqrt();
    if rms > 0.0 {
        let gain = 0.05 / rms;
        for s in &mut out {
            *s = (*s * gain).clamp(-0.95, 0.95);
        }
    }
    let mut wave = Waveform::new(out);
    quantize_in_place(&mut wave);
    wave
}

/// SplitMix-style seed combinator so derived streams never collide.
pub fn mix_seed(a: u64, tag: u64, b: u64) -> u64 {
    let mut z = a
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(tag)
        .wrapping_add(b.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
