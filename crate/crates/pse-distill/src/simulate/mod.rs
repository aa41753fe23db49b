//! Scene synthesis: rooms, SNR/SIR mixing, inactive-target injection,
//! signal-domain augmentation, and the TS1/TS2/TS3 evaluation sessions.
//! Everything is deterministic given (config seed, sample seed).

pub mod corpus;
pub mod rir;
pub mod synth;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::dsp::{fft_convolve, istft, stft, StftConfig, Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::wav::{quantize_in_place, write_wav};

pub use corpus::{Corpus, DatasetManifest, ManifestRecord, SpeakerData, SyntheticCorpusConfig};
pub use rir::{
    eyring_reflection_coeff, generate_rir, image_method_rir, schroeder_t60_estimate, RoomSpec,
    SourceGeometry, SPEED_OF_SOUND,
};
use synth::mix_seed;

// ─── Scenario and samples ───────────────────────────────────────────────────

/// TS1: target + interference + noise. TS2: target + noise. TS3: interference
/// + noise only (inactive target).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Ts1,
    Ts2,
    Ts3,
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scenario::Ts1 => write!(f, "ts1"),
            Scenario::Ts2 => write!(f, "ts2"),
            Scenario::Ts3 => write!(f, "ts3"),
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ts1" => Ok(Scenario::Ts1),
            "ts2" => Ok(Scenario::Ts2),
            "ts3" => Ok(Scenario::Ts3),
            other => Err(Error::Config(format!("unknown scenario '{other}'"))),
        }
    }
}

/// One training/evaluation unit. The mixture is always the exact sample-wise
/// sum of the stored components; inactive-target samples carry an all-zero
/// clean track.
#[derive(Debug, Clone)]
pub struct MixtureSample {
    pub mixture: Waveform,
    pub clean_target: Waveform,
    pub interference: Option<Waveform>,
    pub noise: Waveform,
    pub is_its: bool,
    pub scenario: Scenario,
    pub snr_db: f64,
    pub sir_db: Option<f64>,
    pub target_speaker_id: String,
    pub seed: u64,
}

impl MixtureSample {
    /// Max absolute deviation from mixture == clean + interference + noise.
    pub fn additivity_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.mixture.len() {
            let mut sum = self.clean_target.samples()[i] + self.noise.samples()[i];
            if let Some(interf) = &self.interference {
                sum += interf.samples()[i];
            }
            worst = worst.max((self.mixture.samples()[i] - sum).abs());
        }
        worst
    }
}

// ─── SNR mixing ─────────────────────────────────────────────────────────────

/// Tiles and truncates `x` to `out_len`, starting at `offset`.
pub fn crop_looped(x: &Waveform, offset: usize, out_len: usize) -> Waveform {
    let src = x.samples();
    assert!(!src.is_empty(), "cannot crop an empty waveform");
    let mut out = Vec::with_capacity(out_len);
    let mut idx = offset % src.len();
    for _ in 0..out_len {
        out.push(src[idx]);
        idx += 1;
        if idx == src.len() {
            idx = 0;
        }
    }
    Waveform::new(out)
}

/// Scales the contaminant so that 10*log10(P_signal / P_contaminant) hits the
/// requested value. Powers are mean squared amplitude over the whole clip.
/// Returns (scaled contaminant, achieved dB).
pub fn mix_at_snr(
    signal: &Waveform,
    contaminant: &Waveform,
    target_db: f64,
) -> Result<(Waveform, f64)> {
    if signal.len() != contaminant.len() {
        return Err(Error::ShapeMismatch {
            left: format!("{} samples", signal.len()),
            right: format!("{} samples", contaminant.len()),
            context: "mix_at_snr",
        });
    }
    let p_signal = signal.power();
    let p_cont = contaminant.power();
    if p_signal <= 0.0 || p_cont <= 0.0 {
        return Err(Error::DegenerateMix("zero-energy input"));
    }
    let gain = (p_signal / (p_cont * 10f64.powf(target_db / 10.0))).sqrt();
    let mut scaled = contaminant.clone();
    scaled.scale(gain);
    let achieved = 10.0 * (p_signal / scaled.power()).log10();
    Ok((scaled, achieved))
}

// ─── Generator configuration and plans ──────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateConfig {
    /// Probability a training sample has its target zeroed.
    pub its_prob: f64,
    /// Probability a training sample includes an interfering speaker.
    pub two_speaker_prob: f64,
    pub snr_range: (f64, f64),
    pub sir_range: (f64, f64),
    pub utterance_seconds: f64,
    /// Number of precomputed (target RIR, interferer RIR) room pairs the
    /// generator draws from.
    pub rir_pool: usize,
    pub t60_range: (f64, f64),
    /// Fraction of each speaker's utterances reserved for evaluation
    /// sessions (taken from the end of the list).
    pub eval_holdout_fraction: f64,
    pub seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            its_prob: 0.15,
            two_speaker_prob: 0.5,
            snr_range: (0.0, 15.0),
            sir_range: (0.0, 10.0),
            utterance_seconds: 4.0,
            rir_pool: 24,
            t60_range: (0.15, 0.6),
            eval_holdout_fraction: 0.25,
            seed: 0,
        }
    }
}

/// Everything a sample draw decides, before any audio is rendered. Cheap to
/// produce, so distribution checks can run over many seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePlan {
    pub seed: u64,
    pub is_its: bool,
    pub two_speaker: bool,
    pub snr_db: f64,
    pub sir_db: Option<f64>,
    pub target_speaker: usize,
    pub interferer_speaker: Option<usize>,
    pub target_utt: usize,
    pub target_offset: usize,
    pub interferer_utt: usize,
    pub interferer_offset: usize,
    pub noise_idx: usize,
    pub noise_offset: usize,
    pub rir_idx: usize,
}

/// Target and interferer responses sharing one room and microphone.
#[derive(Debug, Clone)]
pub struct RirPair {
    pub target: Waveform,
    pub interferer: Waveform,
    pub room: RoomSpec,
}

pub struct MixtureGenerator<'a> {
    pub corpus: &'a Corpus,
    pub cfg: SimulateConfig,
    rirs: Vec<RirPair>,
}

fn sample_position_at_distance(
    rng: &mut ChaCha8Rng,
    dims: &[f64; 3],
    mic: &[f64; 3],
    dist_range: (f64, f64),
    margin: f64,
) -> Option<[f64; 3]> {
    for _ in 0..500 {
        let d = rng.random_range(dist_range.0..dist_range.1);
        // Random direction via normalized cube rejection.
        let v: [f64; 3] = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if norm < 1e-3 {
            continue;
        }
        let pos = [
            mic[0] + v[0] / norm * d,
            mic[1] + v[1] / norm * d,
            mic[2] + v[2] / norm * d,
        ];
        if pos
            .iter()
            .zip(dims.iter())
            .all(|(&p, &l)| p > margin && p < l - margin)
        {
            return Some(pos);
        }
    }
    None
}

fn sample_rir_pair(cfg: &SimulateConfig, index: usize) -> Result<RirPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 0x0126, index as u64));
    for _ in 0..50 {
        let dims = [
            rng.random_range(3.2..9.8),
            rng.random_range(3.2..9.8),
            rng.random_range(3.0..4.5),
        ];
        let t60 = rng.random_range(cfg.t60_range.0..cfg.t60_range.1);
        let mic = [
            rng.random_range(1.5..dims[0] - 1.5),
            rng.random_range(1.5..dims[1] - 1.5),
            rng.random_range(1.0..dims[2] - 1.0),
        ];
        let Some(target_pos) = sample_position_at_distance(&mut rng, &dims, &mic, (0.3, 1.3), 0.1)
        else {
            continue;
        };
        let max_interferer = {
            let diag = (dims[0] * dims[0] + dims[1] * dims[1] + dims[2] * dims[2]).sqrt();
            (diag - 0.5).min(5.0)
        };
        if max_interferer <= 2.05 {
            continue;
        }
        let Some(interferer_pos) =
            sample_position_at_distance(&mut rng, &dims, &mic, (2.05, max_interferer), 0.1)
        else {
            continue;
        };
        let target_room = RoomSpec::new(dims, t60, mic, target_pos)?;
        let interferer_room = RoomSpec::new(dims, t60, mic, interferer_pos)?;
        return Ok(RirPair {
            target: generate_rir(&target_room)?,
            interferer: generate_rir(&interferer_room)?,
            room: target_room,
        });
    }
    Err(Error::Geometry(format!(
        "could not place sources for rir pair {index}"
    )))
}

impl<'a> MixtureGenerator<'a> {
    pub fn new(corpus: &'a Corpus, cfg: SimulateConfig) -> Result<MixtureGenerator<'a>> {
        corpus.validate_for_training()?;
        if !(0.0..=1.0).contains(&cfg.its_prob) || !(0.0..=1.0).contains(&cfg.two_speaker_prob) {
            return Err(Error::Config("probabilities must be in [0, 1]".into()));
        }
        let rirs = (0..cfg.rir_pool.max(1))
            .map(|i| sample_rir_pair(&cfg, i))
            .collect::<Result<Vec<_>>>()?;
        Ok(MixtureGenerator { corpus, cfg, rirs })
    }

    pub fn rir_pair(&self, idx: usize) -> &RirPair {
        &self.rirs[idx % self.rirs.len()]
    }

    fn train_utterance_count(&self, speaker: usize) -> usize {
        let n = self.corpus.speakers[speaker].utterances.len();
        let holdout = (n as f64 * self.cfg.eval_holdout_fraction).floor() as usize;
        (n - holdout).max(1)
    }

    /// Draws every decision for a training sample. Fixed draw order keeps
    /// plans bit-stable across runs.
    pub fn plan(&self, sample_seed: u64) -> SamplePlan {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.cfg.seed, 0x3a11, sample_seed));
        let is_its = rng.random_bool(self.cfg.its_prob);
        let two_speaker = rng.random_bool(self.cfg.two_speaker_prob);
        self.plan_with(&mut rng, sample_seed, is_its, two_speaker, None)
    }

    /// Scenario-forced plan for evaluation sessions.
    pub fn plan_for_scenario(
        &self,
        sample_seed: u64,
        scenario: Scenario,
        target_speaker: usize,
    ) -> SamplePlan {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.cfg.seed, 0xe7a1, sample_seed));
        let (is_its, two_speaker) = match scenario {
            Scenario::Ts1 => (false, true),
            Scenario::Ts2 => (false, false),
            Scenario::Ts3 => (true, true),
        };
        self.plan_with(&mut rng, sample_seed, is_its, two_speaker, Some(target_speaker))
    }

    fn plan_with(
        &self,
        rng: &mut ChaCha8Rng,
        sample_seed: u64,
        is_its: bool,
        two_speaker: bool,
        forced_speaker: Option<usize>,
    ) -> SamplePlan {
        let n_speakers = self.corpus.speakers.len();
        let snr_db = rng.random_range(self.cfg.snr_range.0..self.cfg.snr_range.1);
        let sir_db = if two_speaker {
            Some(rng.random_range(self.cfg.sir_range.0..self.cfg.sir_range.1))
        } else {
            None
        };
        let target_speaker = forced_speaker.unwrap_or_else(|| rng.random_range(0..n_speakers));
        let interferer_speaker = if two_speaker {
            let mut other = rng.random_range(0..n_speakers - 1);
            if other >= target_speaker {
                other += 1;
            }
            Some(other)
        } else {
            None
        };
        let eval_mode = forced_speaker.is_some();
        let pick_utt = |rng: &mut ChaCha8Rng, speaker: usize| -> usize {
            let total = self.corpus.speakers[speaker].utterances.len();
            let train = self.train_utterance_count(speaker);
            if eval_mode && train < total {
                rng.random_range(train..total)
            } else {
                rng.random_range(0..train)
            }
        };
        let target_utt = pick_utt(rng, target_speaker);
        let target_offset = rng.random_range(0..usize::MAX / 2);
        let (interferer_utt, interferer_offset) = if let Some(spk) = interferer_speaker {
            (pick_utt(rng, spk), rng.random_range(0..usize::MAX / 2))
        } else {
            (0, 0)
        };
        let noise_idx = rng.random_range(0..self.corpus.noise.len());
        let noise_offset = rng.random_range(0..usize::MAX / 2);
        let rir_idx = rng.random_range(0..self.rirs.len());
        SamplePlan {
            seed: sample_seed,
            is_its,
            two_speaker,
            snr_db,
            sir_db,
            target_speaker,
            interferer_speaker,
            target_utt,
            target_offset,
            interferer_utt,
            interferer_offset,
            noise_idx,
            noise_offset,
            rir_idx,
        }
    }

    /// Renders a plan into audio. The mixture is built as the exact sum of
    /// the component tracks; SNR and SIR are achieved by construction.
    pub fn render(&self, plan: &SamplePlan) -> Result<MixtureSample> {
        let len = (self.cfg.utterance_seconds * SAMPLE_RATE as f64).round() as usize;
        let pair = self.rir_pair(plan.rir_idx);
        let speaker = &self.corpus.speakers[plan.target_speaker];

        let target_rev = reverberant_crop(
            &speaker.utterances[plan.target_utt % speaker.utterances.len()],
            plan.target_offset,
            len,
            &pair.target,
        )?;

        let interference_rev = if let Some(spk) = plan.interferer_speaker {
            let interferer = &self.corpus.speakers[spk];
            let rev = reverberant_crop(
                &interferer.utterances[plan.interferer_utt % interferer.utterances.len()],
                plan.interferer_offset,
                len,
                &pair.interferer,
            )?;
            let sir = plan.sir_db.expect("two-speaker plan carries sir");
            let (scaled, _) = mix_at_snr(&target_rev, &rev, sir)?;
            Some(scaled)
        } else {
            None
        };

        let noise_clip = &self.corpus.noise[plan.noise_idx % self.corpus.noise.len()];
        let noise_raw = crop_looped(noise_clip, plan.noise_offset % noise_clip.len(), len);
        let (mut noise, _) = mix_at_snr(&target_rev, &noise_raw, plan.snr_db)?;

        let mut clean_target = if plan.is_its {
            Waveform::zeros(len)
        } else {
            target_rev
        };
        let mut interference = interference_rev;

        // Headroom guard: scale all components together so ratios survive.
        let mut peak = 0.0f64;
        for i in 0..len {
            let mut v = clean_target.samples()[i] + noise.samples()[i];
            if let Some(interf) = &interference {
                v += interf.samples()[i];
            }
            peak = peak.max(v.abs());
        }
        if peak > 0.95 {
            let g = 0.9 / peak;
            clean_target.scale(g);
            noise.scale(g);
            if let Some(interf) = &mut interference {
                interf.scale(g);
            }
        }

        let mut mixture = clean_target.clone();
        mixture.add(&noise);
        if let Some(interf) = &interference {
            mixture.add(interf);
        }

        let scenario = if plan.is_its {
            Scenario::Ts3
        } else if plan.two_speaker {
            Scenario::Ts1
        } else {
            Scenario::Ts2
        };

        Ok(MixtureSample {
            mixture,
            clean_target,
            interference,
            noise,
            is_its: plan.is_its,
            scenario,
            snr_db: plan.snr_db,
            sir_db: plan.sir_db,
            target_speaker_id: speaker.id.clone(),
            seed: plan.seed,
        })
    }

    /// Plan + render in one call; fully deterministic given the seed.
    pub fn make_training_sample(&self, sample_seed: u64) -> Result<MixtureSample> {
        self.render(&self.plan(sample_seed))
    }
}

/// Crops (with looping) and convolves with a room response, truncated to the
/// crop length. Retries deterministic offset shifts if the crop is silent.
fn reverberant_crop(utt: &Waveform, offset: usize, len: usize, rir: &Waveform) -> Result<Waveform> {
    let mut shift = 0usize;
    for _ in 0..8 {
        let dry = crop_looped(utt, (offset + shift) % utt.len(), len);
        if dry.power() > 1e-10 {
            let full = fft_convolve(dry.samples(), rir.samples());
            return Ok(Waveform::new(full[..len].to_vec()));
        }
        shift += len / 2 + 97;
    }
    Err(Error::DegenerateMix("utterance crop has no energy"))
}

// ─── Signal-domain augmentation ─────────────────────────────────────────────

/// Up to two short time-segment attenuations and up to one band-stop filter,
/// applied to the mixture only, never to references.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpecAugmentConfig {
    pub max_time_masks: usize,
    pub max_mask_ms: f64,
    pub gain_range: (f64, f64),
    pub bandstop_prob: f64,
    pub max_band_hz: f64,
}

impl Default for SpecAugmentConfig {
    fn default() -> Self {
        SpecAugmentConfig {
            max_time_masks: 2,
            max_mask_ms: 100.0,
            gain_range: (0.0, 0.5),
            bandstop_prob: 0.5,
            max_band_hz: 1000.0,
        }
    }
}

impl SpecAugmentConfig {
    /// Identity configuration: no masks, no filter.
    pub fn disabled() -> SpecAugmentConfig {
        SpecAugmentConfig {
            max_time_masks: 0,
            bandstop_prob: 0.0,
            ..SpecAugmentConfig::default()
        }
    }
}

/// Attenuates `[start, start+len)` by `gain` in place.
pub fn apply_time_mask(x: &mut Waveform, start: usize, len: usize, gain: f64) {
    let end = (start + len).min(x.len());
    for s in &mut x.samples_mut()[start.min(end)..end] {
        *s *= gain;
    }
}

/// Removes the band [lo_hz, hi_hz] by zeroing STFT bins (one bin of margin on
/// each side). The signal is padded so the filtered interior reconstructs
/// exactly outside the band.
pub fn apply_band_stop(x: &Waveform, lo_hz: f64, hi_hz: f64) -> Waveform {
    let cfg = StftConfig::default();
    let pad = cfg.window_samples;
    let mut padded = vec![0.0; x.len() + 3 * pad];
    padded[pad..pad + x.len()].copy_from_slice(x.samples());
    let mut spec = stft(&Waveform::new(padded), &cfg).expect("padded signal exceeds one window");
    let bin_hz = SAMPLE_RATE as f64 / cfg.fft_size as f64;
    for f in 0..spec.bins() {
        let center = f as f64 * bin_hz;
        if center >= lo_hz - bin_hz && center <= hi_hz + bin_hz {
            for t in 0..spec.frames() {
                spec.values[[t, f]] = num_complex::Complex64::new(0.0, 0.0);
            }
        }
    }
    let y = istft(&spec);
    Waveform::new(y.samples()[pad..pad + x.len()].to_vec())
}

/// Draws and applies the augmentation recipe.
pub fn signal_specaugment(
    x: &Waveform,
    rng: &mut ChaCha8Rng,
    cfg: &SpecAugmentConfig,
) -> Waveform {
    let mut out = x.clone();
    if cfg.max_time_masks > 0 {
        let n_masks = rng.random_range(0..=cfg.max_time_masks);
        let max_len = ((cfg.max_mask_ms / 1000.0) * SAMPLE_RATE as f64) as usize;
        for _ in 0..n_masks {
            let start = rng.random_range(0..out.len().max(1));
            let len = rng.random_range(1..=max_len.max(1));
            let gain = rng.random_range(cfg.gain_range.0..cfg.gain_range.1.max(cfg.gain_range.0 + 1e-9));
            apply_time_mask(&mut out, start, len, gain);
        }
    }
    if cfg.bandstop_prob > 0.0 && rng.random_bool(cfg.bandstop_prob) {
        let width = rng.random_range(100.0..cfg.max_band_hz.max(101.0));
        let center = rng.random_range(400.0..7000.0);
        let lo = (center - width / 2.0).max(50.0);
        let hi = (center + width / 2.0).min(7900.0);
        out = apply_band_stop(&out, lo, hi);
    }
    out
}

// ─── Evaluation sessions ────────────────────────────────────────────────────

/// One long-form session: consecutive mixtures from the same target speaker
/// concatenated into a single track per component.
#[derive(Debug, Clone)]
pub struct EvalSession {
    pub speaker_id: String,
    pub scenario: Scenario,
    pub mixture: Waveform,
    pub clean_target: Waveform,
    pub interference: Waveform,
    pub noise: Waveform,
    pub seed: u64,
    pub clip_count: usize,
}

/// Builds one session for (speaker, scenario) from held-out utterances.
/// TS3 sessions contain no target speech anywhere.
pub fn build_eval_session(
    generator: &MixtureGenerator<'_>,
    speaker: usize,
    scenario: Scenario,
    session_seed: u64,
    clips: usize,
) -> Result<EvalSession> {
    if clips == 0 {
        return Err(Error::Config("session needs at least one clip".into()));
    }
    let speaker_data = &generator.corpus.speakers[speaker];
    if speaker_data.enrollment.is_empty() {
        return Err(Error::CorpusTooSmall(format!(
            "speaker {} has no enrollment utterances",
            speaker_data.id
        )));
    }
    let mut mixture = Vec::new();
    let mut clean = Vec::new();
    let mut interference = Vec::new();
    let mut noise = Vec::new();
    for clip in 0..clips {
        let clip_seed = mix_seed(session_seed, 0x5e55, clip as u64);
        let plan = generator.plan_for_scenario(clip_seed, scenario, speaker);
        let sample = generator.render(&plan)?;
        mixture.extend_from_slice(sample.mixture.samples());
        clean.extend_from_slice(sample.clean_target.samples());
        match &sample.interference {
            Some(interf) => interference.extend_from_slice(interf.samples()),
            None => interference.extend(std::iter::repeat(0.0).take(sample.mixture.len())),
        }
        noise.extend_from_slice(sample.noise.samples());
    }
    Ok(EvalSession {
        speaker_id: speaker_data.id.clone(),
        scenario,
        mixture: Waveform::new(mixture),
        clean_target: Waveform::new(clean),
        interference: Waveform::new(interference),
        noise: Waveform::new(noise),
        seed: session_seed,
        clip_count: clips,
    })
}

// ─── Dataset writers ────────────────────────────────────────────────────────

fn write_enrollment(corpus: &Corpus, speaker: usize, out_dir: &Path) -> Result<Vec<String>> {
    let data = &corpus.speakers[speaker];
    let mut paths = Vec::new();
    for (i, wave) in data.enrollment.iter().enumerate() {
        let rel = format!("enroll/{}/e{i:03}.wav", data.id);
        let path = out_dir.join(&rel);
        if !path.exists() {
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            write_wav(&path, wave)?;
        }
        paths.push(rel);
    }
    Ok(paths)
}

/// Quantizes components onto the WAV grid and rebuilds the mixture as their
/// exact sum so additivity holds on disk, then writes all tracks.
fn write_sample_tracks(
    sample: &MixtureSample,
    out_dir: &Path,
    stem: &str,
) -> Result<(String, String, Option<String>, String)> {
    let mut clean = sample.clean_target.clone();
    let mut noise = sample.noise.clone();
    let mut interference = sample.interference.clone();
    quantize_in_place(&mut clean);
    quantize_in_place(&mut noise);
    if let Some(interf) = &mut interference {
        quantize_in_place(interf);
    }
    let mut mixture = clean.clone();
    mixture.add(&noise);
    if let Some(interf) = &interference {
        mixture.add(interf);
    }

    let rel_mix = format!("{stem}_mixture.wav");
    let rel_clean = format!("{stem}_clean.wav");
    let rel_noise = format!("{stem}_noise.wav");
    write_wav(&out_dir.join(&rel_mix), &mixture)?;
    write_wav(&out_dir.join(&rel_clean), &clean)?;
    write_wav(&out_dir.join(&rel_noise), &noise)?;
    let rel_interf = if let Some(interf) = &interference {
        let rel = format!("{stem}_interference.wav");
        write_wav(&out_dir.join(&rel), interf)?;
        Some(rel)
    } else {
        None
    };
    Ok((rel_mix, rel_clean, rel_interf, rel_noise))
}

/// Renders `hours` of training data to `out_dir` and returns the manifest
/// (also written as `manifest.jsonl`).
pub fn write_training_set(
    generator: &MixtureGenerator<'_>,
    out_dir: &Path,
    hours: f64,
) -> Result<DatasetManifest> {
    let count = ((hours * 3600.0) / generator.cfg.utterance_seconds).ceil() as u64;
    std::fs::create_dir_all(out_dir.join("samples"))?;
    let mut manifest = DatasetManifest::default();
    for seed in 0..count {
        let plan = generator.plan(seed);
        let sample = generator.render(&plan)?;
        let stem = format!("samples/{seed:06}");
        let (mixture, clean_target, interference, noise) =
            write_sample_tracks(&sample, out_dir, &stem)?;
        let enrollment = write_enrollment(generator.corpus, plan.target_speaker, out_dir)?;
        manifest.records.push(ManifestRecord {
            mixture,
            clean_target,
            interference,
            noise,
            scenario: sample.scenario,
            snr_db: sample.snr_db,
            sir_db: sample.sir_db,
            is_its: sample.is_its,
            target_speaker_id: sample.target_speaker_id.clone(),
            enrollment,
            seed,
        });
    }
    manifest.save_jsonl(&out_dir.join("manifest.jsonl"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::stft;

    fn tiny_corpus() -> Corpus {
        SyntheticCorpusConfig {
            speakers: 4,
            utterances_per_speaker: 4,
            enroll_per_speaker: 1,
            noise_clips: 3,
            utterance_seconds: 2.0,
            seed: 11,
        }
        .build()
    }

    fn tiny_sim_cfg() -> SimulateConfig {
        SimulateConfig {
            utterance_seconds: 2.0,
            rir_pool: 2,
            t60_range: (0.15, 0.3),
            seed: 5,
            ..SimulateConfig::default()
        }
    }

    #[test]
    fn mix_at_snr_analytic_cases() {
        let a = Waveform::new(vec![0.5; 1000]);
        let b = Waveform::new(vec![-0.5; 1000]);
        let (scaled, achieved) = mix_at_snr(&a, &b, 0.0).unwrap();
        assert!((achieved - 0.0).abs() < 1e-12);
        assert!((scaled.samples()[0].abs() - 0.5).abs() < 1e-12);

        let (scaled, achieved) = mix_at_snr(&a, &b, 20.0).unwrap();
        assert!((achieved - 20.0).abs() < 1e-12);
        assert!((scaled.samples()[0].abs() - 0.05).abs() < 1e-12);

        assert!(mix_at_snr(&a, &Waveform::zeros(1000), 5.0).is_err());
        assert!(mix_at_snr(&Waveform::zeros(1000), &b, 5.0).is_err());
    }

    #[test]
    fn mix_at_snr_matches_independent_power_oracle() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Waveform::new((0..4000).map(|_| rng.random_range(-0.4..0.4)).collect());
        let b = Waveform::new((0..4000).map(|_| rng.random_range(-0.7..0.7)).collect());
        let (scaled, achieved) = mix_at_snr(&a, &b, 7.3).unwrap();
        // Oracle: recompute powers from the outputs.
        let p_a: f64 = a.samples().iter().map(|s| s * s).sum::<f64>() / a.len() as f64;
        let p_b: f64 = scaled.samples().iter().map(|s| s * s).sum::<f64>() / scaled.len() as f64;
        let oracle = 10.0 * (p_a / p_b).log10();
        assert!((oracle - 7.3).abs() < 0.01, "oracle {oracle}");
        assert!((achieved - 7.3).abs() < 0.01);
    }

    #[test]
    fn same_seed_gives_bit_identical_samples() {
        let corpus = tiny_corpus();
        let generator = MixtureGenerator::new(&corpus, tiny_sim_cfg()).unwrap();
        let a = generator.make_training_sample(42).unwrap();
        let b = generator.make_training_sample(42).unwrap();
        assert_eq!(a.mixture.samples(), b.mixture.samples());
        assert_eq!(a.clean_target.samples(), b.clean_target.samples());
        assert_eq!(a.is_its, b.is_its);
        let c = generator.make_training_sample(43).unwrap();
        assert_ne!(a.mixture.samples(), c.mixture.samples());
    }

    #[test]
    fn its_prob_one_gives_zero_target() {
        let corpus = tiny_corpus();
        let cfg = SimulateConfig {
            its_prob: 1.0,
            ..tiny_sim_cfg()
        };
        let generator = MixtureGenerator::new(&corpus, cfg).unwrap();
        let sample = generator.make_training_sample(7).unwrap();
        assert!(sample.is_its);
        assert_eq!(sample.scenario, Scenario::Ts3);
        assert_eq!(sample.clean_target.energy(), 0.0);
        // mixture == interference + noise exactly
        assert!(sample.additivity_residual() == 0.0);
    }

    #[test]
    fn additivity_is_sample_exact() {
        let corpus = tiny_corpus();
        let generator = MixtureGenerator::new(&corpus, tiny_sim_cfg()).unwrap();
        for seed in 0..8 {
            let sample = generator.make_training_sample(seed).unwrap();
            assert_eq!(sample.additivity_residual(), 0.0, "seed {seed}");
        }
    }

    #[test]
    fn monte_carlo_fractions() {
        let corpus = tiny_corpus();
        let generator = MixtureGenerator::new(&corpus, tiny_sim_cfg()).unwrap();
        let draws = 10_000u64;
        let mut its = 0usize;
        let mut two = 0usize;
        for seed in 0..draws {
            let plan = generator.plan(seed);
            its += plan.is_its as usize;
            two += plan.two_speaker as usize;
        }
        let its_frac = its as f64 / draws as f64;
        let two_frac = two as f64 / draws as f64;
        assert!((0.13..=0.17).contains(&its_frac), "its fraction {its_frac}");
        assert!((0.47..=0.53).contains(&two_frac), "two-speaker fraction {two_frac}");
    }

    #[test]
    fn specaugment_identity_and_masks() {
        let corpus = tiny_corpus();
        let x = corpus.speakers[0].utterances[0].clone();

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let out = signal_specaugment(&x, &mut rng, &SpecAugmentConfig::disabled());
        assert_eq!(out.samples(), x.samples());

        // Full-gain (gain = 0) mask of [0.1 s, 0.2 s).
        let mut masked = x.clone();
        apply_time_mask(&mut masked, 1600, 1600, 0.0);
        assert!(masked.samples()[1600..3200].iter().all(|&s| s == 0.0));
        assert_eq!(masked.samples()[..1600], x.samples()[..1600]);
    }

    #[test]
    fn band_stop_reduces_band_energy() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let x = Waveform::new((0..16000).map(|_| rng.random_range(-0.3..0.3)).collect());
        let filtered = apply_band_stop(&x, 2000.0, 3000.0);
        assert_eq!(filtered.len(), x.len());

        // STFT band-power oracle.
        let cfg = StftConfig::default();
        let band_power = |w: &Waveform| -> f64 {
            let spec = stft(w, &cfg).unwrap();
            let bin_hz = SAMPLE_RATE as f64 / cfg.fft_size as f64;
            let mut acc = 0.0;
            for f in 0..spec.bins() {
                let hz = f as f64 * bin_hz;
                if (2000.0..=3000.0).contains(&hz) {
                    for t in 0..spec.frames() {
                        acc += spec.values[[t, f]].norm_sqr();
                    }
                }
            }
            acc
        };
        let before = band_power(&x);
        let after = band_power(&filtered);
        let reduction_db = 10.0 * (before / after.max(1e-30)).log10();
        assert!(reduction_db >= 20.0, "band reduction {reduction_db:.1} dB");

        // Out-of-band content survives.
        let out_of_band = |w: &Waveform| -> f64 {
            let spec = stft(w, &cfg).unwrap();
            let bin_hz = SAMPLE_RATE as f64 / cfg.fft_size as f64;
            let mut acc = 0.0;
            for f in 0..spec.bins() {
                let hz = f as f64 * bin_hz;
                if hz < 1500.0 || hz > 3500.0 {
                    for t in 0..spec.frames() {
                        acc += spec.values[[t, f]].norm_sqr();
                    }
                }
            }
            acc
        };
        let kept = out_of_band(&filtered) / out_of_band(&x);
        assert!(kept > 0.9, "out-of-band kept fraction {kept}");
    }

    #[test]
    fn eval_sessions_respect_scenarios() {
        let corpus = tiny_corpus();
        let generator = MixtureGenerator::new(&corpus, tiny_sim_cfg()).unwrap();
        let clips = 3;
        let clip_len = (2.0 * SAMPLE_RATE as f64) as usize;

        let ts3 = build_eval_session(&generator, 1, Scenario::Ts3, 9, clips).unwrap();
        assert_eq!(ts3.clean_target.energy(), 0.0);
        assert_eq!(ts3.mixture.len(), clips * clip_len);

        let ts2 = build_eval_session(&generator, 1, Scenario::Ts2, 9, clips).unwrap();
        assert_eq!(ts2.interference.energy(), 0.0);
        assert!(ts2.clean_target.energy() > 0.0);

        let ts1 = build_eval_session(&generator, 1, Scenario::Ts1, 9, clips).unwrap();
        assert!(ts1.interference.energy() > 0.0);

        // Determinism.
        let again = build_eval_session(&generator, 1, Scenario::Ts1, 9, clips).unwrap();
        assert_eq!(ts1.mixture.samples(), again.mixture.samples());
    }

    #[test]
    fn achieved_snr_matches_request() {
        let corpus = tiny_corpus();
        let cfg = SimulateConfig {
            its_prob: 0.0,
            ..tiny_sim_cfg()
        };
        let generator = MixtureGenerator::new(&corpus, cfg).unwrap();
        for seed in 0..20 {
            let plan = generator.plan(seed);
            let sample = generator.render(&plan).unwrap();
            // Independent oracle over the rendered tracks.
            let p_s = sample.clean_target.power();
            let p_n = sample.noise.power();
            let snr = 10.0 * (p_s / p_n).log10();
            assert!(
                (snr - plan.snr_db).abs() < 0.01,
                "seed {seed}: snr {snr} vs requested {}",
                plan.snr_db
            );
            if let (Some(interf), Some(sir_req)) = (&sample.interference, plan.sir_db) {
                let sir = 10.0 * (p_s / interf.power()).log10();
                assert!((sir - sir_req).abs() < 0.01, "seed {seed}: sir {sir} vs {sir_req}");
            }
        }
    }
}

/// Renders one session per speaker for a scenario and returns the manifest
/// (also written as `manifest.jsonl` under the scenario directory).
pub fn write_eval_sessions(
    generator: &MixtureGenerator<'_>,
    out_dir: &Path,
    scenario: Scenario,
    speakers: &[usize],
    clips_per_session: usize,
    seed: u64,
) -> Result<DatasetManifest> {
    let scen_dir = out_dir.join(scenario.to_string());
    std::fs::create_dir_all(&scen_dir)?;
    let mut manifest = DatasetManifest::default();
    for (i, &speaker) in speakers.iter().enumerate() {
        let session_seed = mix_seed(seed, 0xeea1, i as u64);
        let session = build_eval_session(generator, speaker, scenario, session_seed, clips_per_session)?;
        // Per-clip SNR/SIR vary inside a session; the record stores the
        // session-level seed that regenerates them.
        let sample = MixtureSample {
            mixture: session.mixture.clone(),
            clean_target: session.clean_target.clone(),
            interference: Some(session.interference.clone()),
            noise: session.noise.clone(),
            is_its: scenario == Scenario::Ts3,
            scenario,
            snr_db: 0.0,
            sir_db: None,
            target_speaker_id: session.speaker_id.clone(),
            seed: session_seed,
        };
        let stem = format!("{}/{}", scenario, session.speaker_id);
        let (mixture, clean_target, interference, noise) =
            write_sample_tracks(&sample, out_dir, &stem)?;
        let enrollment = write_enrollment(generator.corpus, speaker, out_dir)?;
        manifest.records.push(ManifestRecord {
            mixture,
            clean_target,
            interference,
            noise,
            scenario,
            snr_db: 0.0,
            sir_db: None,
            is_its: scenario == Scenario::Ts3,
            target_speaker_id: session.speaker_id.clone(),
            enrollment,
            seed: session_seed,
        });
    }
    manifest.save_jsonl(&scen_dir.join("manifest.jsonl"))?;
    Ok(manifest)
}
