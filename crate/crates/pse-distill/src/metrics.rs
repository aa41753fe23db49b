//! Signal-level evaluation: target-speech over-suppression (TSOS) and
//! interference-leakage energy difference, plus session report assembly.

use serde::{Deserialize, Serialize};

use crate::dsp::{frame_signal, ComplexSpectrogram, StftConfig, Waveform};
use crate::error::{Error, Result};
use crate::loss::LossConfig;

/// Per-frame over-suppression flags and their segment aggregation.
///
/// A frame is flagged when the summed over-suppression index across frequency
/// exceeds `gamma` times the summed compressed reference magnitude. Frames
/// outside the activity mask never count. Segments are maximal flagged runs
/// lasting at least one second (100 frames at the 10 ms hop).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TsosReport {
    pub frame_flags: Vec<bool>,
    pub segment_count: usize,
    pub total_oversuppressed_seconds: f64,
    pub active_mask: Vec<bool>,
}

/// Input-minus-output energy in dB; higher means more complete removal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeakageReport {
    pub delta_n_db: f64,
    pub input_energy_db: f64,
    pub output_energy_db: f64,
}

/// Energy floor before the log so a perfectly zeroed output stays finite
/// (-120 dB rather than -inf).
pub const ENERGY_FLOOR: f64 = 1e-12;

/// Relative frame-energy threshold for the activity mask: -40 dB under the
/// loudest frame.
pub const ACTIVITY_THRESHOLD_DB: f64 = -40.0;

/// Frames an active region is extended by after energy drops.
pub const ACTIVITY_HANGOVER_FRAMES: usize = 5;

/// Over-suppression report per Eq.-style flagging: per-frame comparison of
/// the rectified compressed-magnitude shortfall against the compressed
/// reference energy.
pub fn tsos(
    s: &ComplexSpectrogram,
    s_hat: &ComplexSpectrogram,
    active_mask: &[bool],
    cfg: &LossConfig,
) -> Result<TsosReport> {
    cfg.validate()?;
    if s.values.dim() != s_hat.values.dim() {
        return Err(Error::ShapeMismatch {
            left: format!("{:?}", s.values.dim()),
            right: format!("{:?}", s_hat.values.dim()),
            context: "tsos",
        });
    }
    if active_mask.len() != s.frames() {
        return Err(Error::ShapeMismatch {
            left: format!("{} frames", s.frames()),
            right: format!("{} mask entries", active_mask.len()),
            context: "tsos active mask",
        });
    }
    let frames = s.frames();
    let mut flags = vec![false; frames];
    for t in 0..frames {
        if !active_mask[t] {
            continue;
        }
        let mut os_sum = 0.0;
        let mut ref_sum = 0.0;
        for f in 0..s.bins() {
            let ms = s.values[[t, f]].norm().powf(cfg.p);
            let mh = s_hat.values[[t, f]].norm().powf(cfg.p);
            let d = ms - mh;
            if d > 0.0 {
                os_sum += d * d;
            }
            ref_sum += ms;
        }
        flags[t] = os_sum > cfg.gamma * ref_sum;
    }

    let stft_cfg = &s.config;
    let min_run = stft_cfg.frames_per_second();
    let segment_count = count_segments(&flags, min_run);
    let flagged = flags.iter().filter(|&&f| f).count();
    Ok(TsosReport {
        frame_flags: flags,
        segment_count,
        total_oversuppressed_seconds: flagged as f64 * stft_cfg.hop_seconds(),
        active_mask: active_mask.to_vec(),
    })
}

/// Counts maximal runs of `true` of length >= `min_run`.
pub fn count_segments(flags: &[bool], min_run: usize) -> usize {
    let mut count = 0;
    let mut run = 0usize;
    for &f in flags {
        if f {
            run += 1;
        } else {
            if run >= min_run {
                count += 1;
            }
            run = 0;
        }
    }
    if run >= min_run {
        count += 1;
    }
    count
}

/// Frame-level speech activity from the clean reference: a frame is active
/// when its RMS exceeds the loudest frame by the relative threshold, with a
/// short hangover so trailing low-energy speech is not clipped.
pub fn speech_activity_mask(clean: &Waveform, cfg: &StftConfig) -> Vec<bool> {
    let frames = match frame_signal(clean, cfg) {
        Ok(f) => f,
        Err(_) => return Vec::new(),
    };
    let rms: Vec<f64> = (0..frames.nrows())
        .map(|t| {
            let row = frames.row(t);
            (row.iter().map(|s| s * s).sum::<f64>() / row.len() as f64).sqrt()
        })
        .collect();
    let max_rms = rms.iter().cloned().fold(0.0f64, f64::max);
    let threshold = max_rms * 10f64.powf(ACTIVITY_THRESHOLD_DB / 20.0);
    let mut mask = vec![false; rms.len()];
    let mut hangover = 0usize;
    for (t, &e) in rms.iter().enumerate() {
        if max_rms > 0.0 && e > threshold {
            mask[t] = true;
            hangover = ACTIVITY_HANGOVER_FRAMES;
        } else if hangover > 0 {
            mask[t] = true;
            hangover -= 1;
        }
    }
    mask
}

/// Energy difference between input and residual in dB, energies floored so
/// the report stays finite for silent outputs.
pub fn delta_n(y: &Waveform, s_hat: &Waveform) -> Result<LeakageReport> {
    if y.len() != s_hat.len() {
        return Err(Error::ShapeMismatch {
            left: format!("{} samples", y.len()),
            right: format!("{} samples", s_hat.len()),
            context: "delta_n",
        });
    }
    let input_energy_db = 10.0 * y.energy().max(ENERGY_FLOOR).log10();
    let output_energy_db = 10.0 * s_hat.energy().max(ENERGY_FLOOR).log10();
    Ok(LeakageReport {
        delta_n_db: input_energy_db - output_energy_db,
        input_energy_db,
        output_energy_db,
    })
}

// ─── Session reports ────────────────────────────────────────────────────────

/// One evaluated long-form session.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionReport {
    pub session: String,
    pub scenario: String,
    pub tsos_segments: usize,
    pub tsos_seconds: f64,
    pub delta_n_db: f64,
    pub loss_config: LossConfig,
}

/// Runs the enhancement model over one session and assembles the report:
/// over-suppression on the active frames of the clean reference, and the
/// input/output energy difference (the leakage measure on target-free
/// sessions).
pub fn evaluate_session(
    model: &crate::model::PseModel,
    dvector: &crate::embed::DVector,
    session_name: &str,
    scenario: &str,
    mixture: &Waveform,
    clean_target: &Waveform,
    stft_cfg: &StftConfig,
    loss_cfg: &LossConfig,
) -> Result<SessionReport> {
    let fwd = model.forward(mixture, dvector, stft_cfg)?;
    let clean_spec = crate::dsp::stft(clean_target, stft_cfg)?;
    let est_spec = crate::dsp::stft(&fwd.output, stft_cfg)?;
    let active = speech_activity_mask(clean_target, stft_cfg);
    let tsos_report = tsos(&clean_spec, &est_spec, &active, loss_cfg)?;
    let leakage = delta_n(mixture, &fwd.output)?;
    Ok(SessionReport {
        session: session_name.to_string(),
        scenario: scenario.to_string(),
        tsos_segments: tsos_report.segment_count,
        tsos_seconds: tsos_report.total_oversuppressed_seconds,
        delta_n_db: leakage.delta_n_db,
        loss_config: loss_cfg.clone(),
    })
}

/// CSV summary across sessions: header plus one row per report.
pub fn session_csv(reports: &[SessionReport]) -> String {
    let mut out = String::from("session,scenario,tsos_segments,tsos_seconds,delta_n_db\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{:.4},{:.4}\n",
            r.session, r.scenario, r.tsos_segments, r.tsos_seconds, r.delta_n_db
        ));
    }
    out
}
