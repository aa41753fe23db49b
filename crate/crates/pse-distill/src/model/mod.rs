//! Causal personalized speech enhancement network and the personalized voice
//! activity detector used as the distillation teacher.
//!
//! The enhancement model follows a learnable encoder/decoder design: a strided
//! frame encoder, a stack of LSTM blocks conditioned on the speaker embedding,
//! a mask head multiplied back onto the encoded features, and an overlap-add
//! decoder. The detector replaces the learnable encoder with log-mel features
//! and the mask/decoder with a two-way softmax. Both are strictly causal.

pub mod checkpoint;
pub mod layers;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{
    frame_signal, log_mel, overlap_add, overlap_add_adjoint, MelFilterbank, StftConfig, Waveform,
};
use crate::embed::DVector;
use crate::error::{Error, Result};
use layers::{relu, relu_backward, Linear, LstmBlock, LstmBlockCache, TensorMut, TensorRef};

// ─── Configuration ──────────────────────────────────────────────────────────

/// Enhancement model dimensions. The toy profile trains on a CPU in minutes;
/// the paper-scale profile is retained for documentation and shares the same
/// code path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseConfig {
    pub encoder_filters: usize,
    pub encoder_kernel: usize,
    pub encoder_stride: usize,
    pub lstm_blocks: usize,
    pub lstm_dim: usize,
    pub ffn_dim: usize,
    pub dvector_dim: usize,
    pub init_seed: u64,
}

impl Default for PseConfig {
    fn default() -> Self {
        PseConfig::toy()
    }
}

impl PseConfig {
    pub fn toy() -> PseConfig {
        PseConfig {
            encoder_filters: 128,
            encoder_kernel: 320,
            encoder_stride: 160,
            lstm_blocks: 2,
            lstm_dim: 48,
            ffn_dim: 96,
            dvector_dim: crate::embed::DVECTOR_DIM,
            init_seed: 17,
        }
    }

    pub fn paper_scale() -> PseConfig {
        PseConfig {
            encoder_filters: 2048,
            encoder_kernel: 320,
            encoder_stride: 160,
            lstm_blocks: 4,
            lstm_dim: 256,
            ffn_dim: 1024,
            dvector_dim: crate::embed::DVECTOR_DIM,
            init_seed: 17,
        }
    }

    pub fn validate(&self, stft: &StftConfig) -> Result<()> {
        if self.encoder_kernel != stft.window_samples || self.encoder_stride != stft.hop_samples {
            return Err(Error::Config(format!(
                "encoder kernel/stride ({}/{}) must match the analysis window/hop ({}/{})",
                self.encoder_kernel, self.encoder_stride, stft.window_samples, stft.hop_samples
            )));
        }
        for (name, v) in [
            ("encoder_filters", self.encoder_filters),
            ("lstm_blocks", self.lstm_blocks),
            ("lstm_dim", self.lstm_dim),
            ("ffn_dim", self.ffn_dim),
            ("dvector_dim", self.dvector_dim),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }
}

/// Detector dimensions; input is 40 log-mel bands frame-aligned with the
/// enhancement model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvadConfig {
    pub input_dim: usize,
    pub lstm_blocks: usize,
    pub lstm_dim: usize,
    pub ffn_dim: usize,
    pub dvector_dim: usize,
    pub init_seed: u64,
}

impl Default for PvadConfig {
    fn default() -> Self {
        PvadConfig::toy()
    }
}

impl PvadConfig {
    pub fn toy() -> PvadConfig {
        PvadConfig {
            input_dim: 40,
            lstm_blocks: 2,
            lstm_dim: 48,
            ffn_dim: 96,
            dvector_dim: crate::embed::DVECTOR_DIM,
            init_seed: 23,
        }
    }

    pub fn paper_scale() -> PvadConfig {
        PvadConfig {
            input_dim: 40,
            lstm_blocks: 3,
            lstm_dim: 256,
            ffn_dim: 1024,
            dvector_dim: crate::embed::DVECTOR_DIM,
            init_seed: 23,
        }
    }

    pub fn validate(&self, stft: &StftConfig) -> Result<()> {
        if self.input_dim != stft.mel_bands {
            return Err(Error::Config(format!(
                "pvad input_dim ({}) must equal the mel band count ({})",
                self.input_dim, stft.mel_bands
            )));
        }
        if self.lstm_blocks == 0 || self.lstm_dim == 0 || self.ffn_dim == 0 {
            return Err(Error::Config("pvad dims must be >= 1".into()));
        }
        Ok(())
    }
}

// ─── Sequence types ─────────────────────────────────────────────────────────

/// Per-frame target-speaker probability from the detector.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePosteriorSequence {
    values: Vec<f64>,
}

impl FramePosteriorSequence {
    pub fn new(values: Vec<f64>) -> Result<FramePosteriorSequence> {
        if values.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::Config("posterior outside [0, 1]".into()));
        }
        Ok(FramePosteriorSequence { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Nonnegative per-frame feature masks produced by the mask head.
#[derive(Debug, Clone)]
pub struct MaskSequence {
    pub values: Array2<f64>,
}

// ─── Enhancement model ──────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct PseModel {
    pub cfg: PseConfig,
    pub encoder: Linear,
    pub blocks: Vec<LstmBlock>,
    pub mask_head: Linear,
    pub decoder: Linear,
}

/// Forward-pass result with the caches backward needs.
pub struct PseForward {
    pub output: Waveform,
    pub mask: MaskSequence,
    input_len: usize,
    frames_in: Array2<f64>,
    enc_pre: Array2<f64>,
    enc: Array2<f64>,
    features: Array2<f64>,
    block_caches: Vec<LstmBlockCache>,
    last_output: Option<Array2<f64>>,
    mask_pre: Array2<f64>,
    masked: Array2<f64>,
}

impl PseModel {
    /// Seeded fan-in uniform initialization; construction order is fixed so
    /// identical seeds give identical parameters.
    pub fn init(cfg: &PseConfig, stft: &StftConfig) -> Result<PseModel> {
        cfg.validate(stft)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
        let encoder = Linear::init(&mut rng, cfg.encoder_kernel, cfg.encoder_filters);
        let mut blocks = Vec::with_capacity(cfg.lstm_blocks);
        let mut in_dim = cfg.encoder_filters + cfg.dvector_dim;
        for _ in 0..cfg.lstm_blocks {
            blocks.push(LstmBlock::init(&mut rng, in_dim, cfg.ffn_dim, cfg.lstm_dim));
            in_dim = cfg.lstm_dim;
        }
        let mask_head = Linear::init(&mut rng, cfg.lstm_dim, cfg.encoder_filters);
        let decoder = Linear::init(&mut rng, cfg.encoder_filters, cfg.encoder_kernel);
        Ok(PseModel {
            cfg: cfg.clone(),
            encoder,
            blocks,
            mask_head,
            decoder,
        })
    }

    /// Enhances a waveform conditioned on the speaker embedding. Output has
    /// the input length. Strictly causal: output sample `n` depends only on
    /// input samples `< n + (kernel - stride)`.
    pub fn forward(&self, x: &Waveform, d: &DVector, stft: &StftConfig) -> Result<PseForward> {
        if d.dim() != self.cfg.dvector_dim {
            return Err(Error::Config(format!(
                "d-vector dim {} != model dvector_dim {}",
                d.dim(),
                self.cfg.dvector_dim
            )));
        }
        let frames_in = frame_signal(x, stft)?;
        let t_count = frames_in.nrows();
        let enc_pre = self.encoder.forward(&frames_in);
        let enc = relu(&enc_pre);

        // Speaker embedding concatenated onto every frame.
        let feat_dim = self.cfg.encoder_filters + self.cfg.dvector_dim;
        let mut features = Array2::zeros((t_count, feat_dim));
        for t in 0..t_count {
            for k in 0..self.cfg.encoder_filters {
                features[[t, k]] = enc[[t, k]];
            }
            for (k, &v) in d.values().iter().enumerate() {
                features[[t, self.cfg.encoder_filters + k]] = v;
            }
        }

        let mut block_caches = Vec::with_capacity(self.blocks.len());
        let mut h = features.clone();
        for block in &self.blocks {
            let (out, cache) = block.forward(&h);
            block_caches.push(cache);
            h = out;
        }
        let last_output = if self.blocks.is_empty() {
            None
        } else {
            Some(h.clone())
        };

        let mask_pre = self.mask_head.forward(&h);
        let mask = relu(&mask_pre);
        let masked = &mask * &enc;
        let frames_out = self.decoder.forward(&masked);
        let output = overlap_add(&frames_out, stft, x.len());

        Ok(PseForward {
            output,
            mask: MaskSequence {
                values: mask.clone(),
            },
            input_len: x.len(),
            frames_in,
            enc_pre,
            enc,
            features,
            block_caches,
            last_output,
            mask_pre,
            masked,
        })
    }

    /// Backpropagates a gradient over the output waveform; returns parameter
    /// gradients shaped as a model.
    pub fn backward(&self, fwd: &PseForward, d_wave: &[f64], stft: &StftConfig) -> PseModel {
        assert_eq!(d_wave.len(), fwd.input_len, "output gradient length");
        let t_count = fwd.frames_in.nrows();
        let d_frames_out = overlap_add_adjoint(d_wave, stft, t_count);

        let (d_masked, decoder_grads) = self.decoder.backward(&fwd.masked, &d_frames_out);
        let mask = relu(&fwd.mask_pre);
        let d_mask = &d_masked * &fwd.enc;
        let d_enc_from_mask = &d_masked * &mask;
        let d_mask_pre = relu_backward(&fwd.mask_pre, &d_mask);

        let last = fwd.last_output.as_ref().unwrap_or(&fwd.features);
        let (mut d_h, mask_grads) = self.mask_head.backward(last, &d_mask_pre);

        let mut block_grads = Vec::with_capacity(self.blocks.len());
        for (block, cache) in self.blocks.iter().zip(fwd.block_caches.iter()).rev() {
            let (dx, grads) = block.backward(cache, &d_h);
            block_grads.push(grads);
            d_h = dx;
        }
        block_grads.reverse();

        // Only the encoded-feature columns flow back; the broadcast d-vector
        // is a constant input.
        let d_enc_from_chain = d_h.slice(ndarray::s![.., ..self.cfg.encoder_filters]);
        let d_enc_total = &d_enc_from_mask + &d_enc_from_chain;
        let d_enc_pre = relu_backward(&fwd.enc_pre, &d_enc_total);
        let (_, encoder_grads) = self.encoder.backward(&fwd.frames_in, &d_enc_pre);

        let mut grads = self.zeros_like();
        grads.encoder.w = encoder_grads.w;
        grads.encoder.b = encoder_grads.b;
        for (dst, src) in grads.blocks.iter_mut().zip(block_grads) {
            dst.fc1.w = src.fc1.w;
            dst.fc1.b = src.fc1.b;
            dst.fc2.w = src.fc2.w;
            dst.fc2.b = src.fc2.b;
            dst.lstm.wx = src.lstm.wx;
            dst.lstm.wh = src.lstm.wh;
            dst.lstm.b = src.lstm.b;
            dst.norm.gamma = src.norm.gamma;
            dst.norm.beta = src.norm.beta;
        }
        grads.mask_head.w = mask_grads.w;
        grads.mask_head.b = mask_grads.b;
        grads.decoder.w = decoder_grads.w;
        grads.decoder.b = decoder_grads.b;
        grads
    }

    pub fn zeros_like(&self) -> PseModel {
        PseModel {
            cfg: self.cfg.clone(),
            encoder: self.encoder.zeros_like(),
            blocks: self.blocks.iter().map(|b| b.zeros_like()).collect(),
            mask_head: self.mask_head.zeros_like(),
            decoder: self.decoder.zeros_like(),
        }
    }

    pub fn tensors(&self) -> Vec<(String, TensorRef<'_>)> {
        let mut out: Vec<(String, TensorRef<'_>)> = vec![
            ("encoder.w".into(), TensorRef::M(&self.encoder.w)),
            ("encoder.b".into(), TensorRef::V(&self.encoder.b)),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("block{i}.fc1.w"), TensorRef::M(&b.fc1.w)));
            out.push((format!("block{i}.fc1.b"), TensorRef::V(&b.fc1.b)));
            out.push((format!("block{i}.fc2.w"), TensorRef::M(&b.fc2.w)));
            out.push((format!("block{i}.fc2.b"), TensorRef::V(&b.fc2.b)));
            out.push((format!("block{i}.lstm.wx"), TensorRef::M(&b.lstm.wx)));
            out.push((format!("block{i}.lstm.wh"), TensorRef::M(&b.lstm.wh)));
            out.push((format!("block{i}.lstm.b"), TensorRef::V(&b.lstm.b)));
            out.push((format!("block{i}.norm.gamma"), TensorRef::V(&b.norm.gamma)));
            out.push((format!("block{i}.norm.beta"), TensorRef::V(&b.norm.beta)));
        }
        out.push(("mask.w".into(), TensorRef::M(&self.mask_head.w)));
        out.push(("mask.b".into(), TensorRef::V(&self.mask_head.b)));
        out.push(("decoder.w".into(), TensorRef::M(&self.decoder.w)));
        out.push(("decoder.b".into(), TensorRef::V(&self.decoder.b)));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, TensorMut<'_>)> {
        let mut out: Vec<(String, TensorMut<'_>)> = vec![
            ("encoder.w".into(), TensorMut::M(&mut self.encoder.w)),
            ("encoder.b".into(), TensorMut::V(&mut self.encoder.b)),
        ];
        for (i, b) in self.blocks.iter_mut().enumerate() {
            out.push((format!("block{i}.fc1.w"), TensorMut::M(&mut b.fc1.w)));
            out.push((format!("block{i}.fc1.b"), TensorMut::V(&mut b.fc1.b)));
            out.push((format!("block{i}.fc2.w"), TensorMut::M(&mut b.fc2.w)));
            out.push((format!("block{i}.fc2.b"), TensorMut::V(&mut b.fc2.b)));
            out.push((format!("block{i}.lstm.wx"), TensorMut::M(&mut b.lstm.wx)));
            out.push((format!("block{i}.lstm.wh"), TensorMut::M(&mut b.lstm.wh)));
            out.push((format!("block{i}.lstm.b"), TensorMut::V(&mut b.lstm.b)));
            out.push((format!("block{i}.norm.gamma"), TensorMut::V(&mut b.norm.gamma)));
            out.push((format!("block{i}.norm.beta"), TensorMut::V(&mut b.norm.beta)));
        }
        out.push(("mask.w".into(), TensorMut::M(&mut self.mask_head.w)));
        out.push(("mask.b".into(), TensorMut::V(&mut self.mask_head.b)));
        out.push(("decoder.w".into(), TensorMut::M(&mut self.decoder.w)));
        out.push(("decoder.b".into(), TensorMut::V(&mut self.decoder.b)));
        out
    }
}

// ─── Detector model ─────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct PvadModel {
    pub cfg: PvadConfig,
    pub blocks: Vec<LstmBlock>,
    pub out: Linear,
}

pub struct PvadForward {
    /// Target-speaker probability per frame (softmax class 0).
    pub posteriors: FramePosteriorSequence,
    pub logits: Array2<f64>,
    pub probs: Array2<f64>,
    features: Array2<f64>,
    block_caches: Vec<LstmBlockCache>,
    last_output: Option<Array2<f64>>,
}

impl PvadModel {
    pub fn init(cfg: &PvadConfig, stft: &StftConfig) -> Result<PvadModel> {
        cfg.validate(stft)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
        let mut blocks = Vec::with_capacity(cfg.lstm_blocks);
        let mut in_dim = cfg.input_dim + cfg.dvector_dim;
        for _ in 0..cfg.lstm_blocks {
            blocks.push(LstmBlock::init(&mut rng, in_dim, cfg.ffn_dim, cfg.lstm_dim));
            in_dim = cfg.lstm_dim;
        }
        let out = Linear::init(&mut rng, cfg.lstm_dim, 2);
        Ok(PvadModel {
            cfg: cfg.clone(),
            blocks,
            out,
        })
    }

    /// Frame-wise target-speaker posteriors for a waveform.
    pub fn forward(&self, x: &Waveform, d: &DVector, stft: &StftConfig) -> Result<PvadForward> {
        let mel = log_mel(x, stft)?;
        self.forward_features(&mel.values, d)
    }

    /// Same, but from precomputed log-mel features (training avoids
    /// recomputing the filterbank).
    pub fn forward_features(&self, mel: &Array2<f64>, d: &DVector) -> Result<PvadForward> {
        if d.dim() != self.cfg.dvector_dim {
            return Err(Error::Config(format!(
                "d-vector dim {} != model dvector_dim {}",
                d.dim(),
                self.cfg.dvector_dim
            )));
        }
        if mel.ncols() != self.cfg.input_dim {
            return Err(Error::Config(format!(
                "feature dim {} != pvad input_dim {}",
                mel.ncols(),
                self.cfg.input_dim
            )));
        }
        let t_count = mel.nrows();
        let feat_dim = self.cfg.input_dim + self.cfg.dvector_dim;
        let mut features = Array2::zeros((t_count, feat_dim));
        for t in 0..t_count {
            for k in 0..self.cfg.input_dim {
                features[[t, k]] = mel[[t, k]];
            }
            for (k, &v) in d.values().iter().enumerate() {
                features[[t, self.cfg.input_dim + k]] = v;
            }
        }

        let mut block_caches = Vec::with_capacity(self.blocks.len());
        let mut h = features.clone();
        for block in &self.blocks {
            let (out, cache) = block.forward(&h);
            block_caches.push(cache);
            h = out;
        }
        let last_output = if self.blocks.is_empty() {
            None
        } else {
            Some(h.clone())
        };

        let logits = self.out.forward(&h);
        let mut probs = Array2::zeros((t_count, 2));
        let mut p_ts = Vec::with_capacity(t_count);
        for t in 0..t_count {
            let m = logits[[t, 0]].max(logits[[t, 1]]);
            let e0 = (logits[[t, 0]] - m).exp();
            let e1 = (logits[[t, 1]] - m).exp();
            let z = e0 + e1;
            probs[[t, 0]] = e0 / z;
            probs[[t, 1]] = e1 / z;
            p_ts.push(e0 / z);
        }
        Ok(PvadForward {
            posteriors: FramePosteriorSequence::new(p_ts)?,
            logits,
            probs,
            features,
            block_caches,
            last_output,
        })
    }

    /// Backpropagates a gradient over the logits; returns parameter grads.
    pub fn backward(&self, fwd: &PvadForward, d_logits: &Array2<f64>) -> PvadModel {
        let last = fwd.last_output.as_ref().unwrap_or(&fwd.features);
        let (mut d_h, out_grads) = self.out.backward(last, d_logits);
        let mut block_grads = Vec::with_capacity(self.blocks.len());
        for (block, cache) in self.blocks.iter().zip(fwd.block_caches.iter()).rev() {
            let (dx, grads) = block.backward(cache, &d_h);
            block_grads.push(grads);
            d_h = dx;
        }
        block_grads.reverse();

        let mut grads = self.zeros_like();
        for (dst, src) in grads.blocks.iter_mut().zip(block_grads) {
            dst.fc1.w = src.fc1.w;
            dst.fc1.b = src.fc1.b;
            dst.fc2.w = src.fc2.w;
            dst.fc2.b = src.fc2.b;
            dst.lstm.wx = src.lstm.wx;
            dst.lstm.wh = src.lstm.wh;
            dst.lstm.b = src.lstm.b;
            dst.norm.gamma = src.norm.gamma;
            dst.norm.beta = src.norm.beta;
        }
        grads.out.w = out_grads.w;
        grads.out.b = out_grads.b;
        grads
    }

    pub fn zeros_like(&self) -> PvadModel {
        PvadModel {
            cfg: self.cfg.clone(),
            blocks: self.blocks.iter().map(|b| b.zeros_like()).collect(),
            out: self.out.zeros_like(),
        }
    }

    pub fn tensors(&self) -> Vec<(String, TensorRef<'_>)> {
        let mut out: Vec<(String, TensorRef<'_>)> = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("block{i}.fc1.w"), TensorRef::M(&b.fc1.w)));
            out.push((format!("block{i}.fc1.b"), TensorRef::V(&b.fc1.b)));
            out.push((format!("block{i}.fc2.w"), TensorRef::M(&b.fc2.w)));
            out.push((format!("block{i}.fc2.b"), TensorRef::V(&b.fc2.b)));
            out.push((format!("block{i}.lstm.wx"), TensorRef::M(&b.lstm.wx)));
            out.push((format!("block{i}.lstm.wh"), TensorRef::M(&b.lstm.wh)));
            out.push((format!("block{i}.lstm.b"), TensorRef::V(&b.lstm.b)));
            out.push((format!("block{i}.norm.gamma"), TensorRef::V(&b.norm.gamma)));
            out.push((format!("block{i}.norm.beta"), TensorRef::V(&b.norm.beta)));
        }
        out.push(("out.w".into(), TensorRef::M(&self.out.w)));
        out.push(("out.b".into(), TensorRef::V(&self.out.b)));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, TensorMut<'_>)> {
        let mut out: Vec<(String, TensorMut<'_>)> = Vec::new();
        for (i, b) in self.blocks.iter_mut().enumerate() {
            out.push((format!("block{i}.fc1.w"), TensorMut::M(&mut b.fc1.w)));
            out.push((format!("block{i}.fc1.b"), TensorMut::V(&mut b.fc1.b)));
            out.push((format!("block{i}.fc2.w"), TensorMut::M(&mut b.fc2.w)));
            out.push((format!("block{i}.fc2.b"), TensorMut::V(&mut b.fc2.b)));
            out.push((format!("block{i}.lstm.wx"), TensorMut::M(&mut b.lstm.wx)));
            out.push((format!("block{i}.lstm.wh"), TensorMut::M(&mut b.lstm.wh)));
            out.push((format!("block{i}.lstm.b"), TensorMut::V(&mut b.lstm.b)));
            out.push((format!("block{i}.norm.gamma"), TensorMut::V(&mut b.norm.gamma)));
            out.push((format!("block{i}.norm.beta"), TensorMut::V(&mut b.norm.beta)));
        }
        out.push(("out.w".into(), TensorMut::M(&mut self.out.w)));
        out.push(("out.b".into(), TensorMut::V(&mut self.out.b)));
        out
    }
}

// ─── Flat parameter vector helpers (optimizer path) ─────────────────────────

pub fn flatten_tensors(tensors: &[(String, TensorRef<'_>)]) -> Vec<f64> {
    let total: usize = tensors.iter().map(|(_, t)| t.len()).sum();
    let mut out = Vec::with_capacity(total);
    for (_, t) in tensors {
        t.extend_flat(&mut out);
    }
    out
}

pub fn unflatten_tensors(tensors: &mut [(String, TensorMut<'_>)], data: &[f64]) {
    let mut offset = 0;
    for (_, t) in tensors.iter_mut() {
        let len = t.len();
        t.copy_from_flat(&data[offset..offset + len]);
        offset += len;
    }
    assert_eq!(offset, data.len(), "flat parameter length mismatch");
}

/// Mel feature pipeline shared by pVAD training and inference.
pub fn pvad_features(x: &Waveform, stft: &StftConfig, fb: &MelFilterbank) -> Result<Array2<f64>> {
    let spec = crate::dsp::stft(x, stft)?;
    Ok(crate::dsp::log_mel_from_spectrogram(&spec, fb).values)
}

/// Softmax cross-entropy over two classes with per-frame binary labels
/// (1 = target active = class 0). Returns (mean loss, dL/dlogits).
pub fn bce_softmax_loss(fwd: &PvadForward, labels: &[bool]) -> (f64, Array2<f64>) {
    let t_count = fwd.logits.nrows();
    assert_eq!(labels.len(), t_count, "label/frame count");
    let mut loss = 0.0;
    let mut d_logits = Array2::zeros((t_count, 2));
    let scale = 1.0 / t_count as f64;
    for t in 0..t_count {
        let p0 = fwd.probs[[t, 0]].max(1e-12);
        let p1 = fwd.probs[[t, 1]].max(1e-12);
        let (target0, target1) = if labels[t] { (1.0, 0.0) } else { (0.0, 1.0) };
        loss -= (target0 * p0.ln() + target1 * p1.ln()) * scale;
        d_logits[[t, 0]] = (fwd.probs[[t, 0]] - target0) * scale;
        d_logits[[t, 1]] = (fwd.probs[[t, 1]] - target1) * scale;
    }
    (loss, d_logits)
}

#[cfg(test)]
mod tests; // in tests.rs
