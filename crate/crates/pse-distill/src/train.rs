//! Two-stage training: the voice-activity teacher first (binary
//! cross-entropy on energy-derived labels), then the enhancement student with
//! on-the-fly mixtures, signal-domain augmentation, and teacher-gated losses
//! on inactive-target samples.
//!
//! Determinism: sample plans are keyed by a global sample index, augmentation
//! by (run seed, sample index), and batch gradients are reduced in index
//! order, so a rerun reproduces losses bit-for-bit regardless of worker
//! count. Every 20th sample index is held out for validation.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::{stft, stft_adjoint, MelFilterbank, StftConfig};
use crate::embed::{compute_dvector, DVector};
use crate::error::{Error, Result};
use crate::loss::{
    training_loss, training_loss_grad, LossConfig, LossVariant, TrainingLossInputs,
};
use crate::model::{
    bce_softmax_loss, flatten_tensors, unflatten_tensors, PseConfig, PseModel, PvadConfig,
    PvadModel,
};
use crate::simulate::{
    signal_specaugment, Corpus, MixtureGenerator, MixtureSample, SimulateConfig,
    SpecAugmentConfig, SyntheticCorpusConfig,
};

// ─── Run configuration ──────────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub grad_clip: f64,
    pub eval_every: usize,
    pub eval_samples: usize,
    /// Evaluations without improvement before stopping early.
    pub patience: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 2e-4,
            batch_size: 8,
            steps: 300,
            grad_clip: 5.0,
            eval_every: 25,
            eval_samples: 12,
            patience: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataConfig {
    /// Directory with speakers/, enroll/, noise/. When absent, the synthetic
    /// corpus below is built in memory.
    pub corpus_dir: Option<PathBuf>,
    pub synthetic: Option<SyntheticCorpusConfig>,
    pub simulate: SimulateConfig,
    pub specaugment: SpecAugmentConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            corpus_dir: None,
            synthetic: Some(SyntheticCorpusConfig::default()),
            simulate: SimulateConfig::default(),
            specaugment: SpecAugmentConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub loss: LossConfig,
    pub pse: PseConfig,
    pub pvad: PvadConfig,
    pub optimizer: OptimizerConfig,
    pub data: DataConfig,
    pub checkpoint_dir: PathBuf,
    pub pvad_checkpoint: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            loss: LossConfig::default(),
            pse: PseConfig::toy(),
            pvad: PvadConfig::toy(),
            optimizer: OptimizerConfig::default(),
            data: DataConfig::default(),
            checkpoint_dir: PathBuf::from("runs/default"),
            pvad_checkpoint: None,
        }
    }
}

impl RunConfig {
    pub fn load_toml(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::TomlParse(format!("{}: {e}", path.display())))
    }

    pub fn save_toml(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let text = toml::to_string_pretty(self).map_err(|e| Error::TomlParse(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Gated variants need a frozen teacher.
    pub fn validate_for_pse(&self) -> Result<()> {
        self.loss.validate()?;
        if self.loss.variant != LossVariant::Plcpa && self.pvad_checkpoint.is_none() {
            return Err(Error::MissingPrerequisite(format!(
                "loss variant '{}' requires a pvad_checkpoint (train one with train-pvad)",
                self.loss.variant
            )));
        }
        Ok(())
    }

    /// Stable hash of the resolved config, used for artifact caching.
    pub fn config_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let text = toml::to_string(self).unwrap_or_default();
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn build_corpus(&self) -> Result<Corpus> {
        if let Some(dir) = &self.data.corpus_dir {
            if dir.is_dir() {
                return Corpus::load(dir);
            }
        }
        if let Some(synth) = &self.data.synthetic {
            return Ok(synth.build());
        }
        Err(Error::MissingPrerequisite(
            "no corpus: set data.corpus_dir or data.synthetic".into(),
        ))
    }
}

/// Caps rayon workers at PSE_DISTILL_THREADS (once, process-wide).
pub fn init_thread_pool() {
    static INIT: OnceLock<()> = OnceLock::new();
    INIT.get_or_init(|| {
        if let Ok(v) = std::env::var("PSE_DISTILL_THREADS") {
            if let Ok(n) = v.parse::<usize>() {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build_global();
            }
        }
    });
}

// ─── Sample index bookkeeping ───────────────────────────────────────────────

/// Every 20th global sample index is held out for validation.
const HOLDOUT_PERIOD: u64 = 20;

fn train_index(k: u64) -> u64 {
    k + k / (HOLDOUT_PERIOD - 1)
}

fn validation_index(j: u64) -> u64 {
    (HOLDOUT_PERIOD - 1) + HOLDOUT_PERIOD * j
}

// ─── Labels ─────────────────────────────────────────────────────────────────

/// Per-frame target-speaker activity, derived from the clean reference track.
#[derive(Debug, Clone, PartialEq)]
pub struct VadLabelSequence {
    pub labels: Vec<bool>,
}

/// Energy-VAD labels on the clean target; inactive-target samples get all
/// zeros by construction (their clean track is silent).
pub fn make_vad_labels(sample: &MixtureSample, stft_cfg: &StftConfig) -> VadLabelSequence {
    VadLabelSequence {
        labels: crate::metrics::speech_activity_mask(&sample.clean_target, stft_cfg),
    }
}

// ─── Adam ───────────────────────────────────────────────────────────────────

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    fn new(dim: usize, lr: f64) -> Adam {
        Adam {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

/// Global-norm gradient clipping in place.
fn clip_gradient(grads: &mut [f64], max_norm: f64) {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            *g *= scale;
        }
    }
}

// ─── Shared helpers ─────────────────────────────────────────────────────────

/// One unit-norm embedding per corpus speaker, computed once per run from the
/// held-out enrollment utterances.
pub fn speaker_embeddings(corpus: &Corpus) -> Result<Vec<DVector>> {
    corpus
        .speakers
        .iter()
        .map(|s| compute_dvector(&s.enrollment))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub checkpoint: PathBuf,
    pub steps_run: usize,
    pub best_val_loss: f64,
    /// Validation frame accuracy (teacher training only).
    pub val_accuracy: Option<f64>,
    pub train_loss_history: Vec<f64>,
    pub val_loss_history: Vec<(usize, f64)>,
    pub config_hash: String,
    pub seed: u64,
}

fn check_finite(loss: f64, step: usize, what: &str) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::Divergence(format!(
            "{what} loss became {loss} at step {step}"
        )));
    }
    Ok(())
}

// ─── Teacher training ───────────────────────────────────────────────────────

/// Trains the voice-activity teacher with frame-wise binary cross-entropy on
/// the inactive-target-augmented dataset. Checkpoints the best validation
/// loss; stops early on a plateau.
pub fn train_pvad(cfg: &RunConfig) -> Result<TrainReport> {
    init_thread_pool();
    cfg.loss.validate()?;
    let stft_cfg = StftConfig::default();
    cfg.pvad.validate(&stft_cfg)?;
    let corpus = cfg.build_corpus()?;
    let generator = MixtureGenerator::new(&corpus, cfg.data.simulate.clone())?;
    let embeddings = speaker_embeddings(&corpus)?;
    let fb = MelFilterbank::new(&stft_cfg);

    let mut model = PvadModel::init(&cfg.pvad, &stft_cfg)?;
    let mut params = flatten_tensors(&model.tensors());
    let mut adam = Adam::new(params.len(), cfg.optimizer.learning_rate);

    let sample_loss_and_grad = |model: &PvadModel, index: u64| -> Result<(f64, f64, Vec<f64>)> {
        let sample = generator.make_training_sample(index)?;
        let speaker = generator
            .corpus
            .speaker_index(&sample.target_speaker_id)
            .expect("generator speaker id");
        let labels = make_vad_labels(&sample, &stft_cfg).labels;
        let mel = crate::model::pvad_features(&sample.mixture, &stft_cfg, &fb)?;
        let fwd = model.forward_features(&mel, &embeddings[speaker])?;
        let (loss, d_logits) = bce_softmax_loss(&fwd, &labels);
        let correct = fwd
            .posteriors
            .values()
            .iter()
            .zip(labels.iter())
            .filter(|(&p, &l)| (p >= 0.5) == l)
            .count();
        let accuracy = correct as f64 / labels.len() as f64;
        let grads = model.backward(&fwd, &d_logits);
        Ok((loss, accuracy, flatten_tensors(&grads.tensors())))
    };

    let validation = |model: &PvadModel| -> Result<(f64, f64)> {
        let n = cfg.optimizer.eval_samples.max(1) as u64;
        let results: Vec<Result<(f64, f64, Vec<f64>)>> = (0..n)
            .into_par_iter()
            .map(|j| sample_loss_and_grad(model, validation_index(j)))
            .collect();
        let mut loss_acc = 0.0;
        let mut acc_acc = 0.0;
        for r in results {
            let (l, a, _) = r?;
            loss_acc += l;
            acc_acc += a;
        }
        Ok((loss_acc / n as f64, acc_acc / n as f64))
    };

    let mut best_val = f64::INFINITY;
    let mut best_accuracy = 0.0;
    let mut since_best = 0usize;
    let mut train_history = Vec::new();
    let mut val_history = Vec::new();
    let ckpt_path = cfg.checkpoint_dir.join("pvad.ckpt");
    std::fs::create_dir_all(&cfg.checkpoint_dir)?;
    cfg.save_toml(&cfg.checkpoint_dir.join("run_config.toml"))?;

    let mut steps_run = 0usize;
    for step in 0..cfg.optimizer.steps {
        let base = (step * cfg.optimizer.batch_size) as u64;
        let indices: Vec<u64> = (0..cfg.optimizer.batch_size as u64)
            .map(|j| train_index(base + j))
            .collect();
        let results: Vec<Result<(f64, f64, Vec<f64>)>> = indices
            .par_iter()
            .map(|&i| sample_loss_and_grad(&model, i))
            .collect();

        let mut batch_loss = 0.0;
        let mut grad_sum: Option<Vec<f64>> = None;
        for r in results {
            let (l, _, g) = r?;
            batch_loss += l;
            match &mut grad_sum {
                None => grad_sum = Some(g),
                Some(acc) => {
                    for (a, b) in acc.iter_mut().zip(g.iter()) {
                        *a += b;
                    }
                }
            }
        }
        let mut grads = grad_sum.expect("non-empty batch");
        let scale = 1.0 / cfg.optimizer.batch_size as f64;
        for g in grads.iter_mut() {
            *g *= scale;
        }
        batch_loss *= scale;
        check_finite(batch_loss, step, "pvad training")?;
        train_history.push(batch_loss);

        clip_gradient(&mut grads, cfg.optimizer.grad_clip);
        adam.step(&mut params, &grads);
        unflatten_tensors(&mut model.tensors_mut(), &params);
        steps_run = step + 1;

        if (step + 1) % cfg.optimizer.eval_every == 0 || step + 1 == cfg.optimizer.steps {
            let (val_loss, val_acc) = validation(&model)?;
            check_finite(val_loss, step, "pvad validation")?;
            val_history.push((step + 1, val_loss));
            eprintln!(
                "pvad step {:>5}: train {:.4}  val {:.4}  acc {:.3}",
                step + 1,
                batch_loss,
                val_loss,
                val_acc
            );
            if val_loss < best_val {
                best_val = val_loss;
                best_accuracy = val_acc;
                since_best = 0;
                model.save(&ckpt_path, cfg.seed)?;
            } else {
                since_best += 1;
                if since_best >= cfg.optimizer.patience {
                    eprintln!("pvad early stop at step {}", step + 1);
                    break;
                }
            }
        }
    }

    let report = TrainReport {
        checkpoint: ckpt_path,
        steps_run,
        best_val_loss: best_val,
        val_accuracy: Some(best_accuracy),
        train_loss_history: train_history,
        val_loss_history: val_history,
        config_hash: cfg.config_hash(),
        seed: cfg.seed,
    };
    std::fs::write(
        cfg.checkpoint_dir.join("train_report.json"),
        serde_json::to_vec_pretty(&report)?,
    )?;
    Ok(report)
}

// ─── Student training ───────────────────────────────────────────────────────

/// Per-sample student pass: render, augment, run teacher (inactive-target
/// samples under gated variants only), forward, loss, backward.
#[allow(clippy::too_many_arguments)]
fn pse_sample_pass(
    model: &PseModel,
    teacher: Option<&PvadModel>,
    generator: &MixtureGenerator<'_>,
    embeddings: &[DVector],
    cfg: &RunConfig,
    stft_cfg: &StftConfig,
    index: u64,
    augment: bool,
) -> Result<(f64, Vec<f64>)> {
    let sample = generator.make_training_sample(index)?;
    let speaker = generator
        .corpus
        .speaker_index(&sample.target_speaker_id)
        .expect("generator speaker id");
    let dvec = &embeddings[speaker];

    let mixture = if augment {
        let mut rng = ChaCha8Rng::seed_from_u64(crate::simulate::synth::mix_seed(
            cfg.seed, 0xa060, index,
        ));
        signal_specaugment(&sample.mixture, &mut rng, &cfg.data.specaugment)
    } else {
        sample.mixture.clone()
    };

    let fwd = model.forward(&mixture, dvec, stft_cfg)?;
    let clean_spec = stft(&sample.clean_target, stft_cfg)?;
    let mix_spec = stft(&mixture, stft_cfg)?;
    let est_spec = stft(&fwd.output, stft_cfg)?;

    // The teacher scores the mixture the student sees; it must misclassify
    // interference exactly as it would in deployment.
    let posterior = if sample.is_its && cfg.loss.variant != LossVariant::Plcpa {
        let teacher = teacher
            .ok_or_else(|| Error::MissingPrerequisite("gated variant requires a teacher".into()))?;
        Some(teacher.forward(&mixture, dvec, stft_cfg)?.posteriors)
    } else {
        None
    };

    let inputs = TrainingLossInputs {
        is_its: sample.is_its,
        clean: &clean_spec,
        estimate: &est_spec,
        mixture: &mix_spec,
        posterior: posterior.as_ref(),
    };
    let loss = training_loss(&inputs, &cfg.loss)?;

    #[cfg(debug_assertions)]
    if !sample.is_its {
        // Dispatch invariant: non-ITS samples always score as plain plcpa
        // (plus the optional over-suppression term) regardless of variant.
        let base = crate::loss::plcpa(&clean_spec, &est_spec, &cfg.loss)?.mean;
        let expected = if cfg.loss.asym_weight > 0.0 {
            base + cfg.loss.asym_weight
                * crate::loss::asym_os(&clean_spec, &est_spec, &cfg.loss)?.mean
        } else {
            base
        };
        debug_assert!((loss - expected).abs() < 1e-12);
    }

    let d_spec = training_loss_grad(&inputs, &cfg.loss)?;
    let d_wave = stft_adjoint(&d_spec, stft_cfg, fwd.output.len());
    let grads = model.backward(&fwd, &d_wave, stft_cfg);
    Ok((loss, flatten_tensors(&grads.tensors())))
}

/// Trains the enhancement model. The teacher checkpoint is loaded read-only
/// and never updated; gated variants refuse to start without one.
pub fn train_pse(cfg: &RunConfig) -> Result<TrainReport> {
    init_thread_pool();
    cfg.validate_for_pse()?;
    let stft_cfg = StftConfig::default();
    cfg.pse.validate(&stft_cfg)?;
    let corpus = cfg.build_corpus()?;
    let generator = MixtureGenerator::new(&corpus, cfg.data.simulate.clone())?;
    let embeddings = speaker_embeddings(&corpus)?;

    let teacher = match &cfg.pvad_checkpoint {
        Some(path) => {
            if !path.exists() {
                return Err(Error::MissingPrerequisite(format!(
                    "pvad checkpoint {} not found (train one with train-pvad)",
                    path.display()
                )));
            }
            Some(PvadModel::load(path, &stft_cfg)?.0)
        }
        None => None,
    };

    let mut model = PseModel::init(&cfg.pse, &stft_cfg)?;
    let mut params = flatten_tensors(&model.tensors());
    let mut adam = Adam::new(params.len(), cfg.optimizer.learning_rate);

    let validation = |model: &PseModel| -> Result<f64> {
        let n = cfg.optimizer.eval_samples.max(1) as u64;
        let results: Vec<Result<(f64, Vec<f64>)>> = (0..n)
            .into_par_iter()
            .map(|j| {
                pse_sample_pass(
                    model,
                    teacher.as_ref(),
                    &generator,
                    &embeddings,
                    cfg,
                    &stft_cfg,
                    validation_index(j),
                    false,
                )
            })
            .collect();
        let mut acc = 0.0;
        for r in results {
            acc += r?.0;
        }
        Ok(acc / n as f64)
    };

    let mut best_val = f64::INFINITY;
    let mut since_best = 0usize;
    let mut train_history = Vec::new();
    let mut val_history = Vec::new();
    let ckpt_path = cfg.checkpoint_dir.join("pse.ckpt");
    std::fs::create_dir_all(&cfg.checkpoint_dir)?;
    cfg.save_toml(&cfg.checkpoint_dir.join("run_config.toml"))?;

    let mut steps_run = 0usize;
    for step in 0..cfg.optimizer.steps {
        let base = (step * cfg.optimizer.batch_size) as u64;
        let indices: Vec<u64> = (0..cfg.optimizer.batch_size as u64)
            .map(|j| train_index(base + j))
            .collect();
        let results: Vec<Result<(f64, Vec<f64>)>> = indices
            .par_iter()
            .map(|&i| {
                pse_sample_pass(
                    &model,
                    teacher.as_ref(),
                    &generator,
                    &embeddings,
                    cfg,
                    &stft_cfg,
                    i,
                    true,
                )
            })
            .collect();

        let mut batch_loss = 0.0;
        let mut grad_sum: Option<Vec<f64>> = None;
        for r in results {
            let (l, g) = r?;
            batch_loss += l;
            match &mut grad_sum {
                None => grad_sum = Some(g),
                Some(acc) => {
                    for (a, b) in acc.iter_mut().zip(g.iter()) {
                        *a += b;
                    }
                }
            }
        }
        let mut grads = grad_sum.expect("non-empty batch");
        let scale = 1.0 / cfg.optimizer.batch_size as f64;
        for g in grads.iter_mut() {
            *g *= scale;
        }
        batch_loss *= scale;
        check_finite(batch_loss, step, "pse training")?;
        train_history.push(batch_loss);

        clip_gradient(&mut grads, cfg.optimizer.grad_clip);
        adam.step(&mut params, &grads);
        unflatten_tensors(&mut model.tensors_mut(), &params);
        steps_run = step + 1;

        if (step + 1) % cfg.optimizer.eval_every == 0 || step + 1 == cfg.optimizer.steps {
            let val_loss = validation(&model)?;
            check_finite(val_loss, step, "pse validation")?;
            val_history.push((step + 1, val_loss));
            eprintln!(
                "pse[{}] step {:>5}: train {:.5}  val {:.5}",
                cfg.loss.variant,
                step + 1,
                batch_loss,
                val_loss
            );
            if val_loss < best_val {
                best_val = val_loss;
                since_best = 0;
                model.save(&ckpt_path, cfg.seed)?;
            } else {
                since_best += 1;
                if since_best >= cfg.optimizer.patience {
                    eprintln!("pse early stop at step {}", step + 1);
                    break;
                }
            }
        }
    }

    let report = TrainReport {
        checkpoint: ckpt_path,
        steps_run,
        best_val_loss: best_val,
        val_accuracy: None,
        train_loss_history: train_history,
        val_loss_history: val_history,
        config_hash: cfg.config_hash(),
        seed: cfg.seed,
    };
    std::fs::write(
        cfg.checkpoint_dir.join("train_report.json"),
        serde_json::to_vec_pretty(&report)?,
    )?;
    Ok(report)
}

// ─── Teacher diagnostics ────────────────────────────────────────────────────

/// Fraction of inactive-target frames the teacher calls target-active
/// (p_ts >= 0.5) over freshly drawn ITS samples. Nonzero means the gating
/// mechanism has something to gate.
pub fn its_misclassified_fraction(
    teacher: &PvadModel,
    generator: &MixtureGenerator<'_>,
    embeddings: &[DVector],
    samples: usize,
) -> Result<f64> {
    let stft_cfg = StftConfig::default();
    let mut flagged = 0usize;
    let mut total = 0usize;
    let mut produced = 0usize;
    let mut seed = 0u64;
    while produced < samples && seed < samples as u64 * 50 {
        let plan = generator.plan(seed);
        seed += 1;
        if !plan.is_its {
            continue;
        }
        let sample = generator.render(&plan)?;
        let speaker = generator
            .corpus
            .speaker_index(&sample.target_speaker_id)
            .expect("speaker id");
        let fwd = teacher.forward(&sample.mixture, &embeddings[speaker], &stft_cfg)?;
        flagged += fwd.posteriors.values().iter().filter(|&&p| p >= 0.5).count();
        total += fwd.posteriors.len();
        produced += 1;
    }
    if total == 0 {
        return Err(Error::CorpusTooSmall(
            "no inactive-target samples drawn; raise its_prob".into(),
        ));
    }
    Ok(flagged as f64 / total as f64)
}

/// Mean validation frame accuracy of a trained teacher over held-out samples.
pub fn pvad_validation_accuracy(
    teacher: &PvadModel,
    generator: &MixtureGenerator<'_>,
    embeddings: &[DVector],
    samples: usize,
) -> Result<f64> {
    let stft_cfg = StftConfig::default();
    let fb = MelFilterbank::new(&stft_cfg);
    let results: Vec<Result<f64>> = (0..samples as u64)
        .into_par_iter()
        .map(|j| {
            let sample = generator.make_training_sample(validation_index(j))?;
            let speaker = generator
                .corpus
                .speaker_index(&sample.target_speaker_id)
                .expect("speaker id");
            let labels = make_vad_labels(&sample, &stft_cfg).labels;
            let mel = crate::model::pvad_features(&sample.mixture, &stft_cfg, &fb)?;
            let fwd = teacher.forward_features(&mel, &embeddings[speaker])?;
            let correct = fwd
                .posteriors
                .values()
                .iter()
                .zip(labels.iter())
                .filter(|(&p, &l)| (p >= 0.5) == l)
                .count();
            Ok(correct as f64 / labels.len() as f64)
        })
        .collect();
    let mut acc = 0.0;
    let n = results.len();
    for r in results {
        acc += r?;
    }
    Ok(acc / n as f64)
}
