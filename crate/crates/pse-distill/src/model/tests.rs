use super::*;
use crate::dsp::{stft, Waveform};
use crate::embed::DVector;
use crate::loss::{plcpa, plcpa_grad, LossConfig};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn tiny_pse_cfg() -> PseConfig {
    PseConfig {
        encoder_filters: 12,
        lstm_blocks: 2,
        lstm_dim: 8,
        ffn_dim: 10,
        ..PseConfig::toy()
    }
}

fn tiny_pvad_cfg() -> PvadConfig {
    PvadConfig {
        lstm_blocks: 2,
        lstm_dim: 8,
        ffn_dim: 10,
        ..PvadConfig::toy()
    }
}

fn random_dvector(seed: u64) -> DVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<f64> = (0..crate::embed::DVECTOR_DIM)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    DVector::from_unnormalized(v).unwrap()
}

fn random_wave(len: usize, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Waveform::new((0..len).map(|_| rng.random_range(-0.5..0.5)).collect())
}

#[test]
fn pse_output_length_matches_input() {
    let stft_cfg = StftConfig::default();
    let model = PseModel::init(&tiny_pse_cfg(), &stft_cfg).unwrap();
    let d = random_dvector(1);
    for len in [16000usize, 16001, 16159] {
        let fwd = model.forward(&random_wave(len, len as u64), &d, &stft_cfg).unwrap();
        assert_eq!(fwd.output.len(), len, "input length {len}");
    }
}

#[test]
fn pse_zero_input_zero_bias_gives_zero_output() {
    let stft_cfg = StftConfig::default();
    let model = PseModel::init(&tiny_pse_cfg(), &stft_cfg).unwrap();
    let d = random_dvector(2);
    let fwd = model.forward(&Waveform::zeros(4800), &d, &stft_cfg).unwrap();
    assert!(fwd.output.samples().iter().all(|&s| s == 0.0));
    assert!(fwd.mask.values.iter().all(|&m| m >= 0.0));
}

#[test]
fn pse_is_causal_up_to_encoder_lookahead() {
    let stft_cfg = StftConfig::default();
    let model = PseModel::init(&tiny_pse_cfg(), &stft_cfg).unwrap();
    let d = random_dvector(3);
    let x = random_wave(6400, 5);
    let fwd = model.forward(&x, &d, &stft_cfg).unwrap();
    let n = 3200;
    let mut y = x.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for s in y.samples_mut()[n..].iter_mut() {
        *s = rng.random_range(-0.5..0.5);
    }
    let fwd2 = model.forward(&y, &d, &stft_cfg).unwrap();
    let latency = stft_cfg.window_samples - stft_cfg.hop_samples;
    for i in 0..n - latency {
        let delta = (fwd.output.samples()[i] - fwd2.output.samples()[i]).abs();
        assert!(delta < 1e-6, "sample {i}: {delta}");
    }
}

#[test]
fn pvad_posteriors_are_valid_and_causal() {
    let stft_cfg = StftConfig::default();
    let model = PvadModel::init(&tiny_pvad_cfg(), &stft_cfg).unwrap();
    let d = random_dvector(4);
    let x = random_wave(6400, 6);
    let fwd = model.forward(&x, &d, &stft_cfg).unwrap();
    let frames = stft_cfg.frame_count(x.len()).unwrap();
    assert_eq!(fwd.posteriors.len(), frames);
    for t in 0..frames {
        let sum = fwd.probs[[t, 0]] + fwd.probs[[t, 1]];
        assert!((sum - 1.0).abs() < 1e-6);
        assert!((0.0..=1.0).contains(&fwd.posteriors.values()[t]));
    }

    // Frame-level causality: perturb samples beyond frame
    // t_edge's span; earlier frames must be unchanged.
    let t_edge = 10usize;
    let boundary = t_edge * stft_cfg.hop_samples + stft_cfg.window_samples;
    let mut y = x.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for s in y.samples_mut()[boundary..].iter_mut() {
        *s = rng.random_range(-0.5..0.5);
    }
    let fwd2 = model.forward(&y, &d, &stft_cfg).unwrap();
    for t in 0..=t_edge {
        let delta = (fwd.posteriors.values()[t] - fwd2.posteriors.values()[t]).abs();
        assert!(delta < 1e-6, "frame {t}: {delta}");
    }
}

#[test]
fn toy_and_paper_configs_share_the_code_path() {
    let stft_cfg = StftConfig::default();
    PseModel::init(&PseConfig::toy(), &stft_cfg).unwrap();
    PseModel::init(&PseConfig::paper_scale(), &stft_cfg).unwrap();
    PvadModel::init(&PvadConfig::toy(), &stft_cfg).unwrap();
    PvadModel::init(&PvadConfig::paper_scale(), &stft_cfg).unwrap();
}

#[test]
fn config_validation_catches_misalignment() {
    let stft_cfg = StftConfig::default();
    let bad = PseConfig {
        encoder_kernel: 256,
        ..PseConfig::toy()
    };
    assert!(PseModel::init(&bad, &stft_cfg).is_err());
}

#[test]
fn init_is_seed_deterministic() {
    let stft_cfg = StftConfig::default();
    let a = PseModel::init(&tiny_pse_cfg(), &stft_cfg).unwrap();
    let b = PseModel::init(&tiny_pse_cfg(), &stft_cfg).unwrap();
    assert_eq!(flatten_tensors(&a.tensors()), flatten_tensors(&b.tensors()));
}

#[test]
fn flatten_roundtrip() {
    let stft_cfg = StftConfig::default();
    let mut model = PseModel::init(&tiny_pse_cfg(), &stft_cfg).unwrap();
    let flat = flatten_tensors(&model.tensors());
    let mut perturbed = flat.clone();
    for v in &mut perturbed {
        *v += 0.25;
    }
    unflatten_tensors(&mut model.tensors_mut(), &perturbed);
    assert_eq!(flatten_tensors(&model.tensors()), perturbed);
}

#[test]
fn checkpoint_roundtrip_preserves_forward() {
    let stft_cfg = StftConfig::default();
    let model = PseModel::init(&tiny_pse_cfg(), &stft_cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    model.save(&path, 42).unwrap();
    let (loaded, seed) = PseModel::load(&path, &stft_cfg).unwrap();
    assert_eq!(seed, 42);
    assert_eq!(
        flatten_tensors(&model.tensors()),
        flatten_tensors(&loaded.tensors())
    );
    let d = random_dvector(8);
    let x = random_wave(3200, 9);
    let a = model.forward(&x, &d, &stft_cfg).unwrap();
    let b = loaded.forward(&x, &d, &stft_cfg).unwrap();
    assert_eq!(a.output.samples(), b.output.samples());

    let pvad = PvadModel::init(&tiny_pvad_cfg(), &stft_cfg).unwrap();
    let ppath = dir.path().join("pvad.ckpt");
    pvad.save(&ppath, 7).unwrap();
    let (ploaded, _) = PvadModel::load(&ppath, &stft_cfg).unwrap();
    assert_eq!(
        flatten_tensors(&pvad.tensors()),
        flatten_tensors(&ploaded.tensors())
    );
    // Kind mismatch is rejected.
    assert!(PvadModel::load(&path, &stft_cfg).is_err());
}

#[test]
fn pse_end_to_end_gradient_matches_finite_differences() {
    // Loss: plcpa(target_spec, stft(model output)). Chain exercises the
    // decoder OLA, mask multiply, LSTM stack, encoder, and the STFT adjoint.
    let stft_cfg = StftConfig::default();
    let cfg = PseConfig {
        encoder_filters: 6,
        lstm_blocks: 2,
        lstm_dim: 5,
        ffn_dim: 7,
        ..PseConfig::toy()
    };
    let model = PseModel::init(&cfg, &stft_cfg).unwrap();
    let d = random_dvector(10);
    let x = random_wave(800, 11);
    let target = stft(&random_wave(800, 12), &stft_cfg).unwrap();
    let loss_cfg = LossConfig::default();

    let loss_of = |m: &PseModel| -> f64 {
        let fwd = m.forward(&x, &d, &stft_cfg).unwrap();
        let est = stft(&fwd.output, &stft_cfg).unwrap();
        plcpa(&target, &est, &loss_cfg).unwrap().mean
    };

    let fwd = model.forward(&x, &d, &stft_cfg).unwrap();
    let est = stft(&fwd.output, &stft_cfg).unwrap();
    let d_spec = plcpa_grad(&target, &est, &loss_cfg).unwrap();
    let d_wave = crate::dsp::stft_adjoint(&d_spec, &stft_cfg, x.len());
    let grads = model.backward(&fwd, &d_wave, &stft_cfg);

    let flat_g = flatten_tensors(&grads.tensors());
    let flat_p = flatten_tensors(&model.tensors());
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let h = 1e-6;
    let mut checked = 0;
    while checked < 40 {
        let idx = rng.random_range(0..flat_p.len());
        let mut plus = flat_p.clone();
        plus[idx] += h;
        let mut minus = flat_p.clone();
        minus[idx] -= h;
        let mut mp = model.clone();
        unflatten_tensors(&mut mp.tensors_mut(), &plus);
        let mut mm = model.clone();
        unflatten_tensors(&mut mm.tensors_mut(), &minus);
        let fd = (loss_of(&mp) - loss_of(&mm)) / (2.0 * h);
        if fd.abs() < 1e-10 {
            continue; // dead ReLU path; relative error meaningless
        }
        let a = flat_g[idx];
        let rel = (a - fd).abs() / fd.abs().max(1e-8);
        assert!(rel < 1e-3, "param {idx}: analytic {a} vs fd {fd} (rel {rel})");
        checked += 1;
    }
}

#[test]
fn pvad_gradient_matches_finite_differences() {
    let stft_cfg = StftConfig::default();
    let cfg = PvadConfig {
        lstm_blocks: 1,
        lstm_dim: 6,
        ffn_dim: 8,
        ..PvadConfig::toy()
    };
    let model = PvadModel::init(&cfg, &stft_cfg).unwrap();
    let d = random_dvector(14);
    let x = random_wave(1600, 15);
    let frames = stft_cfg.frame_count(x.len()).unwrap();
    let labels: Vec<bool> = (0..frames).map(|t| t % 3 == 0).collect();

    let loss_of = |m: &PvadModel| -> f64 {
        let fwd = m.forward(&x, &d, &stft_cfg).unwrap();
        bce_softmax_loss(&fwd, &labels).0
    };

    let fwd = model.forward(&x, &d, &stft_cfg).unwrap();
    let (_, d_logits) = bce_softmax_loss(&fwd, &labels);
    let grads = model.backward(&fwd, &d_logits);

    let flat_g = flatten_tensors(&grads.tensors());
    let flat_p = flatten_tensors(&model.tensors());
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let h = 1e-6;
    let mut checked = 0;
    while checked < 30 {
        let idx = rng.random_range(0..flat_p.len());
        let mut plus = flat_p.clone();
        plus[idx] += h;
        let mut minus = flat_p.clone();
        minus[idx] -= h;
        let mut mp = model.clone();
        unflatten_tensors(&mut mp.tensors_mut(), &plus);
        let mut mm = model.clone();
        unflatten_tensors(&mut mm.tensors_mut(), &minus);
        let fd = (loss_of(&mp) - loss_of(&mm)) / (2.0 * h);
        if fd.abs() < 1e-10 {
            continue;
        }
        let a = flat_g[idx];
        let rel = (a - fd).abs() / fd.abs().max(1e-8);
        assert!(rel < 1e-3, "param {idx}: analytic {a} vs fd {fd} (rel {rel})");
        checked += 1;
    }
}
