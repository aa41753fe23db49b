//! Spectral training losses: power-law compressed phase-aware (PLCPA) base
//! loss, the over-suppression penalty, and the three pVAD-gated variants used
//! for inactive-target training samples.
//!
//! Every scalar loss is the mean over all (t, f) cells — including gated-out
//! frames, which therefore contribute zero loss *and* zero gradient. Analytic
//! gradients with respect to the estimate are provided for all variants; the
//! gradient of |z|^p at z = 0 is clamped to zero.

use ndarray::Array2;
use num_complex::Complex64;

use crate::dsp::ComplexSpectrogram;
use crate::error::{Error, Result};
use crate::model::FramePosteriorSequence;

/// Magnitudes below this are treated as exactly zero when differentiating
/// the non-smooth |z|^p term.
const GRAD_CLAMP_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossVariant {
    /// Plain PLCPA on every sample.
    Plcpa,
    /// Hard gate: drop frames the teacher calls target-active.
    Exclude,
    /// Swap the reference to the noisy mixture on teacher-active frames.
    MixRef,
    /// Soft weight by the inactive-target probability.
    Posterior,
}

impl std::fmt::Display for LossVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LossVariant::Plcpa => "plcpa",
            LossVariant::Exclude => "exclude",
            LossVariant::MixRef => "mixref",
            LossVariant::Posterior => "posterior",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for LossVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "plcpa" => Ok(LossVariant::Plcpa),
            "exclude" => Ok(LossVariant::Exclude),
            "mixref" | "mix_ref" => Ok(LossVariant::MixRef),
            "posterior" => Ok(LossVariant::Posterior),
            other => Err(Error::Config(format!("unknown loss variant '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct LossConfig {
    /// Power-law compression exponent.
    pub p: f64,
    /// Weight between the magnitude and phase-aware terms.
    pub alpha: f64,
    /// Teacher posterior threshold for the hard gates.
    pub tau: f64,
    pub variant: LossVariant,
    /// Weight of the over-suppression penalty; 0 disables it.
    pub asym_weight: f64,
    /// Over-suppression flagging threshold, shared with the metrics module.
    pub gamma: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            p: 0.3,
            alpha: 0.5,
            tau: 0.5,
            variant: LossVariant::Plcpa,
            asym_weight: 0.0,
            gamma: 0.1,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::Config(format!("p must be in (0, 1], got {}", self.p)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must be in [0, 1], got {}", self.alpha)));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Config(format!("tau must be in (0, 1), got {}", self.tau)));
        }
        if self.gamma <= 0.0 {
            return Err(Error::Config(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if self.asym_weight < 0.0 {
            return Err(Error::Config(format!(
                "asym_weight must be >= 0, got {}",
                self.asym_weight
            )));
        }
        Ok(())
    }
}

/// Per-cell loss surface plus its mean.
#[derive(Debug, Clone)]
pub struct ElementwiseLoss {
    pub per_bin: Array2<f64>,
    pub mean: f64,
}

fn check_shapes(a: &ComplexSpectrogram, b: &ComplexSpectrogram, context: &'static str) -> Result<()> {
    if a.values.dim() != b.values.dim() {
        return Err(Error::ShapeMismatch {
            left: format!("{:?}", a.values.dim()),
            right: format!("{:?}", b.values.dim()),
            context,
        });
    }
    Ok(())
}

fn check_frames(spec: &ComplexSpectrogram, p_ts: &FramePosteriorSequence, context: &'static str) -> Result<()> {
    if spec.frames() != p_ts.len() {
        return Err(Error::ShapeMismatch {
            left: format!("{} frames", spec.frames()),
            right: format!("{} posteriors", p_ts.len()),
            context,
        });
    }
    Ok(())
}

/// Compressed magnitude and compressed phase-aware complex value for one bin.
/// Zero magnitude maps to (0, 0+0j).
#[inline]
fn compress_bin(v: Complex64, p: f64) -> (f64, Complex64) {
    let r = v.norm();
    if r == 0.0 {
        (0.0, Complex64::new(0.0, 0.0))
    } else {
        let m = r.powf(p);
        (m, v * (m / r))
    }
}

#[inline]
fn plcpa_bin(s: Complex64, s_hat: Complex64, p: f64, alpha: f64) -> f64 {
    let (ms, cs) = compress_bin(s, p);
    let (mh, ch) = compress_bin(s_hat, p);
    let dm = ms - mh;
    alpha * dm * dm + (1.0 - alpha) * (cs - ch).norm_sqr()
}

/// Gradient of `plcpa_bin` with respect to the estimate, packed as
/// d/dRe + j·d/dIm. Clamped to zero where |s_hat| is (numerically) zero.
#[inline]
fn plcpa_bin_grad(s: Complex64, s_hat: Complex64, p: f64, alpha: f64) -> Complex64 {
    let x = s_hat.re;
    let y = s_hat.im;
    let r2 = x * x + y * y;
    let r = r2.sqrt();
    if r < GRAD_CLAMP_EPS {
        return Complex64::new(0.0, 0.0);
    }
    let (ms, cs) = compress_bin(s, p);
    let mh = r.powf(p);
    let rp1 = r.powf(p - 1.0); // r^(p-1)
    let rp3 = rp1 / r2; // r^(p-3)

    // Magnitude term: alpha * (ms - mh)^2.
    let dmh_dx = p * rp1 / r * x; // p r^(p-2) x
    let dmh_dy = p * rp1 / r * y;
    let mut gx = -2.0 * alpha * (ms - mh) * dmh_dx;
    let mut gy = -2.0 * alpha * (ms - mh) * dmh_dy;

    // Phase-aware term: (1-alpha) * |cs - ch|^2 with ch = r^(p-1) (x + jy).
    let u = rp1 * x;
    let v = rp1 * y;
    let du_dx = rp1 + (p - 1.0) * rp3 * x * x;
    let du_dy = (p - 1.0) * rp3 * x * y;
    let dv_dx = du_dy;
    let dv_dy = rp1 + (p - 1.0) * rp3 * y * y;
    let eu = u - cs.re;
    let ev = v - cs.im;
    gx += 2.0 * (1.0 - alpha) * (eu * du_dx + ev * dv_dx);
    gy += 2.0 * (1.0 - alpha) * (eu * du_dy + ev * dv_dy);

    Complex64::new(gx, gy)
}

#[inline]
fn asym_bin(s: Complex64, s_hat: Complex64, p: f64) -> f64 {
    let d = s.norm().powf(p) - s_hat.norm().powf(p);
    if d > 0.0 {
        d * d
    } else {
        0.0
    }
}

#[inline]
fn asym_bin_grad(s: Complex64, s_hat: Complex64, p: f64) -> Complex64 {
    let x = s_hat.re;
    let y = s_hat.im;
    let r = (x * x + y * y).sqrt();
    if r < GRAD_CLAMP_EPS {
        return Complex64::new(0.0, 0.0);
    }
    let ms = s.norm().powf(p);
    let mh = r.powf(p);
    let d = ms - mh;
    if d <= 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let scale = -2.0 * d * p * r.powf(p - 2.0);
    Complex64::new(scale * x, scale * y)
}

// ─── Named loss surfaces ────────────────────────────────────────────────────

/// Power-law compressed phase-aware loss per cell plus its mean.
pub fn plcpa(s: &ComplexSpectrogram, s_hat: &ComplexSpectrogram, cfg: &LossConfig) -> Result<ElementwiseLoss> {
    cfg.validate()?;
    check_shapes(s, s_hat, "plcpa")?;
    let per_bin = Array2::from_shape_fn(s.values.raw_dim(), |(t, f)| {
        plcpa_bin(s.values[[t, f]], s_hat.values[[t, f]], cfg.p, cfg.alpha)
    });
    let mean = per_bin.mean().unwrap_or(0.0);
    Ok(ElementwiseLoss { per_bin, mean })
}

/// Gradient of the `plcpa` mean with respect to the estimate.
pub fn plcpa_grad(
    s: &ComplexSpectrogram,
    s_hat: &ComplexSpectrogram,
    cfg: &LossConfig,
) -> Result<Array2<Complex64>> {
    cfg.validate()?;
    check_shapes(s, s_hat, "plcpa_grad")?;
    let scale = 1.0 / s.values.len() as f64;
    Ok(Array2::from_shape_fn(s.values.raw_dim(), |(t, f)| {
        plcpa_bin_grad(s.values[[t, f]], s_hat.values[[t, f]], cfg.p, cfg.alpha) * scale
    }))
}

/// Over-suppression index: squared rectified compressed-magnitude shortfall.
pub fn asym_os(s: &ComplexSpectrogram, s_hat: &ComplexSpectrogram, cfg: &LossConfig) -> Result<ElementwiseLoss> {
    cfg.validate()?;
    check_shapes(s, s_hat, "asym_os")?;
    let per_bin = Array2::from_shape_fn(s.values.raw_dim(), |(t, f)| {
        asym_bin(s.values[[t, f]], s_hat.values[[t, f]], cfg.p)
    });
    let mean = per_bin.mean().unwrap_or(0.0);
    Ok(ElementwiseLoss { per_bin, mean })
}

/// Gradient of the `asym_os` mean with respect to the estimate.
pub fn asym_os_grad(
    s: &ComplexSpectrogram,
    s_hat: &ComplexSpectrogram,
    cfg: &LossConfig,
) -> Result<Array2<Complex64>> {
    cfg.validate()?;
    check_shapes(s, s_hat, "asym_os_grad")?;
    let scale = 1.0 / s.values.len() as f64;
    Ok(Array2::from_shape_fn(s.values.raw_dim(), |(t, f)| {
        asym_bin_grad(s.values[[t, f]], s_hat.values[[t, f]], cfg.p) * scale
    }))
}

/// Hard inclusion gate: 1 where the teacher posterior is strictly below tau.
pub fn frame_gate(p_ts: &FramePosteriorSequence, tau: f64) -> Vec<bool> {
    p_ts.values().iter().map(|&p| p < tau).collect()
}

/// Frame-exclusion loss: gated frames contribute zero loss and zero gradient.
/// The mean still divides by the full T*F cell count.
pub fn loss_exclude(
    s: &ComplexSpectrogram,
    s_hat: &ComplexSpectrogram,
    p_ts: &FramePosteriorSequence,
    cfg: &LossConfig,
) -> Result<f64> {
    cfg.validate()?;
    check_shapes(s, s_hat, "loss_exclude")?;
    check_frames(s, p_ts, "loss_exclude")?;
    let gate = frame_gate(p_ts, cfg.tau);
    let mut acc = 0.0;
    for t in 0..s.frames() {
        if !gate[t] {
            continue;
        }
        for f in 0..s.bins() {
            acc += plcpa_bin(s.values[[t, f]], s_hat.values[[t, f]], cfg.p, cfg.alpha);
        }
    }
    Ok(acc / s.values.len() as f64)
}

pub fn loss_exclude_grad(
    s: &ComplexSpectrogram,
    s_hat: &ComplexSpectrogram,
    p_ts: &FramePosteriorSequence,
    cfg: &LossConfig,
) -> Result<Array2<Complex64>> {
    cfg.validate()?;
    check_shapes(s, s_hat, "loss_exclude_grad")?;
    check_frames(s, p_ts, "loss_exclude_grad")?;
    let gate = frame_gate(p_ts, cfg.tau);
    let scale = 1.0 / s.values.len() as f64;
    Ok(Array2::from_shape_fn(s.values.raw_dim(), |(t, f)| {
        if gate[t] {
            plcpa_bin_grad(s.values[[t, f]], s_hat.values[[t, f]], cfg.p, cfg.alpha) * scale
        } else {
            Complex64::new(0.0, 0.0)
        }
    }))
}

/// Mixture-as-reference loss: teacher-active frames are scored against the
/// noisy input instead of the clean target.
pub fn loss_mix_ref(
    s: &ComplexSpectrogram,
    s_hat: &ComplexSpectrogram,
    y: &ComplexSpectrogram,
    p_ts: &FramePosteriorSequence,
    cfg: &LossConfig,
) -> Result<f64> {
    cfg.validate()?;
    check_shapes(s, s_hat, "loss_mix_ref")?;
    check_shapes(y, s_hat, "loss_mix_ref")?;
    check_frames(s, p_ts, "loss_mix_ref")?;
    let gate = frame_gate(p_ts, cfg.tau);
    let mut acc = 0.0;
    for t in 0..s.frames() {
        let reference = if gate[t] { &s.values } else { &y.values };
        for f in 0..s.bins() {
            acc += plcpa_bin(reference[[t, f]], s_hat.values[[t, f]], cfg.p, cfg.alpha);
        }
    }
    Ok(acc / s.values.len() as f64)
}

pub fn loss_mix_ref_grad(
    s: &ComplexSpectrogram,
    s_hat: &ComplexSpectrogram,
    y: &ComplexSpectrogram,
    p_ts: &FramePosteriorSequence,
    cfg: &LossConfig,
) -> Result<Array2<Complex64>> {
    cfg.validate()?;
    check_shapes(s, s_hat, "loss_mix_ref_grad")?;
    check_shapes(y, s_hat, "loss_mix_ref_grad")?;
    check_frames(s, p_ts, "loss_mix_ref_grad")?;
    let gate = frame_gate(p_ts, cfg.tau);
    let scale = 1.0 / s.values.len() as f64;
    Ok(Array2::from_shape_fn(s.values.raw_dim(), |(t, f)| {
        let reference = if gate[t] { s.values[[t, f]] } else { y.values[[t, f]] };
        plcpa_bin_grad(reference, s_hat.values[[t, f]], cfg.p, cfg.alpha) * scale
    }))
}

/// Posterior-weighted loss: each frame weighted by the inactive-target
/// probability (1 - p_ts). No threshold involved.
pub fn loss_posterior(
    s: &ComplexSpectrogram,
    s_hat: &ComplexSpectrogram,
    p_ts: &FramePosteriorSequence,
    cfg: &LossConfig,
) -> Result<f64> {
    cfg.validate()?;
    check_shapes(s, s_hat, "loss_posterior")?;
    check_frames(s, p_ts, "loss_posterior")?;
    let mut acc = 0.0;
    for t in 0..s.frames() {
        let w = 1.0 - p_ts.values()[t];
        for f in 0..s.bins() {
            acc += w * plcpa_bin(s.values[[t, f]], s_hat.values[[t, f]], cfg.p, cfg.alpha);
        }
    }
    Ok(acc / s.values.len() as f64)
}

pub fn loss_posterior_grad(
    s: &ComplexSpectrogram,
    s_hat: &ComplexSpectrogram,
    p_ts: &FramePosteriorSequence,
    cfg: &LossConfig,
) -> Result<Array2<Complex64>> {
    cfg.validate()?;
    check_shapes(s, s_hat, "loss_posterior_grad")?;
    check_frames(s, p_ts, "loss_posterior_grad")?;
    let scale = 1.0 / s.values.len() as f64;
    Ok(Array2::from_shape_fn(s.values.raw_dim(), |(t, f)| {
        let w = 1.0 - p_ts.values()[t];
        plcpa_bin_grad(s.values[[t, f]], s_hat.values[[t, f]], cfg.p, cfg.alpha) * (w * scale)
    }))
}

// ─── Training dispatch ──────────────────────────────────────────────────────

/// Everything the per-sample training loss needs. `mixture` is the noisy
/// spectrogram as seen by the model (after augmentation).
pub struct TrainingLossInputs<'a> {
    pub is_its: bool,
    pub clean: &'a ComplexSpectrogram,
    pub estimate: &'a ComplexSpectrogram,
    pub mixture: &'a ComplexSpectrogram,
    pub posterior: Option<&'a FramePosteriorSequence>,
}

fn require_posterior<'a>(inp: &TrainingLossInputs<'a>) -> Result<&'a FramePosteriorSequence> {
    inp.posterior.ok_or_else(|| {
        Error::MissingPrerequisite("ITS sample requires a pVAD posterior for gated loss variants".into())
    })
}

/// Per-sample loss: plain PLCPA for samples containing target speech, the
/// configured gated variant for inactive-target samples, plus the optional
/// over-suppression penalty.
pub fn training_loss(inp: &TrainingLossInputs<'_>, cfg: &LossConfig) -> Result<f64> {
    cfg.validate()?;
    let base = if !inp.is_its {
        plcpa(inp.clean, inp.estimate, cfg)?.mean
    } else {
        match cfg.variant {
            LossVariant::Plcpa => plcpa(inp.clean, inp.estimate, cfg)?.mean,
            LossVariant::Exclude => {
                loss_exclude(inp.clean, inp.estimate, require_posterior(inp)?, cfg)?
            }
            LossVariant::MixRef => loss_mix_ref(
                inp.clean,
                inp.estimate,
                inp.mixture,
                require_posterior(inp)?,
                cfg,
            )?,
            LossVariant::Posterior => {
                loss_posterior(inp.clean, inp.estimate, require_posterior(inp)?, cfg)?
            }
        }
    };
    if cfg.asym_weight > 0.0 {
        Ok(base + cfg.asym_weight * asym_os(inp.clean, inp.estimate, cfg)?.mean)
    } else {
        Ok(base)
    }
}

/// Gradient of `training_loss` with respect to the estimate spectrogram.
pub fn training_loss_grad(inp: &TrainingLossInputs<'_>, cfg: &LossConfig) -> Result<Array2<Complex64>> {
    cfg.validate()?;
    let mut grad = if !inp.is_its {
        plcpa_grad(inp.clean, inp.estimate, cfg)?
    } else {
        match cfg.variant {
            LossVariant::Plcpa => plcpa_grad(inp.clean, inp.estimate, cfg)?,
            LossVariant::Exclude => {
                loss_exclude_grad(inp.clean, inp.estimate, require_posterior(inp)?, cfg)?
            }
            LossVariant::MixRef => loss_mix_ref_grad(
                inp.clean,
                inp.estimate,
                inp.mixture,
                require_posterior(inp)?,
                cfg,
            )?,
            LossVariant::Posterior => {
                loss_posterior_grad(inp.clean, inp.estimate, require_posterior(inp)?, cfg)?
            }
        }
    };
    if cfg.asym_weight > 0.0 {
        let asym = asym_os_grad(inp.clean, inp.estimate, cfg)?;
        grad.zip_mut_with(&asym, |g, a| *g += cfg.asym_weight * a);
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::StftConfig;
    use ndarray::Array2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_spec(t: usize, f: usize, seed: u64) -> ComplexSpectrogram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = Array2::from_shape_fn((t, f), |_| {
            // Magnitudes bounded away from zero so the p < 1 power stays smooth.
            let mag = rng.random_range(0.1..2.0);
            let phase = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            Complex64::from_polar(mag, phase)
        });
        ComplexSpectrogram {
            values,
            config: StftConfig::default(),
        }
    }

    fn posterior(values: Vec<f64>) -> FramePosteriorSequence {
        FramePosteriorSequence::new(values).unwrap()
    }

    #[test]
    fn plcpa_zero_at_identity() {
        let s = random_spec(6, 17, 1);
        let cfg = LossConfig::default();
        let l = plcpa(&s, &s, &cfg).unwrap();
        assert_eq!(l.mean, 0.0);
        assert!(l.per_bin.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn plcpa_opposite_phase_unit_magnitude() {
        // |S|=|S_hat|=1, phases 0 vs pi: 0.5*0 + 0.5*|1-(-1)|^2 = 2.
        let cfg = LossConfig::default();
        let mut s = random_spec(1, 1, 2);
        let mut h = s.clone();
        s.values[[0, 0]] = Complex64::new(1.0, 0.0);
        h.values[[0, 0]] = Complex64::new(-1.0, 0.0);
        let l = plcpa(&s, &h, &cfg).unwrap();
        assert!((l.per_bin[[0, 0]] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn plcpa_matches_scalar_oracle() {
        // Independent scalar reimplementation over a random 4x5 grid.
        let s = random_spec(4, 5, 3);
        let h = random_spec(4, 5, 4);
        let cfg = LossConfig::default();
        let l = plcpa(&s, &h, &cfg).unwrap();
        let mut acc = 0.0;
        for t in 0..4 {
            for f in 0..5 {
                let sv = s.values[[t, f]];
                let hv = h.values[[t, f]];
                let ms = sv.norm().powf(cfg.p);
                let mh = hv.norm().powf(cfg.p);
                let cs_re = ms * sv.arg().cos();
                let cs_im = ms * sv.arg().sin();
                let ch_re = mh * hv.arg().cos();
                let ch_im = mh * hv.arg().sin();
                let phase_term = (cs_re - ch_re).powi(2) + (cs_im - ch_im).powi(2);
                acc += cfg.alpha * (ms - mh).powi(2) + (1.0 - cfg.alpha) * phase_term;
            }
        }
        assert!((l.mean - acc / 20.0).abs() < 1e-10);
    }

    #[test]
    fn asym_zero_when_estimate_dominates() {
        let s = random_spec(3, 7, 5);
        let mut h = s.clone();
        h.values.mapv_inplace(|v| v * 2.0);
        let cfg = LossConfig::default();
        let l = asym_os(&s, &h, &cfg).unwrap();
        assert_eq!(l.mean, 0.0);
    }

    #[test]
    fn asym_unit_shortfall() {
        let cfg = LossConfig::default();
        let mut s = random_spec(1, 1, 6);
        let mut h = s.clone();
        s.values[[0, 0]] = Complex64::new(1.0, 0.0); // |S|^p = 1
        h.values[[0, 0]] = Complex64::new(0.0, 0.0); // |S_hat|^p = 0
        let l = asym_os(&s, &h, &cfg).unwrap();
        assert!((l.per_bin[[0, 0]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn asym_matches_scalar_oracle() {
        let s = random_spec(4, 5, 7);
        let h = random_spec(4, 5, 8);
        let cfg = LossConfig::default();
        let l = asym_os(&s, &h, &cfg).unwrap();
        let mut acc = 0.0;
        for t in 0..4 {
            for f in 0..5 {
                let d = s.values[[t, f]].norm().powf(cfg.p) - h.values[[t, f]].norm().powf(cfg.p);
                acc += d.max(0.0).powi(2);
            }
        }
        assert!((l.mean - acc / 20.0).abs() < 1e-10);
    }

    #[test]
    fn frame_gate_strict_inequality() {
        let p = posterior(vec![0.4, 0.5, 0.0, 0.99]);
        let gate = frame_gate(&p, 0.5);
        assert_eq!(gate, vec![true, false, true, false]);
        let all_zero = posterior(vec![0.0; 5]);
        assert!(frame_gate(&all_zero, 0.5).iter().all(|&g| g));
    }

    #[test]
    fn exclude_reduction_identities() {
        let s = random_spec(3, 9, 9);
        let h = random_spec(3, 9, 10);
        let cfg = LossConfig::default();
        let all_included = posterior(vec![0.0; 3]);
        let all_excluded = posterior(vec![1.0; 3]);
        let base = plcpa(&s, &h, &cfg).unwrap().mean;
        assert!((loss_exclude(&s, &h, &all_included, &cfg).unwrap() - base).abs() < 1e-12);
        assert_eq!(loss_exclude(&s, &h, &all_excluded, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn exclude_matches_masked_oracle() {
        let s = random_spec(3, 9, 11);
        let h = random_spec(3, 9, 12);
        let cfg = LossConfig::default();
        let p = posterior(vec![0.9, 0.1, 0.1]);
        let got = loss_exclude(&s, &h, &p, &cfg).unwrap();
        let full = plcpa(&s, &h, &cfg).unwrap();
        let expect: f64 = (1..3)
            .flat_map(|t| (0..9).map(move |f| (t, f)))
            .map(|(t, f)| full.per_bin[[t, f]])
            .sum::<f64>()
            / 27.0;
        assert!((got - expect).abs() < 1e-10);
    }

    #[test]
    fn mix_ref_identities() {
        let s = random_spec(4, 6, 13);
        let y = random_spec(4, 6, 14);
        let cfg = LossConfig::default();
        let all_included = posterior(vec![0.0; 4]);
        let base = plcpa(&s, &y, &cfg).unwrap().mean;
        // p_ts = 0 everywhere: reduces to plcpa(S, S_hat).
        assert!((loss_mix_ref(&s, &y, &y, &all_included, &cfg).unwrap() - base).abs() < 1e-12);
        // p_ts = 1 and S_hat == Y: leak-through is optimal on gated frames.
        let all_active = posterior(vec![1.0; 4]);
        assert_eq!(loss_mix_ref(&s, &y, &y, &all_active, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn mix_ref_matches_switched_oracle() {
        let s = random_spec(4, 6, 15);
        let h = random_spec(4, 6, 16);
        let y = random_spec(4, 6, 17);
        let cfg = LossConfig::default();
        let p = posterior(vec![0.2, 0.8, 0.49, 0.51]);
        let got = loss_mix_ref(&s, &h, &y, &p, &cfg).unwrap();
        let ls = plcpa(&s, &h, &cfg).unwrap();
        let ly = plcpa(&y, &h, &cfg).unwrap();
        let mut acc = 0.0;
        for (t, &pv) in [0.2, 0.8, 0.49, 0.51].iter().enumerate() {
            let src = if pv < cfg.tau { &ls } else { &ly };
            for f in 0..6 {
                acc += src.per_bin[[t, f]];
            }
        }
        assert!((got - acc / 24.0).abs() < 1e-10);
    }

    #[test]
    fn posterior_identities_and_scaling() {
        let s = random_spec(5, 8, 18);
        let h = random_spec(5, 8, 19);
        let cfg = LossConfig::default();
        let base = plcpa(&s, &h, &cfg).unwrap().mean;
        assert_eq!(loss_posterior(&s, &h, &posterior(vec![1.0; 5]), &cfg).unwrap(), 0.0);
        assert!((loss_posterior(&s, &h, &posterior(vec![0.0; 5]), &cfg).unwrap() - base).abs() < 1e-12);
        let half = loss_posterior(&s, &h, &posterior(vec![0.5; 5]), &cfg).unwrap();
        assert!((half - 0.5 * base).abs() < 1e-12);
    }

    #[test]
    fn training_loss_dispatch() {
        let s = random_spec(4, 6, 20);
        let h = random_spec(4, 6, 21);
        let y = random_spec(4, 6, 22);
        let base = plcpa(&s, &h, &LossConfig::default()).unwrap().mean;
        for variant in [
            LossVariant::Plcpa,
            LossVariant::Exclude,
            LossVariant::MixRef,
            LossVariant::Posterior,
        ] {
            let cfg = LossConfig {
                variant,
                ..LossConfig::default()
            };
            // Non-ITS: always plain plcpa regardless of variant.
            let inp = TrainingLossInputs {
                is_its: false,
                clean: &s,
                estimate: &h,
                mixture: &y,
                posterior: None,
            };
            assert!((training_loss(&inp, &cfg).unwrap() - base).abs() < 1e-12);
        }

        // ITS + EXCLUDE + p_ts = 1 everywhere: loss 0.
        let cfg = LossConfig {
            variant: LossVariant::Exclude,
            ..LossConfig::default()
        };
        let p = posterior(vec![1.0; 4]);
        let zeros = s.zeros_like();
        let inp = TrainingLossInputs {
            is_its: true,
            clean: &zeros,
            estimate: &h,
            mixture: &y,
            posterior: Some(&p),
        };
        assert_eq!(training_loss(&inp, &cfg).unwrap(), 0.0);

        // ITS + PLCPA: scored against the all-zero reference.
        let cfg = LossConfig::default();
        let inp = TrainingLossInputs {
            is_its: true,
            clean: &zeros,
            estimate: &h,
            mixture: &y,
            posterior: None,
        };
        let expect = plcpa(&zeros, &h, &cfg).unwrap().mean;
        assert!((training_loss(&inp, &cfg).unwrap() - expect).abs() < 1e-12);

        // ITS + gated variant without a posterior: error.
        let cfg = LossConfig {
            variant: LossVariant::Exclude,
            ..LossConfig::default()
        };
        let inp = TrainingLossInputs {
            is_its: true,
            clean: &zeros,
            estimate: &h,
            mixture: &y,
            posterior: None,
        };
        assert!(training_loss(&inp, &cfg).is_err());
    }

    #[test]
    fn gate_monotone_in_tau() {
        let p = posterior(vec![0.1, 0.3, 0.5, 0.7, 0.9]);
        let g1 = frame_gate(&p, 0.25);
        let g2 = frame_gate(&p, 0.75);
        for (a, b) in g1.iter().zip(g2.iter()) {
            assert!(!a | b, "tau1 <= tau2 must imply gate1 <= gate2");
        }
    }

    #[test]
    fn shape_mismatch_is_error() {
        let s = random_spec(3, 5, 23);
        let h = random_spec(3, 6, 24);
        let cfg = LossConfig::default();
        assert!(plcpa(&s, &h, &cfg).is_err());
        let p = posterior(vec![0.0; 2]);
        let h2 = random_spec(3, 5, 25);
        assert!(loss_exclude(&s, &h2, &p, &cfg).is_err());
    }

    /// Central-difference oracle for a scalar loss over the estimate.
    pub(crate) fn finite_diff_grad<F>(s_hat: &ComplexSpectrogram, loss: F) -> Array2<Complex64>
    where
        F: Fn(&ComplexSpectrogram) -> f64,
    {
        let h = 1e-7;
        let mut out = Array2::from_elem(s_hat.values.raw_dim(), Complex64::new(0.0, 0.0));
        for t in 0..s_hat.frames() {
            for f in 0..s_hat.bins() {
                let mut plus = s_hat.clone();
                plus.values[[t, f]] += Complex64::new(h, 0.0);
                let mut minus = s_hat.clone();
                minus.values[[t, f]] -= Complex64::new(h, 0.0);
                let dre = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let mut plus = s_hat.clone();
                plus.values[[t, f]] += Complex64::new(0.0, h);
                let mut minus = s_hat.clone();
                minus.values[[t, f]] -= Complex64::new(0.0, h);
                let dim = (loss(&plus) - loss(&minus)) / (2.0 * h);
                out[[t, f]] = Complex64::new(dre, dim);
            }
        }
        out
    }

    #[test]
    fn gradients_match_finite_differences() {
        let s = random_spec(4, 9, 26);
        let h = random_spec(4, 9, 27);
        let y = random_spec(4, 9, 28);
        let p = posterior(vec![0.1, 0.6, 0.45, 0.8]);
        let cfg = LossConfig {
            asym_weight: 0.7,
            ..LossConfig::default()
        };

        let cases: Vec<(&str, Array2<Complex64>, Box<dyn Fn(&ComplexSpectrogram) -> f64>)> = vec![
            (
                "plcpa",
                plcpa_grad(&s, &h, &cfg).unwrap(),
                Box::new(|e: &ComplexSpectrogram| plcpa(&s, e, &cfg).unwrap().mean),
            ),
            (
                "asym",
                asym_os_grad(&s, &h, &cfg).unwrap(),
                Box::new(|e: &ComplexSpectrogram| asym_os(&s, e, &cfg).unwrap().mean),
            ),
            (
                "exclude",
                loss_exclude_grad(&s, &h, &p, &cfg).unwrap(),
                Box::new(|e: &ComplexSpectrogram| loss_exclude(&s, e, &p, &cfg).unwrap()),
            ),
            (
                "mixref",
                loss_mix_ref_grad(&s, &h, &y, &p, &cfg).unwrap(),
                Box::new(|e: &ComplexSpectrogram| loss_mix_ref(&s, e, &y, &p, &cfg).unwrap()),
            ),
            (
                "posterior",
                loss_posterior_grad(&s, &h, &p, &cfg).unwrap(),
                Box::new(|e: &ComplexSpectrogram| loss_posterior(&s, e, &p, &cfg).unwrap()),
            ),
        ];
        for (name, analytic, f) in cases {
            let fd = finite_diff_grad(&h, |e| f(e));
            for (a, b) in analytic.iter().zip(fd.iter()) {
                let denom = b.norm().max(1e-8);
                assert!(
                    (a - b).norm() / denom < 1e-4,
                    "{name}: analytic {a} vs fd {b}"
                );
            }
        }
    }
}
