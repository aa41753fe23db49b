//! Speaker embeddings (d-vectors) from enrollment audio.
//!
//! The default embedder is a deterministic statistical substitute for a
//! trained speaker encoder: per-utterance mean and standard deviation of the
//! 40-band log-mel features (80 dims), averaged across utterances, projected
//! to 128 dims by a fixed seeded random orthonormal matrix, then
//! L2-normalized. The `Embedder` trait is the only coupling point, so a real
//! pretrained encoder can be swapped in without touching the models.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dsp::{log_mel, StftConfig, Waveform};
#[cfg(test)]
use crate::dsp::SAMPLE_RATE;
use crate::error::{Error, Result};

pub const DVECTOR_DIM: usize = 128;

/// Mel means plus mel standard deviations.
const STATS_DIM: usize = 80;

/// Fixed seed of the projection matrix; part of the reproducibility contract.
pub const PROJECTION_SEED: u64 = 0x00D1_57AB;

/// Minimum total enrollment audio.
pub const MIN_ENROLLMENT_SECONDS: f64 = 3.0;

const DVECTOR_MAGIC: &[u8; 8] = b"PSEDVEC\0";
const DVECTOR_VERSION: u32 = 1;

/// Unit-norm 128-dimensional speaker embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct DVector {
    values: Vec<f64>,
}

impl DVector {
    /// Validates dimension and unit norm (within 1e-6).
    pub fn new(values: Vec<f64>) -> Result<DVector> {
        if values.len() != DVECTOR_DIM {
            return Err(Error::Config(format!(
                "d-vector must have {DVECTOR_DIM} dims, got {}",
                values.len()
            )));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!("d-vector norm {norm} != 1")));
        }
        Ok(DVector { values })
    }

    /// Normalizes and wraps; errors on a zero vector.
    pub fn from_unnormalized(mut values: Vec<f64>) -> Result<DVector> {
        if values.len() != DVECTOR_DIM {
            return Err(Error::Config(format!(
                "d-vector must have {DVECTOR_DIM} dims, got {}",
                values.len()
            )));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Config("cannot normalize a zero d-vector".into()));
        }
        for v in &mut values {
            *v /= norm;
        }
        Ok(DVector { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn cosine(&self, other: &DVector) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Little-endian binary: 8-byte magic, u32 version, u32 dim, then the
    /// floats as f32.
    pub fn write_to(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(DVECTOR_MAGIC)?;
        w.write_all(&DVECTOR_VERSION.to_le_bytes())?;
        w.write_all(&(DVECTOR_DIM as u32).to_le_bytes())?;
        for &v in &self.values {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<DVector> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DVECTOR_MAGIC {
            return Err(Error::Config(format!("{}: not a d-vector file", path.display())));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf)?;
        let version = u32::from_le_bytes(u32buf);
        if version != DVECTOR_VERSION {
            return Err(Error::Config(format!("unsupported d-vector version {version}")));
        }
        r.read_exact(&mut u32buf)?;
        let dim = u32::from_le_bytes(u32buf) as usize;
        if dim != DVECTOR_DIM {
            return Err(Error::Config(format!("d-vector dim {dim} != {DVECTOR_DIM}")));
        }
        let mut values = Vec::with_capacity(dim);
        let mut f32buf = [0u8; 4];
        for _ in 0..dim {
            r.read_exact(&mut f32buf)?;
            values.push(f32::from_le_bytes(f32buf) as f64);
        }
        // f32 storage perturbs the norm slightly; renormalize.
        DVector::from_unnormalized(values)
    }
}

/// The pluggable embedding interface.
pub trait Embedder {
    fn embed(&self, enrollment: &[Waveform]) -> Result<DVector>;
}

/// Default statistical embedder.
pub struct MelStatsEmbedder {
    stft: StftConfig,
    /// 128 x 80 matrix with orthonormal columns.
    projection: Array2<f64>,
}

impl Default for MelStatsEmbedder {
    fn default() -> Self {
        MelStatsEmbedder::new(PROJECTION_SEED)
    }
}

impl MelStatsEmbedder {
    pub fn new(projection_seed: u64) -> MelStatsEmbedder {
        let mut rng = ChaCha8Rng::seed_from_u64(projection_seed);
        let mut cols: Vec<Array1<f64>> = Vec::with_capacity(STATS_DIM);
        for _ in 0..STATS_DIM {
            let mut col = Array1::from_shape_fn(DVECTOR_DIM, |_| gaussian(&mut rng));
            // Gram-Schmidt against previous columns.
            for prev in &cols {
                let dot = col.dot(prev);
                col.zip_mut_with(prev, |c, &p| *c -= dot * p);
            }
            let norm = col.dot(&col).sqrt();
            col.mapv_inplace(|v| v / norm);
            cols.push(col);
        }
        let mut projection = Array2::zeros((DVECTOR_DIM, STATS_DIM));
        for (j, col) in cols.iter().enumerate() {
            for i in 0..DVECTOR_DIM {
                projection[[i, j]] = col[i];
            }
        }
        MelStatsEmbedder {
            stft: StftConfig::default(),
            projection,
        }
    }

    fn utterance_stats(&self, utt: &Waveform) -> Result<Array1<f64>> {
        let mel = log_mel(utt, &self.stft)?;
        let frames = mel.values.nrows() as f64;
        let bands = mel.values.ncols();
        let mut stats = Array1::zeros(STATS_DIM);
        for b in 0..bands {
            let col = mel.values.column(b);
            let mean = col.sum() / frames;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / frames;
            stats[b] = mean;
            stats[bands + b] = var.sqrt();
        }
        Ok(stats)
    }
}

impl Embedder for MelStatsEmbedder {
    fn embed(&self, enrollment: &[Waveform]) -> Result<DVector> {
        let total: f64 = enrollment.iter().map(|w| w.duration_seconds()).sum();
        if total < MIN_ENROLLMENT_SECONDS {
            return Err(Error::InsufficientEnrollment {
                have: total,
                need: MIN_ENROLLMENT_SECONDS,
            });
        }
        let mut acc = Array1::zeros(STATS_DIM);
        let mut count = 0.0;
        for utt in enrollment {
            acc = acc + self.utterance_stats(utt)?;
            count += 1.0;
        }
        acc.mapv_inplace(|v| v / count);
        let projected = self.projection.dot(&acc);
        DVector::from_unnormalized(projected.to_vec())
    }
}

/// Default-embedder convenience wrapper.
pub fn compute_dvector(enrollment: &[Waveform]) -> Result<DVector> {
    MelStatsEmbedder::default().embed(enrollment)
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; consumes two uniforms per call.
    use rand::Rng;
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
