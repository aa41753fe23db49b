//! Building blocks for the causal networks: linear, unidirectional LSTM, and
//! layer normalization, each with a hand-written backward pass. All math is
//! f64 so finite-difference checks are meaningful.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

/// Immutable view over one named parameter tensor.
pub enum TensorRef<'a> {
    M(&'a Array2<f64>),
    V(&'a Array1<f64>),
}

/// Mutable view over one named parameter tensor.
pub enum TensorMut<'a> {
    M(&'a mut Array2<f64>),
    V(&'a mut Array1<f64>),
}

impl TensorRef<'_> {
    pub fn len(&self) -> usize {
        match self {
            TensorRef::M(a) => a.len(),
            TensorRef::V(a) => a.len(),
        }
    }

    pub fn shape_vec(&self) -> Vec<usize> {
        match self {
            TensorRef::M(a) => a.shape().to_vec(),
            TensorRef::V(a) => a.shape().to_vec(),
        }
    }

    pub fn extend_flat(&self, out: &mut Vec<f64>) {
        match self {
            TensorRef::M(a) => out.extend(a.iter()),
            TensorRef::V(a) => out.extend(a.iter()),
        }
    }
}

impl TensorMut<'_> {
    pub fn len(&self) -> usize {
        match self {
            TensorMut::M(a) => a.len(),
            TensorMut::V(a) => a.len(),
        }
    }

    pub fn copy_from_flat(&mut self, data: &[f64]) {
        match self {
            TensorMut::M(a) => {
                for (dst, src) in a.iter_mut().zip(data) {
                    *dst = *src;
                }
            }
            TensorMut::V(a) => {
                for (dst, src) in a.iter_mut().zip(data) {
                    *dst = *src;
                }
            }
        }
    }
}

fn uniform_init(rng: &mut impl Rng, rows: usize, cols: usize, fan_in: usize) -> Array2<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

/// dL/dx for y = relu(x) given the pre-activation and dL/dy.
pub fn relu_backward(pre: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let mut out = dy.clone();
    out.zip_mut_with(pre, |d, &p| {
        if p <= 0.0 {
            *d = 0.0;
        }
    });
    out
}

// ─── Linear ─────────────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

pub struct LinearGrads {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    pub fn init(rng: &mut impl Rng, in_dim: usize, out_dim: usize) -> Linear {
        Linear {
            w: uniform_init(rng, in_dim, out_dim, in_dim),
            b: Array1::zeros(out_dim),
        }
    }

    pub fn zeros_like(&self) -> Linear {
        Linear {
            w: Array2::zeros(self.w.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }

    /// Returns (dL/dx, parameter grads) for y = x W + b.
    pub fn backward(&self, x: &Array2<f64>, dy: &Array2<f64>) -> (Array2<f64>, LinearGrads) {
        let dx = dy.dot(&self.w.t());
        let dw = x.t().dot(dy);
        let db = dy.sum_axis(Axis(0));
        (dx, LinearGrads { w: dw, b: db })
    }
}

// ─── LSTM ───────────────────────────────────────────────────────────────────

/// Unidirectional LSTM over a frame sequence. Gate layout in the fused
/// weights is [input, forget, cell, output].
#[derive(Debug, Clone)]
pub struct Lstm {
    pub wx: Array2<f64>,
    pub wh: Array2<f64>,
    pub b: Array1<f64>,
}

pub struct LstmGrads {
    pub wx: Array2<f64>,
    pub wh: Array2<f64>,
    pub b: Array1<f64>,
}

pub struct LstmCache {
    /// Post-activation gates per frame, T x 4h.
    gates: Array2<f64>,
    /// Cell states per frame, T x h.
    cells: Array2<f64>,
    /// tanh(c) per frame, T x h.
    tanh_cells: Array2<f64>,
    /// Hidden states per frame, T x h.
    pub hidden: Array2<f64>,
}

impl Lstm {
    pub fn init(rng: &mut impl Rng, in_dim: usize, hidden: usize) -> Lstm {
        let mut b = Array1::zeros(4 * hidden);
        // Forget-gate bias starts open.
        for k in hidden..2 * hidden {
            b[k] = 1.0;
        }
        Lstm {
            wx: uniform_init(rng, in_dim, 4 * hidden, in_dim),
            wh: uniform_init(rng, hidden, 4 * hidden, hidden),
            b,
        }
    }

    pub fn zeros_like(&self) -> Lstm {
        Lstm {
            wx: Array2::zeros(self.wx.raw_dim()),
            wh: Array2::zeros(self.wh.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.wh.nrows()
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, LstmCache) {
        let t_count = x.nrows();
        let h = self.hidden_dim();
        // Input contribution batches across time; the recurrence cannot.
        let zx = x.dot(&self.wx) + &self.b;
        let mut gates = Array2::zeros((t_count, 4 * h));
        let mut cells = Array2::zeros((t_count, h));
        let mut tanh_cells = Array2::zeros((t_count, h));
        let mut hidden = Array2::zeros((t_count, h));
        let mut h_prev = Array1::<f64>::zeros(h);
        let mut c_prev = Array1::<f64>::zeros(h);
        for t in 0..t_count {
            let zh = h_prev.dot(&self.wh);
            for k in 0..h {
                let zi = zx[[t, k]] + zh[k];
                let zf = zx[[t, h + k]] + zh[h + k];
                let zg = zx[[t, 2 * h + k]] + zh[2 * h + k];
                let zo = zx[[t, 3 * h + k]] + zh[3 * h + k];
                let gi = sigmoid(zi);
                let gf = sigmoid(zf);
                let gg = zg.tanh();
                let go = sigmoid(zo);
                let c = gf * c_prev[k] + gi * gg;
                let tc = c.tanh();
                gates[[t, k]] = gi;
                gates[[t, h + k]] = gf;
                gates[[t, 2 * h + k]] = gg;
                gates[[t, 3 * h + k]] = go;
                cells[[t, k]] = c;
                tanh_cells[[t, k]] = tc;
                hidden[[t, k]] = go * tc;
            }
            h_prev.assign(&hidden.row(t));
            c_prev.assign(&cells.row(t));
        }
        let out = hidden.clone();
        (
            out,
            LstmCache {
                gates,
                cells,
                tanh_cells,
                hidden,
            },
        )
    }

    /// Backpropagation through time. `x` is the forward input, `dh_out` the
    /// gradient over the hidden-state sequence.
    pub fn backward(
        &self,
        x: &Array2<f64>,
        cache: &LstmCache,
        dh_out: &Array2<f64>,
    ) -> (Array2<f64>, LstmGrads) {
        let t_count = x.nrows();
        let h = self.hidden_dim();
        let mut dz_all = Array2::<f64>::zeros((t_count, 4 * h));
        let mut dh_carry = Array1::<f64>::zeros(h);
        let mut dc_carry = Array1::<f64>::zeros(h);
        for t in (0..t_count).rev() {
            for k in 0..h {
                let gi = cache.gates[[t, k]];
                let gf = cache.gates[[t, h + k]];
                let gg = cache.gates[[t, 2 * h + k]];
                let go = cache.gates[[t, 3 * h + k]];
                let tc = cache.tanh_cells[[t, k]];
                let c_prev = if t > 0 { cache.cells[[t - 1, k]] } else { 0.0 };

                let dh = dh_out[[t, k]] + dh_carry[k];
                let d_o = dh * tc;
                let dc = dc_carry[k] + dh * go * (1.0 - tc * tc);
                let d_i = dc * gg;
                let d_g = dc * gi;
                let d_f = dc * c_prev;
                dc_carry[k] = dc * gf;

                dz_all[[t, k]] = d_i * gi * (1.0 - gi);
                dz_all[[t, h + k]] = d_f * gf * (1.0 - gf);
                dz_all[[t, 2 * h + k]] = d_g * (1.0 - gg * gg);
                dz_all[[t, 3 * h + k]] = d_o * go * (1.0 - go);
            }
            let dz_row = dz_all.row(t);
            dh_carry = dz_row.dot(&self.wh.t());
        }

        // Hidden states shifted by one frame (h_{t-1} inputs).
        let mut h_prev_all = Array2::<f64>::zeros((t_count, h));
        for t in 1..t_count {
            for k in 0..h {
                h_prev_all[[t, k]] = cache.hidden[[t - 1, k]];
            }
        }

        let dx = dz_all.dot(&self.wx.t());
        let dwx = x.t().dot(&dz_all);
        let dwh = h_prev_all.t().dot(&dz_all);
        let db = dz_all.sum_axis(Axis(0));
        (
            dx,
            LstmGrads {
                wx: dwx,
                wh: dwh,
                b: db,
            },
        )
    }
}

// ─── Layer normalization ────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

pub struct LayerNormGrads {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

pub struct LayerNormCache {
    normalized: Array2<f64>,
    inv_std: Array1<f64>,
}

const LN_EPS: f64 = 1e-5;

impl LayerNorm {
    pub fn init(dim: usize) -> LayerNorm {
        LayerNorm {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
        }
    }

    pub fn zeros_like(&self) -> LayerNorm {
        LayerNorm {
            gamma: Array1::zeros(self.gamma.raw_dim()),
            beta: Array1::zeros(self.beta.raw_dim()),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, LayerNormCache) {
        let t_count = x.nrows();
        let n = x.ncols() as f64;
        let mut normalized = Array2::zeros(x.raw_dim());
        let mut inv_std = Array1::zeros(t_count);
        let mut out = Array2::zeros(x.raw_dim());
        for t in 0..t_count {
            let row = x.row(t);
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let istd = 1.0 / (var + LN_EPS).sqrt();
            inv_std[t] = istd;
            for (k, &v) in row.iter().enumerate() {
                let xn = (v - mean) * istd;
                normalized[[t, k]] = xn;
                out[[t, k]] = self.gamma[k] * xn + self.beta[k];
            }
        }
        (out, LayerNormCache { normalized, inv_std })
    }

    pub fn backward(
        &self,
        cache: &LayerNormCache,
        dy: &Array2<f64>,
    ) -> (Array2<f64>, LayerNormGrads) {
        let t_count = dy.nrows();
        let n = dy.ncols() as f64;
        let mut dx = Array2::zeros(dy.raw_dim());
        let mut dgamma = Array1::zeros(dy.ncols());
        let mut dbeta = Array1::zeros(dy.ncols());
        for t in 0..t_count {
            let mut g_mean = 0.0;
            let mut gx_mean = 0.0;
            for k in 0..dy.ncols() {
                let g = dy[[t, k]] * self.gamma[k];
                g_mean += g;
                gx_mean += g * cache.normalized[[t, k]];
                dgamma[k] += dy[[t, k]] * cache.normalized[[t, k]];
                dbeta[k] += dy[[t, k]];
            }
            g_mean /= n;
            gx_mean /= n;
            for k in 0..dy.ncols() {
                let g = dy[[t, k]] * self.gamma[k];
                dx[[t, k]] = cache.inv_std[t] * (g - g_mean - cache.normalized[[t, k]] * gx_mean);
            }
        }
        (
            dx,
            LayerNormGrads {
                gamma: dgamma,
                beta: dbeta,
            },
        )
    }
}

// ─── LSTM block ─────────────────────────────────────────────────────────────

/// One recurrent block: two fully connected layers, an LSTM with a residual
/// connection from its input, then layer normalization.
#[derive(Debug, Clone)]
pub struct LstmBlock {
    pub fc1: Linear,
    pub fc2: Linear,
    pub lstm: Lstm,
    pub norm: LayerNorm,
}

pub struct LstmBlockGrads {
    pub fc1: LinearGrads,
    pub fc2: LinearGrads,
    pub lstm: LstmGrads,
    pub norm: LayerNormGrads,
}

pub struct LstmBlockCache {
    input: Array2<f64>,
    fc1_pre: Array2<f64>,
    fc1_out: Array2<f64>,
    fc2_pre: Array2<f64>,
    fc2_out: Array2<f64>,
    lstm: LstmCache,
    norm: LayerNormCache,
}

impl LstmBlock {
    pub fn init(rng: &mut impl Rng, in_dim: usize, ffn_dim: usize, lstm_dim: usize) -> LstmBlock {
        LstmBlock {
            fc1: Linear::init(rng, in_dim, ffn_dim),
            fc2: Linear::init(rng, ffn_dim, lstm_dim),
            lstm: Lstm::init(rng, lstm_dim, lstm_dim),
            norm: LayerNorm::init(lstm_dim),
        }
    }

    pub fn zeros_like(&self) -> LstmBlock {
        LstmBlock {
            fc1: self.fc1.zeros_like(),
            fc2: self.fc2.zeros_like(),
            lstm: self.lstm.zeros_like(),
            norm: self.norm.zeros_like(),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, LstmBlockCache) {
        let fc1_pre = self.fc1.forward(x);
        let fc1_out = relu(&fc1_pre);
        let fc2_pre = self.fc2.forward(&fc1_out);
        let fc2_out = relu(&fc2_pre);
        let (lstm_out, lstm_cache) = self.lstm.forward(&fc2_out);
        let residual = &lstm_out + &fc2_out;
        let (out, norm_cache) = self.norm.forward(&residual);
        (
            out,
            LstmBlockCache {
                input: x.clone(),
                fc1_pre,
                fc1_out,
                fc2_pre,
                fc2_out,
                lstm: lstm_cache,
                norm: norm_cache,
            },
        )
    }

    pub fn backward(&self, cache: &LstmBlockCache, dy: &Array2<f64>) -> (Array2<f64>, LstmBlockGrads) {
        let (d_residual, norm_grads) = self.norm.backward(&cache.norm, dy);
        let (d_lstm_in, lstm_grads) = self.lstm.backward(&cache.fc2_out, &cache.lstm, &d_residual);
        let d_fc2_out = &d_lstm_in + &d_residual; // residual path
        let d_fc2_pre = relu_backward(&cache.fc2_pre, &d_fc2_out);
        let (d_fc1_out, fc2_grads) = self.fc2.backward(&cache.fc1_out, &d_fc2_pre);
        let d_fc1_pre = relu_backward(&cache.fc1_pre, &d_fc1_out);
        let (dx, fc1_grads) = self.fc1.backward(&cache.input, &d_fc1_pre);
        (
            dx,
            LstmBlockGrads {
                fc1: fc1_grads,
                fc2: fc2_grads,
                lstm: lstm_grads,
                norm: norm_grads,
            },
        )
    }
}
