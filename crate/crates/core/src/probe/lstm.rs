//! Single-layer LSTM with a per-frame linear readout, forward and full
//! backpropagation through time.
//!
//! Gates are stacked `[i; f; g; o]` along the 4H rows of the input and
//! recurrent matrices. All parameters live in one flat vector so the
//! optimizer and finite-difference checks can treat them uniformly:
//!
//! ```text
//! [ W_x (4H×d) | W_h (4H×H) | b (4H) | w_out (H) | b_out (1) ]
//! ```

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use rand::Rng as _;

use super::loss::sigmoid;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    input_dim: usize,
    hidden: usize,
    data: Vec<f64>,
}

impl LstmParams {
    pub fn len_for(input_dim: usize, hidden: usize) -> usize {
        4 * hidden * input_dim + 4 * hidden * hidden + 4 * hidden + hidden + 1
    }

    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            input_dim,
            hidden,
            data: vec![0.0; Self::len_for(input_dim, hidden)],
        }
    }

    pub fn from_flat(input_dim: usize, hidden: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != Self::len_for(input_dim, hidden) {
            return Err(Error::ShapeMismatch(format!(
                "{} parameters for an LSTM with d={input_dim}, H={hidden}",
                data.len()
            )));
        }
        Ok(Self {
            input_dim,
            hidden,
            data,
        })
    }

    /// Uniform ±1/√H everywhere, then the forget-gate bias set to `forget_bias`.
    pub fn init(input_dim: usize, hidden: usize, forget_bias: f64, rng: &mut Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut p = Self::zeros(input_dim, hidden);
        p.data
            .iter_mut()
            .for_each(|v| *v = rng.random_range(-bound..bound));
        let h = hidden;
        p.gate_bias_mut().slice_mut(s![h..2 * h]).fill(forget_bias);
        p
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn offsets(&self) -> [usize; 5] {
        let (d, h) = (self.input_dim, self.hidden);
        let wx = 0;
        let wh = wx + 4 * h * d;
        let b = wh + 4 * h * h;
        let w_out = b + 4 * h;
        let b_out = w_out + h;
        [wx, wh, b, w_out, b_out]
    }

    pub fn input_weights(&self) -> ArrayView2<'_, f64> {
        let [wx, wh, ..] = self.offsets();
        ArrayView2::from_shape((4 * self.hidden, self.input_dim), &self.data[wx..wh]).unwrap()
    }

    pub fn recurrent_weights(&self) -> ArrayView2<'_, f64> {
        let [_, wh, b, ..] = self.offsets();
        ArrayView2::from_shape((4 * self.hidden, self.hidden), &self.data[wh..b]).unwrap()
    }

    pub fn gate_bias(&self) -> ArrayView1<'_, f64> {
        let [_, _, b, w_out, _] = self.offsets();
        ArrayView1::from(&self.data[b..w_out])
    }

    pub fn readout(&self) -> ArrayView1<'_, f64> {
        let [.., w_out, b_out] = self.offsets();
        ArrayView1::from(&self.data[w_out..b_out])
    }

    pub fn readout_bias(&self) -> f64 {
        self.data[self.data.len() - 1]
    }

    fn input_weights_mut(&mut self) -> ArrayViewMut2<'_, f64> {
        let [wx, wh, ..] = self.offsets();
        let shape = (4 * self.hidden, self.input_dim);
        ArrayViewMut2::from_shape(shape, &mut self.data[wx..wh]).unwrap()
    }

    fn recurrent_weights_mut(&mut self) -> ArrayViewMut2<'_, f64> {
        let [_, wh, b, ..] = self.offsets();
        let shape = (4 * self.hidden, self.hidden);
        ArrayViewMut2::from_shape(shape, &mut self.data[wh..b]).unwrap()
    }

    fn gate_bias_mut(&mut self) -> ArrayViewMut1<'_, f64> {
        let [_, _, b, w_out, _] = self.offsets();
        ArrayViewMut1::from(&mut self.data[b..w_out])
    }

    fn readout_mut(&mut self) -> ArrayViewMut1<'_, f64> {
        let [.., w_out, b_out] = self.offsets();
        ArrayViewMut1::from(&mut self.data[w_out..b_out])
    }

    /// `self += other`, used to accumulate per-sequence gradients.
    pub fn add_assign(&mut self, other: &LstmParams) {
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
    }

    /// Logits for every frame of `features` (T×d) plus the cached
    /// activations needed for [`LstmParams::backward`].
    pub fn forward(&self, features: ArrayView2<'_, f64>) -> Result<(Vec<f64>, LstmCache)> {
        let h = self.hidden;
        let t_len = features.nrows();
        if features.ncols() != self.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "probe expects {} features, got {}",
                self.input_dim,
                features.ncols()
            )));
        }
        // Input contribution for all frames in one product.
        let mut pre = features.dot(&self.input_weights().t());
        pre += &self.gate_bias();
        let wh = self.recurrent_weights();
        let mut gates = Array2::<f64>::zeros((t_len, 4 * h));
        let mut cells = Array2::<f64>::zeros((t_len + 1, h));
        let mut hiddens = Array2::<f64>::zeros((t_len + 1, h));
        let mut logits = Vec::with_capacity(t_len);
        let w_out = self.readout();
        let b_out = self.readout_bias();
        for t in 0..t_len {
            let mut z = pre.row(t).to_owned();
            z += &wh.dot(&hiddens.row(t));
            let mut gate = gates.row_mut(t);
            for k in 0..h {
                gate[k] = sigmoid(z[k]);
                gate[h + k] = sigmoid(z[h + k]);
                gate[2 * h + k] = z[2 * h + k].tanh();
                gate[3 * h + k] = sigmoid(z[3 * h + k]);
            }
            for k in 0..h {
                let c = gate[h + k] * cells[[t, k]] + gate[k] * gate[2 * h + k];
                cells[[t + 1, k]] = c;
                hiddens[[t + 1, k]] = gate[3 * h + k] * c.tanh();
            }
            let logit = w_out.dot(&hiddens.row(t + 1)) + b_out;
            if !logit.is_finite() {
                return Err(Error::NumericFault {
                    frame: t,
                    what: format!("probe logit is {logit}"),
                });
            }
            logits.push(logit);
        }
        Ok((
            logits,
            LstmCache {
                gates,
                cells,
                hiddens,
            },
        ))
    }

    /// Gradient of a loss with per-frame `dlogits` w.r.t. every parameter.
    pub fn backward(
        &self,
        features: ArrayView2<'_, f64>,
        cache: &LstmCache,
        dlogits: &[f64],
    ) -> LstmParams {
        let h = self.hidden;
        let t_len = features.nrows();
        let w_out = self.readout();
        let wh = self.recurrent_weights();
        let mut dz_all = Array2::zeros((t_len, 4 * h));
        let mut dh_next = Array1::<f64>::zeros(h);
        let mut dc_next = Array1::<f64>::zeros(h);
        for t in (0..t_len).rev() {
            let gate = cache.gates.row(t);
            let c_prev = cache.cells.row(t);
            let c = cache.cells.row(t + 1);
            let mut dz = dz_all.row_mut(t);
            for k in 0..h {
                let (i, f, g, o) = (gate[k], gate[h + k], gate[2 * h + k], gate[3 * h + k]);
                let tc = c[k].tanh();
                let dh = dlogits[t] * w_out[k] + dh_next[k];
                let d_o = dh * tc;
                let dc = dh * o * (1.0 - tc * tc) + dc_next[k];
                dz[k] = dc * g * i * (1.0 - i);
                dz[h + k] = dc * c_prev[k] * f * (1.0 - f);
                dz[2 * h + k] = dc * i * (1.0 - g * g);
                dz[3 * h + k] = d_o * o * (1.0 - o);
                dc_next[k] = dc * f;
            }
            dh_next = wh.t().dot(&dz);
        }
        let mut grad = LstmParams::zeros(self.input_dim, h);
        grad.input_weights_mut().assign(&dz_all.t().dot(&features));
        let h_prev = cache.hiddens.slice(s![0..t_len, ..]);
        grad.recurrent_weights_mut().assign(&dz_all.t().dot(&h_prev));
        grad.gate_bias_mut()
            .assign(&dz_all.sum_axis(ndarray::Axis(0)));
        let dl = ArrayView1::from(dlogits);
        let h_out = cache.hiddens.slice(s![1.., ..]);
        grad.readout_mut().assign(&h_out.t().dot(&dl));
        let n = grad.data.len();
        grad.data[n - 1] = dlogits.iter().sum();
        grad
    }
}

/// Per-frame gate activations, cell states and hidden states of a forward
/// pass. `cells` and `hiddens` carry the zero initial state in row 0.
#[derive(Debug, Clone)]
pub struct LstmCache {
    pub gates: Array2<f64>,
    pub cells: Array2<f64>,
    pub hiddens: Array2<f64>,
}
