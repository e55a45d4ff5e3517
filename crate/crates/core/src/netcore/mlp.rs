use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::gaussian::{LOG_STD_MAX, LOG_STD_MIN};
use super::NetError;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `(outputs, inputs)`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Tanh MLP with a linear output layer, optionally carrying a state-independent log-std.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamSetRepr", into = "ParamSetRepr")]
pub struct ParamSet {
    pub layers: Vec<Dense>,
    pub log_std: Option<Array1<f64>>,
}

/// Layer inputs recorded during a forward pass, consumed by [`ParamSet::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<Array2<f64>>,
}

impl ParamSet {
    /// `sizes` lists every layer width from input to output. Hidden weights are drawn from
    /// `N(0, 1/fan_in)`; the output layer is further scaled by `output_scale`.
    pub fn init<R: Rng>(sizes: &[usize], log_std: Option<f64>, output_scale: f64, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|k| {
                let (i, o) = (sizes[k], sizes[k + 1]);
                let scale = (1.0 / i as f64).sqrt() * if k + 1 == n { output_scale } else { 1.0 };
                let weight = Array2::from_shape_simple_fn((o, i), || scale * rng.sample::<f64, _>(StandardNormal));
                Dense { weight, bias: Array1::zeros(o) }
            })
            .collect();
        let out = sizes[n];
        Self { layers, log_std: log_std.map(|v| Array1::from_elem(out, v)) }
    }

    pub fn zeros(sizes: &[usize], log_std: Option<f64>) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| Dense { weight: Array2::zeros((w[1], w[0])), bias: Array1::zeros(w[1]) })
            .collect();
        Self { layers, log_std: log_std.map(|v| Array1::from_elem(sizes[sizes.len() - 1], v)) }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense { weight: Array2::zeros(l.weight.raw_dim()), bias: Array1::zeros(l.bias.len()) })
                .collect(),
            log_std: self.log_std.as_ref().map(|s| Array1::zeros(s.len())),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.nrows()
    }

    /// Layer `(outputs, inputs)` shapes.
    pub fn shapes(&self) -> Vec<[usize; 2]> {
        self.layers.iter().map(|l| [l.weight.nrows(), l.weight.ncols()]).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum::<usize>()
            + self.log_std.as_ref().map_or(0, |s| s.len())
    }

    /// Weights row-major then bias for each layer, followed by the log-std.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        if let Some(s) = &self.log_std {
            out.extend(s.iter());
        }
        out
    }

    pub fn assign(&mut self, flat: &[f64]) -> Result<(), NetError> {
        if flat.len() != self.num_params() {
            return Err(NetError::LengthMismatch { expected: self.num_params(), got: flat.len() });
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            l.weight.iter_mut().for_each(|w| *w = it.next().unwrap());
            l.bias.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
        if let Some(s) = &mut self.log_std {
            s.iter_mut().for_each(|v| *v = it.next().unwrap());
        }
        Ok(())
    }

    pub fn with_flat(&self, flat: &[f64]) -> Result<Self, NetError> {
        let mut p = self.clone();
        p.assign(flat)?;
        Ok(p)
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
            && self.log_std.as_ref().is_none_or(|s| s.iter().all(|v| v.is_finite()))
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Self, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.scaled_add(scale, &b.weight);
            a.bias.scaled_add(scale, &b.bias);
        }
        if let (Some(a), Some(b)) = (&mut self.log_std, &other.log_std) {
            a.scaled_add(scale, b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weight *= s;
            l.bias *= s;
        }
        if let Some(v) = &mut self.log_std {
            *v *= s;
        }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        let mut acc = 0.0;
        for (a, b) in self.layers.iter().zip(&other.layers) {
            acc += (&a.weight * &b.weight).sum() + a.bias.dot(&b.bias);
        }
        if let (Some(a), Some(b)) = (&self.log_std, &other.log_std) {
            acc += a.dot(b);
        }
        acc
    }

    /// Log-std after clamping to the supported range.
    pub fn effective_log_std(&self) -> Option<Array1<f64>> {
        self.log_std.as_ref().map(|s| s.mapv(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)))
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<(), NetError> {
        if x.ncols() != self.input_dim() {
            return Err(NetError::DimensionMismatch { expected: self.input_dim(), got: x.ncols() });
        }
        Ok(())
    }

    /// Batched forward pass; rows are samples.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NetError> {
        self.check_input(&x)?;
        let n = self.layers.len();
        let mut h = x.to_owned();
        for (k, l) in self.layers.iter().enumerate() {
            h = h.dot(&l.weight.t()) + &l.bias;
            if k + 1 < n {
                h.mapv_inplace(f64::tanh);
            }
        }
        Ok(h)
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache), NetError> {
        self.check_input(&x)?;
        let n = self.layers.len();
        let mut activations = Vec::with_capacity(n);
        let mut h = x.to_owned();
        for (k, l) in self.layers.iter().enumerate() {
            let z = h.dot(&l.weight.t()) + &l.bias;
            activations.push(h);
            h = if k + 1 < n { z.mapv(f64::tanh) } else { z };
        }
        Ok((h, ForwardCache { activations }))
    }

    /// Parameter gradient given `d_out = dL/d(output)` for the batch in `cache`.
    /// The log-std slot of the result is zero; callers add its gradient themselves.
    pub fn backward(&self, cache: &ForwardCache, d_out: ArrayView2<f64>) -> Self {
        let mut grad = self.zeros_like();
        let mut delta = d_out.to_owned();
        for k in (0..self.layers.len()).rev() {
            let input = &cache.activations[k];
            grad.layers[k].weight = delta.t().dot(input);
            grad.layers[k].bias = delta.sum_axis(Axis(0));
            if k > 0 {
                let mut d_in = delta.dot(&self.layers[k].weight);
                // input of layer k is tanh output of layer k - 1
                ndarray::Zip::from(&mut d_in).and(input).for_each(|d, &h| *d *= 1.0 - h * h);
                delta = d_in;
            }
        }
        grad
    }
}

#[derive(Serialize, Deserialize)]
struct LayerRepr {
    rows: usize,
    cols: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ParamSetRepr {
    layers: Vec<LayerRepr>,
    log_std: Option<Vec<f64>>,
}

impl From<ParamSet> for ParamSetRepr {
    fn from(p: ParamSet) -> Self {
        Self {
            layers: p
                .layers
                .into_iter()
                .map(|l| LayerRepr {
                    rows: l.weight.nrows(),
                    cols: l.weight.ncols(),
                    weight: l.weight.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
            log_std: p.log_std.map(|s| s.to_vec()),
        }
    }
}

impl TryFrom<ParamSetRepr> for ParamSet {
    type Error = String;

    fn try_from(r: ParamSetRepr) -> Result<Self, String> {
        if r.layers.is_empty() {
            return Err("parameter set has no layers".into());
        }
        let mut layers = Vec::with_capacity(r.layers.len());
        for (k, l) in r.layers.into_iter().enumerate() {
            if l.bias.len() != l.rows {
                return Err(format!("layer {k}: bias length {} != rows {}", l.bias.len(), l.rows));
            }
            let weight = Array2::from_shape_vec((l.rows, l.cols), l.weight).map_err(|e| format!("layer {k}: {e}"))?;
            if let Some(prev) = layers.last().map(|d: &Dense| d.weight.nrows()) {
                if prev != l.cols {
                    return Err(format!("layer {k}: expects {} inputs, previous layer emits {prev}", l.cols));
                }
            }
            layers.push(Dense { weight, bias: Array1::from(l.bias) });
        }
        let p = ParamSet { log_std: r.log_std.map(Array1::from), layers };
        if p.log_std.as_ref().is_some_and(|s| s.len() != p.output_dim()) {
            return Err("log-std length differs from output size".into());
        }
        Ok(p)
    }
}
