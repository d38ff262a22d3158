//! Title convolution: one scalar-biased filter of width `l` per output
//! coordinate, followed by max-pooling over positions.
use ndarray::{s, Array1, Array2, Array3, ArrayView2, ArrayViewD, ArrayViewMutD};

use super::{join, NamedParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative at `x`; the ReLU subgradient at zero is 0.
    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// `filters[k]` is an `l x g1` window, `bias[k]` its scalar bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub filters: Array3<f64>,
    pub bias: Array1<f64>,
}

impl ConvParams {
    pub fn zeros(count: usize, width: usize, dim: usize) -> Self {
        ConvParams {
            filters: Array3::zeros((count, width, dim)),
            bias: Array1::zeros(count),
        }
    }

    pub fn count(&self) -> usize {
        self.filters.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.filters.shape()[1]
    }
}

impl NamedParams for ConvParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>)) {
        f(&join(prefix, "filters"), self.filters.view().into_dyn());
        f(&join(prefix, "bias"), self.bias.view().into_dyn());
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, f64>)) {
        f(&join(prefix, "filters"), self.filters.view_mut().into_dyn());
        f(&join(prefix, "bias"), self.bias.view_mut().into_dyn());
    }
}

#[derive(Debug, Clone)]
pub struct ConvTrace {
    /// Pooled feature per filter.
    pub pooled: Array1<f64>,
    /// Window start of the first maximum per filter.
    pub argmax: Vec<usize>,
    /// Pre-activation value at the argmax.
    pub pre_activation: Array1<f64>,
}

/// `words` is `n x g1` with `n >= l`.
pub fn conv_max_pool(words: ArrayView2<'_, f64>, params: &ConvParams, act: Activation) -> ConvTrace {
    let l = params.width();
    let n = words.nrows();
    assert!(n >= l, "title shorter than filter width");
    let k = params.count();
    let mut pooled = Array1::zeros(k);
    let mut pre_activation = Array1::zeros(k);
    let mut argmax = vec![0; k];
    for f in 0..k {
        let filter = params.filters.slice(s![f, .., ..]);
        let mut best = f64::NEG_INFINITY;
        for i in 0..=n - l {
            let window = words.slice(s![i..i + l, ..]);
            let z = (&window * &filter).sum() + params.bias[f];
            let c = act.apply(z);
            if c > best {
                best = c;
                argmax[f] = i;
                pre_activation[f] = z;
            }
        }
        pooled[f] = best;
    }
    ConvTrace {
        pooled,
        argmax,
        pre_activation,
    }
}

/// Routes `d_pooled` to the argmax windows. Returns `dL/dwords`.
pub fn conv_max_pool_backward(
    words: ArrayView2<'_, f64>,
    trace: &ConvTrace,
    d_pooled: &Array1<f64>,
    params: &ConvParams,
    act: Activation,
    grads: &mut ConvParams,
) -> Array2<f64> {
    let l = params.width();
    let mut d_words = Array2::zeros(words.raw_dim());
    for f in 0..params.count() {
        let dz = d_pooled[f] * act.derivative(trace.pre_activation[f]);
        if dz == 0.0 {
            continue;
        }
        let i = trace.argmax[f];
        let window = words.slice(s![i..i + l, ..]);
        grads.filters.slice_mut(s![f, .., ..]).scaled_add(dz, &window);
        grads.bias[f] += dz;
        d_words
            .slice_mut(s![i..i + l, ..])
            .scaled_add(dz, &params.filters.slice(s![f, .., ..]));
    }
    d_words
}
