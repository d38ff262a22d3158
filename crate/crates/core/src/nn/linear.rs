use ndarray::{Array1, Array2, ArrayView1, ArrayViewD, ArrayViewMutD};

use super::math::add_outer;
use super::{join, NamedParams};

/// `y = x W + b` with `W` of shape `(inputs, outputs)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Affine {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Affine {
            w: Array2::zeros((inputs, outputs)),
            b: Array1::zeros(outputs),
        }
    }

    pub fn forward(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        x.dot(&self.w) + &self.b
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&self, x: ArrayView1<'_, f64>, dy: ArrayView1<'_, f64>, grads: &mut Affine) -> Array1<f64> {
        add_outer(&mut grads.w, x, dy);
        grads.b += &dy;
        self.w.dot(&dy)
    }
}

impl NamedParams for Affine {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>)) {
        f(&join(prefix, "w"), self.w.view().into_dyn());
        f(&join(prefix, "b"), self.b.view().into_dyn());
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, f64>)) {
        f(&join(prefix, "w"), self.w.view_mut().into_dyn());
        f(&join(prefix, "b"), self.b.view_mut().into_dyn());
    }
}
