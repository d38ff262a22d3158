//! Hand-differentiated building blocks: gated recurrence, additive
//! attention, convolution with max-pooling and affine maps.
pub mod attention;
pub mod cnn;
pub mod linear;
pub mod lstm;
pub mod math;

use ndarray::{ArrayViewD, ArrayViewMutD};
use rand::distributions::{Distribution, Uniform};
use rand_chacha::ChaCha8Rng;

/// Enumerates trainable tensors under stable dotted names.
///
/// `visit` and `visit_mut` must yield tensors in the same order.
pub trait NamedParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, f64>));

    /// Total number of scalar parameters.
    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, t| n += t.len());
        n
    }

    /// Every tensor name with its shape, in visiting order.
    fn shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        self.visit("", &mut |name, t| out.push((name.to_string(), t.shape().to_vec())));
        out
    }

    fn fill(&mut self, value: f64) {
        self.visit_mut("", &mut |_, mut t| t.fill(value));
    }

    /// `self += alpha * other`, tensor by tensor. Both sides must have the
    /// same structure.
    fn scaled_add(&mut self, alpha: f64, other: &Self)
    where
        Self: Sized,
    {
        let mut src = Vec::new();
        other.visit("", &mut |_, t| src.push(t.to_owned()));
        let mut it = src.into_iter();
        self.visit_mut("", &mut |_, mut t| {
            let s = it.next().expect("identical parameter structure");
            t.scaled_add(alpha, &s);
        });
    }

    /// Uniform in `[-scale, scale]` for every entry.
    fn randomize(&mut self, scale: f64, rng: &mut ChaCha8Rng) {
        let dist = Uniform::new_inclusive(-scale, scale);
        self.visit_mut("", &mut |_, mut t| t.mapv_inplace(|_| dist.sample(rng)));
    }

    fn all_finite(&self) -> Result<(), String> {
        let mut bad = None;
        self.visit("", &mut |name, t| {
            if bad.is_none() && t.iter().any(|v| !v.is_finite()) {
                bad = Some(name.to_string());
            }
        });
        bad.map_or(Ok(()), Err)
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
