//! Central finite-difference check of analytic gradients.
use serde::Serialize;

use super::data::Impression;
use super::model::Recommender;
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::nn::NamedParams;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub elements: usize,
    /// `|analytic - numeric| / max(|analytic|, |numeric|)` over the tensor.
    pub relative_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub step: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.relative_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&TensorCheck> {
        self.tensors
            .iter()
            .max_by(|a, b| a.relative_error.total_cmp(&b.relative_error))
    }
}

fn flatten<P: NamedParams>(p: &P) -> Vec<(String, Vec<f64>)> {
    let mut out = Vec::new();
    p.visit("", &mut |name, t| out.push((name.to_string(), t.iter().copied().collect())));
    out
}

fn nudge<P: NamedParams>(p: &mut P, index: usize, delta: f64) {
    let mut j = 0;
    p.visit_mut("", &mut |_, mut t| {
        let n = t.len();
        if (j..j + n).contains(&index) {
            let v = t.iter_mut().nth(index - j).expect("in range");
            *v += delta;
        }
        j += n;
    });
}

/// Compares `analytic` with central differences of `f` around `params`.
pub fn check_gradients<P, F>(params: &P, analytic: &P, step: f64, mut f: F) -> Result<GradCheckReport>
where
    P: NamedParams + Clone,
    F: FnMut(&P) -> Result<f64>,
{
    let mut work = params.clone();
    let mut tensors = Vec::new();
    let mut offset = 0;
    for (name, values) in flatten(analytic) {
        let (mut diff2, mut a2, mut n2, mut max_abs) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for (k, &a) in values.iter().enumerate() {
            let idx = offset + k;
            nudge(&mut work, idx, step);
            let up = f(&work)?;
            nudge(&mut work, idx, -2.0 * step);
            let down = f(&work)?;
            nudge(&mut work, idx, step);
            let num = (up - down) / (2.0 * step);
            if !num.is_finite() {
                return Err(Error::NonFinite(format!("finite difference of {name}")));
            }
            diff2 += (a - num) * (a - num);
            a2 += a * a;
            n2 += num * num;
            max_abs = max_abs.max((a - num).abs());
        }
        let scale = a2.sqrt().max(n2.sqrt());
        tensors.push(TensorCheck {
            name,
            elements: values.len(),
            relative_error: if scale > 0.0 { diff2.sqrt() / scale } else { 0.0 },
            max_abs_error: max_abs,
        });
        offset += values.len();
    }
    Ok(GradCheckReport { step, tensors })
}

/// Checks the batch-loss gradient of every model tensor.
pub fn model_gradient_check(model: &Recommender<'_>, batch: &[&Impression], step: f64) -> Result<GradCheckReport> {
    let analytic = model
        .run_batch(batch, true)?
        .grads
        .expect("gradients requested");
    check_gradients(model.params, &analytic, step, |p: &ModelParams| {
        Ok(Recommender { params: p, ..*model }.run_batch(batch, false)?.loss)
    })
}
