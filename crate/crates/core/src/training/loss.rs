//! Impression scoring and the negative log-likelihood of the positives.
//! Scores are ordered with the positive first.
use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};
use crate::nn::math::log_sum_exp;

pub fn score(e_u: ArrayView1<'_, f64>, e_n: ArrayView1<'_, f64>) -> Result<f64> {
    if e_u.len() != e_n.len() {
        return Err(Error::Invalid(format!(
            "user encoding has width {} but news encoding has width {}",
            e_u.len(),
            e_n.len()
        )));
    }
    Ok(e_u.dot(&e_n))
}

/// Probability of the positive under a softmax over the impression.
pub fn impression_probability(scores: &[f64]) -> f64 {
    let s = ArrayView1::from(scores);
    (scores[0] - log_sum_exp(s, None)).exp()
}

/// `-log p` of one impression and its gradient with respect to the scores.
pub fn impression_loss(scores: &[f64]) -> (f64, Array1<f64>) {
    let s = ArrayView1::from(scores);
    let lse = log_sum_exp(s, None);
    let mut d = s.mapv(|v| (v - lse).exp());
    d[0] -= 1.0;
    (lse - scores[0], d)
}

/// Sum of per-impression losses.
pub fn loss<'a>(impressions: impl IntoIterator<Item = &'a [f64]>) -> f64 {
    impressions.into_iter().map(|s| impression_loss(s).0).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn score_examples() {
        let u = array![0.6, 0.8];
        assert!((score(u.view(), u.view()).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(score(array![1.0, 0.0].view(), array![0.0, 3.0].view()).unwrap(), 0.0);
        let n = array![0.3, -2.0];
        assert_eq!(
            score((&u * 2.0).view(), n.view()).unwrap(),
            2.0 * score(u.view(), n.view()).unwrap()
        );
        assert!(score(u.view(), array![1.0].view()).is_err());
    }

    #[test]
    fn closed_forms() {
        assert_eq!(impression_probability(&[0.7; 5]), 0.2);
        assert_eq!(impression_loss(&[0.7; 5]).0, 5f64.ln());
        let e = std::f64::consts::E;
        assert!((impression_probability(&[1.0, 0.0, 0.0, 0.0, 0.0]) - e / (e + 4.0)).abs() < 1e-15);
        assert!((impression_probability(&[800.0, 0.0, 1.0]) - 1.0).abs() < 1e-15);
        assert_eq!(loss([&[3.0, f64::NEG_INFINITY][..]]), 0.0);
    }

    #[test]
    fn loss_decreases_with_positive_score() {
        let mut prev = f64::INFINITY;
        for k in -5..5 {
            let l = impression_loss(&[k as f64, 0.3, -0.2]).0;
            assert!(l < prev);
            prev = l;
        }
    }

    proptest! {
        #[test]
        fn probability_is_shift_invariant(scores in proptest::collection::vec(-50.0..50.0f64, 2..12), c in -100.0..100.0f64) {
            let p = impression_probability(&scores);
            prop_assert!(p > 0.0 && p <= 1.0);
            let shifted: Vec<f64> = scores.iter().map(|s| s + c).collect();
            prop_assert!((impression_probability(&shifted) - p).abs() < 1e-12);
            let (l, d) = impression_loss(&scores);
            prop_assert!(l >= 0.0);
            prop_assert!(d.sum().abs() < 1e-12);
        }
    }
}
