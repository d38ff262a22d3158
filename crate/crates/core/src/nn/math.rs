use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayViewMut1, Axis};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn is_valid(valid: Option<&[bool]>, i: usize) -> bool {
    valid.is_none_or(|v| v[i])
}

/// `log(sum(exp(x)))` over valid entries, with max subtraction.
/// Returns `-inf` when nothing is valid.
pub fn log_sum_exp(x: ArrayView1<'_, f64>, valid: Option<&[bool]>) -> f64 {
    let max = x
        .iter()
        .enumerate()
        .filter(|&(i, _)| is_valid(valid, i))
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let sum: f64 = x
        .iter()
        .enumerate()
        .filter(|&(i, _)| is_valid(valid, i))
        .map(|(_, &v)| (v - max).exp())
        .sum();
    max + sum.ln()
}

/// Softmax in place. Invalid entries become exactly zero.
pub fn softmax_in_place(mut x: ArrayViewMut1<'_, f64>, valid: Option<&[bool]>) {
    let max = x
        .iter()
        .enumerate()
        .filter(|&(i, _)| is_valid(valid, i))
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (i, v) in x.iter_mut().enumerate() {
        if is_valid(valid, i) {
            *v = (*v - max).exp();
            sum += *v;
        } else {
            *v = 0.0;
        }
    }
    x.mapv_inplace(|v| v / sum);
}

/// `dst += a b^T`.
pub fn add_outer(dst: &mut Array2<f64>, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) {
    general_mat_mul(1.0, &a.insert_axis(Axis(1)), &b.insert_axis(Axis(0)), 1.0, dst);
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};

    #[test]
    fn softmax_two_terms() {
        let mut x = array![0.0, 2.0];
        softmax_in_place(x.view_mut(), None);
        assert!((x[0] - 0.1192).abs() < 1e-4);
        assert!((x[1] - 0.8808).abs() < 1e-4);
    }

    #[test]
    fn masked_entries_are_zero() {
        let mut x = array![1.0, 50.0, 2.0];
        softmax_in_place(x.view_mut(), Some(&[true, false, true]));
        assert_eq!(x[1], 0.0);
        assert!((x.sum() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn log_sum_exp_is_stable() {
        let x = array![1000.0, 1000.0];
        assert!((log_sum_exp(x.view(), None) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(Array1::<f64>::zeros(5).view(), None), 5f64.ln());
    }

    #[test]
    fn sigmoid_is_bounded() {
        for x in [-700.0, -30.0, 0.0, 30.0] {
            let s = sigmoid(x);
            assert!((0.0..=1.0).contains(&s));
        }
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn outer_accumulates() {
        let mut m = Array2::ones((2, 2));
        add_outer(&mut m, array![1.0, 2.0].view(), array![3.0, 4.0].view());
        assert_eq!(m, array![[4.0, 5.0], [7.0, 9.0]]);
    }
}
