use crate::scalar::Scalar;

/// Mean squared error and its gradient w.r.t. `pred`.
pub fn mse<T: Scalar>(pred: &[T], target: &[T]) -> (f64, Vec<T>) {
    let n = pred.len() as f64;
    let scale = T::from_f64_lossy(2.0 / n);
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let d = p - t;
            loss += d.as_f64() * d.as_f64();
            scale * d
        })
        .collect();
    (loss / n, grad)
}

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-log softmax(logits)[class]` and its gradient `softmax - onehot`.
pub fn cross_entropy<T: Scalar>(logits: &[T], class: usize) -> (f64, Vec<T>) {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = logits.iter().map(|&l| (l - max).exp()).sum::<T>().ln() + max;
    let loss = (lse - logits[class]).as_f64();
    let mut grad = softmax(logits);
    grad[class] -= T::one();
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_of_identical_is_zero() {
        let (l, g) = mse(&[0.2f64, 0.4], &[0.2, 0.4]);
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn uniform_logits_give_ln_c() {
        let (l, g) = cross_entropy(&[0.0f64; 4], 2);
        assert!((l - 4f64.ln()).abs() < 1e-12);
        assert!((g[2] + 0.75).abs() < 1e-12);
        let p = softmax(&[1.0f64, 2.0, 3.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
