/// Row-wise softmax of a row-major `(n, classes)` matrix.
pub fn softmax_rows(logits: &[f64], classes: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks_exact(classes) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|e| e / sum));
    }
    out
}

/// `-log softmax(logits)[label]` via log-sum-exp.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    (lse - logits[label]).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_logits_cost_ln2() {
        assert!((cross_entropy(&[0.3, 0.3], 0) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn saturated_correct_is_free() {
        assert!(cross_entropy(&[30.0, -30.0], 0) <= 1e-12);
        assert!(cross_entropy(&[1000.0, -1000.0], 1).is_finite());
    }

    #[test]
    fn wrong_label_cost() {
        let expected = (1.0 + 2.0f64.exp()).ln();
        assert!((cross_entropy(&[2.0, 0.0], 1) - expected).abs() < 1e-12);
        assert!((expected - 2.1269).abs() < 1e-4);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let p = softmax_rows(&[1.0, 2.0, -700.0, 700.0, 0.0, 0.0], 2);
        for row in p.chunks_exact(2) {
            assert!((row[0] + row[1] - 1.0).abs() < 1e-12);
        }
        assert_eq!(&p[4..], &[0.5, 0.5]);
    }
}
