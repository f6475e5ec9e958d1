//! Small order-statistics helpers.

/// Empirical quantile by linear interpolation between order statistics:
/// `h = (n - 1) p`, result `x[floor h] + (h - floor h) (x[floor h + 1] - x[floor h])`.
///
/// `sorted` must be ascending and non-empty; `p` is clamped to `[0, 1]`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let p = p.clamp(0.0, 1.0);
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Sorts a copy of `values` and takes the linear-interpolation quantile.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, p)
}

pub fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles_of_four() {
        let w = [0.1, 0.2, 0.3, 0.4];
        assert!((quantile(&w, 0.25) - 0.175).abs() < 1e-15);
        assert_eq!(quantile(&w, 0.0), 0.1);
        assert_eq!(quantile(&w, 1.0), 0.4);
    }

    #[test]
    fn singleton_and_unsorted_input() {
        assert_eq!(quantile(&[3.0], 0.75), 3.0);
        assert!((quantile(&[0.8, 0.1, 0.1], 0.75) - 0.45).abs() < 1e-15);
    }

    #[test]
    fn mean_of_empty_is_none() {
        assert_eq!(mean([]), None);
        assert_eq!(mean([1.0, 2.0]), Some(1.5));
    }
}
