use crate::error::{Error, Result};
use crate::real::Real;

fn sorted_copy<T: Real>(v: &[T]) -> Vec<T> {
    let mut s = v.to_vec();
    if s.windows(2).any(|w| w[1] < w[0]) {
        s.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    }
    s
}

/// Empirical 1-Wasserstein distance between equal-size samples: the mean
/// absolute difference of order statistics. Unsorted input is sorted first.
pub fn wasserstein1<T: Real>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::CountMismatch { left: a.len(), right: b.len() });
    }
    if a.is_empty() {
        return Err(Error::InvalidInput("empty samples".into()));
    }
    let (a, b) = (sorted_copy(a), sorted_copy(b));
    let total: T = a.iter().zip(&b).map(|(x, y)| (*x - *y).abs()).sum();
    Ok(total / T::from_usize_lossy(a.len()))
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_statistic<T: Real>(a: &[T], b: &[T]) -> Result<T> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("empty samples".into()));
    }
    let (a, b) = (sorted_copy(a), sorted_copy(b));
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut best = T::zero();
    while i < n && j < m {
        let v = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < n && a[i] <= v {
            i += 1;
        }
        while j < m && b[j] <= v {
            j += 1;
        }
        let d = (T::from_usize_lossy(i) / T::from_usize_lossy(n) - T::from_usize_lossy(j) / T::from_usize_lossy(m)).abs();
        best = best.max(d);
    }
    Ok(best)
}

/// Asymptotic two-sample KS critical value at level `alpha`.
pub fn ks_critical_value<T: Real>(alpha: T, n: usize, m: usize) -> T {
    let c = (-(alpha / T::lit(2.0)).ln() / T::lit(2.0)).sqrt();
    let (n, m) = (T::from_usize_lossy(n), T::from_usize_lossy(m));
    c * ((n + m) / (n * m)).sqrt()
}
