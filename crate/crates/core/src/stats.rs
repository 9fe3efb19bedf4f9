//! Small sample-statistics helpers used by the ensemble analyses.

use crate::scalar::Real;

/// z for a central 95% normal interval.
pub fn z_95<T: Real>() -> T {
    T::lit(1.959963984540054)
}

/// Sample mean and its standard error.
pub fn mean_se<T: Real>(xs: &[T]) -> (T, T) {
    let n = T::from_usize(xs.len()).expect("sample size");
    let mut sum = T::zero();
    for &x in xs {
        sum += x;
    }
    let mean = sum / n;
    let mut ss = T::zero();
    for &x in xs {
        let d = x - mean;
        ss += d * d;
    }
    if xs.len() < 2 {
        return (mean, T::zero());
    }
    let var = ss / (n - T::one());
    (mean, (var / n).sqrt())
}

/// Unbiased sample variance and the standard error of that variance
/// (distribution-free, via the fourth central moment).
pub fn variance_se<T: Real>(xs: &[T]) -> (T, T) {
    let n_usize = xs.len();
    let n = T::from_usize(n_usize).expect("sample size");
    let (mean, _) = mean_se(xs);
    let mut m2 = T::zero();
    let mut m4 = T::zero();
    for &x in xs {
        let d = x - mean;
        m2 += d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m4 /= n;
    let var = m2 * n / (n - T::one());
    if n_usize < 4 {
        return (var, T::zero());
    }
    // Var(s^2) ~ (m4 - (n-3)/(n-1) m2^2) / n
    let se_sq = (m4 - (n - T::lit(3.0)) / (n - T::one()) * m2 * m2) / n;
    (var, se_sq.max(T::zero()).sqrt())
}

/// |a - b| in units of the combined standard error.
pub fn separation_z<T: Real>(a: (T, T), b: (T, T)) -> T {
    let denom = (a.1 * a.1 + b.1 * b.1).sqrt();
    if denom == T::zero() {
        return if a.0 == b.0 { T::zero() } else { T::lit(f64::INFINITY) };
    }
    (a.0 - b.0).abs() / denom
}

/// Wilson 95% confidence interval for a binomial proportion.
pub fn wilson_interval<T: Real>(successes: usize, total: usize) -> (T, T) {
    if total == 0 {
        return (T::zero(), T::one());
    }
    let n = T::from_usize(total).expect("total");
    let p = T::from_usize(successes).expect("successes") / n;
    let z = z_95::<T>();
    let z2 = z * z;
    let denom = T::one() + z2 / n;
    let centre = (p + z2 / (T::lit(2.0) * n)) / denom;
    let half = z * (p * (T::one() - p) / n + z2 / (T::lit(4.0) * n * n)).sqrt() / denom;
    ((centre - half).max(T::zero()), (centre + half).min(T::one()))
}

/// Median and quartiles with linear interpolation; input need not be sorted.
pub fn quartiles<T: Real>(xs: &[T]) -> Option<(T, T, T)> {
    if xs.is_empty() {
        return None;
    }
    let mut sorted: Vec<T> = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let q = |frac: f64| -> T {
        let pos = T::lit(frac) * T::from_usize(sorted.len() - 1).expect("len");
        let lo = pos.floor().to_usize().expect("index");
        let hi = (lo + 1).min(sorted.len() - 1);
        let w = pos - pos.floor();
        sorted[lo] * (T::one() - w) + sorted[hi] * w
    };
    Some((q(0.25), q(0.5), q(0.75)))
}

/// Least-squares slope of log y against log x.
pub fn loglog_slope<T: Real>(points: &[(T, T)]) -> Option<T> {
    if points.len() < 2 {
        return None;
    }
    let n = T::from_usize(points.len()).expect("len");
    let mut sx = T::zero();
    let mut sy = T::zero();
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for &(x, y) in points {
        if !(x > T::zero()) || !(y > T::zero()) {
            return None;
        }
        let lx = x.ln();
        let ly = y.ln();
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    let denom = sxx - sx * sx / n;
    if denom == T::zero() {
        return None;
    }
    Some((sxy - sx * sy / n) / denom)
}
