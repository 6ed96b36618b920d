//! Small dense-vector helpers over `f64` slices.
//!
//! Callers are responsible for matching lengths; these are used in inner
//! loops after dimensions have been validated once.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm2(a).sqrt()
}

/// Squared Euclidean distance.
#[inline]
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Weighted sum `sum_i w_i v_i` of equal-length vectors.
pub fn weighted_sum<'a, I>(dim: usize, terms: I) -> Vec<f64>
where
    I: IntoIterator<Item = (f64, &'a [f64])>,
{
    let mut out = vec![0.0; dim];
    for (w, v) in terms {
        axpy(w, v, &mut out);
    }
    out
}

/// Arithmetic mean of a nonempty set of equal-length vectors.
pub fn mean<'a, I>(dim: usize, vs: I) -> Vec<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut out = vec![0.0; dim];
    let mut n = 0usize;
    for v in vs {
        axpy(1.0, v, &mut out);
        n += 1;
    }
    let inv = 1.0 / n as f64;
    out.iter_mut().for_each(|x| *x *= inv);
    out
}
