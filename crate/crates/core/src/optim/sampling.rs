use rand::Rng;

use crate::error::{invalid, Result};
use crate::linalg::{dist2, mean, norm2};

/// Draws uniform `B`-subsets of `0..n` without replacement.
///
/// Keeps a permutation buffer between calls so each draw costs `O(B)`.
/// A full batch returns every index and consumes no randomness.
#[derive(Debug, Clone)]
pub struct MinibatchSampler {
    perm: Vec<usize>,
    batch: usize,
}

impl MinibatchSampler {
    pub fn new(n: usize, batch: usize) -> Result<Self> {
        if batch == 0 || batch > n {
            return Err(invalid(format!("batch size {batch} must lie in 1..={n}")));
        }
        Ok(MinibatchSampler { perm: (0..n).collect(), batch })
    }

    pub fn is_full(&self) -> bool {
        self.batch == self.perm.len()
    }

    pub fn batch_size(&self) -> usize {
        self.batch
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> &[usize] {
        let n = self.perm.len();
        if self.batch < n {
            for j in 0..self.batch {
                let k = rng.random_range(j..n);
                self.perm.swap(j, k);
            }
        }
        &self.perm[..self.batch]
    }
}

/// A uniformly random `B`-subset of `0..n`.
pub fn minibatch_sample<R: Rng + ?Sized>(n: usize, batch: usize, rng: &mut R) -> Result<Vec<usize>> {
    let mut s = MinibatchSampler::new(n, batch)?;
    Ok(s.sample(rng).to_vec())
}

/// `E |mean of a uniform B-subset|^2` for the vectors `xs`, in closed form:
/// `(n/B - 1) / (n (n - 1)) * sum_i |x_i - xbar|^2 + |xbar|^2`.
pub fn minibatch_variance_formula(xs: &[Vec<f64>], batch: usize) -> Result<f64> {
    let n = xs.len();
    if batch == 0 || batch > n {
        return Err(invalid(format!("batch size {batch} must lie in 1..={n}")));
    }
    let dim = xs[0].len();
    let xbar = mean(dim, xs.iter().map(|v| &v[..]));
    if n == 1 {
        return Ok(norm2(&xbar));
    }
    let spread: f64 = xs.iter().map(|x| dist2(x, &xbar)).sum();
    let nf = n as f64;
    Ok((nf / batch as f64 - 1.0) / (nf * (nf - 1.0)) * spread + norm2(&xbar))
}
