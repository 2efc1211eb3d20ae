use nalgebra::DVector;
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::TrianglePath;
use crate::error::{Error, Result};
use crate::operator::Point;

/// Seeded uniform sampler on the box `[lo, hi]^dim`.
///
/// Every call starts a fresh stream from the seed, so repeated calls return
/// the same points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxSampler {
    pub dim: usize,
    pub lo: f64,
    pub hi: f64,
    pub seed: u64,
}

impl BoxSampler {
    pub fn new(dim: usize, lo: f64, hi: f64, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidParameter(format!("sample box [{lo}, {hi}]")));
        }
        Ok(Self { dim, lo, hi, seed })
    }

    /// The default certificate box `[-2, 2]^dim`.
    pub fn default_box(dim: usize, seed: u64) -> Result<Self> {
        Self::new(dim, -2.0, 2.0, seed)
    }

    fn stream(&self) -> impl Iterator<Item = Point> + '_ {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let u = Uniform::new_inclusive(self.lo, self.hi);
        let dim = self.dim;
        std::iter::repeat_with(move || DVector::from_fn(dim, |_, _| u.sample(&mut rng)))
    }

    pub fn points(&self, n: usize) -> Vec<Point> {
        self.stream().take(n).collect()
    }

    pub fn pairs(&self, n: usize) -> Vec<(Point, Point)> {
        let mut s = self.stream();
        (0..n).map(|_| (s.next().unwrap(), s.next().unwrap())).collect()
    }

    pub fn triangles(&self, n: usize) -> Vec<TrianglePath> {
        let mut s = self.stream();
        (0..n)
            .map(|_| TrianglePath {
                a: s.next().unwrap(),
                b: s.next().unwrap(),
                c: s.next().unwrap(),
            })
            .collect()
    }
}

/// Halton point `index` (starting at 1) in `[0, 1)^dim`.
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    primes(dim).into_iter().map(|p| radical_inverse(index, p)).collect()
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

fn primes(n: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(n);
    let mut c = 2u64;
    while out.len() < n {
        if out.iter().take_while(|&&p| p * p <= c).all(|&p| c % p != 0) {
            out.push(c);
        }
        c += 1;
    }
    out
}
