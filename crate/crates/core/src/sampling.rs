//! Deterministic sampling of baseline measures.
//!
//! The point stream is cut into fixed chunks of [`CHUNK_SIZE`] points; chunk
//! `c` of epoch `e` is drawn from a ChaCha8 generator seeded with the user
//! seed on stream `(e << 32) | c`. Chunks are generated independently and
//! concatenated in order, so the stream does not depend on the number of
//! worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::BaselineMeasure;

pub const CHUNK_SIZE: usize = 4096;

/// Seeded generator for one `(seed, stream)` pair.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Points in `R^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
}

impl PointCloud {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.len() % dim != 0 {
            return Err(Error::param("coords", "length must be a multiple of dim"));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or(Error::Empty("points"))?;
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
            coords.extend_from_slice(r);
        }
        Self::new(dim, coords)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.coords[j * self.dim..(j + 1) * self.dim]
    }

    pub fn points(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.points().map(<[f64]>::to_vec).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for p in self.points() {
            for (m, v) in mean.iter_mut().zip(p) {
                *m += v;
            }
        }
        let n = self.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }
}

fn fill_chunk(measure: &BaselineMeasure, rng: &mut ChaCha8Rng, out: &mut [f64]) {
    let dim = measure.dim();
    match measure {
        BaselineMeasure::UniformCube { .. } => {
            for v in out.iter_mut() {
                *v = rng.random::<f64>();
            }
        }
        BaselineMeasure::Gaussian(g) => {
            let l = g.factor();
            let mut z = vec![0.0; dim];
            for point in out.chunks_exact_mut(dim) {
                for zi in z.iter_mut() {
                    *zi = rng.sample(StandardNormal);
                }
                for (i, p) in point.iter_mut().enumerate() {
                    *p = (0..=i).map(|k| l[(i, k)] * z[k]).sum();
                }
            }
        }
        BaselineMeasure::BernoulliVector { alpha, .. } => {
            let top = 1.0 / alpha;
            for point in out.chunks_exact_mut(dim) {
                let hit = rng.random::<f64>() < *alpha;
                point.fill(if hit { top } else { 0.0 });
            }
        }
        BaselineMeasure::Empirical(e) => {
            let mut cumulative = Vec::with_capacity(e.len());
            let mut acc = 0.0;
            for w in e.weights() {
                acc += w;
                cumulative.push(acc);
            }
            for point in out.chunks_exact_mut(dim) {
                let t = rng.random::<f64>() * acc;
                let k = cumulative.partition_point(|&c| c <= t).min(e.len() - 1);
                point.copy_from_slice(e.atom(k));
            }
        }
    }
}

/// Draws `count` points of `measure` for a given epoch (0 for the primary sample).
pub fn sample_baseline_epoch(
    measure: &BaselineMeasure,
    count: usize,
    seed: u64,
    epoch: u32,
) -> Result<PointCloud> {
    if count == 0 {
        return Err(Error::param("count", "must be at least 1"));
    }
    if let BaselineMeasure::Gaussian(g) = measure {
        g.covariance().require_positive_definite()?;
    }
    let dim = measure.dim();
    let mut coords = vec![0.0; count * dim];
    coords
        .par_chunks_mut(CHUNK_SIZE * dim)
        .enumerate()
        .for_each(|(chunk, out)| {
            let stream = (u64::from(epoch) << 32) | chunk as u64;
            let mut rng = stream_rng(seed, stream);
            fill_chunk(measure, &mut rng, out);
        });
    PointCloud::new(dim, coords)
}

/// Draws `count` i.i.d. points of `measure`; a pure function of its arguments.
pub fn sample_baseline(measure: &BaselineMeasure, count: usize, seed: u64) -> Result<PointCloud> {
    sample_baseline_epoch(measure, count, seed, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::SymmetricPsdMatrix;

    #[test]
    fn cube_support() {
        let cloud = sample_baseline(&BaselineMeasure::uniform_cube(2).unwrap(), 4, 7).unwrap();
        assert_eq!(cloud.len(), 4);
        assert!(cloud.coords().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn bernoulli_top_fraction() {
        let b = BaselineMeasure::bernoulli(3, 0.5).unwrap();
        let cloud = sample_baseline(&b, 100_000, 1).unwrap();
        let top = cloud.points().filter(|p| p == &[2.0, 2.0, 2.0]).count();
        let frac = top as f64 / 1e5;
        assert!((frac - 0.5).abs() < 0.01, "fraction {frac}");
        let mean = cloud.mean();
        assert!(mean.iter().all(|m| (m - 1.0).abs() < 0.02), "{mean:?}");
    }

    #[test]
    fn gaussian_covariance_oracle() {
        let g = BaselineMeasure::standard_gaussian(2).unwrap();
        let cloud = sample_baseline(&g, 100_000, 1).unwrap();
        let n = cloud.len() as f64;
        let mean = cloud.mean();
        let mut cov = [[0.0; 2]; 2];
        for p in cloud.points() {
            for i in 0..2 {
                for j in 0..2 {
                    cov[i][j] += (p[i] - mean[i]) * (p[j] - mean[j]) / (n - 1.0);
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((cov[i][j] - target).abs() < 0.02, "{cov:?}");
            }
        }
    }

    #[test]
    fn correlated_gaussian_uses_factor() {
        let cov = SymmetricPsdMatrix::from_rows(&[vec![4.0, 1.2], vec![1.2, 1.0]]).unwrap();
        let g = BaselineMeasure::gaussian(cov).unwrap();
        let cloud = sample_baseline(&g, 200_000, 3).unwrap();
        let n = cloud.len() as f64;
        let c01: f64 = cloud.points().map(|p| p[0] * p[1]).sum::<f64>() / n;
        let c00: f64 = cloud.points().map(|p| p[0] * p[0]).sum::<f64>() / n;
        assert!((c01 - 1.2).abs() < 0.05, "{c01}");
        assert!((c00 - 4.0).abs() < 0.08, "{c00}");
    }

    #[test]
    fn deterministic_and_chunk_stable() {
        let m = BaselineMeasure::uniform_cube(3).unwrap();
        let a = sample_baseline(&m, 10_000, 42).unwrap();
        let b = sample_baseline(&m, 10_000, 42).unwrap();
        assert_eq!(a, b);
        // A shorter stream is a prefix of a longer one.
        let c = sample_baseline(&m, 5_000, 42).unwrap();
        assert_eq!(&a.coords()[..c.coords().len()], c.coords());
        let d = sample_baseline(&m, 10_000, 43).unwrap();
        assert_ne!(a, d);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let e = pool.install(|| sample_baseline(&m, 10_000, 42).unwrap());
        assert_eq!(a, e);
    }

    #[test]
    fn empirical_samples_by_weight() {
        let e = crate::types::validate_empirical(vec![vec![0.0], vec![1.0]], vec![0.25, 0.75])
            .unwrap();
        let cloud = sample_baseline(&BaselineMeasure::Empirical(e), 100_000, 5).unwrap();
        let ones = cloud.points().filter(|p| p[0] == 1.0).count() as f64 / 1e5;
        assert!((ones - 0.75).abs() < 0.01);
    }

    #[test]
    fn zero_count_rejected() {
        let m = BaselineMeasure::uniform_cube(1).unwrap();
        assert!(sample_baseline(&m, 0, 0).is_err());
    }
}
