//! Kernel evaluation and Gram-matrix precomputation over instance pools.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Bag, InstancePool};
use crate::error::{Error, Result};

/// Eigenvalues at or below this are treated as zero when factoring a Gram matrix.
pub const EIGEN_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    Linear,
    /// `exp(-‖x - z‖² / (ℓ σ²))` with `ℓ` the instance dimension.
    Gaussian { sigma2: f64 },
}

impl KernelSpec {
    pub fn gaussian(sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidInput(format!("sigma2 must be positive, got {sigma2}")));
        }
        Ok(KernelSpec::Gaussian { sigma2 })
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Linear => "linear",
            KernelSpec::Gaussian { .. } => "gaussian",
        }
    }

    pub fn eval(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        if x.len() != z.len() {
            return Err(Error::DimensionMismatch {
                expected: z.len(),
                found: x.len(),
            });
        }
        Ok(self.eval_same_dim(x, z))
    }

    /// Kernel value for vectors already known to share a dimension.
    #[inline]
    pub fn eval_same_dim(&self, x: &[f64], z: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), z.len());
        match *self {
            KernelSpec::Linear => x.iter().zip(z).map(|(a, b)| a * b).sum(),
            KernelSpec::Gaussian { sigma2 } => gaussian_from_sq_dist(sq_dist(x, z), x.len(), sigma2),
        }
    }
}

#[inline]
pub fn sq_dist(x: &[f64], z: &[f64]) -> f64 {
    x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[inline]
pub fn gaussian_from_sq_dist(d2: f64, dim: usize, sigma2: f64) -> f64 {
    (-d2 / (dim as f64 * sigma2)).exp()
}

/// Pairwise squared distances over a pool, row-major and exactly symmetric.
pub fn pool_sq_dists(pool: &InstancePool) -> Vec<f64> {
    let n = pool.len();
    let mut data = vec![0.0; n * n];
    data.par_chunks_mut(n.max(1)).enumerate().for_each(|(a, row)| {
        let za = pool.get(a);
        for (b, out) in row.iter_mut().enumerate().take(a) {
            *out = sq_dist(za, pool.get(b));
        }
    });
    for a in 0..n {
        for b in a + 1..n {
            data[a * n + b] = data[b * n + a];
        }
    }
    data
}

/// Dense symmetric kernel matrix over a pool, row-major.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    spec: KernelSpec,
    length: usize,
    n: usize,
    data: Vec<f64>,
}

impl GramMatrix {
    pub fn build(spec: KernelSpec, pool: &InstancePool) -> Self {
        let n = pool.len();
        let mut data = vec![0.0; n * n];
        data.par_chunks_mut(n).enumerate().for_each(|(a, row)| {
            let za = pool.get(a);
            for (b, out) in row.iter_mut().enumerate() {
                *out = spec.eval_same_dim(za, pool.get(b));
            }
        });
        // exact symmetry regardless of summation order
        for a in 0..n {
            for b in 0..a {
                data[a * n + b] = data[b * n + a];
            }
        }
        GramMatrix {
            spec,
            length: pool.length(),
            n,
            data,
        }
    }

    /// Gaussian Gram matrix from precomputed squared distances (row-major n×n).
    pub fn gaussian_from_sq_dists(sigma2: f64, length: usize, n: usize, d2: &[f64]) -> Self {
        assert_eq!(d2.len(), n * n);
        let data = d2
            .iter()
            .map(|&d| gaussian_from_sq_dist(d, length, sigma2))
            .collect();
        GramMatrix {
            spec: KernelSpec::Gaussian { sigma2 },
            length,
            n,
            data,
        }
    }

    pub fn spec(&self) -> KernelSpec {
        self.spec
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.data[a * self.n + b]
    }

    pub fn row(&self, a: usize) -> &[f64] {
        &self.data[a * self.n..(a + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `αᵀ G α`.
    pub fn quad_form(&self, alpha: &[f64]) -> f64 {
        let mut total = 0.0;
        for (a, &wa) in alpha.iter().enumerate() {
            if wa == 0.0 {
                continue;
            }
            let row = self.row(a);
            let inner: f64 = row.iter().zip(alpha).map(|(g, w)| g * w).sum();
            total += wa * inner;
        }
        total
    }

    /// Symmetric eigendecomposition with eigenvalues at or below
    /// [`EIGEN_FLOOR`] discarded.
    pub fn factor(&self) -> GramFactor {
        let m = nalgebra::DMatrix::from_row_slice(self.n, self.n, &self.data);
        let eig = m.symmetric_eigen();
        let keep: Vec<usize> = (0..self.n)
            .filter(|&j| eig.eigenvalues[j] > EIGEN_FLOOR)
            .collect();
        let rank = keep.len();
        let mut basis = vec![0.0; self.n * rank];
        for (c, &j) in keep.iter().enumerate() {
            let scale = 1.0 / eig.eigenvalues[j].sqrt();
            for a in 0..self.n {
                basis[a * rank + c] = eig.eigenvectors[(a, j)] * scale;
            }
        }
        GramFactor {
            n: self.n,
            rank,
            basis,
        }
    }
}

/// `G = V Λ Vᵀ` restricted to the eigenvalues above the floor, stored as the
/// n×r matrix `W = V Λ^{-1/2}`. With `α = W β` one has `αᵀ G α = ‖β‖²` and
/// `k_xᵀ α = (Wᵀ k_x)ᵀ β`.
#[derive(Debug, Clone)]
pub struct GramFactor {
    n: usize,
    rank: usize,
    basis: Vec<f64>,
}

impl GramFactor {
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// `Wᵀ k`.
    pub fn project(&self, k: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rank];
        for (a, &ka) in k.iter().enumerate() {
            if ka == 0.0 {
                continue;
            }
            let row = &self.basis[a * self.rank..(a + 1) * self.rank];
            for (o, w) in out.iter_mut().zip(row) {
                *o += ka * w;
            }
        }
        out
    }

    /// `W β`.
    pub fn lift(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|a| {
                self.basis[a * self.rank..(a + 1) * self.rank]
                    .iter()
                    .zip(beta)
                    .map(|(w, b)| w * b)
                    .sum()
            })
            .collect()
    }
}

/// Cross-kernel rows `k_x` (one entry per pool element) for every
/// length-`ℓ` instance of a list of bags.
#[derive(Debug, Clone)]
pub struct CrossRows {
    pool_size: usize,
    offsets: Vec<usize>,
    data: Vec<f64>,
}

impl CrossRows {
    pub fn build(spec: KernelSpec, pool: &InstancePool, bags: &[Bag]) -> Self {
        Self::build_with(pool, bags, |z, x| spec.eval_same_dim(z, x))
    }

    /// Squared distances `‖z − x‖²` in place of kernel values; map them
    /// through a Gaussian to reuse one pass across bandwidths.
    pub fn sq_dists(pool: &InstancePool, bags: &[Bag]) -> Self {
        Self::build_with(pool, bags, sq_dist)
    }

    fn build_with(pool: &InstancePool, bags: &[Bag], f: impl Fn(&[f64], &[f64]) -> f64 + Sync) -> Self {
        let length = pool.length();
        let n = pool.len();
        let per_bag: Vec<Vec<f64>> = bags
            .par_iter()
            .map(|bag| match bag.group(length) {
                None => Vec::new(),
                Some(g) => {
                    let mut rows = Vec::with_capacity(g.len() * n);
                    for x in g.iter() {
                        rows.extend(pool.iter().map(|z| f(z, x)));
                    }
                    rows
                }
            })
            .collect();
        Self::from_rows(n, per_bag)
    }

    /// Assembles rows from per-bag row-major blocks of width `pool_size`.
    pub fn from_rows(pool_size: usize, per_bag: Vec<Vec<f64>>) -> Self {
        let mut offsets = Vec::with_capacity(per_bag.len() + 1);
        offsets.push(0);
        let mut data = Vec::with_capacity(per_bag.iter().map(Vec::len).sum());
        for rows in per_bag {
            debug_assert_eq!(rows.len() % pool_size.max(1), 0);
            data.extend_from_slice(&rows);
            offsets.push(data.len() / pool_size.max(1));
        }
        CrossRows {
            pool_size,
            offsets,
            data,
        }
    }

    /// Applies `f` entrywise, e.g. to turn squared distances into kernel values.
    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> Self {
        CrossRows {
            pool_size: self.pool_size,
            offsets: self.offsets.clone(),
            data: self.data.par_iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn pool_size(&self) -> usize {
        self.pool_size
    }

    pub fn bag_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of length-`ℓ` instances in bag `i`.
    pub fn instance_count(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn row(&self, i: usize, j: usize) -> &[f64] {
        let r = self.offsets[i] + j;
        &self.data[r * self.pool_size..(r + 1) * self.pool_size]
    }

    pub fn bag_rows(&self, i: usize) -> std::slice::ChunksExact<'_, f64> {
        self.data[self.offsets[i] * self.pool_size..self.offsets[i + 1] * self.pool_size]
            .chunks_exact(self.pool_size)
    }
}

/// The vector `k_x` with `k_{x,z} = K(z, x)` over the pool.
pub fn cross_row(gram: &GramMatrix, pool: &InstancePool, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != pool.length() {
        return Err(Error::DimensionMismatch {
            expected: pool.length(),
            found: x.len(),
        });
    }
    Ok(pool.iter().map(|z| gram.spec().eval_same_dim(z, x)).collect())
}

pub fn build_gram(spec: KernelSpec, pool: &InstancePool) -> GramMatrix {
    GramMatrix::build(spec, pool)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Source;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn pool(rows: &[Vec<f64>]) -> InstancePool {
        InstancePool::from_candidates(
            rows[0].len(),
            rows.iter()
                .enumerate()
                .map(|(i, r)| (r.as_slice(), Source::Bag { bag: i, instance: 0 })),
        )
        .unwrap()
    }

    #[test]
    fn kernel_values() {
        let g = KernelSpec::gaussian(1.0).unwrap();
        assert_eq!(g.eval(&[0.3, 0.4], &[0.3, 0.4]).unwrap(), 1.0);
        assert!((g.eval(&[0.0], &[1.0]).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert!((g.eval(&[0.0], &[1.0]).unwrap() - 0.367879).abs() < 1e-6);
        assert_eq!(KernelSpec::Linear.eval(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        assert!(matches!(
            KernelSpec::Linear.eval(&[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(KernelSpec::gaussian(0.0).is_err());
    }

    #[test]
    fn gaussian_scales_by_dimension() {
        let g = KernelSpec::gaussian(2.0).unwrap();
        let v = g.eval(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0]).unwrap();
        assert!((v - (-3.0f64 / 6.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn single_instance_gram() {
        let p = pool(&[vec![2.0, -1.0]]);
        let g = build_gram(KernelSpec::gaussian(0.5).unwrap(), &p);
        assert_eq!(g.as_slice(), &[1.0]);
    }

    #[test]
    fn cross_row_matches_gram_column() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let p = pool(&rows);
        let g = build_gram(KernelSpec::gaussian(0.7).unwrap(), &p);
        for a in 0..p.len() {
            let k = cross_row(&g, &p, p.get(a)).unwrap();
            for b in 0..p.len() {
                assert_eq!(k[b], g.get(b, a));
            }
        }
        assert!(cross_row(&g, &p, &[1.0]).is_err());
    }

    #[test]
    fn factor_reproduces_quadratic_form() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut rows: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        // near duplicate makes G nearly singular
        let mut dup = rows[0].clone();
        dup[0] += 1e-9;
        rows.push(dup);
        let p = pool(&rows);
        let g = build_gram(KernelSpec::gaussian(1.0).unwrap(), &p);
        let f = g.factor();
        assert!(f.rank() < p.len());
        let beta: Vec<f64> = (0..f.rank()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let alpha = f.lift(&beta);
        let nb: f64 = beta.iter().map(|b| b * b).sum();
        assert!((g.quad_form(&alpha) - nb).abs() < 1e-6 * nb.max(1.0));
        let k = cross_row(&g, &p, p.get(2)).unwrap();
        let direct: f64 = k.iter().zip(&alpha).map(|(a, b)| a * b).sum();
        let via: f64 = f.project(&k).iter().zip(&beta).map(|(a, b)| a * b).sum();
        assert!((direct - via).abs() < 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn gram_invariants(seed in 0u64..1000, n in 1usize..50, dim in 1usize..6, sigma2 in 0.05f64..5.0) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let p = pool(&rows);
            let g = build_gram(KernelSpec::gaussian(sigma2).unwrap(), &p);
            let n = p.len();
            for a in 0..n {
                prop_assert_eq!(g.get(a, a), 1.0);
                for b in 0..n {
                    prop_assert!((g.get(a, b) - g.get(b, a)).abs() <= 1e-12);
                    prop_assert!(g.get(a, b) > 0.0 && g.get(a, b) <= 1.0);
                }
            }
            // eigenvalue oracle
            let m = nalgebra::DMatrix::from_row_slice(n, n, g.as_slice());
            let min = m.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert!(min >= -1e-8, "min eigenvalue {}", min);
        }
    }
}
