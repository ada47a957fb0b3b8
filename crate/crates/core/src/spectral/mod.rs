//! Normalized spectral clustering (Ng-Jordan-Weiss) over affinity sub-matrices.
//!
//! Pipeline: `L = D^{-1/2} A D^{-1/2}`, eigenvectors of the `k` largest
//! eigenvalues as an embedding, rows scaled to unit length, then k-means with
//! k-means++ seeding keeping the restart of lowest inertia.

mod eigen;
mod kmeans;

pub use eigen::{symmetric_eigen, SymmetricEigen};
pub use kmeans::{kmeans, KMeansFit};

use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distance::AffinityMatrix;
use crate::error::SpectralError;
use crate::scalar::Scalar;

const ZERO_ROW_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralParams {
    pub k: usize,
    pub eig_tolerance: f64,
    pub kmeans_restarts: usize,
    pub rng_seed: u64,
}

impl SpectralParams {
    pub fn new(k: usize, rng_seed: u64) -> Self {
        Self {
            k,
            eig_tolerance: 1e-10,
            kmeans_restarts: 10,
            rng_seed,
        }
    }
}

/// Cluster the rows `indices` of a global affinity matrix. Returns one cluster
/// id in `0..k` per entry of `indices`; ids are numbered by first appearance.
pub fn spectral_cluster<T: Scalar>(
    affinity: &AffinityMatrix<T>,
    indices: &[usize],
    params: &SpectralParams,
) -> Result<Vec<usize>, SpectralError> {
    let sub = affinity.submatrix(indices);
    spectral_cluster_dense(&sub, indices.len(), params)
}

/// Same as [`spectral_cluster`] on a dense row-major `n x n` affinity matrix.
pub fn spectral_cluster_dense<T: Scalar>(
    a: &[T],
    n: usize,
    params: &SpectralParams,
) -> Result<Vec<usize>, SpectralError> {
    let k = params.k;
    if k == 0 || k > n {
        return Err(SpectralError::BadK { k, n });
    }
    for i in 0..n {
        for j in 0..n {
            let v = a[i * n + j];
            if !(v > T::zero() && v <= T::one()) || v != a[j * n + i] {
                return Err(SpectralError::BadAffinity);
            }
        }
    }
    if k == n {
        return Ok((0..n).collect());
    }
    if k == 1 {
        return Ok(vec![0; n]);
    }

    let inv_sqrt_deg: Vec<T> = (0..n)
        .map(|i| {
            let deg: T = a[i * n..(i + 1) * n].iter().copied().sum();
            T::one() / Float::sqrt(deg)
        })
        .collect();
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            l[i * n + j] = inv_sqrt_deg[i] * a[i * n + j] * inv_sqrt_deg[j];
        }
    }
    let eig = symmetric_eigen(&l, n, T::lit(params.eig_tolerance))?;

    let embedding = embed_rows(&eig, k);
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let fit = kmeans(&embedding, k, params.kmeans_restarts, &mut rng);
    Ok(relabel_by_first_appearance(&fit.labels))
}

/// Rows of the top-`k` eigenvectors, each scaled to unit length. Zero rows
/// map to the first basis vector.
pub(crate) fn embed_rows<T: Scalar>(eig: &SymmetricEigen<T>, k: usize) -> Vec<Vec<T>> {
    let n = eig.n;
    let cols: Vec<usize> = (n - k..n).rev().collect();
    (0..n)
        .map(|r| {
            let row: Vec<T> = cols.iter().map(|&c| eig.vectors[r * n + c]).collect();
            let norm = Float::sqrt(row.iter().map(|&x| x * x).sum::<T>());
            if norm < T::lit(ZERO_ROW_NORM) {
                let mut e0 = vec![T::zero(); k];
                e0[0] = T::one();
                e0
            } else {
                row.into_iter().map(|x| x / norm).collect()
            }
        })
        .collect()
}

pub(crate) fn relabel_by_first_appearance(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}
