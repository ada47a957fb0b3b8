use std::ops::Index;

use num_traits::Float;
use rayon::prelude::*;

use super::{cdtw_slices, WarpingWindow};
use crate::error::DistanceError;
use crate::scalar::Scalar;
use crate::series::Dataset;

/// Dense symmetric matrix of non-negative pairwise distances with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix<T: Scalar> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> DistanceMatrix<T> {
    /// Build from the strictly-upper triangle in row-major order
    /// (`(0,1), (0,2), ..., (1,2), ...`).
    pub fn from_upper(n: usize, upper: &[T]) -> Result<Self, DistanceError> {
        if upper.len() != n * n.saturating_sub(1) / 2 {
            return Err(DistanceError::BadFile(format!(
                "{} upper-triangle entries for n = {n}",
                upper.len()
            )));
        }
        let mut data = vec![T::zero(); n * n];
        let mut it = upper.iter();
        for i in 0..n {
            for j in (i + 1)..n {
                let d = *it.next().expect("length checked");
                if !(d.is_finite() && d >= T::zero()) {
                    return Err(DistanceError::BadFile(format!(
                        "entry ({i}, {j}) is not a finite non-negative distance"
                    )));
                }
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        Ok(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn transpose(&self) -> Self {
        let n = self.n;
        let mut data = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                data[j * n + i] = self.data[i * n + j];
            }
        }
        Self { n, data }
    }
}

impl<T: Scalar> Index<(usize, usize)> for DistanceMatrix<T> {
    type Output = T;

    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

/// Symmetric affinities `a = exp(-gamma * d)`, all in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix<T: Scalar> {
    n: usize,
    gamma: T,
    data: Vec<T>,
}

impl<T: Scalar> AffinityMatrix<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    /// Dense row-major copy of the sub-matrix on `indices` (in the given order).
    pub fn submatrix(&self, indices: &[usize]) -> Vec<T> {
        let k = indices.len();
        let mut out = Vec::with_capacity(k * k);
        for &i in indices {
            for &j in indices {
                out.push(self.get(i, j));
            }
        }
        out
    }

    /// Wrap a precomputed dense affinity matrix (used by tests and callers
    /// that build block structures directly).
    pub fn from_dense(n: usize, gamma: T, data: Vec<T>) -> Self {
        assert_eq!(data.len(), n * n, "affinity data must be n * n");
        Self { n, gamma, data }
    }
}

/// Fill a symmetric matrix by evaluating `kernel` once per unordered pair
/// `i < j`. Pairs are evaluated in parallel; each cell has a single writer.
pub fn pairwise_matrix<T, F, E>(n: usize, kernel: F) -> Result<DistanceMatrix<T>, E>
where
    T: Scalar,
    F: Fn(usize, usize) -> Result<T, E> + Sync,
    E: Send,
{
    let upper: Vec<T> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| kernel(i, j))
        .collect::<Result<_, E>>()?;
    let mut data = vec![T::zero(); n * n];
    let mut it = upper.into_iter();
    for i in 0..n {
        for j in (i + 1)..n {
            let d = it.next().expect("one value per pair");
            data[i * n + j] = d;
            data[j * n + i] = d;
        }
    }
    Ok(DistanceMatrix { n, data })
}

/// Full pairwise cDTW matrix of a dataset.
pub fn distance_matrix<T: Scalar>(ds: &Dataset<T>, window: WarpingWindow) -> Result<DistanceMatrix<T>, DistanceError> {
    window.validate()?;
    if ds.len() < 2 {
        return Err(DistanceError::TooFewInstances(ds.len()));
    }
    let r = window.radius(ds.series_len());
    pairwise_matrix(ds.len(), |i, j| {
        Ok::<_, DistanceError>(cdtw_slices(ds.get(i).values(), ds.get(j).values(), r))
    })
}

/// Elementwise `exp(-gamma * d)`, floored at the smallest positive value.
pub fn to_affinity<T: Scalar>(dm: &DistanceMatrix<T>, gamma: T) -> Result<AffinityMatrix<T>, DistanceError> {
    if !(gamma > T::zero() && gamma.is_finite()) {
        return Err(DistanceError::BadGamma(gamma.to_f64_lossy()));
    }
    // Large raw-scale distances would underflow to 0, which the spectral
    // refiner rejects; clamp to the smallest positive value instead.
    let data = dm
        .data
        .iter()
        .map(|&d| Float::exp(-gamma * d).max(T::min_positive_value()))
        .collect();
    Ok(AffinityMatrix { n: dm.n, gamma, data })
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;
    use crate::series::TimeSeries;

    fn ds(rows: &[&[f64]]) -> Dataset<f64> {
        let series = rows.iter().map(|r| TimeSeries::new(r.to_vec()).unwrap()).collect();
        Dataset::new("t", series, None).unwrap()
    }

    #[test]
    fn identical_pair_gives_zero_matrix() {
        let dm = distance_matrix(&ds(&[&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]]), WarpingWindow::Full).unwrap();
        assert_eq!(dm.row(0), &[0.0, 0.0]);
        assert_eq!(dm.row(1), &[0.0, 0.0]);
    }

    #[test]
    fn one_kernel_call_per_pair() {
        let calls = AtomicUsize::new(0);
        let dm = pairwise_matrix(3, |i, j| {
            calls.fetch_add(1, Ordering::SeqCst);
            Ok::<f64, ()>((i + j) as f64)
        })
        .unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 3);
        assert_eq!(dm.get(0, 2), 2.0);
        assert_eq!(dm.get(2, 0), 2.0);
    }

    #[test]
    fn matrix_is_exactly_symmetric() {
        let d = ds(&[&[0.0, 1.0, 0.5, 2.0], &[1.0, 0.2, 0.1, 0.0], &[3.0, -1.0, 0.0, 0.4]]);
        let dm = distance_matrix(&d, WarpingWindow::Fraction(0.5)).unwrap();
        let t = dm.transpose();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(dm.get(i, j).to_bits(), t.get(i, j).to_bits());
            }
        }
    }

    #[test]
    fn too_few_instances() {
        assert!(matches!(
            distance_matrix(&ds(&[&[0.0, 1.0]]), WarpingWindow::Full),
            Err(DistanceError::TooFewInstances(1))
        ));
    }

    #[test]
    fn affinity_values() {
        let dm = DistanceMatrix::from_upper(2, &[2.0]).unwrap();
        let a = to_affinity(&dm, 0.5).unwrap();
        assert_eq!(a.get(0, 0), 1.0);
        assert!((a.get(0, 1) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((a.get(0, 1) - 0.36788).abs() < 1e-5);
        assert!(to_affinity(&dm, 0.0).is_err());
        assert!(to_affinity(&dm, f64::NAN).is_err());
    }

    #[test]
    fn affinity_submatrix_order() {
        let dm = DistanceMatrix::from_upper(3, &[1.0, 2.0, 3.0]).unwrap();
        let a = to_affinity(&dm, 1.0).unwrap();
        let sub = a.submatrix(&[2, 0]);
        assert_eq!(sub.len(), 4);
        assert_eq!(sub[0], 1.0);
        assert!((sub[1] - (-2.0f64).exp()).abs() < 1e-15);
    }
}
