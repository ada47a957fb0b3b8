use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ncc::{norm, shift_zero_pad, CrossCorrelator};
use crate::error::ShapeError;
use crate::scalar::{total_cmp, Scalar};
use crate::series::{z_normalize_slice, Dataset};

const POWER_TOL: f64 = 1e-8;
const POWER_MAX_ITER: usize = 300;

pub const DEFAULT_MAX_ITER: usize = 100;

/// Cluster centroid: zero mean, unit norm (all zeros for an empty cluster).
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeCentroid<T> {
    pub values: Vec<T>,
    pub cluster: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KShapeResult<T> {
    /// Cluster index in `0..k` for every input series.
    pub assignment: Vec<usize>,
    pub centroids: Vec<ShapeCentroid<T>>,
    pub iterations: usize,
    /// Sum of SBD to own centroid, once per iteration.
    pub objective: Vec<T>,
}

/// Shape extraction: align `members` to `previous` by their NCC peak,
/// z-normalize, and take the leading eigenvector of `Q S Q` where `S` is the
/// scatter matrix of the aligned members and `Q = I - 11^T / m`.
///
/// `previous` may be all zeros, in which case members are used unaligned.
pub fn extract_shape<T: Scalar>(corr: &CrossCorrelator<T>, members: &[&[T]], previous: &[T]) -> Vec<T> {
    let m = corr.series_len();
    if members.is_empty() {
        return vec![T::zero(); m];
    }
    let prev_is_zero = norm(previous) == T::zero();
    let aligned: Vec<Vec<T>> = members
        .iter()
        .map(|&x| {
            let shifted = if prev_is_zero {
                x.to_vec()
            } else {
                match corr.ncc_max(previous, x) {
                    Ok(peak) => shift_zero_pad(x, peak.shift),
                    Err(_) => x.to_vec(),
                }
            };
            z_normalize_slice(&shifted)
        })
        .collect();

    let center = |v: &mut Vec<T>| {
        let mean = v.iter().copied().sum::<T>() / T::from_count(m);
        for x in v.iter_mut() {
            *x -= mean;
        }
    };
    // v -> Q S Q v, with S v = sum_a a (a . v).
    let apply = |v: &[T]| -> Vec<T> {
        let mut qv = v.to_vec();
        center(&mut qv);
        let mut out = vec![T::zero(); m];
        for a in &aligned {
            let dot: T = a.iter().zip(&qv).map(|(&x, &y)| x * y).sum();
            for (o, &x) in out.iter_mut().zip(a) {
                *o += x * dot;
            }
        }
        center(&mut out);
        out
    };

    let reference: Vec<T> = if prev_is_zero {
        aligned[0].clone()
    } else {
        previous.to_vec()
    };
    let mut v = reference.clone();
    center(&mut v);
    let mut n0 = norm(&v);
    if n0 == T::zero() {
        // Reference has no shape; start from the aggregate of all members.
        v = aligned.iter().fold(vec![T::zero(); m], |mut acc, a| {
            for (s, &x) in acc.iter_mut().zip(a) {
                *s += Float::abs(x);
            }
            acc
        });
        v[0] += T::one();
        center(&mut v);
        n0 = norm(&v);
        if n0 == T::zero() {
            return vec![T::zero(); m];
        }
    }
    for x in v.iter_mut() {
        *x /= n0;
    }

    let tol = T::lit(POWER_TOL);
    for _ in 0..POWER_MAX_ITER {
        let mut next = apply(&v);
        let nn = norm(&next);
        if nn == T::zero() {
            return vec![T::zero(); m];
        }
        for x in next.iter_mut() {
            *x /= nn;
        }
        let diff = Float::sqrt(next.iter().zip(&v).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>());
        v = next;
        if diff < tol {
            break;
        }
    }

    center(&mut v);
    let nv = norm(&v);
    if nv == T::zero() {
        return vec![T::zero(); m];
    }
    let sign_ref: T = v.iter().zip(&reference).map(|(&a, &b)| a * b).sum();
    let flip = if sign_ref < T::zero() { -T::one() } else { T::one() };
    v.into_iter().map(|x| flip * x / nv).collect()
}

/// k-Shape over series that are already z-normalized.
pub fn kshape_series<T: Scalar>(
    series: &[&[T]],
    k: usize,
    rng_seed: u64,
    max_iter: usize,
) -> Result<KShapeResult<T>, ShapeError> {
    let n = series.len();
    if k == 0 || k > n {
        return Err(ShapeError::BadK { k, n });
    }
    let m = series[0].len();
    if let Some(bad) = series.iter().find(|s| s.len() != m) {
        return Err(ShapeError::UnequalLengths {
            left: m,
            right: bad.len(),
        });
    }
    let corr = CrossCorrelator::new(m);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut assignment: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
    let mut centroids = vec![vec![T::zero(); m]; k];
    let mut objective = Vec::new();
    let mut iterations = 0;

    for _ in 0..max_iter.max(1) {
        iterations += 1;
        for (j, c) in centroids.iter_mut().enumerate() {
            let members: Vec<&[T]> = (0..n).filter(|&i| assignment[i] == j).map(|i| series[i]).collect();
            *c = extract_shape(&corr, &members, c);
        }
        let (mut next, mut dists): (Vec<usize>, Vec<T>) =
            series.iter().map(|s| nearest_centroid(&corr, s, &centroids)).unzip();
        repair_empty(&mut next, &mut dists, k);
        objective.push(
            (0..n)
                .map(|i| sbd_to_centroid(&corr, series[i], &centroids[next[i]]))
                .sum(),
        );
        let converged = next == assignment;
        assignment = next;
        if converged {
            break;
        }
    }

    Ok(KShapeResult {
        assignment,
        centroids: centroids
            .into_iter()
            .enumerate()
            .map(|(cluster, values)| ShapeCentroid { values, cluster })
            .collect(),
        iterations,
        objective,
    })
}

/// k-Shape on a dataset; the dataset is z-normalized first.
pub fn kshape<T: Scalar>(
    ds: &Dataset<T>,
    k: usize,
    rng_seed: u64,
    max_iter: usize,
) -> Result<KShapeResult<T>, ShapeError> {
    let norm_ds = ds.z_normalized();
    let series: Vec<&[T]> = norm_ds.series().iter().map(|s| s.values()).collect();
    kshape_series(&series, k, rng_seed, max_iter)
}

fn sbd_to_centroid<T: Scalar>(corr: &CrossCorrelator<T>, x: &[T], c: &[T]) -> T {
    if norm(c) == T::zero() {
        T::infinity()
    } else {
        corr.sbd_lenient(c, x)
    }
}

fn nearest_centroid<T: Scalar>(corr: &CrossCorrelator<T>, x: &[T], centroids: &[Vec<T>]) -> (usize, T) {
    centroids
        .iter()
        .enumerate()
        .map(|(j, c)| (j, sbd_to_centroid(corr, x, c)))
        .min_by(|a, b| total_cmp(a.1, b.1).then(a.0.cmp(&b.0)))
        .expect("k >= 1")
}

/// Reseed every empty cluster with the instance farthest from its own
/// centroid, taken from a cluster that keeps at least one member.
fn repair_empty<T: Scalar>(assignment: &mut [usize], dists: &mut [T], k: usize) {
    loop {
        let mut counts = vec![0usize; k];
        for &a in assignment.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let donor = (0..assignment.len())
            .filter(|&i| counts[assignment[i]] >= 2)
            .max_by(|&a, &b| total_cmp(dists[a], dists[b]).then(b.cmp(&a)))
            .expect("k <= n leaves a cluster with two members");
        assignment[donor] = empty;
        dists[donor] = T::zero();
    }
}

/// Member closest (by SBD) to the shape extracted from `members`; ties go to
/// the lowest index. Series in `ds` are expected to be z-normalized.
pub fn sbd_representative<T: Scalar>(members: &[usize], ds: &Dataset<T>) -> usize {
    let corr = CrossCorrelator::new(ds.series_len());
    let series: Vec<&[T]> = members.iter().map(|&i| ds.get(i).values()).collect();
    representative_among(&corr, members, &series)
}

pub(crate) fn representative_among<T: Scalar>(corr: &CrossCorrelator<T>, members: &[usize], series: &[&[T]]) -> usize {
    assert!(!members.is_empty(), "representative of an empty member set");
    if members.len() == 1 {
        return members[0];
    }
    let centroid = extract_shape(corr, series, &vec![T::zero(); corr.series_len()]);
    members
        .iter()
        .zip(series)
        .map(|(&idx, s)| (idx, corr.sbd_lenient(&centroid, s)))
        .min_by(|a, b| total_cmp(a.1, b.1).then(a.0.cmp(&b.0)))
        .map(|(idx, _)| idx)
        .expect("non-empty members")
}
