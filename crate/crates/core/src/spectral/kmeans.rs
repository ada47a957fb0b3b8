//! Lloyd k-means with k-means++ seeding over small dense embeddings.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::scalar::{total_cmp, Scalar};

const MAX_LLOYD_ITERATIONS: usize = 300;

#[derive(Debug, Clone)]
pub struct KMeansFit<T> {
    pub labels: Vec<usize>,
    pub inertia: T,
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Best of `restarts` k-means runs by inertia. Every one of the `k` clusters is
/// non-empty in the result. `rows.len() >= k` is required.
pub fn kmeans<T: Scalar>(rows: &[Vec<T>], k: usize, restarts: usize, rng: &mut ChaCha8Rng) -> KMeansFit<T> {
    assert!(k >= 1 && k <= rows.len(), "k must be in 1..=n");
    let mut best: Option<KMeansFit<T>> = None;
    for _ in 0..restarts.max(1) {
        let fit = kmeans_once(rows, k, rng);
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    best.expect("at least one restart")
}

fn seed_plus_plus<T: Scalar>(rows: &[Vec<T>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<T>> {
    let n = rows.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centers = vec![rows[first].clone()];
    let mut d2: Vec<f64> = rows.iter().map(|r| sq_dist(r, &centers[0]).to_f64_lossy()).collect();

    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                pick = Some(i);
                if target < w {
                    break;
                }
                target -= w;
            }
            pick.expect("positive total weight")
        } else {
            // All remaining points coincide with a center.
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        centers.push(rows[pick].clone());
        let c = centers.last().expect("just pushed");
        for (i, r) in rows.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, c).to_f64_lossy());
        }
    }
    centers
}

fn assign<T: Scalar>(rows: &[Vec<T>], centers: &[Vec<T>]) -> (Vec<usize>, Vec<T>) {
    rows.iter()
        .map(|r| {
            centers
                .iter()
                .enumerate()
                .map(|(c, ctr)| (c, sq_dist(r, ctr)))
                .min_by(|a, b| total_cmp(a.1, b.1).then(a.0.cmp(&b.0)))
                .expect("k >= 1")
        })
        .unzip()
}

/// Move the point farthest from its center (within a cluster of size >= 2)
/// into each empty cluster.
fn repair_empty<T: Scalar>(labels: &mut [usize], dists: &mut [T], k: usize) {
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let donor = (0..labels.len())
            .filter(|&i| counts[labels[i]] >= 2)
            .max_by(|&a, &b| total_cmp(dists[a], dists[b]).then(b.cmp(&a)))
            .expect("n >= k guarantees a cluster with two members");
        labels[donor] = empty;
        dists[donor] = T::zero();
    }
}

fn kmeans_once<T: Scalar>(rows: &[Vec<T>], k: usize, rng: &mut ChaCha8Rng) -> KMeansFit<T> {
    let dim = rows[0].len();
    let mut centers = seed_plus_plus(rows, k, rng);
    let (mut labels, mut dists) = assign(rows, &centers);
    repair_empty(&mut labels, &mut dists, k);

    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut sums = vec![vec![T::zero(); dim]; k];
        let mut counts = vec![0usize; k];
        for (r, &l) in rows.iter().zip(&labels) {
            counts[l] += 1;
            for (s, &x) in sums[l].iter_mut().zip(r) {
                *s += x;
            }
        }
        for c in 0..k {
            let cnt = T::from_count(counts[c]);
            centers[c] = sums[c].iter().map(|&s| s / cnt).collect();
        }
        let (mut next, mut nd) = assign(rows, &centers);
        repair_empty(&mut next, &mut nd, k);
        dists = nd;
        if next == labels {
            break;
        }
        labels = next;
    }
    let inertia = dists.iter().copied().sum();
    KMeansFit { labels, inertia }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;

    #[test]
    fn separates_two_groups() {
        let rows = vec![
            vec![0.0, 0.0],
            vec![0.1, 0.0],
            vec![5.0, 5.0],
            vec![5.0, 5.1],
            vec![0.0, 0.1],
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let fit = kmeans(&rows, 2, 5, &mut rng);
        assert_eq!(fit.labels[0], fit.labels[1]);
        assert_eq!(fit.labels[0], fit.labels[4]);
        assert_eq!(fit.labels[2], fit.labels[3]);
        assert_ne!(fit.labels[0], fit.labels[2]);
    }

    #[test]
    fn duplicates_still_fill_every_cluster() {
        let rows = vec![vec![1.0f64, 1.0]; 4];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fit = kmeans(&rows, 3, 2, &mut rng);
        for c in 0..3 {
            assert!(fit.labels.contains(&c));
        }
    }
}
