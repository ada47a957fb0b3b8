//! Independent brute-force reference implementations and shared fixtures.
#![allow(dead_code)]

use std::collections::HashSet;

use cobras_ts::{ConstraintKind, Dataset, Relation, TimeSeries};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// DTW by enumerating every monotone warping path inside the band.
pub fn dtw_enumerate(x: &[f64], y: &[f64], r: usize) -> f64 {
    fn walk(x: &[f64], y: &[f64], r: usize, i: usize, j: usize, acc: f64, best: &mut f64) {
        let acc = acc + (x[i] - y[j]).powi(2);
        let m = x.len();
        if i == m - 1 && j == m - 1 {
            *best = best.min(acc);
            return;
        }
        for (di, dj) in [(1, 0), (0, 1), (1, 1)] {
            let (ni, nj) = (i + di, j + dj);
            if ni < m && nj < m && ni.abs_diff(nj) <= r {
                walk(x, y, r, ni, nj, acc, best);
            }
        }
    }
    let mut best = f64::INFINITY;
    walk(x, y, r, 0, 0, 0.0, &mut best);
    best.sqrt()
}

/// Cross-correlation by sliding dot product: entry `s + m - 1` holds
/// `sum_t x[t] * y[t + s]` for `s` in `-(m-1)..=(m-1)`.
pub fn cross_correlation_direct(x: &[f64], y: &[f64]) -> Vec<f64> {
    let m = x.len() as isize;
    (-(m - 1)..m)
        .map(|s| {
            (0..m)
                .filter(|&t| (0..m).contains(&(t + s)))
                .map(|t| x[t as usize] * y[(t + s) as usize])
                .sum()
        })
        .collect()
}

/// Maximum normalized cross-correlation and its shift, direct evaluation.
pub fn ncc_direct(x: &[f64], y: &[f64]) -> (f64, isize) {
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let denom = norm(x) * norm(y);
    let m = x.len() as isize;
    cross_correlation_direct(x, y)
        .into_iter()
        .enumerate()
        .map(|(k, c)| (c / denom, k as isize - (m - 1)))
        .fold(
            (f64::NEG_INFINITY, 0),
            |best, cur| if cur.0 > best.0 { cur } else { best },
        )
}

/// ARI from pair counts over all `n choose 2` instance pairs.
pub fn ari_pair_counting<A: PartialEq, B: PartialEq>(a: &[A], b: &[B]) -> f64 {
    let (mut ss, mut sd, mut ds, mut dd) = (0f64, 0f64, 0f64, 0f64);
    for i in 0..a.len() {
        for j in (i + 1)..a.len() {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => ss += 1.0,
                (true, false) => sd += 1.0,
                (false, true) => ds += 1.0,
                (false, false) => dd += 1.0,
            }
        }
    }
    let den = (ss + sd) * (sd + dd) + (ss + ds) * (ds + dd);
    if den == 0.0 {
        return 1.0;
    }
    2.0 * (ss * dd - sd * ds) / den
}

/// Closure of a constraint set under the rules: must-link is an equivalence,
/// and must-link(a, b) with cannot-link(b, c) gives cannot-link(a, c).
/// Iterated over all triples until nothing changes.
pub fn closure(n: usize, constraints: &[(usize, usize, ConstraintKind)]) -> Vec<Vec<Relation>> {
    let mut ml = vec![vec![false; n]; n];
    let mut cl = vec![vec![false; n]; n];
    for (i, row) in ml.iter_mut().enumerate() {
        row[i] = true;
    }
    for &(i, j, k) in constraints {
        let m = if k == ConstraintKind::MustLink {
            &mut ml
        } else {
            &mut cl
        };
        m[i][j] = true;
        m[j][i] = true;
    }
    loop {
        let mut changed = false;
        for a in 0..n {
            for b in 0..n {
                if !ml[a][b] {
                    continue;
                }
                for c in 0..n {
                    if ml[b][c] && !ml[a][c] {
                        ml[a][c] = true;
                        ml[c][a] = true;
                        changed = true;
                    }
                    if cl[b][c] && !cl[a][c] {
                        cl[a][c] = true;
                        cl[c][a] = true;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| match (ml[i][j], cl[i][j]) {
                    (true, false) => Relation::MustLink,
                    (false, true) => Relation::CannotLink,
                    (false, false) => Relation::Unknown,
                    (true, true) => panic!("closure of a consistent set is consistent"),
                })
                .collect()
        })
        .collect()
}

pub fn random_series(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    (0..m).map(|_| rng.random_range(-2.0..2.0)).collect()
}

/// Three blobs along a one-dimensional path between two shapes: `A` at one
/// end, `B` in the middle and `A'` at the other end. `A` and `A'` share a label.
pub fn three_blobs(seed: u64, per_blob: usize, m: usize, noise: f64) -> Dataset<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise).expect("valid std");
    let mut series = Vec::new();
    let mut labels = Vec::new();
    for (pos, label) in [(0.0, "A"), (0.5, "B"), (1.0, "A")] {
        for _ in 0..per_blob {
            let v: Vec<f64> = (0..m)
                .map(|t| {
                    let x = t as f64 / m as f64;
                    let wave = (2.0 * std::f64::consts::PI * x).sin();
                    let bump = 2.0 * (-((x - 0.5) * 8.0).powi(2)).exp() - 0.5;
                    (1.0 - pos) * wave + pos * bump + noise.sample(&mut rng)
                })
                .collect();
            series.push(TimeSeries::new(v).expect("finite"));
            labels.push(label.to_string());
        }
    }
    Dataset::new(format!("three_blobs_{seed}"), series, Some(labels)).expect("valid dataset")
}

/// Whether the outer blobs of [`three_blobs`] form one cluster and the middle
/// blob another, with nothing else.
pub fn outer_blobs_joined(assignment: &[usize], per_blob: usize) -> bool {
    let blob = |b: usize| -> HashSet<usize> { assignment[b * per_blob..(b + 1) * per_blob].iter().copied().collect() };
    let (a, b, a2) = (blob(0), blob(1), blob(2));
    let distinct: HashSet<usize> = assignment.iter().copied().collect();
    distinct.len() == 2 && a.len() == 1 && b.len() == 1 && a == a2 && a != b
}
