//! Adjusted Rand Index, cross-validated evaluation with query-count curves,
//! parameter sweeps and the unsupervised k-Shape baseline.

use std::collections::HashMap;
use std::hash::Hash;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::distance::WarpingWindow;
use crate::engine::{run, Clustering, EngineConfig, Prepared, RunOutcome};
use crate::error::EvalError;
use crate::oracle::LabelOracle;
use crate::scalar::Scalar;
use crate::series::Dataset;
use crate::shape::{kshape, DEFAULT_MAX_ITER};

pub const DEFAULT_FOLDS: usize = 10;

fn comb2(x: usize) -> i128 {
    let x = x as i128;
    x * (x - 1) / 2
}

/// Adjusted Rand Index between two labelings of the same instances.
///
/// Computed from the contingency table in exact integer arithmetic with a
/// single final division. When both partitions are trivial in the same way
/// (the denominator vanishes) the result is 1.
pub fn ari<A: Eq + Hash, B: Eq + Hash>(a: &[A], b: &[B]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(EvalError::TooFewInstances(n));
    }
    let mut cells: HashMap<(&A, &B), usize> = HashMap::new();
    let mut rows: HashMap<&A, usize> = HashMap::new();
    let mut cols: HashMap<&B, usize> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        *cells.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: i128 = cells.values().map(|&c| comb2(c)).sum();
    let sa: i128 = rows.values().map(|&c| comb2(c)).sum();
    let sb: i128 = cols.values().map(|&c| comb2(c)).sum();
    let total = comb2(n);
    // ARI = (index - sa*sb/total) / ((sa+sb)/2 - sa*sb/total), scaled by 2*total.
    let num = 2 * (index * total - sa * sb);
    let den = (sa + sb) * total - 2 * sa * sb;
    if den == 0 {
        return Ok(1.0);
    }
    Ok(num as f64 / den as f64)
}

/// Assignment of instances to cross-validation folds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldSplit {
    folds: Vec<usize>,
    k: usize,
    rng_seed: u64,
    stratified: bool,
}

impl FoldSplit {
    /// Stratified folds: each class is shuffled and dealt round-robin, the
    /// dealer continuing where the previous class stopped.
    pub fn stratified<L: Eq + Hash>(labels: &[L], k: usize, rng_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let mut order: Vec<&L> = Vec::new();
        let mut groups: HashMap<&L, Vec<usize>> = HashMap::new();
        for (i, l) in labels.iter().enumerate() {
            groups
                .entry(l)
                .or_insert_with(|| {
                    order.push(l);
                    Vec::new()
                })
                .push(i);
        }
        let mut folds = vec![0; labels.len()];
        let mut dealer = 0;
        for l in order {
            let members = groups.get_mut(l).expect("grouped above");
            members.shuffle(&mut rng);
            for &i in members.iter() {
                folds[i] = dealer % k;
                dealer += 1;
            }
        }
        Self {
            folds,
            k,
            rng_seed,
            stratified: true,
        }
    }

    /// Unstratified folds over a seeded permutation.
    pub fn random(n: usize, k: usize, rng_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let mut folds = vec![0; n];
        for (pos, &i) in perm.iter().enumerate() {
            folds[i] = pos % k;
        }
        Self {
            folds,
            k,
            rng_seed,
            stratified: false,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.folds.len()
    }

    pub fn is_stratified(&self) -> bool {
        self.stratified
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn fold_of(&self, i: usize) -> usize {
        self.folds[i]
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.folds[i] == fold).collect()
    }

    /// Every instance outside `fold`.
    pub fn train_mask(&self, fold: usize) -> Vec<bool> {
        self.folds.iter().map(|&f| f != fold).collect()
    }
}

/// ARI on `test` instances for query counts `0..=budget`. Runs that stopped
/// early are extended with their final clustering. A single test instance
/// trivially agrees with the labels and scores 1.
pub fn fold_curve<L: Eq + Hash>(
    snapshots: &[Clustering],
    labels: &[L],
    test: &[usize],
    budget: usize,
) -> Result<Vec<f64>, EvalError> {
    let last = snapshots.last().ok_or(EvalError::TooFewInstances(0))?;
    let truth: Vec<&L> = test.iter().map(|&i| &labels[i]).collect();
    (0..=budget)
        .map(|q| {
            if test.len() == 1 {
                return Ok(1.0);
            }
            let snap = snapshots.get(q).unwrap_or(last);
            let pred: Vec<usize> = test.iter().map(|&i| snap.assignment[i]).collect();
            ari(&pred, &truth)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldResult {
    pub fold: usize,
    /// ARI on the fold's test instances at query counts `0..=budget`.
    pub curve: Vec<f64>,
    pub queries_used: usize,
    pub outcome: RunOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    pub folds: Vec<FoldResult>,
    pub mean_curve: Vec<f64>,
    pub final_mean_ari: f64,
}

impl EvalResult {
    /// CSV with header `fold,query_count,ari`.
    pub fn write_curves_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "fold,query_count,ari")?;
        for f in &self.folds {
            for (q, a) in f.curve.iter().enumerate() {
                writeln!(w, "{},{},{}", f.fold, q, a)?;
            }
        }
        Ok(())
    }
}

/// Run the engine once per fold with a label oracle restricted to the
/// training instances, scoring each snapshot on the held-out fold.
pub fn evaluate<T: Scalar>(ds: &Dataset<T>, config: &EngineConfig, folds: &FoldSplit) -> Result<EvalResult, EvalError> {
    let prepared = Prepared::new(ds, config)?;
    evaluate_prepared(&prepared, folds)
}

pub fn evaluate_prepared<T: Scalar>(prepared: &Prepared<T>, folds: &FoldSplit) -> Result<EvalResult, EvalError> {
    let labels = prepared.dataset().labels().ok_or(EvalError::Unlabelled)?;
    if folds.n() != prepared.len() {
        return Err(EvalError::LengthMismatch(folds.n(), prepared.len()));
    }
    let budget = prepared.config().budget;
    let results: Vec<FoldResult> = (0..folds.k())
        .into_par_iter()
        .filter_map(|fold| {
            let test = folds.test_indices(fold);
            if test.is_empty() {
                return None;
            }
            let out = run(prepared, LabelOracle::new(labels), &folds.train_mask(fold))
                .map_err(|source| EvalError::Fold { fold, source })
                .and_then(|res| {
                    Ok(FoldResult {
                        fold,
                        curve: fold_curve(&res.snapshots, labels, &test, budget)?,
                        queries_used: res.queries_used(),
                        outcome: res.outcome,
                    })
                });
            Some(out)
        })
        .collect::<Result<_, _>>()?;
    if results.is_empty() {
        return Err(EvalError::TooFewInstances(prepared.len()));
    }
    let mean_curve: Vec<f64> = (0..=budget)
        .map(|q| results.iter().map(|f| f.curve[q]).sum::<f64>() / results.len() as f64)
        .collect();
    let final_mean_ari = *mean_curve.last().expect("budget + 1 points");
    Ok(EvalResult {
        folds: results,
        mean_curve,
        final_mean_ari,
    })
}

/// JSON summary of an evaluation, including how folds were built.
#[derive(Debug, Clone, Serialize)]
pub struct EvalSummary {
    pub dataset: String,
    pub n: usize,
    pub series_len: usize,
    pub config: EngineConfig,
    pub folds: usize,
    pub stratified: bool,
    pub fold_seed: u64,
    pub final_mean_ari: f64,
    pub mean_curve: Vec<f64>,
    pub fold_final_ari: Vec<f64>,
    pub fold_queries_used: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kshape_baseline_ari: Option<f64>,
}

impl EvalSummary {
    pub fn new<T: Scalar>(ds: &Dataset<T>, config: &EngineConfig, folds: &FoldSplit, result: &EvalResult) -> Self {
        Self {
            dataset: ds.name().to_string(),
            n: ds.len(),
            series_len: ds.series_len(),
            config: config.clone(),
            folds: folds.k(),
            stratified: folds.is_stratified(),
            fold_seed: folds.rng_seed(),
            final_mean_ari: result.final_mean_ari,
            mean_curve: result.mean_curve.clone(),
            fold_final_ari: result
                .folds
                .iter()
                .map(|f| *f.curve.last().unwrap_or(&f64::NAN))
                .collect(),
            fold_queries_used: result.folds.iter().map(|f| f.queries_used).collect(),
            kshape_baseline_ari: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub gamma: f64,
    pub window: WarpingWindow,
    pub final_mean_ari: f64,
}

/// Evaluate every `(gamma, window)` pair. One DTW matrix is computed per
/// window; gammas only change the affinities.
pub fn sweep<T: Scalar>(
    ds: &Dataset<T>,
    base: &EngineConfig,
    gammas: &[f64],
    windows: &[WarpingWindow],
    folds: &FoldSplit,
) -> Result<Vec<SweepPoint>, EvalError> {
    let mut by_window = Vec::with_capacity(windows.len());
    for &window in windows {
        let config = EngineConfig { window, ..base.clone() };
        by_window.push(Prepared::new(ds, &config)?);
    }
    let mut out = Vec::with_capacity(gammas.len() * windows.len());
    for &gamma in gammas {
        for (prepared, &window) in by_window.iter().zip(windows) {
            let config = EngineConfig {
                gamma,
                window,
                ..base.clone()
            };
            let p = prepared.reconfigure(&config)?;
            out.push(SweepPoint {
                gamma,
                window,
                final_mean_ari: evaluate_prepared(&p, folds)?.final_mean_ari,
            });
        }
    }
    Ok(out)
}

/// CSV with header `gamma,window,final_mean_ari`.
pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], mut w: W) -> std::io::Result<()> {
    writeln!(w, "gamma,window,final_mean_ari")?;
    for p in points {
        writeln!(w, "{},{},{}", p.gamma, p.window, p.final_mean_ari)?;
    }
    Ok(())
}

/// Unsupervised k-Shape with the true class count, scored on all instances.
pub fn kshape_baseline<T: Scalar>(ds: &Dataset<T>, k_true: usize, rng_seed: u64) -> Result<f64, EvalError> {
    let labels = ds.labels().ok_or(EvalError::Unlabelled)?;
    let res = kshape(ds, k_true, rng_seed, DEFAULT_MAX_ITER)?;
    ari(&res.assignment, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::TimeSeries;

    #[test]
    fn ari_worked_examples() {
        assert_eq!(ari(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(ari(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), -0.5);
        assert_eq!(ari(&[3, 3, 3], &[1, 1, 1]).unwrap(), 1.0);
        assert_eq!(ari(&[0, 1, 2], &[2, 0, 1]).unwrap(), 1.0);
        assert!(matches!(ari(&[0], &[0]), Err(EvalError::TooFewInstances(1))));
        assert!(matches!(ari(&[0, 1], &[0]), Err(EvalError::LengthMismatch(2, 1))));
    }

    #[test]
    fn ari_symmetric_and_label_types_mix() {
        let a = [0, 0, 1, 2, 2, 2];
        let b = ["x", "y", "y", "y", "z", "z"];
        assert_eq!(ari(&a, &b).unwrap(), ari(&b, &a).unwrap());
    }

    #[test]
    fn stratified_folds_balance_classes() {
        let labels: Vec<String> = (0..30).map(|i| format!("c{}", i % 3)).collect();
        let f = FoldSplit::stratified(&labels, 10, 4);
        for fold in 0..10 {
            let test = f.test_indices(fold);
            assert_eq!(test.len(), 3);
            let mut classes: Vec<&String> = test.iter().map(|&i| &labels[i]).collect();
            classes.sort();
            classes.dedup();
            assert_eq!(classes.len(), 3);
            let mask = f.train_mask(fold);
            assert_eq!(mask.iter().filter(|&&m| m).count(), 27);
        }
        assert_eq!(f, FoldSplit::stratified(&labels, 10, 4));
    }

    #[test]
    fn random_folds_partition() {
        let f = FoldSplit::random(23, 10, 1);
        let sizes: Vec<usize> = (0..10).map(|k| f.test_indices(k).len()).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 23);
        assert!(sizes.iter().all(|&s| s == 2 || s == 3));
    }

    #[test]
    fn fold_curve_pads_with_final() {
        let snaps = vec![
            Clustering::from_labels(&[0, 0, 0, 0]),
            Clustering::from_labels(&[0, 0, 1, 1]),
        ];
        let labels = ["a", "a", "b", "b"];
        let c = fold_curve(&snaps, &labels, &[0, 1, 2, 3], 3).unwrap();
        assert_eq!(c, vec![0.0, 1.0, 1.0, 1.0]);
        assert_eq!(fold_curve(&snaps, &labels, &[2], 1).unwrap(), vec![1.0, 1.0]);
    }

    fn two_class_toy() -> Dataset<f64> {
        let mut series = Vec::new();
        let mut labels = Vec::new();
        for k in 0..20 {
            let up = k % 2 == 0;
            let v: Vec<f64> = (0..24)
                .map(|t| {
                    let ramp = t as f64 / 23.0;
                    let base = if up { ramp } else { 1.0 - ramp };
                    base + 0.01 * ((t * 13 + k * 7) % 11) as f64
                })
                .collect();
            series.push(TimeSeries::new(v).unwrap());
            labels.push(if up { "up" } else { "down" }.to_string());
        }
        Dataset::new("toy", series, Some(labels)).unwrap()
    }

    #[test]
    fn separable_toy_reaches_perfect_score() {
        let ds = two_class_toy();
        let folds = FoldSplit::stratified(ds.labels().unwrap(), 10, 0);
        let config = EngineConfig {
            budget: 25,
            ..Default::default()
        };
        let res = evaluate(&ds, &config, &folds).unwrap();
        assert_eq!(res.mean_curve.len(), 26);
        assert_eq!(res.final_mean_ari, 1.0);
        let mut csv = Vec::new();
        res.write_curves_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("fold,query_count,ari\n0,0,"));
        assert_eq!(text.lines().count(), 1 + 10 * 26);
    }

    #[test]
    fn sweep_grid_shape_and_single_point() {
        let ds = two_class_toy();
        let folds = FoldSplit::stratified(ds.labels().unwrap(), 10, 0);
        let base = EngineConfig {
            budget: 10,
            ..Default::default()
        };
        let grid = sweep(
            &ds,
            &base,
            &[0.5, 1.0],
            &[
                WarpingWindow::Fraction(0.1),
                WarpingWindow::Full,
                WarpingWindow::Fraction(0.0),
            ],
            &folds,
        )
        .unwrap();
        assert_eq!(grid.len(), 6);
        let single = evaluate(&ds, &base, &folds).unwrap().final_mean_ari;
        assert_eq!(grid[0].final_mean_ari, single);
    }

    #[test]
    fn unlabelled_data_is_rejected() {
        let ds = Dataset::new(
            "u",
            vec![
                TimeSeries::new(vec![0.0, 1.0]).unwrap(),
                TimeSeries::new(vec![1.0, 0.0]).unwrap(),
            ],
            None,
        )
        .unwrap();
        assert!(matches!(kshape_baseline(&ds, 2, 0), Err(EvalError::Unlabelled)));
    }
}
