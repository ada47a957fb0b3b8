use std::collections::HashMap;
use std::sync::Arc;

use crate::distance::{distance_matrix, to_affinity, AffinityMatrix, DistanceMatrix};
use crate::error::{DistanceError, EngineError};
use crate::scalar::{total_cmp, Scalar};
use crate::series::Dataset;
use crate::shape::{kshape_series, representative_among, CrossCorrelator};
use crate::spectral::{spectral_cluster, SpectralParams};

use super::config::{EngineConfig, Refiner};

const EIG_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
enum Metric<T: Scalar> {
    Dtw {
        dm: Arc<DistanceMatrix<T>>,
        aff: Arc<AffinityMatrix<T>>,
    },
    Shape {
        corr: Arc<CrossCorrelator<T>>,
    },
}

/// A dataset made ready for one refiner: normalized as configured, with the
/// global DTW and affinity matrices when the refiner needs them.
///
/// Cheap to clone and safe to share across concurrent runs.
#[derive(Debug, Clone)]
pub struct Prepared<T: Scalar> {
    raw: Arc<Dataset<T>>,
    data: Arc<Dataset<T>>,
    config: EngineConfig,
    metric: Metric<T>,
}

impl<T: Scalar> Prepared<T> {
    pub fn new(ds: &Dataset<T>, config: &EngineConfig) -> Result<Self, EngineError> {
        Self::from_raw(Arc::new(ds.clone()), config)
    }

    fn from_raw(raw: Arc<Dataset<T>>, config: &EngineConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let data = Self::working_copy(&raw, config);
        let metric = match config.refiner {
            Refiner::DtwSpectral => {
                let dm = Arc::new(Self::dtw_matrix(&data, config)?);
                let aff = Arc::new(to_affinity(&dm, T::lit(config.gamma))?);
                Metric::Dtw { dm, aff }
            }
            Refiner::KShape => Metric::Shape {
                corr: Arc::new(CrossCorrelator::new(data.series_len())),
            },
        };
        Ok(Self {
            raw,
            data,
            config: config.clone(),
            metric,
        })
    }

    fn working_copy(raw: &Arc<Dataset<T>>, config: &EngineConfig) -> Arc<Dataset<T>> {
        if config.normalizes() {
            Arc::new(raw.z_normalized())
        } else {
            Arc::clone(raw)
        }
    }

    /// Like [`Prepared::new`] with a DTW matrix computed elsewhere, e.g. read
    /// from disk. The matrix must match the dataset size.
    pub fn with_distance_matrix(
        ds: &Dataset<T>,
        config: &EngineConfig,
        dm: DistanceMatrix<T>,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        if config.refiner != Refiner::DtwSpectral {
            return Err(EngineError::BadConfig(
                "a distance matrix only applies to the dtw-spectral refiner".into(),
            ));
        }
        if dm.n() != ds.len() {
            return Err(EngineError::BadConfig(format!(
                "distance matrix covers {} instances, dataset has {}",
                dm.n(),
                ds.len()
            )));
        }
        let raw = Arc::new(ds.clone());
        let data = Self::working_copy(&raw, config);
        let aff = Arc::new(to_affinity(&dm, T::lit(config.gamma))?);
        Ok(Self {
            raw,
            data,
            config: config.clone(),
            metric: Metric::Dtw { dm: Arc::new(dm), aff },
        })
    }

    fn dtw_matrix(data: &Dataset<T>, config: &EngineConfig) -> Result<DistanceMatrix<T>, DistanceError> {
        if data.len() < 2 {
            // A single instance has nothing to compare against.
            return DistanceMatrix::from_upper(data.len(), &[]);
        }
        distance_matrix(data, config.window)
    }

    /// Same data under a new configuration, reusing whatever matrices still
    /// apply (a gamma change only recomputes the affinities).
    pub fn reconfigure(&self, config: &EngineConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let same_series = config.normalizes() == self.config.normalizes();
        let metric = match (&self.metric, config.refiner) {
            (Metric::Dtw { dm, aff }, Refiner::DtwSpectral) if same_series && config.window == self.config.window => {
                let aff = if config.gamma == self.config.gamma {
                    Arc::clone(aff)
                } else {
                    Arc::new(to_affinity(dm, T::lit(config.gamma))?)
                };
                Metric::Dtw {
                    dm: Arc::clone(dm),
                    aff,
                }
            }
            (Metric::Shape { corr }, Refiner::KShape) => Metric::Shape { corr: Arc::clone(corr) },
            _ => return Self::from_raw(Arc::clone(&self.raw), config),
        };
        Ok(Self {
            raw: Arc::clone(&self.raw),
            data: Arc::clone(&self.data),
            config: config.clone(),
            metric,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    /// The dataset as handed in, before normalization.
    pub fn raw_dataset(&self) -> &Dataset<T> {
        &self.raw
    }

    /// The series the engine works on (normalized if configured).
    pub fn dataset(&self) -> &Dataset<T> {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn distance_matrix(&self) -> Option<&DistanceMatrix<T>> {
        match &self.metric {
            Metric::Dtw { dm, .. } => Some(dm),
            Metric::Shape { .. } => None,
        }
    }

    /// Partition `members` into at most `k` non-empty groups (exactly `k` for
    /// both refiners in practice). Groups are listed by first appearance.
    pub fn split(&self, members: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, EngineError> {
        let labels = match &self.metric {
            Metric::Dtw { aff, .. } => {
                let params = SpectralParams {
                    k,
                    eig_tolerance: EIG_TOLERANCE,
                    kmeans_restarts: self.config.kmeans_restarts,
                    rng_seed: seed,
                };
                spectral_cluster(aff, members, &params)?
            }
            Metric::Shape { .. } => {
                let series: Vec<&[T]> = members.iter().map(|&i| self.data.get(i).values()).collect();
                kshape_series(&series, k, seed, self.config.kshape_max_iter)?.assignment
            }
        };
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
        let mut order = Vec::new();
        for (&idx, &label) in members.iter().zip(&labels) {
            if groups[label].is_empty() {
                order.push(label);
            }
            groups[label].push(idx);
        }
        Ok(order.into_iter().map(|l| std::mem::take(&mut groups[l])).collect())
    }

    /// Representative of a member set: DTW medoid, or the member closest to
    /// the extracted shape. Ties go to the lowest index.
    pub fn representative(&self, members: &[usize]) -> usize {
        assert!(!members.is_empty(), "representative of an empty set");
        match &self.metric {
            Metric::Dtw { dm, .. } => medoid(dm, members),
            Metric::Shape { corr } => {
                let mut sorted = members.to_vec();
                sorted.sort_unstable();
                let series: Vec<&[T]> = sorted.iter().map(|&i| self.data.get(i).values()).collect();
                representative_among(corr, &sorted, &series)
            }
        }
    }

    /// Active distance between two instances: cDTW or SBD.
    pub fn distance(&self, i: usize, j: usize) -> T {
        match &self.metric {
            Metric::Dtw { dm, .. } => dm.get(i, j),
            Metric::Shape { corr } => corr.sbd_lenient(self.data.get(i).values(), self.data.get(j).values()),
        }
    }
}

/// Member minimizing the summed distance to the other members; lowest index on ties.
pub(crate) fn medoid<T: Scalar>(dm: &DistanceMatrix<T>, members: &[usize]) -> usize {
    members
        .iter()
        .map(|&i| (i, members.iter().map(|&j| dm.get(i, j)).sum::<T>()))
        .min_by(|a, b| total_cmp(a.1, b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .expect("non-empty members")
}

/// Per-run memo of pairwise distances; SBD costs an FFT per call.
#[derive(Debug, Default)]
pub(crate) struct DistanceCache<T> {
    memo: HashMap<(usize, usize), T>,
}

impl<T: Scalar> DistanceCache<T> {
    pub(crate) fn get(&mut self, p: &Prepared<T>, i: usize, j: usize) -> T {
        if matches!(p.metric, Metric::Dtw { .. }) {
            return p.distance(i, j);
        }
        *self
            .memo
            .entry((i.min(j), i.max(j)))
            .or_insert_with(|| p.distance(i, j))
    }
}
