//! Univariate time series and labelled collections of equal-length series.

use crate::error::DataError;
use crate::scalar::Scalar;

/// Standard deviations below this are treated as a constant series.
pub const ZERO_VARIANCE_EPS: f64 = 1e-12;

/// A finite, real-valued sequence of length at least 2.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries<T: Scalar> {
    values: Vec<T>,
}

impl<T: Scalar> TimeSeries<T> {
    pub fn new(values: Vec<T>) -> Result<Self, DataError> {
        if values.len() < 2 {
            return Err(DataError::TooShort { len: values.len() });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite { index: pos });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// Mean and population standard deviation.
    pub fn mean_std(&self) -> (T, T) {
        mean_std(&self.values)
    }
}

impl<T: Scalar> AsRef<[T]> for TimeSeries<T> {
    fn as_ref(&self) -> &[T] {
        &self.values
    }
}

pub(crate) fn mean_std<T: Scalar>(values: &[T]) -> (T, T) {
    let n = T::from_count(values.len());
    let mean = values.iter().copied().sum::<T>() / n;
    let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    (mean, var.sqrt())
}

/// Z-normalize a series to zero mean and unit population standard deviation.
///
/// Series whose standard deviation is below `1e-12` map to all zeros.
pub fn z_normalize<T: Scalar>(ts: &TimeSeries<T>) -> TimeSeries<T> {
    TimeSeries {
        values: z_normalize_slice(ts.values()),
    }
}

pub(crate) fn z_normalize_slice<T: Scalar>(values: &[T]) -> Vec<T> {
    let (mean, std) = mean_std(values);
    if std < T::lit(ZERO_VARIANCE_EPS) {
        return vec![T::zero(); values.len()];
    }
    values.iter().map(|&v| (v - mean) / std).collect()
}

/// Equal-length series with optional per-series class labels.
///
/// Labels are opaque strings; only equality matters downstream.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T: Scalar> {
    name: String,
    series: Vec<TimeSeries<T>>,
    labels: Option<Vec<String>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(
        name: impl Into<String>,
        series: Vec<TimeSeries<T>>,
        labels: Option<Vec<String>>,
    ) -> Result<Self, DataError> {
        if series.is_empty() {
            return Err(DataError::Empty);
        }
        let m = series[0].len();
        if let Some(idx) = series.iter().position(|s| s.len() != m) {
            return Err(DataError::LengthMismatch {
                index: idx,
                expected: m,
                found: series[idx].len(),
            });
        }
        if let Some(l) = &labels {
            if l.len() != series.len() {
                return Err(DataError::LabelCount {
                    series: series.len(),
                    labels: l.len(),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            series,
            labels,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    /// Common series length `m`.
    pub fn series_len(&self) -> usize {
        self.series[0].len()
    }

    pub fn series(&self) -> &[TimeSeries<T>] {
        &self.series
    }

    pub fn get(&self, i: usize) -> &TimeSeries<T> {
        &self.series[i]
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Dataset with every series z-normalized; labels and name are kept.
    pub fn z_normalized(&self) -> Self {
        Self {
            name: self.name.clone(),
            series: self.series.iter().map(z_normalize).collect(),
            labels: self.labels.clone(),
        }
    }

    /// Number of distinct labels, if labelled.
    pub fn class_count(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| {
            let mut uniq: Vec<&String> = l.iter().collect();
            uniq.sort();
            uniq.dedup();
            uniq.len()
        })
    }
}
