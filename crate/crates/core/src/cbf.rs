//! Cylinder-Bell-Funnel synthetic generator.
//!
//! Classical definition on the reference length 128: onset `a ~ U{16..32}`,
//! duration `b - a ~ U{32..96}`, amplitude `6 + eta` with `eta ~ N(0, 1)`.
//! Onset and duration are scaled by `m / 128` for other lengths.
//!
//! * cylinder: `(6 + eta) * 1[a, b](t) + eps(t)`
//! * bell: `(6 + eta) * 1[a, b](t) * (t - a) / (b - a) + eps(t)`
//! * funnel: `(6 + eta) * 1[a, b](t) * (b - t) / (b - a) + eps(t)`
//!
//! with `eps(t) ~ N(0, noise_std^2)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::DataError;
use crate::scalar::Scalar;
use crate::series::{Dataset, TimeSeries};

pub const CBF_CLASSES: [&str; 3] = ["cylinder", "bell", "funnel"];

#[derive(Debug, Clone, PartialEq)]
pub struct CbfParams {
    pub per_class_count: usize,
    pub length: usize,
    pub noise_std: f64,
    pub rng_seed: u64,
}

impl Default for CbfParams {
    fn default() -> Self {
        Self {
            per_class_count: 10,
            length: 128,
            noise_std: 1.0,
            rng_seed: 0,
        }
    }
}

impl CbfParams {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.per_class_count < 1 {
            return Err(DataError::InvalidParams("per_class_count must be >= 1".into()));
        }
        if self.length < 16 {
            return Err(DataError::InvalidParams("length must be >= 16".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(DataError::InvalidParams(
                "noise_std must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Generate `3 * per_class_count` series, classes interleaved
/// (cylinder, bell, funnel, cylinder, ...).
pub fn generate_cbf<T: Scalar>(params: &CbfParams) -> Result<Dataset<T>, DataError> {
    params.validate()?;
    let m = params.length;
    let scale = m as f64 / 128.0;
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let mut series = Vec::with_capacity(3 * params.per_class_count);
    let mut labels = Vec::with_capacity(3 * params.per_class_count);

    for _ in 0..params.per_class_count {
        for (class, name) in CBF_CLASSES.iter().enumerate() {
            let onset = rng.random_range(16..=32usize);
            let duration = rng.random_range(32..=96usize);
            let a = ((onset as f64 * scale).round() as usize).min(m - 2);
            let b = (((onset + duration) as f64 * scale).round() as usize).clamp(a + 1, m - 1);
            let eta: f64 = StandardNormal.sample(&mut rng);
            let amp = 6.0 + eta;
            let span = (b - a) as f64;
            let values = (0..m)
                .map(|t| {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    let shape = if t < a || t > b {
                        0.0
                    } else {
                        match class {
                            0 => 1.0,
                            1 => (t - a) as f64 / span,
                            _ => (b - t) as f64 / span,
                        }
                    };
                    T::lit(amp * shape + params.noise_std * noise)
                })
                .collect();
            series.push(TimeSeries::new(values)?);
            labels.push((*name).to_string());
        }
    }
    Dataset::new(format!("CBF_seed{}", params.rng_seed), series, Some(labels))
}
