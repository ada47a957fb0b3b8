use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distance::WarpingWindow;
use crate::error::EngineError;

/// How super-instances are split and represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Refiner {
    /// Spectral clustering on a global cDTW affinity matrix; medoid representatives.
    #[default]
    #[serde(rename = "dtw-spectral")]
    DtwSpectral,
    /// k-Shape on the member series; representative closest to the shape centroid.
    #[serde(rename = "kshape")]
    KShape,
}

impl fmt::Display for Refiner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Refiner::DtwSpectral => "dtw-spectral",
            Refiner::KShape => "kshape",
        })
    }
}

impl FromStr for Refiner {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dtw-spectral" | "dtw" => Ok(Refiner::DtwSpectral),
            "kshape" | "k-shape" => Ok(Refiner::KShape),
            other => Err(format!("unknown refiner {other:?}; expected dtw-spectral or kshape")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub refiner: Refiner,
    pub window: WarpingWindow,
    pub gamma: f64,
    pub budget: usize,
    pub rng_seed: u64,
    /// z-normalize series before computing DTW. The k-Shape refiner always
    /// works on normalized series.
    pub normalize: bool,
    pub kmeans_restarts: usize,
    pub kshape_max_iter: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            refiner: Refiner::DtwSpectral,
            window: WarpingWindow::Fraction(0.1),
            gamma: 0.5,
            budget: 50,
            rng_seed: 0,
            normalize: true,
            kmeans_restarts: 10,
            kshape_max_iter: crate::shape::DEFAULT_MAX_ITER,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::BadConfig(m));
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if self.budget == 0 {
            return bad("budget must be at least 1".into());
        }
        if self.window.validate().is_err() {
            return bad(format!("window must lie in [0, 1], got {}", self.window));
        }
        if self.kmeans_restarts == 0 {
            return bad("kmeans_restarts must be at least 1".into());
        }
        if self.kshape_max_iter == 0 {
            return bad("kshape_max_iter must be at least 1".into());
        }
        Ok(())
    }

    /// Whether the series handed to the refiner are z-normalized.
    pub fn normalizes(&self) -> bool {
        self.normalize || self.refiner == Refiner::KShape
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = EngineConfig::default();
        assert_eq!(c.gamma, 0.5);
        assert_eq!(c.window, WarpingWindow::Fraction(0.1));
        assert_eq!(c.budget, 50);
        c.validate().unwrap();
    }

    #[test]
    fn json_accepts_partial_configs() {
        let c: EngineConfig = serde_json::from_str(r#"{"refiner":"kshape","budget":7}"#).unwrap();
        assert_eq!(c.refiner, Refiner::KShape);
        assert_eq!(c.budget, 7);
        assert_eq!(c.gamma, 0.5);
        let w: EngineConfig = serde_json::from_str(r#"{"window":"full"}"#).unwrap();
        assert_eq!(w.window, WarpingWindow::Full);
        assert!(serde_json::from_str::<EngineConfig>(r#"{"gama":1}"#).is_err());
    }

    #[test]
    fn rejects_bad_values() {
        for c in [
            EngineConfig {
                gamma: 0.0,
                ..Default::default()
            },
            EngineConfig {
                budget: 0,
                ..Default::default()
            },
            EngineConfig {
                window: WarpingWindow::Fraction(1.5),
                ..Default::default()
            },
        ] {
            assert!(matches!(c.validate(), Err(EngineError::BadConfig(_))));
        }
    }
}
