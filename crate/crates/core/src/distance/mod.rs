//! Constrained dynamic time warping and pairwise distance structures.

mod io;
mod matrix;

pub use io::{read_binary, read_csv, write_binary, write_csv, MATRIX_MAGIC};
pub use matrix::{distance_matrix, pairwise_matrix, to_affinity, AffinityMatrix, DistanceMatrix};

use std::fmt;
use std::str::FromStr;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::DistanceError;
use crate::scalar::Scalar;
use crate::series::TimeSeries;

/// Sakoe-Chiba band width, either a fraction of the series length or unconstrained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarpingWindow {
    Fraction(f64),
    Full,
}

impl WarpingWindow {
    pub fn fraction(w: f64) -> Result<Self, DistanceError> {
        if !(0.0..=1.0).contains(&w) {
            return Err(DistanceError::BadWindow(w));
        }
        Ok(WarpingWindow::Fraction(w))
    }

    pub fn validate(&self) -> Result<(), DistanceError> {
        match *self {
            WarpingWindow::Fraction(w) if !(0.0..=1.0).contains(&w) => Err(DistanceError::BadWindow(w)),
            _ => Ok(()),
        }
    }

    /// Band radius in samples: `ceil(w * m)`, at least 1 so the diagonal stays feasible.
    pub fn radius(&self, m: usize) -> usize {
        match *self {
            WarpingWindow::Full => m,
            WarpingWindow::Fraction(w) => ((w * m as f64).ceil() as usize).clamp(1, m.max(1)),
        }
    }
}

impl Default for WarpingWindow {
    fn default() -> Self {
        WarpingWindow::Fraction(0.1)
    }
}

impl fmt::Display for WarpingWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WarpingWindow::Full => f.write_str("full"),
            WarpingWindow::Fraction(w) => write!(f, "{w}"),
        }
    }
}

impl FromStr for WarpingWindow {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("full") {
            return Ok(WarpingWindow::Full);
        }
        let w: f64 = s
            .parse()
            .map_err(|_| format!("window must be a fraction in [0, 1] or `full`, got {s:?}"))?;
        WarpingWindow::fraction(w).map_err(|e| e.to_string())
    }
}

/// cDTW distance: square root of the minimal accumulated squared difference
/// over monotone warping paths with `|i - j| <= r`.
pub fn cdtw<T: Scalar>(x: &TimeSeries<T>, y: &TimeSeries<T>, window: WarpingWindow) -> Result<T, DistanceError> {
    if x.len() != y.len() {
        return Err(DistanceError::UnequalLengths {
            left: x.len(),
            right: y.len(),
        });
    }
    window.validate()?;
    Ok(cdtw_slices(x.values(), y.values(), window.radius(x.len())))
}

/// Banded DP over two rolling rows; `O(m * r)` time. Slices must have equal length.
pub(crate) fn cdtw_slices<T: Scalar>(x: &[T], y: &[T], r: usize) -> T {
    let m = x.len();
    let inf = T::infinity();
    let mut prev = vec![inf; m + 1];
    let mut curr = vec![inf; m + 1];
    prev[0] = T::zero();

    for i in 1..=m {
        let lo = i.saturating_sub(r).max(1);
        let hi = (i + r).min(m);
        curr[lo - 1] = inf;
        let xi = x[i - 1];
        for j in lo..=hi {
            let d = xi - y[j - 1];
            let best = prev[j - 1].min(prev[j]).min(curr[j - 1]);
            curr[j] = d * d + best;
        }
        if hi < m {
            curr[hi + 1] = inf;
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    Float::sqrt(prev[m])
}
