use std::sync::Arc;

use num_traits::Float;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::ShapeError;
use crate::scalar::Scalar;
use crate::series::TimeSeries;

/// Maximum of the coefficient-normalized cross-correlation and its shift.
///
/// `shift = s` means `sum_t x[t] * y[t + s]` (zero outside `0..m`) is maximal,
/// i.e. `y` is `x` delayed by `s` samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NccPeak<T> {
    pub value: T,
    pub shift: isize,
}

/// FFT plans for correlating series of one fixed length. The transform size
/// is the next power of two at or above `2m - 1`.
pub struct CrossCorrelator<T: Scalar> {
    m: usize,
    size: usize,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Scalar> std::fmt::Debug for CrossCorrelator<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CrossCorrelator")
            .field("m", &self.m)
            .field("fft_len", &self.size)
            .finish()
    }
}

impl<T: Scalar> CrossCorrelator<T> {
    pub fn new(m: usize) -> Self {
        let size = (2 * m).saturating_sub(1).max(1).next_power_of_two();
        let mut planner = FftPlanner::new();
        Self {
            m,
            size,
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
        }
    }

    pub fn series_len(&self) -> usize {
        self.m
    }

    pub fn fft_len(&self) -> usize {
        self.size
    }

    /// Raw cross-correlation `cc[s] = sum_t x[t] * y[t + s]` for
    /// `s in -(m-1)..=(m-1)`, returned in that order.
    pub fn cross_correlation(&self, x: &[T], y: &[T]) -> Vec<T> {
        assert!(x.len() == self.m && y.len() == self.m, "length mismatch");
        let pad = |v: &[T]| {
            let mut buf = vec![Complex::new(T::zero(), T::zero()); self.size];
            for (b, &x) in buf.iter_mut().zip(v) {
                b.re = x;
            }
            buf
        };
        let mut fx = pad(x);
        let mut fy = pad(y);
        self.forward.process(&mut fx);
        self.forward.process(&mut fy);
        let mut prod: Vec<Complex<T>> = fx.iter().zip(&fy).map(|(a, b)| a.conj() * b).collect();
        self.inverse.process(&mut prod);
        let scale = T::from_count(self.size);
        let m = self.m as isize;
        (-(m - 1)..m)
            .map(|s| {
                let idx = if s < 0 { self.size as isize + s } else { s } as usize;
                prod[idx].re / scale
            })
            .collect()
    }

    pub fn ncc_max(&self, x: &[T], y: &[T]) -> Result<NccPeak<T>, ShapeError> {
        let den = norm(x) * norm(y);
        if den <= T::zero() {
            return Err(ShapeError::Degenerate);
        }
        let cc = self.cross_correlation(x, y);
        let m = self.m as isize;
        let (idx, best) = cc.iter().enumerate().fold(
            (0usize, T::neg_infinity()),
            |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
        );
        Ok(NccPeak {
            value: (best / den).min(T::one()).max(-T::one()),
            shift: idx as isize - (m - 1),
        })
    }

    pub fn sbd(&self, x: &[T], y: &[T]) -> Result<T, ShapeError> {
        Ok(T::one() - self.ncc_max(x, y)?.value)
    }

    /// SBD that treats a zero-norm argument as uncorrelated (distance 1).
    pub(crate) fn sbd_lenient(&self, x: &[T], y: &[T]) -> T {
        self.sbd(x, y).unwrap_or_else(|_| T::one())
    }
}

pub(crate) fn norm<T: Scalar>(v: &[T]) -> T {
    Float::sqrt(v.iter().map(|&x| x * x).sum::<T>())
}

/// `out[t] = y[t + shift]`, zero outside the valid range.
pub fn shift_zero_pad<T: Scalar>(y: &[T], shift: isize) -> Vec<T> {
    let m = y.len() as isize;
    (0..m)
        .map(|t| {
            let src = t + shift;
            if (0..m).contains(&src) {
                y[src as usize]
            } else {
                T::zero()
            }
        })
        .collect()
}

fn check_lengths<T: Scalar>(x: &TimeSeries<T>, y: &TimeSeries<T>) -> Result<(), ShapeError> {
    if x.len() != y.len() {
        return Err(ShapeError::UnequalLengths {
            left: x.len(),
            right: y.len(),
        });
    }
    Ok(())
}

/// Maximum normalized cross-correlation over all linear shifts.
pub fn ncc_max<T: Scalar>(x: &TimeSeries<T>, y: &TimeSeries<T>) -> Result<NccPeak<T>, ShapeError> {
    check_lengths(x, y)?;
    CrossCorrelator::new(x.len()).ncc_max(x.values(), y.values())
}

/// Shape-based distance `1 - max NCC`, in `[0, 2]`.
pub fn sbd<T: Scalar>(x: &TimeSeries<T>, y: &TimeSeries<T>) -> Result<T, ShapeError> {
    Ok(T::one() - ncc_max(x, y)?.value)
}
