//! Shape-based distance and k-Shape clustering.

mod kshape;
mod ncc;

pub use kshape::{
    extract_shape, kshape, kshape_series, sbd_representative, KShapeResult, ShapeCentroid, DEFAULT_MAX_ITER,
};
pub use ncc::{ncc_max, sbd, shift_zero_pad, CrossCorrelator, NccPeak};

pub(crate) use kshape::representative_among;
