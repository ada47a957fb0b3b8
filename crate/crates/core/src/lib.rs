//! Active semi-supervised clustering of time series.
//!
//! The engine grows a clustering by splitting super-instances (groups of
//! series assumed to belong together) and asking an oracle whether pairs of
//! representative series belong to the same cluster. Two refiners are
//! provided: spectral clustering on a constrained-DTW affinity matrix, and
//! k-Shape with the shape-based distance.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*F64` and
//! `*F32` aliases name the common instantiations.

// Matrix kernels read more clearly with explicit index loops.
#![allow(clippy::needless_range_loop)]

pub mod cbf;
pub mod constraints;
pub mod distance;
pub mod engine;
pub mod error;
pub mod eval;
pub mod oracle;
pub mod scalar;
pub mod series;
pub mod shape;
pub mod spectral;
pub mod ucr;

pub use cbf::{generate_cbf, CbfParams};
pub use constraints::{Constraint, ConstraintKind, ConstraintStore, Origin, Relation};
pub use distance::{cdtw, distance_matrix, to_affinity, AffinityMatrix, DistanceMatrix, WarpingWindow};
pub use engine::{
    resume, run, run_observed, Checkpoint, Clustering, EngineConfig, EngineState, Observer, Prepared, Refiner,
    RunOutcome, RunResult, SessionFile,
};
pub use error::{
    ConstraintError, DataError, DistanceError, EngineError, EvalError, OracleError, ShapeError, SpectralError,
};
pub use eval::{
    ari, evaluate, evaluate_prepared, kshape_baseline, sweep, EvalResult, EvalSummary, FoldSplit, SweepPoint,
};
pub use oracle::{
    read_query_log_csv, write_query_log_csv, LabelOracle, Mailbox, MailboxError, MailboxOracle, Oracle, PendingQuery,
    QueryRecord, ReplayOracle, ReplayThen,
};
pub use scalar::Scalar;
pub use series::{z_normalize, Dataset, TimeSeries};
pub use shape::{kshape, ncc_max, sbd, sbd_representative, KShapeResult};
pub use spectral::{spectral_cluster, SpectralParams};
pub use ucr::{load_ucr, parse_ucr, write_ucr, Delimiter};

pub type TimeSeriesF64 = TimeSeries<f64>;
pub type TimeSeriesF32 = TimeSeries<f32>;
pub type DatasetF64 = Dataset<f64>;
pub type DatasetF32 = Dataset<f32>;
pub type DistanceMatrixF64 = DistanceMatrix<f64>;
pub type DistanceMatrixF32 = DistanceMatrix<f32>;
pub type AffinityMatrixF64 = AffinityMatrix<f64>;
pub type AffinityMatrixF32 = AffinityMatrix<f32>;
pub type PreparedF64 = Prepared<f64>;
pub type PreparedF32 = Prepared<f32>;
