use thiserror::Error;

/// Errors surfaced by the geometry and bundle operations.
///
/// Solver divergence is deliberately *not* an error: a blow-up of the metric
/// flow carries information (a destabilizing subbundle) and is reported in
/// the [`crate::einstein::EinsteinReport`] instead.
#[derive(Debug, Error)]
pub enum Error {
    #[error("fields live on different lattice tori (fail-fast, no resampling)")]
    BaseMismatch,

    #[error("fiber ranks differ: {0} vs {1}")]
    RankMismatch(usize, usize),

    #[error("operation needs complex dimension {expected}, got {got}")]
    DimensionUnsupported { expected: usize, got: usize },

    #[error("unsupported form degree for this operation: ({0},{1})")]
    DegreeUnsupported(u8, u8),

    #[error("expected a scalar (rank-1) form")]
    NonScalarFiber,

    #[error("matrix field is not positive definite at grid point {0}")]
    NotPositiveDefinite(usize),

    #[error("base metric is not Gauduchon (residual {residual:.3e} > {tol:.3e}); rescale with gauduchon_factor first")]
    NotGauduchon { residual: f64, tol: f64 },

    #[error("input violates a residual gate: {what} = {value:.3e} exceeds {tol:.3e}")]
    ResidualGate {
        what: &'static str,
        value: f64,
        tol: f64,
    },

    #[error("iterative solver failed to converge: {0}")]
    NonConvergence(String),

    #[error("operation requires constant-coefficient mode")]
    ConstantModeRequired,

    #[error("operation is restricted to line bundles (rank 1), got rank {0}")]
    LineBundleOnly(usize),

    #[error("rank {0} exceeds the exhaustive-enumeration cap of {1}")]
    RankCap(usize, usize),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),

    #[error("header parse failure: {0}")]
    Header(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
