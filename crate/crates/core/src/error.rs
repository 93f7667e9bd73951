//! Error type shared across the pipeline modules.

use alloc::string::String;
use core::fmt;

/// Errors raised by pipeline operations.
///
/// Variant names follow the per-operation error contracts so callers can
/// match on the failure class without parsing messages.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    // graph
    MissingBoundary { region: String },
    DegenerateGeometry { region: String },
    KTooLarge { k: usize, n: usize },
    DuplicateCentroid { a: String, b: String },
    EmptyTestSet,
    GraphTooSmall { n: usize, needed: usize },
    UnknownGroup { group: String },
    // features
    MissingColumn { column: String },
    NonNumericCell { row: usize, column: String },
    RegionIdMismatch { id: String },
    TooFewRows { rows: usize },
    AlreadyStandardized,
    // encodings
    DimTooLarge { requested: usize, available: usize },
    MissingRegion { id: String },
    RaggedRows { row: usize },
    ShapeMismatch { expected: String, got: String },
    // nn / cv
    EmptyMask,
    EmptyTrainMask,
    NoRecordedForward,
    // baselines / explain
    RankDeficient,
    NonConvergence,
    DegenerateData,
    UntrainedModel,
    // generic numeric failure
    Numeric { message: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::MissingBoundary { region } => write!(f, "region {region} has no boundary polygon"),
            Error::DegenerateGeometry { region } => {
                write!(f, "region {region} has a degenerate boundary (<3 distinct vertices)")
            }
            Error::KTooLarge { k, n } => write!(f, "k={k} must be less than node count {n}"),
            Error::DuplicateCentroid { a, b } => write!(f, "regions {a} and {b} share an identical centroid"),
            Error::EmptyTestSet => write!(f, "test node set is empty"),
            Error::GraphTooSmall { n, needed } => write!(f, "graph has {n} nodes but {needed} are required"),
            Error::UnknownGroup { group } => write!(f, "no region carries group label {group:?}"),
            Error::MissingColumn { column } => write!(f, "column {column:?} not found in header"),
            Error::NonNumericCell { row, column } => {
                write!(f, "non-numeric cell at row {row}, column {column:?}")
            }
            Error::RegionIdMismatch { id } => write!(f, "region id {id:?} does not match the graph"),
            Error::TooFewRows { rows } => write!(f, "operation needs at least 2 rows, got {rows}"),
            Error::AlreadyStandardized => write!(f, "feature table is already standardized"),
            Error::DimTooLarge { requested, available } => {
                write!(f, "requested dimension {requested} but only {available} are available")
            }
            Error::MissingRegion { id } => write!(f, "no embedding row for region id {id:?}"),
            Error::RaggedRows { row } => write!(f, "row {row} has a different width than the first row"),
            Error::ShapeMismatch { expected, got } => {
                write!(f, "shape mismatch: expected {expected}, got {got}")
            }
            Error::EmptyMask => write!(f, "mask selects no nodes"),
            Error::EmptyTrainMask => write!(f, "training mask selects no nodes"),
            Error::NoRecordedForward => write!(f, "backward called without a recorded forward pass"),
            Error::RankDeficient => write!(f, "design matrix is rank deficient"),
            Error::NonConvergence => write!(f, "likelihood search failed to converge"),
            Error::DegenerateData => write!(f, "data has no variance (all rows identical)"),
            Error::UntrainedModel => write!(f, "model has not been trained"),
            Error::Numeric { message } => write!(f, "numeric failure: {message}"),
        }
    }
}

#[cfg(test)]
impl std::error::Error for Error {}

impl Error {
    /// Stable machine-readable name, used by the CLI diagnostic stream.
    pub fn name(&self) -> &'static str {
        match self {
            Error::MissingBoundary { .. } => "MissingBoundary",
            Error::DegenerateGeometry { .. } => "DegenerateGeometry",
            Error::KTooLarge { .. } => "KTooLarge",
            Error::DuplicateCentroid { .. } => "DuplicateCentroid",
            Error::EmptyTestSet => "EmptyTestSet",
            Error::GraphTooSmall { .. } => "GraphTooSmall",
            Error::UnknownGroup { .. } => "UnknownGroup",
            Error::MissingColumn { .. } => "MissingColumn",
            Error::NonNumericCell { .. } => "NonNumericCell",
            Error::RegionIdMismatch { .. } => "RegionIdMismatch",
            Error::TooFewRows { .. } => "TooFewRows",
            Error::AlreadyStandardized => "AlreadyStandardized",
            Error::DimTooLarge { .. } => "DimTooLarge",
            Error::MissingRegion { .. } => "MissingRegion",
            Error::RaggedRows { .. } => "RaggedRows",
            Error::ShapeMismatch { .. } => "ShapeMismatch",
            Error::EmptyMask => "EmptyMask",
            Error::EmptyTrainMask => "EmptyTrainMask",
            Error::NoRecordedForward => "NoRecordedForward",
            Error::RankDeficient => "RankDeficient",
            Error::NonConvergence => "NonConvergence",
            Error::DegenerateData => "DegenerateData",
            Error::UntrainedModel => "UntrainedModel",
            Error::Numeric { .. } => "Numeric",
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
