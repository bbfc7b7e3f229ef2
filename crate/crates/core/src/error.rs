use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("design is rank deficient; collinear columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("time-trend columns are collinear with the design: {}", columns.join(", "))]
    CollinearTrend { columns: Vec<String> },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid design matrix: {0}")]
    InvalidDesign(String),

    #[error("logistic fit diverged (separation): {0}")]
    Separation(String),

    #[error("binary outcome contains a single class")]
    AllSameClass,

    #[error("outcome at row {row} is {value}, expected 0 or 1")]
    NonBinaryOutcome { row: usize, value: f64 },

    #[error("no records in the {0} cell")]
    EmptyCell(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("{failed} of {total} permutation replicates failed to fit")]
    PermutationDegenerate { failed: usize, total: usize },

    #[error("report has no rows for method {method}, l = {l}, rho = {rho}")]
    SliceEmpty { method: String, l: f64, rho: f64 },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: bad arm label `{value}` (expected I/R or 1/0)")]
    BadArmLabel { row: usize, value: String },

    #[error("row {row}: column `{column}` is not numeric: `{value}`")]
    NonNumeric { row: usize, column: String, value: String },

    #[error("group `{0}` appears in both arms")]
    InconsistentArm(String),

    #[error("non-finite value in `{0}`")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
