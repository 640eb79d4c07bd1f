use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Which of the two batches an estimate was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Batch {
    Unbiased,
    Biased,
}

impl std::fmt::Display for Batch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Batch::Unbiased => f.write_str("unbiased"),
            Batch::Biased => f.write_str("biased"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid population spec: {0}")]
    InvalidSpec(String),
    #[error("no sign change found while bracketing the fixed point")]
    NoRoot,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("retention probability {value} exceeds 1 for group mask {mask:#b}")]
    ModelViolation { mask: u16, value: f64 },
    #[error("group {group} has no rows in the {batch} batch")]
    EmptyGroup { group: usize, batch: Batch },
    #[error("the {0} batch is empty")]
    EmptyBatch(Batch),
    #[error("rate {name} = {value} is degenerate (must lie strictly inside (0, 1))")]
    DegenerateRate { name: String, value: f64 },
    #[error("retention parameter for group {0} is zero; weight undefined")]
    DegenerateBeta(usize),
    #[error("epsilon {0} is outside the admissible range")]
    InvalidEpsilon(f64),
    #[error("total weight mass is zero")]
    ZeroWeightMass,
    #[error("training data contains a single class")]
    SingleClassData,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("target size {target} is not in 1..={available}")]
    TargetTooLarge { target: usize, available: usize },
    #[error("product group {mask:#b} has no positive rows")]
    EmptyCell { mask: u16 },
    #[error("product group {mask:#b} has {rows} positive rows; at least 2 needed")]
    TooFewRowsForNeighbors { mask: u16, rows: usize },
    #[error("2x2 table has a zero expected cell")]
    ZeroExpectedCell,
    #[error("unknown lemma id {0:?}")]
    UnknownLemma(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("group column {column:?} has non-binary value {value:?}")]
    NonBinaryGroupColumn { column: String, value: String },
    #[error("no rows left after dropping rows with missing values")]
    EmptyAfterCleaning,
    #[error("empty dataset")]
    EmptyData,
    #[error("seed {seed}, method {method}: {source}")]
    Run {
        seed: u64,
        method: String,
        #[source]
        source: Box<Error>,
    },
    #[error("I/O failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
}
