use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at offset {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("unknown identifier `{name}` at offset {pos}")]
    UnknownIdentifier { name: String, pos: usize },

    #[error("evaluation error in `{expr}`: {msg}")]
    Eval { expr: String, msg: String },

    #[error("singular matrix at point ({0}, {1}, {2}, {3})", point[0], point[1], point[2], point[3])]
    SingularMatrix { point: [f64; 4] },

    #[error("frame mismatch: {0}")]
    FrameMismatch(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("flow left the sample box at ({0}, {1}, {2}, {3})", point[0], point[1], point[2], point[3])]
    FlowLeftBox { point: [f64; 4] },

    #[error("variant mismatch: {0}")]
    VariantMismatch(String),

    #[error("unknown suite `{0}`")]
    UnknownSuite(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("scenario parse error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
