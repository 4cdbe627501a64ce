use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Operand shapes disagree. Shapes are rendered as `RxC` or `N`.
    #[error("shape mismatch in {op}: {left} vs {right}")]
    Shape {
        op: &'static str,
        left: String,
        right: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A value that must be finite was NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("duplicate id: {0}")]
    DuplicateId(String),

    #[error("empty input: {0}")]
    Empty(&'static str),
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: impl ToShape, right: impl ToShape) -> Self {
        Error::Shape {
            op,
            left: left.to_shape(),
            right: right.to_shape(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub(crate) trait ToShape {
    fn to_shape(&self) -> String;
}

impl ToShape for usize {
    fn to_shape(&self) -> String {
        alloc::format!("{self}")
    }
}

impl ToShape for (usize, usize) {
    fn to_shape(&self) -> String {
        alloc::format!("{}x{}", self.0, self.1)
    }
}
