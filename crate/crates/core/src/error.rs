use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is singular")]
    Singular,

    #[error("|det M| = {det} is not expanding enough to carry digits")]
    NotExpanding { det: i64 },

    #[error("operator {label}: digits are not a complete residue system modulo the dilation")]
    InvalidDigitSet { label: String },

    #[error("dilations are not jointly expanding: the inverse product over {witness:?} has spectral radius >= 1")]
    NotJointlyExpanding { witness: Vec<usize> },

    #[error("a scheme needs at least one operator")]
    EmptyScheme,

    #[error("integer overflow in lattice arithmetic")]
    Overflow,

    #[error("invariant set iteration did not reach a fixed point within {rounds} rounds")]
    IterationCap { rounds: usize },

    #[error("Assumption N fails for {labels:?} (||M^-1||_2 >= 1); analyse a power of the scheme set first")]
    AssumptionN { labels: Vec<String> },

    #[error("l(Omega) is not invariant: {count} violating stencil entries")]
    NotInvariant { count: usize },

    #[error("lattice graph on Omega has {components} components; V and its difference subspace differ")]
    Disconnected { components: usize },

    #[error("{count} composed operators exceed the cap of {cap}")]
    BlowUp { count: usize, cap: usize },

    #[error("non-constant background: the mask violates the sum rules, so S maps constants to non-constants")]
    Background,

    #[error("basis does not span a subspace invariant under {label}")]
    NotInSubspace { label: String },

    #[error("matrix family is empty")]
    EmptyFamily,

    #[error("invalid word: {0}")]
    Word(String),

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
