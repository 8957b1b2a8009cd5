use thiserror::Error;

/// Errors raised across the library. Variants map one-to-one onto the
/// failure modes of the individual operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("density returned a non-finite value at x = {x}")]
    NonFiniteDensity { x: f64 },
    #[error("density has zero total mass on the grid")]
    ZeroMass,
    #[error("grid [{lo}, {hi}] covers less than mean +/- 4 sigma")]
    DomainTooNarrow { lo: f64, hi: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("position {position} is not on the lattice with spacing {spacing}")]
    OffLattice { position: f64, spacing: f64 },
    #[error("affine scale must be non-zero")]
    ZeroScale,
    #[error("grid spacings differ: {left} vs {right}")]
    SpacingMismatch { left: f64, right: f64 },
    #[error("measure is degenerate (variance {variance:e})")]
    DegenerateMeasure { variance: f64 },
    #[error("entropy argument is negative ({value:e}) at index {index}")]
    NegativeArgument { index: usize, value: f64 },
    #[error("grid has a single point")]
    SingletonGrid,
    #[error("grid function has length {got}, measure has {expected} points")]
    LengthMismatch { expected: usize, got: usize },
    #[error("test function has vanishing Dirichlet energy")]
    DegenerateTestFunction,
    #[error("function is not 1-Lipschitz (slope {slope})")]
    NotLipschitz { slope: f64 },
    #[error("measure has disconnected support")]
    DisconnectedSupport,
    #[error("cover coefficients sum to 1; the bound is trivial")]
    TrivialCover,
    #[error("coefficients are infeasible: {0}")]
    InfeasibleInput(String),
    #[error("cover is infeasible: element {element} has slack {slack:e}")]
    InfeasibleCover { element: usize, slack: f64 },
    #[error("linear program is infeasible: element {element} is in no admissible subset")]
    Infeasible { element: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("subset must be non-empty")]
    EmptySubset,
    #[error("c coefficients are infeasible: element {element} has load {load}")]
    InfeasibleC { element: usize, load: f64 },
    #[error("divergence is infinite")]
    InfiniteDivergence,
    #[error("conditioning value has zero probability")]
    ZeroConditional,
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
