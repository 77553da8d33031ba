use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid operator description: {0}")]
    InvalidSpec(String),
    #[error("field matrix is not skew-symmetric (|F + F^T| = {0:e})")]
    NotSkew(f64),
    #[error("rank decision ambiguous: singular value {value:e} lies in ({lo:e}, {hi:e})")]
    RankAmbiguous { value: f64, lo: f64, hi: f64 },
    #[error("field has full rank, kernel dimension q = 0")]
    FullRank,
    #[error("canonical reduction degenerate: {0}")]
    Degenerate(String),
    #[error("kernel dimension q = {0} is not positive")]
    InvalidQ(usize),
    #[error("quadrature did not reach relative tolerance {tol:e} (last estimate {estimate:e})")]
    QuadratureDiverged { tol: f64, estimate: f64 },
    #[error("mollifier width {eps:e} below twice the grid spacing {spacing:e}")]
    EpsTooSmall { eps: f64, spacing: f64 },
    #[error("lattice count unbounded: intensity f[{index}] = {value:e} is not positive")]
    Unbounded { index: usize, value: f64 },
    #[error("insufficient data: need at least {need} points, got {got}")]
    InsufficientData { need: usize, got: usize },
    #[error("truncation unreliable: tau = {tau:e} exceeds certified range {certified:e}")]
    TruncationUnreliable { tau: f64, certified: f64 },
    #[error("basis dimension {dim} exceeds cap {cap}")]
    DimensionOverflow { dim: usize, cap: usize },
    #[error("operator not Hermitian (residual {0:e})")]
    NotHermitian(f64),
    #[error("no multi-index satisfies the degeneracy equation")]
    EmptyEigenspace,
    #[error("flux {flux} through the ({axis_a},{axis_b}) face is not an integer")]
    FluxNotQuantized { axis_a: usize, axis_b: usize, flux: f64 },
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("eigensolver did not converge after {iterations} cycles ({converged}/{wanted} pairs, worst residual {residual:e})")]
    NoConvergence { iterations: usize, converged: usize, wanted: usize, residual: f64 },
    #[error("tau = {tau:e} above certified spectrum range {certified:e}")]
    UncertifiedTau { tau: f64, certified: f64 },
    #[error("model not separable: {0}")]
    NotSeparable(String),
    #[error("unknown theorem bound '{0}'")]
    UnknownTheorem(String),
    #[error("linear program degenerate: {0}")]
    LpDegenerate(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
