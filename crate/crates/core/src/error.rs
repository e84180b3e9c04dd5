use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("symbol {symbol} out of range for an alphabet of {alphabet} maps")]
    SymbolOutOfRange { symbol: usize, alphabet: usize },
    #[error("point {re}+{im}i lies outside the closed unit disc")]
    OutsideDisc { re: f64, im: f64 },
    #[error("moebius map has its pole inside the disc (|d| - |c| = {gap})")]
    PoleInside { gap: f64 },
    #[error("derivative vanishes at {re}+{im}i")]
    ZeroDerivative { re: f64, im: f64 },
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("invalid probability vector: {0}")]
    InvalidProbability(String),
    #[error("{what}: {count} exceeds the cap of {cap}")]
    TooLarge {
        what: &'static str,
        count: u128,
        cap: u128,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("image point {re}+{im}i falls outside the grid hull")]
    OutsideGrid { re: f64, im: f64 },
    #[error("empty tail: need at least two iterates past n_max/2")]
    EmptyTail,
    #[error("series diverged: partial-sum norm increased for {0} consecutive terms")]
    Divergence(usize),
    #[error("fit refused: {0}")]
    FitRefused(String),
    #[error("newton iteration failed to converge at {re}+{im}i")]
    NewtonFailure { re: f64, im: f64 },
    #[error("no partner point with positive projection near center {center}")]
    NoPartner { center: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
    #[error("depth {0} is too shallow: mass still contributes at the boundary")]
    DepthExhausted(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
