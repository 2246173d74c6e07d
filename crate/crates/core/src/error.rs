use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid specification: {0}")]
    Spec(String),
    #[error("no root: {0}")]
    NoRoot(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("numeric error: {msg} (residual {residual:e})")]
    Numeric { msg: String, residual: f64 },
    #[error("window breach at t = {t}: front {front} reached the right edge {edge}; enlarge W_R (currently {w_right})")]
    WindowBreach {
        t: f64,
        front: f64,
        edge: f64,
        w_right: f64,
    },
    #[error("window error: t = {t} must exceed K_win = {k_win}")]
    Window { t: f64, k_win: f64 },
    #[error("stability error at t = {t}: clamp magnitude {clamp:e} exceeds 1e-6; reduce dt")]
    Stability { t: f64, clamp: f64 },
    #[error("offspring law error: {0}")]
    Law(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("inconsistent estimate: {0}")]
    Inconsistent(String),
    #[error("degenerate: {0}")]
    Degenerate(String),
    #[error("reliability error: {0}")]
    Reliability(String),
    #[error("counting error: run hit the population cap")]
    CapHit,
    #[error("refinement error: quadrature residual {0:e} exceeds 1%")]
    Refinement(f64),
    #[error("config error: {0}")]
    Config(String),
    #[error("cancelled")]
    Cancelled,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
