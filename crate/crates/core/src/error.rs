use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid medium: {0}")]
    InvalidMedium(String),

    #[error("resonant frequency vector: (alpha, 1) . {nu:?} = {residual:e}")]
    Resonant { nu: Vec<i64>, residual: f64 },

    #[error("environment belongs to medium {found}, expected {expected}")]
    MediumMismatch { expected: String, found: String },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },

    #[error("numeric conjugate attained on the momentum grid boundary (radius {radius}); enlarge the radius")]
    ConjugateBoundary { radius: f64 },

    #[error("invalid lattice: {0}")]
    Lattice(String),

    #[error("target outside the propagation cone: displacement {distance} in time {time} needs speed cap at least {required}")]
    ConeViolation {
        distance: f64,
        time: f64,
        required: f64,
    },

    #[error("computation reached the domain boundary; domain radius must be at least {required}")]
    BoundaryContact { required: f64 },

    #[error("time {time} is not a multiple of the time step {dt}")]
    TimeAlignment { time: f64, dt: f64 },

    #[error("effective table: {0}")]
    Table(String),

    #[error("Legendre transform argmax on the direction grid boundary at momentum {momentum:?}; widen the direction grid")]
    WidenDirectionGrid { momentum: Vec<f64> },

    #[error("Hopf-Lax search needs directions beyond the table (|q| = {needed}); enlarge the table or the search radius")]
    EnlargeRadius { needed: f64 },

    #[error("initial datum fails its equicontinuity audit: {0}")]
    Datum(String),

    #[error("minimizer at distance {distance} exceeds radius {radius} at t = {time}")]
    MinimizerRadius {
        distance: f64,
        radius: f64,
        time: f64,
    },

    #[error("lattice coverage: {0}")]
    Coverage(String),

    #[error("metric family: {0}")]
    Metric(String),

    #[error("negative effective Lagrangian {value} at direction {direction:?}")]
    NegativeLagrangian { value: f64, direction: Vec<f64> },

    #[error("shortest-path graph is disconnected between the endpoints")]
    Disconnected,

    #[error("config: {0}")]
    Config(String),

    #[error("cache file: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
