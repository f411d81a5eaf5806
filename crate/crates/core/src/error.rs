use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("coincident source points: {first} and {second}")]
    CoincidentSources { first: usize, second: usize },

    #[error("source not interior: point {index} at ({x}, {y})")]
    SourceNotInterior { index: usize, x: f64, y: f64 },

    #[error("invalid bounds at index {index}: {reason}")]
    InvalidBounds { index: usize, reason: String },

    #[error("degenerate domain: {0}")]
    DegenerateDomain(String),

    #[error("point not located: ({x}, {y})")]
    PointNotLocated { x: f64, y: f64 },

    #[error("state equation may be ill-posed: u[{index}] = {value} >= 4*pi")]
    IllPosed { index: usize, value: f64 },

    #[error("state solve failed after {iterations} Newton iterations (residual {residual:e})")]
    StateSolveFailed { iterations: usize, residual: f64 },

    #[error("linear solve stagnated after {iterations} iterations (relative residual {residual:e})")]
    LinearSolveStagnated { iterations: usize, residual: f64 },

    #[error("line search failed after {rejections} consecutive rejections")]
    LineSearchFailed { rejections: usize },

    #[error("mollifier support crosses the boundary: dist(x0, boundary) = {distance} < epsilon = {epsilon}")]
    SupportCrossesBoundary { distance: f64, epsilon: f64 },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// True for failures of a numerical solver, as opposed to bad input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::StateSolveFailed { .. } | Error::LinearSolveStagnated { .. } | Error::LineSearchFailed { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
