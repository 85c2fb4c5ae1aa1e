use thiserror::Error;

/// Errors raised by the field calculus, flows and verification routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point {point:?} lies outside chart `{chart}`")]
    OutOfDomain { chart: String, point: Vec<f64> },

    #[error("expression undefined: {0}")]
    UndefinedExpression(String),

    #[error("parse error at column {column}: {message}")]
    Parse { column: usize, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("I + B·π is numerically singular at {point:?} (t = {t}, condition ratio {ratio:.3e})")]
    SingularGauge { t: f64, point: Vec<f64>, ratio: f64 },

    #[error("derivative is not a submersion (smallest singular value ratio {ratio:.3e})")]
    NotSubmersion { ratio: f64 },

    #[error("Dirac structure is not the graph of a bivector (cotangent ratio {ratio:.3e})")]
    NotGraph { ratio: f64 },

    #[error("not a Poisson transversal at parameter {param:?} (smallest singular value {sigma_min:.3e})")]
    NotTransversal { param: Vec<f64>, sigma_min: f64 },

    #[error("embedding is not an immersion at parameter {param:?}")]
    NotImmersion { param: Vec<f64> },

    #[error("conormal reference frame degenerates at parameter {param:?}")]
    FrameDegeneracy { param: Vec<f64> },

    #[error("flow left the chart at time {time} (state {state:?})")]
    DomainEscape { time: f64, state: Vec<f64> },

    #[error("two-form does not vanish along the zero section (residual {residual:.3e})")]
    NotVanishingOnX { residual: f64 },

    #[error("spectrum touches the branch cut (distance {distance:.3e})")]
    SpectrumOnCut { distance: f64 },

    #[error("matrix is not invertible (ratio {ratio:.3e})")]
    NotInvertible { ratio: f64 },

    #[error("numerical rank {rank} of π at the fixed point is odd")]
    RankOddity { rank: usize },

    #[error("map is not Poisson (residual {residual:.3e})")]
    NotPoissonMap { residual: f64 },

    #[error("invalid group action: {0}")]
    InvalidAction(String),

    #[error("{step}: {source}")]
    Step {
        step: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn in_step(self, step: &'static str) -> Error {
        Error::Step { step, source: Box::new(self) }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
