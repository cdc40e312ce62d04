use thiserror::Error;

/// Errors raised anywhere in the simulator.
///
/// Variants are split into validation problems (bad input, malformed files,
/// out-of-range parameters) and numerical failures (integration breakdown,
/// singular matrices). [`Error::is_numerical`] drives the CLI exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("basis of {requested} states exceeds the configured cap of {cap}")]
    BasisTooLarge { requested: u128, cap: usize },

    #[error("mode {mode} out of range for a {num_modes}-mode basis")]
    ModeOutOfRange { mode: usize, num_modes: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("projection produced an empty subspace")]
    EmptySubspace,

    #[error("operator is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("initial state is not normalized (norm {norm:.12})")]
    NotNormalized { norm: f64 },

    #[error("unknown site label {0}")]
    UnknownSite(usize),

    #[error("malformed excitation tuple: {0}")]
    MalformedTuple(String),

    #[error("edges do not form a closed cycle: {0}")]
    NotACycle(String),

    #[error("edge {from}-{to} is mediated by qutrit pair ({a}, {b}) which is missing from the flux mapping")]
    UnmappedEdge {
        from: usize,
        to: usize,
        a: usize,
        b: usize,
    },

    #[error("unknown configuration `{0}`")]
    UnknownConfiguration(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("no spectral peak above the noise floor")]
    NoPeak,

    #[error("readout matrix is not column-stochastic: {0}")]
    NotStochastic(String),

    #[error("readout matrix is near-singular (condition number {condition:.3e} exceeds {bound:.1e})")]
    IllConditioned { condition: f64, bound: f64 },

    #[error("step size underflow at t = {time:.9} us")]
    StepSizeUnderflow { time: f64 },

    #[error("norm drift {drift:.3e} exceeds tolerance at t = {time:.9} us")]
    NormDrift { drift: f64, time: f64 },

    #[error("integration failed: {0}")]
    Integration(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("override `{path}`: {reason}")]
    BadOverride { path: String, reason: String },

    #[error("scenario `{scenario}`: {source}")]
    Scenario {
        scenario: String,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_scenario(self, scenario: &str) -> Self {
        match self {
            already @ Error::Scenario { .. } => already,
            other => Error::Scenario {
                scenario: scenario.to_string(),
                source: Box::new(other),
            },
        }
    }

    /// True for failures of the numerics rather than of the input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::StepSizeUnderflow { .. }
            | Error::NormDrift { .. }
            | Error::Integration(_)
            | Error::IllConditioned { .. }
            | Error::NoPeak => true,
            Error::Scenario { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
