use thiserror::Error;

pub type Result<T> = std::result::Result<T, TdoaError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TdoaError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The least-squares system does not have full column rank.
    #[error("singular system (sigma_min = {sigma_min:e})")]
    SingularSystem { sigma_min: f64 },

    /// The Gauss-Newton Jacobian is rank deficient at the current iterate.
    #[error("degenerate geometry (sigma_min of Jacobian = {sigma_min:e})")]
    DegenerateGeometry { sigma_min: f64 },

    /// The estimator needs more anchors than were given.
    #[error("{what} requires ≥ {required} anchors, got {got}")]
    InsufficientAnchors {
        what: &'static str,
        required: usize,
        got: usize,
    },

    /// An iterate fell inside the guard radius of an anchor.
    #[error("position within {distance:e} m of anchor {anchor}")]
    NearAnchor { anchor: usize, distance: f64 },
}

impl TdoaError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        TdoaError::InvalidArgument(msg.into())
    }

    /// True for the errors that describe the anchor/target geometry rather
    /// than malformed input.
    pub fn is_geometric(&self) -> bool {
        !matches!(self, TdoaError::InvalidArgument(_))
    }
}
