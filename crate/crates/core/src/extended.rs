use std::fmt;

/// A non-negative constant that may be infinite, e.g. the log-Sobolev
/// constant of a measure with disconnected support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extended {
    Finite(f64),
    Unbounded,
}

impl Extended {
    pub fn finite(self) -> Option<f64> {
        match self {
            Extended::Finite(v) => Some(v),
            Extended::Unbounded => None,
        }
    }

    pub fn is_unbounded(self) -> bool {
        matches!(self, Extended::Unbounded)
    }

    /// Maps non-finite values to `Unbounded`.
    pub fn from_f64(v: f64) -> Self {
        if v.is_finite() {
            Extended::Finite(v)
        } else {
            Extended::Unbounded
        }
    }

    pub fn to_f64(self) -> f64 {
        match self {
            Extended::Finite(v) => v,
            Extended::Unbounded => f64::INFINITY,
        }
    }
}

impl fmt::Display for Extended {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::Finite(v) => write!(f, "{v}"),
            Extended::Unbounded => f.write_str("inf"),
        }
    }
}
