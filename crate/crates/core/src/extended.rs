use std::fmt;

use serde::{Serialize, Serializer};

/// A real number or one of the two infinities.
///
/// Unboundedness of an inner problem is a result, not a numerical accident,
/// so it is carried explicitly instead of as an IEEE infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    NegInf,
    Finite(f64),
    PosInf,
}

impl ExtReal {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(x) => Some(x),
            _ => None,
        }
    }

    /// Maps to `f64`, using IEEE infinities for the sentinels.
    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::NegInf => f64::NEG_INFINITY,
            ExtReal::Finite(x) => x,
            ExtReal::PosInf => f64::INFINITY,
        }
    }
}

impl std::ops::Neg for ExtReal {
    type Output = ExtReal;

    fn neg(self) -> ExtReal {
        match self {
            ExtReal::NegInf => ExtReal::PosInf,
            ExtReal::Finite(x) => ExtReal::Finite(-x),
            ExtReal::PosInf => ExtReal::NegInf,
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::NegInf => f.write_str("-inf"),
            ExtReal::Finite(x) => write!(f, "{x}"),
            ExtReal::PosInf => f.write_str("inf"),
        }
    }
}

impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ExtReal::Finite(x) => s.serialize_f64(*x),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

/// Serializes an `f64`, writing non-finite values as `"inf"`, `"-inf"` or
/// `"nan"` so JSON output stays lossless.
pub fn serialize_f64_ext<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_str(&format_f64(*x))
    }
}

/// Shortest round-trip formatting with `inf`/`-inf`/`nan` spelled out.
pub fn format_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x == f64::INFINITY {
        "inf".to_string()
    } else if x == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sentinels_serialize_as_strings() {
        assert_eq!(serde_json::to_string(&ExtReal::NegInf).unwrap(), "\"-inf\"");
        assert_eq!(serde_json::to_string(&ExtReal::Finite(0.5)).unwrap(), "0.5");
        assert_eq!(-ExtReal::PosInf, ExtReal::NegInf);
        assert_eq!(ExtReal::Finite(2.0).finite(), Some(2.0));
        assert_eq!(format_f64(f64::INFINITY), "inf");
    }
}
