//! Runtime values flowing along wires.

use serde::{Deserialize, Serialize};

use crate::diagram::ValueKind;

/// One value on one port: a boolean, a real, or a fixed-size real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Value {
    Bool(bool),
    Real(f64),
    RealVec(Vec<f64>),
}

impl Value {
    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Bool(_) => ValueKind::Boolean,
            Value::Real(_) => ValueKind::Real,
            Value::RealVec(v) => ValueKind::RealVector(v.len()),
        }
    }

    /// A zero/false value of the given kind.
    pub fn zero_of(kind: ValueKind) -> Value {
        match kind {
            ValueKind::Boolean => Value::Bool(false),
            ValueKind::Real => Value::Real(0.0),
            ValueKind::RealVector(d) => Value::RealVec(vec![0.0; d]),
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_real(&self) -> Option<f64> {
        match self {
            Value::Real(x) => Some(*x),
            _ => None,
        }
    }

    /// False if the value contains a NaN or infinity.
    pub fn is_finite(&self) -> bool {
        match self {
            Value::Bool(_) => true,
            Value::Real(x) => x.is_finite(),
            Value::RealVec(v) => v.iter().all(|x| x.is_finite()),
        }
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Real(x)
    }
}
