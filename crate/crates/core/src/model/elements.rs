//! Port element types and the element sequences that flow between shells.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The closed set of payload types a port can carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ElementType {
    #[serde(rename = "signed-int-32")]
    I32,
    #[serde(rename = "float-64")]
    F64,
    #[serde(rename = "opaque-bytes")]
    Bytes,
}

impl ElementType {
    pub const ALL: [ElementType; 3] = [ElementType::I32, ElementType::F64, ElementType::Bytes];

    pub fn as_str(self) -> &'static str {
        match self {
            ElementType::I32 => "signed-int-32",
            ElementType::F64 => "float-64",
            ElementType::Bytes => "opaque-bytes",
        }
    }

    /// Width of one element in its little-endian wire form.
    pub fn width(self) -> usize {
        match self {
            ElementType::I32 => 4,
            ElementType::F64 => 8,
            ElementType::Bytes => 1,
        }
    }
}

impl fmt::Display for ElementType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown element type {0:?}")]
pub struct UnknownElementType(pub String);

impl FromStr for ElementType {
    type Err = UnknownElementType;

    /// Accepts the canonical names and the short CLI forms `i32`, `f64`, `bytes`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "signed-int-32" | "i32" => Ok(ElementType::I32),
            "float-64" | "f64" => Ok(ElementType::F64),
            "opaque-bytes" | "bytes" => Ok(ElementType::Bytes),
            other => Err(UnknownElementType(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{len} bytes is not a whole number of {element} elements")]
pub struct MisalignedPayload {
    pub element: ElementType,
    pub len: usize,
}

/// A typed sequence of elements, the unit a shell consumes and produces per frame.
///
/// Equality is by bit pattern, so `NaN == NaN` when the payloads match and
/// `0.0 != -0.0`.
#[derive(Debug, Clone)]
pub enum Elements {
    I32(Vec<i32>),
    F64(Vec<f64>),
    Bytes(Vec<u8>),
}

impl Elements {
    pub fn empty(element: ElementType) -> Self {
        match element {
            ElementType::I32 => Elements::I32(Vec::new()),
            ElementType::F64 => Elements::F64(Vec::new()),
            ElementType::Bytes => Elements::Bytes(Vec::new()),
        }
    }

    pub fn element_type(&self) -> ElementType {
        match self {
            Elements::I32(_) => ElementType::I32,
            Elements::F64(_) => ElementType::F64,
            Elements::Bytes(_) => ElementType::Bytes,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Elements::I32(v) => v.len(),
            Elements::F64(v) => v.len(),
            Elements::Bytes(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        match self {
            Elements::I32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            Elements::F64(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            Elements::Bytes(v) => v.clone(),
        }
    }

    pub fn from_le_bytes(element: ElementType, bytes: &[u8]) -> Result<Self, MisalignedPayload> {
        if bytes.len() % element.width() != 0 {
            return Err(MisalignedPayload {
                element,
                len: bytes.len(),
            });
        }
        Ok(match element {
            ElementType::I32 => Elements::I32(
                bytes
                    .chunks_exact(4)
                    .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            ElementType::F64 => Elements::F64(
                bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            ElementType::Bytes => Elements::Bytes(bytes.to_vec()),
        })
    }
}

impl PartialEq for Elements {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Elements::I32(a), Elements::I32(b)) => a == b,
            (Elements::F64(a), Elements::F64(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (Elements::Bytes(a), Elements::Bytes(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Elements {}

impl From<Vec<i32>> for Elements {
    fn from(v: Vec<i32>) -> Self {
        Elements::I32(v)
    }
}

impl From<Vec<f64>> for Elements {
    fn from(v: Vec<f64>) -> Self {
        Elements::F64(v)
    }
}

impl From<Vec<u8>> for Elements {
    fn from(v: Vec<u8>) -> Self {
        Elements::Bytes(v)
    }
}
