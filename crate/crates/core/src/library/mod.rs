//! Built-in algorithm kinds, their reference semantics, and the per-processor
//! implementations registered for each of them.

mod float;
mod kernel;
pub mod reference;
pub mod cpu;
pub mod simfpga;

use std::collections::BTreeMap;
use std::sync::OnceLock;

use crate::model::{ElementType, Elements, ParamKind, Params, ProcessorType, GRID_ENDPOINT};

pub use kernel::Kernel;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KernelError {
    #[error("unknown algorithm kind {0:?}")]
    UnknownKind(String),
    #[error("missing parameter {0:?}")]
    MissingParam(String),
    #[error("parameter {name:?} must be {expected}")]
    InvalidParam { name: String, expected: String },
    #[error("expected {expected} elements, got {actual}")]
    WrongElementType { expected: ElementType, actual: ElementType },
    #[error("{0:?} does not process data")]
    NotProcessing(String),
}

/// Per-element CPU operation count of a kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostClass {
    Fixed(u64),
    /// One operation per entry of the named realList parameter.
    PerCoefficient(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmKind {
    pub name: &'static str,
    /// `None` for kinds that carry whatever element type the chain gives them.
    pub input_element: Option<ElementType>,
    pub output_element: Option<ElementType>,
    pub required_params: Vec<(&'static str, ParamKind)>,
    pub cost: CostClass,
}

impl AlgorithmKind {
    pub fn is_grid_endpoint(&self) -> bool {
        self.name == GRID_ENDPOINT
    }

    pub fn is_polymorphic(&self) -> bool {
        self.input_element.is_none()
    }

    /// Checks that `params` carries every required parameter with a usable value.
    pub fn check_params(&self, params: &Params) -> Result<(), KernelError> {
        for &(name, kind) in &self.required_params {
            let value = params
                .get(name)
                .ok_or_else(|| KernelError::MissingParam(name.to_string()))?;
            let ok = match kind {
                ParamKind::Integer => value.as_integer().is_some(),
                ParamKind::Real => value.as_real().is_some(),
                ParamKind::Text => value.as_text().is_some(),
                ParamKind::RealList => value.as_real_list().is_some_and(|v| !v.is_empty()),
            };
            if !ok {
                let expected = match kind {
                    ParamKind::RealList => "a non-empty realList".to_string(),
                    k => format!("a {k}"),
                };
                return Err(KernelError::InvalidParam {
                    name: name.to_string(),
                    expected,
                });
            }
        }
        Ok(())
    }

    /// Per-element CPU operation count `c_op` under `params`.
    pub fn c_op(&self, params: &Params) -> Result<u64, KernelError> {
        match self.cost {
            CostClass::Fixed(c) => Ok(c),
            CostClass::PerCoefficient(name) => params
                .get(name)
                .ok_or_else(|| KernelError::MissingParam(name.to_string()))?
                .as_real_list()
                .map(|v| v.len() as u64)
                .ok_or_else(|| KernelError::InvalidParam {
                    name: name.to_string(),
                    expected: "a realList".to_string(),
                }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ImplementationRef {
    pub kind: String,
    pub processor_type: ProcessorType,
    pub artifact_id: String,
}

/// Immutable registry of kinds and their implementations.
#[derive(Debug, Clone)]
pub struct Library {
    kinds: BTreeMap<&'static str, AlgorithmKind>,
    implementations: BTreeMap<(String, ProcessorType), ImplementationRef>,
}

impl Library {
    pub fn builtin() -> &'static Library {
        static LIB: OnceLock<Library> = OnceLock::new();
        LIB.get_or_init(|| Library::from_kinds(builtin_kinds()))
    }

    fn from_kinds(kinds: Vec<AlgorithmKind>) -> Library {
        let mut implementations = BTreeMap::new();
        for k in &kinds {
            let processors: &[(ProcessorType, &str)] = if k.is_grid_endpoint() {
                &[(ProcessorType::Grid, "")]
            } else {
                &[(ProcessorType::Cpu, ".cpu"), (ProcessorType::SimFpga, ".bit")]
            };
            for &(p, suffix) in processors {
                implementations.insert(
                    (k.name.to_string(), p),
                    ImplementationRef {
                        kind: k.name.to_string(),
                        processor_type: p,
                        artifact_id: format!("{}{suffix}", k.name),
                    },
                );
            }
        }
        Library {
            kinds: kinds.into_iter().map(|k| (k.name, k)).collect(),
            implementations,
        }
    }

    pub fn lookup(&self, name: &str) -> Result<&AlgorithmKind, KernelError> {
        self.kinds
            .get(name)
            .ok_or_else(|| KernelError::UnknownKind(name.to_string()))
    }

    pub fn kinds(&self) -> impl Iterator<Item = &AlgorithmKind> {
        self.kinds.values()
    }

    /// The registered implementation of `kind` for `processor`, if any.
    pub fn implementation(&self, kind: &str, processor: ProcessorType) -> Option<&ImplementationRef> {
        self.implementations.get(&(kind.to_string(), processor))
    }

    pub fn implementations(&self) -> impl Iterator<Item = &ImplementationRef> {
        self.implementations.values()
    }
}

/// The built-in kinds. Every processing kind is registered for both `cpu`
/// and `simfpga`; `grid-endpoint` is bound to `grid` only.
pub fn builtin_kinds() -> Vec<AlgorithmKind> {
    use ElementType::*;
    vec![
        AlgorithmKind {
            name: "passthrough",
            input_element: None,
            output_element: None,
            required_params: vec![],
            cost: CostClass::Fixed(1),
        },
        AlgorithmKind {
            name: "scale",
            input_element: Some(F64),
            output_element: Some(F64),
            required_params: vec![("gain", ParamKind::Real)],
            cost: CostClass::Fixed(1),
        },
        AlgorithmKind {
            name: "offset",
            input_element: Some(F64),
            output_element: Some(F64),
            required_params: vec![("delta", ParamKind::Real)],
            cost: CostClass::Fixed(1),
        },
        AlgorithmKind {
            name: "fir",
            input_element: Some(F64),
            output_element: Some(F64),
            required_params: vec![("coefficients", ParamKind::RealList)],
            cost: CostClass::PerCoefficient("coefficients"),
        },
        AlgorithmKind {
            name: "saturating-scale-i32",
            input_element: Some(I32),
            output_element: Some(I32),
            required_params: vec![("gain", ParamKind::Integer)],
            cost: CostClass::Fixed(1),
        },
        AlgorithmKind {
            name: GRID_ENDPOINT,
            input_element: None,
            output_element: None,
            required_params: vec![],
            cost: CostClass::Fixed(1),
        },
    ]
}

/// Applies the defining semantics of `kind` to `input`.
pub fn apply_reference(kind: &AlgorithmKind, params: &Params, input: &Elements) -> Result<Elements, KernelError> {
    let kernel = Kernel::configure(kind, params)?;
    kernel.check_input(input)?;
    Ok(reference::apply(&kernel, input))
}
