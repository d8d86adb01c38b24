use crate::model::{ElementType, Elements, Params};

use super::{AlgorithmKind, KernelError};

/// A processing kind bound to concrete parameter values.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    Passthrough,
    Scale { gain: f64 },
    Offset { delta: f64 },
    Fir { taps: Vec<f64> },
    SaturatingScale { gain: i64 },
}

impl Kernel {
    pub fn configure(kind: &AlgorithmKind, params: &Params) -> Result<Kernel, KernelError> {
        kind.check_params(params)?;
        let real = |name: &str| params[name].as_real().expect("checked");
        Ok(match kind.name {
            "passthrough" => Kernel::Passthrough,
            "scale" => Kernel::Scale { gain: real("gain") },
            "offset" => Kernel::Offset { delta: real("delta") },
            "fir" => Kernel::Fir {
                taps: params["coefficients"].as_real_list().expect("checked").to_vec(),
            },
            "saturating-scale-i32" => Kernel::SaturatingScale {
                gain: params["gain"].as_integer().expect("checked"),
            },
            other => return Err(KernelError::NotProcessing(other.to_string())),
        })
    }

    /// Element type the kernel consumes; `None` accepts any.
    pub fn input_element(&self) -> Option<ElementType> {
        match self {
            Kernel::Passthrough => None,
            Kernel::Scale { .. } | Kernel::Offset { .. } | Kernel::Fir { .. } => Some(ElementType::F64),
            Kernel::SaturatingScale { .. } => Some(ElementType::I32),
        }
    }

    pub fn check_input(&self, input: &Elements) -> Result<(), KernelError> {
        match self.input_element() {
            Some(expected) if expected != input.element_type() => Err(KernelError::WrongElementType {
                expected,
                actual: input.element_type(),
            }),
            _ => Ok(()),
        }
    }

    /// Per-element CPU operation count.
    pub fn c_op(&self) -> u64 {
        match self {
            Kernel::Fir { taps } => taps.len() as u64,
            _ => 1,
        }
    }
}
