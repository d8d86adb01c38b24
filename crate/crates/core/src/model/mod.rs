//! Pipeline data model: algorithm shells, ports, software modules and the
//! manifest format they are loaded from.

mod elements;
mod manifest;
mod validate;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use elements::{ElementType, Elements, MisalignedPayload, UnknownElementType};
pub use manifest::{parse_module_spec, to_manifest_json, ManifestError};
pub use validate::{validate_module, ResolvedShell, ShellRole, ValidatedModule, ValidationError};

/// Kind name of the network endpoint block.
pub const GRID_ENDPOINT: &str = "grid-endpoint";

/// Parameter naming the service a grid endpoint is exposed under.
pub const SERVICE_INSTANCE_NAME: &str = "serviceInstanceName";

/// `[A-Za-z0-9_-]+`, the grammar for shell ids and port names.
pub fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

/// Service names are identifiers of at most 64 characters.
pub fn is_service_name(s: &str) -> bool {
    s.len() <= 64 && is_identifier(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProcessorType {
    Cpu,
    #[serde(rename = "simfpga")]
    SimFpga,
    Grid,
}

impl ProcessorType {
    pub fn as_str(self) -> &'static str {
        match self {
            ProcessorType::Cpu => "cpu",
            ProcessorType::SimFpga => "simfpga",
            ProcessorType::Grid => "grid",
        }
    }
}

impl fmt::Display for ProcessorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProcessorType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cpu" => Ok(ProcessorType::Cpu),
            "simfpga" => Ok(ProcessorType::SimFpga),
            "grid" => Ok(ProcessorType::Grid),
            other => Err(format!("unknown processor type {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Integer(i64),
    Real(f64),
    Text(String),
    RealList(Vec<f64>),
}

impl ParamValue {
    pub fn kind(&self) -> ParamKind {
        match self {
            ParamValue::Integer(_) => ParamKind::Integer,
            ParamValue::Real(_) => ParamKind::Real,
            ParamValue::Text(_) => ParamKind::Text,
            ParamValue::RealList(_) => ParamKind::RealList,
        }
    }

    /// Integers are accepted where a real is expected.
    pub fn as_real(&self) -> Option<f64> {
        match *self {
            ParamValue::Real(v) => Some(v),
            ParamValue::Integer(v) => Some(v as f64),
            _ => None,
        }
    }

    pub fn as_integer(&self) -> Option<i64> {
        match *self {
            ParamValue::Integer(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            ParamValue::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_real_list(&self) -> Option<&[f64]> {
        match self {
            ParamValue::RealList(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    Integer,
    Real,
    Text,
    RealList,
}

impl fmt::Display for ParamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParamKind::Integer => "integer",
            ParamKind::Real => "real",
            ParamKind::Text => "text",
            ParamKind::RealList => "realList",
        })
    }
}

pub type Params = BTreeMap<String, ParamValue>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Input,
    Output,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortSpec {
    pub name: String,
    pub element: ElementType,
    pub direction: Direction,
}

impl PortSpec {
    pub fn input(name: impl Into<String>, element: ElementType) -> Self {
        PortSpec {
            name: name.into(),
            element,
            direction: Direction::Input,
        }
    }

    pub fn output(name: impl Into<String>, element: ElementType) -> Self {
        PortSpec {
            name: name.into(),
            element,
            direction: Direction::Output,
        }
    }
}

/// One processing block as declared in a manifest.
///
/// `inputs` and `outputs` are `None` when the manifest leaves them to be
/// derived from the kind's signature and the chain's connections during
/// validation.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmShell {
    pub id: String,
    pub kind: String,
    pub params: Params,
    pub inputs: Option<Vec<PortSpec>>,
    pub outputs: Option<Vec<PortSpec>>,
    pub implementations: BTreeMap<ProcessorType, String>,
}

impl AlgorithmShell {
    pub fn new(id: impl Into<String>, kind: impl Into<String>) -> Self {
        AlgorithmShell {
            id: id.into(),
            kind: kind.into(),
            params: Params::new(),
            inputs: None,
            outputs: None,
            implementations: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, name: impl Into<String>, value: ParamValue) -> Self {
        self.params.insert(name.into(), value);
        self
    }

    pub fn with_implementation(mut self, processor: ProcessorType, artifact: impl Into<String>) -> Self {
        self.implementations.insert(processor, artifact.into());
        self
    }

    pub fn is_grid_endpoint(&self) -> bool {
        self.kind == GRID_ENDPOINT
    }

    pub fn service_instance_name(&self) -> Option<&str> {
        self.params.get(SERVICE_INSTANCE_NAME).and_then(ParamValue::as_text)
    }
}

/// `shellId.port`
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PortRef {
    pub shell: String,
    pub port: String,
}

impl PortRef {
    pub fn new(shell: impl Into<String>, port: impl Into<String>) -> Self {
        PortRef {
            shell: shell.into(),
            port: port.into(),
        }
    }
}

impl fmt::Display for PortRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.shell, self.port)
    }
}

impl FromStr for PortRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once('.') {
            Some((shell, port)) if is_identifier(shell) && is_identifier(port) => {
                Ok(PortRef::new(shell, port))
            }
            _ => Err(format!("expected \"shellId.port\", got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Connection {
    pub from: PortRef,
    pub to: PortRef,
}

impl Connection {
    pub fn new(from: PortRef, to: PortRef) -> Self {
        Connection { from, to }
    }

    /// Connects the default `out` port of `from` to the default `in` port of `to`.
    pub fn between(from: &str, to: &str) -> Self {
        Connection::new(PortRef::new(from, "out"), PortRef::new(to, "in"))
    }
}

impl fmt::Display for Connection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", self.from, self.to)
    }
}

/// A named chain of shells, the unit of deployment.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftwareModuleSpec {
    pub name: String,
    pub shells: Vec<AlgorithmShell>,
    pub connections: Vec<Connection>,
}

impl SoftwareModuleSpec {
    pub fn shell(&self, id: &str) -> Option<&AlgorithmShell> {
        self.shells.iter().find(|s| s.id == id)
    }
}
