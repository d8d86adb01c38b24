//! Wire formats shared by the service container and the client: service URLs,
//! the service descriptor, data frames and their payload encoding.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::model::{is_service_name, ElementType, Elements, MisalignedPayload, Params, ValidatedModule};

/// Path under which every service is published.
pub const SERVICE_ROOT: &str = "/ogsa/services/proteusgrid/ProteusGridService";

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("malformed service URL {0:?}")]
    MalformedUrl(String),
    #[error("payload is not valid base64: {0}")]
    Base64(String),
    #[error(transparent)]
    Misaligned(#[from] MisalignedPayload),
}

/// Address of one exposed service.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ServiceUrl {
    pub host: String,
    pub port: u16,
    pub service_name: String,
}

impl ServiceUrl {
    pub fn new(host: impl Into<String>, port: u16, service_name: impl Into<String>) -> Self {
        ServiceUrl {
            host: host.into(),
            port,
            service_name: service_name.into(),
        }
    }

    /// `http://{host}:{port}` without a trailing slash.
    pub fn base(&self) -> String {
        format!("http://{}:{}", self.host, self.port)
    }

    /// Path of an operation under this service, e.g. `subscribe`.
    pub fn endpoint(&self, op: &str) -> String {
        format!("{self}/{op}")
    }
}

impl fmt::Display for ServiceUrl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "http://{}:{}{SERVICE_ROOT}/{}", self.host, self.port, self.service_name)
    }
}

impl FromStr for ServiceUrl {
    type Err = WireError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || WireError::MalformedUrl(s.to_string());
        let rest = s.strip_prefix("http://").ok_or_else(bad)?;
        let (authority, path) = rest.split_at(rest.find('/').ok_or_else(bad)?);
        let (host, port) = authority.rsplit_once(':').ok_or_else(bad)?;
        if host.is_empty() || host.contains(['/', '@', '?', '#']) {
            return Err(bad());
        }
        let port: u16 = port.parse().map_err(|_| bad())?;
        if port == 0 {
            return Err(bad());
        }
        let name = path
            .strip_prefix(SERVICE_ROOT)
            .and_then(|p| p.strip_prefix('/'))
            .ok_or_else(bad)?;
        if !is_service_name(name) {
            return Err(bad());
        }
        Ok(ServiceUrl::new(host, port, name))
    }
}

/// Machine-readable declaration of a service, served at its URL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ServiceDescriptor {
    pub service_name: String,
    pub input_element: ElementType,
    pub output_element: ElementType,
    /// Parameters of each processing shell, keyed by shell id.
    pub params_echo: BTreeMap<String, Params>,
    pub protocol_version: u32,
}

impl ServiceDescriptor {
    pub fn for_module(service_name: &str, module: &ValidatedModule) -> Self {
        ServiceDescriptor {
            service_name: service_name.to_string(),
            input_element: module.input_element(),
            output_element: module.output_element(),
            params_echo: module
                .shells()
                .iter()
                .filter(|s| s.is_processing())
                .map(|s| (s.shell.id.clone(), s.shell.params.clone()))
                .collect(),
            protocol_version: PROTOCOL_VERSION,
        }
    }
}

/// One unit of streamed data. `payload` is base64 of the little-endian
/// packed elements; end-of-stream frames carry an empty payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DataFrame {
    pub sub_id: String,
    pub seq: u64,
    pub payload: String,
    pub eos: bool,
}

impl DataFrame {
    pub fn data(sub_id: impl Into<String>, seq: u64, elements: &Elements) -> Self {
        DataFrame {
            sub_id: sub_id.into(),
            seq,
            payload: encode_payload(elements),
            eos: false,
        }
    }

    pub fn end_of_stream(sub_id: impl Into<String>, seq: u64) -> Self {
        DataFrame {
            sub_id: sub_id.into(),
            seq,
            payload: String::new(),
            eos: true,
        }
    }

    pub fn elements(&self, element: ElementType) -> Result<Elements, WireError> {
        decode_payload(element, &self.payload)
    }
}

pub fn encode_payload(elements: &Elements) -> String {
    STANDARD.encode(elements.to_le_bytes())
}

pub fn decode_payload(element: ElementType, payload: &str) -> Result<Elements, WireError> {
    let bytes = STANDARD
        .decode(payload)
        .map_err(|e| WireError::Base64(e.to_string()))?;
    Ok(Elements::from_le_bytes(element, &bytes)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SubscribeResponse {
    pub sub_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptedResponse {
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PullResponse {
    pub frames: Vec<DataFrame>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UnsubscribeRequest {
    pub sub_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClosedResponse {
    pub closed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubscriptionState {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StatusResponse {
    pub state: SubscriptionState,
    pub next_input_seq: u64,
    pub next_output_seq: u64,
}

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub detail: String,
}
