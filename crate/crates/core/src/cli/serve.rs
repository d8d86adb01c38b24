use std::path::Path;
use std::sync::Arc;

use crate::deployer::{deploy, plan, Deployment, MatchPolicy};
use crate::ham::{BackendDescriptor, Registry};
use crate::library::Library;
use crate::model::{parse_module_spec, validate_module, ValidatedModule};
use crate::service::{Container, ServiceError};

use super::config::ServerConfig;

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Deploy(String),
    #[error(transparent)]
    Bind(ServiceError),
}

impl ServeError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ServeError::Config(_) => 1,
            ServeError::Deploy(_) => 2,
            ServeError::Bind(_) => 3,
        }
    }
}

/// Registers the configured backends plus the grid container's processor.
pub fn build_registry(config: &ServerConfig) -> Result<Registry, ServeError> {
    let registry = Registry::new();
    for backend in &config.backends {
        registry
            .register_ham(backend)
            .map_err(|e| ServeError::Config(e.to_string()))?;
    }
    if !registry
        .snapshot()
        .iter()
        .any(|d| d.processor_type() == crate::model::ProcessorType::Grid)
    {
        registry
            .register_ham(&BackendDescriptor::grid())
            .map_err(|e| ServeError::Config(e.to_string()))?;
    }
    Ok(registry)
}

pub fn load_module(path: &Path) -> Result<ValidatedModule, ServeError> {
    let text = std::fs::read_to_string(path).map_err(|e| ServeError::Config(format!("{}: {e}", path.display())))?;
    let spec = parse_module_spec(&text).map_err(|e| ServeError::Config(format!("{}: {e}", path.display())))?;
    validate_module(&spec, Library::builtin()).map_err(|e| ServeError::Deploy(format!("module {:?}: {e}", spec.name)))
}

/// A running host: the container plus every deployment it serves.
pub struct Server {
    container: Container,
    deployments: Vec<Arc<Deployment>>,
    urls: Vec<String>,
    registry: Registry,
}

impl Server {
    pub fn urls(&self) -> &[String] {
        &self.urls
    }

    pub fn container(&self) -> &Container {
        &self.container
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    /// Stops every deployment (draining in-flight frames), then the container.
    pub fn shutdown(self) {
        for d in &self.deployments {
            let _ = d.stop();
        }
    }
}

pub fn start_server(config: &ServerConfig) -> Result<Server, ServeError> {
    let registry = build_registry(config)?;
    let policy = MatchPolicy::default();
    let mut deployments = Vec::new();
    for path in &config.modules {
        let module = Arc::new(load_module(path)?);
        let name = module.name().to_string();
        let plan = plan(module, &registry.snapshot(), &policy)
            .map_err(|e| ServeError::Deploy(format!("module {name:?}: {e}")))?;
        let deployment = deploy(plan, &registry).map_err(|e| ServeError::Deploy(format!("module {name:?}: {e}")))?;
        deployments.push(Arc::new(deployment));
    }

    let container = Container::start(&config.bind_host, config.port).map_err(ServeError::Bind)?;
    let mut urls = Vec::new();
    for d in &deployments {
        let exposed = d
            .start(Some(container.host()))
            .map_err(|e| ServeError::Deploy(format!("module {:?}: {e}", d.module().name())))?;
        urls.extend(exposed);
    }
    Ok(Server {
        container,
        deployments,
        urls,
        registry,
    })
}
