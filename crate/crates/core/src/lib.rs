//! Reconfigurable-hardware processing pipelines as named network services.
//!
//! A software module is a linear chain of algorithm shells, each carrying
//! implementations for one or more processor types. The [`deployer`] matches
//! shells onto virtual processors from the [`ham`] registry (CPU slots and
//! simulated FPGA devices), and the [`service`] container publishes running
//! deployments so remote [`client`]s can subscribe and stream frames through
//! them.

pub mod cli;
pub mod client;
pub mod deployer;
pub mod ham;
pub mod library;
pub mod model;
pub mod service;
pub mod wire;

pub use deployer::{deploy, plan, Deployment, DeploymentPlan, MatchPolicy};
pub use ham::{BackendDescriptor, CycleReport, FpgaDevice, Registry};
pub use library::{apply_reference, Library};
pub use model::{parse_module_spec, validate_module, ElementType, Elements, SoftwareModuleSpec, ValidatedModule};
pub use service::Container;
pub use wire::{ServiceDescriptor, ServiceUrl};
