//! Matching shells onto virtual processors and running frames through the
//! deployed chain.

use std::collections::HashSet;
use std::fmt;
use std::sync::{Arc, Mutex, RwLock};

use crate::ham::{CycleReport, HamError, Lease, Registry, VirtualProcessorDescriptor, VpId};
use crate::library::{ImplementationRef, Library};
use crate::model::{ElementType, Elements, ProcessorType, ShellRole, ValidatedModule};

pub type HostError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, thiserror::Error)]
pub enum DeployError {
    #[error("match policy needs a non-empty list of distinct processor types")]
    InvalidPolicy,
    #[error("shell {shell:?}: no implementation matches the available processor types {available:?}")]
    NoCompatibleImplementation {
        shell: String,
        available: Vec<ProcessorType>,
    },
    #[error("shell {shell:?}: every compatible virtual processor is in use")]
    InsufficientProcessors { shell: String },
    #[error("virtual processor {vp} changed state since planning")]
    VpStateChanged { vp: VpId },
    #[error("shell {shell:?}: {source}")]
    Configure { shell: String, source: HamError },
    #[error("deployment is {actual}, expected {expected}")]
    WrongState {
        expected: DeploymentState,
        actual: DeploymentState,
    },
    #[error("deployment is not running")]
    NotRunning,
    #[error("chain expects {expected} elements, got {actual}")]
    WrongElementType { expected: ElementType, actual: ElementType },
    #[error("shell {shell:?}: {source}")]
    Execute { shell: String, source: HamError },
    #[error("exposing service {name:?}: {source}")]
    Expose { name: String, source: HostError },
}

/// Processor-type preference used when matching.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchPolicy {
    type_priority: Vec<ProcessorType>,
}

impl Default for MatchPolicy {
    fn default() -> Self {
        MatchPolicy {
            type_priority: vec![ProcessorType::SimFpga, ProcessorType::Cpu],
        }
    }
}

impl MatchPolicy {
    pub fn new(type_priority: Vec<ProcessorType>) -> Result<Self, DeployError> {
        let distinct: HashSet<_> = type_priority.iter().collect();
        if type_priority.is_empty() || distinct.len() != type_priority.len() {
            return Err(DeployError::InvalidPolicy);
        }
        Ok(MatchPolicy { type_priority })
    }

    /// Restricts matching to a single processor type.
    pub fn only(processor: ProcessorType) -> Self {
        MatchPolicy {
            type_priority: vec![processor],
        }
    }

    pub fn type_priority(&self) -> &[ProcessorType] {
        &self.type_priority
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Binding {
    pub shell_id: String,
    pub implementation: ImplementationRef,
    pub vp_id: VpId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeploymentPlan {
    pub module: Arc<ValidatedModule>,
    /// One per shell, in chain order.
    pub bindings: Vec<Binding>,
    pub service_names: Vec<String>,
}

/// Greedy matching in chain order. Each shell takes the highest-priority
/// processor type it has an implementation for among idle processors not yet
/// taken by this plan, and within that type the smallest vp id. Grid
/// endpoints attach to the smallest grid processor, which they share.
pub fn plan(
    module: Arc<ValidatedModule>,
    snapshot: &[VirtualProcessorDescriptor],
    policy: &MatchPolicy,
) -> Result<DeploymentPlan, DeployError> {
    let library = Library::builtin();
    let mut available: Vec<ProcessorType> = snapshot.iter().map(|d| d.processor_type()).collect();
    available.sort();
    available.dedup();

    let mut consumed: HashSet<&VpId> = HashSet::new();
    let mut bindings = Vec::with_capacity(module.shells().len());
    for resolved in module.shells() {
        let shell = &resolved.shell;
        if resolved.role != ShellRole::Processing {
            let vp = snapshot
                .iter()
                .filter(|d| d.processor_type() == ProcessorType::Grid)
                .map(|d| &d.vp_id)
                .min()
                .ok_or_else(|| DeployError::NoCompatibleImplementation {
                    shell: shell.id.clone(),
                    available: available.clone(),
                })?;
            let mut implementation = library
                .implementation(&shell.kind, ProcessorType::Grid)
                .expect("grid endpoint is registered")
                .clone();
            if let Some(a) = shell.implementations.get(&ProcessorType::Grid) {
                implementation.artifact_id = a.clone();
            }
            bindings.push(Binding {
                shell_id: shell.id.clone(),
                implementation,
                vp_id: vp.clone(),
            });
            continue;
        }

        let candidates: Vec<ProcessorType> = policy
            .type_priority
            .iter()
            .copied()
            .filter(|p| shell.implementations.contains_key(p))
            .collect();
        let chosen = candidates.iter().find_map(|&p| {
            snapshot
                .iter()
                .filter(|d| d.processor_type() == p && d.is_idle() && !consumed.contains(&d.vp_id))
                .map(|d| &d.vp_id)
                .min()
                .map(|vp| (p, vp))
        });
        let Some((processor, vp)) = chosen else {
            return Err(if candidates.iter().any(|p| available.contains(p)) {
                DeployError::InsufficientProcessors {
                    shell: shell.id.clone(),
                }
            } else {
                DeployError::NoCompatibleImplementation {
                    shell: shell.id.clone(),
                    available: available.clone(),
                }
            });
        };
        consumed.insert(vp);
        bindings.push(Binding {
            shell_id: shell.id.clone(),
            implementation: ImplementationRef {
                kind: shell.kind.clone(),
                processor_type: processor,
                artifact_id: shell.implementations[&processor].clone(),
            },
            vp_id: vp.clone(),
        });
    }

    let service_names = module.service_names();
    Ok(DeploymentPlan {
        module,
        bindings,
        service_names,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeploymentState {
    Planned,
    Running,
    Stopped,
}

impl fmt::Display for DeploymentState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DeploymentState::Planned => "planned",
            DeploymentState::Running => "running",
            DeploymentState::Stopped => "stopped",
        })
    }
}

/// Something that publishes running deployments under service names.
pub trait ServiceHost: Send + Sync {
    /// Returns the URL the deployment is reachable at.
    fn expose(&self, name: &str, deployment: Arc<Deployment>) -> Result<String, HostError>;
    /// Stops accepting input for `name` and waits until queued frames are processed.
    fn unexpose(&self, name: &str);
}

struct Stage {
    shell_id: String,
    lease: Mutex<Lease>,
}

struct Stages {
    state: DeploymentState,
    /// Processing shells only, in chain order.
    stages: Vec<Stage>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageReport {
    pub shell_id: String,
    pub report: CycleReport,
}

/// A plan with its processors leased and configured.
pub struct Deployment {
    plan: DeploymentPlan,
    setup: Vec<StageReport>,
    inner: RwLock<Stages>,
    host: Mutex<Option<(Arc<dyn ServiceHost>, Vec<String>)>>,
}

impl fmt::Debug for Deployment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Deployment")
            .field("module", &self.plan.module.name())
            .field("bindings", &self.plan.bindings)
            .field("state", &self.state())
            .finish()
    }
}

/// Acquires and configures every processing binding. Either all leases are
/// taken or none are.
pub fn deploy(plan: DeploymentPlan, registry: &Registry) -> Result<Deployment, DeployError> {
    let mut stages = Vec::new();
    let mut setup = Vec::new();
    for (binding, resolved) in plan.bindings.iter().zip(plan.module.shells()) {
        if !resolved.is_processing() {
            continue;
        }
        let lease = registry.acquire(&binding.vp_id).map_err(|e| match e {
            HamError::NotIdle(vp) | HamError::UnknownVp(vp) | HamError::Shared(vp) => DeployError::VpStateChanged { vp },
            other => DeployError::Configure {
                shell: binding.shell_id.clone(),
                source: other,
            },
        })?;
        let report = lease
            .configure(&binding.implementation, &resolved.shell.params)
            .map_err(|source| DeployError::Configure {
                shell: binding.shell_id.clone(),
                source,
            })?;
        setup.push(StageReport {
            shell_id: binding.shell_id.clone(),
            report,
        });
        stages.push(Stage {
            shell_id: binding.shell_id.clone(),
            lease: Mutex::new(lease),
        });
    }
    Ok(Deployment {
        plan,
        setup,
        inner: RwLock::new(Stages {
            state: DeploymentState::Planned,
            stages,
        }),
        host: Mutex::new(None),
    })
}

impl Deployment {
    pub fn plan(&self) -> &DeploymentPlan {
        &self.plan
    }

    pub fn module(&self) -> &ValidatedModule {
        &self.plan.module
    }

    pub fn state(&self) -> DeploymentState {
        self.inner.read().unwrap_or_else(|e| e.into_inner()).state
    }

    /// Reconfiguration paid while deploying, per processing shell.
    pub fn setup_reports(&self) -> &[StageReport] {
        &self.setup
    }

    /// Moves to running and, with a host, exposes every service name. If any
    /// name fails to expose, the ones already exposed are withdrawn and the
    /// deployment returns to planned.
    pub fn start(self: &Arc<Self>, host: Option<Arc<dyn ServiceHost>>) -> Result<Vec<String>, DeployError> {
        {
            let mut inner = self.inner.write().unwrap_or_else(|e| e.into_inner());
            if inner.state != DeploymentState::Planned {
                return Err(DeployError::WrongState {
                    expected: DeploymentState::Planned,
                    actual: inner.state,
                });
            }
            inner.state = DeploymentState::Running;
        }
        let Some(host) = host else {
            return Ok(Vec::new());
        };
        let mut urls = Vec::new();
        for (i, name) in self.plan.service_names.iter().enumerate() {
            match host.expose(name, self.clone()) {
                Ok(url) => urls.push(url),
                Err(source) => {
                    for done in &self.plan.service_names[..i] {
                        host.unexpose(done);
                    }
                    self.inner.write().unwrap_or_else(|e| e.into_inner()).state = DeploymentState::Planned;
                    return Err(DeployError::Expose {
                        name: name.clone(),
                        source,
                    });
                }
            }
        }
        *self.host.lock().unwrap_or_else(|e| e.into_inner()) = Some((host, self.plan.service_names.clone()));
        Ok(urls)
    }

    /// Withdraws exposed services (draining their queues), waits for frames
    /// in flight, then releases every processor.
    pub fn stop(&self) -> Result<(), DeployError> {
        let state = self.state();
        if state != DeploymentState::Running {
            return Err(DeployError::WrongState {
                expected: DeploymentState::Running,
                actual: state,
            });
        }
        let exposed = self.host.lock().unwrap_or_else(|e| e.into_inner()).take();
        if let Some((host, names)) = exposed {
            for name in &names {
                host.unexpose(name);
            }
        }
        let mut inner = self.inner.write().unwrap_or_else(|e| e.into_inner());
        if inner.state != DeploymentState::Running {
            return Err(DeployError::WrongState {
                expected: DeploymentState::Running,
                actual: inner.state,
            });
        }
        inner.state = DeploymentState::Stopped;
        for stage in inner.stages.drain(..) {
            let lease = stage.lease.into_inner().unwrap_or_else(|e| e.into_inner());
            let _ = lease.release();
        }
        Ok(())
    }

    /// Runs one frame through every processing shell in chain order.
    pub fn process_frame(&self, input: &Elements) -> Result<(Elements, CycleReport), DeployError> {
        let (output, stages) = self.process_frame_traced(input)?;
        let mut total = CycleReport::default();
        for s in stages {
            total += s.report;
        }
        Ok((output, total))
    }

    /// Like [`process_frame`](Self::process_frame), with one report per processing shell.
    pub fn process_frame_traced(&self, input: &Elements) -> Result<(Elements, Vec<StageReport>), DeployError> {
        let inner = self.inner.read().unwrap_or_else(|e| e.into_inner());
        if inner.state != DeploymentState::Running {
            return Err(DeployError::NotRunning);
        }
        let expected = self.plan.module.input_element();
        if input.element_type() != expected {
            return Err(DeployError::WrongElementType {
                expected,
                actual: input.element_type(),
            });
        }
        let mut reports = Vec::with_capacity(inner.stages.len());
        let mut data = input.clone();
        for stage in &inner.stages {
            let lease = stage.lease.lock().unwrap_or_else(|e| e.into_inner());
            let (out, report) = lease.execute_block(&data).map_err(|source| DeployError::Execute {
                shell: stage.shell_id.clone(),
                source,
            })?;
            drop(lease);
            data = out;
            reports.push(StageReport {
                shell_id: stage.shell_id.clone(),
                report,
            });
        }
        Ok((data, reports))
    }
}
