//! Hardware abstraction: virtual processors over CPU slots, simulated FPGA
//! devices and the grid container, with exclusive leases and a cycle cost
//! model.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::AddAssign;
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::library::{cpu, simfpga, ImplementationRef, Kernel, KernelError, Library};
use crate::model::{Elements, Params, ProcessorType};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HamError {
    #[error("unknown backend: {0}")]
    UnknownBackend(String),
    #[error("invalid backend: {0}")]
    InvalidBackend(String),
    #[error("duplicate virtual processor id {0}")]
    DuplicateVpId(VpId),
    #[error("unknown virtual processor {0}")]
    UnknownVp(VpId),
    #[error("virtual processor {0} is not idle")]
    NotIdle(VpId),
    #[error("virtual processor {0} is shared and cannot be leased")]
    Shared(VpId),
    #[error("lease on {0} is no longer valid")]
    StaleLease(VpId),
    #[error("{implementation} implementation cannot run on {vp} processor")]
    TypeMismatch {
        implementation: ProcessorType,
        vp: ProcessorType,
    },
    #[error("virtual processor {0} is not configured")]
    NotConfigured(VpId),
    #[error("virtual processor {0} is busy")]
    Busy(VpId),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Virtual processor id, `{backend}#{n}`. Orders by backend name, then
/// numerically by suffix, so `cpu#2 < cpu#10`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VpId(String);

impl VpId {
    pub fn new(id: impl Into<String>) -> Self {
        VpId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn split(&self) -> (&str, Option<u64>) {
        match self.0.rsplit_once('#') {
            Some((base, n)) => match n.parse() {
                Ok(n) => (base, Some(n)),
                Err(_) => (&self.0, None),
            },
            None => (&self.0, None),
        }
    }
}

impl Ord for VpId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.split()
            .cmp(&other.split())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for VpId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for VpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for VpId {
    fn from(s: &str) -> Self {
        VpId::new(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct FpgaDevice {
    pub lanes: u64,
    pub pipeline_depth: u64,
    pub reconfig_cycles: u64,
}

/// One hardware abstraction module as it appears in the server config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendDescriptor {
    Cpu {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<String>,
        slots: u32,
    },
    #[serde(rename = "simfpga")]
    SimFpga {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<String>,
        devices: Vec<FpgaDevice>,
    },
    Grid {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<String>,
    },
}

impl BackendDescriptor {
    pub fn cpu(slots: u32) -> Self {
        BackendDescriptor::Cpu { id: None, slots }
    }

    pub fn simfpga(devices: Vec<FpgaDevice>) -> Self {
        BackendDescriptor::SimFpga { id: None, devices }
    }

    pub fn grid() -> Self {
        BackendDescriptor::Grid { id: None }
    }

    pub fn from_json(value: &Value) -> Result<Self, HamError> {
        match value.get("type").and_then(Value::as_str) {
            Some("cpu" | "simfpga" | "grid") => serde_json::from_value(value.clone())
                .map_err(|e| HamError::InvalidBackend(e.to_string())),
            Some(other) => Err(HamError::UnknownBackend(other.to_string())),
            None => Err(HamError::UnknownBackend("missing \"type\"".to_string())),
        }
    }

    /// Prefix of the ids of this backend's virtual processors.
    pub fn id(&self) -> &str {
        let (id, default) = match self {
            BackendDescriptor::Cpu { id, .. } => (id, "cpu"),
            BackendDescriptor::SimFpga { id, .. } => (id, "simfpga"),
            BackendDescriptor::Grid { id } => (id, "grid"),
        };
        id.as_deref().unwrap_or(default)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VpAttributes {
    Cpu,
    SimFpga(FpgaDevice),
    Grid,
}

impl VpAttributes {
    pub fn processor_type(&self) -> ProcessorType {
        match self {
            VpAttributes::Cpu => ProcessorType::Cpu,
            VpAttributes::SimFpga(_) => ProcessorType::SimFpga,
            VpAttributes::Grid => ProcessorType::Grid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VpState {
    Idle,
    /// Leased, nothing loaded yet.
    Pending,
    Configured(String),
    Busy(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VirtualProcessorDescriptor {
    pub vp_id: VpId,
    pub attributes: VpAttributes,
    pub state: VpState,
}

impl VirtualProcessorDescriptor {
    pub fn processor_type(&self) -> ProcessorType {
        self.attributes.processor_type()
    }

    pub fn is_idle(&self) -> bool {
        self.state == VpState::Idle
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CycleReport {
    pub reconfig_cycles: u64,
    pub compute_cycles: u64,
    pub elements_processed: u64,
}

impl AddAssign for CycleReport {
    fn add_assign(&mut self, rhs: Self) {
        self.reconfig_cycles += rhs.reconfig_cycles;
        self.compute_cycles += rhs.compute_cycles;
        self.elements_processed += rhs.elements_processed;
    }
}

/// `n · c_op`
pub fn cpu_compute_cycles(n: u64, c_op: u64) -> u64 {
    n * c_op
}

/// `D + ceil(n / L)`: D fill cycles, then one beat of L results per cycle.
pub fn simfpga_compute_cycles(n: u64, lanes: u64, pipeline_depth: u64) -> u64 {
    pipeline_depth + n.div_ceil(lanes)
}

struct Loaded {
    kernel: Arc<Kernel>,
    artifact_id: String,
}

struct Slot {
    descriptor: VirtualProcessorDescriptor,
    generation: u64,
    loaded: Option<Loaded>,
}

/// Shared registry of virtual processors. Cloning yields another handle to
/// the same registry.
#[derive(Clone, Default)]
pub struct Registry {
    slots: Arc<Mutex<BTreeMap<VpId, Slot>>>,
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.snapshot()).finish()
    }
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    fn lock(&self) -> MutexGuard<'_, BTreeMap<VpId, Slot>> {
        self.slots.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Adds the backend's virtual processors, all idle. Nothing is added if
    /// any id collides.
    pub fn register_ham(&self, backend: &BackendDescriptor) -> Result<Vec<VirtualProcessorDescriptor>, HamError> {
        let prefix = backend.id();
        let attributes: Vec<VpAttributes> = match backend {
            BackendDescriptor::Cpu { slots, .. } => {
                if *slots == 0 {
                    return Err(HamError::InvalidBackend("cpu backend needs at least one slot".into()));
                }
                vec![VpAttributes::Cpu; *slots as usize]
            }
            BackendDescriptor::SimFpga { devices, .. } => {
                if devices.is_empty() {
                    return Err(HamError::InvalidBackend("simfpga backend needs at least one device".into()));
                }
                if devices.iter().any(|d| d.lanes == 0) {
                    return Err(HamError::InvalidBackend("simfpga lanes must be at least 1".into()));
                }
                devices.iter().copied().map(VpAttributes::SimFpga).collect()
            }
            BackendDescriptor::Grid { .. } => vec![VpAttributes::Grid],
        };
        let descriptors: Vec<_> = attributes
            .into_iter()
            .enumerate()
            .map(|(i, attributes)| VirtualProcessorDescriptor {
                vp_id: VpId(format!("{prefix}#{}", i + 1)),
                attributes,
                state: VpState::Idle,
            })
            .collect();

        let mut slots = self.lock();
        if let Some(d) = descriptors.iter().find(|d| slots.contains_key(&d.vp_id)) {
            return Err(HamError::DuplicateVpId(d.vp_id.clone()));
        }
        for d in &descriptors {
            slots.insert(
                d.vp_id.clone(),
                Slot {
                    descriptor: d.clone(),
                    generation: 0,
                    loaded: None,
                },
            );
        }
        Ok(descriptors)
    }

    /// All descriptors in ascending id order.
    pub fn snapshot(&self) -> Vec<VirtualProcessorDescriptor> {
        self.lock().values().map(|s| s.descriptor.clone()).collect()
    }

    pub fn descriptor(&self, vp: &VpId) -> Option<VirtualProcessorDescriptor> {
        self.lock().get(vp).map(|s| s.descriptor.clone())
    }

    /// Takes an exclusive lease on an idle processor.
    pub fn acquire(&self, vp: &VpId) -> Result<Lease, HamError> {
        let mut slots = self.lock();
        let slot = slots.get_mut(vp).ok_or_else(|| HamError::UnknownVp(vp.clone()))?;
        if slot.descriptor.processor_type() == ProcessorType::Grid {
            return Err(HamError::Shared(vp.clone()));
        }
        if slot.descriptor.state != VpState::Idle {
            return Err(HamError::NotIdle(vp.clone()));
        }
        slot.generation += 1;
        slot.descriptor.state = VpState::Pending;
        Ok(Lease {
            registry: self.clone(),
            vp: vp.clone(),
            generation: slot.generation,
        })
    }

    fn with_leased<T>(&self, lease: &Lease, f: impl FnOnce(&mut Slot) -> Result<T, HamError>) -> Result<T, HamError> {
        let mut slots = self.lock();
        match slots.get_mut(&lease.vp) {
            Some(slot) if slot.generation == lease.generation && slot.descriptor.state != VpState::Idle => f(slot),
            _ => Err(HamError::StaleLease(lease.vp.clone())),
        }
    }
}

/// Exclusive hold on one virtual processor. Dropping a lease that is still
/// current releases the processor.
#[derive(Debug)]
pub struct Lease {
    registry: Registry,
    vp: VpId,
    generation: u64,
}

impl Lease {
    pub fn vp_id(&self) -> &VpId {
        &self.vp
    }

    /// Loads an implementation with its parameters. On a sim-FPGA, loading an
    /// artifact other than the one currently held costs the device's
    /// reconfiguration cycles.
    pub fn configure(&self, implementation: &ImplementationRef, params: &Params) -> Result<CycleReport, HamError> {
        let kind = Library::builtin().lookup(&implementation.kind)?;
        self.registry.with_leased(self, |slot| {
            let vp_type = slot.descriptor.processor_type();
            if implementation.processor_type != vp_type {
                return Err(HamError::TypeMismatch {
                    implementation: implementation.processor_type,
                    vp: vp_type,
                });
            }
            if matches!(slot.descriptor.state, VpState::Busy(_)) {
                return Err(HamError::Busy(self.vp.clone()));
            }
            let kernel = Kernel::configure(kind, params)?;
            let reconfig_cycles = match slot.descriptor.attributes {
                VpAttributes::SimFpga(dev) => {
                    let same = slot
                        .loaded
                        .as_ref()
                        .is_some_and(|l| l.artifact_id == implementation.artifact_id);
                    if same {
                        0
                    } else {
                        dev.reconfig_cycles
                    }
                }
                _ => 0,
            };
            slot.loaded = Some(Loaded {
                kernel: Arc::new(kernel),
                artifact_id: implementation.artifact_id.clone(),
            });
            slot.descriptor.state = VpState::Configured(implementation.artifact_id.clone());
            Ok(CycleReport {
                reconfig_cycles,
                ..CycleReport::default()
            })
        })
    }

    /// Runs one block through the loaded implementation.
    pub fn execute_block(&self, input: &Elements) -> Result<(Elements, CycleReport), HamError> {
        let (kernel, attributes, artifact) = self.registry.with_leased(self, |slot| {
            let artifact = match &slot.descriptor.state {
                VpState::Configured(a) => a.clone(),
                VpState::Busy(_) => return Err(HamError::Busy(self.vp.clone())),
                _ => return Err(HamError::NotConfigured(self.vp.clone())),
            };
            let loaded = slot.loaded.as_ref().expect("configured slot has a kernel");
            loaded.kernel.check_input(input)?;
            slot.descriptor.state = VpState::Busy(artifact.clone());
            Ok((loaded.kernel.clone(), slot.descriptor.attributes, artifact))
        })?;

        let n = input.len() as u64;
        let (output, compute_cycles) = match attributes {
            VpAttributes::SimFpga(dev) => (
                simfpga::run(&kernel, input, dev.lanes as usize),
                simfpga_compute_cycles(n, dev.lanes, dev.pipeline_depth),
            ),
            _ => (cpu::run(&kernel, input), cpu_compute_cycles(n, kernel.c_op())),
        };

        let mut slots = self.registry.lock();
        if let Some(slot) = slots.get_mut(&self.vp) {
            if slot.generation == self.generation {
                slot.descriptor.state = VpState::Configured(artifact);
            }
        }
        Ok((
            output,
            CycleReport {
                reconfig_cycles: 0,
                compute_cycles,
                elements_processed: n,
            },
        ))
    }

    /// Returns the processor to idle and forgets the loaded artifact.
    pub fn release(&self) -> Result<(), HamError> {
        self.registry.with_leased(self, |slot| {
            slot.descriptor.state = VpState::Idle;
            slot.loaded = None;
            Ok(())
        })
    }
}

impl Drop for Lease {
    fn drop(&mut self) {
        let _ = self.release();
    }
}
