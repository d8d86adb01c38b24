//! Shared generators and oracles for the integration tests.
#![allow(dead_code)]

pub mod http;
pub mod matching;
pub mod process;

use std::collections::BTreeMap;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use reconfgrid::ham::{BackendDescriptor, CycleReport, FpgaDevice, Registry, VpId};
use reconfgrid::library::{apply_reference, Library};
use reconfgrid::model::{
    AlgorithmShell, Connection, ElementType, PortSpec, Elements, ParamValue, Params, ProcessorType, SoftwareModuleSpec,
    GRID_ENDPOINT, SERVICE_INSTANCE_NAME,
};

pub const PROCESSING_KINDS: [&str; 5] = ["passthrough", "scale", "offset", "fir", "saturating-scale-i32"];

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Mostly ordinary values, with a share of signed zeros, subnormals,
/// infinities and NaNs (including one with a payload).
pub fn random_f64(rng: &mut StdRng) -> f64 {
    const SPECIAL: [f64; 10] = [
        0.0,
        -0.0,
        f64::MIN_POSITIVE,
        f64::MAX,
        f64::MIN,
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::NAN,
        5e-324,
        -2.5e-310,
    ];
    match rng.random_range(0..20) {
        0 => SPECIAL[rng.random_range(0..SPECIAL.len())],
        1 => f64::from_bits(0x7ff8_0000_0000_0001),
        2 => f64::from_bits(rng.random()),
        _ => rng.random_range(-1000.0..1000.0),
    }
}

pub fn random_i32(rng: &mut StdRng) -> i32 {
    match rng.random_range(0..10) {
        0 => [i32::MIN, i32::MAX, 0, -1, 1][rng.random_range(0..5)],
        1 => rng.random_range(-100..100),
        _ => rng.random(),
    }
}

pub fn random_input(rng: &mut StdRng, element: ElementType, n: usize) -> Elements {
    match element {
        ElementType::F64 => Elements::F64((0..n).map(|_| random_f64(rng)).collect()),
        ElementType::I32 => Elements::I32((0..n).map(|_| random_i32(rng)).collect()),
        ElementType::Bytes => Elements::Bytes((0..n).map(|_| rng.random()).collect()),
    }
}

/// Finite parameters, so they survive a JSON manifest unchanged.
pub fn random_params(rng: &mut StdRng, kind: &str) -> Params {
    let finite = |rng: &mut StdRng| match rng.random_range(0..8) {
        0 => 0.0,
        1 => -0.0,
        2 => 1.0,
        3 => 5e-324,
        _ => rng.random_range(-4.0..4.0),
    };
    let mut p = Params::new();
    match kind {
        "scale" => {
            p.insert("gain".into(), ParamValue::Real(finite(rng)));
        }
        "offset" => {
            p.insert("delta".into(), ParamValue::Real(finite(rng)));
        }
        "fir" => {
            let k = rng.random_range(1..=32);
            p.insert("coefficients".into(), ParamValue::RealList((0..k).map(|_| finite(rng)).collect()));
        }
        "saturating-scale-i32" => {
            let gain = match rng.random_range(0..6) {
                0 => [i64::MIN, i64::MAX, 0, -1][rng.random_range(0..4)],
                1 => rng.random(),
                2 => rng.random_range(-(1i64 << 33)..(1i64 << 33)),
                _ => rng.random_range(-8..8),
            };
            p.insert("gain".into(), ParamValue::Integer(gain));
        }
        _ => {}
    }
    p
}

pub fn element_of(kind: &str, rng: &mut StdRng) -> ElementType {
    match kind {
        "saturating-scale-i32" => ElementType::I32,
        "passthrough" => ElementType::ALL[rng.random_range(0..3)],
        _ => ElementType::F64,
    }
}

pub fn reference(kind: &str, params: &Params, input: &Elements) -> Elements {
    apply_reference(Library::builtin().lookup(kind).unwrap(), params, input).unwrap()
}

pub fn random_device(rng: &mut StdRng) -> FpgaDevice {
    FpgaDevice {
        lanes: rng.random_range(1..=128),
        pipeline_depth: rng.random_range(0..=32),
        reconfig_cycles: rng.random_range(0..=5000),
    }
}

pub fn registry(cpu_slots: u32, devices: Vec<FpgaDevice>) -> Registry {
    let r = Registry::new();
    if cpu_slots > 0 {
        r.register_ham(&BackendDescriptor::cpu(cpu_slots)).unwrap();
    }
    if !devices.is_empty() {
        r.register_ham(&BackendDescriptor::simfpga(devices)).unwrap();
    }
    r
}

/// Configures `vp` with the library implementation of `kind` and runs one block.
pub fn execute_on(
    registry: &Registry,
    vp: &VpId,
    processor: ProcessorType,
    kind: &str,
    params: &Params,
    input: &Elements,
) -> (Elements, CycleReport) {
    let lease = registry.acquire(vp).unwrap();
    let implementation = Library::builtin().implementation(kind, processor).unwrap();
    lease.configure(implementation, params).unwrap();
    let out = lease.execute_block(input).unwrap();
    lease.release().unwrap();
    out
}

pub fn bits(e: &Elements) -> Vec<u64> {
    match e {
        Elements::F64(v) => v.iter().map(|x| x.to_bits()).collect(),
        Elements::I32(v) => v.iter().map(|&x| x as u32 as u64).collect(),
        Elements::Bytes(v) => v.iter().map(|&x| x as u64).collect(),
    }
}

/// A random linear chain together with what it should compute.
#[derive(Debug, Clone)]
pub struct Chain {
    pub spec: SoftwareModuleSpec,
    pub element: ElementType,
    /// Processing stages in data-flow order.
    pub stages: Vec<(String, Params)>,
}

impl Chain {
    pub fn oracle(&self, input: &Elements) -> Elements {
        self.stages
            .iter()
            .fold(input.clone(), |x, (kind, params)| reference(kind, params, &x))
    }
}

/// `processing` processing shells, each with a non-empty random subset of
/// cpu/simfpga implementations. With `service` set, a grid source carrying
/// that service name heads the chain and a grid sink may close it. Shells are
/// listed in shuffled order so the validator has to recover the chain.
pub fn random_chain(rng: &mut StdRng, name: &str, processing: usize, service: Option<&str>, sink: bool) -> Chain {
    let element = ElementType::ALL[rng.random_range(0..3)];
    let pool: Vec<&str> = match element {
        ElementType::F64 => vec!["passthrough", "scale", "offset", "fir"],
        ElementType::I32 => vec!["passthrough", "saturating-scale-i32"],
        ElementType::Bytes => vec!["passthrough"],
    };
    let mut shells = Vec::new();
    let mut stages = Vec::new();
    if let Some(service) = service {
        shells.push(
            AlgorithmShell::new("gridIn", GRID_ENDPOINT)
                .with_param(SERVICE_INSTANCE_NAME, ParamValue::Text(service.to_string())),
        );
    }
    for i in 0..processing {
        let kind = pool[rng.random_range(0..pool.len())];
        let params = random_params(rng, kind);
        let mut shell = AlgorithmShell::new(format!("s{i}"), kind);
        shell.params = params.clone();
        let (cpu, fpga) = match rng.random_range(0..3) {
            0 => (true, false),
            1 => (false, true),
            _ => (true, true),
        };
        if cpu {
            shell = shell.with_implementation(ProcessorType::Cpu, format!("{kind}.cpu"));
        }
        if fpga {
            shell = shell.with_implementation(ProcessorType::SimFpga, format!("{kind}.bit"));
        }
        shells.push(shell);
        stages.push((kind.to_string(), params));
    }
    // A chain of nothing but passthroughs takes its type from a declaration.
    if element != ElementType::Bytes && stages.iter().all(|(k, _)| k == "passthrough") {
        if let Some(first) = shells.iter_mut().find(|s| s.kind == "passthrough") {
            first.inputs = Some(vec![PortSpec::input("in", element)]);
            first.outputs = Some(vec![PortSpec::output("out", element)]);
        }
    }
    if service.is_some() && sink {
        shells.push(AlgorithmShell::new("gridOut", GRID_ENDPOINT));
    }
    let connections = shells
        .windows(2)
        .map(|w| Connection::between(&w[0].id, &w[1].id))
        .collect();
    shells.shuffle(rng);
    Chain {
        spec: SoftwareModuleSpec {
            name: name.to_string(),
            shells,
            connections,
        },
        element,
        stages,
    }
}

pub fn params(pairs: &[(&str, ParamValue)]) -> Params {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect::<BTreeMap<_, _>>()
}
