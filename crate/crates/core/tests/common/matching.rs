//! Exhaustive check of the matcher on small registries.
//!
//! For every registry of up to four vps (each cpu or simfpga, idle or held),
//! every chain of up to four shells (each with a non-empty subset of cpu and
//! simfpga implementations) and every priority list, the outcome of `plan`
//! is compared against assignments enumerated by brute force and filtered
//! with a declarative greedy-consistency predicate.

use std::collections::BTreeSet;
use std::sync::{Arc, OnceLock};

use reconfgrid::deployer::{plan, DeployError, MatchPolicy};
use reconfgrid::ham::{BackendDescriptor, FpgaDevice, Registry, VirtualProcessorDescriptor};
use reconfgrid::library::Library;
use reconfgrid::model::{validate_module, AlgorithmShell, Connection, ProcessorType, SoftwareModuleSpec, ValidatedModule};

use ProcessorType::{Cpu, SimFpga};

#[derive(Debug, Clone)]
struct Vp {
    id: String,
    ty: ProcessorType,
    idle: bool,
}

#[derive(Debug, Default, Clone, Copy)]
pub struct Summary {
    pub cases: usize,
    pub planned: usize,
    pub rejected: usize,
    /// Chains the greedy matcher rejects although some assignment, ignoring
    /// priority order, would have fit.
    pub greedy_misses: usize,
}

const IMPLEMENTATION_SETS: [&[ProcessorType]; 3] = [&[Cpu], &[SimFpga], &[Cpu, SimFpga]];

fn policies() -> Vec<Vec<ProcessorType>> {
    vec![vec![SimFpga, Cpu], vec![Cpu, SimFpga], vec![Cpu], vec![SimFpga]]
}

fn chains() -> Vec<Vec<&'static [ProcessorType]>> {
    let mut out: Vec<Vec<&[ProcessorType]>> = Vec::new();
    let mut layer: Vec<Vec<&[ProcessorType]>> = vec![vec![]];
    for _ in 0..4 {
        layer = layer
            .iter()
            .flat_map(|c| {
                IMPLEMENTATION_SETS.iter().map(move |s| {
                    let mut c = c.clone();
                    c.push(*s);
                    c
                })
            })
            .collect();
        out.extend(layer.iter().cloned());
    }
    out
}

fn module(impls: &[&[ProcessorType]]) -> Arc<ValidatedModule> {
    let shells: Vec<AlgorithmShell> = impls
        .iter()
        .enumerate()
        .map(|(i, set)| {
            set.iter().fold(AlgorithmShell::new(format!("s{i}"), "passthrough"), |s, &p| {
                s.with_implementation(p, format!("passthrough.{p}"))
            })
        })
        .collect();
    let connections = shells.windows(2).map(|w| Connection::between(&w[0].id, &w[1].id)).collect();
    let spec = SoftwareModuleSpec {
        name: "m".into(),
        shells,
        connections,
    };
    Arc::new(validate_module(&spec, Library::builtin()).unwrap())
}

fn registries() -> Vec<Vec<Vp>> {
    let names = ["d", "b", "a", "c"];
    let mut out = vec![vec![]];
    let mut layer: Vec<Vec<Vp>> = vec![vec![]];
    for slot in 0..4 {
        layer = layer
            .iter()
            .flat_map(|r| {
                [(Cpu, true), (Cpu, false), (SimFpga, true), (SimFpga, false)].map(|(ty, idle)| {
                    let mut r = r.clone();
                    r.push(Vp {
                        id: format!("{}#1", names[slot]),
                        ty,
                        idle,
                    });
                    r
                })
            })
            .collect();
        out.extend(layer.iter().cloned());
    }
    out
}

/// Candidate types of shell `impls` under `policy`, best first.
fn candidates(policy: &[ProcessorType], impls: &[ProcessorType]) -> Vec<ProcessorType> {
    policy.iter().copied().filter(|p| impls.contains(p)).collect()
}

/// Whether `choice` (vp indices, one per leading shell) is what a greedy,
/// priority-ordered, smallest-id-first matcher is allowed to produce.
fn greedy_consistent(vps: &[Vp], chain: &[&[ProcessorType]], policy: &[ProcessorType], choice: &[usize]) -> bool {
    for (i, &v) in choice.iter().enumerate() {
        let taken: BTreeSet<usize> = choice[..i].iter().copied().collect();
        let free = |t: ProcessorType| -> Vec<usize> {
            (0..vps.len())
                .filter(|j| vps[*j].idle && vps[*j].ty == t && !taken.contains(j))
                .collect()
        };
        let cand = candidates(policy, chain[i]);
        let Some(rank) = cand.iter().position(|&t| t == vps[v].ty) else {
            return false;
        };
        if !vps[v].idle || taken.contains(&v) {
            return false;
        }
        if cand[..rank].iter().any(|&better| !free(better).is_empty()) {
            return false;
        }
        if free(vps[v].ty).iter().any(|&j| vps[j].id < vps[v].id) {
            return false;
        }
    }
    true
}

/// Injective sequences of `len` vp indices out of `n_vps`, memoized.
fn sequences(n_vps: usize, len: usize) -> &'static [Vec<usize>] {
    static TABLE: OnceLock<Vec<Vec<Vec<Vec<usize>>>>> = OnceLock::new();
    &TABLE.get_or_init(|| (0..=4).map(|n| (0..=4).map(|l| enumerate(n, l)).collect()).collect())[n_vps][len]
}

fn enumerate(n_vps: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|s| {
                (0..n_vps)
                    .filter(|v| !s.contains(v))
                    .map(|v| {
                        let mut s = s.clone();
                        s.push(v);
                        s
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
    }
    out
}

fn any_fit(vps: &[Vp], chain: &[&[ProcessorType]], policy: &[ProcessorType]) -> bool {
    sequences(vps.len(), chain.len()).iter().any(|s| {
        s.iter()
            .enumerate()
            .all(|(i, &v)| vps[v].idle && candidates(policy, chain[i]).contains(&vps[v].ty))
    })
}

fn check_case(
    vps: &[Vp],
    snapshot: &[VirtualProcessorDescriptor],
    (chain, module): &(Vec<&[ProcessorType]>, Arc<ValidatedModule>),
    policy: &[ProcessorType],
    summary: &mut Summary,
) -> Result<(), String> {
    let result = plan(module.clone(), snapshot, &MatchPolicy::new(policy.to_vec()).unwrap());
    let ctx = || format!("vps {vps:?}, chain {chain:?}, policy {policy:?}");
    summary.cases += 1;

    let full: Vec<&Vec<usize>> = sequences(vps.len(), chain.len())
        .iter()
        .filter(|s| greedy_consistent(vps, chain, policy, s))
        .collect();
    if full.len() > 1 {
        return Err(format!("greedy predicate admits {} assignments: {}", full.len(), ctx()));
    }
    match (result, full.first()) {
        (Ok(plan), Some(expected)) => {
            summary.planned += 1;
            let got: Vec<&str> = plan.bindings.iter().map(|b| b.vp_id.as_str()).collect();
            let want: Vec<&str> = expected.iter().map(|&v| vps[v].id.as_str()).collect();
            if got != want {
                return Err(format!("bound {got:?}, expected {want:?}: {}", ctx()));
            }
            for (b, &v) in plan.bindings.iter().zip(expected.iter()) {
                if b.implementation.processor_type != vps[v].ty {
                    return Err(format!("implementation type {} on {}: {}", b.implementation.processor_type, b.vp_id, ctx()));
                }
            }
            Ok(())
        }
        (Err(err), None) => {
            summary.rejected += 1;
            if any_fit(vps, chain, policy) {
                summary.greedy_misses += 1;
            }
            let stuck = (0..chain.len())
                .rev()
                .find(|&k| {
                    sequences(vps.len(), k)
                        .iter()
                        .any(|s| greedy_consistent(vps, chain, policy, s))
                })
                .unwrap_or(0);
            let shell = format!("s{stuck}");
            let registered: BTreeSet<ProcessorType> = vps.iter().map(|v| v.ty).collect();
            let compatible = candidates(policy, chain[stuck]).iter().any(|t| registered.contains(t));
            match (&err, compatible) {
                (DeployError::InsufficientProcessors { shell: s }, true) if *s == shell => Ok(()),
                (DeployError::NoCompatibleImplementation { shell: s, .. }, false) if *s == shell => Ok(()),
                _ => Err(format!("error {err:?}, expected failure at {shell} (compatible: {compatible}): {}", ctx())),
            }
        }
        (Ok(plan), None) => Err(format!("planned {:?} but no greedy assignment exists: {}", plan.bindings, ctx())),
        (Err(err), Some(_)) => Err(format!("rejected with {err:?} but a greedy assignment exists: {}", ctx())),
    }
}

pub fn exhaustive() -> Result<Summary, String> {
    let chains: Vec<_> = chains().into_iter().map(|c| {
        let m = module(&c);
        (c, m)
    }).collect();
    let policies = policies();
    let mut summary = Summary::default();
    for vps in registries() {
        let registry = Registry::new();
        for vp in &vps {
            let (name, _) = vp.id.split_once('#').unwrap();
            let backend = match vp.ty {
                Cpu => BackendDescriptor::Cpu {
                    id: Some(name.into()),
                    slots: 1,
                },
                _ => BackendDescriptor::SimFpga {
                    id: Some(name.into()),
                    devices: vec![FpgaDevice {
                        lanes: 4,
                        pipeline_depth: 1,
                        reconfig_cycles: 1,
                    }],
                },
            };
            registry.register_ham(&backend).map_err(|e| e.to_string())?;
        }
        let held: Vec<_> = vps
            .iter()
            .filter(|v| !v.idle)
            .map(|v| registry.acquire(&reconfgrid::ham::VpId::new(&v.id)).unwrap())
            .collect();
        let snapshot = registry.snapshot();
        for chain in &chains {
            for policy in &policies {
                check_case(&vps, &snapshot, chain, policy, &mut summary)?;
            }
        }
        drop(held);
    }
    Ok(summary)
}
