//! Chain validation: kinds, port signatures, element types and the
//! single-linear-chain shape.

use std::collections::{HashMap, HashSet};

use crate::library::{KernelError, Library};

use super::{
    is_service_name, AlgorithmShell, Connection, ElementType, PortRef, PortSpec, ProcessorType,
    SoftwareModuleSpec, SERVICE_INSTANCE_NAME,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ValidationError {
    #[error("duplicate shell id {0:?}")]
    DuplicateShell(String),
    #[error("shell {shell:?}: unknown algorithm kind {kind:?}")]
    UnknownKind { shell: String, kind: String },
    #[error("shell {shell:?}: invalid parameters: {source}")]
    InvalidParams { shell: String, source: KernelError },
    #[error("shell {shell:?} declares no implementations")]
    NoImplementations { shell: String },
    #[error("shell {shell:?}: no {processor} implementation of its kind is registered")]
    UnsupportedImplementation { shell: String, processor: ProcessorType },
    #[error("shell {shell:?}: {message}")]
    PortArity { shell: String, message: String },
    #[error("connection {connection}: no port {port}")]
    UnknownPort { connection: Connection, port: PortRef },
    #[error("shell {shell:?} port {port:?}: kind requires {expected}, declared {actual}")]
    SignatureMismatch {
        shell: String,
        port: String,
        expected: ElementType,
        actual: ElementType,
    },
    #[error("connection {connection}: expected {expected}, got {actual}")]
    PortTypeMismatch {
        connection: Connection,
        expected: ElementType,
        actual: ElementType,
    },
    #[error("not a single linear chain ({reason}): {shells:?}")]
    BrokenChain { shells: Vec<String>, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShellRole {
    Processing,
    /// Grid endpoint feeding the chain; no input port.
    GridSource,
    /// Grid endpoint draining the chain; no output port.
    GridSink,
}

/// A shell with its ports and element types fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedShell {
    pub shell: AlgorithmShell,
    pub role: ShellRole,
    pub input: Option<PortSpec>,
    pub output: Option<PortSpec>,
}

impl ResolvedShell {
    pub fn id(&self) -> &str {
        &self.shell.id
    }

    pub fn is_processing(&self) -> bool {
        self.role == ShellRole::Processing
    }
}

/// A module whose shells form one checked chain, held in head-to-tail order.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedModule {
    spec: SoftwareModuleSpec,
    chain: Vec<ResolvedShell>,
}

impl ValidatedModule {
    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn spec(&self) -> &SoftwareModuleSpec {
        &self.spec
    }

    /// Shells in chain order.
    pub fn shells(&self) -> &[ResolvedShell] {
        &self.chain
    }

    pub fn order(&self) -> Vec<&str> {
        self.chain.iter().map(ResolvedShell::id).collect()
    }

    /// Element type entering the chain, after any source endpoint.
    pub fn input_element(&self) -> ElementType {
        let head = &self.chain[0];
        match head.role {
            ShellRole::GridSource => head.output.as_ref(),
            _ => head.input.as_ref(),
        }
        .expect("resolved head has the port")
        .element
    }

    /// Element type leaving the chain, before any sink endpoint.
    pub fn output_element(&self) -> ElementType {
        let tail = self.chain.last().expect("non-empty chain");
        match tail.role {
            ShellRole::GridSink => tail.input.as_ref(),
            _ => tail.output.as_ref(),
        }
        .expect("resolved tail has the port")
        .element
    }

    /// Distinct `serviceInstanceName` values of the grid endpoints, in chain order.
    pub fn service_names(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for s in &self.chain {
            if let Some(n) = s.shell.service_instance_name() {
                if !names.iter().any(|x| x == n) {
                    names.push(n.to_string());
                }
            }
        }
        names
    }
}

type Result<T> = std::result::Result<T, ValidationError>;

/// Port names of one shell before element types are known, plus any declared types.
struct Ports {
    input: Option<(String, Option<ElementType>)>,
    output: Option<(String, Option<ElementType>)>,
}

pub fn validate_module(spec: &SoftwareModuleSpec, library: &Library) -> Result<ValidatedModule> {
    let mut index = HashMap::new();
    for (i, s) in spec.shells.iter().enumerate() {
        if index.insert(s.id.as_str(), i).is_some() {
            return Err(ValidationError::DuplicateShell(s.id.clone()));
        }
    }

    let mut kinds = Vec::with_capacity(spec.shells.len());
    for s in &spec.shells {
        let kind = library.lookup(&s.kind).map_err(|_| ValidationError::UnknownKind {
            shell: s.id.clone(),
            kind: s.kind.clone(),
        })?;
        check_shell(s, library)?;
        kinds.push(kind);
    }

    let ports = spec
        .shells
        .iter()
        .map(|s| shell_ports(s, &spec.connections))
        .collect::<Result<Vec<_>>>()?;

    for c in &spec.connections {
        let from = &ports[index[c.from.shell.as_str()]];
        if from.output.as_ref().map(|p| &p.0) != Some(&c.from.port) {
            return Err(ValidationError::UnknownPort {
                connection: c.clone(),
                port: c.from.clone(),
            });
        }
        let to = &ports[index[c.to.shell.as_str()]];
        if to.input.as_ref().map(|p| &p.0) != Some(&c.to.port) {
            return Err(ValidationError::UnknownPort {
                connection: c.clone(),
                port: c.to.clone(),
            });
        }
    }

    let (order, links) = chain_order(spec, &index)?;

    // Fixed input/output types per shell in chain order; polymorphic shells
    // tie both sides to one type.
    let mut fixed_in = Vec::with_capacity(order.len());
    let mut fixed_out = Vec::with_capacity(order.len());
    let mut polymorphic = Vec::with_capacity(order.len());
    for &i in &order {
        let s = &spec.shells[i];
        let (din, dout) = (
            ports[i].input.as_ref().and_then(|p| p.1),
            ports[i].output.as_ref().and_then(|p| p.1),
        );
        match (kinds[i].input_element, kinds[i].output_element) {
            (Some(kin), Some(kout)) => {
                for (declared, expected, port) in [(din, kin, &ports[i].input), (dout, kout, &ports[i].output)] {
                    if let Some(actual) = declared.filter(|&d| d != expected) {
                        return Err(ValidationError::SignatureMismatch {
                            shell: s.id.clone(),
                            port: port.as_ref().expect("declared").0.clone(),
                            expected,
                            actual,
                        });
                    }
                }
                fixed_in.push(Some(kin));
                fixed_out.push(Some(kout));
                polymorphic.push(false);
            }
            _ => {
                if let (Some(a), Some(b)) = (din, dout) {
                    if a != b {
                        return Err(ValidationError::SignatureMismatch {
                            shell: s.id.clone(),
                            port: ports[i].output.as_ref().expect("declared").0.clone(),
                            expected: a,
                            actual: b,
                        });
                    }
                }
                let t = din.or(dout);
                fixed_in.push(t);
                fixed_out.push(t);
                polymorphic.push(true);
            }
        }
    }

    let m = order.len();
    let mut link_types: Vec<Option<ElementType>> = Vec::with_capacity(m.saturating_sub(1));
    for j in 0..m.saturating_sub(1) {
        match (fixed_out[j], fixed_in[j + 1]) {
            (Some(actual), Some(expected)) if actual != expected => {
                return Err(ValidationError::PortTypeMismatch {
                    connection: links[j].clone(),
                    expected,
                    actual,
                });
            }
            (up, down) => link_types.push(up.or(down)),
        }
    }
    for j in 1..m.saturating_sub(1) {
        if !polymorphic[j] {
            continue;
        }
        match (link_types[j - 1], link_types[j]) {
            (Some(a), None) => link_types[j] = Some(a),
            (Some(actual), Some(expected)) if actual != expected => {
                return Err(ValidationError::PortTypeMismatch {
                    connection: links[j].clone(),
                    expected,
                    actual,
                });
            }
            _ => {}
        }
    }
    for j in (1..m.saturating_sub(1)).rev() {
        if polymorphic[j] && link_types[j - 1].is_none() {
            link_types[j - 1] = link_types[j];
        }
    }

    let chain = order
        .iter()
        .enumerate()
        .map(|(pos, &i)| {
            let shell = spec.shells[i].clone();
            let incoming = pos.checked_sub(1).and_then(|j| link_types[j]);
            let outgoing = link_types.get(pos).copied().flatten();
            let (tin, tout) = if polymorphic[pos] {
                let t = incoming
                    .or(outgoing)
                    .or(fixed_in[pos])
                    .unwrap_or(ElementType::Bytes);
                (t, t)
            } else {
                (fixed_in[pos].expect("fixed"), fixed_out[pos].expect("fixed"))
            };
            let input = ports[i].input.as_ref().map(|(n, _)| PortSpec::input(n.clone(), tin));
            let output = ports[i].output.as_ref().map(|(n, _)| PortSpec::output(n.clone(), tout));
            let role = match (kinds[i].is_grid_endpoint(), &input) {
                (false, _) => ShellRole::Processing,
                (true, None) => ShellRole::GridSource,
                (true, Some(_)) => ShellRole::GridSink,
            };
            ResolvedShell {
                shell,
                role,
                input,
                output,
            }
        })
        .collect();

    Ok(ValidatedModule {
        spec: spec.clone(),
        chain,
    })
}

fn check_shell(s: &AlgorithmShell, library: &Library) -> Result<()> {
    let kind = library.lookup(&s.kind).expect("looked up by caller");
    if kind.is_grid_endpoint() {
        if let Some(&processor) = s.implementations.keys().find(|&&p| p != ProcessorType::Grid) {
            return Err(ValidationError::UnsupportedImplementation {
                shell: s.id.clone(),
                processor,
            });
        }
        if let Some(v) = s.params.get(SERVICE_INSTANCE_NAME) {
            if !v.as_text().is_some_and(is_service_name) {
                return Err(ValidationError::InvalidParams {
                    shell: s.id.clone(),
                    source: KernelError::InvalidParam {
                        name: SERVICE_INSTANCE_NAME.to_string(),
                        expected: "a service name matching [A-Za-z0-9_-]{1,64}".to_string(),
                    },
                });
            }
        }
        return Ok(());
    }
    if s.implementations.is_empty() {
        return Err(ValidationError::NoImplementations { shell: s.id.clone() });
    }
    for &processor in s.implementations.keys() {
        if library.implementation(&s.kind, processor).is_none() {
            return Err(ValidationError::UnsupportedImplementation {
                shell: s.id.clone(),
                processor,
            });
        }
    }
    kind.check_params(&s.params)
        .map_err(|source| ValidationError::InvalidParams {
            shell: s.id.clone(),
            source,
        })
}

fn shell_ports(s: &AlgorithmShell, connections: &[Connection]) -> Result<Ports> {
    let arity = |message: &str| ValidationError::PortArity {
        shell: s.id.clone(),
        message: message.to_string(),
    };
    let single = |declared: &Option<Vec<PortSpec>>, used: Vec<&String>, default: &str| -> Result<Option<(String, Option<ElementType>)>> {
        match declared {
            Some(ports) if ports.len() > 1 => Err(arity("at most one port per direction")),
            Some(ports) => Ok(ports.first().map(|p| (p.name.clone(), Some(p.element)))),
            None if s.is_grid_endpoint() => {
                let mut names: Vec<&String> = Vec::new();
                for n in used {
                    if !names.contains(&n) {
                        names.push(n);
                    }
                }
                match names.as_slice() {
                    [] => Ok(None),
                    [n] => Ok(Some(((*n).clone(), None))),
                    _ => Err(arity("at most one port per direction")),
                }
            }
            None => Ok(Some((default.to_string(), None))),
        }
    };
    let used_in = connections.iter().filter(|c| c.to.shell == s.id).map(|c| &c.to.port).collect();
    let used_out = connections.iter().filter(|c| c.from.shell == s.id).map(|c| &c.from.port).collect();
    let input = single(&s.inputs, used_in, "in")?;
    let output = single(&s.outputs, used_out, "out")?;
    if s.is_grid_endpoint() {
        match (&input, &output) {
            (None, None) => return Err(arity("a grid endpoint needs an input or an output")),
            (Some(_), Some(_)) => {
                return Err(arity("a grid endpoint is either a source or a sink, not both"))
            }
            _ => {}
        }
    } else if input.is_none() || output.is_none() {
        return Err(arity("processing shells have exactly one input and one output"));
    }
    Ok(Ports { input, output })
}

/// Orders the shells head to tail and returns the connection between each
/// consecutive pair.
fn chain_order(spec: &SoftwareModuleSpec, index: &HashMap<&str, usize>) -> Result<(Vec<usize>, Vec<Connection>)> {
    let n = spec.shells.len();
    if n == 0 {
        return Err(ValidationError::BrokenChain {
            shells: vec![],
            reason: "module has no shells".into(),
        });
    }
    let mut incoming = vec![0usize; n];
    let mut next: Vec<Option<(usize, &Connection)>> = vec![None; n];
    let mut fan_out = HashSet::new();
    for c in &spec.connections {
        let (a, b) = (index[c.from.shell.as_str()], index[c.to.shell.as_str()]);
        incoming[b] += 1;
        if next[a].replace((b, c)).is_some() {
            fan_out.insert(a);
        }
    }
    let mut bad: Vec<usize> = (0..n).filter(|&i| incoming[i] > 1 || fan_out.contains(&i)).collect();
    if !bad.is_empty() {
        bad.sort_unstable();
        return Err(broken(spec, &bad, "shell with more than one incoming or outgoing connection"));
    }
    let heads: Vec<usize> = (0..n).filter(|&i| incoming[i] == 0).collect();
    if heads.len() != 1 {
        let culprits = if heads.is_empty() { (0..n).collect() } else { heads };
        return Err(broken(spec, &culprits, "expected exactly one head"));
    }
    let mut order = vec![heads[0]];
    let mut links = Vec::new();
    let mut seen = vec![false; n];
    seen[heads[0]] = true;
    let mut cur = heads[0];
    while let Some((b, c)) = next[cur] {
        if seen[b] {
            break;
        }
        seen[b] = true;
        order.push(b);
        links.push(c.clone());
        cur = b;
    }
    if order.len() != n {
        let rest: Vec<usize> = (0..n).filter(|&i| !seen[i]).collect();
        return Err(broken(spec, &rest, "cycle or disconnected shells"));
    }
    Ok((order, links))
}

fn broken(spec: &SoftwareModuleSpec, idx: &[usize], reason: &str) -> ValidationError {
    ValidationError::BrokenChain {
        shells: idx.iter().map(|&i| spec.shells[i].id.clone()).collect(),
        reason: reason.to_string(),
    }
}
