//! JSON manifest reader and writer for [`SoftwareModuleSpec`].

use std::collections::{BTreeMap, HashSet};

use serde_json::{json, Map, Value};

use super::{
    is_identifier, AlgorithmShell, Connection, ElementType, ParamValue, Params, PortRef, PortSpec,
    ProcessorType, SoftwareModuleSpec,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ManifestError {
    #[error("malformed manifest: {0}")]
    Syntax(String),
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
}

impl ManifestError {
    fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        ManifestError::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    /// The offending key path for schema errors.
    pub fn path(&self) -> Option<&str> {
        match self {
            ManifestError::Schema { path, .. } => Some(path),
            ManifestError::Syntax(_) => None,
        }
    }
}

type Result<T> = std::result::Result<T, ManifestError>;

pub fn parse_module_spec(text: &str) -> Result<SoftwareModuleSpec> {
    let root: Value = serde_json::from_str(text).map_err(|e| ManifestError::Syntax(e.to_string()))?;
    let obj = as_object(&root, "")?;
    reject_unknown(obj, "", &["name", "shells", "connections"])?;

    let name = required_str(obj, "", "name")?;
    let shells_val = required(obj, "", "shells")?;
    let shells_arr = shells_val
        .as_array()
        .ok_or_else(|| ManifestError::schema("shells", "expected an array"))?;
    let mut shells = Vec::with_capacity(shells_arr.len());
    let mut seen = HashSet::new();
    for (i, v) in shells_arr.iter().enumerate() {
        let path = format!("shells[{i}]");
        let shell = parse_shell(v, &path)?;
        if !seen.insert(shell.id.clone()) {
            return Err(ManifestError::schema(
                format!("{path}.id"),
                format!("duplicate shell id {:?}", shell.id),
            ));
        }
        shells.push(shell);
    }

    let conns_val = required(obj, "", "connections")?;
    let conns_arr = conns_val
        .as_array()
        .ok_or_else(|| ManifestError::schema("connections", "expected an array"))?;
    let mut connections = Vec::with_capacity(conns_arr.len());
    for (i, v) in conns_arr.iter().enumerate() {
        let path = format!("connections[{i}]");
        let c = as_object(v, &path)?;
        reject_unknown(c, &path, &["from", "to"])?;
        let from = port_ref(c, &path, "from", &seen)?;
        let to = port_ref(c, &path, "to", &seen)?;
        connections.push(Connection { from, to });
    }

    Ok(SoftwareModuleSpec {
        name,
        shells,
        connections,
    })
}

fn parse_shell(v: &Value, path: &str) -> Result<AlgorithmShell> {
    let obj = as_object(v, path)?;
    reject_unknown(
        obj,
        path,
        &["id", "kind", "params", "implementations", "inputs", "outputs"],
    )?;
    let id = required_str(obj, path, "id")?;
    if !is_identifier(&id) {
        return Err(ManifestError::schema(
            join(path, "id"),
            format!("{id:?} is not an identifier"),
        ));
    }
    let kind = required_str(obj, path, "kind")?;

    let mut params = Params::new();
    if let Some(p) = obj.get("params") {
        let ppath = join(path, "params");
        for (k, v) in as_object(p, &ppath)? {
            params.insert(k.clone(), param_value(v, &join(&ppath, k))?);
        }
    }

    let mut implementations = BTreeMap::new();
    if let Some(m) = obj.get("implementations") {
        let ipath = join(path, "implementations");
        for (k, v) in as_object(m, &ipath)? {
            let kpath = join(&ipath, k);
            let processor: ProcessorType = k.parse().map_err(|e: String| ManifestError::schema(&kpath, e))?;
            let artifact = v
                .as_str()
                .ok_or_else(|| ManifestError::schema(&kpath, "expected a string"))?;
            implementations.insert(processor, artifact.to_string());
        }
    }

    let inputs = obj
        .get("inputs")
        .map(|v| ports(v, &join(path, "inputs"), PortSpec::input))
        .transpose()?;
    let outputs = obj
        .get("outputs")
        .map(|v| ports(v, &join(path, "outputs"), PortSpec::output))
        .transpose()?;

    Ok(AlgorithmShell {
        id,
        kind,
        params,
        inputs,
        outputs,
        implementations,
    })
}

fn param_value(v: &Value, path: &str) -> Result<ParamValue> {
    match v {
        Value::Number(n) => Ok(match n.as_i64() {
            Some(i) => ParamValue::Integer(i),
            None => ParamValue::Real(n.as_f64().unwrap_or(f64::NAN)),
        }),
        Value::String(s) => Ok(ParamValue::Text(s.clone())),
        Value::Array(items) => items
            .iter()
            .enumerate()
            .map(|(i, x)| {
                x.as_f64()
                    .ok_or_else(|| ManifestError::schema(format!("{path}[{i}]"), "expected a number"))
            })
            .collect::<Result<Vec<_>>>()
            .map(ParamValue::RealList),
        _ => Err(ManifestError::schema(
            path,
            "expected a number, string, or array of numbers",
        )),
    }
}

fn ports(v: &Value, path: &str, make: fn(String, ElementType) -> PortSpec) -> Result<Vec<PortSpec>> {
    let arr = v
        .as_array()
        .ok_or_else(|| ManifestError::schema(path, "expected an array"))?;
    let mut out: Vec<PortSpec> = Vec::with_capacity(arr.len());
    for (i, p) in arr.iter().enumerate() {
        let ppath = format!("{path}[{i}]");
        let obj = as_object(p, &ppath)?;
        reject_unknown(obj, &ppath, &["name", "element"])?;
        let name = required_str(obj, &ppath, "name")?;
        if !is_identifier(&name) {
            return Err(ManifestError::schema(
                join(&ppath, "name"),
                format!("{name:?} is not an identifier"),
            ));
        }
        if out.iter().any(|q| q.name == name) {
            return Err(ManifestError::schema(
                join(&ppath, "name"),
                format!("duplicate port name {name:?}"),
            ));
        }
        let element = required_str(obj, &ppath, "element")?
            .parse::<ElementType>()
            .map_err(|e| ManifestError::schema(join(&ppath, "element"), e.to_string()))?;
        out.push(make(name, element));
    }
    Ok(out)
}

fn port_ref(obj: &Map<String, Value>, path: &str, key: &str, shells: &HashSet<String>) -> Result<PortRef> {
    let text = required_str(obj, path, key)?;
    let r: PortRef = text
        .parse()
        .map_err(|e: String| ManifestError::schema(join(path, key), e))?;
    if !shells.contains(&r.shell) {
        return Err(ManifestError::schema(
            join(path, key),
            format!("unknown shell {:?}", r.shell),
        ));
    }
    Ok(r)
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn as_object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| {
        ManifestError::schema(if path.is_empty() { "$" } else { path }, "expected an object")
    })
}

fn required<'a>(obj: &'a Map<String, Value>, path: &str, key: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| ManifestError::schema(join(path, key), "missing required key"))
}

fn required_str(obj: &Map<String, Value>, path: &str, key: &str) -> Result<String> {
    required(obj, path, key)?
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| ManifestError::schema(join(path, key), "expected a string"))
}

fn reject_unknown(obj: &Map<String, Value>, path: &str, allowed: &[&str]) -> Result<()> {
    match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(ManifestError::schema(join(path, k), "unknown key")),
        None => Ok(()),
    }
}

/// Renders a spec back into its manifest form.
pub fn to_manifest_json(spec: &SoftwareModuleSpec) -> String {
    let shells: Vec<Value> = spec
        .shells
        .iter()
        .map(|s| {
            let mut obj = Map::new();
            obj.insert("id".into(), json!(s.id));
            obj.insert("kind".into(), json!(s.kind));
            obj.insert("params".into(), serde_json::to_value(&s.params).expect("params serialize"));
            let impls: Map<String, Value> = s
                .implementations
                .iter()
                .map(|(p, a)| (p.as_str().to_string(), json!(a)))
                .collect();
            obj.insert("implementations".into(), Value::Object(impls));
            if let Some(inputs) = &s.inputs {
                obj.insert("inputs".into(), ports_json(inputs));
            }
            if let Some(outputs) = &s.outputs {
                obj.insert("outputs".into(), ports_json(outputs));
            }
            Value::Object(obj)
        })
        .collect();
    let connections: Vec<Value> = spec
        .connections
        .iter()
        .map(|c| json!({ "from": c.from.to_string(), "to": c.to.to_string() }))
        .collect();
    let doc = json!({ "name": spec.name, "shells": shells, "connections": connections });
    serde_json::to_string_pretty(&doc).expect("manifest serialize")
}

fn ports_json(ports: &[PortSpec]) -> Value {
    Value::Array(
        ports
            .iter()
            .map(|p| json!({ "name": p.name, "element": p.element.as_str() }))
            .collect(),
    )
}
