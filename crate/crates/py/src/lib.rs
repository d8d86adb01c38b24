//! Python bindings: build and validate modules, run chains locally on a
//! registry of virtual processors, host them as services, and call them
//! remotely.

use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyBytes, PyDict, PyFloat, PyInt, PyList, PyString};

use reconfgrid::client::{self, ClientSession};
use reconfgrid::deployer::{self, DeploymentState, MatchPolicy};
use reconfgrid::ham::{self, BackendDescriptor, CycleReport, FpgaDevice, VpAttributes, VpState};
use reconfgrid::library::Library;
use reconfgrid::model::{
    parse_module_spec, to_manifest_json, validate_module, ElementType, Elements, ParamValue, Params, ProcessorType,
    ValidatedModule,
};
use reconfgrid::service;
use reconfgrid::wire::ServiceUrl;

create_exception!(reconfgrid, ReconfgridError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    ReconfgridError::new_err(e.to_string())
}

fn element_type(name: &str) -> PyResult<ElementType> {
    ElementType::from_str(name).map_err(err)
}

fn to_elements(data: &Bound<'_, PyAny>, element: ElementType) -> PyResult<Elements> {
    Ok(match element {
        ElementType::F64 => Elements::F64(data.extract()?),
        ElementType::I32 => Elements::I32(data.extract()?),
        ElementType::Bytes => Elements::Bytes(data.extract()?),
    })
}

fn from_elements<'py>(py: Python<'py>, e: &Elements) -> PyResult<Bound<'py, PyAny>> {
    Ok(match e {
        Elements::F64(v) => PyList::new(py, v)?.into_any(),
        Elements::I32(v) => PyList::new(py, v)?.into_any(),
        Elements::Bytes(v) => PyBytes::new(py, v).into_any(),
    })
}

fn to_params(dict: Option<&Bound<'_, PyDict>>) -> PyResult<Params> {
    let mut params = Params::new();
    let Some(dict) = dict else {
        return Ok(params);
    };
    for (k, v) in dict.iter() {
        let value = if v.is_instance_of::<PyBool>() {
            return Err(err(format!("parameter {k}: booleans are not parameters")));
        } else if v.is_instance_of::<PyInt>() {
            ParamValue::Integer(v.extract()?)
        } else if v.is_instance_of::<PyFloat>() {
            ParamValue::Real(v.extract()?)
        } else if v.is_instance_of::<PyString>() {
            ParamValue::Text(v.extract()?)
        } else {
            ParamValue::RealList(v.extract()?)
        };
        params.insert(k.extract()?, value);
    }
    Ok(params)
}

fn report_dict<'py>(py: Python<'py>, r: &CycleReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("reconfig_cycles", r.reconfig_cycles)?;
    d.set_item("compute_cycles", r.compute_cycles)?;
    d.set_item("elements_processed", r.elements_processed)?;
    Ok(d)
}

/// A validated software module.
#[pyclass(name = "Module", frozen)]
struct PyModule_ {
    inner: Arc<ValidatedModule>,
}

#[pymethods]
impl PyModule_ {
    /// Parses and validates a JSON manifest.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let spec = parse_module_spec(text).map_err(err)?;
        let module = validate_module(&spec, Library::builtin()).map_err(err)?;
        Ok(PyModule_ {
            inner: Arc::new(module),
        })
    }

    #[getter]
    fn name(&self) -> &str {
        self.inner.name()
    }

    /// Shell ids in data-flow order.
    #[getter]
    fn order(&self) -> Vec<String> {
        self.inner.order().into_iter().map(String::from).collect()
    }

    #[getter]
    fn input_element(&self) -> &'static str {
        self.inner.input_element().as_str()
    }

    #[getter]
    fn output_element(&self) -> &'static str {
        self.inner.output_element().as_str()
    }

    #[getter]
    fn service_names(&self) -> Vec<String> {
        self.inner.service_names()
    }

    fn to_json(&self) -> String {
        to_manifest_json(self.inner.spec())
    }

    fn __repr__(&self) -> String {
        format!("Module({:?}, order={:?})", self.inner.name(), self.inner.order())
    }
}

/// Pool of virtual processors.
#[pyclass(name = "Registry", frozen)]
struct PyRegistry {
    inner: ham::Registry,
}

#[pymethods]
impl PyRegistry {
    #[new]
    fn new() -> Self {
        PyRegistry {
            inner: ham::Registry::new(),
        }
    }

    /// Adds `slots` cpu processors; returns their ids.
    #[pyo3(signature = (slots, id=None))]
    fn add_cpu(&self, slots: u32, id: Option<String>) -> PyResult<Vec<String>> {
        self.register(BackendDescriptor::Cpu { id, slots })
    }

    /// Adds one simulated FPGA per `(lanes, pipeline_depth, reconfig_cycles)` tuple.
    #[pyo3(signature = (devices, id=None))]
    fn add_simfpga(&self, devices: Vec<(u64, u64, u64)>, id: Option<String>) -> PyResult<Vec<String>> {
        let devices = devices
            .into_iter()
            .map(|(lanes, pipeline_depth, reconfig_cycles)| FpgaDevice {
                lanes,
                pipeline_depth,
                reconfig_cycles,
            })
            .collect();
        self.register(BackendDescriptor::SimFpga { id, devices })
    }

    fn add_grid(&self) -> PyResult<Vec<String>> {
        self.register(BackendDescriptor::grid())
    }

    /// One dict per processor: id, type, state, and the FPGA geometry if any.
    fn snapshot<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner
            .snapshot()
            .iter()
            .map(|d| {
                let out = PyDict::new(py);
                out.set_item("id", d.vp_id.as_str())?;
                out.set_item("type", d.processor_type().as_str())?;
                let state = match &d.state {
                    VpState::Idle => "idle".to_string(),
                    VpState::Pending => "pending".to_string(),
                    VpState::Configured(a) => format!("configured:{a}"),
                    VpState::Busy(a) => format!("busy:{a}"),
                };
                out.set_item("state", state)?;
                if let VpAttributes::SimFpga(dev) = d.attributes {
                    out.set_item("lanes", dev.lanes)?;
                    out.set_item("pipeline_depth", dev.pipeline_depth)?;
                    out.set_item("reconfig_cycles", dev.reconfig_cycles)?;
                }
                Ok(out)
            })
            .collect()
    }
}

impl PyRegistry {
    fn register(&self, backend: BackendDescriptor) -> PyResult<Vec<String>> {
        let added = self.inner.register_ham(&backend).map_err(err)?;
        Ok(added.into_iter().map(|d| d.vp_id.as_str().to_string()).collect())
    }
}

/// A module bound to processors.
#[pyclass(name = "Deployment", frozen)]
struct PyDeployment {
    inner: Arc<deployer::Deployment>,
}

#[pymethods]
impl PyDeployment {
    /// `(shell_id, vp_id, processor_type)` per shell in chain order.
    #[getter]
    fn bindings(&self) -> Vec<(String, String, &'static str)> {
        self.inner
            .plan()
            .bindings
            .iter()
            .map(|b| {
                (
                    b.shell_id.clone(),
                    b.vp_id.as_str().to_string(),
                    b.implementation.processor_type.as_str(),
                )
            })
            .collect()
    }

    #[getter]
    fn state(&self) -> &'static str {
        match self.inner.state() {
            DeploymentState::Planned => "planned",
            DeploymentState::Running => "running",
            DeploymentState::Stopped => "stopped",
        }
    }

    /// Reconfiguration paid at deploy time, per processing shell.
    fn setup_reports<'py>(&self, py: Python<'py>) -> PyResult<Vec<(String, Bound<'py, PyDict>)>> {
        self.inner
            .setup_reports()
            .iter()
            .map(|s| Ok((s.shell_id.clone(), report_dict(py, &s.report)?)))
            .collect()
    }

    /// Starts processing; with a container, also exposes the module's
    /// services and returns their URLs.
    #[pyo3(signature = (container=None))]
    fn start(&self, container: Option<&PyContainer>) -> PyResult<Vec<String>> {
        let host = match container {
            Some(c) => Some(c.with(|c| Ok(c.host()))?),
            None => None,
        };
        self.inner.start(host).map_err(err)
    }

    fn stop(&self, py: Python<'_>) -> PyResult<()> {
        let inner = self.inner.clone();
        py.detach(move || inner.stop()).map_err(err)
    }

    /// Runs one frame; returns `(output, cycle_report)`.
    fn process_frame<'py>(&self, py: Python<'py>, data: &Bound<'py, PyAny>) -> PyResult<(Bound<'py, PyAny>, Bound<'py, PyDict>)> {
        let input = to_elements(data, self.inner.module().input_element())?;
        let inner = self.inner.clone();
        let (out, report) = py.detach(move || inner.process_frame(&input)).map_err(err)?;
        Ok((from_elements(py, &out)?, report_dict(py, &report)?))
    }
}

/// Matches `module` onto `registry` and acquires the processors.
#[pyfunction]
#[pyo3(signature = (module, registry, policy=None))]
fn deploy(module: &PyModule_, registry: &PyRegistry, policy: Option<Vec<String>>) -> PyResult<PyDeployment> {
    let policy = match policy {
        Some(types) => MatchPolicy::new(
            types
                .iter()
                .map(|t| ProcessorType::from_str(t).map_err(err))
                .collect::<PyResult<_>>()?,
        )
        .map_err(err)?,
        None => MatchPolicy::default(),
    };
    let plan = deployer::plan(module.inner.clone(), &registry.inner.snapshot(), &policy).map_err(err)?;
    let deployment = deployer::deploy(plan, &registry.inner).map_err(err)?;
    Ok(PyDeployment {
        inner: Arc::new(deployment),
    })
}

/// HTTP service container.
#[pyclass(name = "Container", frozen)]
struct PyContainer {
    inner: Mutex<Option<service::Container>>,
}

impl PyContainer {
    fn with<T>(&self, f: impl FnOnce(&service::Container) -> PyResult<T>) -> PyResult<T> {
        let guard = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        f(guard.as_ref().ok_or_else(|| err("container is closed"))?)
    }
}

#[pymethods]
impl PyContainer {
    #[new]
    #[pyo3(signature = (host="127.0.0.1", port=0))]
    fn new(host: &str, port: u16) -> PyResult<Self> {
        let c = service::Container::start(host, port).map_err(err)?;
        Ok(PyContainer {
            inner: Mutex::new(Some(c)),
        })
    }

    #[getter]
    fn port(&self) -> PyResult<u16> {
        self.with(|c| Ok(c.port()))
    }

    #[getter]
    fn base_url(&self) -> PyResult<String> {
        self.with(|c| Ok(c.base_url()))
    }

    fn service_names(&self) -> PyResult<Vec<String>> {
        self.with(|c| Ok(c.service_names()))
    }

    /// Withdraws every service and stops listening.
    fn close(&self, py: Python<'_>) {
        let taken = self.inner.lock().unwrap_or_else(|e| e.into_inner()).take();
        py.detach(move || drop(taken));
    }
}

#[pyfunction]
fn service_url(host: &str, port: u16, name: &str) -> String {
    ServiceUrl::new(host, port, name).to_string()
}

/// Applies the reference semantics of `kind` to `data` of type `element`.
#[pyfunction]
#[pyo3(signature = (kind, data, element="f64", params=None))]
fn apply_reference<'py>(
    py: Python<'py>,
    kind: &str,
    data: &Bound<'py, PyAny>,
    element: &str,
    params: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyAny>> {
    let kind = Library::builtin().lookup(kind).map_err(err)?;
    let input = to_elements(data, element_type(element)?)?;
    let out = reconfgrid::library::apply_reference(kind, &to_params(params)?, &input).map_err(err)?;
    from_elements(py, &out)
}

#[pyfunction]
fn cpu_compute_cycles(n: u64, c_op: u64) -> u64 {
    ham::cpu_compute_cycles(n, c_op)
}

#[pyfunction]
fn simfpga_compute_cycles(n: u64, lanes: u64, pipeline_depth: u64) -> PyResult<u64> {
    if lanes == 0 {
        return Err(err("lanes must be at least 1"));
    }
    Ok(ham::simfpga_compute_cycles(n, lanes, pipeline_depth))
}

/// Sends each frame to the service at `url` and returns the results in order.
#[pyfunction]
#[pyo3(signature = (url, frames, timeout=60.0))]
fn process<'py>(py: Python<'py>, url: &str, frames: Vec<Bound<'py, PyAny>>, timeout: f64) -> PyResult<Vec<Bound<'py, PyAny>>> {
    let url = url.to_string();
    let mut session = py.detach(|| ClientSession::connect(&url)).map_err(err)?;
    let element = session.descriptor().input_element;
    let inputs = frames
        .iter()
        .map(|f| to_elements(f, element))
        .collect::<PyResult<Vec<_>>>()?;
    let outputs = py
        .detach(move || -> Result<Vec<Elements>, client::ClientError> {
            for x in &inputs {
                session.send(x)?;
            }
            session.finish()?;
            let out = session.receive_all(Duration::from_secs_f64(timeout))?;
            let _ = session.unsubscribe();
            Ok(out)
        })
        .map_err(err)?;
    outputs.iter().map(|e| from_elements(py, e)).collect()
}

#[pyfunction]
fn list_services(py: Python<'_>, base_url: &str) -> PyResult<Vec<String>> {
    let base_url = base_url.to_string();
    py.detach(move || client::list_services(&base_url)).map_err(err)
}

#[pymodule]
#[pyo3(name = "reconfgrid")]
fn reconfgrid_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ReconfgridError", m.py().get_type::<ReconfgridError>())?;
    m.add_class::<PyModule_>()?;
    m.add_class::<PyRegistry>()?;
    m.add_class::<PyDeployment>()?;
    m.add_class::<PyContainer>()?;
    m.add_function(wrap_pyfunction!(deploy, m)?)?;
    m.add_function(wrap_pyfunction!(service_url, m)?)?;
    m.add_function(wrap_pyfunction!(apply_reference, m)?)?;
    m.add_function(wrap_pyfunction!(cpu_compute_cycles, m)?)?;
    m.add_function(wrap_pyfunction!(simfpga_compute_cycles, m)?)?;
    m.add_function(wrap_pyfunction!(process, m)?)?;
    m.add_function(wrap_pyfunction!(list_services, m)?)?;
    Ok(())
}
