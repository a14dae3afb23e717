//! Python bindings for the camforge compiler and simulator.

use std::path::PathBuf;

use camforge::arch::{self, load_arch_spec, ArchSpec};
use camforge::data;
use camforge::ir::{parse_module, print_module, verify, ElemType};
use camforge::pipeline::{self, reference_outputs, CompileOptions, Compiled, Stage};
use camforge::sim::{self, Data};
use camforge::sweep::{run_sweep, to_csv, SweepConfig};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

pyo3::create_exception!(camforge_py, CompileError, PyValueError);
pyo3::create_exception!(camforge_py, SimulationError, PyValueError);

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[derive(IntoPyObject)]
enum Values {
    Int(Vec<i64>),
    Float(Vec<f64>),
}

/// Dense row-major tensor with an element type such as "i1", "i4" or "f32".
#[pyclass(frozen, from_py_object, module = "camforge_py")]
#[derive(Clone)]
struct Tensor {
    inner: sim::Tensor,
}

#[pymethods]
impl Tensor {
    #[new]
    fn new(shape: Vec<usize>, elem: &str, values: &Bound<'_, PyAny>) -> PyResult<Tensor> {
        let elem: ElemType = elem.parse().map_err(value_err)?;
        let inner = if elem.is_float() {
            sim::Tensor::from_floats(shape, values.extract()?)
        } else {
            sim::Tensor::from_ints(shape, elem, values.extract()?)
        }
        .map_err(value_err)?;
        Ok(Tensor { inner })
    }

    #[staticmethod]
    fn zeros(shape: Vec<usize>, elem: &str) -> PyResult<Tensor> {
        let elem: ElemType = elem.parse().map_err(value_err)?;
        Ok(Tensor {
            inner: sim::Tensor::zeros(shape, elem),
        })
    }

    /// Read a binary or text data file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Tensor> {
        Ok(Tensor {
            inner: data::load(&path).map_err(value_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        data::save(&path, &self.inner).map_err(value_err)
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.shape.clone()
    }

    #[getter]
    fn elem(&self) -> String {
        self.inner.elem.to_string()
    }

    #[getter]
    fn values(&self) -> Values {
        match &self.inner.data {
            Data::Int(v) => Values::Int(v.clone()),
            Data::Float(v) => Values::Float(v.clone()),
        }
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __eq__(&self, other: &Tensor) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("Tensor(shape={:?}, elem='{}')", self.inner.shape, self.inner.elem)
    }
}

/// Validated accelerator description.
#[pyclass(frozen, skip_from_py_object, module = "camforge_py")]
#[derive(Clone)]
struct Arch {
    inner: ArchSpec,
}

#[pymethods]
impl Arch {
    /// Default hierarchy with the given subarray geometry.
    #[new]
    #[pyo3(signature = (rows = 32, cols = 32))]
    fn new(rows: u32, cols: u32) -> PyResult<Arch> {
        let inner = ArchSpec::with_subarray(rows, cols);
        inner.validate().map_err(value_err)?;
        Ok(Arch { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Arch> {
        Ok(Arch {
            inner: load_arch_spec(&path).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Arch> {
        Ok(Arch {
            inner: ArchSpec::from_toml(text).map_err(value_err)?,
        })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    #[getter]
    fn rows(&self) -> u32 {
        self.inner.rows()
    }

    #[getter]
    fn cols(&self) -> u32 {
        self.inner.cols()
    }

    #[getter]
    fn capacity_subarrays(&self) -> u64 {
        self.inner.capacity().subarrays
    }

    #[getter]
    fn search_latency_ns(&self) -> f64 {
        self.inner.search_latency_ns()
    }

    fn __repr__(&self) -> String {
        format!("Arch(rows={}, cols={})", self.inner.rows(), self.inner.cols())
    }
}

/// Cost totals of one simulated run.
#[pyclass(frozen, get_all, skip_from_py_object, module = "camforge_py")]
#[derive(Clone)]
struct Metrics {
    latency_ns: f64,
    energy_pj: f64,
    search_energy_pj: f64,
    write_energy_pj: f64,
    peripheral_energy_pj: f64,
    avg_power_w: f64,
    peak_power_w: f64,
    subarrays_used: usize,
    banks_used: usize,
    search_steps: usize,
    write_steps: usize,
    searches: u64,
    writes: u64,
    host_merges: u64,
    report: String,
}

impl From<&sim::Metrics> for Metrics {
    fn from(m: &sim::Metrics) -> Metrics {
        Metrics {
            latency_ns: m.latency_ns,
            energy_pj: m.energy_pj,
            search_energy_pj: m.search_energy_pj,
            write_energy_pj: m.write_energy_pj,
            peripheral_energy_pj: m.peripheral_energy_pj,
            avg_power_w: m.avg_power_w,
            peak_power_w: m.peak_power_w,
            subarrays_used: m.subarrays_used,
            banks_used: m.banks_used,
            search_steps: m.search_steps,
            write_steps: m.write_steps,
            searches: m.counters.searches,
            writes: m.counters.writes,
            host_merges: m.counters.host_merges,
            report: m.report(),
        }
    }
}

#[pymethods]
impl Metrics {
    #[getter]
    fn edp(&self) -> f64 {
        self.energy_pj * self.latency_ns
    }

    fn __repr__(&self) -> String {
        format!(
            "Metrics(latency_ns={}, energy_pj={}, subarrays_used={})",
            self.latency_ns, self.energy_pj, self.subarrays_used
        )
    }
}

/// Outputs, metrics and (optionally) the event trace of a run.
#[pyclass(frozen, module = "camforge_py")]
struct Execution {
    inner: sim::Execution,
}

#[pymethods]
impl Execution {
    #[getter]
    fn outputs(&self) -> Vec<Tensor> {
        self.inner.outputs.iter().map(|t| Tensor { inner: t.clone() }).collect()
    }

    #[getter]
    fn metrics(&self) -> Metrics {
        Metrics::from(&self.inner.metrics)
    }

    /// One dict per trace event.
    fn trace<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner
            .trace
            .iter()
            .map(|e| {
                let d = PyDict::new(py);
                d.set_item("step", e.step)?;
                d.set_item("level", e.level)?;
                d.set_item("handle", &e.handle)?;
                d.set_item("op", e.op)?;
                d.set_item("rows_active", e.rows_active)?;
                d.set_item("latency_ns", e.latency_ns)?;
                d.set_item("energy_pj", e.energy_pj)?;
                Ok(d)
            })
            .collect()
    }
}

fn stage(name: &str) -> PyResult<Stage> {
    Stage::parse(name).ok_or_else(|| PyValueError::new_err(format!("unknown stage '{name}'")))
}

fn tensors(inputs: &[Tensor]) -> Vec<sim::Tensor> {
    inputs.iter().map(|t| t.inner.clone()).collect()
}

/// A kernel file lowered through every stage.
#[pyclass(frozen, module = "camforge_py")]
struct Program {
    compiled: Compiled,
    arch: ArchSpec,
    opts: CompileOptions,
}

#[pymethods]
impl Program {
    #[getter]
    fn stages(&self) -> Vec<&'static str> {
        self.compiled.stages.iter().map(|(s, _)| s.name()).collect()
    }

    #[getter]
    fn kernels(&self) -> Vec<String> {
        self.compiled.signatures.iter().map(|s| s.name.clone()).collect()
    }

    /// Printed IR of one stage.
    #[pyo3(signature = (stage_name = "cam-mapped"))]
    fn ir(&self, stage_name: &str) -> PyResult<String> {
        Ok(print_module(self.compiled.stage(stage(stage_name)?)))
    }

    #[pyo3(signature = (inputs, stage_name = "cam-mapped", function = None, trace = false))]
    fn simulate(&self, inputs: Vec<Tensor>, stage_name: &str, function: Option<&str>, trace: bool) -> PyResult<Execution> {
        let inner = pipeline::simulate(&self.compiled, stage(stage_name)?, function, &tensors(&inputs), &self.arch, trace)
            .map_err(|e| SimulationError::new_err(e.to_string()))?;
        Ok(Execution { inner })
    }

    /// Dense reference outputs used by the oracle check.
    #[pyo3(signature = (inputs, function = None))]
    fn reference(&self, inputs: Vec<Tensor>, function: Option<&str>) -> PyResult<Vec<Tensor>> {
        let outs = reference_outputs(&self.compiled, function, &tensors(&inputs), &self.opts)
            .map_err(SimulationError::new_err)?;
        Ok(outs.into_iter().map(|inner| Tensor { inner }).collect())
    }
}

/// Parse a kernel source and lower it to the mapped CAM stage.
#[pyfunction]
#[pyo3(signature = (
    source, arch, *, device = None, match_type = None, metric = None,
    threshold = None, mode = None, max_active = None, rewrite = true
))]
#[allow(clippy::too_many_arguments)]
fn compile(
    source: &str,
    arch: &Arch,
    device: Option<String>,
    match_type: Option<String>,
    metric: Option<String>,
    threshold: Option<i64>,
    mode: Option<String>,
    max_active: Option<u32>,
    rewrite: bool,
) -> PyResult<Program> {
    let opts = CompileOptions {
        device,
        match_type,
        metric,
        threshold,
        mode,
        max_active,
        rewrite,
    };
    let compiled = pipeline::compile(source, &arch.inner, &opts).map_err(|e| CompileError::new_err(e.to_string()))?;
    Ok(Program {
        compiled,
        arch: arch.inner.clone(),
        opts,
    })
}

/// Print-parse normalization of textual IR; raises on parse errors.
#[pyfunction]
fn normalize_ir(text: &str) -> PyResult<String> {
    Ok(print_module(&parse_module(text).map_err(value_err)?))
}

/// Verifier diagnostics for textual IR.
#[pyfunction]
fn verify_ir(text: &str) -> PyResult<Vec<String>> {
    let m = parse_module(text).map_err(value_err)?;
    Ok(verify(&m).into_iter().map(|d| d.to_string()).collect())
}

/// Interpolated search latency of one subarray with default technology.
#[pyfunction]
fn search_latency(rows: u32, cols: u32) -> PyResult<f64> {
    arch::search_latency(&Default::default(), rows, cols).map_err(value_err)
}

/// Run a sweep given as TOML text and return (config, metrics) pairs.
#[pyfunction]
fn sweep(py: Python<'_>, toml_text: &str) -> PyResult<Vec<(String, Metrics)>> {
    let cfg = SweepConfig::from_toml(toml_text).map_err(value_err)?;
    let rows = py.detach(|| run_sweep(&cfg)).map_err(value_err)?;
    Ok(rows.iter().map(|r| (r.config.clone(), Metrics::from(&r.metrics))).collect())
}

/// Same as [`sweep`] but formatted as the CLI's CSV.
#[pyfunction]
#[pyo3(signature = (toml_text, edp = false))]
fn sweep_csv(py: Python<'_>, toml_text: &str, edp: bool) -> PyResult<String> {
    let cfg = SweepConfig::from_toml(toml_text).map_err(value_err)?;
    let rows = py.detach(|| run_sweep(&cfg)).map_err(value_err)?;
    Ok(to_csv(&rows, edp))
}

#[pymodule]
fn camforge_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Tensor>()?;
    m.add_class::<Arch>()?;
    m.add_class::<Metrics>()?;
    m.add_class::<Execution>()?;
    m.add_class::<Program>()?;
    m.add_function(wrap_pyfunction!(compile, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_ir, m)?)?;
    m.add_function(wrap_pyfunction!(verify_ir, m)?)?;
    m.add_function(wrap_pyfunction!(search_latency, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_csv, m)?)?;
    m.add("CompileError", m.py().get_type::<CompileError>())?;
    m.add("SimulationError", m.py().get_type::<SimulationError>())?;
    Ok(())
}
