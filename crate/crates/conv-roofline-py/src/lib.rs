//! Python module exposing the planner and the reference numerics.
//!
//! Scalar-heavy results (plans, blocking solutions, report rows) cross the
//! boundary as plain dicts; tiles and kernels as nested lists. Nothing here
//! is performance-sensitive.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use conv_roofline::layer::{accuracy_report, AccuracyRow};
use conv_roofline::mat::Mat;
use conv_roofline::model::{self, LayerShape, MachineSpec, Method};
use conv_roofline::planner::{self, Bound as StageBound, MethodPlan, SweepParameter};
use conv_roofline::tables::{self, TransformStage};
use conv_roofline::{fft, winograd};

fn domain_err(e: conv_roofline::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_method(s: &str) -> PyResult<Method> {
    Method::parse(s).map_err(domain_err)
}

fn parse_stage(s: &str) -> PyResult<TransformStage> {
    match s {
        "input" => Ok(TransformStage::Input),
        "kernel" => Ok(TransformStage::Kernel),
        "output" => Ok(TransformStage::Output),
        other => Err(PyValueError::new_err(format!(
            "unknown stage {other:?}; expected input, kernel or output"
        ))),
    }
}

fn mat_from_rows(rows: Vec<Vec<f64>>) -> PyResult<Mat<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(PyValueError::new_err(
            "expected a non-empty rectangular list of lists",
        ));
    }
    Ok(Mat::from_vec(r, c, rows.into_iter().flatten().collect()))
}

fn mat_to_rows(m: &Mat<f64>) -> Vec<Vec<f64>> {
    (0..m.rows())
        .map(|i| (0..m.cols()).map(|j| m.get(i, j)).collect())
        .collect()
}

/// Square layer dimensions (batch, channels in/out, image edge, kernel edge).
#[pyclass(name = "LayerShape", frozen, from_py_object)]
#[derive(Clone)]
struct PyLayerShape {
    inner: LayerShape,
}

#[pymethods]
impl PyLayerShape {
    #[new]
    fn new(b: u64, c: u64, c_out: u64, x: u64, r: u64) -> PyResult<Self> {
        Ok(PyLayerShape {
            inner: LayerShape::new(b, c, c_out, x, r).map_err(domain_err)?,
        })
    }

    #[getter]
    fn b(&self) -> u64 {
        self.inner.b
    }

    #[getter]
    fn c(&self) -> u64 {
        self.inner.c
    }

    #[getter]
    fn c_out(&self) -> u64 {
        self.inner.c_out
    }

    #[getter]
    fn x(&self) -> u64 {
        self.inner.x
    }

    #[getter]
    fn r(&self) -> u64 {
        self.inner.r
    }

    fn out_edge(&self) -> u64 {
        self.inner.out_edge()
    }

    fn __repr__(&self) -> String {
        let l = &self.inner;
        format!(
            "LayerShape(b={}, c={}, c_out={}, x={}, r={})",
            l.b, l.c, l.c_out, l.x, l.r
        )
    }
}

/// A Roofline target: peak FLOP/s, bandwidth, cache and CMR label.
#[pyclass(name = "MachineSpec", frozen, from_py_object)]
#[derive(Clone)]
struct PyMachineSpec {
    inner: MachineSpec,
}

#[pymethods]
impl PyMachineSpec {
    #[new]
    #[pyo3(signature = (name, peak_flops, mem_bandwidth, cache_bytes, cmr=None))]
    fn new(
        name: String,
        peak_flops: f64,
        mem_bandwidth: f64,
        cache_bytes: u64,
        cmr: Option<f64>,
    ) -> PyResult<Self> {
        let inner = match cmr {
            Some(cmr) => {
                MachineSpec::with_cmr_label(name, peak_flops, mem_bandwidth, cache_bytes, cmr)
            }
            None => MachineSpec::new(name, peak_flops, mem_bandwidth, cache_bytes),
        }
        .map_err(domain_err)?;
        Ok(PyMachineSpec { inner })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn peak_flops(&self) -> f64 {
        self.inner.peak_flops
    }

    #[getter]
    fn mem_bandwidth(&self) -> f64 {
        self.inner.mem_bandwidth
    }

    #[getter]
    fn cache_bytes(&self) -> u64 {
        self.inner.cache_bytes
    }

    #[getter]
    fn cmr(&self) -> f64 {
        self.inner.cmr
    }

    fn exact_cmr(&self) -> f64 {
        self.inner.exact_cmr()
    }

    fn __repr__(&self) -> String {
        format!(
            "MachineSpec(name={:?}, cmr={})",
            self.inner.name, self.inner.cmr
        )
    }
}

/// Overlap-add geometry for one (layer, m) choice.
#[pyclass(name = "TilePlan", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTilePlan {
    #[pyo3(get)]
    m: u64,
    #[pyo3(get)]
    t: u64,
    #[pyo3(get)]
    n_tiles: u64,
    #[pyo3(get)]
    n_cplx: u64,
}

#[pymethods]
impl PyTilePlan {
    fn __repr__(&self) -> String {
        format!(
            "TilePlan(m={}, t={}, n_tiles={}, n_cplx={})",
            self.m, self.t, self.n_tiles, self.n_cplx
        )
    }
}

fn plan_dict<'py>(py: Python<'py>, plan: &MethodPlan) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("method", plan.method.as_str())?;
    d.set_item("m", plan.m)?;
    d.set_item("t", plan.t)?;
    d.set_item("total_runtime", plan.total_runtime)?;
    let stages = PyList::empty(py);
    for (i, cost) in plan.stage_costs.iter().enumerate() {
        let s = PyDict::new(py);
        s.set_item("stage", cost.stage.as_str())?;
        s.set_item("fpo", cost.fpo)?;
        s.set_item("dm", cost.dm)?;
        s.set_item("ai", cost.ai)?;
        s.set_item("runtime", plan.stage_runtimes[i])?;
        s.set_item(
            "bound",
            match plan.bound_per_stage[i] {
                StageBound::Compute => "compute",
                StageBound::Memory => "memory",
            },
        )?;
        stages.append(s)?;
    }
    d.set_item("stages", stages)?;
    Ok(d)
}

fn row_dict<'py>(py: Python<'py>, row: &AccuracyRow) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("method", row.method.as_str())?;
    d.set_item("m", row.m)?;
    d.set_item("t", row.t)?;
    d.set_item("r", row.r)?;
    d.set_item("rel_error", row.rel_error)?;
    d.set_item("trials", row.trials)?;
    d.set_item("seed", row.seed)?;
    Ok(d)
}

/// The ten cataloged machines.
#[pyfunction]
fn machine_catalog() -> Vec<PyMachineSpec> {
    model::machine_catalog()
        .into_iter()
        .map(|inner| PyMachineSpec { inner })
        .collect()
}

/// Looks up a cataloged machine by (possibly bare) name.
#[pyfunction]
fn find_machine(name: &str) -> PyResult<PyMachineSpec> {
    Ok(PyMachineSpec {
        inner: model::find_machine(name).map_err(domain_err)?,
    })
}

/// Tile geometry for output-tile edge m.
#[pyfunction]
fn tile_geometry(layer: PyLayerShape, m: u64) -> PyResult<PyTilePlan> {
    let plan = model::tile_geometry(&layer.inner, m).map_err(domain_err)?;
    Ok(PyTilePlan {
        m: plan.m,
        t: plan.t,
        n_tiles: plan.n_tiles,
        n_cplx: plan.n_cplx,
    })
}

/// Per-tile transform cost: (flops, ai).
#[pyfunction]
fn transform_cost(method: &str, m: u64, r: u64, stage: &str) -> PyResult<(u64, f64)> {
    let entry = tables::transform_cost(parse_method(method)?, m, r, parse_stage(stage)?)
        .map_err(domain_err)?;
    Ok((entry.flops, entry.ai))
}

/// Output-tile sizes the planner would search for (method, r).
#[pyfunction]
#[pyo3(signature = (method, r, max_winograd_tile=6))]
fn tile_search_space(method: &str, r: u64, max_winograd_tile: u64) -> PyResult<Vec<u64>> {
    tables::tile_search_space(parse_method(method)?, r, max_winograd_tile).map_err(domain_err)
}

/// Cache-blocking solution for the element-wise stage.
#[pyfunction]
fn blocking_solve<'py>(
    py: Python<'py>,
    c: u64,
    c_out: u64,
    cache_bytes: u64,
    beta: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let sol = planner::blocking_solve(c, c_out, cache_bytes, beta).map_err(domain_err)?;
    let d = PyDict::new(py);
    d.set_item("c", sol.c)?;
    d.set_item("c_out_block", sol.c_out_block)?;
    d.set_item("alpha", sol.alpha)?;
    d.set_item("beta", sol.beta)?;
    d.set_item("dm_per_flop_objective", sol.dm_per_flop_objective)?;
    Ok(d)
}

/// Full stage-by-stage plan for a fixed tile size.
#[pyfunction]
fn total_runtime<'py>(
    py: Python<'py>,
    layer: PyLayerShape,
    method: &str,
    m: u64,
    machine: PyMachineSpec,
) -> PyResult<Bound<'py, PyDict>> {
    let plan = planner::total_runtime(&layer.inner, parse_method(method)?, m, &machine.inner)
        .map_err(domain_err)?;
    plan_dict(py, &plan)
}

/// Plan at the runtime-minimizing tile size.
#[pyfunction]
#[pyo3(signature = (layer, method, machine, max_winograd_tile=6))]
fn best_tile<'py>(
    py: Python<'py>,
    layer: PyLayerShape,
    method: &str,
    machine: PyMachineSpec,
    max_winograd_tile: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let plan = planner::best_tile(
        &layer.inner,
        parse_method(method)?,
        &machine.inner,
        max_winograd_tile,
    )
    .map_err(domain_err)?;
    plan_dict(py, &plan)
}

/// Predicted speedup of method_a over method_b (> 1 means a is faster).
#[pyfunction]
#[pyo3(signature = (layer, method_a, method_b, machine, max_winograd_tile=6))]
fn speedup(
    layer: PyLayerShape,
    method_a: &str,
    method_b: &str,
    machine: PyMachineSpec,
    max_winograd_tile: u64,
) -> PyResult<f64> {
    planner::speedup(
        &layer.inner,
        parse_method(method_a)?,
        parse_method(method_b)?,
        &machine.inner,
        max_winograd_tile,
    )
    .map_err(domain_err)
}

/// Pairwise speedups across a parameter grid; parameter is one of
/// "cache", "channels", "x", "r", "cmr".
#[pyfunction]
#[pyo3(signature = (layer, machine, parameter, values, max_winograd_tile=6))]
fn sweep<'py>(
    py: Python<'py>,
    layer: PyLayerShape,
    machine: PyMachineSpec,
    parameter: &str,
    values: Vec<f64>,
    max_winograd_tile: u64,
) -> PyResult<Bound<'py, PyList>> {
    let parameter = SweepParameter::parse(parameter).map_err(domain_err)?;
    let rows = planner::sweep(
        &layer.inner,
        &machine.inner,
        parameter,
        &values,
        max_winograd_tile,
    )
    .map_err(domain_err)?;
    let list = PyList::empty(py);
    for row in rows {
        let d = PyDict::new(py);
        d.set_item("param_value", row.param_value)?;
        d.set_item("speedup_rfft_wino", row.speedup_rfft_wino)?;
        d.set_item("speedup_gfft_wino", row.speedup_gfft_wino)?;
        d.set_item("speedup_rfft_gfft", row.speedup_rfft_gfft)?;
        list.append(d)?;
    }
    Ok(list)
}

/// (rRMSE, fitness) of predictions against measurements.
#[pyfunction]
fn model_fitness(predicted: Vec<f64>, measured: Vec<f64>) -> PyResult<(f64, f64)> {
    planner::model_fitness(&predicted, &measured).map_err(domain_err)
}

/// Winograd valid cross-correlation of a t x t tile with an r x r kernel.
#[pyfunction]
fn winograd_conv_2d(
    tile: Vec<Vec<f64>>,
    kernel: Vec<Vec<f64>>,
    m: u64,
) -> PyResult<Vec<Vec<f64>>> {
    let out = winograd::winograd_conv_2d(
        &mat_from_rows(tile)?,
        &mat_from_rows(kernel)?,
        m as usize,
    )
    .map_err(domain_err)?;
    Ok(mat_to_rows(&out))
}

/// DFT-based valid cross-correlation of a t x t tile with an r x r kernel.
#[pyfunction]
fn fft_conv_valid_2d(
    tile: Vec<Vec<f64>>,
    kernel: Vec<Vec<f64>>,
    m: u64,
) -> PyResult<Vec<Vec<f64>>> {
    let out = fft::fft_conv_valid_2d(&mat_from_rows(tile)?, &mat_from_rows(kernel)?, m as usize)
        .map_err(domain_err)?;
    Ok(mat_to_rows(&out))
}

/// Gauss three-multiplication complex product of (re, im) pairs.
#[pyfunction]
fn gauss_product(u: (f64, f64), v: (f64, f64)) -> (f64, f64) {
    let w = fft::gauss_product(
        num_complex::Complex::new(u.0, u.1),
        num_complex::Complex::new(v.0, v.1),
    );
    (w.re, w.im)
}

/// Mean single-precision error of (method, m) cases against the
/// double-precision oracle; cases use method names, e.g. ("winograd", 2).
#[pyfunction]
#[pyo3(signature = (layer, cases, trials=30, seed=0))]
fn accuracy<'py>(
    py: Python<'py>,
    layer: PyLayerShape,
    cases: Vec<(String, u64)>,
    trials: u64,
    seed: u64,
) -> PyResult<Bound<'py, PyList>> {
    let cases = cases
        .iter()
        .map(|(method, m)| Ok((parse_method(method)?, *m)))
        .collect::<PyResult<Vec<_>>>()?;
    let rows = accuracy_report(&layer.inner, &cases, trials, seed).map_err(domain_err)?;
    let list = PyList::empty(py);
    for row in &rows {
        list.append(row_dict(py, row)?)?;
    }
    Ok(list)
}

#[pymodule]
fn conv_roofline_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLayerShape>()?;
    m.add_class::<PyMachineSpec>()?;
    m.add_class::<PyTilePlan>()?;
    m.add_function(wrap_pyfunction!(machine_catalog, m)?)?;
    m.add_function(wrap_pyfunction!(find_machine, m)?)?;
    m.add_function(wrap_pyfunction!(tile_geometry, m)?)?;
    m.add_function(wrap_pyfunction!(transform_cost, m)?)?;
    m.add_function(wrap_pyfunction!(tile_search_space, m)?)?;
    m.add_function(wrap_pyfunction!(blocking_solve, m)?)?;
    m.add_function(wrap_pyfunction!(total_runtime, m)?)?;
    m.add_function(wrap_pyfunction!(best_tile, m)?)?;
    m.add_function(wrap_pyfunction!(speedup, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(model_fitness, m)?)?;
    m.add_function(wrap_pyfunction!(winograd_conv_2d, m)?)?;
    m.add_function(wrap_pyfunction!(fft_conv_valid_2d, m)?)?;
    m.add_function(wrap_pyfunction!(gauss_product, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    Ok(())
}
