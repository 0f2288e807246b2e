//! Python bindings: manifolds, point clouds, geometric graphs, spectra,
//! diffusion filters, GNNs and the experiment drivers.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use geognn::experiments::config::{parse_config, KernelSpec};
use geognn::experiments::{self as exp, ClassifyConfig, RegressionConfig, SweepConfig};
use geognn::filterbank::{graph_filter_apply, FilterCoeffs};
use geognn::geograph::{build_graph, interpolate, CloudSource, GeoGraph, KernelKind, PointCloud};
use geognn::gnn::{gnn_forward, GnnArch, Nonlinearity};
use geognn::manifold::{lb_spectrum, sample_uniform, ManifoldKind, ManifoldModel};
use geognn::spectral::{align_spectra, alpha_partition, eig_sym, heat_apply};

fn err(e: geognn::Error) -> PyErr {
    match e {
        geognn::Error::Io(e) => PyIOError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> PyResult<T> {
    s.parse().map_err(|_| PyValueError::new_err(format!("unknown {what} `{s}`")))
}

fn kernel_kind(s: &str) -> PyResult<KernelKind> {
    match s {
        "dense" | "dense_gaussian" => Ok(KernelKind::DenseGaussian),
        "sparse" | "sparse_compact" => Ok(KernelKind::SparseCompact),
        _ => Err(PyValueError::new_err(format!("unknown kernel `{s}`"))),
    }
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("ragged rows"));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// One of `circle`, `sphere`, `torus`.
#[pyclass(name = "Manifold", frozen)]
struct PyManifold {
    inner: ManifoldModel,
}

#[pymethods]
impl PyManifold {
    #[new]
    fn new(kind: &str) -> PyResult<Self> {
        Ok(PyManifold { inner: ManifoldModel::new(parse::<ManifoldKind>(kind, "manifold")?) })
    }

    #[getter]
    fn kind(&self) -> String {
        self.inner.kind().to_string()
    }

    #[getter]
    fn volume(&self) -> f64 {
        self.inner.volume()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.intrinsic_dim()
    }

    #[getter]
    fn ambient_dim(&self) -> usize {
        self.inner.ambient_dim()
    }

    /// First `count` Laplace-Beltrami eigenvalues, ascending.
    fn eigenvalues(&self, count: usize) -> PyResult<Vec<f64>> {
        Ok(lb_spectrum(&self.inner, count).map_err(err)?.iter().map(|p| p.eigenvalue).collect())
    }

    /// Eigenfunction `index` (1-based) at each point.
    fn eigenfunction(&self, index: usize, points: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let pairs = lb_spectrum(&self.inner, index).map_err(err)?;
        let p = pairs.last().ok_or_else(|| PyValueError::new_err("index must be at least 1"))?;
        Ok(points.iter().map(|x| p.eval(x)).collect())
    }

    #[pyo3(signature = (n, seed = 0))]
    fn sample(&self, n: usize, seed: u64) -> PyResult<PyPointCloud> {
        Ok(PyPointCloud { inner: sample_uniform(&self.inner, n, seed).map_err(err)? })
    }

    fn __repr__(&self) -> String {
        format!("Manifold('{}')", self.inner.kind())
    }
}

#[pyclass(name = "PointCloud", frozen)]
struct PyPointCloud {
    inner: PointCloud,
}

#[pymethods]
impl PyPointCloud {
    #[new]
    fn new(points: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(PyPointCloud { inner: PointCloud::from_points(&points, CloudSource::External).map_err(err)? })
    }

    fn points(&self) -> Vec<Vec<f64>> {
        self.inner.points().map(<[f64]>::to_vec).collect()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("PointCloud(n={}, dim={})", self.inner.len(), self.inner.dim())
    }
}

/// Geometric graph on a cloud sampled from `manifold`, whose volume and
/// dimension calibrate the kernel.
#[pyclass(name = "Graph", frozen)]
struct PyGraph {
    inner: GeoGraph,
    manifold: ManifoldModel,
}

#[pymethods]
impl PyGraph {
    #[new]
    #[pyo3(signature = (cloud, manifold, kernel = "dense", eps = None, scale = None))]
    fn new(cloud: &PyPointCloud, manifold: &PyManifold, kernel: &str, eps: Option<f64>, scale: Option<f64>) -> PyResult<Self> {
        let spec = KernelSpec { kind: kernel_kind(kernel)?, rule: None, eps, scale, label: None };
        spec.validate("kernel").map_err(err)?;
        let cfg = spec.kernel(&manifold.inner).resolve(cloud.inner.len()).map_err(err)?;
        Ok(PyGraph { inner: build_graph(&cloud.inner, &cfg).map_err(err)?, manifold: manifold.inner.clone() })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn eps(&self) -> f64 {
        self.inner.config().eps
    }

    #[getter]
    fn avg_degree(&self) -> f64 {
        self.inner.avg_degree()
    }

    #[getter]
    fn components(&self) -> usize {
        self.inner.components()
    }

    fn laplacian(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.laplacian_dense())
    }

    /// `(values, vectors)` of the `k` smallest eigenpairs; `vectors[i]` is
    /// the `i`-th eigenvector, with squared norm `n`.
    fn eig(&self, k: usize) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let s = eig_sym(&self.inner, k).map_err(err)?;
        let vecs = (0..s.len()).map(|i| s.vector(i).iter().copied().collect()).collect();
        Ok((s.values().to_vec(), vecs))
    }

    /// Compares the first `k` eigenpairs with the manifold's.
    fn align<'py>(&self, py: Python<'py>, k: usize) -> PyResult<Bound<'py, PyDict>> {
        let s = eig_sym(&self.inner, (k + 4).min(self.inner.len())).map_err(err)?;
        let r = align_spectra(&s, &self.inner, &self.manifold, k).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("signs", r.signs)?;
        d.set_item("eval_err", r.eval_err)?;
        d.set_item("efun_err", r.efun_err)?;
        d.set_item("op_err", r.op_err)?;
        Ok(d)
    }

    /// `exp(-t L) x`
    fn heat(&self, t: f64, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(heat_apply(&self.inner, t, &DVector::from_vec(x)).map_err(err)?.iter().copied().collect())
    }

    /// `sum_k taps[k] exp(-k step L) x`
    #[pyo3(signature = (taps, x, step = 1.0))]
    fn filter(&self, taps: Vec<f64>, x: Vec<f64>, step: f64) -> PyResult<Vec<f64>> {
        let h = FilterCoeffs::with_step(taps, step).map_err(err)?;
        Ok(graph_filter_apply(&h, &self.inner, &DVector::from_vec(x)).map_err(err)?.iter().copied().collect())
    }

    /// Nearest-sample interpolation of a node signal, evaluated at `points`.
    fn interpolate(&self, u: Vec<f64>, points: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let f = interpolate(&DVector::from_vec(u), self.inner.cloud()).map_err(err)?;
        Ok(points.iter().map(|x| f.eval(x)).collect())
    }
}

/// Filter-bank GNN.
#[pyclass(name = "Gnn")]
struct PyGnn {
    inner: GnnArch,
}

#[pymethods]
impl PyGnn {
    #[staticmethod]
    #[pyo3(signature = (widths, taps, nonlinearity = "relu", seed = 0, step = 1.0))]
    fn random(widths: Vec<usize>, taps: usize, nonlinearity: &str, seed: u64, step: f64) -> PyResult<Self> {
        let sigma = parse::<Nonlinearity>(nonlinearity, "nonlinearity")?;
        let arch = GnnArch::random(widths, taps, sigma, seed).and_then(|a| a.with_step(step)).map_err(err)?;
        Ok(PyGnn { inner: arch })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let f = std::fs::File::open(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        Ok(PyGnn { inner: GnnArch::read_checkpoint(std::io::BufReader::new(f)).map_err(err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let mut buf = Vec::new();
        self.inner.write_checkpoint(&mut buf).map_err(err)?;
        std::fs::write(path, buf).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))
    }

    #[getter]
    fn widths(&self) -> Vec<usize> {
        self.inner.widths().to_vec()
    }

    fn params(&self) -> Vec<f64> {
        self.inner.params()
    }

    fn set_params(&mut self, params: Vec<f64>) -> PyResult<()> {
        self.inner.set_params(&params).map_err(err)
    }

    /// Output for node features `x` (`n` rows, one column per input
    /// feature).
    fn forward(&self, graph: &PyGraph, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let cache = gnn_forward(&self.inner, &graph.inner, &from_rows(&x)?).map_err(err)?;
        Ok(to_rows(cache.output()))
    }
}

/// Groups of `values` separated by more than `alpha`, as index lists.
#[pyfunction]
fn partition(values: Vec<f64>, alpha: f64) -> PyResult<Vec<Vec<usize>>> {
    let p = alpha_partition(&values, alpha).map_err(err)?;
    let mut groups = vec![Vec::new(); p.count()];
    for i in 0..values.len() {
        if let Some(g) = p.group_of(i) {
            groups[g].push(i);
        }
    }
    Ok(groups)
}

#[pyfunction]
#[pyo3(signature = (path, max_points = None, seed = 0))]
fn off_load(path: &str, max_points: Option<usize>, seed: u64) -> PyResult<PyPointCloud> {
    let p = std::path::Path::new(path);
    let inner = match max_points {
        Some(m) => exp::off_load_subsampled(p, m, seed),
        None => exp::off_load(p),
    }
    .map_err(err)?;
    Ok(PyPointCloud { inner })
}

/// `(clouds, labels)` of a balanced sphere/torus dataset.
#[pyfunction]
#[pyo3(signature = (n, per_class, seed = 0, shapes = None))]
fn synth_pointcloud_task(
    n: usize,
    per_class: usize,
    seed: u64,
    shapes: Option<Vec<String>>,
) -> PyResult<(Vec<PyPointCloud>, Vec<usize>)> {
    let shapes: Vec<ManifoldKind> = match shapes {
        Some(s) => s.iter().map(|k| parse(k, "shape")).collect::<PyResult<_>>()?,
        None => vec![ManifoldKind::Sphere, ManifoldKind::FlatTorus],
    };
    let set = exp::synth_pointcloud_task(&shapes, n, per_class, seed).map_err(err)?;
    Ok((set.clouds.into_iter().map(|inner| PyPointCloud { inner }).collect(), set.labels))
}

fn curve_csv(curve: &exp::ErrorCurve) -> PyResult<String> {
    let mut buf = Vec::new();
    curve.write_csv(&mut buf).map_err(err)?;
    String::from_utf8(buf).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Runs a convergence sweep from TOML text; returns the curve as CSV.
#[pyfunction]
#[pyo3(signature = (config, jobs = None))]
fn convergence_sweep(py: Python<'_>, config: &str, jobs: Option<usize>) -> PyResult<String> {
    let cfg: SweepConfig = parse_config(config).map_err(err)?;
    let curve = py.detach(|| exp::convergence_sweep(&cfg, jobs)).map_err(err)?;
    curve_csv(&curve)
}

/// Trains one regression model per penalty weight; returns the error
/// curve as CSV.
#[pyfunction]
#[pyo3(signature = (config = "", jobs = None))]
fn lipschitz_tradeoff(py: Python<'_>, config: &str, jobs: Option<usize>) -> PyResult<String> {
    let cfg: RegressionConfig = parse_config(config).map_err(err)?;
    let rep = py.detach(|| exp::lipschitz_tradeoff(&cfg, jobs)).map_err(err)?;
    curve_csv(&rep.curve)
}

/// Median test accuracy per `(model, n)`.
#[pyfunction]
#[pyo3(signature = (config = "", jobs = None))]
fn classify<'py>(py: Python<'py>, config: &str, jobs: Option<usize>) -> PyResult<Bound<'py, PyDict>> {
    let cfg: ClassifyConfig = parse_config(config).map_err(err)?;
    let (rep, _) = py.detach(|| exp::classify_experiment(&cfg, jobs)).map_err(err)?;
    let d = PyDict::new(py);
    for m in exp::ModelKind::ALL {
        for &n in std::iter::once(&cfg.n).chain(&cfg.transfer_n) {
            d.set_item((m.name(), n), rep.median_accuracy(m, n))?;
        }
    }
    Ok(d)
}

#[pymodule]
#[pyo3(name = "geognn")]
fn geognn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyManifold>()?;
    m.add_class::<PyPointCloud>()?;
    m.add_class::<PyGraph>()?;
    m.add_class::<PyGnn>()?;
    m.add_function(wrap_pyfunction!(partition, m)?)?;
    m.add_function(wrap_pyfunction!(off_load, m)?)?;
    m.add_function(wrap_pyfunction!(synth_pointcloud_task, m)?)?;
    m.add_function(wrap_pyfunction!(convergence_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(lipschitz_tradeoff, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
