//! Python bindings: grids, eigen-patch solvers, mosaics and segmentation.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use patchseg::eigenpatch::{self, io as basis_io};
use patchseg::grid::io;
use patchseg::harness;
use patchseg::segmenter::BasisSolver;

fn to_py(e: patchseg::Error) -> PyErr {
    let msg = format!("[{}] {e}", e.kind());
    match e.kind() {
        "io" => PyIOError::new_err(msg),
        "invalid_argument" | "dimension_mismatch" | "kernel_too_large" | "format" => {
            PyValueError::new_err(msg)
        }
        _ => PyRuntimeError::new_err(msg),
    }
}

fn rows_dims<T>(rows: &[Vec<T>]) -> PyResult<(usize, usize)> {
    let h = rows.len();
    let w = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != w) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Ok((w, h))
}

/// Grayscale image, row-major, `f64` intensities.
#[pyclass(
    name = "ImageGrid",
    module = "patchseg_py",
    frozen,
    skip_from_py_object
)]
#[derive(Clone)]
struct PyImage(patchseg::ImageGrid);

#[pymethods]
impl PyImage {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let (w, h) = rows_dims(&rows)?;
        let data = rows.into_iter().flatten().collect();
        patchseg::ImageGrid::new(w, h, data)
            .map(Self)
            .map_err(to_py)
    }

    /// Loads PNG or PGM with intensities in `[0, 1]`.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        io::load_image(path).map(Self).map_err(to_py)
    }

    fn save_png(&self, path: &str) -> PyResult<()> {
        io::save_png(&self.0, path).map_err(to_py)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    fn get(&self, x: usize, y: usize) -> PyResult<f64> {
        if x >= self.0.width() || y >= self.0.height() {
            return Err(PyValueError::new_err("index out of range"));
        }
        Ok(self.0.get(x, y))
    }

    fn to_list(&self) -> Vec<Vec<f64>> {
        (0..self.0.height())
            .map(|y| self.0.row(y).to_vec())
            .collect()
    }

    fn mean(&self) -> f64 {
        self.0.mean()
    }

    fn __repr__(&self) -> String {
        format!("ImageGrid({}x{})", self.0.width(), self.0.height())
    }
}

/// Binary region mask.
#[pyclass(
    name = "RegionMask",
    module = "patchseg_py",
    frozen,
    skip_from_py_object
)]
#[derive(Clone)]
struct PyMask(patchseg::RegionMask);

#[pymethods]
impl PyMask {
    #[new]
    fn new(rows: Vec<Vec<bool>>) -> PyResult<Self> {
        let (w, h) = rows_dims(&rows)?;
        let data = rows.into_iter().flatten().collect();
        patchseg::RegionMask::new(w, h, data)
            .map(Self)
            .map_err(to_py)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        io::load_mask(path).map(Self).map_err(to_py)
    }

    /// Axis-aligned box given as fractions of the image size.
    #[staticmethod]
    fn rectangle(
        width: usize,
        height: usize,
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
    ) -> PyResult<Self> {
        harness::InitContour::Rectangle { x0, y0, x1, y1 }
            .render(width, height)
            .map(Self)
            .map_err(to_py)
    }

    /// Disk with centre and radius given as fractions of the width.
    #[staticmethod]
    fn circle(width: usize, height: usize, cx: f64, cy: f64, r: f64) -> PyResult<Self> {
        harness::InitContour::Circle { cx, cy, r }
            .render(width, height)
            .map(Self)
            .map_err(to_py)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        io::save_mask(&self.0, path).map_err(to_py)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    fn count(&self) -> usize {
        self.0.count()
    }

    fn complement(&self) -> Self {
        Self(self.0.complement())
    }

    fn to_list(&self) -> Vec<Vec<bool>> {
        let w = self.0.width();
        self.0.as_slice().chunks(w).map(<[bool]>::to_vec).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "RegionMask({}x{}, count={})",
            self.0.width(),
            self.0.height(),
            self.0.count()
        )
    }
}

/// Orthonormal set of square patches.
#[pyclass(name = "PatchBasis", module = "patchseg_py", frozen)]
struct PyBasis(patchseg::PatchBasis);

#[pymethods]
impl PyBasis {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        basis_io::read_basis(path).map(Self).map_err(to_py)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        basis_io::write_basis(path, &self.0, basis_io::Encoding::Text).map_err(to_py)
    }

    #[pyo3(signature = (path, zoom = 8))]
    fn save_tiles(&self, path: &str, zoom: usize) -> PyResult<()> {
        basis_io::save_basis_tiles(&self.0, path, zoom).map_err(to_py)
    }

    #[getter]
    fn side(&self) -> usize {
        self.0.side()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    /// Each basis as a flat row-major list.
    fn to_list(&self) -> Vec<Vec<f64>> {
        self.0.iter().map(|p| p.values().to_vec()).collect()
    }

    fn orthonormality_defect(&self) -> f64 {
        self.0.orthonormality_defect()
    }
}

/// Settings of a segmentation run; starts from the texture preset.
#[pyclass(
    name = "SegmentationConfig",
    module = "patchseg_py",
    frozen,
    skip_from_py_object
)]
#[derive(Clone)]
struct PyConfig(patchseg::SegmentationConfig);

#[pymethods]
impl PyConfig {
    /// Keyword arguments override fields of the texture preset, or of the
    /// piecewise smooth preset when `smooth=True`.
    #[new]
    #[pyo3(signature = (smooth = false, **overrides))]
    fn new(smooth: bool, overrides: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let base = if smooth {
            patchseg::SegmentationConfig::smooth()
        } else {
            patchseg::SegmentationConfig::texture()
        };
        let mut value = serde_json::to_value(&base).expect("serializable");
        if let Some(kw) = overrides {
            let obj = value.as_object_mut().expect("object");
            for (key, v) in kw.iter() {
                let key: String = key.extract()?;
                let key = if key == "k" { "K".to_string() } else { key };
                if !obj.contains_key(&key) {
                    return Err(PyValueError::new_err(format!("unknown setting {key}")));
                }
                obj.insert(key, py_to_json(&v)?);
            }
        }
        let cfg: patchseg::SegmentationConfig =
            serde_json::from_value(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
        cfg.validate().map_err(to_py)?;
        Ok(Self(cfg))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let cfg: patchseg::SegmentationConfig =
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        cfg.validate().map_err(to_py)?;
        Ok(Self(cfg))
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.0).expect("serializable")
    }

    #[getter]
    fn m(&self) -> usize {
        self.0.m
    }

    #[getter]
    fn k(&self) -> usize {
        self.0.k
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.0.alpha
    }

    #[getter]
    fn nu(&self) -> f64 {
        self.0.nu
    }

    #[getter]
    fn max_steps(&self) -> usize {
        self.0.max_steps
    }

    #[getter]
    fn refresh_every(&self) -> usize {
        self.0.refresh_every
    }

    #[getter]
    fn gd_iters(&self) -> usize {
        self.0.gd_iters
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.0.sigma
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    #[getter]
    fn eps(&self) -> f64 {
        self.0.eps
    }

    #[getter]
    fn reinit_every(&self) -> usize {
        self.0.reinit_every
    }

    #[getter]
    fn stable_fraction(&self) -> f64 {
        self.0.stable_fraction
    }

    #[getter]
    fn stable_steps(&self) -> usize {
        self.0.stable_steps
    }

    #[getter]
    fn solver(&self) -> &'static str {
        match self.0.solver {
            BasisSolver::Gd => "gd",
            BasisSolver::Oracle => "oracle",
        }
    }

    fn __repr__(&self) -> String {
        format!("SegmentationConfig({})", self.to_json())
    }
}

fn py_to_json(v: &Bound<'_, PyAny>) -> PyResult<serde_json::Value> {
    if let Ok(b) = v.extract::<bool>() {
        return Ok(b.into());
    }
    if let Ok(i) = v.extract::<i64>() {
        return Ok(i.into());
    }
    if let Ok(f) = v.extract::<f64>() {
        return Ok(f.into());
    }
    if let Ok(s) = v.extract::<String>() {
        return Ok(s.into());
    }
    Err(PyValueError::new_err(
        "settings must be numbers, booleans or strings",
    ))
}

/// Outcome of a segmentation run.
#[pyclass(name = "SegmentationResult", module = "patchseg_py", frozen)]
struct PyResult_(patchseg::SegmentationResult);

#[pymethods]
impl PyResult_ {
    /// Region ids, row-major rows.
    fn labels(&self) -> Vec<Vec<u32>> {
        let l = &self.0.labels;
        l.as_slice()
            .chunks(l.width())
            .map(<[u32]>::to_vec)
            .collect()
    }

    /// Region 0 as a mask.
    fn mask(&self) -> PyMask {
        PyMask(self.0.mask())
    }

    fn phi(&self) -> Option<PyImage> {
        self.0.phi.clone().map(PyImage)
    }

    fn basis(&self, region: usize) -> PyResult<PyBasis> {
        self.0
            .models
            .get(region)
            .map(|m| PyBasis(m.basis.clone()))
            .ok_or_else(|| PyValueError::new_err("region out of range"))
    }

    #[getter]
    fn steps_used(&self) -> usize {
        self.0.steps_used
    }

    #[getter]
    fn energy_trace(&self) -> Vec<f64> {
        self.0.energy_trace.clone()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.0.warnings.clone()
    }

    #[getter]
    fn elapsed_secs(&self) -> f64 {
        self.0.elapsed_secs
    }

    fn save_labels(&self, path: &str) -> PyResult<()> {
        io::save_labels(&self.0.labels, path).map_err(to_py)
    }
}

fn config_or_default(config: Option<&PyConfig>) -> patchseg::SegmentationConfig {
    config.map(|c| c.0.clone()).unwrap_or_default()
}

/// Two-phase segmentation from an initial region.
#[pyfunction]
#[pyo3(signature = (image, init_mask, config = None))]
fn segment_two_phase(
    py: Python<'_>,
    image: &PyImage,
    init_mask: &PyMask,
    config: Option<&PyConfig>,
) -> PyResult<PyResult_> {
    let cfg = config_or_default(config);
    py.detach(|| patchseg::segment_two_phase(&image.0, &init_mask.0, &cfg))
        .map(PyResult_)
        .map_err(to_py)
}

/// Multi-region segmentation from one disjoint seed mask per region.
#[pyfunction]
#[pyo3(signature = (image, seeds, config = None))]
fn segment_one_vs_all(
    py: Python<'_>,
    image: &PyImage,
    seeds: Vec<PyRef<'_, PyMask>>,
    config: Option<&PyConfig>,
) -> PyResult<PyResult_> {
    let cfg = config_or_default(config);
    let seeds: Vec<patchseg::RegionMask> = seeds.iter().map(|s| s.0.clone()).collect();
    py.detach(|| patchseg::segment_one_vs_all(&image.0, &seeds, &cfg))
        .map(PyResult_)
        .map_err(to_py)
}

/// Gradient-flow eigen-patches of a region; returns the basis and the energy of each basis.
#[pyfunction]
#[pyo3(signature = (image, mask, m, k, seed = 0))]
fn gd_solve_basis(
    py: Python<'_>,
    image: &PyImage,
    mask: &PyMask,
    m: usize,
    k: usize,
    seed: u64,
) -> PyResult<(PyBasis, Vec<f64>)> {
    let cfg = patchseg::GdConfig {
        seed,
        ..Default::default()
    };
    let (basis, report) = py
        .detach(|| eigenpatch::gd_solve_basis(&image.0, &mask.0, m, k, &cfg))
        .map_err(to_py)?;
    Ok((PyBasis(basis), report.basis_energies))
}

/// Dense eigen-solver reference; returns the basis and its eigenvalues.
#[pyfunction]
fn svd_solve_basis(
    py: Python<'_>,
    image: &PyImage,
    mask: &PyMask,
    m: usize,
    k: usize,
) -> PyResult<(PyBasis, Vec<f64>)> {
    let (basis, values) = py
        .detach(|| eigenpatch::svd_solve_basis(&image.0, &mask.0, m, k))
        .map_err(to_py)?;
    Ok((PyBasis(basis), values))
}

/// Summed squared patch residual over the mask.
#[pyfunction]
fn reconstruction_error_total(image: &PyImage, mask: &PyMask, basis: &PyBasis) -> PyResult<f64> {
    eigenpatch::reconstruction_error_total(&image.0, &mask.0, &basis.0).map_err(to_py)
}

/// Summed squared projection onto the basis over the mask.
#[pyfunction]
fn projection_energy(image: &PyImage, mask: &PyMask, basis: &PyBasis) -> PyResult<f64> {
    eigenpatch::projection_energy(&image.0, &mask.0, &basis.0).map_err(to_py)
}

/// Mosaic image and ground truth, from a built-in pair index or a JSON specification.
#[pyfunction]
#[pyo3(signature = (pair = None, spec_json = None))]
fn make_mosaic(pair: Option<usize>, spec_json: Option<&str>) -> PyResult<(PyImage, PyMask)> {
    let spec = match (pair, spec_json) {
        (Some(i), None) => harness::structure_only_suite()
            .into_iter()
            .nth(i)
            .ok_or_else(|| PyValueError::new_err("pair out of range"))?,
        (None, Some(text)) => {
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?
        }
        _ => {
            return Err(PyValueError::new_err(
                "give exactly one of pair or spec_json",
            ))
        }
    };
    let (img, truth) = harness::make_mosaic(&spec).map_err(to_py)?;
    Ok((PyImage(img), PyMask(truth)))
}

/// Number of built-in structure-only mosaic pairs.
#[pyfunction]
fn suite_len() -> usize {
    harness::structure_only_suite().len()
}

/// Error rates of a two-phase mask, up to label swap.
#[pyfunction]
fn evaluate_mask(labels: &PyMask, truth: &PyMask) -> PyResult<(f64, Vec<f64>)> {
    let m = harness::evaluate_mask(&labels.0, &truth.0).map_err(to_py)?;
    Ok((m.error_rate, m.error_rate_per_region))
}

#[pymodule]
fn patchseg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyImage>()?;
    m.add_class::<PyMask>()?;
    m.add_class::<PyBasis>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyResult_>()?;
    m.add_function(wrap_pyfunction!(segment_two_phase, m)?)?;
    m.add_function(wrap_pyfunction!(segment_one_vs_all, m)?)?;
    m.add_function(wrap_pyfunction!(gd_solve_basis, m)?)?;
    m.add_function(wrap_pyfunction!(svd_solve_basis, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruction_error_total, m)?)?;
    m.add_function(wrap_pyfunction!(projection_energy, m)?)?;
    m.add_function(wrap_pyfunction!(make_mosaic, m)?)?;
    m.add_function(wrap_pyfunction!(suite_len, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_mask, m)?)?;
    Ok(())
}
