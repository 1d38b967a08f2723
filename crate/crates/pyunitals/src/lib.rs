//! Python bindings for the unital toolkit: field arithmetic, the classical
//! unital construction, the per-point inversive planes and per-line spreads,
//! and the verification/certification drivers. Structured results come back
//! as JSON strings so the Python side can `json.loads` them.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use unitals_core::certificate::Status;
use unitals_core::galois;
use unitals_core::pipeline::{self, Mode, PipelineConfig};
use unitals_core::unital;

fn to_py_err(e: unitals_core::Error) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// GF(2^e) with table-based arithmetic; elements are integers in 0..2^e.
#[pyclass(name = "Field")]
struct PyField {
    inner: galois::Field,
}

#[pymethods]
impl PyField {
    #[new]
    fn new(degree: u32) -> PyResult<Self> {
        Ok(PyField {
            inner: galois::Field::new(degree).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn degree(&self) -> u32 {
        self.inner.degree()
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order()
    }

    #[getter]
    fn modulus(&self) -> u32 {
        self.inner.modulus()
    }

    fn add(&self, a: u16, b: u16) -> PyResult<u16> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.inner.add(a, b))
    }

    fn mul(&self, a: u16, b: u16) -> PyResult<u16> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.inner.mul(a, b))
    }

    fn inv(&self, a: u16) -> PyResult<u16> {
        self.check(a)?;
        if a == 0 {
            return Err(PyValueError::new_err("zero has no inverse"));
        }
        Ok(self.inner.inv(a))
    }

    fn pow(&self, a: u16, k: usize) -> PyResult<u16> {
        self.check(a)?;
        Ok(self.inner.pow(a, k))
    }

    /// The map a -> a^q, defined on fields of even degree.
    fn conjugate(&self, a: u16) -> PyResult<u16> {
        self.check(a)?;
        self.inner.conjugate(a).map_err(to_py_err)
    }

    /// The map a -> a^{q+1} into the subfield, defined on even degrees.
    fn norm(&self, a: u16) -> PyResult<u16> {
        self.check(a)?;
        self.inner.norm(a).map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!("Field(2^{})", self.inner.degree())
    }
}

impl PyField {
    fn check(&self, a: u16) -> PyResult<()> {
        if (a as usize) < self.inner.order() {
            Ok(())
        } else {
            Err(PyValueError::new_err(format!(
                "element {a} outside 0..{}",
                self.inner.order()
            )))
        }
    }
}

/// A unital design with its derived structures.
#[pyclass(name = "Unital")]
struct PyUnital {
    inner: unital::Unital,
}

#[pymethods]
impl PyUnital {
    /// The classical unital of order 2^e.
    #[staticmethod]
    fn hermitian(e: u32) -> PyResult<Self> {
        Ok(PyUnital {
            inner: unital::hermitian_unital(e).map_err(to_py_err)?,
        })
    }

    /// Load any 2-(n^3+1, n+1, 1)-shaped design from its JSON form.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(PyUnital {
            inner: unital::Unital::from_json(&value).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order
    }

    #[getter]
    fn num_points(&self) -> usize {
        self.inner.v()
    }

    #[getter]
    fn num_lines(&self) -> usize {
        self.inner.b()
    }

    fn line(&self, l: u32) -> PyResult<Vec<u32>> {
        if l as usize >= self.inner.b() {
            return Err(PyValueError::new_err("line id out of range"));
        }
        Ok(self.inner.line(l).to_vec())
    }

    fn lines_through(&self, p: u32) -> PyResult<Vec<u32>> {
        if p as usize >= self.inner.v() {
            return Err(PyValueError::new_err("point id out of range"));
        }
        Ok(self.inner.lines_through(p).to_vec())
    }

    fn is_design(&self) -> bool {
        self.inner.is_unital_design()
    }

    fn to_json(&self) -> String {
        self.inner.to_json().to_string()
    }

    /// All quadrilaterals of four lines pairwise meeting in six points.
    fn check_onan(&self) -> Vec<[u32; 4]> {
        unital::check_onan(&self.inner)
    }

    /// None when condition (II) holds; otherwise the first witness as JSON.
    fn check_condition_ii(&self) -> Option<String> {
        unital::check_condition_ii(&self.inner)
            .map(|w| serde_json::to_string(&w).expect("serializable witness"))
    }

    /// The parallel classes at a point: list of (members, met_lines).
    fn parallel_classes(&self, x: u32) -> PyResult<Vec<(Vec<u32>, Vec<u32>)>> {
        let classes = unital::x_parallel_classes(&self.inner, x).map_err(to_py_err)?;
        Ok(classes.into_iter().map(|c| (c.members, c.met)).collect())
    }

    /// Circle counts of the inversive plane at a point:
    /// (points, class_circles, infinity_circles).
    fn inversive_plane_counts(&self, x: u32) -> PyResult<(usize, usize, usize)> {
        let plane = self.inner.inversive_plane_at(x).map_err(to_py_err)?;
        let classes = plane
            .kinds
            .iter()
            .filter(|&&k| k == unital::CircleKind::Class)
            .count();
        Ok((
            plane.plane.inc.v,
            classes,
            plane.plane.inc.b() - classes,
        ))
    }

    /// The special spread through a line, as sorted line ids.
    fn special_spread(&self, l: u32) -> PyResult<Vec<u32>> {
        Ok(self
            .inner
            .special_spread(l)
            .map_err(to_py_err)?
            .lines
            .clone())
    }

    /// The third line completing (l, m) to a self-polar triangle.
    fn polar_triple(&self, l: u32, m: u32) -> PyResult<u32> {
        unital::polar_triple(&self.inner, l, m).map_err(to_py_err)
    }

    /// Run the selected verification stages; returns the bundle as JSON.
    #[pyo3(signature = (checks=vec![], seed=0))]
    fn verify(&self, checks: Vec<String>, seed: u64) -> PyResult<String> {
        let mut cfg = PipelineConfig::default_for_order(self.inner.order);
        cfg.seed = seed;
        let bundle = pipeline::run_verify(&self.inner, &checks, &cfg);
        Ok(serde_json::to_string(&bundle).expect("serializable bundle"))
    }

    /// Run the full classicality pipeline; returns (passed, bundle_json).
    #[pyo3(signature = (mode="auto", seed=0, line=None))]
    fn certify_classical(
        &self,
        mode: &str,
        seed: u64,
        line: Option<u32>,
    ) -> PyResult<(bool, String)> {
        let mut cfg = PipelineConfig::default_for_order(self.inner.order);
        match mode {
            "auto" => {}
            "exhaustive" => cfg.mode = Mode::Exhaustive,
            "sampled" => cfg.mode = Mode::Sampled,
            other => return Err(PyValueError::new_err(format!("unknown mode {other}"))),
        }
        cfg.seed = seed;
        cfg.line = line;
        let bundle = pipeline::certify_classical(&self.inner, &cfg);
        Ok((
            bundle.verdict == Status::Pass,
            serde_json::to_string(&bundle).expect("serializable bundle"),
        ))
    }

    fn __repr__(&self) -> String {
        format!(
            "Unital(order={}, points={}, lines={})",
            self.inner.order,
            self.inner.v(),
            self.inner.b()
        )
    }
}

/// Build artifacts for an order: (unital_json, tables_json).
#[pyfunction]
fn build_artifacts(order: usize) -> PyResult<(String, String)> {
    let (u, t) = pipeline::build_artifacts(order).map_err(to_py_err)?;
    Ok((u.to_string(), t.to_string()))
}

#[pymodule]
fn pyunitals(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyField>()?;
    m.add_class::<PyUnital>()?;
    m.add_function(wrap_pyfunction!(build_artifacts, m)?)?;
    Ok(())
}
