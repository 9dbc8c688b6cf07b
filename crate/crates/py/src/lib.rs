//! Python bindings: policy parsing and validation, the augmentation kernels
//! and a one-call experiment runner.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde_json::json;

use augloop_core::config::{execute, RunConfig};
use augloop_core::policy::{self as core_policy, AugKind, Catalog, PolicyErrors, CATALOG_VERSION};
use augloop_core::transforms::{self, ImageBuffer, SampleKey};

fn policy_err(e: PolicyErrors) -> PyErr {
    PyValueError::new_err(e.render())
}

/// A validated augmentation policy.
#[pyclass(name = "Policy", frozen)]
struct PyPolicy {
    inner: core_policy::Policy,
}

#[pymethods]
impl PyPolicy {
    /// Parses policy JSON, requiring exactly `n` operations.
    #[new]
    fn new(text: &str, n: usize) -> PyResult<Self> {
        core_policy::parse_policy(text, Catalog::standard(), n)
            .map(|inner| PyPolicy { inner })
            .map_err(policy_err)
    }

    fn canonical(&self) -> PyResult<String> {
        core_policy::canonical_serialize(&self.inner, Catalog::standard()).map_err(policy_err)
    }

    fn kinds(&self) -> Vec<&'static str> {
        self.inner.kinds().map(AugKind::name).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Applies the policy to a row-major `height x width x channels` image
    /// with values in [0, 1].
    #[pyo3(signature = (pixels, height, width, channels, seed, epoch = 0, sample = 0))]
    #[allow(clippy::too_many_arguments)]
    fn apply(
        &self,
        pixels: Vec<f32>,
        height: usize,
        width: usize,
        channels: usize,
        seed: u64,
        epoch: u64,
        sample: u64,
    ) -> PyResult<Vec<f32>> {
        let img = ImageBuffer::new(height, width, channels, pixels).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let key = SampleKey { seed, epoch, sample };
        transforms::apply_policy(&img, &self.inner, key)
            .map(ImageBuffer::into_data)
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> PyResult<String> {
        Ok(format!("Policy({})", self.canonical()?))
    }
}

#[pyfunction]
fn catalog_kinds() -> Vec<&'static str> {
    Catalog::standard().kinds().map(AugKind::name).collect()
}

#[pyfunction]
fn catalog_version() -> &'static str {
    CATALOG_VERSION
}

/// Returns `(code, message)` pairs; empty when the policy is valid.
#[pyfunction]
fn validate(text: &str, n: usize) -> Vec<(String, String)> {
    match core_policy::parse_policy(text, Catalog::standard(), n) {
        Ok(_) => Vec::new(),
        Err(errs) => errs.0.iter().map(|e| (e.code.as_str().to_string(), e.to_string())).collect(),
    }
}

/// Canonical JSON of a single operation at magnitude `m` in [0, 1].
#[pyfunction]
fn magnitude_to_params(kind: &str, m: f64) -> PyResult<String> {
    let kind = AugKind::from_name(kind).ok_or_else(|| PyValueError::new_err(format!("unknown kind {kind:?}")))?;
    let op = core_policy::magnitude_to_params(Catalog::standard(), kind, m)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let policy = core_policy::Policy::new(vec![op]);
    let text = core_policy::canonical_serialize(&policy, Catalog::standard()).map_err(policy_err)?;
    let v: serde_json::Value = serde_json::from_str(&text).expect("canonical text is JSON");
    Ok(v["ops"][0].to_string())
}

/// Runs one experiment from a JSON config and returns a JSON summary.
#[pyfunction]
fn run_experiment(config_json: &str) -> PyResult<String> {
    let cfg = RunConfig::from_json(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let artifacts = execute(&cfg).map_err(|e| {
        if e.is_validation() {
            PyValueError::new_err(e.to_string())
        } else {
            PyRuntimeError::new_err(e.to_string())
        }
    })?;
    let o = &artifacts.outcome;
    Ok(json!({
        "run_id": o.run_id,
        "val_accuracy": o.final_metrics.val_accuracy,
        "llm_queries": o.cost.llm_queries,
        "total_epochs": o.cost.total_epochs_trained,
        "stopped_early": o.stopped_early,
        "ledger": artifacts.ledger_path,
    })
    .to_string())
}

#[pymodule]
fn augloop(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPolicy>()?;
    m.add_function(wrap_pyfunction!(catalog_kinds, m)?)?;
    m.add_function(wrap_pyfunction!(catalog_version, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(magnitude_to_params, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
