//! Python bindings for running transfers and reading their bundles.
//! Reports cross the boundary as plain dicts.

use std::path::PathBuf;

use dextransfer::pipeline::{self, PipelineError, RunOptions, Stage, TransferConfig};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;

create_exception!(dextransfer_py, TransferError, PyException);

fn to_py(e: PipelineError) -> PyErr {
    TransferError::new_err(e.to_string())
}

fn to_dict<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    PyModule::import(py, "json")?.call_method1("loads", (text,))
}

/// Runs the transfer described by a JSON config file and returns its metric report.
#[pyfunction]
#[pyo3(signature = (config, seed=None, no_rl=false, resume_from=None))]
fn run_transfer<'py>(
    py: Python<'py>,
    config: PathBuf,
    seed: Option<u64>,
    no_rl: bool,
    resume_from: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let resume_from = resume_from
        .map(|s| s.parse::<Stage>())
        .transpose()
        .map_err(PyValueError::new_err)?;
    let mut cfg = TransferConfig::load(&config).map_err(to_py)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let report = py
        .detach(|| pipeline::run_transfer(&cfg, &RunOptions { no_rl, resume_from }))
        .map_err(to_py)?
        .report;
    to_dict(py, &report)
}

/// Recomputes the metric report of a bundle directory.
#[pyfunction]
fn evaluate_bundle<'py>(py: Python<'py>, bundle: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let report = py
        .detach(|| pipeline::evaluate_bundle(&bundle))
        .map_err(to_py)?;
    to_dict(py, &report)
}

/// Summarizes every bundle under a directory as a dict with `entries` and `summary`.
#[pyfunction]
fn corpus_report<'py>(py: Python<'py>, corpus: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let report = py
        .detach(|| pipeline::corpus_report(&corpus))
        .map_err(to_py)?;
    to_dict(py, &report)
}

/// Plain-text corpus table with the columns SR Grasp, SR Follow, Ep, Er, TSR.
#[pyfunction]
fn corpus_table(py: Python<'_>, corpus: PathBuf) -> PyResult<String> {
    let report = py
        .detach(|| pipeline::corpus_report(&corpus))
        .map_err(to_py)?;
    Ok(report.to_table())
}

/// Pipeline stage names in execution order.
#[pyfunction]
fn stages() -> Vec<&'static str> {
    Stage::ALL.iter().map(|s| s.name()).collect()
}

#[pymodule]
fn dextransfer_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("TransferError", m.py().get_type::<TransferError>())?;
    m.add_function(wrap_pyfunction!(run_transfer, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_bundle, m)?)?;
    m.add_function(wrap_pyfunction!(corpus_report, m)?)?;
    m.add_function(wrap_pyfunction!(corpus_table, m)?)?;
    m.add_function(wrap_pyfunction!(stages, m)?)?;
    Ok(())
}
