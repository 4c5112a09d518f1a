//! Python bindings: jet arithmetic, a few scalar kernels and the verification suites.

use hecke_core::jet::Jet;
use hecke_core::suites::{run_criterion, suite_criteria, Settings};
use hecke_core::{Error, C64};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::ConfigInvalid(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn settings(config: Option<&str>) -> PyResult<Settings> {
    let s = match config {
        Some(text) => serde_json::from_str::<Settings>(text).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => Settings::default(),
    };
    s.validate().map_err(py_err)?;
    Ok(s)
}

fn jet(coeffs: Vec<C64>) -> PyResult<Jet> {
    Jet::new(&coeffs, coeffs.len()).map_err(py_err)
}

/// Logarithm of a jet a₀ + a₁ε + … (principal branch on a₀).
#[pyfunction]
pub fn jet_log(coeffs: Vec<C64>) -> PyResult<Vec<C64>> {
    Ok(jet(coeffs)?.log().map_err(py_err)?.coeffs().to_vec())
}

#[pyfunction]
pub fn jet_exp(coeffs: Vec<C64>) -> PyResult<Vec<C64>> {
    Ok(jet(coeffs)?.exp().coeffs().to_vec())
}

#[pyfunction]
pub fn jet_mul(a: Vec<C64>, b: Vec<C64>) -> PyResult<Vec<C64>> {
    if a.len() != b.len() {
        return Err(PyValueError::new_err("jets of different order"));
    }
    Ok((jet(a)? * jet(b)?).coeffs().to_vec())
}

/// σ(s) = x(s−1)/(s−x)
#[pyfunction]
pub fn sigma(s: C64, x: C64) -> C64 {
    hecke_core::group::sigma(s, x)
}

/// Total mass of ν from the periods of y² = s(s−1)(s−x).
#[pyfunction]
pub fn nu_mass(x: C64) -> f64 {
    hecke_core::hecke::nu_mass_periods(x)
}

#[pyfunction]
#[pyo3(signature = (config=None))]
fn default_settings(config: Option<&str>) -> PyResult<String> {
    serde_json::to_string_pretty(&settings(config)?).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Runs one criterion (1..=13) and returns its report as JSON.
#[pyfunction]
#[pyo3(signature = (criterion, config=None))]
fn run(py: Python<'_>, criterion: u32, config: Option<&str>) -> PyResult<String> {
    let s = settings(config)?;
    let rep = py.detach(|| run_criterion(criterion, &s)).map_err(py_err)?;
    serde_json::to_string(&rep).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Criteria of a named suite.
#[pyfunction]
pub fn suite(name: &str) -> PyResult<Vec<u32>> {
    suite_criteria(name).map(|c| c.to_vec()).ok_or_else(|| PyValueError::new_err(format!("unknown suite {name:?}")))
}

#[pymodule]
fn hecke_lab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(jet_log, m)?)?;
    m.add_function(wrap_pyfunction!(jet_exp, m)?)?;
    m.add_function(wrap_pyfunction!(jet_mul, m)?)?;
    m.add_function(wrap_pyfunction!(sigma, m)?)?;
    m.add_function(wrap_pyfunction!(nu_mass, m)?)?;
    m.add_function(wrap_pyfunction!(default_settings, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(suite, m)?)?;
    Ok(())
}
