//! Python module `carleman`: the stage runner and the acceptance criteria.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use carleman_core::acceptance::{self, AcceptOptions, CriterionResult};
use carleman_core::pipeline::{run_scenario_file, Overrides, RunOutcome};
use carleman_core::scenario::Stage;
use carleman_core::Error;

create_exception!(carleman, CarlemanError, PyException, "Scenario could not be loaded or run.");

fn to_py(e: Error) -> PyErr {
    CarlemanError::new_err((e.exit_code(), e.to_string()))
}

/// Result of one scenario stage.
#[pyclass(frozen, get_all, module = "carleman")]
pub struct StageRun {
    stage: String,
    out_dir: PathBuf,
    exit_code: i32,
    error: Option<String>,
    log: Vec<String>,
    /// `(path, sha256, bytes)` of each artifact.
    files: Vec<(String, String, usize)>,
}

impl From<RunOutcome> for StageRun {
    fn from(o: RunOutcome) -> Self {
        StageRun {
            stage: o.stage.name().to_string(),
            exit_code: o.exit_code(),
            error: o.error.map(|e| e.to_string()),
            log: o.log,
            files: o.manifest.into_iter().map(|e| (e.path, e.sha256, e.bytes)).collect(),
            out_dir: o.out_dir,
        }
    }
}

#[pymethods]
impl StageRun {
    fn __repr__(&self) -> String {
        format!("StageRun(stage='{}', exit_code={}, files={})", self.stage, self.exit_code, self.files.len())
    }
}

/// Outcome of one acceptance criterion.
#[pyclass(frozen, get_all, module = "carleman")]
pub struct Criterion {
    id: String,
    title: String,
    passed: bool,
    error: Option<String>,
    elapsed: f64,
    budget: f64,
    /// `(name, observed, relation, bound, pass)` per compared quantity.
    checks: Vec<(String, f64, String, f64, bool)>,
    line: String,
}

impl From<CriterionResult> for Criterion {
    fn from(r: CriterionResult) -> Self {
        Criterion {
            id: r.id.to_string(),
            title: r.title.to_string(),
            passed: r.pass(),
            elapsed: r.elapsed.as_secs_f64(),
            budget: r.budget_secs,
            line: r.line(),
            checks: r
                .checks
                .into_iter()
                .map(|c| (c.name, c.observed, c.relation.to_string(), c.bound, c.pass))
                .collect(),
            error: r.error,
        }
    }
}

#[pymethods]
impl Criterion {
    fn __repr__(&self) -> String {
        self.line.clone()
    }
}

/// Runs `stage` of the scenario at `scenario` (the scenario's own stage when
/// omitted). Stage failures are reported in the result; load failures raise.
#[pyfunction]
#[pyo3(signature = (scenario, stage=None, out=None, seed=None, beta=None, s_list=None, lam=None, noise=None, refine=None))]
#[allow(clippy::too_many_arguments)]
fn run(
    py: Python<'_>,
    scenario: PathBuf,
    stage: Option<&str>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    beta: Option<f64>,
    s_list: Option<Vec<f64>>,
    lam: Option<f64>,
    noise: Option<f64>,
    refine: Option<u32>,
) -> PyResult<StageRun> {
    let stage = stage.map(str::parse::<Stage>).transpose().map_err(to_py)?;
    let ov = Overrides {
        out,
        seed,
        beta,
        s_list,
        lambda: lam,
        noise,
        refine,
    };
    let outcome = py.detach(|| run_scenario_file(&scenario, stage, &ov)).map_err(to_py)?;
    Ok(outcome.into())
}

/// `(id, title)` of every acceptance criterion, plus the determinism check.
#[pyfunction]
fn criteria() -> Vec<(String, String)> {
    let mut v: Vec<(String, String)> = acceptance::criteria()
        .iter()
        .map(|c| (c.id.to_string(), c.title.to_string()))
        .collect();
    v.push((acceptance::DETERMINISM_ID.to_string(), "repeated runs are byte-identical".to_string()));
    v
}

#[pyfunction]
#[pyo3(signature = (id, seed=7))]
fn run_criterion(py: Python<'_>, id: &str, seed: u64) -> PyResult<Criterion> {
    let opts = AcceptOptions {
        seed,
        ..AcceptOptions::default()
    };
    let r = py.detach(|| acceptance::run_criterion(id, &opts)).map_err(to_py)?;
    Ok(r.into())
}

#[pymodule]
fn carleman(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("CarlemanError", m.py().get_type::<CarlemanError>())?;
    m.add_class::<StageRun>()?;
    m.add_class::<Criterion>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(criteria, m)?)?;
    m.add_function(wrap_pyfunction!(run_criterion, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_module<R>(f: impl FnOnce(&Bound<'_, PyModule>) -> R) -> R {
        Python::initialize();
        Python::attach(|py| {
            let m = PyModule::new(py, "carleman").unwrap();
            carleman(&m).unwrap();
            f(&m)
        })
    }

    #[test]
    fn criteria_include_determinism() {
        let ids = criteria();
        assert!(ids.iter().any(|(id, _)| id == acceptance::DETERMINISM_ID));
        assert_eq!(ids.len(), acceptance::criteria().len() + 1);
    }

    #[test]
    fn missing_scenario_raises_with_exit_code_one() {
        with_module(|m| {
            let err = m.getattr("run").unwrap().call1(("/nonexistent/s.toml",)).unwrap_err();
            let py = m.py();
            assert!(err.is_instance_of::<CarlemanError>(py));
            let code: i32 = err.value(py).getattr("args").unwrap().get_item(0).unwrap().extract().unwrap();
            assert_eq!(code, 1);
        });
    }

    #[test]
    fn unknown_stage_is_rejected() {
        with_module(|m| {
            let err = m.getattr("run").unwrap().call1(("s.toml", "nope")).unwrap_err();
            assert!(err.to_string().contains("nope"));
        });
    }
}
