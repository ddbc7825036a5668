//! Python bindings: configuration, step-wise simulation, whole runs and
//! the curve fitter.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use presim::analysis::{self, FitResult, Model, Series};
use presim::engine::{self, DecisionOutcome, MigrationOrigin, Refusal};
use presim::experiment::{self, RunOptions};
use presim::metrics::{self, MetricSample};
use presim::risk;
use presim::trust::Feedback;
use presim::Event;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Simulation parameters. Keyword arguments override the defaults, e.g.
/// `SimConfig(seed=3, institutions=20, mutation_probability=2.0)`.
#[pyclass(name = "SimConfig", module = "presim_py", from_py_object)]
#[derive(Clone)]
struct PySimConfig {
    inner: engine::SimConfig,
}

fn py_to_config_value(value: &Bound<'_, PyAny>) -> PyResult<String> {
    if let Ok(b) = value.extract::<bool>() {
        return Ok(b.to_string());
    }
    if let Ok(items) = value.extract::<Vec<u64>>() {
        let parts: Vec<String> = items.iter().map(u64::to_string).collect();
        return Ok(format!("[{}]", parts.join(",")));
    }
    Ok(value.str()?.to_string())
}

#[pymethods]
impl PySimConfig {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut cfg = Self {
            inner: engine::SimConfig::default(),
        };
        if let Some(kwargs) = kwargs {
            for (k, v) in kwargs.iter() {
                cfg.set(&k.extract::<String>()?, &v)?;
            }
        }
        Ok(cfg)
    }

    /// Loads a TOML configuration file.
    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        engine::SimConfig::from_file(&path)
            .map(|inner| Self { inner })
            .map_err(value_err)
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        engine::SimConfig::from_toml_str(text)
            .map(|inner| Self { inner })
            .map_err(value_err)
    }

    /// Every settable key.
    #[staticmethod]
    fn keys() -> Vec<&'static str> {
        engine::SimConfig::keys().to_vec()
    }

    /// Sets one key and re-validates the whole configuration.
    fn set(&mut self, key: &str, value: &Bound<'_, PyAny>) -> PyResult<()> {
        let text = py_to_config_value(value)?;
        let mut next = self.inner.clone();
        next.set(key, &text).map_err(value_err)?;
        next.validate().map_err(value_err)?;
        self.inner = next;
        Ok(())
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn cycles(&self) -> u64 {
        self.inner.cycles
    }

    #[getter]
    fn institutions(&self) -> usize {
        self.inner.institutions
    }

    #[getter]
    fn risk_threshold(&self) -> f64 {
        self.inner.risk_threshold
    }

    #[getter]
    fn suggest_threshold(&self) -> f64 {
        self.inner.suggest_threshold
    }

    #[getter]
    fn inform_threshold(&self) -> f64 {
        self.inner.inform_threshold
    }

    #[getter]
    fn mutation_probability(&self) -> f64 {
        self.inner.mutation_probability
    }

    #[getter]
    fn time_costs(&self) -> bool {
        self.inner.time_costs
    }

    fn __repr__(&self) -> String {
        format!(
            "SimConfig(seed={}, cycles={}, institutions={}, mutation_probability={})",
            self.inner.seed, self.inner.cycles, self.inner.institutions, self.inner.mutation_probability
        )
    }
}

fn sample_dict<'py>(py: Python<'py>, s: &MetricSample) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("cycle", s.cycle)?;
    d.set_item("migrations_total", s.migrations_total)?;
    d.set_item("migrations_freq", s.migrations_freq)?;
    d.set_item("freq_err", s.freq_err)?;
    d.set_item("in_progress", s.in_progress)?;
    d.set_item("trust_var_total", s.trust_var_total)?;
    d.set_item("trust_var_pos", s.trust_var_pos)?;
    d.set_item("trust_var_neg", s.trust_var_neg)?;
    d.set_item("trust_var_total_freq", s.trust_var_total_freq)?;
    d.set_item("trust_var_pos_freq", s.trust_var_pos_freq)?;
    d.set_item("trust_var_neg_freq", s.trust_var_neg_freq)?;
    d.set_item("good_pct", s.good_pct)?;
    d.set_item("false_pos_pct", s.false_pos_pct)?;
    d.set_item("false_neg_pct", s.false_neg_pct)?;
    d.set_item("indifferent_pct", s.indifferent_pct)?;
    Ok(d)
}

fn outcome_name(o: DecisionOutcome) -> &'static str {
    match o {
        DecisionOutcome::GoodAction => "good_action",
        DecisionOutcome::FalsePositive => "false_positive",
        DecisionOutcome::FalseNegative => "false_negative",
        DecisionOutcome::Indifferent => "indifferent",
    }
}

fn origin_text(o: MigrationOrigin) -> String {
    match o {
        MigrationOrigin::Suggestion { from } => format!("suggestion:{from}"),
        MigrationOrigin::Inform { from } => format!("inform:{from}"),
        MigrationOrigin::Autonomous => "autonomous".to_string(),
    }
}

fn refusal_text(r: Refusal) -> String {
    match r {
        Refusal::Unrenderable => "unrenderable".to_string(),
        Refusal::NotSafer => "not_safer".to_string(),
        Refusal::TooLong { estimate } => format!("too_long:{estimate}"),
    }
}

/// One event as a dict with a `kind` key plus the variant's fields.
fn event_dict<'py>(py: Python<'py>, e: &Event) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    match e {
        Event::Failure { inst, failure } => {
            d.set_item("kind", "failure")?;
            d.set_item("inst", inst)?;
            d.set_item("media_type", failure.media_type.name())?;
            d.set_item("format", failure.format)?;
            d.set_item("alert", failure.alert)?;
        }
        Event::AppInstalled { inst, media_type, app } => {
            d.set_item("kind", "app_installed")?;
            d.set_item("inst", inst)?;
            d.set_item("media_type", media_type.name())?;
            d.set_item("app", app)?;
        }
        Event::RequestSent {
            inst,
            media_type,
            format,
            tag,
        } => {
            d.set_item("kind", "request_sent")?;
            d.set_item("inst", inst)?;
            d.set_item("media_type", media_type.name())?;
            d.set_item("format", format)?;
            d.set_item("tag", tag)?;
        }
        Event::ProposeDropped { inst, from, tag } => {
            d.set_item("kind", "propose_dropped")?;
            d.set_item("inst", inst)?;
            d.set_item("from", from)?;
            d.set_item("tag", tag)?;
        }
        Event::IssueExpired { inst, tag } => {
            d.set_item("kind", "issue_expired")?;
            d.set_item("inst", inst)?;
            d.set_item("tag", tag)?;
        }
        Event::MigrationStarted {
            inst,
            media_type,
            src,
            dst,
            cycles,
            origin,
        } => {
            d.set_item("kind", "migration_started")?;
            d.set_item("inst", inst)?;
            d.set_item("media_type", media_type.name())?;
            d.set_item("src", src)?;
            d.set_item("dst", dst)?;
            d.set_item("cycles", cycles)?;
            d.set_item("origin", origin_text(*origin))?;
        }
        Event::MigrationRefused {
            inst,
            media_type,
            src,
            dst,
            origin,
            reason,
        } => {
            d.set_item("kind", "migration_refused")?;
            d.set_item("inst", inst)?;
            d.set_item("media_type", media_type.name())?;
            d.set_item("src", src)?;
            d.set_item("dst", dst)?;
            d.set_item("origin", origin_text(*origin))?;
            d.set_item("reason", refusal_text(*reason))?;
        }
        Event::MigrationCompleted { inst, media_type } => {
            d.set_item("kind", "migration_completed")?;
            d.set_item("inst", inst)?;
            d.set_item("media_type", media_type.name())?;
        }
        Event::TrustVariation {
            inst,
            peer,
            media_type,
            feedback,
        } => {
            d.set_item("kind", "trust_variation")?;
            d.set_item("inst", inst)?;
            d.set_item("peer", peer)?;
            d.set_item("media_type", media_type.name())?;
            d.set_item("positive", *feedback == Feedback::Positive)?;
        }
        Event::Decision {
            inst,
            media_type,
            src,
            dst,
            migrated,
            outcome,
        } => {
            d.set_item("kind", "decision")?;
            d.set_item("inst", inst)?;
            d.set_item("media_type", media_type.name())?;
            d.set_item("src", src)?;
            d.set_item("dst", dst)?;
            d.set_item("migrated", migrated)?;
            d.set_item("outcome", outcome_name(*outcome))?;
        }
        Event::CollectionCreated {
            inst,
            media_type,
            format,
        } => {
            d.set_item("kind", "collection_created")?;
            d.set_item("inst", inst)?;
            d.set_item("media_type", media_type.name())?;
            d.set_item("format", format)?;
        }
        Event::CollectionDeleted {
            inst,
            media_type,
            format,
        } => {
            d.set_item("kind", "collection_deleted")?;
            d.set_item("inst", inst)?;
            d.set_item("media_type", media_type.name())?;
            d.set_item("format", format)?;
        }
    }
    Ok(d)
}

/// A simulation advanced one cycle at a time.
#[pyclass(name = "Simulation", module = "presim_py", unsendable)]
struct PySimulation {
    inner: engine::Simulation,
}

#[pymethods]
impl PySimulation {
    #[new]
    #[pyo3(signature = (config=None))]
    fn new(config: Option<PySimConfig>) -> PyResult<Self> {
        let cfg = config.map(|c| c.inner).unwrap_or_default();
        engine::Simulation::new(cfg)
            .map(|inner| Self { inner })
            .map_err(value_err)
    }

    #[getter]
    fn cycle(&self) -> u64 {
        self.inner.cycle()
    }

    #[getter]
    fn finished(&self) -> bool {
        self.inner.finished()
    }

    #[getter]
    fn institutions(&self) -> usize {
        self.inner.world().len()
    }

    /// Advances one cycle and returns its events as dicts.
    fn step<'py>(&mut self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner.step().iter().map(|e| event_dict(py, e)).collect()
    }

    /// Advances `cycles` cycles (default: until the configured end) and
    /// returns the number of events produced.
    #[pyo3(signature = (cycles=None))]
    fn advance(&mut self, cycles: Option<u64>) -> usize {
        let mut events = 0;
        let mut left = cycles;
        while left.is_none_or(|n| n > 0) && !(cycles.is_none() && self.inner.finished()) {
            events += self.inner.step().len();
            left = left.map(|n| n - 1);
        }
        events
    }

    /// Current metrics sample (requires at least one completed cycle).
    fn sample<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let s = metrics::sample(&self.inner).map_err(value_err)?;
        sample_dict(py, &s)
    }

    /// Run counters: requests, mutations, dropped proposes, trust variations.
    fn counters<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let c = self.inner.counters();
        let d = PyDict::new(py);
        d.set_item("requests", c.requests)?;
        d.set_item("mutations", c.mutations)?;
        d.set_item("proposes_dropped", c.proposes_dropped)?;
        d.set_item("trust_positive", c.trust_positive)?;
        d.set_item("trust_negative", c.trust_negative)?;
        Ok(d)
    }

    /// True when the global counters equal a full rescan of the world.
    fn consistent(&self) -> bool {
        self.inner.world().counters_consistent(self.inner.registry())
            && self.inner.world().check_collection_invariants().is_ok()
    }

    /// Files held per media type by institution `inst`.
    fn files_of(&self, inst: usize) -> PyResult<Vec<(String, u64)>> {
        let world = self.inner.world();
        if inst >= world.len() {
            return Err(PyValueError::new_err(format!("no institution {inst}")));
        }
        Ok(presim::registry::MediaType::ALL
            .iter()
            .map(|&t| (t.name().to_string(), world.institution(inst).files_of(t)))
            .collect())
    }
}

fn fit_dict<'py>(py: Python<'py>, f: &FitResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    let params = PyDict::new(py);
    let errors = PyDict::new(py);
    for ((name, v), e) in f.model.param_names().iter().zip(&f.params).zip(&f.param_errors) {
        params.set_item(*name, v)?;
        errors.set_item(*name, e)?;
    }
    d.set_item("model", f.model.name())?;
    d.set_item("params", params)?;
    d.set_item("errors", errors)?;
    d.set_item("chi2", f.chi2)?;
    d.set_item("reduced_chi2", f.reduced_chi2)?;
    d.set_item("pearson", f.pearson)?;
    d.set_item("n_points", f.n_points)?;
    d.set_item("range", f.range)?;
    d.set_item("converged", f.converged)?;
    d.set_item("degenerate", f.degenerate)?;
    d.set_item("report", f.report())?;
    Ok(d)
}

/// Runs a whole simulation. Returns a dict with `metrics` (list of sample
/// dicts), `summary` (text) and `fits` (name → fit dict). When `out_dir`
/// is given the usual output files are written there too.
#[pyfunction]
#[pyo3(signature = (config=None, out_dir=None, trace_messages=false))]
fn run<'py>(
    py: Python<'py>,
    config: Option<PySimConfig>,
    out_dir: Option<PathBuf>,
    trace_messages: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config.map(|c| c.inner).unwrap_or_default();
    cfg.validate().map_err(value_err)?;
    let opts = RunOptions {
        out_dir,
        trace_messages,
        rescan_every: None,
    };
    let out = py.detach(|| experiment::run(&cfg, &opts)).map_err(runtime_err)?;
    let d = PyDict::new(py);
    let samples = out
        .metrics
        .samples
        .iter()
        .map(|s| sample_dict(py, s))
        .collect::<PyResult<Vec<_>>>()?;
    d.set_item("metrics", samples)?;
    d.set_item("summary", out.summary.to_text())?;
    let fits = PyDict::new(py);
    for (name, f) in &out.fits {
        fits.set_item(name, fit_dict(py, f)?)?;
    }
    d.set_item("fits", fits)?;
    Ok(d)
}

/// Fits `model` ("sqrt-exp", "linear" or "saturation") to (t, y) with
/// per-point errors `sigma` (unit weights when omitted).
#[pyfunction]
#[pyo3(signature = (model, t, y, sigma=None, range=None))]
fn fit<'py>(
    py: Python<'py>,
    model: &str,
    t: Vec<f64>,
    y: Vec<f64>,
    sigma: Option<Vec<f64>>,
    range: Option<(f64, f64)>,
) -> PyResult<Bound<'py, PyDict>> {
    let model: Model = model.parse().map_err(value_err)?;
    let sigma = sigma.unwrap_or_else(|| vec![1.0; t.len()]);
    let series = Series::new(t, y, sigma).map_err(value_err)?;
    let f = analysis::fit(model, &series, range).map_err(value_err)?;
    fit_dict(py, &f)
}

/// Rank-based risk (0–100) of `values[target]`.
#[pyfunction]
fn rank_risk(values: Vec<u64>, target: usize) -> PyResult<f64> {
    risk::rank_risk(&values, target).map_err(value_err)
}

/// Decision class of a migration with the given relevance (percent).
#[pyfunction]
#[pyo3(signature = (relevance, migrated))]
fn classify(relevance: Option<f64>, migrated: bool) -> &'static str {
    outcome_name(engine::classify(relevance, migrated))
}

#[pymodule]
fn presim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySimConfig>()?;
    m.add_class::<PySimulation>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(rank_risk, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    Ok(())
}
