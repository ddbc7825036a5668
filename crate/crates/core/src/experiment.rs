//! Run and sweep orchestration with the on-disk output layout:
//! `config.toml`, `metrics.csv`, `messages.log` (optional), `summary.txt`
//! and `fits/`.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::{fit_linear, fit_sqrt_exp, FitError, FitResult, DEFAULT_DECAY_RANGE, DEFAULT_LINEAR_RANGE};
use crate::engine::{ConfigError, SimConfig, SimError, Simulation};
use crate::metrics::{sample, MetricsError, MetricsLog};
use crate::registry::MediaType;
use crate::trust::weight_rows;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("counters diverged from a full rescan at cycle {0}")]
    RescanMismatch(u64),
    #[error("sweep axis `{0}` is not a scalar configuration key")]
    BadAxis(String),
    #[error("{failed} of {total} sweep runs failed; partial results in {partial}:\n{details}")]
    SweepFailed {
        failed: usize,
        total: usize,
        partial: PathBuf,
        details: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub trace_messages: bool,
    /// Compare the counters with a full rescan every this many cycles.
    pub rescan_every: Option<u64>,
}

/// Upper edges of the trust-weight histogram bins (last bin is closed).
pub const WEIGHT_BINS: [f64; 7] = [0.1, 0.5, 0.9, 1.1, 2.0, 5.0, 10.0];

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub cycles: u64,
    pub institutions: usize,
    pub migrations_total: u64,
    pub requests: u64,
    pub mutations: u64,
    pub proposes_dropped: u64,
    pub trust_positive: u64,
    pub trust_negative: u64,
    pub decisions: crate::engine::DecisionCounts,
    /// Peer trust weights per bin of [`WEIGHT_BINS`].
    pub weight_histogram: [u64; 7],
}

impl RunSummary {
    pub fn of(sim: &Simulation) -> Self {
        let mut hist = [0u64; 7];
        let world = sim.world();
        for inst in &world.institutions {
            for peer in (0..world.len()).filter(|&p| p != inst.id) {
                let rows = MediaType::ALL.iter().flat_map(|&t| weight_rows(t));
                let mut seen = std::collections::BTreeSet::new();
                for row in rows {
                    if !seen.insert(row.index()) {
                        continue;
                    }
                    let w = inst.trust_weights.get(row, peer);
                    let bin = WEIGHT_BINS.iter().position(|&hi| w < hi).unwrap_or(WEIGHT_BINS.len() - 1);
                    hist[bin] += 1;
                }
            }
        }
        let c = sim.counters();
        Self {
            cycles: sim.cycle(),
            institutions: world.len(),
            migrations_total: world.stats.total_migrations,
            requests: c.requests,
            mutations: c.mutations,
            proposes_dropped: c.proposes_dropped,
            trust_positive: c.trust_positive,
            trust_negative: c.trust_negative,
            decisions: world.stats.decisions,
            weight_histogram: hist,
        }
    }

    pub fn to_text(&self) -> String {
        let d = &self.decisions;
        let [g, fp, fnn, ind] = d.percentages();
        let mut out = String::new();
        out += &format!("cycles: {}\n", self.cycles);
        out += &format!("institutions: {}\n", self.institutions);
        out += &format!("migrations: {}\n", self.migrations_total);
        out += &format!("requests: {}\n", self.requests);
        out += &format!("mutations: {}\n", self.mutations);
        out += &format!("dropped proposes: {}\n", self.proposes_dropped);
        out += &format!(
            "trust variations: {} positive, {} negative\n",
            self.trust_positive, self.trust_negative
        );
        out += &format!("decisions: {}\n", d.total());
        out += &format!("  good actions:    {:>8} ({g:.2}%)\n", d.good);
        out += &format!("  false positives: {:>8} ({fp:.2}%)\n", d.false_positive);
        out += &format!("  false negatives: {:>8} ({fnn:.2}%)\n", d.false_negative);
        out += &format!("  indifferent:     {:>8} ({ind:.2}%)\n", d.indifferent);
        out += "trust weight histogram:\n";
        let mut lo = crate::trust::WEIGHT_MIN;
        for (hi, count) in WEIGHT_BINS.iter().zip(self.weight_histogram) {
            let close = if *hi == crate::trust::WEIGHT_MAX { ']' } else { ')' };
            out += &format!("  [{lo:>5}, {hi:>5}{close} {count}\n");
            lo = *hi;
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub metrics: MetricsLog,
    pub summary: RunSummary,
    pub trace: Vec<String>,
    /// Decay and linear-tail fits when the run covers their ranges.
    pub fits: Vec<(String, FitResult)>,
}

/// Runs one simulation to completion, optionally writing the output layout.
pub fn run(cfg: &SimConfig, opts: &RunOptions) -> Result<RunOutcome, ExperimentError> {
    let mut sim = Simulation::new(cfg.clone())?;
    if opts.trace_messages {
        sim.post_mut().enable_trace();
    }
    let mut metrics = MetricsLog::default();
    let mut trace = Vec::new();
    while !sim.finished() {
        sim.step();
        let cycle = sim.cycle();
        if cycle % cfg.sample_every == 0 {
            metrics.push(sample(&sim)?);
        }
        if let Some(every) = opts.rescan_every {
            if cycle % every == 0
                && (!sim.world().counters_consistent(sim.registry())
                    || sim.world().check_collection_invariants().is_err())
            {
                return Err(ExperimentError::RescanMismatch(cycle));
            }
        }
        if opts.trace_messages {
            trace.extend(sim.post_mut().take_trace());
        }
    }
    let summary = RunSummary::of(&sim);
    let fits = standard_fits(&metrics, cfg.cycles);
    let outcome = RunOutcome {
        metrics,
        summary,
        trace,
        fits,
    };
    if let Some(dir) = &opts.out_dir {
        write_outputs(dir, cfg, &outcome, opts.trace_messages)?;
    }
    Ok(outcome)
}

/// Decay fit on [200, 5000] and linear fit on [5000, 10000], each only when
/// the run reaches the end of the range.
pub fn standard_fits(metrics: &MetricsLog, cycles: u64) -> Vec<(String, FitResult)> {
    let series = metrics.frequency_series();
    let mut fits = Vec::new();
    if cycles as f64 >= DEFAULT_DECAY_RANGE.1 {
        if let Ok(f) = fit_sqrt_exp(&series, Some(DEFAULT_DECAY_RANGE)) {
            fits.push(("decay".to_string(), f));
        }
    }
    if cycles as f64 >= DEFAULT_LINEAR_RANGE.1 {
        if let Ok(f) = fit_linear(&series, Some(DEFAULT_LINEAR_RANGE)) {
            fits.push(("linear_tail".to_string(), f));
        }
    }
    fits
}

pub fn write_outputs(dir: &Path, cfg: &SimConfig, outcome: &RunOutcome, trace: bool) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join("config.toml");
    fs::write(&path, cfg.to_toml()).map_err(io_err(&path))?;
    let path = dir.join("metrics.csv");
    let file = fs::File::create(&path).map_err(io_err(&path))?;
    outcome.metrics.write_csv(BufWriter::new(file))?;
    let path = dir.join("summary.txt");
    fs::write(&path, outcome.summary.to_text()).map_err(io_err(&path))?;
    if trace {
        let path = dir.join("messages.log");
        let mut text = String::from("cycle,kind,sender,receiver,tag,payload\n");
        for line in &outcome.trace {
            text += line;
            text.push('\n');
        }
        fs::write(&path, text).map_err(io_err(&path))?;
    }
    let fits_dir = dir.join("fits");
    fs::create_dir_all(&fits_dir).map_err(io_err(&fits_dir))?;
    for (name, fit) in &outcome.fits {
        let path = fits_dir.join(format!("{name}.txt"));
        fs::write(&path, fit.report()).map_err(io_err(&path))?;
    }
    Ok(())
}

/// A grid of runs over one configuration key.
#[derive(Clone, Debug)]
pub struct ExperimentPlan {
    pub base: SimConfig,
    /// Key and textual values; `None` runs the base configuration only.
    pub sweep_axis: Option<(String, Vec<String>)>,
    pub repetitions: u32,
    pub output_dir: PathBuf,
    /// Range of the decay fit that yields the asymptote c.
    pub fit_range: (f64, f64),
}

/// Keys that may be swept.
pub const SWEEPABLE: [&str; 10] = [
    "institutions",
    "risk_threshold",
    "suggest_threshold",
    "inform_threshold",
    "mutation_probability",
    "cycles",
    "accept_limit",
    "seed",
    "sample_every",
    "time_costs",
];

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub c: f64,
    pub sigma_c: f64,
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub aggregate_path: PathBuf,
}

fn axis_label(key: &str) -> &str {
    if key == "mutation_probability" {
        "probability"
    } else {
        key
    }
}

/// Expands the plan into `(axis value, repetition, config, directory)`.
pub fn expand(plan: &ExperimentPlan) -> Result<Vec<(String, u32, SimConfig, PathBuf)>, ExperimentError> {
    let mut runs = Vec::new();
    let values: Vec<(Option<&str>, String)> = match &plan.sweep_axis {
        Some((key, values)) => {
            let key = normalize_axis(key);
            if !SWEEPABLE.contains(&key) {
                return Err(ExperimentError::BadAxis(key.to_string()));
            }
            values.iter().map(|v| (Some(key), v.clone())).collect()
        }
        None => vec![(None, "base".to_string())],
    };
    for (key, value) in values {
        for rep in 0..plan.repetitions.max(1) {
            let mut cfg = plan.base.clone();
            if let Some(key) = key {
                cfg.set(key, &value)?;
            }
            cfg.seed = plan.base.seed + rep as u64;
            if plan.base.coef_seed.is_none() {
                cfg.coef_seed = None;
            }
            cfg.validate()?;
            let dir = match key {
                Some(key) => plan.output_dir.join(format!("{}_{value}_rep{rep}", axis_label(key))),
                None => plan.output_dir.join(format!("rep{rep}")),
            };
            runs.push((value.clone(), rep, cfg, dir));
        }
    }
    Ok(runs)
}

/// Accepts `probability` as an alias of `mutation_probability`.
pub fn normalize_axis(key: &str) -> &str {
    match key.replace('-', "_").as_str() {
        "probability" | "mutation_probability" => "mutation_probability",
        _ => SWEEPABLE
            .iter()
            .find(|k| k.replace('_', "-") == key || **k == key)
            .copied()
            .unwrap_or(key),
    }
}

/// Inverse-variance weighted mean of `(value, σ)` pairs.
pub fn weighted_mean(values: &[(f64, f64)]) -> (f64, f64) {
    if values.len() == 1 {
        return values[0];
    }
    let w: f64 = values.iter().map(|(_, s)| 1.0 / (s * s)).sum();
    let m = values.iter().map(|(v, s)| v / (s * s)).sum::<f64>() / w;
    (m, 1.0 / w.sqrt())
}

/// Runs every point of the plan in parallel and writes `aggregate.csv`
/// (axis value, fitted c, σ_c).
pub fn sweep(plan: &ExperimentPlan) -> Result<SweepOutcome, ExperimentError> {
    let runs = expand(plan)?;
    fs::create_dir_all(&plan.output_dir).map_err(io_err(&plan.output_dir))?;
    let results: Vec<(String, Result<(f64, f64), String>)> = runs
        .par_iter()
        .map(|(value, _, cfg, dir)| {
            let opts = RunOptions {
                out_dir: Some(dir.clone()),
                ..RunOptions::default()
            };
            let r = run(cfg, &opts).map_err(|e| e.to_string()).and_then(|o| {
                let f = fit_sqrt_exp(&o.metrics.frequency_series(), Some(plan.fit_range))
                    .map_err(|e| e.to_string())?;
                let fit_path = dir.join("fits").join("sweep_decay.txt");
                fs::write(&fit_path, f.report()).map_err(|e| e.to_string())?;
                if !f.converged {
                    return Err(format!("decay fit did not converge in {}", dir.display()));
                }
                Ok((f.param("c").unwrap(), f.error("c").unwrap()))
            });
            (value.clone(), r)
        })
        .collect();

    let mut rows: Vec<SweepRow> = Vec::new();
    let mut failures = Vec::new();
    let mut order: Vec<String> = Vec::new();
    for (value, _, _, _) in &runs {
        if !order.contains(value) {
            order.push(value.clone());
        }
    }
    for value in &order {
        let mut ok = Vec::new();
        let mut failed = false;
        for (v, r) in results.iter().filter(|(v, _)| v == value) {
            match r {
                Ok(cs) => ok.push(*cs),
                Err(e) => {
                    failed = true;
                    failures.push(format!("  {v}: {e}"));
                }
            }
        }
        if !failed {
            let (c, sigma_c) = weighted_mean(&ok);
            rows.push(SweepRow {
                value: value.clone(),
                c,
                sigma_c,
            });
        }
    }
    let text = aggregate_csv(plan, &rows);
    if !failures.is_empty() {
        let partial = plan.output_dir.join("aggregate.partial.csv");
        fs::write(&partial, text).map_err(io_err(&partial))?;
        return Err(ExperimentError::SweepFailed {
            failed: failures.len(),
            total: runs.len(),
            partial,
            details: failures.join("\n"),
        });
    }
    let path = plan.output_dir.join("aggregate.csv");
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(SweepOutcome {
        rows,
        aggregate_path: path,
    })
}

fn aggregate_csv(plan: &ExperimentPlan, rows: &[SweepRow]) -> String {
    let axis = plan
        .sweep_axis
        .as_ref()
        .map(|(k, _)| axis_label(normalize_axis(k)).to_string())
        .unwrap_or_else(|| "value".to_string());
    let mut text = format!("{axis},c,sigma_c\n");
    for r in rows {
        text += &format!("{},{},{}\n", r.value, r.c, r.sigma_c);
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_mean_of_equal_errors_is_the_mean() {
        let (m, s) = weighted_mean(&[(1.0, 2.0), (3.0, 2.0)]);
        assert_eq!(m, 2.0);
        assert!((s - 2.0 / 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(weighted_mean(&[(5.0, 0.5)]), (5.0, 0.5));
    }

    #[test]
    fn axis_names() {
        assert_eq!(normalize_axis("probability"), "mutation_probability");
        assert_eq!(normalize_axis("risk-threshold"), "risk_threshold");
        assert_eq!(normalize_axis("institutions"), "institutions");
        let plan = ExperimentPlan {
            base: SimConfig::default(),
            sweep_axis: Some(("world_width".into(), vec!["1".into()])),
            repetitions: 1,
            output_dir: PathBuf::from("/nonexistent"),
            fit_range: DEFAULT_DECAY_RANGE,
        };
        assert!(matches!(expand(&plan), Err(ExperimentError::BadAxis(_))));
    }

    #[test]
    fn expansion_assigns_seeds_and_directories() {
        let plan = ExperimentPlan {
            base: SimConfig {
                seed: 10,
                ..SimConfig::default()
            },
            sweep_axis: Some(("probability".into(), vec!["1".into(), "2".into()])),
            repetitions: 2,
            output_dir: PathBuf::from("out"),
            fit_range: DEFAULT_DECAY_RANGE,
        };
        let runs = expand(&plan).unwrap();
        assert_eq!(runs.len(), 4);
        assert_eq!(runs[1].2.seed, 11);
        assert_eq!(runs[2].2.mutation_probability, 2.0);
        assert_eq!(runs[3].3, PathBuf::from("out/probability_2_rep1"));
    }

    #[test]
    fn short_run_writes_the_layout() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SimConfig {
            institutions: 5,
            cycles: 30,
            ..SimConfig::default()
        };
        let out = run(
            &cfg,
            &RunOptions {
                out_dir: Some(dir.path().to_path_buf()),
                trace_messages: true,
                rescan_every: Some(10),
            },
        )
        .unwrap();
        assert_eq!(out.metrics.samples.len(), 3);
        for name in ["config.toml", "metrics.csv", "summary.txt", "messages.log"] {
            assert!(dir.path().join(name).is_file(), "{name}");
        }
        assert!(dir.path().join("fits").is_dir());
        let echoed = SimConfig::from_file(&dir.path().join("config.toml")).unwrap();
        assert_eq!(echoed, cfg);
        let total: u64 = out.summary.weight_histogram.iter().sum();
        assert_eq!(total, 5 * 4 * 7);
    }
}
