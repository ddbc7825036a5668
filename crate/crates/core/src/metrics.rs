//! Periodic observables of a run and their CSV time series.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{FitError, Series};
use crate::engine::Simulation;

/// Column order of the metrics CSV.
pub const CSV_COLUMNS: [&str; 15] = [
    "cycle",
    "migrations_total",
    "migrations_freq",
    "freq_err",
    "in_progress",
    "trust_var_total",
    "trust_var_pos",
    "trust_var_neg",
    "trust_var_total_freq",
    "trust_var_pos_freq",
    "trust_var_neg_freq",
    "good_pct",
    "false_pos_pct",
    "false_neg_pct",
    "indifferent_pct",
];

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("frequencies are undefined at cycle 0")]
    ZeroCycle,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("column `{0}` not found")]
    MissingColumn(String),
    #[error("row {row}: cannot parse `{value}` in column `{column}`")]
    BadValue {
        row: usize,
        column: String,
        value: String,
    },
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// Rate `count/cycle` with its Poisson error `√count/cycle`.
pub fn frequency_with_error(count: u64, cycle: u64) -> Result<(f64, f64), MetricsError> {
    if cycle == 0 {
        return Err(MetricsError::ZeroCycle);
    }
    let c = cycle as f64;
    Ok((count as f64 / c, (count as f64).sqrt() / c))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub cycle: u64,
    pub migrations_total: u64,
    pub migrations_freq: f64,
    pub freq_err: f64,
    pub in_progress: u64,
    pub trust_var_total: u64,
    pub trust_var_pos: u64,
    pub trust_var_neg: u64,
    pub trust_var_total_freq: f64,
    pub trust_var_pos_freq: f64,
    pub trust_var_neg_freq: f64,
    pub good_pct: f64,
    pub false_pos_pct: f64,
    pub false_neg_pct: f64,
    pub indifferent_pct: f64,
}

/// Snapshot of the counters after the last completed cycle.
pub fn sample(sim: &Simulation) -> Result<MetricSample, MetricsError> {
    let cycle = sim.cycle();
    let stats = &sim.world().stats;
    let c = sim.counters();
    let (migrations_freq, freq_err) = frequency_with_error(stats.total_migrations, cycle)?;
    let [good_pct, false_pos_pct, false_neg_pct, indifferent_pct] = stats.decisions.percentages();
    Ok(MetricSample {
        cycle,
        migrations_total: stats.total_migrations,
        migrations_freq,
        freq_err,
        in_progress: sim.in_progress() as u64,
        trust_var_total: c.trust_total(),
        trust_var_pos: c.trust_positive,
        trust_var_neg: c.trust_negative,
        trust_var_total_freq: frequency_with_error(c.trust_total(), cycle)?.0,
        trust_var_pos_freq: frequency_with_error(c.trust_positive, cycle)?.0,
        trust_var_neg_freq: frequency_with_error(c.trust_negative, cycle)?.0,
        good_pct,
        false_pos_pct,
        false_neg_pct,
        indifferent_pct,
    })
}

/// Time series of samples.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsLog {
    pub samples: Vec<MetricSample>,
}

impl MetricsLog {
    pub fn push(&mut self, s: MetricSample) {
        self.samples.push(s);
    }

    pub fn last(&self) -> Option<&MetricSample> {
        self.samples.last()
    }

    pub fn at(&self, cycle: u64) -> Option<&MetricSample> {
        self.samples.iter().find(|s| s.cycle == cycle)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), MetricsError> {
        let mut out = csv::Writer::from_writer(w);
        for s in &self.samples {
            out.serialize(s)?;
        }
        if self.samples.is_empty() {
            out.write_record(CSV_COLUMNS)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, MetricsError> {
        let mut rdr = csv::Reader::from_reader(r);
        let samples = rdr.deserialize().collect::<Result<Vec<MetricSample>, _>>()?;
        Ok(Self { samples })
    }

    /// Migration frequency with its Poisson error against cycle.
    pub fn frequency_series(&self) -> Series {
        Series {
            t: self.samples.iter().map(|s| s.cycle as f64).collect(),
            y: self.samples.iter().map(|s| s.migrations_freq).collect(),
            sigma: self.samples.iter().map(|s| s.freq_err).collect(),
        }
    }
}

/// Reads `(x, y, σ)` columns of any CSV file with a header row. When
/// `sigma` is `None` every point gets unit weight.
pub fn read_series(path: &Path, x: &str, y: &str, sigma: Option<&str>) -> Result<Series, MetricsError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| MetricsError::MissingColumn(name.to_string()))
    };
    let (ix, iy) = (col(x)?, col(y)?);
    let is = sigma.map(col).transpose()?;
    let mut series = Series::default();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let get = |k: usize, name: &str| -> Result<f64, MetricsError> {
            let v = rec.get(k).unwrap_or("");
            v.trim().parse().map_err(|_| MetricsError::BadValue {
                row: row + 1,
                column: name.to_string(),
                value: v.to_string(),
            })
        };
        series.t.push(get(ix, x)?);
        series.y.push(get(iy, y)?);
        series.sigma.push(match (is, sigma) {
            (Some(k), Some(name)) => get(k, name)?,
            _ => 1.0,
        });
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::SimConfig;

    #[test]
    fn frequency_examples() {
        assert_eq!(frequency_with_error(0, 100).unwrap(), (0.0, 0.0));
        assert_eq!(frequency_with_error(100, 1000).unwrap(), (0.1, 0.01));
        assert!(matches!(frequency_with_error(3, 0), Err(MetricsError::ZeroCycle)));
        // 50 institutions near the reference asymptote of 0.19 per cycle
        let (f, e) = frequency_with_error((50.0f64 * 5000.0 * 0.19 / 50.0).round() as u64, 5000).unwrap();
        assert!((f - 0.19).abs() < 1e-3);
        assert!(e < 0.01);
    }

    #[test]
    fn header_is_the_documented_column_list() {
        let log = MetricsLog {
            samples: vec![MetricSample::default()],
        };
        let text = log.to_csv_string();
        assert_eq!(text.lines().next().unwrap(), CSV_COLUMNS.join(","));
        assert_eq!(MetricsLog::default().to_csv_string().trim_end(), CSV_COLUMNS.join(","));
    }

    #[test]
    fn csv_round_trip() {
        let mut sim = Simulation::new(SimConfig {
            institutions: 5,
            cycles: 30,
            ..SimConfig::default()
        })
        .unwrap();
        let mut log = MetricsLog::default();
        for _ in 0..30 {
            sim.step();
            if sim.cycle() % 10 == 0 {
                log.push(sample(&sim).unwrap());
            }
        }
        let back = MetricsLog::read_csv(log.to_csv_string().as_bytes()).unwrap();
        assert_eq!(back, log);
    }

    #[test]
    fn untouched_world_samples_zero() {
        let cfg = SimConfig {
            institutions: 1,
            mutation_probability: 0.0,
            ..SimConfig::default()
        };
        let mut sim = Simulation::new(cfg).unwrap();
        let reg = sim.registry_arc();
        let os = sim.world().institutions[0].os;
        for t in crate::registry::MediaType::ALL {
            let held: Vec<_> = sim.world().institutions[0].pastor(t).formats().collect();
            for f in held {
                sim.world_mut().delete_collection(0, t, f).unwrap();
            }
            for app in 0..reg.applications(os, t).len() {
                sim.world_mut().install_app(&reg, 0, t, app);
            }
        }
        sim.step();
        let s = sample(&sim).unwrap();
        assert_eq!(
            s,
            MetricSample {
                cycle: 1,
                ..MetricSample::default()
            }
        );
    }
}
