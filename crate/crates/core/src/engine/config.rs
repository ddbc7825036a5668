//! Simulation configuration: a flat key/value table with documented defaults.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::registry::MediaType;

/// Per-media-type limit (cycles) on the duration of an accepted migration.
///
/// Accepts either a single integer for every type or a four-element array
/// ordered audio, image, text, video.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AcceptLimit(pub [u64; 4]);

impl AcceptLimit {
    pub fn uniform(limit: u64) -> Self {
        Self([limit; 4])
    }

    pub fn get(&self, t: MediaType) -> u64 {
        self.0[t.index()]
    }
}

impl Default for AcceptLimit {
    fn default() -> Self {
        Self::uniform(500)
    }
}

impl Serialize for AcceptLimit {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.iter().all(|&v| v == self.0[0]) {
            s.serialize_u64(self.0[0])
        } else {
            self.0.serialize(s)
        }
    }
}

impl<'de> Deserialize<'de> for AcceptLimit {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            One(u64),
            Each([u64; 4]),
        }
        Ok(match Repr::deserialize(d)? {
            Repr::One(v) => AcceptLimit::uniform(v),
            Repr::Each(v) => AcceptLimit(v),
        })
    }
}

/// Parameters controlling the initial population.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldParams {
    pub institutions: usize,
    pub world_width: f64,
    pub world_height: f64,
    pub resources_min: f64,
    pub resources_max: f64,
    pub cluster_kb_min: f64,
    pub cluster_kb_max: f64,
    pub max_clusters: u64,
    pub large_collections: (usize, usize),
    pub small_collections: (usize, usize),
    pub large_files: (u64, u64),
    pub small_files: (u64, u64),
    pub public_apps: (usize, usize),
    pub personal_apps: (usize, usize),
    pub format_popularity_exponent: f64,
    pub app_popularity_exponent: f64,
    pub alphabet_groups: usize,
    pub culture_across: f64,
    pub initial_weight: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        SimConfig::default().world_params()
    }
}

/// Complete run configuration. Every key is optional in a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub institutions: usize,
    /// Percent; formats at or above it are treated as obsolescent.
    pub risk_threshold: f64,
    /// Percent; minimum 100·trust for a suggestion to be considered.
    pub suggest_threshold: f64,
    /// Percent; minimum 100·trust for an inform to be considered.
    pub inform_threshold: f64,
    /// Percent chance per institution per cycle of creating or deleting a collection.
    pub mutation_probability: f64,
    pub cycles: u64,
    pub accept_limit: AcceptLimit,
    pub seed: u64,
    pub sample_every: u64,
    /// When false every migration completes in one cycle.
    pub time_costs: bool,
    /// Seed of the random migration coefficients (defaults to `seed`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coef_seed: Option<u64>,
    /// Directory with formats/, apps/, compat/ (and optional coef/); bundled data when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
    /// N×N language-correlation CSV; alphabet-group default when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lang_file: Option<PathBuf>,

    pub world_width: f64,
    pub world_height: f64,
    /// Compute capacity range (HS06), drawn log-uniformly.
    pub resources_min: f64,
    pub resources_max: f64,
    pub cluster_kb_min: f64,
    pub cluster_kb_max: f64,
    pub max_clusters: u64,
    pub large_collections: (usize, usize),
    pub small_collections: (usize, usize),
    pub large_files: (u64, u64),
    pub small_files: (u64, u64),
    pub public_apps: (usize, usize),
    pub personal_apps: (usize, usize),
    /// Endowment draws weight the k-th registry entry by (k+1)^-exponent;
    /// 0 draws uniformly.
    pub format_popularity_exponent: f64,
    pub app_popularity_exponent: f64,
    pub alphabet_groups: usize,
    pub culture_across: f64,
    pub initial_weight: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            institutions: 50,
            risk_threshold: 50.0,
            suggest_threshold: 30.0,
            inform_threshold: 70.0,
            mutation_probability: 1.0,
            cycles: 10_000,
            accept_limit: AcceptLimit::default(),
            seed: 1,
            sample_every: 10,
            time_costs: true,
            coef_seed: None,
            data_dir: None,
            lang_file: None,
            world_width: 360.0,
            world_height: 180.0,
            resources_min: 1e6,
            resources_max: 1e8,
            cluster_kb_min: 1e2,
            cluster_kb_max: 1e6,
            max_clusters: 10,
            large_collections: (8, 15),
            small_collections: (1, 4),
            large_files: (1_000, 100_000),
            small_files: (10, 1_000),
            public_apps: (3, 6),
            personal_apps: (1, 3),
            format_popularity_exponent: 0.0,
            app_popularity_exponent: 0.0,
            alphabet_groups: 5,
            culture_across: 0.2,
            initial_weight: 1.0,
        }
    }
}

/// One invalid configuration field.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldError {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("invalid configuration:\n{}", .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<FieldError>),
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            ConfigError::Parse(msg) => ConfigError::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Effective configuration as TOML; loading it back yields `self`.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Overrides one key from its textual value (TOML syntax, bare strings allowed).
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let mut table: toml::Table = toml::from_str(&self.to_toml()).expect("round trip");
        if !Self::keys().contains(&key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        let parsed = format!("v = {value}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        table.insert(key.to_string(), parsed);
        let updated: SimConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(format!("{key}: {}", e.message())))?;
        *self = updated;
        Ok(())
    }

    /// Applies `<PREFIX><KEY>` environment variables (key upper-cased).
    pub fn apply_env<I>(&mut self, prefix: &str, vars: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut found: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| {
                let key = k.strip_prefix(prefix)?.to_ascii_lowercase();
                Some((key, v))
            })
            .collect();
        found.sort();
        for (key, value) in found {
            self.set(&key, &value)?;
        }
        Ok(())
    }

    /// Every configuration key.
    pub fn keys() -> &'static [&'static str] {
        &[
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
            "coef_seed",
            "data_dir",
            "lang_file",
            "world_width",
            "world_height",
            "resources_min",
            "resources_max",
            "cluster_kb_min",
            "cluster_kb_max",
            "max_clusters",
            "large_collections",
            "small_collections",
            "large_files",
            "small_files",
            "public_apps",
            "personal_apps",
            "format_popularity_exponent",
            "app_popularity_exponent",
            "alphabet_groups",
            "culture_across",
            "initial_weight",
        ]
    }

    pub fn coefficient_seed(&self) -> u64 {
        self.coef_seed.unwrap_or(self.seed)
    }

    pub fn world_params(&self) -> WorldParams {
        WorldParams {
            institutions: self.institutions,
            world_width: self.world_width,
            world_height: self.world_height,
            resources_min: self.resources_min,
            resources_max: self.resources_max,
            cluster_kb_min: self.cluster_kb_min,
            cluster_kb_max: self.cluster_kb_max,
            max_clusters: self.max_clusters,
            large_collections: self.large_collections,
            small_collections: self.small_collections,
            large_files: self.large_files,
            small_files: self.small_files,
            public_apps: self.public_apps,
            personal_apps: self.personal_apps,
            format_popularity_exponent: self.format_popularity_exponent,
            app_popularity_exponent: self.app_popularity_exponent,
            alphabet_groups: self.alphabet_groups,
            culture_across: self.culture_across,
            initial_weight: self.initial_weight,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errors = Vec::new();
        let mut check = |ok: bool, field: &'static str, message: String| {
            if !ok {
                errors.push(FieldError { field, message });
            }
        };
        check(self.institutions >= 1, "institutions", "must be at least 1".into());
        for (field, v) in [
            ("risk_threshold", self.risk_threshold),
            ("suggest_threshold", self.suggest_threshold),
            ("inform_threshold", self.inform_threshold),
            ("mutation_probability", self.mutation_probability),
        ] {
            check((0.0..=100.0).contains(&v), field, format!("{v} is outside [0, 100]"));
        }
        check(self.cycles >= 1, "cycles", "must be at least 1".into());
        check(
            self.accept_limit.0.iter().all(|&v| v >= 1),
            "accept_limit",
            "every limit must be at least 1".into(),
        );
        check(self.sample_every >= 1, "sample_every", "must be at least 1".into());
        check(
            self.world_width > 0.0 && self.world_height > 0.0,
            "world_width",
            "world dimensions must be positive".into(),
        );
        check(
            self.resources_min > 0.0 && self.resources_min <= self.resources_max,
            "resources_min",
            "need 0 < resources_min <= resources_max".into(),
        );
        check(
            self.cluster_kb_min > 0.0 && self.cluster_kb_min <= self.cluster_kb_max,
            "cluster_kb_min",
            "need 0 < cluster_kb_min <= cluster_kb_max".into(),
        );
        check(self.max_clusters >= 1, "max_clusters", "must be at least 1".into());
        for (field, (lo, hi)) in [
            ("large_collections", self.large_collections),
            ("small_collections", self.small_collections),
            ("public_apps", self.public_apps),
            ("personal_apps", self.personal_apps),
        ] {
            check(lo >= 1 && lo <= hi, field, format!("need 1 <= {lo} <= {hi}"));
        }
        for (field, (lo, hi)) in [("large_files", self.large_files), ("small_files", self.small_files)] {
            check(lo >= 1 && lo <= hi, field, format!("need 1 <= {lo} <= {hi}"));
        }
        check(self.alphabet_groups >= 1, "alphabet_groups", "must be at least 1".into());
        check(
            (0.0..=1.0).contains(&self.culture_across),
            "culture_across",
            "must lie in [0, 1]".into(),
        );
        check(
            (crate::trust::WEIGHT_MIN..=crate::trust::WEIGHT_MAX).contains(&self.initial_weight),
            "initial_weight",
            "must lie in [0.01, 10]".into(),
        );
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errors))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_baseline_experiment() {
        let c = SimConfig::default();
        assert_eq!(c.institutions, 50);
        assert_eq!(
            (c.risk_threshold, c.suggest_threshold, c.inform_threshold),
            (50.0, 30.0, 70.0)
        );
        assert_eq!(c.mutation_probability, 1.0);
        assert_eq!(c.cycles, 10_000);
        assert_eq!(c.accept_limit, AcceptLimit::uniform(500));
        assert_eq!(c.sample_every, 10);
        c.validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let mut c = SimConfig::default();
        c.seed = 77;
        c.coef_seed = Some(3);
        c.accept_limit = AcceptLimit([1, 2, 3, 4]);
        c.resources_min = 123.456;
        let back = SimConfig::from_toml_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let c = SimConfig::from_toml_str("institutions = 3\naccept_limit = 20\n").unwrap();
        assert_eq!(c.institutions, 3);
        assert_eq!(c.accept_limit, AcceptLimit::uniform(20));
        assert_eq!(c.cycles, 10_000);
    }

    #[test]
    fn invalid_fields_are_named() {
        let err = SimConfig::from_toml_str("risk_threshold = 150\ninstitutions = 0\n").unwrap_err();
        let text = err.to_string();
        assert!(text.contains("risk_threshold"), "{text}");
        assert!(text.contains("institutions"), "{text}");
        let err = SimConfig::from_toml_str("bogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn overrides_by_key() {
        let mut c = SimConfig::default();
        c.set("cycles", "10").unwrap();
        c.set("data_dir", "/tmp/x").unwrap();
        c.set("accept_limit", "[1, 2, 3, 4]").unwrap();
        assert_eq!(c.cycles, 10);
        assert_eq!(c.data_dir, Some(PathBuf::from("/tmp/x")));
        assert_eq!(c.accept_limit.get(MediaType::Video), 4);
        assert!(matches!(c.set("nope", "1"), Err(ConfigError::UnknownKey(_))));
        assert!(c.set("cycles", "ten").is_err());
        c.apply_env(
            "PRESIM_",
            [
                ("PRESIM_SEED".to_string(), "9".to_string()),
                ("HOME".to_string(), "/root".to_string()),
            ],
        )
        .unwrap();
        assert_eq!(c.seed, 9);
    }
}
