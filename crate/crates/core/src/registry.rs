//! Static world data (formats, applications, compatibility, migration
//! coefficients, language correlation) and the global counters every
//! institution reads and updates.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{DecisionCounts, DecisionOutcome};

/// Index of a format inside the per-type format list.
pub type FormatId = usize;
/// Index of an application inside the per-OS, per-type application list.
pub type AppId = usize;

/// Lower bound of a randomly drawn migration coefficient.
pub const COEF_MIN: f64 = 10.0;
/// Upper bound of a randomly drawn migration coefficient.
pub const COEF_MAX: f64 = 90.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediaType {
    Audio,
    Image,
    Text,
    Video,
}

impl MediaType {
    pub const ALL: [MediaType; 4] = [
        MediaType::Audio,
        MediaType::Image,
        MediaType::Text,
        MediaType::Video,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            MediaType::Audio => "audio",
            MediaType::Image => "image",
            MediaType::Text => "text",
            MediaType::Video => "video",
        }
    }
}

impl fmt::Display for MediaType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MediaType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown media type `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Os {
    Windows,
    Apple,
    Linux,
}

impl Os {
    pub const ALL: [Os; 3] = [Os::Windows, Os::Apple, Os::Linux];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Os::Windows => "windows",
            Os::Apple => "apple",
            Os::Linux => "linux",
        }
    }
}

impl fmt::Display for Os {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Os {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|os| os.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown operating system `{s}`"))
    }
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: format list is empty")]
    EmptyFormatList { file: String },
    #[error("{file}: at least 2 distinct formats are required, found {found}")]
    TooFewFormats { file: String, found: usize },
    #[error("{file}: duplicate entry `{name}`")]
    Duplicate { file: String, name: String },
    #[error("{file}: application list is empty")]
    EmptyApplicationList { file: String },
    #[error("{file}: expected {expected} {what}, found {found}")]
    Dimension {
        file: String,
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("{file}: format `{format}` has no compatible application on any OS")]
    Unrenderable { file: String, format: String },
    #[error("{file}: coefficient {value} at ({row}, {col}) is outside [{COEF_MIN}, {COEF_MAX}]")]
    CoefficientRange {
        file: String,
        row: usize,
        col: usize,
        value: f64,
    },
    #[error("{file}: {message}")]
    Correlation { file: String, message: String },
    #[error("unknown {media_type} format `{name}`")]
    UnknownFormat { media_type: MediaType, name: String },
}

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("self-migration from format {0} to itself is not allowed")]
    SelfMigration(FormatId),
    #[error("migrated size must be finite and non-negative, got {0}")]
    NegativeSize(f64),
    #[error("a migration takes at least one cycle")]
    ZeroCycles,
}

/// Dense square matrix of reals, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.n + col] = value;
    }

    pub fn add(&mut self, row: usize, col: usize, delta: f64) {
        self.data[row * self.n + col] += delta;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.n..(row + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }
}

/// Format × application boolean grid for one media type.
///
/// Columns are the concatenation of the Windows, Apple and Linux application
/// lists, in that order.
#[derive(Clone, Debug, PartialEq)]
pub struct CompatMatrix {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl CompatMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, format: FormatId, column: usize) -> bool {
        self.data[format * self.cols + column]
    }

    fn row(&self, format: FormatId) -> &[bool] {
        &self.data[format * self.cols..(format + 1) * self.cols]
    }
}

/// Symmetric cultural-proximity matrix over institutions with unit diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct LangCorrelation {
    inner: SquareMatrix,
}

impl LangCorrelation {
    /// Proximity is `within` inside an alphabet group and `across` between groups.
    pub fn from_groups(groups: &[usize], within: f64, across: f64) -> Self {
        let n = groups.len();
        let mut inner = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let v = if i == j {
                    1.0
                } else if groups[i] == groups[j] {
                    within
                } else {
                    across
                };
                inner.set(i, j, v);
            }
        }
        Self { inner }
    }

    pub fn parse(file: &str, text: &str) -> Result<Self, RegistryError> {
        let rows = parse_real_grid(file, text)?;
        let n = rows.len();
        let mut inner = SquareMatrix::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(RegistryError::Dimension {
                    file: file.to_string(),
                    what: "columns",
                    expected: n,
                    found: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(RegistryError::Correlation {
                        file: file.to_string(),
                        message: format!("entry ({i}, {j}) = {v} is outside [0, 1]"),
                    });
                }
                inner.set(i, j, v);
            }
        }
        for i in 0..n {
            if inner.get(i, i) != 1.0 {
                return Err(RegistryError::Correlation {
                    file: file.to_string(),
                    message: format!("diagonal entry {i} is not 1"),
                });
            }
            for j in 0..i {
                if inner.get(i, j) != inner.get(j, i) {
                    return Err(RegistryError::Correlation {
                        file: file.to_string(),
                        message: format!("matrix is not symmetric at ({i}, {j})"),
                    });
                }
            }
        }
        Ok(Self { inner })
    }

    pub fn len(&self) -> usize {
        self.inner.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner.get(i, j)
    }
}

/// Immutable formats, applications, compatibility and migration coefficients.
#[derive(Clone, Debug)]
pub struct FormatRegistry {
    formats: [Vec<String>; 4],
    applications: [[Vec<String>; 4]; 3],
    compatibility: [CompatMatrix; 4],
    migration_coef: [SquareMatrix; 4],
}

/// Raw text of every registry resource, labelled for error messages.
pub struct RegistryText<'a> {
    pub formats: [(&'a str, &'a str); 4],
    pub apps: [[(&'a str, &'a str); 4]; 3],
    pub compat: [(&'a str, &'a str); 4],
    pub coef: Option<[(&'a str, &'a str); 4]>,
}

/// File locations of every registry resource.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistryPaths {
    pub formats: [PathBuf; 4],
    pub apps: [[PathBuf; 4]; 3],
    pub compat: [PathBuf; 4],
    pub coef: Option<[PathBuf; 4]>,
}

impl RegistryPaths {
    /// Conventional layout: `formats/<type>.txt`, `apps/<os>_<type>.txt`,
    /// `compat/<type>.csv` and, when present, `coef/<type>.csv`.
    pub fn from_dir(dir: &Path) -> Self {
        let per_type = |sub: &str, ext: &str| {
            MediaType::ALL.map(|t| dir.join(sub).join(format!("{}.{ext}", t.name())))
        };
        let coef = per_type("coef", "csv");
        let has_coef = coef.iter().all(|p| p.exists());
        Self {
            formats: per_type("formats", "txt"),
            apps: Os::ALL.map(|os| {
                MediaType::ALL.map(|t| dir.join("apps").join(format!("{}_{}.txt", os.name(), t.name())))
            }),
            compat: per_type("compat", "csv"),
            coef: has_coef.then_some(coef),
        }
    }
}

macro_rules! bundled {
    ($($p:literal),* $(,)?) => {
        [$(($p, include_str!(concat!("../data/", $p)))),*]
    };
}

const BUNDLED_FORMATS: [(&str, &str); 4] = bundled!(
    "formats/audio.txt",
    "formats/image.txt",
    "formats/text.txt",
    "formats/video.txt",
);
const BUNDLED_APPS: [[(&str, &str); 4]; 3] = [
    bundled!(
        "apps/windows_audio.txt",
        "apps/windows_image.txt",
        "apps/windows_text.txt",
        "apps/windows_video.txt",
    ),
    bundled!(
        "apps/apple_audio.txt",
        "apps/apple_image.txt",
        "apps/apple_text.txt",
        "apps/apple_video.txt",
    ),
    bundled!(
        "apps/linux_audio.txt",
        "apps/linux_image.txt",
        "apps/linux_text.txt",
        "apps/linux_video.txt",
    ),
];
const BUNDLED_COMPAT: [(&str, &str); 4] = bundled!(
    "compat/audio.csv",
    "compat/image.csv",
    "compat/text.csv",
    "compat/video.csv",
);

fn read(path: &Path) -> Result<String, RegistryError> {
    std::fs::read_to_string(path).map_err(|source| RegistryError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_name_list(file: &str, text: &str) -> Result<Vec<String>, RegistryError> {
    let mut names = Vec::new();
    for line in text.lines() {
        let name = line.trim();
        if name.is_empty() || name.starts_with('#') {
            continue;
        }
        if names.iter().any(|n: &String| n == name) {
            return Err(RegistryError::Duplicate {
                file: file.to_string(),
                name: name.to_string(),
            });
        }
        names.push(name.to_string());
    }
    Ok(names)
}

fn csv_rows(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| (i + 1, l.split(',').map(str::trim).collect()))
}

fn parse_real_grid(file: &str, text: &str) -> Result<Vec<Vec<f64>>, RegistryError> {
    csv_rows(text)
        .map(|(line, cells)| {
            cells
                .into_iter()
                .map(|c| {
                    c.parse::<f64>().map_err(|e| RegistryError::Parse {
                        file: file.to_string(),
                        line,
                        message: format!("`{c}`: {e}"),
                    })
                })
                .collect()
        })
        .collect()
}

fn parse_compat(
    file: &str,
    text: &str,
    formats: &[String],
    cols: usize,
) -> Result<CompatMatrix, RegistryError> {
    let mut data = Vec::with_capacity(formats.len() * cols);
    let mut rows = 0;
    for (line, cells) in csv_rows(text) {
        if cells.len() != cols {
            return Err(RegistryError::Dimension {
                file: file.to_string(),
                what: "application columns",
                expected: cols,
                found: cells.len(),
            });
        }
        for c in cells {
            data.push(match c {
                "0" => false,
                "1" => true,
                other => {
                    return Err(RegistryError::Parse {
                        file: file.to_string(),
                        line,
                        message: format!("expected 0 or 1, found `{other}`"),
                    })
                }
            });
        }
        rows += 1;
    }
    if rows != formats.len() {
        return Err(RegistryError::Dimension {
            file: file.to_string(),
            what: "format rows",
            expected: formats.len(),
            found: rows,
        });
    }
    let matrix = CompatMatrix { rows, cols, data };
    for (f, name) in formats.iter().enumerate() {
        if !matrix.row(f).iter().any(|&b| b) {
            return Err(RegistryError::Unrenderable {
                file: file.to_string(),
                format: name.clone(),
            });
        }
    }
    Ok(matrix)
}

fn parse_coef(file: &str, text: &str, n: usize) -> Result<SquareMatrix, RegistryError> {
    let rows = parse_real_grid(file, text)?;
    if rows.len() != n {
        return Err(RegistryError::Dimension {
            file: file.to_string(),
            what: "rows",
            expected: n,
            found: rows.len(),
        });
    }
    let mut m = SquareMatrix::zeros(n);
    for (i, row) in rows.into_iter().enumerate() {
        if row.len() != n {
            return Err(RegistryError::Dimension {
                file: file.to_string(),
                what: "columns",
                expected: n,
                found: row.len(),
            });
        }
        for (j, v) in row.into_iter().enumerate() {
            if !(COEF_MIN..=COEF_MAX).contains(&v) {
                return Err(RegistryError::CoefficientRange {
                    file: file.to_string(),
                    row: i,
                    col: j,
                    value: v,
                });
            }
            m.set(i, j, v);
        }
    }
    Ok(m)
}

/// Draws every coefficient of the four matrices uniformly from
/// `[COEF_MIN, COEF_MAX]`, type by type and row by row.
fn random_coefficients(sizes: [usize; 4], seed: u64) -> [SquareMatrix; 4] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sizes.map(|n| {
        let mut m = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.set(i, j, rng.random_range(COEF_MIN..=COEF_MAX));
            }
        }
        m
    })
}

impl FormatRegistry {
    /// The sample dataset shipped with the crate (50 formats per media type).
    pub fn bundled(coef_seed: u64) -> Self {
        Self::from_text(
            &RegistryText {
                formats: BUNDLED_FORMATS,
                apps: BUNDLED_APPS,
                compat: BUNDLED_COMPAT,
                coef: None,
            },
            coef_seed,
        )
        .expect("bundled dataset is valid")
    }

    pub fn load(paths: &RegistryPaths, coef_seed: u64) -> Result<Self, RegistryError> {
        fn load4(paths: &[PathBuf; 4]) -> Result<[(String, String); 4], RegistryError> {
            let mut out = Vec::with_capacity(4);
            for p in paths {
                out.push((p.display().to_string(), read(p)?));
            }
            Ok(out.try_into().expect("four entries"))
        }
        fn borrow(a: &[(String, String); 4]) -> [(&str, &str); 4] {
            a.each_ref().map(|(l, t)| (l.as_str(), t.as_str()))
        }

        let formats = load4(&paths.formats)?;
        let apps = [
            load4(&paths.apps[0])?,
            load4(&paths.apps[1])?,
            load4(&paths.apps[2])?,
        ];
        let compat = load4(&paths.compat)?;
        let coef = paths.coef.as_ref().map(load4).transpose()?;
        Self::from_text(
            &RegistryText {
                formats: borrow(&formats),
                apps: apps.each_ref().map(borrow),
                compat: borrow(&compat),
                coef: coef.as_ref().map(borrow),
            },
            coef_seed,
        )
    }

    pub fn from_text(text: &RegistryText<'_>, coef_seed: u64) -> Result<Self, RegistryError> {
        let mut formats: [Vec<String>; 4] = Default::default();
        for (t, (file, body)) in text.formats.iter().enumerate() {
            let names = parse_name_list(file, body)?;
            if names.is_empty() {
                return Err(RegistryError::EmptyFormatList {
                    file: file.to_string(),
                });
            }
            if names.len() < 2 {
                return Err(RegistryError::TooFewFormats {
                    file: file.to_string(),
                    found: names.len(),
                });
            }
            formats[t] = names;
        }
        let mut applications: [[Vec<String>; 4]; 3] = Default::default();
        for (os, row) in text.apps.iter().enumerate() {
            for (t, (file, body)) in row.iter().enumerate() {
                let names = parse_name_list(file, body)?;
                if names.is_empty() {
                    return Err(RegistryError::EmptyApplicationList {
                        file: file.to_string(),
                    });
                }
                applications[os][t] = names;
            }
        }
        let mut compat = Vec::with_capacity(4);
        for (t, (file, body)) in text.compat.iter().enumerate() {
            let cols = (0..3).map(|os| applications[os][t].len()).sum();
            compat.push(parse_compat(file, body, &formats[t], cols)?);
        }
        let compatibility: [CompatMatrix; 4] = compat.try_into().expect("four media types");
        let sizes = [0, 1, 2, 3].map(|t| formats[t].len());
        let migration_coef = match &text.coef {
            Some(files) => {
                let mut out = Vec::with_capacity(4);
                for (t, (file, body)) in files.iter().enumerate() {
                    out.push(parse_coef(file, body, sizes[t])?);
                }
                out.try_into().expect("four media types")
            }
            None => random_coefficients(sizes, coef_seed),
        };
        Ok(Self {
            formats,
            applications,
            compatibility,
            migration_coef,
        })
    }

    pub fn formats(&self, t: MediaType) -> &[String] {
        &self.formats[t.index()]
    }

    pub fn format_count(&self, t: MediaType) -> usize {
        self.formats[t.index()].len()
    }

    pub fn format_name(&self, t: MediaType, f: FormatId) -> &str {
        &self.formats[t.index()][f]
    }

    pub fn format_id(&self, t: MediaType, name: &str) -> Result<FormatId, RegistryError> {
        self.formats[t.index()]
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| RegistryError::UnknownFormat {
                media_type: t,
                name: name.to_string(),
            })
    }

    pub fn applications(&self, os: Os, t: MediaType) -> &[String] {
        &self.applications[os.index()][t.index()]
    }

    pub fn app_id(&self, os: Os, t: MediaType, name: &str) -> Option<AppId> {
        self.applications(os, t).iter().position(|n| n == name)
    }

    pub fn compatibility(&self, t: MediaType) -> &CompatMatrix {
        &self.compatibility[t.index()]
    }

    pub fn migration_coef(&self, t: MediaType) -> &SquareMatrix {
        &self.migration_coef[t.index()]
    }

    fn column(&self, os: Os, t: MediaType, app: AppId) -> usize {
        let offset: usize = Os::ALL[..os.index()]
            .iter()
            .map(|o| self.applications[o.index()][t.index()].len())
            .sum();
        offset + app
    }

    /// True iff application `app` of `os` renders format `f`.
    pub fn renders(&self, os: Os, t: MediaType, app: AppId, f: FormatId) -> bool {
        self.compatibility[t.index()].get(f, self.column(os, t, app))
    }

    /// Installed applications rendering `f`, in registry order.
    pub fn apps_for_format(
        &self,
        os: Os,
        installed: &BTreeSet<AppId>,
        t: MediaType,
        f: FormatId,
    ) -> Vec<AppId> {
        installed
            .iter()
            .copied()
            .filter(|&a| self.renders(os, t, a, f))
            .collect()
    }

    /// Number of installed applications rendering `f`.
    pub fn renderer_count(
        &self,
        os: Os,
        installed: &BTreeSet<AppId>,
        t: MediaType,
        f: FormatId,
    ) -> usize {
        installed
            .iter()
            .filter(|&&a| self.renders(os, t, a, f))
            .count()
    }

    /// Name-based variant of [`Self::apps_for_format`]; unknown installed
    /// names are ignored.
    pub fn apps_for_format_named(
        &self,
        os: Os,
        installed: &[&str],
        t: MediaType,
        format: &str,
    ) -> Result<Vec<String>, RegistryError> {
        let f = self.format_id(t, format)?;
        let ids: BTreeSet<AppId> = installed
            .iter()
            .filter_map(|n| self.app_id(os, t, n))
            .collect();
        Ok(self
            .apps_for_format(os, &ids, t, f)
            .into_iter()
            .map(|a| self.applications(os, t)[a].clone())
            .collect())
    }

    /// Formats of type `t` rendered by at least one installed application.
    pub fn renderable_formats(
        &self,
        os: Os,
        installed: &BTreeSet<AppId>,
        t: MediaType,
    ) -> Vec<FormatId> {
        (0..self.format_count(t))
            .filter(|&f| installed.iter().any(|&a| self.renders(os, t, a, f)))
            .collect()
    }
}

/// Global counters shared by every institution.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalStatistics {
    /// Files of each format summed over institutions.
    pub file_count: [Vec<u64>; 4],
    /// Institutions holding a collection of each format.
    pub institution_count: [Vec<u64>; 4],
    /// Installed applications able to render each format, summed over institutions.
    pub software_count: [Vec<u64>; 4],
    /// Institutions having each application installed, per OS and type.
    pub installed_apps: [[Vec<u64>; 4]; 3],
    /// GB migrated from format i to j multiplied by the cycles the migration took.
    pub migrated_sizes: [SquareMatrix; 4],
    pub total_migrations: u64,
    pub decisions: DecisionCounts,
}

fn checked_sub(counter: &mut u64, delta: u64, what: &str) {
    *counter = counter
        .checked_sub(delta)
        .unwrap_or_else(|| panic!("{what} counter underflow"));
}

impl GlobalStatistics {
    pub fn new(reg: &FormatRegistry) -> Self {
        let per_format = || MediaType::ALL.map(|t| vec![0u64; reg.format_count(t)]);
        Self {
            file_count: per_format(),
            institution_count: per_format(),
            software_count: per_format(),
            installed_apps: Os::ALL
                .map(|os| MediaType::ALL.map(|t| vec![0u64; reg.applications(os, t).len()])),
            migrated_sizes: MediaType::ALL.map(|t| SquareMatrix::zeros(reg.format_count(t))),
            total_migrations: 0,
            decisions: DecisionCounts::default(),
        }
    }

    pub fn collection_added(&mut self, t: MediaType, f: FormatId, files: u64) {
        self.file_count[t.index()][f] += files;
        self.institution_count[t.index()][f] += 1;
    }

    pub fn collection_removed(&mut self, t: MediaType, f: FormatId, files: u64) {
        checked_sub(&mut self.file_count[t.index()][f], files, "file");
        checked_sub(&mut self.institution_count[t.index()][f], 1, "institution");
    }

    pub fn files_added(&mut self, t: MediaType, f: FormatId, files: u64) {
        self.file_count[t.index()][f] += files;
    }

    pub fn files_removed(&mut self, t: MediaType, f: FormatId, files: u64) {
        checked_sub(&mut self.file_count[t.index()][f], files, "file");
    }

    pub fn app_installed(&mut self, reg: &FormatRegistry, os: Os, t: MediaType, app: AppId) {
        self.installed_apps[os.index()][t.index()][app] += 1;
        for f in 0..reg.format_count(t) {
            if reg.renders(os, t, app, f) {
                self.software_count[t.index()][f] += 1;
            }
        }
    }

    pub fn app_removed(&mut self, reg: &FormatRegistry, os: Os, t: MediaType, app: AppId) {
        checked_sub(
            &mut self.installed_apps[os.index()][t.index()][app],
            1,
            "installed application",
        );
        for f in 0..reg.format_count(t) {
            if reg.renders(os, t, app, f) {
                checked_sub(&mut self.software_count[t.index()][f], 1, "software");
            }
        }
    }

    /// Adds `gb × cycles` to `A[t][src][dst]` and counts the migration.
    pub fn record_migration_size(
        &mut self,
        t: MediaType,
        src: FormatId,
        dst: FormatId,
        gb: f64,
        cycles: u64,
    ) -> Result<(), StatsError> {
        if src == dst {
            return Err(StatsError::SelfMigration(src));
        }
        if !(gb.is_finite() && gb >= 0.0) {
            return Err(StatsError::NegativeSize(gb));
        }
        if cycles == 0 {
            return Err(StatsError::ZeroCycles);
        }
        self.migrated_sizes[t.index()].add(src, dst, gb * cycles as f64);
        self.total_migrations += 1;
        Ok(())
    }

    /// Share (percent) of the `src` row of the migrated-size matrix taken by
    /// `dst`; `None` when nothing has been migrated away from `src` yet.
    pub fn relevance(&self, t: MediaType, src: FormatId, dst: FormatId) -> Option<f64> {
        let row = self.migrated_sizes[t.index()].row(src);
        let total: f64 = row.iter().sum();
        (total > 0.0).then(|| 100.0 * row[dst] / total)
    }

    pub fn record_decision(&mut self, outcome: DecisionOutcome) {
        self.decisions.record(outcome);
    }

    /// True when the rescan-checkable counters agree with `other`.
    pub fn counts_match(&self, other: &GlobalStatistics) -> bool {
        self.file_count == other.file_count
            && self.institution_count == other.institution_count
            && self.software_count == other.software_count
            && self.installed_apps == other.installed_apps
    }
}
