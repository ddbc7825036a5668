//! The agent population: institutions with their pastors, format
//! collections, software managers and geography.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::WorldParams;
use crate::protocol::{Issue, Tag};
use crate::registry::{
    AppId, FormatId, FormatRegistry, GlobalStatistics, LangCorrelation, MediaType, Os,
};

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("a world needs at least one institution")]
    NoInstitutions,
    #[error("language correlation matrix is {found}×{found}, expected {expected}×{expected}")]
    LangDimension { expected: usize, found: usize },
    #[error("institution {inst} already holds a {media_type} collection of format {format}")]
    DuplicateFormat {
        inst: usize,
        media_type: MediaType,
        format: FormatId,
    },
    #[error("institution {inst} holds no {media_type} collection of format {format}")]
    MissingFormat {
        inst: usize,
        media_type: MediaType,
        format: FormatId,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstitutionKind {
    Broadcaster,
    Government,
    Library,
    University,
    Personal,
}

impl InstitutionKind {
    pub const ALL: [InstitutionKind; 5] = [
        InstitutionKind::Broadcaster,
        InstitutionKind::Government,
        InstitutionKind::Library,
        InstitutionKind::University,
        InstitutionKind::Personal,
    ];

    pub fn is_public(self) -> bool {
        self != InstitutionKind::Personal
    }

    /// Largest digital-preservation staff an institution of this kind employs.
    pub fn staff_max(self) -> u32 {
        match self {
            InstitutionKind::Broadcaster => 50,
            InstitutionKind::Government => 100,
            InstitutionKind::Library => 80,
            InstitutionKind::University => 60,
            InstitutionKind::Personal => 0,
        }
    }

    /// Whether holdings of media type `t` are large for this kind.
    pub fn holds_large(self, t: MediaType) -> bool {
        use InstitutionKind::*;
        use MediaType::*;
        match (self, t) {
            (Broadcaster, Text) => false,
            (Broadcaster, _) => true,
            (Government | University, Text) => true,
            (Government | University, _) => false,
            (Library, _) => true,
            (Personal, _) => false,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            InstitutionKind::Broadcaster => "broadcaster",
            InstitutionKind::Government => "government",
            InstitutionKind::Library => "library",
            InstitutionKind::University => "university",
            InstitutionKind::Personal => "personal",
        }
    }
}

impl fmt::Display for InstitutionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InstitutionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown institution kind `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// All objects of one format held by a pastor, aggregated into clusters.
#[derive(Clone, Debug, PartialEq)]
pub struct FormatCollection {
    pub format: FormatId,
    pub files: u64,
    pub clusters: Vec<u64>,
    pub sizes_kb: Vec<f64>,
    pub total_kb: f64,
    pub last_checked: u64,
}

impl FormatCollection {
    pub fn empty(format: FormatId, cycle: u64) -> Self {
        Self {
            format,
            files: 0,
            clusters: Vec::new(),
            sizes_kb: Vec::new(),
            total_kb: 0.0,
            last_checked: cycle,
        }
    }

    /// Builds a collection from explicit clusters `(files, size_kb)`.
    pub fn from_clusters(format: FormatId, clusters: &[(u64, f64)], cycle: u64) -> Self {
        let mut c = Self::empty(format, cycle);
        for &(files, kb) in clusters {
            c.push_cluster(files, kb);
        }
        c
    }

    fn push_cluster(&mut self, files: u64, kb: f64) {
        self.files += files;
        self.clusters.push(files);
        self.sizes_kb.push(kb);
        self.total_kb += kb;
    }

    /// Random collection of `files` objects split into 1–`max_clusters`
    /// clusters with log-uniform sizes in `[kb_min, kb_max]`.
    pub fn random<R: Rng + ?Sized>(
        format: FormatId,
        files: u64,
        params: &WorldParams,
        cycle: u64,
        rng: &mut R,
    ) -> Self {
        let files = files.max(1);
        let k = rng.random_range(1..=params.max_clusters.max(1)).min(files);
        // split `files` into k positive parts via k-1 distinct cut points
        let mut cuts: BTreeSet<u64> = BTreeSet::new();
        while (cuts.len() as u64) < k - 1 {
            cuts.insert(rng.random_range(1..files));
        }
        let mut c = Self::empty(format, cycle);
        let mut prev = 0;
        for cut in cuts.into_iter().chain(std::iter::once(files)) {
            let kb = log_uniform(rng, params.cluster_kb_min, params.cluster_kb_max);
            c.push_cluster(cut - prev, kb);
            prev = cut;
        }
        c
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn smallest_cluster_kb(&self) -> Option<f64> {
        self.sizes_kb.iter().copied().reduce(f64::min)
    }

    /// Moves every cluster of `other` into `self`.
    pub fn absorb(&mut self, other: FormatCollection) {
        for (files, kb) in other.clusters.into_iter().zip(other.sizes_kb) {
            self.push_cluster(files, kb);
        }
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        let files: u64 = self.clusters.iter().sum();
        if files != self.files {
            return Err(format!("cluster files {files} != files {}", self.files));
        }
        if self.sizes_kb.len() != self.clusters.len() {
            return Err("sizes and clusters differ in length".into());
        }
        if self.sizes_kb.iter().any(|&s| s <= 0.0) {
            return Err("non-positive cluster size".into());
        }
        let total: f64 = self.sizes_kb.iter().sum();
        if (total - self.total_kb).abs() > 1e-9 * total.abs().max(1.0) {
            return Err(format!("total_kb {} != sum of sizes {total}", self.total_kb));
        }
        Ok(())
    }
}

/// Manager of the collections of one media type.
#[derive(Clone, Debug, PartialEq)]
pub struct Pastor {
    pub media_type: MediaType,
    collections: BTreeMap<FormatId, FormatCollection>,
}

impl Pastor {
    pub fn new(media_type: MediaType) -> Self {
        Self {
            media_type,
            collections: BTreeMap::new(),
        }
    }

    pub fn holds(&self, f: FormatId) -> bool {
        self.collections.contains_key(&f)
    }

    pub fn collection(&self, f: FormatId) -> Option<&FormatCollection> {
        self.collections.get(&f)
    }

    pub fn collection_mut(&mut self, f: FormatId) -> Option<&mut FormatCollection> {
        self.collections.get_mut(&f)
    }

    pub fn collections(&self) -> impl Iterator<Item = &FormatCollection> {
        self.collections.values()
    }

    pub fn formats(&self) -> impl Iterator<Item = FormatId> + '_ {
        self.collections.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.collections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.collections.is_empty()
    }

    pub fn total_files(&self) -> u64 {
        self.collections.values().map(|c| c.files).sum()
    }

    /// Format of the collection checked least recently (registry order on ties).
    pub fn stalest(&self) -> Option<FormatId> {
        self.collections
            .values()
            .min_by_key(|c| (c.last_checked, c.format))
            .map(|c| c.format)
    }

    fn insert(&mut self, c: FormatCollection) -> bool {
        if self.collections.contains_key(&c.format) {
            return false;
        }
        self.collections.insert(c.format, c);
        true
    }

    fn remove(&mut self, f: FormatId) -> Option<FormatCollection> {
        self.collections.remove(&f)
    }
}

/// Installed applications per media type.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SoftwareManager {
    installed: [BTreeSet<AppId>; 4],
}

impl SoftwareManager {
    pub fn installed(&self, t: MediaType) -> &BTreeSet<AppId> {
        &self.installed[t.index()]
    }

    pub fn is_installed(&self, t: MediaType, app: AppId) -> bool {
        self.installed[t.index()].contains(&app)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MigrationRecord {
    pub media_type: MediaType,
    pub src_format: FormatId,
    pub dst_format: FormatId,
    pub total_kb: f64,
    pub cycles_required: u64,
    pub cycle_completed: u64,
}

pub const TRUST_ROWS: usize = 7;

/// Row of the trust matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrustRow {
    Files(MediaType),
    Distance,
    Culture,
    Staff,
}

impl TrustRow {
    pub fn index(self) -> usize {
        match self {
            TrustRow::Files(t) => t.index(),
            TrustRow::Distance => 4,
            TrustRow::Culture => 5,
            TrustRow::Staff => 6,
        }
    }
}

/// 7 × N table indexed by trust row and institution.
#[derive(Clone, Debug, PartialEq)]
pub struct TrustTable {
    n: usize,
    data: Vec<f64>,
}

impl TrustTable {
    pub fn filled(n: usize, value: f64) -> Self {
        Self {
            n,
            data: vec![value; TRUST_ROWS * n],
        }
    }

    pub fn columns(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: TrustRow, col: usize) -> f64 {
        self.data[row.index() * self.n + col]
    }

    pub fn set(&mut self, row: TrustRow, col: usize, value: f64) {
        self.data[row.index() * self.n + col] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }
}

#[derive(Clone, Debug)]
pub struct Institution {
    pub id: usize,
    pub kind: InstitutionKind,
    pub os: Os,
    pub location: Point,
    pub staff: u32,
    /// Compute capacity in HS06.
    pub resources: f64,
    pub alphabet: usize,
    pub trust_matrix: TrustTable,
    pub trust_weights: TrustTable,
    pub migrations_log: Vec<MigrationRecord>,
    /// Last cycle of the running migration per media type (0 = idle).
    pub busy_until: [u64; 4],
    pub open_issues: BTreeMap<Tag, Issue>,
    pub pastors: [Pastor; 4],
    pub software: SoftwareManager,
    pub(crate) next_tag: u32,
}

impl Institution {
    pub fn pastor(&self, t: MediaType) -> &Pastor {
        &self.pastors[t.index()]
    }

    pub fn is_idle(&self, t: MediaType, cycle: u64) -> bool {
        self.busy_until[t.index()] < cycle
    }

    pub fn files_of(&self, t: MediaType) -> u64 {
        self.pastors[t.index()].total_files()
    }

    pub fn has_open_issue(&self, t: MediaType, f: FormatId) -> bool {
        self.open_issues
            .values()
            .any(|i| i.media_type == t && i.format == f)
    }

    /// Most recent logged migration of type `t` starting from `src`.
    pub fn latest_migration_from(&self, t: MediaType, src: FormatId) -> Option<&MigrationRecord> {
        self.migrations_log
            .iter()
            .rev()
            .find(|r| r.media_type == t && r.src_format == src)
    }
}

fn log_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return lo;
    }
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// Mutable population plus the global counters it drives.
#[derive(Clone, Debug)]
pub struct World {
    pub institutions: Vec<Institution>,
    pub lang: LangCorrelation,
    pub stats: GlobalStatistics,
    dist_max: f64,
}

impl World {
    /// Creates `params.institutions` institutions with kind-dependent holdings.
    ///
    /// Draw order per institution: kind, OS, x, y, staff, resources, alphabet
    /// group, then collections type by type, then installed software type by
    /// type.
    pub fn spawn<R: Rng + ?Sized>(
        params: &WorldParams,
        reg: &FormatRegistry,
        lang: Option<LangCorrelation>,
        rng: &mut R,
    ) -> Result<World, WorldError> {
        let n = params.institutions;
        if n == 0 {
            return Err(WorldError::NoInstitutions);
        }
        let mut institutions = Vec::with_capacity(n);
        for id in 0..n {
            let kind = *InstitutionKind::ALL.choose(rng).expect("non-empty");
            let os = *Os::ALL.choose(rng).expect("non-empty");
            let location = Point::new(
                rng.random_range(0.0..params.world_width),
                rng.random_range(0.0..params.world_height),
            );
            let staff = if kind.is_public() {
                rng.random_range(1..=kind.staff_max())
            } else {
                0
            };
            let resources = log_uniform(rng, params.resources_min, params.resources_max);
            let alphabet = rng.random_range(0..params.alphabet_groups.max(1));
            institutions.push(Institution {
                id,
                kind,
                os,
                location,
                staff,
                resources,
                alphabet,
                trust_matrix: TrustTable::filled(n, 0.0),
                trust_weights: TrustTable::filled(n, params.initial_weight),
                migrations_log: Vec::new(),
                busy_until: [0; 4],
                open_issues: BTreeMap::new(),
                pastors: MediaType::ALL.map(Pastor::new),
                software: SoftwareManager::default(),
                next_tag: 0,
            });
        }

        let lang = match lang {
            Some(l) if l.len() != n => {
                return Err(WorldError::LangDimension {
                    expected: n,
                    found: l.len(),
                })
            }
            Some(l) => l,
            None => {
                let groups: Vec<usize> = institutions.iter().map(|i| i.alphabet).collect();
                LangCorrelation::from_groups(&groups, 1.0, params.culture_across)
            }
        };

        let mut world = World {
            institutions,
            lang,
            stats: GlobalStatistics::new(reg),
            dist_max: 0.0,
        };
        for i in 0..n {
            for j in 0..i {
                let d = world.distance(i, j);
                world.dist_max = world.dist_max.max(d);
            }
        }

        for id in 0..n {
            let kind = world.institutions[id].kind;
            for t in MediaType::ALL {
                let weights: Vec<f64> = (0..reg.format_count(t))
                    .map(|f| popularity_weight(f, params.format_popularity_exponent))
                    .collect();
                let large = kind.holds_large(t);
                let (lo, hi) = if large {
                    params.large_collections
                } else {
                    params.small_collections
                };
                let count = rng.random_range(lo..=hi).min(weights.len());
                for f in weighted_sample(rng, &weights, count) {
                    let files = world.random_file_count(large, rng, params);
                    let c = FormatCollection::random(f, files, params, 0, rng);
                    world
                        .insert_collection(id, t, c)
                        .expect("sampled formats are distinct");
                }
            }
            let os = world.institutions[id].os;
            for t in MediaType::ALL {
                let apps = reg.applications(os, t).len();
                let weights: Vec<f64> = (0..apps)
                    .map(|a| popularity_weight(a, params.app_popularity_exponent))
                    .collect();
                let (lo, hi) = if kind.is_public() {
                    params.public_apps
                } else {
                    params.personal_apps
                };
                let count = rng.random_range(lo.max(1)..=hi.max(1)).min(apps);
                for app in weighted_sample(rng, &weights, count) {
                    world.install_app(reg, id, t, app);
                }
            }
        }

        for i in 0..n {
            for j in 0..n {
                let d = world.distance(i, j);
                let c = world.lang.get(i, j);
                let s = world.institutions[j].staff as f64;
                let files: [f64; 4] = MediaType::ALL.map(|t| world.institutions[j].files_of(t) as f64);
                let m = &mut world.institutions[i].trust_matrix;
                for t in MediaType::ALL {
                    m.set(TrustRow::Files(t), j, files[t.index()]);
                }
                m.set(TrustRow::Distance, j, d);
                m.set(TrustRow::Culture, j, c);
                m.set(TrustRow::Staff, j, s);
            }
        }
        Ok(world)
    }

    fn random_file_count<R: Rng + ?Sized>(&self, large: bool, rng: &mut R, p: &WorldParams) -> u64 {
        let (lo, hi) = if large { p.large_files } else { p.small_files };
        log_uniform(rng, lo as f64, hi as f64).round().max(1.0) as u64
    }

    pub fn len(&self) -> usize {
        self.institutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.institutions.is_empty()
    }

    pub fn institution(&self, id: usize) -> &Institution {
        &self.institutions[id]
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.institutions[i]
            .location
            .distance(self.institutions[j].location)
    }

    /// Largest pairwise distance between institutions.
    pub fn dist_max(&self) -> f64 {
        self.dist_max
    }

    /// Refreshes the file-count trust row of every institution for peer `j`.
    fn refresh_files(&mut self, j: usize, t: MediaType) {
        let files = self.institutions[j].files_of(t) as f64;
        for inst in &mut self.institutions {
            inst.trust_matrix.set(TrustRow::Files(t), j, files);
        }
    }

    /// Adds a collection to institution `inst` and updates the counters.
    pub fn insert_collection(
        &mut self,
        inst: usize,
        t: MediaType,
        c: FormatCollection,
    ) -> Result<(), WorldError> {
        let (format, files) = (c.format, c.files);
        if !self.institutions[inst].pastors[t.index()].insert(c) {
            return Err(WorldError::DuplicateFormat {
                inst,
                media_type: t,
                format,
            });
        }
        self.stats.collection_added(t, format, files);
        self.refresh_files(inst, t);
        Ok(())
    }

    /// Creates a random collection of `format` sized for the institution's kind.
    pub fn create_collection<R: Rng + ?Sized>(
        &mut self,
        inst: usize,
        t: MediaType,
        format: FormatId,
        params: &WorldParams,
        cycle: u64,
        rng: &mut R,
    ) -> Result<(), WorldError> {
        if self.institutions[inst].pastor(t).holds(format) {
            return Err(WorldError::DuplicateFormat {
                inst,
                media_type: t,
                format,
            });
        }
        let large = self.institutions[inst].kind.holds_large(t);
        let files = self.random_file_count(large, rng, params);
        let c = FormatCollection::random(format, files, params, cycle, rng);
        self.insert_collection(inst, t, c)
    }

    /// Removes a collection, updates the counters and expires the open
    /// issues raised for it.
    pub fn delete_collection(
        &mut self,
        inst: usize,
        t: MediaType,
        format: FormatId,
    ) -> Result<FormatCollection, WorldError> {
        let c = self.institutions[inst].pastors[t.index()]
            .remove(format)
            .ok_or(WorldError::MissingFormat {
                inst,
                media_type: t,
                format,
            })?;
        self.stats.collection_removed(t, format, c.files);
        self.institutions[inst]
            .open_issues
            .retain(|_, i| !(i.media_type == t && i.format == format));
        self.refresh_files(inst, t);
        Ok(c)
    }

    /// Moves every object of `src` into `dst`; both collections must exist.
    /// File counters are updated on removal and again on addition.
    pub fn convert(
        &mut self,
        inst: usize,
        t: MediaType,
        src: FormatId,
        dst: FormatId,
    ) -> Result<(), WorldError> {
        let missing = |format| WorldError::MissingFormat {
            inst,
            media_type: t,
            format,
        };
        let pastor = &mut self.institutions[inst].pastors[t.index()];
        if !pastor.holds(dst) {
            return Err(missing(dst));
        }
        let moved = {
            let c = pastor.collection_mut(src).ok_or_else(|| missing(src))?;
            let moved = FormatCollection {
                format: dst,
                files: c.files,
                clusters: std::mem::take(&mut c.clusters),
                sizes_kb: std::mem::take(&mut c.sizes_kb),
                total_kb: c.total_kb,
                last_checked: c.last_checked,
            };
            c.files = 0;
            c.total_kb = 0.0;
            moved
        };
        let files = moved.files;
        self.stats.files_removed(t, src, files);
        pastor
            .collection_mut(dst)
            .expect("checked above")
            .absorb(moved);
        self.stats.files_added(t, dst, files);
        Ok(())
    }

    /// Installs `app`; returns false if it was already installed.
    pub fn install_app(&mut self, reg: &FormatRegistry, inst: usize, t: MediaType, app: AppId) -> bool {
        let institution = &mut self.institutions[inst];
        if !institution.software.installed[t.index()].insert(app) {
            return false;
        }
        self.stats.app_installed(reg, institution.os, t, app);
        true
    }

    /// Uninstalls `app`; returns false if it was not installed.
    pub fn remove_app(&mut self, reg: &FormatRegistry, inst: usize, t: MediaType, app: AppId) -> bool {
        let institution = &mut self.institutions[inst];
        if !institution.software.installed[t.index()].remove(&app) {
            return false;
        }
        self.stats.app_removed(reg, institution.os, t, app);
        true
    }

    /// Recomputes the rescan-checkable counters from scratch.
    pub fn rescan(&self, reg: &FormatRegistry) -> GlobalStatistics {
        let mut fresh = GlobalStatistics::new(reg);
        for inst in &self.institutions {
            for t in MediaType::ALL {
                for c in inst.pastor(t).collections() {
                    fresh.collection_added(t, c.format, c.files);
                }
                let installed = inst.software.installed(t);
                for &app in installed {
                    fresh.installed_apps[inst.os.index()][t.index()][app] += 1;
                }
                for f in 0..reg.format_count(t) {
                    fresh.software_count[t.index()][f] +=
                        reg.renderer_count(inst.os, installed, t, f) as u64;
                }
            }
        }
        fresh
    }

    /// True when the incremental counters agree with a full rescan.
    pub fn counters_consistent(&self, reg: &FormatRegistry) -> bool {
        self.stats.counts_match(&self.rescan(reg))
    }

    pub fn check_collection_invariants(&self) -> Result<(), String> {
        for inst in &self.institutions {
            for t in MediaType::ALL {
                for c in inst.pastor(t).collections() {
                    c.check_invariants()
                        .map_err(|e| format!("institution {} {t} format {}: {e}", inst.id, c.format))?;
                }
            }
        }
        Ok(())
    }

    /// One row per institution: `id,kind,os,x,y,staff,resources`.
    pub fn dump_csv(&self) -> String {
        let mut out = String::from("id,kind,os,x,y,staff,resources\n");
        for i in &self.institutions {
            out.push_str(&format!(
                "{},{},{},{:.3},{:.3},{},{:.3}\n",
                i.id, i.kind, i.os, i.location.x, i.location.y, i.staff, i.resources
            ));
        }
        out
    }
}

fn popularity_weight(rank: usize, exponent: f64) -> f64 {
    1.0 / ((rank + 1) as f64).powf(exponent)
}

/// Draws `count` distinct indices with probability proportional to `weights`.
fn weighted_sample<R: Rng + ?Sized>(rng: &mut R, weights: &[f64], count: usize) -> Vec<usize> {
    let mut w = weights.to_vec();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count.min(w.len()) {
        let dist = WeightedIndex::new(&w).expect("positive weights remain");
        let idx = dist.sample(rng);
        out.push(idx);
        w[idx] = 0.0;
    }
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(n: usize) -> WorldParams {
        WorldParams {
            institutions: n,
            ..WorldParams::default()
        }
    }

    fn spawn(n: usize, seed: u64) -> (FormatRegistry, World) {
        let reg = FormatRegistry::bundled(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let world = World::spawn(&params(n), &reg, None, &mut rng).unwrap();
        (reg, world)
    }

    #[test]
    fn spawn_is_deterministic() {
        let (_, a) = spawn(50, 7);
        let (_, b) = spawn(50, 7);
        assert_eq!(a.dump_csv(), b.dump_csv());
        assert_eq!(a.stats, b.stats);
        for (x, y) in a.institutions.iter().zip(&b.institutions) {
            assert_eq!(x.pastors, y.pastors);
            assert_eq!(x.software, y.software);
        }
    }

    #[test]
    fn zero_institutions_is_a_config_error() {
        let reg = FormatRegistry::bundled(0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            World::spawn(&params(0), &reg, None, &mut rng).unwrap_err(),
            WorldError::NoInstitutions
        );
    }

    #[test]
    fn single_institution_has_zero_dist_max() {
        let (_, w) = spawn(1, 3);
        assert_eq!(w.dist_max(), 0.0);
    }

    #[test]
    fn endowment_matches_a_hand_count() {
        let (reg, w) = spawn(3, 11);
        for t in MediaType::ALL {
            for f in 0..reg.format_count(t) {
                let files: u64 = w
                    .institutions
                    .iter()
                    .filter_map(|i| i.pastor(t).collection(f))
                    .map(|c| c.files)
                    .sum();
                let holders = w.institutions.iter().filter(|i| i.pastor(t).holds(f)).count();
                assert_eq!(w.stats.file_count[t.index()][f], files);
                assert_eq!(w.stats.institution_count[t.index()][f], holders as u64);
            }
        }
        assert!(w.counters_consistent(&reg));
        w.check_collection_invariants().unwrap();
    }

    #[test]
    fn endowments_follow_kind() {
        let (_, w) = spawn(60, 5);
        for inst in &w.institutions {
            if inst.kind == InstitutionKind::Personal {
                assert_eq!(inst.staff, 0);
            } else {
                assert!(inst.staff >= 1 && inst.staff <= inst.kind.staff_max());
            }
            for t in MediaType::ALL {
                assert!(!inst.software.installed(t).is_empty());
                let n = inst.pastor(t).len();
                if inst.kind.holds_large(t) {
                    assert!((8..=15).contains(&n), "{} {t}: {n}", inst.kind);
                } else {
                    assert!((1..=4).contains(&n), "{} {t}: {n}", inst.kind);
                }
            }
        }
    }

    #[test]
    fn create_and_delete_keep_counters_consistent() {
        let (reg, mut w) = spawn(3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = WorldParams::default();
        let t = MediaType::Image;
        let absent = (0..reg.format_count(t))
            .find(|&f| !w.institutions[0].pastor(t).holds(f))
            .unwrap();
        let before = w.stats.institution_count[t.index()][absent];
        w.create_collection(0, t, absent, &p, 5, &mut rng).unwrap();
        assert_eq!(w.stats.institution_count[t.index()][absent], before + 1);
        assert!(w.counters_consistent(&reg));
        assert_eq!(
            w.create_collection(0, t, absent, &p, 5, &mut rng),
            Err(WorldError::DuplicateFormat {
                inst: 0,
                media_type: t,
                format: absent
            })
        );
        w.delete_collection(0, t, absent).unwrap();
        assert_eq!(w.stats.institution_count[t.index()][absent], before);
        assert!(w.counters_consistent(&reg));
        assert!(matches!(
            w.delete_collection(0, t, absent),
            Err(WorldError::MissingFormat { .. })
        ));
    }

    #[test]
    fn create_on_empty_pastor() {
        let (reg, mut w) = spawn(2, 4);
        let t = MediaType::Audio;
        let held: Vec<FormatId> = w.institutions[1].pastor(t).formats().collect();
        for f in held {
            w.delete_collection(1, t, f).unwrap();
        }
        assert!(w.institutions[1].pastor(t).is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        w.create_collection(1, t, 7, &WorldParams::default(), 1, &mut rng)
            .unwrap();
        assert_eq!(w.institutions[1].pastor(t).len(), 1);
        assert!(w.counters_consistent(&reg));
    }

    #[test]
    fn distances() {
        assert_eq!(Point::new(1.0, 1.0).distance(Point::new(1.0, 1.0)), 0.0);
        assert_eq!(Point::new(0.0, 0.0).distance(Point::new(3.0, 4.0)), 5.0);
        let (_, mut w) = spawn(3, 1);
        let pts = [Point::new(0.0, 0.0), Point::new(3.0, 4.0), Point::new(6.0, 0.0)];
        for (inst, p) in w.institutions.iter_mut().zip(pts) {
            inst.location = p;
        }
        w.dist_max = 0.0;
        for i in 0..3 {
            for j in 0..i {
                w.dist_max = w.dist_max.max(w.distance(i, j));
            }
        }
        // brute force over all ordered pairs
        let mut best: f64 = 0.0;
        for a in pts {
            for b in pts {
                best = best.max(((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt());
            }
        }
        assert_eq!(w.dist_max(), best);
        assert_eq!(best, 6.0);
    }

    #[test]
    fn convert_moves_everything() {
        let (reg, mut w) = spawn(2, 8);
        let t = MediaType::Text;
        let src = w.institutions[0].pastor(t).formats().next().unwrap();
        let dst = (0..reg.format_count(t))
            .find(|&f| !w.institutions[0].pastor(t).holds(f))
            .unwrap();
        w.insert_collection(0, t, FormatCollection::empty(dst, 0)).unwrap();
        let files = w.institutions[0].pastor(t).collection(src).unwrap().files;
        let total_before: u64 = w.stats.file_count[t.index()].iter().sum();
        w.convert(0, t, src, dst).unwrap();
        let p = w.institutions[0].pastor(t);
        assert_eq!(p.collection(dst).unwrap().files, files);
        assert_eq!(p.collection(src).unwrap().files, 0);
        assert_eq!(w.stats.file_count[t.index()].iter().sum::<u64>(), total_before);
        assert!(w.counters_consistent(&reg));
        w.check_collection_invariants().unwrap();
    }

    #[test]
    fn convert_merges_into_non_empty_destination() {
        let (reg, mut w) = spawn(1, 1);
        let t = MediaType::Video;
        let src = FormatCollection::from_clusters(40, &[(10, 100.0), (5, 50.0)], 0);
        let dst = FormatCollection::from_clusters(41, &[(3, 30.0)], 0);
        let held: Vec<_> = w.institutions[0].pastor(t).formats().collect();
        for f in held {
            w.delete_collection(0, t, f).unwrap();
        }
        w.insert_collection(0, t, src).unwrap();
        w.insert_collection(0, t, dst).unwrap();
        w.convert(0, t, 40, 41).unwrap();
        let merged = w.institutions[0].pastor(t).collection(41).unwrap();
        assert_eq!(merged.files, 18);
        assert_eq!(merged.clusters, vec![3, 10, 5]);
        assert_eq!(merged.total_kb, 180.0);
        assert_eq!(w.stats.file_count[t.index()][41], 18);
        assert_eq!(w.stats.file_count[t.index()][40], 0);
        assert!(w.counters_consistent(&reg));
    }

    #[test]
    fn random_collections_satisfy_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = WorldParams::default();
        for files in [1, 2, 5, 100, 10_000] {
            let c = FormatCollection::random(0, files, &p, 0, &mut rng);
            c.check_invariants().unwrap();
            assert_eq!(c.files, files);
            assert!(c.clusters.len() <= 10 && !c.clusters.is_empty());
        }
    }

    #[test]
    fn stalest_breaks_ties_by_registry_order() {
        let mut p = Pastor::new(MediaType::Audio);
        p.insert(FormatCollection::from_clusters(5, &[(1, 1.0)], 3));
        p.insert(FormatCollection::from_clusters(2, &[(1, 1.0)], 3));
        p.insert(FormatCollection::from_clusters(9, &[(1, 1.0)], 4));
        assert_eq!(p.stalest(), Some(2));
        p.collection_mut(2).unwrap().last_checked = 10;
        assert_eq!(p.stalest(), Some(5));
    }
}
