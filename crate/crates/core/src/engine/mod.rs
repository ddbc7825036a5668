//! The discrete-time scheduler.
//!
//! Each cycle runs, phase by phase and institution by institution in
//! ascending id order: mail delivery, pastor checks, failure handling,
//! answering requests, reading suggestions, listening to informs, random
//! mutations and migration completions. The run stream is the only source
//! of randomness after the world is spawned, so a run is a pure function of
//! its configuration and data files.

mod config;
mod ops;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use config::{AcceptLimit, ConfigError, FieldError, SimConfig, WorldParams};
pub use ops::{
    accept_time, analyse_migration, classify, estimate_time, migration_time, DecisionCounts,
    DecisionOutcome, EngineError, ESTIMATE_NOISE, KB_PER_GB, RELEVANCE_HIGH, RELEVANCE_LOW,
};

use crate::protocol::{
    accept_propose, broadcast_request, send_inform_all, send_propose, Failure, Issue, Message,
    MessageKind, MigrationSuggestion, Payload, PostOffice, Tag,
};
use crate::registry::{
    AppId, FormatId, FormatRegistry, LangCorrelation, MediaType, RegistryError, RegistryPaths,
};
use crate::risk::{destination_excluding, format_risk};
use crate::trust::{feedback, trust_evaluation, Feedback};
use crate::world::{FormatCollection, Institution, MigrationRecord, World, WorldError};

/// Stream of the seeded generator used to build the initial world.
pub const SPAWN_STREAM: u64 = 0;
/// Stream of the seeded generator used by the step loop.
pub const RUN_STREAM: u64 = 1;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    World(#[from] WorldError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MigrationOrigin {
    Suggestion { from: usize },
    Inform { from: usize },
    Autonomous,
}

/// Why a tested suggestion was not carried out.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Refusal {
    /// No installed application renders the destination.
    Unrenderable,
    /// The destination is not less at risk than the source.
    NotSafer,
    /// The estimated duration exceeds the accept limit.
    TooLong { estimate: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Event {
    Failure {
        inst: usize,
        failure: Failure,
    },
    AppInstalled {
        inst: usize,
        media_type: MediaType,
        app: AppId,
    },
    RequestSent {
        inst: usize,
        media_type: MediaType,
        format: FormatId,
        tag: Tag,
    },
    ProposeDropped {
        inst: usize,
        from: usize,
        tag: Tag,
    },
    IssueExpired {
        inst: usize,
        tag: Tag,
    },
    MigrationStarted {
        inst: usize,
        media_type: MediaType,
        src: FormatId,
        dst: FormatId,
        cycles: u64,
        origin: MigrationOrigin,
    },
    MigrationRefused {
        inst: usize,
        media_type: MediaType,
        src: FormatId,
        dst: FormatId,
        origin: MigrationOrigin,
        reason: Refusal,
    },
    MigrationCompleted {
        inst: usize,
        media_type: MediaType,
    },
    TrustVariation {
        inst: usize,
        peer: usize,
        media_type: MediaType,
        feedback: Feedback,
    },
    Decision {
        inst: usize,
        media_type: MediaType,
        src: FormatId,
        dst: FormatId,
        migrated: bool,
        outcome: DecisionOutcome,
    },
    CollectionCreated {
        inst: usize,
        media_type: MediaType,
        format: FormatId,
    },
    CollectionDeleted {
        inst: usize,
        media_type: MediaType,
        format: FormatId,
    },
}

/// Cumulative counters not kept in the global statistics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunCounters {
    pub trust_positive: u64,
    pub trust_negative: u64,
    pub requests: u64,
    pub mutations: u64,
    pub proposes_dropped: u64,
}

impl RunCounters {
    pub fn trust_total(&self) -> u64 {
        self.trust_positive + self.trust_negative
    }
}

#[derive(Default)]
struct Inbox {
    requests: Vec<Message>,
    proposes: Vec<Message>,
    informs: Vec<Message>,
}

/// Checks the stalest collection of a pastor; returns a failure when no
/// installed application renders it, or an alert when exactly one does.
pub fn pastor_check(
    reg: &FormatRegistry,
    inst: &mut Institution,
    t: MediaType,
    cycle: u64,
) -> Option<Failure> {
    let f = inst.pastor(t).stalest()?;
    let renderers = reg.renderer_count(inst.os, inst.software.installed(t), t, f);
    inst.pastors[t.index()]
        .collection_mut(f)
        .expect("stalest collection exists")
        .last_checked = cycle;
    match renderers {
        0 => Some(Failure {
            media_type: t,
            format: f,
            alert: false,
        }),
        1 => Some(Failure {
            media_type: t,
            format: f,
            alert: true,
        }),
        _ => None,
    }
}

/// Most widely installed application of the institution's OS that renders
/// `f` and is not yet installed (lowest id on ties).
pub fn installable_app(
    reg: &FormatRegistry,
    installed_counts: &[u64],
    inst: &Institution,
    t: MediaType,
    f: FormatId,
) -> Option<AppId> {
    (0..reg.applications(inst.os, t).len())
        .filter(|&a| !inst.software.is_installed(t, a) && reg.renders(inst.os, t, a, f))
        .max_by(|&a, &b| installed_counts[a].cmp(&installed_counts[b]).then(b.cmp(&a)))
}

pub struct Simulation {
    cfg: SimConfig,
    reg: Arc<FormatRegistry>,
    world: World,
    post: PostOffice,
    rng: ChaCha8Rng,
    cycle: u64,
    counters: RunCounters,
    params: WorldParams,
}

impl Simulation {
    /// Loads the registry named by the configuration and spawns the world.
    pub fn new(cfg: SimConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let reg = match &cfg.data_dir {
            Some(dir) => FormatRegistry::load(&RegistryPaths::from_dir(dir), cfg.coefficient_seed())?,
            None => FormatRegistry::bundled(cfg.coefficient_seed()),
        };
        let lang = match &cfg.lang_file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| RegistryError::Io {
                    path: path.clone(),
                    source,
                })?;
                Some(LangCorrelation::parse(&path.display().to_string(), &text)?)
            }
            None => None,
        };
        Self::with_registry(cfg, Arc::new(reg), lang)
    }

    pub fn with_registry(
        cfg: SimConfig,
        reg: Arc<FormatRegistry>,
        lang: Option<LangCorrelation>,
    ) -> Result<Self, SimError> {
        cfg.validate()?;
        let mut spawn_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        spawn_rng.set_stream(SPAWN_STREAM);
        let world = World::spawn(&cfg.world_params(), &reg, lang, &mut spawn_rng)?;
        Ok(Self::from_world(cfg, reg, world))
    }

    /// Wraps an existing world (e.g. a hand-built scenario).
    pub fn from_world(cfg: SimConfig, reg: Arc<FormatRegistry>, world: World) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(RUN_STREAM);
        let params = cfg.world_params();
        Self {
            post: PostOffice::new(world.len()),
            cfg,
            reg,
            world,
            rng,
            cycle: 0,
            counters: RunCounters::default(),
            params,
        }
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn registry(&self) -> &FormatRegistry {
        &self.reg
    }

    pub fn registry_arc(&self) -> Arc<FormatRegistry> {
        Arc::clone(&self.reg)
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn world_mut(&mut self) -> &mut World {
        &mut self.world
    }

    pub fn post(&self) -> &PostOffice {
        &self.post
    }

    pub fn post_mut(&mut self) -> &mut PostOffice {
        &mut self.post
    }

    /// Last completed cycle (0 before the first step).
    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn counters(&self) -> &RunCounters {
        &self.counters
    }

    pub fn finished(&self) -> bool {
        self.cycle >= self.cfg.cycles
    }

    /// Number of (institution, media type) pairs with a migration running
    /// during the last completed cycle.
    pub fn in_progress(&self) -> usize {
        self.world
            .institutions
            .iter()
            .flat_map(|i| i.busy_until)
            .filter(|&b| b >= self.cycle && self.cycle > 0)
            .count()
    }

    /// Advances the simulation by one cycle and returns what happened.
    pub fn step(&mut self) -> Vec<Event> {
        self.cycle += 1;
        let cycle = self.cycle;
        let n = self.world.len();
        let mut events = Vec::new();

        // (1) deliver mail
        self.post.deliver();
        let mut inboxes: Vec<Inbox> = (0..n)
            .map(|i| {
                let mut inbox = Inbox::default();
                for msg in self.post.take_inbox(i) {
                    match msg.kind {
                        MessageKind::Request => inbox.requests.push(msg),
                        MessageKind::Propose => inbox.proposes.push(msg),
                        MessageKind::Inform => inbox.informs.push(msg),
                        MessageKind::Failure => unreachable!("failures are never mailed"),
                    }
                }
                inbox
            })
            .collect();

        // (2) pastor checks
        let mut failures: Vec<Vec<Failure>> = vec![Vec::new(); n];
        for (i, found) in failures.iter_mut().enumerate() {
            for t in MediaType::ALL {
                if let Some(f) = pastor_check(&self.reg, &mut self.world.institutions[i], t, cycle) {
                    events.push(Event::Failure { inst: i, failure: f });
                    found.push(f);
                }
            }
        }

        // (3) deal with failures
        for (i, found) in failures.into_iter().enumerate() {
            for f in found {
                self.deal_with_failure(i, f, &mut events);
            }
        }

        // (4) suggest solutions
        for (i, inbox) in inboxes.iter_mut().enumerate() {
            let requests = std::mem::take(&mut inbox.requests);
            self.post.mark_consumed(requests.len() as u64);
            for req in requests {
                let Payload::Format(f) = req.payload else {
                    continue;
                };
                let suggestion = self.world.institutions[i]
                    .latest_migration_from(req.media_type, f)
                    .map(|r| MigrationSuggestion {
                        src: r.src_format,
                        dst: r.dst_format,
                    });
                send_propose(&mut self.post, cycle, i, req.sender, req.tag, req.media_type, suggestion);
            }
        }

        // (5) read suggestions
        for (i, inbox) in inboxes.iter_mut().enumerate() {
            let proposes = std::mem::take(&mut inbox.proposes);
            self.read_suggestions(i, proposes, &mut events);
        }

        // (6) listen to informs
        for (i, inbox) in inboxes.iter_mut().enumerate() {
            let informs = std::mem::take(&mut inbox.informs);
            self.listen_to_informs(i, informs, &mut events);
        }

        // (7) random mutations
        for i in 0..n {
            self.random_mutation(i, &mut events);
        }

        // (8) completions
        for inst in &self.world.institutions {
            for t in MediaType::ALL {
                if inst.busy_until[t.index()] == cycle {
                    events.push(Event::MigrationCompleted {
                        inst: inst.id,
                        media_type: t,
                    });
                }
            }
        }

        debug_assert!(self.post.reconciled(), "every delivered message is handled");
        events
    }

    fn risk(&self, t: MediaType, f: FormatId) -> f64 {
        // registries always hold at least two formats per type
        format_risk(&self.world.stats, t, f).expect("validated registry")
    }

    fn deal_with_failure(&mut self, i: usize, failure: Failure, events: &mut Vec<Event>) {
        let (t, f) = (failure.media_type, failure.format);
        if self.world.institutions[i].has_open_issue(t, f) {
            return;
        }
        if self.risk(t, f) < self.cfg.risk_threshold {
            self.try_install(i, t, f, events);
        } else {
            let n = self.world.len();
            let tag = broadcast_request(
                &mut self.post,
                &mut self.world.institutions[i],
                n,
                t,
                f,
                self.cycle,
            );
            self.counters.requests += 1;
            events.push(Event::RequestSent {
                inst: i,
                media_type: t,
                format: f,
                tag,
            });
        }
    }

    /// Installs a compatible application for `f` if one is available.
    fn try_install(&mut self, i: usize, t: MediaType, f: FormatId, events: &mut Vec<Event>) -> bool {
        let inst = &self.world.institutions[i];
        let counts = &self.world.stats.installed_apps[inst.os.index()][t.index()];
        let Some(app) = installable_app(&self.reg, counts, inst, t, f) else {
            return false;
        };
        self.world.install_app(&self.reg, i, t, app);
        events.push(Event::AppInstalled {
            inst: i,
            media_type: t,
            app,
        });
        true
    }

    fn read_suggestions(&mut self, i: usize, proposes: Vec<Message>, events: &mut Vec<Event>) {
        let mut dropped = 0;
        for msg in proposes {
            if accept_propose(&mut self.world.institutions[i], &msg) {
                self.post.mark_consumed(1);
            } else {
                log::debug!(
                    "cycle {}: institution {i} dropped a propose from {} for closed issue {:#x}",
                    self.cycle,
                    msg.sender,
                    msg.tag
                );
                dropped += 1;
                self.post.mark_dropped(1);
                self.counters.proposes_dropped += 1;
                events.push(Event::ProposeDropped {
                    inst: i,
                    from: msg.sender,
                    tag: msg.tag,
                });
            }
        }
        if dropped > 0 {
            log::warn!(
                "cycle {}: institution {i} dropped {dropped} propose(s) for closed issues",
                self.cycle
            );
        }
        let due: Vec<Tag> = self.world.institutions[i]
            .open_issues
            .values()
            .filter(|issue| self.cycle >= issue.opened + 2)
            .map(|issue| issue.tag)
            .collect();
        for tag in due {
            let inst = &self.world.institutions[i];
            let Some(issue) = inst.open_issues.get(&tag) else {
                continue;
            };
            if !inst.is_idle(issue.media_type, self.cycle) {
                continue;
            }
            let issue = self.world.institutions[i]
                .open_issues
                .remove(&tag)
                .expect("present");
            self.resolve_issue(i, issue, events);
        }
    }

    fn resolve_issue(&mut self, i: usize, issue: Issue, events: &mut Vec<Event>) {
        let (t, src) = (issue.media_type, issue.format);
        if !self.world.institutions[i].pastor(t).holds(src) {
            events.push(Event::IssueExpired {
                inst: i,
                tag: issue.tag,
            });
            return;
        }
        // every usable suggestion, first one per peer: (peer, destination)
        let mut suggestions: Vec<(usize, FormatId)> = Vec::new();
        for &(peer, s) in &issue.proposals {
            if s.src == src && s.dst != src && !suggestions.iter().any(|&(p, _)| p == peer) {
                suggestions.push((peer, s.dst));
            }
        }
        // trusted candidates: (trust, destination risk, peer, destination)
        let mut candidates: Vec<(f64, f64, usize, FormatId)> = Vec::new();
        for &(peer, dst) in &suggestions {
            let trust = trust_evaluation(&self.world, i, peer, t)
                .expect("proposals come from other institutions")
                .aggregate;
            if 100.0 * trust >= self.cfg.suggest_threshold {
                candidates.push((trust, self.risk(t, dst), peer, dst));
            }
        }
        candidates.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then(a.1.total_cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        if let Some(&(_, _, peer, dst)) = candidates.first() {
            let origin = MigrationOrigin::Suggestion { from: peer };
            match self.evaluate(i, t, src, dst) {
                Ok(cycles) => {
                    self.migrate(i, t, src, dst, cycles, origin, events);
                    self.feedback(i, peer, t, Feedback::Positive, events);
                    for &(other, _) in &suggestions {
                        if other != peer {
                            self.feedback(i, other, t, Feedback::Negative, events);
                        }
                    }
                    return;
                }
                Err(reason) => {
                    self.feedback(i, peer, t, Feedback::Negative, events);
                    self.refuse(i, t, src, dst, origin, reason, events);
                }
            }
        }
        self.autonomous(i, t, src, events);
    }

    /// Migrates `src` to the least-risk renderable format, preferring to
    /// install software when that format is no safer than `src`.
    fn autonomous(&mut self, i: usize, t: MediaType, src: FormatId, events: &mut Vec<Event>) {
        let inst = &self.world.institutions[i];
        let dest = destination_excluding(&self.reg, &self.world.stats, inst, t, Some(src));
        let Some((dst, dst_risk)) = dest else {
            self.try_install(i, t, src, events);
            return;
        };
        if dst_risk >= self.risk(t, src) && self.try_install(i, t, src, events) {
            return;
        }
        let cycles = self.true_cycles(i, t, src, dst);
        self.migrate(i, t, src, dst, cycles, MigrationOrigin::Autonomous, events);
    }

    fn listen_to_informs(&mut self, i: usize, informs: Vec<Message>, events: &mut Vec<Event>) {
        self.post.mark_consumed(informs.len() as u64);
        let mut groups: BTreeMap<(usize, FormatId), Vec<(usize, FormatId)>> = BTreeMap::new();
        {
            let inst = &self.world.institutions[i];
            for msg in &informs {
                let Payload::Suggestion(s) = msg.payload else {
                    continue;
                };
                let t = msg.media_type;
                if inst.is_idle(t, self.cycle) && inst.pastor(t).holds(s.src) {
                    groups
                        .entry((t.index(), s.src))
                        .or_default()
                        .push((msg.sender, s.dst));
                }
            }
        }
        for ((ti, src), informers) in groups {
            let t = MediaType::ALL[ti];
            let inst = &self.world.institutions[i];
            if !inst.is_idle(t, self.cycle) || !inst.pastor(t).holds(src) {
                continue;
            }
            let mut best: Option<(f64, usize, FormatId)> = None;
            for (peer, dst) in informers {
                if dst == src {
                    continue;
                }
                let trust = trust_evaluation(&self.world, i, peer, t)
                    .expect("informs come from other institutions")
                    .aggregate;
                let better = match best {
                    None => true,
                    Some((b, bp, _)) => trust > b || (trust == b && peer < bp),
                };
                if 100.0 * trust >= self.cfg.inform_threshold && better {
                    best = Some((trust, peer, dst));
                }
            }
            let Some((_, peer, dst)) = best else {
                continue;
            };
            let origin = MigrationOrigin::Inform { from: peer };
            match self.evaluate(i, t, src, dst) {
                Ok(cycles) => {
                    self.migrate(i, t, src, dst, cycles, origin, events);
                    self.feedback(i, peer, t, Feedback::Positive, events);
                }
                Err(reason) => {
                    self.feedback(i, peer, t, Feedback::Negative, events);
                    self.refuse(i, t, src, dst, origin, reason, events);
                }
            }
        }
    }

    /// Effectiveness test of a suggested migration; on success returns the
    /// cycles the migration will take.
    fn evaluate(&mut self, i: usize, t: MediaType, src: FormatId, dst: FormatId) -> Result<u64, Refusal> {
        let inst = &self.world.institutions[i];
        if self.reg.renderer_count(inst.os, inst.software.installed(t), t, dst) == 0 {
            return Err(Refusal::Unrenderable);
        }
        if self.risk(t, dst) >= self.risk(t, src) {
            return Err(Refusal::NotSafer);
        }
        if self.cfg.time_costs {
            let collection = inst.pastor(t).collection(src).expect("source is held");
            let m = self.reg.migration_coef(t);
            let estimate = estimate_time(collection, src, dst, inst.resources, m, &mut self.rng).unwrap_or(1);
            if !accept_time(estimate, self.cfg.accept_limit.get(t)) {
                return Err(Refusal::TooLong { estimate });
            }
        }
        Ok(self.true_cycles(i, t, src, dst))
    }

    fn true_cycles(&self, i: usize, t: MediaType, src: FormatId, dst: FormatId) -> u64 {
        if !self.cfg.time_costs {
            return 1;
        }
        let inst = &self.world.institutions[i];
        let total_kb = inst.pastor(t).collection(src).map_or(0.0, |c| c.total_kb);
        migration_time(total_kb, src, dst, inst.resources, self.reg.migration_coef(t))
    }

    #[allow(clippy::too_many_arguments)]
    fn refuse(
        &mut self,
        i: usize,
        t: MediaType,
        src: FormatId,
        dst: FormatId,
        origin: MigrationOrigin,
        reason: Refusal,
        events: &mut Vec<Event>,
    ) {
        events.push(Event::MigrationRefused {
            inst: i,
            media_type: t,
            src,
            dst,
            origin,
            reason,
        });
        // only a deliberate refusal of a feasible migration is a decision
        if matches!(reason, Refusal::TooLong { .. }) {
            let outcome = analyse_migration(&mut self.world.stats, t, src, dst, false);
            events.push(Event::Decision {
                inst: i,
                media_type: t,
                src,
                dst,
                migrated: false,
                outcome,
            });
        }
    }

    fn feedback(&mut self, i: usize, peer: usize, t: MediaType, outcome: Feedback, events: &mut Vec<Event>) {
        feedback(&mut self.world.institutions[i], peer, t, outcome);
        match outcome {
            Feedback::Positive => self.counters.trust_positive += 1,
            Feedback::Negative => self.counters.trust_negative += 1,
        }
        events.push(Event::TrustVariation {
            inst: i,
            peer,
            media_type: t,
            feedback: outcome,
        });
    }

    /// Converts `src` into `dst`, locks the media type for `cycles` cycles,
    /// informs every peer and classifies the decision.
    #[allow(clippy::too_many_arguments)]
    pub fn migrate(
        &mut self,
        i: usize,
        t: MediaType,
        src: FormatId,
        dst: FormatId,
        cycles: u64,
        origin: MigrationOrigin,
        events: &mut Vec<Event>,
    ) -> bool {
        let cycle = self.cycle.max(1);
        let inst = &self.world.institutions[i];
        if src == dst || !inst.is_idle(t, cycle) || !inst.pastor(t).holds(src) {
            return false;
        }
        let cycles = cycles.max(1);
        if !inst.pastor(t).holds(dst) {
            self.world
                .insert_collection(i, t, FormatCollection::empty(dst, cycle))
                .expect("destination absent");
        }
        let total_kb = self.world.institutions[i]
            .pastor(t)
            .collection(src)
            .expect("held")
            .total_kb;
        self.world.convert(i, t, src, dst).expect("both collections exist");
        self.world.delete_collection(i, t, src).expect("source exists");
        self.world
            .stats
            .record_migration_size(t, src, dst, total_kb / KB_PER_GB, cycles)
            .expect("valid migration");
        let inst = &mut self.world.institutions[i];
        let last = cycle + cycles - 1;
        inst.migrations_log.push(MigrationRecord {
            media_type: t,
            src_format: src,
            dst_format: dst,
            total_kb,
            cycles_required: cycles,
            cycle_completed: last,
        });
        inst.busy_until[t.index()] = last;
        let n = self.world.len();
        send_inform_all(&mut self.post, cycle, i, n, t, MigrationSuggestion { src, dst });
        events.push(Event::MigrationStarted {
            inst: i,
            media_type: t,
            src,
            dst,
            cycles,
            origin,
        });
        let outcome = analyse_migration(&mut self.world.stats, t, src, dst, true);
        events.push(Event::Decision {
            inst: i,
            media_type: t,
            src,
            dst,
            migrated: true,
            outcome,
        });
        true
    }

    fn random_mutation(&mut self, i: usize, events: &mut Vec<Event>) {
        let draw: f64 = self.rng.random();
        if draw * 100.0 >= self.cfg.mutation_probability {
            return;
        }
        self.counters.mutations += 1;
        let t = MediaType::ALL[self.rng.random_range(0..MediaType::ALL.len())];
        let create = self.rng.random_bool(0.5);
        let pastor = self.world.institutions[i].pastor(t);
        if create {
            let absent: Vec<FormatId> = (0..self.reg.format_count(t))
                .filter(|&f| !pastor.holds(f))
                .collect();
            if absent.is_empty() {
                return;
            }
            let format = absent[self.rng.random_range(0..absent.len())];
            self.world
                .create_collection(i, t, format, &self.params, self.cycle, &mut self.rng)
                .expect("format is absent");
            events.push(Event::CollectionCreated {
                inst: i,
                media_type: t,
                format,
            });
        } else {
            let held: Vec<FormatId> = pastor.formats().collect();
            if held.is_empty() {
                return;
            }
            let format = held[self.rng.random_range(0..held.len())];
            self.world.delete_collection(i, t, format).expect("format is held");
            events.push(Event::CollectionDeleted {
                inst: i,
                media_type: t,
                format,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize, seed: u64) -> Simulation {
        let cfg = SimConfig {
            institutions: n,
            seed,
            cycles: 200,
            ..SimConfig::default()
        };
        Simulation::new(cfg).unwrap()
    }

    #[test]
    fn quiet_step_only_advances_the_clock() {
        let cfg = SimConfig {
            institutions: 2,
            mutation_probability: 0.0,
            ..SimConfig::default()
        };
        let mut sim = Simulation::new(cfg).unwrap();
        // make every collection renderable by two apps so nothing fails
        let reg = sim.registry_arc();
        for i in 0..2 {
            for t in MediaType::ALL {
                let os = sim.world().institutions[i].os;
                for app in 0..reg.applications(os, t).len() {
                    sim.world_mut().install_app(&reg, i, t, app);
                }
                let held: Vec<_> = sim.world().institutions[i].pastor(t).formats().collect();
                for f in held {
                    if reg.renderer_count(os, sim.world().institutions[i].software.installed(t), t, f) < 2 {
                        sim.world_mut().delete_collection(i, t, f).unwrap();
                    }
                }
            }
        }
        let before = sim.world().stats.clone();
        let events = sim.step();
        assert!(events.is_empty(), "{events:?}");
        assert_eq!(sim.cycle(), 1);
        assert_eq!(sim.world().stats, before);
    }

    #[test]
    fn identical_seeds_give_identical_events() {
        let mut a = small(10, 3);
        let mut b = small(10, 3);
        for _ in 0..100 {
            assert_eq!(a.step(), b.step());
        }
    }

    #[test]
    fn one_migration_per_type_at_a_time() {
        let mut sim = small(20, 9);
        let mut running: BTreeMap<(usize, MediaType), u64> = BTreeMap::new();
        for _ in 0..200 {
            let cycle = sim.cycle() + 1;
            for e in sim.step() {
                if let Event::MigrationStarted {
                    inst, media_type, cycles, ..
                } = e
                {
                    if let Some(&until) = running.get(&(inst, media_type)) {
                        assert!(until < cycle, "overlapping migration");
                    }
                    running.insert((inst, media_type), cycle + cycles - 1);
                }
            }
        }
    }

    #[test]
    fn migrations_are_reconciled_with_logs() {
        let mut sim = small(15, 4);
        let mut started = 0;
        for _ in 0..200 {
            started += sim
                .step()
                .iter()
                .filter(|e| matches!(e, Event::MigrationStarted { .. }))
                .count() as u64;
        }
        let logged: usize = sim.world().institutions.iter().map(|i| i.migrations_log.len()).sum();
        assert_eq!(sim.world().stats.total_migrations, started);
        assert_eq!(logged as u64, started);
        assert!(sim.world().counters_consistent(sim.registry()));
        sim.world().check_collection_invariants().unwrap();
    }

    #[test]
    fn decisions_account_for_every_classification() {
        let mut sim = small(15, 5);
        let mut decisions = 0;
        for _ in 0..200 {
            decisions += sim
                .step()
                .iter()
                .filter(|e| matches!(e, Event::Decision { .. }))
                .count() as u64;
        }
        assert_eq!(sim.world().stats.decisions.total(), decisions);
    }

    #[test]
    fn mutation_probability_bounds() {
        let mut never = Simulation::new(SimConfig {
            institutions: 5,
            mutation_probability: 0.0,
            ..SimConfig::default()
        })
        .unwrap();
        for _ in 0..50 {
            never.step();
        }
        assert_eq!(never.counters().mutations, 0);
        let mut always = Simulation::new(SimConfig {
            institutions: 5,
            mutation_probability: 100.0,
            ..SimConfig::default()
        })
        .unwrap();
        for _ in 0..50 {
            always.step();
        }
        assert_eq!(always.counters().mutations, 250);
    }

    #[test]
    fn mutation_rate_matches_probability() {
        let mut sim = Simulation::new(SimConfig {
            institutions: 10,
            mutation_probability: 7.0,
            time_costs: false,
            ..SimConfig::default()
        })
        .unwrap();
        for _ in 0..1000 {
            sim.step();
        }
        let trials: f64 = 10_000.0;
        let p = 0.07;
        let sigma = (trials * p * (1.0 - p)).sqrt();
        let observed = sim.counters().mutations as f64;
        assert!((observed - trials * p).abs() <= 3.0 * sigma, "{observed}");
    }

    #[test]
    fn installable_app_prefers_the_most_installed() {
        let sim = small(3, 1);
        let reg = sim.registry();
        let inst = &sim.world().institutions[0];
        let t = MediaType::Audio;
        let f = 0;
        let n_apps = reg.applications(inst.os, t).len();
        let mut counts = vec![0u64; n_apps];
        let candidates: Vec<AppId> = (0..n_apps)
            .filter(|&a| !inst.software.is_installed(t, a) && reg.renders(inst.os, t, a, f))
            .collect();
        if let Some(&last) = candidates.last() {
            counts[last] = 100;
            assert_eq!(installable_app(reg, &counts, inst, t, f), Some(last));
            counts[last] = 0;
            assert_eq!(installable_app(reg, &counts, inst, t, f), candidates.first().copied());
        }
    }
}
