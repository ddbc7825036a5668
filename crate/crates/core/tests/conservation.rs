//! Global counters always equal a rescan of the world.

use presim::engine::{Event, SimConfig, Simulation};
use presim::registry::MediaType;

#[test]
fn counters_match_rescan_every_cycle() {
    let mut sim = Simulation::new(SimConfig {
        institutions: 12,
        mutation_probability: 10.0,
        seed: 3,
        ..SimConfig::default()
    })
    .unwrap();
    for _ in 0..400 {
        sim.step();
        assert!(sim.world().counters_consistent(sim.registry()), "cycle {}", sim.cycle());
        sim.world().check_collection_invariants().unwrap();
        assert!(sim.post().reconciled());
    }
}

#[test]
fn every_started_migration_is_logged_and_counted() {
    let mut sim = Simulation::new(SimConfig {
        institutions: 10,
        seed: 9,
        ..SimConfig::default()
    })
    .unwrap();
    let mut started = 0u64;
    let mut decisions = 0u64;
    for _ in 0..300 {
        for e in sim.step() {
            match e {
                Event::MigrationStarted { .. } => started += 1,
                Event::Decision { .. } => decisions += 1,
                _ => {}
            }
        }
    }
    let logged: usize = sim.world().institutions.iter().map(|i| i.migrations_log.len()).sum();
    assert_eq!(logged as u64, started);
    assert_eq!(sim.world().stats.total_migrations, started);
    assert_eq!(sim.world().stats.decisions.total(), decisions);
    // a type is never busy past the end of its logged migration
    for inst in &sim.world().institutions {
        for t in MediaType::ALL {
            let last = inst
                .migrations_log
                .iter()
                .filter(|r| r.media_type == t)
                .map(|r| r.cycle_completed)
                .max()
                .unwrap_or(0);
            assert_eq!(inst.busy_until[t.index()], last);
        }
    }
}
