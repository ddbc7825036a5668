//! Rank-based obsolescence risk and destination-format selection.

use thiserror::Error;

use crate::registry::{FormatId, FormatRegistry, GlobalStatistics, MediaType};
use crate::world::Institution;

#[derive(Debug, Error, PartialEq)]
pub enum RiskError {
    #[error("risk ranking needs at least 2 formats, got {0}")]
    TooFewFormats(usize),
    #[error("format index {index} out of range for {len} formats")]
    OutOfRange { index: usize, len: usize },
}

/// Risk percentage of `values[target]` from its ascending rank.
///
/// Ties take the highest position among equal values, so tied formats are
/// equally (and minimally) risky.
pub fn rank_risk(values: &[u64], target: usize) -> Result<f64, RiskError> {
    let l = values.len();
    if l < 2 {
        return Err(RiskError::TooFewFormats(l));
    }
    let v = *values
        .get(target)
        .ok_or(RiskError::OutOfRange { index: target, len: l })?;
    let p = values.iter().filter(|&&x| x <= v).count() - 1;
    let top = (l - 1) as f64;
    Ok(100.0 * (top - p as f64) / top)
}

/// Mean of the rank risks in the file, institution and software lists.
pub fn format_risk(stats: &GlobalStatistics, t: MediaType, f: FormatId) -> Result<f64, RiskError> {
    let i = t.index();
    let lists = [
        &stats.file_count[i],
        &stats.institution_count[i],
        &stats.software_count[i],
    ];
    let mut sum = 0.0;
    for list in lists {
        sum += rank_risk(list, f)?;
    }
    Ok(sum / lists.len() as f64)
}

/// Least-risk format of type `t` renderable by `inst`'s installed software,
/// ties broken by registry order.
pub fn destination_format(
    reg: &FormatRegistry,
    stats: &GlobalStatistics,
    inst: &Institution,
    t: MediaType,
) -> Option<(FormatId, f64)> {
    destination_excluding(reg, stats, inst, t, None)
}

/// As [`destination_format`] but never returns `exclude`.
pub fn destination_excluding(
    reg: &FormatRegistry,
    stats: &GlobalStatistics,
    inst: &Institution,
    t: MediaType,
    exclude: Option<FormatId>,
) -> Option<(FormatId, f64)> {
    let mut best: Option<(FormatId, f64)> = None;
    for f in reg.renderable_formats(inst.os, inst.software.installed(t), t) {
        if Some(f) == exclude {
            continue;
        }
        let Ok(r) = format_risk(stats, t, f) else {
            continue;
        };
        if best.is_none_or(|(_, b)| r < b) {
            best = Some((f, r));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::WorldParams;
    use crate::registry::{RegistryText, SquareMatrix};
    use crate::world::World;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Independent oracle: position of the last occurrence of the target
    /// value in the ascending sorted list.
    fn sorted_oracle(values: &[u64], target: usize) -> f64 {
        let mut sorted = values.to_vec();
        sorted.sort_unstable();
        let v = values[target];
        let p = sorted.iter().rposition(|&x| x == v).unwrap();
        let l = values.len() as f64;
        100.0 * ((l - 1.0) - p as f64) / (l - 1.0)
    }

    #[test]
    fn rank_risk_examples() {
        assert_eq!(rank_risk(&[5, 9, 1], 2), Ok(100.0));
        assert_eq!(rank_risk(&[5, 9, 1], 1), Ok(0.0));
        assert_eq!(rank_risk(&[5, 9, 1], 0), Ok(50.0));
        assert_eq!(sorted_oracle(&[5, 9, 1], 0), 50.0);
        assert_eq!(rank_risk(&[3], 0), Err(RiskError::TooFewFormats(1)));
        assert_eq!(rank_risk(&[], 0), Err(RiskError::TooFewFormats(0)));
        assert!(rank_risk(&[1, 2], 5).is_err());
    }

    #[test]
    fn ties_take_the_highest_position() {
        assert_eq!(rank_risk(&[0, 0, 0, 0], 1), Ok(0.0));
        assert_eq!(rank_risk(&[0, 0, 7], 0), Ok(50.0));
    }

    fn stats_3(files: [u64; 3], insts: [u64; 3], soft: [u64; 3]) -> GlobalStatistics {
        let reg = FormatRegistry::bundled(0);
        let mut s = GlobalStatistics::new(&reg);
        s.file_count[0] = files.to_vec();
        s.institution_count[0] = insts.to_vec();
        s.software_count[0] = soft.to_vec();
        s.migrated_sizes[0] = SquareMatrix::zeros(3);
        s
    }

    #[test]
    fn format_risk_examples() {
        let s = stats_3([10, 20, 30], [1, 2, 3], [4, 5, 6]);
        assert_eq!(format_risk(&s, MediaType::Audio, 2), Ok(0.0));
        assert_eq!(format_risk(&s, MediaType::Audio, 0), Ok(100.0));
        // format 1: top of files, bottom of institutions, middle of software
        let s = stats_3([10, 30, 20], [5, 1, 9], [4, 5, 6]);
        let oracle = (sorted_oracle(&[10, 30, 20], 1)
            + sorted_oracle(&[5, 1, 9], 1)
            + sorted_oracle(&[4, 5, 6], 1))
            / 3.0;
        assert_eq!(oracle, 50.0);
        assert_eq!(format_risk(&s, MediaType::Audio, 1), Ok(oracle));
    }

    // audio columns: w1 w2 w3 | a1 | l1
    fn toy_registry() -> FormatRegistry {
        FormatRegistry::from_text(
            &RegistryText {
                formats: [
                    ("a.txt", "a\nb\nc\n"),
                    ("i.txt", "x\ny\n"),
                    ("t.txt", "p\nq\n"),
                    ("v.txt", "m\nn\n"),
                ],
                apps: [
                    [("wa", "w1\nw2\nw3\n"), ("wi", "wi\n"), ("wt", "wt\n"), ("wv", "wv\n")],
                    [("aa", "a1\n"), ("ai", "ai\n"), ("at", "at\n"), ("av", "av\n")],
                    [("la", "l1\n"), ("li", "li\n"), ("lt", "lt\n"), ("lv", "lv\n")],
                ],
                compat: [
                    ("audio.csv", "1,0,0,1,1\n0,1,0,1,1\n1,0,1,1,1\n"),
                    ("image.csv", "1,1,1\n1,1,1\n"),
                    ("text.csv", "1,1,1\n1,1,1\n"),
                    ("video.csv", "1,1,1\n1,1,1\n"),
                ],
                coef: None,
            },
            0,
        )
        .unwrap()
    }

    fn windows_institution(reg: &FormatRegistry) -> (World, GlobalStatistics) {
        let params = WorldParams {
            institutions: 1,
            large_collections: (1, 1),
            small_collections: (1, 1),
            ..WorldParams::default()
        };
        let mut w = World::spawn(&params, reg, None, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let installed: Vec<_> = w.institutions[0]
            .software
            .installed(MediaType::Audio)
            .iter()
            .copied()
            .collect();
        for app in installed {
            w.remove_app(reg, 0, MediaType::Audio, app);
        }
        w.institutions[0].os = crate::registry::Os::Windows;
        let mut s = GlobalStatistics::new(reg);
        s.file_count[0] = vec![100, 1, 50];
        s.institution_count[0] = vec![3, 1, 2];
        s.software_count[0] = vec![9, 1, 5];
        (w, s)
    }

    #[test]
    fn destination_examples() {
        let reg = toy_registry();
        let (mut w, s) = windows_institution(&reg);
        let t = MediaType::Audio;
        assert_eq!(destination_format(&reg, &s, &w.institutions[0], t), None);
        // w2 renders only b
        w.install_app(&reg, 0, t, 1);
        assert_eq!(
            destination_format(&reg, &s, &w.institutions[0], t),
            Some((1, 100.0))
        );
        // w1 renders a (risk 0) and c (risk 50)
        w.install_app(&reg, 0, t, 0);
        let (f, r) = destination_format(&reg, &s, &w.institutions[0], t).unwrap();
        assert_eq!(f, 0);
        assert_eq!(r, format_risk(&s, t, 0).unwrap());
        assert!(r < format_risk(&s, t, 2).unwrap());
        assert_eq!(
            destination_excluding(&reg, &s, &w.institutions[0], t, Some(0)),
            Some((2, 50.0))
        );
    }

    #[test]
    fn destination_ties_go_to_registry_order() {
        let reg = toy_registry();
        let (mut w, mut s) = windows_institution(&reg);
        let t = MediaType::Audio;
        s.file_count[0] = vec![5, 5, 5];
        s.institution_count[0] = vec![1, 1, 1];
        s.software_count[0] = vec![2, 2, 2];
        w.install_app(&reg, 0, t, 0);
        assert_eq!(destination_format(&reg, &s, &w.institutions[0], t), Some((0, 0.0)));
    }

    proptest! {
        #[test]
        fn rank_risk_matches_sort_oracle(values in proptest::collection::vec(0u64..20, 2..30), k in 0usize..30) {
            let k = k % values.len();
            prop_assert_eq!(rank_risk(&values, k).unwrap(), sorted_oracle(&values, k));
        }

        #[test]
        fn rank_risk_is_rank_only(values in proptest::collection::vec(0u64..1000, 2..30), k in 0usize..30, m in 1u64..7, c in 0u64..100) {
            let k = k % values.len();
            let transformed: Vec<u64> = values.iter().map(|v| v * v * m + c).collect();
            prop_assert_eq!(rank_risk(&values, k), rank_risk(&transformed, k));
        }

        #[test]
        fn adding_files_never_raises_risk(values in proptest::collection::vec(0u64..1000, 2..30), k in 0usize..30, extra in 0u64..500) {
            let k = k % values.len();
            let before = rank_risk(&values, k).unwrap();
            let mut more = values.clone();
            more[k] += extra;
            prop_assert!(rank_risk(&more, k).unwrap() <= before);
            prop_assert!((0.0..=100.0).contains(&before));
        }
    }
}
