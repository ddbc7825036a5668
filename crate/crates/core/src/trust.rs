//! Trust components, their weighted aggregate and the ±10% feedback rule.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::{LangCorrelation, MediaType};
use crate::world::{Institution, TrustRow, World};

pub const WEIGHT_MIN: f64 = 0.01;
pub const WEIGHT_MAX: f64 = 10.0;
pub const POSITIVE_FACTOR: f64 = 1.1;
pub const NEGATIVE_FACTOR: f64 = 0.9;
/// Number of trust components the aggregate is divided by.
pub const COMPONENTS: f64 = 4.0;

#[derive(Debug, Error, PartialEq)]
pub enum TrustError {
    #[error("distance {d} exceeds the maximum distance {d_max}")]
    DistanceOutOfRange { d: f64, d_max: f64 },
    #[error("institution {0} cannot evaluate trust in itself")]
    SelfTrust(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrustBreakdown {
    pub t_files: f64,
    pub t_dist: f64,
    pub t_culture: f64,
    pub t_staff: f64,
    pub aggregate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feedback {
    Positive,
    Negative,
}

/// File-count component: ½(1 + (f_j − f_i)/(f_j + f_i)); 0.5 when both are 0.
pub fn trust_files(f_i: u64, f_j: u64) -> f64 {
    let sum = f_i as f64 + f_j as f64;
    if sum == 0.0 {
        return 0.5;
    }
    0.5 * (1.0 + (f_j as f64 - f_i as f64) / sum)
}

/// Distance component: 1 − d/d_max; 1 when d_max = 0.
pub fn trust_distance(d: f64, d_max: f64) -> Result<f64, TrustError> {
    // tolerate round-off between the cached maximum and a recomputed distance
    if d > d_max * (1.0 + 1e-12) {
        return Err(TrustError::DistanceOutOfRange { d, d_max });
    }
    if d_max == 0.0 {
        return Ok(1.0);
    }
    Ok((1.0 - d / d_max).clamp(0.0, 1.0))
}

/// Cultural component: the language-correlation entry L_ij.
pub fn trust_culture(lang: &LangCorrelation, i: usize, j: usize) -> f64 {
    lang.get(i, j)
}

/// Staff component, piecewise in the public/private status of both parties.
pub fn trust_staff(s_i: u32, s_j: u32, s_max_j: u32, i_public: bool, j_public: bool) -> f64 {
    if !j_public {
        return 0.0;
    }
    if i_public {
        let sum = s_i as f64 + s_j as f64;
        if sum == 0.0 {
            return 0.5;
        }
        0.5 * (1.0 + (s_j as f64 - s_i as f64) / sum)
    } else if s_max_j == 0 {
        0.0
    } else {
        (s_j as f64 / s_max_j as f64).min(1.0)
    }
}

/// Weighted sum of the four components divided by their number.
pub fn aggregate(components: [f64; 4], weights: [f64; 4]) -> f64 {
    components
        .iter()
        .zip(weights)
        .map(|(c, w)| c * w)
        .sum::<f64>()
        / COMPONENTS
}

/// Rows of the weight matrix used when trusting a peer about media type `t`.
pub fn weight_rows(t: MediaType) -> [TrustRow; 4] {
    [
        TrustRow::Files(t),
        TrustRow::Distance,
        TrustRow::Culture,
        TrustRow::Staff,
    ]
}

/// Trust of institution `i` in peer `j` regarding media type `t`.
pub fn trust_evaluation(
    world: &World,
    i: usize,
    j: usize,
    t: MediaType,
) -> Result<TrustBreakdown, TrustError> {
    if i == j {
        return Err(TrustError::SelfTrust(i));
    }
    let me = world.institution(i);
    let peer = world.institution(j);
    let m = &me.trust_matrix;
    let t_files = trust_files(
        m.get(TrustRow::Files(t), i) as u64,
        m.get(TrustRow::Files(t), j) as u64,
    );
    let t_dist = trust_distance(m.get(TrustRow::Distance, j), world.dist_max())?;
    let t_culture = m.get(TrustRow::Culture, j);
    let t_staff = trust_staff(
        me.staff,
        m.get(TrustRow::Staff, j) as u32,
        peer.kind.staff_max(),
        me.kind.is_public(),
        peer.kind.is_public(),
    );
    let weights = weight_rows(t).map(|r| me.trust_weights.get(r, j));
    let components = [t_files, t_dist, t_culture, t_staff];
    Ok(TrustBreakdown {
        t_files,
        t_dist,
        t_culture,
        t_staff,
        aggregate: aggregate(components, weights),
    })
}

/// Scales the four weights `inst` uses for (`peer`, `t`) by ±10%, clamped.
pub fn feedback(inst: &mut Institution, peer: usize, t: MediaType, outcome: Feedback) {
    let factor = match outcome {
        Feedback::Positive => POSITIVE_FACTOR,
        Feedback::Negative => NEGATIVE_FACTOR,
    };
    for row in weight_rows(t) {
        let w = inst.trust_weights.get(row, peer);
        inst.trust_weights
            .set(row, peer, (w * factor).clamp(WEIGHT_MIN, WEIGHT_MAX));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::WorldParams;
    use crate::registry::FormatRegistry;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn files_component() {
        assert_eq!(trust_files(7, 7), 0.5);
        assert_eq!(trust_files(0, 5), 1.0);
        assert_eq!(trust_files(5, 0), 0.0);
        assert_eq!(trust_files(0, 0), 0.5);
        // the degenerate value agrees with the a = b > 0 limit
        assert_eq!(trust_files(0, 0), trust_files(1, 1));
    }

    #[test]
    fn distance_component() {
        assert_eq!(trust_distance(0.0, 10.0), Ok(1.0));
        assert_eq!(trust_distance(10.0, 10.0), Ok(0.0));
        assert_eq!(trust_distance(0.0, 0.0), Ok(1.0));
        assert!(matches!(
            trust_distance(11.0, 10.0),
            Err(TrustError::DistanceOutOfRange { .. })
        ));
    }

    #[test]
    fn culture_component() {
        let lang = LangCorrelation::from_groups(&[0, 0, 1], 1.0, 0.2);
        assert_eq!(trust_culture(&lang, 2, 2), 1.0);
        assert_eq!(trust_culture(&lang, 0, 1), 1.0);
        assert_eq!(trust_culture(&lang, 0, 2), 0.2);
        assert_eq!(trust_culture(&lang, 2, 0), 0.2);
    }

    #[test]
    fn staff_component() {
        for s_i in [0, 5, 50] {
            assert_eq!(trust_staff(s_i, 0, 0, true, false), 0.0);
            assert_eq!(trust_staff(s_i, 0, 0, false, false), 0.0);
        }
        assert_eq!(trust_staff(20, 20, 50, true, true), 0.5);
        assert_eq!(trust_staff(0, 50, 50, false, true), 1.0);
        assert_eq!(trust_staff(0, 25, 50, false, true), 0.5);
        assert_eq!(trust_staff(0, 0, 50, true, true), 0.5);
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate([1.0; 4], [1.0; 4]), 1.0);
        let c = [0.2, 0.4, 0.6, 1.0];
        assert_relative_eq!(aggregate(c, [1.0; 4]), c.iter().sum::<f64>() / 4.0);
        assert_eq!(aggregate([1.0, 0.0, 0.0, 0.0], [2.0, 1.0, 1.0, 1.0]), 0.5);
    }

    fn toy_world() -> World {
        let reg = FormatRegistry::bundled(1);
        let params = WorldParams {
            institutions: 4,
            ..WorldParams::default()
        };
        World::spawn(&params, &reg, None, &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
    }

    #[test]
    fn evaluation_rejects_self_trust() {
        let w = toy_world();
        assert_eq!(
            trust_evaluation(&w, 1, 1, MediaType::Audio),
            Err(TrustError::SelfTrust(1))
        );
    }

    #[test]
    fn evaluation_with_unit_weights_is_the_component_mean() {
        let w = toy_world();
        for t in MediaType::ALL {
            let b = trust_evaluation(&w, 0, 2, t).unwrap();
            let mean = (b.t_files + b.t_dist + b.t_culture + b.t_staff) / 4.0;
            assert_relative_eq!(b.aggregate, mean, max_relative = 1e-15);
            for c in [b.t_files, b.t_dist, b.t_culture, b.t_staff] {
                assert!((0.0..=1.0).contains(&c));
            }
            let expected_files = trust_files(w.institutions[0].files_of(t), w.institutions[2].files_of(t));
            assert_eq!(b.t_files, expected_files);
        }
    }

    #[test]
    fn single_institution_distance_component_is_one() {
        let reg = FormatRegistry::bundled(1);
        let params = WorldParams {
            institutions: 1,
            ..WorldParams::default()
        };
        let w = World::spawn(&params, &reg, None, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(trust_distance(w.distance(0, 0), w.dist_max()), Ok(1.0));
    }

    #[test]
    fn feedback_steps_and_clamps() {
        let mut w = toy_world();
        let t = MediaType::Image;
        let inst = &mut w.institutions[0];
        feedback(inst, 1, t, Feedback::Positive);
        assert_relative_eq!(inst.trust_weights.get(TrustRow::Files(t), 1), 1.1);
        assert_relative_eq!(inst.trust_weights.get(TrustRow::Staff, 1), 1.1);
        // other media types' file rows are untouched
        assert_eq!(inst.trust_weights.get(TrustRow::Files(MediaType::Audio), 1), 1.0);
        feedback(inst, 2, t, Feedback::Negative);
        assert_relative_eq!(inst.trust_weights.get(TrustRow::Distance, 2), 0.9);
        inst.trust_weights.set(TrustRow::Culture, 3, 10.0);
        feedback(inst, 3, t, Feedback::Positive);
        assert_eq!(inst.trust_weights.get(TrustRow::Culture, 3), 10.0);
        inst.trust_weights.set(TrustRow::Culture, 3, 0.01);
        feedback(inst, 3, t, Feedback::Negative);
        assert_eq!(inst.trust_weights.get(TrustRow::Culture, 3), 0.01);
    }

    proptest! {
        #[test]
        fn components_stay_in_unit_interval(
            a in 0u64..1_000_000, b in 0u64..1_000_000,
            d in 0.0f64..1.0, d_max in 0.0f64..500.0,
            s_i in 0u32..=100, s_j in 0u32..=100, extra in 0u32..50,
            i_pub: bool, j_pub: bool,
        ) {
            let f = trust_files(a, b);
            prop_assert!((0.0..=1.0).contains(&f));
            if a + b > 0 {
                prop_assert!((f + trust_files(b, a) - 1.0).abs() < 1e-12);
            }
            let dist = trust_distance(d * d_max, d_max).unwrap();
            prop_assert!((0.0..=1.0).contains(&dist));
            let s = trust_staff(s_i, s_j, s_j + extra + 1, i_pub, j_pub);
            prop_assert!((0.0..=1.0).contains(&s));
        }

        #[test]
        fn uniform_weight_scaling_preserves_the_ranking(
            comps in proptest::collection::vec(proptest::array::uniform4(0.0f64..=1.0), 2..20),
            w in 0.01f64..10.0,
        ) {
            let argmax = |scale: f64| {
                comps
                    .iter()
                    .enumerate()
                    .map(|(k, c)| (k, aggregate(*c, [scale; 4])))
                    .fold((0, f64::NEG_INFINITY), |best, (k, v)| if v > best.1 { (k, v) } else { best })
                    .0
            };
            prop_assert_eq!(argmax(1.0), argmax(w));
        }

        #[test]
        fn aggregate_is_monotone(
            c in proptest::array::uniform4(0.0f64..=1.0),
            w in proptest::array::uniform4(0.01f64..=10.0),
            k in 0usize..4, dc in 0.0f64..1.0, dw in 0.0f64..5.0,
        ) {
            let base = aggregate(c, w);
            let mut c2 = c;
            c2[k] = (c2[k] + dc).min(1.0);
            let mut w2 = w;
            w2[k] += dw;
            prop_assert!(aggregate(c2, w) >= base);
            prop_assert!(aggregate(c, w2) >= base);
        }
    }
}
