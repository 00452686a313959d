//! Properties of the weighted procedure and BH on random instances.

mod common;

use common::{grid_threshold, step_up_oracle};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wfdr::procedure::{
    bh_reject, group_weights, rejection_threshold, compare_rejection_counts, weighted_pvalues,
};
use wfdr::Partition;

#[derive(Debug, Clone)]
struct Instance {
    pvalues: Vec<f64>,
    partition: Partition,
    estimates: Vec<f64>,
}

impl Instance {
    fn weighted(&self) -> Vec<f64> {
        let w = group_weights(&self.estimates).unwrap();
        weighted_pvalues(&self.pvalues, &self.partition, &w)
    }

    fn pi0_overall(&self) -> f64 {
        let m = self.pvalues.len() as f64;
        self.partition
            .groups
            .iter()
            .zip(&self.estimates)
            .map(|(g, e)| g.len() as f64 * e)
            .sum::<f64>()
            / m
    }
}

fn instance() -> impl Strategy<Value = Instance> {
    (1usize..=200, 1usize..=6).prop_flat_map(|(m, l)| {
        let l = l.min(m);
        (
            prop::collection::vec(
                prop_oneof![3 => 0.0f64..1.0, 1 => 0.0f64..0.01, 1 => Just(1.0)],
                m,
            ),
            prop::collection::vec(0..l, m),
            prop::collection::vec(prop_oneof![4 => 0.0f64..1.0, 1 => Just(1.0)], l),
        )
            .prop_map(move |(raw, labels, estimates)| {
                let pvalues = raw.into_iter().map(|p| p.max(1e-9)).collect();
                let mut groups = vec![Vec::new(); l];
                for (i, &g) in labels.iter().enumerate() {
                    groups[g].push(i);
                }
                let (groups, estimates): (Vec<_>, Vec<_>) = groups
                    .into_iter()
                    .zip(estimates)
                    .filter(|(g, _)| !g.is_empty())
                    .unzip();
                Instance {
                    pvalues,
                    partition: Partition {
                        groups,
                        radius_final: 0.0,
                        iterations: 0,
                    },
                    estimates,
                }
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn step_up_matches_grid_threshold(inst in instance(), alpha in 0.01f64..0.5) {
        let pi0 = inst.pi0_overall();
        prop_assume!(pi0 < 1.0);
        let weighted = inst.weighted();
        let t = rejection_threshold(alpha, &weighted, pi0);
        let (_, oracle) = grid_threshold(&weighted, pi0, alpha);
        prop_assert_eq!(&t.rejected, &oracle);
        prop_assert_eq!(t.k_tilde_star, step_up_oracle(&weighted, 1.0 - pi0, alpha));
        for (i, &w) in weighted.iter().enumerate() {
            prop_assert_eq!(t.rejected.contains(&i), w <= t.tau);
        }
    }

    #[test]
    fn comparison_agrees_with_rejection_counts(inst in instance(), alpha in 0.01f64..0.5) {
        let pi0 = inst.pi0_overall();
        prop_assume!(pi0 < 1.0);
        let weighted = inst.weighted();
        let c = compare_rejection_counts(&inst.pvalues, &weighted, pi0, alpha).unwrap();
        let wfdr = rejection_threshold(alpha, &weighted, pi0).rejected.len();
        let bh = bh_reject(&inst.pvalues, alpha).num_rejected();
        prop_assert_eq!(c.k_star, bh);
        prop_assert_eq!(c.wfdr_geq_bh, wfdr >= bh);
    }

    #[test]
    fn rejections_grow_with_the_level(inst in instance(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let pi0 = inst.pi0_overall();
        let weighted = inst.weighted();
        let small = rejection_threshold(lo, &weighted, pi0).rejected;
        let large = rejection_threshold(hi, &weighted, pi0).rejected;
        prop_assert!(small.iter().all(|i| large.contains(i)));
        let small = bh_reject(&inst.pvalues, lo).rejected;
        let large = bh_reject(&inst.pvalues, hi).rejected;
        prop_assert!(small.iter().all(|i| large.contains(i)));
    }

    #[test]
    fn relabeling_permutes_rejections(inst in instance(), alpha in 0.0f64..0.6, seed in any::<u64>()) {
        let m = inst.pvalues.len();
        let mut perm: Vec<usize> = (0..m).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..m).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        // hypothesis perm[j] of the original becomes hypothesis j
        let mut inverse = vec![0; m];
        for (j, &i) in perm.iter().enumerate() {
            inverse[i] = j;
        }
        let moved = Instance {
            pvalues: perm.iter().map(|&i| inst.pvalues[i]).collect(),
            partition: Partition {
                groups: inst
                    .partition
                    .groups
                    .iter()
                    .map(|g| g.iter().map(|&i| inverse[i]).collect())
                    .collect(),
                radius_final: 0.0,
                iterations: 0,
            },
            estimates: inst.estimates.clone(),
        };
        let pi0 = inst.pi0_overall();
        let before = rejection_threshold(alpha, &inst.weighted(), pi0).rejected;
        let after = rejection_threshold(alpha, &moved.weighted(), moved.pi0_overall()).rejected;
        let mut mapped: Vec<usize> = before.iter().map(|&i| inverse[i]).collect();
        mapped.sort_unstable();
        prop_assert_eq!(mapped, after);

        let before = bh_reject(&inst.pvalues, alpha).rejected;
        let after = bh_reject(&moved.pvalues, alpha).rejected;
        let mut mapped: Vec<usize> = before.iter().map(|&i| inverse[i]).collect();
        mapped.sort_unstable();
        prop_assert_eq!(mapped, after);
    }

    #[test]
    fn unit_weights_and_zero_pi0_reduce_to_bh(p in prop::collection::vec(0.0f64..1.0, 1..150), alpha in 0.0f64..0.5) {
        let part = Partition::single(p.len());
        let w = weighted_pvalues(&p, &part, &group_weights(&[0.5]).unwrap());
        prop_assert_eq!(&w, &p);
        let weighted = rejection_threshold(alpha, &w, 0.0).rejected;
        prop_assert_eq!(weighted, bh_reject(&p, alpha).rejected);
    }
}

/// Empirical FDR of BH with independent uniform nulls stays within three
/// Monte Carlo standard errors of the nominal level.
#[test]
fn bh_controls_fdr_on_uniform_nulls() {
    let (m, m0, reps, alpha) = (100, 80, 2_000, 0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut fdp = Vec::with_capacity(reps);
    for _ in 0..reps {
        let p: Vec<f64> = (0..m)
            .map(|i| {
                let u: f64 = rng.random();
                if i < m0 {
                    u
                } else {
                    u.powi(8)
                }
            })
            .collect();
        let r = bh_reject(&p, alpha);
        let v = r.rejected.iter().filter(|&&i| i < m0).count();
        fdp.push(v as f64 / r.num_rejected().max(1) as f64);
    }
    let mean = fdp.iter().sum::<f64>() / reps as f64;
    let sd = (fdp.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
    assert!(
        mean <= alpha + 3.0 * sd / (reps as f64).sqrt(),
        "FDR {mean}"
    );
}
