//! Bundled and randomly generated model pairs with a known simulation relation.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::model::{FiniteDistribution, FiniteRmdp, LabelSet, MarkovPolicy, RmdpBuilder, StateRelation};

/// Concrete model `m1`, abstract model `m2`, and a relation `R ⊆ X1 × X2`.
#[derive(Clone, Debug)]
pub struct PasrInstance {
    pub m1: FiniteRmdp<f64>,
    pub m2: FiniteRmdp<f64>,
    pub rel: StateRelation,
}

/// One-step alternating example with Dirac kernels and colour-coded labels.
///
/// Concrete side: start `x1`, actions `u1`, `u1'`, disturbances `v1`, `v1'`.
/// Abstract side: start `x2`, actions `u2`, `u2'`, disturbances `v2`, `v2'`.
/// Successor states `r*`, `b*`, `g*` are red, blue and green, related by
/// colour. The protagonist answers both `u2` and `u2'` with `u1`:
///
/// * `u2`: `v1 → v2'`, `v1' → v2`
/// * `u2'`: `v1 → v2`, `v1' → v2'`
///
/// `u1'` can reach green, which no abstract move matches, so it never wins.
pub fn alternating_example() -> PasrInstance {
    let alphabet: Vec<String> = ["red", "blue", "green"].iter().map(|s| s.to_string()).collect();
    let colours = [LabelSet::EMPTY, LabelSet::single(0), LabelSet::single(1), LabelSet::single(2)];
    let names = |p: &str| -> Vec<(String, LabelSet)> {
        ["x", "r", "b", "g"]
            .iter()
            .zip(colours)
            .map(|(s, l)| (format!("{s}{p}"), l))
            .collect()
    };
    let (red, blue, green) = (1, 2, 3);

    let mut b1 = RmdpBuilder::new(
        alphabet.clone(),
        names("1"),
        vec!["u1".into(), "u1'".into()],
        vec!["v1".into(), "v1'".into()],
    )
    .init(FiniteDistribution::dirac(0));
    b1.set_kernel(0, 0, 0, FiniteDistribution::dirac(red));
    b1.set_kernel(0, 0, 1, FiniteDistribution::dirac(blue));
    b1.set_kernel(0, 1, 0, FiniteDistribution::dirac(green));
    b1.set_kernel(0, 1, 1, FiniteDistribution::dirac(red));

    let mut b2 = RmdpBuilder::new(
        alphabet,
        names("2"),
        vec!["u2".into(), "u2'".into()],
        vec!["v2".into(), "v2'".into()],
    )
    .init(FiniteDistribution::dirac(0));
    b2.set_kernel(0, 0, 0, FiniteDistribution::dirac(blue));
    b2.set_kernel(0, 0, 1, FiniteDistribution::dirac(red));
    b2.set_kernel(0, 1, 0, FiniteDistribution::dirac(red));
    b2.set_kernel(0, 1, 1, FiniteDistribution::dirac(blue));

    for b in [&mut b1, &mut b2] {
        for x in 1..4 {
            for u in 0..2 {
                for v in 0..2 {
                    b.set_kernel(x, u, v, FiniteDistribution::dirac(x));
                }
            }
        }
    }
    PasrInstance {
        m1: b1.build().expect("example model is valid"),
        m2: b2.build().expect("example model is valid"),
        rel: StateRelation::identity(4),
    }
}

/// Size limits for [`random_quotient_instance`].
#[derive(Clone, Copy, Debug)]
pub struct QuotientLimits {
    pub max_states: usize,
    pub max_actions: usize,
    pub max_disturbances: usize,
}

impl Default for QuotientLimits {
    fn default() -> Self {
        Self {
            max_states: 8,
            max_actions: 3,
            max_disturbances: 3,
        }
    }
}

fn random_distribution<R: Rng + ?Sized>(rng: &mut R, support: &[usize]) -> FiniteDistribution<f64> {
    let weights: Vec<f64> = support.iter().map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    FiniteDistribution::from_pairs(support.iter().copied().zip(weights.iter().map(|w| w / total)))
        .expect("positive weights")
}

/// Random pair where the abstract model is the label-respecting quotient of
/// the concrete one, so the block map is a simulation by construction.
///
/// The abstract model is drawn first over blocks. Each concrete state in a
/// block gets, for its first `|U2|` actions, successor distributions whose
/// pushforward to blocks equals some abstract row `T2(b, u2, v2)` (the `v2`
/// chosen at random per `v1`). Extra concrete actions are arbitrary.
pub fn random_quotient_instance<R: Rng + ?Sized>(rng: &mut R, limits: QuotientLimits) -> PasrInstance {
    let alphabet = vec!["G".to_string(), "U".to_string()];
    let n1 = rng.random_range(2..=limits.max_states.max(2));
    let n_blocks = rng.random_range(1..=n1);
    // every block nonempty: first n_blocks states seed the blocks
    let mut block_of: Vec<usize> = (0..n1).map(|i| if i < n_blocks { i } else { rng.random_range(0..n_blocks) }).collect();
    block_of.shuffle(rng);
    let mut members = vec![Vec::new(); n_blocks];
    for (x, &b) in block_of.iter().enumerate() {
        members[b].push(x);
    }
    let block_labels: Vec<LabelSet> = (0..n_blocks)
        .map(|_| match rng.random_range(0..5) {
            0 => LabelSet::single(0),
            1 => LabelSet::single(1),
            _ => LabelSet::EMPTY,
        })
        .collect();

    let n_u2 = rng.random_range(1..=limits.max_actions);
    let n_v2 = rng.random_range(1..=limits.max_disturbances);
    let n_u1 = rng.random_range(n_u2..=limits.max_actions.max(n_u2));
    let n_v1 = rng.random_range(1..=limits.max_disturbances);

    let mut b2 = RmdpBuilder::with_sizes(alphabet.clone(), block_labels.clone(), n_u2, n_v2);
    let mut abstract_rows = vec![vec![vec![FiniteDistribution::dirac(0); n_v2]; n_u2]; n_blocks];
    for (b, rows) in abstract_rows.iter_mut().enumerate() {
        for (u, row) in rows.iter_mut().enumerate() {
            for (v, slot) in row.iter_mut().enumerate() {
                let k = rng.random_range(1..=n_blocks.min(3));
                let mut blocks: Vec<usize> = (0..n_blocks).collect();
                blocks.shuffle(rng);
                let d = if rng.random_bool(0.5) {
                    FiniteDistribution::dirac(blocks[0])
                } else {
                    random_distribution(rng, &blocks[..k])
                };
                b2.set_kernel(b, u, v, d.clone());
                *slot = d;
            }
        }
    }

    // Refine an abstract row to concrete states, splitting each block's mass.
    let refine = |rng: &mut R, d: &FiniteDistribution<f64>| -> FiniteDistribution<f64> {
        let mut pairs = Vec::new();
        for (block, p) in d.iter() {
            let ms = &members[block];
            if rng.random_bool(0.5) || ms.len() == 1 {
                pairs.push((ms[rng.random_range(0..ms.len())], p));
            } else {
                let split = random_distribution(rng, ms);
                pairs.extend(split.iter().map(|(x, q)| (x, p * q)));
            }
        }
        FiniteDistribution::from_pairs(pairs).expect("refined row")
    };

    let labels1: Vec<LabelSet> = block_of.iter().map(|&b| block_labels[b]).collect();
    let mut b1 = RmdpBuilder::with_sizes(alphabet, labels1, n_u1, n_v1);
    let all: Vec<usize> = (0..n1).collect();
    for x in 0..n1 {
        let b = block_of[x];
        for u in 0..n_u1 {
            for v in 0..n_v1 {
                let d = if u < n_u2 {
                    let v2 = rng.random_range(0..n_v2);
                    refine(rng, &abstract_rows[b][u][v2])
                } else {
                    let k = rng.random_range(1..=n1.min(3));
                    let mut s = all.clone();
                    s.shuffle(rng);
                    random_distribution(rng, &s[..k])
                };
                b1.set_kernel(x, u, v, d);
            }
        }
    }

    let k = rng.random_range(1..=n1.min(3));
    let mut s = all.clone();
    s.shuffle(rng);
    let init1 = random_distribution(rng, &s[..k]);
    let init2 = FiniteDistribution::from_pairs(init1.iter().map(|(x, p)| (block_of[x], p))).expect("pushforward");
    b1.set_init(init1);
    b2.set_init(init2);

    PasrInstance {
        m1: b1.build().expect("generated concrete model is valid"),
        m2: b2.build().expect("generated abstract model is valid"),
        rel: StateRelation::from_map(&block_of, n_blocks).expect("block map in range"),
    }
}

/// Random deterministic policy, stationary or time-varying over `horizon` steps.
pub fn random_deterministic_policy<R: Rng + ?Sized>(
    rng: &mut R,
    n_states: usize,
    n_actions: usize,
    horizon: usize,
) -> MarkovPolicy<f64> {
    let step = |rng: &mut R| -> Vec<FiniteDistribution<f64>> {
        (0..n_states)
            .map(|_| FiniteDistribution::dirac(rng.random_range(0..n_actions)))
            .collect()
    };
    if rng.random_bool(0.5) {
        MarkovPolicy::stationary(step(rng))
    } else {
        MarkovPolicy::time_varying((0..horizon.max(1)).map(|_| step(rng)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pasr::check_pasr;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_instances_are_simulations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let inst = random_quotient_instance(&mut rng, QuotientLimits::default());
            let r = check_pasr(&inst.m1, &inst.m2, &inst.rel).unwrap();
            assert!(r.holds, "{r:?}");
            assert!(inst.m1.n_states() <= 8);
        }
    }
}
