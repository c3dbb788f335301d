//! Property tests: the loss-gap identity, regularizer symmetry and
//! ordering, and consistency-metric invariances.

use dair_autodiff::{forward, GraphBuilder, ParamSet, Tensor};
use dair_core::objectives::{self, CmValue};
use proptest::prelude::*;

/// Evaluates both regularizers on a scalar pair through the graph path.
fn regs(l: f64, la: f64) -> (f64, f64) {
    let mut g = GraphBuilder::new();
    let a = g.input("l", vec![1]).unwrap();
    let b = g.input("la", vec![1]).unwrap();
    let sq = objectives::reg_sq(&mut g, a, b).unwrap();
    let l1 = objectives::reg_l1(&mut g, a, b).unwrap();
    let both = g.concat(sq, l1).unwrap();
    let graph = g.finish(both);
    let ta = Tensor::vector(&[l]).unwrap();
    let tb = Tensor::vector(&[la]).unwrap();
    let (out, _) = forward(&graph, &[("l", &ta), ("la", &tb)], &ParamSet::new()).unwrap();
    (out.data()[0], out.data()[1])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// reg_l1 - reg_sq equals the closed-form gap and is nonnegative.
    #[test]
    fn lemma1_identity(l in 0.0f64..50.0, la in 0.0f64..50.0) {
        let (sq, l1) = regs(l, la);
        let gap = objectives::lemma1_gap(l, la).unwrap();
        prop_assert!(gap >= 0.0);
        prop_assert!(((l1 - sq) - gap).abs() <= 1e-10, "gap {} vs {}", l1 - sq, gap);
    }

    /// Both regularizers are symmetric in their arguments.
    #[test]
    fn regularizers_symmetric(l in 0.0f64..50.0, la in 0.0f64..50.0) {
        let (sq_ab, l1_ab) = regs(l, la);
        let (sq_ba, l1_ba) = regs(la, l);
        prop_assert!((sq_ab - sq_ba).abs() <= 1e-12);
        prop_assert!((l1_ab - l1_ba).abs() <= 1e-12);
    }

    /// reg_sq never exceeds reg_l1; equality at the boundary set
    /// min{l, la, |l - la|} = 0.
    #[test]
    fn sq_below_l1(l in 0.0f64..50.0, la in 0.0f64..50.0) {
        let (sq, l1) = regs(l, la);
        prop_assert!(sq <= l1 + 1e-10);
        let boundary = l.min(la).min((l - la).abs());
        if (l1 - sq).abs() <= 1e-10 {
            prop_assert!(boundary <= 2e-5, "equality away from boundary: {l}, {la}");
        }
        if boundary == 0.0 {
            prop_assert!((l1 - sq).abs() <= 1e-10);
        }
    }

    /// KL output consistency is nonnegative, zero only at equal
    /// distributions.
    #[test]
    fn kl_nonnegative(p in 0.02f64..0.98, q in 0.02f64..0.98) {
        let mut g = GraphBuilder::new();
        let a = g.input("q", vec![1, 2]).unwrap();
        let b = g.input("qa", vec![1, 2]).unwrap();
        let d = objectives::output_consistency(
            &mut g,
            objectives::OutputConsistency::Kl,
            a,
            b,
        ).unwrap();
        let out = g.sum(d);
        let graph = g.finish(out);
        let ta = Tensor::new(vec![1, 2], vec![p, 1.0 - p]).unwrap();
        let tb = Tensor::new(vec![1, 2], vec![q, 1.0 - q]).unwrap();
        let (v, _) = forward(&graph, &[("q", &ta), ("qa", &tb)], &ParamSet::new()).unwrap();
        prop_assert!(v.item() >= -1e-12);
        if (p - q).abs() > 1e-6 {
            prop_assert!(v.item() > 0.0);
        } else if (p - q).abs() == 0.0 {
            prop_assert!(v.item().abs() <= 1e-12);
        }
    }

    /// The consistency metric is invariant to permuting paired indices.
    #[test]
    fn cm_permutation_invariant(bits in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..40), seed in 0u64..1000) {
        let orig: Vec<bool> = bits.iter().map(|b| b.0).collect();
        let aug: Vec<bool> = bits.iter().map(|b| b.1).collect();
        let before = objectives::consistency_metric(&orig, &aug).unwrap();

        let mut rng = dair_core::util::rng_from(seed);
        let perm = dair_core::util::shuffled_indices(bits.len(), &mut rng);
        let orig_p: Vec<bool> = perm.iter().map(|&i| orig[i]).collect();
        let aug_p: Vec<bool> = perm.iter().map(|&i| aug[i]).collect();
        let after = objectives::consistency_metric(&orig_p, &aug_p).unwrap();

        match (before, after) {
            (CmValue::Value(a), CmValue::Value(b)) => prop_assert!((a - b).abs() <= 1e-15),
            (CmValue::NoSupport, CmValue::NoSupport) => {}
            _ => prop_assert!(false, "support changed under permutation"),
        }
    }
}

/// Dense draw of the gap identity, matching the volume the acceptance
/// criterion asks for (10,000 pairs at 1e-10).
#[test]
fn lemma1_identity_dense_sweep() {
    let mut rng = dair_core::util::rng_from(20240);
    for _ in 0..10_000 {
        use rand::Rng;
        let l: f64 = rng.random_range(0.0..100.0);
        let la: f64 = rng.random_range(0.0..100.0);
        let (sq, l1) = (
            (l.sqrt() - la.sqrt()).powi(2),
            (l - la).abs(),
        );
        let gap = objectives::lemma1_gap(l, la).unwrap();
        assert!(gap >= 0.0);
        assert!(((l1 - sq) - gap).abs() <= 1e-10, "l={l} la={la}");
    }
}
