use std::sync::OnceLock;

use ecd_core::adversarial::{gen_random_ecd, RandomEcdParams};
use ecd_core::econ::{response_likelihood, Choice, ChoiceModel, EconConfig, EconCriterion, Support};
use ecd_core::noisy::{NoisyModel, ReductionMode};
use ecd_core::objectives::{
    delta_ec_fast, delta_ec_naive, delta_eff, delta_gbs, delta_ig, gini, EdgeSet, Level, MarginalQuery,
};
use ecd_core::policy::{expected_cost, run_policy};
use ecd_core::{Criterion, EcdInstance, Mode, PartialRealization, PolicySpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(seed: u64, n: usize, m: usize, outcomes: u32, classes: usize, dyadic: bool) -> EcdInstance {
    let mut m = m;
    while (outcomes as usize).pow(m as u32) < n {
        m += 1;
    }
    let params = RandomEcdParams { n, m, outcomes, classes: classes.min(n), dyadic };
    gen_random_ecd(params, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn arb_instance() -> impl Strategy<Value = EcdInstance> {
    (any::<u64>(), 2usize..=6, 1usize..=5, 2u32..=3, 1usize..=3, any::<bool>())
        .prop_map(|(seed, n, m, k, c, dyadic)| instance(seed, n, m, k, c, dyadic))
}

/// Observations of `truth` on the tests whose bit is set in `mask`.
fn observe(inst: &EcdInstance, truth: usize, mask: u32) -> PartialRealization {
    PartialRealization::from_observations(
        (0..inst.n_tests())
            .filter(|t| mask >> t & 1 == 1)
            .map(|t| (t, inst.outcome(truth, t))),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn posterior_is_renormalized_prior(inst in arb_instance(), truth in 0usize..6, mask in any::<u32>()) {
        let truth = truth % inst.n_hypotheses();
        let partial = observe(&inst, truth, mask);
        let vs = inst.version_space(&partial).unwrap();
        let post = inst.posterior(&partial).unwrap();
        prop_assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (h, &p) in post.iter().enumerate() {
            let want = if vs.contains(h) { inst.prior()[h] / vs.mass() } else { 0.0 };
            prop_assert!((p - want).abs() < 1e-12);
        }
    }

    #[test]
    fn version_space_is_antitone(inst in arb_instance(), truth in 0usize..6, a in any::<u32>(), b in any::<u32>()) {
        let truth = truth % inst.n_hypotheses();
        let small = inst.version_space(&observe(&inst, truth, a | b)).unwrap();
        let large = inst.version_space(&observe(&inst, truth, a)).unwrap();
        prop_assert!(small.contains(truth));
        prop_assert!(small.members().iter().all(|&h| large.contains(h)));
    }

    #[test]
    fn edge_total_matches_class_masses(inst in arb_instance()) {
        let edges = EdgeSet::new(&inst);
        let masses = inst.class_masses();
        prop_assert!((edges.total_pairwise() - edges.total()).abs() < 1e-12);
        prop_assert!((2.0 * edges.total() - gini(&masses)).abs() < 1e-12);
        let sq: f64 = masses.iter().map(|m| m * m).sum();
        prop_assert!((gini(&masses) - (1.0 - sq)).abs() < 1e-12);
    }

    #[test]
    fn gains_are_nonnegative_and_vanish_when_terminal(inst in arb_instance(), truth in 0usize..6, mask in any::<u32>()) {
        let truth = truth % inst.n_hypotheses();
        let vs = inst.version_space(&observe(&inst, truth, mask)).unwrap();
        let terminal = vs.is_terminal(&inst, Mode::Ecd);
        for t in 0..inst.n_tests() {
            let q = MarginalQuery::from_version_space(&inst, &vs, t);
            let fast = delta_ec_fast(&q);
            prop_assert!((fast - delta_ec_naive(&q)).abs() < 1e-12);
            for gain in [fast, delta_eff(&q), delta_gbs(&q), delta_ig(&q, Level::Class), delta_ig(&q, Level::Hypothesis)] {
                prop_assert!(gain >= -1e-15, "negative gain {gain}");
            }
            if terminal {
                prop_assert_eq!(fast, 0.0);
                prop_assert_eq!(delta_eff(&q), 0.0);
            }
        }
    }

    #[test]
    fn traces_are_prefix_consistent(inst in arb_instance(), truth in 0usize..6, c in 0usize..8, seed in any::<u64>()) {
        let truth = truth % inst.n_hypotheses();
        let spec = PolicySpec::new(Criterion::ALL[c], Mode::Ecd).with_seed(seed);
        let trace = run_policy(&spec, &inst, truth).unwrap();
        prop_assert!(trace.terminal);
        let mut partial = PartialRealization::new();
        for step in &trace.steps {
            prop_assert_eq!(step.outcome, inst.outcome(truth, step.test));
            partial.observe(step.test, step.outcome).unwrap();
            prop_assert!(inst.version_space(&partial).unwrap().contains(truth));
        }
        let again = run_policy(&spec, &inst, truth).unwrap();
        prop_assert_eq!(trace, again);
    }

    #[test]
    fn rescaling_costs_scales_cost_only(seed in any::<u64>(), n in 2usize..=6, c in 0usize..7, factor in prop::sample::select(vec![0.25, 0.5, 2.0, 3.0, 7.5])) {
        let inst = instance(seed, n, 4, 2, 3, true);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let costs: Vec<f64> = (0..inst.n_tests()).map(|_| f64::from(rng.gen_range(1u32..=4))).collect();
        let base = inst.with_costs(costs.clone()).unwrap();
        let scaled = inst.with_costs(costs.iter().map(|x| x * factor).collect()).unwrap();
        let spec = PolicySpec::new(Criterion::ALL[c], Mode::Ecd);
        for truth in 0..inst.n_hypotheses() {
            let a = run_policy(&spec, &base, truth).unwrap();
            let b = run_policy(&spec, &scaled, truth).unwrap();
            let tests = |t: &ecd_core::PolicyTrace| t.steps.iter().map(|s| s.test).collect::<Vec<_>>();
            prop_assert_eq!(tests(&a), tests(&b));
        }
        let a = expected_cost(&spec, &base).unwrap();
        let b = expected_cost(&spec, &scaled).unwrap();
        prop_assert!((b - factor * a).abs() <= 1e-12 * b.abs().max(1.0));
    }

    #[test]
    fn flip_reduction_preserves_mass(seed in any::<u64>(), n in 2usize..=4) {
        let inst = instance(seed, n, 4, 2, 2, true);
        let reduced = NoisyModel::flip_one_test(&inst).unwrap().reduce(ReductionMode::Decision).unwrap();
        let total: f64 = reduced.instance.prior().weights().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }
}

fn grid_model() -> &'static ChoiceModel {
    static MODEL: OnceLock<ChoiceModel> = OnceLock::new();
    MODEL.get_or_init(|| ChoiceModel::new(EconConfig { support: Support::Grid, ..EconConfig::default() }).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn grid_posterior_stays_normalized(answers in prop::collection::vec((any::<prop::sample::Index>(), any::<bool>()), 1..25)) {
        let model = grid_model();
        let mut post = model.prior();
        for (idx, first) in answers {
            let t = idx.index(model.n_tests());
            let choice = if first { Choice::First } else { Choice::Second };
            post = model.bayes_update(&post, t, choice).unwrap();
            prop_assert!((post.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!((post.marginals().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let eff = model.score(EconCriterion::Effecxtive, &post, idx.index(model.n_tests()));
            prop_assert!(eff >= -1e-15);
        }
    }

    #[test]
    fn response_is_shift_invariant(u1 in -50.0f64..50.0, u2 in -50.0f64..50.0, c in -100.0f64..100.0) {
        let a = response_likelihood(u1, u2);
        let b = response_likelihood(u1 + c, u2 + c);
        prop_assert!((a - b).abs() < 1e-9);
        prop_assert!((response_likelihood(u2, u1) - (1.0 - a)).abs() < 1e-12);
    }
}
