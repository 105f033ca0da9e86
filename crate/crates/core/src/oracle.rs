//! Exhaustive ground truth for small instances: the optimal adaptive policy
//! by memoized recursion over version spaces, and checkers for adaptive
//! submodularity and strong adaptive monotonicity of the edge-cutting
//! objective.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{EcdError, Result};
use crate::instance::{EcdInstance, Mode, VersionSpace};
use crate::objectives::f_ec;

/// Memo entries allowed before `optimal_expected_cost` gives up.
pub const DEFAULT_MEMO_LIMIT: usize = 1 << 20;

/// Largest instance the property checkers will enumerate.
pub const CHECKER_MAX_HYPOTHESES: usize = 10;
pub const CHECKER_MAX_TESTS: usize = 8;

/// Comparisons in the property checkers use this slack.
pub const PROPERTY_TOLERANCE: f64 = 1e-12;

/// Reported violations are truncated to this many; the count is exact.
pub const MAX_REPORTED_VIOLATIONS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub cost: f64,
    /// Optimal first test at the root, `None` when the root is terminal.
    pub root_test: Option<usize>,
    /// Optimal test for every reachable non-terminal version space, keyed by
    /// the hypothesis bitmask.
    pub policy: HashMap<u64, usize>,
}

impl OptResult {
    /// Optimal test at a version space reachable from the root.
    pub fn test_for(&self, vs: &VersionSpace) -> Option<usize> {
        self.policy.get(&mask_of(vs.members())).copied()
    }
}

fn mask_of(members: &[usize]) -> u64 {
    members.iter().fold(0u64, |m, &h| m | (1 << h))
}

struct Dp<'a> {
    prior: &'a [f64],
    costs: &'a [f64],
    /// `splits[t]` lists the hypothesis masks for each outcome code of `t`.
    splits: Vec<Vec<u64>>,
    class_masks: Vec<u64>,
    class_of: Vec<usize>,
    mode: Mode,
    memo: HashMap<u64, (f64, usize)>,
    limit: usize,
}

const TERMINAL: usize = usize::MAX;

impl Dp<'_> {
    fn mass(&self, mut v: u64) -> f64 {
        let mut total = 0.0;
        while v != 0 {
            let h = v.trailing_zeros() as usize;
            total += self.prior[h];
            v &= v - 1;
        }
        total
    }

    fn terminal(&self, v: u64) -> bool {
        match self.mode {
            Mode::Odt => v.count_ones() <= 1,
            Mode::Ecd => {
                let first = v.trailing_zeros() as usize;
                v & !self.class_masks[self.class_of[first]] == 0
            }
        }
    }

    fn solve(&mut self, v: u64) -> Result<f64> {
        if self.terminal(v) {
            return Ok(0.0);
        }
        if let Some(&(cost, _)) = self.memo.get(&v) {
            return Ok(cost);
        }
        let mass = self.mass(v);
        let mut best = (f64::INFINITY, TERMINAL);
        for t in 0..self.costs.len() {
            let cells: Vec<u64> = self.splits[t]
                .iter()
                .map(|&m| m & v)
                .filter(|&c| c != 0)
                .collect();
            if cells.len() < 2 {
                continue;
            }
            let mut value = self.costs[t];
            for cell in cells {
                let sub = self.solve(cell)?;
                value += self.mass(cell) / mass * sub;
            }
            if value < best.0 {
                best = (value, t);
            }
        }
        if best.1 == TERMINAL {
            return Err(EcdError::InvalidInstance(format!(
                "no test separates the version space {v:#x}"
            )));
        }
        if self.memo.len() >= self.limit {
            return Err(EcdError::OracleTooLarge(format!(
                "more than {} reachable version spaces; compare against sampled policy costs instead",
                self.limit
            )));
        }
        self.memo.insert(v, best);
        Ok(best.0)
    }
}

/// Minimum expected cost over all adaptive policies that reach a terminal
/// version space for every hypothesis.
pub fn optimal_expected_cost(instance: &EcdInstance, mode: Mode) -> Result<OptResult> {
    optimal_expected_cost_with_limit(instance, mode, DEFAULT_MEMO_LIMIT)
}

pub fn optimal_expected_cost_with_limit(instance: &EcdInstance, mode: Mode, limit: usize) -> Result<OptResult> {
    let n = instance.n_hypotheses();
    if n > 64 {
        return Err(EcdError::OracleTooLarge(format!(
            "{n} hypotheses exceed the 64-hypothesis bitmask; compare against sampled policy costs instead"
        )));
    }
    let splits = (0..instance.n_tests())
        .map(|t| {
            let mut cells = vec![0u64; instance.n_labels()];
            for h in 0..n {
                cells[instance.code(h, t)] |= 1 << h;
            }
            cells.retain(|&c| c != 0);
            cells
        })
        .collect();
    let class_masks = instance.classes().iter().map(|block| mask_of(block)).collect();
    let mut dp = Dp {
        prior: instance.prior().weights(),
        costs: instance.costs(),
        splits,
        class_masks,
        class_of: (0..n).map(|h| instance.class_of(h)).collect(),
        mode,
        memo: HashMap::new(),
        limit,
    };
    let root = mask_of(instance.full_version_space().members());
    let cost = dp.solve(root)?;
    let root_test = dp.memo.get(&root).map(|&(_, t)| t);
    let policy = dp.memo.into_iter().map(|(v, (_, t))| (v, t)).collect();
    Ok(OptResult { cost, root_test, policy })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Observations of the smaller partial realization.
    pub x_a: Vec<(usize, u32)>,
    /// Observations of the extension (submodularity only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_b: Option<Vec<(usize, u32)>>,
    pub test: usize,
    /// Outcome of `test` (monotonicity only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome: Option<u32>,
    /// Value at `x_a` and value at the extension.
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub property: String,
    pub pass: bool,
    pub checked: usize,
    pub violation_count: usize,
    pub violations: Vec<Violation>,
}

impl PropertyReport {
    fn new(property: &str) -> Self {
        Self {
            property: property.to_string(),
            pass: true,
            checked: 0,
            violation_count: 0,
            violations: Vec::new(),
        }
    }

    fn record(&mut self, violation: Violation) {
        self.pass = false;
        self.violation_count += 1;
        if self.violations.len() < MAX_REPORTED_VIOLATIONS {
            self.violations.push(violation);
        }
    }
}

/// A consistent partial realization: tests as a bitmask, its observations
/// in test order, and the surviving hypotheses.
struct Partial {
    tests: u32,
    observations: Vec<(usize, u32)>,
    vs: VersionSpace,
}

fn check_size(instance: &EcdInstance) -> Result<()> {
    if instance.n_hypotheses() > CHECKER_MAX_HYPOTHESES || instance.n_tests() > CHECKER_MAX_TESTS {
        return Err(EcdError::OracleTooLarge(format!(
            "exhaustive checks need at most {CHECKER_MAX_HYPOTHESES} hypotheses and {CHECKER_MAX_TESTS} tests, got {} and {}",
            instance.n_hypotheses(),
            instance.n_tests()
        )));
    }
    Ok(())
}

/// Every consistent partial realization, grouped by test subset.
fn consistent_partials(instance: &EcdInstance) -> Vec<Partial> {
    let support = instance.full_version_space();
    let mut out = Vec::new();
    for tests in 0u32..(1 << instance.n_tests()) {
        let chosen: Vec<usize> = (0..instance.n_tests()).filter(|&t| tests >> t & 1 == 1).collect();
        let mut groups: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
        for &h in support.members() {
            let key: Vec<usize> = chosen.iter().map(|&t| instance.code(h, t)).collect();
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, members)) => members.push(h),
                None => groups.push((key, vec![h])),
            }
        }
        for (_, members) in groups {
            let rep = members[0];
            out.push(Partial {
                tests,
                observations: chosen.iter().map(|&t| (t, instance.outcome(rep, t))).collect(),
                vs: VersionSpace::from_members(instance, members),
            });
        }
    }
    out
}

fn tests_of(mask: u32, m: usize) -> Vec<usize> {
    (0..m).filter(|&t| mask >> t & 1 == 1).collect()
}

/// `E[f_EC(A) | x_A]`.
fn expected_f_ec(instance: &EcdInstance, tests: &[usize], vs: &VersionSpace) -> f64 {
    vs.members()
        .iter()
        .map(|&h| instance.prior()[h] / vs.mass() * f_ec(instance, tests, h))
        .sum()
}

/// `Δ(t | x_A) = E[f_EC(A ∪ {t}) - f_EC(A) | x_A]`, straight from the set
/// function.
pub fn delta_from_f_ec(instance: &EcdInstance, tests: &[usize], vs: &VersionSpace, t: usize) -> f64 {
    let mut with_t = tests.to_vec();
    with_t.push(t);
    vs.members()
        .iter()
        .map(|&h| instance.prior()[h] / vs.mass() * (f_ec(instance, &with_t, h) - f_ec(instance, tests, h)))
        .sum()
}

/// Adaptive submodularity of the edge-cutting objective: for every pair of
/// consistent partials `x_A ≺ x_B` and test `t ∉ B`, `Δ(t|x_B) ≤ Δ(t|x_A)`.
pub fn check_adaptive_submodularity(instance: &EcdInstance) -> Result<PropertyReport> {
    check_adaptive_submodularity_with(instance, delta_from_f_ec)
}

/// As [`check_adaptive_submodularity`] with an arbitrary benefit
/// `benefit(instance, tests_run, version_space, t)`.
pub fn check_adaptive_submodularity_with<F>(instance: &EcdInstance, benefit: F) -> Result<PropertyReport>
where
    F: Fn(&EcdInstance, &[usize], &VersionSpace, usize) -> f64,
{
    check_size(instance)?;
    let m = instance.n_tests();
    let partials = consistent_partials(instance);
    let mut deltas: HashMap<(u32, u64), Vec<f64>> = HashMap::new();
    for p in &partials {
        let tests = tests_of(p.tests, m);
        let values = (0..m)
            .map(|t| {
                if p.tests >> t & 1 == 1 {
                    f64::NAN
                } else {
                    benefit(instance, &tests, &p.vs, t)
                }
            })
            .collect();
        deltas.insert((p.tests, mask_of(p.vs.members())), values);
    }
    let mut report = PropertyReport::new("adaptive_submodularity");
    for b in &partials {
        let b_delta = &deltas[&(b.tests, mask_of(b.vs.members()))];
        // every proper sub-partial of x_B, including the empty one
        let mut sub = b.tests;
        loop {
            sub = sub.wrapping_sub(1) & b.tests;
            if sub == b.tests {
                break;
            }
            let a_obs: Vec<(usize, u32)> = b
                .observations
                .iter()
                .copied()
                .filter(|&(t, _)| sub >> t & 1 == 1)
                .collect();
            let rep = b.vs.members()[0];
            let a_members: Vec<usize> = instance
                .full_version_space()
                .members()
                .iter()
                .copied()
                .filter(|&h| a_obs.iter().all(|&(t, _)| instance.code(h, t) == instance.code(rep, t)))
                .collect();
            let a_delta = &deltas[&(sub, mask_of(&a_members))];
            for t in (0..m).filter(|&t| b.tests >> t & 1 == 0) {
                report.checked += 1;
                if b_delta[t] > a_delta[t] + PROPERTY_TOLERANCE {
                    report.record(Violation {
                        x_a: a_obs.clone(),
                        x_b: Some(b.observations.clone()),
                        test: t,
                        outcome: None,
                        before: a_delta[t],
                        after: b_delta[t],
                    });
                }
            }
            if sub == 0 {
                break;
            }
        }
    }
    Ok(report)
}

/// Strong adaptive monotonicity of the edge-cutting objective: observing
/// any outcome of any further test never lowers the conditional expected
/// objective.
pub fn check_strong_monotonicity(instance: &EcdInstance) -> Result<PropertyReport> {
    check_size(instance)?;
    let m = instance.n_tests();
    let mut report = PropertyReport::new("strong_adaptive_monotonicity");
    for p in consistent_partials(instance) {
        let tests = tests_of(p.tests, m);
        let before = expected_f_ec(instance, &tests, &p.vs);
        for t in (0..m).filter(|&t| p.tests >> t & 1 == 0) {
            let mut with_t = tests.clone();
            with_t.push(t);
            for (code, cell) in p.vs.split(instance, t) {
                report.checked += 1;
                let after = expected_f_ec(instance, &with_t, &cell);
                if before > after + PROPERTY_TOLERANCE {
                    report.record(Violation {
                        x_a: p.observations.clone(),
                        x_b: None,
                        test: t,
                        outcome: Some(instance.label(code)),
                        before,
                        after,
                    });
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversarial::{gen_gbs_bad, gen_posterior_bad};
    use crate::objectives::{delta_ig, Level, MarginalQuery};
    use crate::policy::{expected_cost, Criterion, PolicySpec};
    use crate::prior::Prior;

    #[test]
    fn gbs_bad_optimum_is_one() {
        for n in 2..=8 {
            let opt = optimal_expected_cost(&gen_gbs_bad(n).unwrap(), Mode::Ecd).unwrap();
            assert!((opt.cost - 1.0).abs() < 1e-12);
            if n > 2 {
                assert_eq!(opt.root_test, Some(n - 1));
            }
        }
    }

    #[test]
    fn odt_optimum_on_gbs_bad() {
        // identifying one of 3 uniform hypotheses with indicator tests: 1/3 + 2*2/3
        let opt = optimal_expected_cost(&gen_gbs_bad(3).unwrap(), Mode::Odt).unwrap();
        assert!((opt.cost - 5.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_class_optimum_is_zero() {
        let inst = gen_gbs_bad(3).unwrap();
        let one = EcdInstance::new(
            inst.hypothesis_ids().to_vec(),
            Prior::uniform(3).unwrap(),
            inst.test_ids().to_vec(),
            inst.costs().to_vec(),
            (0..3).map(|h| inst.outcome_row(h)).collect(),
            vec![vec![0, 1, 2]],
        )
        .unwrap();
        let opt = optimal_expected_cost(&one, Mode::Ecd).unwrap();
        assert_eq!(opt.cost, 0.0);
        assert_eq!(opt.root_test, None);
    }

    #[test]
    fn posterior_bad_q2_optimum() {
        let inst = gen_posterior_bad(2, 0).unwrap();
        let opt = optimal_expected_cost(&inst, Mode::Ecd).unwrap();
        assert!(opt.cost >= 2.0 - 1e-12 && opt.cost <= 3.0 + 1e-12, "{}", opt.cost);
        let greedy = expected_cost(&PolicySpec::new(Criterion::Ec2, Mode::Ecd), &inst).unwrap();
        assert!(opt.cost <= greedy + 1e-12);
    }

    #[test]
    fn memo_limit_is_enforced() {
        let inst = gen_posterior_bad(2, 0).unwrap();
        assert!(matches!(
            optimal_expected_cost_with_limit(&inst, Mode::Ecd, 3),
            Err(EcdError::OracleTooLarge(_))
        ));
    }

    #[test]
    fn deleting_a_test_never_helps() {
        let inst = gen_posterior_bad(1, 0).unwrap();
        let full = optimal_expected_cost(&inst, Mode::Ecd).unwrap().cost;
        for drop in 0..inst.n_tests() {
            let keep: Vec<usize> = (0..inst.n_tests()).filter(|&t| t != drop).collect();
            if let Ok(sub) = inst.with_tests(&keep) {
                let cost = optimal_expected_cost(&sub, Mode::Ecd).unwrap().cost;
                assert!(cost >= full - 1e-12);
            }
        }
    }

    #[test]
    fn edge_cutting_properties_hold_on_adversarial_families() {
        for inst in [gen_gbs_bad(4).unwrap(), gen_posterior_bad(1, 0).unwrap()] {
            let sub = check_adaptive_submodularity(&inst).unwrap();
            assert!(sub.pass, "{sub:?}");
            assert!(sub.checked > 0);
            let mono = check_strong_monotonicity(&inst).unwrap();
            assert!(mono.pass, "{mono:?}");
        }
    }

    #[test]
    fn class_information_gain_is_not_submodular() {
        let inst = gen_posterior_bad(2, 0).unwrap();
        let report = check_adaptive_submodularity_with(&inst, |inst, _, vs, t| {
            delta_ig(&MarginalQuery::from_version_space(inst, vs, t), Level::Class)
        })
        .unwrap();
        assert!(!report.pass);
        assert!(report.violation_count >= report.violations.len());
    }

    #[test]
    fn checker_refuses_large_instances() {
        assert!(check_strong_monotonicity(&gen_gbs_bad(12).unwrap()).is_err());
    }
}
