//! Per-test marginal benefits and the set functions behind them.
//!
//! Every `delta_*` returns the benefit of one candidate test given the
//! observations so far; dividing by cost is left to the policy layer. All
//! expectations are exact sums over the outcomes that have positive
//! probability under the current version space.
//!
//! The class-distribution criteria (Gini, Shannon, 0–1 value of information,
//! predictive entropy) are also exposed as functions of a joint mass table
//! `joint[y * cells + i]` so that the softmax-likelihood domain in
//! [`crate::econ`] scores tests with the same arithmetic.

use std::borrow::Cow;

use crate::error::{EcdError, Result};
use crate::instance::{EcdInstance, PartialRealization, VersionSpace};

/// Granularity of the distribution an information gain is measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Hypothesis,
    Class,
}

/// A candidate test evaluated against a version space.
#[derive(Debug, Clone)]
pub struct MarginalQuery<'a> {
    instance: &'a EcdInstance,
    version_space: Cow<'a, VersionSpace>,
    test: usize,
}

impl<'a> MarginalQuery<'a> {
    pub fn new(instance: &'a EcdInstance, partial: &PartialRealization, test: usize) -> Result<Self> {
        if test >= instance.n_tests() {
            return Err(EcdError::UnknownTest(test));
        }
        if partial.contains(test) {
            return Err(EcdError::RepeatedTest(test));
        }
        Ok(Self {
            instance,
            version_space: Cow::Owned(instance.version_space(partial)?),
            test,
        })
    }

    /// Query against an already computed version space. The caller is
    /// responsible for `test` not having been observed.
    pub fn from_version_space(instance: &'a EcdInstance, version_space: &'a VersionSpace, test: usize) -> Self {
        Self {
            instance,
            version_space: Cow::Borrowed(version_space),
            test,
        }
    }

    pub fn instance(&self) -> &EcdInstance {
        self.instance
    }

    pub fn version_space(&self) -> &VersionSpace {
        &self.version_space
    }

    pub fn test(&self) -> usize {
        self.test
    }

    /// Joint prior mass table `α(i, y) = P(H_i ∩ V(x_A, y))`, row-major over
    /// outcome codes.
    pub fn class_joint(&self) -> Vec<f64> {
        let inst = self.instance;
        let k = inst.n_classes();
        let mut joint = vec![0.0; inst.n_labels() * k];
        for &h in self.version_space.members() {
            joint[inst.code(h, self.test) * k + inst.class_of(h)] += inst.prior()[h];
        }
        joint
    }

    /// Prior mass of each outcome cell `P(V(x_A, y))`.
    pub fn outcome_masses(&self) -> Vec<f64> {
        let inst = self.instance;
        let mut masses = vec![0.0; inst.n_labels()];
        for &h in self.version_space.members() {
            masses[inst.code(h, self.test)] += inst.prior()[h];
        }
        masses
    }
}

/// The inter-class edges of an instance with weights `P(h)·P(h')`.
#[derive(Debug, Clone, Copy)]
pub struct EdgeSet<'a> {
    instance: &'a EcdInstance,
}

impl<'a> EdgeSet<'a> {
    pub fn new(instance: &'a EcdInstance) -> Self {
        Self { instance }
    }

    /// Every edge `(h, h', weight)` with `h < h'`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + 'a {
        let inst = self.instance;
        let n = inst.n_hypotheses();
        (0..n).flat_map(move |h| {
            ((h + 1)..n)
                .filter(move |&g| inst.class_of(h) != inst.class_of(g))
                .map(move |g| (h, g, inst.prior()[h] * inst.prior()[g]))
        })
    }

    /// Total weight summed edge by edge.
    pub fn total_pairwise(&self) -> f64 {
        self.iter().map(|(_, _, w)| w).sum()
    }

    /// Total weight from class masses. Summing `P(h)P(h')` over unordered
    /// inter-class pairs gives half of `1 - Σ_i P(H_i)²`.
    pub fn total(&self) -> f64 {
        0.5 * gini(&self.instance.class_masses())
    }

    pub fn min_weight(&self) -> Option<f64> {
        self.iter().map(|(_, _, w)| w).reduce(f64::min)
    }
}

/// Weight of the edges cut by running `tests_run` when `truth` is realized.
///
/// An edge is cut as soon as one endpoint disagrees with `truth` on some
/// test in the set.
pub fn f_ec(instance: &EcdInstance, tests_run: &[usize], truth: usize) -> f64 {
    let ruled_out = |h: usize| tests_run.iter().any(|&t| instance.code(h, t) != instance.code(truth, t));
    EdgeSet::new(instance)
        .iter()
        .filter(|&(h, g, _)| ruled_out(h) || ruled_out(g))
        .map(|(_, _, w)| w)
        .sum()
}

/// `1 - P(V(x_S(truth))) + P(truth)`.
pub fn f_gbs(instance: &EcdInstance, tests_run: &[usize], truth: usize) -> f64 {
    let consistent: f64 = (0..instance.n_hypotheses())
        .filter(|&h| tests_run.iter().all(|&t| instance.code(h, t) == instance.code(truth, t)))
        .map(|h| instance.prior()[h])
        .sum();
    1.0 - consistent + instance.prior()[truth]
}

/// Expected edge weight cut by the test, by enumerating every surviving
/// inter-class edge under every outcome. Quadratic in the version space; kept
/// as the reference for [`delta_ec_fast`].
pub fn delta_ec_naive(query: &MarginalQuery<'_>) -> f64 {
    let inst = query.instance;
    let vs = query.version_space();
    let t = query.test;
    let members = vs.members();
    let masses = query.outcome_masses();
    let mut expected = 0.0;
    for (y, &mass_y) in masses.iter().enumerate() {
        if mass_y <= 0.0 {
            continue;
        }
        let mut cut = 0.0;
        for (idx, &h) in members.iter().enumerate() {
            for &g in &members[idx + 1..] {
                if inst.class_of(h) == inst.class_of(g) {
                    continue;
                }
                if inst.code(h, t) != y || inst.code(g, t) != y {
                    cut += inst.prior()[h] * inst.prior()[g];
                }
            }
        }
        expected += mass_y / vs.mass() * cut;
    }
    expected
}

/// Same value as [`delta_ec_naive`] in one pass over the version space.
///
/// Accumulates `α(i, y)`, `β(i)` and the per-outcome sums `S_y = Σ_i α(i, y)`,
/// then uses `Σ_{i≠j} η_i η_j = Σ_i η_i (S - η_i)` for the surviving edge
/// weight, which is exactly zero when one class holds all the mass.
pub fn delta_ec_fast(query: &MarginalQuery<'_>) -> f64 {
    let inst = query.instance;
    let t = query.test;
    let k = inst.n_classes();
    let labels = inst.n_labels();
    let mut alpha = vec![0.0; labels * k];
    let mut beta = vec![0.0; k];
    let mut sum_y = vec![0.0; labels];
    let mut sum_b = 0.0;
    for &h in query.version_space().members() {
        let p = inst.prior()[h];
        let i = inst.class_of(h);
        let y = inst.code(h, t);
        alpha[y * k + i] += p;
        sum_y[y] += p;
        beta[i] += p;
        sum_b += p;
    }
    let cross = |masses: &[f64], total: f64| masses.iter().map(|&m| m * (total - m)).sum::<f64>();
    let before = cross(&beta, sum_b);
    let mut expected = 0.0;
    for y in 0..labels {
        if sum_y[y] <= 0.0 {
            continue;
        }
        let after = cross(&alpha[y * k..(y + 1) * k], sum_y[y]);
        expected += sum_y[y] / sum_b * 0.5 * (before - after);
    }
    expected
}

/// Expected reduction of version-space prior mass.
pub fn delta_gbs(query: &MarginalQuery<'_>) -> f64 {
    let vs_mass = query.version_space().mass();
    let masses = query.outcome_masses();
    vs_mass - masses.iter().map(|m| m / vs_mass * m).sum::<f64>()
}

/// Shannon information gain in bits on hypotheses or on classes.
pub fn delta_ig(query: &MarginalQuery<'_>, level: Level) -> f64 {
    match level {
        Level::Class => shannon_gain(&query.class_joint(), query.instance.n_classes()),
        Level::Hypothesis => {
            let inst = query.instance;
            let vs = query.version_space();
            let t = query.test;
            let prior = inst.prior();
            let before = entropy_of(vs.members().iter().map(|&h| prior[h]), vs.mass());
            let masses = query.outcome_masses();
            let mut after = 0.0;
            for (y, &mass_y) in masses.iter().enumerate() {
                if mass_y <= 0.0 {
                    continue;
                }
                let cell = vs.members().iter().filter(|&&h| inst.code(h, t) == y).map(|&h| prior[h]);
                after += mass_y / vs.mass() * entropy_of(cell, mass_y);
            }
            (before - after).max(0.0)
        }
    }
}

/// Entropy in bits of the predictive outcome distribution.
pub fn delta_us(query: &MarginalQuery<'_>) -> f64 {
    let masses = query.outcome_masses();
    entropy_of(masses.iter().copied(), query.version_space().mass())
}

/// Decision set and loss for value-of-information scoring.
#[derive(Debug, Clone, PartialEq)]
pub enum DecisionLoss {
    /// Decide the class; loss 1 unless the class contains the truth.
    ClassZeroOne,
    /// Explicit `loss[d][h]` over hypotheses.
    Table(Vec<Vec<f64>>),
}

/// Expected reduction in the risk of the best decision.
pub fn delta_voi(query: &MarginalQuery<'_>, loss: &DecisionLoss) -> f64 {
    match loss {
        DecisionLoss::ClassZeroOne => zero_one_voi_gain(&query.class_joint(), query.instance.n_classes()),
        DecisionLoss::Table(table) => {
            let inst = query.instance;
            let vs = query.version_space();
            let t = query.test;
            let risk = |cell: &mut dyn Iterator<Item = usize>, mass: f64| -> f64 {
                let mut totals = vec![0.0; table.len()];
                for h in cell {
                    let p = inst.prior()[h] / mass;
                    for (d, row) in table.iter().enumerate() {
                        totals[d] += row[h] * p;
                    }
                }
                totals.into_iter().fold(f64::INFINITY, f64::min)
            };
            let before = risk(&mut vs.members().iter().copied(), vs.mass());
            let mut after = 0.0;
            for (y, &mass_y) in query.outcome_masses().iter().enumerate() {
                if mass_y <= 0.0 {
                    continue;
                }
                let mut cell = vs.members().iter().copied().filter(|&h| inst.code(h, t) == y);
                after += mass_y / vs.mass() * risk(&mut cell, mass_y);
            }
            before - after
        }
    }
}

/// Expected reduction of the class-distribution weight `1 - Σ_i P(H_i)²`.
pub fn delta_eff(query: &MarginalQuery<'_>) -> f64 {
    gini_gain(&query.class_joint(), query.instance.n_classes())
}

/// `1 - Σ_i p_i²` of the normalized masses.
pub fn gini(masses: &[f64]) -> f64 {
    let total: f64 = masses.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - masses.iter().map(|m| (m / total).powi(2)).sum::<f64>()
}

/// `-Σ (m/total) log2(m/total)` over positive masses.
pub fn entropy_of(masses: impl Iterator<Item = f64>, total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    masses
        .filter(|&m| m > 0.0)
        .map(|m| {
            let p = m / total;
            -p * p.log2()
        })
        .sum()
}

fn cell_mass(joint: &[f64], cells: usize, c: usize) -> f64 {
    joint.iter().skip(c).step_by(cells).sum()
}

// Gain helpers below take a flat joint table `joint[y * cells + c]` and
// avoid allocating, since the econ selector calls them per test per step.

/// Expected reduction in `1 - Σ_i p_i²` of the cell distribution.
pub fn gini_gain(joint: &[f64], cells: usize) -> f64 {
    let total: f64 = joint.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let before: f64 = (0..cells).map(|c| cell_mass(joint, cells, c).powi(2)).sum::<f64>() / (total * total);
    let mut after = 0.0;
    for row in joint.chunks_exact(cells) {
        let my: f64 = row.iter().sum();
        if my > 0.0 {
            after += row.iter().map(|a| a * a).sum::<f64>() / (my * total);
        }
    }
    (after - before).max(0.0)
}

/// Expected reduction in Shannon entropy (bits) of the cell distribution.
pub fn shannon_gain(joint: &[f64], cells: usize) -> f64 {
    let total: f64 = joint.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let before = entropy_of((0..cells).map(|c| cell_mass(joint, cells, c)), total);
    let mut after = 0.0;
    for row in joint.chunks_exact(cells) {
        let my: f64 = row.iter().sum();
        if my > 0.0 {
            after += my / total * entropy_of(row.iter().copied(), my);
        }
    }
    (before - after).max(0.0)
}

/// Value of information for guessing the cell under 0–1 loss:
/// `E_y[max_i P(i | y)] - max_i P(i)`.
pub fn zero_one_voi_gain(joint: &[f64], cells: usize) -> f64 {
    let total: f64 = joint.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let before = (0..cells).map(|c| cell_mass(joint, cells, c)).fold(0.0, f64::max) / total;
    let after: f64 = joint
        .chunks_exact(cells)
        .map(|row| row.iter().copied().fold(0.0, f64::max))
        .sum::<f64>()
        / total;
    (after - before).max(0.0)
}

/// Entropy in bits of the outcome marginal.
pub fn predictive_entropy(joint: &[f64], cells: usize) -> f64 {
    let total: f64 = joint.iter().sum();
    entropy_of(joint.chunks_exact(cells).map(|row| row.iter().sum()), total)
}
