//! Greedy adaptive policies.
//!
//! Every criterion picks an unobserved test maximizing `Δ(t | x_A) / c(t)`
//! and stops once the version space is terminal for the requested mode or
//! the budget is spent.

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{EcdError, Result};
use crate::instance::{EcdInstance, Mode, PartialRealization, VersionSpace};
use crate::objectives::{self, DecisionLoss, Level, MarginalQuery};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Ec2,
    Effecxtive,
    Gbs,
    IgClass,
    IgHyp,
    Us,
    Voi,
    Random,
}

impl Criterion {
    pub const ALL: [Criterion; 8] = [
        Criterion::Ec2,
        Criterion::Effecxtive,
        Criterion::Gbs,
        Criterion::IgClass,
        Criterion::IgHyp,
        Criterion::Us,
        Criterion::Voi,
        Criterion::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::Ec2 => "ec2",
            Criterion::Effecxtive => "effecxtive",
            Criterion::Gbs => "gbs",
            Criterion::IgClass => "ig_class",
            Criterion::IgHyp => "ig_hyp",
            Criterion::Us => "us",
            Criterion::Voi => "voi",
            Criterion::Random => "random",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Criterion {
    type Err = EcdError;

    fn from_str(s: &str) -> Result<Self> {
        Criterion::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| EcdError::InvalidConfig(format!("unknown criterion `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    LowestTestIndex,
    SeededRandom,
}

/// Scores closer than this (relative to the best, floored at 1) are ties.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySpec {
    pub criterion: Criterion,
    pub mode: Mode,
    /// Maximum number of tests; `None` means one per available test.
    pub budget: Option<usize>,
    pub tie_break: TieBreak,
    pub seed: u64,
    /// Decisions and loss scored by the `voi` criterion.
    pub loss: DecisionLoss,
}

impl PolicySpec {
    pub fn new(criterion: Criterion, mode: Mode) -> Self {
        Self {
            criterion,
            mode,
            budget: None,
            tie_break: TieBreak::LowestTestIndex,
            seed: 0,
            loss: DecisionLoss::ClassZeroOne,
        }
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = Some(budget);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_tie_break(mut self, tie_break: TieBreak) -> Self {
        self.tie_break = tie_break;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget == Some(0) {
            return Err(EcdError::InvalidConfig("budget must be at least 1".into()));
        }
        Ok(())
    }

    /// The instance the criterion scores against: hypothesis identification
    /// puts every hypothesis in its own class.
    fn view<'a>(&self, instance: &'a EcdInstance) -> Cow<'a, EcdInstance> {
        match self.mode {
            Mode::Ecd => Cow::Borrowed(instance),
            Mode::Odt => Cow::Owned(instance.with_singleton_classes()),
        }
    }
}

/// Benefit of one test under a criterion, before cost division.
pub fn benefit(criterion: Criterion, query: &MarginalQuery<'_>, loss: &DecisionLoss) -> f64 {
    match criterion {
        Criterion::Ec2 => objectives::delta_ec_fast(query),
        Criterion::Effecxtive => objectives::delta_eff(query),
        Criterion::Gbs => objectives::delta_gbs(query),
        Criterion::IgClass => objectives::delta_ig(query, Level::Class),
        Criterion::IgHyp => objectives::delta_ig(query, Level::Hypothesis),
        Criterion::Us => objectives::delta_us(query),
        Criterion::Voi => objectives::delta_voi(query, loss),
        Criterion::Random => 0.0,
    }
}

/// Picks among `(test, score)` pairs, breaking near-ties per `tie_break`.
pub fn argmax_with_ties<R: Rng + ?Sized>(scores: &[(usize, f64)], tie_break: TieBreak, rng: &mut R) -> Option<usize> {
    let best = scores.iter().map(|&(_, s)| s).fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() {
        return scores.first().map(|&(t, _)| t);
    }
    let tol = TIE_TOLERANCE * best.abs().max(1.0);
    let tied: Vec<usize> = scores
        .iter()
        .filter(|&&(_, s)| s >= best - tol)
        .map(|&(t, _)| t)
        .collect();
    match tie_break {
        TieBreak::LowestTestIndex => tied.into_iter().min(),
        TieBreak::SeededRandom => tied.choose(rng).copied(),
    }
}

fn select_on<R: Rng + ?Sized>(
    spec: &PolicySpec,
    view: &EcdInstance,
    vs: &VersionSpace,
    observed: &[bool],
    rng: &mut R,
) -> Option<usize> {
    if vs.is_terminal(view, spec.mode) {
        return None;
    }
    let candidates: Vec<usize> = (0..view.n_tests()).filter(|&t| !observed[t]).collect();
    if candidates.is_empty() {
        return None;
    }
    if spec.criterion == Criterion::Random {
        return candidates.choose(rng).copied();
    }
    let scores: Vec<(usize, f64)> = candidates
        .iter()
        .map(|&t| {
            let query = MarginalQuery::from_version_space(view, vs, t);
            (t, benefit(spec.criterion, &query, &spec.loss) / view.cost(t))
        })
        .collect();
    argmax_with_ties(&scores, spec.tie_break, rng)
}

/// Next test for the given observations, or `None` when terminal or every
/// test has been run.
pub fn select_next<R: Rng + ?Sized>(
    spec: &PolicySpec,
    instance: &EcdInstance,
    partial: &PartialRealization,
    rng: &mut R,
) -> Result<Option<usize>> {
    spec.validate()?;
    let view = spec.view(instance);
    let vs = view.version_space(partial)?;
    let mut observed = vec![false; view.n_tests()];
    for t in partial.tests() {
        observed[t] = true;
    }
    Ok(select_on(spec, &view, &vs, &observed, rng))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub test: usize,
    pub test_id: String,
    pub outcome: u32,
    pub cost: f64,
}

/// One run of a policy against a fixed truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTrace {
    pub truth: usize,
    pub steps: Vec<TraceStep>,
    pub total_cost: f64,
    pub terminal: bool,
    /// Final version space.
    pub version_space: Vec<usize>,
    pub class_posterior: Vec<f64>,
}

impl PolicyTrace {
    pub fn partial(&self) -> PartialRealization {
        PartialRealization::from_observations(self.steps.iter().map(|s| (s.test, s.outcome)))
            .expect("traces never repeat a test")
    }
}

/// Runs the policy until terminal or out of budget, revealing the outcomes
/// of `truth`. Deterministic given the spec (including its seed).
pub fn run_policy(spec: &PolicySpec, instance: &EcdInstance, truth: usize) -> Result<PolicyTrace> {
    spec.validate()?;
    if truth >= instance.n_hypotheses() {
        return Err(EcdError::UnknownHypothesis(truth));
    }
    let view = spec.view(instance);
    let budget = spec.budget.unwrap_or(view.n_tests());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut vs = view.full_version_space();
    let mut observed = vec![false; view.n_tests()];
    let mut steps = Vec::new();
    let mut total_cost = 0.0;
    while steps.len() < budget {
        let Some(t) = select_on(spec, &view, &vs, &observed, &mut rng) else {
            break;
        };
        observed[t] = true;
        vs = vs.restrict(&view, t, view.code(truth, t));
        total_cost += view.cost(t);
        steps.push(TraceStep {
            test: t,
            test_id: view.test_id(t).to_string(),
            outcome: view.outcome(truth, t),
            cost: view.cost(t),
        });
    }
    if vs.is_empty() {
        // only reachable when the truth has zero prior mass
        return Err(EcdError::EmptyVersionSpace);
    }
    Ok(PolicyTrace {
        truth,
        terminal: vs.is_terminal(&view, spec.mode),
        class_posterior: vs.class_posterior(instance),
        version_space: vs.members().to_vec(),
        steps,
        total_cost,
    })
}

/// `Σ_h P(h) c(T(π, h))`, running the policy once per hypothesis.
pub fn expected_cost(spec: &PolicySpec, instance: &EcdInstance) -> Result<f64> {
    spec.validate()?;
    let truths: Vec<usize> = (0..instance.n_hypotheses())
        .filter(|&h| instance.prior()[h] > 0.0)
        .collect();
    let traces: Vec<PolicyTrace> = truths
        .par_iter()
        .map(|&h| run_policy(spec, instance, h))
        .collect::<Result<_>>()?;
    let mut total = NeumaierSum::default();
    for trace in &traces {
        if !trace.terminal && spec.budget.is_none() {
            return Err(EcdError::PolicyStalled {
                truth: instance.hypothesis_id(trace.truth).to_string(),
            });
        }
        total.add(instance.prior()[trace.truth] * trace.total_cost);
    }
    Ok(total.value())
}

/// Expected cost of running `tests` in order, stopping as soon as the
/// version space is terminal.
pub fn sequence_expected_cost(instance: &EcdInstance, tests: &[usize], mode: Mode) -> Result<f64> {
    let view = match mode {
        Mode::Ecd => Cow::Borrowed(instance),
        Mode::Odt => Cow::Owned(instance.with_singleton_classes()),
    };
    let mut total = NeumaierSum::default();
    for h in 0..view.n_hypotheses() {
        if view.prior()[h] <= 0.0 {
            continue;
        }
        let mut vs = view.full_version_space();
        let mut cost = 0.0;
        for &t in tests {
            if vs.is_terminal(&view, mode) {
                break;
            }
            if t >= view.n_tests() {
                return Err(EcdError::UnknownTest(t));
            }
            vs = vs.restrict(&view, t, view.code(h, t));
            cost += view.cost(t);
        }
        if !vs.is_terminal(&view, mode) {
            return Err(EcdError::PolicyStalled {
                truth: view.hypothesis_id(h).to_string(),
            });
        }
        total.add(view.prior()[h] * cost);
    }
    Ok(total.value())
}

/// Compensated summation, so a uniform prior times unit costs sums to
/// exactly 1.
#[derive(Default)]
struct NeumaierSum {
    sum: f64,
    carry: f64,
}

impl NeumaierSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}
