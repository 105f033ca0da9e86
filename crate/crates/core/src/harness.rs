//! Simulation drivers: accuracy curves for the choice-under-risk policies,
//! expected-cost ratio tables for the hard instance families, and ordinal
//! checks over the results.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversarial::{gen_gbs_bad, gen_random_ecd, PosteriorBadParams, RandomEcdParams};
use crate::econ::{Choice, ChoiceModel, EconConfig, EconCriterion, GridPosterior, Support, Theory, TheoryPoint};
use crate::error::{EcdError, Result};
use crate::instance::{EcdInstance, Mode};
use crate::oracle::optimal_expected_cost;
use crate::policy::{expected_cost, sequence_expected_cost, Criterion, PolicySpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    FixedParams,
    ParamGrid,
    GbsBad,
    PosteriorBad,
    RandomEcd,
}

impl Scenario {
    pub fn is_econ(self) -> bool {
        matches!(self, Scenario::FixedParams | Scenario::ParamGrid)
    }
}

fn default_replicates() -> usize {
    1000
}

fn default_budget() -> usize {
    30
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub scenario: Scenario,
    /// Policy names; empty selects every policy the scenario supports.
    #[serde(default)]
    pub policies: Vec<String>,
    /// Simulated subjects, or random instances per size for `random_ecd`.
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default)]
    pub seed: u64,
    /// `n` for gbs_bad and random_ecd, `q` for posterior_bad.
    #[serde(default)]
    pub sizes: Vec<usize>,
    /// Overrides for the choice model; the scenario picks the support.
    #[serde(default)]
    pub econ: Option<EconConfig>,
    /// Evaluate the ordinal checks and fail the run if any does not hold.
    #[serde(default)]
    pub assert_ordering: bool,
}

impl SimConfig {
    pub fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            policies: Vec::new(),
            replicates: default_replicates(),
            budget: default_budget(),
            seed: 0,
            sizes: Vec::new(),
            econ: None,
            assert_ordering: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(EcdError::InvalidConfig("replicates must be at least 1".into()));
        }
        if self.budget == 0 {
            return Err(EcdError::InvalidConfig("budget must be at least 1".into()));
        }
        Ok(())
    }

    pub fn econ_config(&self) -> EconConfig {
        let mut config = self.econ.clone().unwrap_or_default();
        config.support = match self.scenario {
            Scenario::ParamGrid => Support::Grid,
            _ => Support::Canonical,
        };
        config
    }

    pub fn econ_policies(&self) -> Result<Vec<EconCriterion>> {
        if self.policies.is_empty() {
            return Ok(EconCriterion::ALL.to_vec());
        }
        self.policies.iter().map(|p| p.parse()).collect()
    }

    pub fn ecd_policies(&self) -> Result<Vec<String>> {
        if !self.policies.is_empty() {
            for p in &self.policies {
                if p != REFERENCE_POLICY {
                    p.parse::<Criterion>()?;
                }
            }
            return Ok(self.policies.clone());
        }
        let mut out: Vec<String> = Criterion::ALL.iter().map(|c| c.name().to_string()).collect();
        if self.scenario == Scenario::PosteriorBad {
            out.push(REFERENCE_POLICY.to_string());
        }
        Ok(out)
    }
}

/// Independent stream for `(seed, replicate, tag)`.
pub fn substream(seed: u64, replicate: u64, tag: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&replicate.to_le_bytes());
    key[16..24].copy_from_slice(&tag.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

const TRUTH_STREAM: u64 = 0;
const RESPONSE_STREAM: u64 = 1;

fn policy_stream(criterion: EconCriterion) -> u64 {
    2 + EconCriterion::ALL.iter().position(|&c| c == criterion).unwrap_or(0) as u64
}

/// A simulated subject: a true support point and one uniform draw per
/// test. Every policy asking test `t` receives the same answer.
#[derive(Debug, Clone)]
pub struct Subject {
    pub point: usize,
    draws: Vec<f64>,
}

impl Subject {
    pub fn sample(model: &ChoiceModel, seed: u64, replicate: u64) -> Self {
        let mut rng = substream(seed, replicate, TRUTH_STREAM);
        let theories: Vec<Theory> = model.points().iter().map(TheoryPoint::theory).collect();
        let present: Vec<Theory> = Theory::ALL.into_iter().filter(|t| theories.contains(t)).collect();
        let theory = present[rng.gen_range(0..present.len())];
        let members: Vec<usize> = (0..theories.len()).filter(|&p| theories[p] == theory).collect();
        let point = members[rng.gen_range(0..members.len())];
        let mut responses = substream(seed, replicate, RESPONSE_STREAM);
        let draws = (0..model.n_tests()).map(|_| responses.gen::<f64>()).collect();
        Self { point, draws }
    }

    pub fn theory(&self, model: &ChoiceModel) -> Theory {
        model.points()[self.point].theory()
    }

    pub fn answer(&self, model: &ChoiceModel, t: usize) -> Choice {
        if self.draws[t] < model.likelihood(t, self.point, Choice::First) {
            Choice::First
        } else {
            Choice::Second
        }
    }
}

/// One adaptive session against a simulated subject.
#[derive(Debug, Clone)]
pub struct SubjectRun {
    pub tests: Vec<usize>,
    pub choices: Vec<Choice>,
    /// Posterior after each answer.
    pub posteriors: Vec<GridPosterior>,
}

pub fn run_subject(
    model: &ChoiceModel,
    criterion: EconCriterion,
    subject: &Subject,
    budget: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SubjectRun> {
    let mut posterior = model.prior();
    let mut available = vec![true; model.n_tests()];
    let mut run = SubjectRun { tests: Vec::new(), choices: Vec::new(), posteriors: Vec::new() };
    for _ in 0..budget.min(model.n_tests()) {
        let Some(t) = model.select_test(criterion, &posterior, &available, rng) else {
            break;
        };
        available[t] = false;
        let choice = subject.answer(model, t);
        posterior = model.bayes_update(&posterior, t, choice)?;
        run.tests.push(t);
        run.choices.push(choice);
        run.posteriors.push(posterior.clone());
    }
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCurve {
    pub policy: String,
    /// `accuracy[k - 1]` after `k` tests.
    pub accuracy: Vec<f64>,
    pub stderr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdinalCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub scenario: Scenario,
    pub replicates: usize,
    pub budget: usize,
    pub seed: u64,
    pub curves: Vec<AccuracyCurve>,
}

impl AccuracyReport {
    pub fn curve(&self, policy: EconCriterion) -> Option<&AccuracyCurve> {
        self.curves.iter().find(|c| c.policy == policy.name())
    }

    /// Accuracy after `k` tests.
    pub fn at(&self, policy: EconCriterion, k: usize) -> Option<f64> {
        self.curve(policy).and_then(|c| c.accuracy.get(k - 1).copied())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("policy,k,accuracy,stderr\n");
        for curve in &self.curves {
            for (k, (a, se)) in curve.accuracy.iter().zip(&curve.stderr).enumerate() {
                let _ = writeln!(out, "{},{},{},{}", curve.policy, k + 1, a, se);
            }
        }
        out
    }
}

/// MAP accuracy curves for every policy over `config.replicates` simulated
/// subjects.
pub fn simulate(config: &SimConfig) -> Result<AccuracyReport> {
    config.validate()?;
    if !config.scenario.is_econ() {
        return Err(EcdError::InvalidConfig(format!(
            "{:?} is a cost-ratio scenario; use cost_ratio_report",
            config.scenario
        )));
    }
    let model = ChoiceModel::new(config.econ_config())?;
    let policies = config.econ_policies()?;
    let budget = config.budget;
    let hits: Vec<Vec<Vec<bool>>> = (0..config.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let subject = Subject::sample(&model, config.seed, r);
            let truth = subject.theory(&model);
            policies
                .iter()
                .map(|&policy| {
                    let mut rng = substream(config.seed, r, policy_stream(policy));
                    let run = run_subject(&model, policy, &subject, budget, &mut rng)?;
                    let mut row: Vec<bool> = run.posteriors.iter().map(|p| p.map_theory() == Some(truth)).collect();
                    // an exhausted pool keeps its last posterior
                    let last = row.last().copied().unwrap_or(false);
                    row.resize(budget, last);
                    Ok(row)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let n = config.replicates as f64;
    let curves = policies
        .iter()
        .enumerate()
        .map(|(i, policy)| {
            let accuracy: Vec<f64> = (0..budget)
                .map(|k| hits.iter().filter(|rep| rep[i][k]).count() as f64 / n)
                .collect();
            let stderr = accuracy.iter().map(|a| (a * (1.0 - a) / n).sqrt()).collect();
            AccuracyCurve { policy: policy.name().to_string(), accuracy, stderr }
        })
        .collect();
    Ok(AccuracyReport {
        scenario: config.scenario,
        replicates: config.replicates,
        budget,
        seed: config.seed,
        curves,
    })
}

/// Standard error of a difference of two proportions over `n` replicates
/// each, pooling the proportions.
pub fn pooled_stderr(a: f64, b: f64, n: usize) -> f64 {
    let p = (a + b) / 2.0;
    (2.0 * p * (1.0 - p) / n as f64).sqrt()
}

/// Higher policy beats lower by at least `z` pooled standard errors.
pub fn gap_check(report: &AccuracyReport, k: usize, high: EconCriterion, low: &[EconCriterion], z: f64) -> Option<OrdinalCheck> {
    let a = report.at(high, k)?;
    let (low_policy, b) = low
        .iter()
        .filter_map(|&p| report.at(p, k).map(|v| (p, v)))
        .max_by(|x, y| x.1.total_cmp(&y.1))?;
    let se = pooled_stderr(a, b, report.replicates);
    let gap = a - b;
    let lows: Vec<&str> = low.iter().map(|p| p.name()).collect();
    Some(OrdinalCheck {
        name: format!("{} > {} at k={k}", high.name(), lows.join("|")),
        pass: gap > 0.0 && gap >= z * se,
        detail: format!(
            "{}={a:.4} {}={b:.4} gap={gap:.4} pooled_se={se:.4} needed={:.4}",
            high.name(),
            low_policy.name(),
            z * se
        ),
    })
}

/// Ordinal claims for the scenario at `k = budget`, 3 standard errors.
pub fn ordering_checks(report: &AccuracyReport) -> Vec<OrdinalCheck> {
    use EconCriterion::*;
    let k = report.budget;
    let claims: Vec<(EconCriterion, Vec<EconCriterion>)> = match report.scenario {
        Scenario::FixedParams => vec![(Effecxtive, vec![InfoGain]), (InfoGain, vec![Random]), (Random, vec![Us, Vs])],
        Scenario::ParamGrid => vec![(Effecxtive, vec![Random]), (InfoGain, vec![Random])],
        _ => Vec::new(),
    };
    claims
        .into_iter()
        .filter_map(|(high, low)| gap_check(report, k, high, &low, 3.0))
        .collect()
}

pub const REFERENCE_POLICY: &str = "reference";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub family: String,
    pub size: usize,
    pub policy: String,
    pub expected_cost: f64,
    pub opt: Option<f64>,
    pub ratio: Option<f64>,
    #[serde(skip_serializing_if = "String::is_empty", default)]
    pub note: String,
}

fn family_name(scenario: Scenario) -> &'static str {
    match scenario {
        Scenario::GbsBad => "gbs_bad",
        Scenario::PosteriorBad => "posterior_bad",
        Scenario::RandomEcd => "random_ecd",
        Scenario::FixedParams => "fixed_params",
        Scenario::ParamGrid => "param_grid",
    }
}

fn policy_cost(policy: &str, instance: &EcdInstance, reference: Option<&[usize]>, seed: u64) -> Result<f64> {
    if policy == REFERENCE_POLICY {
        let tests = reference
            .ok_or_else(|| EcdError::InvalidConfig("the reference policy exists only for posterior_bad".into()))?;
        return sequence_expected_cost(instance, tests, Mode::Ecd);
    }
    let spec = PolicySpec::new(policy.parse()?, Mode::Ecd).with_seed(seed);
    expected_cost(&spec, instance)
}

/// Random-instance shape for `random_ecd` at size `n`.
pub fn random_ecd_params(n: usize) -> RandomEcdParams {
    let m = (usize::BITS - (n.max(2) - 1).leading_zeros()) as usize + 2;
    RandomEcdParams { n, m, outcomes: 2, classes: n.clamp(2, 3), dyadic: true }
}

/// Expected cost of each policy on each family size, with the optimum when
/// the oracle can compute it.
pub fn cost_ratio_report(config: &SimConfig) -> Result<Vec<RatioRow>> {
    config.validate()?;
    let policies = config.ecd_policies()?;
    let family = family_name(config.scenario);
    let mut rows = Vec::new();
    for &size in &config.sizes {
        let instances: Vec<(EcdInstance, Option<Vec<usize>>)> = match config.scenario {
            Scenario::GbsBad => vec![(gen_gbs_bad(size)?, None)],
            Scenario::PosteriorBad => {
                let params = PosteriorBadParams { q: size as u32, dummy_count: 0 };
                let reference = std::iter::once(params.value_test())
                    .chain((1..=params.q).map(|k| params.bit_test(k)))
                    .collect();
                vec![(params.generate()?, Some(reference))]
            }
            Scenario::RandomEcd => {
                let mut rng = substream(config.seed, size as u64, TRUTH_STREAM);
                (0..config.replicates)
                    .map(|_| gen_random_ecd(random_ecd_params(size), &mut rng).map(|i| (i, None)))
                    .collect::<Result<_>>()?
            }
            _ => {
                return Err(EcdError::InvalidConfig(format!("{family} has no cost-ratio table")));
            }
        };
        let mut opt_total = Some(0.0);
        let mut note = String::new();
        for (inst, _) in &instances {
            match optimal_expected_cost(inst, Mode::Ecd) {
                Ok(opt) => opt_total = opt_total.map(|t| t + opt.cost),
                Err(EcdError::OracleTooLarge(msg)) => {
                    opt_total = None;
                    note = format!("optimum omitted: {msg}");
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        let count = instances.len() as f64;
        let opt = opt_total.map(|t| t / count);
        for policy in &policies {
            let mut total = 0.0;
            for (inst, reference) in &instances {
                total += policy_cost(policy, inst, reference.as_deref(), config.seed)?;
            }
            let expected_cost = total / count;
            rows.push(RatioRow {
                family: family.to_string(),
                size,
                policy: policy.clone(),
                expected_cost,
                opt,
                ratio: opt.filter(|&o| o > 0.0).map(|o| expected_cost / o),
                note: note.clone(),
            });
        }
    }
    Ok(rows)
}

pub fn ratios_csv(rows: &[RatioRow]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from("family,size,policy,expected_cost,opt,ratio,note\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.family,
            r.size,
            r.policy,
            r.expected_cost,
            opt(r.opt),
            opt(r.ratio),
            r.note.replace(',', ";")
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: Scenario,
    pub replicates: usize,
    pub budget: usize,
    pub seed: u64,
    /// Accuracy at `k = budget` per policy (accuracy scenarios).
    pub final_accuracy: BTreeMap<String, f64>,
    pub checks: Vec<OrdinalCheck>,
    pub ratios: Vec<RatioRow>,
    pub pass: bool,
}

/// Runs the configured scenario and writes `curves.csv` or `ratios.csv`
/// plus `summary.json` into `out_dir`.
pub fn run(config: &SimConfig, out_dir: &Path) -> Result<RunSummary> {
    std::fs::create_dir_all(out_dir)?;
    let mut summary = RunSummary {
        scenario: config.scenario,
        replicates: config.replicates,
        budget: config.budget,
        seed: config.seed,
        final_accuracy: BTreeMap::new(),
        checks: Vec::new(),
        ratios: Vec::new(),
        pass: true,
    };
    if config.scenario.is_econ() {
        let report = simulate(config)?;
        std::fs::write(out_dir.join("curves.csv"), report.to_csv())?;
        for curve in &report.curves {
            summary
                .final_accuracy
                .insert(curve.policy.clone(), curve.accuracy.last().copied().unwrap_or(0.0));
        }
        if config.assert_ordering {
            summary.checks = ordering_checks(&report);
            summary.pass = summary.checks.iter().all(|c| c.pass);
        }
    } else {
        let rows = cost_ratio_report(config)?;
        std::fs::write(out_dir.join("ratios.csv"), ratios_csv(&rows))?;
        summary.ratios = rows;
    }
    std::fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(scenario: Scenario, replicates: usize) -> SimConfig {
        SimConfig { replicates, budget: 5, seed: 7, ..SimConfig::new(scenario) }
    }

    #[test]
    fn config_defaults() {
        let config: SimConfig = serde_json::from_str(r#"{"scenario": "fixed_params"}"#).unwrap();
        assert_eq!(config.replicates, 1000);
        assert_eq!(config.budget, 30);
        assert_eq!(config.econ_policies().unwrap().len(), 5);
        let bad = SimConfig { budget: 0, ..config.clone() };
        assert!(bad.validate().is_err());
        assert!(serde_json::from_str::<SimConfig>(r#"{"scenario": "fixed_params", "bogus": 1}"#).is_err());
    }

    #[test]
    fn subjects_share_answers_across_policies() {
        let model = ChoiceModel::new(EconConfig::default()).unwrap();
        let a = Subject::sample(&model, 3, 11);
        let b = Subject::sample(&model, 3, 11);
        assert_eq!(a.point, b.point);
        for t in [0, 100, 2000] {
            assert_eq!(a.answer(&model, t), b.answer(&model, t));
        }
    }

    #[test]
    fn simulate_is_deterministic() {
        let config = small(Scenario::FixedParams, 20);
        let a = simulate(&config).unwrap();
        let b = simulate(&config).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.to_csv().lines().count(), 1 + 5 * 5);
        for curve in &a.curves {
            assert!(curve.accuracy.iter().all(|x| (0.0..=1.0).contains(x)));
            assert!(curve.stderr.iter().all(|x| *x >= 0.0));
        }
    }

    #[test]
    fn pooled_stderr_examples() {
        assert_eq!(pooled_stderr(1.0, 1.0, 100), 0.0);
        assert!((pooled_stderr(0.6, 0.4, 100) - (2.0 * 0.25 / 100.0f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn gbs_bad_ratios() {
        let config = SimConfig {
            sizes: vec![10, 50, 100],
            policies: vec!["gbs".into(), "ec2".into()],
            ..SimConfig::new(Scenario::GbsBad)
        };
        let rows = cost_ratio_report(&config).unwrap();
        for row in &rows {
            let n = row.size as f64;
            let expect = if row.policy == "gbs" { (n - 1.0) * (n + 2.0) / (2.0 * n) } else { 1.0 };
            assert!((row.expected_cost - expect).abs() < 1e-9, "{row:?}");
            if row.size <= 10 {
                assert!((row.ratio.unwrap() - expect).abs() < 1e-9);
            } else {
                assert!(row.opt.is_none() && !row.note.is_empty());
            }
        }
        assert_eq!(ratios_csv(&rows).lines().count(), 7);
    }

    #[test]
    fn posterior_bad_ratios() {
        let config = SimConfig {
            sizes: vec![2, 3],
            policies: vec!["ig_class".into(), REFERENCE_POLICY.into(), "ec2".into()],
            ..SimConfig::new(Scenario::PosteriorBad)
        };
        let rows = cost_ratio_report(&config).unwrap();
        for row in rows {
            let q = row.size as f64;
            let m = 2f64.powf(q);
            match row.policy.as_str() {
                "ig_class" => assert!((row.expected_cost - (m - 1.0) * (m + 2.0) / (2.0 * m)).abs() < 1e-9),
                "reference" => assert!((row.expected_cost - (q + 1.0)).abs() < 1e-9),
                _ => assert!(row.ratio.unwrap() <= 2.0 * (4.0 * m).ln() + 1.0),
            }
        }
    }

    #[test]
    fn run_writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let config = SimConfig { assert_ordering: true, ..small(Scenario::FixedParams, 10) };
        let summary = run(&config, dir.path()).unwrap();
        assert_eq!(summary.final_accuracy.len(), 5);
        assert_eq!(summary.checks.len(), 3);
        assert!(dir.path().join("curves.csv").exists());
        assert!(dir.path().join("summary.json").exists());
        let ratio_config = SimConfig { sizes: vec![4], replicates: 3, ..SimConfig::new(Scenario::RandomEcd) };
        let summary = run(&ratio_config, dir.path()).unwrap();
        assert!(summary.pass);
        assert!(dir.path().join("ratios.csv").exists());
    }
}
