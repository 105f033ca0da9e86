//! Problem representation: instances, partial realizations and version spaces.
//!
//! Hypotheses and tests are addressed by dense indices everywhere inside the
//! engine; string identifiers exist for files and reports only. Outcome
//! labels are arbitrary `u32` values and are mapped to dense codes so the
//! objective accumulators can use flat arrays.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{EcdError, Result};
use crate::prior::Prior;

/// Termination rule: identify the hypothesis, or only its class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Odt,
    Ecd,
}

impl FromStr for Mode {
    type Err = EcdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "odt" => Ok(Mode::Odt),
            "ecd" => Ok(Mode::Ecd),
            other => Err(EcdError::InvalidConfig(format!("unknown mode `{other}`"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Odt => "odt",
            Mode::Ecd => "ecd",
        })
    }
}

/// Hypotheses with a prior, tests with costs, a deterministic outcome table
/// and a partition of the hypotheses into classes.
#[derive(Debug, Clone, PartialEq)]
pub struct EcdInstance {
    hypothesis_ids: Vec<String>,
    prior: Prior,
    test_ids: Vec<String>,
    costs: Vec<f64>,
    /// Row-major `n × m` table of outcome codes.
    codes: Vec<u16>,
    labels: Vec<u32>,
    class_of: Vec<usize>,
    classes: Vec<Vec<usize>>,
}

impl EcdInstance {
    /// Builds and validates an instance.
    ///
    /// `outcomes[h][t]` is the label observed when test `t` runs under
    /// hypothesis `h`; `classes` lists hypothesis indices per block.
    pub fn new(
        hypothesis_ids: Vec<String>,
        prior: Prior,
        test_ids: Vec<String>,
        costs: Vec<f64>,
        outcomes: Vec<Vec<u32>>,
        classes: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let n = hypothesis_ids.len();
        let m = test_ids.len();
        let invalid = |msg: String| Err(EcdError::InvalidInstance(msg));

        if n == 0 {
            return invalid("instance has no hypotheses".into());
        }
        if prior.len() != n {
            return invalid(format!(
                "prior has {} entries but there are {n} hypotheses",
                prior.len()
            ));
        }
        let total: f64 = prior.weights().iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return invalid(format!("prior sums to {total}, expected 1"));
        }
        if let Some(i) = prior.weights().iter().position(|&p| p < 0.0) {
            return invalid(format!("prior entry {i} is negative"));
        }
        check_unique(&hypothesis_ids, "hypothesis")?;
        check_unique(&test_ids, "test")?;
        if costs.len() != m {
            return invalid(format!("{} costs given for {m} tests", costs.len()));
        }
        if let Some(t) = costs.iter().position(|&c| !(c.is_finite() && c > 0.0)) {
            return invalid(format!("test {t} has non-positive cost {}", costs[t]));
        }
        if outcomes.len() != n {
            return invalid(format!("outcome table has {} rows for {n} hypotheses", outcomes.len()));
        }
        if let Some(h) = outcomes.iter().position(|row| row.len() != m) {
            return invalid(format!(
                "outcome row {h} has {} entries, expected {m}",
                outcomes[h].len()
            ));
        }

        let mut first_row: HashMap<&[u32], usize> = HashMap::with_capacity(n);
        for (h, row) in outcomes.iter().enumerate() {
            if let Some(&prev) = first_row.get(row.as_slice()) {
                return invalid(format!("hypotheses {prev} and {h} have identical outcome rows"));
            }
            first_row.insert(row, h);
        }

        let mut class_of = vec![usize::MAX; n];
        for (k, block) in classes.iter().enumerate() {
            if block.is_empty() {
                return invalid(format!("class {k} is empty"));
            }
            for &h in block {
                if h >= n {
                    return invalid(format!("class {k} references unknown hypothesis {h}"));
                }
                if class_of[h] != usize::MAX {
                    return invalid(format!(
                        "hypothesis {h} appears in classes {} and {k}",
                        class_of[h]
                    ));
                }
                class_of[h] = k;
            }
        }
        if let Some(h) = class_of.iter().position(|&k| k == usize::MAX) {
            return invalid(format!("hypothesis {h} is not covered by any class"));
        }

        let mut labels: Vec<u32> = outcomes.iter().flatten().copied().collect();
        labels.sort_unstable();
        labels.dedup();
        if labels.len() > u16::MAX as usize {
            return invalid("too many distinct outcome labels".into());
        }
        let code_of: HashMap<u32, u16> = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| (l, i as u16))
            .collect();
        let codes = outcomes
            .iter()
            .flat_map(|row| row.iter().map(|l| code_of[l]))
            .collect();

        Ok(Self {
            hypothesis_ids,
            prior,
            test_ids,
            costs,
            codes,
            labels,
            class_of,
            classes,
        })
    }

    pub fn n_hypotheses(&self) -> usize {
        self.hypothesis_ids.len()
    }

    pub fn n_tests(&self) -> usize {
        self.test_ids.len()
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// Number of distinct outcome labels across the whole table.
    pub fn n_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    pub fn cost(&self, test: usize) -> f64 {
        self.costs[test]
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn outcome(&self, hypothesis: usize, test: usize) -> u32 {
        self.labels[self.code(hypothesis, test)]
    }

    /// Dense code of the outcome label, in `0..n_labels()`.
    #[inline]
    pub fn code(&self, hypothesis: usize, test: usize) -> usize {
        self.codes[hypothesis * self.test_ids.len() + test] as usize
    }

    pub fn label(&self, code: usize) -> u32 {
        self.labels[code]
    }

    pub fn code_of_label(&self, label: u32) -> Option<usize> {
        self.labels.binary_search(&label).ok()
    }

    pub fn outcome_row(&self, hypothesis: usize) -> Vec<u32> {
        (0..self.n_tests()).map(|t| self.outcome(hypothesis, t)).collect()
    }

    #[inline]
    pub fn class_of(&self, hypothesis: usize) -> usize {
        self.class_of[hypothesis]
    }

    pub fn classes(&self) -> &[Vec<usize>] {
        &self.classes
    }

    pub fn hypothesis_id(&self, hypothesis: usize) -> &str {
        &self.hypothesis_ids[hypothesis]
    }

    pub fn test_id(&self, test: usize) -> &str {
        &self.test_ids[test]
    }

    pub fn hypothesis_ids(&self) -> &[String] {
        &self.hypothesis_ids
    }

    pub fn test_ids(&self) -> &[String] {
        &self.test_ids
    }

    pub fn hypothesis_index(&self, id: &str) -> Result<usize> {
        self.hypothesis_ids
            .iter()
            .position(|h| h == id)
            .ok_or_else(|| EcdError::UnknownId(id.to_string()))
    }

    pub fn test_index(&self, id: &str) -> Result<usize> {
        self.test_ids
            .iter()
            .position(|t| t == id)
            .ok_or_else(|| EcdError::UnknownId(id.to_string()))
    }

    /// Class masses `P(H_i)` under the prior.
    pub fn class_masses(&self) -> Vec<f64> {
        let mut masses = vec![0.0; self.n_classes()];
        for (h, &p) in self.prior.weights().iter().enumerate() {
            masses[self.class_of[h]] += p;
        }
        masses
    }

    fn table(&self) -> Vec<Vec<u32>> {
        (0..self.n_hypotheses()).map(|h| self.outcome_row(h)).collect()
    }

    /// Same instance with every hypothesis in its own class, which turns the
    /// class-identification problem into plain hypothesis identification.
    pub fn with_singleton_classes(&self) -> Self {
        let mut out = self.clone();
        out.classes = (0..self.n_hypotheses()).map(|h| vec![h]).collect();
        out.class_of = (0..self.n_hypotheses()).collect();
        out
    }

    pub fn with_prior(&self, prior: Prior) -> Result<Self> {
        Self::new(
            self.hypothesis_ids.clone(),
            prior,
            self.test_ids.clone(),
            self.costs.clone(),
            self.table(),
            self.classes.clone(),
        )
    }

    pub fn with_costs(&self, costs: Vec<f64>) -> Result<Self> {
        Self::new(
            self.hypothesis_ids.clone(),
            self.prior.clone(),
            self.test_ids.clone(),
            costs,
            self.table(),
            self.classes.clone(),
        )
    }

    /// Instance restricted to a subset of tests, in the given order.
    pub fn with_tests(&self, tests: &[usize]) -> Result<Self> {
        let rows = (0..self.n_hypotheses())
            .map(|h| tests.iter().map(|&t| self.outcome(h, t)).collect())
            .collect();
        Self::new(
            self.hypothesis_ids.clone(),
            self.prior.clone(),
            tests.iter().map(|&t| self.test_ids[t].clone()).collect(),
            tests.iter().map(|&t| self.costs[t]).collect(),
            rows,
            self.classes.clone(),
        )
    }

    /// All hypotheses with positive prior mass.
    pub fn full_version_space(&self) -> VersionSpace {
        let members: Vec<usize> = (0..self.n_hypotheses())
            .filter(|&h| self.prior[h] > 0.0)
            .collect();
        VersionSpace::from_members(self, members)
    }

    /// Hypotheses whose outcome rows agree with every observation.
    pub fn version_space(&self, partial: &PartialRealization) -> Result<VersionSpace> {
        let mut checks = Vec::with_capacity(partial.len());
        for &(t, label) in partial.observations() {
            if t >= self.n_tests() {
                return Err(EcdError::UnknownTest(t));
            }
            match self.code_of_label(label) {
                Some(code) => checks.push((t, code)),
                None => return Err(EcdError::EmptyVersionSpace),
            }
        }
        let members: Vec<usize> = (0..self.n_hypotheses())
            .filter(|&h| self.prior[h] > 0.0 && checks.iter().all(|&(t, c)| self.code(h, t) == c))
            .collect();
        if members.is_empty() {
            return Err(EcdError::EmptyVersionSpace);
        }
        Ok(VersionSpace::from_members(self, members))
    }

    /// `P(h | x_A)` for every hypothesis.
    pub fn posterior(&self, partial: &PartialRealization) -> Result<Vec<f64>> {
        Ok(self.version_space(partial)?.posterior(self))
    }

    /// `P(H_i | x_A)` for every class.
    pub fn class_posterior(&self, partial: &PartialRealization) -> Result<Vec<f64>> {
        Ok(self.version_space(partial)?.class_posterior(self))
    }

    pub fn is_terminal(&self, partial: &PartialRealization, mode: Mode) -> Result<bool> {
        Ok(self.version_space(partial)?.is_terminal(self, mode))
    }

    pub fn from_file_repr(file: InstanceFile) -> Result<Self> {
        let weights: Vec<f64> = file.hypotheses.iter().map(|h| h.weight).collect();
        let prior = Prior::normalize(&weights)?;
        let ids: Vec<String> = file.hypotheses.into_iter().map(|h| h.id).collect();
        let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut classes = Vec::with_capacity(file.classes.len());
        for (k, block) in file.classes.iter().enumerate() {
            let mut members = Vec::with_capacity(block.len());
            for id in block {
                match index.get(id.as_str()) {
                    Some(&h) => members.push(h),
                    None => {
                        return Err(EcdError::InvalidInstance(format!(
                            "class {k} references unknown hypothesis `{id}`"
                        )))
                    }
                }
            }
            classes.push(members);
        }
        let (test_ids, costs) = file.tests.into_iter().map(|t| (t.id, t.cost)).unzip();
        Self::new(ids, prior, test_ids, costs, file.outcomes, classes)
    }

    pub fn to_file_repr(&self) -> InstanceFile {
        InstanceFile {
            hypotheses: self
                .hypothesis_ids
                .iter()
                .zip(self.prior.weights())
                .map(|(id, &weight)| HypothesisEntry { id: id.clone(), weight })
                .collect(),
            tests: self
                .test_ids
                .iter()
                .zip(&self.costs)
                .map(|(id, &cost)| TestEntry { id: id.clone(), cost })
                .collect(),
            outcomes: self.table(),
            classes: self
                .classes
                .iter()
                .map(|block| block.iter().map(|&h| self.hypothesis_ids[h].clone()).collect())
                .collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file_repr(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file_repr())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

fn check_unique(ids: &[String], what: &str) -> Result<()> {
    let mut seen: HashMap<&str, usize> = HashMap::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        if let Some(prev) = seen.insert(id.as_str(), i) {
            return Err(EcdError::InvalidInstance(format!(
                "{what} id `{id}` used at indices {prev} and {i}"
            )));
        }
    }
    Ok(())
}

/// On-disk instance document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub hypotheses: Vec<HypothesisEntry>,
    pub tests: Vec<TestEntry>,
    pub outcomes: Vec<Vec<u32>>,
    pub classes: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesisEntry {
    pub id: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestEntry {
    pub id: String,
    pub cost: f64,
}

/// Ordered `(test, outcome label)` observations; no test appears twice.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PartialRealization {
    observations: Vec<(usize, u32)>,
}

impl PartialRealization {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_observations(observations: impl IntoIterator<Item = (usize, u32)>) -> Result<Self> {
        let mut partial = Self::new();
        for (t, y) in observations {
            partial.observe(t, y)?;
        }
        Ok(partial)
    }

    pub fn observe(&mut self, test: usize, outcome: u32) -> Result<()> {
        if self.contains(test) {
            return Err(EcdError::RepeatedTest(test));
        }
        self.observations.push((test, outcome));
        Ok(())
    }

    pub fn with(&self, test: usize, outcome: u32) -> Result<Self> {
        let mut next = self.clone();
        next.observe(test, outcome)?;
        Ok(next)
    }

    pub fn contains(&self, test: usize) -> bool {
        self.observations.iter().any(|&(t, _)| t == test)
    }

    pub fn observations(&self) -> &[(usize, u32)] {
        &self.observations
    }

    pub fn tests(&self) -> impl Iterator<Item = usize> + '_ {
        self.observations.iter().map(|&(t, _)| t)
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// Hypotheses with positive posterior mass, with their total prior mass.
#[derive(Debug, Clone, PartialEq)]
pub struct VersionSpace {
    members: Vec<usize>,
    mass: f64,
}

impl VersionSpace {
    pub fn from_members(instance: &EcdInstance, members: Vec<usize>) -> Self {
        let mass = members.iter().map(|&h| instance.prior[h]).sum();
        Self { members, mass }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, hypothesis: usize) -> bool {
        self.members.contains(&hypothesis)
    }

    /// Members agreeing with outcome code `code` at `test`; may be empty.
    pub fn restrict(&self, instance: &EcdInstance, test: usize, code: usize) -> Self {
        let members = self
            .members
            .iter()
            .copied()
            .filter(|&h| instance.code(h, test) == code)
            .collect();
        Self::from_members(instance, members)
    }

    /// Nonempty cells of the split induced by `test`, keyed by outcome code
    /// in ascending order.
    pub fn split(&self, instance: &EcdInstance, test: usize) -> Vec<(usize, VersionSpace)> {
        let mut cells: Vec<Vec<usize>> = vec![Vec::new(); instance.n_labels()];
        for &h in &self.members {
            cells[instance.code(h, test)].push(h);
        }
        cells
            .into_iter()
            .enumerate()
            .filter(|(_, c)| !c.is_empty())
            .map(|(code, c)| (code, Self::from_members(instance, c)))
            .collect()
    }

    pub fn posterior(&self, instance: &EcdInstance) -> Vec<f64> {
        let mut out = vec![0.0; instance.n_hypotheses()];
        for &h in &self.members {
            out[h] = instance.prior[h] / self.mass;
        }
        out
    }

    pub fn class_masses(&self, instance: &EcdInstance) -> Vec<f64> {
        let mut masses = vec![0.0; instance.n_classes()];
        for &h in &self.members {
            masses[instance.class_of(h)] += instance.prior[h];
        }
        masses
    }

    pub fn class_posterior(&self, instance: &EcdInstance) -> Vec<f64> {
        self.class_masses(instance)
            .into_iter()
            .map(|m| m / self.mass)
            .collect()
    }

    pub fn is_terminal(&self, instance: &EcdInstance, mode: Mode) -> bool {
        match mode {
            Mode::Odt => self.members.len() <= 1,
            Mode::Ecd => match self.members.split_first() {
                None => true,
                Some((&first, rest)) => {
                    let k = instance.class_of(first);
                    rest.iter().all(|&h| instance.class_of(h) == k)
                }
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversarial::gen_gbs_bad;

    fn assert_vec_close(a: &[f64], b: &[f64]) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-12, "{a:?} vs {b:?}");
        }
    }

    fn obs(pairs: &[(usize, u32)]) -> PartialRealization {
        PartialRealization::from_observations(pairs.iter().copied()).unwrap()
    }

    #[test]
    fn version_space_examples() {
        let inst = gen_gbs_bad(4).unwrap();
        let vs = inst.version_space(&PartialRealization::new()).unwrap();
        assert_eq!(vs.members(), &[0, 1, 2, 3]);
        assert!((vs.mass() - 1.0).abs() < 1e-12);

        let vs = inst.version_space(&obs(&[(0, 1)])).unwrap();
        assert_eq!(vs.members(), &[0]);
        assert!((vs.mass() - 0.25).abs() < 1e-12);

        let vs = inst.version_space(&obs(&[(0, 0)])).unwrap();
        assert_eq!(vs.members(), &[1, 2, 3]);
        assert!((vs.mass() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn inconsistent_partial_is_rejected() {
        let inst = gen_gbs_bad(4).unwrap();
        assert!(matches!(
            inst.version_space(&obs(&[(0, 1), (1, 1)])),
            Err(EcdError::EmptyVersionSpace)
        ));
        assert!(matches!(
            inst.version_space(&obs(&[(0, 7)])),
            Err(EcdError::EmptyVersionSpace)
        ));
        assert!(matches!(
            inst.version_space(&obs(&[(9, 0)])),
            Err(EcdError::UnknownTest(9))
        ));
    }

    #[test]
    fn repeated_test_is_rejected() {
        let mut p = obs(&[(0, 0)]);
        assert!(matches!(p.observe(0, 1), Err(EcdError::RepeatedTest(0))));
    }

    #[test]
    fn posterior_examples() {
        let inst = gen_gbs_bad(4).unwrap();
        assert_vec_close(&inst.posterior(&PartialRealization::new()).unwrap(), &[0.25; 4]);
        assert_vec_close(
            &inst.posterior(&obs(&[(0, 0)])).unwrap(),
            &[0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        );
        let skewed = inst
            .with_prior(Prior::normalize(&[0.4, 0.3, 0.2, 0.1]).unwrap())
            .unwrap();
        assert_vec_close(
            &skewed.posterior(&obs(&[(0, 0)])).unwrap(),
            &[0.0, 0.5, 1.0 / 3.0, 1.0 / 6.0],
        );
    }

    #[test]
    fn class_posterior_examples() {
        let inst = gen_gbs_bad(4).unwrap();
        assert_vec_close(&inst.class_posterior(&PartialRealization::new()).unwrap(), &[0.75, 0.25]);
        assert_vec_close(&inst.class_posterior(&obs(&[(3, 0)])).unwrap(), &[1.0, 0.0]);
        assert_vec_close(&inst.class_posterior(&obs(&[(3, 1)])).unwrap(), &[0.0, 1.0]);
    }

    #[test]
    fn terminal_examples() {
        let inst = gen_gbs_bad(4).unwrap();
        let p = obs(&[(3, 0)]);
        assert!(inst.is_terminal(&p, Mode::Ecd).unwrap());
        assert!(!inst.is_terminal(&p, Mode::Odt).unwrap());
        let single = obs(&[(1, 1)]);
        assert!(inst.is_terminal(&single, Mode::Ecd).unwrap());
        assert!(inst.is_terminal(&single, Mode::Odt).unwrap());
        assert!(!inst.is_terminal(&PartialRealization::new(), Mode::Ecd).unwrap());
    }

    fn tiny() -> InstanceFile {
        InstanceFile {
            hypotheses: vec![
                HypothesisEntry { id: "a".into(), weight: 1.0 },
                HypothesisEntry { id: "b".into(), weight: 3.0 },
            ],
            tests: vec![TestEntry { id: "t".into(), cost: 2.0 }],
            outcomes: vec![vec![1], vec![2]],
            classes: vec![vec!["a".into()], vec!["b".into()]],
        }
    }

    #[test]
    fn loader_normalizes_and_roundtrips() {
        let inst = EcdInstance::from_file_repr(tiny()).unwrap();
        assert_vec_close(inst.prior().weights(), &[0.25, 0.75]);
        let again = EcdInstance::from_json(&inst.to_json().unwrap()).unwrap();
        assert_eq!(inst, again);
    }

    #[test]
    fn loader_reports_violations() {
        let mut f = tiny();
        f.outcomes = vec![vec![1], vec![1]];
        let err = EcdInstance::from_file_repr(f).unwrap_err().to_string();
        assert!(err.contains("hypotheses 0 and 1"), "{err}");

        let mut f = tiny();
        f.tests[0].cost = 0.0;
        assert!(EcdInstance::from_file_repr(f).unwrap_err().to_string().contains("test 0"));

        let mut f = tiny();
        f.classes = vec![vec!["a".into(), "b".into()], vec!["b".into()]];
        let err = EcdInstance::from_file_repr(f).unwrap_err().to_string();
        assert!(err.contains("hypothesis 1 appears in classes 0 and 1"), "{err}");

        let mut f = tiny();
        f.classes = vec![vec!["a".into()]];
        assert!(EcdInstance::from_file_repr(f)
            .unwrap_err()
            .to_string()
            .contains("hypothesis 1 is not covered"));

        let mut f = tiny();
        f.hypotheses[0].weight = 0.0;
        f.hypotheses[1].weight = 0.0;
        assert!(matches!(EcdInstance::from_file_repr(f), Err(EcdError::DegeneratePrior)));

        let mut f = tiny();
        f.outcomes[1] = vec![2, 3];
        assert!(EcdInstance::from_file_repr(f)
            .unwrap_err()
            .to_string()
            .contains("outcome row 1"));
    }
}
