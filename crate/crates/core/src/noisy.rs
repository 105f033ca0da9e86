//! Noisy observation models and their reduction to class determination.
//!
//! A model lists, for each hypothesis `h`, a finite noise support with
//! conditional masses `P(θ | h)` and the full outcome vector `x_T(h, θ)`
//! observed at that point. Every outcome vector becomes one deterministic
//! hypothesis of the reduced instance; the classes say what must be learned
//! about it.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{EcdError, Result};
use crate::instance::EcdInstance;
use crate::prior::Prior;

/// One support point of the noise variable for a given hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePoint {
    /// `P(θ | h)`.
    pub weight: f64,
    pub outcomes: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyHypothesis {
    pub id: String,
    pub prior: f64,
    pub noise: Vec<NoisePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyModel {
    pub hypotheses: Vec<NoisyHypothesis>,
    pub test_ids: Vec<String>,
    pub costs: Vec<f64>,
    /// Decision labels. Empty means one decision per hypothesis.
    #[serde(default)]
    pub decisions: Vec<String>,
    /// `loss[d][h]`. `None` means 0–1 loss on hypotheses.
    #[serde(default)]
    pub loss: Option<Vec<Vec<f64>>>,
}

/// What the reduced classes group together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReductionMode {
    /// One class per original hypothesis; requires identifiability.
    Hypothesis,
    /// One class per risk-minimizing decision.
    Decision,
}

/// A reduced instance plus the provenance of each reduced hypothesis.
#[derive(Debug, Clone)]
pub struct Reduction {
    pub instance: EcdInstance,
    /// `(h, θ)` support points merged into each reduced hypothesis.
    pub sources: Vec<Vec<(usize, usize)>>,
    /// Decision index behind each class (decision mode), or the original
    /// hypothesis index (hypothesis mode).
    pub class_labels: Vec<usize>,
}

impl NoisyModel {
    fn validate(&self) -> Result<()> {
        let m = self.test_ids.len();
        let bad = |msg: String| Err(EcdError::InvalidModel(msg));
        if self.hypotheses.is_empty() {
            return bad("no hypotheses".into());
        }
        if self.costs.len() != m {
            return bad(format!("{} costs for {m} tests", self.costs.len()));
        }
        for (i, h) in self.hypotheses.iter().enumerate() {
            if !(h.prior.is_finite() && h.prior >= 0.0) {
                return bad(format!("hypothesis {i} has invalid prior {}", h.prior));
            }
            if h.noise.is_empty() {
                return bad(format!("hypothesis {i} has empty noise support"));
            }
            let total: f64 = h.noise.iter().map(|p| p.weight).sum();
            if (total - 1.0).abs() > 1e-9 {
                return bad(format!("noise masses of hypothesis {i} sum to {total}"));
            }
            for (j, point) in h.noise.iter().enumerate() {
                if !(point.weight.is_finite() && point.weight >= 0.0) {
                    return bad(format!("noise point ({i}, {j}) has invalid weight"));
                }
                if point.outcomes.len() != m {
                    return bad(format!(
                        "noise point ({i}, {j}) has {} outcomes for {m} tests",
                        point.outcomes.len()
                    ));
                }
            }
        }
        let total: f64 = self.hypotheses.iter().map(|h| h.prior).sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("hypothesis priors sum to {total}"));
        }
        let decisions = self.decision_count();
        if let Some(loss) = &self.loss {
            if loss.len() != decisions {
                return bad(format!("loss has {} rows for {decisions} decisions", loss.len()));
            }
            if let Some(d) = loss.iter().position(|row| row.len() != self.hypotheses.len()) {
                return bad(format!("loss row {d} has wrong length"));
            }
        } else if !self.decisions.is_empty() && self.decisions.len() != self.hypotheses.len() {
            return bad("0-1 loss needs one decision per hypothesis".into());
        }
        Ok(())
    }

    fn decision_count(&self) -> usize {
        if self.decisions.is_empty() {
            self.hypotheses.len()
        } else {
            self.decisions.len()
        }
    }

    fn loss(&self, d: usize, h: usize) -> f64 {
        match &self.loss {
            Some(table) => table[d][h],
            None => f64::from(u8::from(d != h)),
        }
    }

    pub fn decision_name(&self, d: usize) -> String {
        if self.decisions.is_empty() {
            self.hypotheses[d].id.clone()
        } else {
            self.decisions[d].clone()
        }
    }

    /// Support points `(h, θ)` with positive joint mass `P(h)·P(θ | h)`.
    fn support(&self) -> impl Iterator<Item = (usize, usize, f64, &[u32])> + '_ {
        self.hypotheses.iter().enumerate().flat_map(|(h, hyp)| {
            hyp.noise
                .iter()
                .enumerate()
                .map(move |(j, p)| (h, j, hyp.prior * p.weight, p.outcomes.as_slice()))
                .filter(|&(_, _, w, _)| w > 0.0)
        })
    }

    /// Reduces the model to a deterministic class-determination instance.
    pub fn reduce(&self, mode: ReductionMode) -> Result<Reduction> {
        self.validate()?;
        // group support points by outcome vector, in first-seen order
        let mut index: HashMap<&[u32], usize> = HashMap::new();
        let mut vectors: Vec<&[u32]> = Vec::new();
        let mut sources: Vec<Vec<(usize, usize)>> = Vec::new();
        let mut masses: Vec<f64> = Vec::new();
        // per vector, joint mass contributed by each original hypothesis
        let mut per_h: Vec<HashMap<usize, f64>> = Vec::new();
        for (h, j, w, x) in self.support() {
            let slot = *index.entry(x).or_insert_with(|| {
                vectors.push(x);
                sources.push(Vec::new());
                masses.push(0.0);
                per_h.push(HashMap::new());
                vectors.len() - 1
            });
            if mode == ReductionMode::Hypothesis {
                if let Some(&(h0, j0)) = sources[slot].iter().find(|&&(h0, _)| h0 != h) {
                    return Err(EcdError::Identifiability {
                        h1: self.hypotheses[h0].id.clone(),
                        theta1: j0,
                        h2: self.hypotheses[h].id.clone(),
                        theta2: j,
                    });
                }
            }
            sources[slot].push((h, j));
            masses[slot] += w;
            *per_h[slot].entry(h).or_insert(0.0) += w;
        }

        let labels: Vec<usize> = match mode {
            ReductionMode::Hypothesis => sources.iter().map(|s| s[0].0).collect(),
            ReductionMode::Decision => per_h
                .iter()
                .zip(&masses)
                .map(|(joint, &mass)| self.best_decision(joint, mass))
                .collect(),
        };
        let mut class_labels: Vec<usize> = labels.clone();
        class_labels.sort_unstable();
        class_labels.dedup();
        let classes: Vec<Vec<usize>> = class_labels
            .iter()
            .map(|&c| (0..labels.len()).filter(|&r| labels[r] == c).collect())
            .collect();

        let ids = sources
            .iter()
            .map(|s| {
                let (h, j) = s[0];
                if s.len() == 1 {
                    format!("{}#{j}", self.hypotheses[h].id)
                } else {
                    format!("{}#{j}+{}", self.hypotheses[h].id, s.len() - 1)
                }
            })
            .collect();
        let instance = EcdInstance::new(
            ids,
            Prior::normalize(&masses)?,
            self.test_ids.clone(),
            self.costs.clone(),
            vectors.iter().map(|x| x.to_vec()).collect(),
            classes,
        )?;
        Ok(Reduction {
            instance,
            sources,
            class_labels,
        })
    }

    /// Risk-minimizing decision given the joint masses `P(h, x)` of one
    /// outcome vector; ties go to the lowest decision index.
    fn best_decision(&self, joint: &HashMap<usize, f64>, mass: f64) -> usize {
        let mut best = (0, f64::INFINITY);
        for d in 0..self.decision_count() {
            let risk = self.risk(d, joint, mass);
            if risk < best.1 {
                best = (d, risk);
            }
        }
        best.0
    }

    /// `E[ℓ(d, h) | x]` from the joint masses of one outcome vector.
    pub fn risk(&self, d: usize, joint: &HashMap<usize, f64>, mass: f64) -> f64 {
        let mut terms: Vec<(usize, f64)> = joint.iter().map(|(&h, &w)| (h, w)).collect();
        terms.sort_unstable_by_key(|&(h, _)| h);
        terms.iter().map(|&(h, w)| self.loss(d, h) * w / mass).sum()
    }

    /// Each hypothesis row of a binary instance gets one noisy copy per
    /// test, with that test's outcome flipped, each with mass `P(h)/m`.
    pub fn flip_one_test(base: &EcdInstance) -> Result<Self> {
        let m = base.n_tests();
        if m == 0 {
            return Err(EcdError::InvalidModel("flip construction needs at least one test".into()));
        }
        let mut hypotheses = Vec::with_capacity(base.n_hypotheses());
        for h in 0..base.n_hypotheses() {
            let row = base.outcome_row(h);
            if let Some(&y) = row.iter().find(|&&y| y > 1) {
                return Err(EcdError::InvalidModel(format!(
                    "flip construction needs binary outcomes, hypothesis {h} has {y}"
                )));
            }
            let noise = (0..m)
                .map(|t| {
                    let mut outcomes = row.clone();
                    outcomes[t] = 1 - outcomes[t];
                    NoisePoint {
                        weight: 1.0 / m as f64,
                        outcomes,
                    }
                })
                .collect();
            hypotheses.push(NoisyHypothesis {
                id: base.hypothesis_id(h).to_string(),
                prior: base.prior()[h],
                noise,
            });
        }
        Ok(Self {
            hypotheses,
            test_ids: base.test_ids().to_vec(),
            costs: base.costs().to_vec(),
            decisions: Vec::new(),
            loss: None,
        })
    }

    /// A model whose noise support is a single point per hypothesis.
    pub fn noiseless(base: &EcdInstance) -> Self {
        Self {
            hypotheses: (0..base.n_hypotheses())
                .map(|h| NoisyHypothesis {
                    id: base.hypothesis_id(h).to_string(),
                    prior: base.prior()[h],
                    noise: vec![NoisePoint {
                        weight: 1.0,
                        outcomes: base.outcome_row(h),
                    }],
                })
                .collect(),
            test_ids: base.test_ids().to_vec(),
            costs: base.costs().to_vec(),
            decisions: Vec::new(),
            loss: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversarial::gen_gbs_bad;

    fn two_by_two() -> NoisyModel {
        let point = |w: f64, o: Vec<u32>| NoisePoint { weight: w, outcomes: o };
        NoisyModel {
            hypotheses: vec![
                NoisyHypothesis {
                    id: "a".into(),
                    prior: 0.5,
                    noise: vec![point(0.5, vec![0, 0]), point(0.5, vec![0, 1])],
                },
                NoisyHypothesis {
                    id: "b".into(),
                    prior: 0.5,
                    noise: vec![point(0.5, vec![1, 0]), point(0.5, vec![1, 1])],
                },
            ],
            test_ids: vec!["x".into(), "y".into()],
            costs: vec![1.0, 1.0],
            decisions: vec![],
            loss: None,
        }
    }

    #[test]
    fn noiseless_reduction_is_identity() {
        let base = gen_gbs_bad(5).unwrap();
        let red = NoisyModel::noiseless(&base).reduce(ReductionMode::Hypothesis).unwrap();
        assert_eq!(red.instance.n_hypotheses(), 5);
        assert_eq!(red.instance.n_classes(), 5);
        for h in 0..5 {
            assert_eq!(red.instance.outcome_row(h), base.outcome_row(h));
            assert!((red.instance.prior()[h] - base.prior()[h]).abs() < 1e-15);
        }
    }

    #[test]
    fn counting_example() {
        let red = two_by_two().reduce(ReductionMode::Hypothesis).unwrap();
        assert_eq!(red.instance.n_hypotheses(), 4);
        assert!(red.instance.prior().weights().iter().all(|&p| (p - 0.25).abs() < 1e-15));
        assert_eq!(red.instance.classes(), &[vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn identifiability_violation_names_pair() {
        let mut model = two_by_two();
        model.hypotheses[1].noise[0].outcomes = vec![0, 1];
        match model.reduce(ReductionMode::Hypothesis) {
            Err(EcdError::Identifiability { h1, theta1, h2, theta2 }) => {
                assert_eq!((h1.as_str(), theta1, h2.as_str(), theta2), ("a", 1, "b", 0));
            }
            other => panic!("unexpected {other:?}"),
        }
        // decision mode merges the shared vector instead
        let red = model.reduce(ReductionMode::Decision).unwrap();
        assert_eq!(red.instance.n_hypotheses(), 3);
        let total: f64 = red.instance.prior().weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn decision_mode_ties_go_to_lowest_index() {
        let mut model = two_by_two();
        model.hypotheses[1].noise[0].outcomes = vec![0, 1];
        let red = model.reduce(ReductionMode::Decision).unwrap();
        // the shared vector [0, 1] has equal mass from a and b
        let shared = red.sources.iter().position(|s| s.len() == 2).unwrap();
        let class = red.instance.class_of(shared);
        assert_eq!(red.class_labels[class], 0);
    }

    #[test]
    fn flip_copies_carry_split_mass() {
        let base = gen_gbs_bad(4).unwrap();
        let model = NoisyModel::flip_one_test(&base).unwrap();
        for h in &model.hypotheses {
            assert_eq!(h.noise.len(), 4);
        }
    }

    #[test]
    fn rejects_malformed_models() {
        let mut model = two_by_two();
        model.hypotheses[0].prior = 0.7;
        assert!(model.reduce(ReductionMode::Decision).is_err());
        let mut model = two_by_two();
        model.hypotheses[0].noise[0].outcomes.pop();
        assert!(model.reduce(ReductionMode::Decision).is_err());
        let mut model = two_by_two();
        model.loss = Some(vec![vec![0.0, 1.0]]);
        assert!(model.reduce(ReductionMode::Decision).is_err());
    }
}
