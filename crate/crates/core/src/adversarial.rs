//! Hard instance families.
//!
//! * `gbs-bad`: a uniform prior over `n` hypotheses where test `t` fires only
//!   for hypothesis `t`, with the last hypothesis alone in its class. One
//!   test settles the class; mass-reduction greedy walks the tests in order.
//! * `posterior-bad`: `2^q` two-member classes. A value test plus `q` bit
//!   tests give a binary search of cost `q + 1`, but none of them changes the
//!   class posterior until the value test has run, so any greedy rule driven
//!   only by class posteriors falls back on one-class-at-a-time search.
//!
//! [`gen_random_ecd`] draws small random instances with dyadic priors for
//! the property and bound checks.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EcdError, Result};
use crate::instance::EcdInstance;
use crate::prior::Prior;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GbsBadParams {
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PosteriorBadParams {
    pub q: u32,
    pub dummy_count: usize,
}

pub fn gen_gbs_bad(n: usize) -> Result<EcdInstance> {
    GbsBadParams { n }.generate()
}

pub fn gen_posterior_bad(q: u32, dummy_count: usize) -> Result<EcdInstance> {
    PosteriorBadParams { q, dummy_count }.generate()
}

impl GbsBadParams {
    pub fn generate(&self) -> Result<EcdInstance> {
        let n = self.n;
        if n < 2 {
            return Err(EcdError::InvalidConfig(format!("gbs-bad needs n >= 2, got {n}")));
        }
        let rows = (0..n)
            .map(|h| (0..n).map(|t| u32::from(h == t)).collect())
            .collect();
        EcdInstance::new(
            (1..=n).map(|i| format!("h{i}")).collect(),
            Prior::uniform(n)?,
            (1..=n).map(|i| format!("t{i}")).collect(),
            vec![1.0; n],
            rows,
            vec![(0..n - 1).collect(), vec![n - 1]],
        )
    }
}

impl PosteriorBadParams {
    /// Number of classes, `2^q`.
    pub fn class_count(&self) -> usize {
        1usize << self.q
    }

    /// Index of the value test `t_0`.
    pub fn value_test(&self) -> usize {
        0
    }

    /// Index of bit test `t_k`, `1 <= k <= q`.
    pub fn bit_test(&self, k: u32) -> usize {
        k as usize
    }

    /// Index of sequential test `t^seq_k`, `1 <= k <= 2^q`.
    pub fn seq_test(&self, k: usize) -> usize {
        self.q as usize + k
    }

    /// Hypothesis index of `h_{a,v}` (class index `a` counts from 1).
    pub fn hypothesis(&self, a: usize, v: u32) -> usize {
        2 * (a - 1) + v as usize
    }

    pub fn generate(&self) -> Result<EcdInstance> {
        let q = self.q;
        if q < 1 {
            return Err(EcdError::InvalidConfig("posterior-bad needs q >= 1".into()));
        }
        if q > 16 {
            return Err(EcdError::InvalidConfig(format!("posterior-bad q = {q} is too large")));
        }
        let classes = self.class_count();
        let mut ids = Vec::with_capacity(2 * classes);
        let mut rows = Vec::with_capacity(2 * classes);
        let mut blocks = Vec::with_capacity(classes);
        for a in 1..=classes {
            blocks.push(vec![2 * (a - 1), 2 * (a - 1) + 1]);
            for v in 0..=1u32 {
                ids.push(format!("h{a}_{v}"));
                let mut row = Vec::with_capacity(1 + q as usize + classes + self.dummy_count);
                row.push(v);
                for k in 1..=q {
                    // bit k of (a - 1), least significant first
                    let bit = ((a - 1) >> (k - 1)) as u32 & 1;
                    row.push(u32::from(bit == v));
                }
                for k in 1..=classes {
                    row.push(u32::from(a == k));
                }
                row.extend(std::iter::repeat_n(0, self.dummy_count));
                rows.push(row);
            }
        }
        let mut tests = vec!["t0".to_string()];
        tests.extend((1..=q).map(|k| format!("t{k}")));
        tests.extend((1..=classes).map(|k| format!("seq{k}")));
        tests.extend((1..=self.dummy_count).map(|k| format!("dumb{k}")));
        let m = tests.len();
        EcdInstance::new(ids, Prior::uniform(2 * classes)?, tests, vec![1.0; m], rows, blocks)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomEcdParams {
    pub n: usize,
    pub m: usize,
    /// Distinct outcome labels per test, drawn from `0..outcomes`.
    pub outcomes: u32,
    pub classes: usize,
    /// Prior masses are powers of two when set, uniform random otherwise.
    pub dyadic: bool,
}

/// Random unit-cost instance with distinct outcome rows. Classes are
/// assigned at random with every class nonempty.
pub fn gen_random_ecd<R: Rng + ?Sized>(params: RandomEcdParams, rng: &mut R) -> Result<EcdInstance> {
    let RandomEcdParams { n, m, outcomes, classes, dyadic } = params;
    if n == 0 || classes == 0 || classes > n || outcomes < 2 {
        return Err(EcdError::InvalidConfig(format!("bad random instance parameters {params:?}")));
    }
    if (m as f64) * f64::from(outcomes).log2() < (n as f64).log2() {
        return Err(EcdError::InvalidConfig(format!(
            "{m} tests with {outcomes} outcomes cannot separate {n} hypotheses"
        )));
    }
    let mut rows: Vec<Vec<u32>> = Vec::with_capacity(n);
    while rows.len() < n {
        let row: Vec<u32> = (0..m).map(|_| rng.gen_range(0..outcomes)).collect();
        if !rows.contains(&row) {
            rows.push(row);
        }
    }
    let weights = if dyadic {
        // split a random mass in half until there are n of them
        let mut w = vec![1.0f64];
        while w.len() < n {
            let i = rng.gen_range(0..w.len());
            w[i] /= 2.0;
            w.push(w[i]);
        }
        w.shuffle(rng);
        w
    } else {
        (0..n).map(|_| rng.gen_range(0.05..1.0)).collect()
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut blocks = vec![Vec::new(); classes];
    for (i, &h) in order.iter().enumerate() {
        let k = if i < classes { i } else { rng.gen_range(0..classes) };
        blocks[k].push(h);
    }
    for block in &mut blocks {
        block.sort_unstable();
    }
    EcdInstance::new(
        (1..=n).map(|i| format!("h{i}")).collect(),
        Prior::normalize(&weights)?,
        (1..=m).map(|i| format!("t{i}")).collect(),
        vec![1.0; m],
        rows,
        blocks,
    )
}
