//! Choice under risk: lotteries over fixed payoffs, four utility theories,
//! softmax responses, the lottery-pair test pool and exact grid posteriors
//! over (theory, parameters).

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EcdError, Result};
use crate::objectives::{gini_gain, predictive_entropy, shannon_gain};
use crate::policy::{argmax_with_ties, TieBreak};

pub const PAYOFFS: [f64; 3] = [-10.0, 0.0, 10.0];

/// A distribution over [`PAYOFFS`], stored in hundredths so that grid
/// membership and sums are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Lottery {
    pub hundredths: [u32; 3],
}

impl Lottery {
    pub fn new(hundredths: [u32; 3]) -> Result<Self> {
        if hundredths.iter().sum::<u32>() != 100 {
            return Err(EcdError::Domain(format!("lottery {hundredths:?} does not sum to 100")));
        }
        Ok(Self { hundredths })
    }

    pub fn probs(&self) -> [f64; 3] {
        self.hundredths.map(|h| f64::from(h) / 100.0)
    }

    pub fn mean(&self) -> f64 {
        self.probs().iter().zip(PAYOFFS).map(|(p, l)| p * l).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Theory {
    Ev,
    Pt,
    Mvs,
    Crra,
}

impl Theory {
    pub const ALL: [Theory; 4] = [Theory::Ev, Theory::Pt, Theory::Mvs, Theory::Crra];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Theory::Ev => "EV",
            Theory::Pt => "PT",
            Theory::Mvs => "MVS",
            Theory::Crra => "CRRA",
        }
    }
}

impl fmt::Display for Theory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "theory", rename_all = "lowercase")]
pub enum TheoryPoint {
    Ev,
    Pt { rho: f64, lambda: f64, alpha: f64 },
    Mvs { w_mu: f64, w_sigma: f64, w_nu: f64 },
    Crra { a: f64 },
}

impl TheoryPoint {
    pub fn theory(&self) -> Theory {
        match self {
            TheoryPoint::Ev => Theory::Ev,
            TheoryPoint::Pt { .. } => Theory::Pt,
            TheoryPoint::Mvs { .. } => Theory::Mvs,
            TheoryPoint::Crra { .. } => Theory::Crra,
        }
    }
}

/// Prelec weighting `w(p) = exp(-(ln(1/p))^α)`.
pub fn prelec(p: f64, alpha: f64) -> f64 {
    (-(1.0 / p).ln().powf(alpha)).exp()
}

/// Utility of `lottery` under `point`. CRRA is evaluated on wealth
/// `w0 + ℓ`.
pub fn utility(point: &TheoryPoint, lottery: &Lottery, w0: f64) -> Result<f64> {
    let probs = lottery.probs();
    let outcomes = || probs.iter().copied().zip(PAYOFFS);
    Ok(match *point {
        TheoryPoint::Ev => lottery.mean(),
        TheoryPoint::Pt { rho, lambda, alpha } => outcomes()
            .filter(|&(p, _)| p > 0.0)
            .map(|(p, l)| {
                let value = if l >= 0.0 { l.powf(rho) } else { -lambda * (-l).powf(rho) };
                value * prelec(p, alpha)
            })
            .sum(),
        TheoryPoint::Mvs { w_mu, w_sigma, w_nu } => {
            let mu = lottery.mean();
            let sigma = outcomes().map(|(p, l)| p * (l - mu).powi(2)).sum::<f64>().sqrt();
            let nu = if sigma > 1e-12 {
                outcomes().map(|(p, l)| p * (l - mu).powi(3)).sum::<f64>() / sigma.powi(3)
            } else {
                0.0
            };
            w_mu * mu - w_sigma * sigma + w_nu * nu
        }
        TheoryPoint::Crra { a } => {
            let mut total = 0.0;
            for (p, l) in outcomes().filter(|&(p, _)| p > 0.0) {
                let wealth = w0 + l;
                if wealth <= 0.0 {
                    return Err(EcdError::Domain(format!(
                        "CRRA needs positive wealth, got {wealth} for payoff {l} at w0 = {w0}"
                    )));
                }
                total += p * if a == 1.0 { wealth.ln() } else { wealth.powf(1.0 - a) / (1.0 - a) };
            }
            total
        }
    })
}

/// Probability of choosing lottery 1, `1 / (1 + e^(u2 - u1))`.
pub fn response_likelihood(u1: f64, u2: f64) -> f64 {
    1.0 / (1.0 + (u2 - u1).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoolConfig {
    /// Admit zero probabilities; without them 0.01 and 0.99 never fit.
    pub admit_zero: bool,
    /// Present both orders of each pair as separate tests.
    pub ordered_pairs: bool,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self { admit_zero: true, ordered_pairs: false }
    }
}

/// Probability grid in hundredths: 0.01, 0.1, ..., 0.9, 0.99, and 0 if
/// admitted.
pub fn probability_grid(admit_zero: bool) -> Vec<u32> {
    let mut grid: Vec<u32> = (1..=9).map(|k| 10 * k).chain([1, 99]).collect();
    if admit_zero {
        grid.push(0);
    }
    grid.sort_unstable();
    grid
}

/// Every probability triple on the grid, in lexicographic order.
pub fn enumerate_lotteries(admit_zero: bool) -> Vec<Lottery> {
    let grid = probability_grid(admit_zero);
    let mut out = Vec::new();
    for &a in &grid {
        for &b in &grid {
            if a + b <= 100 && grid.contains(&(100 - a - b)) {
                out.push(Lottery { hundredths: [a, b, 100 - a - b] });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LotteryPair {
    pub first: Lottery,
    pub second: Lottery,
}

/// All non-identical pairs of grid lotteries in canonical order.
pub fn enumerate_tests(pool: PoolConfig) -> Vec<LotteryPair> {
    let lotteries = enumerate_lotteries(pool.admit_zero);
    let mut out = Vec::new();
    for (i, &first) in lotteries.iter().enumerate() {
        for (j, &second) in lotteries.iter().enumerate() {
            if i < j || (pool.ordered_pairs && i > j) {
                out.push(LotteryPair { first, second });
            }
        }
    }
    out
}

/// CSV export of a test pool: pair index followed by the six probabilities.
pub fn write_pool_csv<W: Write>(pool: &[LotteryPair], mut out: W) -> Result<()> {
    writeln!(out, "pair_index,l1_p1,l1_p2,l1_p3,l2_p1,l2_p2,l2_p3")?;
    for (i, pair) in pool.iter().enumerate() {
        let [a, b, c] = pair.first.probs();
        let [d, e, f] = pair.second.probs();
        writeln!(out, "{i},{a},{b},{c},{d},{e},{f}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PtParams {
    pub rho: f64,
    pub lambda: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MvsParams {
    pub w_mu: f64,
    pub w_sigma: f64,
    pub w_nu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrraParams {
    pub a: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CanonicalPoints {
    pub pt: PtParams,
    pub mvs: MvsParams,
    pub crra: CrraParams,
}

impl Default for CanonicalPoints {
    fn default() -> Self {
        Self {
            pt: PtParams { rho: 0.9, lambda: 2.2, alpha: 0.9 },
            mvs: MvsParams { w_mu: 0.8, w_sigma: 0.25, w_nu: 0.25 },
            crra: CrraParams { a: 1.0 },
        }
    }
}

/// `[low, high]` range for one parameter.
pub type Range = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParameterGrids {
    pub rho: Range,
    pub lambda: Range,
    pub alpha: Range,
    pub w_mu: Range,
    pub w_sigma: Range,
    pub w_nu: Range,
    pub a: Range,
    /// Evenly spaced values per parameter, endpoints included.
    pub values: usize,
}

impl Default for ParameterGrids {
    fn default() -> Self {
        Self {
            rho: [0.85, 0.95],
            lambda: [2.1, 2.3],
            alpha: [0.9, 1.0],
            w_mu: [0.8, 1.0],
            w_sigma: [0.2, 0.3],
            w_nu: [0.2, 0.3],
            a: [0.9, 1.0],
            values: 3,
        }
    }
}

impl ParameterGrids {
    fn axis(&self, range: Range) -> Vec<f64> {
        let [lo, hi] = range;
        if self.values == 1 {
            return vec![lo];
        }
        let last = (self.values - 1) as f64;
        (0..self.values)
            // snap to 12 decimals so decimal endpoints give decimal midpoints
            .map(|i| ((lo * (last - i as f64) + hi * i as f64) / last * 1e12).round() / 1e12)
            .collect()
    }

    pub fn points(&self) -> Vec<TheoryPoint> {
        let mut out = vec![TheoryPoint::Ev];
        for &rho in &self.axis(self.rho) {
            for &lambda in &self.axis(self.lambda) {
                for &alpha in &self.axis(self.alpha) {
                    out.push(TheoryPoint::Pt { rho, lambda, alpha });
                }
            }
        }
        for &w_mu in &self.axis(self.w_mu) {
            for &w_sigma in &self.axis(self.w_sigma) {
                for &w_nu in &self.axis(self.w_nu) {
                    out.push(TheoryPoint::Mvs { w_mu, w_sigma, w_nu });
                }
            }
        }
        for &a in &self.axis(self.a) {
            out.push(TheoryPoint::Crra { a });
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    /// One point per theory at the canonical parameters.
    Canonical,
    /// The full parameter grid.
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorChoice {
    UniformOverTheories,
    UniformOverPoints,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EconConfig {
    pub support: Support,
    pub prior: PriorChoice,
    /// Wealth added to every payoff before CRRA utility.
    pub w0: f64,
    pub canonical: CanonicalPoints,
    pub grids: ParameterGrids,
    pub pool: PoolConfig,
}

impl Default for EconConfig {
    fn default() -> Self {
        Self {
            support: Support::Canonical,
            prior: PriorChoice::UniformOverTheories,
            w0: 20.0,
            canonical: CanonicalPoints::default(),
            grids: ParameterGrids::default(),
            pool: PoolConfig::default(),
        }
    }
}

impl EconConfig {
    pub fn grid() -> Self {
        Self { support: Support::Grid, ..Self::default() }
    }

    pub fn points(&self) -> Vec<TheoryPoint> {
        match self.support {
            Support::Canonical => {
                let CanonicalPoints { pt, mvs, crra } = self.canonical;
                vec![
                    TheoryPoint::Ev,
                    TheoryPoint::Pt { rho: pt.rho, lambda: pt.lambda, alpha: pt.alpha },
                    TheoryPoint::Mvs { w_mu: mvs.w_mu, w_sigma: mvs.w_sigma, w_nu: mvs.w_nu },
                    TheoryPoint::Crra { a: crra.a },
                ]
            }
            Support::Grid => self.grids.points(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w0.is_finite() && self.w0 > 10.0) {
            return Err(EcdError::InvalidConfig(format!(
                "w0 = {} leaves nonpositive CRRA wealth for the -10 payoff",
                self.w0
            )));
        }
        if self.grids.values == 0 {
            return Err(EcdError::InvalidConfig("grids.values must be at least 1".into()));
        }
        for point in self.points() {
            let bad = match point {
                TheoryPoint::Ev => false,
                TheoryPoint::Pt { rho, lambda, alpha } => !(rho > 0.0 && lambda > 0.0 && alpha > 0.0),
                TheoryPoint::Mvs { w_mu, w_sigma, w_nu } => ![w_mu, w_sigma, w_nu].iter().all(|w| w.is_finite()),
                TheoryPoint::Crra { a } => !(a.is_finite() && a > 0.0),
            };
            if bad {
                return Err(EcdError::InvalidConfig(format!("invalid parameters {point:?}")));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }
}

/// Exact posterior over the support points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPosterior {
    pub theories: Vec<Theory>,
    pub weights: Vec<f64>,
}

impl GridPosterior {
    pub fn new(theories: Vec<Theory>, prior: PriorChoice) -> Self {
        let mut counts = [0usize; 4];
        for t in &theories {
            counts[t.index()] += 1;
        }
        let present = counts.iter().filter(|&&c| c > 0).count() as f64;
        let weights = theories
            .iter()
            .map(|t| match prior {
                PriorChoice::UniformOverPoints => 1.0 / theories.len() as f64,
                PriorChoice::UniformOverTheories => 1.0 / (present * counts[t.index()] as f64),
            })
            .collect();
        Self { theories, weights }
    }

    pub fn marginals(&self) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (t, w) in self.theories.iter().zip(&self.weights) {
            out[t.index()] += w;
        }
        out
    }

    /// Most probable theory; `None` when the maximum is shared.
    pub fn map_theory(&self) -> Option<Theory> {
        let m = self.marginals();
        let best = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut winners = Theory::ALL.into_iter().filter(|t| m[t.index()] == best);
        let first = winners.next()?;
        winners.next().is_none().then_some(first)
    }

    /// Multiplies each weight by its likelihood and renormalizes.
    pub fn update(&mut self, likelihoods: impl IntoIterator<Item = f64>) -> Result<()> {
        let mut total = 0.0;
        for (w, l) in self.weights.iter_mut().zip(likelihoods) {
            *w *= l;
            total += *w;
        }
        if total < 1e-300 || !total.is_finite() {
            return Err(EcdError::PosteriorCollapse(total));
        }
        for w in &mut self.weights {
            *w /= total;
        }
        Ok(())
    }
}

/// Subject's answer to a pair: lottery 1 or lottery 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Choice {
    First,
    Second,
}

impl TryFrom<u8> for Choice {
    type Error = EcdError;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Choice::First),
            2 => Ok(Choice::Second),
            _ => Err(EcdError::Domain(format!("choice must be 1 or 2, got {v}"))),
        }
    }
}

impl From<Choice> for u8 {
    fn from(c: Choice) -> u8 {
        match c {
            Choice::First => 1,
            Choice::Second => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EconCriterion {
    Effecxtive,
    InfoGain,
    Us,
    Vs,
    Random,
}

impl EconCriterion {
    pub const ALL: [EconCriterion; 5] = [
        EconCriterion::Effecxtive,
        EconCriterion::InfoGain,
        EconCriterion::Us,
        EconCriterion::Vs,
        EconCriterion::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EconCriterion::Effecxtive => "effecxtive",
            EconCriterion::InfoGain => "info_gain",
            EconCriterion::Us => "us",
            EconCriterion::Vs => "vs",
            EconCriterion::Random => "random",
        }
    }
}

impl fmt::Display for EconCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EconCriterion {
    type Err = EcdError;

    fn from_str(s: &str) -> Result<Self> {
        EconCriterion::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| EcdError::InvalidConfig(format!("unknown econ criterion `{s}`")))
    }
}

/// The test pool together with cached utilities and choice likelihoods for
/// every support point.
#[derive(Debug, Clone)]
pub struct ChoiceModel {
    config: EconConfig,
    points: Vec<TheoryPoint>,
    pool: Vec<LotteryPair>,
    /// `lik[t * points + p]`: probability that point `p` picks lottery 1.
    lik: Vec<f64>,
    /// `pred[t * points + p]`: noiseless preference, 1 or 2, 0 when
    /// indifferent.
    pred: Vec<u8>,
}

impl ChoiceModel {
    pub fn new(config: EconConfig) -> Result<Self> {
        config.validate()?;
        let points = config.points();
        let lotteries = enumerate_lotteries(config.pool.admit_zero);
        let pool = enumerate_tests(config.pool);
        let mut utilities = std::collections::HashMap::new();
        for l in &lotteries {
            for (p, point) in points.iter().enumerate() {
                utilities.insert((p, *l), utility(point, l, config.w0)?);
            }
        }
        let np = points.len();
        let mut lik = Vec::with_capacity(pool.len() * np);
        let mut pred = Vec::with_capacity(pool.len() * np);
        for pair in &pool {
            for p in 0..np {
                let u1 = utilities[&(p, pair.first)];
                let u2 = utilities[&(p, pair.second)];
                lik.push(response_likelihood(u1, u2));
                pred.push(match u1.partial_cmp(&u2) {
                    Some(std::cmp::Ordering::Greater) => 1,
                    Some(std::cmp::Ordering::Less) => 2,
                    _ => 0,
                });
            }
        }
        Ok(Self { config, points, pool, lik, pred })
    }

    pub fn config(&self) -> &EconConfig {
        &self.config
    }

    pub fn points(&self) -> &[TheoryPoint] {
        &self.points
    }

    pub fn pool(&self) -> &[LotteryPair] {
        &self.pool
    }

    pub fn n_tests(&self) -> usize {
        self.pool.len()
    }

    pub fn prior(&self) -> GridPosterior {
        GridPosterior::new(self.points.iter().map(TheoryPoint::theory).collect(), self.config.prior)
    }

    /// Probability that point `p` gives `choice` on test `t`.
    pub fn likelihood(&self, t: usize, p: usize, choice: Choice) -> f64 {
        let l1 = self.lik[t * self.points.len() + p];
        match choice {
            Choice::First => l1,
            Choice::Second => 1.0 - l1,
        }
    }

    pub fn bayes_update(&self, posterior: &GridPosterior, t: usize, choice: Choice) -> Result<GridPosterior> {
        if t >= self.n_tests() {
            return Err(EcdError::UnknownTest(t));
        }
        let mut next = posterior.clone();
        next.update((0..self.points.len()).map(|p| self.likelihood(t, p, choice)))?;
        Ok(next)
    }

    /// `joint[y * 4 + theory]`: posterior mass of the theory jointly with
    /// answer `y` (0 for lottery 1) on test `t`.
    pub fn theory_joint(&self, posterior: &GridPosterior, t: usize) -> [f64; 8] {
        let np = self.points.len();
        let row = &self.lik[t * np..(t + 1) * np];
        let mut joint = [0.0; 8];
        for ((theory, &w), &l1) in posterior.theories.iter().zip(&posterior.weights).zip(row) {
            let k = theory.index();
            joint[k] += w * l1;
            joint[4 + k] += w * (1.0 - l1);
        }
        joint
    }

    /// Version-space score: mass reduction when every point answers with
    /// its noiseless preference. Indifferent points stay consistent with
    /// both answers.
    fn vs_score(&self, posterior: &GridPosterior, t: usize) -> f64 {
        let np = self.points.len();
        let mut consistent = [0.0; 2];
        for (&w, &pred) in posterior.weights.iter().zip(&self.pred[t * np..(t + 1) * np]) {
            if pred != 2 {
                consistent[0] += w;
            }
            if pred != 1 {
                consistent[1] += w;
            }
        }
        let spread = consistent[0] + consistent[1];
        1.0 - (consistent[0].powi(2) + consistent[1].powi(2)) / spread
    }

    pub fn score(&self, criterion: EconCriterion, posterior: &GridPosterior, t: usize) -> f64 {
        match criterion {
            EconCriterion::Effecxtive => gini_gain(&self.theory_joint(posterior, t), 4),
            EconCriterion::InfoGain => shannon_gain(&self.theory_joint(posterior, t), 4),
            EconCriterion::Us => predictive_entropy(&self.theory_joint(posterior, t), 4),
            EconCriterion::Vs => self.vs_score(posterior, t),
            EconCriterion::Random => 0.0,
        }
    }

    /// Next test among those with `available[t]`, lowest index on ties.
    pub fn select_test<R: Rng + ?Sized>(
        &self,
        criterion: EconCriterion,
        posterior: &GridPosterior,
        available: &[bool],
        rng: &mut R,
    ) -> Option<usize> {
        let open = (0..self.n_tests()).filter(|&t| available[t]);
        if criterion == EconCriterion::Random {
            return open.collect::<Vec<_>>().choose(rng).copied();
        }
        let scores: Vec<(usize, f64)> = open.map(|t| (t, self.score(criterion, posterior, t))).collect();
        argmax_with_ties(&scores, TieBreak::LowestTestIndex, rng)
    }
}
