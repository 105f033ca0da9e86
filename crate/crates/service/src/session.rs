//! Session state machine and its append-only event log.
//!
//! A session is a pure function of its config and the ordered answers. The
//! log records every transition; [`Session::replay`] re-executes a log and
//! rejects any record the engine would not have produced.

use std::sync::Arc;

use ecd_core::econ::{Choice, ChoiceModel, EconConfig, EconCriterion, GridPosterior, Lottery, LotteryPair, Theory, TheoryPoint, PAYOFFS};
use ecd_core::harness::substream;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

fn default_budget() -> usize {
    30
}

fn default_criterion() -> EconCriterion {
    EconCriterion::Effecxtive
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    #[serde(default)]
    pub econ: EconConfig,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_criterion")]
    pub criterion: EconCriterion,
    /// Seeds the `random` criterion; other criteria ignore it.
    #[serde(default)]
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            econ: EconConfig::default(),
            budget: default_budget(),
            criterion: default_criterion(),
            seed: 0,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self, model: &ChoiceModel) -> Result<(), ServiceError> {
        if self.budget == 0 {
            return Err(ServiceError::BadRequest("budget must be at least 1".into()));
        }
        if self.budget > model.n_tests() {
            return Err(ServiceError::BadRequest(format!(
                "budget {} exceeds the {} available tests",
                self.budget,
                model.n_tests()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", content = "payload", rename_all = "lowercase")]
pub enum Event {
    Created { config: Box<SessionConfig> },
    Presented { pair_index: usize },
    Answered { pair_index: usize, choice: Choice },
    Completed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub session_id: String,
    pub seq: u64,
    #[serde(flatten)]
    pub event: Event,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Active,
    Completed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LotteryView {
    pub payoffs: [f64; 3],
    pub probs: [f64; 3],
}

impl From<&Lottery> for LotteryView {
    fn from(l: &Lottery) -> Self {
        Self { payoffs: PAYOFFS, probs: l.probs() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairView {
    pub pair_index: usize,
    pub lottery1: LotteryView,
    pub lottery2: LotteryView,
}

impl PairView {
    pub fn new(index: usize, pair: &LotteryPair) -> Self {
        Self {
            pair_index: index,
            lottery1: (&pair.first).into(),
            lottery2: (&pair.second).into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub test_index: usize,
    pub pair: PairView,
    pub choice: Choice,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Marginals {
    #[serde(rename = "EV")]
    pub ev: f64,
    #[serde(rename = "PT")]
    pub pt: f64,
    #[serde(rename = "MVS")]
    pub mvs: f64,
    #[serde(rename = "CRRA")]
    pub crra: f64,
}

impl From<[f64; 4]> for Marginals {
    fn from([ev, pt, mvs, crra]: [f64; 4]) -> Self {
        Self { ev, pt, mvs, crra }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointMass {
    pub point: TheoryPoint,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorView {
    pub session_id: String,
    pub marginals: Marginals,
    pub map_theory: Option<String>,
    pub answered: usize,
    pub budget: usize,
    pub status: Status,
    pub top_points: Vec<PointMass>,
}

const TOP_POINTS: usize = 5;

#[derive(Debug, Clone)]
pub struct Session {
    id: String,
    config: SessionConfig,
    model: Arc<ChoiceModel>,
    posterior: GridPosterior,
    history: Vec<HistoryEntry>,
    presented: Vec<bool>,
    pending: Option<usize>,
    status: Status,
    records: Vec<LogRecord>,
}

impl Session {
    /// New session with its first test presented. Returns the session and
    /// the records to persist.
    pub fn create(
        id: String,
        config: SessionConfig,
        model: Arc<ChoiceModel>,
        now_ms: u64,
    ) -> Result<(Self, Vec<LogRecord>), ServiceError> {
        config.validate(&model)?;
        let mut session = Self {
            id,
            posterior: model.prior(),
            presented: vec![false; model.n_tests()],
            config,
            model,
            history: Vec::new(),
            pending: None,
            status: Status::Active,
            records: Vec::new(),
        };
        let config = session.config.clone();
        session.push(Event::Created { config: Box::new(config) }, now_ms);
        session.present_next(now_ms)?;
        let records = session.records.clone();
        Ok((session, records))
    }

    fn push(&mut self, event: Event, now_ms: u64) {
        let seq = self.records.len() as u64;
        self.records.push(LogRecord {
            session_id: self.id.clone(),
            seq,
            event,
            timestamp_ms: now_ms,
        });
    }

    fn present_next(&mut self, now_ms: u64) -> Result<(), ServiceError> {
        let available: Vec<bool> = self.presented.iter().map(|p| !p).collect();
        let mut rng = substream(self.config.seed, self.history.len() as u64, 0);
        let t = self
            .model
            .select_test(self.config.criterion, &self.posterior, &available, &mut rng)
            .ok_or_else(|| ServiceError::Internal("test pool exhausted".into()))?;
        self.presented[t] = true;
        self.pending = Some(t);
        self.push(Event::Presented { pair_index: t }, now_ms);
        Ok(())
    }

    /// Applies an answer to the pending test. Returns the new records.
    pub fn answer(&mut self, choice: Choice, now_ms: u64) -> Result<Vec<LogRecord>, ServiceError> {
        if self.status == Status::Completed {
            return Err(ServiceError::Conflict("session is completed".into()));
        }
        let t = self
            .pending
            .ok_or_else(|| ServiceError::Conflict("no test is pending".into()))?;
        let start = self.records.len();
        self.posterior = self
            .model
            .bayes_update(&self.posterior, t, choice)
            .map_err(|e| ServiceError::Internal(e.to_string()))?;
        self.pending = None;
        self.history.push(HistoryEntry {
            test_index: t,
            pair: PairView::new(t, &self.model.pool()[t]),
            choice,
            timestamp_ms: now_ms,
        });
        self.push(Event::Answered { pair_index: t, choice }, now_ms);
        if self.history.len() == self.config.budget {
            self.status = Status::Completed;
            self.push(Event::Completed, now_ms);
        } else {
            self.present_next(now_ms)?;
        }
        Ok(self.records[start..].to_vec())
    }

    /// Rebuilds a session from its log, checking that every record is the
    /// one the engine produces.
    pub fn replay(
        records: &[LogRecord],
        model_for: impl FnOnce(&EconConfig) -> Result<Arc<ChoiceModel>, ServiceError>,
    ) -> Result<Self, ServiceError> {
        let tamper = |msg: String| ServiceError::Replay(msg);
        for (i, r) in records.iter().enumerate() {
            if r.seq != i as u64 {
                return Err(tamper(format!("record {i} has sequence number {}", r.seq)));
            }
        }
        let first = records.first().ok_or_else(|| tamper("empty log".into()))?;
        let Event::Created { config } = &first.event else {
            return Err(tamper("log does not start with a created record".into()));
        };
        let model = model_for(&config.econ)?;
        let (mut session, produced) = Session::create(first.session_id.clone(), (**config).clone(), model, first.timestamp_ms)?;
        let mut cursor = check_matches(&produced, records, 0)?;
        while cursor < records.len() {
            let r = &records[cursor];
            let Event::Answered { choice, .. } = r.event else {
                return Err(tamper(format!("expected an answered record at seq {}", r.seq)));
            };
            let produced = session
                .answer(choice, r.timestamp_ms)
                .map_err(|e| tamper(format!("seq {}: {e}", r.seq)))?;
            cursor = check_matches(&produced, records, cursor)?;
        }
        Ok(session)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn posterior(&self) -> &GridPosterior {
        &self.posterior
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn pending(&self) -> Option<PairView> {
        self.pending.map(|t| PairView::new(t, &self.model.pool()[t]))
    }

    pub fn posterior_view(&self) -> PosteriorView {
        let mut ranked: Vec<usize> = (0..self.posterior.weights.len()).collect();
        ranked.sort_by(|&a, &b| self.posterior.weights[b].total_cmp(&self.posterior.weights[a]).then(a.cmp(&b)));
        PosteriorView {
            session_id: self.id.clone(),
            marginals: self.posterior.marginals().into(),
            map_theory: self.posterior.map_theory().map(|t: Theory| t.name().to_string()),
            answered: self.history.len(),
            budget: self.config.budget,
            status: self.status,
            top_points: ranked
                .into_iter()
                .take(TOP_POINTS)
                .map(|p| PointMass {
                    point: self.model.points()[p],
                    probability: self.posterior.weights[p],
                })
                .collect(),
        }
    }
}

fn check_matches(produced: &[LogRecord], log: &[LogRecord], cursor: usize) -> Result<usize, ServiceError> {
    for (offset, expected) in produced.iter().enumerate() {
        let Some(actual) = log.get(cursor + offset) else {
            return Err(ServiceError::Replay(format!("log ends before seq {}", expected.seq)));
        };
        if actual.event != expected.event || actual.session_id != expected.session_id {
            return Err(ServiceError::Replay(format!(
                "seq {}: logged {:?}, engine produced {:?}",
                actual.seq, actual.event, expected.event
            )));
        }
    }
    Ok(cursor + produced.len())
}

/// Parses complete NDJSON lines; a trailing partial line was never
/// acknowledged and is dropped.
pub fn parse_log(text: &str) -> Result<Vec<LogRecord>, ServiceError> {
    let complete = match text.rfind('\n') {
        Some(end) => &text[..end],
        None => "",
    };
    complete
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| ServiceError::Replay(format!("bad log line: {e}"))))
        .collect()
}

pub fn to_ndjson(records: &[LogRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("log records serialize"));
        out.push('\n');
    }
    out
}
