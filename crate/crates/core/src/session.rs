//! The interactive elicitation loop: pose a query, take an answer, recompute
//! the posterior from the full history, pick the next query.
//!
//! Every random stream is derived from the session's seeds and the number of
//! answers so far, so a session is reproducible from its snapshot.

use std::fmt;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::attribute::{AnsweredQuery, AttributeVector, Query};
use crate::error::{Error, Result};
use crate::likelihood::NoiseConstant;
use crate::mcmc::{sample_posterior, McmcConfig, PosteriorSamples};
use crate::oracle::{answer, OracleConfig};
use crate::seed::derive_seed;
use crate::selection::{select_query, SelectionConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    First,
    Second,
}

impl FromStr for Choice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first" => Ok(Choice::First),
            "second" => Ok(Choice::Second),
            other => Err(Error::invalid(format!(
                "unknown choice {other:?} (expected \"first\" or \"second\")"
            ))),
        }
    }
}

impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Choice::First => "first",
            Choice::Second => "second",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub estimate: AttributeVector,
    pub covariance: DMatrix<f64>,
    pub n_answered: usize,
}

#[derive(Debug, Clone)]
pub struct SessionState {
    id: String,
    dimension: usize,
    k: NoiseConstant,
    selection: SelectionConfig,
    mcmc: McmcConfig,
    answered: Vec<AnsweredQuery>,
    pending: Option<Query>,
    posterior: PosteriorSamples,
    created_at: u64,
    updated_at: u64,
}

/// Persisted form of a session; the posterior is rebuilt from `answered`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub id: String,
    pub dimension: usize,
    pub k_q: NoiseConstant,
    pub selection: SelectionConfig,
    pub mcmc: McmcConfig,
    pub answered: Vec<AnsweredQuery>,
    pub pending: Option<Query>,
    #[serde(default)]
    pub created_at: u64,
    #[serde(default)]
    pub updated_at: u64,
}

fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

pub fn create_session(
    dimension: usize,
    selection: SelectionConfig,
    k: NoiseConstant,
    mcmc: McmcConfig,
) -> Result<SessionState> {
    SessionState::new(uuid::Uuid::new_v4().to_string(), dimension, selection, k, mcmc)
}

impl SessionState {
    /// Samples the prior and selects the first pending query.
    pub fn new(
        id: String,
        dimension: usize,
        selection: SelectionConfig,
        k: NoiseConstant,
        mcmc: McmcConfig,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::invalid("dimension must be >= 1"));
        }
        selection.validate()?;
        mcmc.validate()?;
        let posterior = posterior_for(dimension, &[], k, &mcmc)?;
        let pending = Some(next_query(&posterior, &selection, k, 0)?);
        let now = now_millis();
        Ok(Self {
            id,
            dimension,
            k,
            selection,
            mcmc,
            answered: Vec::new(),
            pending,
            posterior,
            created_at: now,
            updated_at: now,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn noise_constant(&self) -> NoiseConstant {
        self.k
    }

    pub fn selection(&self) -> &SelectionConfig {
        &self.selection
    }

    pub fn mcmc(&self) -> &McmcConfig {
        &self.mcmc
    }

    pub fn answered(&self) -> &[AnsweredQuery] {
        &self.answered
    }

    pub fn n_answered(&self) -> usize {
        self.answered.len()
    }

    pub fn pending(&self) -> Option<&Query> {
        self.pending.as_ref()
    }

    pub fn posterior(&self) -> &PosteriorSamples {
        &self.posterior
    }

    pub fn created_at(&self) -> u64 {
        self.created_at
    }

    pub fn updated_at(&self) -> u64 {
        self.updated_at
    }

    /// Appends the answer to the pending query, recomputes the posterior over
    /// the whole history and selects the next query. On error the session is
    /// left untouched.
    pub fn submit_answer(&mut self, choice: Choice) -> Result<()> {
        let pending = self
            .pending
            .as_ref()
            .ok_or_else(|| Error::InvalidState("session has no pending query".into()))?;
        let answered_query = pending.answer(choice == Choice::First);

        let mut answered = self.answered.clone();
        answered.push(answered_query);
        let posterior = posterior_for(self.dimension, &answered, self.k, &self.mcmc)?;
        let next = next_query(&posterior, &self.selection, self.k, answered.len())?;

        self.answered = answered;
        self.posterior = posterior;
        self.pending = Some(next);
        self.updated_at = now_millis();
        Ok(())
    }

    pub fn submit_answer_str(&mut self, choice: &str) -> Result<()> {
        self.submit_answer(choice.parse()?)
    }

    pub fn current_estimate(&self) -> Estimate {
        Estimate {
            estimate: self.posterior.mean(),
            covariance: self.posterior.covariance().clone(),
            n_answered: self.answered.len(),
        }
    }

    /// Lets a simulated oracle answer `rounds` consecutive queries. The oracle's
    /// per-answer noise stream is indexed by the number of prior answers.
    pub fn run_scripted(&mut self, oracle: &OracleConfig, rounds: usize) -> Result<()> {
        if rounds == 0 {
            return Err(Error::invalid("run_scripted needs at least one round"));
        }
        for _ in 0..rounds {
            let choice = self.oracle_choice(oracle)?;
            self.submit_answer(choice)?;
        }
        Ok(())
    }

    /// What `oracle` would answer to the current pending query.
    pub fn oracle_choice(&self, oracle: &OracleConfig) -> Result<Choice> {
        let q = self
            .pending
            .as_ref()
            .ok_or_else(|| Error::InvalidState("session has no pending query".into()))?;
        let a = answer(oracle, q, self.answered.len() as u64)?;
        Ok(if a.preferred() == q.first() {
            Choice::First
        } else {
            Choice::Second
        })
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            id: self.id.clone(),
            dimension: self.dimension,
            k_q: self.k,
            selection: self.selection.clone(),
            mcmc: self.mcmc.clone(),
            answered: self.answered.clone(),
            pending: self.pending.clone(),
            created_at: self.created_at,
            updated_at: self.updated_at,
        }
    }

    /// Rebuilds a session from its snapshot by resampling the posterior.
    pub fn restore(snapshot: SessionSnapshot) -> Result<Self> {
        if snapshot.dimension == 0 {
            return Err(Error::invalid("dimension must be >= 1"));
        }
        snapshot.selection.validate()?;
        snapshot.mcmc.validate()?;
        let posterior = posterior_for(snapshot.dimension, &snapshot.answered, snapshot.k_q, &snapshot.mcmc)?;
        let pending = match snapshot.pending {
            Some(q) => {
                if q.dim() != snapshot.dimension {
                    return Err(Error::DimensionMismatch {
                        expected: snapshot.dimension,
                        found: q.dim(),
                    });
                }
                Some(q)
            }
            None => None,
        };
        Ok(Self {
            id: snapshot.id,
            dimension: snapshot.dimension,
            k: snapshot.k_q,
            selection: snapshot.selection,
            mcmc: snapshot.mcmc,
            answered: snapshot.answered,
            pending,
            posterior,
            created_at: snapshot.created_at,
            updated_at: snapshot.updated_at,
        })
    }
}

fn posterior_for(
    dimension: usize,
    answered: &[AnsweredQuery],
    k: NoiseConstant,
    mcmc: &McmcConfig,
) -> Result<PosteriorSamples> {
    let cfg = mcmc.with_seed(derive_seed(mcmc.seed, &[answered.len() as u64]));
    sample_posterior(dimension, answered, k, &cfg)
}

fn next_query(
    posterior: &PosteriorSamples,
    selection: &SelectionConfig,
    k: NoiseConstant,
    n_answered: usize,
) -> Result<Query> {
    let cfg = selection.with_seed(derive_seed(selection.seed, &[n_answered as u64]));
    select_query(posterior.moments(), &cfg, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selection::{query_plane, Strategy};

    fn v(c: &[f64]) -> AttributeVector {
        AttributeVector::new(c.to_vec()).unwrap()
    }

    fn session(strategy: Strategy, seed: u64) -> SessionState {
        SessionState::new(
            format!("s{seed}"),
            2,
            SelectionConfig::new(strategy).with_seed(seed),
            NoiseConstant::new(10.0).unwrap(),
            McmcConfig::default().with_seed(seed),
        )
        .unwrap()
    }

    #[test]
    fn fresh_session() {
        let s = create_session(2, SelectionConfig::default(), NoiseConstant::default(), McmcConfig::default()).unwrap();
        let est = s.current_estimate();
        assert_eq!(est.n_answered, 0);
        assert!(est.estimate.as_slice().iter().all(|c| (c - 0.5).abs() < 0.03));
        assert!(s.pending().is_some());
        let other = create_session(2, SelectionConfig::default(), NoiseConstant::default(), McmcConfig::default()).unwrap();
        assert_ne!(s.id(), other.id());
        assert!(create_session(0, SelectionConfig::default(), NoiseConstant::default(), McmcConfig::default()).is_err());
    }

    #[test]
    fn one_answer_moves_the_mean_toward_the_preferred_side() {
        for (strategy, choice) in [(Strategy::Random, Choice::First), (Strategy::ClosedForm, Choice::Second)] {
            let mut s = session(strategy, 3);
            let q = s.pending().unwrap().clone();
            let before = s.posterior().moments().mean.clone();
            s.submit_answer(choice).unwrap();
            assert_eq!(s.n_answered(), 1);
            assert!(s.pending().is_some());
            let plane = query_plane(&q).unwrap();
            let toward = if choice == Choice::First { 1.0 } else { -1.0 };
            let after = &s.posterior().moments().mean;
            assert!(toward * plane.signed_distance(after) > toward * plane.signed_distance(&before));
            assert_eq!(
                s.answered()[0].preferred(),
                if choice == Choice::First { q.first() } else { q.second() }
            );
        }
    }

    #[test]
    fn error_paths_leave_state_untouched() {
        let mut s = session(Strategy::ClosedForm, 1);
        assert!(matches!(s.submit_answer_str("left"), Err(Error::InvalidInput(_))));
        assert_eq!(s.n_answered(), 0);

        let mut snap = s.snapshot();
        snap.pending = None;
        let mut idle = SessionState::restore(snap).unwrap();
        let before = idle.snapshot();
        assert!(matches!(idle.submit_answer(Choice::First), Err(Error::InvalidState(_))));
        assert_eq!(idle.snapshot(), before);

        let oracle = OracleConfig::noiseless(v(&[0.5, 0.5]));
        assert!(s.run_scripted(&oracle, 0).is_err());
        assert!(s.run_scripted(&OracleConfig::noiseless(v(&[0.5])), 1).is_err());
        assert_eq!(s.n_answered(), 0);
    }

    #[test]
    fn scripted_run_equals_manual_submits() {
        let oracle = OracleConfig::new(v(&[0.3, 0.7]), 0.05, 9).unwrap();
        let mut scripted = session(Strategy::BestOfN, 4);
        scripted.run_scripted(&oracle, 10).unwrap();
        let mut manual = session(Strategy::BestOfN, 4);
        for _ in 0..10 {
            let c = manual.oracle_choice(&oracle).unwrap();
            manual.submit_answer(c).unwrap();
        }
        assert_eq!(scripted.n_answered(), 10);
        assert_eq!(scripted.answered(), manual.answered());
        assert_eq!(scripted.pending(), manual.pending());
        assert_eq!(scripted.posterior(), manual.posterior());
    }

    #[test]
    fn snapshot_replay_is_exact() {
        let mut s = session(Strategy::ClosedForm, 12);
        s.run_scripted(&OracleConfig::noiseless(v(&[0.2, 0.8])), 6).unwrap();
        let json = serde_json::to_string(&s.snapshot()).unwrap();
        let restored = SessionState::restore(serde_json::from_str(&json).unwrap()).unwrap();
        let (a, b) = (s.current_estimate(), restored.current_estimate());
        for (x, y) in a.estimate.as_slice().iter().zip(b.estimate.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(a.covariance, b.covariance);
        assert_eq!(restored.pending(), s.pending());
        assert_eq!(restored.created_at(), s.created_at());
    }

    #[test]
    fn snapshot_json_shape() {
        let s = session(Strategy::Random, 2);
        let value = serde_json::to_value(s.snapshot()).unwrap();
        for key in ["id", "dimension", "k_q", "selection", "mcmc", "answered", "pending"] {
            assert!(value.get(key).is_some(), "{key}");
        }
        assert_eq!(value["selection"]["strategy"], "random");
        assert!(value["pending"]["first"].is_array());
    }

    #[test]
    fn choice_tokens() {
        assert_eq!("first".parse::<Choice>().unwrap(), Choice::First);
        assert_eq!(Choice::Second.to_string(), "second");
        assert_eq!(serde_json::to_string(&Choice::First).unwrap(), "\"first\"");
        assert!("First".parse::<Choice>().is_err());
    }
}
