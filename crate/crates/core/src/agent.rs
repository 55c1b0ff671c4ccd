//! A learning agent: tables, learning-rate state, communication budget and
//! its private random stream.

use crate::advising::AdvisingParams;
use crate::error::Result;
use crate::learning::{
    decay_alpha, policy_improve, q_update, record_visit, LearnerParams, PolicyTable, QTable,
    StateVec,
};
use crate::num::Scalar;
use crate::numerics::RngStream;

pub type AgentId = usize;

/// Message counters used to audit the communication budget.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CommLedger {
    /// Broadcast requests sent (each costs one unit).
    pub asks: u64,
    /// Replies sent to other agents (each costs one unit).
    pub gives: u64,
    /// Self-advice applications (free).
    pub self_advice: u64,
}

#[derive(Clone, Debug)]
pub struct Agent<S> {
    pub id: AgentId,
    pub q: QTable<S>,
    pub policy: PolicyTable<S>,
    pub learner: LearnerParams<S>,
    pub advising: AdvisingParams<S>,
    pub rng: RngStream,
    pub ledger: CommLedger,
}

impl<S: Scalar> Agent<S> {
    pub fn new(
        id: AgentId,
        actions: usize,
        floor: S,
        learner: LearnerParams<S>,
        advising: AdvisingParams<S>,
        rng: RngStream,
    ) -> Result<Self> {
        Ok(Self {
            id,
            q: QTable::new(actions),
            policy: PolicyTable::new(actions, floor)?,
            learner,
            advising,
            rng,
            ledger: CommLedger::default(),
        })
    }

    pub fn actions(&self) -> usize {
        self.q.actions()
    }

    /// Records a visit to `s`; returns the updated visit count.
    pub fn observe(&mut self, s: &StateVec) -> u64 {
        record_visit(&mut self.q, &mut self.policy, s)
    }

    /// Current policy row for `s` (uniform if never seen).
    pub fn policy_row(&mut self, s: &StateVec) -> Vec<S> {
        self.policy.row_or_uniform(s).clone()
    }

    /// The learning part of one time step: Q update for the executed action,
    /// policy improvement in `s`, learning-rate decay. `next` is `None` for a
    /// terminal transition.
    pub fn learn(&mut self, s: &StateVec, action: usize, reward: S, next: Option<&StateVec>) {
        let max_next = next.map_or_else(S::zero, |n| self.q.max_q(n));
        let LearnerParams {
            alpha, gamma, zeta, ..
        } = self.learner;
        let q_s = self.q.q_mut(s).expect("learn() called on an unobserved state");
        q_s[action] = q_update(q_s[action], reward, max_next, alpha, gamma);
        let q_row = q_s.to_vec();
        let floor = self.policy.floor();
        let row = self.policy.row_or_uniform(s);
        let improved = policy_improve(row, &q_row, zeta, floor)
            .expect("policy and Q rows share the action count");
        *row = improved;
        self.learner = decay_alpha(self.learner);
    }
}
