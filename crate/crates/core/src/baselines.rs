//! Comparison methods: plain Q-learning and same-state action advising.

use crate::advising::AdviceAudit;
use crate::agent::Agent;
use crate::error::{Error, Result};
use crate::learning::{argmax, select_action, QTable, StateVec};
use crate::num::Scalar;

/// Ask/give shaping parameters of the same-state advising baseline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SarlParams {
    pub v_ask: f64,
    pub v_give: f64,
}

impl SarlParams {
    pub fn new(v_ask: f64, v_give: f64) -> Result<Self> {
        if !(v_ask > 0.0 && v_give > 0.0) {
            return Err(Error::param(format!(
                "v_ask and v_give must be positive, got {v_ask} and {v_give}"
            )));
        }
        Ok(Self { v_ask, v_give })
    }
}

impl Default for SarlParams {
    fn default() -> Self {
        Self {
            v_ask: 0.4,
            v_give: 0.9,
        }
    }
}

/// Action drawn from the agent's own policy row; no communication.
pub fn rl_step<S: Scalar>(agent: &mut Agent<S>, s_t: &StateVec) -> usize {
    let row = agent.policy.row_or_uniform(s_t);
    select_action(row, &mut agent.rng)
}

/// `(1 + v_ask)^(-sqrt(n))`: decreasing in visits and in `v_ask`.
pub fn sarl_ask_prob(n: u64, v_ask: f64) -> f64 {
    (1.0 + v_ask).powf(-(n as f64).sqrt())
}

/// `1 - (1 + v_give)^(-sqrt(n))`: increasing in visits and in `v_give`.
pub fn sarl_give_prob(n: u64, v_give: f64) -> f64 {
    1.0 - (1.0 + v_give).powf(-(n as f64).sqrt())
}

/// Greedy action of the adviser for exactly `s`, if it has visited `s`.
pub fn sarl_advise<S: Scalar>(adviser_table: &QTable<S>, s: &StateVec) -> Option<usize> {
    adviser_table.q_values(s).map(argmax)
}

/// One decision of the same-state baseline for `agents[advisee]`.
///
/// Returns the action to execute. An accepted advice overrides the policy
/// draw for this step only; the learning update runs as usual afterwards.
/// Among several replies the one from the smallest adviser id is used.
pub fn sarl_step<S: Scalar>(
    agents: &mut [Agent<S>],
    advisee: usize,
    reachable: &[usize],
    s_t: &StateVec,
    params: &SarlParams,
) -> (usize, AdviceAudit) {
    let mut audit = AdviceAudit::default();
    let n = agents[advisee].q.visits(s_t);
    let ask = {
        let me = &mut agents[advisee];
        me.advising.budget_left() > 0 && me.rng.bernoulli(sarl_ask_prob(n, params.v_ask))
    };
    if ask {
        audit.asked = true;
        let me = &mut agents[advisee];
        me.advising.spend();
        me.ledger.asks += 1;
        audit.broadcast = true;

        let mut advised = None;
        for &j in reachable {
            if j == advisee {
                continue;
            }
            let adviser = &mut agents[j];
            if adviser.advising.budget_left() == 0 {
                continue;
            }
            let n_j = adviser.q.visits(s_t);
            if !adviser.rng.bernoulli(sarl_give_prob(n_j, params.v_give)) {
                continue;
            }
            if let Some(action) = sarl_advise(&adviser.q, s_t) {
                adviser.advising.spend();
                adviser.ledger.gives += 1;
                audit.replies += 1;
                if advised.is_none() {
                    advised = Some((adviser.id, action));
                }
            }
        }
        if let Some((id, action)) = advised {
            audit.adviser = Some(id);
            audit.difference = Some(0);
            return (action, audit);
        }
    }
    (rl_step(&mut agents[advisee], s_t), audit)
}
