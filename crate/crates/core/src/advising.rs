//! Differential advising between agents.
//!
//! An advisee that decides to ask (see [`p_ask`]) first looks for a strictly
//! neighboring state in its own table and, if one exists, applies its own
//! Q-vector for that state through the Laplace mechanism at no budget cost.
//! Otherwise it broadcasts a request. Each adviser answers with the Q-vector
//! of its closest visited state (exact match, else L1 distance one) with
//! probability [`p_give`]. The advisee keeps the closest reply: exact-state
//! advice updates the policy directly, neighboring-state advice is first
//! perturbed with `Lap(delta_q / epsilon)` noise on every action value.
//!
//! States are integer vectors, so a state at L1 distance one differs from the
//! query in exactly one coordinate by ±1. Neighbor lookups therefore probe the
//! `2m` unit offsets instead of scanning the table.

use crate::agent::{Agent, AgentId};
use crate::error::{Error, Result};
use crate::learning::{policy_improve, QTable, StateVec};
use crate::num::Scalar;
use crate::numerics::{laplace_sample, normalize_policy, LaplaceScale, RngStream};

/// Privacy and communication parameters of one agent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdvisingParams<S> {
    epsilon: S,
    delta_q: S,
    ask_threshold: u64,
    budget_total: u64,
    budget_left: u64,
}

impl<S: Scalar> AdvisingParams<S> {
    pub fn new(epsilon: S, delta_q: S, ask_threshold: u64, budget_total: u64) -> Result<Self> {
        if !(epsilon > S::zero()) {
            return Err(Error::param(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(delta_q > S::zero()) {
            return Err(Error::param(format!("delta_q must be positive, got {delta_q}")));
        }
        if ask_threshold == 0 {
            return Err(Error::param("ask threshold must be a positive integer"));
        }
        Ok(Self {
            epsilon,
            delta_q,
            ask_threshold,
            budget_total,
            budget_left: budget_total,
        })
    }

    pub fn epsilon(&self) -> S {
        self.epsilon
    }

    pub fn delta_q(&self) -> S {
        self.delta_q
    }

    pub fn ask_threshold(&self) -> u64 {
        self.ask_threshold
    }

    pub fn budget_total(&self) -> u64 {
        self.budget_total
    }

    pub fn budget_left(&self) -> u64 {
        self.budget_left
    }

    /// `b = delta_q / epsilon`.
    pub fn laplace_scale(&self) -> LaplaceScale<S> {
        LaplaceScale::from_sensitivity(self.delta_q, self.epsilon)
            .expect("validated at construction")
    }

    /// Spends one unit of budget. Returns false (and spends nothing) when empty.
    pub fn spend(&mut self) -> bool {
        if self.budget_left == 0 {
            return false;
        }
        self.budget_left -= 1;
        true
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdviceRequest {
    pub concerned_state: StateVec,
    pub advisee_visits: u64,
    pub advisee_id: AgentId,
}

/// A Q-vector for the adviser's closest matching state.
#[derive(Clone, Debug, PartialEq)]
pub struct Advice<S> {
    source_state: StateVec,
    q_vector: Vec<S>,
    adviser_id: AgentId,
    difference: u64,
}

impl<S: Scalar> Advice<S> {
    /// Only same (difference 0) or neighboring (difference 1) states may be
    /// sent as advice.
    pub fn new(
        source_state: StateVec,
        q_vector: Vec<S>,
        adviser_id: AgentId,
        difference: u64,
    ) -> Result<Self> {
        if difference > 1 {
            return Err(Error::param(format!(
                "advice difference must be at most 1, got {difference}"
            )));
        }
        if q_vector.is_empty() {
            return Err(Error::param("advice must carry at least one Q-value"));
        }
        Ok(Self {
            source_state,
            q_vector,
            adviser_id,
            difference,
        })
    }

    pub fn source_state(&self) -> &StateVec {
        &self.source_state
    }

    pub fn q_vector(&self) -> &[S] {
        &self.q_vector
    }

    pub fn adviser_id(&self) -> AgentId {
        self.adviser_id
    }

    pub fn difference(&self) -> u64 {
        self.difference
    }
}

/// L1 distance between two states of equal dimension.
pub fn state_difference(s: &StateVec, s2: &StateVec) -> Result<u64> {
    if s.len() != s2.len() {
        return Err(Error::DimensionMismatch {
            left: s.len(),
            right: s2.len(),
        });
    }
    Ok(s.dims()
        .iter()
        .zip(s2.dims())
        .map(|(&a, &b)| (i64::from(a) - i64::from(b)).unsigned_abs())
        .sum())
}

/// True iff the states differ by at most one (identical states included).
pub fn is_neighboring(s: &StateVec, s2: &StateVec) -> Result<bool> {
    Ok(state_difference(s, s2)? <= 1)
}

/// Closest visited state to `s` within distance one.
///
/// Candidates must have at least `min_visits` visits and, with
/// `require_strict`, must differ from `s`. Ties go to the higher visit
/// count, then the lexicographically smaller state.
pub fn nearest_neighbor_state<S: Scalar>(
    s: &StateVec,
    table: &QTable<S>,
    require_strict: bool,
    min_visits: u64,
) -> Option<(StateVec, u64)> {
    let min_visits = min_visits.max(1);
    if !require_strict && table.visits(s) >= min_visits {
        return Some((s.clone(), 0));
    }
    let mut best: Option<(StateVec, u64)> = None;
    for dim in 0..s.len() {
        for delta in [-1, 1] {
            let cand = s.offset(dim, delta);
            let visits = table.visits(&cand);
            if visits < min_visits {
                continue;
            }
            let better = match &best {
                None => true,
                Some((b, bv)) => visits > *bv || (visits == *bv && cand < *b),
            };
            if better {
                best = Some((cand, visits));
            }
        }
    }
    best.map(|(state, _)| (state, 1))
}

/// Probability of asking for advice; zero below the visit threshold.
pub fn p_ask(n: u64, budget_left: u64, budget_total: u64, ask_threshold: u64) -> f64 {
    if budget_total == 0 || n < ask_threshold || n == 0 {
        return 0.0;
    }
    let left = budget_left.min(budget_total) as f64;
    (1.0 / (n as f64).sqrt()) * (left / budget_total as f64).sqrt()
}

/// Probability of answering a request; zero when the adviser is less
/// experienced in the concerned state than the advisee.
pub fn p_give(n_adviser: u64, n_advisee: u64, budget_left: u64, budget_total: u64) -> f64 {
    if budget_total == 0 || n_adviser < n_advisee || n_adviser == 0 {
        return 0.0;
    }
    let left = budget_left.min(budget_total) as f64;
    (1.0 - 1.0 / (n_adviser as f64).sqrt()) * (left / budget_total as f64).sqrt()
}

/// Approximate advice sensitivity `alpha * (r_hi - r_lo)`.
pub fn advice_sensitivity<S: Scalar>(alpha: S, r_hi: S, r_lo: S) -> Result<S> {
    if !(r_hi > r_lo) {
        return Err(Error::param(format!(
            "reward range is empty: r_hi={r_hi}, r_lo={r_lo}"
        )));
    }
    if !(alpha > S::zero() && alpha < S::one()) {
        return Err(Error::param(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(alpha * (r_hi - r_lo))
}

/// Adds one independent Laplace draw to each action value, in action order.
pub fn perturb_q_vector<S: Scalar>(
    q: &[S],
    scale: LaplaceScale<S>,
    rng: &mut RngStream,
) -> Vec<S> {
    q.iter().map(|&v| v + laplace_sample(scale, rng)).collect()
}

/// Applies neighboring-state advice: perturb the advised Q-vector, then take
/// one policy-improvement step on `pi_st` against the noisy values.
pub fn apply_differential_advice<S: Scalar>(
    pi_st: &[S],
    advice: &Advice<S>,
    zeta: S,
    params: &AdvisingParams<S>,
    floor: S,
    rng: &mut RngStream,
) -> Result<Vec<S>> {
    if pi_st.len() != advice.q_vector.len() {
        return Err(Error::DimensionMismatch {
            left: pi_st.len(),
            right: advice.q_vector.len(),
        });
    }
    let noisy = perturb_q_vector(&advice.q_vector, params.laplace_scale(), rng);
    let r_bar: S = pi_st.iter().zip(&noisy).map(|(&p, &q)| p * q).sum();
    let raw: Vec<S> = pi_st
        .iter()
        .zip(&noisy)
        .map(|(&p, &q)| p + zeta * (q - r_bar))
        .collect();
    normalize_policy(&raw, floor)
}

/// Adviser side of the protocol. On a reply the adviser's budget is charged.
pub fn handle_request<S: Scalar>(
    adviser_table: &QTable<S>,
    adviser_id: AgentId,
    req: &AdviceRequest,
    adviser_params: &mut AdvisingParams<S>,
    rng: &mut RngStream,
) -> Option<Advice<S>> {
    if adviser_params.budget_left() == 0 {
        return None;
    }
    let (state, difference) = nearest_neighbor_state(&req.concerned_state, adviser_table, false, 1)?;
    let n_adviser = adviser_table.visits(&state);
    let p = p_give(
        n_adviser,
        req.advisee_visits,
        adviser_params.budget_left(),
        adviser_params.budget_total(),
    );
    if !rng.bernoulli(p) {
        return None;
    }
    adviser_params.spend();
    let q = adviser_table.q_values(&state)?.to_vec();
    Advice::new(state, q, adviser_id, difference).ok()
}

/// Picks the reply with the smallest state difference; ties go to the
/// smallest adviser id.
pub fn choose_advice<S: Scalar>(received: Vec<Advice<S>>, _s: &StateVec) -> Option<Advice<S>> {
    received
        .into_iter()
        .min_by_key(|a| (a.difference, a.adviser_id))
}

/// What happened during one advising decision.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdviceAudit {
    pub asked: bool,
    pub self_advised: bool,
    pub broadcast: bool,
    pub replies: usize,
    pub adviser: Option<AgentId>,
    pub difference: Option<u64>,
    pub noisy: bool,
}

/// Policy row to act from plus the audit of how it was produced.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionSelectionPlan<S> {
    pub policy: Vec<S>,
    pub audit: AdviceAudit,
}

/// Runs the advising part of one time step for `agents[advisee]` in `s_t`.
///
/// The advisee must already have recorded its visit to `s_t`. `reachable`
/// lists the agents that receive a broadcast; they are queried in the given
/// order. Any advice adopted is written into the advisee's policy row.
pub fn advising_step<S: Scalar>(
    agents: &mut [Agent<S>],
    advisee: usize,
    reachable: &[usize],
    s_t: &StateVec,
) -> Result<ActionSelectionPlan<S>> {
    let mut audit = AdviceAudit::default();
    let (request, pi_st) = {
        let me = &mut agents[advisee];
        let n = me.q.visits(s_t);
        let p = p_ask(
            n,
            me.advising.budget_left(),
            me.advising.budget_total(),
            me.advising.ask_threshold(),
        );
        let pi_st = me.policy_row(s_t);
        if !me.rng.bernoulli(p) {
            return Ok(ActionSelectionPlan {
                policy: pi_st,
                audit,
            });
        }
        audit.asked = true;

        let own = nearest_neighbor_state(s_t, &me.q, true, me.advising.ask_threshold());
        if let Some((s_prime, diff)) = own {
            let q = me.q.q_values(&s_prime).expect("candidate is visited").to_vec();
            let advice = Advice::new(s_prime, q, me.id, diff)?;
            let floor = me.policy.floor();
            let zeta = me.learner.zeta;
            let params = me.advising;
            let updated = apply_differential_advice(&pi_st, &advice, zeta, &params, floor, &mut me.rng)?;
            me.policy.set_row(s_t, updated.clone());
            me.ledger.self_advice += 1;
            audit.self_advised = true;
            audit.adviser = Some(me.id);
            audit.difference = Some(diff);
            audit.noisy = true;
            return Ok(ActionSelectionPlan {
                policy: updated,
                audit,
            });
        }

        if !me.advising.spend() {
            return Ok(ActionSelectionPlan {
                policy: pi_st,
                audit,
            });
        }
        me.ledger.asks += 1;
        audit.broadcast = true;
        let request = AdviceRequest {
            concerned_state: s_t.clone(),
            advisee_visits: n,
            advisee_id: me.id,
        };
        (request, pi_st)
    };

    let mut replies = Vec::new();
    for &j in reachable {
        if j == advisee {
            continue;
        }
        let adviser = &mut agents[j];
        if let Some(advice) = handle_request(
            &adviser.q,
            adviser.id,
            &request,
            &mut adviser.advising,
            &mut adviser.rng,
        ) {
            adviser.ledger.gives += 1;
            replies.push(advice);
        }
    }
    audit.replies = replies.len();

    let Some(chosen) = choose_advice(replies, s_t) else {
        return Ok(ActionSelectionPlan {
            policy: pi_st,
            audit,
        });
    };
    audit.adviser = Some(chosen.adviser_id);
    audit.difference = Some(chosen.difference);

    let me = &mut agents[advisee];
    let floor = me.policy.floor();
    let zeta = me.learner.zeta;
    let updated = if chosen.difference == 0 {
        policy_improve(&pi_st, &chosen.q_vector, zeta, floor)?
    } else {
        audit.noisy = true;
        let params = me.advising;
        apply_differential_advice(&pi_st, &chosen, zeta, &params, floor, &mut me.rng)?
    };
    me.policy.set_row(s_t, updated.clone());
    Ok(ActionSelectionPlan {
        policy: updated,
        audit,
    })
}
