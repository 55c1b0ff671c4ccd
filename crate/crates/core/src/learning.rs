//! Tabular Q-learning with incremental policy improvement.
//!
//! Each agent keeps a sparse [`QTable`] (only visited states exist) and a
//! [`PolicyTable`] of per-state action distributions. One time step of the
//! learning part is: sample an action from the policy row, apply
//! [`q_update`] to the executed action, nudge the row toward actions whose
//! value beats the policy-weighted average ([`policy_improve`]), then decay
//! the learning rate ([`decay_alpha`]).

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};

use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::numerics::{normalize_policy, RngStream};

/// An m-dimensional integer state.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateVec(SmallVec<[i32; 8]>);

impl StateVec {
    pub fn new(dims: impl IntoIterator<Item = i32>) -> Self {
        Self(dims.into_iter().collect())
    }

    pub fn dims(&self) -> &[i32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Copy of `self` with `delta` added to dimension `dim`.
    pub fn offset(&self, dim: usize, delta: i32) -> Self {
        let mut v = self.clone();
        v.0[dim] += delta;
        v
    }
}

impl From<&[i32]> for StateVec {
    fn from(d: &[i32]) -> Self {
        Self::new(d.iter().copied())
    }
}

impl<const N: usize> From<[i32; N]> for StateVec {
    fn from(d: [i32; N]) -> Self {
        Self::new(d)
    }
}

impl fmt::Display for StateVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QEntry<S> {
    pub q_values: Vec<S>,
    pub visits: u64,
}

/// Sparse Q-table: visited states only, each with `k` action values.
#[derive(Clone, Debug)]
pub struct QTable<S> {
    actions: usize,
    entries: HashMap<StateVec, QEntry<S>>,
}

impl<S: Scalar> QTable<S> {
    pub fn new(actions: usize) -> Self {
        assert!(actions > 0, "a Q-table needs at least one action");
        Self {
            actions,
            entries: HashMap::new(),
        }
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, s: &StateVec) -> Option<&QEntry<S>> {
        self.entries.get(s)
    }

    pub fn visits(&self, s: &StateVec) -> u64 {
        self.entries.get(s).map_or(0, |e| e.visits)
    }

    /// Q-vector for `s`; `None` if never visited.
    pub fn q_values(&self, s: &StateVec) -> Option<&[S]> {
        self.entries.get(s).map(|e| e.q_values.as_slice())
    }

    /// Max action value in `s`, zero for unvisited states.
    pub fn max_q(&self, s: &StateVec) -> S {
        self.q_values(s)
            .map(|q| q.iter().copied().fold(S::neg_infinity(), S::max))
            .unwrap_or_else(S::zero)
    }

    /// Counts one observation of `s`, creating a zeroed entry on first visit.
    /// Returns the updated visit count.
    pub fn record_visit(&mut self, s: &StateVec) -> u64 {
        let k = self.actions;
        let e = self.entries.entry(s.clone()).or_insert_with(|| QEntry {
            q_values: vec![S::zero(); k],
            visits: 0,
        });
        e.visits += 1;
        e.visits
    }

    pub fn q_mut(&mut self, s: &StateVec) -> Option<&mut [S]> {
        self.entries.get_mut(s).map(|e| e.q_values.as_mut_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StateVec, &QEntry<S>)> {
        self.entries.iter()
    }

    /// Inserts or replaces an entry. Used by fixtures and snapshot loading.
    pub fn insert(&mut self, s: StateVec, q_values: Vec<S>, visits: u64) -> Result<()> {
        if q_values.len() != self.actions {
            return Err(Error::DimensionMismatch {
                left: q_values.len(),
                right: self.actions,
            });
        }
        self.entries.insert(s, QEntry { q_values, visits });
        Ok(())
    }

    /// Writes `state-dims | q-values | visits` lines in lexicographic state order.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        let mut states: Vec<_> = self.entries.iter().collect();
        states.sort_by(|a, b| a.0.cmp(b.0));
        for (s, e) in states {
            let q: Vec<String> = e.q_values.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{s} | {} | {}", q.join(","), e.visits)?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: BufRead>(actions: usize, r: R) -> Result<Self> {
        let mut table = Self::new(actions);
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |m: &str| Error::Parse {
                line: i + 1,
                message: m.to_string(),
            };
            let parts: Vec<&str> = line.split('|').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(bad("expected three `|`-separated fields"));
            }
            let dims = parts[0]
                .split(',')
                .map(|d| d.trim().parse::<i32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad("bad state dimension"))?;
            let q = parts[1]
                .split(',')
                .map(|v| v.trim().parse::<f64>().map(S::lit))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad("bad q-value"))?;
            let visits = parts[2].parse::<u64>().map_err(|_| bad("bad visit count"))?;
            table.insert(StateVec::new(dims), q, visits)?;
        }
        Ok(table)
    }
}

/// Per-state action distributions, each kept at or above a positive floor.
#[derive(Clone, Debug)]
pub struct PolicyTable<S> {
    actions: usize,
    floor: S,
    rows: HashMap<StateVec, Vec<S>>,
}

impl<S: Scalar> PolicyTable<S> {
    pub fn new(actions: usize, floor: S) -> Result<Self> {
        if actions == 0 {
            return Err(Error::param("a policy needs at least one action"));
        }
        if !(floor > S::zero()) || floor * S::lit(actions as f64) >= S::one() {
            return Err(Error::param(format!(
                "policy floor {floor} invalid for {actions} actions"
            )));
        }
        Ok(Self {
            actions,
            floor,
            rows: HashMap::new(),
        })
    }

    pub fn floor(&self) -> S {
        self.floor
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn row(&self, s: &StateVec) -> Option<&[S]> {
        self.rows.get(s).map(Vec::as_slice)
    }

    /// Row for `s`, initialized uniform on first access.
    pub fn row_or_uniform(&mut self, s: &StateVec) -> &mut Vec<S> {
        let k = self.actions;
        self.rows
            .entry(s.clone())
            .or_insert_with(|| vec![S::one() / S::lit(k as f64); k])
    }

    pub fn set_row(&mut self, s: &StateVec, row: Vec<S>) {
        debug_assert_eq!(row.len(), self.actions);
        self.rows.insert(s.clone(), row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Records one observation of `s` in both tables (zero Q-row, uniform policy row
/// on first visit). Returns the new visit count.
pub fn record_visit<S: Scalar>(q: &mut QTable<S>, pi: &mut PolicyTable<S>, s: &StateVec) -> u64 {
    pi.row_or_uniform(s);
    q.record_visit(s)
}

/// Learning-rate state. `alpha` is always `alpha0 / t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LearnerParams<S> {
    pub alpha: S,
    pub alpha0: S,
    pub gamma: S,
    pub zeta: S,
    pub t: u64,
}

impl<S: Scalar> LearnerParams<S> {
    pub fn new(alpha0: S, gamma: S, zeta: S) -> Result<Self> {
        let unit = |name: &str, v: S| {
            if v > S::zero() && v < S::one() {
                Ok(())
            } else {
                Err(Error::param(format!("{name} must lie in (0, 1), got {v}")))
            }
        };
        unit("alpha", alpha0)?;
        unit("gamma", gamma)?;
        unit("zeta", zeta)?;
        Ok(Self {
            alpha: alpha0,
            alpha0,
            gamma,
            zeta,
            t: 1,
        })
    }
}

/// `(1 - alpha) * q_sa + alpha * (r + gamma * max_q_next)`.
#[inline]
pub fn q_update<S: Scalar>(q_sa: S, r: S, max_q_next: S, alpha: S, gamma: S) -> S {
    (S::one() - alpha) * q_sa + alpha * (r + gamma * max_q_next)
}

/// Moves each action's probability by `zeta * (Q(a) - r_bar)` where `r_bar` is
/// the policy-weighted mean of `q_s`, then renormalizes with the floor.
pub fn policy_improve<S: Scalar>(pi_s: &[S], q_s: &[S], zeta: S, floor: S) -> Result<Vec<S>> {
    if pi_s.len() != q_s.len() {
        return Err(Error::DimensionMismatch {
            left: pi_s.len(),
            right: q_s.len(),
        });
    }
    let r_bar: S = pi_s.iter().zip(q_s).map(|(&p, &q)| p * q).sum();
    let raw: Vec<S> = pi_s
        .iter()
        .zip(q_s)
        .map(|(&p, &q)| p + zeta * (q - r_bar))
        .collect();
    normalize_policy(&raw, floor)
}

/// One step of the harmonic decay `alpha <- t/(t+1) * alpha`.
///
/// Evaluated in closed form as `alpha0 / (t+1)` so that repeated decays
/// accumulate no rounding drift.
pub fn decay_alpha<S: Scalar>(params: LearnerParams<S>) -> LearnerParams<S> {
    let t = params.t + 1;
    LearnerParams {
        alpha: params.alpha0 / S::lit(t as f64),
        t,
        ..params
    }
}

/// Samples an action index by inverting the cumulative distribution of `pi_s`.
pub fn select_action<S: Scalar>(pi_s: &[S], rng: &mut RngStream) -> usize {
    debug_assert!(!pi_s.is_empty());
    let u = rng.uniform();
    let mut acc = 0.0;
    for (i, p) in pi_s.iter().enumerate() {
        acc += p.as_f64();
        if u < acc {
            return i;
        }
    }
    pi_s.len() - 1
}

/// Index of the largest value; ties go to the smallest index.
pub fn argmax<S: Scalar>(values: &[S]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_update_examples() {
        assert!((q_update(0.0_f64, 10.0, 5.0, 0.2, 0.8) - 2.8).abs() < 1e-12);
        assert_eq!(q_update(7.0_f64, 123.0, -4.0, 0.0, 0.8), 7.0);
        assert_eq!(q_update(-2.0_f64, 3.0, 9.0, 1.0, 0.0), 3.0);
    }

    #[test]
    fn policy_improve_examples() {
        let uniform = [0.25_f64; 4];
        let p = policy_improve(&uniform, &[2.0; 4], 0.3, 0.01).unwrap();
        assert_eq!(p, uniform.to_vec());

        let pi = [0.7_f64, 0.2, 0.1];
        let p = policy_improve(&pi, &[5.0, -1.0, 3.0], 0.0, 0.01).unwrap();
        for (a, b) in p.iter().zip(pi) {
            assert!((a - b).abs() < 1e-12);
        }

        // r_bar = 0.5; raw = (0.5 + 0.05, 0.5 - 0.05)
        let p = policy_improve(&[0.5_f64, 0.5], &[1.0, 0.0], 0.1, 0.01).unwrap();
        assert!((p[0] - 0.55).abs() < 1e-12 && (p[1] - 0.45).abs() < 1e-12);

        assert!(policy_improve(&[0.5_f64, 0.5], &[1.0], 0.1, 0.01).is_err());
    }

    #[test]
    fn decay_examples() {
        let p = LearnerParams::new(0.2_f64, 0.8, 0.1).unwrap();
        let p1 = decay_alpha(p);
        assert_eq!(p1.alpha, 0.1);
        assert_eq!(p1.t, 2);
        let mut q = p;
        for _ in 0..9 {
            q = decay_alpha(q);
        }
        assert_eq!(q.alpha, 0.02);
        let mut prev = q.alpha;
        for _ in 0..1000 {
            q = decay_alpha(q);
            assert!(q.alpha < prev);
            prev = q.alpha;
        }
    }

    #[test]
    fn learner_params_validate_ranges() {
        assert!(LearnerParams::new(0.0_f64, 0.8, 0.1).is_err());
        assert!(LearnerParams::new(0.2_f64, 1.0, 0.1).is_err());
        assert!(LearnerParams::new(0.2_f64, 0.8, 1.5).is_err());
    }

    #[test]
    fn select_action_frequencies() {
        let floor = 1e-4;
        let pi = [1.0 - 2.0 * floor, floor, floor];
        let mut rng = RngStream::new(5, 0);
        let n = 100_000;
        let zeros = (0..n).filter(|_| select_action(&pi, &mut rng) == 0).count();
        assert!((zeros as f64 / n as f64 - pi[0]).abs() < 0.001);

        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[select_action(&[0.25_f64; 4], &mut rng)] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 0.01);
        }

        let pick = |seed| select_action(&[0.1_f64, 0.6, 0.3], &mut RngStream::new(seed, 9));
        assert_eq!(pick(42), pick(42));
    }

    #[test]
    fn record_visit_initializes_and_counts() {
        let mut q: QTable<f64> = QTable::new(4);
        let mut pi = PolicyTable::new(4, 0.01).unwrap();
        let s = StateVec::from([0, 1, 0]);
        assert_eq!(record_visit(&mut q, &mut pi, &s), 1);
        assert_eq!(q.q_values(&s).unwrap(), &[0.0; 4]);
        assert_eq!(pi.row(&s).unwrap(), &[0.25; 4]);
        for _ in 0..3 {
            record_visit(&mut q, &mut pi, &s);
        }
        assert_eq!(record_visit(&mut q, &mut pi, &s), 5);

        let s2 = StateVec::from([1, 1, 0]);
        record_visit(&mut q, &mut pi, &s2);
        assert_eq!(q.len(), 2);
        assert_eq!(q.visits(&s2), 1);
        assert_eq!(q.visits(&s), 5);
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0_f64, 5.0, 5.0, 0.0]), 1);
        assert_eq!(argmax(&[0.0_f64; 4]), 0);
    }

    #[test]
    fn snapshot_round_trip() {
        let mut q: QTable<f64> = QTable::new(2);
        q.insert(StateVec::from([1, 0]), vec![0.5, -1.25], 3).unwrap();
        q.insert(StateVec::from([0, 2]), vec![2.8, 0.0], 1).unwrap();
        let mut buf = Vec::new();
        q.write_snapshot(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "0,2 | 2.8,0 | 1\n1,0 | 0.5,-1.25 | 3\n");
        let back = QTable::<f64>::read_snapshot(2, buf.as_slice()).unwrap();
        assert_eq!(back.get(&StateVec::from([1, 0])), q.get(&StateVec::from([1, 0])));
        assert!(QTable::<f64>::read_snapshot(2, "1,0 | 1 | 2\n".as_bytes()).is_err());
    }
}
