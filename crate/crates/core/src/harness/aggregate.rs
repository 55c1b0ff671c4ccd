//! Replica fan-out, per-round aggregation and CSV output.

use std::io::Write;

use rayon::prelude::*;

use crate::error::Result;

use super::config::ExperimentConfig;
use super::sim::{run_replica, MetricsRow, ReplicaResult};

pub const CSV_HEADER: &str =
    "method,run_id,round_id,steps_total,steps_per_target,hits,mean_reward,asks,gives,budget_left";

/// Metrics that are averaged across replicas.
pub const METRICS: [&str; 7] = [
    "steps_total",
    "steps_per_target",
    "hits",
    "mean_reward",
    "asks",
    "gives",
    "budget_left",
];

pub fn metric_value(row: &MetricsRow, metric: &str) -> f64 {
    match metric {
        "steps_total" => row.steps_total as f64,
        "steps_per_target" => row.steps_per_target,
        "hits" => row.hits as f64,
        "mean_reward" => row.mean_reward,
        "asks" => row.asks as f64,
        "gives" => row.gives as f64,
        "budget_left" => row.budget_left as f64,
        other => panic!("unknown metric `{other}`"),
    }
}

/// Running mean and standard error (Welford).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MeanSe {
    pub n: u64,
    mean: f64,
    m2: f64,
}

impl MeanSe {
    pub fn push(&mut self, x: f64) {
        if x.is_nan() {
            return;
        }
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn from_values(xs: impl IntoIterator<Item = f64>) -> Self {
        let mut s = Self::default();
        xs.into_iter().for_each(|x| s.push(x));
        s
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.mean
        }
    }

    /// Sample standard deviation over `sqrt(n)`; zero for a single value.
    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundSummary {
    pub round_id: usize,
    /// `(metric, statistics)` in [`METRICS`] order.
    pub metrics: Vec<(&'static str, MeanSe)>,
}

impl RoundSummary {
    pub fn get(&self, metric: &str) -> MeanSe {
        self.metrics
            .iter()
            .find(|(m, _)| *m == metric)
            .map(|(_, s)| *s)
            .unwrap_or_default()
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    /// In replica-id order.
    pub replicas: Vec<ReplicaResult>,
    pub rounds: Vec<RoundSummary>,
}

/// Per-round mean and standard error over replicas. The result depends only
/// on the multiset of replicas, not their order.
pub fn summarize(replicas: &[ReplicaResult], rounds: usize) -> Vec<RoundSummary> {
    let mut sorted: Vec<&ReplicaResult> = replicas.iter().collect();
    sorted.sort_by_key(|r| r.run_id);
    (0..rounds)
        .map(|round_id| RoundSummary {
            round_id,
            metrics: METRICS
                .iter()
                .map(|&m| {
                    let stats = MeanSe::from_values(
                        sorted
                            .iter()
                            .filter_map(|r| r.rows.get(round_id))
                            .map(|row| metric_value(row, m)),
                    );
                    (m, stats)
                })
                .collect(),
        })
        .collect()
}

/// Runs `config.runs` replicas (in parallel) and aggregates them.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let replicas = (0..config.runs as u64)
        .into_par_iter()
        .map(|id| run_replica(config, id))
        .collect::<Result<Vec<_>>>()?;
    let rounds = summarize(&replicas, config.rounds);
    Ok(ExperimentResult {
        config: config.clone(),
        replicas,
        rounds,
    })
}

/// Per-replica mean of `metric` over rounds `[from, to)`.
pub fn replica_window_means(result: &ExperimentResult, metric: &str, from: usize, to: usize) -> Vec<f64> {
    result
        .replicas
        .iter()
        .map(|r| {
            let s = MeanSe::from_values(r.rows[from..to].iter().map(|row| metric_value(row, metric)));
            s.mean()
        })
        .collect()
}

pub fn write_rows_csv<W: Write>(mut w: W, replicas: &[ReplicaResult], header: bool) -> Result<()> {
    if header {
        writeln!(w, "{CSV_HEADER}")?;
    }
    for r in replicas {
        for row in &r.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                row.method,
                row.run_id,
                row.round_id,
                row.steps_total,
                row.steps_per_target,
                row.hits,
                row.mean_reward,
                row.asks,
                row.gives,
                row.budget_left
            )?;
        }
    }
    Ok(())
}

pub fn write_summary_csv<W: Write>(mut w: W, result: &ExperimentResult) -> Result<()> {
    writeln!(w, "method,round_id,metric,mean,stderr,n")?;
    for round in &result.rounds {
        for (m, s) in &round.metrics {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                result.config.method,
                round.round_id,
                m,
                s.mean(),
                s.stderr(),
                s.n
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_se_matches_textbook() {
        let s = MeanSe::from_values([1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean(), 2.5);
        // sd = sqrt(5/3), se = sd / 2
        assert!((s.stderr() - (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-12);
        assert_eq!(MeanSe::from_values([7.0]).stderr(), 0.0);
        assert_eq!(MeanSe::from_values([f64::NAN, 1.0]).n, 1);
    }
}
