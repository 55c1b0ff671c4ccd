//! One-axis parameter sweeps over all three methods.

use std::io::Write;

use crate::error::{Error, Result};

use super::aggregate::run_experiment;
use super::config::{ExperimentConfig, Method};

pub const SWEEP_HEADER: &str = "axis,value,method,round_id,metric,mean,stderr,n";

/// Runs one experiment per `(value, method)` and writes long-format rows.
/// `axis` is any config key (plus `grid_size` as `WxH`).
pub fn sweep<W: Write>(base: &ExperimentConfig, axis: &str, values: &[String], mut out: W) -> Result<()> {
    if values.is_empty() {
        return Err(Error::config(axis, "sweep needs at least one value"));
    }
    // Reject bad values before spending time on any run.
    let mut configs = Vec::with_capacity(values.len() * Method::ALL.len());
    for value in values {
        for method in Method::ALL {
            let mut cfg = base.clone();
            cfg.set(axis, value)?;
            cfg.method = method;
            cfg.validate()?;
            configs.push((value, cfg));
        }
    }
    writeln!(out, "{SWEEP_HEADER}")?;
    for (value, cfg) in configs {
        let result = run_experiment(&cfg)?;
        for round in &result.rounds {
            for (metric, s) in &round.metrics {
                writeln!(
                    out,
                    "{axis},{value},{},{},{metric},{},{},{}",
                    cfg.method,
                    round.round_id,
                    s.mean(),
                    s.stderr(),
                    s.n
                )?;
            }
        }
    }
    Ok(())
}
