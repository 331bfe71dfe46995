//! JSON and CSV artifacts.
//!
//! Reports carry no timestamps or host data, so identical configurations
//! produce byte-identical files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::bounds::TIME_ORIGIN;
use crate::error::Result;

/// Assumptions shared by every artifact of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportConventions {
    pub time_origin: String,
    pub reachability: String,
    pub profile_depth: usize,
    pub t_cert: usize,
    pub t_dp: usize,
    pub stationary_tol: f64,
    pub q_xi_tol: f64,
    pub notes: Vec<String>,
}

impl ReportConventions {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        ReportConventions {
            time_origin: TIME_ORIGIN.into(),
            reachability: "pairs with xi(z, a) = 0 are unreachable; gaps, model errors and rho are taken over \
                           reachable pairs and active agent states, i.e. over the recurrent support"
                .into(),
            profile_depth: cfg.bounds.profile_depth,
            t_cert: cfg.bounds.t_cert,
            t_dp: cfg.bounds.t_dp,
            stationary_tol: cfg.stationary.tol,
            q_xi_tol: cfg.solve.tol,
            notes: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub tool: String,
    pub version: String,
    pub conventions: ReportConventions,
    pub config: ExperimentConfig,
    pub body: T,
}

impl<T> Report<T> {
    pub fn new(cfg: &ExperimentConfig, body: T) -> Self {
        Report {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            conventions: ReportConventions::from_config(cfg),
            config: ExperimentConfig {
                out: None,
                ..cfg.clone()
            },
            body,
        }
    }

    pub fn with_notes(mut self, notes: impl IntoIterator<Item = String>) -> Self {
        self.conventions.notes.extend(notes);
        self
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// One header line from the field names, one line per row.
pub fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Joins a float profile into one CSV cell.
pub fn join_floats(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}
