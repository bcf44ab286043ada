use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Versioned JSON envelope written next to every experiment's tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary<C, R> {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub experiment: String,
    pub seed: u64,
    /// SHA-256 of the compact JSON form of `config`.
    pub config_hash: String,
    pub config: C,
    pub results: R,
}

impl<C: Serialize, R: Serialize> ExperimentSummary<C, R> {
    pub fn new(experiment: &str, seed: u64, config: C, results: R) -> Result<Self> {
        Ok(ExperimentSummary {
            schema_version: SCHEMA_VERSION,
            tool: "rwplab".into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            experiment: experiment.into(),
            seed,
            config_hash: config_hash(&config)?,
            config,
            results,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

pub fn config_hash<C: Serialize>(config: &C) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// One header row plus one row per record.
pub fn to_csv_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::input(format!("csv output is not UTF-8: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub label: String,
    pub x_label: String,
    pub y_label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// x/y series for external plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub experiment: String,
    pub series: Vec<PlotSeries>,
}
