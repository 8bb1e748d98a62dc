//! End-to-end orchestration.
//!
//! [`analyze`] runs every computation in memory. [`run_pipeline`] and
//! [`run_stage`] do the same through on-disk artifacts under the configured
//! output directory, one directory and one manifest per stage.

mod config;
mod manifest;
mod stages;

use rayon::prelude::*;

use crate::error::Result;
use crate::market_data::ReturnPanel;
use crate::network::{correlation_set_labeled, BreakpointResult, Classifier, CorrelationSet, SignedAdjacency};
use crate::risk::{risk_series, RiskOptions, RiskSeries};
use crate::tail::{rolling_coes, CoesMatrix, TailConfig};

pub use config::{FormatTag, PipelineConfig, ENV_PREFIX, KEYS};
pub use manifest::{Manifest, MANIFEST_FILE};
pub use stages::{run_pipeline, run_stage, Stage, StageOptions, StageReport};

/// Similarities, adjacencies and breakpoint diagnostics, one per date.
#[derive(Debug, Clone)]
pub struct Networks {
    pub similarities: Vec<CorrelationSet>,
    pub adjacencies: Vec<SignedAdjacency>,
    pub breakpoints: Vec<BreakpointResult>,
}

/// Builds one network per CoES matrix; dates are processed in parallel and
/// returned in input order.
pub fn build_networks(
    coes: &[CoesMatrix],
    symbols: &[String],
    classifier: &Classifier,
) -> Result<Networks> {
    let per_date: Vec<(CorrelationSet, SignedAdjacency, BreakpointResult)> = coes
        .par_iter()
        .map(|m| {
            let cs = correlation_set_labeled(m, symbols)?;
            let (adj, bp) = classifier.classify(&cs);
            Ok((cs, adj, bp))
        })
        .collect::<Result<_>>()?;
    let mut out = Networks {
        similarities: Vec::with_capacity(per_date.len()),
        adjacencies: Vec::with_capacity(per_date.len()),
        breakpoints: Vec::with_capacity(per_date.len()),
    };
    for (cs, adj, bp) in per_date {
        out.similarities.push(cs);
        out.adjacencies.push(adj);
        out.breakpoints.push(bp);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub coes: Vec<CoesMatrix>,
    pub networks: Networks,
    pub risk: RiskSeries,
}

pub fn analyze(
    panel: &ReturnPanel,
    tail: &TailConfig,
    classifier: &Classifier,
    risk: RiskOptions,
) -> Result<Analysis> {
    let coes = rolling_coes(panel, tail)?;
    let networks = build_networks(&coes, panel.symbols(), classifier)?;
    let risk = risk_series(&networks.adjacencies, panel, &networks.similarities, risk)?;
    Ok(Analysis {
        coes,
        networks,
        risk,
    })
}
