//! Per-step retrieval weight traces as flat CSV rows.

use std::path::Path;

use serde::Serialize;

use crate::backbone::{Backbone, EpisodeMemory, StepOutput};
use crate::config::TempoFitConfig;
use crate::error::{Error, Result};
use crate::kv_memory::MemoryMetadata;
use crate::numerics::Tokens;

use super::report::write_csv;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: u64,
    pub layer: usize,
    pub batch: usize,
    pub head: usize,
    pub query_token: usize,
    pub history_token: usize,
    pub tau: u64,
    pub weight: f64,
}

/// Flattens the recorded weight matrices of one step. Steps without history
/// (or without recorded weights) yield no rows.
pub fn trace_rows(t: u64, out: &StepOutput) -> Vec<TraceRow> {
    let mut rows = Vec::new();
    for (layer, r) in out.retrievals() {
        let Some(w) = &r.weights else { continue };
        let [b_dim, h_dim, s_dim, m_dim] = w.dims();
        for b in 0..b_dim {
            for h in 0..h_dim {
                for i in 0..s_dim {
                    for (j, &weight) in w.row(b, h, i).iter().enumerate().take(m_dim) {
                        rows.push(TraceRow {
                            t,
                            layer,
                            batch: b,
                            head: h,
                            query_token: i,
                            history_token: j,
                            tau: r.token_timesteps[j],
                            weight,
                        });
                    }
                }
            }
        }
    }
    rows
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeTrace {
    pub steps: u64,
    pub rows: Vec<TraceRow>,
    /// Buffer state after the final step.
    pub memory: Vec<MemoryMetadata>,
}

/// Runs `frames` as one episode (t = 0, 1, ...) and collects weight rows.
pub fn run_trace(
    backbone: &Backbone,
    tempofit: &TempoFitConfig,
    frames: &[Tokens],
) -> Result<EpisodeTrace> {
    if !(tempofit.diagnostics && tempofit.record_weights) {
        return Err(Error::Config(
            "tracing needs diagnostics and record_weights enabled".into(),
        ));
    }
    let mut memory = EpisodeMemory::new(tempofit)?;
    let mut rows = Vec::new();
    for (t, obs) in frames.iter().enumerate() {
        let out = backbone.step(tempofit, &mut memory, obs, t as u64)?;
        rows.extend(trace_rows(t as u64, &out));
    }
    Ok(EpisodeTrace {
        steps: frames.len() as u64,
        rows,
        memory: memory.metadata(),
    })
}

pub fn write_trace_csv(path: &Path, rows: &[TraceRow]) -> Result<()> {
    write_csv(path, rows)
}
