//! One-axis-at-a-time ablation grid over the retrofit's design choices.
//!
//! Each cell changes a single choice relative to the full configuration
//! (K-to-K retrieval, frame-gap bias, norm-preserving residual loading,
//! intermediate layers, C = 8) and is scored on a suite of aliasing tasks.

use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use crate::backbone::{Backbone, StepOutput};
use crate::config::{BackboneConfig, LayerSubset, TempoFitConfig};
use crate::error::Result;
use crate::injection::InjectionMode;
use crate::retrieval::RetrievalMode;

use super::aliasing::{l2, run_stream, AliasingTask};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    /// Memory disabled.
    None,
    /// Memory with the frame-gap bias switched off (beta = 0).
    KvOnly,
    KvFgtb,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationCell {
    pub name: String,
    pub axis: String,
    pub component: Component,
    pub retrieval_mode: RetrievalMode,
    pub injection_mode: InjectionMode,
    pub layers: LayerSubset,
    pub capacity: usize,
}

impl AblationCell {
    /// The full method; every other cell is a one-field edit of this.
    pub fn full(axis: &str, name: &str) -> Self {
        Self {
            name: name.to_string(),
            axis: axis.to_string(),
            component: Component::KvFgtb,
            retrieval_mode: RetrievalMode::KToK,
            injection_mode: InjectionMode::ResidualNormPreserving,
            layers: LayerSubset::Intermediate,
            capacity: TempoFitConfig::DEFAULT_CAPACITY,
        }
    }

    /// Resolves the cell against a backbone; `base` supplies beta, epsilon
    /// and slope settings for the KV+FGTB component.
    pub fn tempofit_config(
        &self,
        backbone: &BackboneConfig,
        base: &TempoFitConfig,
    ) -> Result<TempoFitConfig> {
        let mut cfg = base.clone();
        cfg.enabled = self.component != Component::None;
        if self.component == Component::KvOnly {
            cfg.beta = 0.0;
        }
        cfg.retrieval_mode = self.retrieval_mode;
        cfg.injection_mode = self.injection_mode;
        cfg.mem_layers = self.layers.indices(backbone.num_layers);
        cfg.capacity = self.capacity;
        cfg.validate(backbone)?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationGrid {
    pub cells: Vec<AblationCell>,
}

impl AblationGrid {
    /// Component, retrieval, injection, layer and capacity axes with the
    /// given capacities on the last axis.
    pub fn standard_with_capacities(capacities: &[usize]) -> Self {
        let mut cells = Vec::new();
        let full = |axis: &str, name: &str| AblationCell::full(axis, name);

        cells.push(AblationCell {
            component: Component::None,
            ..full("component", "baseline_no_memory")
        });
        cells.push(AblationCell {
            component: Component::KvOnly,
            ..full("component", "kv_memory_only")
        });
        cells.push(full("component", "kv_memory_fgtb"));

        cells.push(AblationCell {
            retrieval_mode: RetrievalMode::QToK,
            ..full("retrieval", "q_to_k")
        });
        cells.push(full("retrieval", "k_to_k"));

        cells.push(AblationCell {
            injection_mode: InjectionMode::Concatenate,
            ..full("injection", "concatenation")
        });
        cells.push(AblationCell {
            injection_mode: InjectionMode::ResidualPlain,
            ..full("injection", "residual_plain")
        });
        cells.push(full("injection", "residual_norm_preserving"));

        for subset in [
            LayerSubset::All,
            LayerSubset::Bottom,
            LayerSubset::Top,
            LayerSubset::Intermediate,
        ] {
            cells.push(AblationCell {
                layers: subset,
                ..full("layers", &format!("layers_{}", subset.name()))
            });
        }

        for &c in capacities {
            cells.push(AblationCell {
                capacity: c,
                ..full("capacity", &format!("capacity_{c}"))
            });
        }
        Self { cells }
    }

    pub fn standard() -> Self {
        Self::standard_with_capacities(&[4, 8, 16, 32])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub name: String,
    pub axis: String,
    pub component: Component,
    pub retrieval_mode: RetrievalMode,
    pub injection_mode: InjectionMode,
    pub layers: LayerSubset,
    pub capacity: usize,
    pub tasks: usize,
    /// Mean ‖H_t*(A) − H_t*(B)‖ with this cell's configuration.
    pub divergence: f64,
    pub action_divergence: f64,
    /// Same quantity for the memoryless forward.
    pub memoryless_divergence: f64,
    /// Mean weight on the newest stored timestep at t*, over memory layers.
    pub recent_mass: Option<f64>,
    pub weight_entropy: Option<f64>,
    pub norm_drift: Option<f64>,
    pub max_attended_length: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SkippedCell {
    pub name: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationReport {
    pub backbone: BackboneConfig,
    pub rows: Vec<AblationRow>,
    pub skipped: Vec<SkippedCell>,
}

impl AblationReport {
    pub fn row(&self, name: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

/// Scores every valid cell on `tasks`; invalid cells are skipped with a warning.
pub fn run_ablation(
    backbone: &Backbone,
    base: &TempoFitConfig,
    grid: &AblationGrid,
    tasks: &[AliasingTask],
) -> Result<AblationReport> {
    let memoryless: Vec<f64> = tasks
        .iter()
        .map(|task| {
            let t = task.alias_step as usize;
            let a = backbone.step_memoryless(&task.stream_a[t])?;
            let b = backbone.step_memoryless(&task.stream_b[t])?;
            a.hidden.distance(&b.hidden)
        })
        .collect::<Result<_>>()?;
    let memoryless_divergence = mean(&memoryless);

    let outcomes: Vec<_> = grid
        .cells
        .par_iter()
        .map(|cell| match cell.tempofit_config(backbone.config(), base) {
            Ok(cfg) => score_cell(backbone, cell, &cfg, tasks, memoryless_divergence).map(Ok),
            Err(e) => Ok(Err(SkippedCell {
                name: cell.name.clone(),
                reason: e.to_string(),
            })),
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(row) => rows.push(row),
            Err(s) => {
                warn!("skipping ablation cell {}: {}", s.name, s.reason);
                skipped.push(s);
            }
        }
    }
    Ok(AblationReport {
        backbone: backbone.config().clone(),
        rows,
        skipped,
    })
}

fn score_cell(
    backbone: &Backbone,
    cell: &AblationCell,
    cfg: &TempoFitConfig,
    tasks: &[AliasingTask],
    memoryless_divergence: f64,
) -> Result<AblationRow> {
    let mut divergence = Vec::new();
    let mut action = Vec::new();
    let mut recent = Vec::new();
    let mut entropy = Vec::new();
    let mut drift = Vec::new();
    let mut max_attended = 0;
    for task in tasks {
        let (a, _) = run_stream(backbone, cfg, &task.stream_a, task.alias_step)?;
        let (b, _) = run_stream(backbone, cfg, &task.stream_b, task.alias_step)?;
        divergence.push(a.hidden.distance(&b.hidden)?);
        action.push(l2(&a.action, &b.action));
        max_attended = max_attended.max(a.max_attended_length());
        collect_retrieval(&a, &mut recent, &mut entropy, &mut drift);
    }
    let opt_mean = |xs: &[f64]| (!xs.is_empty()).then(|| mean(xs));
    Ok(AblationRow {
        name: cell.name.clone(),
        axis: cell.axis.clone(),
        component: cell.component,
        retrieval_mode: cell.retrieval_mode,
        injection_mode: cell.injection_mode,
        layers: cell.layers,
        capacity: cell.capacity,
        tasks: tasks.len(),
        divergence: mean(&divergence),
        action_divergence: mean(&action),
        memoryless_divergence,
        recent_mass: opt_mean(&recent),
        weight_entropy: opt_mean(&entropy),
        norm_drift: opt_mean(&drift),
        max_attended_length: max_attended,
    })
}

fn collect_retrieval(
    out: &StepOutput,
    recent: &mut Vec<f64>,
    entropy: &mut Vec<f64>,
    drift: &mut Vec<f64>,
) {
    for (_, r) in out.retrievals() {
        recent.extend(r.recent_mass);
        entropy.extend(r.mean_entropy);
        drift.push(0.5 * (r.norm_drift_k + r.norm_drift_v));
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}
