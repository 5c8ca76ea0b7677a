//! Per-step latency and state-size benchmark: memoryless forward versus
//! the memory retrofit at several capacities versus frame stacking.
//!
//! Latency is the wall-clock median over `repetitions` timed steps after
//! untimed warm-up steps (buffers and frame windows are filled first, so
//! the timed steps run at full history). Configurations are timed in an
//! interleaved round-robin so slow drifts in machine load hit all of them.
//! Memory is a scalar-count proxy computed from tensor shapes.

use std::collections::VecDeque;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::backbone::{Backbone, EpisodeMemory, StepOutput};
use crate::config::{BackboneConfig, TempoFitConfig};
use crate::error::{Error, Result};
use crate::numerics::Tokens;

use super::aliasing::random_frame;

pub const DEFAULT_WARMUP: usize = 5;
pub const MIN_REPETITIONS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchOptions {
    pub capacities: Vec<usize>,
    pub stack_sizes: Vec<usize>,
    pub repetitions: usize,
    pub warmup: usize,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            capacities: vec![4, 8, 16, 32],
            stack_sizes: vec![4, 8],
            repetitions: 20,
            warmup: DEFAULT_WARMUP,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Memoryless,
    Tempofit,
    Stacked,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub label: String,
    pub method: Method,
    pub history_length: usize,
    pub median_latency_ms: f64,
    pub mean_latency_ms: f64,
    pub latency_ratio: f64,
    /// Scalars that persist across steps (buffers or frame window).
    pub state_scalars: usize,
    /// Weights + peak activations + transient retrieval tensors + state.
    pub peak_scalars: usize,
    pub peak_ratio: f64,
    pub attention_score_macs: u64,
    pub retrieval_score_macs: u64,
    pub attention_macs_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub backbone: BackboneConfig,
    pub memory_layers: Vec<usize>,
    pub repetitions: usize,
    pub warmup: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn row(&self, label: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

pub fn tempofit_label(capacity: usize) -> String {
    format!("tempofit_c{capacity}")
}

pub fn stacked_label(frames: usize) -> String {
    format!("stacked_f{frames}")
}

enum Runner {
    Memoryless,
    Tempofit {
        cfg: TempoFitConfig,
        memory: EpisodeMemory,
        t: u64,
    },
    Stacked {
        window: VecDeque<Tokens>,
    },
}

impl Runner {
    fn step(&mut self, backbone: &Backbone, frame: &Tokens) -> Result<StepOutput> {
        match self {
            Runner::Memoryless => backbone.step_memoryless(frame),
            Runner::Tempofit { cfg, memory, t } => {
                let out = backbone.step(cfg, memory, frame, *t)?;
                *t += 1;
                Ok(out)
            }
            Runner::Stacked { window } => {
                window.pop_front();
                window.push_back(frame.clone());
                backbone.step_stacked(window.make_contiguous())
            }
        }
    }
}

struct Slot {
    label: String,
    method: Method,
    history: usize,
    runner: Runner,
    state_scalars: usize,
    /// Snapshot and retrieval weights of one memory layer; released
    /// before the next layer runs.
    transient_scalars: usize,
    n_tokens: usize,
    samples: Vec<f64>,
    last: Option<StepOutput>,
}

/// Measures every configuration; the first row is the memoryless baseline.
pub fn bench_efficiency(
    backbone: &Backbone,
    tempofit: &TempoFitConfig,
    options: &BenchOptions,
) -> Result<BenchReport> {
    if options.repetitions < MIN_REPETITIONS {
        return Err(Error::Config(format!(
            "benchmark needs at least {MIN_REPETITIONS} repetitions, got {}",
            options.repetitions
        )));
    }
    let cfg = backbone.config();
    let (s, dm) = (cfg.prefix_tokens, cfg.model_dim());
    let batch = 1;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let pool: Vec<Tokens> = (0..16)
        .map(|_| random_frame(&mut rng, s, dm))
        .collect::<Result<_>>()?;
    let frame = |i: usize| &pool[i % pool.len()];

    let mut slots = vec![Slot {
        label: "memoryless".into(),
        method: Method::Memoryless,
        history: 1,
        runner: Runner::Memoryless,
        state_scalars: 0,
        transient_scalars: 0,
        n_tokens: s,
        samples: Vec::new(),
        last: None,
    }];
    for &c in &options.capacities {
        let mut tf = tempofit.clone();
        tf.enabled = true;
        tf.capacity = c;
        tf.diagnostics = false;
        tf.record_weights = false;
        tf.validate(cfg)?;
        let memory = EpisodeMemory::new(&tf)?;
        let m = c * s;
        let per_layer = 2 * batch * m * dm + batch * cfg.num_heads * s * m;
        slots.push(Slot {
            label: tempofit_label(c),
            method: Method::Tempofit,
            history: c,
            state_scalars: tf.state_scalars(cfg, batch),
            transient_scalars: per_layer,
            runner: Runner::Tempofit {
                cfg: tf,
                memory,
                t: 0,
            },
            n_tokens: s,
            samples: Vec::new(),
            last: None,
        });
    }
    for &f in &options.stack_sizes {
        if f == 0 {
            return Err(Error::Config("stack size must be >= 1".into()));
        }
        slots.push(Slot {
            label: stacked_label(f),
            method: Method::Stacked,
            history: f,
            runner: Runner::Stacked {
                window: (0..f).map(|i| frame(i).clone()).collect(),
            },
            state_scalars: f * batch * s * dm,
            transient_scalars: 0,
            n_tokens: f * s,
            samples: Vec::new(),
            last: None,
        });
    }

    let mut cursor = 0usize;
    for slot in &mut slots {
        let fill = match slot.method {
            Method::Tempofit => slot.history,
            _ => 0,
        };
        for _ in 0..fill + options.warmup {
            slot.runner.step(backbone, frame(cursor))?;
            cursor += 1;
        }
    }
    for _ in 0..options.repetitions {
        for slot in &mut slots {
            let obs = frame(cursor);
            cursor += 1;
            let start = Instant::now();
            let out = slot.runner.step(backbone, obs)?;
            slot.samples.push(start.elapsed().as_secs_f64() * 1e3);
            slot.last = Some(out);
        }
    }

    let weights = backbone.weights().scalar_count();
    let base_median = median(&slots[0].samples);
    let base_peak = weights + activation_scalars(cfg, batch, s, s);
    let base_macs = slots[0]
        .last
        .as_ref()
        .expect("timed")
        .ops
        .attention_score_macs;

    let rows = slots
        .into_iter()
        .map(|slot| {
            let out = slot.last.expect("timed at least once");
            let attended = out.max_attended_length();
            let peak = weights
                + activation_scalars(cfg, batch, slot.n_tokens, attended)
                + slot.transient_scalars
                + slot.state_scalars;
            let med = median(&slot.samples);
            BenchRow {
                label: slot.label,
                method: slot.method,
                history_length: slot.history,
                median_latency_ms: med,
                mean_latency_ms: slot.samples.iter().sum::<f64>() / slot.samples.len() as f64,
                latency_ratio: med / base_median,
                state_scalars: slot.state_scalars,
                peak_scalars: peak,
                peak_ratio: peak as f64 / base_peak as f64,
                attention_score_macs: out.ops.attention_score_macs,
                retrieval_score_macs: out.ops.retrieval_score_macs,
                attention_macs_ratio: out.ops.attention_score_macs as f64 / base_macs as f64,
            }
        })
        .collect();

    Ok(BenchReport {
        backbone: cfg.clone(),
        memory_layers: tempofit.mem_layers.iter().copied().collect(),
        repetitions: options.repetitions,
        warmup: options.warmup,
        rows,
    })
}

/// Live activation scalars of one layer's forward with `n_query` tokens
/// attending over `n_key` keys: residual stream, normed input, attention
/// output, Q, K/V at attended length, score matrix and the two MLP branches.
pub fn activation_scalars(
    cfg: &BackboneConfig,
    batch: usize,
    n_query: usize,
    n_key: usize,
) -> usize {
    let dm = cfg.model_dim();
    batch
        * (3 * n_query * dm
            + n_query * dm
            + 2 * n_key * dm
            + cfg.num_heads * n_query * n_key
            + 2 * n_query * cfg.mlp_dim())
}

/// Attention score multiply-accumulates for one forward with `n` tokens.
pub fn attention_score_macs(cfg: &BackboneConfig, batch: usize, n: usize) -> u64 {
    (cfg.num_layers * batch * cfg.num_heads * n * n * cfg.head_dim) as u64
}

/// Retrieval score multiply-accumulates per step at full capacity.
pub fn retrieval_score_macs(cfg: &BackboneConfig, tempofit: &TempoFitConfig, batch: usize) -> u64 {
    let s = cfg.prefix_tokens;
    (tempofit.mem_layers.len() * batch * cfg.num_heads * s * tempofit.capacity * s * cfg.head_dim)
        as u64
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
