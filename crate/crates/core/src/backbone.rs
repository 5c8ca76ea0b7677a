//! Deterministic frozen toy transformer with the per-layer memory hook.
//!
//! Each layer is pre-norm: RMS norm, Q/K/V projections, rotary attention,
//! output projection, then a gated-GELU MLP. In a memory-enabled layer the
//! raw pre-RoPE keys/values go through
//!
//! ```text
//! snapshot -> retrieve -> inject -> write raw K/V at t -> RoPE -> attention
//! ```
//!
//! so step `t` never retrieves its own entry and residual injection leaves
//! the attended length at S.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::{BackboneConfig, TempoFitConfig};
use crate::error::{Error, Result};
use crate::injection::{inject, norm_drift, InjectionMode};
use crate::kv_memory::{LayerMemory, MemoryMetadata, PrefixKV};
use crate::numerics::{
    matmul_qk, matmul_wv, rms_norm, rope_apply, softmax_rows, Matrix, RopeParams, Tensor4, Tokens,
};
use crate::retrieval::{retrieve, FgtbParams};

const NORM_EPS: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct LayerWeights {
    pub attn_norm: Vec<f64>,
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_o: Matrix,
    pub mlp_norm: Vec<f64>,
    pub w_gate: Matrix,
    pub w_up: Matrix,
    pub w_down: Matrix,
}

/// Frozen parameters. Nothing in the crate hands out `&mut` access.
#[derive(Clone, Debug, PartialEq)]
pub struct BackboneWeights {
    layers: Vec<LayerWeights>,
    final_norm: Vec<f64>,
    readout: Matrix,
}

impl BackboneWeights {
    /// Draws every parameter from a ChaCha stream seeded by `config.seed`,
    /// matrices scaled by `1/sqrt(model_dim)`.
    pub fn init(config: &BackboneConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let dm = config.model_dim();
        let dff = config.mlp_dim();
        let scale = 1.0 / (dm as f64).sqrt();

        let mut matrix = |rows: usize, cols: usize| -> Matrix {
            let data = (0..rows * cols)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    scale * z
                })
                .collect();
            Matrix::new(rows, cols, data).expect("nonzero dims")
        };
        let mut layers = Vec::with_capacity(config.num_layers);
        for _ in 0..config.num_layers {
            let w_q = matrix(dm, dm);
            let w_k = matrix(dm, dm);
            let w_v = matrix(dm, dm);
            let w_o = matrix(dm, dm);
            let w_gate = matrix(dm, dff);
            let w_up = matrix(dm, dff);
            let w_down = matrix(dff, dm);
            layers.push(LayerWeights {
                attn_norm: Vec::new(),
                w_q,
                w_k,
                w_v,
                w_o,
                mlp_norm: Vec::new(),
                w_gate,
                w_up,
                w_down,
            });
        }
        let readout = matrix(dm, config.action_dim);
        let mut gains = || -> Vec<f64> {
            (0..dm)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    1.0 + 0.05 * z
                })
                .collect()
        };
        for layer in &mut layers {
            layer.attn_norm = gains();
            layer.mlp_norm = gains();
        }
        let final_norm = gains();
        Ok(Self {
            layers,
            final_norm,
            readout,
        })
    }

    pub fn layers(&self) -> &[LayerWeights] {
        &self.layers
    }

    pub fn layer(&self, index: usize) -> &LayerWeights {
        &self.layers[index]
    }

    pub fn readout(&self) -> &Matrix {
        &self.readout
    }

    pub fn scalar_count(&self) -> usize {
        let per_layer = |l: &LayerWeights| {
            l.attn_norm.len()
                + l.mlp_norm.len()
                + [
                    &l.w_q, &l.w_k, &l.w_v, &l.w_o, &l.w_gate, &l.w_up, &l.w_down,
                ]
                .iter()
                .map(|m| m.data().len())
                .sum::<usize>()
        };
        self.layers.iter().map(per_layer).sum::<usize>()
            + self.final_norm.len()
            + self.readout.data().len()
    }

    /// Hash over the bit patterns of every parameter.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        let mut feed = |xs: &[f64]| {
            xs.len().hash(&mut h);
            for x in xs {
                x.to_bits().hash(&mut h);
            }
        };
        for l in &self.layers {
            feed(&l.attn_norm);
            for m in [&l.w_q, &l.w_k, &l.w_v, &l.w_o] {
                feed(m.data());
            }
            feed(&l.mlp_norm);
            for m in [&l.w_gate, &l.w_up, &l.w_down] {
                feed(m.data());
            }
        }
        feed(&self.final_norm);
        feed(self.readout.data());
        h.finish()
    }
}

/// Per-stream memory state: one FIFO buffer per memory-enabled layer.
#[derive(Clone, Debug)]
pub struct EpisodeMemory {
    layers: BTreeMap<usize, LayerMemory>,
    last_step: Option<u64>,
}

impl EpisodeMemory {
    pub fn new(tempofit: &TempoFitConfig) -> Result<Self> {
        let layers = tempofit
            .mem_layers
            .iter()
            .map(|&l| LayerMemory::new(l, tempofit.capacity).map(|m| (l, m)))
            .collect::<Result<_>>()?;
        Ok(Self {
            layers,
            last_step: None,
        })
    }

    /// Clears every buffer and the step clock (episode boundary).
    pub fn reset(&mut self) {
        for m in self.layers.values_mut() {
            m.reset();
        }
        self.last_step = None;
    }

    pub fn layer(&self, index: usize) -> Option<&LayerMemory> {
        self.layers.get(&index)
    }

    pub fn layers(&self) -> impl Iterator<Item = &LayerMemory> {
        self.layers.values()
    }

    pub fn last_step(&self) -> Option<u64> {
        self.last_step
    }

    pub fn scalar_count(&self) -> usize {
        self.layers.values().map(LayerMemory::scalar_count).sum()
    }

    pub fn metadata(&self) -> Vec<MemoryMetadata> {
        self.layers.values().map(LayerMemory::metadata).collect()
    }
}

/// Summary of one layer's retrieval at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalDiagnostics {
    pub history_tokens: usize,
    /// Newest timestep visible to retrieval; always below the current step.
    pub latest_history_timestep: u64,
    /// Mean weight mass on the newest stored timestep; `None` when the
    /// injection mode does not retrieve.
    pub recent_mass: Option<f64>,
    pub mean_entropy: Option<f64>,
    pub norm_drift_k: f64,
    pub norm_drift_v: f64,
    /// Full `[B, H, S, M]` weights, kept when `record_weights` is set.
    pub weights: Option<Tensor4>,
    pub token_timesteps: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerTrace {
    pub layer: usize,
    pub attended_length: usize,
    pub retrieval: Option<RetrievalDiagnostics>,
}

/// Multiply-accumulate counters, incremented from the tensor shapes actually
/// passed through the score products.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCounts {
    /// `B * H * N_query * N_key * d` summed over layers.
    pub attention_score_macs: u64,
    /// `B * H * S * M * d` summed over memory-layer retrievals.
    pub retrieval_score_macs: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    /// Final normalised hidden states `[B, N, model_dim]`.
    pub hidden: Tokens,
    /// Linear readout of the mean-pooled hidden state, `B * action_dim`.
    pub action: Vec<f64>,
    /// Residual stream after every layer.
    pub layer_outputs: Vec<Tokens>,
    pub layers: Vec<LayerTrace>,
    pub ops: OpCounts,
}

impl StepOutput {
    pub fn max_attended_length(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.attended_length)
            .max()
            .unwrap_or(0)
    }

    pub fn retrievals(&self) -> impl Iterator<Item = (usize, &RetrievalDiagnostics)> {
        self.layers
            .iter()
            .filter_map(|l| l.retrieval.as_ref().map(|r| (l.layer, r)))
    }
}

struct MemoryHook<'a> {
    config: &'a TempoFitConfig,
    fgtb: FgtbParams,
    memory: &'a mut EpisodeMemory,
    t: u64,
}

/// A frozen backbone: configuration, weights and rotary tables.
#[derive(Clone, Debug)]
pub struct Backbone {
    config: BackboneConfig,
    weights: BackboneWeights,
    rope: RopeParams,
}

impl Backbone {
    pub fn new(config: BackboneConfig) -> Result<Self> {
        let weights = BackboneWeights::init(&config)?;
        let rope = RopeParams::new(config.head_dim, config.rope_base)?;
        Ok(Self {
            config,
            weights,
            rope,
        })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }

    pub fn weights(&self) -> &BackboneWeights {
        &self.weights
    }

    /// One timestep of a memory-augmented stream.
    pub fn step(
        &self,
        tempofit: &TempoFitConfig,
        memory: &mut EpisodeMemory,
        obs: &Tokens,
        t: u64,
    ) -> Result<StepOutput> {
        if let Some(last) = memory.last_step {
            if t <= last {
                return Err(Error::Ordering(format!(
                    "step {t} does not follow step {last}"
                )));
            }
        }
        self.check_obs(obs, self.config.prefix_tokens)?;
        let out = if tempofit.enabled {
            tempofit.validate(&self.config)?;
            for &l in &tempofit.mem_layers {
                if memory.layer(l).is_none() {
                    return Err(Error::Config(format!(
                        "episode memory has no buffer for layer {l}"
                    )));
                }
            }
            let hook = MemoryHook {
                config: tempofit,
                fgtb: tempofit.fgtb_params(&self.config)?,
                memory: &mut *memory,
                t,
            };
            self.forward(obs.clone(), Some(hook))?
        } else {
            self.forward(obs.clone(), None)?
        };
        memory.last_step = Some(t);
        Ok(out)
    }

    /// Single-frame forward with no memory reads or writes.
    pub fn step_memoryless(&self, obs: &Tokens) -> Result<StepOutput> {
        self.check_obs(obs, self.config.prefix_tokens)?;
        self.forward(obs.clone(), None)
    }

    /// Frame-stacking baseline: all frames concatenated along the token axis.
    pub fn step_stacked(&self, frames: &[Tokens]) -> Result<StepOutput> {
        if frames.is_empty() {
            return Err(Error::Config("frame window is empty".into()));
        }
        for f in frames {
            self.check_obs(f, self.config.prefix_tokens)?;
        }
        let refs: Vec<&Tokens> = frames.iter().collect();
        self.forward(Tokens::concat(&refs)?, None)
    }

    fn check_obs(&self, obs: &Tokens, tokens: usize) -> Result<()> {
        if obs.len() != tokens || obs.width() != self.config.model_dim() {
            return Err(Error::Dimension(format!(
                "observation [{}, {}, {}] vs expected [B, {tokens}, {}]",
                obs.batch(),
                obs.len(),
                obs.width(),
                self.config.model_dim()
            )));
        }
        if !obs.is_finite() {
            return Err(Error::Config(
                "observation contains non-finite values".into(),
            ));
        }
        Ok(())
    }

    fn forward(&self, mut x: Tokens, mut hook: Option<MemoryHook<'_>>) -> Result<StepOutput> {
        let heads = self.config.num_heads;
        let scale = 1.0 / (self.config.head_dim as f64).sqrt();
        let n_tokens = x.len();
        let batch = x.batch() as u64;
        let query_positions: Vec<usize> = (0..n_tokens).collect();

        let mut layer_outputs = Vec::with_capacity(self.config.num_layers);
        let mut traces = Vec::with_capacity(self.config.num_layers);
        let mut ops = OpCounts::default();

        for (l, lw) in self.weights.layers.iter().enumerate() {
            let xn = rms_norm(&x, &lw.attn_norm, NORM_EPS)?;
            let q = lw.w_q.apply(&xn)?.split_heads(heads)?;
            let k = lw.w_k.apply(&xn)?.split_heads(heads)?;
            let v = lw.w_v.apply(&xn)?.split_heads(heads)?;

            let (k_att, v_att, retrieval) = match hook.as_mut() {
                Some(h) if h.config.mem_layers.contains(&l) => {
                    let (k_att, v_att, diag, macs) = memory_layer(h, l, q.clone(), k, v)?;
                    ops.retrieval_score_macs += macs;
                    (k_att, v_att, diag)
                }
                _ => (k, v, None),
            };
            let attended = k_att.tokens();

            let key_positions: Vec<usize> = (0..attended).collect();
            let q_rot = rope_apply(&q, &query_positions, &self.rope)?;
            let k_rot = rope_apply(&k_att, &key_positions, &self.rope)?;
            let mut scores = matmul_qk(&q_rot, &k_rot)?;
            for s in scores.data_mut() {
                *s *= scale;
            }
            ops.attention_score_macs +=
                batch * (heads * n_tokens * attended * self.config.head_dim) as u64;
            let probs = softmax_rows(&scores)?;
            let ctx = Tokens::merge_heads(&matmul_wv(&probs, &v_att)?);
            x.add_assign(&lw.w_o.apply(&ctx)?)?;

            let xn = rms_norm(&x, &lw.mlp_norm, NORM_EPS)?;
            let mut gate = lw.w_gate.apply(&xn)?;
            let up = lw.w_up.apply(&xn)?;
            for (g, u) in gate.data_mut().iter_mut().zip(up.data()) {
                *g = gelu(*g) * u;
            }
            x.add_assign(&lw.w_down.apply(&gate)?)?;

            layer_outputs.push(x.clone());
            traces.push(LayerTrace {
                layer: l,
                attended_length: attended,
                retrieval,
            });
        }

        let hidden = rms_norm(&x, &self.weights.final_norm, NORM_EPS)?;
        let action = self.weights.readout.apply_rows(&hidden.mean_pool())?;
        Ok(StepOutput {
            hidden,
            action,
            layer_outputs,
            layers: traces,
            ops,
        })
    }
}

type MemoryLayerOut = (Tensor4, Tensor4, Option<RetrievalDiagnostics>, u64);

/// Retrieve, inject and write for one memory-enabled layer.
fn memory_layer(
    hook: &mut MemoryHook<'_>,
    layer: usize,
    q: Tensor4,
    k: Tensor4,
    v: Tensor4,
) -> Result<MemoryLayerOut> {
    let cfg = hook.config;
    let memory = hook
        .memory
        .layers
        .get_mut(&layer)
        .expect("buffer presence checked before forward");
    let snapshot = memory.snapshot();
    if let Some(s) = &snapshot {
        if s.latest_timestep() >= hook.t {
            return Err(Error::Ordering(format!(
                "layer {layer}: history at {} visible from step {}",
                s.latest_timestep(),
                hook.t
            )));
        }
    }

    let mut macs = 0;
    let result = match (&snapshot, cfg.injection_mode) {
        (Some(s), mode) if mode.is_residual() => {
            let [b, h, n, d] = k.dims();
            macs = (b * h * n * s.history_len() * d) as u64;
            retrieve(
                &k,
                Some(&q),
                Some(s),
                hook.t,
                &hook.fgtb,
                cfg.retrieval_mode,
            )?
        }
        _ => None,
    };
    let fused = inject(
        &k,
        &v,
        snapshot.as_ref(),
        result.as_ref(),
        cfg.injection_mode,
        cfg.epsilon,
    )?;

    let diagnostics = snapshot.as_ref().filter(|_| cfg.diagnostics).map(|s| {
        let latest = s.latest_timestep();
        let (recent_mass, mean_entropy, weights) = match &result {
            Some(r) => (
                Some(r.mass_on_timestep(s.token_timesteps(), latest)),
                Some(r.mean_entropy()),
                cfg.record_weights.then(|| r.weights.clone()),
            ),
            None => (None, None, None),
        };
        RetrievalDiagnostics {
            history_tokens: s.history_len(),
            latest_history_timestep: latest,
            recent_mass,
            mean_entropy,
            norm_drift_k: norm_drift(&fused.k_fused, &k),
            norm_drift_v: norm_drift(&fused.v_fused, &v),
            weights,
            token_timesteps: s.token_timesteps().to_vec(),
        }
    });

    let entry = if cfg.write_fused && cfg.injection_mode != InjectionMode::Concatenate {
        PrefixKV::new(fused.k_fused.clone(), fused.v_fused.clone(), hook.t)?
    } else {
        PrefixKV::new(k, v, hook.t)?
    };
    memory.write(entry)?;

    Ok((fused.k_fused, fused.v_fused, diagnostics, macs))
}

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}
