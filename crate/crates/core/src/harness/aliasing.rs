//! Synthetic state-aliasing fixtures.
//!
//! Two observation streams agree bitwise at the alias step `t*` and at every
//! other step except one earlier "differing" step. A memoryless forward
//! cannot tell them apart at `t*`; a memory-augmented one can, as long as
//! the differing step is still reachable through the buffers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::backbone::{Backbone, EpisodeMemory, StepOutput};
use crate::config::TempoFitConfig;
use crate::error::{Error, Result};
use crate::numerics::Tokens;

#[derive(Clone, Debug, PartialEq)]
pub struct AliasingTask {
    pub seed: u64,
    pub episode_length: u64,
    pub alias_step: u64,
    /// Step at which the two histories differ.
    pub differing_step: u64,
    pub stream_a: Vec<Tokens>,
    pub stream_b: Vec<Tokens>,
}

impl AliasingTask {
    /// Validates the aliasing invariants on caller-built streams.
    pub fn new(
        seed: u64,
        alias_step: u64,
        differing_step: u64,
        stream_a: Vec<Tokens>,
        stream_b: Vec<Tokens>,
    ) -> Result<Self> {
        let t_len = stream_a.len() as u64;
        if stream_b.len() != stream_a.len() {
            return Err(Error::Config("aliasing streams differ in length".into()));
        }
        if alias_step == 0 || alias_step >= t_len {
            return Err(Error::Config(format!(
                "alias step {alias_step} outside 1..{t_len}"
            )));
        }
        if differing_step >= alias_step {
            return Err(Error::Config(format!(
                "differing step {differing_step} must precede alias step {alias_step}"
            )));
        }
        let (a, b) = (
            &stream_a[alias_step as usize],
            &stream_b[alias_step as usize],
        );
        if a != b {
            return Err(Error::Config("streams must agree at the alias step".into()));
        }
        if stream_a[differing_step as usize] == stream_b[differing_step as usize] {
            return Err(Error::Config(
                "streams must differ at the differing step".into(),
            ));
        }
        Ok(Self {
            seed,
            episode_length: t_len,
            alias_step,
            differing_step,
            stream_a,
            stream_b,
        })
    }

    /// Frame gap between the alias step and the differing step.
    pub fn gap(&self) -> u64 {
        self.alias_step - self.differing_step
    }
}

/// Task whose histories differ one step before the alias step.
pub fn gen_aliasing_task(
    seed: u64,
    episode_length: u64,
    alias_step: u64,
    prefix_tokens: usize,
    model_dim: usize,
) -> Result<AliasingTask> {
    gen_aliasing_task_with_gap(
        seed,
        episode_length,
        alias_step,
        1,
        prefix_tokens,
        model_dim,
    )
}

/// Task whose histories differ `gap` steps before the alias step.
pub fn gen_aliasing_task_with_gap(
    seed: u64,
    episode_length: u64,
    alias_step: u64,
    gap: u64,
    prefix_tokens: usize,
    model_dim: usize,
) -> Result<AliasingTask> {
    if alias_step == 0 || alias_step >= episode_length {
        return Err(Error::Config(format!(
            "alias step {alias_step} outside 1..{episode_length}"
        )));
    }
    if gap == 0 || gap > alias_step {
        return Err(Error::Config(format!(
            "gap {gap} must be in 1..={alias_step}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frame = || random_frame(&mut rng, prefix_tokens, model_dim);
    let stream_a: Vec<Tokens> = (0..episode_length)
        .map(|_| frame())
        .collect::<Result<_>>()?;
    let mut stream_b = stream_a.clone();
    let differing_step = alias_step - gap;
    stream_b[differing_step as usize] = frame()?;
    AliasingTask::new(seed, alias_step, differing_step, stream_a, stream_b)
}

/// `steps` independent N(0, 1) frames, deterministic in `seed`.
pub fn random_episode(
    seed: u64,
    steps: u64,
    prefix_tokens: usize,
    model_dim: usize,
) -> Result<Vec<Tokens>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..steps)
        .map(|_| random_frame(&mut rng, prefix_tokens, model_dim))
        .collect()
}

pub(crate) fn random_frame(
    rng: &mut ChaCha8Rng,
    prefix_tokens: usize,
    model_dim: usize,
) -> Result<Tokens> {
    let data = (0..prefix_tokens * model_dim)
        .map(|_| StandardNormal.sample(&mut *rng))
        .collect();
    Tokens::new(1, prefix_tokens, model_dim, data)
}

/// Runs `frames[0..=until]` through a fresh episode and returns the last output.
pub fn run_stream(
    backbone: &Backbone,
    tempofit: &TempoFitConfig,
    frames: &[Tokens],
    until: u64,
) -> Result<(StepOutput, EpisodeMemory)> {
    let mut memory = EpisodeMemory::new(tempofit)?;
    let mut last = None;
    for t in 0..=until {
        let obs = frames
            .get(t as usize)
            .ok_or_else(|| Error::Config(format!("stream has no frame {t}")))?;
        last = Some(backbone.step(tempofit, &mut memory, obs, t)?);
    }
    Ok((last.expect("at least one step"), memory))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AliasingReport {
    pub seed: u64,
    pub alias_step: u64,
    pub differing_step: u64,
    pub gap: u64,
    pub capacity: usize,
    pub memory_layers: Vec<usize>,
    /// Largest gap that can still reach `t*`: one capacity window per
    /// memory layer, since each layer's stored keys depend on the
    /// retrievals of the memory layers below it.
    pub reach: u64,
    pub memoryless_divergence: f64,
    pub tempofit_divergence: f64,
    pub memoryless_action_divergence: f64,
    pub tempofit_action_divergence: f64,
}

/// Hidden-state divergence at `t*` between the two streams, with and
/// without memory.
pub fn run_aliasing_experiment(
    task: &AliasingTask,
    backbone: &Backbone,
    tempofit: &TempoFitConfig,
) -> Result<AliasingReport> {
    let t_star = task.alias_step as usize;
    let plain_a = backbone.step_memoryless(&task.stream_a[t_star])?;
    let plain_b = backbone.step_memoryless(&task.stream_b[t_star])?;
    let (mem_a, _) = run_stream(backbone, tempofit, &task.stream_a, task.alias_step)?;
    let (mem_b, _) = run_stream(backbone, tempofit, &task.stream_b, task.alias_step)?;

    let reach = if tempofit.enabled {
        (tempofit.mem_layers.len() * tempofit.capacity) as u64
    } else {
        0
    };
    Ok(AliasingReport {
        seed: task.seed,
        alias_step: task.alias_step,
        differing_step: task.differing_step,
        gap: task.gap(),
        capacity: tempofit.capacity,
        memory_layers: tempofit.mem_layers.iter().copied().collect(),
        reach,
        memoryless_divergence: plain_a.hidden.distance(&plain_b.hidden)?,
        tempofit_divergence: mem_a.hidden.distance(&mem_b.hidden)?,
        memoryless_action_divergence: l2(&plain_a.action, &plain_b.action),
        tempofit_action_divergence: l2(&mem_a.action, &mem_b.action),
    })
}

pub(crate) fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
