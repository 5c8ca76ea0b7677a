//! Acceptance suite: one pass/fail line per criterion.
//!
//! Runs without the libtest harness so every line is printed even when all
//! criteria pass. Exits nonzero if any criterion fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::collections::{BTreeSet, VecDeque};
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, TestCaseError, TestRunner};
use rand::Rng;

use common::{max_abs, oracle_retrieve, token_norm, uniform_tensor};
use tempofit::harness::ablation::{run_ablation, AblationCell, AblationGrid, Component};
use tempofit::harness::aliasing::{
    gen_aliasing_task_with_gap, run_aliasing_experiment, run_stream,
};
use tempofit::harness::bench::{attention_score_macs, bench_efficiency, BenchOptions};
use tempofit::injection::{inject, DEFAULT_EPSILON};
use tempofit::kv_memory::{LayerMemory, MemorySnapshot, PrefixKV};
use tempofit::retrieval::{fgtb_bias, head_slopes, retrieve, RetrievalResult};
use tempofit::{
    Backbone, BackboneConfig, EpisodeMemory, FgtbParams, InjectionMode, RetrievalMode,
    TempoFitConfig, Tensor4,
};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn lib<T>(r: tempofit::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("retrieval matches brute-force oracle", retrieval_oracle),
        ("frame-gap bias closed form", fgtb_closed_form),
        ("norm-preserving injection", norm_preservation),
        (
            "empty-memory identity and frozen weights",
            empty_memory_identity,
        ),
        ("FIFO buffer contract", fifo_contract),
        ("state-aliasing disambiguation", aliasing_disambiguation),
        ("recency dominance and concentration", recency_dominance),
        ("efficiency trend", efficiency_trend),
        ("memory footprint closed form", memory_footprint),
        ("ablation-mode contracts", ablation_contracts),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  [{:>2}] {name} ({secs:.2}s): {detail}", i + 1),
            Err(reason) => {
                failed += 1;
                println!("FAIL  [{:>2}] {name} ({secs:.2}s): {reason}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn retrieval_oracle() -> Outcome {
    let start = Instant::now();
    let dims = [1, 2, 3, 4];
    let alpha_s = 3.0;
    let slopes = head_slopes(2);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for seed in 0..100 {
        let mut rng = common::rng(seed);
        for c in 1..=3usize {
            let mut taus = Vec::new();
            let mut tau = rng.random_range(0..4u64);
            for _ in 0..c {
                taus.push(tau);
                tau += rng.random_range(1..3u64);
            }
            let t = tau + rng.random_range(0..3u64);
            let snap = common::snapshot(&mut rng, dims, &taus);
            let k_cur = uniform_tensor(&mut rng, dims);
            for beta in [0.0, rng.random_range(0.05..2.0)] {
                let params = lib(FgtbParams::new(beta, alpha_s, slopes.clone()))?;
                let got = lib(retrieve(
                    &k_cur,
                    None,
                    Some(&snap),
                    t,
                    &params,
                    RetrievalMode::KToK,
                ))?
                .ok_or("retrieval returned no result for nonempty history")?;
                let want = oracle_retrieve(
                    &k_cur,
                    snap.k_hist(),
                    snap.v_hist(),
                    snap.token_timesteps(),
                    t,
                    beta,
                    &slopes,
                    alpha_s,
                );
                worst = worst
                    .max(max_abs(got.weights.data(), want.weights.data()))
                    .max(max_abs(got.k_ctx.data(), want.k_ctx.data()))
                    .max(max_abs(got.v_ctx.data(), want.v_ctx.data()));
                cases += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    ensure!(worst <= 1e-9, "L-inf error {worst:e} exceeds 1e-9");
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!("{cases} cases, max L-inf error {worst:.1e}"))
}

fn fgtb_closed_form() -> Outcome {
    let mut rng = common::rng(2);
    for _ in 0..200 {
        let beta = rng.random_range(0.0..10.0);
        let m_h = rng.random_range(1e-4..1.0);
        let alpha_s = rng.random_range(1.0..64.0);
        let gap = rng.random_range(0..200u64);
        let t = 500;
        let params = lib(FgtbParams::new(beta, alpha_s, vec![m_h]))?;
        let got = lib(fgtb_bias(t, &[t - gap, t], &params))?;
        let want = -beta * m_h * gap as f64 * alpha_s;
        ensure!(
            got.get(0, 0) == want,
            "bias({beta}, {m_h}, {gap}, {alpha_s}) = {} != {want}",
            got.get(0, 0)
        );
        ensure!(
            got.get(0, 1) == 0.0,
            "gap-0 bias {} is not 0",
            got.get(0, 1)
        );
        if beta * m_h * alpha_s > 0.0 {
            let taus: Vec<u64> = (0..=40).rev().map(|g| t - g).collect();
            let row = lib(fgtb_bias(t, &taus, &params))?;
            let by_gap: Vec<f64> = row.head(0).iter().rev().copied().collect();
            ensure!(
                by_gap.windows(2).all(|w| w[1] < w[0]),
                "bias not strictly decreasing in gap for beta={beta} m={m_h} alpha={alpha_s}"
            );
        }
    }
    Ok("200 tuples exact; gap 0 is 0; strictly decreasing".into())
}

fn np_inject(
    k_cur: &Tensor4,
    v_cur: &Tensor4,
    k_ctx: Tensor4,
    v_ctx: Tensor4,
) -> Result<(Tensor4, Tensor4), String> {
    let [b, h, s, d] = k_cur.dims();
    let snap = lib(MemorySnapshot::new(
        lib(Tensor4::zeros([b, h, s, d]))?,
        lib(Tensor4::zeros([b, h, s, d]))?,
        vec![0; s],
    ))?;
    let result = RetrievalResult {
        weights: lib(Tensor4::zeros([b, h, s, s]))?,
        k_ctx,
        v_ctx,
    };
    let out = lib(inject(
        k_cur,
        v_cur,
        Some(&snap),
        Some(&result),
        InjectionMode::ResidualNormPreserving,
        DEFAULT_EPSILON,
    ))?;
    Ok((out.k_fused, out.v_fused))
}

fn norm_preservation() -> Outcome {
    let eps = DEFAULT_EPSILON;
    let dims = [2, 4, 8, 16];
    let [b_dim, h_dim, s_dim, d] = dims;
    let mut worst: f64 = 0.0;
    let mut near = 0;
    for seed in 0..50 {
        let mut rng = common::rng(100 + seed);
        let k_cur = uniform_tensor(&mut rng, dims);
        let v_cur = uniform_tensor(&mut rng, dims);
        let (k_ctx, v_ctx) = if seed % 2 == 0 {
            (
                uniform_tensor(&mut rng, dims),
                uniform_tensor(&mut rng, dims),
            )
        } else {
            // Context that almost cancels the current token: ‖cur + ctx‖ lands
            // a little above epsilon.
            let cancel = |cur: &Tensor4, rng: &mut rand_chacha::ChaCha8Rng| {
                let dir = uniform_tensor(rng, dims);
                let mut ctx = cur.clone();
                for b in 0..b_dim {
                    for h in 0..h_dim {
                        for n in 0..s_dim {
                            let target = eps * rng.random_range(1.05..3.0);
                            let dn = token_norm(&dir, b, h, n);
                            for k in 0..d {
                                let c = -cur.get(b, h, n, k) + target * dir.get(b, h, n, k) / dn;
                                ctx.set(b, h, n, k, c);
                            }
                        }
                    }
                }
                ctx
            };
            (cancel(&k_cur, &mut rng), cancel(&v_cur, &mut rng))
        };
        let (k_fused, v_fused) = np_inject(&k_cur, &v_cur, k_ctx.clone(), v_ctx.clone())?;
        for (fused, orig, ctx) in [(&k_fused, &k_cur, &k_ctx), (&v_fused, &v_cur, &v_ctx)] {
            for b in 0..b_dim {
                for h in 0..h_dim {
                    for n in 0..s_dim {
                        let raw: f64 = (0..d)
                            .map(|k| (orig.get(b, h, n, k) + ctx.get(b, h, n, k)).powi(2))
                            .sum::<f64>()
                            .sqrt();
                        if seed % 2 == 1 {
                            ensure!(raw > eps, "fixture raw norm {raw:e} not above epsilon");
                            near += 1;
                        }
                        let want = token_norm(orig, b, h, n);
                        let got = token_norm(fused, b, h, n);
                        worst = worst.max((got - want).abs() / want);
                    }
                }
            }
        }
    }
    ensure!(worst <= 1e-9, "relative norm error {worst:e}");
    Ok(format!(
        "max relative error {worst:.1e}, {near} near-cancellation tokens"
    ))
}

fn empty_memory_identity() -> Outcome {
    let cfg = BackboneConfig::desk().with_seed(4);
    let backbone = lib(Backbone::new(cfg.clone()))?;
    let fingerprint = backbone.weights().fingerprint();
    let mut rng = common::rng(4);
    let obs = common::uniform_tokens(&mut rng, 1, cfg.prefix_tokens, cfg.model_dim());
    let plain = lib(backbone.step_memoryless(&obs))?;

    let mut worst: f64 = 0.0;
    let base = TempoFitConfig::for_backbone(&cfg);
    let variants = [
        (InjectionMode::ResidualNormPreserving, RetrievalMode::KToK),
        (InjectionMode::ResidualPlain, RetrievalMode::KToK),
        (InjectionMode::Concatenate, RetrievalMode::KToK),
        (InjectionMode::ResidualNormPreserving, RetrievalMode::QToK),
    ];
    for (injection_mode, retrieval_mode) in variants {
        let tf = TempoFitConfig {
            mem_layers: (0..cfg.num_layers).collect(),
            injection_mode,
            retrieval_mode,
            ..base.clone()
        };
        let mut memory = lib(EpisodeMemory::new(&tf))?;
        for t in [0, 7] {
            let out = lib(backbone.step(&tf, &mut memory, &obs, t))?;
            ensure!(
                out.layer_outputs.len() == plain.layer_outputs.len(),
                "layer count mismatch"
            );
            for (a, b) in out.layer_outputs.iter().zip(&plain.layer_outputs) {
                worst = worst.max(max_abs(a.data(), b.data()));
            }
            worst = worst.max(max_abs(&out.action, &plain.action));
            memory.reset();
        }
    }
    ensure!(worst <= 1e-12, "layer outputs differ by {worst:e}");

    let tf = TempoFitConfig::for_backbone(&cfg);
    let mut memory = lib(EpisodeMemory::new(&tf))?;
    for t in 0..40 {
        let frame = common::uniform_tokens(&mut rng, 1, cfg.prefix_tokens, cfg.model_dim());
        lib(backbone.step(&tf, &mut memory, &frame, t))?;
    }
    ensure!(
        backbone.weights().fingerprint() == fingerprint,
        "weights changed during stepping"
    );
    let fresh = lib(Backbone::new(cfg))?;
    ensure!(
        fresh.weights().fingerprint() == fingerprint,
        "weight init is not reproducible"
    );
    ensure!(
        lib(backbone.step_memoryless(&obs))? == plain,
        "memoryless forward changed after stepping"
    );
    Ok(format!(
        "max layer-output deviation {worst:.1e}; fingerprint stable over 40 steps"
    ))
}

fn fifo_contract() -> Outcome {
    let mut runner = TestRunner::new(ProptestConfig {
        cases: 1000,
        failure_persistence: None,
        ..ProptestConfig::default()
    });
    let strategy = (1usize..10, prop::collection::vec(1u64..4, 0..40));
    runner
        .run(&strategy, |(capacity, gaps)| {
            let mut memory = LayerMemory::new(0, capacity).unwrap();
            let mut reference: VecDeque<(u64, f64)> = VecDeque::new();
            let mut t = 0;
            for (i, gap) in gaps.iter().enumerate() {
                t += gap;
                let marker = i as f64;
                let k = Tensor4::from_fn([1, 1, 2, 2], |_| marker).unwrap();
                let v = Tensor4::from_fn([1, 1, 2, 2], |_| -marker).unwrap();
                memory.write(PrefixKV::new(k, v, t).unwrap()).unwrap();
                reference.push_back((t, marker));
                if reference.len() > capacity {
                    reference.pop_front();
                }
            }
            let n = gaps.len();
            prop_assert_eq!(memory.len(), n.min(capacity));
            let want: Vec<u64> = reference.iter().map(|e| e.0).collect();
            prop_assert_eq!(memory.timesteps(), want);
            for (entry, &(tau, marker)) in memory.entries().zip(&reference) {
                prop_assert_eq!(entry.timestep(), tau);
                prop_assert!(entry.keys().data().iter().all(|&x| x == marker));
                prop_assert!(entry.values().data().iter().all(|&x| x == -marker));
            }
            if let Some(last) = memory.latest_timestep() {
                let k = Tensor4::zeros([1, 1, 2, 2]).unwrap();
                let stale = PrefixKV::new(k.clone(), k, last).unwrap();
                if memory.clone().write(stale).is_ok() {
                    return Err(TestCaseError::fail("non-increasing timestep accepted"));
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("1000 random write sequences match the reference deque".into())
}

fn aliasing_disambiguation() -> Outcome {
    let cfg = BackboneConfig::desk();
    let backbone = lib(Backbone::new(cfg.clone()))?;
    let (s, dm) = (cfg.prefix_tokens, cfg.model_dim());
    let default = TempoFitConfig::for_backbone(&cfg);
    let single = TempoFitConfig {
        mem_layers: BTreeSet::from([2]),
        ..default.clone()
    };
    let c = default.capacity as u64;
    let t_star = 2 * c + 3;
    let mut min_inside = f64::INFINITY;
    let mut max_outside: f64 = 0.0;
    let mut max_memoryless: f64 = 0.0;
    // (config, reach): one window per memory layer.
    for (tf, reach) in [(&single, c), (&default, 2 * c)] {
        for seed in 0..2 {
            for gap in [1, c / 2, reach, reach + 1, t_star] {
                let task = lib(gen_aliasing_task_with_gap(
                    seed,
                    t_star + 1,
                    t_star,
                    gap,
                    s,
                    dm,
                ))?;
                let report = lib(run_aliasing_experiment(&task, &backbone, tf))?;
                ensure!(
                    report.reach == reach,
                    "reported reach {} != {reach}",
                    report.reach
                );
                max_memoryless = max_memoryless.max(report.memoryless_divergence);
                if gap <= reach {
                    ensure!(
                        report.tempofit_divergence > 1e-6,
                        "gap {gap} inside reach {reach}: divergence {:e}",
                        report.tempofit_divergence
                    );
                    min_inside = min_inside.min(report.tempofit_divergence);
                } else {
                    max_outside = max_outside.max(report.tempofit_divergence);
                }
            }
        }
    }
    ensure!(
        max_memoryless <= 1e-12,
        "memoryless divergence {max_memoryless:e}"
    );
    ensure!(
        max_outside <= 1e-12,
        "divergence {max_outside:e} beyond the window"
    );
    Ok(format!(
        "memoryless {max_memoryless:.1e}; inside window >= {min_inside:.3e}; outside {max_outside:.1e}"
    ))
}

fn recency_dominance() -> Outcome {
    let (h, s, d, c) = (4, 16, 16, 4usize);
    let dims = [1, h, s, d];
    let taus: Vec<u64> = (0..c as u64).collect();
    let t = c as u64;
    let mut rng = common::rng(7);

    // Identical content at every stored timestep.
    let block = uniform_tensor(&mut rng, dims);
    let parts: Vec<&Tensor4> = (0..c).map(|_| &block).collect();
    let k_hist = lib(Tensor4::concat_tokens(&parts))?;
    let token_taus: Vec<u64> = taus
        .iter()
        .flat_map(|&tau| std::iter::repeat_n(tau, s))
        .collect();
    let snap = lib(MemorySnapshot::new(k_hist.clone(), k_hist, token_taus))?;
    let k_cur = uniform_tensor(&mut rng, dims);
    let params = lib(FgtbParams::standard(h, s, TempoFitConfig::DEFAULT_BETA))?;
    let r = lib(retrieve(
        &k_cur,
        None,
        Some(&snap),
        t,
        &params,
        RetrievalMode::KToK,
    ))?
    .ok_or("no retrieval result")?;
    for head in 0..h {
        for i in 0..s {
            for j in 0..s {
                let by_tau: Vec<f64> = (0..c)
                    .map(|e| r.weights.get(0, head, i, e * s + j))
                    .collect();
                ensure!(
                    by_tau.windows(2).all(|w| w[0] < w[1]),
                    "head {head} row {i} token {j}: weights {by_tau:?} not recency-ordered"
                );
            }
        }
    }

    // Standard fixture: random history, beta = 100.
    let mut worst_mean: f64 = 1.0;
    let mut worst_row: f64 = 1.0;
    let strong = lib(FgtbParams::standard(h, s, 100.0))?;
    for seed in 0..20 {
        let mut rng = common::rng(1000 + seed);
        let snap = common::snapshot(&mut rng, dims, &taus);
        let k_cur = uniform_tensor(&mut rng, dims);
        let r = lib(retrieve(
            &k_cur,
            None,
            Some(&snap),
            t,
            &strong,
            RetrievalMode::KToK,
        ))?
        .ok_or("no retrieval result")?;
        worst_mean = worst_mean.min(r.mass_on_timestep(snap.token_timesteps(), t - 1));
        for row in r.weights.data().chunks_exact(c * s) {
            worst_row = worst_row.min(row[(c - 1) * s..].iter().sum());
        }
    }
    ensure!(
        worst_mean >= 0.99,
        "mass on most recent timestep {worst_mean}"
    );
    Ok(format!(
        "strict recency order on identical keys; beta=100 mass on newest >= {worst_mean:.5} (worst row {worst_row:.5})"
    ))
}

fn efficiency_trend() -> Outcome {
    let start = Instant::now();
    let cfg = BackboneConfig::desk();
    let backbone = lib(Backbone::new(cfg.clone()))?;
    let tf = TempoFitConfig::for_backbone(&cfg);
    let options = BenchOptions {
        capacities: vec![8, 32],
        stack_sizes: vec![8],
        repetitions: 30,
        ..BenchOptions::default()
    };
    let report = lib(bench_efficiency(&backbone, &tf, &options))?;
    let ratio = |label: &str| {
        report
            .row(label)
            .map(|r| r.latency_ratio)
            .ok_or(format!("missing row {label}"))
    };
    let (stacked, tf8, tf32) = (
        ratio("stacked_f8")?,
        ratio("tempofit_c8")?,
        ratio("tempofit_c32")?,
    );
    let base_row = report.row("memoryless").ok_or("missing baseline")?;
    ensure!(
        base_row.latency_ratio == 1.0,
        "baseline ratio {}",
        base_row.latency_ratio
    );
    ensure!(
        stacked > tf8,
        "stacked(F=8) {stacked:.3} <= tempofit(C=8) {tf8:.3}"
    );
    ensure!(tf32 <= 1.6, "tempofit(C=32) ratio {tf32:.3} > 1.6");

    let analytic = attention_score_macs(&cfg, 1, 8 * cfg.prefix_tokens) as f64
        / attention_score_macs(&cfg, 1, cfg.prefix_tokens) as f64;
    let stacked_row = report.row("stacked_f8").ok_or("missing stacked row")?;
    ensure!(analytic >= 16.0, "analytic stacking MAC ratio {analytic}");
    ensure!(
        stacked_row.attention_macs_ratio == analytic,
        "instrumented MAC ratio {} != analytic {analytic}",
        stacked_row.attention_macs_ratio
    );
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    Ok(format!(
        "latency ratios stacked_f8 {stacked:.2}, tempofit_c8 {tf8:.2}, tempofit_c32 {tf32:.2}; attention MACs x{analytic}"
    ))
}

fn memory_footprint() -> Outcome {
    let cfg = BackboneConfig::new(6, 4, 16, 16);
    let backbone = lib(Backbone::new(cfg.clone()))?;
    let mut rng = common::rng(9);
    let frames: Vec<_> = (0..8)
        .map(|_| common::uniform_tokens(&mut rng, 1, cfg.prefix_tokens, cfg.model_dim()))
        .collect();
    let batch = 1;
    for c in [4, 8, 16, 32] {
        let tf = TempoFitConfig {
            capacity: c,
            ..TempoFitConfig::for_backbone(&cfg)
        };
        let per_layer = c * 2 * batch * cfg.num_heads * cfg.prefix_tokens * cfg.head_dim;
        let mut memory = lib(EpisodeMemory::new(&tf))?;
        for t in 0..200u64 {
            lib(backbone.step(&tf, &mut memory, &frames[t as usize % frames.len()], t))?;
            if t + 1 >= c as u64 {
                for layer in memory.layers() {
                    ensure!(
                        layer.scalar_count() == per_layer,
                        "C={c} t={t} layer {}: {} scalars, expected {per_layer}",
                        layer.layer_index(),
                        layer.scalar_count()
                    );
                }
            }
        }
        ensure!(
            memory.scalar_count() == tf.mem_layers.len() * per_layer
                && tf.state_scalars(&cfg, batch) == memory.scalar_count(),
            "C={c}: total {} vs closed form {}",
            memory.scalar_count(),
            tf.state_scalars(&cfg, batch)
        );
    }
    Ok("C*2*B*H*S*d per layer at C in {4,8,16,32} through T=200".into())
}

fn ablation_contracts() -> Outcome {
    let cfg = BackboneConfig::new(4, 2, 8, 4);
    let (s, dm) = (cfg.prefix_tokens, cfg.model_dim());
    let backbone = lib(Backbone::new(cfg.clone()))?;
    let base = TempoFitConfig::for_backbone(&cfg);
    let mut rng = common::rng(11);
    let frames: Vec<_> = (0..10)
        .map(|_| common::uniform_tokens(&mut rng, 1, s, dm))
        .collect();

    let concat = TempoFitConfig {
        injection_mode: InjectionMode::Concatenate,
        capacity: 3,
        ..base.clone()
    };
    let mut memory = lib(EpisodeMemory::new(&concat))?;
    for (t, frame) in frames.iter().enumerate() {
        let out = lib(backbone.step(&concat, &mut memory, frame, t as u64))?;
        let stored = t.min(concat.capacity);
        for layer in &out.layers {
            let want = if concat.mem_layers.contains(&layer.layer) {
                s + stored * s
            } else {
                s
            };
            ensure!(
                layer.attended_length == want,
                "t={t} layer {}: attended {} != {want}",
                layer.layer,
                layer.attended_length
            );
        }
    }

    let q2k = TempoFitConfig {
        retrieval_mode: RetrievalMode::QToK,
        ..base.clone()
    };
    let (k_out, _) = lib(run_stream(&backbone, &base, &frames, 6))?;
    let (q_out, _) = lib(run_stream(&backbone, &q2k, &frames, 6))?;
    let qk_gap = lib(k_out.hidden.distance(&q_out.hidden))?;
    ensure!(
        qk_gap > 1e-9,
        "Q-to-K and K-to-K outputs coincide ({qk_gap:e})"
    );

    let tasks = (0..3)
        .map(|seed| gen_aliasing_task_with_gap(seed, 8, 6, 1, s, dm))
        .collect::<tempofit::Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    let grid = AblationGrid {
        cells: vec![AblationCell {
            component: Component::None,
            ..AblationCell::full("component", "baseline_no_memory")
        }],
    };
    let report = lib(run_ablation(&backbone, &base, &grid, &tasks))?;
    let row = report
        .row("baseline_no_memory")
        .ok_or("missing none cell")?;
    ensure!(
        row.divergence.to_bits() == row.memoryless_divergence.to_bits(),
        "none cell divergence {} vs memoryless {}",
        row.divergence,
        row.memoryless_divergence
    );
    let off = grid.cells[0]
        .tempofit_config(&cfg, &base)
        .map_err(|e| e.to_string())?;
    for task in &tasks {
        let (out, _) = lib(run_stream(&backbone, &off, &task.stream_a, task.alias_step))?;
        let plain = lib(backbone.step_memoryless(&task.stream_a[task.alias_step as usize]))?;
        ensure!(
            out == plain,
            "none cell output differs from memoryless forward"
        );
    }
    Ok(format!(
        "concat attends S + C'S; Q-to-K vs K-to-K gap {qk_gap:.3e}; none cell bitwise memoryless"
    ))
}
