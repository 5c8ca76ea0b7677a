//! Per-step latency and resident-state proxy: memoryless, retrofit at several
//! capacities, and frame stacking.

use tempofit::harness::bench::{bench_efficiency, BenchOptions};
use tempofit::{Backbone, BackboneConfig, TempoFitConfig};

fn main() -> tempofit::Result<()> {
    let cfg = BackboneConfig::desk();
    let backbone = Backbone::new(cfg.clone())?;
    let options = BenchOptions {
        stack_sizes: vec![2, 4, 8],
        ..BenchOptions::default()
    };
    let report = bench_efficiency(&backbone, &TempoFitConfig::for_backbone(&cfg), &options)?;

    println!(
        "{:<14} {:>8} {:>11} {:>7} {:>12} {:>7} {:>9}",
        "config", "history", "median ms", "ratio", "state", "peak x", "attn MACs"
    );
    for r in &report.rows {
        println!(
            "{:<14} {:>8} {:>11.3} {:>7.2} {:>12} {:>7.2} {:>9.1}",
            r.label,
            r.history_length,
            r.median_latency_ms,
            r.latency_ratio,
            r.state_scalars,
            r.peak_ratio,
            r.attention_macs_ratio
        );
    }
    Ok(())
}
