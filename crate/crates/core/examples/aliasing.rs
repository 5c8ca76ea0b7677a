//! Two episodes that agree at t* but differ earlier: the memoryless forward
//! cannot separate them, the retrofit can while the difference is in reach.

use std::collections::BTreeSet;

use tempofit::harness::aliasing::{gen_aliasing_task_with_gap, run_aliasing_experiment};
use tempofit::{Backbone, BackboneConfig, TempoFitConfig};

fn main() -> tempofit::Result<()> {
    let cfg = BackboneConfig::desk();
    let backbone = Backbone::new(cfg.clone())?;
    let single_layer = TempoFitConfig {
        mem_layers: BTreeSet::from([2]),
        capacity: 4,
        ..TempoFitConfig::for_backbone(&cfg)
    };

    println!("gap  memoryless  tempofit");
    for gap in 1..=6 {
        let task = gen_aliasing_task_with_gap(7, 12, 10, gap, cfg.prefix_tokens, cfg.model_dim())?;
        let r = run_aliasing_experiment(&task, &backbone, &single_layer)?;
        println!(
            "{gap:>3}  {:>10.3e}  {:>8.3e}",
            r.memoryless_divergence, r.tempofit_divergence
        );
    }
    Ok(())
}
