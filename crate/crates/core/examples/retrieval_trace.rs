//! Records retrieval weights over a short episode and prints how much mass
//! each step puts on its most recent stored frame.

use std::collections::BTreeMap;

use tempofit::harness::aliasing::random_episode;
use tempofit::harness::trace::{run_trace, write_trace_csv};
use tempofit::{Backbone, BackboneConfig, TempoFitConfig};

fn main() -> tempofit::Result<()> {
    let cfg = BackboneConfig::new(4, 4, 8, 4);
    let backbone = Backbone::new(cfg.clone())?;
    let tf = TempoFitConfig {
        capacity: 4,
        record_weights: true,
        ..TempoFitConfig::for_backbone(&cfg)
    };
    let frames = random_episode(3, 8, cfg.prefix_tokens, cfg.model_dim())?;
    let trace = run_trace(&backbone, &tf, &frames)?;

    let mut recent: BTreeMap<(u64, usize), f64> = BTreeMap::new();
    let mut groups: BTreeMap<(u64, usize), usize> = BTreeMap::new();
    for row in &trace.rows {
        if row.tau + 1 == row.t {
            *recent.entry((row.t, row.head)).or_default() += row.weight;
        }
        if row.history_token == 0 {
            *groups.entry((row.t, row.head)).or_default() += 1;
        }
    }
    for ((t, head), mass) in &recent {
        let rows = groups[&(*t, *head)] as f64;
        println!("t={t} head={head}: mean mass on t-1 = {:.3}", mass / rows);
    }

    let path = std::path::Path::new("target/examples/trace.csv");
    write_trace_csv(path, &trace.rows)?;
    println!("{} rows written to {}", trace.rows.len(), path.display());
    Ok(())
}
