//! Runs the one-axis ablation grid on a handful of aliasing tasks and writes
//! JSON and CSV reports to `target/examples/ablation/`.

use std::path::Path;

use tempofit::harness::ablation::{run_ablation, AblationGrid};
use tempofit::harness::aliasing::gen_aliasing_task;
use tempofit::harness::report::{write_csv, write_json};
use tempofit::{Backbone, BackboneConfig, TempoFitConfig};

fn main() -> tempofit::Result<()> {
    let cfg = BackboneConfig::new(6, 4, 8, 8);
    let backbone = Backbone::new(cfg.clone())?;
    let tasks = (0..4)
        .map(|seed| gen_aliasing_task(seed, 16, 10, cfg.prefix_tokens, cfg.model_dim()))
        .collect::<tempofit::Result<Vec<_>>>()?;
    let report = run_ablation(
        &backbone,
        &TempoFitConfig::for_backbone(&cfg),
        &AblationGrid::standard(),
        &tasks,
    )?;

    println!(
        "{:<26} {:>10} {:>8} {:>8} {:>10}",
        "cell", "divergence", "recent", "entropy", "norm drift"
    );
    for row in &report.rows {
        let opt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.3}"));
        println!(
            "{:<26} {:>10.4} {:>8} {:>8} {:>10}",
            row.name,
            row.divergence,
            opt(row.recent_mass),
            opt(row.weight_entropy),
            row.norm_drift
                .map_or("-".to_string(), |v| format!("{v:.1e}"))
        );
    }

    let out = Path::new("target/examples/ablation");
    write_json(&out.join("ablation.json"), "ablation", &report)?;
    write_csv(&out.join("ablation.csv"), &report.rows)?;
    println!("reports written to {}", out.display());
    Ok(())
}
