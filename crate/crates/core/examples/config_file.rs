//! Loads a JSON run config, resolves defaults and runs a short episode.

use tempofit::harness::aliasing::{random_episode, run_stream};
use tempofit::{Backbone, RunConfig};

const CONFIG: &str = r#"{
  "schema_version": 1,
  "backbone": { "num_layers": 6, "num_heads": 4, "head_dim": 8, "prefix_tokens": 8, "seed": 11 },
  "tempofit": {
    "mem_layers": [2, 3],
    "capacity": 4,
    "beta": 0.5,
    "retrieval_mode": "k_to_k",
    "injection_mode": "residual_norm_preserving"
  }
}"#;

fn main() -> tempofit::Result<()> {
    let run = RunConfig::from_json(CONFIG)?;
    let (backbone_cfg, tempofit) = run.resolve()?;
    println!("{}", serde_json::to_string_pretty(&tempofit)?);

    let backbone = Backbone::new(backbone_cfg.clone())?;
    let frames = random_episode(0, 6, backbone_cfg.prefix_tokens, backbone_cfg.model_dim())?;
    let (out, memory) = run_stream(&backbone, &tempofit, &frames, 5)?;
    println!("action: {:?}", out.action);
    for m in memory.metadata() {
        println!("layer {} holds {:?}", m.layer, m.timesteps);
    }

    match RunConfig::from_json(r#"{"schema_version": 1, "backbone": {"num_layers": 2}}"#) {
        Err(e) => println!("invalid config rejected ({}): {e}", e.kind()),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
