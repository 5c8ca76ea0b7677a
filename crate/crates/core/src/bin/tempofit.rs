use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use tempofit::config::{LayerSubset, RunConfig, TempoFitConfig};
use tempofit::harness::ablation::{run_ablation, AblationGrid};
use tempofit::harness::aliasing::{
    gen_aliasing_task_with_gap, random_episode, run_aliasing_experiment,
};
use tempofit::harness::bench::{bench_efficiency, BenchOptions, DEFAULT_WARMUP};
use tempofit::harness::report::{write_csv, write_json};
use tempofit::harness::trace::{run_trace, write_trace_csv};
use tempofit::kv_memory::MemoryMetadata;
use tempofit::{Backbone, BackboneConfig, Error, InjectionMode, Result, RetrievalMode};

#[derive(Parser, Debug)]
#[command(
    name = "tempofit",
    version,
    about = "Episodic K/V memory retrofit on a toy transformer"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run config (backbone + retrofit settings).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seeds the backbone weights and the synthetic data.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Report directory.
    #[arg(long, global = true, default_value = "reports")]
    out: PathBuf,
    #[arg(long, global = true)]
    capacity: Option<usize>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// `all`, `bottom`, `top`, `intermediate` or a comma list of indices.
    #[arg(long, global = true)]
    layers: Option<String>,
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    /// K-to-K retrieval, frame-gap bias, norm-preserving residual loading.
    Full,
    /// Frame-gap bias disabled.
    KvOnly,
    /// Queries address the history keys.
    Q2k,
    /// Residual loading without rescaling.
    ResidualPlain,
    /// History tokens appended to the attention context.
    Concat,
    /// Memory disabled.
    Memoryless,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Hidden-state divergence on synthetic aliasing tasks.
    Alias {
        #[arg(long, default_value_t = 24)]
        steps: u64,
        #[arg(long, default_value_t = 12)]
        alias_step: u64,
        /// Frames between the differing step and the alias step.
        #[arg(long, default_value_t = 1)]
        gap: u64,
        #[arg(long, default_value_t = 8)]
        tasks: u64,
    },
    /// One-axis ablation grid scored on aliasing tasks.
    Ablate {
        #[arg(long, default_value_t = 24)]
        steps: u64,
        #[arg(long, default_value_t = 12)]
        alias_step: u64,
        #[arg(long, default_value_t = 8)]
        tasks: u64,
        #[arg(long, value_delimiter = ',', default_values_t = [4, 8, 16, 32])]
        capacities: Vec<usize>,
    },
    /// Per-step latency and memory proxy.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [4, 8, 16, 32])]
        capacities: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [4, 8])]
        stacks: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        repetitions: usize,
        #[arg(long, default_value_t = DEFAULT_WARMUP)]
        warmup: usize,
    },
    /// Retrieval weights of one episode as CSV.
    Trace {
        #[arg(long, default_value_t = 6)]
        steps: u64,
    },
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    message: String,
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: ErrorBody<'a>,
}

fn fail(kind: &str, message: String) -> ExitCode {
    let body = ErrorReport {
        error: ErrorBody { kind, message },
    };
    eprintln!(
        "{}",
        serde_json::to_string(&body).expect("error report serializes")
    );
    ExitCode::from(2)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim_end().to_string()),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), e.to_string()),
    }
}

fn resolve(common: &Common) -> Result<(BackboneConfig, TempoFitConfig)> {
    let mut run = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        run.backbone.seed = seed;
    }
    let (backbone, mut tf) = run.resolve()?;
    if let Some(c) = common.capacity {
        tf.capacity = c;
    }
    if let Some(b) = common.beta {
        tf.beta = b;
    }
    if let Some(layers) = &common.layers {
        tf.mem_layers = parse_layers(layers, backbone.num_layers)?;
    }
    if let Some(mode) = common.mode {
        apply_mode(&mut tf, mode);
    }
    tf.validate(&backbone)?;
    Ok((backbone, tf))
}

fn parse_layers(text: &str, num_layers: usize) -> Result<BTreeSet<usize>> {
    let subset = match text {
        "all" => Some(LayerSubset::All),
        "bottom" => Some(LayerSubset::Bottom),
        "top" => Some(LayerSubset::Top),
        "intermediate" => Some(LayerSubset::Intermediate),
        _ => None,
    };
    if let Some(s) = subset {
        return Ok(s.indices(num_layers));
    }
    text.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad --layers entry {p:?}")))
        })
        .collect()
}

fn apply_mode(tf: &mut TempoFitConfig, mode: Mode) {
    match mode {
        Mode::Full => {}
        Mode::KvOnly => tf.beta = 0.0,
        Mode::Q2k => tf.retrieval_mode = RetrievalMode::QToK,
        Mode::ResidualPlain => tf.injection_mode = InjectionMode::ResidualPlain,
        Mode::Concat => tf.injection_mode = InjectionMode::Concatenate,
        Mode::Memoryless => tf.enabled = false,
    }
}

#[derive(Serialize)]
struct AliasCsvRow {
    seed: u64,
    alias_step: u64,
    differing_step: u64,
    gap: u64,
    capacity: usize,
    memory_layers: String,
    reach: u64,
    memoryless_divergence: f64,
    tempofit_divergence: f64,
    memoryless_action_divergence: f64,
    tempofit_action_divergence: f64,
}

#[derive(Serialize)]
struct TraceSummary<'a> {
    steps: u64,
    rows: usize,
    memory: &'a [MemoryMetadata],
}

fn run(cli: Cli) -> Result<()> {
    let (backbone_cfg, tf) = resolve(&cli.common)?;
    let seed = backbone_cfg.seed;
    let (s, dm) = (backbone_cfg.prefix_tokens, backbone_cfg.model_dim());
    let backbone = Backbone::new(backbone_cfg)?;
    let out = &cli.common.out;

    match cli.command {
        Command::Alias {
            steps,
            alias_step,
            gap,
            tasks,
        } => {
            let mut reports = Vec::new();
            for i in 0..tasks {
                let task = gen_aliasing_task_with_gap(seed + i, steps, alias_step, gap, s, dm)?;
                reports.push(run_aliasing_experiment(&task, &backbone, &tf)?);
            }
            let rows: Vec<AliasCsvRow> = reports
                .iter()
                .map(|r| AliasCsvRow {
                    seed: r.seed,
                    alias_step: r.alias_step,
                    differing_step: r.differing_step,
                    gap: r.gap,
                    capacity: r.capacity,
                    memory_layers: join(&r.memory_layers),
                    reach: r.reach,
                    memoryless_divergence: r.memoryless_divergence,
                    tempofit_divergence: r.tempofit_divergence,
                    memoryless_action_divergence: r.memoryless_action_divergence,
                    tempofit_action_divergence: r.tempofit_action_divergence,
                })
                .collect();
            emit(out, "alias", &reports, &rows)
        }
        Command::Ablate {
            steps,
            alias_step,
            tasks,
            capacities,
        } => {
            let suite = (0..tasks)
                .map(|i| gen_aliasing_task_with_gap(seed + i, steps, alias_step, 1, s, dm))
                .collect::<Result<Vec<_>>>()?;
            let grid = AblationGrid::standard_with_capacities(&capacities);
            let report = run_ablation(&backbone, &tf, &grid, &suite)?;
            write_json(&out.join("ablation.json"), "ablation", &report)?;
            write_csv(&out.join("ablation.csv"), &report.rows)?;
            info!(
                "ablation: {} rows, {} skipped",
                report.rows.len(),
                report.skipped.len()
            );
            Ok(())
        }
        Command::Bench {
            capacities,
            stacks,
            repetitions,
            warmup,
        } => {
            let options = BenchOptions {
                capacities,
                stack_sizes: stacks,
                repetitions,
                warmup,
                seed,
            };
            let report = bench_efficiency(&backbone, &tf, &options)?;
            write_json(&out.join("bench.json"), "bench", &report)?;
            write_csv(&out.join("bench.csv"), &report.rows)
        }
        Command::Trace { steps } => {
            let mut traced = tf.clone();
            traced.diagnostics = true;
            traced.record_weights = true;
            let frames = random_episode(seed, steps, s, dm)?;
            let trace = run_trace(&backbone, &traced, &frames)?;
            write_trace_csv(&out.join("trace.csv"), &trace.rows)?;
            let summary = TraceSummary {
                steps: trace.steps,
                rows: trace.rows.len(),
                memory: &trace.memory,
            };
            write_json(&out.join("trace.json"), "trace", &summary)
        }
    }
}

fn emit<J: Serialize, C: Serialize>(out: &Path, kind: &str, json: &J, rows: &[C]) -> Result<()> {
    write_json(&out.join(format!("{kind}.json")), kind, json)?;
    write_csv(&out.join(format!("{kind}.csv")), rows)
}

fn join(xs: &[usize]) -> String {
    xs.iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(";")
}
