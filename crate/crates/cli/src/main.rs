mod commands;
mod config;
mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use commands::Ctx;
use config::{CorpusKind, Preset, RunConfig};
use error::CliError;

#[derive(Parser)]
#[command(name = "layoutie", version, about = "Layout-aware entity extraction pipeline")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Flat TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,
    /// Output directory; also where inputs are looked up by default.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, value_enum)]
    kind: Option<CorpusKind>,
}

#[derive(Args)]
struct GraphArgs {
    #[arg(long)]
    eps_align: Option<f64>,
    #[arg(long)]
    merge_eps: Option<f64>,
    #[arg(long)]
    max_nodes: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus and its split manifest.
    GenCorpus {
        #[arg(long)]
        num_docs: Option<usize>,
        #[arg(long)]
        identical_candidates: Option<usize>,
    },
    /// Dump the layout graph of every page in a split.
    BuildGraph {
        #[arg(long)]
        split: Option<String>,
        #[command(flatten)]
        graph: GraphArgs,
    },
    /// Unsupervised encoder pretraining on the unlabeled split.
    Pretrain {
        /// Comma-separated, e.g. `mlm,sprc`.
        #[arg(long, value_delimiter = ',')]
        stages: Option<Vec<String>>,
        #[arg(long)]
        balance_ratio: Option<f64>,
        #[arg(long)]
        eps_align: Option<f64>,
    },
    /// Supervised training on the train split with early stopping on val.
    Train {
        /// Pretrained encoder checkpoint.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Train the tagger without the graph network.
        #[arg(long)]
        text_only: bool,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[command(flatten)]
        graph: GraphArgs,
    },
    /// Score a trained model on a split.
    Eval {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        split: Option<String>,
    },
    /// Few-shot sweep over the held-out-template pool.
    Fewshot {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Fine-tuning epochs per few-shot run.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Train the full model and one variant per disabled switch.
    Ablate {
        /// Comma-separated among section_title_edges, font_feats, skip_connections.
        #[arg(long, value_delimiter = ',')]
        switches: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        max_epochs: Option<usize>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenCorpus { .. } => "gen-corpus",
            Command::BuildGraph { .. } => "build-graph",
            Command::Pretrain { .. } => "pretrain",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Fewshot { .. } => "fewshot",
            Command::Ablate { .. } => "ablate",
        }
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn apply_graph(c: &mut RunConfig, g: GraphArgs) {
    set(&mut c.eps_align, g.eps_align);
    set(&mut c.merge_eps, g.merge_eps);
    if g.max_nodes.is_some() {
        c.max_nodes = g.max_nodes;
    }
}

/// Defaults, then the config file, then flags.
fn resolve(global: GlobalArgs, command: Command) -> Result<(Ctx, &'static str), CliError> {
    let mut c = match &global.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    set(&mut c.seed, global.seed);
    set(&mut c.preset, global.preset);
    set(&mut c.workers, global.workers);
    set(&mut c.kind, global.kind);
    let name = command.name();
    match command {
        Command::GenCorpus {
            num_docs,
            identical_candidates,
        } => {
            if num_docs.is_some() {
                c.num_docs = num_docs;
            }
            set(&mut c.identical_candidates, identical_candidates);
        }
        Command::BuildGraph { split, graph } => {
            set(&mut c.split, split);
            apply_graph(&mut c, graph);
        }
        Command::Pretrain {
            stages,
            balance_ratio,
            eps_align,
        } => {
            set(&mut c.stages, stages);
            if balance_ratio.is_some() {
                c.balance_ratio = balance_ratio;
            }
            set(&mut c.eps_align, eps_align);
        }
        Command::Train {
            init,
            text_only,
            max_epochs,
            graph,
        } => {
            if init.is_some() {
                c.init = init;
            }
            if text_only {
                c.graph = false;
            }
            set(&mut c.max_epochs, max_epochs);
            apply_graph(&mut c, graph);
        }
        Command::Eval { model, split } => {
            if model.is_some() {
                c.model = model;
            }
            set(&mut c.split, split);
        }
        Command::Fewshot {
            model,
            sizes,
            seeds,
            epochs,
        } => {
            set(&mut c.fewshot_epochs, epochs);
            if model.is_some() {
                c.model = model;
            }
            set(&mut c.sizes, sizes);
            set(&mut c.seeds, seeds);
        }
        Command::Ablate {
            switches,
            seeds,
            init,
            max_epochs,
        } => {
            set(&mut c.switches, switches);
            set(&mut c.seeds, seeds);
            if init.is_some() {
                c.init = init;
            }
            set(&mut c.max_epochs, max_epochs);
        }
    }
    let cfg = c.resolve()?;
    Ok((Ctx { cfg, out: global.out }, name))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (ctx, name) = resolve(cli.global, cli.command)?;
    std::fs::create_dir_all(&ctx.out).map_err(|e| anyhow::anyhow!("creating {}: {e}", ctx.out.display()))?;
    if ctx.cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(ctx.cfg.workers)
            .build_global()
            .map_err(anyhow::Error::from)?;
    }
    let resolved = ctx.cfg.to_toml();
    eprintln!("# {name}: resolved config\n{resolved}");
    layoutie_nn::write_atomic(&ctx.out.join(format!("{name}.config.toml")), resolved.as_bytes())?;
    match name {
        "gen-corpus" => commands::gen_corpus(&ctx),
        "build-graph" => commands::build_graph(&ctx),
        "pretrain" => commands::pretrain(&ctx),
        "train" => commands::train(&ctx),
        "eval" => commands::eval(&ctx),
        "fewshot" => commands::fewshot_cmd(&ctx),
        _ => commands::ablate_cmd(&ctx),
    }
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("{}", e.to_json());
        std::process::exit(e.exit_code());
    }
}
