use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use tsclab::flow::{matrix_to_vehicles, FlowSet};
use tsclab::flowgen::{sample_flows, train_wgan, GeneratorNet, WganConfig};
use tsclab::harness::{read_records, report_table, run_experiment, write_outputs, ExperimentConfig};
use tsclab::meta::{maml_train, meta_test, meta_train, ClusterBank, MetaConfig};
use tsclab::trafficsim::{build_grid, free_flow_time, LaneParams, Roadnet, RoadnetFile, VehicleSpec};

#[derive(Parser)]
#[command(name = "tsclab", version, about = "Traffic-signal-control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config over its methods and seeds.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated seeds, overriding the config.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        jobs: Option<usize>,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the result table of a finished run.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Train or sample the flow generator.
    #[command(subcommand)]
    Flowgen(FlowgenCommand),
    /// Meta-train a bank of initializations or adapt from one.
    #[command(subcommand)]
    Meta(MetaCommand),
}

#[derive(Subcommand)]
enum FlowgenCommand {
    /// Train a generator on a flow-set directory.
    Train {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        out: PathBuf,
        /// TOML file with generator settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sample flows from a trained generator.
    Sample {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Distance the generator was trained for, recorded as provenance.
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
    },
}

#[derive(Args)]
struct NetArgs {
    /// Grid size as ROWSxCOLS.
    #[arg(long, default_value = "1x1", conflicts_with = "roadnet")]
    grid: String,
    /// Roadnet file instead of a generated grid.
    #[arg(long)]
    roadnet: Option<PathBuf>,
}

#[derive(Subcommand)]
enum MetaCommand {
    /// Meta-train a bank of initializations.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        flows: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Train the single-initialization baseline instead.
        #[arg(long)]
        maml: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        net: NetArgs,
    },
    /// Adapt from a trained bank on test flows.
    Test {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        flows: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        net: NetArgs,
    },
}

fn load_toml<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn roadnet(args: &NetArgs) -> anyhow::Result<Arc<Roadnet>> {
    if let Some(p) = &args.roadnet {
        return Ok(Arc::new(RoadnetFile::load(p)?));
    }
    let Some((r, c)) = args.grid.split_once('x') else {
        bail!("grid must look like 2x3, got `{}`", args.grid);
    };
    Ok(Arc::new(build_grid(r.parse()?, c.parse()?, LaneParams::default())?))
}

fn vehicle_flows(dir: &Path) -> anyhow::Result<Vec<Vec<VehicleSpec>>> {
    let set = FlowSet::load_dir(dir)?;
    Ok(set
        .members()
        .iter()
        .enumerate()
        .map(|(k, m)| matrix_to_vehicles(m, k as u64))
        .collect())
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run {
            config,
            seeds,
            jobs,
            out,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seeds {
                cfg.seeds = s;
            }
            if let Some(j) = jobs {
                cfg.jobs = j;
            }
            if let Some(o) = out {
                cfg.output = o;
            }
            let exp = run_experiment(&cfg)?;
            write_outputs(&cfg.output, &exp)?;
            print!("{}", report_table(&exp.records)?.to_text());
            let failed = exp.records.iter().filter(|r| r.error.is_some()).count();
            if failed > 0 {
                eprintln!(
                    "{failed} result(s) failed; see {}",
                    cfg.output.join("results.csv").display()
                );
            }
        }
        Command::Report { input } => {
            let path = if input.is_dir() {
                input.join("results.csv")
            } else {
                input
            };
            let table = report_table(&read_records(&path)?)?;
            print!("{}", table.to_text());
        }
        Command::Flowgen(FlowgenCommand::Train {
            real,
            epsilon,
            out,
            config,
            seed,
        }) => {
            let mut cfg: WganConfig = match config {
                Some(p) => load_toml(&p)?,
                None => WganConfig::default(),
            };
            cfg.epsilon = epsilon;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let set = FlowSet::load_dir(&real)?;
            let outcome = train_wgan(&set, &cfg)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            outcome.generator.save(&out)?;
            let trace = out.with_extension("trace.csv");
            write(&trace, &outcome.trace_csv()?)?;
            if let Some(last) = outcome.trace.last() {
                println!("final distance estimate {:.4} (target {epsilon})", last.w_hat);
            }
        }
        Command::Flowgen(FlowgenCommand::Sample {
            params,
            n,
            seed,
            out,
            epsilon,
        }) => {
            let generator = GeneratorNet::load(&params)?;
            sample_flows(&generator, n, seed, epsilon)?.save_dir(&out)?;
        }
        Command::Meta(MetaCommand::Train {
            config,
            flows,
            out,
            maml,
            seed,
            net,
        }) => {
            let mut cfg: MetaConfig = load_toml(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let net = roadnet(&net)?;
            let flows = vehicle_flows(&flows)?;
            let outcome = if maml {
                maml_train(&net, &flows, &cfg)?
            } else {
                meta_train(&net, &flows, &cfg)?
            };
            outcome.bank.save_dir(&out, outcome.predictor.as_ref())?;
            let mut rounds = String::from("round,mean_att,reclustered,predictor_loss\n");
            for r in &outcome.rounds {
                let loss = r.predictor_loss.map(|l| l.to_string()).unwrap_or_default();
                rounds.push_str(&format!(
                    "{},{},{},{}\n",
                    r.round, r.mean_travel_time, r.reclustered, loss
                ));
            }
            write(&out.join("rounds.csv"), &rounds)?;
        }
        Command::Meta(MetaCommand::Test {
            config,
            bank,
            flows,
            out,
            seed,
            net,
        }) => {
            let mut cfg: MetaConfig = load_toml(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let net = roadnet(&net)?;
            let flows = vehicle_flows(&flows)?;
            let (bank, predictor) = ClusterBank::load_dir(&bank, cfg.memory_budget)?;
            let results = meta_test(&net, &flows, &bank, predictor.as_ref(), &cfg)?;
            let mut csv = String::from("flow,cluster,att,free_flow\n");
            for (k, (r, f)) in results.iter().zip(&flows).enumerate() {
                csv.push_str(&format!(
                    "{k},{},{},{}\n",
                    r.cluster,
                    r.travel.seconds,
                    free_flow_time(&net, f)?
                ));
            }
            write(&out, &csv)?;
            let mean = results.iter().map(|r| r.travel.seconds).sum::<f64>() / results.len().max(1) as f64;
            println!("mean travel time {mean:.2}s over {} flows", results.len());
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
