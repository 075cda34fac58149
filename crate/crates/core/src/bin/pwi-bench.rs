use std::io::{self, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pwi_bench::config::{Overrides, ProviderOverride, RunConfig};
use pwi_bench::pipeline::{self, Mode, PipelineError, Run};
use pwi_bench::provider::protocol::serve;
use pwi_bench::provider::{SyntheticProvider, SyntheticProviderConfig, DEFAULT_SYNTHETIC_DIM};
use pwi_bench::zeroshot::builtin_templates;

#[derive(Parser)]
#[command(name = "pwi-bench", version, about = "Picture-word interference benchmark for image-text encoders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: classify, analyze, report.
    Run(RunArgs),
    /// Prompt sweep over templates (all built-ins unless --prompts is given).
    Sweep {
        #[command(flatten)]
        args: RunArgs,
        /// Comma-separated built-in template ids.
        #[arg(long, value_delimiter = ',')]
        prompts: Vec<String>,
    },
    /// Representational similarity analysis only.
    Rsa(RunArgs),
    /// Render stimuli into <out>/stimuli without embedding anything.
    Generate(RunArgs),
    /// Check the config and its inputs, then print a summary.
    Validate(RunArgs),
    /// Serve the synthetic provider over the JSON-lines protocol on
    /// stdin/stdout.
    ServeSynthetic {
        /// Vocabulary entries (comma-separated, repeatable).
        #[arg(long, value_delimiter = ',')]
        vocab: Vec<String>,
        /// File with one vocabulary entry per line.
        #[arg(long)]
        vocab_file: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        gamma: f64,
        #[arg(long, default_value_t = DEFAULT_SYNTHETIC_DIM)]
        dim: usize,
        /// Answer PNG payloads with vectors keyed by their digest.
        #[arg(long)]
        hash_images: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// `synthetic` or `cmd:"<command line>"`.
    #[arg(long)]
    provider: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    no_cache: bool,
    #[arg(long)]
    timestamps: bool,
    /// Skip words equal to the image's own label.
    #[arg(long)]
    exclude_own_label: bool,
}

impl RunArgs {
    fn prepare(&self) -> Result<Run, PipelineError> {
        let mut cfg = RunConfig::load(&self.config)?;
        let overrides = Overrides {
            seed: self.seed,
            out_dir: self.out.clone(),
            provider: self.provider.as_deref().map(ProviderOverride::parse).transpose()?,
            gamma: self.gamma,
            no_cache: self.no_cache,
            timestamps: self.timestamps,
            include_own_label: self.exclude_own_label.then_some(false),
        };
        cfg.apply(&overrides)?;
        pipeline::prepare(cfg)
    }
}

fn report(summary: &pipeline::RunSummary) {
    for (prompt, rates) in &summary.rates {
        let cells: Vec<String> = rates.iter().map(|(c, v)| format!("{c} {v:.2}%")).collect();
        println!("{prompt}: {}", cells.join("  "));
    }
    if let Some(rsa) = &summary.rsa {
        for s in &rsa.stats {
            println!(
                "rdm {}: mean {:.4}, cluster index {}, vs original {}",
                s.tag,
                s.mean_offdiag,
                s.cluster_index.map_or("n/a".into(), |v| format!("{v:.4}")),
                s.vs_original.map_or("n/a".into(), |v| format!("{v:.4}")),
            );
        }
    }
    println!("report: {}", summary.report_dir.display());
}

fn read_vocab_file(p: &Path) -> io::Result<Vec<String>> {
    Ok(std::fs::read_to_string(p)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result: Result<(), PipelineError> = (|| match cli.command {
        Command::Run(args) => {
            let run = args.prepare()?;
            report(&pipeline::execute(&run, Mode::Run)?);
            Ok(())
        }
        Command::Sweep { args, prompts } => {
            let mut run = args.prepare()?;
            run.templates = if prompts.is_empty() {
                builtin_templates()
            } else {
                prompts
                    .iter()
                    .map(|id| pwi_bench::zeroshot::builtin_template(id))
                    .collect::<Result<_, _>>()
                    .map_err(|e| PipelineError::Config(e.to_string()))?
            };
            report(&pipeline::execute(&run, Mode::Sweep)?);
            Ok(())
        }
        Command::Rsa(args) => {
            let run = args.prepare()?;
            report(&pipeline::execute(&run, Mode::Rsa)?);
            Ok(())
        }
        Command::Generate(args) => {
            let run = args.prepare()?;
            let n = pipeline::generate_stimuli(&run)?;
            println!("{n} stimuli written to {}", run.config.out_dir.join("stimuli").display());
            Ok(())
        }
        Command::Validate(args) => {
            let run = args.prepare()?;
            print!("{}", pipeline::describe(&run)?);
            println!("ok");
            Ok(())
        }
        Command::ServeSynthetic {
            mut vocab,
            vocab_file,
            seed,
            gamma,
            dim,
            hash_images,
        } => {
            if let Some(p) = vocab_file {
                vocab.extend(read_vocab_file(&p).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?);
            }
            let mut cfg = SyntheticProviderConfig::new(vocab, seed, gamma);
            cfg.dim = dim;
            cfg.hash_encoded_images = hash_images;
            let mut provider = SyntheticProvider::new(cfg).map_err(|e| PipelineError::Config(e.to_string()))?;
            let stdin = io::stdin();
            serve(&mut provider, BufReader::new(stdin.lock()), io::stdout().lock())
                .map_err(|e| PipelineError::Config(format!("serve: {e}")))
        }
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pwi-bench: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
