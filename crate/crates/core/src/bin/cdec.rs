//! Command-line front end for the batch pipeline.
//!
//! Every flag can also be set through an environment variable named
//! `CDEC_` followed by the flag name in upper snake case, for example
//! `CDEC_RETRY_CAP=50` or `CDEC_K=1,5`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::{Args, Parser, Subcommand};

use constrained_decoding::harness::{
    self, BenchmarkEntry, DecoderKind, GenerationRecord, HarnessError, LabelRecord, RunConfig,
};
use constrained_decoding::model::LoadedModel;

#[derive(Parser)]
#[command(name = "cdec", version, about = "Constrained decoding benchmark pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Join prompts with their constraint records into a benchmark file.
    Ingest {
        #[command(flatten)]
        input: PromptInput,
        #[arg(long, env = "CDEC_OUT")]
        out: PathBuf,
    },
    /// Generate completions for every prompt and seed.
    Run(RunArgs),
    /// Label generations with the substring stub analyzers.
    LabelStub {
        #[command(flatten)]
        input: BenchmarkInput,
        #[arg(long, env = "CDEC_GENERATIONS")]
        generations: PathBuf,
        #[arg(long, env = "CDEC_OUT")]
        out: PathBuf,
    },
    /// Join generations with labels and write report.json and report.tsv.
    Report {
        #[arg(long, env = "CDEC_GENERATIONS")]
        generations: PathBuf,
        #[arg(long, env = "CDEC_LABELS")]
        labels: PathBuf,
        #[arg(long = "k", env = "CDEC_K", value_delimiter = ',', default_values_t = [1u64, 5])]
        ks: Vec<u64>,
        /// Output directory.
        #[arg(long, env = "CDEC_OUT")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct PromptInput {
    #[arg(long, env = "CDEC_PROMPTS")]
    prompts: PathBuf,
    #[arg(long, env = "CDEC_CONSTRAINTS")]
    constraints: Option<PathBuf>,
}

/// Either an ingested benchmark file or raw prompts and constraints.
#[derive(Args)]
struct BenchmarkInput {
    #[arg(long, env = "CDEC_BENCHMARK", conflicts_with_all = ["prompts", "constraints"], required_unless_present = "prompts")]
    benchmark: Option<PathBuf>,
    #[arg(long, env = "CDEC_PROMPTS")]
    prompts: Option<PathBuf>,
    #[arg(long, env = "CDEC_CONSTRAINTS", requires = "prompts")]
    constraints: Option<PathBuf>,
}

impl BenchmarkInput {
    fn load(&self) -> Result<Vec<BenchmarkEntry>, HarnessError> {
        match (&self.benchmark, &self.prompts) {
            (Some(b), _) => harness::read_jsonl(b),
            (None, Some(p)) => harness::ingest(p, self.constraints.as_deref()),
            (None, None) => unreachable!("clap requires one input"),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    input: BenchmarkInput,
    #[arg(long, env = "CDEC_MODEL")]
    model: PathBuf,
    #[arg(
        long,
        env = "CDEC_DECODER",
        value_parser = PossibleValuesParser::new(DecoderKind::ALL.map(DecoderKind::name))
            .map(|s| s.parse::<DecoderKind>().expect("listed names parse"))
    )]
    decoder: DecoderKind,
    /// Samples per prompt and seed.
    #[arg(long, env = "CDEC_SAMPLES")]
    samples: Option<usize>,
    /// Comma-separated seed list.
    #[arg(long, env = "CDEC_SEEDS", value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, env = "CDEC_RETRY_CAP")]
    retry_cap: Option<usize>,
    #[arg(long, env = "CDEC_BEAM_WIDTH")]
    beam_width: Option<usize>,
    #[arg(long, env = "CDEC_TOP_P")]
    top_p: Option<f64>,
    #[arg(long, env = "CDEC_TEMPERATURE")]
    temperature: Option<f64>,
    #[arg(long, env = "CDEC_MAX_NEW_TOKENS")]
    max_new_tokens: Option<usize>,
    /// Output length of the energy decoder.
    #[arg(long, env = "CDEC_OUTPUT_LEN")]
    output_len: Option<usize>,
    #[arg(long, env = "CDEC_MAX_ITERS")]
    max_iters: Option<usize>,
    /// Generation file; failed groups go to a `.failures.jsonl` sibling.
    #[arg(long, env = "CDEC_OUT")]
    out: PathBuf,
}

impl RunArgs {
    fn config(&self) -> RunConfig {
        let mut c = RunConfig::new(self.decoder);
        if let Some(n) = self.samples {
            c.samples_per_prompt = n;
        }
        if let Some(s) = &self.seeds {
            c.seeds = s.clone();
        }
        if let Some(cap) = self.retry_cap {
            c.retry_cap = cap;
        }
        if let Some(b) = self.beam_width {
            c.decoding.beam_width = b;
        }
        if let Some(p) = self.top_p {
            c.decoding.top_p = p;
        }
        if let Some(t) = self.temperature {
            c.decoding.temperature = t;
        }
        if let Some(m) = self.max_new_tokens {
            c.decoding.max_new_tokens = m;
        }
        if let Some(l) = self.output_len {
            c.mucola.output_len = l;
        }
        if let Some(m) = self.max_iters {
            c.mucola.max_iters = m;
        }
        c
    }
}

fn failures_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.failures.jsonl"))
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Ingest { input, out } => {
            let table = harness::ingest(&input.prompts, input.constraints.as_deref())?;
            harness::write_jsonl(&out, &table)?;
            log::info!("wrote {} benchmark entries to {}", table.len(), out.display());
        }
        Command::Run(args) => {
            let benchmark = args.input.load()?;
            let model = LoadedModel::load(&args.model)?;
            let output = harness::run(&args.config(), &benchmark, &model)?;
            harness::write_jsonl(&args.out, &output.records)?;
            harness::write_jsonl(failures_path(&args.out), &output.failures)?;
            log::info!(
                "wrote {} generations ({} failed groups) to {}",
                output.records.len(),
                output.failures.len(),
                args.out.display()
            );
        }
        Command::LabelStub { input, generations, out } => {
            let benchmark = input.load()?;
            let gens: Vec<GenerationRecord> = harness::read_jsonl(&generations)?;
            let labels = harness::label_stub(&gens, &benchmark)?;
            harness::write_jsonl(&out, &labels)?;
        }
        Command::Report { generations, labels, ks, out } => {
            let gens: Vec<GenerationRecord> = harness::read_jsonl(&generations)?;
            let labels: Vec<LabelRecord> = harness::read_jsonl(&labels)?;
            let joined = harness::label_join(&gens, &labels)?;
            if !joined.missing.is_empty() {
                log::warn!("{} generations have no label and were excluded", joined.missing.len());
            }
            let report = harness::report(&joined.labeled, &ks)?;
            harness::write_report(&out, &report)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::FAILURE
        }
    }
}
