//! The `nsir` command line.

mod commands;
pub mod exit;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_weights, ConfigOverrides, DkSetting, ProviderKind, RunConfig};
pub use exit::{exit_code, EXIT_BACKEND, EXIT_CONFIG, EXIT_DATA, EXIT_OK};

#[derive(Debug, Parser)]
#[command(name = "nsir", version, about = "Logic-aware reranking for dense retrieval")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Number of first-stage candidates to rerank.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub provider: Option<ProviderKind>,
    /// Binary embedding store (file provider).
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,
    /// Embedding service base URL (service provider).
    #[arg(long, global = true)]
    pub embed_url: Option<String>,
    /// OpenAI-compatible API base URL.
    #[arg(long, global = true)]
    pub llm_base: Option<String>,
    #[arg(long, global = true)]
    pub llm_model: Option<String>,
    /// Translation cache (JSONL).
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Reserved.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Score weights as `w1,w2`.
    #[arg(long, global = true, value_parser = parse_weights)]
    pub weights: Option<[f64; 2]>,
    #[arg(long, global = true)]
    pub no_normalize_fused: bool,
    /// Prepend the CLS vector to the NL token matrix.
    #[arg(long, global = true)]
    pub include_cls_row: bool,
    /// Attention scale: `auto` or a positive integer.
    #[arg(long, global = true)]
    pub d_k: Option<DkSetting>,
    /// Scoring threads; 0 uses every core.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

impl GlobalArgs {
    pub fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            k: self.k,
            d_k: self.d_k,
            weights: self.weights,
            no_normalize_fused: self.no_normalize_fused,
            include_cls_row: self.include_cls_row,
            threads: self.threads,
            provider: self.provider,
            store: self.store.clone(),
            embed_url: self.embed_url.clone(),
            llm_base: self.llm_base.clone(),
            llm_model: self.llm_model.clone(),
            cache: self.cache.clone(),
            seed: self.seed,
        }
    }
}

/// Where queries come from: BEIR queries JSONL or NegConstraint items.
#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long, conflicts_with = "negconstraint")]
    pub queries: Option<PathBuf>,
    #[arg(long)]
    pub negconstraint: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Encode corpus, query and cached FOL texts into an embedding store.
    Embed {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        queries: QueryArgs,
    },
    /// Translate queries and documents into FOL ahead of reranking.
    WarmCache {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[command(flatten)]
        queries: QueryArgs,
        /// Requests in flight; defaults to the config value.
        #[arg(long)]
        concurrency: Option<usize>,
    },
    /// First-stage retrieval only.
    Retrieve {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        queries: QueryArgs,
    },
    /// First-stage retrieval followed by reranking.
    Rerank {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        queries: QueryArgs,
        /// Also write per-document score breakdowns as JSON.
        #[arg(long)]
        details: Option<PathBuf>,
    },
    /// Score a run file with nDCG@cutoff and MAP.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, required_unless_present = "negconstraint")]
        qrels: Option<PathBuf>,
        /// NegConstraint items; supplies qrels and a per-formulation summary.
        #[arg(long, conflicts_with = "qrels")]
        negconstraint: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        cutoff: usize,
        /// Leave queries without relevant documents out of the means.
        #[arg(long)]
        exclude_unjudged: bool,
    },
    /// Generate negative-constraint queries for item skeletons.
    Generate {
        #[arg(long)]
        corpus: PathBuf,
        /// JSONL items; their `query` fields are filled in.
        #[arg(long)]
        items: PathBuf,
    },
    /// Export cost, plan, sigma and attention matrices for one pair.
    DumpAlignment {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(long)]
        doc_id: String,
    },
    /// Print the effective configuration as TOML.
    ShowConfig,
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let config = RunConfig::resolve(cli.global.config.as_deref(), &cli.global.overrides())?;
    eprintln!("effective config: {}", config.to_json());
    commands::dispatch(&config, cli.global.out.as_deref(), cli.command)
}
