//! Command-line surface for the sqlrobust toolkit: evaluation, perturbation,
//! attack campaigns, schema linking, MAS, and dataset statistics. Every
//! command is deterministic for a fixed seed and prints one machine-readable
//! summary line.
//!
//! Exit codes: 0 success, 1 usage, 2 input, 3 transport, 4 validation.

mod commands;
mod config;
mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::{PredictorSpec, ProviderSources};
use config::{default_jobs, resolve, EffectiveConfig, FileConfig};

#[derive(Parser)]
#[command(
    name = "sqlrobust",
    version,
    about = "Measure and harden text-to-SQL systems against synonym substitution"
)]
struct Cli {
    /// JSON config file; flags and SQLROBUST_* environment variables win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker parallelism; defaults to the logical core count.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score predictions against gold SQL with exact match and component F1.
    Evaluate {
        #[arg(long)]
        schemas: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// JSONL of {"index"|"id": n, "sql": text}.
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synonym-substituted dataset with the gold SQL unchanged.
    Perturb {
        #[arg(long)]
        schemas: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Annotation file extending schema items with synonyms.
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// Cell-value sidecar file.
        #[arg(long)]
        cell_values: Option<PathBuf>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Word-vector text file ("word v1 .. vd" per line).
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Contextual proposer service URL (http://...).
        #[arg(long)]
        proposer_url: Option<String>,
        /// Offline proposer stub: JSON {"phrase": [candidates...]}.
        #[arg(long)]
        proposer_stub: Option<PathBuf>,
        /// Provider priority, comma-separated.
        #[arg(long)]
        providers: Option<String>,
        /// Max edits per question.
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write diff statistics and the substitution report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Drive a predictor to build a worst-case dataset.
    Attack {
        #[arg(long)]
        schemas: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Annotation file; applied to the predictor's schemas for
        /// MAS-defended runs.
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        proposer_url: Option<String>,
        #[arg(long)]
        proposer_stub: Option<PathBuf>,
        #[arg(long)]
        providers: Option<String>,
        /// Subprocess predictor command (line protocol on stdio).
        #[arg(long, conflicts_with_all = ["predictor_url", "predictor_baseline"])]
        predictor_cmd: Option<String>,
        /// HTTP predictor base URL (POST /predict).
        #[arg(long, conflicts_with = "predictor_baseline")]
        predictor_url: Option<String>,
        /// Use the built-in lexical baseline predictor.
        #[arg(long)]
        predictor_baseline: bool,
        /// Apply multi-annotation selection inside the baseline predictor.
        #[arg(long, requires = "predictor_baseline")]
        predictor_mas: bool,
        #[arg(long)]
        max_edits: Option<usize>,
        #[arg(long)]
        candidates_per_span: Option<usize>,
        /// Span ranking policy: deletion_impact or link_score.
        #[arg(long)]
        policy: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Also write originals plus successful adversarial rows here.
        #[arg(long)]
        augment_out: Option<PathBuf>,
    },
    /// Select one annotation per schema item for each question (JSONL out).
    Mas {
        #[arg(long)]
        schemas: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Lexically link questions to schema items and cell values (JSONL out).
    Link {
        #[arg(long)]
        schemas: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        cell_values: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Difference statistics between two aligned datasets.
    Stats {
        #[arg(long)]
        schemas: PathBuf,
        #[arg(long)]
        original: PathBuf,
        #[arg(long)]
        modified: PathBuf,
        #[arg(long)]
        cell_values: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-domain substitution report without question text.
    Report {
        #[arg(long)]
        schemas: PathBuf,
        #[arg(long)]
        original: PathBuf,
        #[arg(long)]
        modified: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write a human-readable text table here.
        #[arg(long)]
        text: Option<PathBuf>,
    },
    /// Serve the built-in baseline predictor over the stdio line protocol.
    Baseline {
        #[arg(long)]
        schemas: PathBuf,
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// Apply multi-annotation selection before linking.
        #[arg(long)]
        mas: bool,
    },
}

/// Commands with random choices refuse to run without a seed.
fn require_seed(seed: Option<u64>, file: &FileConfig) -> anyhow::Result<u64> {
    seed.or_else(|| {
        std::env::var("SQLROBUST_SEED")
            .ok()
            .and_then(|v| v.parse().ok())
    })
    .or(file.seed)
    .ok_or_else(|| {
        anyhow::anyhow!("usage: a --seed is required (flag, SQLROBUST_SEED, or config file)")
    })
}

#[allow(clippy::too_many_arguments)]
fn effective(
    file: &FileConfig,
    jobs: Option<usize>,
    seed: u64,
    budget: Option<usize>,
    max_edits: Option<usize>,
    candidates_per_span: Option<usize>,
    policy: Option<String>,
    providers: Option<String>,
) -> EffectiveConfig {
    EffectiveConfig {
        seed,
        jobs: resolve(jobs, "SQLROBUST_JOBS", file.jobs, default_jobs()),
        budget: resolve(budget, "SQLROBUST_BUDGET", file.budget, 1),
        max_edits: resolve(max_edits, "SQLROBUST_MAX_EDITS", file.max_edits, 3),
        candidates_per_span: resolve(
            candidates_per_span,
            "SQLROBUST_CANDIDATES_PER_SPAN",
            file.candidates_per_span,
            5,
        ),
        policy: resolve(
            policy,
            "SQLROBUST_POLICY",
            file.policy.clone(),
            "deletion_impact".to_string(),
        ),
        providers: resolve(
            providers,
            "SQLROBUST_PROVIDERS",
            file.providers.clone(),
            "lexicon,contextual,embedding".to_string(),
        ),
        embedding_k: resolve(None, "SQLROBUST_EMBEDDING_K", file.embedding_k, 10),
        embedding_min_similarity: resolve(
            None,
            "SQLROBUST_EMBEDDING_MIN_SIMILARITY",
            file.embedding_min_similarity,
            0.0,
        ),
        context_sentences: resolve(
            None,
            "SQLROBUST_CONTEXT_SENTENCES",
            file.context_sentences,
            sqlrobust_core::providers::DEFAULT_CONTEXT_SENTENCES,
        ),
        proposer_top_k: resolve(None, "SQLROBUST_PROPOSER_TOP_K", file.proposer_top_k, 10),
        timeout_ms: resolve(None, "SQLROBUST_TIMEOUT_MS", file.timeout_ms, 30_000),
    }
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let jobs = cli.jobs;

    match cli.command {
        Command::Evaluate {
            schemas,
            gold,
            predictions,
            out,
        } => {
            let config = effective(&file, jobs, 0, None, None, None, None, None);
            commands::evaluate(&schemas, &gold, &predictions, &out, &config)
        }
        Command::Perturb {
            schemas,
            dataset,
            annotations,
            cell_values,
            lexicon,
            embeddings,
            proposer_url,
            proposer_stub,
            providers,
            budget,
            seed,
            out,
            report,
        } => {
            let seed = require_seed(seed, &file)?;
            let config = effective(&file, jobs, seed, budget, None, None, None, providers);
            let sources = ProviderSources {
                lexicon,
                embeddings,
                proposer_url,
                proposer_stub,
            };
            commands::perturb(
                &schemas,
                &dataset,
                annotations.as_deref(),
                cell_values.as_deref(),
                &sources,
                &out,
                report.as_deref(),
                &config,
            )
        }
        Command::Attack {
            schemas,
            dataset,
            annotations,
            lexicon,
            embeddings,
            proposer_url,
            proposer_stub,
            providers,
            predictor_cmd,
            predictor_url,
            predictor_baseline,
            predictor_mas,
            max_edits,
            candidates_per_span,
            policy,
            seed,
            out,
            report,
            augment_out,
        } => {
            let seed = require_seed(seed, &file)?;
            let config = effective(
                &file,
                jobs,
                seed,
                None,
                max_edits,
                candidates_per_span,
                policy,
                providers,
            );
            let spec = match (predictor_cmd, predictor_url, predictor_baseline) {
                (Some(command), _, _) => PredictorSpec::Command(command),
                (None, Some(url), _) => PredictorSpec::Url(url),
                (None, None, true) => PredictorSpec::Baseline { mas: predictor_mas },
                (None, None, false) => anyhow::bail!(
                    "usage: one of --predictor-cmd, --predictor-url, or --predictor-baseline is required"
                ),
            };
            let sources = ProviderSources {
                lexicon,
                embeddings,
                proposer_url,
                proposer_stub,
            };
            commands::attack(
                &schemas,
                &dataset,
                annotations.as_deref(),
                &sources,
                &spec,
                &out,
                report.as_deref(),
                augment_out.as_deref(),
                &config,
            )
        }
        Command::Mas {
            schemas,
            dataset,
            annotations,
            out,
        } => {
            let config = effective(&file, jobs, 0, None, None, None, None, None);
            commands::mas(&schemas, &dataset, annotations.as_deref(), &out, &config)
        }
        Command::Link {
            schemas,
            dataset,
            cell_values,
            out,
        } => {
            let config = effective(&file, jobs, 0, None, None, None, None, None);
            commands::link_cmd(&schemas, &dataset, cell_values.as_deref(), &out, &config)
        }
        Command::Stats {
            schemas,
            original,
            modified,
            cell_values,
            out,
        } => {
            let config = effective(&file, jobs, 0, None, None, None, None, None);
            commands::stats(
                &schemas,
                &original,
                &modified,
                cell_values.as_deref(),
                &out,
                &config,
            )
        }
        Command::Report {
            schemas,
            original,
            modified,
            out,
            text,
        } => {
            let config = effective(&file, jobs, 0, None, None, None, None, None);
            commands::report(
                &schemas,
                &original,
                &modified,
                &out,
                text.as_deref(),
                &config,
            )
        }
        Command::Baseline {
            schemas,
            annotations,
            mas,
        } => commands::baseline_serve(&schemas, annotations.as_deref(), mas),
    }
}

/// Exit code classification: usage 1, input 2, transport 3, validation 4.
fn exit_code_for(error: &anyhow::Error) -> i32 {
    if error.to_string().starts_with("usage: ") {
        return 1;
    }
    for cause in error.chain() {
        if let Some(core) = cause.downcast_ref::<sqlrobust_core::Error>() {
            return match core {
                sqlrobust_core::Error::Transport(_) | sqlrobust_core::Error::Protocol(_) => 3,
                sqlrobust_core::Error::Validation(_) => 4,
                _ => 2,
            };
        }
    }
    2
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(error) => {
            let code = if error.use_stderr() { 1 } else { 0 };
            let _ = error.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(error) => {
            eprintln!("error: {error:#}");
            std::process::exit(exit_code_for(&error));
        }
    }
}
