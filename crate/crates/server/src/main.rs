use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use simrag_core::config::SimragConfig;
use simrag_core::corpus::{DocFormat, SourceCategory};
use simrag_core::evalharness::{load_suite, run_suite, RunOptions};
use simrag_core::llm_client::{list_models, ProviderConfig, ProviderKind};
use simrag_core::pipeline::{ingest_path, load_snapshot, save_snapshot, Pipeline};
use simrag_core::retrieval::{parse_quotas, RetrievalMode};
use simrag_server::AppState;

#[derive(Parser)]
#[command(
    name = "simrag",
    version,
    about = "Local retrieval-augmented assistant for simulation software"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML config file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override `data_dir` from the config.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Chunk, embed and index a file or every file below a directory.
    Ingest {
        path: PathBuf,
        #[arg(long)]
        category: SourceCategory,
        /// Format override; detected from the extension otherwise.
        #[arg(long)]
        format: Option<DocFormat>,
    },
    /// Ask one question in a fresh session and print the answer with citations.
    Query {
        prompt: String,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        k: Option<usize>,
        /// Stratified quotas, e.g. `api-reference=2,input-example=1`.
        #[arg(long)]
        quotas: Option<String>,
        #[arg(long)]
        neighbor_radius: Option<usize>,
        #[arg(long, value_enum)]
        provider: Option<Provider>,
    },
    /// Prompt-suite evaluation.
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
    /// List the models the configured provider offers.
    Models,
    /// Run the HTTP service.
    Serve,
}

#[derive(Subcommand)]
enum EvalCommand {
    Run {
        #[arg(long)]
        suite: PathBuf,
        /// Replay all cases in one session.
        #[arg(long)]
        chained: bool,
        #[arg(long, value_enum)]
        provider: Option<Provider>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Flat,
    Stratified,
}

#[derive(Clone, Copy, ValueEnum)]
enum Provider {
    Stub,
    Http,
}

fn load_config(global: &Global) -> Result<SimragConfig> {
    let mut config = match &global.config {
        Some(path) => SimragConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => SimragConfig::default().with_env(),
    };
    if let Some(dir) = &global.data_dir {
        config.data_dir = dir.clone();
    }
    Ok(config)
}

fn apply_provider(config: &mut SimragConfig, provider: Option<Provider>) -> Result<()> {
    match provider {
        None => {}
        Some(Provider::Stub) => config.provider = ProviderConfig::stub(),
        Some(Provider::Http) => {
            config.provider.kind = ProviderKind::HttpChat;
            config
                .provider
                .validate()
                .context("--provider http needs provider.base_url or SIMRAG_LLM_URL")?;
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let mut config = load_config(&cli.global)?;

    match cli.command {
        Command::Ingest {
            path,
            category,
            format,
        } => ingest(&config, &path, category, format),
        Command::Query {
            prompt,
            mode,
            k,
            quotas,
            neighbor_radius,
            provider,
        } => {
            apply_provider(&mut config, provider)?;
            let retrieval = &mut config.retrieval;
            if let Some(mode) = mode {
                retrieval.mode = match mode {
                    Mode::Flat => RetrievalMode::Flat,
                    Mode::Stratified => RetrievalMode::Stratified,
                };
            }
            if let Some(k) = k {
                retrieval.k_total = k;
            }
            if let Some(q) = quotas {
                retrieval.quotas = Some(parse_quotas(&q)?);
            }
            if let Some(r) = neighbor_radius {
                retrieval.neighbor_radius = r;
            }
            retrieval.validate()?;
            query(&config, &prompt)
        }
        Command::Eval {
            command:
                EvalCommand::Run {
                    suite,
                    chained,
                    provider,
                    out,
                },
        } => {
            apply_provider(&mut config, provider)?;
            eval(&config, &suite, chained, &out)
        }
        Command::Models => {
            for model in list_models(&config.provider)? {
                match model.context_length {
                    Some(n) => println!("{}\t{n}", model.name),
                    None => println!("{}", model.name),
                }
            }
            Ok(())
        }
        Command::Serve => {
            let state = AppState::open(config)?;
            tokio::runtime::Runtime::new()?.block_on(simrag_server::serve(state))?;
            Ok(())
        }
    }
}

fn ingest(
    config: &SimragConfig,
    path: &Path,
    category: SourceCategory,
    format: Option<DocFormat>,
) -> Result<()> {
    let pipeline = config.pipeline();
    let (mut corpus, mut index) = load_snapshot(&pipeline, &config.data_dir)?;
    let summaries = ingest_path(
        &mut corpus,
        &mut index,
        path,
        category,
        format,
        &pipeline.embedder,
    )?;
    save_snapshot(&corpus, &index, &config.data_dir)?;
    for s in &summaries {
        println!("{}\t{} chunks", s.doc_id, s.chunk_count);
    }
    eprintln!(
        "{} documents, {} chunks in {}",
        corpus.documents().count(),
        corpus.chunk_count(),
        config.data_dir.display()
    );
    Ok(())
}

fn query(config: &SimragConfig, prompt: &str) -> Result<()> {
    let pipeline = Pipeline::load(config.pipeline(), &config.data_dir)?;
    let mut tree = pipeline.new_session();
    let answer = pipeline.chat(&mut tree, prompt, None)?;
    println!("{}", answer.response.content);
    if !answer.citations.is_empty() {
        println!("\nsources:");
        for c in &answer.citations {
            println!(
                "  [{}] {} chunk {} ({:.3})",
                c.category, c.doc_path, c.ordinal, c.score
            );
        }
    }
    Ok(())
}

fn eval(config: &SimragConfig, suite: &Path, chained: bool, out: &Path) -> Result<()> {
    let cases = load_suite(suite)?;
    let pipeline = Pipeline::load(config.pipeline(), &config.data_dir)
        .context("run aborted: cannot load corpus and index")?;
    let report = run_suite(&cases, &pipeline, RunOptions { chained }, Some(out))?;
    print!("{}", report.render_table());
    eprintln!("report written to {}", out.display());
    Ok(())
}
