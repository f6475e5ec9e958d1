//! Argument handling for the `cegocd` binary.

use std::fs;
use std::path::{Path, PathBuf};

use cegocd_core::kg_store::load_graph_with_title_type;
use cegocd_core::pipeline::{answer, PipelineConfig, PipelineError, Providers, RunReport};
use clap::Parser;

/// Exit code for malformed command lines.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "cegocd", version, about = "Answer a question from an academic knowledge graph")]
pub struct Args {
    /// Knowledge graph in JSONL form.
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub query: String,
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Use the deterministic offline providers.
    #[arg(long)]
    pub mock_providers: bool,
    /// Where to write the JSON report; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the refined subgraph as JSON.
    #[arg(long)]
    pub emit_subgraph: Option<PathBuf>,
    #[arg(long)]
    pub max_hops: Option<usize>,
    /// Maximum number of communities.
    #[arg(long)]
    pub theta_max: Option<usize>,
}

/// Parses `argv` (program name first), runs the query and returns the
/// process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(args) => args,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match run(&args) {
        Ok(report) => {
            if report.flags.no_evidence {
                log::warn!("no evidence found for the query");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(args: &Args) -> Result<RunReport, PipelineError> {
    let mut config = match &args.config {
        Some(path) => PipelineConfig::from_file(path).map_err(PipelineError::Config)?,
        None => PipelineConfig::default(),
    };
    if let Some(h) = args.max_hops {
        config.max_hops = h;
    }
    if let Some(t) = args.theta_max {
        config.max_communities = t;
    }
    config.validate().map_err(PipelineError::Config)?;

    let (graph, stats) = load_graph_with_title_type(&args.graph, &config.title_type)?;
    log::info!(
        "loaded {} entities and {} relations ({} duplicates, {} self-loops dropped)",
        graph.entity_count(),
        graph.relation_count(),
        stats.duplicates_collapsed,
        stats.self_loops_dropped
    );
    let providers = if args.mock_providers { Providers::mock(&config) } else { Providers::remote(&config)? };
    let report = answer(&args.query, &graph, providers.llm.as_ref(), providers.embedder.as_ref(), &config)?;

    match &args.out {
        Some(path) => write(path, &report.to_json())?,
        None => print!("{}", report.to_json()),
    }
    if let Some(path) = &args.emit_subgraph {
        let mut json = serde_json::to_string_pretty(&report.refined_subgraph).expect("subgraph serializes");
        json.push('\n');
        write(path, &json)?;
    }
    Ok(report)
}

fn write(path: &Path, contents: &str) -> Result<(), PipelineError> {
    fs::write(path, contents).map_err(|error| PipelineError::Output { path: path.to_owned(), error })
}
