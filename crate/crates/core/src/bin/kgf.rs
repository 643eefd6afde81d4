//! `kgf`: run the knowledge-graph pipeline, or one stage of it, from the shell.
//!
//! Exit status is 0 on success, 1 when a stage fails and 2 for configuration errors.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kgf_core::config::Config;
use kgf_core::graph::{eval_sparql, parse_sparql, Node};
use kgf_core::pipeline::{Pipeline, Stage};
use kgf_core::Error;

#[derive(Parser)]
#[command(name = "kgf", version, about = "Clinical knowledge-graph construction from free-text reports")]
struct Cli {
    /// TOML config file.
    #[arg(long, global = true, default_value = "kgf.toml")]
    config: PathBuf,
    /// Use recorded fixtures and the deterministic offline agent only.
    #[arg(long, global = true)]
    offline: bool,
    /// Restrict to one cohort (PDAC, BRCA or OTHER).
    #[arg(long, global = true)]
    cohort: Option<String>,
    /// Output directory; overrides `out` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Recompute every stage even when cached artifacts match.
    #[arg(long, global = true)]
    fresh: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract EAV triples from every report.
    Extract,
    /// Ground extracted triples against their source text.
    Ground,
    /// Map grounded attributes to vocabulary concepts.
    Map,
    /// Generate, score and filter relations.
    Relate,
    /// Encode everything into RDF.
    Encode,
    /// Reason over the graph and check domain/range constraints.
    Validate,
    /// Run a SELECT query against `<out>/graph/cohort.nt` and print TSV.
    Query {
        /// Query text, or a path to a file holding it.
        query: String,
    },
    /// Compute metrics and write the report files.
    Report,
    /// Run every stage.
    Pipeline,
}

fn load_config(cli: &Cli) -> kgf_core::Result<Config> {
    let mut cfg = Config::load(&cli.config)?;
    if cli.offline {
        cfg.offline = true;
    }
    if cli.cohort.is_some() {
        cfg.cohort = cli.cohort.clone();
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn cell(n: &Node) -> String {
    match n {
        Node::Iri(i) => i.to_string(),
        Node::Literal(l) => l.lexical.replace(['\t', '\n'], " "),
    }
}

fn run(cli: &Cli) -> kgf_core::Result<()> {
    let cfg = load_config(cli)?;
    let pipeline = Pipeline::new(cfg)?.fresh(cli.fresh);
    let until = match &cli.command {
        Command::Extract => Stage::Extract,
        Command::Ground => Stage::Ground,
        Command::Map => Stage::Map,
        Command::Relate => Stage::Relate,
        Command::Encode => Stage::Encode,
        Command::Validate => Stage::Validate,
        Command::Report | Command::Pipeline => Stage::Report,
        Command::Query { query } => {
            let text = match fs::read_to_string(query) {
                Ok(t) => t,
                Err(_) => query.clone(),
            };
            let q = parse_sparql(&text)?;
            let store = pipeline.load_graph()?;
            let result = eval_sparql(&q, &store);
            println!("{}", result.vars.join("\t"));
            for row in &result.rows {
                println!("{}", row.iter().map(cell).collect::<Vec<_>>().join("\t"));
            }
            return Ok(());
        }
    };
    let summary = pipeline.run(until)?;
    log::info!(
        "{} document(s), stages {:?}, {} cached artifact(s) reused",
        summary.documents,
        summary.stages,
        summary.cache_hits
    );
    for p in &summary.outputs {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("kgf: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("kgf: {e}");
            ExitCode::from(1)
        }
    }
}
