use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use saxe::config::RunConfig;
use saxe::pipeline::Pipeline;
use saxe::{Error, Result};

#[derive(Parser)]
#[command(name = "saxe", version, about = "Contextualized semantic axes toolkit")]
struct Cli {
    /// Flat `key = value` run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; every stage derives its randomness from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Extra config override, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compile antonym-pole axes from a synset database.
    BuildLexicon(Opts),
    /// Choose contexts for each pole.
    SelectContexts(Opts),
    /// Realize axes as vectors.
    BuildAxes(Opts),
    /// Leave-one-out consistency per axis (`--method all` compares methods).
    Validate(Opts),
    /// Score targets against axes and rank poles.
    Project(Opts),
    /// Category vs background contrast per axis.
    Contrast(Opts),
    /// Mean-difference ranking between two variant groups.
    Variants(Opts),
    /// Bot filtering and deduplication of a raw corpus.
    Ingest(Opts),
    /// Frequency cutoff, gender leaning and monthly series.
    Vocab(Opts),
    /// Occurrence sampling with person/people replacement.
    Sample(Opts),
    /// Smooth and cluster frequency series.
    Cluster(Opts),
    /// Monthly axis scores per term.
    Timeline(Opts),
    /// Cluster profiles and axis variance.
    Report(Opts),
    /// Every stage the config provides inputs for.
    Run(Opts),
    /// Generate the toy dataset and its config into --out.
    MakeToy(Opts),
    /// Simulated extractor for toy occurrences.
    ToyExtract(Opts),
}

impl Cmd {
    fn opts(&self) -> &Opts {
        match self {
            Cmd::BuildLexicon(o)
            | Cmd::SelectContexts(o)
            | Cmd::BuildAxes(o)
            | Cmd::Validate(o)
            | Cmd::Project(o)
            | Cmd::Contrast(o)
            | Cmd::Variants(o)
            | Cmd::Ingest(o)
            | Cmd::Vocab(o)
            | Cmd::Sample(o)
            | Cmd::Cluster(o)
            | Cmd::Timeline(o)
            | Cmd::Report(o)
            | Cmd::Run(o)
            | Cmd::MakeToy(o)
            | Cmd::ToyExtract(o) => o,
        }
    }

    fn stage(&self) -> Option<&'static str> {
        Some(match self {
            Cmd::BuildLexicon(_) => "build-lexicon",
            Cmd::SelectContexts(_) => "select-contexts",
            Cmd::BuildAxes(_) => "build-axes",
            Cmd::Validate(_) => "validate",
            Cmd::Project(_) => "project",
            Cmd::Contrast(_) => "contrast",
            Cmd::Variants(_) => "variants",
            Cmd::Ingest(_) => "ingest",
            Cmd::Vocab(_) => "vocab",
            Cmd::Sample(_) => "sample",
            Cmd::Cluster(_) => "cluster",
            Cmd::Timeline(_) => "timeline",
            Cmd::Report(_) => "report",
            Cmd::ToyExtract(_) => "toy-extract",
            Cmd::Run(_) | Cmd::MakeToy(_) => return None,
        })
    }

    /// Stages whose `--axes` means stored axis vectors rather than specs.
    fn axes_are_vectors(&self) -> bool {
        matches!(self, Cmd::Project(_) | Cmd::Contrast(_) | Cmd::Variants(_) | Cmd::Timeline(_))
    }
}

#[derive(Args, Default)]
struct Opts {
    #[arg(long)]
    db: Option<String>,
    #[arg(long)]
    vocab: Option<String>,
    #[arg(long)]
    wp_vocab: Option<String>,
    #[arg(long)]
    pool: Option<String>,
    #[arg(long)]
    embeddings: Option<String>,
    #[arg(long)]
    static_embeddings: Option<String>,
    #[arg(long)]
    stats_sample: Option<String>,
    /// Axis specs, or stored axis vectors for project, contrast, variants and timeline.
    #[arg(long)]
    axes: Option<String>,
    #[arg(long)]
    targets: Option<String>,
    #[arg(long)]
    background: Option<String>,
    #[arg(long)]
    categories: Option<String>,
    #[arg(long)]
    groups: Option<String>,
    #[arg(long)]
    corpus: Option<String>,
    #[arg(long)]
    documents: Option<String>,
    #[arg(long)]
    terms: Option<String>,
    #[arg(long)]
    pronouns: Option<String>,
    #[arg(long)]
    plurals: Option<String>,
    #[arg(long)]
    occurrences: Option<String>,
    #[arg(long)]
    series: Option<String>,
    #[arg(long)]
    scores: Option<String>,
    #[arg(long)]
    clusters: Option<String>,
    /// glove, bert-default, bert-prob, or `all` (validate only).
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    min_pole: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    restarts: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    bootstrap: Option<String>,
}

impl Opts {
    fn pairs(&self, axes_key: &'static str) -> Vec<(&'static str, &str)> {
        let fields: [(&'static str, &Option<String>); 27] = [
            ("db", &self.db),
            ("vocab", &self.vocab),
            ("wp_vocab", &self.wp_vocab),
            ("pool", &self.pool),
            ("embeddings", &self.embeddings),
            ("static_embeddings", &self.static_embeddings),
            ("stats_sample", &self.stats_sample),
            (axes_key, &self.axes),
            ("targets", &self.targets),
            ("background", &self.background),
            ("categories", &self.categories),
            ("groups", &self.groups),
            ("corpus", &self.corpus),
            ("documents", &self.documents),
            ("terms", &self.terms),
            ("pronouns", &self.pronouns),
            ("plurals", &self.plurals),
            ("occurrences", &self.occurrences),
            ("series", &self.series),
            ("scores", &self.scores),
            ("clusters", &self.clusters),
            ("method", &self.method),
            ("min_pole", &self.min_pole),
            ("k", &self.k),
            ("restarts", &self.restarts),
            ("alpha", &self.alpha),
            ("bootstrap", &self.bootstrap),
        ];
        fields
            .into_iter()
            .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
            .collect()
    }
}

fn build_config(cli: &Cli) -> Result<RunConfig> {
    let cwd = std::env::current_dir()?;
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let axes_key = if cli.cmd.axes_are_vectors() { "axis_vectors" } else { "axes" };
    for (k, v) in cli.cmd.opts().pairs(axes_key) {
        if k == "method" && v == "all" {
            cfg.compare_methods = true;
        } else {
            cfg.set(k, v, &cwd)?;
        }
    }
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v, &cwd)?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.set("threads", &t.to_string(), &cwd)?;
    }
    if let Some(o) = &cli.out {
        cfg.set("out", &o.display().to_string(), &cwd)?;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = build_config(cli)?;
    if let Cmd::MakeToy(_) = cli.cmd {
        let dir = cfg.require("out")?;
        let written = saxe::toy::make_toy(cfg.require("db")?, cfg.require("vocab")?, dir, cli.seed.unwrap_or(0))?;
        println!("wrote {} files to {}", written.len(), dir.display());
        return Ok(());
    }
    let pipeline = Pipeline::new(cfg)?;
    match cli.cmd.stage() {
        Some(stage) => {
            let dir = pipeline.run_stage_by_name(stage)?;
            println!("{stage}: {}", dir.display());
        }
        None => {
            for s in pipeline.run_all()? {
                println!("{s}: {}", pipeline.stage_dir(s).display());
            }
        }
    }
    println!("manifest: {}", pipeline.manifest_path().display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
    }
}
