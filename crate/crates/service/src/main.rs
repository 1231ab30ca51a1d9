use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use greylit_core::connectors::http::SystemClock;
use greylit_core::connectors::{deduplicate, harvest, ScheduledQuery};
use greylit_core::embedding::{
    Embedder, EmbeddingCache, EmbeddingProvider, FeatureSpec, HashingEmbeddings, OpenAiEmbeddings,
};
use greylit_core::harness::{load_dataset, published_manifest};
use greylit_core::llm::OPENAI_KEY_ENV;
use greylit_core::models::ClassifierKind;
use greylit_core::par::ExecMode;
use greylit_core::planner::{export_queries, import_queries, plan_queries, DateRange, SearchIntent, SearchOptions};
use greylit_core::study::{parse_study_records, summarize, summary_table};
use greylit_core::Source;
use greylit_service::environment::{fixture_environment, live_environment, FIXTURE_EMBEDDING_MODEL};
use greylit_service::train::{train, write_outputs, TrainOptions};
use greylit_service::{api, CreateRun, Environment, Service, Store};

#[derive(Parser)]
#[command(name = "greylit", version, about = "Grey-literature retrieval and screening")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a query document for a research intent.
    Plan {
        #[command(flatten)]
        plan: PlanArgs,
        #[command(flatten)]
        env: EnvArgs,
        /// Write the document here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Execute a query document and write the de-duplicated items as JSON lines.
    Fetch {
        #[arg(long)]
        queries: PathBuf,
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the classifier study on a labeled dataset and write the registry.
    Train(TrainArgs),
    /// Run the full pipeline for a prompt, and optionally serve the HTTP API.
    Run {
        #[command(flatten)]
        plan: PlanArgs,
        #[command(flatten)]
        env: EnvArgs,
        /// Stop after planning until the queries are confirmed over HTTP.
        #[arg(long)]
        hold_for_review: bool,
        #[arg(long)]
        serve_port: Option<u16>,
    },
    /// Serve the HTTP API without starting a run.
    Serve {
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
    /// Export a stored run.
    Export {
        #[arg(long)]
        run: String,
        /// jsonl, csv or dataset.
        #[arg(long, default_value = "jsonl")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        env: EnvArgs,
    },
    /// Summarize usability-study records.
    StudySummarize {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Args, Clone)]
struct EnvArgs {
    /// Store directory.
    #[arg(long, default_value = "greylit-data")]
    data: PathBuf,
    /// Use the recorded fixture set in this directory instead of live providers.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Model registry directory (live mode).
    #[arg(long)]
    models: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct PlanArgs {
    #[arg(long)]
    prompt: Option<String>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "github_repos,github_issues,stackoverflow,websearch"
    )]
    sources: Vec<Source>,
    #[arg(long)]
    from: Option<NaiveDate>,
    #[arg(long)]
    to: Option<NaiveDate>,
    #[arg(long, value_delimiter = ',')]
    languages: Vec<String>,
    #[arg(long, default_value_t = 8)]
    query_count: usize,
    #[arg(long, default_value = "gpt-4o-mini")]
    llm_model: String,
    #[arg(long, default_value_t = 0.2)]
    temperature: f64,
    /// Defaults to text-embedding-3-small, or the fixture model with --fixtures.
    #[arg(long)]
    embedding_model: Option<String>,
    #[arg(long, default_value_t = 512)]
    dims: usize,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Embedding model ids.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "text-embedding-3-small,text-embedding-3-large"
    )]
    modes: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "512,1024,1536")]
    dims: Vec<usize>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "cosine,euclidean,l1,cosine_euclidean,all_distances,abs_diff,product,all_features"
    )]
    specs: Vec<FeatureSpec>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "gaussian_nb,logistic_regression,ridge,linear_svc"
    )]
    models: Vec<ClassifierKind>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Embed with the offline hashing provider instead of the remote API.
    #[arg(long)]
    hashing_embeddings: bool,
    /// Check the dataset against the published per-source counts.
    #[arg(long)]
    published_manifest: bool,
    #[arg(long)]
    sequential: bool,
    /// Persistent embedding cache file.
    #[arg(long)]
    cache: Option<PathBuf>,
}

impl PlanArgs {
    fn options(&self, fixture: bool) -> anyhow::Result<SearchOptions> {
        let date_range = match (self.from, self.to) {
            (Some(s), Some(e)) => Some(DateRange::new(s, e)),
            (None, None) => None,
            _ => bail!("--from and --to must be given together"),
        };
        let embedding_model_id = self.embedding_model.clone().unwrap_or_else(|| {
            if fixture {
                FIXTURE_EMBEDDING_MODEL
            } else {
                "text-embedding-3-small"
            }
            .to_string()
        });
        Ok(SearchOptions {
            sources: self.sources.iter().copied().collect::<BTreeSet<_>>(),
            date_range,
            languages: self.languages.iter().cloned().collect(),
            query_count: self.query_count,
            llm_model_id: self.llm_model.clone(),
            llm_temperature: self.temperature,
            embedding_model_id,
            embedding_dims: self.dims,
        })
    }

    fn prompt(&self) -> anyhow::Result<&str> {
        self.prompt.as_deref().context("--prompt is required")
    }
}

impl EnvArgs {
    fn environment(&self) -> anyhow::Result<Environment> {
        Ok(match &self.fixtures {
            Some(dir) => fixture_environment(dir)?,
            None => live_environment(self.models.as_deref(), Some(&self.data.join("embeddings.jsonl")))?,
        })
    }

    fn service(&self) -> anyhow::Result<Service> {
        let env = self.environment()?;
        let store = Store::open(&self.data)?;
        Ok(Service::new(env, store)?)
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Plan { plan, env, out } => {
            let environment = env.environment()?;
            let options = plan.options(env.fixtures.is_some())?;
            let intent = SearchIntent::new(plan.prompt()?, environment.clock.now());
            let bundle = plan_queries(&intent, &options, environment.llm.as_ref(), environment.clock.as_ref())?;
            write_or_print(out.as_deref(), &export_queries(&bundle))
        }
        Command::Fetch { queries, env, out } => {
            let environment = env.environment()?;
            let text = std::fs::read_to_string(&queries).with_context(|| format!("reading {}", queries.display()))?;
            let bundle = import_queries(&text)?;
            let scheduled: Vec<ScheduledQuery> = bundle
                .queries
                .into_iter()
                .enumerate()
                .map(|(i, query)| ScheduledQuery {
                    query_id: format!("fetch/q{i:02}"),
                    query,
                })
                .collect();
            let outcome = harvest(
                &environment.clients,
                &scheduled,
                environment.page_limit,
                environment.per_page,
            );
            for (source, err) in &outcome.errors {
                eprintln!("{source}: {err}");
            }
            let mut lines = String::new();
            for item in deduplicate(&outcome.items) {
                lines.push_str(&serde_json::to_string(&item)?);
                lines.push('\n');
            }
            write_or_print(out.as_deref(), &lines)
        }
        Command::Train(args) => run_train(args),
        Command::Run {
            plan,
            env,
            hold_for_review,
            serve_port,
        } => {
            let service = Arc::new(env.service()?);
            if plan.prompt.is_some() || serve_port.is_none() {
                let req = CreateRun {
                    prompt: plan.prompt()?.to_string(),
                    options: plan.options(env.fixtures.is_some())?,
                    hold_for_review,
                };
                let run = service.create_run(&req)?;
                let run = service.run_pipeline(&run.run_id)?;
                println!("{}", serde_json::to_string_pretty(&run)?);
            }
            if let Some(port) = serve_port {
                serve(service, port)?;
            }
            Ok(())
        }
        Command::Serve { env, port } => serve(Arc::new(env.service()?), port),
        Command::Export { run, format, out, env } => {
            let service = env.service()?;
            let text = service.export_run(&run, &format)?;
            write_or_print(out.as_deref(), &text)
        }
        Command::StudySummarize { input } => {
            let text = std::fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let summary = summarize(&parse_study_records(&text)?)?;
            print!("{}", summary_table(&summary));
            Ok(())
        }
    }
}

fn serve(service: Arc<Service>, port: u16) -> anyhow::Result<()> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(api::serve(service, port))?;
    Ok(())
}

fn run_train(args: TrainArgs) -> anyhow::Result<()> {
    let manifest = args.published_manifest.then(published_manifest);
    let dataset = load_dataset(&args.dataset, manifest.as_ref())?;
    let provider: Arc<dyn EmbeddingProvider> = if args.hashing_embeddings {
        Arc::new(HashingEmbeddings::default())
    } else {
        let key = std::env::var(OPENAI_KEY_ENV)
            .ok()
            .filter(|k| !k.is_empty())
            .with_context(|| format!("{OPENAI_KEY_ENV} is required (or pass --hashing-embeddings)"))?;
        let transport = Arc::new(greylit_core::connectors::http::UreqTransport::default());
        Arc::new(OpenAiEmbeddings::new(transport, Arc::new(SystemClock), key))
    };
    let cache = match &args.cache {
        Some(p) => EmbeddingCache::open(p)?,
        None => EmbeddingCache::in_memory(),
    };
    let embedder = Embedder::new(provider, Arc::new(cache));
    let opts = TrainOptions {
        modes: args.modes,
        dims: args.dims,
        specs: args.specs,
        kinds: args.models,
        seed: args.seed,
        exec: if args.sequential {
            ExecMode::Sequential
        } else {
            ExecMode::Parallel
        },
    };
    let outcome = train(&embedder, &dataset, &opts)?;
    write_outputs(&args.out, &outcome)?;
    for &i in &outcome.study.selected {
        let r = &outcome.study.reports[i];
        println!(
            "{} / {}: {} {} {}d  balanced_accuracy={:.4} f1={:.4}",
            r.source, r.embedding_model_id, r.kind, r.spec, r.dims, r.metrics.balanced_accuracy, r.metrics.f1
        );
    }
    Ok(())
}
