//! Regenerates `fixtures/e2e/`: the scripted planner reply, the recorded
//! source traffic, a labeled training set and the registry trained on it.
//!
//! cargo run -p greylit-service --example build_fixtures [-- OUT_DIR]

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;

use greylit_core::connectors::adapters::SourceAdapter;
use greylit_core::connectors::http::{FakeClock, HttpResponse, Transcript};
use greylit_core::connectors::{extract_item, FetchProvenance, RetrievedItem};
use greylit_core::embedding::{Embedder, EmbeddingCache, FeatureSpec, HashingEmbeddings};
use greylit_core::harness::{records_to_jsonl, DatasetRecord, LabeledDataset};
use greylit_core::llm::{ScriptedLlm, ScriptedReply};
use greylit_core::models::ClassifierKind;
use greylit_core::par::ExecMode;
use greylit_core::planner::{plan_queries, SearchIntent, SearchOptions};
use greylit_core::{Label, Source};
use greylit_service::environment::{
    fixture_adapters, fixture_epoch, FIXTURE_EMBEDDING_MODEL, FIXTURE_LLM, FIXTURE_REGISTRY, FIXTURE_TRANSCRIPT,
};
use greylit_service::pipeline::DEFAULT_PER_PAGE;
use greylit_service::train::{train, TrainOptions};
use greylit_service::CreateRun;
use serde_json::{json, Value};

const PROMPT: &str = "saga pattern for distributed transactions across microservices";
const DIMS: usize = 512;
const ITEMS_PER_QUERY: usize = 5;
const TRAIN_PER_CLASS: usize = 30;

const RELEVANT: [&str; 8] = [
    "saga orchestration",
    "compensating transactions",
    "distributed transaction coordinator",
    "saga choreography events",
    "microservice rollback workflow",
    "transactional outbox saga",
    "long running transaction saga",
    "two phase commit alternative",
];
const RELEVANT_TAIL: [&str; 4] = [
    "for distributed transactions across microservices",
    "with compensation steps for microservices",
    "saga pattern in event driven services",
    "keeps distributed data consistent without locks",
];
const IRRELEVANT: [&str; 8] = [
    "css grid layout",
    "image thumbnail resizing",
    "python packaging wheels",
    "vim keybinding presets",
    "unit conversion tables",
    "font glyph rendering",
    "audio synthesizer patches",
    "markdown table formatter",
];
const IRRELEVANT_TAIL: [&str; 4] = [
    "helpers for hobby projects",
    "examples and screenshots",
    "tips for beginners",
    "plugin for the desktop editor",
];

fn text(i: usize, relevant: bool) -> (String, String) {
    if relevant {
        (
            RELEVANT[i % 8].to_string(),
            format!("{} {}", RELEVANT[(i + 3) % 8], RELEVANT_TAIL[i % 4]),
        )
    } else {
        (
            IRRELEVANT[i % 8].to_string(),
            format!("{} {}", IRRELEVANT[(i + 5) % 8], IRRELEVANT_TAIL[i % 4]),
        )
    }
}

/// Raw API payload for item `n` of `source`. `tag` keeps urls unique
/// between the training set and the recorded traffic.
fn payload(source: Source, tag: &str, n: usize, relevant: bool) -> Value {
    let (title, body) = text(n, relevant);
    let slug = format!("{tag}-{n}-{}", title.replace(' ', "-"));
    match source {
        Source::GithubRepos => json!({
            "html_url": format!("https://github.com/fixture/{slug}"),
            "full_name": format!("fixture/{slug}"),
            "description": format!("{title}: {body}"),
            "stargazers_count": 10 + n,
        }),
        Source::GithubIssues => json!({
            "html_url": format!("https://github.com/fixture/tracker/issues/{}", 1000 * (tag.len()) + n),
            "title": format!("{title} question {tag} {n}"),
            "body": body,
            "state": if n.is_multiple_of(2) { "open" } else { "closed" },
        }),
        Source::Stackoverflow => json!({
            "link": format!("https://stackoverflow.com/questions/{}/{slug}", 5000 + 100 * tag.len() + n),
            "title": format!("How do I use {title}?"),
            "body": format!("<p>{body}</p>"),
            "tags": if relevant { json!(["microservices", "saga"]) } else { json!(["misc"]) },
            "score": 1 + (n % 4) as i64,
        }),
        Source::Websearch => json!({
            "url": format!("https://blog.fixture.dev/{slug}"),
            "title": format!("{title} guide"),
            "snippet": body,
            "meta_description": format!("Notes on {title}"),
        }),
    }
}

fn readme(n: usize, relevant: bool) -> String {
    let (title, body) = text(n, relevant);
    format!("# {title}\n\n{body}.\n")
}

fn provenance() -> FetchProvenance {
    FetchProvenance {
        query_id: String::new(),
        request_id: String::new(),
        page_number: 1,
        fetched_at: fixture_epoch(),
        endpoint: String::new(),
        attempt_count: 1,
    }
}

fn item(source: Source, payload: &Value) -> RetrievedItem {
    extract_item(source, payload, provenance()).expect("fixture payloads are well formed")
}

fn options() -> SearchOptions {
    SearchOptions {
        sources: Source::ALL.into_iter().collect::<BTreeSet<_>>(),
        date_range: None,
        languages: BTreeSet::new(),
        query_count: 8,
        llm_model_id: "gpt-4o-mini".into(),
        llm_temperature: 0.2,
        embedding_model_id: FIXTURE_EMBEDDING_MODEL.into(),
        embedding_dims: DIMS,
    }
}

fn llm_reply() -> String {
    json!({"queries": [
        {"source": "github_repos", "terms": ["saga orchestration"], "field_targets": ["description"]},
        {"source": "github_repos", "terms": ["compensating transactions"], "field_targets": ["readme"]},
        {"source": "github_issues", "terms": ["saga timeout"], "field_targets": ["title"]},
        {"source": "github_issues", "terms": ["compensating transaction failure"]},
        {"source": "stackoverflow", "terms": ["saga pattern microservices"], "qualifiers": {"tags": ["microservices"]}},
        {"source": "stackoverflow", "terms": ["distributed transactions"], "qualifiers": {"min_score": 1}},
        {"source": "websearch", "terms": ["saga pattern distributed transactions"]},
        {"source": "websearch", "terms": ["compensating transactions microservices"]}
    ]})
    .to_string()
}

fn main() -> anyhow::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/e2e"));
    std::fs::create_dir_all(&out)?;

    let replies = vec![ScriptedReply {
        user_contains: "Research topic:".into(),
        response: llm_reply(),
    }];
    std::fs::write(out.join(FIXTURE_LLM), serde_json::to_string_pretty(&replies)?)?;

    let request = CreateRun {
        prompt: PROMPT.into(),
        options: options(),
        hold_for_review: false,
    };
    std::fs::write(out.join("request.json"), serde_json::to_string_pretty(&request)?)?;

    // The bundle the pipeline will plan, so the traffic can be recorded
    // against the exact request urls.
    let clock = FakeClock::frozen(fixture_epoch());
    let intent = SearchIntent::new(PROMPT, fixture_epoch());
    let bundle = plan_queries(&intent, &request.options, &ScriptedLlm::new(replies), &clock)?;
    anyhow::ensure!(
        bundle.generator.llm_error.is_none(),
        "scripted reply rejected: {:?}",
        bundle.generator.llm_error
    );

    let adapters: Vec<Box<dyn SourceAdapter>> = fixture_adapters();
    let adapter = |s: Source| adapters.iter().find(|a| a.source() == s).expect("adapter per source");
    let mut transcript = Transcript::default();
    let mut per_source = std::collections::BTreeMap::<Source, usize>::new();
    for (qi, q) in bundle.queries.iter().enumerate() {
        let a = adapter(q.source);
        let seen = per_source.entry(q.source).or_default();
        let mut items = Vec::new();
        for k in 0..ITEMS_PER_QUERY {
            // Three relevant, two irrelevant; the first repo of the second
            // repo query repeats one from the first to exercise dedup.
            let n = if q.source == Source::GithubRepos && *seen > 0 && k == 0 {
                0
            } else {
                *seen + k
            };
            let relevant = k < 3;
            items.push((n, relevant, payload(q.source, "live", n, relevant)));
        }
        *seen += ITEMS_PER_QUERY;
        let body = match q.source {
            Source::GithubRepos | Source::GithubIssues => {
                json!({"total_count": ITEMS_PER_QUERY, "items": items.iter().map(|i| &i.2).collect::<Vec<_>>()})
            }
            _ => json!({"has_more": false, "items": items.iter().map(|i| &i.2).collect::<Vec<_>>()}),
        };
        let req = a.build_request(q, 1, DEFAULT_PER_PAGE)?;
        transcript.push(req, HttpResponse::new(200, body.to_string()));
        if q.source == Source::GithubRepos {
            for (n, relevant, p) in &items {
                if let Some(r) = a.readme_request(&item(q.source, p)) {
                    if !transcript.entries.iter().any(|e| e.request.url == r.url) {
                        transcript.push(r, HttpResponse::new(200, readme(*n, *relevant)));
                    }
                }
            }
        }
        eprintln!("recorded query {qi} ({})", q.source);
    }
    std::fs::write(out.join(FIXTURE_TRANSCRIPT), serde_json::to_string_pretty(&transcript)?)?;

    // Labeled training records drawn from the same vocabulary.
    let train_intent = SearchIntent::new(PROMPT, fixture_epoch());
    let mut records = Vec::new();
    for source in Source::ALL {
        for n in 0..2 * TRAIN_PER_CLASS {
            let relevant = n < TRAIN_PER_CLASS;
            let mut p = payload(source, "train", n, relevant);
            if source == Source::GithubRepos {
                p["readme"] = json!(readme(n, relevant));
            }
            let label = if relevant { Label::Relevant } else { Label::Irrelevant };
            records.push(DatasetRecord::from_item(
                &item(source, &p),
                &train_intent.id,
                PROMPT,
                label,
            ));
        }
    }
    let dataset_dir = out.join("dataset");
    std::fs::create_dir_all(&dataset_dir)?;
    std::fs::write(dataset_dir.join("records.jsonl"), records_to_jsonl(&records))?;

    let dataset = LabeledDataset {
        records,
        duplicates_removed: 0,
    };
    let embedder = Embedder::new(
        Arc::new(HashingEmbeddings::default()),
        Arc::new(EmbeddingCache::in_memory()),
    );
    let opts = TrainOptions {
        modes: vec![FIXTURE_EMBEDDING_MODEL.into()],
        dims: vec![DIMS],
        specs: FeatureSpec::ALL.to_vec(),
        kinds: ClassifierKind::TRAINABLE.to_vec(),
        seed: 42,
        exec: ExecMode::Parallel,
    };
    let outcome = train(&embedder, &dataset, &opts)?;
    outcome.registry.save(&out.join(FIXTURE_REGISTRY))?;
    for e in outcome.registry.entries() {
        eprintln!(
            "{} {} {} balanced_accuracy={:?}",
            e.source, e.kind, e.spec, e.balanced_accuracy
        );
    }
    Ok(())
}
