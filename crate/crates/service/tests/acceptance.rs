//! Acceptance checks, one line per criterion.
//!
//! Runs without the libtest harness so every line is printed; the process
//! fails if an attainable criterion fails. The published-dataset check
//! needs `GREYLIT_PUBLISHED_DATASET` to point at the released dataset and
//! is reported as unattainable otherwise.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use chrono::{DateTime, NaiveDate, TimeZone, Utc};
use greylit_core::connectors::http::{FakeClock, HttpRequest, HttpResponse, ReplayTransport, Transcript};
use greylit_core::connectors::retry::{fetch_with_retry, FetchError, RetryPolicy};
use greylit_core::connectors::{deduplicate, FetchProvenance, RetrievedItem};
use greylit_core::embedding::distance::{cosine_distance_raw, euclidean_distance_raw, l1_distance_raw};
use greylit_core::embedding::{build_features, canonical_fields, EmbeddingVector, FeatureSpec, FieldEmbeddingSet};
use greylit_core::harness::{
    compute_metrics, load_dataset, published_manifest, records_to_jsonl, run_study, sus_score, synthetic_study_dataset,
    DatasetRecord, StudyConfig, StudyDataset, SyntheticSpec,
};
use greylit_core::models::{fit_gaussian_nb, logistic_objective, ClassWeighting, ClassifierKind};
use greylit_core::par::ExecMode;
use greylit_core::planner::{
    export_queries, import_queries, render_query, DateRange, FieldTarget, GeneratorInfo, QualifierValue, QueryBundle,
    QueryOrigin, StructuredQuery,
};
use greylit_core::{Label, Source};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;
type Criterion = (&'static str, Box<dyn Fn() -> Status>);
/// (tp, fp, fn, tn) and the expected balanced accuracy, precision, recall, f1.
type Golden = ((usize, usize, usize, usize), [f64; 4]);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

enum Status {
    Pass(String),
    Fail(String),
    Unattainable(String),
}

// ---- independent oracles ----

fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for i in 0..a.len() {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    1.0 - ab / (aa.sqrt() * bb.sqrt())
}

fn oracle_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn oracle_l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn random_unit(rng: &mut ChaCha8Rng, dims: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dims).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn ev(v: &[f64]) -> EmbeddingVector {
    EmbeddingVector::new(v.to_vec(), "m").unwrap().normalize().unwrap()
}

fn hand_balanced_accuracy(truth: &[Label], pred: &[Label]) -> f64 {
    let rate = |class: Label| {
        let idx: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] == class).collect();
        idx.iter().filter(|&&i| pred[i] == class).count() as f64 / idx.len() as f64
    };
    (rate(Label::Relevant) + rate(Label::Irrelevant)) / 2.0
}

// ---- criteria ----

fn feature_math() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let fields = canonical_fields(Source::Websearch);
    for dims in [512, 1024, 1536] {
        for _ in 0..1000 {
            let a = random_unit(&mut rng, dims);
            let b = random_unit(&mut rng, dims);
            for (got, want) in [
                (cosine_distance_raw(&a, &b).unwrap(), oracle_cosine(&a, &b)),
                (euclidean_distance_raw(&a, &b).unwrap(), oracle_euclidean(&a, &b)),
                (l1_distance_raw(&a, &b).unwrap(), oracle_l1(&a, &b)),
            ] {
                worst = worst.max((got - want).abs());
            }
            let mut set = FieldEmbeddingSet::new("x", Source::Websearch, "m", dims);
            for name in fields {
                set.insert(name, ev(&b)).unwrap();
            }
            let intent = ev(&a);
            let abs = build_features(&intent, &set, FeatureSpec::AbsDiff).unwrap().values;
            let prod = build_features(&intent, &set, FeatureSpec::Product).unwrap().values;
            ensure!(
                abs.len() == dims * fields.len() && prod.len() == abs.len(),
                "block width at {dims}"
            );
            for k in 0..fields.len() {
                for j in 0..dims {
                    worst = worst.max((abs[k * dims + j] - (a[j] - b[j]).abs()).abs());
                    worst = worst.max((prod[k * dims + j] - a[j] * b[j]).abs());
                }
            }
        }
    }
    let elapsed = start.elapsed();
    ensure!(worst <= 1e-9, "max deviation {worst:e}");
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!(
        "3000 pairs, max deviation {worst:.1e}, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn unit_vector_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let a = random_unit(&mut rng, 1536);
        let b = random_unit(&mut rng, 1536);
        let e = euclidean_distance_raw(&a, &b).unwrap();
        worst = worst.max((e * e - 2.0 * cosine_distance_raw(&a, &b).unwrap()).abs());
    }
    ensure!(worst <= 1e-9, "max deviation {worst:e}");
    Ok(format!("1000 pairs, max deviation {worst:.1e}"))
}

fn gaussian_nb() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x: Vec<Vec<f64>> = (0..30)
        .map(|i| {
            (0..3)
                .map(|j| rng.random_range(-1.0..1.0) + ((i % 2) * (j + 1)) as f64)
                .collect()
        })
        .collect();
    let y: Vec<Label> = (0..30).map(|i| Label::from_relevant(i % 2 == 1)).collect();
    let smoothing = 1e-9;
    let model = fit_gaussian_nb(&x, &y, ClassWeighting::Uniform, smoothing).map_err(|e| e.to_string())?;

    let stats = |rows: &[&Vec<f64>], j: usize| {
        let n = rows.len() as f64;
        let m = rows.iter().map(|r| r[j]).sum::<f64>() / n;
        (m, rows.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n)
    };
    let all: Vec<&Vec<f64>> = x.iter().collect();
    let eps = smoothing * (0..3).map(|j| stats(&all, j).1).fold(0.0, f64::max);
    let class = |rel: bool| -> Vec<&Vec<f64>> {
        x.iter()
            .zip(&y)
            .filter(|(_, l)| l.is_relevant() == rel)
            .map(|(r, _)| r)
            .collect()
    };
    let pdf =
        |v: f64, m: f64, var: f64| (-(v - m).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
    let mut worst = 0.0f64;
    for probe in [[0.0, 0.0, 0.0], [1.0, 2.0, 3.0], [0.5, 1.0, 1.5], [-0.3, 2.2, 0.9]] {
        let mut joint = [0.0; 2];
        for (c, rel) in [false, true].into_iter().enumerate() {
            let rows = class(rel);
            joint[c] = rows.len() as f64 / x.len() as f64;
            for (j, v) in probe.iter().enumerate() {
                let (m, var) = stats(&rows, j);
                joint[c] *= pdf(*v, m, var + eps);
            }
        }
        let want = joint[1] / (joint[0] + joint[1]);
        let got = model
            .predict_raw(&probe)
            .map_err(|e| e.to_string())?
            .probability
            .unwrap_or(f64::NAN);
        worst = worst.max((got - want).abs());
    }
    ensure!(worst <= 1e-9, "posterior deviation {worst:e}");

    let noise = Normal::new(0.0, 0.5).unwrap();
    let (mut bx, mut by) = (Vec::new(), Vec::new());
    for i in 0..80 {
        let rel = i % 2 == 0;
        let c = if rel { 4.0 } else { -4.0 };
        bx.push((0..3).map(|_| c + noise.sample(&mut rng)).collect::<Vec<f64>>());
        by.push(Label::from_relevant(rel));
    }
    let blob = fit_gaussian_nb(&bx, &by, ClassWeighting::Balanced, smoothing).map_err(|e| e.to_string())?;
    let pred: Vec<Label> = bx.iter().map(|r| blob.predict_raw(r).unwrap().label).collect();
    let ba = hand_balanced_accuracy(&by, &pred);
    ensure!(ba == 1.0, "blob balanced accuracy {ba}");
    Ok(format!("posterior deviation {worst:.1e}; blobs balanced accuracy 1.0"))
}

fn logistic_gradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x: Vec<Vec<f64>> = (0..40)
        .map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let y: Vec<Label> = x
        .iter()
        .map(|r| Label::from_relevant(r[0] + 0.5 * r[1] > 0.2))
        .collect();
    let w = ClassWeighting::Balanced.sample_weights(&y);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let theta: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (_, g) = logistic_objective(&x, &y, &w, 0.7, &theta);
        let h = 1e-6;
        let fd: Vec<f64> = (0..theta.len())
            .map(|k| {
                let mut up = theta.clone();
                let mut down = theta.clone();
                up[k] += h;
                down[k] -= h;
                (logistic_objective(&x, &y, &w, 0.7, &up).0 - logistic_objective(&x, &y, &w, 0.7, &down).0) / (2.0 * h)
            })
            .collect();
        let diff = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = fd.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        worst = worst.max(diff / scale);
    }
    ensure!(worst <= 1e-4, "relative error {worst:e}");
    Ok(format!("20 points, max relative error {worst:.1e}"))
}

fn metric_goldens() -> Outcome {
    let golden: [Golden; 10] = [
        ((3, 1, 1, 5), [(3.0 / 4.0 + 5.0 / 6.0) / 2.0, 0.75, 0.75, 0.75]),
        ((10, 0, 0, 10), [1.0, 1.0, 1.0, 1.0]),
        ((0, 0, 3, 7), [0.5, 0.0, 0.0, 0.0]),
        ((2, 8, 0, 0), [0.5, 0.2, 1.0, 1.0 / 3.0]),
        ((4, 4, 4, 4), [0.5, 0.5, 0.5, 0.5]),
        ((7, 3, 3, 7), [0.7, 0.7, 0.7, 0.7]),
        ((1, 0, 9, 10), [0.55, 1.0, 0.1, 2.0 / 11.0]),
        ((6, 2, 4, 8), [(0.6 + 0.8) / 2.0, 0.75, 0.6, 2.0 / 3.0]),
        ((0, 3, 3, 0), [0.0, 0.0, 0.0, 0.0]),
        ((5, 5, 1, 1), [(5.0 / 6.0 + 1.0 / 6.0) / 2.0, 0.5, 5.0 / 6.0, 0.625]),
    ];
    for ((tp, fp, fn_, tn), want) in golden {
        let mut t = Vec::new();
        let mut p = Vec::new();
        for (n, truth, pred) in [
            (tp, true, true),
            (fp, false, true),
            (fn_, true, false),
            (tn, false, false),
        ] {
            t.extend(std::iter::repeat_n(Label::from_relevant(truth), n));
            p.extend(std::iter::repeat_n(Label::from_relevant(pred), n));
        }
        let (m, _) = compute_metrics(&t, &p).map_err(|e| e.to_string())?;
        let got = [m.balanced_accuracy, m.precision, m.recall, m.f1];
        ensure!(got == want, "({tp},{fp},{fn_},{tn}): {got:?} != {want:?}");
    }
    Ok("10 confusion matrices exact; (3,1,1,5) -> 0.7916666666666667".into())
}

fn synthetic(sources: &[Source], items: usize) -> Vec<StudyDataset> {
    let mut out = Vec::new();
    for &s in sources {
        for (k, mode) in ["small", "large"].iter().enumerate() {
            let spec = SyntheticSpec {
                items,
                seed: 42 + k as u64,
                ..Default::default()
            };
            out.push(synthetic_study_dataset(s, mode, &spec, &[512]).unwrap());
        }
    }
    out
}

fn protocol_determinism() -> Outcome {
    let data = synthetic(&[Source::Stackoverflow, Source::Websearch], 80);
    let config = StudyConfig {
        dims: vec![512],
        specs: vec![FeatureSpec::Cosine, FeatureSpec::AllDistances, FeatureSpec::AbsDiff],
        kinds: ClassifierKind::TRAINABLE.to_vec(),
        grids: BTreeMap::new(),
        seed: 42,
        mode: ExecMode::Parallel,
    };
    let a = run_study(&data, &config).map_err(|e| e.to_string())?;
    let b = run_study(&data, &config).map_err(|e| e.to_string())?;
    let bits = |r: &greylit_core::harness::StudyResult| -> Vec<u64> {
        r.reports
            .iter()
            .flat_map(|e| {
                [
                    e.metrics.balanced_accuracy,
                    e.metrics.precision,
                    e.metrics.recall,
                    e.metrics.f1,
                    e.cv_balanced_accuracy,
                    e.strength,
                ]
            })
            .map(f64::to_bits)
            .collect()
    };
    ensure!(bits(&a) == bits(&b), "report matrices differ");
    ensure!(
        a.reports == b.reports && a.models == b.models && a.selected == b.selected,
        "study outputs differ"
    );
    Ok(format!("{} reports bit-identical across two runs", a.reports.len()))
}

fn synthetic_separability() -> Outcome {
    let start = Instant::now();
    let distance_specs = vec![
        FeatureSpec::Cosine,
        FeatureSpec::Euclidean,
        FeatureSpec::L1,
        FeatureSpec::CosineEuclidean,
        FeatureSpec::AllDistances,
    ];
    let base = StudyConfig {
        dims: vec![512],
        specs: distance_specs,
        kinds: ClassifierKind::TRAINABLE.to_vec(),
        grids: BTreeMap::new(),
        seed: 42,
        mode: ExecMode::Parallel,
    };
    let wide = run_study(&synthetic(&Source::ALL, 200), &base).map_err(|e| e.to_string())?;
    let full = StudyConfig {
        specs: FeatureSpec::ALL.to_vec(),
        ..base
    };
    let deep = run_study(&synthetic(&[Source::GithubRepos], 200)[..1], &full).map_err(|e| e.to_string())?;

    let mut min_kind_best = f64::INFINITY;
    let mut min_selected = f64::INFINITY;
    let mut pairs = 0;
    for study in [&wide, &deep] {
        // Per (source, mode, kind): the configuration chosen on training data.
        let mut best: BTreeMap<(Source, String, ClassifierKind), usize> = BTreeMap::new();
        for (i, r) in study.reports.iter().enumerate() {
            let key = (r.source, r.embedding_model_id.clone(), r.kind);
            match best.get(&key) {
                Some(&j) if study.reports[j].cv_balanced_accuracy >= r.cv_balanced_accuracy => {}
                _ => {
                    best.insert(key, i);
                }
            }
        }
        for ((s, m, k), i) in &best {
            let ba = study.reports[*i].metrics.balanced_accuracy;
            ensure!(ba >= 0.9, "{s}/{m}/{k}: balanced accuracy {ba}");
            min_kind_best = min_kind_best.min(ba);
        }
        for &i in &study.selected {
            let ba = study.reports[i].metrics.balanced_accuracy;
            ensure!(
                ba >= 0.95,
                "selected {}/{}: {ba}",
                study.reports[i].source,
                study.reports[i].embedding_model_id
            );
            min_selected = min_selected.min(ba);
            pairs += 1;
        }
    }
    let spread: Vec<String> = ClassifierKind::TRAINABLE
        .iter()
        .map(|k| {
            let worst = deep
                .reports
                .iter()
                .filter(|r| r.kind == *k)
                .map(|r| r.metrics.balanced_accuracy)
                .fold(1.0, f64::min);
            format!("{k} worst {worst:.3}")
        })
        .collect();
    Ok(format!(
        "{pairs} selections >= {min_selected:.3}, per-classifier best >= {min_kind_best:.3}; full matrix: {}; {:.1}s",
        spread.join(", "),
        start.elapsed().as_secs_f64()
    ))
}

fn dataset_manifest() -> Status {
    let manifest = published_manifest();
    let problems = manifest.consistency_errors();
    let so = manifest.per_source.get(&Source::Stackoverflow).copied();
    let shape = format!(
        "manifest total {:?}, stackoverflow {:?}, internal inconsistencies {}",
        manifest.total.map(|t| t.total),
        so.map(|c| (c.total, c.relevant, c.irrelevant)),
        problems.len()
    );
    match std::env::var_os("GREYLIT_PUBLISHED_DATASET") {
        Some(path) => match load_dataset(Path::new(&path), Some(&manifest)) {
            Ok(ds) => Status::Pass(format!("{} records validate; {shape}", ds.records.len())),
            Err(e) => Status::Fail(format!("{e}; {shape}")),
        },
        None => {
            // The loader itself is exercised on a generated dataset with the
            // published per-source counts.
            let generated = generated_published_shape(&manifest);
            let verdict = match generated {
                Ok(n) => format!("generated {n}-record stand-in validates"),
                Err(e) => format!("generated stand-in rejected: {e}"),
            };
            Status::Unattainable(format!(
                "published dataset not present (set GREYLIT_PUBLISHED_DATASET); {verdict}; {shape}"
            ))
        }
    }
}

fn generated_published_shape(manifest: &greylit_core::harness::Manifest) -> Result<usize, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(1137);
    let mut words = |n: usize| -> String {
        (0..n)
            .map(|_| {
                (0..7)
                    .map(|_| char::from(b'a' + rng.random_range(0..26u8)))
                    .collect::<String>()
            })
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut records = Vec::new();
    for (source, counts) in &manifest.per_source {
        for i in 0..counts.total {
            let label = Label::from_relevant(i < counts.relevant);
            records.push(DatasetRecord {
                schema_version: 1,
                source: *source,
                intent: greylit_core::harness::DatasetIntent {
                    id: "intent-x".into(),
                    prompt: "p".into(),
                },
                item: greylit_core::harness::DatasetItem {
                    url: format!("https://example.org/{source}/{i}"),
                    title: words(6),
                    snippet: words(12),
                    extras: BTreeMap::new(),
                },
                label,
            });
        }
    }
    let path = dir.path().join("records.jsonl");
    std::fs::write(&path, records_to_jsonl(&records)).map_err(|e| e.to_string())?;
    let ds = load_dataset(&path, Some(manifest)).map_err(|e| e.to_string())?;
    Ok(ds.records.len())
}

fn query_goldens() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden/queries");
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    ensure!(files.len() == 12, "{} golden fixtures", files.len());
    let mut per_source: BTreeMap<Source, usize> = BTreeMap::new();
    let mut rendered = String::new();
    for f in &files {
        let q: StructuredQuery =
            serde_json::from_str(&std::fs::read_to_string(f).unwrap()).map_err(|e| e.to_string())?;
        *per_source.entry(q.source).or_default() += 1;
        let got = render_query(&q).map_err(|e| format!("{}: {:?}", f.display(), e.messages()))? + "\n";
        let want = std::fs::read_to_string(f.with_extension("txt")).map_err(|e| e.to_string())?;
        ensure!(got == want, "{} renders {got:?}, golden {want:?}", f.display());
        rendered.push_str(&got);
    }
    ensure!(
        per_source.values().all(|&n| n == 3) && per_source.len() == 4,
        "{per_source:?}"
    );
    for token in ["in:readme", "is:issue", "site:", "filetype:", "[", "isaccepted:yes"] {
        ensure!(rendered.contains(token), "no golden contains {token}");
    }
    Ok("12 fixtures byte-identical, 3 per source".into())
}

fn item(url: &str, title: &str, snippet: &str) -> RetrievedItem {
    RetrievedItem {
        item_id: url.into(),
        source: Source::Websearch,
        url: url.into(),
        title: title.into(),
        snippet: snippet.into(),
        extras: BTreeMap::new(),
        provenance: FetchProvenance {
            query_id: "q".into(),
            request_id: "q/p1".into(),
            page_number: 1,
            fetched_at: Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap(),
            endpoint: "e".into(),
            attempt_count: 1,
        },
    }
}

fn dedup_properties() -> Outcome {
    let fixture = [
        item("https://example.com/post/", "Post", "first"),
        item(
            "https://example.com/post?utm_source=feed&utm_campaign=x",
            "Post elsewhere",
            "second",
        ),
    ];
    ensure!(
        deduplicate(&fixture).len() == 1,
        "trailing-slash + utm fixture not collapsed"
    );

    let words = [
        "saga",
        "outbox",
        "kafka",
        "retry",
        "idempotent",
        "consumer",
        "events",
        "ledger",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..1000 {
        let n = rng.random_range(0..25);
        let list: Vec<RetrievedItem> = (0..n)
            .map(|_| {
                let host = ["a.dev", "b.dev"][rng.random_range(0..2)];
                let path = rng.random_range(0..6);
                let slash = if rng.random_bool(0.5) { "/" } else { "" };
                let utm = if rng.random_bool(0.3) { "?utm_source=x" } else { "" };
                let t: Vec<&str> = (0..5).map(|_| words[rng.random_range(0..words.len())]).collect();
                item(
                    &format!("https://{host}/p{path}{slash}{utm}"),
                    &t.join(" "),
                    &t[..3].join(" "),
                )
            })
            .collect();
        let once = deduplicate(&list);
        ensure!(deduplicate(&once) == once, "case {case}: not idempotent");
        // Survivors keep their input order and are the earliest members.
        let mut pos = 0;
        for s in &once {
            let found = list[pos..].iter().position(|x| x == s);
            ensure!(found.is_some(), "case {case}: survivor order changed");
            pos += found.unwrap() + 1;
        }
        for x in &list {
            let mut with = once.clone();
            with.push(x.clone());
            ensure!(
                deduplicate(&with) == once,
                "case {case}: removed item is not a duplicate of a survivor"
            );
        }
    }
    Ok("1000 random lists idempotent and survivor-stable; fixture collapses to 1".into())
}

fn retry_contract() -> Outcome {
    const URL: &str = "https://api.test/x";
    let replay = |rs: &[HttpResponse]| {
        let mut t = Transcript::default();
        for r in rs {
            t.push(HttpRequest::get(URL), r.clone());
        }
        ReplayTransport::new(t)
    };
    let epoch = DateTime::from_timestamp(1_700_000_000, 0).unwrap();
    let policy = |n: u32, base: u64, max: u64, j: f64| RetryPolicy {
        max_attempts: n,
        base_delay: Duration::from_millis(base),
        max_delay: Duration::from_millis(max),
        jitter_fraction: j,
    };

    let t = replay(&[HttpResponse::new(503, "")]);
    let c = FakeClock::new(epoch);
    let err = fetch_with_retry(
        &t,
        &HttpRequest::get(URL),
        &policy(5, 100, 1_000, 0.0),
        &c,
        &mut ChaCha8Rng::seed_from_u64(1),
    );
    ensure!(
        matches!(err, Err(FetchError::Status { attempts: 5, .. })),
        "ceiling: {err:?}"
    );
    ensure!(t.send_count() == 5, "sent {} requests", t.send_count());
    let ms: Vec<u128> = c.sleeps().iter().map(Duration::as_millis).collect();
    ensure!(ms == [100, 200, 400, 800], "delays {ms:?}");

    for seed in 0..50 {
        let t = replay(&[HttpResponse::new(500, "")]);
        let c = FakeClock::new(epoch);
        let _ = fetch_with_retry(
            &t,
            &HttpRequest::get(URL),
            &policy(6, 200, 3_000, 0.25),
            &c,
            &mut ChaCha8Rng::seed_from_u64(seed),
        );
        for (k, d) in c.sleeps().iter().enumerate() {
            let nominal = (200.0 * 2f64.powi(k as i32)).min(3_000.0);
            let ms = d.as_secs_f64() * 1000.0;
            ensure!(
                ms >= nominal * 0.75 - 1e-6 && ms <= nominal * 1.25 + 1e-6,
                "seed {seed} delay {k}: {ms} vs {nominal}"
            );
        }
    }

    let t = replay(&[
        HttpResponse::new(429, "").with_header("retry-after", "9"),
        HttpResponse::new(200, "{}"),
    ]);
    let c = FakeClock::new(epoch);
    let ok = fetch_with_retry(
        &t,
        &HttpRequest::get(URL),
        &policy(4, 100, 1_000, 0.5),
        &c,
        &mut ChaCha8Rng::seed_from_u64(2),
    );
    ensure!(
        ok.is_ok_and(|f| f.attempts == 2),
        "retry-after run did not succeed on attempt 2"
    );
    ensure!(
        c.sleeps() == [Duration::from_secs(9)],
        "retry-after ignored: {:?}",
        c.sleeps()
    );
    Ok("doubling to cap, jitter within +/-25% over 50 seeds, retry-after wins, 5-attempt ceiling".into())
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let exe = env!("CARGO_BIN_EXE_greylit");
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/e2e");
    let req: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fixtures.join("request.json")).unwrap()).unwrap();
    let prompt = req["prompt"].as_str().unwrap();
    let mut exports: Vec<(String, String)> = Vec::new();
    for _ in 0..3 {
        let data = tempfile::tempdir().map_err(|e| e.to_string())?;
        let run = Command::new(exe)
            .args(["run", "--prompt", prompt, "--fixtures"])
            .arg(&fixtures)
            .arg("--data")
            .arg(data.path())
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(
            run.status.success(),
            "run failed: {}",
            String::from_utf8_lossy(&run.stderr)
        );
        let record: serde_json::Value = serde_json::from_slice(&run.stdout).map_err(|e| e.to_string())?;
        ensure!(record["status"] == "complete", "run ended {}", record["status"]);
        let mut pair = Vec::new();
        for format in ["jsonl", "csv"] {
            let out = Command::new(exe)
                .args([
                    "export",
                    "--run",
                    record["run_id"].as_str().unwrap(),
                    "--format",
                    format,
                    "--fixtures",
                ])
                .arg(&fixtures)
                .arg("--data")
                .arg(data.path())
                .output()
                .map_err(|e| e.to_string())?;
            ensure!(
                out.status.success(),
                "export failed: {}",
                String::from_utf8_lossy(&out.stderr)
            );
            pair.push(String::from_utf8(out.stdout).map_err(|e| e.to_string())?);
        }
        exports.push((pair.remove(0), pair.remove(0)));
    }
    ensure!(
        exports.iter().all(|e| e == &exports[0]),
        "exports differ between executions"
    );
    let results = exports[0]
        .0
        .lines()
        .filter(|l| l.starts_with("{\"type\":\"result\""))
        .count();
    ensure!(results > 0, "export has no results");
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    Ok(format!(
        "3 executions, identical jsonl ({} bytes, {results} results) and csv; {:.1}s",
        exports[0].0.len(),
        elapsed.as_secs_f64()
    ))
}

fn sus() -> Outcome {
    let best = [5, 1, 5, 1, 5, 1, 5, 1, 5, 1];
    let worst = [1, 5, 1, 5, 1, 5, 1, 5, 1, 5];
    let scores = [sus_score(&best), sus_score(&[3; 10]), sus_score(&worst)].map(|s| s.map_err(|e| e.to_string()));
    let [a, b, c] = scores;
    let (a, b, c) = (a?, b?, c?);
    ensure!(a == 100.0 && b == 50.0 && c == 0.0, "got {a}, {b}, {c}");
    ensure!(
        sus_score(&[3; 9]).is_err() && sus_score(&[0, 3, 3, 3, 3, 3, 3, 3, 3, 3]).is_err(),
        "malformed input accepted"
    );
    Ok("100 / 50 / 0 exact".into())
}

fn bundle_strategy() -> impl Strategy<Value = QueryBundle> {
    let date = (0u64..20_000).prop_map(|d| NaiveDate::from_ymd_opt(1995, 1, 1).unwrap() + chrono::Days::new(d));
    let value = prop_oneof![
        any::<bool>().prop_map(QualifierValue::Flag),
        any::<i64>().prop_map(QualifierValue::Int),
        "\\PC{0,10}".prop_map(QualifierValue::Text),
        prop::collection::vec("[a-z#+.]{1,6}", 0..3).prop_map(QualifierValue::List),
        (date.clone(), date).prop_map(|(a, b)| QualifierValue::Range(DateRange::new(a.min(b), a.max(b)))),
    ];
    let query = (
        prop::sample::select(Source::ALL.to_vec()),
        prop::collection::vec("\\PC{1,16}", 1..4),
        prop::collection::btree_set(
            prop::sample::select(vec![
                FieldTarget::Title,
                FieldTarget::Body,
                FieldTarget::Description,
                FieldTarget::Readme,
            ]),
            0..3,
        ),
        prop::collection::btree_map("[a-z_]{1,8}", value, 0..4),
        prop::sample::select(vec![
            QueryOrigin::LlmGenerated,
            QueryOrigin::TemplateFallback,
            QueryOrigin::UserEdited,
            QueryOrigin::Imported,
        ]),
    )
        .prop_map(|(source, terms, targets, qualifiers, origin)| StructuredQuery {
            source,
            terms,
            field_targets: targets.into_iter().collect::<BTreeSet<_>>(),
            qualifiers: qualifiers.into_iter().collect(),
            origin,
        });
    (
        "[a-z0-9-]{1,16}",
        0.0f64..2.0,
        0i64..4_000_000_000,
        prop::option::of("\\PC{0,20}"),
        prop::collection::vec(query, 0..8),
    )
        .prop_map(|(intent_id, temperature, ts, llm_error, queries)| QueryBundle {
            intent_id,
            generator: GeneratorInfo {
                llm_model_id: "m".into(),
                llm_temperature: temperature,
                prompt_template_version: "v1".into(),
                generated_at: DateTime::from_timestamp(ts, 0).unwrap(),
                llm_error,
            },
            queries,
        })
}

fn roundtrip() -> Outcome {
    let mut runner = TestRunner::new(Config {
        cases: 100,
        failure_persistence: None,
        ..Config::default()
    });
    let seen = std::cell::Cell::new(0usize);
    runner
        .run(&bundle_strategy(), |b| {
            seen.set(seen.get() + 1);
            let back = import_queries(&export_queries(&b)).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(&back, &b);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("{} bundles round-trip identically", seen.get()))
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("feature-math oracle", Box::new(|| feature_math().into())),
        ("unit-vector identity", Box::new(|| unit_vector_identity().into())),
        ("gaussian nb correctness", Box::new(|| gaussian_nb().into())),
        ("logistic gradient check", Box::new(|| logistic_gradient().into())),
        ("metric golden tests", Box::new(|| metric_goldens().into())),
        ("protocol determinism", Box::new(|| protocol_determinism().into())),
        ("synthetic separability", Box::new(|| synthetic_separability().into())),
        ("dataset manifest check", Box::new(dataset_manifest)),
        ("query rendering goldens", Box::new(|| query_goldens().into())),
        ("dedup properties", Box::new(|| dedup_properties().into())),
        ("retry contract", Box::new(|| retry_contract().into())),
        ("end-to-end fixture run", Box::new(|| end_to_end().into())),
        ("sus scoring", Box::new(|| sus().into())),
        ("query export/import round-trip", Box::new(|| roundtrip().into())),
    ];
    let mut failed = 0;
    let mut unattainable = 0;
    for (name, check) in &criteria {
        let status = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Status::Fail(format!("panicked: {msg}"))
        });
        match status {
            Status::Pass(d) => println!("PASS  {name}: {d}"),
            Status::Fail(d) => {
                failed += 1;
                println!("FAIL  {name}: {d}");
            }
            Status::Unattainable(d) => {
                unattainable += 1;
                println!("FAIL  {name} (unattainable offline): {d}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed, {unattainable} unattainable",
        criteria.len() - failed - unattainable
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

impl From<Outcome> for Status {
    fn from(o: Outcome) -> Self {
        match o {
            Ok(d) => Status::Pass(d),
            Err(d) => Status::Fail(d),
        }
    }
}
