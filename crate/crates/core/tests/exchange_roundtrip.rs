use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, NaiveDate};
use greylit_core::planner::{
    export_queries, import_queries, DateRange, FieldTarget, GeneratorInfo, QualifierValue, QueryBundle, QueryOrigin,
    StructuredQuery,
};
use greylit_core::Source;
use proptest::prelude::*;

fn source() -> impl Strategy<Value = Source> {
    prop::sample::select(Source::ALL.to_vec())
}

fn origin() -> impl Strategy<Value = QueryOrigin> {
    prop::sample::select(vec![
        QueryOrigin::LlmGenerated,
        QueryOrigin::TemplateFallback,
        QueryOrigin::UserEdited,
        QueryOrigin::Imported,
    ])
}

fn date() -> impl Strategy<Value = NaiveDate> {
    (0i64..20_000).prop_map(|d| NaiveDate::from_ymd_opt(1990, 1, 1).unwrap() + chrono::Days::new(d as u64))
}

fn qualifier_value() -> impl Strategy<Value = QualifierValue> {
    prop_oneof![
        any::<bool>().prop_map(QualifierValue::Flag),
        any::<i64>().prop_map(QualifierValue::Int),
        "\\PC{0,12}".prop_map(QualifierValue::Text),
        prop::collection::vec("[a-z+#.-]{1,8}", 0..4).prop_map(QualifierValue::List),
        (date(), date()).prop_map(|(a, b)| QualifierValue::Range(DateRange::new(a.min(b), a.max(b)))),
    ]
}

fn query() -> impl Strategy<Value = StructuredQuery> {
    (
        source(),
        prop::collection::vec("\\PC{1,20}", 1..4),
        prop::collection::btree_set(
            prop::sample::select(vec![
                FieldTarget::Title,
                FieldTarget::Body,
                FieldTarget::Description,
                FieldTarget::Readme,
            ]),
            0..3,
        ),
        prop::collection::btree_map("[a-z_]{1,10}", qualifier_value(), 0..4),
        origin(),
    )
        .prop_map(|(source, terms, field_targets, qualifiers, origin)| StructuredQuery {
            source,
            terms,
            field_targets: field_targets.into_iter().collect::<BTreeSet<_>>(),
            qualifiers: qualifiers.into_iter().collect::<BTreeMap<_, _>>(),
            origin,
        })
}

fn bundle() -> impl Strategy<Value = QueryBundle> {
    (
        "[a-z0-9-]{1,20}",
        "[a-z0-9.-]{1,16}",
        0.0f64..2.0,
        0i64..4_000_000_000,
        prop::option::of("\\PC{0,30}"),
        prop::collection::vec(query(), 0..8),
    )
        .prop_map(|(intent_id, model, temperature, ts, llm_error, queries)| QueryBundle {
            intent_id,
            generator: GeneratorInfo {
                llm_model_id: model,
                llm_temperature: temperature,
                prompt_template_version: "planner/v1".into(),
                generated_at: DateTime::from_timestamp(ts, 0).unwrap(),
                llm_error,
            },
            queries,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn export_then_import_is_identity(b in bundle()) {
        let text = export_queries(&b);
        let back = import_queries(&text).unwrap();
        prop_assert_eq!(&back, &b);
        prop_assert_eq!(export_queries(&back), text);
    }
}

#[test]
fn missing_origin_imports_as_imported() {
    let doc = r#"{
  "schema_version": 1,
  "intent_id": "i",
  "generator": {"llm_model_id": "m", "llm_temperature": 0.0, "prompt_template_version": "v", "generated_at": "2024-01-01T00:00:00Z"},
  "queries": [{"source": "websearch", "terms": ["x"]}]
}"#;
    let b = import_queries(doc).unwrap();
    assert_eq!(b.queries[0].origin, QueryOrigin::Imported);
}

#[test]
fn malformed_documents_report_the_offending_path() {
    let doc = r#"{
  "schema_version": 1,
  "intent_id": "i",
  "generator": {"llm_model_id": "m", "llm_temperature": 0.0, "prompt_template_version": "v", "generated_at": "2024-01-01T00:00:00Z"},
  "queries": [{"source": "websearch", "terms": ["x"]}, {"source": "myspace", "terms": []}]
}"#;
    let err = import_queries(doc).unwrap_err();
    assert!(err.path.starts_with("queries[1]"), "{}", err.path);

    let unknown = doc.replace("\"intent_id\": \"i\",", "\"intent_id\": \"i\", \"extra\": 1,");
    assert!(import_queries(&unknown).is_err());

    let future = doc
        .replace("\"schema_version\": 1", "\"schema_version\": 2")
        .replace("myspace", "websearch");
    let err = import_queries(&future).unwrap_err();
    assert_eq!(err.path, "schema_version");
}
