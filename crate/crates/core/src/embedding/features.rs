use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::distance::{cosine_distance_raw, euclidean_distance_raw, l1_distance_raw};
use super::{EmbeddingError, EmbeddingVector};
use crate::connectors::extra;
use crate::source::Source;

/// The textual fields embedded for each source, in feature-layout order.
pub fn canonical_fields(source: Source) -> &'static [&'static str] {
    match source {
        Source::GithubRepos => &["title", "snippet", extra::DESCRIPTION, extra::README_TEXT],
        Source::GithubIssues => &["title", "snippet", extra::ISSUE_BODY],
        Source::Stackoverflow => &["title", "snippet", extra::QUESTION_BODY],
        Source::Websearch => &["title", "snippet", extra::META_DESCRIPTION],
    }
}

/// How an (intent, field) embedding pair becomes classifier input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSpec {
    Cosine,
    Euclidean,
    L1,
    CosineEuclidean,
    AllDistances,
    AbsDiff,
    Product,
    AllFeatures,
}

impl FeatureSpec {
    pub const ALL: [FeatureSpec; 8] = [
        FeatureSpec::Cosine,
        FeatureSpec::Euclidean,
        FeatureSpec::L1,
        FeatureSpec::CosineEuclidean,
        FeatureSpec::AllDistances,
        FeatureSpec::AbsDiff,
        FeatureSpec::Product,
        FeatureSpec::AllFeatures,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSpec::Cosine => "cosine",
            FeatureSpec::Euclidean => "euclidean",
            FeatureSpec::L1 => "l1",
            FeatureSpec::CosineEuclidean => "cosine_euclidean",
            FeatureSpec::AllDistances => "all_distances",
            FeatureSpec::AbsDiff => "abs_diff",
            FeatureSpec::Product => "product",
            FeatureSpec::AllFeatures => "all_features",
        }
    }

    /// Features contributed by one field.
    pub fn width(self, dims: usize) -> usize {
        match self {
            FeatureSpec::Cosine | FeatureSpec::Euclidean | FeatureSpec::L1 => 1,
            FeatureSpec::CosineEuclidean => 2,
            FeatureSpec::AllDistances => 3,
            FeatureSpec::AbsDiff | FeatureSpec::Product => dims,
            FeatureSpec::AllFeatures => 3 + 2 * dims,
        }
    }

    fn distances(self) -> (bool, bool, bool) {
        match self {
            FeatureSpec::Cosine => (true, false, false),
            FeatureSpec::Euclidean => (false, true, false),
            FeatureSpec::L1 => (false, false, true),
            FeatureSpec::CosineEuclidean => (true, true, false),
            FeatureSpec::AllDistances | FeatureSpec::AllFeatures => (true, true, true),
            FeatureSpec::AbsDiff | FeatureSpec::Product => (false, false, false),
        }
    }
}

impl fmt::Display for FeatureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        FeatureSpec::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown feature spec '{s}'"))
    }
}

/// Field embeddings of one item. Fields absent from `fields` had no text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldEmbeddingSet {
    pub item_id: String,
    pub source: Source,
    pub model_id: String,
    pub dims: usize,
    pub fields: BTreeMap<String, EmbeddingVector>,
}

impl FieldEmbeddingSet {
    pub fn new(item_id: impl Into<String>, source: Source, model_id: impl Into<String>, dims: usize) -> Self {
        FieldEmbeddingSet {
            item_id: item_id.into(),
            source,
            model_id: model_id.into(),
            dims,
            fields: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, field: &str, v: EmbeddingVector) -> Result<(), EmbeddingError> {
        if !canonical_fields(self.source).contains(&field) {
            return Err(EmbeddingError::InvalidInput(format!(
                "'{field}' is not an embedded field of {}",
                self.source
            )));
        }
        if v.dims != self.dims {
            return Err(EmbeddingError::Dimension {
                expected: self.dims,
                actual: v.dims,
            });
        }
        if v.model_id != self.model_id {
            return Err(EmbeddingError::InvalidInput(format!(
                "field '{field}' embedded with {} but the set uses {}",
                v.model_id, self.model_id
            )));
        }
        self.fields.insert(field.to_string(), v);
        Ok(())
    }

    pub fn field_count(&self) -> usize {
        canonical_fields(self.source).len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub spec: FeatureSpec,
    pub field_count: usize,
    pub dims: usize,
}

/// Concatenates, field by field in canonical order, the `spec` features of
/// each field embedding against the intent. Distances come first in the
/// order cosine, euclidean, l1; then |intent - field|; then intent * field.
/// Fields without an embedding contribute zeros.
pub fn build_features(
    intent: &EmbeddingVector,
    fields: &FieldEmbeddingSet,
    spec: FeatureSpec,
) -> Result<FeatureVector, EmbeddingError> {
    if intent.dims != fields.dims {
        return Err(EmbeddingError::Dimension {
            expected: fields.dims,
            actual: intent.dims,
        });
    }
    if !intent.normalized {
        return Err(EmbeddingError::InvalidInput(
            "intent embedding must be normalized".into(),
        ));
    }
    let names = canonical_fields(fields.source);
    let width = spec.width(intent.dims);
    let mut values = Vec::with_capacity(names.len() * width);
    for name in names {
        match fields.fields.get(*name) {
            Some(f) => push_block(&intent.values, &f.values, spec, &mut values)?,
            None => values.extend(std::iter::repeat_n(0.0, width)),
        }
    }
    Ok(FeatureVector {
        values,
        spec,
        field_count: names.len(),
        dims: intent.dims,
    })
}

fn push_block(intent: &[f64], field: &[f64], spec: FeatureSpec, out: &mut Vec<f64>) -> Result<(), EmbeddingError> {
    let (cos, euc, l1) = spec.distances();
    if cos {
        out.push(cosine_distance_raw(intent, field)?);
    }
    if euc {
        out.push(euclidean_distance_raw(intent, field)?);
    }
    if l1 {
        out.push(l1_distance_raw(intent, field)?);
    }
    if matches!(spec, FeatureSpec::AbsDiff | FeatureSpec::AllFeatures) {
        out.extend(intent.iter().zip(field).map(|(a, b)| (a - b).abs()));
    }
    if matches!(spec, FeatureSpec::Product | FeatureSpec::AllFeatures) {
        out.extend(intent.iter().zip(field).map(|(a, b)| a * b));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(values: Vec<f64>) -> EmbeddingVector {
        EmbeddingVector::new(values, "m").unwrap().normalize().unwrap()
    }

    fn web_set(dims: usize, title: Option<EmbeddingVector>) -> FieldEmbeddingSet {
        let mut s = FieldEmbeddingSet::new("i", Source::Websearch, "m", dims);
        if let Some(t) = title {
            s.insert("title", t).unwrap();
        }
        s
    }

    #[test]
    fn identical_field_gives_zero_distances() {
        let v = unit(vec![0.3, 0.4, 0.5]);
        let fv = build_features(&v, &web_set(3, Some(v.clone())), FeatureSpec::AllDistances).unwrap();
        assert_eq!(fv.values.len(), 9);
        assert!(fv.values[..3].iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn orthogonal_product_block_is_zero() {
        let fv = build_features(
            &unit(vec![1.0, 0.0]),
            &web_set(2, Some(unit(vec![0.0, 1.0]))),
            FeatureSpec::Product,
        )
        .unwrap();
        assert_eq!(&fv.values[..2], &[0.0, 0.0]);
    }

    #[test]
    fn all_features_width_for_two_fields() {
        let mut s = FieldEmbeddingSet::new("i", Source::Websearch, "m", 4);
        s.insert("title", unit(vec![1.0, 2.0, 3.0, 4.0])).unwrap();
        s.insert("snippet", unit(vec![4.0, 3.0, 2.0, 1.0])).unwrap();
        let intent = unit(vec![1.0, 1.0, 1.0, 1.0]);
        let fv = build_features(&intent, &s, FeatureSpec::AllFeatures).unwrap();
        // websearch has three canonical fields; the third is a zero block
        assert_eq!(fv.values.len(), 3 * (3 + 8));
        assert_eq!(2 * (3 + 8), 22);
        assert!(fv.values[22..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn dims_mismatch_and_unknown_fields_are_rejected() {
        let intent = unit(vec![1.0, 0.0]);
        assert!(matches!(
            build_features(&intent, &web_set(3, None), FeatureSpec::Cosine),
            Err(EmbeddingError::Dimension { .. })
        ));
        let mut s = web_set(2, None);
        assert!(s.insert("readme_text", intent.clone()).is_err());
        assert!(s.insert("title", unit(vec![1.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn spec_names_round_trip() {
        for s in FeatureSpec::ALL {
            assert_eq!(s.as_str().parse::<FeatureSpec>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{}\"", s.as_str()));
        }
    }
}
