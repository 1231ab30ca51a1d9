use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::protocol::{EmbeddedRecord, StudyDataset};
use super::HarnessError;
use crate::embedding::{canonical_fields, EmbeddingVector, FieldEmbeddingSet};
use crate::source::{Label, Source};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub items: usize,
    pub relevant_fraction: f64,
    /// Standard deviation of the per-component noise added to the intent
    /// for relevant fields.
    pub noise_sigma: f64,
    pub intents: usize,
    pub full_dims: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            items: 200,
            relevant_fraction: 0.5,
            noise_sigma: 0.1,
            intents: 4,
            full_dims: 1536,
            seed: 42,
        }
    }
}

fn unit<R: Rng>(rng: &mut R, dims: usize, model_id: &str) -> EmbeddingVector {
    let v: Vec<f64> = (0..dims).map(|_| StandardNormal.sample(rng)).collect();
    EmbeddingVector::new(v, model_id)
        .and_then(EmbeddingVector::normalize)
        .expect("gaussian vector is non-zero")
}

/// Embedded records where every field of a relevant item is its intent
/// embedding plus N(0, σ²) noise per component, and every field of an
/// irrelevant item is an independent random unit vector.
pub fn synthetic_records(source: Source, model_id: &str, spec: &SyntheticSpec) -> Vec<EmbeddedRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ (source as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let noise = Normal::new(0.0, spec.noise_sigma).expect("finite sigma");
    let intents: Vec<EmbeddingVector> = (0..spec.intents.max(1))
        .map(|_| unit(&mut rng, spec.full_dims, model_id))
        .collect();
    let relevant = (spec.items as f64 * spec.relevant_fraction).round() as usize;
    let mut labels: Vec<Label> = (0..spec.items).map(|i| Label::from_relevant(i < relevant)).collect();
    rand::seq::SliceRandom::shuffle(labels.as_mut_slice(), &mut rng);

    labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let intent = intents[i % intents.len()].clone();
            let mut fields =
                FieldEmbeddingSet::new(format!("{source}:synthetic-{i:04}"), source, model_id, spec.full_dims);
            for &name in canonical_fields(source) {
                let v = if label.is_relevant() {
                    let values = intent.values.iter().map(|x| x + noise.sample(&mut rng)).collect();
                    EmbeddingVector::new(values, model_id)
                        .and_then(EmbeddingVector::normalize)
                        .expect("non-zero")
                } else {
                    unit(&mut rng, spec.full_dims, model_id)
                };
                fields.insert(name, v).expect("canonical field");
            }
            EmbeddedRecord { intent, fields, label }
        })
        .collect()
}

pub fn synthetic_study_dataset(
    source: Source,
    model_id: &str,
    spec: &SyntheticSpec,
    dims: &[usize],
) -> Result<StudyDataset, HarnessError> {
    StudyDataset::from_full(source, model_id, &synthetic_records(source, model_id, spec), dims)
}
