//! Vector distances between embeddings.

use super::{EmbeddingError, EmbeddingVector};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn same_dims(a: &[f64], b: &[f64]) -> Result<(), EmbeddingError> {
    if a.len() != b.len() {
        return Err(EmbeddingError::Dimension {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(())
}

/// `1 - a·b / (|a||b|)`, clamped to `[0, 2]`.
pub fn cosine_distance_raw(a: &[f64], b: &[f64]) -> Result<f64, EmbeddingError> {
    same_dims(a, b)?;
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(EmbeddingError::Degenerate("zero-norm vector in cosine distance".into()));
    }
    Ok((1.0 - dot(a, b) / (na * nb)).clamp(0.0, 2.0))
}

pub fn euclidean_distance_raw(a: &[f64], b: &[f64]) -> Result<f64, EmbeddingError> {
    same_dims(a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

pub fn l1_distance_raw(a: &[f64], b: &[f64]) -> Result<f64, EmbeddingError> {
    same_dims(a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
}

pub fn cosine_distance(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    cosine_distance_raw(&a.values, &b.values)
}

pub fn euclidean_distance(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    euclidean_distance_raw(&a.values, &b.values)
}

pub fn l1_distance(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    l1_distance_raw(&a.values, &b.values)
}
