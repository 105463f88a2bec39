//! Cosine similarity and Pearson correlation over embedding profiles.

use crate::error::{Error, Result};
use crate::gateway::EmbeddingVector;

/// Cosine similarity; `None` when lengths differ, 0 when either vector has
/// zero norm.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.is_empty() {
        return None;
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Some(0.0);
    }
    Some((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Sample Pearson correlation. `None` marks degenerate input (length < 2,
/// length mismatch, or a constant vector); callers map that to "no signal".
pub fn pearson_correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    let mut dev_a_max = 0.0f64;
    let mut dev_b_max = 0.0f64;
    for (x, y) in a.iter().zip(b.iter()) {
        let dx = x - mean_a;
        let dy = y - mean_b;
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
        dev_a_max = dev_a_max.max(dx.abs());
        dev_b_max = dev_b_max.max(dy.abs());
    }
    if dev_a_max == 0.0 || dev_b_max == 0.0 {
        return None;
    }
    Some((cov / (var_a.sqrt() * var_b.sqrt())).clamp(-1.0, 1.0))
}

/// Cosine similarity of a unit's pooled text embedding against each vision
/// token, in token order.
pub fn similarity_vector(
    unit_embedding: &EmbeddingVector,
    image_tokens: &[EmbeddingVector],
) -> Result<Vec<f64>> {
    if image_tokens.is_empty() {
        return Err(Error::EmptyTokenList);
    }
    let mut out = Vec::with_capacity(image_tokens.len());
    for token in image_tokens {
        match cosine_similarity(&unit_embedding.values, &token.values) {
            Some(sim) => out.push(sim),
            None => {
                return Err(Error::DimensionMismatch {
                    expected: unit_embedding.dimension,
                    got: token.dimension,
                })
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_worked_examples() {
        assert!((pearson_correlation(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson_correlation(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        let r = pearson_correlation(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.98198).abs() < 1e-5, "r = {r}");
    }

    #[test]
    fn pearson_degenerate_inputs() {
        assert!(pearson_correlation(&[1.0], &[2.0]).is_none());
        assert!(pearson_correlation(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_none());
        assert!(pearson_correlation(&[1.0, 2.0], &[1.0, 2.0, 3.0]).is_none());
    }

    #[test]
    fn cosine_identities() {
        let e0 = EmbeddingVector::raw(vec![1.0, 0.0]);
        let e1 = EmbeddingVector::raw(vec![0.0, 1.0]);
        let tokens = vec![e0.clone(), e1];
        let sims = similarity_vector(&e0, &tokens).unwrap();
        assert!((sims[0] - 1.0).abs() < 1e-12);
        assert!(sims[1].abs() < 1e-12);
    }

    #[test]
    fn similarity_vector_hand_oracle() {
        // text=[1,0], tokens=[[1,0],[sqrt2/2,sqrt2/2]] -> [1.0, 0.7071]
        let text = EmbeddingVector::raw(vec![1.0, 0.0]);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let tokens = vec![
            EmbeddingVector::raw(vec![1.0, 0.0]),
            EmbeddingVector::raw(vec![s, s]),
        ];
        let sims = similarity_vector(&text, &tokens).unwrap();
        assert!((sims[0] - 1.0).abs() < 1e-6);
        assert!((sims[1] - 0.7071).abs() < 1e-4);
    }

    #[test]
    fn similarity_vector_constant_for_identical_tokens() {
        let text = EmbeddingVector::raw(vec![0.3, 0.4]);
        let tok = EmbeddingVector::raw(vec![1.0, 1.0]);
        let sims = similarity_vector(&text, &[tok.clone(), tok.clone(), tok]).unwrap();
        assert!((sims[0] - sims[1]).abs() < 1e-15 && (sims[1] - sims[2]).abs() < 1e-15);
    }

    #[test]
    fn similarity_vector_dimension_mismatch() {
        let text = EmbeddingVector::raw(vec![1.0, 0.0]);
        let tokens = vec![EmbeddingVector::raw(vec![1.0, 0.0, 0.0])];
        assert!(matches!(
            similarity_vector(&text, &tokens),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
