use crate::error::{EsclError, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine of the angle between `a` and `b`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(EsclError::Dimension(format!(
            "cosine of vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(EsclError::Dimension("cosine of empty vectors".into()));
    }
    let (aa, bb) = (dot(a, a), dot(b, b));
    if aa == 0.0 || bb == 0.0 {
        return Err(EsclError::Degenerate(
            "cosine similarity of a zero vector".into(),
        ));
    }
    // sqrt(x * x) == x exactly, so sim(a, a) is exactly 1
    Ok((dot(a, b) / (aa * bb).sqrt()).clamp(-1.0, 1.0))
}
