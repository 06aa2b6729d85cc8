use crate::error::{Error, Result};
use crate::tagger::ScoreLattice;

/// `alpha * p + (1 - alpha) * q`.
pub fn graph_interp(p: &[f64], q: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("mixing coefficient {alpha} outside [0, 1]")));
    }
    if p.len() != q.len() {
        return Err(Error::Shape(format!("distributions of length {} and {}", p.len(), q.len())));
    }
    Ok(p.iter().zip(q).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect())
}

/// Adds graph evidence to emission scores: row t becomes `P_t + Q_t · M`,
/// with `M` mapping propagated label mass onto tag scores.
pub fn graph_feat(p: &ScoreLattice, q: &[Vec<f64>], m: &[Vec<f64>]) -> Result<ScoreLattice> {
    let (n, k) = (p.len(), p.num_tags());
    if q.len() != n || q.iter().any(|row| row.len() != k) {
        return Err(Error::Shape(format!("graph distributions must be {n}x{k}")));
    }
    if m.len() != k || m.iter().any(|row| row.len() != k) {
        return Err(Error::Shape(format!("graph feature matrix must be {k}x{k}")));
    }
    let mut out = p.clone();
    for (t, qt) in q.iter().enumerate() {
        for i in 0..k {
            let extra: f64 = (0..k).map(|j| qt[j] * m[j][i]).sum();
            out.set(t, i, p.get(t, i) + extra);
        }
    }
    Ok(out)
}
