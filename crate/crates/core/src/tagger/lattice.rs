//! Chain-CRF inference over a score lattice and a transition matrix.
//!
//! Tag ids are `0..m`. The transition matrix has two extra rows/columns:
//! `m` is the virtual start tag before the first token and `m + 1` the
//! virtual end tag after the last token.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-token tag scores, `n` rows by `m` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreLattice {
    n: usize,
    m: usize,
    scores: Vec<f64>,
}

impl ScoreLattice {
    pub fn new(n: usize, m: usize, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != n * m {
            return Err(Error::Shape(format!("{} scores for a {n}x{m} lattice", scores.len())));
        }
        if m == 0 {
            return Err(Error::Shape("lattice without tags".into()));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument("non-finite lattice score".into()));
        }
        Ok(ScoreLattice { n, m, scores })
    }

    pub fn zeros(n: usize, m: usize) -> Self {
        ScoreLattice { n, m, scores: vec![0.0; n * m] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Shape("ragged lattice rows".into()));
        }
        Self::new(rows.len(), m, rows.concat())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn num_tags(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, t: usize, i: usize) -> f64 {
        self.scores[t * self.m + i]
    }

    pub fn set(&mut self, t: usize, i: usize, value: f64) {
        self.scores[t * self.m + i] = value;
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.scores[t * self.m..(t + 1) * self.m]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.scores
    }

    /// Adds `c` to every score.
    pub fn shifted(&self, c: f64) -> Self {
        ScoreLattice {
            n: self.n,
            m: self.m,
            scores: self.scores.iter().map(|s| s + c).collect(),
        }
    }
}

/// Transition scores including the virtual start and end tags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    m: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    pub fn zeros(m: usize) -> Self {
        TransitionMatrix { m, data: vec![0.0; (m + 2) * (m + 2)] }
    }

    /// `rows` is the full (m+2)x(m+2) matrix.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let size = rows.len();
        if size < 3 || rows.iter().any(|r| r.len() != size) {
            return Err(Error::Shape(format!("transition matrix must be square with size >= 3, got {size} rows")));
        }
        Self::from_row_major(size - 2, rows.concat())
    }

    pub fn from_row_major(m: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != (m + 2) * (m + 2) {
            return Err(Error::Shape(format!("{} transition entries for {m} tags", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite transition score".into()));
        }
        Ok(TransitionMatrix { m, data })
    }

    pub fn num_tags(&self) -> usize {
        self.m
    }

    pub fn size(&self) -> usize {
        self.m + 2
    }

    pub fn start(&self) -> usize {
        self.m
    }

    pub fn end(&self) -> usize {
        self.m + 1
    }

    #[inline]
    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.data[from * (self.m + 2) + to]
    }

    pub fn set(&mut self, from: usize, to: usize, value: f64) {
        let size = self.m + 2;
        self.data[from * size + to] = value;
    }

    pub fn row_major(&self) -> &[f64] {
        &self.data
    }
}

/// Allowed tag ids per position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LatticeRepr", into = "LatticeRepr")]
pub struct ConstrainedLattice {
    m: usize,
    mask: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct LatticeRepr {
    num_tags: usize,
    allowed: Vec<Vec<usize>>,
}

impl TryFrom<LatticeRepr> for ConstrainedLattice {
    type Error = Error;

    fn try_from(r: LatticeRepr) -> Result<Self> {
        ConstrainedLattice::new(r.num_tags, r.allowed)
    }
}

impl From<ConstrainedLattice> for LatticeRepr {
    fn from(c: ConstrainedLattice) -> Self {
        LatticeRepr {
            num_tags: c.m,
            allowed: (0..c.len()).map(|t| c.allowed(t)).collect(),
        }
    }
}

impl ConstrainedLattice {
    pub fn new(m: usize, allowed: Vec<Vec<usize>>) -> Result<Self> {
        let mut mask = vec![false; allowed.len() * m];
        for (t, set) in allowed.iter().enumerate() {
            if set.is_empty() {
                return Err(Error::InvalidArgument(format!("position {t} allows no tag")));
            }
            for &i in set {
                if i >= m {
                    return Err(Error::InvalidArgument(format!("tag id {i} outside alphabet of {m}")));
                }
                mask[t * m + i] = true;
            }
        }
        Ok(ConstrainedLattice { m, mask })
    }

    pub fn unconstrained(n: usize, m: usize) -> Self {
        ConstrainedLattice { m, mask: vec![true; n * m] }
    }

    pub fn fully_constrained(m: usize, y: &[usize]) -> Result<Self> {
        Self::new(m, y.iter().map(|&i| vec![i]).collect())
    }

    pub fn len(&self) -> usize {
        if self.m == 0 { 0 } else { self.mask.len() / self.m }
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn num_tags(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn is_allowed(&self, t: usize, i: usize) -> bool {
        self.mask[t * self.m + i]
    }

    pub fn allowed(&self, t: usize) -> Vec<usize> {
        (0..self.m).filter(|&i| self.is_allowed(t, i)).collect()
    }

    /// Number of positions pinned to a single tag.
    pub fn constrained_positions(&self) -> usize {
        (0..self.len()).filter(|&t| self.allowed(t).len() == 1).count()
    }

    pub fn is_fully_unconstrained(&self) -> bool {
        self.mask.iter().all(|&b| b)
    }
}

pub(crate) fn log_sum_exp(values: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.into_iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn check_shapes(lattice: &ScoreLattice, trans: &TransitionMatrix) -> Result<()> {
    if lattice.num_tags() != trans.num_tags() {
        return Err(Error::Shape(format!(
            "lattice has {} tags, transitions {}",
            lattice.num_tags(),
            trans.num_tags()
        )));
    }
    Ok(())
}

/// Unnormalized score of tag sequence `y`: transitions from the start tag,
/// between tokens and into the end tag, plus the emission of each token.
pub fn sequence_score(lattice: &ScoreLattice, trans: &TransitionMatrix, y: &[usize]) -> Result<f64> {
    check_shapes(lattice, trans)?;
    if y.len() != lattice.len() {
        return Err(Error::Shape(format!("{} tags for {} tokens", y.len(), lattice.len())));
    }
    if let Some(&bad) = y.iter().find(|&&i| i >= lattice.num_tags()) {
        return Err(Error::UnknownTag(format!("id {bad}")));
    }
    let mut score = 0.0;
    let mut prev = trans.start();
    for (t, &i) in y.iter().enumerate() {
        score += trans.get(prev, i) + lattice.get(t, i);
        prev = i;
    }
    Ok(score + trans.get(prev, trans.end()))
}

/// Result of one forward-backward pass.
#[derive(Debug, Clone)]
pub struct ForwardBackward {
    pub log_z: f64,
    /// `n x m` row-major token marginals.
    pub unary: Vec<f64>,
    /// Expected transition counts over the full (m+2)x(m+2) matrix.
    pub transitions: Vec<f64>,
}

fn forward(lattice: &ScoreLattice, trans: &TransitionMatrix, mask: Option<&ConstrainedLattice>) -> (Vec<f64>, f64) {
    let (n, m) = (lattice.len(), lattice.num_tags());
    let allowed = |t: usize, i: usize| mask.is_none_or(|c| c.is_allowed(t, i));
    if n == 0 {
        return (Vec::new(), trans.get(trans.start(), trans.end()));
    }
    let mut alpha = vec![f64::NEG_INFINITY; n * m];
    for i in 0..m {
        if allowed(0, i) {
            alpha[i] = trans.get(trans.start(), i) + lattice.get(0, i);
        }
    }
    for t in 1..n {
        for j in 0..m {
            if !allowed(t, j) {
                continue;
            }
            let prev = &alpha[(t - 1) * m..t * m];
            let lse = log_sum_exp((0..m).map(|i| prev[i] + trans.get(i, j)));
            alpha[t * m + j] = lse + lattice.get(t, j);
        }
    }
    let last = &alpha[(n - 1) * m..];
    let log_z = log_sum_exp((0..m).map(|i| last[i] + trans.get(i, trans.end())));
    (alpha, log_z)
}

/// Log of the sum of `exp(sequence_score)` over all `m^n` sequences.
pub fn log_partition(lattice: &ScoreLattice, trans: &TransitionMatrix) -> Result<f64> {
    check_shapes(lattice, trans)?;
    Ok(forward(lattice, trans, None).1)
}

/// Log of the same sum restricted to sequences inside `constrained`.
pub fn constrained_log_partition(
    lattice: &ScoreLattice,
    trans: &TransitionMatrix,
    constrained: &ConstrainedLattice,
) -> Result<f64> {
    check_shapes(lattice, trans)?;
    check_mask(lattice, constrained)?;
    Ok(forward(lattice, trans, Some(constrained)).1)
}

fn check_mask(lattice: &ScoreLattice, c: &ConstrainedLattice) -> Result<()> {
    if c.len() != lattice.len() || c.num_tags() != lattice.num_tags() {
        return Err(Error::Shape(format!(
            "constrained lattice {}x{} for score lattice {}x{}",
            c.len(),
            c.num_tags(),
            lattice.len(),
            lattice.num_tags()
        )));
    }
    Ok(())
}

pub fn sequence_probability(lattice: &ScoreLattice, trans: &TransitionMatrix, y: &[usize]) -> Result<f64> {
    let score = sequence_score(lattice, trans, y)?;
    Ok((score - forward(lattice, trans, None).1).exp())
}

/// Forward-backward, optionally restricted to a constrained lattice.
pub fn forward_backward(
    lattice: &ScoreLattice,
    trans: &TransitionMatrix,
    mask: Option<&ConstrainedLattice>,
) -> Result<ForwardBackward> {
    check_shapes(lattice, trans)?;
    if let Some(c) = mask {
        check_mask(lattice, c)?;
    }
    let (n, m) = (lattice.len(), lattice.num_tags());
    let size = trans.size();
    let (alpha, log_z) = forward(lattice, trans, mask);
    let mut transitions = vec![0.0; size * size];
    if n == 0 {
        transitions[trans.start() * size + trans.end()] = 1.0;
        return Ok(ForwardBackward { log_z, unary: Vec::new(), transitions });
    }
    let allowed = |t: usize, i: usize| mask.is_none_or(|c| c.is_allowed(t, i));

    let mut beta = vec![f64::NEG_INFINITY; n * m];
    for i in 0..m {
        if allowed(n - 1, i) {
            beta[(n - 1) * m + i] = trans.get(i, trans.end());
        }
    }
    for t in (0..n - 1).rev() {
        for i in 0..m {
            if !allowed(t, i) {
                continue;
            }
            let next = &beta[(t + 1) * m..(t + 2) * m];
            beta[t * m + i] = log_sum_exp((0..m).map(|j| trans.get(i, j) + lattice.get(t + 1, j) + next[j]));
        }
    }

    let mut unary = vec![0.0; n * m];
    for k in 0..n * m {
        let v = alpha[k] + beta[k] - log_z;
        unary[k] = if v == f64::NEG_INFINITY { 0.0 } else { v.exp() };
    }
    for i in 0..m {
        transitions[trans.start() * size + i] = unary[i];
        transitions[i * size + trans.end()] = unary[(n - 1) * m + i];
    }
    for t in 0..n - 1 {
        for i in 0..m {
            let a = alpha[t * m + i];
            if a == f64::NEG_INFINITY {
                continue;
            }
            for j in 0..m {
                let b = beta[(t + 1) * m + j];
                if b == f64::NEG_INFINITY {
                    continue;
                }
                let v = a + trans.get(i, j) + lattice.get(t + 1, j) + b - log_z;
                transitions[i * size + j] += v.exp();
            }
        }
    }
    Ok(ForwardBackward { log_z, unary, transitions })
}

/// `n x m` marginals `p(y_t = i | x)` as rows.
pub fn token_marginals(lattice: &ScoreLattice, trans: &TransitionMatrix) -> Result<Vec<Vec<f64>>> {
    let fb = forward_backward(lattice, trans, None)?;
    let m = lattice.num_tags();
    Ok(fb.unary.chunks(m).map(<[f64]>::to_vec).collect())
}

/// Highest-scoring sequence. Ties go to the lowest tag id at every
/// backpointer and at the final step.
pub fn viterbi_decode(lattice: &ScoreLattice, trans: &TransitionMatrix) -> Result<Vec<usize>> {
    check_shapes(lattice, trans)?;
    let (n, m) = (lattice.len(), lattice.num_tags());
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut delta: Vec<f64> = (0..m).map(|i| trans.get(trans.start(), i) + lattice.get(0, i)).collect();
    let mut back = vec![0usize; n * m];
    for t in 1..n {
        let mut next = vec![0.0; m];
        for j in 0..m {
            let mut best = 0;
            let mut best_score = delta[0] + trans.get(0, j);
            for i in 1..m {
                let s = delta[i] + trans.get(i, j);
                if s > best_score {
                    best = i;
                    best_score = s;
                }
            }
            back[t * m + j] = best;
            next[j] = best_score + lattice.get(t, j);
        }
        delta = next;
    }
    let mut last = 0;
    let mut best_score = delta[0] + trans.get(0, trans.end());
    for i in 1..m {
        let s = delta[i] + trans.get(i, trans.end());
        if s > best_score {
            last = i;
            best_score = s;
        }
    }
    let mut path = vec![0; n];
    path[n - 1] = last;
    for t in (1..n).rev() {
        path[t - 1] = back[t * m + path[t]];
    }
    Ok(path)
}

/// Per-token argmax of the marginals (lowest id on ties).
pub fn posterior_decode(marginals: &[Vec<f64>]) -> Vec<usize> {
    marginals
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
                .0
        })
        .collect()
}

/// Pins position `t` to `predicted[t]` when its marginal exceeds `eta`;
/// every other position allows all tags.
pub fn build_lattice(marginals: &[Vec<f64>], predicted: &[usize], eta: f64) -> Result<ConstrainedLattice> {
    if marginals.len() != predicted.len() {
        return Err(Error::Shape(format!("{} marginal rows, {} predictions", marginals.len(), predicted.len())));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidArgument(format!("eta {eta} outside [0, 1]")));
    }
    let m = marginals.first().map_or(0, Vec::len);
    let allowed = marginals
        .iter()
        .zip(predicted)
        .map(|(row, &y)| {
            if row.len() != m || y >= m {
                return Err(Error::Shape("ragged marginals or prediction out of range".into()));
            }
            Ok(if row[y] > eta { vec![y] } else { (0..m).collect() })
        })
        .collect::<Result<Vec<_>>>()?;
    ConstrainedLattice::new(m, allowed)
}

/// Log of the probability mass inside the constrained lattice.
pub fn ulm_log_likelihood(
    lattice: &ScoreLattice,
    trans: &TransitionMatrix,
    constrained: &ConstrainedLattice,
) -> Result<f64> {
    let inside = constrained_log_partition(lattice, trans, constrained)?;
    let all = forward(lattice, trans, None).1;
    Ok(inside - all)
}

/// Probability mass of all sequences inside the constrained lattice,
/// computed with a constrained forward pass.
pub fn ulm_likelihood(lattice: &ScoreLattice, trans: &TransitionMatrix, constrained: &ConstrainedLattice) -> Result<f64> {
    Ok(ulm_log_likelihood(lattice, trans, constrained)?.exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero(n: usize, m: usize) -> (ScoreLattice, TransitionMatrix) {
        (ScoreLattice::zeros(n, m), TransitionMatrix::zeros(m))
    }

    #[test]
    fn zero_scores() {
        let (p, t) = zero(3, 2);
        assert_eq!(sequence_score(&p, &t, &[0, 1, 1]).unwrap(), 0.0);
        assert!((log_partition(&ScoreLattice::zeros(1, 2), &TransitionMatrix::zeros(2)).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((log_partition(&ScoreLattice::zeros(2, 2), &TransitionMatrix::zeros(2)).unwrap() - 4f64.ln()).abs() < 1e-15);
        for y in [[0, 0], [0, 1], [1, 0], [1, 1]] {
            let p = sequence_probability(&ScoreLattice::zeros(2, 2), &TransitionMatrix::zeros(2), &y).unwrap();
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_sequence_score() {
        // tags "1" and "2" of the two-tag example are ids 0 and 1
        let p = ScoreLattice::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let t = TransitionMatrix::zeros(2);
        assert_eq!(sequence_score(&p, &t, &[0, 1]).unwrap(), 2.0);
    }

    #[test]
    fn constant_shift_adds_n_c() {
        let p = ScoreLattice::from_rows(&[vec![0.3, -1.0], vec![2.0, 0.5], vec![0.0, 0.1]]).unwrap();
        let mut t = TransitionMatrix::zeros(2);
        t.set(0, 1, 0.7);
        t.set(t.start(), 1, -0.2);
        let y = [1, 0, 1];
        let a = sequence_score(&p, &t, &y).unwrap();
        let b = sequence_score(&p.shifted(1.5), &t, &y).unwrap();
        assert!((b - a - 3.0 * 1.5).abs() < 1e-12);
    }

    #[test]
    fn uniform_marginals_and_tie_break() {
        let (p, t) = zero(4, 3);
        for row in token_marginals(&p, &t).unwrap() {
            for v in row {
                assert!((v - 1.0 / 3.0).abs() < 1e-12);
            }
        }
        assert_eq!(viterbi_decode(&p, &t).unwrap(), vec![0, 0, 0, 0]);
    }

    #[test]
    fn single_token_viterbi() {
        let p = ScoreLattice::from_rows(&[vec![0.0, 0.0, 1.0]]).unwrap();
        assert_eq!(viterbi_decode(&p, &TransitionMatrix::zeros(3)).unwrap(), vec![2]);
    }

    #[test]
    fn large_scores_do_not_overflow() {
        let p = ScoreLattice::from_rows(&[vec![1000.0, -1000.0], vec![999.0, 1000.0]]).unwrap();
        let z = log_partition(&p, &TransitionMatrix::zeros(2)).unwrap();
        assert!(z.is_finite());
        assert!((z - 2000.0 - (1.0 + (-1f64).exp()).ln()).abs() < 1e-9);
    }

    #[test]
    fn saturated_softmax() {
        let p = ScoreLattice::from_rows(&[vec![100.0, 0.0]]).unwrap();
        let prob = sequence_probability(&p, &TransitionMatrix::zeros(2), &[0]).unwrap();
        assert!((prob - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lattice_threshold() {
        let all = vec![vec![0.99, 0.01]; 3];
        let c = build_lattice(&all, &[0, 0, 0], 0.9).unwrap();
        assert_eq!(c.constrained_positions(), 3);
        let c = build_lattice(&all, &[0, 0, 0], 1.0).unwrap();
        assert!(c.is_fully_unconstrained());
        let c = build_lattice(&[vec![0.95, 0.05], vec![0.6, 0.4]], &[0, 0], 0.8).unwrap();
        assert_eq!(c.allowed(0), vec![0]);
        assert_eq!(c.allowed(1), vec![0, 1]);
        assert!(build_lattice(&all, &[0, 0, 0], 1.5).is_err());
    }

    #[test]
    fn ulm_extremes() {
        let p = ScoreLattice::from_rows(&[vec![0.4, -1.2, 2.0], vec![0.1, 0.0, -0.3]]).unwrap();
        let mut t = TransitionMatrix::zeros(3);
        t.set(2, 1, 1.1);
        t.set(0, t.end(), -0.5);
        let free = ConstrainedLattice::unconstrained(2, 3);
        assert_eq!(ulm_log_likelihood(&p, &t, &free).unwrap(), 0.0);
        assert_eq!(ulm_likelihood(&p, &t, &free).unwrap(), 1.0);
        let pinned = ConstrainedLattice::fully_constrained(3, &[2, 1]).unwrap();
        let direct = sequence_probability(&p, &t, &[2, 1]).unwrap();
        assert!((ulm_likelihood(&p, &t, &pinned).unwrap() - direct).abs() < 1e-15);
    }

    #[test]
    fn shape_errors() {
        let p = ScoreLattice::zeros(2, 2);
        assert!(log_partition(&p, &TransitionMatrix::zeros(3)).is_err());
        assert!(sequence_score(&p, &TransitionMatrix::zeros(2), &[0]).is_err());
        assert!(sequence_score(&p, &TransitionMatrix::zeros(2), &[0, 2]).is_err());
        assert!(ScoreLattice::new(1, 2, vec![0.0, f64::NAN]).is_err());
        assert!(ConstrainedLattice::new(2, vec![vec![]]).is_err());
        assert!(ConstrainedLattice::new(2, vec![vec![2]]).is_err());
    }

    #[test]
    fn lattice_serde() {
        let c = ConstrainedLattice::new(3, vec![vec![1], vec![0, 1, 2]]).unwrap();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(s, r#"{"num_tags":3,"allowed":[[1],[0,1,2]]}"#);
        assert_eq!(serde_json::from_str::<ConstrainedLattice>(&s).unwrap(), c);
    }
}
