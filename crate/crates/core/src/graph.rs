//! Signed label dependency graph and balance-theory neighbourhoods.
//!
//! Labels are joined by a positive edge when their description embeddings
//! are very similar and by a negative edge when they are very dissimilar.
//! Multi-hop neighbourhoods compose edge signs multiplicatively: a walk
//! with an even number of negative edges lands in the positive
//! neighbourhood, an odd number in the negative one.

use std::collections::HashMap;
use std::io::Write;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interchange::{LabelEmbeddings, LabelSpace};
use crate::scalar::Scalar;

/// Lowercased whitespace tokenization used for embedding lookup.
pub fn whitespace_tokenizer(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// Averages the token vectors of each label description.
///
/// Out-of-vocabulary tokens are skipped with a warning; a label whose
/// tokens are all unknown is an error.
pub fn embed_labels<T, F>(
    labels: &LabelSpace,
    token_embeddings: &HashMap<String, Vec<T>>,
    tokenizer: F,
) -> Result<LabelEmbeddings<T>>
where
    T: Scalar,
    F: Fn(&str) -> Vec<String>,
{
    let dim = token_embeddings
        .values()
        .next()
        .map(Vec::len)
        .ok_or_else(|| Error::Config("token embedding table is empty".into()))?;
    let mut out = Array2::zeros((labels.len(), dim));
    for (l, desc) in labels.descriptions().iter().enumerate() {
        let mut count = 0usize;
        let mut row = out.row_mut(l);
        for tok in tokenizer(desc) {
            match token_embeddings.get(&tok) {
                Some(v) if v.len() == dim => {
                    for (acc, &x) in row.iter_mut().zip(v) {
                        *acc += x;
                    }
                    count += 1;
                }
                Some(v) => {
                    return Err(Error::Dimension(format!(
                        "token {tok:?} has dimension {}, expected {dim}",
                        v.len()
                    )))
                }
                None => log::warn!("label {l} ({desc:?}): token {tok:?} not in vocabulary"),
            }
        }
        if count == 0 {
            return Err(Error::AllOutOfVocabulary {
                index: l,
                description: desc.clone(),
            });
        }
        row.mapv_inplace(|x| x / T::from_usize_lossy(count));
    }
    LabelEmbeddings::new(out)
}

/// Pairwise cosine similarity, clamped to `[-1, 1]` with a unit diagonal.
pub fn similarity_matrix<T: Scalar>(emb: &LabelEmbeddings<T>) -> Result<Array2<T>> {
    let v = emb.vectors();
    let norms: Vec<T> = v.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    if let Some(l) = norms.iter().position(|n| n.is_zero()) {
        return Err(Error::ZeroNorm { index: l });
    }
    let gram = v.dot(&v.t());
    let l = emb.labels();
    Ok(Array2::from_shape_fn((l, l), |(u, w)| {
        if u == w {
            T::one()
        } else {
            (gram[(u, w)] / (norms[u] * norms[w]))
                .max(-T::one())
                .min(T::one())
        }
    }))
}

/// Lower and upper percentiles (in percent) of the similarity distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PercentilePair {
    pub low: f64,
    pub high: f64,
}

impl PercentilePair {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low > 0.0 && low < high && high < 100.0) {
            return Err(Error::Config(format!(
                "percentile pair ({low}, {high}) must satisfy 0 < low < high < 100"
            )));
        }
        Ok(PercentilePair { low, high })
    }
}

impl Default for PercentilePair {
    fn default() -> Self {
        PercentilePair {
            low: 10.0,
            high: 90.0,
        }
    }
}

impl std::str::FromStr for PercentilePair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(',')
            .ok_or_else(|| Error::Config(format!("expected LOW,HIGH, got {s:?}")))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad percentile {t:?}: {e}")))
        };
        PercentilePair::new(parse(a)?, parse(b)?)
    }
}

/// Nearest-rank percentile of an ascending slice: the value at 1-based rank
/// `ceil(p / 100 * n)`, clamped to `[1, n]`.
pub fn nearest_rank<T: Copy>(sorted: &[T], percent: f64) -> T {
    let n = sorted.len();
    assert!(n > 0, "percentile of empty slice");
    let rank = ((percent / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignedLabelGraph<T> {
    pub similarity: Array2<T>,
    pub pos_adj: Array2<u64>,
    pub neg_adj: Array2<u64>,
    pub delta_pos: T,
    pub delta_neg: T,
    pub percentile_pair: PercentilePair,
}

impl<T: Scalar> SignedLabelGraph<T> {
    pub fn labels(&self) -> usize {
        self.pos_adj.nrows()
    }

    pub fn positive_edges(&self) -> usize {
        count_upper(&self.pos_adj)
    }

    pub fn negative_edges(&self) -> usize {
        count_upper(&self.neg_adj)
    }

    /// Undirected edges `(u, v, sign)` with `u < v`, in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize, i8)> {
        let l = self.labels();
        let mut out = Vec::new();
        for u in 0..l {
            for v in u + 1..l {
                if self.pos_adj[(u, v)] != 0 {
                    out.push((u, v, 1));
                } else if self.neg_adj[(u, v)] != 0 {
                    out.push((u, v, -1));
                }
            }
        }
        out
    }

    /// Tab-separated edge list preceded by `#` comment lines with the thresholds.
    pub fn write_edge_list<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "# labels\t{}", self.labels())?;
        writeln!(
            w,
            "# percentiles\t{}\t{}",
            self.percentile_pair.low, self.percentile_pair.high
        )?;
        writeln!(w, "# delta_neg\t{}", self.delta_neg)?;
        writeln!(w, "# delta_pos\t{}", self.delta_pos)?;
        for (u, v, s) in self.edges() {
            writeln!(w, "{u}\t{v}\t{}", if s > 0 { "+" } else { "-" })?;
        }
        Ok(())
    }
}

fn count_upper(m: &Array2<u64>) -> usize {
    m.indexed_iter()
        .filter(|((u, v), &x)| u < v && x != 0)
        .count()
}

/// Binarizes a similarity matrix at nearest-rank percentiles of its
/// off-diagonal upper triangle. Ties at a threshold are included.
pub fn threshold_graph<T: Scalar>(
    sim: &Array2<T>,
    pair: PercentilePair,
) -> Result<SignedLabelGraph<T>> {
    let pair = PercentilePair::new(pair.low, pair.high)?;
    let l = sim.nrows();
    if sim.ncols() != l {
        return Err(Error::Dimension(format!(
            "similarity matrix is {:?}",
            sim.dim()
        )));
    }
    let mut upper: Vec<T> = (0..l)
        .flat_map(|u| (u + 1..l).map(move |v| (u, v)))
        .map(|(u, v)| sim[(u, v)])
        .collect();
    if upper.is_empty() {
        return Err(Error::Config(
            "need at least two labels to build a graph".into(),
        ));
    }
    if upper.iter().any(|x| x.is_nan()) {
        return Err(Error::Dimension("similarity matrix contains NaN".into()));
    }
    upper.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    let delta_neg = nearest_rank(&upper, pair.low);
    let delta_pos = nearest_rank(&upper, pair.high);
    if delta_neg >= delta_pos {
        return Err(Error::DegenerateThresholds {
            low: delta_neg.as_f64(),
            high: delta_pos.as_f64(),
        });
    }
    let edge = |pred: &dyn Fn(T) -> bool| {
        Array2::from_shape_fn((l, l), |(u, v)| u64::from(u != v && pred(sim[(u, v)])))
    };
    Ok(SignedLabelGraph {
        similarity: sim.clone(),
        pos_adj: edge(&|d| d >= delta_pos),
        neg_adj: edge(&|d| d <= delta_neg),
        delta_pos,
        delta_neg,
        percentile_pair: pair,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Pos,
    Neg,
}

/// k-hop dependency counts `D^(k,±)` for `k = 1..=depth` (stored at index `k-1`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BalancedNeighborhoods {
    pub dep_pos: Vec<Array2<u64>>,
    pub dep_neg: Vec<Array2<u64>>,
}

impl BalancedNeighborhoods {
    /// Runs the signed recursion
    /// `D+ ← A+ᵀ D+ + A-ᵀ D-`, `D- ← A+ᵀ D- + A-ᵀ D+` starting from `D^(1,±) = A±`.
    pub fn from_adjacency(pos: &Array2<u64>, neg: &Array2<u64>, depth: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::Config(
                "neighbourhood depth K must be at least 1".into(),
            ));
        }
        if pos.dim() != neg.dim() || pos.nrows() != pos.ncols() {
            return Err(Error::Dimension(
                "adjacency matrices must be square and equal".into(),
            ));
        }
        let mut dep_pos = vec![pos.clone()];
        let mut dep_neg = vec![neg.clone()];
        let (pt, nt) = (pos.t(), neg.t());
        for _ in 1..depth {
            let (dp, dn) = (dep_pos.last().unwrap(), dep_neg.last().unwrap());
            let next_pos = pt.dot(dp) + nt.dot(dn);
            let next_neg = pt.dot(dn) + nt.dot(dp);
            dep_pos.push(next_pos);
            dep_neg.push(next_neg);
        }
        Ok(BalancedNeighborhoods { dep_pos, dep_neg })
    }

    /// Zeroes the diagonal of every hop, removing self-walks.
    pub fn without_self_loops(mut self) -> Self {
        for m in self.dep_pos.iter_mut().chain(self.dep_neg.iter_mut()) {
            m.diag_mut().fill(0);
        }
        self
    }

    pub fn depth(&self) -> usize {
        self.dep_pos.len()
    }

    pub fn labels(&self) -> usize {
        self.dep_pos[0].nrows()
    }

    /// `D^(k,sign)` for 1-based hop `k`.
    pub fn dependencies(&self, k: usize, sign: Sign) -> &Array2<u64> {
        match sign {
            Sign::Pos => &self.dep_pos[k - 1],
            Sign::Neg => &self.dep_neg[k - 1],
        }
    }

    /// `N_v^(k,sign) = {u : D_uv > 0}` in ascending order.
    pub fn neighbors(&self, k: usize, sign: Sign, v: usize) -> Vec<usize> {
        self.dependencies(k, sign)
            .index_axis(Axis(1), v)
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(u, _)| u)
            .collect()
    }

    /// Support of `D^(k,sign)` as a 0/1 matrix, indexed `[u, v]`.
    pub fn mask<T: Scalar>(&self, k: usize, sign: Sign) -> Array2<T> {
        self.dependencies(k, sign)
            .mapv(|c| if c > 0 { T::one() } else { T::zero() })
    }
}

/// Builds neighbourhoods for a thresholded graph.
pub fn balanced_neighborhoods<T: Scalar>(
    graph: &SignedLabelGraph<T>,
    depth: usize,
) -> Result<BalancedNeighborhoods> {
    BalancedNeighborhoods::from_adjacency(&graph.pos_adj, &graph.neg_adj, depth)
}
