//! Representational similarity analysis.
//!
//! An [`Rdm`] holds `1 − cosine` between every pair of item embeddings.
//! Matrices are compared by Spearman correlation over their strict upper
//! triangles; categorical structure is summarized as the gap between mean
//! between-category and mean within-category dissimilarity.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::provider::{cosine_parts, dot, Embedding};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RsaError {
    #[error("need at least {needed} items, got {got}")]
    TooFewItems { needed: usize, got: usize },
    #[error("{ids} ids for {items} embeddings")]
    IdCountMismatch { ids: usize, items: usize },
    #[error("embedding {id:?} has dimension {got}, expected {expected}")]
    DimensionMismatch { id: String, expected: usize, got: usize },
    #[error("embedding {0:?} has zero norm")]
    ZeroNorm(String),
    #[error("RDMs have different item ids")]
    MismatchedIds,
    #[error("upper triangle is constant; rank correlation undefined")]
    ConstantRanks,
    #[error("item {0:?} has no category")]
    MissingCategory(String),
    #[error("need at least two categories, got {0}")]
    TooFewCategories(usize),
    #[error("no within-category pairs (every category has one member)")]
    NoWithinPairs,
    #[error("matrix is not a valid RDM: {0}")]
    Invalid(String),
    #[error("RDM file: {0}")]
    Parse(String),
}

/// Symmetric, zero-diagonal dissimilarity matrix, dense row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Rdm {
    n: usize,
    values: Vec<f64>,
    item_ids: Vec<String>,
    category_of: Option<BTreeMap<String, String>>,
}

impl Rdm {
    /// Validate and wrap a full row-major matrix.
    pub fn from_matrix(item_ids: Vec<String>, values: Vec<f64>) -> Result<Self, RsaError> {
        let n = item_ids.len();
        if values.len() != n * n {
            return Err(RsaError::Invalid(format!("{} values for {n} items", values.len())));
        }
        if n < 2 {
            return Err(RsaError::TooFewItems { needed: 2, got: n });
        }
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(RsaError::Invalid(format!("diagonal entry {i} is nonzero")));
            }
            for j in 0..i {
                let v = values[i * n + j];
                if v != values[j * n + i] {
                    return Err(RsaError::Invalid(format!("entries ({i},{j}) and ({j},{i}) differ")));
                }
                if !(0.0..=2.0).contains(&v) {
                    return Err(RsaError::Invalid(format!("entry ({i},{j}) = {v} outside [0, 2]")));
                }
            }
        }
        Ok(Rdm {
            n,
            values,
            item_ids,
            category_of: None,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn category_of(&self) -> Option<&BTreeMap<String, String>> {
        self.category_of.as_ref()
    }

    pub fn with_categories(mut self, category_of: BTreeMap<String, String>) -> Self {
        self.category_of = Some(category_of);
        self
    }

    /// Strict upper triangle in row-major order.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n * (self.n - 1) / 2);
        for i in 0..self.n {
            out.extend_from_slice(&self.values[i * self.n + i + 1..(i + 1) * self.n]);
        }
        out
    }

    /// CSV: header `id,<id_1>,...,<id_n>`, then one `id_i,v_i1,...,v_in`
    /// row per item. Values use the shortest round-tripping decimal form.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("id");
        for id in &self.item_ids {
            s.push(',');
            s.push_str(&csv_field(id));
        }
        s.push('\n');
        for (i, id) in self.item_ids.iter().enumerate() {
            s.push_str(&csv_field(id));
            for j in 0..self.n {
                let _ = write!(s, ",{}", self.get(i, j));
            }
            s.push('\n');
        }
        s
    }

    /// Parse [`to_csv`](Self::to_csv) output; lines starting with `#` are
    /// skipped. Symmetry and the diagonal are checked on load.
    pub fn from_csv(data: &str) -> Result<Self, RsaError> {
        let body: String = data
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| format!("{l}\n"))
            .collect();
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
        let header = reader.headers().map_err(|e| RsaError::Parse(e.to_string()))?.clone();
        if header.get(0) != Some("id") {
            return Err(RsaError::Parse("first header field must be `id`".into()));
        }
        let ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut values = Vec::with_capacity(ids.len() * ids.len());
        for (i, row) in reader.records().enumerate() {
            let row = row.map_err(|e| RsaError::Parse(e.to_string()))?;
            if ids.get(i).map(String::as_str) != row.get(0) {
                return Err(RsaError::Parse(format!("row {i} id does not match header order")));
            }
            if row.len() != ids.len() + 1 {
                return Err(RsaError::Parse(format!("row {i} has {} fields", row.len())));
            }
            for f in row.iter().skip(1) {
                values.push(f.parse::<f64>().map_err(|e| RsaError::Parse(format!("{f:?}: {e}")))?);
            }
        }
        Rdm::from_matrix(ids, values)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `values[i][j] = 1 − cos(e_i, e_j)`, diagonal exactly 0, entries
/// clamped into [0, 2] against rounding.
pub fn compute_rdm(embeddings: &[Embedding], ids: &[String]) -> Result<Rdm, RsaError> {
    let n = embeddings.len();
    if n < 2 {
        return Err(RsaError::TooFewItems { needed: 2, got: n });
    }
    if ids.len() != n {
        return Err(RsaError::IdCountMismatch { ids: ids.len(), items: n });
    }
    let dim = embeddings[0].dim();
    let mut norms = Vec::with_capacity(n);
    for (e, id) in embeddings.iter().zip(ids) {
        if e.dim() != dim {
            return Err(RsaError::DimensionMismatch {
                id: id.clone(),
                expected: dim,
                got: e.dim(),
            });
        }
        let sq = dot(e.values(), e.values());
        if sq == 0.0 {
            return Err(RsaError::ZeroNorm(id.clone()));
        }
        norms.push(sq);
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| {
                    let c = cosine_parts(dot(embeddings[i].values(), embeddings[j].values()), norms[i], norms[j]);
                    (1.0 - c).clamp(0.0, 2.0)
                })
                .collect()
        })
        .collect();
    let mut values = vec![0.0; n * n];
    for (i, row) in rows.into_iter().enumerate() {
        for (k, v) in row.into_iter().enumerate() {
            let j = i + 1 + k;
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    Ok(Rdm {
        n,
        values,
        item_ids: ids.to_vec(),
        category_of: None,
    })
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation between the strict upper triangles.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, RsaError> {
    pearson(&average_ranks(x), &average_ranks(y)).ok_or(RsaError::ConstantRanks)
}

/// Spearman ρ between two RDMs over the same items in the same order.
pub fn compare_rdms(a: &Rdm, b: &Rdm) -> Result<f64, RsaError> {
    if a.item_ids != b.item_ids {
        return Err(RsaError::MismatchedIds);
    }
    if a.n < 3 {
        return Err(RsaError::TooFewItems { needed: 3, got: a.n });
    }
    spearman(&a.upper_triangle(), &b.upper_triangle())
}

/// Mean between-category minus mean within-category dissimilarity.
/// Positive values indicate categorical clustering.
pub fn cluster_index(rdm: &Rdm) -> Result<f64, RsaError> {
    let cats = rdm.category_of.as_ref().ok_or_else(|| RsaError::MissingCategory(rdm.item_ids[0].clone()))?;
    let labels: Vec<&String> = rdm
        .item_ids
        .iter()
        .map(|id| cats.get(id).ok_or_else(|| RsaError::MissingCategory(id.clone())))
        .collect::<Result<_, _>>()?;
    let distinct: BTreeSet<&String> = labels.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(RsaError::TooFewCategories(distinct.len()));
    }
    let (mut within, mut n_within, mut between, mut n_between) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..rdm.n {
        for j in i + 1..rdm.n {
            let v = rdm.get(i, j);
            if labels[i] == labels[j] {
                within += v;
                n_within += 1;
            } else {
                between += v;
                n_between += 1;
            }
        }
    }
    if n_within == 0 {
        return Err(RsaError::NoWithinPairs);
    }
    Ok(between / n_between as f64 - within / n_within as f64)
}

/// Mean of the strict upper triangle.
pub fn mean_offdiag(rdm: &Rdm) -> f64 {
    let upper = rdm.upper_triangle();
    upper.iter().sum::<f64>() / upper.len() as f64
}

/// Attach categories from an id → category map, keeping only listed ids.
pub fn categories_for(ids: &[String], lookup: &HashMap<String, String>) -> BTreeMap<String, String> {
    ids.iter()
        .filter_map(|id| lookup.get(id).map(|c| (id.clone(), c.clone())))
        .collect()
}
