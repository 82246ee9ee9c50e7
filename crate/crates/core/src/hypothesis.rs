//! Finite hypothesis sets stored as ±1 prediction matrices over a pool.
//!
//! Every operation here is index based: rows are hypotheses, columns are pool
//! examples, and a labeled sample refers to columns by index. Raw points never
//! enter this module, which is what lets pools carry duplicate points.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A binary label, always `-1` or `+1`.
pub type Label = i8;

/// Feature vectors with stable indices `0..len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnlabeledPool {
    dim: usize,
    coords: Vec<f64>,
}

impl UnlabeledPool {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("pool dimension must be positive".into()));
        }
        if coords.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim * (coords.len() / dim + 1),
                found: coords.len(),
            });
        }
        Ok(Self { dim, coords })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map_or(1, Vec::len);
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: p.len() });
            }
            coords.extend_from_slice(p);
        }
        Self::new(dim, coords)
    }

    /// One-dimensional pool.
    pub fn from_scalars(xs: Vec<f64>) -> Self {
        Self { dim: 1, coords: xs }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    /// Parses whitespace-separated numbers, one point per line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let p = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse(format!("line {}: non-finite coordinate", lineno + 1)));
            }
            points.push(p);
        }
        if points.is_empty() {
            return Err(Error::Parse("pool file has no points".into()));
        }
        Self::from_points(&points)
    }
}

/// Labeled examples referring to pool columns by index.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    items: Vec<(usize, Label)>,
}

impl LabeledSample {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_items(items: Vec<(usize, Label)>) -> Result<Self> {
        if let Some(&(_, y)) = items.iter().find(|(_, y)| *y != 1 && *y != -1) {
            return Err(Error::InvalidParameter(format!("label {y} is not ±1")));
        }
        Ok(Self { items })
    }

    pub fn push(&mut self, index: usize, label: Label) {
        debug_assert!(label == 1 || label == -1);
        self.items.push((index, label));
    }

    pub fn items(&self) -> &[(usize, Label)] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// A finite hypothesis set: the ±1 predictions of each hypothesis on a pool,
/// the VC-dimension parameter used by the sample-size formulas, and the
/// ordered set of rows that are still active.
///
/// `ids` maps rows back to hypothesis indices of the class the set was
/// materialized from; for sets built directly from a matrix it is `0..H`.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisSet {
    predictions: Vec<Label>,
    n_rows: usize,
    n_cols: usize,
    vc_dim: usize,
    ids: Vec<usize>,
    active: Vec<usize>,
}

impl HypothesisSet {
    pub fn new(rows: Vec<Vec<Label>>, vc_dim: usize) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        let n_rows = rows.len();
        let mut predictions = Vec::with_capacity(n_rows * n_cols);
        for row in &rows {
            if row.len() != n_cols {
                return Err(Error::DimensionMismatch { expected: n_cols, found: row.len() });
            }
            predictions.extend_from_slice(row);
        }
        Self::from_flat(n_rows, n_cols, predictions, vc_dim, (0..n_rows).collect())
    }

    /// Builds a set from a row-major matrix. `ids[row]` names each row.
    pub fn from_flat(
        n_rows: usize,
        n_cols: usize,
        predictions: Vec<Label>,
        vc_dim: usize,
        ids: Vec<usize>,
    ) -> Result<Self> {
        if n_rows == 0 {
            return Err(Error::EmptyHypothesisSet);
        }
        if vc_dim == 0 {
            return Err(Error::InvalidParameter("vc_dim must be at least 1".into()));
        }
        if predictions.len() != n_rows * n_cols {
            return Err(Error::DimensionMismatch {
                expected: n_rows * n_cols,
                found: predictions.len(),
            });
        }
        if ids.len() != n_rows {
            return Err(Error::DimensionMismatch { expected: n_rows, found: ids.len() });
        }
        if let Some(v) = predictions.iter().find(|&&v| v != 1 && v != -1) {
            return Err(Error::InvalidParameter(format!("prediction {v} is not ±1")));
        }
        Ok(Self { predictions, n_rows, n_cols, vc_dim, ids, active: (0..n_rows).collect() })
    }

    /// Parses one hypothesis per line, whitespace-separated `+1`/`1`/`-1`.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn parse_matrix(text: &str, vc_dim: usize) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|tok| match tok {
                    "1" | "+1" | "+" => Ok(1),
                    "-1" | "-" => Ok(-1),
                    other => Err(Error::Parse(format!(
                        "line {}: expected ±1, found {other:?}",
                        lineno + 1
                    ))),
                })
                .collect::<Result<Vec<Label>>>()?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Parse("matrix has no rows".into()));
        }
        Self::new(rows, vc_dim)
    }

    pub fn n_hypotheses(&self) -> usize {
        self.n_rows
    }

    pub fn n_points(&self) -> usize {
        self.n_cols
    }

    pub fn vc_dim(&self) -> usize {
        self.vc_dim
    }

    pub fn with_vc_dim(mut self, vc_dim: usize) -> Result<Self> {
        if vc_dim == 0 {
            return Err(Error::InvalidParameter("vc_dim must be at least 1".into()));
        }
        self.vc_dim = vc_dim;
        Ok(self)
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    /// Class-level identifier of a row.
    pub fn id(&self, row: usize) -> usize {
        self.ids[row]
    }

    pub fn active_ids(&self) -> Vec<usize> {
        self.active.iter().map(|&h| self.ids[h]).collect()
    }

    pub fn is_active(&self, h: usize) -> bool {
        self.active.binary_search(&h).is_ok()
    }

    pub fn row(&self, h: usize) -> &[Label] {
        &self.predictions[h * self.n_cols..(h + 1) * self.n_cols]
    }

    pub fn predict(&self, h: usize, i: usize) -> Label {
        self.predictions[h * self.n_cols + i]
    }

    /// Restricts the active set. Indices must be a subset of the rows; they
    /// are sorted and deduplicated.
    pub fn with_active(&self, mut active: Vec<usize>) -> Result<Self> {
        active.sort_unstable();
        active.dedup();
        if let Some(&h) = active.iter().find(|&&h| h >= self.n_rows) {
            return Err(Error::UnknownHypothesis(h));
        }
        Ok(Self { active, ..self.clone() })
    }

    fn check_active(&self, h: usize) -> Result<()> {
        if self.is_active(h) {
            Ok(())
        } else {
            Err(Error::UnknownHypothesis(h))
        }
    }

    fn check_column(&self, i: usize) -> Result<()> {
        if i < self.n_cols {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.n_cols, found: i + 1 })
        }
    }

    /// Fraction of sample items whose label differs from `h`'s prediction.
    pub fn empirical_error(&self, h: usize, sample: &LabeledSample) -> Result<f64> {
        if sample.is_empty() {
            return Err(Error::EmptySample);
        }
        self.check_active(h)?;
        let row = self.row(h);
        let mut mistakes = 0usize;
        for &(i, y) in sample.items() {
            self.check_column(i)?;
            mistakes += usize::from(row[i] != y);
        }
        Ok(mistakes as f64 / sample.len() as f64)
    }

    /// Fraction of `idx` on which rows `h1` and `h2` disagree.
    pub fn empirical_disagreement(&self, h1: usize, h2: usize, idx: &[usize]) -> Result<f64> {
        if idx.is_empty() {
            return Err(Error::EmptySample);
        }
        if h1 >= self.n_rows {
            return Err(Error::UnknownHypothesis(h1));
        }
        if h2 >= self.n_rows {
            return Err(Error::UnknownHypothesis(h2));
        }
        let (a, b) = (self.row(h1), self.row(h2));
        let mut count = 0usize;
        for &i in idx {
            self.check_column(i)?;
            count += usize::from(a[i] != b[i]);
        }
        Ok(count as f64 / idx.len() as f64)
    }

    /// Empirical risk minimizer over the active rows; ties go to the lowest row.
    pub fn erm(&self, sample: &LabeledSample) -> Result<usize> {
        if self.active.is_empty() {
            return Err(Error::EmptyHypothesisSet);
        }
        if sample.is_empty() {
            return Err(Error::EmptySample);
        }
        let mut best = (usize::MAX, self.active[0]);
        for &h in &self.active {
            let row = self.row(h);
            let mut mistakes = 0usize;
            for &(i, y) in sample.items() {
                self.check_column(i)?;
                mistakes += usize::from(row[i] != y);
            }
            if mistakes < best.0 {
                best = (mistakes, h);
            }
        }
        Ok(best.1)
    }

    /// Keeps the active rows that make no mistake on `sample`.
    pub fn version_space_update(&self, sample: &LabeledSample) -> Result<Self> {
        for &(i, _) in sample.items() {
            self.check_column(i)?;
        }
        let active = self
            .active
            .iter()
            .copied()
            .filter(|&h| {
                let row = self.row(h);
                sample.items().iter().all(|&(i, y)| row[i] == y)
            })
            .collect();
        Ok(Self { active, ..self.clone() })
    }

    /// `mask[k]` is true iff two active rows differ at column `idx[k]`.
    pub fn disagreement_region_mask(&self, idx: &[usize]) -> Result<Vec<bool>> {
        let Some((&first, rest)) = self.active.split_first() else {
            return Err(Error::EmptyHypothesisSet);
        };
        let base = self.row(first);
        let mut mask = vec![false; idx.len()];
        for &i in idx {
            self.check_column(i)?;
        }
        for &h in rest {
            let row = self.row(h);
            for (m, &i) in mask.iter_mut().zip(idx) {
                *m |= row[i] != base[i];
            }
        }
        Ok(mask)
    }

    /// Active rows within empirical disagreement `r` of `h_star` on `idx`.
    pub fn disagreement_ball(&self, h_star: usize, r: f64, idx: &[usize]) -> Result<Self> {
        if idx.is_empty() {
            return Err(Error::EmptySample);
        }
        if h_star >= self.n_rows {
            return Err(Error::UnknownHypothesis(h_star));
        }
        let mut active = Vec::new();
        for &h in &self.active {
            if self.empirical_disagreement(h, h_star, idx)? <= r {
                active.push(h);
            }
        }
        Ok(Self { active, ..self.clone() })
    }

    /// Groups active rows by their restriction to `idx`. Returns one
    /// `(representative, multiplicity)` per distinct labeling, in order of
    /// first appearance; the representative is the lowest row in its group.
    pub fn dedupe_by_dichotomy(&self, idx: &[usize]) -> Result<Vec<(usize, usize)>> {
        for &i in idx {
            self.check_column(i)?;
        }
        let mut groups: Vec<(usize, usize)> = Vec::new();
        let mut seen: HashMap<Vec<Label>, usize> = HashMap::new();
        for &h in &self.active {
            let row = self.row(h);
            let key: Vec<Label> = idx.iter().map(|&i| row[i]).collect();
            match seen.get(&key) {
                Some(&g) => groups[g].1 += 1,
                None => {
                    seen.insert(key, groups.len());
                    groups.push((h, 1));
                }
            }
        }
        Ok(groups)
    }

    /// Column indices `0..n_points`.
    pub fn all_columns(&self) -> Vec<usize> {
        (0..self.n_cols).collect()
    }
}
