//! Built-in hypothesis classes and their materialization on a pool.
//!
//! A class is a list of concrete classifiers that can be evaluated on any
//! point, so each epoch's fresh pool can be turned into a [`HypothesisSet`].
//! The VC-dimension parameter defaults to that of the continuous class the
//! grid discretizes and may be overridden.

use std::path::Path;

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypothesis::{HypothesisSet, Label, UnlabeledPool};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Classifier {
    /// `+1` iff `x[0] >= t`.
    Threshold { t: f64 },
    /// `+1` iff `lo <= x[0] < hi`.
    Interval { lo: f64, hi: f64 },
    /// `+1` iff `<w, x> >= 0`.
    Halfspace { w: Vec<f64> },
    /// Explicit labeling of index-valued points: `row[x[0] as usize]`.
    Table { row: Vec<Label> },
}

impl Classifier {
    pub fn predict(&self, x: &[f64]) -> Label {
        let positive = match self {
            Classifier::Threshold { t } => x[0] >= *t,
            Classifier::Interval { lo, hi } => x[0] >= *lo && x[0] < *hi,
            Classifier::Halfspace { w } => dot(w, x) >= 0.0,
            Classifier::Table { row } => return row[x[0] as usize],
        };
        if positive {
            1
        } else {
            -1
        }
    }

    /// Signed distance to the decision boundary, positive on the `+1` side.
    pub fn margin(&self, x: &[f64]) -> f64 {
        match self {
            Classifier::Threshold { t } => x[0] - t,
            Classifier::Interval { lo, hi } => (x[0] - lo).min(hi - x[0]),
            Classifier::Halfspace { w } => dot(w, x) / dot(w, w).sqrt(),
            Classifier::Table { row } => f64::from(row[x[0] as usize]),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

fn default_lo() -> f64 {
    0.0
}

fn default_hi() -> f64 {
    1.0
}

/// Configuration form of a class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ClassSpec {
    Thresholds {
        count: usize,
        #[serde(default = "default_lo")]
        lo: f64,
        #[serde(default = "default_hi")]
        hi: f64,
        vc_dim: Option<usize>,
    },
    Intervals {
        count: usize,
        #[serde(default = "default_lo")]
        lo: f64,
        #[serde(default = "default_hi")]
        hi: f64,
        vc_dim: Option<usize>,
    },
    Linear {
        dim: usize,
        count: usize,
        #[serde(default)]
        seed: u64,
        vc_dim: Option<usize>,
    },
    Matrix {
        path: String,
        vc_dim: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisClass {
    classifiers: Vec<Classifier>,
    vc_dim: usize,
}

pub(crate) fn grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if count < 2 || !(lo < hi) {
        return Err(Error::InvalidParameter(format!(
            "grid needs count >= 2 and lo < hi, got count={count}, lo={lo}, hi={hi}"
        )));
    }
    let last = (count - 1) as f64;
    Ok((0..count).map(|k| lo + (hi - lo) * (k as f64 / last)).collect())
}

impl HypothesisClass {
    pub fn new(classifiers: Vec<Classifier>, vc_dim: usize) -> Result<Self> {
        if classifiers.is_empty() {
            return Err(Error::EmptyHypothesisSet);
        }
        if vc_dim == 0 {
            return Err(Error::InvalidParameter("vc_dim must be at least 1".into()));
        }
        Ok(Self { classifiers, vc_dim })
    }

    /// `count` thresholds evenly spaced on `[lo, hi]`, endpoints included.
    pub fn thresholds(lo: f64, hi: f64, count: usize) -> Result<Self> {
        let ts = grid(lo, hi, count)?;
        Self::new(ts.into_iter().map(|t| Classifier::Threshold { t }).collect(), 1)
    }

    /// All intervals `[a, b)` with `a < b` drawn from a `count`-point grid.
    pub fn intervals(lo: f64, hi: f64, count: usize) -> Result<Self> {
        let g = grid(lo, hi, count)?;
        let mut cs = Vec::with_capacity(count * (count - 1) / 2);
        for (i, &a) in g.iter().enumerate() {
            for &b in &g[i + 1..] {
                cs.push(Classifier::Interval { lo: a, hi: b });
            }
        }
        Self::new(cs, 2)
    }

    /// Homogeneous linear classifiers in `R^dim`.
    ///
    /// In two dimensions the normals are `count` evenly spaced angles
    /// starting at angle 0. In higher dimensions they are `count` seeded
    /// draws from the uniform distribution on the sphere.
    pub fn linear(dim: usize, count: usize, seed: u64) -> Result<Self> {
        if dim < 2 || count == 0 {
            return Err(Error::InvalidParameter(format!(
                "linear class needs dim >= 2 and count >= 1, got dim={dim}, count={count}"
            )));
        }
        let normals: Vec<Vec<f64>> = if dim == 2 {
            (0..count)
                .map(|k| {
                    let a = std::f64::consts::TAU * k as f64 / count as f64;
                    vec![a.cos(), a.sin()]
                })
                .collect()
        } else {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            (0..count)
                .map(|_| {
                    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                    let n = dot(&v, &v).sqrt();
                    v.into_iter().map(|c| c / n).collect()
                })
                .collect()
        };
        Self::new(normals.into_iter().map(|w| Classifier::Halfspace { w }).collect(), dim)
    }

    /// An explicit ±1 matrix; evaluate it on index-valued points `0..m`.
    pub fn from_matrix(set: &HypothesisSet) -> Result<Self> {
        let cs = (0..set.n_hypotheses())
            .map(|h| Classifier::Table { row: set.row(h).to_vec() })
            .collect();
        Self::new(cs, set.vc_dim())
    }

    /// Builds a class from its configuration. Relative matrix paths resolve
    /// against `base_dir`.
    pub fn from_spec(spec: &ClassSpec, base_dir: &Path) -> Result<Self> {
        let (class, vc) = match spec {
            ClassSpec::Thresholds { count, lo, hi, vc_dim } => {
                (Self::thresholds(*lo, *hi, *count)?, *vc_dim)
            }
            ClassSpec::Intervals { count, lo, hi, vc_dim } => {
                (Self::intervals(*lo, *hi, *count)?, *vc_dim)
            }
            ClassSpec::Linear { dim, count, seed, vc_dim } => {
                (Self::linear(*dim, *count, *seed)?, *vc_dim)
            }
            ClassSpec::Matrix { path, vc_dim } => {
                let text = std::fs::read_to_string(base_dir.join(path))
                    .map_err(|e| Error::Parse(format!("{path}: {e}")))?;
                let set = HypothesisSet::parse_matrix(&text, vc_dim.unwrap_or(1))?;
                (Self::from_matrix(&set)?, *vc_dim)
            }
        };
        match vc {
            Some(d) => class.with_vc_dim(d),
            None => Ok(class),
        }
    }

    pub fn with_vc_dim(mut self, vc_dim: usize) -> Result<Self> {
        if vc_dim == 0 {
            return Err(Error::InvalidParameter("vc_dim must be at least 1".into()));
        }
        self.vc_dim = vc_dim;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.classifiers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classifiers.is_empty()
    }

    pub fn vc_dim(&self) -> usize {
        self.vc_dim
    }

    pub fn classifier(&self, h: usize) -> &Classifier {
        &self.classifiers[h]
    }

    pub fn classifiers(&self) -> &[Classifier] {
        &self.classifiers
    }

    /// Prediction matrix of every hypothesis on `pool`.
    pub fn materialize(&self, pool: &UnlabeledPool) -> Result<HypothesisSet> {
        let ids: Vec<usize> = (0..self.len()).collect();
        self.materialize_subset(pool, &ids)
    }

    /// Prediction matrix of the hypotheses `ids` on `pool`; row `k` of the
    /// result is hypothesis `ids[k]`.
    pub fn materialize_subset(&self, pool: &UnlabeledPool, ids: &[usize]) -> Result<HypothesisSet> {
        if let Some(&h) = ids.iter().find(|&&h| h >= self.len()) {
            return Err(Error::UnknownHypothesis(h));
        }
        let m = pool.len();
        let mut predictions = Vec::with_capacity(ids.len() * m);
        for &h in ids {
            let c = &self.classifiers[h];
            if let Classifier::Table { row } = c {
                if let Some(x) = pool.iter().find(|x| x[0] < 0.0 || x[0] as usize >= row.len()) {
                    return Err(Error::InvalidParameter(format!(
                        "point {} is not an index into a {}-column matrix",
                        x[0],
                        row.len()
                    )));
                }
            }
            predictions.extend(pool.iter().map(|x| c.predict(x)));
        }
        HypothesisSet::from_flat(ids.len(), m, predictions, self.vc_dim, ids.to_vec())
    }
}
