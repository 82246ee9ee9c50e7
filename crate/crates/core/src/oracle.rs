//! Simulated example and labeling oracles with known ground truth.
//!
//! An [`OracleSpec`] fixes the marginal over points and the conditional
//! probability `eta(x) = P(Y = +1 | X = x)`. An [`Oracle`] instance owns two
//! seeded random streams (examples, labels) and counts every label query.

use std::collections::HashMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::class::{grid, Classifier, HypothesisClass};
use crate::error::{Error, Result};
use crate::hypothesis::{HypothesisSet, Label, UnlabeledPool};

/// Configuration form of a marginal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MarginalSpec {
    Uniform { lo: f64, hi: f64 },
    Grid { lo: f64, hi: f64, count: usize },
    Gaussian { dim: usize },
    Pool { path: String, weights: Option<Vec<f64>> },
}

/// Configuration form of a label model. `truth` indexes the hypothesis class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum LabelSpec {
    Realizable { truth: usize },
    Flip { truth: usize, rate: f64 },
    Tsybakov { truth: usize, c: f64, kappa: f64 },
    Table { eta: Vec<f64> },
}

#[derive(Debug, Clone)]
pub enum Marginal {
    UniformInterval { lo: f64, hi: f64 },
    /// Isotropic standard Gaussian in `R^dim`.
    Gaussian { dim: usize },
    /// Finite pool with normalized weights.
    Finite { pool: UnlabeledPool, weights: Vec<f64>, sampler: WeightedIndex<f64> },
}

impl Marginal {
    pub fn finite(pool: UnlabeledPool, weights: Option<Vec<f64>>) -> Result<Self> {
        let w = weights.unwrap_or_else(|| vec![1.0; pool.len()]);
        if w.len() != pool.len() {
            return Err(Error::DimensionMismatch { expected: pool.len(), found: w.len() });
        }
        let sampler = WeightedIndex::new(&w)
            .map_err(|e| Error::InvalidParameter(format!("pool weights: {e}")))?;
        let total: f64 = w.iter().sum();
        let weights = w.iter().map(|v| v / total).collect();
        Ok(Marginal::Finite { pool, weights, sampler })
    }

    pub fn uniform_grid(lo: f64, hi: f64, count: usize) -> Result<Self> {
        Self::finite(UnlabeledPool::from_scalars(grid(lo, hi, count)?), None)
    }

    pub fn dim(&self) -> usize {
        match self {
            Marginal::UniformInterval { .. } => 1,
            Marginal::Gaussian { dim } => *dim,
            Marginal::Finite { pool, .. } => pool.dim(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum LabelModel {
    Deterministic { truth: Classifier },
    /// Labels of `truth` flipped independently with probability `rate`.
    Flip { truth: Classifier, rate: f64 },
    /// `eta(x) = 1/2 + sign(m)/2 * min(1, c |m|^(kappa-1))` with `m` the
    /// margin of `x` with respect to `truth`.
    Tsybakov { truth: Classifier, c: f64, kappa: f64 },
    /// Explicit `eta` for the points of a finite pool.
    Table { eta: Vec<f64>, lookup: HashMap<Vec<u64>, usize> },
}

fn point_key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

impl LabelModel {
    pub fn table(pool: &UnlabeledPool, eta: Vec<f64>) -> Result<Self> {
        if eta.len() != pool.len() {
            return Err(Error::DimensionMismatch { expected: pool.len(), found: eta.len() });
        }
        let mut lookup = HashMap::new();
        for (i, x) in pool.iter().enumerate() {
            if let Some(&j) = lookup.get(&point_key(x)) {
                if eta[j] != eta[i] {
                    return Err(Error::InvalidParameter(format!(
                        "duplicate point {x:?} has conflicting eta values"
                    )));
                }
            } else {
                lookup.insert(point_key(x), i);
            }
        }
        Ok(LabelModel::Table { eta, lookup })
    }

    pub fn truth(&self) -> Option<&Classifier> {
        match self {
            LabelModel::Deterministic { truth }
            | LabelModel::Flip { truth, .. }
            | LabelModel::Tsybakov { truth, .. } => Some(truth),
            LabelModel::Table { .. } => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleSpec {
    pub marginal: Marginal,
    pub labels: LabelModel,
}

impl OracleSpec {
    pub fn new(marginal: Marginal, labels: LabelModel) -> Result<Self> {
        match &labels {
            LabelModel::Flip { rate, .. } if !(0.0..=0.5).contains(rate) => {
                return Err(Error::InvalidParameter(format!("flip rate {rate} outside [0, 1/2]")));
            }
            LabelModel::Tsybakov { c, kappa, .. } if !(*c > 0.0 && *kappa >= 1.0) => {
                return Err(Error::InvalidParameter(format!(
                    "Tsybakov model needs c > 0 and kappa >= 1, got c={c}, kappa={kappa}"
                )));
            }
            LabelModel::Table { eta, .. } => {
                if !matches!(marginal, Marginal::Finite { .. }) {
                    return Err(Error::InvalidParameter(
                        "an eta table requires a finite pool marginal".into(),
                    ));
                }
                if let Some(e) = eta.iter().find(|e| !(0.0..=1.0).contains(*e)) {
                    return Err(Error::InvalidParameter(format!("eta {e} outside [0, 1]")));
                }
            }
            _ => {}
        }
        Ok(Self { marginal, labels })
    }

    /// Builds a spec from configuration; `truth` indexes `class`.
    pub fn from_config(
        marginal: &MarginalSpec,
        labels: &LabelSpec,
        class: &HypothesisClass,
        base_dir: &std::path::Path,
    ) -> Result<Self> {
        let marginal = match marginal {
            MarginalSpec::Uniform { lo, hi } => {
                if !(lo < hi) {
                    return Err(Error::InvalidParameter(format!("uniform needs lo < hi, got {lo}, {hi}")));
                }
                Marginal::UniformInterval { lo: *lo, hi: *hi }
            }
            MarginalSpec::Grid { lo, hi, count } => Marginal::uniform_grid(*lo, *hi, *count)?,
            MarginalSpec::Gaussian { dim } => {
                if *dim == 0 {
                    return Err(Error::InvalidParameter("gaussian dim must be positive".into()));
                }
                Marginal::Gaussian { dim: *dim }
            }
            MarginalSpec::Pool { path, weights } => {
                let text = std::fs::read_to_string(base_dir.join(path))
                    .map_err(|e| Error::Parse(format!("{path}: {e}")))?;
                Marginal::finite(UnlabeledPool::parse(&text)?, weights.clone())?
            }
        };
        let truth = |h: usize| {
            if h < class.len() {
                Ok(class.classifier(h).clone())
            } else {
                Err(Error::UnknownHypothesis(h))
            }
        };
        let labels = match labels {
            LabelSpec::Realizable { truth: h } => LabelModel::Deterministic { truth: truth(*h)? },
            LabelSpec::Flip { truth: h, rate } => LabelModel::Flip { truth: truth(*h)?, rate: *rate },
            LabelSpec::Tsybakov { truth: h, c, kappa } => {
                LabelModel::Tsybakov { truth: truth(*h)?, c: *c, kappa: *kappa }
            }
            LabelSpec::Table { eta } => match &marginal {
                Marginal::Finite { pool, .. } => LabelModel::table(pool, eta.clone())?,
                _ => {
                    return Err(Error::InvalidParameter(
                        "an eta table requires a finite pool marginal".into(),
                    ))
                }
            },
        };
        Self::new(marginal, labels)
    }

    /// `P(Y = +1 | X = x)`.
    pub fn eta(&self, x: &[f64]) -> f64 {
        match &self.labels {
            LabelModel::Deterministic { truth } => f64::from(u8::from(truth.predict(x) == 1)),
            LabelModel::Flip { truth, rate } => {
                if truth.predict(x) == 1 {
                    1.0 - rate
                } else {
                    *rate
                }
            }
            LabelModel::Tsybakov { truth, c, kappa } => {
                let m = truth.margin(x);
                let sign = f64::from(truth.predict(x));
                0.5 + 0.5 * sign * (c * m.abs().powf(kappa - 1.0)).min(1.0)
            }
            LabelModel::Table { eta, lookup } => {
                lookup.get(&point_key(x)).map_or(0.5, |&i| eta[i])
            }
        }
    }

    pub fn is_realizable(&self) -> bool {
        matches!(self.labels, LabelModel::Deterministic { .. })
    }

    /// Expected error of each row of `v` under the joint distribution with
    /// marginal `weights` over `pool` and this spec's conditional.
    pub fn pool_errors(&self, v: &HypothesisSet, pool: &UnlabeledPool, weights: &[f64]) -> Result<Vec<f64>> {
        if pool.len() != v.n_points() || weights.len() != v.n_points() {
            return Err(Error::DimensionMismatch { expected: v.n_points(), found: weights.len() });
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidParameter("weights must have positive sum".into()));
        }
        let etas: Vec<f64> = pool.iter().map(|x| self.eta(x)).collect();
        Ok((0..v.n_hypotheses())
            .map(|h| {
                let row = v.row(h);
                let mass: f64 = (0..v.n_points())
                    .map(|i| weights[i] * if row[i] == 1 { 1.0 - etas[i] } else { etas[i] })
                    .sum();
                mass / total
            })
            .collect())
    }
}

/// How a table of true errors was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorMethod {
    Exact,
    ClosedForm,
    MonteCarlo { points: usize },
}

/// True error of every hypothesis in a class under an oracle spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub errors: Vec<f64>,
    pub stderr: Vec<f64>,
    pub method: ErrorMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    pub value: f64,
    pub stderr: f64,
}

/// Disagreement mass of two classifiers under the marginal, when it has a
/// closed form.
fn closed_form_disagreement(marginal: &Marginal, a: &Classifier, b: &Classifier) -> Option<f64> {
    match (marginal, a, b) {
        (Marginal::UniformInterval { lo, hi }, Classifier::Threshold { t: s }, Classifier::Threshold { t }) => {
            let clamp = |v: f64| v.clamp(*lo, *hi);
            Some((clamp(*s) - clamp(*t)).abs() / (hi - lo))
        }
        (Marginal::Gaussian { .. }, Classifier::Halfspace { w: u }, Classifier::Halfspace { w: v }) => {
            let dot: f64 = u.iter().zip(v).map(|(p, q)| p * q).sum();
            let nu: f64 = u.iter().map(|p| p * p).sum::<f64>().sqrt();
            let nv: f64 = v.iter().map(|p| p * p).sum::<f64>().sqrt();
            Some((dot / (nu * nv)).clamp(-1.0, 1.0).acos() / std::f64::consts::PI)
        }
        _ => None,
    }
}

impl ErrorTable {
    /// Exact on finite pools, closed form for thresholds under a uniform
    /// marginal and homogeneous halfspaces under a Gaussian marginal (with
    /// deterministic or flipped labels), Monte Carlo over `mc_points` seeded
    /// reference points otherwise.
    pub fn compute(spec: &OracleSpec, class: &HypothesisClass, mc_points: usize, seed: u64) -> Result<Self> {
        if let Marginal::Finite { pool, weights, .. } = &spec.marginal {
            let v = class.materialize(pool)?;
            let errors = spec.pool_errors(&v, pool, weights)?;
            let stderr = vec![0.0; errors.len()];
            return Ok(Self { errors, stderr, method: ErrorMethod::Exact });
        }
        let flip = match &spec.labels {
            LabelModel::Deterministic { truth } => Some((truth, 0.0)),
            LabelModel::Flip { truth, rate } => Some((truth, *rate)),
            _ => None,
        };
        if let Some((truth, nu)) = flip {
            let closed: Option<Vec<f64>> = class
                .classifiers()
                .iter()
                .map(|c| closed_form_disagreement(&spec.marginal, c, truth).map(|rho| nu + (1.0 - 2.0 * nu) * rho))
                .collect();
            if let Some(errors) = closed {
                let stderr = vec![0.0; errors.len()];
                return Ok(Self { errors, stderr, method: ErrorMethod::ClosedForm });
            }
        }
        if mc_points < 2 {
            return Err(Error::InvalidParameter("Monte Carlo needs at least 2 points".into()));
        }
        let mut oracle = Oracle::new(spec, seed ^ 0x5eed_e44_0000);
        let pool = oracle.draw_unlabeled(mc_points);
        let etas: Vec<f64> = pool.iter().map(|x| spec.eta(x)).collect();
        let n = mc_points as f64;
        let mut errors = Vec::with_capacity(class.len());
        let mut stderr = Vec::with_capacity(class.len());
        for c in class.classifiers() {
            let (mut s, mut s2) = (0.0, 0.0);
            for (x, &e) in pool.iter().zip(&etas) {
                let loss = if c.predict(x) == 1 { 1.0 - e } else { e };
                s += loss;
                s2 += loss * loss;
            }
            let mean = s / n;
            let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0);
            errors.push(mean);
            stderr.push((var / n).sqrt());
        }
        Ok(Self { errors, stderr, method: ErrorMethod::MonteCarlo { points: mc_points } })
    }

    /// Best error in the class, `nu*`.
    pub fn best_error(&self) -> f64 {
        self.errors.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Lowest-index minimizer of the true error.
    pub fn best_hypothesis(&self) -> usize {
        let best = self.best_error();
        self.errors.iter().position(|&e| e == best).unwrap_or(0)
    }

    pub fn error(&self, h: usize) -> ErrorEstimate {
        ErrorEstimate { value: self.errors[h], stderr: self.stderr[h] }
    }

    pub fn excess(&self, h: usize) -> ErrorEstimate {
        ErrorEstimate { value: self.errors[h] - self.best_error(), stderr: self.stderr[h] }
    }
}

/// `err_D(h) - nu*(D)` for hypothesis `h` of `class`.
pub fn true_excess_error(spec: &OracleSpec, class: &HypothesisClass, h: usize) -> Result<ErrorEstimate> {
    if h >= class.len() {
        return Err(Error::UnknownHypothesis(h));
    }
    Ok(ErrorTable::compute(spec, class, 200_000, 0)?.excess(h))
}

/// Smallest `C0` with `rho(h, h*) <= C0 (err(h) - err(h*))^(1/kappa)` for every
/// hypothesis, computed exactly on a finite-pool marginal. Infinite when some
/// hypothesis disagrees with `h*` but has no excess error.
pub fn tsybakov_constant(spec: &OracleSpec, class: &HypothesisClass, kappa: f64) -> Result<f64> {
    let Marginal::Finite { pool, weights, .. } = &spec.marginal else {
        return Err(Error::InvalidParameter("Tsybakov check needs a finite pool marginal".into()));
    };
    if kappa < 1.0 {
        return Err(Error::InvalidParameter(format!("kappa {kappa} < 1")));
    }
    let v = class.materialize(pool)?;
    let errors = spec.pool_errors(&v, pool, weights)?;
    let best = errors.iter().cloned().fold(f64::INFINITY, f64::min);
    let h_star = errors.iter().position(|&e| e == best).unwrap_or(0);
    let mut c0 = 0.0f64;
    for h in 0..v.n_hypotheses() {
        let rho: f64 = (0..v.n_points())
            .filter(|&i| v.predict(h, i) != v.predict(h_star, i))
            .map(|i| weights[i])
            .sum();
        if rho <= 1e-15 {
            continue;
        }
        let excess = errors[h] - best;
        if excess <= 1e-15 {
            return Ok(f64::INFINITY);
        }
        c0 = c0.max(rho / excess.powf(1.0 / kappa));
    }
    Ok(c0)
}

/// Example and labeling oracle with an audited label budget.
#[derive(Debug, Clone)]
pub struct Oracle<'a> {
    spec: &'a OracleSpec,
    examples: ChaCha8Rng,
    labels: ChaCha8Rng,
    budget: u64,
}

impl<'a> Oracle<'a> {
    pub fn new(spec: &'a OracleSpec, seed: u64) -> Self {
        let mut examples = ChaCha8Rng::seed_from_u64(seed);
        examples.set_stream(1);
        let mut labels = ChaCha8Rng::seed_from_u64(seed);
        labels.set_stream(2);
        Self { spec, examples, labels, budget: 0 }
    }

    pub fn spec(&self) -> &'a OracleSpec {
        self.spec
    }

    /// Labels requested so far.
    pub fn budget(&self) -> u64 {
        self.budget
    }

    /// `n` i.i.d. draws from the marginal; does not touch the budget.
    pub fn draw_unlabeled(&mut self, n: usize) -> UnlabeledPool {
        let rng = &mut self.examples;
        match &self.spec.marginal {
            Marginal::UniformInterval { lo, hi } => {
                UnlabeledPool::from_scalars((0..n).map(|_| rng.gen_range(*lo..*hi)).collect())
            }
            Marginal::Gaussian { dim } => {
                let coords = (0..n * dim).map(|_| StandardNormal.sample(rng)).collect();
                UnlabeledPool::new(*dim, coords).expect("dim is positive")
            }
            Marginal::Finite { pool, sampler, .. } => {
                let mut coords = Vec::with_capacity(n * pool.dim());
                for _ in 0..n {
                    coords.extend_from_slice(pool.point(sampler.sample(rng)));
                }
                UnlabeledPool::new(pool.dim(), coords).expect("dim is positive")
            }
        }
    }

    /// One label from the conditional at `x`; costs one unit of budget.
    pub fn query_label(&mut self, x: &[f64]) -> Label {
        self.budget += 1;
        let eta = self.spec.eta(x);
        if eta >= 1.0 {
            1
        } else if eta <= 0.0 {
            -1
        } else if self.labels.gen_bool(eta) {
            1
        } else {
            -1
        }
    }
}
