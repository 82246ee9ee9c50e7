//! Confidence-rated predictors over a finite hypothesis set.
//!
//! The LP predictor chooses per-example probabilities `(xi, zeta, gamma)` of
//! predicting `+1`, `-1` or abstaining so that its expected disagreement with
//! every hypothesis in the set is at most `eta`, and total abstention is
//! minimal. The baseline abstains on the whole disagreement region.
//!
//! All error quantities are closed-form expectations over the predictor's
//! randomization.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypothesis::{HypothesisSet, Label};
use crate::lp::{solve_lp, LpProblem, LpStatus, DEFAULT_MAX_ITERS, DEFAULT_TOL};

/// Largest LP round-off that may be silently clamped away.
pub const CLAMP_LIMIT: f64 = 1e-7;

/// Per-example prediction probabilities of a confidence-rated predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstentionProfile {
    xi: Vec<f64>,
    zeta: Vec<f64>,
    gamma: Vec<f64>,
    phi: f64,
}

impl AbstentionProfile {
    pub fn new(xi: Vec<f64>, zeta: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        let m = xi.len();
        if zeta.len() != m || gamma.len() != m {
            return Err(Error::DimensionMismatch { expected: m, found: zeta.len().max(gamma.len()) });
        }
        for i in 0..m {
            let (a, b, c) = (xi[i], zeta[i], gamma[i]);
            let ok = a >= -1e-9 && b >= -1e-9 && c >= -1e-9 && (a + b + c - 1.0).abs() <= 1e-9;
            if !ok {
                return Err(Error::InvalidParameter(format!(
                    "probabilities ({a}, {b}, {c}) at index {i} do not form a distribution"
                )));
            }
        }
        let phi = if m == 0 { 0.0 } else { gamma.iter().sum::<f64>() / m as f64 };
        Ok(Self { xi, zeta, gamma, phi })
    }

    pub fn all_abstain(m: usize) -> Self {
        Self { xi: vec![0.0; m], zeta: vec![0.0; m], gamma: vec![1.0; m], phi: 1.0 }
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    pub fn zeta(&self) -> &[f64] {
        &self.zeta
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// Mean abstention probability over the pool.
    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn coverage(&self) -> f64 {
        1.0 - self.phi
    }

    /// Expected rate of non-abstaining mistakes against `labels`.
    pub fn abstaining_error(&self, labels: &[Label]) -> Result<f64> {
        if labels.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), found: labels.len() });
        }
        if labels.is_empty() {
            return Err(Error::EmptySample);
        }
        let mass: f64 = labels
            .iter()
            .enumerate()
            .map(|(i, &y)| if y == 1 { self.zeta[i] } else { self.xi[i] })
            .sum();
        Ok(mass / labels.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,xi,zeta,gamma\n");
        for i in 0..self.len() {
            let _ = writeln!(out, "{i},{},{},{}", self.xi[i], self.zeta[i], self.gamma[i]);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows: Vec<(usize, f64, f64, f64)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("index") {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || Error::Parse(format!("profile line {}: {line:?}", lineno + 1));
            if f.len() != 4 {
                return Err(bad());
            }
            let idx = f[0].parse().map_err(|_| bad())?;
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            rows.push((idx, num(f[1])?, num(f[2])?, num(f[3])?));
        }
        rows.sort_by_key(|r| r.0);
        if rows.iter().enumerate().any(|(k, r)| r.0 != k) {
            return Err(Error::Parse("profile indices must be exactly 0..m".into()));
        }
        Self::new(
            rows.iter().map(|r| r.1).collect(),
            rows.iter().map(|r| r.2).collect(),
            rows.iter().map(|r| r.3).collect(),
        )
    }
}

/// The LP of the confidence-rated predictor with `gamma` eliminated.
///
/// Variables are `[xi_0..xi_{m-1}, zeta_0..zeta_{m-1}]`. The first
/// `representatives.len()` rows of `lp.a_ub` are the error constraints, one
/// per distinct labeling of the pool; the remaining `m` rows are
/// `xi_i + zeta_i <= 1`. The optimal objective is the total abstention mass.
#[derive(Debug, Clone, PartialEq)]
pub struct CrpProgram {
    pub lp: LpProblem,
    pub representatives: Vec<(usize, usize)>,
    pub n_points: usize,
}

impl CrpProgram {
    pub fn dichotomy_constraints(&self) -> usize {
        self.representatives.len()
    }

    /// Recovers a profile from an LP solution vector.
    pub fn profile(&self, x: &[f64]) -> Result<AbstentionProfile> {
        let m = self.n_points;
        clamp_profile(x[..m].to_vec(), x[m..2 * m].to_vec())
    }
}

fn check_budget(eta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&eta) {
        Ok(())
    } else {
        Err(Error::InvalidBudget(eta))
    }
}

/// One `<= eta * m` row per distinct labeling of the pool by the active set.
pub fn build_crp_lp(v: &HypothesisSet, eta: f64) -> Result<CrpProgram> {
    check_budget(eta)?;
    if v.active().is_empty() {
        return Err(Error::EmptyHypothesisSet);
    }
    let m = v.n_points();
    if m == 0 {
        return Err(Error::EmptySample);
    }
    let representatives = v.dedupe_by_dichotomy(&v.all_columns())?;
    let mut lp = LpProblem::new(vec![-1.0; 2 * m]);
    lp.objective_offset = m as f64;
    for &(h, _) in &representatives {
        let mut row = vec![0.0; 2 * m];
        for (i, &y) in v.row(h).iter().enumerate() {
            if y == 1 {
                row[m + i] = 1.0;
            } else {
                row[i] = 1.0;
            }
        }
        lp.add_le(row, eta * m as f64);
    }
    for i in 0..m {
        let mut row = vec![0.0; 2 * m];
        row[i] = 1.0;
        row[m + i] = 1.0;
        lp.add_le(row, 1.0);
    }
    Ok(CrpProgram { lp, representatives, n_points: m })
}

/// Clamps LP round-off and rebuilds `gamma = 1 - xi - zeta`.
fn clamp_profile(mut xi: Vec<f64>, mut zeta: Vec<f64>) -> Result<AbstentionProfile> {
    let mut worst = 0.0f64;
    let mut gamma = vec![0.0; xi.len()];
    for i in 0..xi.len() {
        let (mut a, mut b) = (xi[i], zeta[i]);
        worst = worst.max(-a).max(-b);
        a = a.max(0.0);
        b = b.max(0.0);
        let s = a + b;
        if s > 1.0 {
            worst = worst.max(s - 1.0);
            a /= s;
            b /= s;
        }
        xi[i] = a;
        zeta[i] = b;
        gamma[i] = (1.0 - a - b).max(0.0);
    }
    if worst >= CLAMP_LIMIT {
        return Err(Error::RoundOff(worst));
    }
    AbstentionProfile::new(xi, zeta, gamma)
}

/// Solves the predictor LP for the active rows of `v` on its pool.
///
/// Two exact reductions shrink the program before it reaches the simplex:
/// columns where every active hypothesis agrees are predicted with their
/// unanimous label (zero cost in every constraint), and columns with the same
/// labeling by every representative are merged into one weighted column.
pub fn solve_crp(v: &HypothesisSet, eta: f64) -> Result<AbstentionProfile> {
    check_budget(eta)?;
    if v.active().is_empty() {
        return Err(Error::EmptyHypothesisSet);
    }
    let m = v.n_points();
    if m == 0 {
        return Err(Error::EmptySample);
    }
    let all = v.all_columns();
    let mask = v.disagreement_region_mask(&all)?;
    let first = v.row(v.active()[0]);
    let mut xi = vec![0.0; m];
    let mut zeta = vec![0.0; m];
    let mut dis = Vec::new();
    for i in 0..m {
        if mask[i] {
            dis.push(i);
        } else if first[i] == 1 {
            xi[i] = 1.0;
        } else {
            zeta[i] = 1.0;
        }
    }
    if dis.is_empty() {
        return AbstentionProfile::new(xi, zeta, vec![0.0; m]);
    }

    let reps = v.dedupe_by_dichotomy(&dis)?;
    let mut class_of = Vec::with_capacity(dis.len());
    let mut signatures: Vec<Vec<Label>> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    {
        let mut seen: HashMap<Vec<Label>, usize> = HashMap::new();
        for &i in &dis {
            let sig: Vec<Label> = reps.iter().map(|&(h, _)| v.predict(h, i)).collect();
            let c = *seen.entry(sig.clone()).or_insert_with(|| {
                signatures.push(sig);
                weights.push(0.0);
                signatures.len() - 1
            });
            weights[c] += 1.0;
            class_of.push(c);
        }
    }
    let n_class = signatures.len();
    let mut lp = LpProblem::new(vec![-1.0; 2 * n_class]);
    lp.objective_offset = dis.len() as f64;
    for r in 0..reps.len() {
        let mut row = vec![0.0; 2 * n_class];
        for (c, sig) in signatures.iter().enumerate() {
            if sig[r] == 1 {
                row[n_class + c] = 1.0;
            } else {
                row[c] = 1.0;
            }
        }
        lp.add_le(row, eta * m as f64);
    }
    for (c, &w) in weights.iter().enumerate() {
        let mut row = vec![0.0; 2 * n_class];
        row[c] = 1.0;
        row[n_class + c] = 1.0;
        lp.add_le(row, w);
    }
    let sol = solve_lp(&lp, DEFAULT_TOL, DEFAULT_MAX_ITERS)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::LpFailed(sol.status));
    }
    for (k, &i) in dis.iter().enumerate() {
        let c = class_of[k];
        xi[i] = sol.x[c] / weights[c];
        zeta[i] = sol.x[n_class + c] / weights[c];
    }
    clamp_profile(xi, zeta)
}

/// Abstains on the disagreement region of the active set and predicts the
/// unanimous label elsewhere.
pub fn dis_abstain_predictor(v: &HypothesisSet) -> Result<AbstentionProfile> {
    let m = v.n_points();
    let mask = v.disagreement_region_mask(&v.all_columns())?;
    let first = v.row(v.active()[0]);
    let mut xi = vec![0.0; m];
    let mut zeta = vec![0.0; m];
    let mut gamma = vec![0.0; m];
    for i in 0..m {
        if mask[i] {
            gamma[i] = 1.0;
        } else if first[i] == 1 {
            xi[i] = 1.0;
        } else {
            zeta[i] = 1.0;
        }
    }
    AbstentionProfile::new(xi, zeta, gamma)
}

/// Largest expected disagreement of the profile with any active hypothesis,
/// minus `eta`. Non-positive (up to tolerance) means the guarantee holds.
pub fn verify_error_guarantee(p: &AbstentionProfile, v: &HypothesisSet, eta: f64) -> Result<f64> {
    if p.len() != v.n_points() {
        return Err(Error::DimensionMismatch { expected: v.n_points(), found: p.len() });
    }
    if v.active().is_empty() {
        return Err(Error::EmptyHypothesisSet);
    }
    let mut worst = f64::NEG_INFINITY;
    for &h in v.active() {
        worst = worst.max(p.abstaining_error(v.row(h))?);
    }
    Ok(worst - eta)
}

/// `count` i.i.d. pool indices drawn with probability proportional to `gamma`.
pub fn sample_queries<R: Rng + ?Sized>(
    p: &AbstentionProfile,
    count: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let dist = WeightedIndex::new(p.gamma()).map_err(|_| Error::DegenerateAbstention)?;
    Ok((0..count).map(|_| dist.sample(rng)).collect())
}

/// A confidence-rated predictor with a guaranteed error budget.
pub trait ConfidencePredictor: Sync {
    fn name(&self) -> &str;
    fn predict(&self, v: &HypothesisSet, eta: f64) -> Result<AbstentionProfile>;
}

/// The LP predictor.
#[derive(Debug, Clone, Copy, Default)]
pub struct LpPredictor;

impl ConfidencePredictor for LpPredictor {
    fn name(&self) -> &str {
        "lp"
    }

    fn predict(&self, v: &HypothesisSet, eta: f64) -> Result<AbstentionProfile> {
        solve_crp(v, eta)
    }
}

/// Abstain-on-disagreement baseline; ignores `eta`.
#[derive(Debug, Clone, Copy, Default)]
pub struct DisagreementPredictor;

impl ConfidencePredictor for DisagreementPredictor {
    fn name(&self) -> &str {
        "dis"
    }

    fn predict(&self, v: &HypothesisSet, _eta: f64) -> Result<AbstentionProfile> {
        dis_abstain_predictor(v)
    }
}

/// Replays a stored profile; the pool must have the profile's size.
#[derive(Debug, Clone)]
pub struct FixedProfile(pub AbstentionProfile);

impl ConfidencePredictor for FixedProfile {
    fn name(&self) -> &str {
        "profile"
    }

    fn predict(&self, v: &HypothesisSet, _eta: f64) -> Result<AbstentionProfile> {
        if v.n_points() != self.0.len() {
            return Err(Error::DimensionMismatch { expected: self.0.len(), found: v.n_points() });
        }
        Ok(self.0.clone())
    }
}
