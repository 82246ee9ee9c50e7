//! Label queries against a target excess error: the doubling procedure and
//! its single-round, fixed-size counterpart.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypothesis::{HypothesisSet, Label, UnlabeledPool};
use crate::oracle::Oracle;

pub const DEFAULT_ROUND_CAP: u32 = 24;

/// Deviation bound `8/n (2d ln(2en/d) + ln(24/delta))`. Not clamped.
pub fn sigma(n: u64, delta: f64, d: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("sigma needs n >= 1".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta {delta} outside (0, 1)")));
    }
    if d == 0 {
        return Err(Error::InvalidParameter("sigma needs d >= 1".into()));
    }
    let (n, d) = (n as f64, d as f64);
    Ok(8.0 / n * (2.0 * d * (2.0 * std::f64::consts::E * n / d).ln() + (24.0 / delta).ln()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub j: u32,
    pub n_j: u64,
    /// Class-level id of the empirical risk minimizer.
    pub erm: usize,
    pub survivors: usize,
    pub sigma: f64,
    /// `max over survivors of sigma + sqrt(sigma * rho(h, erm))`.
    pub statistic: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub surviving: HypothesisSet,
    pub labels_used: u64,
    pub rounds: Vec<RoundRecord>,
    /// False when the round cap was reached before the stopping rule fired.
    pub halted: bool,
}

impl QueryResult {
    pub fn rounds_csv(&self) -> String {
        let mut out = String::from("j,n_j,erm,survivors,sigma,statistic\n");
        for r in &self.rounds {
            let _ = writeln!(out, "{},{},{},{},{},{}", r.j, r.n_j, r.erm, r.survivors, r.sigma, r.statistic);
        }
        out
    }
}

/// Labeled-sample statistics compressed over columns that every active row
/// labels identically.
struct Compressed {
    class_of: Vec<u32>,
    /// `sig[c * rows + r]`: label of active row `r` on class `c`.
    sig: Vec<Label>,
    rows: usize,
}

impl Compressed {
    fn new(v: &HypothesisSet, support: &[usize]) -> Self {
        let active = v.active();
        let rows = active.len();
        let mut class_of = vec![u32::MAX; v.n_points()];
        let mut sig = Vec::new();
        let mut seen: HashMap<Vec<Label>, u32> = HashMap::new();
        let mut col = Vec::with_capacity(rows);
        for &i in support {
            col.clear();
            col.extend(active.iter().map(|&h| v.predict(h, i)));
            let next = seen.len() as u32;
            let c = *seen.entry(col.clone()).or_insert_with(|| {
                sig.extend_from_slice(&col);
                next
            });
            class_of[i] = c;
        }
        Self { class_of, sig, rows }
    }

    fn n_classes(&self) -> usize {
        if self.rows == 0 {
            0
        } else {
            self.sig.len() / self.rows
        }
    }

    fn label(&self, c: usize, r: usize) -> Label {
        self.sig[c * self.rows + r]
    }
}

fn check_inputs(v: &HypothesisSet, pool: &UnlabeledPool, weights: &[f64], eps_t: f64, delta_t: f64) -> Result<WeightedIndex<f64>> {
    if v.active().is_empty() {
        return Err(Error::EmptyHypothesisSet);
    }
    if pool.len() != v.n_points() {
        return Err(Error::DimensionMismatch { expected: v.n_points(), found: pool.len() });
    }
    if weights.len() != v.n_points() {
        return Err(Error::DimensionMismatch { expected: v.n_points(), found: weights.len() });
    }
    if !(eps_t > 0.0) || !eps_t.is_finite() {
        return Err(Error::InvalidTarget(eps_t));
    }
    if !(delta_t > 0.0 && delta_t < 1.0) {
        return Err(Error::InvalidParameter(format!("delta {delta_t} outside (0, 1)")));
    }
    WeightedIndex::new(weights).map_err(|_| Error::DegenerateAbstention)
}

/// Per-row error counts and disagreement counts with the ERM, from per-class
/// label counts.
struct RoundStats {
    errors: Vec<u64>,
    erm_row: usize,
    disagreements: Vec<u64>,
}

fn round_stats(comp: &Compressed, counts: &[(u64, u64)]) -> RoundStats {
    let mut errors = vec![0u64; comp.rows];
    for (c, &(pos, neg)) in counts.iter().enumerate() {
        if pos + neg == 0 {
            continue;
        }
        for (r, e) in errors.iter_mut().enumerate() {
            *e += if comp.label(c, r) == 1 { neg } else { pos };
        }
    }
    let erm_row = (0..comp.rows).min_by_key(|&r| (errors[r], r)).unwrap_or(0);
    let mut disagreements = vec![0u64; comp.rows];
    for (c, &(pos, neg)) in counts.iter().enumerate() {
        if pos + neg == 0 {
            continue;
        }
        let e = comp.label(c, erm_row);
        for (r, d) in disagreements.iter_mut().enumerate() {
            if comp.label(c, r) != e {
                *d += pos + neg;
            }
        }
    }
    RoundStats { errors, erm_row, disagreements }
}

fn draw_counts<R: Rng + ?Sized>(
    comp: &Compressed,
    n: u64,
    pool: &UnlabeledPool,
    dist: &WeightedIndex<f64>,
    oracle: &mut Oracle<'_>,
    rng: &mut R,
) -> Vec<(u64, u64)> {
    let mut counts = vec![(0u64, 0u64); comp.n_classes()];
    for _ in 0..n {
        let i = dist.sample(rng);
        let c = comp.class_of[i] as usize;
        if oracle.query_label(pool.point(i)) == 1 {
            counts[c].0 += 1;
        } else {
            counts[c].1 += 1;
        }
    }
    counts
}

fn support(weights: &[f64]) -> Vec<usize> {
    (0..weights.len()).filter(|&i| weights[i] > 0.0).collect()
}

/// Doubling procedure: round `j` draws `2^j` fresh indices from `weights`,
/// queries their labels, and keeps every active row whose empirical error is
/// within `eps_t/2 + sigma + sqrt(sigma rho)` of the ERM. Stops at the first
/// round whose largest `sigma + sqrt(sigma rho)` over survivors is at most
/// `eps_t / 6`. Survivors are row indices into `v`.
#[allow(clippy::too_many_arguments)]
pub fn adaptive_label_query<R: Rng + ?Sized>(
    v: &HypothesisSet,
    pool: &UnlabeledPool,
    weights: &[f64],
    oracle: &mut Oracle<'_>,
    rng: &mut R,
    eps_t: f64,
    delta_t: f64,
    j_cap: u32,
) -> Result<QueryResult> {
    let dist = check_inputs(v, pool, weights, eps_t, delta_t)?;
    if j_cap == 0 || j_cap > 62 {
        return Err(Error::InvalidParameter(format!("round cap {j_cap} outside 1..=62")));
    }
    let comp = Compressed::new(v, &support(weights));
    let active = v.active();
    let d = v.vc_dim();
    let mut rounds = Vec::new();
    let mut labels_used = 0u64;
    let mut last = Vec::new();
    for j in 1..=j_cap {
        let n_j = 1u64 << j;
        let delta_j = delta_t / (f64::from(j) * f64::from(j + 1));
        let s = sigma(n_j, delta_j, d)?;
        let counts = draw_counts(&comp, n_j, pool, &dist, oracle, rng);
        labels_used += n_j;
        let stats = round_stats(&comp, &counts);
        let n = n_j as f64;
        let erm_err = stats.errors[stats.erm_row] as f64 / n;
        let mut survivors = Vec::new();
        let mut statistic = 0.0f64;
        for r in 0..comp.rows {
            let rho = stats.disagreements[r] as f64 / n;
            let slack = s + (s * rho).sqrt();
            if stats.errors[r] as f64 / n <= erm_err + eps_t / 2.0 + slack {
                survivors.push(active[r]);
                statistic = statistic.max(slack);
            }
        }
        rounds.push(RoundRecord {
            j,
            n_j,
            erm: v.id(active[stats.erm_row]),
            survivors: survivors.len(),
            sigma: s,
            statistic,
        });
        if statistic <= eps_t / 6.0 {
            return Ok(QueryResult { surviving: v.with_active(survivors)?, labels_used, rounds, halted: true });
        }
        last = survivors;
    }
    Ok(QueryResult { surviving: v.with_active(last)?, labels_used, rounds, halted: false })
}

/// `(6144/eps^2)(d ln(6144/eps^2) + ln(24/delta))`, times `scale`, rounded up
/// and at least 1.
pub fn nonadaptive_sample_size(eps_t: f64, delta_t: f64, d: usize, scale: f64) -> Result<u64> {
    if !(eps_t > 0.0) || !eps_t.is_finite() {
        return Err(Error::InvalidTarget(eps_t));
    }
    if !(delta_t > 0.0 && delta_t < 1.0) {
        return Err(Error::InvalidParameter(format!("delta {delta_t} outside (0, 1)")));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidParameter(format!("scale {scale} must be positive")));
    }
    let a = 6144.0 / (eps_t * eps_t);
    let n = (a * (d as f64 * a.ln() + (24.0 / delta_t).ln()) * scale).ceil();
    if n > 1e15 {
        return Err(Error::InvalidParameter(format!("sample size {n} too large")));
    }
    Ok((n as u64).max(1))
}

/// One round of `nonadaptive_sample_size` labels; keeps rows within
/// `3 eps_t / 4` of the ERM's empirical error.
#[allow(clippy::too_many_arguments)]
pub fn nonadaptive_label_query<R: Rng + ?Sized>(
    v: &HypothesisSet,
    pool: &UnlabeledPool,
    weights: &[f64],
    oracle: &mut Oracle<'_>,
    rng: &mut R,
    eps_t: f64,
    delta_t: f64,
    scale: f64,
) -> Result<QueryResult> {
    let dist = check_inputs(v, pool, weights, eps_t, delta_t)?;
    let n = nonadaptive_sample_size(eps_t, delta_t, v.vc_dim(), scale)?;
    let comp = Compressed::new(v, &support(weights));
    let counts = draw_counts(&comp, n, pool, &dist, oracle, rng);
    let stats = round_stats(&comp, &counts);
    let nf = n as f64;
    let erm_err = stats.errors[stats.erm_row] as f64 / nf;
    let active = v.active();
    let survivors: Vec<usize> = (0..comp.rows)
        .filter(|&r| stats.errors[r] as f64 / nf <= erm_err + 0.75 * eps_t)
        .map(|r| active[r])
        .collect();
    let record = RoundRecord {
        j: 1,
        n_j: n,
        erm: v.id(active[stats.erm_row]),
        survivors: survivors.len(),
        sigma: f64::NAN,
        statistic: 0.75 * eps_t,
    };
    Ok(QueryResult { surviving: v.with_active(survivors)?, labels_used: n, rounds: vec![record], halted: true })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::class::HypothesisClass;
    use crate::oracle::{LabelModel, Marginal, OracleSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sigma_ref(n: f64, delta: f64, d: f64) -> f64 {
        let two_e_n_over_d = 2.0 * 2.718281828459045 * n / d;
        8.0 * (2.0 * d * two_e_n_over_d.ln() + (24.0 / delta).ln()) / n
    }

    #[test]
    fn sigma_values() {
        let a = sigma(1024, 0.1, 1).unwrap();
        let b = sigma(2048, 0.1, 1).unwrap();
        assert!((a - 0.17758).abs() < 1e-4, "{a}");
        assert!((b - 0.09421).abs() < 1e-4, "{b}");
        assert!((a - sigma_ref(1024.0, 0.1, 1.0)).abs() < 1e-12);
        assert!(sigma(8, 0.1, 1).unwrap() > 1.0);
        assert!(sigma(0, 0.1, 1).is_err());
        assert!(sigma(8, 1.0, 1).is_err());
        assert!(sigma(8, 0.1, 0).is_err());
    }

    #[test]
    fn nonadaptive_size_formula() {
        let n = nonadaptive_sample_size(0.5, 0.1, 1, 1.0).unwrap();
        let a: f64 = 24576.0;
        assert_eq!(n, (a * (a.ln() + 240.0f64.ln())).ceil() as u64);
        assert_eq!(n, 383_144);
        assert_eq!(nonadaptive_sample_size(0.5, 0.1, 1, 1e-9).unwrap(), 1);
        assert!(nonadaptive_sample_size(0.0, 0.1, 1, 1.0).is_err());
    }

    fn threshold_setup(rate: f64) -> (HypothesisClass, OracleSpec, UnlabeledPool) {
        let class = HypothesisClass::thresholds(0.0, 1.0, 11).unwrap();
        let truth = class.classifier(5).clone();
        let labels = if rate == 0.0 {
            LabelModel::Deterministic { truth }
        } else {
            LabelModel::Flip { truth, rate }
        };
        let marginal = Marginal::uniform_grid(0.0, 1.0, 41).unwrap();
        let pool = match &marginal {
            Marginal::Finite { pool, .. } => pool.clone(),
            _ => unreachable!(),
        };
        (class, OracleSpec::new(marginal, labels).unwrap(), pool)
    }

    #[test]
    fn singleton_halts_when_sigma_is_small() {
        let (class, spec, pool) = threshold_setup(0.1);
        let v = class.materialize_subset(&pool, &[3]).unwrap();
        let mut oracle = Oracle::new(&spec, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = vec![1.0; pool.len()];
        let eps = 0.5;
        let q = adaptive_label_query(&v, &pool, &w, &mut oracle, &mut rng, eps, 0.1, 24).unwrap();
        assert!(q.halted);
        assert_eq!(q.surviving.active(), &[0]);
        let j0 = q.rounds.len() as u32;
        let first = (1..).find(|&j: &u32| {
            sigma(1 << j, 0.1 / (f64::from(j) * f64::from(j + 1)), 1).unwrap() <= eps / 6.0
        });
        assert_eq!(Some(j0), first);
        assert_eq!(q.labels_used, (1u64 << (j0 + 1)) - 2);
        assert_eq!(oracle.budget(), q.labels_used);
        for (k, r) in q.rounds.iter().enumerate() {
            assert_eq!(r.n_j, 1 << (k + 1));
        }
    }

    #[test]
    fn erm_survives_and_geometric_growth() {
        let (class, spec, pool) = threshold_setup(0.2);
        let v = class.materialize(&pool).unwrap();
        let w: Vec<f64> = (0..pool.len()).map(|i| 1.0 + (i % 3) as f64).collect();
        for seed in 0..5 {
            let mut oracle = Oracle::new(&spec, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let q = adaptive_label_query(&v, &pool, &w, &mut oracle, &mut rng, 0.3, 0.1, 24).unwrap();
            assert!(q.halted);
            let last = q.rounds.last().unwrap();
            assert!(q.surviving.active_ids().contains(&last.erm));
            assert!(q.labels_used <= 2 * last.n_j);
            assert_eq!(q.labels_used, q.rounds.iter().map(|r| r.n_j).sum::<u64>());
        }
    }

    #[test]
    fn round_cap_flags_non_halting() {
        let (class, spec, pool) = threshold_setup(0.2);
        let v = class.materialize(&pool).unwrap();
        let w = vec![1.0; pool.len()];
        let mut oracle = Oracle::new(&spec, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = adaptive_label_query(&v, &pool, &w, &mut oracle, &mut rng, 0.01, 0.1, 3).unwrap();
        assert!(!q.halted);
        assert_eq!(q.rounds.len(), 3);
        assert!(!q.surviving.active().is_empty());
        assert!(q.rounds_csv().starts_with("j,n_j,erm"));
    }

    #[test]
    fn determinism_under_fixed_seed() {
        let (class, spec, pool) = threshold_setup(0.1);
        let v = class.materialize(&pool).unwrap();
        let w = vec![1.0; pool.len()];
        let run = || {
            let mut oracle = Oracle::new(&spec, 9);
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            adaptive_label_query(&v, &pool, &w, &mut oracle, &mut rng, 0.25, 0.1, 24).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn noiseless_query_keeps_truth() {
        let (class, spec, pool) = threshold_setup(0.0);
        let v = class.materialize(&pool).unwrap();
        let w = vec![1.0; pool.len()];
        let mut oracle = Oracle::new(&spec, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = adaptive_label_query(&v, &pool, &w, &mut oracle, &mut rng, 0.2, 0.1, 24).unwrap();
        assert!(q.surviving.active_ids().contains(&5));
    }

    #[test]
    fn nonadaptive_rule() {
        let (class, spec, pool) = threshold_setup(0.1);
        let w = vec![1.0; pool.len()];
        let single = class.materialize_subset(&pool, &[2]).unwrap();
        let mut oracle = Oracle::new(&spec, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = nonadaptive_label_query(&single, &pool, &w, &mut oracle, &mut rng, 0.5, 0.1, 1e-3).unwrap();
        assert_eq!(q.surviving.active(), &[0]);
        assert_eq!(q.labels_used, nonadaptive_sample_size(0.5, 0.1, 1, 1e-3).unwrap());
        assert_eq!(oracle.budget(), q.labels_used);

        // With eps = 1 every row within 3/4 of the ERM survives; on this
        // instance that is every row.
        let v = class.materialize(&pool).unwrap();
        let q = nonadaptive_label_query(&v, &pool, &w, &mut oracle, &mut rng, 1.0, 0.1, 1e-3).unwrap();
        assert_eq!(q.surviving.active().len(), class.len());
    }

    #[test]
    fn rejects_bad_inputs() {
        let (class, spec, pool) = threshold_setup(0.1);
        let v = class.materialize(&pool).unwrap();
        let mut oracle = Oracle::new(&spec, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let zero = vec![0.0; pool.len()];
        let ones = vec![1.0; pool.len()];
        assert_eq!(
            adaptive_label_query(&v, &pool, &zero, &mut oracle, &mut rng, 0.5, 0.1, 24),
            Err(Error::DegenerateAbstention)
        );
        assert!(adaptive_label_query(&v, &pool, &ones, &mut oracle, &mut rng, 0.0, 0.1, 24).is_err());
        assert!(adaptive_label_query(&v, &pool, &ones[1..], &mut oracle, &mut rng, 0.5, 0.1, 24).is_err());
        let empty = v.with_active(vec![]).unwrap();
        assert_eq!(
            adaptive_label_query(&empty, &pool, &ones, &mut oracle, &mut rng, 0.5, 0.1, 24),
            Err(Error::EmptyHypothesisSet)
        );
    }
}
