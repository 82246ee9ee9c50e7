//! Pool-based estimates of minimum abstention, disagreement coefficients and
//! label-complexity curves.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::class::HypothesisClass;
use crate::crp::solve_crp;
use crate::error::{Error, Result};
use crate::hypothesis::{HypothesisSet, UnlabeledPool};

pub const ESTIMATE_CSV_VERSION: &str = "# confal estimates v1";
pub const ESTIMATE_HEADER: &str = "quantity,r,eta,pool_size,value,stderr";
pub const CURVE_CSV_VERSION: &str = "# confal curve v1";
pub const CURVE_HEADER: &str = "strategy,eps,trials,failures,mean_labels,q10_labels,q50_labels,q90_labels,mean_excess";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiEstimate {
    pub value: f64,
    /// Standard error of the mean abstention over the pool.
    pub stderr: f64,
    pub pool_size: usize,
    pub eta: f64,
    pub r: Option<f64>,
    /// Hypotheses in the set the estimate is taken over.
    pub set_size: usize,
}

/// Minimum abstention over the active rows of `v`, at error budget `eta`, on
/// the pool `v` is materialized on.
pub fn estimate_phi_capital(v: &HypothesisSet, eta: f64) -> Result<PhiEstimate> {
    if v.n_points() == 0 {
        return Err(Error::EmptySample);
    }
    let p = solve_crp(v, eta)?;
    let n = p.len() as f64;
    let var = p.gamma().iter().map(|g| (g - p.phi()).powi(2)).sum::<f64>() / n;
    Ok(PhiEstimate {
        value: p.phi().clamp(0.0, 1.0),
        stderr: (var / n).sqrt(),
        pool_size: p.len(),
        eta,
        r: None,
        set_size: v.active().len(),
    })
}

fn ball(class: &HypothesisClass, h_star: usize, r: f64, pool: &UnlabeledPool) -> Result<HypothesisSet> {
    if h_star >= class.len() {
        return Err(Error::UnknownHypothesis(h_star));
    }
    if !(r >= 0.0) {
        return Err(Error::InvalidParameter(format!("radius {r} must be nonnegative")));
    }
    let v = class.materialize(pool)?;
    let b = v.disagreement_ball(h_star, r, &v.all_columns())?;
    if b.active().is_empty() {
        return Err(Error::EmptyBall);
    }
    Ok(b)
}

/// Minimum abstention over the empirical ball of radius `r` around `h_star`.
pub fn estimate_phi_small(
    class: &HypothesisClass,
    h_star: usize,
    r: f64,
    eta: f64,
    pool: &UnlabeledPool,
) -> Result<PhiEstimate> {
    let b = ball(class, h_star, r, pool)?;
    let mut est = estimate_phi_capital(&b, eta)?;
    est.r = Some(r);
    Ok(est)
}

fn dis_mass(v: &HypothesisSet) -> Result<f64> {
    let mask = v.disagreement_region_mask(&v.all_columns())?;
    Ok(mask.iter().filter(|&&b| b).count() as f64 / mask.len() as f64)
}

/// `theta(r) = max over grid radii r' >= r of DIS(ball(h_star, r')) / r'`,
/// returned in the order of `r_grid`.
pub fn estimate_theta(
    class: &HypothesisClass,
    h_star: usize,
    r_grid: &[f64],
    pool: &UnlabeledPool,
) -> Result<Vec<(f64, f64)>> {
    if r_grid.is_empty() {
        return Err(Error::InvalidParameter("radius grid is empty".into()));
    }
    if let Some(r) = r_grid.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
        return Err(Error::InvalidParameter(format!("radius {r} outside (0, 1]")));
    }
    if pool.is_empty() {
        return Err(Error::EmptySample);
    }
    if h_star >= class.len() {
        return Err(Error::UnknownHypothesis(h_star));
    }
    let v = class.materialize(pool)?;
    let cols = v.all_columns();
    let ratios: Vec<f64> = r_grid
        .iter()
        .map(|&r| Ok(dis_mass(&v.disagreement_ball(h_star, r, &cols)?)? / r))
        .collect::<Result<_>>()?;
    Ok(r_grid
        .iter()
        .map(|&r| {
            let sup = r_grid
                .iter()
                .zip(&ratios)
                .filter(|(&r2, _)| r2 >= r)
                .map(|(_, &q)| q)
                .fold(0.0, f64::max);
            (r, sup)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of `ys` on `xs`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), found: ys.len() });
    }
    if xs.len() < 2 {
        return Err(Error::InvalidParameter("a fit needs at least two points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("regressor is constant".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit { slope, intercept, r_squared })
}

/// One row of an estimates table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub quantity: String,
    pub r: Option<f64>,
    pub eta: Option<f64>,
    pub pool_size: usize,
    pub value: f64,
    pub stderr: Option<f64>,
}

impl EstimateRow {
    pub fn phi(est: &PhiEstimate) -> Self {
        Self {
            quantity: "phi".into(),
            r: est.r,
            eta: Some(est.eta),
            pool_size: est.pool_size,
            value: est.value,
            stderr: Some(est.stderr),
        }
    }

    pub fn theta(r: f64, value: f64, pool_size: usize) -> Self {
        Self { quantity: "theta".into(), r: Some(r), eta: None, pool_size, value, stderr: None }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn estimates_csv(rows: &[EstimateRow]) -> String {
    let mut out = format!("{ESTIMATE_CSV_VERSION}\n{ESTIMATE_HEADER}\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            row.quantity,
            opt(row.r),
            opt(row.eta),
            row.pool_size,
            row.value,
            opt(row.stderr)
        );
    }
    out
}

/// Outcome of one (strategy, eps, trial) cell of a curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub labels: u64,
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub strategy: String,
    pub eps: f64,
    pub trials: usize,
    pub failures: usize,
    pub mean_labels: f64,
    pub q10_labels: f64,
    pub q50_labels: f64,
    pub q90_labels: f64,
    pub mean_excess: f64,
}

/// Nearest-rank quantile of sorted data.
fn quantile(sorted: &[u64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1] as f64
}

/// Runs every `(strategy, eps, trial)` cell with `run` and summarizes labels
/// per `(strategy, eps)`, in strategy-major order. The trial index is passed
/// through so strategies can share seeds. Failed cells are counted, not fatal.
pub fn label_complexity_curve<F>(strategies: &[String], eps_grid: &[f64], trials: usize, run: F) -> Result<Vec<CurveRow>>
where
    F: Fn(&str, f64, usize) -> Result<TrialOutcome> + Sync,
{
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let cells: Vec<(usize, usize, usize)> = (0..strategies.len())
        .flat_map(|s| (0..eps_grid.len()).flat_map(move |e| (0..trials).map(move |t| (s, e, t))))
        .collect();
    let outcomes: Vec<Result<TrialOutcome>> =
        cells.par_iter().map(|&(s, e, t)| run(&strategies[s], eps_grid[e], t)).collect();
    let mut rows = Vec::new();
    for (s, name) in strategies.iter().enumerate() {
        for (e, &eps) in eps_grid.iter().enumerate() {
            let base = (s * eps_grid.len() + e) * trials;
            let ok: Vec<TrialOutcome> = outcomes[base..base + trials].iter().filter_map(|o| o.as_ref().ok().copied()).collect();
            let mut labels: Vec<u64> = ok.iter().map(|o| o.labels).collect();
            labels.sort_unstable();
            let k = ok.len().max(1) as f64;
            rows.push(CurveRow {
                strategy: name.clone(),
                eps,
                trials,
                failures: trials - ok.len(),
                mean_labels: if ok.is_empty() { f64::NAN } else { labels.iter().sum::<u64>() as f64 / k },
                q10_labels: quantile(&labels, 0.1),
                q50_labels: quantile(&labels, 0.5),
                q90_labels: quantile(&labels, 0.9),
                mean_excess: if ok.is_empty() { f64::NAN } else { ok.iter().map(|o| o.excess).sum::<f64>() / k },
            });
        }
    }
    Ok(rows)
}

pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut out = format!("{CURVE_CSV_VERSION}\n{CURVE_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.strategy, r.eps, r.trials, r.failures, r.mean_labels, r.q10_labels, r.q50_labels, r.q90_labels, r.mean_excess
        );
    }
    out
}
