//! The epoch loop driving a confidence-rated predictor, in realizable and
//! agnostic modes, and the passive ERM baseline.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::class::HypothesisClass;
use crate::crp::{sample_queries, ConfidencePredictor};
use crate::error::{Error, Result};
use crate::hypothesis::LabeledSample;
use crate::oracle::{ErrorTable, Oracle};
use crate::query::{adaptive_label_query, DEFAULT_ROUND_CAP};

/// Abstention rates below this are treated as zero: the epoch queries nothing.
pub const PHI_FLOOR: f64 = 1e-12;

/// Largest unlabeled sample an epoch may draw.
pub const MAX_POOL: u64 = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochPlan {
    pub k: u32,
    pub eps_k: f64,
    pub delta_k: f64,
    pub n_k: u64,
}

fn check_targets(eps: f64, delta: f64, scale: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidTarget(eps));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta {delta} outside (0, 1)")));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidParameter(format!("scale {scale} must be positive")));
    }
    Ok(())
}

/// Epochs `k = 1..=k0` with `k0 = ceil(log2(1/eps))`, `eps_k = eps 2^(k0-k+1)`,
/// `delta_k = delta / (2 (k0-k+1)^2)` and
/// `n_k = 192 (256/eps_k)^2 (d ln(256/eps_k) + ln(288/delta_k))`, scaled and
/// rounded up.
pub fn epoch_schedule(eps: f64, delta: f64, d: usize, scale: f64) -> Result<Vec<EpochPlan>> {
    check_targets(eps, delta, scale)?;
    let k0 = (1.0 / eps).log2().ceil().max(0.0) as u32;
    let d = d as f64;
    Ok((1..=k0)
        .map(|k| {
            let back = f64::from(k0 - k + 1);
            let eps_k = eps * back.exp2();
            let delta_k = delta / (2.0 * back * back);
            let a = 256.0 / eps_k;
            let n = 192.0 * a * a * (d * a.ln() + (288.0 / delta_k).ln()) * scale;
            EpochPlan { k, eps_k, delta_k, n_k: n.ceil().max(1.0) as u64 }
        })
        .collect())
}

/// `m_k = 768 phi/eps_k (d ln(768 phi/eps_k) + ln(48/delta_k))`, scaled,
/// rounded up, and never negative.
pub fn label_budget(phi: f64, eps_k: f64, delta_k: f64, d: usize, scale: f64) -> u64 {
    if phi < PHI_FLOOR {
        return 0;
    }
    let a = 768.0 * phi / eps_k;
    let m = a * (d as f64 * a.ln() + (48.0 / delta_k).ln()) * scale;
    m.ceil().max(0.0) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Realizable,
    Agnostic,
    Passive,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Realizable => "realizable",
            Mode::Agnostic => "agnostic",
            Mode::Passive => "passive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochState {
    pub k: u32,
    pub eps_k: f64,
    pub delta_k: f64,
    pub n_k: u64,
    pub phi_k: f64,
    pub m_k: u64,
    /// Candidates entering the epoch.
    pub v_size: usize,
    /// Fraction of the epoch's pool on which the candidates disagree.
    pub dis_mass: f64,
    /// Candidates leaving the epoch.
    pub survivors: usize,
    /// Rounds of the doubling procedure (agnostic mode only).
    pub rounds: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub mode: Mode,
    pub predictor: String,
    pub epochs: Vec<EpochState>,
    /// Class-level id of the returned hypothesis.
    pub returned: usize,
    pub final_survivors: Vec<usize>,
    pub total_labels: u64,
    pub total_unlabeled: u64,
    pub final_error: Option<f64>,
    pub final_excess: Option<f64>,
    pub error_stderr: Option<f64>,
}

impl ExperimentReport {
    pub fn with_truth(mut self, table: &ErrorTable) -> Self {
        let e = table.excess(self.returned);
        self.final_error = Some(table.errors[self.returned]);
        self.final_excess = Some(e.value);
        self.error_stderr = Some(e.stderr);
        self
    }

    pub const EPOCH_HEADER: &'static str = "k,eps_k,delta_k,n_k,phi_k,m_k,v_size,dis_mass,survivors,rounds";

    pub fn epochs_csv(&self) -> String {
        let mut out = String::from(Self::EPOCH_HEADER);
        out.push('\n');
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                e.k, e.eps_k, e.delta_k, e.n_k, e.phi_k, e.m_k, e.v_size, e.dis_mass, e.survivors, e.rounds
            );
        }
        out
    }
}

/// Learner parameters shared by both modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunParams {
    pub eps: f64,
    pub delta: f64,
    pub scale: f64,
    pub round_cap: u32,
}

impl RunParams {
    pub fn new(eps: f64, delta: f64, scale: f64) -> Self {
        Self { eps, delta, scale, round_cap: DEFAULT_ROUND_CAP }
    }
}

pub fn run_realizable<R: Rng + ?Sized>(
    class: &HypothesisClass,
    oracle: &mut Oracle<'_>,
    predictor: &dyn ConfidencePredictor,
    params: &RunParams,
    rng: &mut R,
) -> Result<ExperimentReport> {
    run_epochs(class, oracle, predictor, params, rng, Mode::Realizable)
}

pub fn run_agnostic<R: Rng + ?Sized>(
    class: &HypothesisClass,
    oracle: &mut Oracle<'_>,
    predictor: &dyn ConfidencePredictor,
    params: &RunParams,
    rng: &mut R,
) -> Result<ExperimentReport> {
    run_epochs(class, oracle, predictor, params, rng, Mode::Agnostic)
}

fn run_epochs<R: Rng + ?Sized>(
    class: &HypothesisClass,
    oracle: &mut Oracle<'_>,
    predictor: &dyn ConfidencePredictor,
    params: &RunParams,
    rng: &mut R,
    mode: Mode,
) -> Result<ExperimentReport> {
    if class.is_empty() {
        return Err(Error::EmptyHypothesisSet);
    }
    let d = class.vc_dim();
    let plan = epoch_schedule(params.eps, params.delta, d, params.scale)?;
    if let Some(p) = plan.iter().find(|p| p.n_k > MAX_POOL) {
        return Err(Error::InvalidParameter(format!(
            "epoch {} needs {} unlabeled points (limit {MAX_POOL}); lower the scale",
            p.k, p.n_k
        )));
    }
    let mut ids: Vec<usize> = (0..class.len()).collect();
    let mut epochs = Vec::with_capacity(plan.len());
    let mut total_labels = 0u64;
    let mut total_unlabeled = 0u64;
    for p in &plan {
        let pool = oracle.draw_unlabeled(p.n_k as usize);
        total_unlabeled += p.n_k;
        let v = class.materialize_subset(&pool, &ids)?;
        let mask = v.disagreement_region_mask(&v.all_columns())?;
        let dis_mass = mask.iter().filter(|&&b| b).count() as f64 / pool.len() as f64;
        let profile = predictor.predict(&v, p.eps_k / 64.0)?;
        let phi_k = profile.phi();
        let v_size = ids.len();
        let (m_k, rounds) = if phi_k < PHI_FLOOR {
            (0, 0)
        } else {
            match mode {
                Mode::Realizable => {
                    let m_k = label_budget(phi_k, p.eps_k, p.delta_k, d, params.scale);
                    let queries = sample_queries(&profile, m_k as usize, rng)?;
                    let mut sample = LabeledSample::new();
                    for i in queries {
                        sample.push(i, oracle.query_label(pool.point(i)));
                    }
                    let next = v.version_space_update(&sample)?;
                    if next.active().is_empty() {
                        return Err(Error::InconsistentRealizable(p.k as usize));
                    }
                    ids = next.active_ids();
                    (m_k, 0)
                }
                Mode::Agnostic | Mode::Passive => {
                    let q = adaptive_label_query(
                        &v,
                        &pool,
                        profile.gamma(),
                        oracle,
                        rng,
                        p.eps_k / (8.0 * phi_k),
                        p.delta_k / 2.0,
                        params.round_cap,
                    )?;
                    if !q.halted {
                        return Err(Error::NoHalt(params.round_cap));
                    }
                    ids = q.surviving.active_ids();
                    (q.labels_used, q.rounds.len() as u32)
                }
            }
        };
        total_labels += m_k;
        epochs.push(EpochState {
            k: p.k,
            eps_k: p.eps_k,
            delta_k: p.delta_k,
            n_k: p.n_k,
            phi_k,
            m_k,
            v_size,
            dis_mass,
            survivors: ids.len(),
            rounds,
        });
    }
    ids.sort_unstable();
    Ok(ExperimentReport {
        mode,
        predictor: predictor.name().to_string(),
        epochs,
        returned: ids[0],
        final_survivors: ids,
        total_labels,
        total_unlabeled,
        final_error: None,
        final_excess: None,
        error_stderr: None,
    })
}

/// ERM over `n` i.i.d. labeled draws; returns the class-level id.
pub fn run_passive<R: Rng + ?Sized>(
    class: &HypothesisClass,
    oracle: &mut Oracle<'_>,
    n: u64,
    _rng: &mut R,
) -> Result<usize> {
    Ok(passive_report(class, oracle, n)?.returned)
}

/// `run_passive` with a full report.
pub fn passive_report(class: &HypothesisClass, oracle: &mut Oracle<'_>, n: u64) -> Result<ExperimentReport> {
    if n == 0 {
        return Err(Error::InvalidParameter("passive learning needs n >= 1".into()));
    }
    if n > MAX_POOL {
        return Err(Error::InvalidParameter(format!("passive budget {n} exceeds {MAX_POOL}")));
    }
    let pool = oracle.draw_unlabeled(n as usize);
    let mut sample = LabeledSample::new();
    for (i, x) in pool.iter().enumerate() {
        sample.push(i, oracle.query_label(x));
    }
    let v = class.materialize(&pool)?;
    let h = v.erm(&sample)?;
    Ok(ExperimentReport {
        mode: Mode::Passive,
        predictor: "erm".to_string(),
        epochs: Vec::new(),
        returned: v.id(h),
        final_survivors: vec![v.id(h)],
        total_labels: n,
        total_unlabeled: n,
        final_error: None,
        final_excess: None,
        error_stderr: None,
    })
}

/// Label budget given to the passive baseline at target `eps`: the per-epoch
/// formula with full abstention, scaled.
pub fn passive_budget(eps: f64, delta: f64, d: usize, scale: f64) -> Result<u64> {
    check_targets(eps, delta, scale)?;
    Ok(label_budget(1.0, eps, delta, d, scale).max(1))
}
