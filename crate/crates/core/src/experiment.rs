//! Experiment configuration and seeded batch execution.
//!
//! A config is a TOML document. Every table rejects unknown keys. Each trial
//! derives its own seed from the experiment seed and its index, so results do
//! not depend on how trials are spread across workers.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    estimate_phi_capital, estimate_phi_small, estimate_theta, label_complexity_curve, CurveRow, EstimateRow,
    TrialOutcome,
};
use crate::class::{ClassSpec, HypothesisClass};
use crate::crp::{AbstentionProfile, ConfidencePredictor, DisagreementPredictor, FixedProfile, LpPredictor};
use crate::error::{Error, Result};
use crate::hypothesis::UnlabeledPool;
use crate::learner::{passive_budget, passive_report, run_agnostic, run_realizable, ExperimentReport, RunParams};
use crate::oracle::{ErrorTable, LabelSpec, Marginal, MarginalSpec, Oracle, OracleSpec};
use crate::query::DEFAULT_ROUND_CAP;

pub const RUNS_CSV_VERSION: &str = "# confal runs v1";
pub const RUNS_HEADER: &str =
    "trial,seed,mode,predictor,status,returned,total_labels,total_unlabeled,final_error,final_excess,epochs";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnMode {
    Realizable,
    Agnostic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorKind {
    Lp,
    Dis,
    Profile,
}

fn default_delta() -> f64 {
    0.1
}
fn default_scale() -> f64 {
    1.0
}
fn default_trials() -> usize {
    1
}
fn default_round_cap() -> u32 {
    DEFAULT_ROUND_CAP
}
fn default_mc_points() -> usize {
    200_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: LearnMode,
    pub predictor: PredictorKind,
    /// Stored abstention profile, required when `predictor = "profile"`.
    pub profile: Option<String>,
    pub eps: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_round_cap")]
    pub round_cap: u32,
    /// Reference points for Monte Carlo error estimates.
    #[serde(default = "default_mc_points")]
    pub mc_points: usize,
    pub class: ClassSpec,
    pub marginal: MarginalSpec,
    pub labels: LabelSpec,
    pub estimate: Option<EstimateConfig>,
    pub curve: Option<CurveConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub h_star: usize,
    /// Ball radii. Empty means the whole class.
    #[serde(default)]
    pub r: Vec<f64>,
    /// Absolute error budgets.
    #[serde(default)]
    pub eta: Vec<f64>,
    /// Error budgets as multiples of the radius.
    #[serde(default)]
    pub eta_over_r: Vec<f64>,
    /// Points drawn from the marginal. Omitted with a finite marginal means
    /// the pool itself.
    pub pool_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveConfig {
    pub eps: Vec<f64>,
    pub strategies: Vec<String>,
    pub trials: Option<usize>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::InvalidParameter(format!("{field}: {msg}")));
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return bad("eps", format!("{} outside (0, 1]", self.eps));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta", format!("{} outside (0, 1)", self.delta));
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return bad("scale", format!("{} must be positive", self.scale));
        }
        if self.trials == 0 {
            return bad("trials", "must be at least 1".into());
        }
        if self.round_cap == 0 || self.round_cap > 62 {
            return bad("round_cap", format!("{} outside 1..=62", self.round_cap));
        }
        if self.predictor == PredictorKind::Profile && self.profile.is_none() {
            return bad("profile", "required when predictor = \"profile\"".into());
        }
        if let Some(est) = &self.estimate {
            if let Some(r) = est.r.iter().find(|r| !(**r >= 0.0 && **r <= 1.0)) {
                return bad("estimate.r", format!("{r} outside [0, 1]"));
            }
            if let Some(e) = est.eta.iter().chain(&est.eta_over_r).find(|e| !(**e >= 0.0)) {
                return bad("estimate.eta", format!("{e} must be nonnegative"));
            }
        }
        if let Some(c) = &self.curve {
            if let Some(e) = c.eps.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
                return bad("curve.eps", format!("{e} outside (0, 1]"));
            }
            if let Some(s) = c.strategies.iter().find(|s| !matches!(s.as_str(), "lp" | "dis" | "passive")) {
                return bad("curve.strategies", format!("unknown strategy {s:?}"));
            }
            if c.trials == Some(0) {
                return bad("curve.trials", "must be at least 1".into());
            }
        }
        Ok(())
    }
}

/// Independent 64-bit seed for trial `t`.
pub fn trial_seed(seed: u64, t: u64) -> u64 {
    let mut z = seed ^ t.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Learner-side randomness for a trial, independent of the oracle streams.
pub fn learner_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    rng
}

/// Runs `f` on a pool of `workers` threads (all processors when `None`).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        if n == 0 {
            return Err(Error::InvalidParameter("workers must be at least 1".into()));
        }
        b = b.num_threads(n);
    }
    let pool = b.build().map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Resolved experiment: class, oracle spec and true-error table.
#[derive(Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
    pub class: HypothesisClass,
    pub spec: OracleSpec,
    pub errors: ErrorTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub report: std::result::Result<ExperimentReport, Error>,
}

impl Experiment {
    pub fn new(config: ExperimentConfig, base_dir: &Path) -> Result<Self> {
        config.validate()?;
        let class = HypothesisClass::from_spec(&config.class, base_dir)?;
        let spec = OracleSpec::from_config(&config.marginal, &config.labels, &class, base_dir)?;
        if spec.marginal.dim() != dim_of(&class) {
            return Err(Error::DimensionMismatch { expected: dim_of(&class), found: spec.marginal.dim() });
        }
        let errors = ErrorTable::compute(&spec, &class, config.mc_points, config.seed)?;
        Ok(Self { config, base_dir: base_dir.to_path_buf(), class, spec, errors })
    }

    fn predictor(&self, kind: PredictorKind) -> Result<Box<dyn ConfidencePredictor>> {
        Ok(match kind {
            PredictorKind::Lp => Box::new(LpPredictor),
            PredictorKind::Dis => Box::new(DisagreementPredictor),
            PredictorKind::Profile => {
                let path = self.config.profile.as_deref().unwrap_or_default();
                let text = std::fs::read_to_string(self.base_dir.join(path))
                    .map_err(|e| Error::Parse(format!("{path}: {e}")))?;
                Box::new(FixedProfile(AbstentionProfile::from_csv(&text)?))
            }
        })
    }

    fn params(&self, eps: f64) -> RunParams {
        RunParams { eps, delta: self.config.delta, scale: self.config.scale, round_cap: self.config.round_cap }
    }

    /// One trial of the configured learner at target `eps`.
    pub fn run_one(&self, kind: PredictorKind, eps: f64, seed: u64) -> Result<ExperimentReport> {
        let predictor = self.predictor(kind)?;
        let mut oracle = Oracle::new(&self.spec, seed);
        let mut rng = learner_rng(seed);
        let params = self.params(eps);
        let report = match self.config.mode {
            LearnMode::Realizable => run_realizable(&self.class, &mut oracle, predictor.as_ref(), &params, &mut rng)?,
            LearnMode::Agnostic => run_agnostic(&self.class, &mut oracle, predictor.as_ref(), &params, &mut rng)?,
        };
        debug_assert_eq!(report.total_labels, oracle.budget());
        Ok(report.with_truth(&self.errors))
    }

    pub fn run_passive_one(&self, eps: f64, seed: u64) -> Result<ExperimentReport> {
        let n = passive_budget(eps, self.config.delta, self.class.vc_dim(), self.config.scale)?;
        let mut oracle = Oracle::new(&self.spec, seed);
        Ok(passive_report(&self.class, &mut oracle, n)?.with_truth(&self.errors))
    }

    /// All configured trials, in trial order.
    pub fn run_trials(&self) -> Vec<TrialResult> {
        (0..self.config.trials)
            .into_par_iter()
            .map(|t| {
                let seed = trial_seed(self.config.seed, t as u64);
                TrialResult { trial: t, seed, report: self.run_one(self.config.predictor, self.config.eps, seed) }
            })
            .collect()
    }

    /// Pool for the estimators.
    pub fn estimate_pool(&self) -> Result<UnlabeledPool> {
        let est = self.estimate_config()?;
        match (est.pool_size, &self.spec.marginal) {
            (None, Marginal::Finite { pool, .. }) => Ok(pool.clone()),
            (None, _) => Err(Error::InvalidParameter(
                "estimate.pool_size: required unless the marginal is a finite pool".into(),
            )),
            (Some(n), _) => Ok(Oracle::new(&self.spec, trial_seed(self.config.seed, u64::MAX)).draw_unlabeled(n)),
        }
    }

    fn estimate_config(&self) -> Result<&EstimateConfig> {
        self.config
            .estimate
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("estimate: missing [estimate] table".into()))
    }

    /// Rows for every `(r, eta)` cell, `r` outer, budgets in the order
    /// `eta` then `eta_over_r`.
    pub fn estimate_phi(&self) -> Result<Vec<EstimateRow>> {
        let est = self.estimate_config()?;
        let pool = self.estimate_pool()?;
        if est.r.is_empty() {
            let v = self.class.materialize(&pool)?;
            return est
                .eta
                .par_iter()
                .map(|&eta| {
                    let mut row = EstimateRow::phi(&estimate_phi_capital(&v, eta)?);
                    row.quantity = "phi_capital".into();
                    Ok(row)
                })
                .collect();
        }
        let cells: Vec<(f64, f64)> = est
            .r
            .iter()
            .flat_map(|&r| est.eta.iter().copied().chain(est.eta_over_r.iter().map(move |q| q * r)).map(move |e| (r, e)))
            .collect();
        cells
            .par_iter()
            .map(|&(r, eta)| Ok(EstimateRow::phi(&estimate_phi_small(&self.class, est.h_star, r, eta, &pool)?)))
            .collect()
    }

    pub fn estimate_theta(&self) -> Result<Vec<EstimateRow>> {
        let est = self.estimate_config()?;
        let pool = self.estimate_pool()?;
        let table = estimate_theta(&self.class, est.h_star, &est.r, &pool)?;
        Ok(table.into_iter().map(|(r, v)| EstimateRow::theta(r, v, pool.len())).collect())
    }

    pub fn curve(&self) -> Result<Vec<CurveRow>> {
        let c = self
            .config
            .curve
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("curve: missing [curve] table".into()))?;
        let trials = c.trials.unwrap_or(self.config.trials);
        label_complexity_curve(&c.strategies, &c.eps, trials, |strategy, eps, t| {
            let seed = trial_seed(self.config.seed, t as u64);
            let report = match strategy {
                "lp" => self.run_one(PredictorKind::Lp, eps, seed)?,
                "dis" => self.run_one(PredictorKind::Dis, eps, seed)?,
                _ => self.run_passive_one(eps, seed)?,
            };
            Ok(TrialOutcome { labels: report.total_labels, excess: report.final_excess.unwrap_or(f64::NAN) })
        })
    }
}

fn dim_of(class: &HypothesisClass) -> usize {
    use crate::class::Classifier;
    match class.classifier(0) {
        Classifier::Halfspace { w } => w.len(),
        _ => 1,
    }
}

fn csv_field(s: &str) -> String {
    s.replace([',', '\n', '\r'], ";")
}

pub fn runs_csv(results: &[TrialResult]) -> String {
    let mut out = format!("{RUNS_CSV_VERSION}\n{RUNS_HEADER}\n");
    for r in results {
        match &r.report {
            Ok(rep) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{},ok,{},{},{},{},{},{}",
                    r.trial,
                    r.seed,
                    rep.mode.as_str(),
                    rep.predictor,
                    rep.returned,
                    rep.total_labels,
                    rep.total_unlabeled,
                    rep.final_error.map(|v| v.to_string()).unwrap_or_default(),
                    rep.final_excess.map(|v| v.to_string()).unwrap_or_default(),
                    rep.epochs.len()
                );
            }
            Err(e) => {
                let _ = writeln!(out, "{},{},,,{},,,,,,", r.trial, r.seed, csv_field(&format!("error: {e}")));
            }
        }
    }
    out
}

pub fn report_json(report: &ExperimentReport) -> String {
    serde_json::to_string_pretty(report).expect("reports serialize")
}
