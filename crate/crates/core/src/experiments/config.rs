//! Experiment configuration, read from JSON or assembled from CLI flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::BaselineParams;
use crate::error::{Error, Result};
use crate::iada::ScheduleKind;
use crate::solvers::InnerChoice;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Lasso,
    Exchange,
    Logreg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Ada,
    Iada,
    Vsadmm,
    Proxjadmm,
    Admm2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopSetting {
    XChange,
    Feasibility,
    MaxIters,
    /// Consensus ratio and objective gap against a high-accuracy reference.
    Consensus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default = "default_kind")]
    pub kind: ScheduleKind,
    #[serde(default = "default_eps0")]
    pub eps0: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_kind() -> ScheduleKind {
    ScheduleKind::CriterionA
}
fn default_eps0() -> f64 {
    1.0
}
fn default_gamma() -> f64 {
    1.5
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            kind: default_kind(),
            eps0: default_eps0(),
            gamma: default_gamma(),
        }
    }
}

/// One experiment. Dimensions left unset take desk-scale defaults:
/// lasso 200×800, exchange K=5 blocks of n=100 with p=80 rows, logistic
/// regression 2000×50 split four ways.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default = "default_solver")]
    pub solver: SolverKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Rows (lasso, logreg) or block dimension (exchange).
    #[serde(default)]
    pub n: Option<usize>,
    /// Columns (lasso, logreg).
    #[serde(default)]
    pub d: Option<usize>,
    /// Number of blocks K (exchange).
    #[serde(default)]
    pub blocks: Option<usize>,
    /// Rows per block (exchange).
    #[serde(default)]
    pub p: Option<usize>,
    /// Row partitions N (logreg).
    #[serde(default)]
    pub partitions: Option<usize>,
    /// ℓ1 weight for logreg (defaults to 0.1).
    #[serde(default)]
    pub lambda: Option<f64>,
    /// LIBSVM file replacing the synthetic logreg data.
    #[serde(default)]
    pub libsvm: Option<PathBuf>,
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_stop_eps")]
    pub stop_eps: f64,
    #[serde(default = "default_stop_mode")]
    pub stop_mode: StopSetting,
    /// Objective-gap tolerance of the consensus stop.
    #[serde(default = "default_gap_tol")]
    pub gap_tol: f64,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    /// Inner solver for smooth blocks; L-BFGS for `iada`, factorization otherwise.
    #[serde(default)]
    pub inner: Option<InnerChoice>,
    #[serde(default)]
    pub baseline: BaselineParams,
    /// Also run to 1e-12 and report Fejér, ergodic and tail-rate checks.
    #[serde(default)]
    pub reference: bool,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_solver() -> SolverKind {
    SolverKind::Ada
}
fn default_seed() -> u64 {
    1
}
fn default_max_iters() -> usize {
    5000
}
fn default_stop_eps() -> f64 {
    1e-8
}
fn default_stop_mode() -> StopSetting {
    StopSetting::XChange
}
fn default_gap_tol() -> f64 {
    1e-10
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// Config with every optional field at its default.
    pub fn new(experiment: ExperimentKind) -> Self {
        ExperimentConfig {
            experiment,
            solver: default_solver(),
            seed: default_seed(),
            n: None,
            d: None,
            blocks: None,
            p: None,
            partitions: None,
            lambda: None,
            libsvm: None,
            rho: None,
            c: None,
            max_iters: default_max_iters(),
            stop_eps: default_stop_eps(),
            stop_mode: default_stop_mode(),
            gap_tol: default_gap_tol(),
            schedule: ScheduleConfig::default(),
            inner: None,
            baseline: BaselineParams::default(),
            reference: false,
            out: default_out(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// `(rho, c)` with per-experiment defaults (lasso 5, otherwise 10).
    pub fn rho_c(&self) -> (f64, f64) {
        let default = match self.experiment {
            ExperimentKind::Lasso => 5.0,
            ExperimentKind::Exchange | ExperimentKind::Logreg => 10.0,
        };
        (self.rho.unwrap_or(default), self.c.unwrap_or(default))
    }

    pub fn inner_choice(&self) -> InnerChoice {
        self.inner.unwrap_or(match self.solver {
            SolverKind::Iada => InnerChoice::Lbfgs,
            _ => InnerChoice::Direct,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.n, self.d, self.blocks, self.p, self.partitions];
        if positive.contains(&Some(0)) {
            return Err(Error::Config("dimensions must be positive".into()));
        }
        if self.blocks.is_some_and(|k| k < 2) {
            return Err(Error::Config("exchange needs at least two blocks".into()));
        }
        let (rho, c) = self.rho_c();
        if !(rho > 0.0) || !(c > 0.0) {
            return Err(Error::Config(format!("rho and c must be positive, got {rho}, {c}")));
        }
        if !(self.stop_eps > 0.0) {
            return Err(Error::Config("stop_eps must be positive".into()));
        }
        if self.solver == SolverKind::Admm2 && self.experiment != ExperimentKind::Lasso {
            return Err(Error::Config("admm2 runs only on the lasso experiment".into()));
        }
        if self.stop_mode == StopSetting::Consensus && self.experiment != ExperimentKind::Logreg {
            return Err(Error::Config("the consensus stop applies to logreg only".into()));
        }
        self.baseline.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"experiment": "lasso"}"#).unwrap();
        assert_eq!(cfg, ExperimentConfig::new(ExperimentKind::Lasso));
        assert_eq!(cfg.rho_c(), (5.0, 5.0));
        assert_eq!(cfg.baseline.admm_step, 1.618);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            ExperimentConfig::from_json(r#"{"experiment": "lasso", "bogus": 1}"#),
            Err(Error::Config(_))
        ));
        assert!(ExperimentConfig::from_json(r#"{"experiment": "nope"}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"experiment": "lasso", "solver": "sgd"}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"experiment": "lasso", "schedule": {"kind": "exact", "x": 1}}"#).is_err());
    }

    #[test]
    fn full_config_round_trips() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::Logreg);
        cfg.solver = SolverKind::Iada;
        cfg.partitions = Some(3);
        cfg.stop_mode = StopSetting::Consensus;
        cfg.schedule.kind = ScheduleKind::CriterionB;
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
        assert_eq!(cfg.inner_choice(), InnerChoice::Lbfgs);
    }

    #[test]
    fn inconsistent_settings_fail() {
        assert!(ExperimentConfig::from_json(r#"{"experiment": "exchange", "solver": "admm2"}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"experiment": "lasso", "n": 0}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"experiment": "lasso", "rho": -1}"#).is_err());
    }
}
