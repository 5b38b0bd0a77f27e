//! Seeded Monte Carlo sweeps.
//!
//! Trial `t` of sweep point `i` draws from its own ChaCha stream keyed by
//! `(master_seed, i, t)`, so results do not depend on scheduling.

use serde::{Deserialize, Serialize};

use crate::baselines::{run_ccce_frame, run_no_irs_frame, run_roadside};
use crate::channel::JakesCorrelator;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::protocol::{run_frame_on, FrameResult, Variant};
use crate::rng::{trial_rng, SimRng};

use super::config::{Scenario, SimConfig};
use super::metrics::{empirical_cdf, mean_and_stderr, nmse_single, to_db};

/// Per-trial result kept for aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub rate: f64,
    pub rate_stage1: f64,
    pub rate_stage2: f64,
    /// True and estimated effective phases when Stage I ran once.
    pub psi_true: Option<(f64, f64)>,
    pub psi_hat: Option<(f64, f64)>,
    /// Stage-II SNRs, linear.
    pub stage2_snr: Vec<f64>,
    /// SNR of every block, linear.
    pub snr_per_block: Vec<f64>,
}

impl TrialOutcome {
    fn from_frame(f: &FrameResult, with_estimate: bool) -> Self {
        TrialOutcome {
            rate: f.rate_overall,
            rate_stage1: f.rate_stage1,
            rate_stage2: f.rate_stage2,
            psi_true: with_estimate.then_some(f.psi_true),
            psi_hat: if with_estimate { f.psi_hat() } else { None },
            stage2_snr: f.stage2_snr().to_vec(),
            snr_per_block: f.snr_per_block.clone(),
        }
    }

    /// NMSE of the Stage-I phase estimate, if any.
    pub fn nmse(&self, m_x: usize, m_y: usize) -> Option<f64> {
        match (self.psi_true, self.psi_hat) {
            (Some(t), Some(h)) => nmse_single(t, h, m_x, m_y).ok(),
            _ => None,
        }
    }
}

/// State shared by all trials of one sweep point.
#[derive(Debug, Clone)]
pub struct PointContext {
    /// Direct-channel correlator over the whole drive (roadside scenarios).
    drive_jakes: Option<JakesCorrelator>,
}

impl PointContext {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        let drive_jakes = match cfg.scenario.deployment() {
            Some(_) => {
                let f_max = cfg.speed_mps / cfg.radio_params().wavelength();
                Some(JakesCorrelator::new(f_max, cfg.t_b, cfg.roadside.total_blocks)?)
            }
            None => None,
        };
        Ok(Self { drive_jakes })
    }
}

/// Run one trial of `cfg.scenario` (a single sweep point's configuration).
pub fn run_trial(cfg: &SimConfig, ctx: &PointContext, rng: &mut SimRng) -> Result<TrialOutcome> {
    let frame_cfg = cfg.frame_config();
    if let (Some(dep), Some(jakes)) = (cfg.scenario.deployment(), &ctx.drive_jakes) {
        // drawn first so every deployment sees the same direct channel for a given seed
        let direct = jakes.sample(1.0, rng);
        let scn = cfg.roadside_scenario(dep);
        let run = run_roadside(&scn, dep, &cfg.radio_params(), &frame_cfg, &direct, rng)?;
        let n = run.frames.len() as f64;
        return Ok(TrialOutcome {
            rate: run.mean_rate,
            rate_stage1: run.frames.iter().map(|f| f.rate_stage1).sum::<f64>() / n,
            rate_stage2: run.frames.iter().map(|f| f.rate_stage2).sum::<f64>() / n,
            psi_true: None,
            psi_hat: None,
            stage2_snr: run.frames.iter().flat_map(|f| f.stage2_snr().iter().copied()).collect(),
            snr_per_block: run.frames.iter().flat_map(|f| f.snr_per_block.iter().copied()).collect(),
        });
    }

    let channel = cfg.link_setup().draw(rng)?;
    let frame = channel.sample_frame(frame_cfg.n_blocks, rng)?;
    let (result, with_estimate) = match cfg.scenario {
        Scenario::Proposed => (run_frame_on(&frame_cfg, &frame, Variant::Proposed, rng)?, true),
        Scenario::PerfectPhase => (run_frame_on(&frame_cfg, &frame, Variant::PerfectPhase, rng)?, true),
        Scenario::NoCpa => (run_frame_on(&frame_cfg, &frame, Variant::NoCpa, rng)?, true),
        Scenario::Fd => (run_frame_on(&frame_cfg, &frame, Variant::FeedbackDelay, rng)?, true),
        Scenario::Ccce => (run_ccce_frame(&frame_cfg, &frame, rng)?, false),
        Scenario::NoIrs => (run_no_irs_frame(&frame_cfg, &frame)?, false),
        Scenario::RoadsideSingle | Scenario::RoadsideMulti | Scenario::VehicleSide => {
            unreachable!("drive scenarios handled above")
        }
    };
    Ok(TrialOutcome::from_frame(&result, with_estimate))
}

/// All trials of sweep point `sweep_index`, in trial order. The first
/// failing trial (by index) aborts with its identifiers attached.
pub fn run_point(cfg: &SimConfig, sweep_index: usize, exec: Execution) -> Result<Vec<TrialOutcome>> {
    let ctx = PointContext::new(cfg)?;
    let results = exec.map_indexed(cfg.n_trials, |t| {
        let mut rng = trial_rng(cfg.master_seed, sweep_index, t);
        run_trial(cfg, &ctx, &mut rng)
    });
    results
        .into_iter()
        .enumerate()
        .map(|(trial, r)| {
            r.map_err(|e| Error::Trial {
                sweep_index,
                trial,
                source: Box::new(e),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub master_seed: u64,
    pub code_version: String,
    pub n_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    /// `None` without a sweep.
    pub sweep_value: Option<f64>,
    pub n_trials: usize,
    pub mean_rate: f64,
    pub stderr: f64,
    pub mean_rate_stage1: f64,
    pub mean_rate_stage2: f64,
    /// Mean steering-vector NMSE over trials that estimated the phases.
    pub nmse: Option<f64>,
    /// 10th percentile of the pooled Stage-II SNR, dB.
    pub snr_p10_db: f64,
    /// `(snr_db, prob)` quantile table of the pooled Stage-II SNR.
    pub cdf: Vec<(f64, f64)>,
    /// Per-block SNR of trial 0, dB.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub scenario: Scenario,
    pub sweep_name: Option<String>,
    pub points: Vec<PointSummary>,
    pub provenance: Provenance,
}

/// Reduce one point's trials to its summary.
pub fn summarize(cfg: &SimConfig, sweep_value: Option<f64>, trials: &[TrialOutcome]) -> Result<PointSummary> {
    let rates: Vec<f64> = trials.iter().map(|t| t.rate).collect();
    let (mean_rate, stderr) = mean_and_stderr(&rates);
    let mean_of = |f: fn(&TrialOutcome) -> f64| trials.iter().map(f).sum::<f64>() / trials.len() as f64;
    let nmses: Vec<f64> = trials.iter().filter_map(|t| t.nmse(cfg.m_x, cfg.m_y)).collect();
    let snr_db: Vec<f64> = trials.iter().flat_map(|t| t.stage2_snr.iter().map(|&s| to_db(s))).collect();
    let cdf = empirical_cdf(&snr_db)?;
    Ok(PointSummary {
        sweep_value,
        n_trials: trials.len(),
        mean_rate,
        stderr,
        mean_rate_stage1: mean_of(|t| t.rate_stage1),
        mean_rate_stage2: mean_of(|t| t.rate_stage2),
        nmse: (!nmses.is_empty()).then(|| nmses.iter().sum::<f64>() / nmses.len() as f64),
        snr_p10_db: cdf.quantile(0.1),
        cdf: cdf.table(cfg.cdf_points),
        trace: trials[0].snr_per_block.iter().map(|&s| to_db(s)).collect(),
    })
}

pub fn run_experiment(cfg: &SimConfig) -> Result<ExperimentReport> {
    run_experiment_with(cfg, Execution::default())
}

/// Validate, then run every sweep point.
pub fn run_experiment_with(cfg: &SimConfig, exec: Execution) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut points = Vec::new();
    for (i, (value, point_cfg)) in cfg.sweep_points()?.into_iter().enumerate() {
        let trials = run_point(&point_cfg, i, exec)?;
        points.push(summarize(&point_cfg, value, &trials)?);
    }
    Ok(ExperimentReport {
        scenario: cfg.scenario,
        sweep_name: cfg.sweep.as_ref().map(|s| s.name.clone()),
        points,
        provenance: Provenance {
            config_hash: cfg.config_hash(),
            master_seed: cfg.master_seed,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            n_trials: cfg.n_trials,
        },
    })
}
