//! Monte-Carlo trial and sweep execution.
//!
//! A *trial* draws one channel/noise realization, runs the full
//! estimation-and-localization pipeline on it, and reports either the
//! estimates or the failure that stopped it. A *sweep* repeats trials over a
//! grid of configurations (transmit power, surface budget, antenna count,
//! scatterer sets, or an active/passive comparison) and aggregates RMSEs
//! next to the matching lower bounds.
//!
//! Reproducibility contract: every random draw comes from a counter-based
//! generator keyed by `(master seed, stream)`, with one stream per
//! `(point, trial)` pair. Trials are therefore independent of execution
//! order and thread count, and a repeated run is bit-identical. Two streams
//! are reserved: one for the representative realization on which the bounds
//! are evaluated, and one for the shared channel when
//! `freeze_channel_phases` is set.
//!
//! # Example
//!
//! ```
//! use fas_aris_loc::harness::config::ScenarioConfig;
//! use fas_aris_loc::harness::sweep::{run_trial, TrialOutcome};
//!
//! let mut cfg = ScenarioConfig::default();
//! cfg.fas_positions = 36;
//! cfg.slots = 16;
//! match run_trial(&cfg, 7, 0, 0).outcome {
//!     TrialOutcome::Ok(est) => {
//!         assert!((est.position - cfg.user_position).norm() < 1.0);
//!     }
//!     TrialOutcome::Failed(e) => panic!("trial failed: {e}"),
//! }
//! ```

use nalgebra::Point3;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use std::str::FromStr;
use thiserror::Error;

use crate::bounds::{
    fim_bundle, surface_noise_diagonal, BoundsContext, ChannelParams, CrbSummary,
};
use crate::channel::{build_channels, ChannelError};
use crate::estimation::{estimate_frame, EstimationContext, EstimationError};
use crate::geometry::{angle_difference, angles_between, AnglePair, GeometryError};
use crate::harness::config::ScenarioConfig;
use crate::localization::{locate, LocalizationError};
use crate::waveform::{
    amplification_from_epsilon, make_pilots, make_weights, synthesize_rx, WaveformError,
};

/// RNG stream that holds the shared channel when phases are frozen.
const FROZEN_CHANNEL_STREAM: u64 = u64::MAX - 1;

/// RNG stream of the representative realization used for the bounds.
fn reference_stream(point_idx: u32) -> u64 {
    ((point_idx as u64) << 32) | u64::from(u32::MAX)
}

/// RNG stream of one Monte-Carlo trial.
fn trial_stream(point_idx: u32, trial_idx: u32) -> u64 {
    ((point_idx as u64) << 32) | trial_idx as u64
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Why one trial produced no estimate.
#[derive(Debug, Error)]
pub enum TrialError {
    /// Degenerate deployment geometry.
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    /// Array or path construction failed.
    #[error(transparent)]
    Channel(#[from] ChannelError),
    /// Frame synthesis was misconfigured.
    #[error(transparent)]
    Waveform(#[from] WaveformError),
    /// The estimation pipeline gave up (no peak, infeasible cascade, …).
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    /// Bearings could not be intersected.
    #[error(transparent)]
    Localization(#[from] LocalizationError),
}

/// Sweep-level failure: an unusable grid or deployment.
#[derive(Debug, Error)]
pub enum HarnessError {
    /// The per-axis value list in the config is empty.
    #[error("sweep grid {0} is empty in the config")]
    EmptySweepGrid(&'static str),
    /// The scatterer sweep has nothing to toggle.
    #[error("the scatterer sweep needs at least one scatterer in the config")]
    NoScatterers,
    /// True angles are undefined (coincident nodes).
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Estimates of one successful trial.
#[derive(Debug, Clone, Copy)]
pub struct TrialEstimate {
    /// Estimated user→BS arrival direction.
    pub theta_ub: AnglePair,
    /// Estimated user→surface arrival direction.
    pub theta_ur: AnglePair,
    /// Estimated user position (m).
    pub position: Point3<f64>,
    /// Surface amplification used in this trial.
    pub amplification: f64,
}

/// What one trial produced.
#[derive(Debug)]
pub enum TrialOutcome {
    /// The pipeline ran to completion.
    Ok(TrialEstimate),
    /// The pipeline aborted; the trial counts as a failure.
    Failed(TrialError),
}

/// One executed trial.
#[derive(Debug)]
pub struct TrialRun {
    /// Estimates or the failure reason.
    pub outcome: TrialOutcome,
}

/// Runs one seeded trial of the full pipeline: channel draw, frame
/// synthesis, angle estimation, and position fix.
pub fn run_trial(cfg: &ScenarioConfig, seed: u64, point_idx: u32, trial_idx: u32) -> TrialRun {
    TrialRun {
        outcome: match simulate_trial(cfg, seed, point_idx, trial_idx) {
            Ok(est) => TrialOutcome::Ok(est),
            Err(e) => TrialOutcome::Failed(e),
        },
    }
}

fn simulate_trial(
    cfg: &ScenarioConfig,
    seed: u64,
    point_idx: u32,
    trial_idx: u32,
) -> Result<TrialEstimate, TrialError> {
    let scenario = cfg.scenario()?;
    let noise = cfg.noise_model();
    let power = cfg.pilot_power_watts();
    let mut rng = stream_rng(seed, trial_stream(point_idx, trial_idx));
    let channel = if cfg.freeze_channel_phases {
        build_channels(&scenario, &mut stream_rng(seed, FROZEN_CHANNEL_STREAM))?
    } else {
        build_channels(&scenario, &mut rng)?
    };
    let pilots = make_pilots(cfg.slots, power, &mut rng)?;
    let amplification = if cfg.passive_surface {
        1.0
    } else {
        amplification_from_epsilon(
            cfg.amplification_law(),
            cfg.epsilon,
            power,
            &channel.h_ur,
            noise.sigma_r2,
        )
    };
    let weights = make_weights(cfg.slots, scenario.aris.len(), amplification, &mut rng)?;
    let sigma_eff2 = if cfg.passive_surface {
        0.0
    } else {
        noise.aris_sigma_eff2(amplification)
    };
    let frame = synthesize_rx(
        &channel,
        &pilots,
        &weights,
        noise.sigma_b2,
        sigma_eff2,
        &mut rng,
    );
    let est_cfg = cfg.estimation_config();
    let ctx = EstimationContext {
        fas: &scenario.fas,
        aris: &scenario.aris,
        wavelength: scenario.wavelength,
        known_rb_arrival: angles_between(&cfg.ris_position, &cfg.bs_position)?,
        known_rb_departure: angles_between(&cfg.bs_position, &cfg.ris_position)?,
        config: &est_cfg,
    };
    let report = estimate_frame(&ctx, &frame.y, &pilots, &weights)?;
    let position = locate(&[
        (cfg.bs_position, report.theta_ub),
        (cfg.ris_position, report.theta_ur),
    ])?;
    Ok(TrialEstimate {
        theta_ub: report.theta_ub,
        theta_ur: report.theta_ur,
        position,
        amplification,
    })
}

/// Bounds evaluated on the point's representative realization.
struct PointReference {
    crb: CrbSummary,
    amplification: f64,
    sigma_eff2: f64,
}

fn point_reference(cfg: &ScenarioConfig, seed: u64, point_idx: u32) -> Option<PointReference> {
    let scenario = cfg.scenario().ok()?;
    let noise = cfg.noise_model();
    let power = cfg.pilot_power_watts();
    let stream = if cfg.freeze_channel_phases {
        FROZEN_CHANNEL_STREAM
    } else {
        reference_stream(point_idx)
    };
    let mut rng = stream_rng(seed, stream);
    let channel = build_channels(&scenario, &mut rng).ok()?;
    let pilots = make_pilots(cfg.slots, power, &mut rng).ok()?;
    let amplification = if cfg.passive_surface {
        1.0
    } else {
        amplification_from_epsilon(
            cfg.amplification_law(),
            cfg.epsilon,
            power,
            &channel.h_ur,
            noise.sigma_r2,
        )
    };
    let weights = make_weights(cfg.slots, scenario.aris.len(), amplification, &mut rng).ok()?;
    let sigma_eff2 = if cfg.passive_surface {
        0.0
    } else {
        noise.aris_sigma_eff2(amplification)
    };
    let ctx = BoundsContext {
        fas: &scenario.fas,
        aris: &scenario.aris,
        wavelength: scenario.wavelength,
        rb_arrival: angles_between(&cfg.ris_position, &cfg.bs_position).ok()?,
        rb_departure: angles_between(&cfg.bs_position, &cfg.ris_position).ok()?,
        pilots: &pilots,
        weights: &weights,
        sigma_b2: noise.sigma_b2,
        surface_noise_diag: surface_noise_diagonal(&channel.h_rb, amplification, sigma_eff2),
    };
    // The bound is evaluated at the direct-path parameters; with scatterers
    // configured it stays the clean two-path reference curve.
    let params = ChannelParams {
        rho_ub: channel.paths_ub[0].gain,
        rho_urb: channel.paths_ur[0].gain * channel.paths_rb[0].gain,
        theta_ub: channel.paths_ub[0].angles,
        theta_ur: channel.paths_ur[0].angles,
    };
    let bundle = fim_bundle(
        &ctx,
        &params,
        &cfg.user_position,
        &cfg.bs_position,
        &cfg.ris_position,
    )
    .ok()?;
    Some(PointReference {
        crb: bundle.crb,
        amplification,
        sigma_eff2,
    })
}

/// Aggregated results of one sweep point.
#[derive(Debug, Clone)]
pub struct PointResult {
    /// The swept quantity's value at this point.
    pub sweep_value: f64,
    /// RMSE of the user→BS elevation (rad), failures excluded.
    pub rmse_theta_ub_el: f64,
    /// RMSE of the user→BS azimuth (rad), wrap-corrected.
    pub rmse_theta_ub_az: f64,
    /// Bound on `rmse_theta_ub_el` (rad).
    pub crb_theta_ub_el: f64,
    /// Bound on `rmse_theta_ub_az` (rad).
    pub crb_theta_ub_az: f64,
    /// RMSE of the user→surface elevation (rad).
    pub rmse_theta_ur_el: f64,
    /// RMSE of the user→surface azimuth (rad), wrap-corrected.
    pub rmse_theta_ur_az: f64,
    /// Bound on `rmse_theta_ur_el` (rad).
    pub crb_theta_ur_el: f64,
    /// Bound on `rmse_theta_ur_az` (rad).
    pub crb_theta_ur_az: f64,
    /// RMSE of the 3-D position error (m).
    pub rmse_pu: f64,
    /// Position error bound (m).
    pub peb: f64,
    /// Trials attempted.
    pub trials: usize,
    /// Trials that aborted (excluded from every RMSE).
    pub failures: usize,
    /// Surface amplification of the representative realization (metadata,
    /// not part of the CSV schema).
    pub amplification: f64,
    /// Effective surface noise of the representative realization (metadata).
    pub sigma_eff2: f64,
}

/// One trial's errors for the optional per-trial log.
#[derive(Debug, Clone)]
pub struct TrialLogRow {
    /// Sweep point index.
    pub point_idx: u32,
    /// The swept quantity's value at that point.
    pub sweep_value: f64,
    /// Trial index within the point.
    pub trial_idx: u32,
    /// `"ok"` or the failure description.
    pub status: String,
    /// Signed user→BS elevation error (rad); NaN on failure.
    pub err_theta_ub_el: f64,
    /// Signed, wrap-corrected user→BS azimuth error (rad).
    pub err_theta_ub_az: f64,
    /// Signed user→surface elevation error (rad).
    pub err_theta_ur_el: f64,
    /// Signed, wrap-corrected user→surface azimuth error (rad).
    pub err_theta_ur_az: f64,
    /// Euclidean position error (m).
    pub err_pu: f64,
}

/// One labelled result table; a sweep yields one of these, except the
/// active/passive comparison which yields two.
#[derive(Debug, Clone)]
pub struct NamedSweep {
    /// Table name, used as the output file stem.
    pub name: String,
    /// What `sweep_value` means in this table.
    pub value_key: String,
    /// One row per sweep point, in grid order.
    pub points: Vec<PointResult>,
    /// Per-trial rows when trial logging was requested.
    pub trial_log: Vec<TrialLogRow>,
}

/// Which configuration axis a sweep walks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// User transmit power over `power_sweep_dbm`.
    Power,
    /// Surface power budget over `epsilon_sweep`.
    Epsilon,
    /// Fluid-antenna position count over `fas_sweep`.
    FasSteps,
    /// Scatterer sets at `scatterers_sweep_p_dbm`.
    Scatterers,
    /// Active vs. passive surface over `power_sweep_dbm`.
    PassiveCompare,
}

impl SweepAxis {
    /// Command-line / file-stem label.
    pub fn label(self) -> &'static str {
        match self {
            SweepAxis::Power => "power",
            SweepAxis::Epsilon => "epsilon",
            SweepAxis::FasSteps => "fas-steps",
            SweepAxis::Scatterers => "scatterers",
            SweepAxis::PassiveCompare => "passive-compare",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "power" => Ok(SweepAxis::Power),
            "epsilon" => Ok(SweepAxis::Epsilon),
            "fas-steps" => Ok(SweepAxis::FasSteps),
            "scatterers" => Ok(SweepAxis::Scatterers),
            "passive-compare" => Ok(SweepAxis::PassiveCompare),
            _ => Err(format!(
                "unknown sweep {s:?}; expected power, epsilon, fas-steps, scatterers, or passive-compare"
            )),
        }
    }
}

/// Runs all trials of one point configuration and aggregates them.
fn run_point(
    cfg: &ScenarioConfig,
    seed: u64,
    point_idx: u32,
    sweep_value: f64,
    log_trials: bool,
) -> Result<(PointResult, Vec<TrialLogRow>), HarnessError> {
    let true_ub = angles_between(&cfg.user_position, &cfg.bs_position)?;
    let true_ur = angles_between(&cfg.user_position, &cfg.ris_position)?;
    let reference = point_reference(cfg, seed, point_idx);
    let runs: Vec<TrialRun> = (0..cfg.trials as u32)
        .into_par_iter()
        .map(|t| run_trial(cfg, seed, point_idx, t))
        .collect();

    let mut sum_sq = [0.0f64; 5];
    let mut ok = 0usize;
    let mut rows = Vec::new();
    for (t, run) in runs.iter().enumerate() {
        match &run.outcome {
            TrialOutcome::Ok(est) => {
                let errs = [
                    est.theta_ub.el - true_ub.el,
                    angle_difference(est.theta_ub.az, true_ub.az),
                    est.theta_ur.el - true_ur.el,
                    angle_difference(est.theta_ur.az, true_ur.az),
                    (est.position - cfg.user_position).norm(),
                ];
                for (s, e) in sum_sq.iter_mut().zip(errs) {
                    *s += e * e;
                }
                ok += 1;
                if log_trials {
                    rows.push(TrialLogRow {
                        point_idx,
                        sweep_value,
                        trial_idx: t as u32,
                        status: "ok".into(),
                        err_theta_ub_el: errs[0],
                        err_theta_ub_az: errs[1],
                        err_theta_ur_el: errs[2],
                        err_theta_ur_az: errs[3],
                        err_pu: errs[4],
                    });
                }
            }
            TrialOutcome::Failed(e) => {
                if log_trials {
                    rows.push(TrialLogRow {
                        point_idx,
                        sweep_value,
                        trial_idx: t as u32,
                        status: e.to_string(),
                        err_theta_ub_el: f64::NAN,
                        err_theta_ub_az: f64::NAN,
                        err_theta_ur_el: f64::NAN,
                        err_theta_ur_az: f64::NAN,
                        err_pu: f64::NAN,
                    });
                }
            }
        }
    }
    let rmse = |s: f64| {
        if ok > 0 {
            (s / ok as f64).sqrt()
        } else {
            f64::NAN
        }
    };
    let (crb, amplification, sigma_eff2) = match reference {
        Some(r) => (r.crb, r.amplification, r.sigma_eff2),
        None => (
            CrbSummary {
                theta_ub_el: f64::NAN,
                theta_ub_az: f64::NAN,
                theta_ur_el: f64::NAN,
                theta_ur_az: f64::NAN,
                peb: f64::NAN,
            },
            f64::NAN,
            f64::NAN,
        ),
    };
    Ok((
        PointResult {
            sweep_value,
            rmse_theta_ub_el: rmse(sum_sq[0]),
            rmse_theta_ub_az: rmse(sum_sq[1]),
            crb_theta_ub_el: crb.theta_ub_el,
            crb_theta_ub_az: crb.theta_ub_az,
            rmse_theta_ur_el: rmse(sum_sq[2]),
            rmse_theta_ur_az: rmse(sum_sq[3]),
            crb_theta_ur_el: crb.theta_ur_el,
            crb_theta_ur_az: crb.theta_ur_az,
            rmse_pu: rmse(sum_sq[4]),
            peb: crb.peb,
            trials: cfg.trials,
            failures: cfg.trials - ok,
            amplification,
            sigma_eff2,
        },
        rows,
    ))
}

fn sweep_over<T: Copy>(
    cfg: &ScenarioConfig,
    seed: u64,
    log_trials: bool,
    name: &str,
    value_key: &str,
    grid: &[T],
    value_of: impl Fn(T) -> f64,
    apply: impl Fn(&mut ScenarioConfig, T),
) -> Result<NamedSweep, HarnessError> {
    let mut points = Vec::with_capacity(grid.len());
    let mut trial_log = Vec::new();
    for (i, &v) in grid.iter().enumerate() {
        let mut point_cfg = cfg.clone();
        apply(&mut point_cfg, v);
        let (point, rows) = run_point(&point_cfg, seed, i as u32, value_of(v), log_trials)?;
        points.push(point);
        trial_log.extend(rows);
    }
    Ok(NamedSweep {
        name: name.into(),
        value_key: value_key.into(),
        points,
        trial_log,
    })
}

/// Runs a full sweep. Results come back in grid order; with the same config
/// and seed the output is bit-identical regardless of thread count.
pub fn run_sweep(
    cfg: &ScenarioConfig,
    axis: SweepAxis,
    seed: u64,
    log_trials: bool,
) -> Result<Vec<NamedSweep>, HarnessError> {
    match axis {
        SweepAxis::Power => {
            if cfg.power_sweep_dbm.is_empty() {
                return Err(HarnessError::EmptySweepGrid("power_sweep_dbm"));
            }
            Ok(vec![sweep_over(
                cfg,
                seed,
                log_trials,
                "power",
                "tx_power_dbm",
                &cfg.power_sweep_dbm,
                |v| v,
                |c, v| c.tx_power_dbm = v,
            )?])
        }
        SweepAxis::Epsilon => {
            if cfg.epsilon_sweep.is_empty() {
                return Err(HarnessError::EmptySweepGrid("epsilon_sweep"));
            }
            Ok(vec![sweep_over(
                cfg,
                seed,
                log_trials,
                "epsilon",
                "epsilon",
                &cfg.epsilon_sweep,
                |v| v,
                |c, v| c.epsilon = v,
            )?])
        }
        SweepAxis::FasSteps => {
            if cfg.fas_sweep.is_empty() {
                return Err(HarnessError::EmptySweepGrid("fas_sweep"));
            }
            Ok(vec![sweep_over(
                cfg,
                seed,
                log_trials,
                "fas_steps",
                "fas_positions",
                &cfg.fas_sweep,
                |v| v as f64,
                |c, v| c.fas_positions = v,
            )?])
        }
        SweepAxis::Scatterers => {
            if cfg.scatterers_ue_ris.is_empty()
                && cfg.scatterers_ris_bs.is_empty()
                && cfg.scatterers_ue_bs.is_empty()
            {
                return Err(HarnessError::NoScatterers);
            }
            // (keep user→surface, keep surface→BS, keep user→BS)
            let variants: [(bool, bool, bool); 5] = [
                (false, false, false),
                (true, false, false),
                (false, true, false),
                (false, false, true),
                (true, true, true),
            ];
            let sweep = sweep_over(
                cfg,
                seed,
                log_trials,
                "scatterers",
                "scatterer_set (0=none, 1=ue_ris, 2=ris_bs, 3=ue_bs, 4=all)",
                &[0usize, 1, 2, 3, 4],
                |v| v as f64,
                |c, v| {
                    let (keep_ur, keep_rb, keep_ub) = variants[v];
                    c.tx_power_dbm = cfg.scatterers_sweep_p_dbm;
                    if !keep_ur {
                        c.scatterers_ue_ris.clear();
                    }
                    if !keep_rb {
                        c.scatterers_ris_bs.clear();
                    }
                    if !keep_ub {
                        c.scatterers_ue_bs.clear();
                    }
                },
            )?;
            Ok(vec![sweep])
        }
        SweepAxis::PassiveCompare => {
            if cfg.power_sweep_dbm.is_empty() {
                return Err(HarnessError::EmptySweepGrid("power_sweep_dbm"));
            }
            let active = sweep_over(
                cfg,
                seed,
                log_trials,
                "passive_compare_active",
                "tx_power_dbm",
                &cfg.power_sweep_dbm,
                |v| v,
                |c, v| {
                    c.tx_power_dbm = v;
                    c.passive_surface = false;
                },
            )?;
            let passive = sweep_over(
                cfg,
                seed,
                log_trials,
                "passive_compare_passive",
                "tx_power_dbm",
                &cfg.power_sweep_dbm,
                |v| v,
                |c, v| {
                    c.tx_power_dbm = v;
                    c.passive_surface = true;
                },
            )?;
            Ok(vec![active, passive])
        }
    }
}
