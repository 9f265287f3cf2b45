//! Flat key=value scenario configuration.
//!
//! The file format is deliberately plain: one `key = value` per line, `#`
//! starts a comment, positions are comma triples `x,y,z`, numeric lists are
//! comma separated, and the three `scatterer_*` keys append (repeat the key
//! once per scatterer). Unknown keys and malformed values are rejected with
//! the offending line number. Later occurrences of a scalar key override
//! earlier ones.

use nalgebra::Point3;
use std::fmt::Write as _;
use thiserror::Error;

use crate::channel::{ArisGeometry, ChannelError, FasGeometry, ScatterGainModel, Scenario};
use crate::estimation::EstimationConfig;
use crate::waveform::{noise_power, AmplificationLaw, NoiseModel};
use crate::SPEED_OF_LIGHT;

/// How the surface power-budget ratio maps to per-element amplification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpsilonMapping {
    /// Fixed conversion gain per unit budget (`p = √(ε·gain_ref)`).
    FixedGain,
    /// Budget spent on re-radiating the instantaneous input power.
    InputPowerBudget,
}

impl EpsilonMapping {
    /// Identifier used in config files and run metadata.
    pub fn label(self) -> &'static str {
        match self {
            EpsilonMapping::FixedGain => "fixed-gain",
            EpsilonMapping::InputPowerBudget => "input-power-budget",
        }
    }
}

/// Full simulation setup with deployment-study defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// Carrier frequency (Hz).
    pub carrier_hz: f64,
    /// BS reference position (m).
    pub bs_position: Point3<f64>,
    /// Surface reference position (m).
    pub ris_position: Point3<f64>,
    /// True user position (m).
    pub user_position: Point3<f64>,
    /// Fluid-antenna position count `N` (perfect square).
    pub fas_positions: usize,
    /// Surface elements along y.
    pub ris_elements_y: usize,
    /// Surface elements along z.
    pub ris_elements_z: usize,
    /// Frame length `T` (even).
    pub slots: usize,
    /// User transmit power (dBm).
    pub tx_power_dbm: f64,
    /// Surface power-budget ratio ε.
    pub epsilon: f64,
    /// Passive surface: unit amplification and no injected noise.
    pub passive_surface: bool,
    /// Receiver bandwidth (Hz).
    pub bandwidth_hz: f64,
    /// Receiver noise figure (dB), shared by BS and surface front ends.
    pub noise_figure_db: f64,
    /// ε→amplification law.
    pub epsilon_mapping: EpsilonMapping,
    /// Conversion gain at ε = 1 for the fixed-gain law.
    pub gain_ref: f64,
    /// Amplifier excess-noise knee (`p²` units).
    pub excess_knee: f64,
    /// Amplifier excess-noise exponent.
    pub excess_exponent: f64,
    /// Scatterers on the user→surface link.
    pub scatterers_ue_ris: Vec<Point3<f64>>,
    /// Scatterers on the surface→BS link.
    pub scatterers_ris_bs: Vec<Point3<f64>>,
    /// Scatterers on the user→BS link.
    pub scatterers_ue_bs: Vec<Point3<f64>>,
    /// Scattered-path amplitude model.
    pub scatter_model: ScatterGainModel,
    /// Scattered-path reflection loss.
    pub scatter_loss: f64,
    /// MUSIC grid points per cosine axis.
    pub music_grid: usize,
    /// Cascaded scan grid step.
    pub cascade_grid_step: f64,
    /// Refinement step tolerance.
    pub refine_tol: f64,
    /// Assumed direct-branch source count; 0 = auto (1 + user→BS scatterers).
    pub b_los: usize,
    /// Assumed surface-branch source count; 0 = auto (1 + surface→BS
    /// scatterers).
    pub b_nlos: usize,
    /// Monte-Carlo trials per sweep point.
    pub trials: usize,
    /// Reuse one channel realization (path phases) for every trial.
    pub freeze_channel_phases: bool,
    /// Transmit powers of the power and passive-compare sweeps (dBm).
    pub power_sweep_dbm: Vec<f64>,
    /// Budget ratios of the ε sweep.
    pub epsilon_sweep: Vec<f64>,
    /// Position counts of the fluid-antenna sweep.
    pub fas_sweep: Vec<usize>,
    /// Transmit power pinning the scatterer sweep (dBm).
    pub scatterers_sweep_p_dbm: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            carrier_hz: 2.8e9,
            bs_position: Point3::new(0.0, 0.0, 10.0),
            ris_position: Point3::new(-10.0, 23.3, 0.5),
            user_position: Point3::new(3.5, 26.7, 0.7),
            fas_positions: 100,
            ris_elements_y: 10,
            ris_elements_z: 10,
            slots: 100,
            tx_power_dbm: 15.0,
            epsilon: 0.8,
            passive_surface: false,
            bandwidth_hz: 1e8,
            noise_figure_db: 18.0,
            epsilon_mapping: EpsilonMapping::FixedGain,
            gain_ref: 63.0,
            excess_knee: 7.87,
            excess_exponent: 2.0,
            scatterers_ue_ris: vec![],
            scatterers_ris_bs: vec![],
            scatterers_ue_bs: vec![],
            scatter_model: ScatterGainModel::PathLength,
            scatter_loss: 0.5,
            music_grid: 201,
            cascade_grid_step: 0.01,
            refine_tol: 1e-9,
            b_los: 0,
            b_nlos: 0,
            trials: 200,
            freeze_channel_phases: false,
            power_sweep_dbm: vec![
                -20.0, -15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0,
            ],
            epsilon_sweep: vec![0.01, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 30.0],
            fas_sweep: vec![36, 64, 100, 144],
            scatterers_sweep_p_dbm: 30.0,
        }
    }
}

impl ScenarioConfig {
    /// Carrier wavelength (m).
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// User transmit power (W).
    pub fn pilot_power_watts(&self) -> f64 {
        dbm_to_watts(self.tx_power_dbm)
    }

    /// Receiver and surface noise parameters. A passive surface injects no
    /// noise.
    pub fn noise_model(&self) -> NoiseModel {
        let floor = noise_power(self.bandwidth_hz, self.noise_figure_db);
        NoiseModel {
            sigma_b2: floor,
            sigma_r2: if self.passive_surface { 0.0 } else { floor },
            excess_knee: self.excess_knee,
            excess_exponent: self.excess_exponent,
        }
    }

    /// Configured ε→amplification law.
    pub fn amplification_law(&self) -> AmplificationLaw {
        match self.epsilon_mapping {
            EpsilonMapping::FixedGain => AmplificationLaw::FixedGain {
                gain_ref: self.gain_ref,
            },
            EpsilonMapping::InputPowerBudget => AmplificationLaw::InputPowerBudget,
        }
    }

    /// Builds the deployment geometry and scatter lists.
    pub fn scenario(&self) -> Result<Scenario, ChannelError> {
        let lam = self.wavelength();
        Ok(Scenario {
            wavelength: lam,
            fas: FasGeometry::new(self.bs_position, self.fas_positions, lam / 2.0)?,
            aris: ArisGeometry::new(
                self.ris_position,
                self.ris_elements_y,
                self.ris_elements_z,
                lam / 2.0,
            )?,
            user_position: self.user_position,
            scatterers_ue_ris: self.scatterers_ue_ris.clone(),
            scatterers_ris_bs: self.scatterers_ris_bs.clone(),
            scatterers_ue_bs: self.scatterers_ue_bs.clone(),
            scatter_gain_model: self.scatter_model,
            scatter_loss: self.scatter_loss,
        })
    }

    /// Estimation knobs with the source counts resolved (`0` = one source
    /// per configured scatterer plus the direct path) and the half-spaces
    /// read off the deployment: sources lie on the surface's side of the BS
    /// plane, and on the BS's side of the surface plane.
    pub fn estimation_config(&self) -> EstimationConfig {
        EstimationConfig {
            music_grid: self.music_grid,
            n_sources_los: if self.b_los > 0 {
                self.b_los
            } else {
                1 + self.scatterers_ue_bs.len()
            },
            n_sources_nlos: if self.b_nlos > 0 {
                self.b_nlos
            } else {
                1 + self.scatterers_ris_bs.len()
            },
            bs_half_space_positive_y: self.ris_position.y >= self.bs_position.y,
            aris_half_space_positive_x: self.bs_position.x >= self.ris_position.x,
            cascade_grid_step: self.cascade_grid_step,
            refine_tol: self.refine_tol,
        }
    }

    /// Serializes every resolved field in the config-file syntax; parsing it
    /// back reproduces the config exactly.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let p = |v: &Point3<f64>| format!("{},{},{}", v.x, v.y, v.z);
        let list_f = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let list_u = |v: &[usize]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let _ = writeln!(s, "carrier_hz = {}", self.carrier_hz);
        let _ = writeln!(s, "bs_position = {}", p(&self.bs_position));
        let _ = writeln!(s, "ris_position = {}", p(&self.ris_position));
        let _ = writeln!(s, "user_position = {}", p(&self.user_position));
        let _ = writeln!(s, "fas_positions = {}", self.fas_positions);
        let _ = writeln!(s, "ris_elements_y = {}", self.ris_elements_y);
        let _ = writeln!(s, "ris_elements_z = {}", self.ris_elements_z);
        let _ = writeln!(s, "slots = {}", self.slots);
        let _ = writeln!(s, "tx_power_dbm = {}", self.tx_power_dbm);
        let _ = writeln!(s, "epsilon = {}", self.epsilon);
        let _ = writeln!(s, "passive_surface = {}", self.passive_surface);
        let _ = writeln!(s, "bandwidth_hz = {}", self.bandwidth_hz);
        let _ = writeln!(s, "noise_figure_db = {}", self.noise_figure_db);
        let _ = writeln!(s, "epsilon_mapping = {}", self.epsilon_mapping.label());
        let _ = writeln!(s, "gain_ref = {}", self.gain_ref);
        let _ = writeln!(s, "excess_knee = {}", self.excess_knee);
        let _ = writeln!(s, "excess_exponent = {}", self.excess_exponent);
        for sc in &self.scatterers_ue_ris {
            let _ = writeln!(s, "scatterer_ue_ris = {}", p(sc));
        }
        for sc in &self.scatterers_ris_bs {
            let _ = writeln!(s, "scatterer_ris_bs = {}", p(sc));
        }
        for sc in &self.scatterers_ue_bs {
            let _ = writeln!(s, "scatterer_ue_bs = {}", p(sc));
        }
        let model = match self.scatter_model {
            ScatterGainModel::PathLength => "path-length",
            ScatterGainModel::TwoHopProduct => "two-hop-product",
        };
        let _ = writeln!(s, "scatter_model = {model}");
        let _ = writeln!(s, "scatter_loss = {}", self.scatter_loss);
        let _ = writeln!(s, "music_grid = {}", self.music_grid);
        let _ = writeln!(s, "cascade_grid_step = {}", self.cascade_grid_step);
        let _ = writeln!(s, "refine_tol = {}", self.refine_tol);
        let _ = writeln!(s, "b_los = {}", self.b_los);
        let _ = writeln!(s, "b_nlos = {}", self.b_nlos);
        let _ = writeln!(s, "trials = {}", self.trials);
        let _ = writeln!(s, "freeze_channel_phases = {}", self.freeze_channel_phases);
        let _ = writeln!(s, "power_sweep_dbm = {}", list_f(&self.power_sweep_dbm));
        let _ = writeln!(s, "epsilon_sweep = {}", list_f(&self.epsilon_sweep));
        let _ = writeln!(s, "fas_sweep = {}", list_u(&self.fas_sweep));
        let _ = writeln!(
            s,
            "scatterers_sweep_p_dbm = {}",
            self.scatterers_sweep_p_dbm
        );
        s
    }
}

/// Converts dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Config parse failure with its line number.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ConfigError {
    /// 1-based line number.
    pub line: usize,
    /// What went wrong.
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        message: message.into(),
    }
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64, ConfigError> {
    v.parse()
        .map_err(|_| err(line, format!("invalid number for {key}: {v:?}")))
}

fn parse_usize(line: usize, key: &str, v: &str) -> Result<usize, ConfigError> {
    v.parse()
        .map_err(|_| err(line, format!("invalid integer for {key}: {v:?}")))
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(err(line, format!("expected true/false for {key}: {v:?}"))),
    }
}

fn parse_point(line: usize, key: &str, v: &str) -> Result<Point3<f64>, ConfigError> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(err(line, format!("{key} needs three comma-separated values")));
    }
    Ok(Point3::new(
        parse_f64(line, key, parts[0])?,
        parse_f64(line, key, parts[1])?,
        parse_f64(line, key, parts[2])?,
    ))
}

fn parse_f64_list(line: usize, key: &str, v: &str) -> Result<Vec<f64>, ConfigError> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_f64(line, key, s))
        .collect()
}

fn parse_usize_list(line: usize, key: &str, v: &str) -> Result<Vec<usize>, ConfigError> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_usize(line, key, s))
        .collect()
}

/// Parses a config file body on top of the defaults.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut cfg = ScenarioConfig::default();
    let mut scatterers_cleared = (false, false, false);
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            return Err(err(line, format!("expected key = value, got {body:?}")));
        };
        let key = key.trim();
        let v = value.trim();
        match key {
            "carrier_hz" => cfg.carrier_hz = parse_f64(line, key, v)?,
            "bs_position" => cfg.bs_position = parse_point(line, key, v)?,
            "ris_position" => cfg.ris_position = parse_point(line, key, v)?,
            "user_position" => cfg.user_position = parse_point(line, key, v)?,
            "fas_positions" => cfg.fas_positions = parse_usize(line, key, v)?,
            "ris_elements_y" => cfg.ris_elements_y = parse_usize(line, key, v)?,
            "ris_elements_z" => cfg.ris_elements_z = parse_usize(line, key, v)?,
            "slots" => cfg.slots = parse_usize(line, key, v)?,
            "tx_power_dbm" => cfg.tx_power_dbm = parse_f64(line, key, v)?,
            "epsilon" => cfg.epsilon = parse_f64(line, key, v)?,
            "passive_surface" => cfg.passive_surface = parse_bool(line, key, v)?,
            "bandwidth_hz" => cfg.bandwidth_hz = parse_f64(line, key, v)?,
            "noise_figure_db" => cfg.noise_figure_db = parse_f64(line, key, v)?,
            "epsilon_mapping" => {
                cfg.epsilon_mapping = match v {
                    "fixed-gain" => EpsilonMapping::FixedGain,
                    "input-power-budget" => EpsilonMapping::InputPowerBudget,
                    _ => {
                        return Err(err(
                            line,
                            format!(
                                "epsilon_mapping must be fixed-gain or input-power-budget, got {v:?}"
                            ),
                        ))
                    }
                }
            }
            "gain_ref" => cfg.gain_ref = parse_f64(line, key, v)?,
            "excess_knee" => cfg.excess_knee = parse_f64(line, key, v)?,
            "excess_exponent" => cfg.excess_exponent = parse_f64(line, key, v)?,
            "scatterer_ue_ris" => {
                if !scatterers_cleared.0 {
                    cfg.scatterers_ue_ris.clear();
                    scatterers_cleared.0 = true;
                }
                cfg.scatterers_ue_ris.push(parse_point(line, key, v)?);
            }
            "scatterer_ris_bs" => {
                if !scatterers_cleared.1 {
                    cfg.scatterers_ris_bs.clear();
                    scatterers_cleared.1 = true;
                }
                cfg.scatterers_ris_bs.push(parse_point(line, key, v)?);
            }
            "scatterer_ue_bs" => {
                if !scatterers_cleared.2 {
                    cfg.scatterers_ue_bs.clear();
                    scatterers_cleared.2 = true;
                }
                cfg.scatterers_ue_bs.push(parse_point(line, key, v)?);
            }
            "scatter_model" => {
                cfg.scatter_model = match v {
                    "path-length" => ScatterGainModel::PathLength,
                    "two-hop-product" => ScatterGainModel::TwoHopProduct,
                    _ => {
                        return Err(err(
                            line,
                            format!(
                                "scatter_model must be path-length or two-hop-product, got {v:?}"
                            ),
                        ))
                    }
                }
            }
            "scatter_loss" => cfg.scatter_loss = parse_f64(line, key, v)?,
            "music_grid" => cfg.music_grid = parse_usize(line, key, v)?,
            "cascade_grid_step" => cfg.cascade_grid_step = parse_f64(line, key, v)?,
            "refine_tol" => cfg.refine_tol = parse_f64(line, key, v)?,
            "b_los" => cfg.b_los = parse_usize(line, key, v)?,
            "b_nlos" => cfg.b_nlos = parse_usize(line, key, v)?,
            "trials" => cfg.trials = parse_usize(line, key, v)?,
            "freeze_channel_phases" => cfg.freeze_channel_phases = parse_bool(line, key, v)?,
            "power_sweep_dbm" => cfg.power_sweep_dbm = parse_f64_list(line, key, v)?,
            "epsilon_sweep" => cfg.epsilon_sweep = parse_f64_list(line, key, v)?,
            "fas_sweep" => cfg.fas_sweep = parse_usize_list(line, key, v)?,
            "scatterers_sweep_p_dbm" => {
                cfg.scatterers_sweep_p_dbm = parse_f64(line, key, v)?
            }
            _ => return Err(err(line, format!("unknown key {key:?}"))),
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_render_and_parse() {
        let cfg = ScenarioConfig::default();
        let text = cfg.render();
        let parsed = parse_config(&text).unwrap();
        assert_eq!(parsed, cfg);

        // And with scatterers present.
        let mut cfg = ScenarioConfig::default();
        cfg.scatterers_ue_ris.push(Point3::new(-5.5, 28.6, 2.0));
        cfg.scatterers_ue_ris.push(Point3::new(-2.0, 30.0, 3.0));
        cfg.scatterers_ue_bs.push(Point3::new(6.7, 28.0, 11.0));
        let parsed = parse_config(&cfg.render()).unwrap();
        assert_eq!(parsed, cfg);
    }

    #[test]
    fn comments_blanks_and_overrides() {
        let text = "
            # full-line comment
            tx_power_dbm = 10   # trailing comment

            tx_power_dbm = 20
            trials = 7
        ";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.tx_power_dbm, 20.0);
        assert_eq!(cfg.trials, 7);
        // Untouched keys keep defaults.
        assert_eq!(cfg.slots, 100);
    }

    #[test]
    fn scatterer_keys_append() {
        let text = "
            scatterer_ue_ris = -5.5, 28.6, 2
            scatterer_ue_ris = -2, 30, 3
            scatterer_ris_bs = -7, 8, 9.3
        ";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.scatterers_ue_ris.len(), 2);
        assert_eq!(cfg.scatterers_ue_ris[1], Point3::new(-2.0, 30.0, 3.0));
        assert_eq!(cfg.scatterers_ris_bs.len(), 1);
        assert!(cfg.scatterers_ue_bs.is_empty());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse_config("slots = 100\nnonsense_key = 5").unwrap_err();
        assert_eq!(e.line, 2);
        assert!(e.message.contains("unknown key"));

        let e = parse_config("\n\nslots = ten").unwrap_err();
        assert_eq!(e.line, 3);

        let e = parse_config("bs_position = 1,2").unwrap_err();
        assert_eq!(e.line, 1);
        assert!(e.message.contains("three comma-separated"));

        let e = parse_config("just a line without equals").unwrap_err();
        assert_eq!(e.line, 1);

        let e = parse_config("passive_surface = yes").unwrap_err();
        assert!(e.message.contains("true/false"));
    }

    #[test]
    fn derived_quantities() {
        let cfg = ScenarioConfig::default();
        assert!((cfg.wavelength() - 0.107_068_735).abs() < 1e-9);
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-15);
        assert!((dbm_to_watts(0.0) - 1e-3).abs() < 1e-18);
        // Auto source counts follow the scatterer lists.
        let mut cfg = ScenarioConfig::default();
        cfg.scatterers_ue_bs.push(Point3::new(6.7, 28.0, 11.0));
        cfg.scatterers_ris_bs.push(Point3::new(-7.0, 8.0, 9.3));
        cfg.scatterers_ris_bs.push(Point3::new(-6.0, 18.6, 2.7));
        let est = cfg.estimation_config();
        assert_eq!(est.n_sources_los, 2);
        assert_eq!(est.n_sources_nlos, 3);
        // Explicit counts win.
        cfg.b_los = 5;
        assert_eq!(cfg.estimation_config().n_sources_los, 5);
        // Half-spaces read off the deployment.
        assert!(est.bs_half_space_positive_y);
        assert!(est.aris_half_space_positive_x);
        // Passive surface: no injected noise.
        let mut cfg = ScenarioConfig::default();
        cfg.passive_surface = true;
        assert_eq!(cfg.noise_model().sigma_r2, 0.0);
        assert!(cfg.noise_model().sigma_b2 > 0.0);
    }
}
