//! Simulation configuration: defaults, file loading, validation and sweeps.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{Deployment, RadioParams, RoadsideScenario};
use crate::channel::{LinkBudget, LinkSetup};
use crate::error::{config, Error, Result};
use crate::estimation::LineSearchOptions;
use crate::protocol::{FrameConfig, TrainingDesign};

/// Scheme simulated by an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    #[default]
    Proposed,
    NoIrs,
    NoCpa,
    Fd,
    Ccce,
    RoadsideSingle,
    RoadsideMulti,
    PerfectPhase,
    /// Vehicle-mounted surface on the drive used by the roadside scenarios.
    VehicleSide,
}

impl Scenario {
    pub const ALL: [Scenario; 9] = [
        Scenario::Proposed,
        Scenario::NoIrs,
        Scenario::NoCpa,
        Scenario::Fd,
        Scenario::Ccce,
        Scenario::RoadsideSingle,
        Scenario::RoadsideMulti,
        Scenario::PerfectPhase,
        Scenario::VehicleSide,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Scenario::Proposed => "proposed",
            Scenario::NoIrs => "no_irs",
            Scenario::NoCpa => "no_cpa",
            Scenario::Fd => "fd",
            Scenario::Ccce => "ccce",
            Scenario::RoadsideSingle => "roadside_single",
            Scenario::RoadsideMulti => "roadside_multi",
            Scenario::PerfectPhase => "perfect_phase",
            Scenario::VehicleSide => "vehicle_side",
        }
    }

    /// Scenarios that drive along the road for a fixed window.
    pub fn deployment(self) -> Option<Deployment> {
        match self {
            Scenario::RoadsideSingle => Some(Deployment::RoadsideSingle),
            Scenario::RoadsideMulti => Some(Deployment::RoadsideMulti),
            Scenario::VehicleSide => Some(Deployment::VehicleSide),
            _ => None,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL.into_iter().find(|sc| sc.tag() == s).ok_or_else(|| {
            let tags: Vec<_> = Scenario::ALL.iter().map(|s| s.tag()).collect();
            config("scenario", format!("unknown tag `{s}`; valid tags: {}", tags.join(", ")))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignTag {
    #[default]
    Random,
    Dft,
}

/// One parameter varied over a list of values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub name: String,
    pub values: Vec<f64>,
}

impl FromStr for Sweep {
    type Err = Error;

    /// `name=v1,v2,...`
    fn from_str(s: &str) -> Result<Self> {
        let (name, list) = s
            .split_once('=')
            .ok_or_else(|| config("sweep", format!("expected name=v1,v2,..., got `{s}`")))?;
        let values = list
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| config("sweep", format!("`{v}` is not a number")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Sweep {
            name: name.trim().to_string(),
            values,
        })
    }
}

/// Parameters accepted by [`SimConfig::with_parameter`].
pub const SWEEP_PARAMETERS: [&str; 16] = [
    "tau1",
    "tau2",
    "tau_d",
    "n_blocks",
    "q_symbols",
    "m",
    "m_x",
    "m_y",
    "rician_k_db",
    "speed_mps",
    "tx_power_dbm",
    "irs_user_m",
    "eta",
    "gamma_gap_db",
    "k_rs_db",
    "inter_irs_m",
];

/// Settings of the drive used by the roadside and vehicle-side scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoadsideConfig {
    pub k_rs_db: f64,
    pub inter_irs_m: f64,
    pub irs_count: usize,
    /// Observation window in blocks.
    pub total_blocks: usize,
    pub single_frame_blocks: usize,
    pub multi_frame_blocks: usize,
    pub vehicle_irs_height_m: f64,
}

impl Default for RoadsideConfig {
    fn default() -> Self {
        Self {
            k_rs_db: 10.0,
            inter_irs_m: 2.0,
            irs_count: 2,
            total_blocks: 400,
            single_frame_blocks: 40,
            multi_frame_blocks: 10,
            vehicle_irs_height_m: 1.5,
        }
    }
}

/// Every scenario parameter. Field names are the configuration keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_blocks: usize,
    pub q_symbols: usize,
    pub tau1: usize,
    pub tau_d: usize,
    pub tau2: usize,
    pub gamma_gap_db: f64,
    pub eta: f64,

    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub t_b: f64,
    pub speed_mps: f64,
    pub tx_power_dbm: f64,
    pub noise_power_dbm: f64,

    pub m_x: usize,
    pub m_y: usize,
    pub element_spacing_over_lambda: f64,

    pub rician_k_db: f64,
    pub eps0_db: f64,
    pub bs_irs_m: f64,
    pub bs_user_m: f64,
    pub irs_user_m: f64,
    pub ple_bs_irs: f64,
    pub ple_bs_user: f64,
    pub ple_irs_user: f64,

    pub grid_x: usize,
    pub grid_y: usize,
    pub training_design: DesignTag,
    pub dft_l_x: Option<usize>,
    pub dft_literal: bool,

    pub scenario: Scenario,
    pub n_trials: usize,
    pub master_seed: u64,
    pub sweep: Option<Sweep>,
    /// Quantiles written per SNR CDF table.
    pub cdf_points: usize,
    pub roadside: RoadsideConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_blocks: 40,
            q_symbols: 100,
            tau1: 30,
            tau_d: 1,
            tau2: 2,
            gamma_gap_db: 9.0,
            eta: 1.0,
            carrier_hz: 5.9e9,
            bandwidth_hz: 5e5,
            t_b: 2e-4,
            speed_mps: 50.0,
            tx_power_dbm: 26.0,
            noise_power_dbm: -110.0,
            m_x: 5,
            m_y: 10,
            element_spacing_over_lambda: 0.5,
            rician_k_db: 10.0,
            eps0_db: -30.0,
            bs_irs_m: 100.0,
            bs_user_m: 100.0,
            irs_user_m: 2.0,
            ple_bs_irs: 2.2,
            ple_bs_user: 3.0,
            ple_irs_user: 2.2,
            grid_x: 20,
            grid_y: 20,
            training_design: DesignTag::Random,
            dft_l_x: None,
            dft_literal: false,
            scenario: Scenario::Proposed,
            n_trials: 500,
            master_seed: 1,
            sweep: None,
            cdf_points: 201,
            roadside: RoadsideConfig::default(),
        }
    }
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn as_count(name: &str, value: f64) -> Result<usize> {
    if value >= 0.0 && value.fract() == 0.0 && value < 1e9 {
        Ok(value as usize)
    } else {
        Err(config(name.to_string(), format!("expects a non-negative integer, got {value}")))
    }
}

fn positive(field: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(config(field.to_string(), format!("must be positive and finite, got {value}")))
    }
}

/// `M = M_x M_y` with `M_y = 10` when 10 divides M, otherwise the most
/// nearly square factorization.
pub fn factor_elements(m: usize) -> Result<(usize, usize)> {
    if m == 0 {
        return Err(config("m", "element count must be positive"));
    }
    if m.is_multiple_of(10) {
        return Ok((m / 10, 10));
    }
    let mut best = (m, 1);
    for a in 1..=m {
        if a * a > m {
            break;
        }
        if m.is_multiple_of(a) {
            best = (a, m / a);
        }
    }
    Ok(best)
}

impl SimConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Format(format!("invalid TOML config: {e}")))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Format(format!("invalid JSON config: {e}")))
    }

    pub fn m(&self) -> usize {
        self.m_x * self.m_y
    }

    /// `σ² = σ_u² / P_t`.
    pub fn sigma2(&self) -> f64 {
        db_to_linear(self.noise_power_dbm - self.tx_power_dbm)
    }

    pub fn rician_k(&self) -> f64 {
        db_to_linear(self.rician_k_db)
    }

    pub fn frame_config(&self) -> FrameConfig {
        FrameConfig {
            n_blocks: self.n_blocks,
            q_symbols: self.q_symbols,
            tau1: self.tau1,
            tau_d: self.tau_d,
            tau2: self.tau2,
            gamma_gap_db: self.gamma_gap_db,
            sigma2: self.sigma2(),
            eta: self.eta,
            grid_x: self.grid_x,
            grid_y: self.grid_y,
            design: match self.training_design {
                DesignTag::Random => TrainingDesign::Random,
                DesignTag::Dft => TrainingDesign::Dft {
                    l_x: self.dft_l_x,
                    literal: self.dft_literal,
                },
            },
            line_search: LineSearchOptions::default(),
        }
    }

    fn budget(&self, distance: f64, exponent: f64) -> LinkBudget {
        LinkBudget {
            distance,
            path_loss_exponent: exponent,
            eps0_db: self.eps0_db,
        }
    }

    pub fn link_setup(&self) -> LinkSetup {
        LinkSetup {
            m_x: self.m_x,
            m_y: self.m_y,
            rician_k: self.rician_k(),
            speed_mps: self.speed_mps,
            carrier_hz: self.carrier_hz,
            t_b: self.t_b,
            element_spacing_over_lambda: self.element_spacing_over_lambda,
            bs_irs: self.budget(self.bs_irs_m, self.ple_bs_irs),
            irs_user: self.budget(self.irs_user_m, self.ple_irs_user),
            bs_user: self.budget(self.bs_user_m, self.ple_bs_user),
        }
    }

    pub fn radio_params(&self) -> RadioParams {
        RadioParams {
            m_x: self.m_x,
            m_y: self.m_y,
            carrier_hz: self.carrier_hz,
            t_b: self.t_b,
            element_spacing_over_lambda: self.element_spacing_over_lambda,
            eps0_db: self.eps0_db,
            ple_bs_irs: self.ple_bs_irs,
            ple_irs_user: self.ple_irs_user,
            ple_bs_user: self.ple_bs_user,
            rician_k: self.rician_k(),
        }
    }

    pub fn roadside_scenario(&self, deployment: Deployment) -> RoadsideScenario {
        let r = &self.roadside;
        let mut scn = RoadsideScenario::new(
            deployment,
            self.speed_mps,
            db_to_linear(r.k_rs_db),
            r.inter_irs_m,
            r.irs_count,
            r.total_blocks,
        );
        scn.frame_blocks = match deployment {
            Deployment::RoadsideMulti => r.multi_frame_blocks,
            _ => r.single_frame_blocks,
        };
        scn.vehicle_irs_height = r.vehicle_irs_height_m;
        scn
    }

    /// Copy with one named parameter replaced.
    pub fn with_parameter(&self, name: &str, value: f64) -> Result<Self> {
        let mut c = self.clone();
        match name {
            "tau1" => c.tau1 = as_count(name, value)?,
            "tau2" => c.tau2 = as_count(name, value)?,
            "tau_d" => c.tau_d = as_count(name, value)?,
            "n_blocks" => c.n_blocks = as_count(name, value)?,
            "q_symbols" => c.q_symbols = as_count(name, value)?,
            "m" => (c.m_x, c.m_y) = factor_elements(as_count(name, value)?)?,
            "m_x" => c.m_x = as_count(name, value)?,
            "m_y" => c.m_y = as_count(name, value)?,
            "rician_k_db" => c.rician_k_db = value,
            "speed_mps" => c.speed_mps = value,
            "tx_power_dbm" => c.tx_power_dbm = value,
            "irs_user_m" => c.irs_user_m = value,
            "eta" => c.eta = value,
            "gamma_gap_db" => c.gamma_gap_db = value,
            "k_rs_db" => c.roadside.k_rs_db = value,
            "inter_irs_m" => c.roadside.inter_irs_m = value,
            _ => {
                return Err(config(
                    "sweep.name",
                    format!("unknown parameter `{name}`; valid: {}", SWEEP_PARAMETERS.join(", ")),
                ))
            }
        }
        Ok(c)
    }

    /// Configuration of each sweep point, or just `self` without a sweep.
    pub fn sweep_points(&self) -> Result<Vec<(Option<f64>, SimConfig)>> {
        match &self.sweep {
            None => Ok(vec![(None, self.clone())]),
            Some(s) => s
                .values
                .iter()
                .map(|&v| Ok((Some(v), self.with_parameter(&s.name, v)?)))
                .collect(),
        }
    }

    fn validate_point(&self) -> Result<()> {
        let frame = self.frame_config();
        frame.validate()?;
        if self.m_x == 0 || self.m_y == 0 {
            return Err(config("m_x", "array dimensions must be positive"));
        }
        match self.scenario {
            Scenario::NoCpa => {}
            _ if self.tau2 < 2 => {
                return Err(config("tau2", "separating two channels needs tau2 >= 2"));
            }
            _ => {}
        }
        for (field, v) in [
            ("carrier_hz", self.carrier_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("t_b", self.t_b),
            ("bs_irs_m", self.bs_irs_m),
            ("bs_user_m", self.bs_user_m),
            ("irs_user_m", self.irs_user_m),
            ("element_spacing_over_lambda", self.element_spacing_over_lambda),
        ] {
            positive(field, v)?;
        }
        if !(self.speed_mps >= 0.0) || !self.speed_mps.is_finite() {
            return Err(config("speed_mps", "speed must be finite and >= 0"));
        }
        if self.rician_k_db.is_nan() {
            return Err(config("rician_k_db", "must be a number"));
        }
        for (field, v) in [
            ("ple_bs_irs", self.ple_bs_irs),
            ("ple_bs_user", self.ple_bs_user),
            ("ple_irs_user", self.ple_irs_user),
            ("tx_power_dbm", self.tx_power_dbm),
            ("noise_power_dbm", self.noise_power_dbm),
            ("eps0_db", self.eps0_db),
        ] {
            if !v.is_finite() {
                return Err(config(field, "must be finite"));
            }
        }
        if let Some(dep) = self.scenario.deployment() {
            positive("roadside.inter_irs_m", self.roadside.inter_irs_m)?;
            positive("roadside.vehicle_irs_height_m", self.roadside.vehicle_irs_height_m)?;
            let scn = self.roadside_scenario(dep);
            scn.validate(dep)?;
            FrameConfig {
                n_blocks: scn.frame_blocks,
                ..frame
            }
            .validate()?;
        }
        Ok(())
    }

    /// Check every field against the constraints of the modules it feeds,
    /// for every sweep point.
    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(config("n_trials", "at least one trial is required"));
        }
        if self.cdf_points < 2 {
            return Err(config("cdf_points", "a CDF table needs at least 2 points"));
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(config("sweep.values", "sweep has no values"));
            }
        }
        for (_, point) in self.sweep_points()? {
            point.validate_point()?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config is serializable");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parse a TOML or JSON file (chosen by extension) without validating it.
/// Missing keys take their defaults.
pub fn read_config(path: &Path) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        context: format!("reading config {}", path.display()),
        source,
    })?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => SimConfig::from_json_str(&text),
        _ => SimConfig::from_toml_str(&text),
    }
}

/// [`read_config`] followed by [`SimConfig::validate`].
pub fn load_config(path: &Path) -> Result<SimConfig> {
    let cfg = read_config(path)?;
    cfg.validate()?;
    Ok(cfg)
}
