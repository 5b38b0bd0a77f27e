//! Reference schemes: ideal per-element alignment, full cascaded channel
//! estimation, no surface, the protocol variants without phase alignment or
//! with delayed feedback, and surfaces mounted at the roadside instead of on
//! the vehicle.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use crate::channel::{
    end_to_end, path_gain, BlockChannel, BsIrsParams, FrameChannels, IrsUserParams, LinkBudget, VehicleChannel,
    SPEED_OF_LIGHT,
};
use crate::error::{config, Error, Result};
use crate::protocol::{block_rate, overall_rate, run_frame_on, FrameConfig, FrameResult, Variant};
use crate::rng::complex_normal;
use crate::signal_math::{dft_matrix, fold_phase, upa_steering};
use crate::CVector;

/// Per-element phases `e^{j(∠h_d - ∠c_m)}` that add every refracted path in
/// phase with the direct path. Zero entries get phase `∠h_d`.
pub fn optimal_refraction(c: &CVector, h_d: Complex64) -> CVector {
    let target = h_d.arg();
    c.map(|cm| {
        let phase = if cm.norm() == 0.0 { target } else { target - cm.arg() };
        Complex64::from_polar(1.0, phase)
    })
}

fn snr_only_result(snr: Vec<f64>, r1: f64, r2: f64, psi: (f64, f64), overhead_exceeded: bool) -> FrameResult {
    let n = snr.len();
    FrameResult {
        snr_per_block: snr,
        rate_stage1: r1,
        rate_stage2: r2,
        rate_overall: overall_rate(r1, r2, n),
        stage1_estimates: None,
        stage2_estimates: Vec::new(),
        effective_estimate: None,
        plan: None,
        psi_true: psi,
        overhead_exceeded,
    }
}

/// Split per-block rates into the Stage-I / Stage-II pair.
fn split_rates(block_rates: &[f64]) -> (f64, f64) {
    let r1 = block_rates[0];
    let rest = &block_rates[1..];
    let r2 = if rest.is_empty() { 0.0 } else { rest.iter().sum::<f64>() / rest.len() as f64 };
    (r1, r2)
}

/// Full cascaded channel estimation in every block.
///
/// Each block spends M+1 pilots on an (M+1)-point DFT design whose first
/// column carries the direct channel, so the LS estimate is `Dᴴy/(M+1)`. The
/// data phase then uses [`optimal_refraction`] on the estimates.
pub fn run_ccce_frame<R: Rng + ?Sized>(cfg: &FrameConfig, frame: &FrameChannels, rng: &mut R) -> Result<FrameResult> {
    let m = frame.m();
    let pilots = m + 1;
    let snr_direct = || frame.blocks.iter().map(|b| b.h_d.norm_sqr() / cfg.sigma2).collect::<Vec<_>>();
    if pilots >= cfg.q_symbols {
        return Ok(snr_only_result(snr_direct(), 0.0, 0.0, frame.psi(), true));
    }
    if cfg.eta == 0.0 {
        return Err(config("eta", "cascaded estimation needs a switched-on surface"));
    }
    let d = dft_matrix(pilots)?;
    let factor = (cfg.q_symbols - pilots) as f64 / cfg.q_symbols as f64;
    let gamma = cfg.gamma_linear();
    let mut snr = Vec::with_capacity(frame.n_blocks());
    let mut rates = Vec::with_capacity(frame.n_blocks());
    for block in &frame.blocks {
        let c = block.cascaded();
        // x = [h_d, η c]; row i of D is the pattern of pilot i
        let x = CVector::from_fn(pilots, |k, _| if k == 0 { block.h_d } else { c[k - 1] * cfg.eta });
        let y = &d * &x + CVector::from_fn(pilots, |_, _| complex_normal(rng, cfg.sigma2));
        let x_hat = d.adjoint() * y / Complex64::new(pilots as f64, 0.0);
        let c_hat = CVector::from_fn(m, |k, _| x_hat[k + 1] / cfg.eta);
        let nu = optimal_refraction(&c_hat, x_hat[0]) * Complex64::new(cfg.eta, 0.0);
        let w = end_to_end(&nu, block)?.norm_sqr();
        snr.push(w / cfg.sigma2);
        rates.push(factor * block_rate(w, gamma, cfg.sigma2));
    }
    let (r1, r2) = split_rates(&rates);
    Ok(snr_only_result(snr, r1, r2, frame.psi(), false))
}

/// Direct link only, one pilot per block.
pub fn run_no_irs_frame(cfg: &FrameConfig, frame: &FrameChannels) -> Result<FrameResult> {
    if cfg.q_symbols < 2 {
        return Err(config("q_symbols", "a block needs one pilot and at least one data symbol"));
    }
    let factor = (cfg.q_symbols - 1) as f64 / cfg.q_symbols as f64;
    let gamma = cfg.gamma_linear();
    let snr: Vec<f64> = frame.blocks.iter().map(|b| b.h_d.norm_sqr() / cfg.sigma2).collect();
    let rates: Vec<f64> = frame
        .blocks
        .iter()
        .map(|b| factor * block_rate(b.h_d.norm_sqr(), gamma, cfg.sigma2))
        .collect();
    let (r1, r2) = split_rates(&rates);
    Ok(snr_only_result(snr, r1, r2, frame.psi(), false))
}

/// Proposed Stage I, then `μ = 1` with a single Stage-II pilot per block.
pub fn run_no_cpa_frame<R: Rng + ?Sized>(cfg: &FrameConfig, frame: &FrameChannels, rng: &mut R) -> Result<FrameResult> {
    run_frame_on(cfg, frame, Variant::NoCpa, rng)
}

/// Refraction driven by the previous block's feedback.
pub fn run_feedback_delay_frame<R: Rng + ?Sized>(
    cfg: &FrameConfig,
    frame: &FrameChannels,
    rng: &mut R,
) -> Result<FrameResult> {
    run_frame_on(cfg, frame, Variant::FeedbackDelay, rng)
}

pub type Point3 = [f64; 3];

fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(a: Point3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Distance and unit direction from `from` to `to`.
fn direction(from: Point3, to: Point3) -> Result<(f64, Point3)> {
    let d = sub(to, from);
    let r = norm(d);
    if !(r > 0.0) {
        return Err(Error::Domain(format!("coincident nodes at {from:?}")));
    }
    Ok((r, [d[0] / r, d[1] / r, d[2] / r]))
}

/// Radio and array parameters shared by every deployment.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioParams {
    pub m_x: usize,
    pub m_y: usize,
    pub carrier_hz: f64,
    pub t_b: f64,
    pub element_spacing_over_lambda: f64,
    pub eps0_db: f64,
    pub ple_bs_irs: f64,
    pub ple_irs_user: f64,
    pub ple_bs_user: f64,
    /// Rician factor of the vehicle-side BS–surface link, linear.
    pub rician_k: f64,
}

impl RadioParams {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    fn gain(&self, distance: f64, exponent: f64) -> Result<f64> {
        path_gain(&LinkBudget {
            distance,
            path_loss_exponent: exponent,
            eps0_db: self.eps0_db,
        })
    }

    /// LoS amplitude with propagation phase `e^{-j2πd/λ}`.
    fn los_amplitude(&self, distance: f64, exponent: f64) -> Result<Complex64> {
        Ok(Complex64::from_polar(
            self.gain(distance, exponent)?.sqrt(),
            -2.0 * PI * distance / self.wavelength(),
        ))
    }
}

/// Where the surface sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Deployment {
    RoadsideSingle,
    RoadsideMulti,
    /// Surface on the vehicle roof, directly above the user.
    VehicleSide,
}

/// Geometry and timing of a drive past the base station.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadsideScenario {
    pub bs_position: Point3,
    pub irs_positions: Vec<Point3>,
    pub user_start: Point3,
    /// Speed along +x, m/s.
    pub velocity: f64,
    /// Rician factor of the roadside BS–surface link, linear.
    pub rician_k_rs: f64,
    pub inter_irs_distance: f64,
    pub frame_blocks: usize,
    /// Observation window in blocks.
    pub total_blocks: usize,
    /// Height of a vehicle-mounted surface above the user.
    pub vehicle_irs_height: f64,
}

impl RoadsideScenario {
    /// Surfaces at `(k d_IRS, 1.5, 0)` for `k = 0..count`.
    pub fn new(
        deployment: Deployment,
        velocity: f64,
        rician_k_rs: f64,
        inter_irs_distance: f64,
        irs_count: usize,
        total_blocks: usize,
    ) -> Self {
        let count = match deployment {
            Deployment::RoadsideMulti => irs_count,
            _ => 1,
        };
        let frame_blocks = match deployment {
            Deployment::RoadsideMulti => 10,
            _ => 40,
        };
        Self {
            bs_position: [-50.0, 0.0, 85.0],
            irs_positions: (0..count).map(|k| [k as f64 * inter_irs_distance, 1.5, 0.0]).collect(),
            user_start: [0.0, 0.0, 0.0],
            velocity,
            rician_k_rs,
            inter_irs_distance,
            frame_blocks,
            total_blocks,
            vehicle_irs_height: 1.5,
        }
    }

    pub fn validate(&self, deployment: Deployment) -> Result<()> {
        if self.irs_positions.is_empty() {
            return Err(config("irs_count", "at least one surface is required"));
        }
        if deployment == Deployment::RoadsideMulti && self.irs_positions.len() < 2 {
            return Err(config("irs_count", "multi-surface deployment needs at least 2 surfaces"));
        }
        if self.irs_positions.windows(2).any(|w| !(w[1][0] > w[0][0])) {
            return Err(config("inter_irs_m", "surfaces must be strictly increasing in x"));
        }
        if self.frame_blocks < 2 {
            return Err(config("frame_blocks", "frames need at least 2 blocks"));
        }
        if self.total_blocks == 0 || !self.total_blocks.is_multiple_of(self.frame_blocks) {
            return Err(config(
                "total_blocks",
                format!("must be a positive multiple of the frame length {}", self.frame_blocks),
            ));
        }
        if !(self.rician_k_rs >= 0.0) {
            return Err(config("k_rs_db", "Rician factor must be >= 0"));
        }
        if !(self.velocity >= 0.0) {
            return Err(config("speed_mps", "speed must be >= 0"));
        }
        Ok(())
    }

    /// User position at the start of global block `k` (0-based).
    pub fn user_position(&self, k: usize, t_b: f64) -> Point3 {
        let mut p = self.user_start;
        p[0] += self.velocity * t_b * k as f64;
        p
    }

    /// Index of the nearest surface; the lower index wins ties.
    pub fn nearest_irs(&self, user: Point3) -> usize {
        let mut best = (0, f64::INFINITY);
        for (k, &p) in self.irs_positions.iter().enumerate() {
            let d = norm(sub(p, user));
            if d < best.1 {
                best = (k, d);
            }
        }
        best.0
    }
}

/// Static BS–surface channel of one roadside surface, in the surface's
/// (x, z) element plane.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticSurfaceLink {
    pub position: Point3,
    pub los: CVector,
    pub nlos: CVector,
    pub phi_bi: f64,
    pub varphi_bi: f64,
    /// `sqrt(K/(1+K))·ρ`.
    pub los_gain: Complex64,
}

/// Draw the static Rician BS–surface channel of a roadside surface.
pub fn roadside_bs_irs<R: Rng + ?Sized>(
    scn: &RoadsideScenario,
    radio: &RadioParams,
    irs: usize,
    rng: &mut R,
) -> Result<StaticSurfaceLink> {
    let position = scn.irs_positions[irs];
    let (d, u) = direction(position, scn.bs_position)?;
    let s = 2.0 * radio.element_spacing_over_lambda;
    let (phi_bi, varphi_bi) = (s * u[0], s * u[2]);
    let rho = radio.los_amplitude(d, radio.ple_bs_irs)?;
    let k = scn.rician_k_rs;
    let (los_scale, nlos_var) = if k.is_infinite() {
        (1.0, 0.0)
    } else {
        ((k / (1.0 + k)).sqrt(), rho.norm_sqr() / (1.0 + k))
    };
    let los_gain = rho * los_scale;
    let los = upa_steering(phi_bi, varphi_bi, radio.m_x, radio.m_y)? * los_gain;
    let nlos = CVector::from_fn(radio.m_x * radio.m_y, |_, _| complex_normal(rng, nlos_var));
    Ok(StaticSurfaceLink {
        position,
        los,
        nlos,
        phi_bi,
        varphi_bi,
        los_gain,
    })
}

/// Channel of global block `k` via a roadside surface. The surface–user link
/// is LoS with amplitude and phase from the instantaneous distance, so the
/// Doppler appears as the block-to-block phase progression.
pub fn roadside_block(
    scn: &RoadsideScenario,
    radio: &RadioParams,
    link: &StaticSurfaceLink,
    k: usize,
    n: usize,
    h_d: Complex64,
) -> Result<BlockChannel> {
    let user = scn.user_position(k, radio.t_b);
    let (d, u) = direction(link.position, user)?;
    let s = 2.0 * radio.element_spacing_over_lambda;
    let (phi_iu, varphi_iu) = (s * u[0], s * u[2]);
    let alpha = radio.los_amplitude(d, radio.ple_irs_user)?;
    let g = upa_steering(phi_iu, varphi_iu, radio.m_x, radio.m_y)? * alpha;
    let c_los = g.component_mul(&link.los);
    Ok(BlockChannel {
        n,
        c_nlos: g.component_mul(&link.nlos),
        beta: c_los[0],
        c_los,
        h_d,
        psi_x: fold_phase(phi_iu + link.phi_bi),
        psi_y: fold_phase(varphi_iu + link.varphi_bi),
    })
}

/// Vehicle-side channel model for a frame starting at global block `k0`:
/// geometry is frozen at the frame start.
pub fn vehicle_side_channel(scn: &RoadsideScenario, radio: &RadioParams, k0: usize) -> Result<VehicleChannel> {
    let user = scn.user_position(k0, radio.t_b);
    let irs = [user[0], user[1], user[2] + scn.vehicle_irs_height];
    let (d_bi, u) = direction(irs, scn.bs_position)?;
    let lambda = radio.wavelength();
    let theta_bi = (u[0] * u[0] + u[1] * u[1]).sqrt().min(1.0).acos();
    let vartheta_bi = u[1].atan2(u[0]).rem_euclid(2.0 * PI);
    let bs_irs = BsIrsParams::from_angles(
        radio.los_amplitude(d_bi, radio.ple_bs_irs)?,
        radio.rician_k,
        scn.velocity,
        lambda,
        theta_bi,
        vartheta_bi,
        radio.element_spacing_over_lambda,
        radio.t_b,
    )?;
    let alpha = radio.los_amplitude(scn.vehicle_irs_height, radio.ple_irs_user)?;
    let irs_user = IrsUserParams::from_angles(alpha, -PI / 2.0, 0.0, radio.element_spacing_over_lambda);
    Ok(VehicleChannel {
        m_x: radio.m_x,
        m_y: radio.m_y,
        bs_irs,
        irs_user,
        direct_variance: 1.0,
        f_max: scn.velocity / lambda,
        t_b: radio.t_b,
    })
}

/// Outcome of one drive over the observation window.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadsideRun {
    pub frames: Vec<FrameResult>,
    /// Serving surface per block (always 0 for single and vehicle-side).
    pub serving: Vec<usize>,
    /// Time-average of the frame rates.
    pub mean_rate: f64,
}

/// Run the proposed protocol frame by frame over `scn.total_blocks` blocks.
///
/// `direct_unit` is a unit-variance direct-channel sequence covering the
/// window; it is scaled by the instantaneous BS–user path gain so every
/// deployment can share one realization.
pub fn run_roadside<R: Rng + ?Sized>(
    scn: &RoadsideScenario,
    deployment: Deployment,
    radio: &RadioParams,
    cfg: &FrameConfig,
    direct_unit: &[Complex64],
    rng: &mut R,
) -> Result<RoadsideRun> {
    scn.validate(deployment)?;
    if direct_unit.len() < scn.total_blocks {
        return Err(Error::DimensionMismatch {
            expected: scn.total_blocks,
            got: direct_unit.len(),
        });
    }
    let h_d_at = |k: usize| -> Result<Complex64> {
        let (d, _) = direction(scn.bs_position, scn.user_position(k, radio.t_b))?;
        Ok(direct_unit[k] * radio.gain(d, radio.ple_bs_user)?.sqrt())
    };
    let links = match deployment {
        Deployment::VehicleSide => Vec::new(),
        _ => (0..scn.irs_positions.len())
            .map(|i| roadside_bs_irs(scn, radio, i, rng))
            .collect::<Result<Vec<_>>>()?,
    };

    let n_frames = scn.total_blocks / scn.frame_blocks;
    let mut frames = Vec::with_capacity(n_frames);
    let mut serving = Vec::with_capacity(scn.total_blocks);
    for f in 0..n_frames {
        let k0 = f * scn.frame_blocks;
        let frame = match deployment {
            Deployment::VehicleSide => {
                let ch = vehicle_side_channel(scn, radio, k0)?;
                let mut frame = ch.sample_frame(scn.frame_blocks, rng)?;
                for (j, b) in frame.blocks.iter_mut().enumerate() {
                    b.h_d = h_d_at(k0 + j)?;
                    serving.push(0);
                }
                frame
            }
            _ => {
                let blocks = (0..scn.frame_blocks)
                    .map(|j| {
                        let k = k0 + j;
                        let irs = scn.nearest_irs(scn.user_position(k, radio.t_b));
                        serving.push(irs);
                        roadside_block(scn, radio, &links[irs], k, j + 1, h_d_at(k)?)
                    })
                    .collect::<Result<Vec<_>>>()?;
                FrameChannels {
                    m_x: radio.m_x,
                    m_y: radio.m_y,
                    blocks,
                }
            }
        };
        let cfg_f = FrameConfig {
            n_blocks: scn.frame_blocks,
            ..cfg.clone()
        };
        frames.push(run_frame_on(&cfg_f, &frame, Variant::Proposed, rng)?);
    }
    let mean_rate = frames.iter().map(|f| f.rate_overall).sum::<f64>() / frames.len() as f64;
    Ok(RoadsideRun {
        frames,
        serving,
        mean_rate,
    })
}
