//! Channel generation for one transmission frame.
//!
//! The BS–surface link is Rician: a LoS component whose phase rotates with the
//! Doppler shift from block to block, plus Rayleigh scattering. The
//! surface–user link is a static LoS channel (both ride on the vehicle). Their
//! elementwise product is the cascaded channel `c⁽ⁿ⁾`, whose LoS part is
//! `β⁽ⁿ⁾·u(ψx, ψy)`. The direct BS–user channel is Rayleigh with Jakes time
//! correlation.
//!
//! Every channel is held constant over the Q symbols of a block.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{complex_normal, uniform_phase};
use crate::signal_math::{bessel_j0, fold_phase, upa_steering};
use crate::CVector;

pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Distance-based power gain `ε₀ · d^(-exponent)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub distance: f64,
    pub path_loss_exponent: f64,
    pub eps0_db: f64,
}

pub fn path_gain(lb: &LinkBudget) -> Result<f64> {
    if !(lb.distance > 0.0) {
        return Err(Error::Domain(format!("link distance must be positive, got {}", lb.distance)));
    }
    Ok(10f64.powf(lb.eps0_db / 10.0) * lb.distance.powf(-lb.path_loss_exponent))
}

/// `v cosθ cosϑ / λ`. Negative when moving away from the source.
pub fn doppler_frequency(v: f64, theta: f64, vartheta: f64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("wavelength must be positive, got {lambda}")));
    }
    Ok(v * theta.cos() * vartheta.cos() / lambda)
}

/// Normalized phase differences `(2d/λ)cosθcosϑ` and `(2d/λ)cosθsinϑ` of a
/// planar array lying in the x–y plane.
pub fn upa_phases(theta: f64, vartheta: f64, spacing_over_lambda: f64) -> (f64, f64) {
    let k = 2.0 * spacing_over_lambda * theta.cos();
    (k * vartheta.cos(), k * vartheta.sin())
}

/// Parameters of the BS–surface Rician channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsIrsParams {
    /// LoS amplitude; `|ρ|²` is the link power gain.
    pub rho: Complex64,
    /// Rician factor, linear. `f64::INFINITY` switches scattering off.
    pub rician_k: f64,
    pub f_d: f64,
    pub theta_bi: f64,
    pub vartheta_bi: f64,
    pub phi_bi: f64,
    pub varphi_bi: f64,
    pub element_spacing_over_lambda: f64,
    pub t_b: f64,
}

impl BsIrsParams {
    /// Derive the normalized phases and the Doppler shift from the arrival
    /// angles and the vehicle speed.
    #[allow(clippy::too_many_arguments)]
    pub fn from_angles(
        rho: Complex64,
        rician_k: f64,
        speed: f64,
        lambda: f64,
        theta_bi: f64,
        vartheta_bi: f64,
        element_spacing_over_lambda: f64,
        t_b: f64,
    ) -> Result<Self> {
        if rician_k < 0.0 || rician_k.is_nan() {
            return Err(Error::Domain(format!("Rician factor must be >= 0, got {rician_k}")));
        }
        let (phi_bi, varphi_bi) = upa_phases(theta_bi, vartheta_bi, element_spacing_over_lambda);
        Ok(Self {
            rho,
            rician_k,
            f_d: doppler_frequency(speed, theta_bi, vartheta_bi, lambda)?,
            theta_bi,
            vartheta_bi,
            phi_bi,
            varphi_bi,
            element_spacing_over_lambda,
            t_b,
        })
    }

    /// `sqrt(K/(1+K))`.
    pub fn los_scale(&self) -> f64 {
        if self.rician_k.is_infinite() {
            1.0
        } else {
            (self.rician_k / (1.0 + self.rician_k)).sqrt()
        }
    }

    /// Per-entry scattering power `|ρ|²/(1+K)`.
    pub fn nlos_variance(&self) -> f64 {
        if self.rician_k.is_infinite() {
            0.0
        } else {
            self.rho.norm_sqr() / (1.0 + self.rician_k)
        }
    }

    /// LoS gain `α_BI⁽ⁿ⁾` of block `n` (1-based).
    pub fn los_gain(&self, n: usize) -> Complex64 {
        let rot = Complex64::from_polar(1.0, 2.0 * PI * self.f_d * (n as f64 - 1.0) * self.t_b);
        self.rho * self.los_scale() * rot
    }
}

/// Parameters of the static surface–user LoS channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrsUserParams {
    pub alpha_iu: Complex64,
    pub theta_iu: f64,
    pub vartheta_iu: f64,
    pub phi_iu: f64,
    pub varphi_iu: f64,
}

impl IrsUserParams {
    pub fn from_angles(alpha_iu: Complex64, theta_iu: f64, vartheta_iu: f64, spacing_over_lambda: f64) -> Self {
        let (phi_iu, varphi_iu) = upa_phases(theta_iu, vartheta_iu, spacing_over_lambda);
        Self {
            alpha_iu,
            theta_iu,
            vartheta_iu,
            phi_iu,
            varphi_iu,
        }
    }
}

/// One draw of the BS–surface channel, split into LoS and scattered parts.
#[derive(Debug, Clone, PartialEq)]
pub struct BsIrsDraw {
    pub los: CVector,
    pub nlos: CVector,
}

impl BsIrsDraw {
    pub fn total(&self) -> CVector {
        &self.los + &self.nlos
    }
}

/// Sample `a⁽ⁿ⁾` for block `n` (1-based) with independent scattering.
pub fn sample_bs_irs<R: Rng + ?Sized>(
    params: &BsIrsParams,
    m_x: usize,
    m_y: usize,
    n: usize,
    rng: &mut R,
) -> Result<BsIrsDraw> {
    if n == 0 {
        return Err(Error::Domain("block index is 1-based".into()));
    }
    let los = upa_steering(params.phi_bi, params.varphi_bi, m_x, m_y)? * params.los_gain(n);
    let var = params.nlos_variance();
    let nlos = CVector::from_fn(m_x * m_y, |_, _| complex_normal(rng, var));
    Ok(BsIrsDraw { los, nlos })
}

/// Static surface–user channel `g = α_IU u(φ_IU, ϕ_IU)`.
pub fn irs_user(params: &IrsUserParams, m_x: usize, m_y: usize) -> Result<CVector> {
    Ok(upa_steering(params.phi_iu, params.varphi_iu, m_x, m_y)? * params.alpha_iu)
}

/// LoS/NLoS split of the cascaded channel `g ⊙ a`.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeParts {
    pub c_los: CVector,
    pub c_nlos: CVector,
    /// LoS product gain; equals `c_los[0]` because the first steering entry is 1.
    pub beta: Complex64,
}

pub fn cascade(g: &CVector, a: &CVector, a_los: &CVector) -> Result<CascadeParts> {
    for v in [a, a_los] {
        if v.len() != g.len() {
            return Err(Error::DimensionMismatch {
                expected: g.len(),
                got: v.len(),
            });
        }
    }
    if g.is_empty() {
        return Err(Error::InvalidDimension("empty cascaded channel".into()));
    }
    let c_los = g.component_mul(a_los);
    let c_nlos = g.component_mul(&(a - a_los));
    let beta = c_los[0];
    Ok(CascadeParts { c_los, c_nlos, beta })
}

/// Channel state of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockChannel {
    /// 1-based block index within the frame.
    pub n: usize,
    pub c_los: CVector,
    pub c_nlos: CVector,
    pub h_d: Complex64,
    pub beta: Complex64,
    /// True effective phases of the cascaded LoS path in this block.
    pub psi_x: f64,
    pub psi_y: f64,
}

impl BlockChannel {
    pub fn cascaded(&self) -> CVector {
        &self.c_los + &self.c_nlos
    }
}

/// `νᵀ c + h_d`.
pub fn end_to_end(nu: &CVector, block: &BlockChannel) -> Result<Complex64> {
    if nu.len() != block.c_los.len() {
        return Err(Error::DimensionMismatch {
            expected: block.c_los.len(),
            got: nu.len(),
        });
    }
    let refracted: Complex64 = nu
        .iter()
        .zip(block.c_los.iter().zip(block.c_nlos.iter()))
        .map(|(v, (l, s))| v * (l + s))
        .sum();
    Ok(refracted + block.h_d)
}

/// Generates complex Gaussian sequences whose covariance across blocks is
/// `variance · J0(2π f_max |i-j| T_b)`.
#[derive(Debug, Clone)]
pub struct JakesCorrelator {
    n_blocks: usize,
    /// Lower-triangular factor of the unit-variance covariance; `None` when
    /// every block is fully correlated (`f_max T_b = 0`).
    factor: Option<DMatrix<f64>>,
}

impl JakesCorrelator {
    pub fn new(f_max: f64, t_b: f64, n_blocks: usize) -> Result<Self> {
        if n_blocks == 0 {
            return Err(Error::InvalidDimension("Jakes sequence needs at least one block".into()));
        }
        if f_max * t_b == 0.0 {
            return Ok(Self { n_blocks, factor: None });
        }
        let lag: Vec<f64> = (0..n_blocks).map(|k| bessel_j0(2.0 * PI * f_max * k as f64 * t_b)).collect();
        let cov = DMatrix::from_fn(n_blocks, n_blocks, |i, j| lag[i.abs_diff(j)]);
        for jitter in [0.0, 1e-12, 1e-10, 1e-8] {
            let mut c = cov.clone();
            for i in 0..n_blocks {
                c[(i, i)] += jitter;
            }
            if let Some(chol) = c.cholesky() {
                return Ok(Self {
                    n_blocks,
                    factor: Some(chol.unpack()),
                });
            }
        }
        Err(Error::Generation(format!(
            "Jakes covariance (f_max={f_max}, T_b={t_b}, N={n_blocks}) failed Cholesky even with jitter"
        )))
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    /// One sequence of `n_blocks` samples.
    pub fn sample<R: Rng + ?Sized>(&self, variance: f64, rng: &mut R) -> Vec<Complex64> {
        let white: Vec<Complex64> = (0..self.n_blocks).map(|_| complex_normal(rng, variance)).collect();
        self.colour(&white)
    }

    /// `count` independent sequences, returned block-major: `out[n][k]` is
    /// sample `n` of sequence `k`.
    pub fn sample_many<R: Rng + ?Sized>(&self, variance: f64, count: usize, rng: &mut R) -> Vec<Vec<Complex64>> {
        let mut white = vec![vec![Complex64::new(0.0, 0.0); count]; self.n_blocks];
        for k in 0..count {
            for row in white.iter_mut() {
                row[k] = complex_normal(rng, variance);
            }
        }
        match &self.factor {
            None => vec![white[0].clone(); self.n_blocks],
            Some(l) => (0..self.n_blocks)
                .map(|i| {
                    let mut out = vec![Complex64::new(0.0, 0.0); count];
                    for j in 0..=i {
                        let lij = l[(i, j)];
                        if lij != 0.0 {
                            for (o, w) in out.iter_mut().zip(&white[j]) {
                                *o += w * lij;
                            }
                        }
                    }
                    out
                })
                .collect(),
        }
    }

    fn colour(&self, white: &[Complex64]) -> Vec<Complex64> {
        match &self.factor {
            None => vec![white[0]; self.n_blocks],
            Some(l) => (0..self.n_blocks)
                .map(|i| (0..=i).map(|j| white[j] * l[(i, j)]).sum())
                .collect(),
        }
    }
}

/// Jakes-correlated Rayleigh sequence `h_d⁽¹⁾..h_d⁽ᴺ⁾`.
pub fn sample_direct_sequence<R: Rng + ?Sized>(
    variance: f64,
    f_max: f64,
    t_b: f64,
    n_blocks: usize,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    if variance < 0.0 {
        return Err(Error::Domain(format!("variance must be >= 0, got {variance}")));
    }
    Ok(JakesCorrelator::new(f_max, t_b, n_blocks)?.sample(variance, rng))
}

/// All per-block channels of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameChannels {
    pub m_x: usize,
    pub m_y: usize,
    pub blocks: Vec<BlockChannel>,
}

impl FrameChannels {
    pub fn m(&self) -> usize {
        self.m_x * self.m_y
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Effective phases at the first block (what Stage I estimates).
    pub fn psi(&self) -> (f64, f64) {
        let b = &self.blocks[0];
        (b.psi_x, b.psi_y)
    }
}

/// Channel model of the vehicle-mounted surface for one frame: angles, gains
/// and the Rician factor are frame constants.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleChannel {
    pub m_x: usize,
    pub m_y: usize,
    pub bs_irs: BsIrsParams,
    pub irs_user: IrsUserParams,
    /// Mean power of the direct channel.
    pub direct_variance: f64,
    /// Maximum Doppler frequency driving the Jakes correlation.
    pub f_max: f64,
    pub t_b: f64,
}

impl VehicleChannel {
    /// Cascaded effective phases folded into `[-1, 1)`.
    pub fn effective_phases(&self) -> (f64, f64) {
        (
            fold_phase(self.irs_user.phi_iu + self.bs_irs.phi_bi),
            fold_phase(self.irs_user.varphi_iu + self.bs_irs.varphi_bi),
        )
    }

    /// Draw the `n_blocks` block channels of one frame.
    ///
    /// The scattered BS–surface entries and the direct channel are each
    /// Jakes-correlated over blocks with the same maximum Doppler.
    pub fn sample_frame<R: Rng + ?Sized>(&self, n_blocks: usize, rng: &mut R) -> Result<FrameChannels> {
        let m = self.m_x * self.m_y;
        let jakes = JakesCorrelator::new(self.f_max, self.t_b, n_blocks)?;
        let g = irs_user(&self.irs_user, self.m_x, self.m_y)?;
        let s_bi = upa_steering(self.bs_irs.phi_bi, self.bs_irs.varphi_bi, self.m_x, self.m_y)?;
        let u = g.component_mul(&s_bi);
        let (psi_x, psi_y) = self.effective_phases();

        let nlos_var = self.bs_irs.nlos_variance();
        let nlos = if nlos_var > 0.0 {
            Some(jakes.sample_many(nlos_var, m, rng))
        } else {
            None
        };
        let h_d = jakes.sample(self.direct_variance, rng);

        let blocks = (1..=n_blocks)
            .map(|n| {
                let alpha_bi = self.bs_irs.los_gain(n);
                let c_los = &u * alpha_bi;
                let c_nlos = match &nlos {
                    Some(rows) => CVector::from_fn(m, |k, _| g[k] * rows[n - 1][k]),
                    None => CVector::zeros(m),
                };
                BlockChannel {
                    n,
                    c_los,
                    c_nlos,
                    h_d: h_d[n - 1],
                    beta: alpha_bi * self.irs_user.alpha_iu,
                    psi_x,
                    psi_y,
                }
            })
            .collect();
        Ok(FrameChannels {
            m_x: self.m_x,
            m_y: self.m_y,
            blocks,
        })
    }
}

/// Scenario-level description from which per-trial [`VehicleChannel`]s are
/// drawn: link budgets, array size, Rician factor and mobility.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSetup {
    pub m_x: usize,
    pub m_y: usize,
    /// Linear Rician factor of the BS–surface link.
    pub rician_k: f64,
    pub speed_mps: f64,
    pub carrier_hz: f64,
    pub t_b: f64,
    pub element_spacing_over_lambda: f64,
    pub bs_irs: LinkBudget,
    pub irs_user: LinkBudget,
    pub bs_user: LinkBudget,
}

impl LinkSetup {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// `v f_c / c`.
    pub fn max_doppler(&self) -> f64 {
        self.speed_mps / self.wavelength()
    }

    /// Draw angles uniformly over their ranges and the LoS gain phases
    /// uniformly over `[0, 2π)`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<VehicleChannel> {
        let theta_bi = rng.random::<f64>() * PI / 2.0;
        let vartheta_bi = uniform_phase(rng);
        let theta_iu = -rng.random::<f64>() * PI / 2.0;
        let vartheta_iu = uniform_phase(rng);
        let rho = Complex64::from_polar(path_gain(&self.bs_irs)?.sqrt(), uniform_phase(rng));
        let alpha_iu = Complex64::from_polar(path_gain(&self.irs_user)?.sqrt(), uniform_phase(rng));
        self.with_angles(rho, alpha_iu, (theta_bi, vartheta_bi), (theta_iu, vartheta_iu))
    }

    /// Build the channel for fixed gains and angles (radians).
    pub fn with_angles(
        &self,
        rho: Complex64,
        alpha_iu: Complex64,
        bs_irs_angles: (f64, f64),
        irs_user_angles: (f64, f64),
    ) -> Result<VehicleChannel> {
        let bs_irs = BsIrsParams::from_angles(
            rho,
            self.rician_k,
            self.speed_mps,
            self.wavelength(),
            bs_irs_angles.0,
            bs_irs_angles.1,
            self.element_spacing_over_lambda,
            self.t_b,
        )?;
        let irs_user = IrsUserParams::from_angles(
            alpha_iu,
            irs_user_angles.0,
            irs_user_angles.1,
            self.element_spacing_over_lambda,
        );
        Ok(VehicleChannel {
            m_x: self.m_x,
            m_y: self.m_y,
            bs_irs,
            irs_user,
            direct_variance: path_gain(&self.bs_user)?,
            f_max: self.max_doppler(),
            t_b: self.t_b,
        })
    }
}
