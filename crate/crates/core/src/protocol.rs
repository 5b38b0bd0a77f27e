//! One transmission frame of the two-stage protocol.
//!
//! Stage I (block 1): the surface cycles through τ₁ training patterns, the
//! user estimates the cascaded LoS phases, and the surface steers towards
//! them (`ν̄ = η u*(ψ̂)`). τ_D further pilots measure the resulting effective
//! channel before data is sent.
//!
//! Stage II (blocks 2..N): with `ν̄` fixed, each block spends τ₂ pilots
//! separating the refracted channel `h̄_r = ν̄ᵀc` from the direct channel, and
//! the surface applies a common phase that aligns the two for data.
//!
//! Rates use the true end-to-end channel of each data phase; estimates only
//! decide the refraction.

use num_complex::Complex64;
use rand::Rng;

use crate::channel::{end_to_end, FrameChannels, VehicleChannel};
use crate::error::{config, Error, Result};
use crate::estimation::{
    estimate_effective_stage1, estimate_stage_one, estimates_at, ls_stage2, EstimationProblem, LineSearchOptions,
    StageOneEstimates, StageTwoEstimates,
};
use crate::rng::{complex_normal, uniform_phase};
use crate::signal_math::{dft_matrix, kron, upa_steering};
use crate::{CMatrix, CVector};

/// How the Stage-I training refraction matrix is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrainingDesign {
    /// i.i.d. uniform phases.
    #[default]
    Random,
    /// Rows are Kronecker products of selected DFT columns.
    Dft {
        /// Number of distinct x-axis columns; `None` picks a balanced split.
        l_x: Option<usize>,
        /// Use the printed floor-index schedule instead of the default one.
        literal: bool,
    },
}

/// Frame-level protocol parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameConfig {
    pub n_blocks: usize,
    pub q_symbols: usize,
    pub tau1: usize,
    pub tau_d: usize,
    pub tau2: usize,
    pub gamma_gap_db: f64,
    /// Receiver noise power normalized by the transmit power.
    pub sigma2: f64,
    /// Refraction amplitude; 0 switches the surface off.
    pub eta: f64,
    pub grid_x: usize,
    pub grid_y: usize,
    pub design: TrainingDesign,
    pub line_search: LineSearchOptions,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            n_blocks: 40,
            q_symbols: 100,
            tau1: 30,
            tau_d: 1,
            tau2: 2,
            gamma_gap_db: 9.0,
            // -110 dBm noise over 26 dBm transmit power
            sigma2: 10f64.powf(-13.6),
            eta: 1.0,
            grid_x: 20,
            grid_y: 20,
            design: TrainingDesign::Random,
            line_search: LineSearchOptions::default(),
        }
    }
}

impl FrameConfig {
    pub fn gamma_linear(&self) -> f64 {
        10f64.powf(self.gamma_gap_db / 10.0)
    }

    /// Check the constraints of the proposed protocol.
    pub fn validate(&self) -> Result<()> {
        if self.n_blocks < 2 {
            return Err(config("n_blocks", "a frame needs at least 2 blocks (one per stage)"));
        }
        if self.tau1 < 4 {
            return Err(config("tau1", "at least 4 Stage-I pilots are needed to resolve 4 unknowns"));
        }
        if self.q_symbols <= self.tau1 + self.tau_d {
            return Err(config(
                "q_symbols",
                format!(
                    "Stage-I overhead tau1 + tau_d = {} must be below q_symbols = {}",
                    self.tau1 + self.tau_d,
                    self.q_symbols
                ),
            ));
        }
        if self.tau2 < 1 {
            return Err(config("tau2", "Stage II needs at least one pilot"));
        }
        if self.q_symbols <= self.tau2 {
            return Err(config("q_symbols", format!("must exceed tau2 = {}", self.tau2)));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(config("eta", format!("refraction amplitude must lie in [0, 1], got {}", self.eta)));
        }
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() {
            return Err(config("sigma2", "normalized noise power must be positive"));
        }
        if !(self.gamma_gap_db >= 0.0) {
            return Err(config("gamma_gap_db", "rate gap must be >= 0 dB"));
        }
        if self.grid_x == 0 || self.grid_y == 0 {
            return Err(config("grid", "grid sizes must be positive"));
        }
        if let TrainingDesign::Dft { l_x: Some(l), .. } = self.design {
            if l == 0 || !self.tau1.is_multiple_of(l) {
                return Err(config("dft_l_x", format!("l_x = {l} must divide tau1 = {}", self.tau1)));
            }
        }
        Ok(())
    }
}

/// Random training matrix with entries `η e^{jω}`, `ω ~ U[0, 2π)`.
pub fn random_refraction_matrix<R: Rng + ?Sized>(tau1: usize, m: usize, eta: f64, rng: &mut R) -> CMatrix {
    // row-major draw order so the matrix does not depend on nalgebra's layout
    let mut entries = Vec::with_capacity(tau1 * m);
    for _ in 0..tau1 * m {
        entries.push(Complex64::from_polar(eta, uniform_phase(rng)));
    }
    CMatrix::from_row_slice(tau1, m, &entries)
}

/// Divisor `l_x` of τ₁ whose split `l_x : τ₁/l_x` is closest to `m_x : m_y`
/// on a log scale. Ties prefer `l_x <= m_x`, then the larger divisor.
pub fn default_l_x(tau1: usize, m_x: usize, m_y: usize) -> usize {
    let target = (m_x as f64 / m_y as f64).ln();
    let key = |l: usize| {
        let err = ((l as f64 / (tau1 / l) as f64).ln() - target).abs();
        (err, l <= m_x, l)
    };
    let mut best = 1;
    for l in (2..=tau1).filter(|l| tau1.is_multiple_of(*l)) {
        let (e, fits, _) = key(l);
        let (be, bfits, _) = key(best);
        let better = if (e - be).abs() > 1e-9 { e < be } else { fits || !bfits };
        if better {
            best = l;
        }
    }
    best
}

/// DFT column pair `(x, y)` used by training pilot `i` (0-based).
///
/// Default schedule: the x index cycles through `l_x` semi-equally spaced
/// columns fastest, and the y index steps through `τ₁/l_x` columns.
pub fn dft_schedule(i: usize, tau1: usize, m_x: usize, m_y: usize, l_x: usize) -> (usize, usize) {
    let x = (i % l_x) * m_x / l_x;
    let y = (i / l_x) * m_y * l_x / tau1;
    (x.min(m_x - 1), y.min(m_y - 1))
}

/// The printed floor-index schedule with 1-based pilot index, reduced into
/// range. Kept for comparison only; it can address columns outside the
/// matrix before reduction.
pub fn dft_schedule_literal(i: usize, tau1: usize, m_x: usize, m_y: usize, l_x: usize) -> (usize, usize) {
    let i1 = (i + 1) as i64;
    let (lx, mx, my, t) = (l_x as i64, m_x as i64, m_y as i64, tau1 as i64);
    let x = ((i1 / lx) * mx).div_euclid(lx);
    let y = (my * lx * ((i1 % lx) - 1)).div_euclid(t);
    (x.rem_euclid(mx) as usize, y.rem_euclid(my) as usize)
}

/// Training matrix whose rows are `D_Mx[:, x_i] ⊗ D_My[:, y_i]`.
pub fn dft_refraction_matrix(tau1: usize, m_x: usize, m_y: usize, l_x: usize) -> Result<CMatrix> {
    dft_refraction_matrix_with(tau1, m_x, m_y, l_x, false)
}

pub fn dft_refraction_matrix_with(tau1: usize, m_x: usize, m_y: usize, l_x: usize, literal: bool) -> Result<CMatrix> {
    if l_x == 0 || !tau1.is_multiple_of(l_x) {
        return Err(config("dft_l_x", format!("l_x = {l_x} must divide tau1 = {tau1}")));
    }
    let dx = dft_matrix(m_x)?;
    let dy = dft_matrix(m_y)?;
    let m = m_x * m_y;
    let mut v = CMatrix::zeros(tau1, m);
    for i in 0..tau1 {
        let (cx, cy) = if literal {
            dft_schedule_literal(i, tau1, m_x, m_y, l_x)
        } else {
            dft_schedule(i, tau1, m_x, m_y, l_x)
        };
        let row = kron(&dx.column(cx).into_owned(), &dy.column(cy).into_owned());
        for k in 0..m {
            v[(i, k)] = row[k];
        }
    }
    Ok(v)
}

/// Stage-I training matrix for the configured design, scaled by η.
pub fn training_matrix<R: Rng + ?Sized>(cfg: &FrameConfig, m_x: usize, m_y: usize, rng: &mut R) -> Result<CMatrix> {
    match cfg.design {
        TrainingDesign::Random => Ok(random_refraction_matrix(cfg.tau1, m_x * m_y, cfg.eta, rng)),
        TrainingDesign::Dft { l_x, literal } => {
            let l = l_x.unwrap_or_else(|| default_l_x(cfg.tau1, m_x, m_y));
            Ok(dft_refraction_matrix_with(cfg.tau1, m_x, m_y, l, literal)? * Complex64::new(cfg.eta, 0.0))
        }
    }
}

/// `ν̄ = η u*(ψ̂x, ψ̂y)`.
pub fn initial_refraction(psi_hat: (f64, f64), m_x: usize, m_y: usize, eta: f64) -> Result<CVector> {
    Ok(upa_steering(psi_hat.0, psi_hat.1, m_x, m_y)?.map(|v| v.conj() * eta))
}

/// First two columns of the τ₂-point DFT matrix. Column 0 carries the direct
/// channel, column 1 holds the common phases `μ_i`.
pub fn stage2_training_matrix(tau2: usize) -> Result<CMatrix> {
    if tau2 < 2 {
        return Err(config("tau2", format!("separating two channels needs tau2 >= 2, got {tau2}")));
    }
    Ok(dft_matrix(tau2)?.columns(0, 2).into_owned())
}

/// `e^{jδ}`.
pub fn data_phase_stage2(delta: f64) -> Complex64 {
    Complex64::from_polar(1.0, delta)
}

/// `log₂(1 + W/(Γσ²))` for one data phase.
pub fn block_rate(w: f64, gamma_linear: f64, sigma2: f64) -> f64 {
    (1.0 + w / (gamma_linear * sigma2)).log2()
}

fn overhead_factor(q: usize, overhead: usize, field: &'static str) -> Result<f64> {
    if overhead >= q {
        return Err(config(field, format!("pilot overhead {overhead} leaves no data symbols in a block of {q}")));
    }
    Ok((q - overhead) as f64 / q as f64)
}

/// `((Q - τ₁ - τ_D)/Q) log₂(1 + W_I/(Γσ²))`.
pub fn rate_stage1(w_i: f64, cfg: &FrameConfig) -> Result<f64> {
    if !(w_i >= 0.0) {
        return Err(Error::Domain(format!("channel power must be >= 0, got {w_i}")));
    }
    let factor = overhead_factor(cfg.q_symbols, cfg.tau1 + cfg.tau_d, "q_symbols")?;
    Ok(factor * block_rate(w_i, cfg.gamma_linear(), cfg.sigma2))
}

/// `((Q - τ₂)/((N-1)Q)) Σ log₂(1 + W_II⁽ⁿ⁾/(Γσ²))`.
pub fn rate_stage2(w_list: &[f64], cfg: &FrameConfig) -> Result<f64> {
    if w_list.is_empty() {
        return Err(Error::InvalidDimension("Stage II has no blocks".into()));
    }
    let factor = overhead_factor(cfg.q_symbols, cfg.tau2, "q_symbols")?;
    let g = cfg.gamma_linear();
    let sum: f64 = w_list.iter().map(|&w| block_rate(w, g, cfg.sigma2)).sum();
    Ok(factor * sum / w_list.len() as f64)
}

/// `R_I/N + (N-1) R_II/N`.
pub fn overall_rate(r1: f64, r2: f64, n: usize) -> f64 {
    let n = n.max(1) as f64;
    r1 / n + (n - 1.0) * r2 / n
}

/// Protocol flavour run on a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    #[default]
    Proposed,
    /// Stage I uses the true phases; pilot overhead is unchanged.
    PerfectPhase,
    /// Stage II keeps `μ = 1` and spends a single pilot per block.
    NoCpa,
    /// Refraction follows feedback from the previous block only.
    FeedbackDelay,
}

impl Variant {
    /// Pilot accounting actually used by this variant.
    pub fn effective_config(&self, cfg: &FrameConfig) -> FrameConfig {
        let mut c = cfg.clone();
        match self {
            Variant::NoCpa => c.tau2 = 1,
            Variant::FeedbackDelay => c.tau_d = 0,
            Variant::Proposed | Variant::PerfectPhase => {}
        }
        c
    }
}

/// Every refraction setting used during a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RefractionPlan {
    pub stage1_training: CMatrix,
    pub nu_bar: CVector,
    /// `None` when Stage II does not separate the two channels.
    pub stage2_training: Option<CMatrix>,
    /// `μ_II,D⁽ⁿ⁾` for n = 2..N.
    pub data_phases: Vec<Complex64>,
}

/// Outcome of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    /// `γ⁽ⁿ⁾ = W⁽ⁿ⁾/σ²`, linear, one entry per block.
    pub snr_per_block: Vec<f64>,
    pub rate_stage1: f64,
    pub rate_stage2: f64,
    pub rate_overall: f64,
    pub stage1_estimates: Option<StageOneEstimates>,
    pub stage2_estimates: Vec<StageTwoEstimates>,
    /// Stage-I estimate of the data-phase effective channel.
    pub effective_estimate: Option<Complex64>,
    pub plan: Option<RefractionPlan>,
    /// True phases at block 1.
    pub psi_true: (f64, f64),
    /// Training does not fit in a block; all rates are 0.
    pub overhead_exceeded: bool,
}

impl FrameResult {
    /// Stage-II SNRs (blocks 2..N).
    pub fn stage2_snr(&self) -> &[f64] {
        &self.snr_per_block[1..]
    }

    pub fn psi_hat(&self) -> Option<(f64, f64)> {
        self.stage1_estimates.as_ref().map(|e| (e.psi_x_hat, e.psi_y_hat))
    }
}

/// Draw a frame from `channel` and run the proposed protocol on it.
pub fn run_frame<R: Rng + ?Sized>(cfg: &FrameConfig, channel: &VehicleChannel, rng: &mut R) -> Result<FrameResult> {
    let frame = channel.sample_frame(cfg.n_blocks, rng)?;
    run_frame_on(cfg, &frame, Variant::Proposed, rng)
}

fn noise<R: Rng + ?Sized>(rng: &mut R, sigma2: f64) -> Complex64 {
    complex_normal(rng, sigma2)
}

/// Run one protocol variant on pre-drawn channels. The frame length is
/// taken from `frame`.
pub fn run_frame_on<R: Rng + ?Sized>(
    cfg: &FrameConfig,
    frame: &FrameChannels,
    variant: Variant,
    rng: &mut R,
) -> Result<FrameResult> {
    let eff = variant.effective_config(cfg);
    let n_blocks = frame.n_blocks();
    FrameConfig { n_blocks, ..eff.clone() }.validate()?;
    let theta = match variant {
        Variant::NoCpa => None,
        _ => Some(stage2_training_matrix(eff.tau2)?),
    };
    let (m_x, m_y) = (frame.m_x, frame.m_y);
    let sigma2 = eff.sigma2;

    // Stage I training
    let first = &frame.blocks[0];
    let c1 = first.cascaded();
    let v = training_matrix(&eff, m_x, m_y, rng)?;
    let y = &v * &c1 + CVector::from_fn(eff.tau1, |_, _| first.h_d + noise(rng, sigma2));
    let prob = EstimationProblem::new(y, v, m_x, m_y)?;
    let est = match variant {
        Variant::PerfectPhase => estimates_at(first.psi_x, first.psi_y, &prob),
        _ => estimate_stage_one(&prob, eff.grid_x, eff.grid_y, &eff.line_search)?,
    };
    let nu_bar = initial_refraction((est.psi_x_hat, est.psi_y_hat), m_x, m_y, eff.eta)?;

    // Stage I data
    let (nu_id, effective_estimate) = match variant {
        Variant::FeedbackDelay => {
            let last = prob.v_matrix.row(eff.tau1 - 1).transpose();
            (last, prob.y[eff.tau1 - 1])
        }
        _ => {
            let h_id = end_to_end(&nu_bar, first)?;
            let obs: Vec<Complex64> = (0..eff.tau_d).map(|_| h_id + noise(rng, sigma2)).collect();
            (nu_bar.clone(), estimate_effective_stage1(&obs)?)
        }
    };
    let w_i = end_to_end(&nu_id, first)?.norm_sqr();

    // Stage II
    let mut w_ii = Vec::with_capacity(n_blocks - 1);
    let mut stage2 = Vec::new();
    let mut phases = Vec::with_capacity(n_blocks - 1);
    let mut previous_delta: Option<f64> = None;
    for block in &frame.blocks[1..] {
        let h_r = end_to_end(&nu_bar, block)? - block.h_d;
        let h_d = block.h_d;
        let mu = match &theta {
            None => {
                // single pilot with μ = 1; the estimate only matters for decoding
                let _y1 = h_r + h_d + noise(rng, sigma2);
                Complex64::new(1.0, 0.0)
            }
            Some(theta) => {
                let y = CVector::from_fn(eff.tau2, |i, _| theta[(i, 0)] * h_d + theta[(i, 1)] * h_r + noise(rng, sigma2));
                let e = ls_stage2(theta, &y)?;
                let mu = match variant {
                    Variant::FeedbackDelay => previous_delta.map_or(Complex64::new(1.0, 0.0), data_phase_stage2),
                    _ => data_phase_stage2(e.delta),
                };
                previous_delta = Some(e.delta);
                stage2.push(e);
                mu
            }
        };
        phases.push(mu);
        w_ii.push((mu * h_r + h_d).norm_sqr());
    }

    let rate_stage1 = rate_stage1(w_i, &eff)?;
    let rate_stage2 = rate_stage2(&w_ii, &eff)?;
    let mut snr_per_block = Vec::with_capacity(n_blocks);
    snr_per_block.push(w_i / sigma2);
    snr_per_block.extend(w_ii.iter().map(|w| w / sigma2));
    Ok(FrameResult {
        snr_per_block,
        rate_stage1,
        rate_stage2,
        rate_overall: overall_rate(rate_stage1, rate_stage2, n_blocks),
        stage1_estimates: Some(est),
        stage2_estimates: stage2,
        effective_estimate: Some(effective_estimate),
        plan: Some(RefractionPlan {
            stage1_training: prob.v_matrix,
            nu_bar,
            stage2_training: theta,
            data_phases: phases,
        }),
        psi_true: frame.psi(),
        overhead_exceeded: false,
    })
}
