//! Parameter estimation for both stages of the protocol.
//!
//! Stage I observes `y = β V u(ψx, ψy) + h_d 1 + ε` over τ₁ pilots. The direct
//! channel and β both enter linearly, so they are concentrated out: with
//! `B = I - 11ᵀ/τ₁` and `ξ(ψ) = B V u(ψ)` the ML phases maximise
//! `|ξᴴy|² / ‖ξ‖²`. That surface is multimodal, so the maximiser is located on
//! a coarse grid first and polished by gradient ascent with a backtracking
//! line search.
//!
//! Stage II is a two-unknown linear model per block, solved by least squares.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::signal_math::{center, centering_projector, fold_phase, steering_1d, upa_steering, wrap_angle, CenteringProjector};
use crate::{CMatrix, CVector};

/// Stage-I observations and the training refraction matrix that produced them.
#[derive(Debug, Clone)]
pub struct EstimationProblem {
    pub y: CVector,
    /// τ₁ × M training refraction matrix (row i is the surface setting of pilot i).
    pub v_matrix: CMatrix,
    pub projector: CenteringProjector,
    pub m_x: usize,
    pub m_y: usize,
    y_centered: CVector,
    degeneracy_floor: f64,
}

impl EstimationProblem {
    pub fn new(y: CVector, v_matrix: CMatrix, m_x: usize, m_y: usize) -> Result<Self> {
        let tau = y.len();
        if tau == 0 {
            return Err(Error::InvalidDimension("no Stage-I observations".into()));
        }
        if v_matrix.nrows() != tau {
            return Err(Error::DimensionMismatch {
                expected: tau,
                got: v_matrix.nrows(),
            });
        }
        if m_x == 0 || m_y == 0 || v_matrix.ncols() != m_x * m_y {
            return Err(Error::DimensionMismatch {
                expected: m_x * m_y,
                got: v_matrix.ncols(),
            });
        }
        let frob: f64 = v_matrix.iter().map(|v| v.norm_sqr()).sum();
        let degeneracy_floor = 1e-24 * frob * (m_x * m_y) as f64;
        Ok(Self {
            y_centered: center(&y),
            projector: centering_projector(tau)?,
            y,
            v_matrix,
            m_x,
            m_y,
            degeneracy_floor,
        })
    }

    pub fn tau(&self) -> usize {
        self.y.len()
    }

    pub fn m(&self) -> usize {
        self.m_x * self.m_y
    }

    /// Numerical rank of the training matrix.
    pub fn training_rank(&self) -> usize {
        let sv = self.v_matrix.clone().svd(false, false).singular_values;
        let top = sv.iter().cloned().fold(0.0, f64::max);
        sv.iter().filter(|&&s| s > top * 1e-10).count()
    }

    /// At least four independent training patterns are needed to resolve
    /// (ψx, ψy, β, h_d).
    pub fn is_identifiable(&self) -> bool {
        self.training_rank() >= 4
    }

    /// `ξ(ψ) = B V u(ψx, ψy)`.
    pub fn xi(&self, psi_x: f64, psi_y: f64) -> CVector {
        let u = upa_steering(psi_x, psi_y, self.m_x, self.m_y).expect("validated dimensions");
        center(&(&self.v_matrix * u))
    }

    fn is_degenerate(&self, norm_sq: f64) -> bool {
        !(norm_sq > self.degeneracy_floor)
    }
}

/// Value of the concentrated ML objective at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlObjective {
    pub value: f64,
    /// `ξ(ψ)` vanished; `value` is reported as 0.
    pub degenerate: bool,
}

/// `|ξᴴ y|² / ‖ξ‖²`.
pub fn ml_objective(psi_x: f64, psi_y: f64, prob: &EstimationProblem) -> MlObjective {
    let xi = prob.xi(psi_x, psi_y);
    objective_from_xi(&xi, prob)
}

fn objective_from_xi(xi: &CVector, prob: &EstimationProblem) -> MlObjective {
    let norm_sq = xi.norm_squared();
    if prob.is_degenerate(norm_sq) {
        return MlObjective {
            value: 0.0,
            degenerate: true,
        };
    }
    MlObjective {
        value: xi.dotc(&prob.y).norm_sqr() / norm_sq,
        degenerate: false,
    }
}

/// Best point of the uniform grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub psi_x: f64,
    pub psi_y: f64,
    pub value: f64,
}

/// Grid coordinate `-1 + 2j/A` for `j = 1..=A`.
pub fn grid_coordinate(j: usize, a: usize) -> f64 {
    -1.0 + 2.0 * j as f64 / a as f64
}

/// Exhaustive search over `{-1 + 2ȷ/A_x} × {-1 + 2κ/A_y}`.
///
/// Ties go to the lexicographically smallest `(ȷ, κ)`; degenerate points
/// count as objective 0.
pub fn grid_search(prob: &EstimationProblem, a_x: usize, a_y: usize) -> Result<GridPoint> {
    grid_search_with(prob, a_x, a_y, Execution::Sequential)
}

/// [`grid_search`] with the ψx rows optionally evaluated in parallel. The
/// reduction runs afterwards in index order, so the result does not depend
/// on scheduling.
pub fn grid_search_with(prob: &EstimationProblem, a_x: usize, a_y: usize, exec: Execution) -> Result<GridPoint> {
    if a_x == 0 || a_y == 0 {
        return Err(Error::InvalidDimension(format!("grid must be at least 1x1, got {a_x}x{a_y}")));
    }
    let (tau, m_x, m_y) = (prob.tau(), prob.m_x, prob.m_y);

    // u = s_x ⊗ s_y, so V u = Σ_a s_x[a] (V_a s_y) with V_a the a-th column
    // block. Contract the y-steering once per ψy grid value.
    let partial: Vec<Vec<Complex64>> = (1..=a_y)
        .map(|kappa| {
            let sy = steering_1d(grid_coordinate(kappa, a_y), m_y).expect("m_y > 0");
            let mut w = vec![Complex64::new(0.0, 0.0); tau * m_x];
            for i in 0..tau {
                for a in 0..m_x {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for b in 0..m_y {
                        acc += prob.v_matrix[(i, a * m_y + b)] * sy[b];
                    }
                    w[i * m_x + a] = acc;
                }
            }
            w
        })
        .collect();

    let rows: Vec<Vec<f64>> = exec.map_indexed(a_x, |jx| {
        let sx = steering_1d(grid_coordinate(jx + 1, a_x), m_x).expect("m_x > 0");
        partial
            .iter()
            .map(|w| {
                let vu = CVector::from_fn(tau, |i, _| (0..m_x).map(|a| w[i * m_x + a] * sx[a]).sum());
                objective_from_xi(&center(&vu), prob).value
            })
            .collect()
    });

    let mut best = (0usize, 0usize, f64::NEG_INFINITY);
    for (jx, row) in rows.iter().enumerate() {
        for (ky, &v) in row.iter().enumerate() {
            if v > best.2 {
                best = (jx, ky, v);
            }
        }
    }
    Ok(GridPoint {
        psi_x: grid_coordinate(best.0 + 1, a_x),
        psi_y: grid_coordinate(best.1 + 1, a_y),
        value: best.2,
    })
}

/// `ξ` and its partial derivatives at one point.
#[derive(Debug, Clone)]
pub struct GradientTerms {
    pub xi: CVector,
    pub zeta_x: CVector,
    pub zeta_y: CVector,
    /// Diagonal of `Ξx = diag(0, jπ, …, j(Mx-1)π)`.
    pub xi_x_diag: CVector,
    pub xi_y_diag: CVector,
}

/// Derivative multipliers `d/dψ e^{jkπψ} = jkπ e^{jkπψ}`.
fn derivative_diag(m: usize) -> CVector {
    CVector::from_fn(m, |k, _| Complex64::new(0.0, k as f64 * PI))
}

pub fn gradient_terms(psi_x: f64, psi_y: f64, prob: &EstimationProblem) -> GradientTerms {
    let sx = steering_1d(psi_x, prob.m_x).expect("validated");
    let sy = steering_1d(psi_y, prob.m_y).expect("validated");
    let xi_x_diag = derivative_diag(prob.m_x);
    let xi_y_diag = derivative_diag(prob.m_y);
    let dsx = xi_x_diag.component_mul(&sx);
    let dsy = xi_y_diag.component_mul(&sy);
    let kron = crate::signal_math::kron;
    let v = &prob.v_matrix;
    GradientTerms {
        xi: center(&(v * kron(&sx, &sy))),
        zeta_x: center(&(v * kron(&dsx, &sy))),
        zeta_y: center(&(v * kron(&sx, &dsy))),
        xi_x_diag,
        xi_y_diag,
    }
}

/// Analytic gradient of `|ξᴴy|²/‖ξ‖²` with respect to `(ψx, ψy)`.
pub fn ml_gradient(psi_x: f64, psi_y: f64, prob: &EstimationProblem) -> Result<(f64, f64)> {
    let t = gradient_terms(psi_x, psi_y, prob);
    let norm_sq = t.xi.norm_squared();
    if prob.is_degenerate(norm_sq) {
        return Err(Error::DegenerateDirection { psi_x, psi_y });
    }
    let y = &prob.y;
    let xi_y = t.xi.dotc(y);
    let component = |zeta: &CVector| -> f64 {
        let zeta_y = zeta.dotc(y);
        // yᴴ(ζξᴴ + ξζᴴ)y
        let quad = zeta_y.conj() * xi_y + xi_y.conj() * zeta_y;
        // ζᴴξ + ξᴴζ
        let cross = zeta.dotc(&t.xi) + t.xi.dotc(zeta);
        let num = quad * norm_sq - cross * xi_y.norm_sqr();
        let val = num / (norm_sq * norm_sq);
        debug_assert!(val.im.abs() <= 1e-8 * (val.re.abs() + num.norm() / (norm_sq * norm_sq)) + 1e-300);
        val.re
    };
    Ok((component(&t.zeta_x), component(&t.zeta_y)))
}

/// Backtracking line search settings for the gradient ascent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchOptions {
    /// Accept a step when `f(ψ + tΔ) ≥ f(ψ) + c·t·‖Δ‖²`.
    pub sufficient_increase: f64,
    pub shrink: f64,
    pub initial_step: f64,
    /// Stop when `|Δf| < tolerance·(1 + |f|)`.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for LineSearchOptions {
    fn default() -> Self {
        Self {
            sufficient_increase: 0.3,
            shrink: 0.5,
            initial_step: 1.0,
            tolerance: 1e-10,
            max_iterations: 200,
        }
    }
}

/// Stage-I estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOneEstimates {
    pub psi_x_hat: f64,
    pub psi_y_hat: f64,
    pub beta_hat: Complex64,
    pub h_d_hat: Complex64,
    /// ML objective at the returned phases.
    pub objective_value: f64,
    pub iterations: usize,
    /// Objective after each accepted step, starting with the initial point.
    pub trace: Vec<f64>,
}

/// Plug-in estimates of β and h_d at fixed phases.
pub fn estimates_at(psi_x: f64, psi_y: f64, prob: &EstimationProblem) -> StageOneEstimates {
    let (psi_x, psi_y) = (fold_phase(psi_x), fold_phase(psi_y));
    let u = upa_steering(psi_x, psi_y, prob.m_x, prob.m_y).expect("validated");
    let vu = &prob.v_matrix * u;
    let xi = center(&vu);
    let obj = objective_from_xi(&xi, prob);
    let beta_hat = if obj.degenerate {
        Complex64::new(0.0, 0.0)
    } else {
        xi.dotc(&prob.y) / xi.norm_squared()
    };
    let residual = &prob.y - vu * beta_hat;
    StageOneEstimates {
        psi_x_hat: psi_x,
        psi_y_hat: psi_y,
        beta_hat,
        h_d_hat: residual.sum() / prob.tau() as f64,
        objective_value: obj.value,
        iterations: 0,
        trace: vec![obj.value],
    }
}

/// Gradient ascent from `psi_init` with a backtracking line search.
///
/// The ascent runs on the objective divided by `‖By‖²`, which has the same
/// maximiser but is invariant to the overall signal scale, so the step and
/// tolerance settings mean the same thing at any transmit power.
pub fn refine(psi_init: (f64, f64), prob: &EstimationProblem, opts: &LineSearchOptions) -> Result<StageOneEstimates> {
    let scale = prob.y_centered.norm_squared();
    let mut psi = (fold_phase(psi_init.0), fold_phase(psi_init.1));
    let start = ml_objective(psi.0, psi.1, prob);
    if start.degenerate || scale == 0.0 {
        return Ok(estimates_at(psi.0, psi.1, prob));
    }
    let f_norm = |p: (f64, f64)| ml_objective(p.0, p.1, prob).value / scale;

    let mut f = start.value / scale;
    let mut trace = vec![start.value];
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        let (gx, gy) = match ml_gradient(psi.0, psi.1, prob) {
            Ok(g) => (g.0 / scale, g.1 / scale),
            Err(Error::DegenerateDirection { .. }) => break,
            Err(e) => return Err(e),
        };
        if !(gx.is_finite() && gy.is_finite()) {
            return Err(Error::NonFinite {
                iteration: iterations,
                what: "gradient",
                trace,
            });
        }
        let g2 = gx * gx + gy * gy;
        if g2 == 0.0 {
            break;
        }

        let mut t = opts.initial_step;
        let accepted = loop {
            let cand = (fold_phase(psi.0 + t * gx), fold_phase(psi.1 + t * gy));
            let fc = f_norm(cand);
            if !fc.is_finite() {
                return Err(Error::NonFinite {
                    iteration: iterations,
                    what: "objective",
                    trace,
                });
            }
            if fc >= f + opts.sufficient_increase * t * g2 {
                break Some((cand, fc));
            }
            t *= opts.shrink;
            if t < 1e-18 {
                break None;
            }
        };
        let Some((cand, fc)) = accepted else { break };

        iterations += 1;
        let change = fc - f;
        psi = cand;
        f = fc;
        trace.push(f * scale);
        if change.abs() < opts.tolerance * (1.0 + f.abs()) {
            break;
        }
    }

    let mut est = estimates_at(psi.0, psi.1, prob);
    est.iterations = iterations;
    est.trace = trace;
    Ok(est)
}

/// Grid search followed by [`refine`].
pub fn estimate_stage_one(
    prob: &EstimationProblem,
    a_x: usize,
    a_y: usize,
    opts: &LineSearchOptions,
) -> Result<StageOneEstimates> {
    let gp = grid_search(prob, a_x, a_y)?;
    refine((gp.psi_x, gp.psi_y), prob, opts)
}

/// Sample mean of the τ_D extra pilots.
pub fn estimate_effective_stage1(pilot_obs: &[Complex64]) -> Result<Complex64> {
    if pilot_obs.is_empty() {
        return Err(Error::InvalidDimension("no pilots to average".into()));
    }
    Ok(pilot_obs.iter().sum::<Complex64>() / pilot_obs.len() as f64)
}

/// Stage-II LS estimates for one block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageTwoEstimates {
    pub h_d_hat: Complex64,
    pub h_r_hat: Complex64,
    /// `∠ĥ_d - ∠ĥ_r` wrapped into `(-π, π]`.
    pub delta: f64,
}

/// `Θ† y` for a τ₂ × 2 training matrix whose columns multiply
/// `[h_d, h̄_r]`.
pub fn ls_stage2(theta: &CMatrix, y: &CVector) -> Result<StageTwoEstimates> {
    if theta.ncols() != 2 {
        return Err(Error::InvalidDimension(format!("training matrix needs 2 columns, has {}", theta.ncols())));
    }
    if theta.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.nrows(),
            got: y.len(),
        });
    }
    let c0 = theta.column(0);
    let c1 = theta.column(1);
    let g00 = c0.norm_squared();
    let g11 = c1.norm_squared();
    let g01 = c0.dotc(&c1);
    let det = g00 * g11 - g01.norm_sqr();
    if !(det > 1e-12 * g00 * g11) {
        return Err(Error::IllPosed);
    }
    let b0 = c0.dotc(y);
    let b1 = c1.dotc(y);
    // [g00 g01; conj(g01) g11]^{-1} [b0; b1]
    let h_d_hat = (b0 * g11 - g01 * b1) / det;
    let h_r_hat = (b1 * g00 - g01.conj() * b0) / det;
    Ok(StageTwoEstimates {
        h_d_hat,
        h_r_hat,
        delta: wrap_angle(h_d_hat.arg() - h_r_hat.arg()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{complex_normal, seeded, uniform_phase};
    use approx::assert_relative_eq;

    fn random_problem(seed: u64, m_x: usize, m_y: usize, tau: usize, noise: f64) -> (EstimationProblem, (f64, f64)) {
        let mut rng = seeded(seed);
        let m = m_x * m_y;
        let v = CMatrix::from_fn(tau, m, |_, _| Complex64::from_polar(1.0, uniform_phase(&mut rng)));
        let psi = (0.123 + 0.5 * (seed % 3) as f64 * 0.37 - 0.4, -0.58 + 0.11 * (seed % 5) as f64);
        let u = upa_steering(psi.0, psi.1, m_x, m_y).unwrap();
        let beta = Complex64::new(0.7, -0.4);
        let h_d = Complex64::new(-0.3, 1.1);
        let y = (&v * u) * beta + CVector::from_fn(tau, |_, _| h_d + complex_normal(&mut rng, noise));
        (EstimationProblem::new(y, v, m_x, m_y).unwrap(), psi)
    }

    #[test]
    fn objective_is_one_at_normalized_truth() {
        let (prob, psi) = random_problem(1, 3, 2, 8, 0.0);
        let xi = prob.xi(psi.0, psi.1);
        let y = xi.unscale(xi.norm());
        let p = EstimationProblem::new(y, prob.v_matrix.clone(), 3, 2).unwrap();
        assert_relative_eq!(ml_objective(psi.0, psi.1, &p).value, 1.0, max_relative = 1e-12);
    }

    /// Symbol-by-symbol recomputation with an explicit B matrix and a
    /// hand-rolled steering vector.
    #[test]
    fn objective_matches_independent_recomputation() {
        let (prob, _) = random_problem(2, 3, 2, 8, 0.1);
        let (px, py) = (0.31, -0.77);
        let tau = 8;
        let b = CMatrix::from_fn(tau, tau, |i, j| {
            Complex64::new(if i == j { 1.0 } else { 0.0 } - 1.0 / tau as f64, 0.0)
        });
        let mut u = CVector::zeros(6);
        for kx in 0..3 {
            for ky in 0..2 {
                u[kx * 2 + ky] = Complex64::from_polar(1.0, PI * (kx as f64 * px + ky as f64 * py));
            }
        }
        let xi = &b * (&prob.v_matrix * &u);
        let mut inner = Complex64::new(0.0, 0.0);
        let mut norm = 0.0;
        for i in 0..tau {
            inner += xi[i].conj() * prob.y[i];
            norm += xi[i].norm_sqr();
        }
        let want = inner.norm_sqr() / norm;
        assert_relative_eq!(ml_objective(px, py, &prob).value, want, max_relative = 1e-12);
    }

    #[test]
    fn objective_ignores_constant_offsets() {
        let (prob, _) = random_problem(3, 3, 2, 8, 0.1);
        let shifted_y = prob.y.map(|v| v + Complex64::new(5.0, -2.0));
        let shifted = EstimationProblem::new(shifted_y, prob.v_matrix.clone(), 3, 2).unwrap();
        for &(px, py) in &[(0.1, 0.2), (-0.9, 0.55), (0.77, -0.33)] {
            let a = ml_objective(px, py, &prob).value;
            let b = ml_objective(px, py, &shifted).value;
            assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }
    }

    #[test]
    fn degenerate_direction_is_flagged() {
        let v = CMatrix::zeros(6, 4);
        let y = CVector::from_element(6, Complex64::new(1.0, 0.0));
        let prob = EstimationProblem::new(y, v, 2, 2).unwrap();
        let obj = ml_objective(0.2, 0.1, &prob);
        assert!(obj.degenerate);
        assert_eq!(obj.value, 0.0);
        assert!(matches!(ml_gradient(0.2, 0.1, &prob), Err(Error::DegenerateDirection { .. })));
        let est = refine((0.2, 0.1), &prob, &LineSearchOptions::default()).unwrap();
        assert_eq!(est.iterations, 0);
    }

    #[test]
    fn problem_dimension_checks() {
        let v = CMatrix::zeros(5, 6);
        assert!(EstimationProblem::new(CVector::zeros(4), v.clone(), 2, 3).is_err());
        assert!(EstimationProblem::new(CVector::zeros(5), v.clone(), 3, 3).is_err());
        assert!(EstimationProblem::new(CVector::zeros(0), CMatrix::zeros(0, 6), 2, 3).is_err());
        assert!(EstimationProblem::new(CVector::zeros(5), v, 2, 3).is_ok());
    }

    #[test]
    fn grid_single_point() {
        let (prob, _) = random_problem(4, 3, 2, 8, 0.1);
        let gp = grid_search(&prob, 1, 1).unwrap();
        assert_eq!((gp.psi_x, gp.psi_y), (1.0, 1.0));
        assert!(grid_search(&prob, 0, 3).is_err());
    }

    #[test]
    fn grid_finds_on_grid_truth_and_matches_exhaustive_evaluation() {
        let mut rng = seeded(9);
        let (mx, my, tau) = (4, 5, 24);
        let v = CMatrix::from_fn(tau, mx * my, |_, _| Complex64::from_polar(1.0, uniform_phase(&mut rng)));
        let psi = (grid_coordinate(13, 20), grid_coordinate(4, 20));
        let y = (&v * upa_steering(psi.0, psi.1, mx, my).unwrap()) * Complex64::new(0.2, 0.9);
        let prob = EstimationProblem::new(y, v, mx, my).unwrap();
        let gp = grid_search(&prob, 20, 20).unwrap();
        assert!((gp.psi_x - psi.0).abs() < 1e-12 && (gp.psi_y - psi.1).abs() < 1e-12);

        // exhaustive oracle with the plain objective
        let mut best = (0.0, 0.0, f64::NEG_INFINITY);
        for j in 1..=20 {
            for k in 1..=20 {
                let (px, py) = (grid_coordinate(j, 20), grid_coordinate(k, 20));
                let v = ml_objective(px, py, &prob).value;
                if v > best.2 {
                    best = (px, py, v);
                }
            }
        }
        assert_eq!((gp.psi_x, gp.psi_y), (best.0, best.1));
        assert_relative_eq!(gp.value, best.2, max_relative = 1e-10);
        let par = grid_search_with(&prob, 20, 20, Execution::Parallel).unwrap();
        assert_eq!(par, gp);
    }

    #[test]
    fn grid_ties_prefer_smallest_indices() {
        // M_x = 1: the objective does not depend on ψx, so every row ties.
        let (prob, _) = random_problem(5, 1, 4, 8, 0.1);
        let gp = grid_search(&prob, 7, 9).unwrap();
        assert_eq!(gp.psi_x, grid_coordinate(1, 7));
    }

    fn central_difference(prob: &EstimationProblem, p: (f64, f64), h: f64) -> (f64, f64) {
        let f = |x: f64, y: f64| ml_objective(x, y, prob).value;
        (
            (f(p.0 + h, p.1) - f(p.0 - h, p.1)) / (2.0 * h),
            (f(p.0, p.1 + h) - f(p.0, p.1 - h)) / (2.0 * h),
        )
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (prob, _) = random_problem(6, 4, 3, 16, 0.3);
        for &p in &[(0.21, -0.44), (-0.8, 0.65), (0.05, 0.93)] {
            let (gx, gy) = ml_gradient(p.0, p.1, &prob).unwrap();
            let (fx, fy) = central_difference(&prob, p, 1e-6);
            assert_relative_eq!(gx, fx, max_relative = 1e-5);
            assert_relative_eq!(gy, fy, max_relative = 1e-5);
        }
    }

    #[test]
    fn zeta_matches_finite_difference_of_xi() {
        let (prob, _) = random_problem(7, 3, 4, 10, 0.1);
        let (px, py, h) = (0.37, -0.12, 1e-6);
        let t = gradient_terms(px, py, &prob);
        let fd = (prob.xi(px + h, py) - prob.xi(px - h, py)) / Complex64::new(2.0 * h, 0.0);
        assert!((&t.zeta_x - &fd).norm() <= 1e-6 * fd.norm());
        let fd = (prob.xi(px, py + h) - prob.xi(px, py - h)) / Complex64::new(2.0 * h, 0.0);
        assert!((&t.zeta_y - &fd).norm() <= 1e-6 * fd.norm());
        assert_eq!(t.xi_x_diag[0], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn single_column_array_has_zero_x_gradient() {
        let (prob, _) = random_problem(8, 1, 5, 10, 0.2);
        let (gx, _) = ml_gradient(0.3, 0.4, &prob).unwrap();
        assert_eq!(gx, 0.0);
    }

    #[test]
    fn refine_recovers_off_grid_truth_without_noise() {
        let (prob, psi) = random_problem(10, 10, 10, 80, 0.0);
        let est = estimate_stage_one(&prob, 20, 20, &LineSearchOptions::default()).unwrap();
        assert!((est.psi_x_hat - psi.0).abs() < 1e-3, "{} vs {}", est.psi_x_hat, psi.0);
        assert!((est.psi_y_hat - psi.1).abs() < 1e-3);
        // the ascent stops on a relative objective change of 1e-10, which leaves
        // the phases (and the plug-in gains) accurate to about its square root
        assert_relative_eq!(est.beta_hat.re, 0.7, max_relative = 1e-4);
        assert_relative_eq!(est.beta_hat.im, -0.4, max_relative = 1e-4);
        assert_relative_eq!(est.h_d_hat.re, -0.3, max_relative = 1e-4);
        assert_relative_eq!(est.h_d_hat.im, 1.1, max_relative = 1e-4);
        assert!(est.trace.windows(2).all(|w| w[1] >= w[0]));
        // stationary at the solution
        let (gx, gy) = ml_gradient(est.psi_x_hat, est.psi_y_hat, &prob).unwrap();
        let scale = prob.y_centered.norm_squared();
        assert!((gx * gx + gy * gy).sqrt() / scale < 1e-4);
    }

    #[test]
    fn refine_from_exact_maximizer_stops_quickly() {
        let (prob, psi) = random_problem(12, 4, 3, 16, 0.0);
        let est = refine(psi, &prob, &LineSearchOptions::default()).unwrap();
        assert!(est.iterations <= 1);
        assert!((est.psi_x_hat - psi.0).abs() < 1e-9);
        assert!((est.psi_y_hat - psi.1).abs() < 1e-9);
        let (gx, gy) = ml_gradient(psi.0, psi.1, &prob).unwrap();
        assert!((gx * gx + gy * gy).sqrt() < 1e-6 * est.objective_value.max(1.0));
    }

    #[test]
    fn effective_estimate_is_the_mean() {
        let h = Complex64::new(0.4, -0.2);
        assert_eq!(estimate_effective_stage1(&[h]).unwrap(), h);
        assert!((estimate_effective_stage1(&[h; 4]).unwrap() - h).norm() < 1e-15);
        assert!(estimate_effective_stage1(&[]).is_err());
    }

    #[test]
    fn effective_estimate_variance_scales_with_pilots() {
        let mut rng = seeded(13);
        let (sigma2, tau_d, trials) = (0.5, 4, 100_000);
        let h = Complex64::new(1.0, 1.0);
        let mut acc = 0.0;
        for _ in 0..trials {
            let obs: Vec<_> = (0..tau_d).map(|_| h + complex_normal(&mut rng, sigma2)).collect();
            acc += (estimate_effective_stage1(&obs).unwrap() - h).norm_sqr();
        }
        assert_relative_eq!(acc / trials as f64, sigma2 / tau_d as f64, max_relative = 0.03);
    }

    #[test]
    fn ls_hand_solved_example() {
        let c = |re, im| Complex64::new(re, im);
        let theta = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0)]);
        let y = CVector::from_vec(vec![c(1.0, 1.0), c(1.0, -1.0)]);
        let est = ls_stage2(&theta, &y).unwrap();
        assert!((est.h_d_hat - c(1.0, 0.0)).norm() < 1e-12);
        assert!((est.h_r_hat - c(0.0, 1.0)).norm() < 1e-12);
        assert_relative_eq!(est.delta, -PI / 2.0, max_relative = 1e-12);

        let y = CVector::from_vec(vec![c(3.0, 0.0), c(1.0, 0.0)]);
        assert_eq!(ls_stage2(&theta, &y).unwrap().delta, 0.0);
    }

    #[test]
    fn ls_rejects_rank_deficient_training() {
        let one = Complex64::new(1.0, 0.0);
        let theta = CMatrix::from_element(3, 2, one);
        assert!(matches!(ls_stage2(&theta, &CVector::zeros(3)), Err(Error::IllPosed)));
        let single = CMatrix::from_element(1, 2, one);
        assert!(matches!(ls_stage2(&single, &CVector::zeros(1)), Err(Error::IllPosed)));
    }
}
