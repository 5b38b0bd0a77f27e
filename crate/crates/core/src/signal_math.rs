//! Complex-vector primitives: array steering vectors, DFT matrices, Kronecker
//! composition and the projector that removes a common offset.
//!
//! Element and pilot indices are 0-based throughout. The planar array is
//! flattened x-major: element `(kx, ky)` sits at `kx * m_y + ky`, which is the
//! ordering produced by `s_x ⊗ s_y`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::{CMatrix, CVector};

/// Reduce a normalized phase modulo 2 into `[-1, 1)`.
pub fn fold_phase(phi: f64) -> f64 {
    (phi + 1.0).rem_euclid(2.0) - 1.0
}

/// Wrap an angle in radians into `(-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = theta.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// 1D steering vector `[1, e^{jπφ}, …, e^{j(m-1)πφ}]`.
pub fn steering_1d(phi: f64, m_count: usize) -> Result<CVector> {
    if m_count == 0 {
        return Err(Error::InvalidDimension("steering vector needs at least one element".into()));
    }
    Ok(CVector::from_fn(m_count, |k, _| {
        Complex64::from_polar(1.0, k as f64 * PI * phi)
    }))
}

/// Effective phases and dimensions of a uniform planar array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteeringParams {
    pub psi_x: f64,
    pub psi_y: f64,
    pub m_x: usize,
    pub m_y: usize,
}

impl SteeringParams {
    /// Phases are folded into `[-1, 1)`; both dimensions must be positive.
    pub fn new(psi_x: f64, psi_y: f64, m_x: usize, m_y: usize) -> Result<Self> {
        if m_x == 0 || m_y == 0 {
            return Err(Error::InvalidDimension(format!("array is {m_x}x{m_y}")));
        }
        Ok(Self {
            psi_x: fold_phase(psi_x),
            psi_y: fold_phase(psi_y),
            m_x,
            m_y,
        })
    }

    pub fn m(&self) -> usize {
        self.m_x * self.m_y
    }
}

/// 2D steering vector `s(ψx, Mx) ⊗ s(ψy, My)`.
pub fn steering_2d(p: &SteeringParams) -> CVector {
    let sx = steering_1d(p.psi_x, p.m_x).expect("validated dimension");
    let sy = steering_1d(p.psi_y, p.m_y).expect("validated dimension");
    kron(&sx, &sy)
}

/// Convenience wrapper around [`steering_2d`] for raw phases.
pub fn upa_steering(psi_x: f64, psi_y: f64, m_x: usize, m_y: usize) -> Result<CVector> {
    Ok(steering_2d(&SteeringParams::new(psi_x, psi_y, m_x, m_y)?))
}

/// Kronecker product of two column vectors.
pub fn kron(a: &CVector, b: &CVector) -> CVector {
    let nb = b.len();
    CVector::from_fn(a.len() * nb, |i, _| a[i / nb] * b[i % nb])
}

/// `m × m` DFT matrix with entries `exp(-j 2π a b / m)`.
pub fn dft_matrix(m: usize) -> Result<CMatrix> {
    if m == 0 {
        return Err(Error::InvalidDimension("DFT size must be positive".into()));
    }
    Ok(CMatrix::from_fn(m, m, |a, b| {
        // reduce the exponent first to keep large products accurate
        let k = (a * b) % m;
        Complex64::from_polar(1.0, -2.0 * PI * k as f64 / m as f64)
    }))
}

/// `B = I - 11ᵀ/τ`, the orthogonal projector onto vectors with zero mean.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteringProjector {
    pub tau: usize,
    pub matrix: CMatrix,
}

impl CenteringProjector {
    /// Apply `B` without forming the product: subtract the sample mean.
    pub fn apply(&self, y: &CVector) -> CVector {
        center(y)
    }
}

pub fn centering_projector(tau: usize) -> Result<CenteringProjector> {
    if tau == 0 {
        return Err(Error::InvalidDimension("projector size must be positive".into()));
    }
    let inv = 1.0 / tau as f64;
    let matrix = CMatrix::from_fn(tau, tau, |i, j| {
        let d = if i == j { 1.0 } else { 0.0 };
        Complex64::new(d - inv, 0.0)
    });
    Ok(CenteringProjector { tau, matrix })
}

/// `y - mean(y)·1`.
pub fn center(y: &CVector) -> CVector {
    if y.is_empty() {
        return y.clone();
    }
    let mean = y.sum() / y.len() as f64;
    y.map(|v| v - mean)
}

/// Bessel function of the first kind, order zero.
///
/// Uses `J0(x) = (1/π) ∫₀^π cos(x sin t) dt`. The integrand is smooth and
/// periodic so the trapezoidal rule converges geometrically once the node
/// count exceeds roughly `|x|/2`.
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    let nodes = 64 + (x.ceil() as usize) * 2;
    let h = PI / nodes as f64;
    // trapezoid over a full period of the even integrand: endpoints each count half
    let mut acc = 0.5 * (1.0 + (x * (PI).sin()).cos());
    for k in 1..nodes {
        acc += (x * (k as f64 * h).sin()).cos();
    }
    acc * h / PI
}
