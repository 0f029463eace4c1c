//! Pointwise maximization of the HJB Hamiltonian
//! `G = k_a y v_y + sup_{|z| <= K} { z + (v_y + v_yy) z^2 / 2 }`.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HamiltonianResult {
    pub z_star: f64,
    pub value: f64,
    /// Curvature aggregate `a = v_y + v_yy` the maximization used.
    pub curvature: f64,
}

fn objective(z: f64, a: f64) -> f64 {
    z + 0.5 * a * z * z
}

/// Closed-form maximizer of `z + a z^2 / 2` over `[-K, K]`.
///
/// Concave case (`a < 0`): the vertex `-1/a` clipped to `K`. Otherwise the
/// map is convex or linear and the right endpoint wins.
#[inline]
pub fn optimal_z_unchecked(a: f64, k_bound: f64) -> HamiltonianResult {
    let z_star = if a < 0.0 { (-1.0 / a).min(k_bound) } else { k_bound };
    HamiltonianResult {
        z_star,
        value: objective(z_star, a),
        curvature: a,
    }
}

pub fn optimal_z(a: f64, k_bound: f64) -> Result<HamiltonianResult> {
    if !a.is_finite() {
        return Err(Error::InvalidArgument(format!("curvature must be finite, got {a}")));
    }
    if !(k_bound > 0.0) {
        return Err(Error::InvalidArgument(format!("K must be positive, got {k_bound}")));
    }
    Ok(optimal_z_unchecked(a, k_bound))
}

pub fn hamiltonian_g(y: f64, v_y: f64, v_yy: f64, k_a: f64, k_bound: f64) -> Result<f64> {
    if !(y >= 0.0) {
        return Err(Error::InvalidArgument(format!("y must be nonnegative, got {y}")));
    }
    let sup = optimal_z(v_y + v_yy, k_bound)?;
    Ok(k_a * y * v_y + sup.value)
}

/// Maximizes over the uniform grid `{-K + 2K j/(M-1)}` together with the
/// closed-form candidate. The candidate is scored first and only displaced
/// by a grid point that beats it beyond rounding, so the result coincides
/// with [`optimal_z`].
pub fn optimal_z_discrete(a: f64, k_bound: f64, m: usize) -> Result<HamiltonianResult> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!("z grid needs M >= 2, got {m}")));
    }
    let mut best = optimal_z(a, k_bound)?;
    for z in z_grid(k_bound, m) {
        let value = objective(z, a);
        if value > best.value + 1e-15 * (1.0 + best.value.abs()) {
            best = HamiltonianResult {
                z_star: z,
                value,
                curvature: a,
            };
        }
    }
    Ok(best)
}

/// Uniform grid of `m` controls on `[-K, K]`; a single point means `{0}`.
pub fn z_grid(k_bound: f64, m: usize) -> Vec<f64> {
    if m == 1 {
        return vec![0.0];
    }
    (0..m)
        .map(|j| k_bound * ((2 * j) as f64 - (m - 1) as f64) / (m - 1) as f64)
        .collect()
}
