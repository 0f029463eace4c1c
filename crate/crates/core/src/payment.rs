//! Intermediate value `f_i(y) = max_{0<=eta<=y} -eta^gamma + v(T_i, y - eta)`
//! and its minimal maximizer `eta*_i`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hjb::GridFunction;

/// Sub-grid refinement of the `eta` search relative to the `y` grid.
pub const ETA_REFINEMENT: usize = 4;

/// Maximizers within this distance of the best value count as ties.
pub const TIE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct PaymentLayer {
    /// One-based payment index `i`.
    pub period: usize,
    /// Value just before the payment, `f_i`.
    pub f: GridFunction,
    /// Utility paid at `T_i` as a function of pre-payment utility.
    pub eta_star: GridFunction,
}

impl PaymentLayer {
    /// Payment utility for an off-grid pre-payment state, clamped to `[0, y]`.
    pub fn payment(&self, y: f64) -> f64 {
        self.eta_star.interpolate(y).clamp(0.0, y.max(0.0))
    }
}

/// Maximizes over `eta = m * dy / 4`, `m = 0..=4j`, at every node `y_j`,
/// evaluating `v_next` between nodes by linear interpolation. Among values
/// within [`TIE_TOLERANCE`] of the best, the smallest `eta` is kept.
pub fn intermediate_value(v_next: &GridFunction, gamma: f64) -> Result<PaymentLayer> {
    if v_next.values.first().copied() != Some(0.0) {
        return Err(Error::InvalidArgument(
            "continuation slice must vanish at y = 0".into(),
        ));
    }
    let dy = v_next.dy;
    let h = dy / ETA_REFINEMENT as f64;
    let n = v_next.len();
    // v_next on the refined sub-grid: u[m] = v_next(m h).
    let fine: Vec<f64> = (0..=(n - 1) * ETA_REFINEMENT)
        .map(|m| {
            let j = m / ETA_REFINEMENT;
            let r = m % ETA_REFINEMENT;
            if r == 0 {
                v_next.values[j]
            } else {
                let w = r as f64 / ETA_REFINEMENT as f64;
                v_next.values[j] + w * (v_next.values[j + 1] - v_next.values[j])
            }
        })
        .collect();
    let cost: Vec<f64> = (0..fine.len())
        .map(|m| (m as f64 * h).powf(gamma))
        .collect();

    let mut f = vec![0.0; n];
    let mut eta = vec![0.0; n];
    for j in 1..n {
        let top = j * ETA_REFINEMENT;
        let objective = |m: usize| fine[top - m] - cost[m];
        let best = (0..=top).map(objective).fold(f64::NEG_INFINITY, f64::max);
        let m_star = (0..=top)
            .find(|&m| objective(m) >= best - TIE_TOLERANCE)
            .expect("best value is attained");
        f[j] = objective(m_star);
        eta[j] = m_star as f64 * h;
    }
    Ok(PaymentLayer {
        period: 0,
        f: GridFunction::new(f, dy),
        eta_star: GridFunction::new(eta, dy),
    })
}
