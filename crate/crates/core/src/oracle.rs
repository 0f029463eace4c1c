//! Discrete-time dynamic programming oracle on a moment-matched trinomial
//! lattice. Independent of the finite-difference scheme, meant for small
//! instances.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamiltonian::z_grid;
use crate::model::ValidatedModel;

/// Upper bound on `n_t * (n_y + 1) * n_z`.
pub const ORACLE_WORK_LIMIT: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleTable {
    pub dy: f64,
    /// Total number of time steps over all periods.
    pub n_steps: usize,
    /// `V(0, y_j)`.
    pub values: Vec<f64>,
}

impl OracleTable {
    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.dy
    }
}

/// Up, middle and down probabilities matching the mean `mu dt` and second
/// moment `z^2 dt + (mu dt)^2` of one increment.
pub fn trinomial(z: f64, mu: f64, dt: f64, dy: f64) -> (f64, f64, f64) {
    let m1 = mu * dt;
    let m2 = z * z * dt + m1 * m1;
    let up = 0.5 * (m2 / (dy * dy) + m1 / dy);
    let down = 0.5 * (m2 / (dy * dy) - m1 / dy);
    (up, 1.0 - up - down, down)
}

/// Oracle with the uniform control grid of `n_z` points on `[-K, K]`.
pub fn dp_oracle(
    model: &ValidatedModel,
    y_max: f64,
    n_t: usize,
    n_y: usize,
    n_z: usize,
) -> Result<OracleTable> {
    if n_z == 0 {
        return Err(Error::InvalidArgument("n_z must be at least 1".into()));
    }
    dp_oracle_with_controls(model, y_max, n_t, n_y, &z_grid(model.k_bound(), n_z))
}

/// Backward DP over the lattice `y_j = j y_max / n_y`. Each period gets
/// `round(n_t * len / T)` steps (at least one). The origin is absorbing
/// with value 0; the top node carries the zero-control value. Payments
/// search every node multiple `eta = m dy <= y`.
pub fn dp_oracle_with_controls(
    model: &ValidatedModel,
    y_max: f64,
    n_t: usize,
    n_y: usize,
    controls: &[f64],
) -> Result<OracleTable> {
    if n_t == 0 || n_y < 2 || controls.is_empty() {
        return Err(Error::InvalidArgument(
            "oracle needs n_t >= 1, n_y >= 2 and at least one control".into(),
        ));
    }
    if !(y_max > 0.0) {
        return Err(Error::InvalidArgument(format!("y_max must be positive, got {y_max}")));
    }
    let work = n_t as u64 * (n_y as u64 + 1) * controls.len() as u64;
    if work > ORACLE_WORK_LIMIT {
        return Err(Error::OracleTooLarge(work));
    }
    let gamma = model.gamma();
    let k_a = model.k_a();
    let dy = y_max / n_y as f64;
    let horizon = model.horizon();
    let schedule = model.schedule();
    let n = model.n_payments();

    let mut v: Vec<f64> = (0..=n_y).map(|j| -(j as f64 * dy).powf(gamma)).collect();
    let mut next = v.clone();
    let mut total = 0;
    for p in (0..n).rev() {
        let (t0, t1) = (schedule[p], schedule[p + 1]);
        if p + 1 < n {
            v = pay(&v, dy, gamma);
        }
        let steps = ((n_t as f64 * (t1 - t0) / horizon).round() as usize).max(1);
        let dt = (t1 - t0) / steps as f64;
        // Transition probabilities depend on (j, z) only.
        let mut probs = Vec::with_capacity((n_y - 1) * controls.len());
        for j in 1..n_y {
            let y = j as f64 * dy;
            for &z in controls {
                let (pu, pm, pd) = trinomial(z, 0.5 * z * z + k_a * y, dt, dy);
                let bad = |p: f64| !(-1e-14..=1.0 + 1e-14).contains(&p);
                if bad(pu) || bad(pm) || bad(pd) {
                    return Err(Error::OracleInfeasible { z, y });
                }
                probs.push((pu, pm, pd));
            }
        }
        for k in (0..steps).rev() {
            let t = t0 + k as f64 * dt;
            next[0] = 0.0;
            next[n_y] = model.zero_control_value(t, y_max);
            for j in 1..n_y {
                let row = &probs[(j - 1) * controls.len()..j * controls.len()];
                next[j] = controls
                    .iter()
                    .zip(row)
                    .map(|(&z, &(pu, pm, pd))| z * dt + pu * v[j + 1] + pm * v[j] + pd * v[j - 1])
                    .fold(f64::NEG_INFINITY, f64::max);
            }
            std::mem::swap(&mut v, &mut next);
        }
        total += steps;
    }
    Ok(OracleTable {
        dy,
        n_steps: total,
        values: v,
    })
}

fn pay(v: &[f64], dy: f64, gamma: f64) -> Vec<f64> {
    (0..v.len())
        .map(|j| {
            (0..=j)
                .map(|m| v[j - m] - (m as f64 * dy).powf(gamma))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;

    fn model(schedule: Vec<f64>, k_a: f64, k: f64) -> ValidatedModel {
        ModelParams::new(schedule)
            .with_k_a(k_a)
            .with_k_bound(k)
            .validate()
            .unwrap()
    }

    #[test]
    fn no_control_keeps_terminal_payoff() {
        let m = model(vec![0.0, 1.0], 0.0, 2.0);
        let t = dp_oracle(&m, 4.0, 50, 40, 1).unwrap();
        for (j, v) in t.values.iter().enumerate() {
            assert_eq!(*v, -(t.node(j)).powi(2));
        }
    }

    #[test]
    fn hand_enumerated_step() {
        // dt = 0.5, dy = 1, y = 1, z = 1: m1 = 0.25, m2 = 0.5625, so
        // (p_u, p_m, p_d) = (0.40625, 0.4375, 0.15625) and
        // E[-Y^2] = -(0.40625 * 4 + 0.4375 * 1) = -2.0625.
        let (pu, pm, pd) = trinomial(1.0, 0.5, 0.5, 1.0);
        assert_eq!((pu, pm, pd), (0.40625, 0.4375, 0.15625));
        // z = 1 scores 0.5 - 2.0625 = -1.5625 < -1, so z = 0 wins.
        let m = model(vec![0.0, 0.5], 0.0, 1.0);
        let t = dp_oracle_with_controls(&m, 3.0, 1, 3, &[0.0, 1.0]).unwrap();
        assert_eq!(t.values[1], -1.0);
        // at y = 2 the control pays: 0.5 - (0.40625*9 + 0.4375*4 + 0.15625) = -5.0625
        assert_eq!(t.values[2], -4.0);
        let t = dp_oracle_with_controls(&m, 3.0, 1, 3, &[1.0]).unwrap();
        assert_eq!(t.values[1], -1.5625);
    }

    #[test]
    fn size_guard() {
        let m = model(vec![0.0, 1.0], 0.0, 2.0);
        assert!(matches!(
            dp_oracle(&m, 4.0, 10_000, 1000, 3),
            Err(Error::OracleTooLarge(_))
        ));
    }

    #[test]
    fn infeasible_lattice_reports_control() {
        let m = model(vec![0.0, 1.0], 0.0, 2.0);
        match dp_oracle(&m, 4.0, 2, 40, 3) {
            Err(Error::OracleInfeasible { z, .. }) => assert_eq!(z.abs(), 2.0),
            other => panic!("unexpected {other:?}"),
        }
        // zero control with discounting has no diffusion to match the drift
        let m = model(vec![0.0, 1.0], 0.2, 2.0);
        match dp_oracle(&m, 4.0, 200, 40, 1) {
            Err(Error::OracleInfeasible { z, y }) => assert_eq!((z, y), (0.0, 0.1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn payment_step_is_exhaustive() {
        let v: Vec<f64> = (0..=4).map(|j| -(j as f64).powi(2)).collect();
        let f = pay(&v, 1.0, 2.0);
        assert_eq!(f, vec![0.0, -1.0, -2.0, -5.0, -8.0]);
    }
}
