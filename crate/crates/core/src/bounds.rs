//! Supersolution barrier
//!
//! ```text
//! phi(t, y) = -a y^gamma + b e^{(T-t)/T} y^{1/M} + e^{c(T-t)} (1 - e^{-y})
//! ```
//!
//! with a numerically certified parameter triple `(b, c, M)`, and the value
//! sandwich `-e^{gamma k_a (T-t)} y^gamma <= v(t, y) <= phi(t, y)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamiltonian::optimal_z_unchecked;
use crate::model::{GridSpec, ValidatedModel};
use crate::pipeline::ContractSolution;

/// Parameter triple `(b, c, M)` of the barrier family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Delta {
    pub b: f64,
    pub c: f64,
    #[serde(rename = "M")]
    pub m: f64,
}

impl Delta {
    pub fn new(b: f64, c: f64, m: f64) -> Self {
        Self { b, c, m }
    }
}

/// Exponent `p` in the period weights `a_i = 1 / (1 + N - i)^p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightExponent {
    /// `p = gamma - 1`.
    #[default]
    GammaMinusOne,
    /// `p = gamma`.
    Gamma,
}

impl WeightExponent {
    fn power(self, gamma: f64) -> f64 {
        match self {
            WeightExponent::GammaMinusOne => gamma - 1.0,
            WeightExponent::Gamma => gamma,
        }
    }

    /// Weight for one-based period `i` of `n`.
    pub fn weight(self, gamma: f64, i: usize, n: usize) -> f64 {
        1.0 / ((1 + n - i) as f64).powf(self.power(gamma))
    }

    /// All distinct weights `{1, 1/2^p, ..., 1/N^p}`.
    pub fn weights(self, gamma: f64, n: usize) -> Vec<f64> {
        (1..=n).map(|m| 1.0 / (m as f64).powf(self.power(gamma))).collect()
    }
}

pub fn phi_single(t: f64, y: f64, gamma: f64, a: f64, delta: &Delta, horizon: f64) -> f64 {
    let tau = horizon - t;
    -a * y.powf(gamma)
        + delta.b * (tau / horizon).exp() * y.powf(1.0 / delta.m)
        + (delta.c * tau).exp() * (1.0 - (-y).exp())
}

/// Analytic `(phi_t, phi_y, phi_yy)` for `y > 0`.
pub fn phi_partials(
    t: f64,
    y: f64,
    gamma: f64,
    a: f64,
    delta: &Delta,
    horizon: f64,
) -> (f64, f64, f64) {
    let tau = horizon - t;
    let inv_m = 1.0 / delta.m;
    let slow = delta.b * (tau / horizon).exp();
    let fast = (delta.c * tau).exp();
    let e_y = (-y).exp();
    let root = y.powf(inv_m);
    let phi_t = -slow / horizon * root - delta.c * fast * (1.0 - e_y);
    let phi_y = -a * gamma * y.powf(gamma - 1.0) + slow * inv_m * root / y + fast * e_y;
    let phi_yy = -a * gamma * (gamma - 1.0) * y.powf(gamma - 2.0)
        + slow * inv_m * (inv_m - 1.0) * root / (y * y)
        - fast * e_y;
    (phi_t, phi_y, phi_yy)
}

/// Barrier assembled over the schedule: on `(T_{i-1}, T_i]` the weight is
/// `a_i`; `t = 0` uses the first period.
pub fn phi_aggregate(
    t: f64,
    y: f64,
    gamma: f64,
    delta0: &Delta,
    schedule: &[f64],
    exponent: WeightExponent,
) -> f64 {
    let n = schedule.len() - 1;
    let i = schedule[1..n].partition_point(|&ti| ti < t) + 1;
    let a = exponent.weight(gamma, i, n);
    phi_single(t, y, gamma, a, delta0, schedule[n])
}

/// `-phi_t - sup_{|z|<=K}{z + (phi_y + phi_yy) z^2/2} - k_a y phi_y`.
pub fn supersolution_residual(
    t: f64,
    y: f64,
    a: f64,
    delta: &Delta,
    model: &ValidatedModel,
) -> f64 {
    let (phi_t, phi_y, phi_yy) = phi_partials(t, y, model.gamma(), a, delta, model.horizon());
    let sup = optimal_z_unchecked(phi_y + phi_yy, model.k_bound()).value;
    -phi_t - sup - model.k_a() * y * phi_y
}

pub const VERIFY_T_NODES: usize = 201;
pub const VERIFY_Y_NODES: usize = 401;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SupersolutionCheck {
    pub min_residual: f64,
    pub t: f64,
    pub y: f64,
    pub a: f64,
}

/// Verification nodes on `[dy/10, 2 y_max]`.
pub fn verification_y_nodes(grid: &GridSpec) -> Vec<f64> {
    let lo = grid.dy() / 10.0;
    let hi = 2.0 * grid.y_max;
    (0..VERIFY_Y_NODES)
        .map(|k| lo + (hi - lo) * k as f64 / (VERIFY_Y_NODES - 1) as f64)
        .collect()
}

/// Minimum of the supersolution residual over a 201 x 401 grid on
/// `[0, T] x [dy/10, 2 y_max]` and over every period weight.
pub fn verify_supersolution(
    delta: &Delta,
    model: &ValidatedModel,
    grid: &GridSpec,
    exponent: WeightExponent,
) -> SupersolutionCheck {
    let horizon = model.horizon();
    let ys = verification_y_nodes(grid);
    let mut worst = SupersolutionCheck {
        min_residual: f64::INFINITY,
        t: f64::NAN,
        y: f64::NAN,
        a: f64::NAN,
    };
    for a in exponent.weights(model.gamma(), model.n_payments()) {
        for k in 0..VERIFY_T_NODES {
            let t = horizon * k as f64 / (VERIFY_T_NODES - 1) as f64;
            for &y in &ys {
                let r = supersolution_residual(t, y, a, delta, model);
                // NaN counts as a failure
                if !(r >= worst.min_residual) {
                    worst = SupersolutionCheck {
                        min_residual: r,
                        t,
                        y,
                        a,
                    };
                }
            }
        }
    }
    worst
}

/// Candidate multipliers for the coarse `(b, c, M)` search.
#[derive(Debug, Clone, Serialize)]
pub struct SearchBox {
    /// `M = m_floor * factor`, ascending.
    pub m_factors: Vec<f64>,
    /// `b = b_ceiling * factor`, descending.
    pub b_factors: Vec<f64>,
    /// `c = 3 k_a + offset`, ascending.
    pub c_offsets: Vec<f64>,
}

impl Default for SearchBox {
    fn default() -> Self {
        Self {
            m_factors: vec![1.25, 1.5, 2.0, 3.0, 5.0],
            b_factors: vec![0.9, 0.5, 0.25, 0.1, 0.01, 0.001],
            c_offsets: vec![0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0],
        }
    }
}

/// First `(b, c, M)` in search order (M ascending, b descending, c
/// ascending) inside the explicit constraints
/// `M > max(k_a T, 1/(gamma-1), 2)`, `c > 3 k_a`,
/// `b < M N^{1-gamma} gamma (gamma-1) / e`, whose residual is nonnegative on
/// the verification grid.
pub fn search_delta0(
    model: &ValidatedModel,
    grid: &GridSpec,
    exponent: WeightExponent,
    search: &SearchBox,
) -> Result<(Delta, SupersolutionCheck)> {
    let gamma = model.gamma();
    let n = model.n_payments() as f64;
    let horizon = model.horizon();
    let m_floor = (model.k_a() * horizon).max(1.0 / (gamma - 1.0)).max(2.0);
    for &mf in &search.m_factors {
        let m = m_floor * mf;
        if m <= m_floor {
            continue;
        }
        let b_ceiling = m * n.powf(1.0 - gamma) * gamma * (gamma - 1.0) / std::f64::consts::E;
        for &bf in &search.b_factors {
            let b = b_ceiling * bf;
            if !(b > 0.0 && b < b_ceiling) {
                continue;
            }
            for &co in &search.c_offsets {
                let c = 3.0 * model.k_a() + co;
                if !(c > 3.0 * model.k_a()) || c * horizon > 700.0 {
                    continue;
                }
                let delta = Delta::new(b, c, m);
                let check = verify_supersolution(&delta, model, grid, exponent);
                if check.min_residual >= 0.0 {
                    return Ok((delta, check));
                }
            }
        }
    }
    Err(Error::NoDeltaFound)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Margin {
    /// Smallest gap over all nodes; negative means violation.
    pub margin: f64,
    pub period: usize,
    pub t: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SandwichReport {
    /// `min (v - lower)`.
    pub lower: Margin,
    /// `min (phi - v)`.
    pub upper: Margin,
}

/// Worst margins of `lower <= v <= phi` over every stored node of every
/// period. Each period is bounded by the barrier with its own weight `a_i`,
/// including at `t = T_{i-1}` and `t = T_i^-`.
pub fn sandwich_margins(
    solution: &ContractSolution,
    delta0: &Delta,
    exponent: WeightExponent,
) -> SandwichReport {
    let model = &solution.model;
    let (gamma, horizon, n) = (model.gamma(), model.horizon(), model.n_payments());
    let start = Margin {
        margin: f64::INFINITY,
        period: 0,
        t: f64::NAN,
        y: f64::NAN,
    };
    let (mut lower, mut upper) = (start, start);
    for period in &solution.periods {
        let a = exponent.weight(gamma, period.period, n);
        for (t, row) in period.times.iter().zip(&period.surface) {
            for (j, &v) in row.iter().enumerate() {
                let y = j as f64 * period.dy;
                let lo = v - model.zero_control_value(*t, y);
                if !(lo >= lower.margin) {
                    lower = Margin { margin: lo, period: period.period, t: *t, y };
                }
                let up = phi_single(*t, y, gamma, a, delta0, horizon) - v;
                if !(up >= upper.margin) {
                    upper = Margin { margin: up, period: period.period, t: *t, y };
                }
            }
        }
    }
    SandwichReport { lower, upper }
}

/// [`sandwich_margins`], failing when either margin drops below `-tolerance`.
pub fn check_sandwich(
    solution: &ContractSolution,
    delta0: &Delta,
    exponent: WeightExponent,
    tolerance: f64,
) -> Result<SandwichReport> {
    let report = sandwich_margins(solution, delta0, exponent);
    for (side, m) in [("lower", report.lower), ("upper", report.upper)] {
        if !(m.margin >= -tolerance) {
            return Err(Error::SandwichViolation {
                period: m.period,
                t: m.t,
                y: m.y,
                detail: format!("{side} margin {}", m.margin),
            });
        }
    }
    Ok(report)
}
