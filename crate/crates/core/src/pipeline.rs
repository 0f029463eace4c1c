//! Backward induction over contracting periods, reservation-level values,
//! employment intervals and truncation regions, and the renegotiation
//! variant.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hjb::{solve_period, GridFunction, PeriodSolution};
use crate::model::{GridSpec, ModelParams, ValidatedModel};
use crate::payment::{intermediate_value, PaymentLayer};

/// Membership slack for the employment comparison.
pub const EMPLOYMENT_SLACK: f64 = 1e-9;
/// Payments at or below this count as zero.
pub const ZERO_PAYMENT: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct ContractSolution {
    /// Period solutions, `periods[i-1]` covers `[T_{i-1}, T_i)`.
    pub periods: Vec<PeriodSolution>,
    /// Payment layers, `payments[i-1]` acts at `T_i`, `i = 1..N-1`.
    pub payments: Vec<PaymentLayer>,
    pub model: ValidatedModel,
    pub grid: GridSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Initial,
    Renegotiation,
}

/// Per-period detail of a renegotiated contract.
#[derive(Debug, Clone, Serialize)]
pub struct RenegotiatedPeriod {
    pub period: usize,
    pub reservation: f64,
    pub y_star: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NegotiationReport {
    pub setting: Setting,
    /// Principal value `V_p`.
    pub v_p: f64,
    /// Optimal initial promised utility.
    pub y0_star: f64,
    /// Informational rent `Y0* - R_a`.
    pub rent: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub periods: Vec<RenegotiatedPeriod>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    Initial,
    Renegotiation,
    Indistinguishable,
}

#[derive(Debug, Clone, Serialize)]
pub struct SettingComparison {
    pub initial: NegotiationReport,
    pub renegotiation: NegotiationReport,
    /// `initial.v_p - renegotiation.v_p`.
    pub difference: f64,
    pub tolerance: f64,
    pub winner: Winner,
}

/// Node-wise set membership on the `y` grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Indicator {
    pub member: Vec<bool>,
    pub dy: f64,
}

impl Indicator {
    pub fn count(&self) -> usize {
        self.member.iter().filter(|&&m| m).count()
    }

    /// Node coordinates of the members.
    pub fn nodes(&self) -> Vec<f64> {
        self.member
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(j, _)| j as f64 * self.dy)
            .collect()
    }
}

pub fn solve_initial(model: &ValidatedModel, grid: &GridSpec) -> Result<ContractSolution> {
    grid.check()?;
    let schedule = model.schedule();
    let n = model.n_payments();
    let mut terminal = GridFunction::terminal_payoff(grid, model.gamma());
    let mut periods = Vec::with_capacity(n);
    let mut payments = Vec::with_capacity(n.saturating_sub(1));
    for i in (1..=n).rev() {
        let mut period = solve_period(&terminal, schedule[i - 1], schedule[i], model, grid)?;
        period.period = i;
        if i > 1 {
            let mut layer = intermediate_value(&period.initial_slice(), model.gamma())?;
            layer.period = i - 1;
            terminal = layer.f.clone();
            payments.push(layer);
        }
        periods.push(period);
    }
    periods.reverse();
    payments.reverse();
    Ok(ContractSolution {
        periods,
        payments,
        model: model.clone(),
        grid: grid.clone(),
    })
}

/// Best reservation-feasible start on a time-`t` value slice: `R_a` itself
/// (interpolated) and every node above it; smallest maximizer on ties.
fn best_start(slice: &GridFunction, r_a: f64) -> Result<(f64, f64)> {
    if r_a > slice.y_max() * (1.0 + 1e-12) {
        return Err(Error::OutOfRange(format!(
            "reservation {r_a} beyond y_max {}",
            slice.y_max()
        )));
    }
    let mut best = (r_a, slice.interpolate(r_a));
    for (j, &v) in slice.values.iter().enumerate() {
        let y = slice.node(j);
        if y > r_a && v > best.1 {
            best = (y, v);
        }
    }
    Ok(best)
}

pub fn principal_value(solution: &ContractSolution, r_a: f64) -> Result<NegotiationReport> {
    let (y0, v) = best_start(&solution.periods[0].initial_slice(), r_a)?;
    Ok(NegotiationReport {
        setting: Setting::Initial,
        v_p: solution.model.x0() + v,
        y0_star: y0,
        rent: y0 - r_a,
        periods: Vec::new(),
    })
}

fn check_interior_index(solution: &ContractSolution, i: usize) -> Result<()> {
    let n = solution.model.n_payments();
    if i == 0 || i >= n {
        return Err(Error::OutOfRange(format!(
            "index {i} outside 1..={}",
            n.saturating_sub(1)
        )));
    }
    Ok(())
}

/// `E_i = { y : v(T_{i-1}, y) >= v(T_i, y) }`.
pub fn employment_interval(solution: &ContractSolution, i: usize) -> Result<Indicator> {
    check_interior_index(solution, i)?;
    let before = &solution.periods[i - 1].surface[0];
    let after = &solution.periods[i].surface[0];
    Ok(Indicator {
        member: before
            .iter()
            .zip(after)
            .map(|(a, b)| *a >= b - EMPLOYMENT_SLACK)
            .collect(),
        dy: solution.grid.dy(),
    })
}

/// `{ y : eta*_i(y) = 0 }`.
pub fn truncation_region(solution: &ContractSolution, i: usize) -> Result<Indicator> {
    check_interior_index(solution, i)?;
    Ok(Indicator {
        member: solution.payments[i - 1]
            .eta_star
            .values
            .iter()
            .map(|&e| e <= ZERO_PAYMENT)
            .collect(),
        dy: solution.grid.dy(),
    })
}

/// `R_a^i = exp(k_a T_{i-1}) (T_i - T_{i-1}) / T * R_a`.
pub fn renegotiation_reservations(model: &ValidatedModel) -> Vec<f64> {
    let s = model.schedule();
    let horizon = model.horizon();
    s.windows(2)
        .map(|w| (model.k_a() * w[0]).exp() * (w[1] - w[0]) / horizon * model.r_a())
        .collect()
}

/// Single-payment model on `[0, len]` sharing every other primitive.
fn single_period_model(model: &ValidatedModel, len: f64) -> Result<ValidatedModel> {
    ModelParams {
        schedule: vec![0.0, len],
        ..model.params().clone()
    }
    .validate()
}

/// Each period is an independent single-payment contract signed at
/// `T_{i-1}` with reservation `R_a^i`; the principal's value is the sum of
/// the per-period optima.
pub fn solve_renegotiation(model: &ValidatedModel, grid: &GridSpec) -> Result<NegotiationReport> {
    grid.check()?;
    let reservations = renegotiation_reservations(model);
    if let Some(r) = reservations.iter().find(|&&r| r > grid.y_max) {
        return Err(Error::OutOfRange(format!(
            "renegotiation reservation {r} beyond y_max {}",
            grid.y_max
        )));
    }
    // Periods of equal length share one solve: the equation is autonomous.
    let mut lengths: BTreeMap<u64, f64> = BTreeMap::new();
    for w in model.schedule().windows(2) {
        let len = w[1] - w[0];
        lengths.insert(len.to_bits(), len);
    }
    let slices: Vec<(u64, GridFunction)> = lengths
        .into_par_iter()
        .map(|(key, len)| {
            let sub = single_period_model(model, len)?;
            let terminal = GridFunction::terminal_payoff(grid, model.gamma());
            let sol = solve_period(&terminal, 0.0, len, &sub, grid)?;
            Ok((key, sol.initial_slice()))
        })
        .collect::<Result<_>>()?;
    let slices: BTreeMap<u64, GridFunction> = slices.into_iter().collect();

    let mut periods = Vec::with_capacity(reservations.len());
    let mut total = model.x0();
    for (i, (w, &r)) in model.schedule().windows(2).zip(&reservations).enumerate() {
        let slice = &slices[&(w[1] - w[0]).to_bits()];
        let (y, v) = best_start(slice, r)?;
        total += v;
        periods.push(RenegotiatedPeriod {
            period: i + 1,
            reservation: r,
            y_star: y,
            value: v,
        });
    }
    let y0 = periods[0].y_star;
    Ok(NegotiationReport {
        setting: Setting::Renegotiation,
        v_p: total,
        y0_star: y0,
        rent: y0 - reservations[0],
        periods,
    })
}

/// Both settings on the same grid. Differences within `tolerance` are
/// reported as indistinguishable.
pub fn compare_settings(
    model: &ValidatedModel,
    grid: &GridSpec,
    tolerance: f64,
) -> Result<SettingComparison> {
    let (initial, renegotiation) = rayon::join(
        || solve_initial(model, grid).and_then(|s| principal_value(&s, model.r_a())),
        || solve_renegotiation(model, grid),
    );
    let (initial, renegotiation) = (initial?, renegotiation?);
    let difference = initial.v_p - renegotiation.v_p;
    let winner = if difference.abs() <= tolerance {
        Winner::Indistinguishable
    } else if difference > 0.0 {
        Winner::Initial
    } else {
        Winner::Renegotiation
    };
    Ok(SettingComparison {
        initial,
        renegotiation,
        difference,
        tolerance,
        winner,
    })
}

/// Refinement delta of the negotiation comparison: how much each setting's
/// value moves when the grid is coarsened by half.
pub fn comparison_tolerance(model: &ValidatedModel, grid: &GridSpec) -> Result<f64> {
    let coarse = GridSpec {
        n_y: grid.n_y / 2,
        ..grid.clone()
    };
    let (fine, coarse) = rayon::join(
        || compare_settings(model, grid, 0.0),
        || compare_settings(model, &coarse, 0.0),
    );
    let (fine, coarse) = (fine?, coarse?);
    Ok((fine.initial.v_p - coarse.initial.v_p)
        .abs()
        .max((fine.renegotiation.v_p - coarse.renegotiation.v_p).abs()))
}

/// Sup-norm change of `v(0, .)` on `[0, y_limit]` between `grid` and the
/// grid with half as many cells, compared at the shared nodes.
pub fn refinement_delta(model: &ValidatedModel, grid: &GridSpec, y_limit: f64) -> Result<f64> {
    let coarse = GridSpec {
        n_y: grid.n_y / 2,
        ..grid.clone()
    };
    let (fine, coarse) = rayon::join(|| solve_initial(model, grid), || solve_initial(model, &coarse));
    Ok(slice_distance(
        &fine?.periods[0].initial_slice(),
        &coarse?.periods[0].initial_slice(),
        y_limit,
    ))
}

/// Sup-norm distance between two slices on the same truncation, evaluated
/// at the coarser slice's nodes up to `y_limit`.
pub fn slice_distance(a: &GridFunction, b: &GridFunction, y_limit: f64) -> f64 {
    let (fine, coarse) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    coarse
        .values
        .iter()
        .enumerate()
        .filter(|(j, _)| coarse.node(*j) <= y_limit + 1e-12)
        .map(|(j, v)| (fine.interpolate(coarse.node(j)) - v).abs())
        .fold(0.0, f64::max)
}

impl ContractSolution {
    /// `v(0, .)`.
    pub fn initial_slice(&self) -> GridFunction {
        self.periods[0].initial_slice()
    }

    /// Value surface at `(t, y)`; on a payment date the post-payment
    /// (next period's) value is returned.
    pub fn eval(&self, t: f64, y: f64) -> Result<f64> {
        let idx = self.period_index(t);
        self.periods[idx].eval(t, y)
    }

    /// Zero-based index of the period whose `[T_{i-1}, T_i)` contains `t`;
    /// the last period also owns `T`.
    pub fn period_index(&self, t: f64) -> usize {
        let s = self.model.schedule();
        let n = self.periods.len();
        (s[1..n].partition_point(|&ti| ti <= t)).min(n - 1)
    }
}
