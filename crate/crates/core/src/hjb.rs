//! Explicit monotone finite-difference solver for one contracting period of
//! the constrained HJB equation
//!
//! ```text
//! v_t + k_a y v_y + sup_{|z|<=K} { z + (v_y + v_yy) z^2 / 2 } = 0,
//! v(t, 0) = 0,   v(t, y_max) = -exp(gamma k_a (T - t)) y_max^gamma,
//! ```
//!
//! marched backward from a terminal slice. For each frozen control the
//! update uses a central second difference and a forward first difference
//! (the drift `z^2/2 + k_a y` is never negative), so every frozen-control
//! operator has nonnegative stencil weights under [`cfl_dt`]. The pointwise
//! max over controls of monotone operators is monotone.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamiltonian::{optimal_z_discrete, optimal_z_unchecked};
use crate::model::{GridSpec, ValidatedModel};

/// Values of a scalar function at the nodes `y_j = j * dy`, `j = 0..=n_y`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridFunction {
    pub values: Vec<f64>,
    pub dy: f64,
}

impl GridFunction {
    pub fn new(values: Vec<f64>, dy: f64) -> Self {
        Self { values, dy }
    }

    pub fn from_fn(grid: &GridSpec, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: grid.nodes().into_iter().map(f).collect(),
            dy: grid.dy(),
        }
    }

    /// The terminal payoff `-y^gamma`.
    pub fn terminal_payoff(grid: &GridSpec, gamma: f64) -> Self {
        Self::from_fn(grid, |y| -y.powf(gamma))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn y_max(&self) -> f64 {
        self.dy * (self.values.len() - 1) as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.dy
    }

    /// Piecewise-linear interpolation; `y` is clamped into `[0, y_max]`.
    pub fn interpolate(&self, y: f64) -> f64 {
        interp_row(&self.values, self.dy, y)
    }
}

#[inline]
fn interp_row(values: &[f64], dy: f64, y: f64) -> f64 {
    let last = values.len() - 1;
    let s = (y / dy).clamp(0.0, last as f64);
    let j = (s.floor() as usize).min(last.saturating_sub(1));
    let w = s - j as f64;
    if w == 0.0 {
        values[j]
    } else {
        values[j] + w * (values[j + 1] - values[j])
    }
}

/// How the pointwise supremum over `|z| <= K` is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZSearch {
    /// Exact maximizer of the frozen-node quadratic.
    #[default]
    ClosedForm,
    /// Uniform grid of `M` controls plus the closed-form candidate.
    Grid(usize),
}

/// Data needed to replay one explicit step into a stored level.
#[derive(Debug, Clone)]
pub struct StepCheck {
    /// Index of the stored level this step produced.
    pub level: usize,
    /// Step length.
    pub dt: f64,
    /// Slice the step started from; `None` when that slice is the stored
    /// level `level + 1`.
    pub upper: Option<Vec<f64>>,
}

/// Value surface and feedback control on one contracting period.
///
/// Levels are stored ascending in time; long periods keep a strided subset
/// of the solver's levels (bounded by `GridSpec::store_levels`) plus the
/// information to replay the step into each kept level.
#[derive(Debug, Clone)]
pub struct PeriodSolution {
    /// One-based period index `i` for `[T_{i-1}, T_i)`.
    pub period: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub times: Vec<f64>,
    pub surface: Vec<Vec<f64>>,
    pub feedback: Vec<Vec<f64>>,
    pub checks: Vec<StepCheck>,
    pub dy: f64,
    /// Nominal (CFL) step; the last step may be shorter.
    pub dt: f64,
    pub n_steps: usize,
}

/// Largest step that keeps every frozen-control stencil weight nonnegative:
/// `safety * dy^2 / (K^2 + (K^2/2 + k_a y_max) dy)`.
pub fn cfl_dt(grid: &GridSpec, model: &ValidatedModel) -> f64 {
    let dy = grid.dy();
    let k2 = model.k_bound() * model.k_bound();
    grid.safety * dy * dy / (k2 + (0.5 * k2 + model.k_a() * grid.y_max) * dy)
}

struct Stepper {
    n: usize,
    dy: f64,
    inv_dy: f64,
    inv_dy2: f64,
    k_a: f64,
    k_bound: f64,
    search: ZSearch,
}

impl Stepper {
    fn new(grid: &GridSpec, model: &ValidatedModel, search: ZSearch) -> Self {
        let dy = grid.dy();
        Self {
            n: grid.n_y,
            dy,
            inv_dy: 1.0 / dy,
            inv_dy2: 1.0 / (dy * dy),
            k_a: model.k_a(),
            k_bound: model.k_bound(),
            search,
        }
    }

    #[inline]
    fn sup(&self, a: f64) -> (f64, f64) {
        match self.search {
            ZSearch::ClosedForm => {
                let r = optimal_z_unchecked(a, self.k_bound);
                (r.z_star, r.value)
            }
            ZSearch::Grid(m) => {
                let r = optimal_z_discrete(a, self.k_bound, m).expect("finite curvature");
                (r.z_star, r.value)
            }
        }
    }

    #[inline]
    fn derivatives(&self, prev: &[f64], j: usize) -> (f64, f64) {
        let (vm, v0, vp) = (prev[j - 1], prev[j], prev[j + 1]);
        let d1 = (vp - v0) * self.inv_dy;
        let d2 = (vp - 2.0 * v0 + vm) * self.inv_dy2;
        (d1, d2)
    }

    /// Frozen-control update of interior node `j`.
    #[inline]
    fn apply(&self, prev: &[f64], j: usize, z: f64, dt: f64) -> f64 {
        let (d1, d2) = self.derivatives(prev, j);
        let a = d1 + d2;
        prev[j] + dt * (self.k_a * self.dy * j as f64 * d1 + z + 0.5 * a * z * z)
    }

    /// Argmax controls for the operator applied to `slice` (no update).
    fn controls(&self, slice: &[f64], z_out: &mut [f64]) {
        z_out[0] = 0.0;
        z_out[self.n] = 0.0;
        for j in 1..self.n {
            let (d1, d2) = self.derivatives(slice, j);
            z_out[j] = self.sup(d1 + d2).0;
        }
    }

    /// One explicit step. Feedback is written only when `z_out` is given.
    /// Non-finite values persist once produced, so the caller checks them
    /// at stored levels only.
    fn advance(&self, prev: &[f64], next: &mut [f64], z_out: Option<&mut [f64]>, dt: f64, right: f64) {
        let n = self.n;
        next[0] = 0.0;
        next[n] = right;
        let (inv_dy, inv_dy2, k_ydy, k) = (self.inv_dy, self.inv_dy2, self.k_a * self.dy, self.k_bound);
        match (self.search, z_out) {
            (ZSearch::ClosedForm, Some(z_out)) => {
                z_out[0] = 0.0;
                z_out[n] = 0.0;
                let rows = prev.windows(3).zip(&mut next[1..n]).zip(&mut z_out[1..n]);
                for (j, ((w, out), zo)) in rows.enumerate() {
                    let (d1, d2) = ((w[2] - w[1]) * inv_dy, (w[2] - 2.0 * w[1] + w[0]) * inv_dy2);
                    let a = d1 + d2;
                    let z = if a < 0.0 { (-1.0 / a).min(k) } else { k };
                    *out = w[1] + dt * (k_ydy * (j + 1) as f64 * d1 + z + 0.5 * a * z * z);
                    *zo = z;
                }
            }
            (ZSearch::ClosedForm, None) => {
                let rows = prev.windows(3).zip(&mut next[1..n]);
                for (j, (w, out)) in rows.enumerate() {
                    let (d1, d2) = ((w[2] - w[1]) * inv_dy, (w[2] - 2.0 * w[1] + w[0]) * inv_dy2);
                    let a = d1 + d2;
                    let z = if a < 0.0 { (-1.0 / a).min(k) } else { k };
                    *out = w[1] + dt * (k_ydy * (j + 1) as f64 * d1 + z + 0.5 * a * z * z);
                }
            }
            (ZSearch::Grid(_), mut z_out) => {
                for j in 1..n {
                    let (d1, d2) = self.derivatives(prev, j);
                    let a = d1 + d2;
                    let z = self.sup(a).0;
                    next[j] = prev[j] + dt * (self.k_a * self.dy * j as f64 * d1 + z + 0.5 * a * z * z);
                    if let Some(zo) = z_out.as_deref_mut() {
                        zo[j] = z;
                    }
                }
                if let Some(zo) = z_out {
                    zo[0] = 0.0;
                    zo[n] = 0.0;
                }
            }
        }
    }
}

pub fn solve_period(
    terminal: &GridFunction,
    t_start: f64,
    t_end: f64,
    model: &ValidatedModel,
    grid: &GridSpec,
) -> Result<PeriodSolution> {
    solve_period_with(terminal, t_start, t_end, model, grid, ZSearch::ClosedForm)
}

/// Marches the scheme from `t_end` down to `t_start`. Steps have the CFL
/// length except the last, which is shortened to land on `t_start`.
pub fn solve_period_with(
    terminal: &GridFunction,
    t_start: f64,
    t_end: f64,
    model: &ValidatedModel,
    grid: &GridSpec,
    search: ZSearch,
) -> Result<PeriodSolution> {
    grid.check()?;
    if !(t_start <= t_end) {
        return Err(Error::InvalidArgument(format!(
            "period start {t_start} after end {t_end}"
        )));
    }
    if terminal.len() != grid.n_y + 1 {
        return Err(Error::InvalidArgument(format!(
            "terminal slice has {} nodes, grid has {}",
            terminal.len(),
            grid.n_y + 1
        )));
    }
    if let Some(j) = terminal.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            t: t_end,
            y: grid.node(j),
        });
    }
    if terminal.values[0] != 0.0 {
        return Err(Error::InvalidArgument(
            "terminal slice must vanish at y = 0".into(),
        ));
    }
    if let ZSearch::Grid(m) = search {
        if m < 2 {
            return Err(Error::InvalidArgument(format!("z grid needs M >= 2, got {m}")));
        }
    }

    let len = t_end - t_start;
    let limit = cfl_dt(grid, model);
    let dt = limit.min(len);
    let mut steps = Vec::new();
    if len > 0.0 {
        let full = (len / dt).floor() as usize;
        let rest = len - full as f64 * dt;
        steps = vec![dt; full];
        if rest > 1e-12 * len {
            steps.push(rest);
        }
    }
    if steps.iter().any(|&h| h > limit * (1.0 + 1e-12)) {
        return Err(Error::CflViolation { dt, limit });
    }
    let n_steps = steps.len();
    let stride = n_steps.div_ceil(grid.store_levels - 1).max(1);
    let stepper = Stepper::new(grid, model, search);
    let n = grid.n_y;

    let mut times = vec![t_end];
    let mut surface = vec![terminal.values.clone()];
    let mut z0 = vec![0.0; n + 1];
    stepper.controls(&terminal.values, &mut z0);
    let mut feedback = vec![z0];
    let mut checks = Vec::new();

    let mut prev = terminal.values.clone();
    let mut next = vec![0.0; n + 1];
    let mut z = vec![0.0; n + 1];
    let mut t = t_end;
    let mut prev_stored = true;
    for (k, &h) in steps.iter().enumerate() {
        let level = k + 1;
        t = if level == n_steps { t_start } else { t_end - level as f64 * dt };
        let right = model.zero_control_value(t, grid.y_max);
        let store = level % stride == 0 || level == n_steps;
        stepper.advance(&prev, &mut next, store.then_some(&mut z[..]), h, right);
        if store {
            if let Some(j) = next.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { t, y: grid.node(j) });
            }
            checks.push(StepCheck {
                level: surface.len(),
                dt: h,
                upper: if prev_stored { None } else { Some(prev.clone()) },
            });
            times.push(t);
            surface.push(next.clone());
            feedback.push(z.clone());
        }
        prev_stored = store;
        std::mem::swap(&mut prev, &mut next);
    }
    debug_assert!(n_steps == 0 || t == t_start);

    // Stored levels were built descending in time.
    let last = surface.len() - 1;
    times.reverse();
    surface.reverse();
    feedback.reverse();
    for c in &mut checks {
        c.level = last - c.level;
    }
    checks.reverse();

    Ok(PeriodSolution {
        period: 0,
        t_start,
        t_end,
        times,
        surface,
        feedback,
        checks,
        dy: grid.dy(),
        dt,
        n_steps,
    })
}

/// Replays every recorded step with the stored feedback and returns the
/// largest absolute mismatch against the stored surface, boundary nodes
/// included.
pub fn discrete_residual(
    solution: &PeriodSolution,
    model: &ValidatedModel,
    grid: &GridSpec,
) -> f64 {
    let stepper = Stepper::new(grid, model, ZSearch::ClosedForm);
    let n = grid.n_y;
    let mut worst: f64 = 0.0;
    for c in &solution.checks {
        let upper = c
            .upper
            .as_deref()
            .unwrap_or(&solution.surface[c.level + 1]);
        let row = &solution.surface[c.level];
        let z = &solution.feedback[c.level];
        worst = worst.max(row[0].abs());
        let right = model.zero_control_value(solution.times[c.level], grid.y_max);
        worst = worst.max((row[n] - right).abs());
        for j in 1..n {
            let replay = stepper.apply(upper, j, z[j], c.dt);
            worst = worst.max((row[j] - replay).abs());
        }
    }
    worst
}

impl PeriodSolution {
    pub fn n_nodes(&self) -> usize {
        self.surface[0].len()
    }

    pub fn y_max(&self) -> f64 {
        self.dy * (self.n_nodes() - 1) as f64
    }

    /// `v(t_start, .)`.
    pub fn initial_slice(&self) -> GridFunction {
        GridFunction::new(self.surface[0].clone(), self.dy)
    }

    /// `v(t_end^-, .)`, the terminal slice the period was solved from.
    pub fn terminal_slice(&self) -> GridFunction {
        GridFunction::new(self.surface.last().unwrap().clone(), self.dy)
    }

    fn time_bracket(&self, t: f64) -> (usize, f64) {
        let last = self.times.len() - 1;
        if last == 0 || t <= self.times[0] {
            return (0, 0.0);
        }
        if t >= self.times[last] {
            return (last - 1, 1.0);
        }
        let k = self.times.partition_point(|&s| s <= t) - 1;
        let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        (k, w)
    }

    fn bilinear(&self, rows: &[Vec<f64>], t: f64, y: f64) -> f64 {
        let (k, w) = self.time_bracket(t);
        let lo = interp_row(&rows[k], self.dy, y);
        if w == 0.0 {
            return lo;
        }
        let hi = interp_row(&rows[k + 1], self.dy, y);
        lo + w * (hi - lo)
    }

    /// Bilinear interpolation of the value surface; exact at nodes.
    pub fn eval(&self, t: f64, y: f64) -> Result<f64> {
        let tol = 1e-12 * (1.0 + self.t_end.abs());
        if !(t >= self.t_start - tol && t <= self.t_end + tol) {
            return Err(Error::OutOfRange(format!(
                "t={t} outside [{}, {}]",
                self.t_start, self.t_end
            )));
        }
        if !(y >= 0.0 && y <= self.y_max() * (1.0 + 1e-12)) {
            return Err(Error::OutOfRange(format!("y={y} outside [0, {}]", self.y_max())));
        }
        Ok(self.bilinear(&self.surface, t, y))
    }

    /// Feedback control by bilinear interpolation, arguments clamped.
    pub fn control(&self, t: f64, y: f64) -> f64 {
        self.bilinear(&self.feedback, t, y)
    }
}

/// Convenience: `eval` as a free function.
pub fn eval(solution: &PeriodSolution, t: f64, y: f64) -> Result<f64> {
    solution.eval(t, y)
}
