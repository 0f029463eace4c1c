//! Economic primitives of the benchmark model: the agent's utility pair,
//! the payment schedule, and the numerical grid the solvers share.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw model parameters as read from a JSON config.
///
/// Keys are fixed: `gamma`, `k_a`, `K`, `R_a`, `x0`, `schedule`. Unknown keys
/// are rejected. Everything except `schedule` has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Risk-aversion exponent; utility is `xi^(1/gamma)`.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Agent discount rate.
    #[serde(default)]
    pub k_a: f64,
    /// Bound on the sensitivity control, `|z| <= K`.
    #[serde(rename = "K", default = "default_k")]
    pub k_bound: f64,
    /// Agent reservation utility.
    #[serde(rename = "R_a", default)]
    pub r_a: f64,
    /// Initial output level.
    #[serde(default)]
    pub x0: f64,
    /// Payment times `0 = T_0 < T_1 < ... < T_N = T`.
    pub schedule: Vec<f64>,
}

fn default_gamma() -> f64 {
    2.0
}

fn default_k() -> f64 {
    10.0
}

impl ModelParams {
    pub fn new(schedule: Vec<f64>) -> Self {
        Self {
            gamma: default_gamma(),
            k_a: 0.0,
            k_bound: default_k(),
            r_a: 0.0,
            x0: 0.0,
            schedule,
        }
    }

    /// `N` payments at `T_i = i * T / N`.
    pub fn uniform(horizon: f64, n_payments: usize) -> Self {
        let schedule = (0..=n_payments)
            .map(|i| horizon * i as f64 / n_payments as f64)
            .collect();
        Self::new(schedule)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_k_a(mut self, k_a: f64) -> Self {
        self.k_a = k_a;
        self
    }

    pub fn with_k_bound(mut self, k_bound: f64) -> Self {
        self.k_bound = k_bound;
        self
    }

    pub fn with_r_a(mut self, r_a: f64) -> Self {
        self.r_a = r_a;
        self
    }

    pub fn with_x0(mut self, x0: f64) -> Self {
        self.x0 = x0;
        self
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn validate(self) -> Result<ValidatedModel> {
        validate(self)
    }
}

/// A model whose invariants have been checked. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ValidatedModel {
    params: ModelParams,
}

/// Checks every model invariant, reporting the first violation by name.
pub fn validate(params: ModelParams) -> Result<ValidatedModel> {
    let fail = |msg: &str| Err(Error::InvalidModel(msg.to_string()));
    let finite = [params.gamma, params.k_a, params.k_bound, params.r_a, params.x0]
        .iter()
        .all(|v| v.is_finite());
    if !finite {
        return fail("parameters must be finite");
    }
    if params.gamma <= 1.0 {
        return fail("gamma must exceed 1");
    }
    if params.k_a < 0.0 {
        return fail("k_a must be nonnegative");
    }
    if params.k_bound <= 0.0 {
        return fail("K must be positive");
    }
    if params.r_a < 0.0 {
        return fail("R_a must be nonnegative");
    }
    let s = &params.schedule;
    if s.len() < 2 {
        return fail("schedule needs at least two entries");
    }
    if s.iter().any(|t| !t.is_finite()) {
        return fail("schedule entries must be finite");
    }
    if s[0] != 0.0 {
        return fail("schedule must start at 0");
    }
    if s.windows(2).any(|w| w[1] <= w[0]) {
        return fail("schedule strictly increasing");
    }
    Ok(ValidatedModel { params })
}

impl ValidatedModel {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn gamma(&self) -> f64 {
        self.params.gamma
    }

    pub fn k_a(&self) -> f64 {
        self.params.k_a
    }

    pub fn k_bound(&self) -> f64 {
        self.params.k_bound
    }

    pub fn r_a(&self) -> f64 {
        self.params.r_a
    }

    pub fn x0(&self) -> f64 {
        self.params.x0
    }

    pub fn schedule(&self) -> &[f64] {
        &self.params.schedule
    }

    /// Number of payments `N`.
    pub fn n_payments(&self) -> usize {
        self.params.schedule.len() - 1
    }

    /// Contract horizon `T = T_N`.
    pub fn horizon(&self) -> f64 {
        *self.params.schedule.last().expect("validated schedule")
    }

    /// Value of paying nothing and exerting no sensitivity from `(t, y)`:
    /// `-exp(gamma k_a (T - t)) y^gamma`.
    pub fn zero_control_value(&self, t: f64, y: f64) -> f64 {
        -(self.gamma() * self.k_a() * (self.horizon() - t)).exp() * y.powf(self.gamma())
    }
}

/// Agent utility `U_a(xi) = xi^(1/gamma)` for nonnegative payments.
pub fn utility(xi: f64, gamma: f64) -> Result<f64> {
    if !(xi >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "payment must be nonnegative, got {xi}"
        )));
    }
    Ok(xi.powf(1.0 / gamma))
}

/// Inverse utility `eta -> eta^gamma`: the money cost of delivering `eta` utils.
pub fn inverse_utility(eta: f64, gamma: f64) -> Result<f64> {
    if !(eta >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "utility must be nonnegative, got {eta}"
        )));
    }
    Ok(eta.powf(gamma))
}

/// Uniform grid on the agent-utility axis `[0, y_max]` plus scheme knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub y_max: f64,
    /// Number of cells; the grid has `n_y + 1` nodes.
    pub n_y: usize,
    /// CFL safety factor in `(0, 1]`.
    pub safety: f64,
    /// Upper bound on the number of time levels kept per period.
    #[serde(default = "default_store_levels")]
    pub store_levels: usize,
}

fn default_store_levels() -> usize {
    400
}

impl GridSpec {
    pub const DEFAULT_N_Y: usize = 400;
    pub const DEFAULT_SAFETY: f64 = 0.95;

    pub fn new(y_max: f64, n_y: usize) -> Self {
        Self {
            y_max,
            n_y,
            safety: Self::DEFAULT_SAFETY,
            store_levels: default_store_levels(),
        }
    }

    /// Default grid: `y_max = 4 * max(2 R_a, 2)`, 400 cells.
    pub fn default_for(model: &ValidatedModel) -> Self {
        Self::for_interest(Self::default_interest(model.r_a()))
    }

    /// Largest `y` of interest for a given reservation utility.
    pub fn default_interest(r_a: f64) -> f64 {
        (2.0 * r_a).max(2.0)
    }

    /// Grid whose truncation is four times the largest `y` of interest.
    pub fn for_interest(y_interest: f64) -> Self {
        Self::new(4.0 * y_interest, Self::DEFAULT_N_Y)
    }

    pub fn with_safety(mut self, safety: f64) -> Self {
        self.safety = safety;
        self
    }

    pub fn with_store_levels(mut self, levels: usize) -> Self {
        self.store_levels = levels;
        self
    }

    pub fn dy(&self) -> f64 {
        self.y_max / self.n_y as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.dy()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_y).map(|j| self.node(j)).collect()
    }

    /// Same truncation, `factor` times as many cells.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            n_y: self.n_y * factor,
            ..self.clone()
        }
    }

    pub fn check(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidModel(msg.to_string()));
        if !(self.y_max > 0.0) || !self.y_max.is_finite() {
            return fail("y_max must be positive");
        }
        if self.n_y < 16 {
            return fail("n_y must be at least 16");
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return fail("safety must lie in (0, 1]");
        }
        if self.store_levels < 2 {
            return fail("store_levels must be at least 2");
        }
        Ok(())
    }
}
