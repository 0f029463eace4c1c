//! Monte Carlo forward simulation of the contracted state under the
//! solved feedback, and deviation tests of the agent's best response.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::ContractSolution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_paths: usize,
    pub n_steps_per_period: usize,
    pub seed: u64,
    pub y0: f64,
    /// Replace the feedback by `z = 0`.
    #[serde(default)]
    pub zero_control: bool,
    /// Suppress intermediate payments.
    #[serde(default)]
    pub skip_payments: bool,
    /// Keep per-path records in the report.
    #[serde(default)]
    pub record_paths: bool,
}

impl SimConfig {
    pub fn new(n_paths: usize, n_steps_per_period: usize, seed: u64, y0: f64) -> Self {
        Self {
            n_paths,
            n_steps_per_period,
            seed,
            y0,
            zero_control: false,
            skip_payments: false,
            record_paths: false,
        }
    }

    fn check(&self, solution: &ContractSolution) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::InvalidArgument("n_paths must be at least 1".into()));
        }
        if self.n_steps_per_period == 0 {
            return Err(Error::InvalidArgument(
                "n_steps_per_period must be at least 1".into(),
            ));
        }
        let y_max = solution.grid.y_max;
        if !(self.y0 >= 0.0 && self.y0 <= y_max) {
            return Err(Error::OutOfRange(format!("y0={} outside [0, {y_max}]", self.y0)));
        }
        if solution.periods.is_empty() {
            return Err(Error::InvalidArgument("solution has no periods".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathRecord {
    pub path: usize,
    pub payoff: f64,
    pub y_terminal: f64,
    pub eta_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub estimate: f64,
    pub std_error: f64,
    /// `x0 + v(0, y0)`.
    pub pde_value: f64,
    /// `None` when the standard error vanishes.
    pub z_score: Option<f64>,
    pub n_paths: usize,
    pub seed: u64,
    /// Fraction of paths that hit `Y = 0` from above.
    pub clamp_fraction: f64,
    #[serde(skip)]
    pub paths: Vec<PathRecord>,
}

/// Effort perturbation `alpha = z* + eps(t, y)`, `|eps| <= 1`.
#[derive(Clone)]
pub enum Deviation {
    Constant(f64),
    Feedback(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Deviation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Deviation::Constant(e) => write!(f, "Constant({e})"),
            Deviation::Feedback(_) => write!(f, "Feedback(..)"),
        }
    }
}

impl Deviation {
    fn eval(&self, t: f64, y: f64) -> Result<f64> {
        let e = match self {
            Deviation::Constant(e) => *e,
            Deviation::Feedback(f) => f(t, y),
        };
        if !(e.abs() <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "deviation {e} at (t={t}, y={y}) exceeds 1 in magnitude"
            )));
        }
        Ok(e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationReport {
    pub j_star: f64,
    pub se_star: f64,
    pub j_dev: f64,
    pub se_dev: f64,
    /// `sqrt(se_star^2 + se_dev^2)`.
    pub combined_se: f64,
    /// Mean of the paired difference `J_dev - J_star`.
    pub paired_difference: f64,
    pub paired_se: f64,
    pub n_paths: usize,
    pub seed: u64,
}

/// Fixed-order pairwise summation, independent of thread scheduling.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 8 {
        return x.iter().sum();
    }
    let (a, b) = x.split_at(x.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(x: &[f64]) -> (f64, f64) {
    match x.first() {
        None => return (f64::NAN, 0.0),
        Some(&v0) if x.iter().all(|&v| v == v0) => return (v0, 0.0),
        _ => {}
    }
    let n = x.len() as f64;
    let mean = pairwise_sum(x) / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = x.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

struct PathOutcome {
    principal: f64,
    agent: f64,
    y_terminal: f64,
    eta_sum: f64,
    clamped: bool,
}

/// One path of `dY = (k_a Y + z^2/2 + z eps) dt + z dW`, discretized by
/// exponential Euler in the linear drift so zero-control flows are exact.
fn run_path(
    solution: &ContractSolution,
    cfg: &SimConfig,
    deviation: Option<&Deviation>,
    path: usize,
) -> Result<PathOutcome> {
    let model = &solution.model;
    let schedule = model.schedule();
    let (gamma, k_a) = (model.gamma(), model.k_a());
    let n = model.n_payments();
    let mut rng = path_rng(cfg.seed, path);

    let mut y = cfg.y0;
    let mut clamped = false;
    let mut output = 0.0;
    let mut cost = 0.0;
    let mut agent = 0.0;
    let mut eta_sum = 0.0;
    for p in 0..n {
        let (t0, t1) = (schedule[p], schedule[p + 1]);
        let h = (t1 - t0) / cfg.n_steps_per_period as f64;
        let growth = (k_a * h).exp();
        let sqrt_h = h.sqrt();
        let period = &solution.periods[p];
        for k in 0..cfg.n_steps_per_period {
            let t = t0 + k as f64 * h;
            let xi: f64 = StandardNormal.sample(&mut rng);
            let z = if clamped || cfg.zero_control {
                0.0
            } else {
                period.control(t, y)
            };
            let eps = match deviation {
                Some(d) if !clamped => d.eval(t, y)?,
                _ => 0.0,
            };
            output += z * h;
            let effort = z + eps;
            agent -= 0.5 * (-k_a * t).exp() * effort * effort * h;
            y = growth * y + (0.5 * z * z + z * eps) * h + z * sqrt_h * xi;
            if y < 0.0 {
                y = 0.0;
                clamped = true;
            }
        }
        if p + 1 < n && !cfg.skip_payments {
            let eta = solution.payments[p].payment(y);
            y -= eta;
            eta_sum += eta;
            cost += eta.powf(gamma);
            agent += (-k_a * t1).exp() * eta;
        }
    }
    agent += (-k_a * model.horizon()).exp() * y;
    Ok(PathOutcome {
        principal: model.x0() + output - cost - y.powf(gamma),
        agent,
        y_terminal: y,
        eta_sum,
        clamped,
    })
}

fn run_all(
    solution: &ContractSolution,
    cfg: &SimConfig,
    deviation: Option<&Deviation>,
) -> Result<Vec<PathOutcome>> {
    (0..cfg.n_paths)
        .into_par_iter()
        .map(|path| run_path(solution, cfg, deviation, path))
        .collect()
}

/// Principal's realized objective under the optimal feedback.
pub fn simulate_principal(solution: &ContractSolution, cfg: &SimConfig) -> Result<SimReport> {
    cfg.check(solution)?;
    let outcomes = run_all(solution, cfg, None)?;
    let payoffs: Vec<f64> = outcomes.iter().map(|o| o.principal).collect();
    let (estimate, std_error) = mean_and_se(&payoffs);
    let pde_value = solution.model.x0() + solution.eval(0.0, cfg.y0)?;
    let z_score = (std_error > 0.0).then(|| (estimate - pde_value) / std_error);
    let clamps = outcomes.iter().filter(|o| o.clamped).count();
    let paths = if cfg.record_paths {
        outcomes
            .iter()
            .enumerate()
            .map(|(path, o)| PathRecord {
                path,
                payoff: o.principal,
                y_terminal: o.y_terminal,
                eta_sum: o.eta_sum,
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(SimReport {
        estimate,
        std_error,
        pde_value,
        z_score,
        n_paths: cfg.n_paths,
        seed: cfg.seed,
        clamp_fraction: clamps as f64 / cfg.n_paths as f64,
        paths,
    })
}

/// Agent's realized discounted objective with effort `z*` and with
/// `z* + eps`, payment maps held fixed, on common random numbers.
pub fn agent_deviation(
    solution: &ContractSolution,
    cfg: &SimConfig,
    deviation: &Deviation,
) -> Result<DeviationReport> {
    cfg.check(solution)?;
    if let Deviation::Constant(e) = deviation {
        if !(e.abs() <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "deviation {e} exceeds 1 in magnitude"
            )));
        }
    }
    let star: Vec<f64> = run_all(solution, cfg, None)?.iter().map(|o| o.agent).collect();
    let dev: Vec<f64> = run_all(solution, cfg, Some(deviation))?
        .iter()
        .map(|o| o.agent)
        .collect();
    let (j_star, se_star) = mean_and_se(&star);
    let (j_dev, se_dev) = mean_and_se(&dev);
    let diff: Vec<f64> = dev.iter().zip(&star).map(|(d, s)| d - s).collect();
    let (paired_difference, paired_se) = mean_and_se(&diff);
    Ok(DeviationReport {
        j_star,
        se_star,
        j_dev,
        se_dev,
        combined_se: (se_star * se_star + se_dev * se_dev).sqrt(),
        paired_difference,
        paired_se,
        n_paths: cfg.n_paths,
        seed: cfg.seed,
    })
}
