//! One function per subcommand. Each computes everything first and then
//! writes its artifacts, so a failed run leaves nothing behind.

use contract_core::bounds::{search_delta0, check_sandwich, Delta, SandwichReport, SearchBox, SupersolutionCheck, WeightExponent};
use contract_core::export::{emit_grid_csv, emit_json, emit_paths_csv, emit_payment_csv, emit_table};
use contract_core::hjb::discrete_residual;
use contract_core::model::{GridSpec, ModelParams, ValidatedModel};
use contract_core::oracle::dp_oracle;
use contract_core::pipeline::{
    compare_settings, comparison_tolerance, employment_interval, principal_value, solve_initial,
    truncation_region, ContractSolution, NegotiationReport, SettingComparison, Winner,
};
use contract_core::simulate::{agent_deviation, simulate_principal, Deviation, DeviationReport, SimConfig, SimReport};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Config, RunSettings};
use crate::{Artifacts, CliError, Command};

type Res<T> = Result<T, CliError>;

pub fn dispatch(command: Command, cfg: &Config, out: &mut Artifacts) -> Res<()> {
    match command {
        Command::Solve => solve(cfg, out),
        Command::Simulate => simulate(cfg, out),
        Command::VerifyBounds => verify_bounds(cfg, out),
        Command::SweepFrequency => sweep_frequency(cfg, out),
        Command::SweepDistribution => sweep_distribution(cfg, out),
        Command::SweepDiscount => sweep_discount(cfg, out),
        Command::CompareNegotiation => compare_negotiation(cfg, out),
        Command::OracleCheck => oracle_check(cfg, out),
    }
}

fn validated(params: &ModelParams) -> Res<ValidatedModel> {
    Ok(params.clone().validate()?)
}

#[derive(Serialize)]
struct PeriodInfo {
    period: usize,
    t_start: f64,
    t_end: f64,
    n_steps: usize,
    dt: f64,
    discrete_residual: f64,
}

#[derive(Serialize)]
struct NodeSet {
    index: usize,
    count: usize,
    nodes: Vec<f64>,
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    command: &'static str,
    model: &'a ModelParams,
    grid: &'a GridSpec,
    principal: NegotiationReport,
    periods: Vec<PeriodInfo>,
    employment: Vec<NodeSet>,
    truncation: Vec<NodeSet>,
}

fn node_sets(solution: &ContractSolution) -> Res<(Vec<NodeSet>, Vec<NodeSet>)> {
    let mut emp = Vec::new();
    let mut tr = Vec::new();
    for i in 1..solution.model.n_payments() {
        let e = employment_interval(solution, i)?;
        emp.push(NodeSet { index: i, count: e.count(), nodes: e.nodes() });
        let t = truncation_region(solution, i)?;
        tr.push(NodeSet { index: i, count: t.count(), nodes: t.nodes() });
    }
    Ok((emp, tr))
}

fn solve(cfg: &Config, out: &mut Artifacts) -> Res<()> {
    let model = validated(&cfg.model)?;
    let grid = cfg.run.model_grid(&model);
    let solution = solve_initial(&model, &grid)?;
    let principal = principal_value(&solution, model.r_a())?;
    let periods = solution
        .periods
        .iter()
        .map(|p| PeriodInfo {
            period: p.period,
            t_start: p.t_start,
            t_end: p.t_end,
            n_steps: p.n_steps,
            dt: p.dt,
            discrete_residual: discrete_residual(p, &model, &grid),
        })
        .collect();
    let (employment, truncation) = node_sets(&solution)?;
    let summary = SolveSummary {
        command: "solve",
        model: &cfg.model,
        grid: &grid,
        principal,
        periods,
        employment,
        truncation,
    };
    for p in &solution.periods {
        emit_grid_csv(p, &out.path(&format!("period_{}.csv", p.period)))?;
    }
    for l in &solution.payments {
        emit_payment_csv(l, &out.path(&format!("payment_{}.csv", l.period)))?;
    }
    emit_json(&summary, &out.path("summary.json"))?;
    Ok(())
}

#[derive(Serialize)]
struct DeviationEntry {
    epsilon: f64,
    report: DeviationReport,
}

#[derive(Serialize)]
struct SimulateSummary<'a> {
    command: &'static str,
    model: &'a ModelParams,
    grid: &'a GridSpec,
    config: SimConfig,
    report: SimReport,
    deviations: Vec<DeviationEntry>,
}

fn simulate(cfg: &Config, out: &mut Artifacts) -> Res<()> {
    let model = validated(&cfg.model)?;
    let grid = cfg.run.model_grid(&model);
    let solution = solve_initial(&model, &grid)?;
    let y0 = match cfg.run.y0 {
        Some(y) => y,
        None => principal_value(&solution, model.r_a())?.y0_star,
    };
    let mut sim = SimConfig::new(cfg.run.paths, cfg.run.steps, cfg.run.seed, y0);
    sim.record_paths = cfg.run.record_paths;
    let report = simulate_principal(&solution, &sim)?;
    let deviations = cfg
        .run
        .deviations
        .iter()
        .map(|&e| {
            Ok(DeviationEntry {
                epsilon: e,
                report: agent_deviation(&solution, &sim, &Deviation::Constant(e))?,
            })
        })
        .collect::<Res<Vec<_>>>()?;
    if sim.record_paths {
        emit_paths_csv(&report.paths, &out.path("paths.csv"))?;
    }
    let summary = SimulateSummary {
        command: "simulate",
        model: &cfg.model,
        grid: &grid,
        config: sim,
        report,
        deviations,
    };
    emit_json(&summary, &out.path("summary.json"))?;
    Ok(())
}

#[derive(Serialize)]
struct BoundsSummary<'a> {
    command: &'static str,
    model: &'a ModelParams,
    grid: &'a GridSpec,
    delta: Delta,
    supersolution: SupersolutionCheck,
    tolerance: f64,
    sandwich: SandwichReport,
}

fn verify_bounds(cfg: &Config, out: &mut Artifacts) -> Res<()> {
    let model = validated(&cfg.model)?;
    let grid = cfg.run.model_grid(&model);
    let exponent = WeightExponent::GammaMinusOne;
    let (delta, supersolution) = search_delta0(&model, &grid, exponent, &SearchBox::default())?;
    let solution = solve_initial(&model, &grid)?;
    let tolerance = cfg.run.sandwich_tolerance;
    let sandwich = check_sandwich(&solution, &delta, exponent, tolerance)?;
    let summary = BoundsSummary {
        command: "verify-bounds",
        model: &cfg.model,
        grid: &grid,
        delta,
        supersolution,
        tolerance,
        sandwich,
    };
    emit_json(&summary, &out.path("summary.json"))?;
    Ok(())
}

#[derive(Serialize)]
struct SweepPoint {
    parameter: f64,
    reports: Vec<NegotiationReport>,
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    command: &'static str,
    parameter: &'static str,
    base_model: &'a ModelParams,
    grid: &'a GridSpec,
    r_a_grid: &'a [f64],
    points: Vec<SweepPoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline: Option<SweepPoint>,
}

/// Principal value at every reservation level of the sweep grid.
fn values_at(solution: &ContractSolution, r_a_grid: &[f64]) -> Res<Vec<NegotiationReport>> {
    Ok(r_a_grid
        .iter()
        .map(|&r| principal_value(solution, r))
        .collect::<Result<_, _>>()?)
}

/// Grid shared by every point of a sweep.
fn sweep_grid(run: &RunSettings, base: &ModelParams) -> GridSpec {
    let r_max = run.r_a_grid.iter().copied().fold(base.r_a, f64::max);
    run.grid(GridSpec::default_interest(r_max))
}

fn sweep_header(parameter: &str, r_a_grid: &[f64]) -> Vec<String> {
    std::iter::once(parameter.to_string())
        .chain(r_a_grid.iter().map(|r| format!("V_p[R_a={r}]")))
        .collect()
}

fn sweep_row(p: &SweepPoint) -> Vec<f64> {
    std::iter::once(p.parameter)
        .chain(p.reports.iter().map(|r| r.v_p))
        .collect()
}

/// Solves each parameter point in parallel; results keep input order.
fn sweep_points(
    values: &[f64],
    grid: &GridSpec,
    r_a_grid: &[f64],
    make: impl Fn(f64) -> Res<ModelParams> + Sync,
) -> Res<Vec<(SweepPoint, ContractSolution)>> {
    values
        .par_iter()
        .map(|&x| {
            let model = validated(&make(x)?)?;
            let solution = solve_initial(&model, grid)?;
            let reports = values_at(&solution, r_a_grid)?;
            Ok((SweepPoint { parameter: x, reports }, solution))
        })
        .collect()
}

fn write_sweep(summary: &SweepSummary, name: &str, out: &mut Artifacts) -> Res<()> {
    let header = sweep_header(summary.parameter, summary.r_a_grid);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<f64>> = summary
        .baseline
        .iter()
        .chain(&summary.points)
        .map(sweep_row)
        .collect();
    emit_table(&header, &rows, &out.path(name))?;
    emit_json(summary, &out.path("summary.json"))?;
    Ok(())
}

fn sweep_frequency(cfg: &Config, out: &mut Artifacts) -> Res<()> {
    let horizon = cfg.run.horizon.unwrap_or(10.0);
    let values = cfg.run.values.clone().unwrap_or_else(|| vec![1.0, 5.0, 10.0]);
    let grid = sweep_grid(&cfg.run, &cfg.model);
    let points = sweep_points(&values, &grid, &cfg.run.r_a_grid, |n| {
        if !(n >= 1.0 && n.fract() == 0.0) {
            return Err(CliError::user("invalid_argument", format!("payment count {n} is not a positive integer")));
        }
        Ok(ModelParams {
            schedule: ModelParams::uniform(horizon, n as usize).schedule,
            ..cfg.model.clone()
        })
    })?;
    let summary = SweepSummary {
        command: "sweep-frequency",
        parameter: "N",
        base_model: &cfg.model,
        grid: &grid,
        r_a_grid: &cfg.run.r_a_grid,
        points: points.into_iter().map(|(p, _)| p).collect(),
        baseline: None,
    };
    write_sweep(&summary, "sweep.csv", out)
}

/// The single-payment baseline is the first row, with `T_1 = T`.
fn sweep_distribution(cfg: &Config, out: &mut Artifacts) -> Res<()> {
    let horizon = cfg.run.horizon.unwrap_or(4.0);
    let values = cfg
        .run
        .values
        .clone()
        .unwrap_or_else(|| (0..6).map(|i| 1.0 + i as f64 / 2.0).collect());
    let grid = sweep_grid(&cfg.run, &cfg.model);
    let baseline = sweep_points(&[horizon], &grid, &cfg.run.r_a_grid, |_| {
        Ok(ModelParams {
            schedule: vec![0.0, horizon],
            ..cfg.model.clone()
        })
    })?;
    let points = sweep_points(&values, &grid, &cfg.run.r_a_grid, |t1| {
        Ok(ModelParams {
            schedule: vec![0.0, t1, horizon],
            ..cfg.model.clone()
        })
    })?;
    let summary = SweepSummary {
        command: "sweep-distribution",
        parameter: "T_1",
        base_model: &cfg.model,
        grid: &grid,
        r_a_grid: &cfg.run.r_a_grid,
        points: points.into_iter().map(|(p, _)| p).collect(),
        baseline: baseline.into_iter().map(|(p, _)| p).next(),
    };
    write_sweep(&summary, "sweep.csv", out)
}

#[derive(Serialize)]
struct DiscountSets {
    k_a: f64,
    employment: Vec<NodeSet>,
    truncation: Vec<NodeSet>,
}

#[derive(Serialize)]
struct DiscountSummary<'a> {
    #[serde(flatten)]
    sweep: SweepSummary<'a>,
    sets: Vec<DiscountSets>,
}

fn sweep_discount(cfg: &Config, out: &mut Artifacts) -> Res<()> {
    let values = cfg.run.values.clone().unwrap_or_else(|| vec![0.0, 0.05, 0.2]);
    let grid = sweep_grid(&cfg.run, &cfg.model);
    let solved = sweep_points(&values, &grid, &cfg.run.r_a_grid, |k_a| {
        Ok(ModelParams {
            k_a,
            ..cfg.model.clone()
        })
    })?;
    let mut sets = Vec::new();
    let mut slices = Vec::new();
    for (p, s) in &solved {
        let (employment, truncation) = node_sets(s)?;
        sets.push(DiscountSets { k_a: p.parameter, employment, truncation });
        slices.push(s.initial_slice());
    }
    let mut header = vec!["y".to_string()];
    header.extend(values.iter().map(|k| format!("v[k_a={k}]")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<f64>> = (0..=grid.n_y)
        .map(|j| std::iter::once(grid.node(j)).chain(slices.iter().map(|s| s.values[j])).collect())
        .collect();
    emit_table(&header, &rows, &out.path("slices.csv"))?;
    let summary = DiscountSummary {
        sweep: SweepSummary {
            command: "sweep-discount",
            parameter: "k_a",
            base_model: &cfg.model,
            grid: &grid,
            r_a_grid: &cfg.run.r_a_grid,
            points: solved.into_iter().map(|(p, _)| p).collect(),
            baseline: None,
        },
        sets,
    };
    let header = sweep_header("k_a", &cfg.run.r_a_grid);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<f64>> = summary.sweep.points.iter().map(sweep_row).collect();
    emit_table(&header, &rows, &out.path("sweep.csv"))?;
    emit_json(&summary, &out.path("summary.json"))?;
    Ok(())
}

#[derive(Serialize)]
struct NegotiationSummary<'a> {
    command: &'static str,
    model: &'a ModelParams,
    grid: &'a GridSpec,
    comparison: SettingComparison,
    /// Present when the first comparison was a tie within tolerance.
    #[serde(skip_serializing_if = "Option::is_none")]
    refined: Option<SettingComparison>,
    winner: Winner,
}

/// Compares at the configured grid; a tie is re-assessed with twice as many
/// cells.
pub fn negotiation_verdict(
    model: &ValidatedModel,
    grid: &GridSpec,
    tolerance: Option<f64>,
) -> contract_core::Result<(SettingComparison, Option<SettingComparison>)> {
    let tol = match tolerance {
        Some(t) => t,
        None => comparison_tolerance(model, grid)?,
    };
    let first = compare_settings(model, grid, tol)?;
    if first.winner != Winner::Indistinguishable {
        return Ok((first, None));
    }
    let fine = grid.refined(2);
    let tol = match tolerance {
        Some(t) => t,
        None => comparison_tolerance(model, &fine)?,
    };
    let second = compare_settings(model, &fine, tol)?;
    Ok((first, Some(second)))
}

fn compare_negotiation(cfg: &Config, out: &mut Artifacts) -> Res<()> {
    let model = validated(&cfg.model)?;
    let grid = cfg.run.model_grid(&model);
    let (comparison, refined) = negotiation_verdict(&model, &grid, cfg.run.tolerance)?;
    let winner = refined.as_ref().unwrap_or(&comparison).winner;
    let summary = NegotiationSummary {
        command: "compare-negotiation",
        model: &cfg.model,
        grid: &grid,
        comparison,
        refined,
        winner,
    };
    emit_json(&summary, &out.path("summary.json"))?;
    Ok(())
}

#[derive(Serialize)]
struct OracleSummary<'a> {
    command: &'static str,
    model: &'a ModelParams,
    grid: &'a GridSpec,
    n_t: usize,
    n_z: usize,
    sup_difference: f64,
}

/// Oracle-sized default: 40 cells unless `n_y` is set.
fn oracle_check(cfg: &Config, out: &mut Artifacts) -> Res<()> {
    let model = validated(&cfg.model)?;
    let mut grid = cfg.run.model_grid(&model);
    if cfg.run.n_y.is_none() {
        grid.n_y = 40;
    }
    let solution = solve_initial(&model, &grid)?;
    let n_t = match cfg.run.n_t {
        Some(n) => n,
        None => solution.periods.iter().map(|p| p.n_steps).sum(),
    };
    let table = dp_oracle(&model, grid.y_max, n_t, grid.n_y, cfg.run.n_z)?;
    let pde = solution.initial_slice();
    let rows: Vec<Vec<f64>> = pde
        .values
        .iter()
        .zip(&table.values)
        .enumerate()
        .map(|(j, (&a, &b))| vec![grid.node(j), a, b, (a - b).abs()])
        .collect();
    let sup_difference = rows.iter().map(|r| r[3]).fold(0.0, f64::max);
    emit_table(&["y", "v_pde", "v_oracle", "abs_diff"], &rows, &out.path("oracle.csv"))?;
    let summary = OracleSummary {
        command: "oracle-check",
        model: &cfg.model,
        grid: &grid,
        n_t,
        n_z: cfg.run.n_z,
        sup_difference,
    };
    emit_json(&summary, &out.path("summary.json"))?;
    Ok(())
}
