//! Replicated experiment kernels shared by the CLI and the test suites:
//! trajectory-convergence measurements across network sizes and
//! optimal-vs-open-loop cost grids.

use thiserror::Error;

use crate::fluid::{self, FluidConfig, FluidError, RelayMode};
use crate::model::{ModelError, PolicySpec, ScaledParams};
use crate::policy;
use crate::sim::{self, PreparedPolicy, SimConfig, SummaryStats};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Fluid(#[from] FluidError),
    #[error("K={k} does not give an integer network: {source}")]
    BadSize { k: u32, source: ModelError },
    #[error(transparent)]
    Sim(#[from] sim::SimError),
    #[error(transparent)]
    Policy(#[from] policy::PolicyError),
}

pub fn median(samples: &mut [f64]) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        0.5 * (samples[n / 2 - 1] + samples[n / 2])
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConvergenceRow {
    pub k: u32,
    pub reps: u32,
    pub median_sup: f64,
    pub median_tau_gap: f64,
    pub fluid_tau: f64,
    pub fluid_tau_star: f64,
}

/// Per-K deviation of replicated scaled trajectories from the fluid
/// solution: medians over replications of the sup-norm over [0, tau] and
/// of |tau^K - tau|. Each size runs the finite network's optimal
/// closed-loop policy.
pub fn convergence_table(
    scaled_base: &ScaledParams,
    k_list: &[u32],
    mode: RelayMode,
    reps: u32,
    seed: u64,
) -> Result<Vec<ConvergenceRow>, ExperimentError> {
    let sol = fluid::integrate(scaled_base, mode, &FluidConfig::default())?;
    let stride = (sol.samples.len() / 2000).max(1);
    let times: Vec<f64> = sol
        .samples
        .iter()
        .step_by(stride)
        .map(|s| s.t)
        .filter(|&t| t <= sol.tau)
        .collect();
    let fluid_states: Vec<(f64, f64)> = times.iter().map(|&t| sol.state_at(t)).collect();

    let mut rows = Vec::new();
    for &k in k_list {
        let params = ScaledParams { k, ..*scaled_base }
            .unscale()
            .map_err(|source| ExperimentError::BadSize { k, source })?;
        let policy = PreparedPolicy::new(&PolicySpec::OptimalClosedLoop, &params)?;
        let cfg = SimConfig {
            mode,
            record_events: true,
        };
        let reports = sim::monte_carlo(&params, &policy, &cfg, reps, seed);
        let mut sups = Vec::with_capacity(reports.len());
        let mut tau_gaps = Vec::with_capacity(reports.len());
        for rep in &reports {
            let traj = sim::scaled_trajectory(rep, &params, &times);
            let sup = traj
                .iter()
                .zip(&fluid_states)
                .map(|((xs, ys), (xf, yf))| (xs - xf).abs().max((ys - yf).abs()))
                .fold(0.0f64, f64::max);
            sups.push(sup);
            tau_gaps.push((rep.delivery_time - sol.tau).abs());
        }
        rows.push(ConvergenceRow {
            k,
            reps,
            median_sup: median(&mut sups),
            median_tau_gap: median(&mut tau_gaps),
            fluid_tau: sol.tau,
            fluid_tau_star: sol.tau_star,
        });
    }
    Ok(rows)
}

/// One (lambda, K) cell of the optimal-vs-open-loop comparison. Costs use
/// the relay-copy convention `T_d + gamma (N0 + relay copies)`, the one
/// the fluid total `tau + Gamma y(tau_star)` predicts; `exact_mdp_cost`
/// is the evaluator total under the stage-cost convention.
#[derive(Debug, Clone, Copy)]
pub struct CostCell {
    pub lambda: f64,
    pub k: u32,
    pub exact_mdp_cost: f64,
    pub optimal_cost: SummaryStats,
    pub optimal_delay: SummaryStats,
    pub optimal_copies: SummaryStats,
    pub open_loop_cost: SummaryStats,
    pub open_loop_delay: SummaryStats,
    pub open_loop_copies: SummaryStats,
    pub tau_star: f64,
    pub fluid_cost: f64,
}

/// Evaluates one grid cell: the scaled base keeps (X, Y0, alpha) and its
/// per-node copy cost Gamma / K fixed while `lambda` (per pair, unscaled)
/// and `k` vary.
pub fn cost_cell(
    base: &ScaledParams,
    lambda: f64,
    k: u32,
    mode: RelayMode,
    reps: u32,
    seed: u64,
) -> Result<CostCell, ExperimentError> {
    let scaled = ScaledParams {
        k,
        lambda: lambda * k as f64,
        gamma: base.gamma / base.k as f64 * k as f64,
        ..*base
    };
    let params = scaled
        .unscale()
        .map_err(|source| ExperimentError::BadSize { k, source })?;
    let fluid_sol = fluid::integrate(&scaled, mode, &FluidConfig::default())?;
    let cfg = SimConfig {
        mode,
        record_events: false,
    };

    let stats_for = |spec: &PolicySpec,
                     seed: u64|
     -> Result<(SummaryStats, SummaryStats, SummaryStats), ExperimentError> {
        let policy = PreparedPolicy::new(spec, &params)?;
        let reports = sim::monte_carlo(&params, &policy, &cfg, reps, seed);
        let costs: Vec<f64> = reports.iter().map(|r| r.relay_cost).collect();
        let delays: Vec<f64> = reports.iter().map(|r| r.delivery_time).collect();
        let copies: Vec<f64> = reports.iter().map(|r| f64::from(r.relay_copies)).collect();
        Ok((
            SummaryStats::from_samples(&costs),
            SummaryStats::from_samples(&delays),
            SummaryStats::from_samples(&copies),
        ))
    };

    let (opt_cost, opt_delay, opt_copies) = stats_for(&PolicySpec::OptimalClosedLoop, seed)?;
    let open_spec = PolicySpec::OpenLoopThreshold {
        threshold: fluid_sol.tau_star,
    };
    let (open_cost, open_delay, open_copies) = stats_for(&open_spec, seed.wrapping_add(1))?;
    let table = policy::evaluate_policy_exact(&PolicySpec::OptimalClosedLoop, &params)?;
    Ok(CostCell {
        lambda,
        k,
        exact_mdp_cost: policy::total_cost(&table),
        optimal_cost: opt_cost,
        optimal_delay: opt_delay,
        optimal_copies: opt_copies,
        open_loop_cost: open_cost,
        open_loop_delay: open_delay,
        open_loop_copies: open_copies,
        tau_star: fluid_sol.tau_star,
        fluid_cost: fluid_sol.cost().total,
    })
}
