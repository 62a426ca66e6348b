//! Deterministic fluid dynamics of the controlled network, the limiting
//! copy index `phi(x, y)`, the stopping times `tau_star` and `tau`, the
//! fluid-optimal cost, and a threshold-sweep verification of the optimal
//! open-loop threshold.
//!
//! While copying is on, the fractions evolve as
//! `dx/dt = Lambda (x + y)(X - x)` and, for epidemic relaying,
//! `dy/dt = Lambda (x + y)(Y - y)`; two-hop relaying replaces the relay
//! drift factor `x + y` by `x + Y0`. Copying is on while `phi(x, y) > 0`,
//! where
//! `phi(x, y) = int_x^{X_alpha} dz / (Lambda (y + z)^2 (X - z)) - Gamma`,
//! and `-Gamma` once `x >= X_alpha`. The first zero crossing of phi along
//! the trajectory is `tau_star`; the hitting time of `X_alpha` by `x` is
//! `tau`.

use serde::Serialize;
use thiserror::Error;

use crate::model::ScaledParams;

#[derive(Debug, Error)]
pub enum FluidError {
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error("step size must be > 0 and finite, got {0}")]
    BadStep(f64),
    #[error("event tolerance must be > 0, got {0}")]
    BadTolerance(f64),
    #[error("grid step must be > 0 and finite, got {0}")]
    BadGridStep(f64),
    #[error("({x}, {y}) is not on the K={k} lattice")]
    OffLattice { x: f64, y: f64, k: u32 },
    #[error("integration exceeded {0} steps without reaching the delivery target")]
    StepBudgetExhausted(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelayMode {
    Epidemic,
    TwoHop,
}

impl std::fmt::Display for RelayMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RelayMode::Epidemic => write!(f, "epidemic"),
            RelayMode::TwoHop => write!(f, "two-hop"),
        }
    }
}

/// Limiting copy index via the partial-fraction closed form of
/// `1 / ((y + z)^2 (X - z))`.
pub fn phi_fluid(x: f64, y: f64, scaled: &ScaledParams) -> f64 {
    if x >= scaled.x_alpha {
        return -scaled.gamma;
    }
    let antideriv = |z: f64| phi_antiderivative(z, y, scaled.x);
    (antideriv(scaled.x_alpha) - antideriv(x)) / scaled.lambda - scaled.gamma
}

// Antiderivative of 1 / ((y + z)^2 (X - z)):
//   ln((z + y)/(X - z)) / (X + y)^2 - 1 / ((X + y)(z + y)).
fn phi_antiderivative(z: f64, y: f64, x_cap: f64) -> f64 {
    let s = x_cap + y;
    ((z + y) / (x_cap - z)).ln() / (s * s) - 1.0 / (s * (z + y))
}

/// Prelimit copy index `phi^K` on the scaled lattice. Under the scaling map
/// this is exactly `K * Phi(m, n)` of the finite network with
/// `lambda = Lambda/K`, `gamma = Gamma/K`.
pub fn phi_prelimit(x: f64, y: f64, scaled: &ScaledParams, k: u32) -> Result<f64, FluidError> {
    let kf = k as f64;
    let m = (x * kf).round();
    let n = (y * kf).round();
    if (x * kf - m).abs() > 1e-9 || (y * kf - n).abs() > 1e-9 {
        return Err(FluidError::OffLattice { x, y, k });
    }
    let j_end = (kf * scaled.x_alpha).ceil() as i64;
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for j in (m as i64)..j_end {
        let jf = j as f64;
        let term = 1.0
            / (kf * scaled.lambda * (y + jf / kf) * (y + (jf + 1.0) / kf) * (scaled.x - jf / kf));
        let t = sum + term;
        comp += if sum.abs() >= term.abs() {
            (sum - t) + term
        } else {
            (term - t) + sum
        };
        sum = t;
    }
    Ok(sum + comp - scaled.gamma)
}

/// Integrator configuration. `step = None` picks
/// `min(1e-3 / Lambda, tau_estimate / 1e4)` where the estimate is the
/// never-copy delivery time.
#[derive(Debug, Clone, Copy)]
pub struct FluidConfig {
    pub step: Option<f64>,
    pub event_tolerance: f64,
    pub max_steps: usize,
}

impl Default for FluidConfig {
    fn default() -> Self {
        Self {
            step: None,
            event_tolerance: 1e-9,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FluidSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub phi: f64,
    pub copying: bool,
}

#[derive(Debug, Clone)]
pub struct FluidSolution {
    pub samples: Vec<FluidSample>,
    /// Time at which copying to relays stops.
    pub tau_star: f64,
    /// Time at which x reaches X_alpha.
    pub tau: f64,
    pub y_tau_star: f64,
    pub mode: RelayMode,
    pub scaled: ScaledParams,
}

impl FluidSolution {
    /// Linear interpolation on the sample grid; constant extrapolation
    /// beyond the last sample (y is frozen and x capped at X_alpha there).
    pub fn state_at(&self, t: f64) -> (f64, f64) {
        let s = &self.samples;
        if t <= s[0].t {
            return (s[0].x, s[0].y);
        }
        let last = s[s.len() - 1];
        if t >= last.t {
            return (last.x, last.y);
        }
        let i = s.partition_point(|p| p.t <= t);
        let (a, b) = (s[i - 1], s[i]);
        let w = (t - a.t) / (b.t - a.t);
        (a.x + w * (b.x - a.x), a.y + w * (b.y - a.y))
    }

    /// Relay-copy energy `Gamma * y(tau_star)` plus delivery delay `tau`.
    pub fn cost(&self) -> FluidCost {
        FluidCost {
            tau: self.tau,
            tau_star: self.tau_star,
            y_tau_star: self.y_tau_star,
            relay_energy: self.scaled.gamma * self.y_tau_star,
            dest_energy: self.scaled.gamma * self.scaled.x,
            copies_made: self.y_tau_star - self.scaled.y0,
            total: self.tau + self.scaled.gamma * self.y_tau_star,
        }
    }
}

/// Fluid cost report. `total = tau + Gamma * y(tau_star)` is the
/// relay-energy convention of the asymptotic-optimality limit; the
/// policy-independent destination-copy energy `Gamma * X` is reported
/// separately and never folded into `total`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FluidCost {
    pub tau: f64,
    pub tau_star: f64,
    pub y_tau_star: f64,
    pub relay_energy: f64,
    pub dest_energy: f64,
    pub copies_made: f64,
    pub total: f64,
}

fn drift(x: f64, y: f64, copying: bool, mode: RelayMode, p: &ScaledParams) -> (f64, f64) {
    let dx = p.lambda * (x + y) * (p.x - x);
    let dy = if copying {
        match mode {
            RelayMode::Epidemic => p.lambda * (x + y) * (p.y - y),
            RelayMode::TwoHop => p.lambda * (x + p.y0) * (p.y - y),
        }
    } else {
        0.0
    };
    (dx, dy)
}

fn rk4_step(
    x: f64,
    y: f64,
    h: f64,
    copying: bool,
    mode: RelayMode,
    p: &ScaledParams,
) -> (f64, f64) {
    let (k1x, k1y) = drift(x, y, copying, mode, p);
    let (k2x, k2y) = drift(x + 0.5 * h * k1x, y + 0.5 * h * k1y, copying, mode, p);
    let (k3x, k3y) = drift(x + 0.5 * h * k2x, y + 0.5 * h * k2y, copying, mode, p);
    let (k4x, k4y) = drift(x + h * k3x, y + h * k3y, copying, mode, p);
    (
        x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x),
        y + h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y),
    )
}

/// Never-copy delivery time: with y frozen at y0,
/// `(1 / (Lambda (X + y0))) ln((X_alpha + y0) X / (y0 (X - X_alpha)))`.
/// Used both as the default-step estimate and as the frozen-phase closed
/// form for cross-checking the integrator.
pub fn frozen_phase_delay(x_from: f64, x_to: f64, y_frozen: f64, p: &ScaledParams) -> f64 {
    let s = p.x + y_frozen;
    ((x_to + y_frozen) * (p.x - x_from) / ((x_from + y_frozen) * (p.x - x_to))).ln()
        / (p.lambda * s)
}

pub fn default_step(scaled: &ScaledParams) -> f64 {
    let tau_estimate = frozen_phase_delay(0.0, scaled.x_alpha, scaled.y0, scaled);
    (1e-3 / scaled.lambda).min(tau_estimate / 1e4)
}

/// Integrates the controlled fluid ODE with event detection: the phi zero
/// crossing freezes y, and the X_alpha crossing ends the solution at tau.
pub fn integrate(
    scaled: &ScaledParams,
    mode: RelayMode,
    config: &FluidConfig,
) -> Result<FluidSolution, FluidError> {
    scaled.validate_fractions()?;
    let h = match config.step {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(s) => return Err(FluidError::BadStep(s)),
        None => default_step(scaled),
    };
    if !(config.event_tolerance > 0.0) {
        return Err(FluidError::BadTolerance(config.event_tolerance));
    }

    let mut t = 0.0f64;
    let mut x = 0.0f64;
    let mut y = scaled.y0;
    let mut copying = phi_fluid(x, y, scaled) > 0.0;
    let mut tau_star = if copying { None } else { Some(0.0) };
    let mut samples = vec![FluidSample {
        t,
        x,
        y,
        phi: phi_fluid(x, y, scaled),
        copying,
    }];

    let mut steps = 0usize;
    let tau = loop {
        steps += 1;
        if steps > config.max_steps {
            return Err(FluidError::StepBudgetExhausted(config.max_steps));
        }
        let (xn, yn) = rk4_step(x, y, h, copying, mode, scaled);

        // Event times within the bracket, refined by bisection on the
        // substep length.
        let crossing = |pred: &dyn Fn(f64, f64) -> bool| -> f64 {
            let mut lo = 0.0f64;
            let mut hi = h;
            while hi - lo > config.event_tolerance {
                let mid = 0.5 * (lo + hi);
                let (xm, ym) = rk4_step(x, y, mid, copying, mode, scaled);
                if pred(xm, ym) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        };

        let hit_target = xn >= scaled.x_alpha;
        let phi_crossed = copying && phi_fluid(xn, yn, scaled) <= 0.0;
        if hit_target || phi_crossed {
            let t_target = hit_target.then(|| crossing(&|xm, _| xm >= scaled.x_alpha));
            let t_phi = phi_crossed.then(|| crossing(&|xm, ym| phi_fluid(xm, ym, scaled) <= 0.0));
            match (t_phi, t_target) {
                // phi crossing first: freeze y and keep going.
                (Some(hp), ht) if ht.map_or(true, |ht| hp < ht) => {
                    let (xe, ye) = rk4_step(x, y, hp, copying, mode, scaled);
                    t += hp;
                    x = xe;
                    y = ye;
                    copying = false;
                    tau_star = Some(t);
                    samples.push(FluidSample {
                        t,
                        x,
                        y,
                        phi: phi_fluid(x, y, scaled),
                        copying,
                    });
                    continue;
                }
                (_, Some(ht)) => {
                    let (xe, ye) = rk4_step(x, y, ht, copying, mode, scaled);
                    t += ht;
                    x = xe.min(scaled.x_alpha);
                    y = ye;
                    samples.push(FluidSample {
                        t,
                        x,
                        y,
                        phi: phi_fluid(x, y, scaled),
                        copying,
                    });
                    // Gamma = 0: phi > 0 strictly until x hits the target,
                    // so copying stops exactly at delivery.
                    if tau_star.is_none() {
                        tau_star = Some(t);
                    }
                    break t;
                }
                _ => unreachable!(),
            }
        }

        t += h;
        x = xn;
        y = yn;
        samples.push(FluidSample {
            t,
            x,
            y,
            phi: phi_fluid(x, y, scaled),
            copying,
        });
    };

    Ok(FluidSolution {
        samples,
        tau_star: tau_star.expect("set at phi crossing or delivery"),
        tau,
        y_tau_star: y,
        mode,
        scaled: *scaled,
    })
}

pub fn tau_star(scaled: &ScaledParams, mode: RelayMode, config: &FluidConfig) -> Result<f64, FluidError> {
    Ok(integrate(scaled, mode, config)?.tau_star)
}

pub fn tau(scaled: &ScaledParams, mode: RelayMode, config: &FluidConfig) -> Result<f64, FluidError> {
    Ok(integrate(scaled, mode, config)?.tau)
}

pub fn fluid_cost(
    scaled: &ScaledParams,
    mode: RelayMode,
    config: &FluidConfig,
) -> Result<FluidCost, FluidError> {
    Ok(integrate(scaled, mode, config)?.cost())
}

/// One row of the threshold sweep: stop copying at `threshold`, reach the
/// target at cost `cost`; `gradient_factor` is the factor g whose zero
/// crossing locates the optimum.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub x_at: f64,
    pub y_at: f64,
    pub cost: f64,
    pub gradient_factor: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub best_threshold: f64,
    pub min_cost: f64,
    /// Width of the refined bracket around the minimizer.
    pub refined_step: f64,
}

/// Sweeps the open-loop stop threshold over the always-copy trajectory and
/// minimizes `C(tbar) = tbar + Gamma * ybar + remaining delay with y frozen
/// at ybar`, then golden-section refines around the grid argmin.
pub fn pontryagin_sweep(
    scaled: &ScaledParams,
    mode: RelayMode,
    grid_step: f64,
    config: &FluidConfig,
) -> Result<SweepResult, FluidError> {
    if !(grid_step > 0.0) || !grid_step.is_finite() {
        return Err(FluidError::BadGridStep(grid_step));
    }
    // Always-copy flow: integrate with the indicator forced on until the
    // target is reached; thresholds beyond that are never useful.
    let h = match config.step {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(s) => return Err(FluidError::BadStep(s)),
        None => default_step(scaled),
    };
    let flow = always_copy_flow(scaled, mode, config)?;
    let t_max = flow.last().expect("nonempty").0;

    let cost_at = |tbar: f64| -> SweepRow {
        let (x_at, y_at) = interp(&flow, tbar);
        let remaining = if x_at >= scaled.x_alpha {
            0.0
        } else {
            frozen_phase_delay(x_at, scaled.x_alpha, y_at, scaled)
        };
        SweepRow {
            threshold: tbar,
            x_at,
            y_at,
            cost: tbar + scaled.gamma * y_at + remaining,
            gradient_factor: -phi_fluid(x_at, y_at, scaled),
        }
    };

    let mut rows = Vec::new();
    let mut tbar = 0.0;
    while tbar <= t_max {
        rows.push(cost_at(tbar));
        tbar += grid_step;
    }
    let best_idx = rows
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.cost.total_cmp(&b.1.cost))
        .map(|(i, _)| i)
        .expect("nonempty sweep");

    // Golden-section refinement on the bracket around the grid argmin,
    // down to the flow sample spacing (the cost interpolation cannot
    // localize the minimizer below that resolution).
    let floor = h.min(grid_step);
    let mut lo = rows[best_idx.saturating_sub(1)].threshold;
    let mut hi = rows[(best_idx + 1).min(rows.len() - 1)].threshold;
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    while hi - lo > floor {
        let a = hi - inv_phi * (hi - lo);
        let b = lo + inv_phi * (hi - lo);
        if cost_at(a).cost <= cost_at(b).cost {
            hi = b;
        } else {
            lo = a;
        }
    }
    let best = cost_at(0.5 * (lo + hi));
    Ok(SweepResult {
        rows,
        best_threshold: best.threshold,
        min_cost: best.cost,
        refined_step: hi - lo,
    })
}

fn always_copy_flow(
    scaled: &ScaledParams,
    mode: RelayMode,
    config: &FluidConfig,
) -> Result<Vec<(f64, f64, f64)>, FluidError> {
    let h = match config.step {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(s) => return Err(FluidError::BadStep(s)),
        None => default_step(scaled),
    };
    let mut t = 0.0;
    let mut x = 0.0f64;
    let mut y = scaled.y0;
    let mut out = vec![(t, x, y)];
    let mut steps = 0usize;
    while x < scaled.x_alpha {
        steps += 1;
        if steps > config.max_steps {
            return Err(FluidError::StepBudgetExhausted(config.max_steps));
        }
        let (xn, yn) = rk4_step(x, y, h, true, mode, scaled);
        t += h;
        x = xn;
        y = yn;
        out.push((t, x, y));
    }
    Ok(out)
}

fn interp(flow: &[(f64, f64, f64)], t: f64) -> (f64, f64) {
    if t <= flow[0].0 {
        return (flow[0].1, flow[0].2);
    }
    let last = flow[flow.len() - 1];
    if t >= last.0 {
        return (last.1, last.2);
    }
    let i = flow.partition_point(|p| p.0 <= t);
    let (a, b) = (flow[i - 1], flow[i]);
    let w = (t - a.0) / (b.0 - a.0);
    (a.1 + w * (b.1 - a.1), a.2 + w * (b.2 - a.2))
}
