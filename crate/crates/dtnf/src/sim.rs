//! Event-driven simulation of the forwarding CTMC and Monte Carlo
//! aggregation.
//!
//! The simulator draws competing exponential meeting clocks for the
//! destination channel (rate `lambda (m + n)(M - m)`) and the relay
//! channel (rate `lambda (m + n)(N - n)` for epidemic relaying,
//! `lambda (m + N0)(N - n)` for two-hop). Destination meetings always
//! copy; relay meetings consult the policy and may be skipped. Skipped
//! meetings still advance time, which keeps the embedded clock exact.
//! Once the policy can never copy again the relay channel is dropped from
//! the total rate, which thins identically distributed skips away.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::fluid::RelayMode;
use crate::lattice::Lattice;
use crate::model::{ModelError, NetworkParams, PolicySpec};
use crate::policy::{self, PolicyError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    pub mode: RelayMode,
    /// Record the full event log in each report (needed for trajectory
    /// extraction; off by default to keep large sweeps cheap).
    pub record_events: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            mode: RelayMode::Epidemic,
            record_events: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    DestinationCopy,
    RelayCopy,
    RelaySkip,
}

/// One meeting event; `m` and `n` are the counts after the event.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SimEvent {
    pub t: f64,
    pub m: u32,
    pub n: u32,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    /// Hitting time of the delivery target m = M_alpha.
    pub delivery_time: f64,
    /// Time at which all M destinations hold the packet.
    pub completion_time: f64,
    pub relay_copies: u32,
    pub dest_copies: u32,
    /// delivery_time + gamma * (relay_copies + M): the stage-cost total
    /// matched by the exact policy evaluator.
    pub mdp_cost: f64,
    /// delivery_time + gamma * (N0 + relay_copies): counts the initial
    /// seeding instead of destination copies, matching the fluid total
    /// tau + Gamma * y(tau_star).
    pub relay_cost: f64,
    pub events: Vec<SimEvent>,
}

/// A policy compiled for simulation, with the point at which the relay
/// channel can be shut off permanently resolved up front.
#[derive(Debug, Clone)]
pub struct PreparedPolicy {
    kind: PreparedKind,
}

#[derive(Debug, Clone)]
enum PreparedKind {
    /// Copy decisions on the state lattice with an absorbing no-copy
    /// region: the first no-copy state shuts the channel for good.
    ClosedLoop(Lattice<bool>),
    /// Copy while t <= threshold.
    Threshold(f64),
    Always,
    Never,
    /// Arbitrary state-feedback table; skips never shut the channel off.
    Table(Lattice<bool>),
}

impl PreparedPolicy {
    pub fn new(spec: &PolicySpec, params: &NetworkParams) -> Result<Self, SimError> {
        let kind = match spec {
            PolicySpec::OptimalClosedLoop => {
                PreparedKind::ClosedLoop(policy::relay_actions(spec, params)?)
            }
            PolicySpec::OpenLoopThreshold { threshold } => PreparedKind::Threshold(*threshold),
            PolicySpec::AlwaysCopy => PreparedKind::Always,
            PolicySpec::NeverCopy => PreparedKind::Never,
            PolicySpec::Table { .. } => PreparedKind::Table(policy::relay_actions(spec, params)?),
        };
        Ok(Self { kind })
    }

    /// Whether the relay channel is live on entering state (m, n) at time
    /// t; a dead channel never revives.
    fn channel_live(&self, m: u32, n: u32, t: f64, params: &NetworkParams) -> bool {
        if n >= params.relays {
            return false;
        }
        match &self.kind {
            PreparedKind::ClosedLoop(copy) => *copy.get(m, n),
            PreparedKind::Threshold(thr) => t <= *thr,
            PreparedKind::Always | PreparedKind::Table(_) => true,
            PreparedKind::Never => false,
        }
    }

    /// Decision at a relay meeting; `None` means skip and shut off.
    fn decide(&self, m: u32, n: u32, t: f64) -> Option<bool> {
        match &self.kind {
            PreparedKind::ClosedLoop(copy) => {
                if *copy.get(m, n) {
                    Some(true)
                } else {
                    None
                }
            }
            PreparedKind::Threshold(thr) => {
                if t <= *thr {
                    Some(true)
                } else {
                    None
                }
            }
            PreparedKind::Always => Some(true),
            PreparedKind::Never => None,
            PreparedKind::Table(copy) => Some(*copy.get(m, n)),
        }
    }
}

fn exponential(rng: &mut impl Rng, rate: f64) -> f64 {
    debug_assert!(rate > 0.0);
    -(1.0 - rng.random::<f64>()).ln() / rate
}

pub fn simulate(
    params: &NetworkParams,
    policy: &PreparedPolicy,
    config: &SimConfig,
    rng: &mut impl Rng,
) -> RunReport {
    let big_m = params.destinations;
    let big_n = params.relays;
    let n0 = params.initial_infected;
    let m_alpha = params.m_alpha();
    let lambda = params.lambda;

    let mut t = 0.0f64;
    let mut m = 0u32;
    let mut n = n0;
    let mut channel = policy.channel_live(m, n, t, params);
    let mut relay_copies = 0u32;
    let mut delivery_time = f64::NAN;
    let mut events = Vec::new();

    while m < big_m {
        let dest_rate = lambda * f64::from(m + n) * f64::from(big_m - m);
        let relay_rate = if channel {
            let infectious = match config.mode {
                RelayMode::Epidemic => m + n,
                RelayMode::TwoHop => m + n0,
            };
            lambda * f64::from(infectious) * f64::from(big_n - n)
        } else {
            0.0
        };
        let total = dest_rate + relay_rate;
        t += exponential(rng, total);

        let kind = if rng.random::<f64>() * total < dest_rate {
            m += 1;
            if m == m_alpha {
                delivery_time = t;
            }
            EventKind::DestinationCopy
        } else {
            match policy.decide(m, n, t) {
                Some(true) => {
                    n += 1;
                    EventKind::RelayCopy
                }
                Some(false) => EventKind::RelaySkip,
                None => {
                    channel = false;
                    EventKind::RelaySkip
                }
            }
        };
        if channel && m < big_m {
            channel = policy.channel_live(m, n, t, params);
        }
        if config.record_events {
            events.push(SimEvent { t, m, n, kind });
        }
        if kind == EventKind::RelayCopy {
            relay_copies += 1;
        }
    }

    let gamma = params.gamma;
    RunReport {
        delivery_time,
        completion_time: t,
        relay_copies,
        dest_copies: big_m,
        mdp_cost: delivery_time + gamma * f64::from(relay_copies + big_m),
        relay_cost: delivery_time + gamma * f64::from(n0 + relay_copies),
        events,
    }
}

/// Runs `reps` independent replications in parallel. Replication `r`
/// derives its generator from (`seed`, stream `r`), so results are
/// reproducible bit for bit regardless of thread count and report order
/// matches replication order.
pub fn monte_carlo(
    params: &NetworkParams,
    policy: &PreparedPolicy,
    config: &SimConfig,
    reps: u32,
    seed: u64,
) -> Vec<RunReport> {
    (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(u64::from(rep));
            simulate(params, policy, config, &mut rng)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SummaryStats {
    pub count: u32,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
    pub ci95_half_width: f64,
}

impl SummaryStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        let count = samples.len() as u32;
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let variance = if samples.len() > 1 {
            samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let std_error = (variance / n).sqrt();
        Self {
            count,
            mean,
            variance,
            std_error,
            ci95_half_width: 1.96 * std_error,
        }
    }
}

/// Scaled right-continuous trajectory (x^K(t), y^K(t)) = (m/K, n/K)
/// sampled at the given times. Requires `record_events`.
pub fn scaled_trajectory(report: &RunReport, params: &NetworkParams, times: &[f64]) -> Vec<(f64, f64)> {
    let k = f64::from(params.total_nodes());
    let mut out = Vec::with_capacity(times.len());
    let mut idx = 0usize;
    let mut state = (0u32, params.initial_infected);
    for &t in times {
        while idx < report.events.len() && report.events[idx].t <= t {
            state = (report.events[idx].m, report.events[idx].n);
            idx += 1;
        }
        out.push((f64::from(state.0) / k, f64::from(state.1) / k));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Rational;

    fn small_params() -> NetworkParams {
        NetworkParams::new(4, 8, 2, Rational::new(4, 5).unwrap(), 0.05, 0.5).unwrap()
    }

    fn record() -> SimConfig {
        SimConfig {
            mode: RelayMode::Epidemic,
            record_events: true,
        }
    }

    #[test]
    fn all_relays_seeded_means_no_relay_copies() {
        let p = NetworkParams::new(4, 3, 3, Rational::new(4, 5).unwrap(), 0.05, 0.5).unwrap();
        let policy = PreparedPolicy::new(&PolicySpec::AlwaysCopy, &p).unwrap();
        let reports = monte_carlo(&p, &policy, &record(), 200, 7);
        for r in &reports {
            assert_eq!(r.relay_copies, 0);
            assert_eq!(r.dest_copies, 4);
            assert!(r.events.iter().all(|e| e.kind == EventKind::DestinationCopy));
        }
    }

    #[test]
    fn replications_are_deterministic() {
        let p = small_params();
        let policy = PreparedPolicy::new(&PolicySpec::OptimalClosedLoop, &p).unwrap();
        let a = monte_carlo(&p, &policy, &record(), 64, 42);
        let b = monte_carlo(&p, &policy, &record(), 64, 42);
        for (ra, rb) in a.iter().zip(&b) {
            assert_eq!(ra.delivery_time.to_bits(), rb.delivery_time.to_bits());
            assert_eq!(ra.completion_time.to_bits(), rb.completion_time.to_bits());
            assert_eq!(ra.relay_copies, rb.relay_copies);
            assert_eq!(ra.events.len(), rb.events.len());
        }
        let c = monte_carlo(&p, &policy, &record(), 64, 43);
        assert!(a
            .iter()
            .zip(&c)
            .any(|(ra, rc)| ra.delivery_time.to_bits() != rc.delivery_time.to_bits()));
    }

    #[test]
    fn first_holding_time_is_exponential() {
        // Under always-copy the first meeting happens at rate
        // lambda * N0 * (K - N0); Kolmogorov-Smirnov at the 1% level over
        // 10^4 replications (critical value 1.63 / sqrt(n)).
        let p = small_params();
        let rate = p.lambda * f64::from(p.initial_infected)
            * f64::from(p.total_nodes() - p.initial_infected);
        let policy = PreparedPolicy::new(&PolicySpec::AlwaysCopy, &p).unwrap();
        let n = 10_000u32;
        let mut firsts: Vec<f64> = monte_carlo(&p, &policy, &record(), n, 2024)
            .iter()
            .map(|r| r.events[0].t)
            .collect();
        firsts.sort_by(f64::total_cmp);
        let mut d = 0.0f64;
        for (i, t) in firsts.iter().enumerate() {
            let cdf = 1.0 - (-rate * t).exp();
            d = d.max((cdf - i as f64 / n as f64).abs());
            d = d.max(((i + 1) as f64 / n as f64 - cdf).abs());
        }
        assert!(d < 1.63 / (n as f64).sqrt(), "KS statistic {d}");
    }

    #[test]
    fn never_copy_mean_delivery_matches_closed_form() {
        // E[T_d] = sum_{m=0}^{M_alpha - 1} 1 / (lambda (m + N0)(M - m)).
        let p = small_params();
        let expected: f64 = (0..p.m_alpha())
            .map(|m| {
                1.0 / (p.lambda
                    * f64::from(m + p.initial_infected)
                    * f64::from(p.destinations - m))
            })
            .sum();
        let policy = PreparedPolicy::new(&PolicySpec::NeverCopy, &p).unwrap();
        let reports = monte_carlo(&p, &policy, &SimConfig::default(), 20_000, 5);
        let times: Vec<f64> = reports.iter().map(|r| r.delivery_time).collect();
        let stats = SummaryStats::from_samples(&times);
        assert!(
            (stats.mean - expected).abs() < 3.0 * stats.std_error,
            "mean {} vs {}",
            stats.mean,
            expected
        );
        assert!(reports.iter().all(|r| r.relay_copies == 0));
    }

    #[test]
    fn threshold_policy_stops_copying_at_threshold() {
        let p = small_params();
        let thr = 5.0;
        let policy =
            PreparedPolicy::new(&PolicySpec::OpenLoopThreshold { threshold: thr }, &p).unwrap();
        let reports = monte_carlo(&p, &policy, &record(), 500, 11);
        let mut saw_copy = false;
        for r in &reports {
            for e in &r.events {
                if e.kind == EventKind::RelayCopy {
                    saw_copy = true;
                    assert!(e.t <= thr);
                }
            }
        }
        assert!(saw_copy);
    }

    #[test]
    fn trajectories_are_monotone_and_consistent() {
        let p = small_params();
        let policy = PreparedPolicy::new(&PolicySpec::OptimalClosedLoop, &p).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let r = simulate(&p, &policy, &record(), &mut rng);
        let mut prev = (0u32, p.initial_infected);
        let mut prev_t = 0.0;
        for e in &r.events {
            assert!(e.t > prev_t);
            assert!(e.m >= prev.0 && e.n >= prev.1);
            assert!(e.m - prev.0 + e.n - prev.1 <= 1);
            prev = (e.m, e.n);
            prev_t = e.t;
        }
        assert_eq!(prev.0, p.destinations);
        let times = [0.0, r.delivery_time, r.completion_time];
        let traj = scaled_trajectory(&r, &p, &times);
        assert_eq!(traj[0].0, 0.0);
        let k = f64::from(p.total_nodes());
        assert!((traj[1].0 - f64::from(p.m_alpha()) / k).abs() < 1e-12);
        assert!((traj[2].0 - f64::from(p.destinations) / k).abs() < 1e-12);
    }

    #[test]
    fn optimal_mean_cost_beats_extremes() {
        let p = small_params();
        let cfg = SimConfig::default();
        let mean = |spec: &PolicySpec| {
            let policy = PreparedPolicy::new(spec, &p).unwrap();
            let costs: Vec<f64> = monte_carlo(&p, &policy, &cfg, 20_000, 99)
                .iter()
                .map(|r| r.mdp_cost)
                .collect();
            SummaryStats::from_samples(&costs)
        };
        let opt = mean(&PolicySpec::OptimalClosedLoop);
        let always = mean(&PolicySpec::AlwaysCopy);
        let never = mean(&PolicySpec::NeverCopy);
        assert!(opt.mean <= always.mean + always.ci95_half_width + opt.ci95_half_width);
        assert!(opt.mean <= never.mean + never.ci95_half_width + opt.ci95_half_width);
        // And the Monte Carlo mean agrees with the exact evaluation.
        let table = policy::evaluate_policy_exact(&PolicySpec::OptimalClosedLoop, &p).unwrap();
        let exact = policy::total_cost(&table);
        assert!(
            (opt.mean - exact).abs() < 3.0 * opt.std_error,
            "MC {} vs exact {}",
            opt.mean,
            exact
        );
    }

    #[test]
    fn two_hop_delivers_slower_than_epidemic() {
        let p = NetworkParams::new(6, 20, 2, Rational::new(4, 5).unwrap(), 0.05, 0.01).unwrap();
        let delivery = |mode: RelayMode| {
            let cfg = SimConfig {
                mode,
                record_events: false,
            };
            let policy = PreparedPolicy::new(&PolicySpec::AlwaysCopy, &p).unwrap();
            let times: Vec<f64> = monte_carlo(&p, &policy, &cfg, 4000, 17)
                .iter()
                .map(|r| r.delivery_time)
                .collect();
            SummaryStats::from_samples(&times)
        };
        let epi = delivery(RelayMode::Epidemic);
        let two = delivery(RelayMode::TwoHop);
        assert!(epi.mean + epi.ci95_half_width < two.mean);
    }

    #[test]
    fn summary_stats_basics() {
        let s = SummaryStats::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.count, 4);
        assert!((s.mean - 2.5).abs() < 1e-15);
        assert!((s.variance - 5.0 / 3.0).abs() < 1e-15);
    }
}
