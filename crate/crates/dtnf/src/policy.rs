//! The finite-network forwarding MDP: the copy index Phi, the optimal
//! threshold policy, exact policy evaluation by backward recursion, and a
//! brute-force Bellman oracle that certifies optimality without assuming the
//! threshold structure.
//!
//! `Phi(m, n) = sum_{j=m}^{M_alpha-1} 1 / (lambda (n+j)(n+j+1)(M-j)) - gamma`
//! is the cost difference between stopping now and copying once more before
//! stopping; copying to a relay is optimal iff `Phi > 0`. Destinations are
//! always copied to.
//!
//! Phi values can sit extremely close to zero (at the M=15, N=50 illustration
//! the boundary state (7, 20) has Phi ~ -8e-5), so instances small enough for
//! the oracle are evaluated in exact rational arithmetic and larger ones use
//! compensated floating-point summation.

use num_rational::BigRational;
use num_traits::{FromPrimitive, ToPrimitive, Zero};
use thiserror::Error;

use crate::lattice::Lattice;
use crate::model::{
    meeting_probabilities, EpidemicState, MeetingKind, ModelError, NetworkParams, PolicySpec,
};

/// Instances at or below these sizes are handled in exact rational
/// arithmetic; the brute-force oracle refuses anything larger.
pub const ORACLE_MAX_DESTINATIONS: u32 = 8;
pub const ORACLE_MAX_RELAYS: u32 = 16;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("instance too large for exhaustive enumeration: M={m} (max {max_m}), N={n} (max {max_n})")]
    InstanceTooLarge { m: u32, n: u32, max_m: u32, max_n: u32 },
    #[error("policy is not stationary in (m, n); exact backward recursion does not apply")]
    NonStationaryPolicy,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Copy,
    NoCopy,
}

fn within_exact_guideline(params: &NetworkParams) -> bool {
    params.destinations <= ORACLE_MAX_DESTINATIONS && params.relays <= ORACLE_MAX_RELAYS
}

/// `Phi(m, n)` by compensated (Neumaier) summation.
pub fn phi(m: u32, n: u32, params: &NetworkParams) -> f64 {
    let m_alpha = params.m_alpha();
    let big_m = params.destinations as f64;
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for j in m..m_alpha {
        let nj = (n + j) as f64;
        let term = 1.0 / (params.lambda * nj * (nj + 1.0) * (big_m - j as f64));
        let t = sum + term;
        comp += if sum.abs() >= term.abs() {
            (sum - t) + term
        } else {
            (term - t) + sum
        };
        sum = t;
    }
    sum + comp - params.gamma
}

/// `Phi(m, n)` in exact rational arithmetic. The f64 inputs `lambda` and
/// `gamma` are converted exactly, so the sign is unambiguous.
pub fn phi_exact(m: u32, n: u32, params: &NetworkParams) -> BigRational {
    let lambda = BigRational::from_float(params.lambda).expect("finite lambda");
    let gamma = BigRational::from_float(params.gamma).expect("finite gamma");
    let mut sum = BigRational::zero();
    for j in m..params.m_alpha() {
        let nj = (n + j) as i64;
        let denom = BigRational::from_i64(nj * (nj + 1) * (params.destinations - j) as i64)
            .unwrap()
            * &lambda;
        sum += denom.recip();
    }
    sum - gamma
}

/// Sign of Phi with no-copy on ties: exact rationals within the oracle
/// guideline, compensated f64 otherwise.
pub fn phi_is_positive(m: u32, n: u32, params: &NetworkParams) -> bool {
    if within_exact_guideline(params) {
        phi_exact(m, n, params) > BigRational::zero()
    } else {
        phi(m, n, params) > 0.0
    }
}

/// Full table of Phi over [0, M-1] x [N0, N].
#[derive(Debug, Clone)]
pub struct PhiTable {
    pub values: Lattice<f64>,
    pub params: NetworkParams,
}

impl PhiTable {
    pub fn build(params: &NetworkParams) -> Self {
        let m_alpha = params.m_alpha();
        let big_m = params.destinations as f64;
        let mut values = Lattice::filled(params, 0.0);
        for n in params.initial_infected..=params.relays {
            // Suffix accumulation in m with Neumaier compensation.
            let mut sum = 0.0f64;
            let mut comp = 0.0f64;
            for m in (0..params.destinations).rev() {
                if m < m_alpha {
                    let nj = (n + m) as f64;
                    let term = 1.0 / (params.lambda * nj * (nj + 1.0) * (big_m - m as f64));
                    let t = sum + term;
                    comp += if sum.abs() >= term.abs() {
                        (sum - t) + term
                    } else {
                        (term - t) + sum
                    };
                    sum = t;
                }
                values.set(m, n, sum + comp - params.gamma);
            }
        }
        Self {
            values,
            params: *params,
        }
    }
}

/// Theorem policy: always copy to destinations; copy to a relay iff
/// `Phi(m, n) > 0`. The no-copy branch is a permanent stop: by monotonicity
/// of Phi it remains triggered at every lattice successor.
pub fn optimal_action(state: &EpidemicState, params: &NetworkParams) -> Action {
    debug_assert!(state.m < params.destinations);
    match state.meeting {
        Some(MeetingKind::Destination) | None => Action::Copy,
        Some(MeetingKind::Relay) => {
            if phi_is_positive(state.m, state.n, params) {
                Action::Copy
            } else {
                Action::NoCopy
            }
        }
    }
}

/// Relay-meeting actions of a stationary policy, tabulated over the lattice.
pub fn relay_actions(policy: &PolicySpec, params: &NetworkParams) -> Result<Lattice<bool>, PolicyError> {
    policy.validate(params)?;
    let mut actions = Lattice::filled(params, false);
    match policy {
        PolicySpec::OptimalClosedLoop => {
            let exact = within_exact_guideline(params);
            let table = if exact { None } else { Some(PhiTable::build(params)) };
            for m in 0..params.destinations {
                for n in params.initial_infected..=params.relays {
                    let copy = match &table {
                        Some(t) => *t.values.get(m, n) > 0.0,
                        None => phi_exact(m, n, params) > BigRational::zero(),
                    };
                    actions.set(m, n, copy);
                }
            }
        }
        PolicySpec::AlwaysCopy => {
            for m in 0..params.destinations {
                for n in params.initial_infected..=params.relays {
                    actions.set(m, n, true);
                }
            }
        }
        PolicySpec::NeverCopy => {}
        PolicySpec::Table { entries } => {
            for e in entries {
                actions.set(e.m, e.n, e.copy);
            }
        }
        PolicySpec::OpenLoopThreshold { .. } => return Err(PolicyError::NonStationaryPolicy),
    }
    Ok(actions)
}

/// Exact expected costs-to-go of a stationary policy.
///
/// `j_dest(m, n)` is the cost from state (m, n, d) and `j_relay(m, n)` from
/// (m, n, r); both include the copy energy of the remaining destination
/// deliveries (the packet goes to all M destinations, the delay clock stops
/// at M_alpha).
#[derive(Debug, Clone)]
pub struct CostTable {
    pub j_dest: Lattice<f64>,
    pub j_relay: Lattice<f64>,
    pub params: NetworkParams,
}

pub fn evaluate_policy_exact(
    policy: &PolicySpec,
    params: &NetworkParams,
) -> Result<CostTable, PolicyError> {
    let actions = relay_actions(policy, params)?;
    let big_m = params.destinations;
    let n0 = params.initial_infected;
    let big_n = params.relays;
    let m_alpha = params.m_alpha();
    let k = params.total_nodes();
    let gamma = params.gamma;

    let mut j_dest = Lattice::filled(params, 0.0);
    let mut j_relay = Lattice::filled(params, 0.0);
    // silent(m, n): the policy can never copy a relay from (m, n) onward.
    // In the silent region above M_alpha the cost-to-go is (M - m) * gamma
    // exactly, so we short-circuit instead of accumulating rounding error.
    let mut silent = Lattice::filled(params, false);

    // Mean time to the next meeting from post-action state (m', n'),
    // charged only while fewer than M_alpha destinations are infected.
    let delay = |mp: u32, np: u32| -> f64 {
        if mp < m_alpha {
            1.0 / (params.lambda * ((mp + np) as f64) * ((k - mp - np) as f64))
        } else {
            0.0
        }
    };

    for m in (0..big_m).rev() {
        for n in (n0..=big_n).rev() {
            let copy_here = *actions.get(m, n) && n < big_n;
            let s = !copy_here
                && (m + 1 >= big_m || *silent.get(m + 1, n))
                && (n >= big_n || *silent.get(m, n + 1));
            silent.set(m, n, s);

            if s && m >= m_alpha {
                let rest = (big_m - m) as f64 * gamma;
                j_dest.set(m, n, rest);
                j_relay.set(m, n, rest);
                continue;
            }

            // Destination meeting: copy is mandatory.
            let jd = if m + 1 == big_m {
                gamma
            } else {
                let (pd, pr) = meeting_probabilities(m + 1, n, params)?;
                gamma
                    + delay(m + 1, n)
                    + pd * j_dest.get(m + 1, n)
                    + pr * j_relay.get(m + 1, n)
            };
            j_dest.set(m, n, jd);

            // Relay meeting under the tabulated action.
            let jr = if copy_here {
                let (pd, pr) = meeting_probabilities(m, n + 1, params)?;
                gamma
                    + delay(m, n + 1)
                    + pd * j_dest.get(m, n + 1)
                    + pr * j_relay.get(m, n + 1)
            } else {
                // No-copy self-loops at (m, n); resolve in closed form.
                let (pd, pr) = meeting_probabilities(m, n, params)?;
                (delay(m, n) + pd * jd) / (1.0 - pr)
            };
            j_relay.set(m, n, jr);
        }
    }

    Ok(CostTable {
        j_dest,
        j_relay,
        params: *params,
    })
}

/// Total expected cost from t = 0, folding in the average delay until the
/// first meeting and the law of the first susceptible type.
pub fn total_cost(table: &CostTable) -> f64 {
    let p = &table.params;
    let n0 = p.initial_infected;
    let k = p.total_nodes();
    let susceptible = (k - n0) as f64;
    let first_wait = 1.0 / (p.lambda * n0 as f64 * susceptible);
    let w_relay = (p.relays - n0) as f64 / susceptible;
    let w_dest = p.destinations as f64 / susceptible;
    first_wait + w_relay * table.j_relay.get(0, n0) + w_dest * table.j_dest.get(0, n0)
}

/// Exhaustive Bellman solution in exact rational arithmetic.
///
/// No threshold structure is assumed: at every lattice point both relay
/// actions are enumerated and the no-copy self-loop is resolved linearly.
/// Ties pick no-copy.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub copy: Lattice<bool>,
    pub j_dest: Lattice<BigRational>,
    pub j_relay: Lattice<BigRational>,
}

impl OracleSolution {
    pub fn j_dest_f64(&self, m: u32, n: u32) -> f64 {
        self.j_dest.get(m, n).to_f64().unwrap()
    }

    pub fn j_relay_f64(&self, m: u32, n: u32) -> f64 {
        self.j_relay.get(m, n).to_f64().unwrap()
    }

    /// Total expected cost, exact counterpart of [`total_cost`].
    pub fn total_cost(&self, params: &NetworkParams) -> BigRational {
        let n0 = params.initial_infected;
        let k = params.total_nodes();
        let lambda = BigRational::from_float(params.lambda).unwrap();
        let susceptible = BigRational::from_u32(k - n0).unwrap();
        let first_wait =
            (lambda * BigRational::from_u32(n0).unwrap() * &susceptible).recip();
        let w_relay = BigRational::from_u32(params.relays - n0).unwrap() / &susceptible;
        let w_dest = BigRational::from_u32(params.destinations).unwrap() / &susceptible;
        first_wait + w_relay * self.j_relay.get(0, n0) + w_dest * self.j_dest.get(0, n0)
    }
}

pub fn brute_force_oracle(params: &NetworkParams) -> Result<OracleSolution, PolicyError> {
    if !within_exact_guideline(params) {
        return Err(PolicyError::InstanceTooLarge {
            m: params.destinations,
            n: params.relays,
            max_m: ORACLE_MAX_DESTINATIONS,
            max_n: ORACLE_MAX_RELAYS,
        });
    }
    let big_m = params.destinations;
    let n0 = params.initial_infected;
    let big_n = params.relays;
    let m_alpha = params.m_alpha();
    let k = params.total_nodes();
    let lambda = BigRational::from_float(params.lambda).unwrap();
    let gamma = BigRational::from_float(params.gamma).unwrap();

    let mut copy = Lattice::filled(params, false);
    let mut j_dest = Lattice::filled(params, BigRational::zero());
    let mut j_relay = Lattice::filled(params, BigRational::zero());

    let rat = |v: u32| BigRational::from_u32(v).unwrap();
    let delay = |mp: u32, np: u32| -> BigRational {
        if mp < m_alpha {
            (&lambda * rat(mp + np) * rat(k - mp - np)).recip()
        } else {
            BigRational::zero()
        }
    };
    let probs = |m: u32, n: u32| -> (BigRational, BigRational) {
        let susceptible = rat(k - m - n);
        (rat(big_m - m) / &susceptible, rat(big_n - n) / &susceptible)
    };

    for m in (0..big_m).rev() {
        for n in (n0..=big_n).rev() {
            let jd = if m + 1 == big_m {
                gamma.clone()
            } else {
                let (pd, pr) = probs(m + 1, n);
                &gamma
                    + delay(m + 1, n)
                    + pd * j_dest.get(m + 1, n)
                    + pr * j_relay.get(m + 1, n)
            };
            j_dest.set(m, n, jd.clone());

            let (pd, pr) = probs(m, n);
            let no_copy_value =
                (delay(m, n) + &pd * &jd) / (BigRational::from_u32(1).unwrap() - &pr);
            let (action, value) = if n < big_n {
                let (pd1, pr1) = probs(m, n + 1);
                let copy_value = &gamma
                    + delay(m, n + 1)
                    + pd1 * j_dest.get(m, n + 1)
                    + pr1 * j_relay.get(m, n + 1);
                if copy_value < no_copy_value {
                    (true, copy_value)
                } else {
                    (false, no_copy_value)
                }
            } else {
                (false, no_copy_value)
            };
            copy.set(m, n, action);
            j_relay.set(m, n, value);
        }
    }

    Ok(OracleSolution {
        copy,
        j_dest,
        j_relay,
    })
}

/// Lattice points at which the optimal policy copies at relay meetings.
pub fn policy_map(params: &NetworkParams) -> Vec<(u32, u32)> {
    let actions = relay_actions(&PolicySpec::OptimalClosedLoop, params)
        .expect("closed-loop policy is stationary");
    actions
        .iter()
        .filter_map(|(m, n, &copy)| copy.then_some((m, n)))
        .collect()
}

/// Per-m last relay count at which the optimal policy still copies; `None`
/// when the whole row is a stop row.
pub fn stop_boundary(params: &NetworkParams) -> Vec<Option<u32>> {
    let actions = relay_actions(&PolicySpec::OptimalClosedLoop, params)
        .expect("closed-loop policy is stationary");
    (0..params.destinations)
        .map(|m| {
            (params.initial_infected..=params.relays)
                .filter(|&n| *actions.get(m, n))
                .max()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Rational, TableEntry};
    use proptest::prelude::*;

    fn fig2_params() -> NetworkParams {
        NetworkParams::new(15, 50, 10, Rational::new(4, 5).unwrap(), 0.001, 1.0).unwrap()
    }

    fn small_params() -> NetworkParams {
        NetworkParams::new(4, 8, 2, Rational::new(4, 5).unwrap(), 0.05, 0.5).unwrap()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn phi_empty_sum_is_minus_gamma() {
        let p = fig2_params();
        for m in 12..15 {
            for n in [10, 30, 50] {
                assert_eq!(phi(m, n, &p), -1.0);
            }
        }
    }

    #[test]
    fn phi_fig2_boundary_values() {
        let p = fig2_params();
        // Frozen from exact rational summation of the Phi terms.
        assert!(rel_err(phi(5, 24, &p), 0.010730483050626348) < 1e-12);
        assert!(rel_err(phi(5, 25, &p), -0.04829721213734497) < 1e-12);
        assert!(phi(5, 24, &p) > 0.0 && phi(5, 25, &p) < 0.0);
        // The near-zero boundary state of the paper's text example.
        assert!(rel_err(phi(7, 19, &p), 0.07098393011312128) < 1e-12);
        assert!(rel_err(phi(7, 20, &p), -8.286901461857762e-5) < 1e-10);
    }

    #[test]
    fn phi_table_matches_pointwise_phi() {
        let p = fig2_params();
        let t = PhiTable::build(&p);
        for (m, n, &v) in t.values.iter() {
            assert!((v - phi(m, n, &p)).abs() <= 1e-14 * v.abs().max(1.0));
        }
    }

    #[test]
    fn optimal_action_examples() {
        let p = fig2_params();
        let st = |m, n, e| EpidemicState::new(m, n, Some(e));
        assert_eq!(
            optimal_action(&st(3, 20, MeetingKind::Destination), &p),
            Action::Copy
        );
        assert_eq!(
            optimal_action(&st(12, 30, MeetingKind::Relay), &p),
            Action::NoCopy
        );
        assert_eq!(
            optimal_action(&st(5, 24, MeetingKind::Relay), &p),
            Action::Copy
        );
        assert_eq!(
            optimal_action(&st(5, 25, MeetingKind::Relay), &p),
            Action::NoCopy
        );
    }

    #[test]
    fn fig2_stop_boundary_staircase() {
        let p = fig2_params();
        let boundary = stop_boundary(&p);
        // Frozen from exact rational evaluation of Phi.
        let expected: Vec<Option<u32>> = vec![
            Some(31),
            Some(30),
            Some(28),
            Some(27),
            Some(25),
            Some(24),
            Some(22),
            Some(19),
            Some(17),
            Some(14),
            Some(10),
            None,
            None,
            None,
            None,
        ];
        assert_eq!(boundary, expected);
        // Nonincreasing in m.
        let mut last = u32::MAX;
        for b in boundary.into_iter().flatten() {
            assert!(b <= last);
            last = b;
        }
    }

    #[test]
    fn phi_strictly_decreasing_below_m_alpha() {
        let p = fig2_params();
        let t = PhiTable::build(&p);
        let m_alpha = p.m_alpha();
        for m in 0..m_alpha {
            for n in 10..=50u32 {
                if m + 1 < m_alpha {
                    assert!(t.values.get(m + 1, n) < t.values.get(m, n));
                }
                if n < 50 {
                    assert!(t.values.get(m, n + 1) < t.values.get(m, n));
                }
            }
        }
    }

    #[test]
    fn stopping_set_is_absorbing() {
        let p = fig2_params();
        let t = PhiTable::build(&p);
        for (m, n, &v) in t.values.iter() {
            if v <= 0.0 {
                if m + 1 < p.destinations {
                    assert!(*t.values.get(m + 1, n) <= 0.0);
                }
                if n < p.relays {
                    assert!(*t.values.get(m, n + 1) <= 0.0);
                }
            }
        }
    }

    #[test]
    fn j1s_equals_j0s_shifted_plus_gamma() {
        // J_1s(m, n) = J_0s(m, n+1) + gamma on the stop-cost closed forms.
        let p = fig2_params();
        let m_alpha = p.m_alpha();
        let j0s = |m: u32, n: u32| -> f64 {
            (p.destinations - m) as f64 * p.gamma
                + (m..m_alpha)
                    .map(|j| {
                        1.0 / (p.lambda * (n + j) as f64 * (p.destinations - j) as f64)
                    })
                    .sum::<f64>()
        };
        let j1s = |m: u32, n: u32| -> f64 {
            (p.destinations - m + 1) as f64 * p.gamma
                + (m..m_alpha)
                    .map(|j| {
                        1.0 / (p.lambda * (n + j + 1) as f64 * (p.destinations - j) as f64)
                    })
                    .sum::<f64>()
        };
        for m in 0..m_alpha {
            for n in 10..50 {
                assert!(rel_err(j1s(m, n), j0s(m, n + 1) + p.gamma) < 1e-13);
                // Phi is exactly their difference.
                assert!((phi(m, n, &p) - (j0s(m, n) - j1s(m, n))).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn never_copy_delay_matches_closed_form() {
        let p = fig2_params();
        let table = evaluate_policy_exact(&PolicySpec::NeverCopy, &p).unwrap();
        let total = total_cost(&table);
        // Under never-copy the energy is exactly M destination copies.
        let delay = total - p.gamma * p.destinations as f64;
        let closed: f64 = (0..p.m_alpha())
            .map(|m| {
                1.0 / (p.lambda
                    * (m + p.initial_infected) as f64
                    * (p.destinations - m) as f64)
            })
            .sum();
        assert!(rel_err(delay, closed) < 1e-12);
    }

    #[test]
    fn optimal_value_at_stopping_states_matches_closed_form() {
        let p = fig2_params();
        let table = evaluate_policy_exact(&PolicySpec::OptimalClosedLoop, &p).unwrap();
        let m_alpha = p.m_alpha();
        for m in 0..m_alpha {
            for n in 10..=50u32 {
                if phi(m, n, &p) <= 0.0 {
                    let j0s = (p.destinations - m) as f64 * p.gamma
                        + (m..m_alpha)
                            .map(|j| {
                                1.0 / (p.lambda
                                    * (n + j) as f64
                                    * (p.destinations - j) as f64)
                            })
                            .sum::<f64>();
                    assert!(rel_err(*table.j_relay.get(m, n), j0s) < 1e-10);
                }
            }
        }
    }

    #[test]
    fn silent_region_cost_is_exact() {
        let p = fig2_params();
        let table = evaluate_policy_exact(&PolicySpec::OptimalClosedLoop, &p).unwrap();
        for m in p.m_alpha()..p.destinations {
            for n in 10..=50u32 {
                let expected = (p.destinations - m) as f64 * p.gamma;
                assert_eq!(*table.j_relay.get(m, n), expected);
            }
        }
    }

    #[test]
    fn total_cost_with_all_relays_infected() {
        // N0 = N: no susceptible relays, relay weight must be zero.
        let p = NetworkParams::new(4, 6, 6, Rational::new(1, 2).unwrap(), 0.05, 0.5).unwrap();
        let table = evaluate_policy_exact(&PolicySpec::OptimalClosedLoop, &p).unwrap();
        let total = total_cost(&table);
        let expected = 1.0 / (p.lambda * 6.0 * 4.0) + table.j_dest.get(0, 6);
        assert!(rel_err(total, expected) < 1e-14);
    }

    #[test]
    fn optimal_beats_always_copy() {
        let p = small_params();
        let opt = total_cost(&evaluate_policy_exact(&PolicySpec::OptimalClosedLoop, &p).unwrap());
        let always = total_cost(&evaluate_policy_exact(&PolicySpec::AlwaysCopy, &p).unwrap());
        let never = total_cost(&evaluate_policy_exact(&PolicySpec::NeverCopy, &p).unwrap());
        assert!(opt <= always + 1e-12);
        assert!(opt <= never + 1e-12);
    }

    #[test]
    fn oracle_agrees_with_theorem_policy() {
        let p = small_params();
        let oracle = brute_force_oracle(&p).unwrap();
        for (m, n, &copy) in oracle.copy.iter() {
            let want = optimal_action(
                &EpidemicState::new(m, n, Some(MeetingKind::Relay)),
                &p,
            ) == Action::Copy
                && n < p.relays;
            assert_eq!(copy, want, "mismatch at ({m}, {n})");
        }
        // No copying at relay meetings once the target is met.
        for m in p.m_alpha()..p.destinations {
            for n in 2..=8u32 {
                assert!(!*oracle.copy.get(m, n));
            }
        }
    }

    #[test]
    fn oracle_values_match_exact_evaluation() {
        let p = small_params();
        let oracle = brute_force_oracle(&p).unwrap();
        let table = evaluate_policy_exact(&PolicySpec::OptimalClosedLoop, &p).unwrap();
        for (m, n, _) in oracle.copy.iter() {
            assert!(rel_err(*table.j_dest.get(m, n), oracle.j_dest_f64(m, n)) < 1e-10);
            assert!(rel_err(*table.j_relay.get(m, n), oracle.j_relay_f64(m, n)) < 1e-10);
        }
    }

    #[test]
    fn table_policy_reproduces_optimal_values() {
        let p = small_params();
        let actions = relay_actions(&PolicySpec::OptimalClosedLoop, &p).unwrap();
        let entries: Vec<TableEntry> = actions
            .iter()
            .map(|(m, n, &copy)| TableEntry { m, n, copy })
            .collect();
        let via_table =
            evaluate_policy_exact(&PolicySpec::Table { entries }, &p).unwrap();
        let oracle = brute_force_oracle(&p).unwrap();
        let n0 = p.initial_infected;
        assert!(rel_err(*via_table.j_relay.get(0, n0), oracle.j_relay_f64(0, n0)) < 1e-10);
        assert!(rel_err(*via_table.j_dest.get(0, n0), oracle.j_dest_f64(0, n0)) < 1e-10);
    }

    #[test]
    fn oracle_size_guard() {
        let p = fig2_params();
        assert!(matches!(
            brute_force_oracle(&p),
            Err(PolicyError::InstanceTooLarge { .. })
        ));
    }

    #[test]
    fn open_loop_policy_is_not_stationary() {
        let p = small_params();
        assert!(matches!(
            evaluate_policy_exact(&PolicySpec::OpenLoopThreshold { threshold: 1.0 }, &p),
            Err(PolicyError::NonStationaryPolicy)
        ));
    }

    #[test]
    fn policy_map_copy_region() {
        let p = fig2_params();
        let map = policy_map(&p);
        let row5: Vec<u32> = map.iter().filter(|(m, _)| *m == 5).map(|&(_, n)| n).collect();
        assert_eq!(row5, (10..=24).collect::<Vec<_>>());
        assert!(map.iter().all(|&(m, _)| m < 12));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn staircase_boundary_random_instances(
            m in 2u32..=6,
            n in 3u32..=10,
            n0 in 1u32..=3,
            lambda in 0.01f64..0.5,
            gamma in 0.05f64..5.0,
        ) {
            prop_assume!(n0 <= n);
            let p = NetworkParams::new(m, n, n0, Rational::new(4, 5).unwrap(), lambda, gamma)
                .unwrap();
            let boundary = stop_boundary(&p);
            let mut last = u32::MAX;
            for b in boundary.into_iter().flatten() {
                prop_assert!(b <= last);
                last = b;
            }
        }
    }
}
