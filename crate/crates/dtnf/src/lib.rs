//! Optimal packet forwarding in a delay tolerant network with many
//! destinations.
//!
//! A source must deliver a packet to a fraction `alpha` of `M`
//! destinations, assisted by `N` relays, paying `gamma` per copy made.
//! The crate provides:
//!
//! - the exact optimal copy/no-copy policy of the underlying Markov
//!   decision process and its index `Phi(m, n)` ([`policy`]),
//! - exact policy evaluation and a brute-force dynamic-programming oracle
//!   in rational arithmetic ([`policy`]),
//! - the fluid (mean-field) limit: the index `phi(x, y)`, controlled ODE
//!   integration with stopping-time detection, fluid costs, and a
//!   threshold-sweep verification of the optimal open-loop stopping time
//!   ([`fluid`]),
//! - an exact stochastic simulator for the finite network under any of
//!   the supported policies, with parallel Monte Carlo aggregation
//!   ([`sim`]).

pub mod experiments;
pub mod fluid;
pub mod lattice;
pub mod model;
pub mod policy;
pub mod sim;

pub use fluid::{FluidConfig, FluidSolution, RelayMode};
pub use model::{NetworkParams, PolicySpec, Rational, ScaledParams};
pub use policy::{brute_force_oracle, evaluate_policy_exact, phi, total_cost, PhiTable};
pub use sim::{monte_carlo, simulate, PreparedPolicy, RunReport, SimConfig, SummaryStats};
