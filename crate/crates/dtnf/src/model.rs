//! Problem parameters, the state lattice, and the scaling map between the
//! finite network and its fluid-limit description.
//!
//! The finite network has `M` destinations, `N` relays of which `N0` start
//! infected, pairwise meeting rate `lambda`, and copy cost `gamma`. The fluid
//! description works with fractions of the total population `K = M + N` and
//! the aggregate rate `Lambda = lambda * K` and cost `Gamma = gamma * K`.
//!
//! The target fraction `alpha` is stored as an exact rational so that the
//! stopping target `M_alpha = ceil(alpha * M)` is computed with integer
//! arithmetic and is bit-exact across modules.

use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("M must be >= 1")]
    NoDestinations,
    #[error("N must be >= 1")]
    NoRelays,
    #[error("N0 must satisfy 1 <= N0 <= N, got N0={n0}, N={n}")]
    BadInitialInfected { n0: u32, n: u32 },
    #[error("alpha must be > 0, got {0}")]
    AlphaNotPositive(Rational),
    #[error("alpha must be < 1, got {0}")]
    AlphaNotBelowOne(Rational),
    #[error("lambda must be > 0, got {0}")]
    BadMeetingRate(f64),
    #[error("gamma must be >= 0 and finite, got {0}")]
    BadCopyCost(f64),
    #[error("invalid rational: {0}")]
    BadRational(String),
    #[error("scaled fractions must satisfy X + Y = 1, got X={x}, Y={y}")]
    FractionsDoNotSum { x: f64, y: f64 },
    #[error("Y0 must satisfy 0 < Y0 <= Y, got Y0={y0}, Y={y}")]
    BadInitialFraction { y0: f64, y: f64 },
    #[error("K * {field} = {value} is not an integer; cannot recover the finite network")]
    NotOnLattice { field: &'static str, value: f64 },
    #[error("all nodes are infected; no meeting can occur at (m={m}, n={n})")]
    AllInfected { m: u32, n: u32 },
    #[error("state out of range: m={m} (M={m_max}), n={n} (allowed [{n_min}, {n_max}])")]
    StateOutOfRange {
        m: u32,
        m_max: u32,
        n: u32,
        n_min: u32,
        n_max: u32,
    },
    #[error("open-loop threshold must be >= 0 and finite, got {0}")]
    BadThreshold(f64),
    #[error("policy table leaves state (m={m}, n={n}) undefined")]
    TableIncomplete { m: u32, n: u32 },
}

/// Exact nonnegative rational, used for the target fraction `alpha`.
///
/// Parses either `"4/5"` or a finite decimal such as `"0.8"`; both yield the
/// exact rational 4/5 with no float rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rational {
    num: u64,
    den: u64,
}

impl Rational {
    pub fn new(num: u64, den: u64) -> Result<Self, ModelError> {
        if den == 0 {
            return Err(ModelError::BadRational(format!("{num}/0")));
        }
        let g = gcd(num.max(1), den);
        Ok(Self {
            num: num / g,
            den: den / g,
        })
    }

    pub fn numer(&self) -> u64 {
        self.num
    }

    pub fn denom(&self) -> u64 {
        self.den
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }

    /// `ceil(self * k)` in pure integer arithmetic.
    pub fn ceil_mul(&self, k: u32) -> u64 {
        let prod = self.num as u128 * k as u128;
        prod.div_ceil(self.den as u128) as u64
    }

    fn lt_one(&self) -> bool {
        self.num < self.den
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Rational {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, ModelError> {
        let s = s.trim();
        if let Some((a, b)) = s.split_once('/') {
            let num = a
                .trim()
                .parse::<u64>()
                .map_err(|_| ModelError::BadRational(s.to_string()))?;
            let den = b
                .trim()
                .parse::<u64>()
                .map_err(|_| ModelError::BadRational(s.to_string()))?;
            return Rational::new(num, den);
        }
        // Finite decimal, e.g. "0.8" -> 8/10.
        let (int_part, frac_part) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if frac_part.len() > 18 {
            return Err(ModelError::BadRational(s.to_string()));
        }
        let int: u64 = if int_part.is_empty() {
            0
        } else {
            int_part
                .parse()
                .map_err(|_| ModelError::BadRational(s.to_string()))?
        };
        let frac: u64 = if frac_part.is_empty() {
            0
        } else {
            frac_part
                .parse()
                .map_err(|_| ModelError::BadRational(s.to_string()))?
        };
        let den = 10u64.pow(frac_part.len() as u32);
        let num = int
            .checked_mul(den)
            .and_then(|v| v.checked_add(frac))
            .ok_or_else(|| ModelError::BadRational(s.to_string()))?;
        Rational::new(num, den)
    }
}

impl TryFrom<f64> for Rational {
    type Error = ModelError;

    /// Goes through the shortest decimal representation, so `0.8_f64` becomes
    /// exactly 4/5 rather than the binary expansion of the nearest double.
    fn try_from(v: f64) -> Result<Self, ModelError> {
        if !v.is_finite() || v < 0.0 {
            return Err(ModelError::BadRational(v.to_string()));
        }
        format!("{v}").parse()
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Str(String),
            Num(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Str(s) => s.parse().map_err(D::Error::custom),
            Raw::Num(v) => Rational::try_from(v).map_err(D::Error::custom),
        }
    }
}

/// Finite-network description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    /// Number of destinations M.
    #[serde(rename = "M")]
    pub destinations: u32,
    /// Number of relays N.
    #[serde(rename = "N")]
    pub relays: u32,
    /// Relays infected at t = 0.
    #[serde(rename = "N0")]
    pub initial_infected: u32,
    /// Target fraction of destinations, 0 < alpha < 1.
    pub alpha: Rational,
    /// Pairwise meeting rate (1/time).
    pub lambda: f64,
    /// Energy-to-delay conversion (time per copy).
    pub gamma: f64,
}

impl NetworkParams {
    pub fn new(
        destinations: u32,
        relays: u32,
        initial_infected: u32,
        alpha: Rational,
        lambda: f64,
        gamma: f64,
    ) -> Result<Self, ModelError> {
        Self {
            destinations,
            relays,
            initial_infected,
            alpha,
            lambda,
            gamma,
        }
        .validate()
    }

    pub fn validate(self) -> Result<Self, ModelError> {
        if self.destinations == 0 {
            return Err(ModelError::NoDestinations);
        }
        if self.relays == 0 {
            return Err(ModelError::NoRelays);
        }
        if self.initial_infected == 0 || self.initial_infected > self.relays {
            return Err(ModelError::BadInitialInfected {
                n0: self.initial_infected,
                n: self.relays,
            });
        }
        if self.alpha.is_zero() {
            return Err(ModelError::AlphaNotPositive(self.alpha));
        }
        if !self.alpha.lt_one() {
            return Err(ModelError::AlphaNotBelowOne(self.alpha));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(ModelError::BadMeetingRate(self.lambda));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(ModelError::BadCopyCost(self.gamma));
        }
        debug_assert!(self.m_alpha() >= 1 && self.m_alpha() <= self.destinations);
        Ok(self)
    }

    /// `M_alpha = ceil(alpha * M)`, the delivery target.
    pub fn m_alpha(&self) -> u32 {
        self.alpha.ceil_mul(self.destinations) as u32
    }

    /// Total node count `K = M + N`.
    pub fn total_nodes(&self) -> u32 {
        self.destinations + self.relays
    }

    /// Fluid-limit description of this network.
    pub fn scale(&self) -> ScaledParams {
        let k = self.total_nodes();
        let kf = k as f64;
        ScaledParams {
            k,
            x: self.destinations as f64 / kf,
            y: self.relays as f64 / kf,
            y0: self.initial_infected as f64 / kf,
            x_alpha: self.alpha.as_f64() * self.destinations as f64 / kf,
            alpha: self.alpha,
            lambda: self.lambda * kf,
            gamma: self.gamma * kf,
        }
    }
}

/// Fluid-limit description: fractions of `K` nodes, with aggregate meeting
/// rate `Lambda = lambda * K` and copy cost `Gamma = gamma * K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledParams {
    #[serde(rename = "K")]
    pub k: u32,
    /// Destination fraction X = M/K.
    #[serde(rename = "X")]
    pub x: f64,
    /// Relay fraction Y = N/K.
    #[serde(rename = "Y")]
    pub y: f64,
    /// Initially infected relay fraction Y0 = N0/K.
    #[serde(rename = "Y0")]
    pub y0: f64,
    /// Delivery target X_alpha = alpha * M / K.
    #[serde(rename = "X_alpha")]
    pub x_alpha: f64,
    pub alpha: Rational,
    /// Aggregate meeting rate Lambda.
    #[serde(rename = "Lambda")]
    pub lambda: f64,
    /// Scaled copy cost Gamma.
    #[serde(rename = "Gamma")]
    pub gamma: f64,
}

impl ScaledParams {
    /// Fluid-only constructor: checks the fraction invariants but not the
    /// integrality of `K * X` and `K * Y0`.
    pub fn fluid(
        k: u32,
        x: f64,
        y0: f64,
        alpha: Rational,
        lambda: f64,
        gamma: f64,
    ) -> Result<Self, ModelError> {
        let s = Self {
            k,
            x,
            y: 1.0 - x,
            y0,
            x_alpha: alpha.as_f64() * x,
            alpha,
            lambda,
            gamma,
        };
        s.validate_fractions()?;
        Ok(s)
    }

    pub fn validate_fractions(&self) -> Result<(), ModelError> {
        if ((self.x + self.y) - 1.0).abs() > 1e-12 {
            return Err(ModelError::FractionsDoNotSum {
                x: self.x,
                y: self.y,
            });
        }
        if !(self.y0 > 0.0) || self.y0 > self.y + 1e-12 {
            return Err(ModelError::BadInitialFraction {
                y0: self.y0,
                y: self.y,
            });
        }
        if self.alpha.is_zero() {
            return Err(ModelError::AlphaNotPositive(self.alpha));
        }
        if !self.alpha.lt_one() {
            return Err(ModelError::AlphaNotBelowOne(self.alpha));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(ModelError::BadMeetingRate(self.lambda));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(ModelError::BadCopyCost(self.gamma));
        }
        Ok(())
    }

    /// Recovers the finite network; fails if `K * X` or `K * Y0` is not an
    /// integer.
    pub fn unscale(&self) -> Result<NetworkParams, ModelError> {
        let kf = self.k as f64;
        let m = round_integer(self.x * kf).ok_or(ModelError::NotOnLattice {
            field: "X",
            value: self.x * kf,
        })?;
        let n0 = round_integer(self.y0 * kf).ok_or(ModelError::NotOnLattice {
            field: "Y0",
            value: self.y0 * kf,
        })?;
        NetworkParams::new(
            m,
            self.k - m,
            n0,
            self.alpha,
            self.lambda / kf,
            self.gamma / kf,
        )
    }
}

fn round_integer(v: f64) -> Option<u32> {
    let r = v.round();
    if (v - r).abs() < 1e-9 * v.abs().max(1.0) && r >= 0.0 && r <= u32::MAX as f64 {
        Some(r as u32)
    } else {
        None
    }
}

/// Type of susceptible node met at a decision epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeetingKind {
    Destination,
    Relay,
}

/// Lattice point (m, n), optionally tagged with the meeting type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpidemicState {
    /// Infected destinations, 0 <= m <= M.
    pub m: u32,
    /// Infected relays, N0 <= n <= N.
    pub n: u32,
    pub meeting: Option<MeetingKind>,
}

impl EpidemicState {
    pub fn new(m: u32, n: u32, meeting: Option<MeetingKind>) -> Self {
        Self { m, n, meeting }
    }

    pub fn check(&self, params: &NetworkParams) -> Result<(), ModelError> {
        if self.m > params.destinations
            || self.n < params.initial_infected
            || self.n > params.relays
        {
            return Err(ModelError::StateOutOfRange {
                m: self.m,
                m_max: params.destinations,
                n: self.n,
                n_min: params.initial_infected,
                n_max: params.relays,
            });
        }
        Ok(())
    }

    /// Scaled coordinates (x, y) = (m/K, n/K).
    pub fn scaled(&self, k: u32) -> (f64, f64) {
        (self.m as f64 / k as f64, self.n as f64 / k as f64)
    }
}

/// Probability that the susceptible node met from state (m, n) is a
/// destination / a relay. Errors if every node is already infected.
pub fn meeting_probabilities(
    m: u32,
    n: u32,
    params: &NetworkParams,
) -> Result<(f64, f64), ModelError> {
    let total = params.total_nodes();
    if m + n >= total {
        return Err(ModelError::AllInfected { m, n });
    }
    let susceptible = (total - m - n) as f64;
    let p_dest = (params.destinations - m) as f64 / susceptible;
    let p_relay = (params.relays - n) as f64 / susceptible;
    Ok((p_dest, p_relay))
}

/// Forwarding policy for relay meetings; destinations are always copied to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PolicySpec {
    /// Threshold policy of the finite-network MDP: copy iff Phi(m, n) > 0.
    OptimalClosedLoop,
    /// Copy iff the current time is at most the threshold.
    OpenLoopThreshold { threshold: f64 },
    AlwaysCopy,
    NeverCopy,
    /// Explicit relay-meeting action per lattice point.
    Table { entries: Vec<TableEntry> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub m: u32,
    pub n: u32,
    pub copy: bool,
}

impl PolicySpec {
    pub fn validate(&self, params: &NetworkParams) -> Result<(), ModelError> {
        match self {
            PolicySpec::OpenLoopThreshold { threshold } => {
                if !(*threshold >= 0.0) || !threshold.is_finite() {
                    return Err(ModelError::BadThreshold(*threshold));
                }
            }
            PolicySpec::Table { entries } => {
                // Every lattice point must be covered; full tabulation is the
                // coverage contract, not just policy-reachable states.
                for m in 0..params.destinations {
                    for n in params.initial_infected..=params.relays {
                        if !entries.iter().any(|e| e.m == m && e.n == n) {
                            return Err(ModelError::TableIncomplete { m, n });
                        }
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// JSON-compatible parameter file: keys M, N, N0, alpha, lambda, gamma, seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsFile {
    #[serde(flatten)]
    pub params: NetworkParams,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl ParamsFile {
    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}
