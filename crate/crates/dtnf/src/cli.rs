//! Experiment recipes behind the `dtnf` binary: reproducible CSV/JSON
//! outputs for the policy map, fluid solutions, trajectory convergence,
//! cost comparisons, two-hop comparison, and the dynamic-programming
//! oracle check.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

use dtnf::experiments::{convergence_table, cost_cell};
use dtnf::fluid::{self, FluidConfig, RelayMode};
use dtnf::model::{NetworkParams, ParamsFile, PolicySpec, Rational, ScaledParams};
use dtnf::policy;
use dtnf::sim::{self, PreparedPolicy, SimConfig, SummaryStats};

#[derive(Parser)]
#[command(
    name = "dtnf",
    about = "Optimal forwarding in delay tolerant networks with multiple destinations",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    recipe: Recipe,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// JSON parameter file: {"M", "N", "N0", "alpha", "lambda", "gamma",
    /// "seed"} for a finite network, or {"X", "Y0", "alpha", "Lambda",
    /// "Gamma", "K"} for a scaled one.
    #[arg(long)]
    config: Option<PathBuf>,
    /// RNG seed (overrides the config file).
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo replications per cell.
    #[arg(long, default_value_t = 100)]
    reps: u32,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long, value_enum, default_value_t = Mode::Epidemic)]
    mode: Mode,
    /// Omit the generation timestamp from output headers so reruns are
    /// byte-identical.
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Epidemic,
    TwoHop,
}

impl From<Mode> for RelayMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Epidemic => RelayMode::Epidemic,
            Mode::TwoHop => RelayMode::TwoHop,
        }
    }
}

#[derive(Subcommand)]
enum Recipe {
    /// Emit the copy/no-copy lattice and the per-m stop boundary.
    PolicyMap(CommonArgs),
    /// Integrate the fluid dynamics and report tau_star, tau, and cost.
    FluidRun(CommonArgs),
    /// Compare scaled stochastic trajectories against the fluid solution
    /// across network sizes.
    Converge {
        #[command(flatten)]
        common: CommonArgs,
        /// Network sizes to compare.
        #[arg(long, value_delimiter = ',', default_values_t = vec![100u32, 200, 500])]
        k: Vec<u32>,
    },
    /// Compare the exact optimal policy against the fluid open-loop
    /// policy over a (lambda, K) grid.
    CostCompare {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_delimiter = ',', default_values_t = vec![50u32, 100, 200])]
        k: Vec<u32>,
        /// Per-pair meeting rates to sweep.
        #[arg(long = "lambda", value_delimiter = ',', default_values_t = vec![5e-5, 5e-4, 5e-3, 5e-2])]
        lambda: Vec<f64>,
    },
    /// Compare epidemic and two-hop relaying on the same instance.
    TwohopCompare(CommonArgs),
    /// Check the closed-form optimal policy and its exact evaluation
    /// against an exhaustive dynamic-programming oracle.
    OracleCheck(CommonArgs),
}

pub fn run() -> Result<()> {
    if let Ok(threads) = std::env::var("DTNF_THREADS") {
        let threads: usize = threads
            .parse()
            .with_context(|| format!("DTNF_THREADS must be an integer, got {threads:?}"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .ok();
    }
    match Cli::parse().recipe {
        Recipe::PolicyMap(c) => policy_map(&c),
        Recipe::FluidRun(c) => fluid_run(&c),
        Recipe::Converge { common, k } => converge(&common, &k),
        Recipe::CostCompare { common, k, lambda } => cost_compare(&common, &k, &lambda),
        Recipe::TwohopCompare(c) => twohop_compare(&c),
        Recipe::OracleCheck(c) => oracle_check(&c),
    }
}

/// Parameters resolved from config file + flags, in both finite and
/// scaled form where derivable.
struct Resolved {
    finite: Option<NetworkParams>,
    scaled: ScaledParams,
    seed: u64,
}

#[derive(Deserialize)]
struct ScaledFile {
    #[serde(rename = "X")]
    x: f64,
    #[serde(rename = "Y0")]
    y0: f64,
    alpha: Rational,
    #[serde(rename = "Lambda")]
    lambda: f64,
    #[serde(rename = "Gamma")]
    gamma: f64,
    #[serde(rename = "K", default)]
    k: Option<u32>,
    #[serde(default)]
    seed: Option<u64>,
}

fn resolve(common: &CommonArgs, default_finite: Option<NetworkParams>) -> Result<Resolved> {
    let mut finite = default_finite;
    let mut scaled = None;
    let mut seed = 0u64;
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        if let Ok(pf) = ParamsFile::from_json(&text) {
            seed = pf.seed.unwrap_or(seed);
            finite = Some(pf.params);
        } else {
            let sf: ScaledFile = serde_json::from_str(&text)
                .with_context(|| format!("config {} is neither a finite-network nor a scaled parameter file", path.display()))?;
            seed = sf.seed.unwrap_or(seed);
            let s = ScaledParams::fluid(
                sf.k.unwrap_or(100),
                sf.x,
                sf.y0,
                sf.alpha,
                sf.lambda,
                sf.gamma,
            )?;
            finite = None;
            scaled = Some(s);
        }
    }
    let scaled = match (&finite, scaled) {
        (Some(p), _) => p.scale(),
        (None, Some(s)) => s,
        (None, None) => bail!("no parameters: pass --config"),
    };
    Ok(Resolved {
        finite,
        scaled,
        seed: common.seed.unwrap_or(seed),
    })
}

fn require_finite(r: &Resolved) -> Result<NetworkParams> {
    match &r.finite {
        Some(p) => Ok(*p),
        None => r
            .scaled
            .unscale()
            .context("this recipe needs a finite network; scaled parameters do not land on an integer lattice"),
    }
}

// Output plumbing: every file starts with `#` provenance lines echoing
// the resolved configuration; the timestamp line is suppressed by
// --no-timestamp so reruns are byte-identical.
struct Output<'a> {
    common: &'a CommonArgs,
    provenance: Vec<String>,
}

impl<'a> Output<'a> {
    fn new(common: &'a CommonArgs, recipe: &str, resolved_json: serde_json::Value) -> Self {
        let mut provenance = vec![
            format!("recipe={recipe}"),
            format!("resolved={resolved_json}"),
        ];
        if !common.no_timestamp {
            let now = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            provenance.push(format!("generated_unix={now}"));
        }
        Self { common, provenance }
    }

    fn path(&self, stem: &str) -> PathBuf {
        let ext = match self.common.format {
            Format::Csv => "csv",
            Format::Json => "json",
        };
        self.common.out.join(format!("{stem}.{ext}"))
    }

    fn write_table(&self, stem: &str, header: &str, rows: &[String]) -> Result<PathBuf> {
        let path = self.path(stem);
        let body = match self.common.format {
            Format::Csv => {
                let mut s = String::new();
                for line in &self.provenance {
                    writeln!(s, "# {line}")?;
                }
                writeln!(s, "{header}")?;
                for row in rows {
                    writeln!(s, "{row}")?;
                }
                s
            }
            Format::Json => {
                let cols: Vec<&str> = header.split(',').collect();
                let records: Vec<serde_json::Value> = rows
                    .iter()
                    .map(|row| {
                        let obj: serde_json::Map<String, serde_json::Value> = cols
                            .iter()
                            .zip(row.split(','))
                            .map(|(c, v)| {
                                let val = v
                                    .parse::<f64>()
                                    .map(|f| json!(f))
                                    .unwrap_or_else(|_| json!(v));
                                (c.to_string(), val)
                            })
                            .collect();
                        serde_json::Value::Object(obj)
                    })
                    .collect();
                let doc = json!({ "provenance": self.provenance, "rows": records });
                serde_json::to_string_pretty(&doc)? + "\n"
            }
        };
        write_file(&path, &body)?;
        Ok(path)
    }

    fn write_summary(&self, stem: &str, summary: serde_json::Value) -> Result<PathBuf> {
        let path = self.common.out.join(format!("{stem}.json"));
        let doc = json!({ "provenance": self.provenance, "summary": summary });
        write_file(&path, &(serde_json::to_string_pretty(&doc)? + "\n"))?;
        Ok(path)
    }
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    }
    fs::write(path, body).with_context(|| format!("cannot write {}", path.display()))
}

fn fig2_defaults() -> NetworkParams {
    NetworkParams::new(15, 50, 10, Rational::new(4, 5).unwrap(), 0.001, 1.0).unwrap()
}

fn policy_map(common: &CommonArgs) -> Result<()> {
    let r = resolve(common, Some(fig2_defaults()))?;
    let params = require_finite(&r)?;
    let out = Output::new(common, "policy-map", json!({ "params": params }));

    let mut rows = Vec::new();
    for m in 0..params.destinations {
        for n in params.initial_infected..=params.relays {
            let action = if policy::phi_is_positive(m, n, &params) {
                "copy"
            } else {
                "no-copy"
            };
            rows.push(format!("{m},{n},{action}"));
        }
    }
    let path = out.write_table("policy_map", "m,n,action", &rows)?;

    let boundary = policy::stop_boundary(&params);
    println!("stop boundary (last relay count at which copying is optimal):");
    for (m, last) in boundary.iter().enumerate() {
        match last {
            Some(n) => println!("m={m} → last-copy n={n}"),
            None => println!("m={m} → never copy"),
        }
    }
    println!("policy map written to {}", path.display());
    Ok(())
}

fn fluid_run(common: &CommonArgs) -> Result<()> {
    let r = resolve(common, None)?;
    let scaled = r.scaled;
    let mode: RelayMode = common.mode.into();
    let out = Output::new(common, "fluid-run", json!({ "scaled": scaled, "mode": mode }));

    let sol = fluid::integrate(&scaled, mode, &FluidConfig::default())?;
    let stride = (sol.samples.len() / 2000).max(1);
    let mut rows: Vec<String> = sol
        .samples
        .iter()
        .step_by(stride)
        .map(|s| format!("{},{},{},{},{mode}", s.t, s.x, s.y, s.phi))
        .collect();
    let last = sol.samples.last().expect("nonempty");
    if (sol.samples.len() - 1) % stride != 0 {
        rows.push(format!("{},{},{},{},{mode}", last.t, last.x, last.y, last.phi));
    }
    let traj = out.write_table("fluid_trajectory", "t,x,y,phi,mode", &rows)?;

    let cost = sol.cost();
    let summary = out.write_summary(
        "fluid_summary",
        json!({
            "tau_star": sol.tau_star,
            "tau": sol.tau,
            "y_tau_star": sol.y_tau_star,
            "fluid_cost": cost.total,
            "relay_energy": cost.relay_energy,
            "dest_energy": cost.dest_energy,
            "mode": mode,
        }),
    )?;
    println!(
        "tau_star={} tau={} y(tau_star)={} cost={}",
        sol.tau_star, sol.tau, sol.y_tau_star, cost.total
    );
    println!("wrote {} and {}", traj.display(), summary.display());
    Ok(())
}

fn converge(common: &CommonArgs, k_list: &[u32]) -> Result<()> {
    let r = resolve(common, None)?;
    let mode: RelayMode = common.mode.into();
    let out = Output::new(
        common,
        "converge",
        json!({ "scaled": r.scaled, "k": k_list, "reps": common.reps, "seed": r.seed, "mode": mode }),
    );
    let table = convergence_table(&r.scaled, k_list, mode, common.reps, r.seed)?;
    let rows: Vec<String> = table
        .iter()
        .map(|row| {
            format!(
                "{},{},{},{},{},{}",
                row.k, row.reps, row.median_sup, row.median_tau_gap, row.fluid_tau, row.fluid_tau_star
            )
        })
        .collect();
    let path = out.write_table(
        "convergence",
        "K,reps,median_sup_deviation,median_tau_gap,fluid_tau,fluid_tau_star",
        &rows,
    )?;
    for row in &table {
        println!(
            "K={}: median sup deviation {}, median |tau^K - tau| {}",
            row.k, row.median_sup, row.median_tau_gap
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn default_scaled_grid_base() -> ScaledParams {
    // X = 0.2, Y = 0.8, Y0 = 0.2, alpha = 4/5, gamma = 0.5 per node.
    ScaledParams::fluid(100, 0.2, 0.2, Rational::new(4, 5).unwrap(), 1.0, 50.0).unwrap()
}

fn cost_compare(common: &CommonArgs, k_list: &[u32], lambdas: &[f64]) -> Result<()> {
    let r = if common.config.is_some() {
        resolve(common, None)?
    } else {
        Resolved {
            finite: None,
            scaled: default_scaled_grid_base(),
            seed: common.seed.unwrap_or(0),
        }
    };
    let mode: RelayMode = common.mode.into();
    let out = Output::new(
        common,
        "cost-compare",
        json!({ "scaled": r.scaled, "k": k_list, "lambda": lambdas, "reps": common.reps, "seed": r.seed, "mode": mode }),
    );

    let mut rows = Vec::new();
    for &lambda in lambdas {
        for &k in k_list {
            let cell = cost_cell(&r.scaled, lambda, k, mode, common.reps, r.seed)?;
            rows.push(format!(
                "{lambda},{k},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                cell.exact_mdp_cost,
                cell.optimal_cost.mean,
                cell.optimal_cost.ci95_half_width,
                cell.optimal_delay.mean,
                cell.optimal_delay.ci95_half_width,
                cell.optimal_copies.mean,
                cell.open_loop_cost.mean,
                cell.open_loop_cost.ci95_half_width,
                cell.open_loop_delay.mean,
                cell.open_loop_delay.ci95_half_width,
                cell.open_loop_copies.mean,
                cell.tau_star,
                cell.fluid_cost,
                (cell.open_loop_cost.mean - cell.optimal_cost.mean) / cell.optimal_cost.mean,
            ));
        }
    }
    let path = out.write_table(
        "cost_compare",
        "lambda,K,exact_mdp_cost,opt_cost,opt_cost_ci,opt_delay,opt_delay_ci,opt_copies,open_cost,open_cost_ci,open_delay,open_delay_ci,open_copies,tau_star,fluid_cost,relative_gap",
        &rows,
    )?;
    println!("wrote {}", path.display());
    Ok(())
}

fn twohop_compare(common: &CommonArgs) -> Result<()> {
    let r = resolve(common, None)?;
    let out = Output::new(
        common,
        "twohop-compare",
        json!({ "scaled": r.scaled, "reps": common.reps, "seed": r.seed }),
    );
    let mut rows = Vec::new();
    for mode in [RelayMode::Epidemic, RelayMode::TwoHop] {
        let sol = fluid::integrate(&r.scaled, mode, &FluidConfig::default())?;
        let (copies, delay) = match r.scaled.unscale() {
            Ok(params) => {
                let policy = PreparedPolicy::new(
                    &PolicySpec::OpenLoopThreshold {
                        threshold: sol.tau_star,
                    },
                    &params,
                )?;
                let cfg = SimConfig {
                    mode,
                    record_events: false,
                };
                let reports = sim::monte_carlo(&params, &policy, &cfg, common.reps, r.seed);
                let copies: Vec<f64> =
                    reports.iter().map(|x| f64::from(x.relay_copies)).collect();
                let delays: Vec<f64> = reports.iter().map(|x| x.delivery_time).collect();
                (
                    SummaryStats::from_samples(&copies).mean,
                    SummaryStats::from_samples(&delays).mean,
                )
            }
            Err(_) => (f64::NAN, f64::NAN),
        };
        rows.push(format!(
            "{mode},{},{},{},{},{},{}",
            sol.tau_star,
            sol.tau,
            sol.y_tau_star,
            sol.cost().total,
            copies,
            delay
        ));
        println!(
            "{mode}: tau_star={} tau={} y(tau_star)={} fluid_cost={} mc_copies={copies} mc_delay={delay}",
            sol.tau_star,
            sol.tau,
            sol.y_tau_star,
            sol.cost().total
        );
    }
    let path = out.write_table(
        "twohop_compare",
        "mode,tau_star,tau,y_tau_star,fluid_cost,mc_mean_relay_copies,mc_mean_delay",
        &rows,
    )?;
    println!("wrote {}", path.display());
    Ok(())
}

fn oracle_check(common: &CommonArgs) -> Result<()> {
    let small_default =
        NetworkParams::new(4, 8, 2, Rational::new(4, 5).unwrap(), 0.05, 0.5).unwrap();
    let r = resolve(common, Some(small_default))?;
    let params = require_finite(&r)?;
    let out = Output::new(common, "oracle-check", json!({ "params": params }));

    let oracle = policy::brute_force_oracle(&params)?;
    let closed = policy::relay_actions(&PolicySpec::OptimalClosedLoop, &params)?;
    let table = policy::evaluate_policy_exact(&PolicySpec::OptimalClosedLoop, &params)?;

    let mut policy_mismatches = 0u32;
    let mut max_gap = 0.0f64;
    let mut rows = Vec::new();
    for m in 0..params.destinations {
        for n in params.initial_infected..=params.relays {
            let want = *oracle.copy.get(m, n) && n < params.relays;
            let got = *closed.get(m, n) && n < params.relays;
            if want != got {
                policy_mismatches += 1;
            }
            let jd = *table.j_dest.get(m, n);
            let jr = *table.j_relay.get(m, n);
            max_gap = max_gap
                .max((jd - oracle.j_dest_f64(m, n)).abs())
                .max((jr - oracle.j_relay_f64(m, n)).abs());
            rows.push(format!("{m},{n},{jd},{jr}"));
        }
    }
    let path = out.write_table("cost_table", "m,n,J_d,J_r", &rows)?;
    out.write_summary(
        "oracle_check",
        json!({
            "policy_mismatches": policy_mismatches,
            "max_value_gap": max_gap,
            "exact_total_cost": policy::total_cost(&table),
        }),
    )?;
    println!(
        "policy mismatches: {policy_mismatches}; max value gap: {max_gap}; wrote {}",
        path.display()
    );
    if policy_mismatches > 0 || max_gap > 1e-9 {
        bail!("oracle disagreement: {policy_mismatches} policy mismatches, max value gap {max_gap}");
    }
    Ok(())
}
