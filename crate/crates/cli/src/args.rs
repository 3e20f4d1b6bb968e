//! Command line flags. Every subcommand's flags can also come from a JSON
//! object with the same (kebab-case) keys; flags given on the command line win.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use csg::bench::ProblemKind;

#[derive(Parser, Debug)]
#[command(name = "csg-bench", version, about = "Continuous stochastic gradient experiments")]
pub struct Cli {
    /// JSON file with values for the subcommand's flags
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Convergence rates on the quadratic test problems
    Rates(RatesArgs),
    /// Optimize the paint design, or estimate the objective at a fixed design
    Paint(PaintArgs),
    /// Projected gradient descent on a prediscretized paint objective
    Baseline(BaselineArgs),
    /// Objective estimate series at a fixed paint design
    Estimate(EstimateArgs),
}

macro_rules! overlay {
    ($cli:expr, $file:expr; $($field:ident),* $(,)?) => {
        $( if $cli.$field.is_none() { $cli.$field = $file.$field; } )*
    };
}

/// Reads the config file, if any, and fills the flags left unset.
pub fn with_config<T: DeserializeOwned + Merge>(mut cli: T, path: Option<&Path>) -> Result<T> {
    if let Some(path) = path {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: T = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cli.merge(file);
    }
    Ok(cli)
}

pub trait Merge {
    fn merge(&mut self, file: Self);
}

pub fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    match value {
        Some(v) => Ok(v),
        None => bail!("--{flag} is required (on the command line or in the config file)"),
    }
}

/// `"a,b,..."` into numbers.
pub fn parse_list<T: std::str::FromStr>(s: &str, expected: usize, what: &str) -> Result<Vec<T>> {
    let values: Vec<T> = s
        .split(',')
        .map(|v| v.trim().parse::<T>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| anyhow::anyhow!("cannot parse {what} '{s}'"))?;
    if values.len() != expected {
        bail!("{what} needs {expected} comma-separated values, got '{s}'");
    }
    Ok(values)
}

#[derive(Args, Deserialize, Debug, Default)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RatesArgs {
    #[arg(long)]
    pub problem: Option<ProblemKind>,
    /// Design dimension (and integration dimension for `quad`)
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// empirical, exact-grid[:cells per axis] or mc[:samples]
    #[arg(long)]
    pub weights: Option<String>,
    /// none, AxB (A groups of B coordinates) or explicit lists like 0,1;2,3
    #[arg(long)]
    pub groups: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Logged iterations per decade
    #[arg(long)]
    pub per_decade: Option<usize>,
    /// Track the Z estimates and the error bound
    #[arg(long)]
    pub monitor: Option<bool>,
    /// Points per axis of the grid for the sup of Z
    #[arg(long)]
    pub grid_sup: Option<usize>,
    #[arg(long)]
    pub design_coefficient: Option<f64>,
    #[arg(long)]
    pub point_coefficient: Option<f64>,
}

impl Merge for RatesArgs {
    fn merge(&mut self, file: Self) {
        overlay!(self, file; problem, dim, runs, iters, tau, weights, groups, seed, out, per_decade, monitor,
            grid_sup, design_coefficient, point_coefficient);
    }
}

#[derive(ValueEnum, Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum PaintMode {
    Optimize,
    Evaluate,
}

#[derive(Args, Deserialize, Debug, Default)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct PaintArgs {
    #[arg(long, value_enum)]
    pub mode: Option<PaintMode>,
    /// Start (optimize) or fixed design (evaluate) as R,d in nm; random if omitted
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Metric coefficient of the wavelength
    #[arg(long)]
    pub c_lambda: Option<f64>,
    /// Metric coefficient of the relative size perturbation
    #[arg(long)]
    pub c_eta: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Weights over the wavelength
    #[arg(long)]
    pub outer_weights: Option<String>,
    /// Weights over the size perturbation
    #[arg(long)]
    pub inner_weights: Option<String>,
}

impl Merge for PaintArgs {
    fn merge(&mut self, file: Self) {
        overlay!(self, file; mode, init, iters, tau, c_lambda, c_eta, seed, out, outer_weights, inner_weights);
    }
}

#[derive(Args, Deserialize, Debug, Default)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct BaselineArgs {
    /// Nodes on wavelength, radius and thickness perturbation
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fixed step of the projected gradient descent
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Also run CSG from every start with this many iterations
    #[arg(long)]
    pub csg_iters: Option<usize>,
}

impl Merge for BaselineArgs {
    fn merge(&mut self, file: Self) {
        overlay!(self, file; grid, starts, seed, out, step, max_iters, csg_iters);
    }
}

#[derive(ValueEnum, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateMethod {
    Csg,
    Mc,
}

#[derive(Args, Deserialize, Debug, Default)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct EstimateArgs {
    /// Design as R,d in nm
    #[arg(long)]
    pub design: Option<String>,
    #[arg(long, value_enum)]
    pub method: Option<EstimateMethod>,
    /// Integrand evaluation budget
    #[arg(long)]
    pub evals: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub outer_weights: Option<String>,
    #[arg(long)]
    pub inner_weights: Option<String>,
}

impl Merge for EstimateArgs {
    fn merge(&mut self, file: Self) {
        overlay!(self, file; design, method, evals, seed, out, outer_weights, inner_weights);
    }
}
