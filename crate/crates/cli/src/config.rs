use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nlkpp::kernel::KernelSpec;
use nlkpp::pdesim::InitialData;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const DEFAULT_TAU: f64 = 1.5 * std::f64::consts::PI + 0.1;

#[derive(Debug, Parser)]
#[command(name = "nlkpp", version, about = "Traveling waves of the nonlocal KPP-Fisher equation")]
pub struct Cli {
    /// JSON input: a kernel (or `{"kernel": ...}`) for kernel commands, a simulation setup for `simulate`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Artifact directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for parallel sweeps; defaults to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

/// Everything a run depends on; echoed verbatim into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
    pub out: PathBuf,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", content = "params", rename_all = "lowercase")]
pub enum Command {
    /// Roots of a characteristic function in a rectangle.
    Roots(RootsArgs),
    /// Regime report for a kernel at speed c.
    Classify(ClassifyArgs),
    /// Feasible (p, P) set for given interaction intensities.
    Region(RegionArgs),
    /// Wavefront profile for a kernel at speed c.
    Front(FrontArgs),
    /// Closed-form fronts of the piecewise toy model.
    Toy(ToyArgs),
    /// Periodic orbit of the delay equation with Floquet data.
    Periodic(PeriodicArgs),
    /// Connections of the delay equation along an eps ladder.
    Connect(ConnectArgs),
    /// Semi-wavefront of the delayed local equation at speed c.
    Semiwave(SemiwaveArgs),
    /// Explicit PDE simulation with front-speed measurement.
    Simulate(SimulateArgs),
    /// Region cases over a grid of interaction intensities.
    Atlas(AtlasArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Roots(_) => "roots",
            Command::Classify(_) => "classify",
            Command::Region(_) => "region",
            Command::Front(_) => "front",
            Command::Toy(_) => "toy",
            Command::Periodic(_) => "periodic",
            Command::Connect(_) => "connect",
            Command::Semiwave(_) => "semiwave",
            Command::Simulate(_) => "simulate",
            Command::Atlas(_) => "atlas",
        }
    }

    fn uses_kernel(&self) -> bool {
        matches!(
            self,
            Command::Classify(_) | Command::Front(_) | Command::Simulate(_)
        ) || matches!(self, Command::Roots(a) if a.function == RootFunction::FangZhao)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RootFunction {
    Quad,
    FangZhao,
    Chi1,
    EpsAdvanced,
    ToySteady,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct RootsArgs {
    #[arg(long, value_enum, default_value = "chi1")]
    pub function: RootFunction,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Left edge of the strip searched for `eps-advanced`.
    #[arg(long, default_value_t = 0.0)]
    pub strip_lo: f64,
    /// Delay `cτ` of the toy model; defaults to `2 ln 1.5`.
    #[arg(long)]
    pub c_tau: Option<f64>,
    /// Starting point `re,im` for `toy-steady`.
    #[arg(long, value_parser = parse_complex, default_value = "-0.5,0")]
    pub near: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub c: f64,
    /// Bound M* on the front; defaults to U(c, K).
    #[arg(long)]
    pub mstar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct RegionArgs {
    #[arg(long)]
    pub aplus: f64,
    #[arg(long)]
    pub aminus: f64,
    #[arg(long, default_value_t = 4.0)]
    pub pcap: f64,
    #[arg(long, default_value_t = 400)]
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct FrontArgs {
    #[arg(long)]
    pub c: f64,
    #[arg(long, default_value_t = 1e-11)]
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ToyArgs {}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PeriodicArgs {
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    #[arg(long, default_value_t = 0.0)]
    pub eps: f64,
    /// History mesh intervals for the Floquet computation.
    #[arg(long, default_value_t = 200)]
    pub n_disc: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindArg {
    Het,
    P2p,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ConnectArgs {
    #[arg(long, default_value_t = 5.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 0.0)]
    pub eps: f64,
    #[arg(long, value_enum, default_value = "het")]
    pub kind: KindArg,
    /// Explicit comma-separated eps ladder; defaults to `0, eps/10, eps/2, eps`.
    #[arg(long, value_delimiter = ',')]
    pub ladder: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SemiwaveArgs {
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    #[arg(long)]
    pub c: f64,
    #[arg(long, value_enum, default_value = "p2p")]
    pub kind: KindArg,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long = "T", default_value_t = 40.0)]
    pub t_end: f64,
    /// Snapshot interval.
    #[arg(long)]
    pub snap: Option<f64>,
    /// Domain length; overrides the config.
    #[arg(long = "X")]
    pub length: Option<f64>,
    #[arg(long)]
    pub dx: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub level: f64,
    #[arg(skip)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitialData>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct AtlasArgs {
    /// `lo:hi:n` for α₊.
    #[arg(long, value_parser = parse_range, default_value = "0:1:21")]
    pub aplus_range: (f64, f64, usize),
    /// `lo:hi:n` for α₋.
    #[arg(long, value_parser = parse_range, default_value = "0:1:21")]
    pub aminus_range: (f64, f64, usize),
    #[arg(long, default_value_t = 4.0)]
    pub pcap: f64,
    /// Grid points per axis of each feasible-set scan.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
}

fn parse_complex(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected re,im")?;
    Ok((
        a.trim().parse().map_err(|e| format!("{e}"))?,
        b.trim().parse().map_err(|e| format!("{e}"))?,
    ))
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64, usize), String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err("expected lo:hi:n".into());
    }
    let lo: f64 = parts[0].parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = parts[1].parse().map_err(|e| format!("{e}"))?;
    let n: usize = parts[2].parse().map_err(|e| format!("{e}"))?;
    if n == 0 || hi < lo || (n == 1 && hi != lo) {
        return Err(format!("invalid range {s}"));
    }
    Ok((lo, hi, n))
}

/// Simulation setup file: `{kernel, X, dx, dt, init: {kind, params}}`.
#[derive(Debug, Clone, Default, Deserialize)]
struct SimFile {
    kernel: Option<KernelSpec>,
    #[serde(rename = "X")]
    length: Option<f64>,
    dx: Option<f64>,
    dt: Option<f64>,
    init: Option<InitFile>,
}

#[derive(Debug, Clone, Deserialize)]
struct InitFile {
    kind: String,
    #[serde(default)]
    params: BTreeMap<String, f64>,
}

impl InitFile {
    fn resolve(&self) -> Result<InitialData> {
        let get = |k: &str, d: f64| self.params.get(k).copied().unwrap_or(d);
        Ok(match self.kind.as_str() {
            "heaviside" => InitialData::Heaviside { at: get("at", 20.0) },
            "ramp" => InitialData::Ramp {
                at: get("at", 20.0),
                rate: get("rate", 5.0),
            },
            "gaussian" => InitialData::Gaussian {
                center: get("center", 20.0),
                width: get("width", 2.0),
                height: get("height", 0.1),
            },
            other => bail!("unknown initial data kind {other:?}"),
        })
    }
}

fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn kernel_from(value: &Value) -> Result<KernelSpec> {
    let v = value.get("kernel").unwrap_or(value);
    serde_json::from_value(v.clone()).map_err(|e| anyhow!("invalid kernel spec: {e}"))
}

/// The local kernel `δ(s)`.
pub fn local_kernel() -> KernelSpec {
    KernelSpec {
        atoms: vec![nlkpp::Atom { s: 0.0, mass: 1.0 }],
        density: None,
    }
}

impl ExperimentConfig {
    /// Merge command-line arguments with the `--config` file.
    pub fn resolve(cli: Cli) -> Result<Self> {
        let file = cli.config.as_deref().map(read_json).transpose()?;
        let mut command = cli.command;
        let mut kernel = None;
        if let Command::Simulate(a) = &mut command {
            let sim: SimFile = match &file {
                Some(v) => serde_json::from_value(v.clone()).map_err(|e| anyhow!("invalid simulation config: {e}"))?,
                None => SimFile::default(),
            };
            a.length = a.length.or(sim.length);
            a.dx = a.dx.or(sim.dx);
            a.dt = a.dt.or(sim.dt);
            a.init = sim.init.as_ref().map(InitFile::resolve).transpose()?;
            kernel = Some(sim.kernel.unwrap_or_else(local_kernel));
        } else if command.uses_kernel() {
            kernel = Some(match &file {
                Some(v) => kernel_from(v)?,
                None => local_kernel(),
            });
        } else if cli.config.is_some() {
            bail!("`{}` takes no --config file", command.name());
        }
        if cli.threads == Some(0) {
            bail!("--threads must be positive");
        }
        Ok(Self {
            command,
            kernel,
            out: cli.out,
            seed: cli.seed,
            threads: cli.threads,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_json() {
        let configs = [
            ExperimentConfig {
                command: Command::Classify(ClassifyArgs { c: 2.5, mstar: None }),
                kernel: Some(local_kernel()),
                out: "o".into(),
                seed: 7,
                threads: Some(2),
            },
            ExperimentConfig {
                command: Command::Atlas(AtlasArgs {
                    aplus_range: (0.0, 1.0, 3),
                    aminus_range: (0.1, 0.2, 2),
                    pcap: 4.0,
                    n: 10,
                }),
                kernel: None,
                out: "o".into(),
                seed: 0,
                threads: None,
            },
            ExperimentConfig {
                command: Command::Simulate(SimulateArgs {
                    t_end: 40.0,
                    snap: Some(5.0),
                    length: Some(100.0),
                    dx: None,
                    dt: Some(0.004),
                    level: 0.5,
                    init: Some(InitialData::Ramp { at: 20.0, rate: 5.0 }),
                }),
                kernel: Some(local_kernel()),
                out: "o".into(),
                seed: 1,
                threads: None,
            },
        ];
        for c in configs {
            let s = serde_json::to_string(&c).unwrap();
            assert_eq!(serde_json::from_str::<ExperimentConfig>(&s).unwrap(), c);
        }
    }

    #[test]
    fn ranges_parse() {
        assert_eq!(parse_range("0:0.5:6").unwrap(), (0.0, 0.5, 6));
        assert!(parse_range("1:0:3").is_err());
        assert!(parse_range("0:1").is_err());
    }
}
