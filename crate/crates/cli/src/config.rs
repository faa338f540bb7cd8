use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use toric_cqed::interferometry::Variant;
use toric_cqed::pulse::DEFAULT_N_MAX;
use toric_cqed::MeasurePolicy;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Prepare,
    Interfere,
    PulseFidelity,
    Sweep,
    Selfcheck,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Self::Prepare => "prepare",
            Self::Interfere => "interfere",
            Self::PulseFidelity => "pulse-fidelity",
            Self::Sweep => "sweep",
            Self::Selfcheck => "selfcheck",
        };
        f.write_str(name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    /// Rates in units of the coupling `g`.
    Dimensionless,
    /// Times reported in seconds with `g / 2pi = 100 MHz`.
    Si,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum GateChoice {
    X,
    Z,
    Iswap,
}

#[derive(Debug, Parser)]
#[command(name = "toric-cqed", version, about = "Toric-code anyon interferometry with a cavity probe")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Clone, Copy, Debug, Subcommand)]
pub enum Command {
    /// Prepare the six-spin ground state and report its stabilizers.
    Prepare,
    /// Run one interferometry variant.
    Interfere,
    /// Pulse-level gate fidelity at one or more detuning ratios.
    PulseFidelity,
    /// Dispersive x-rotation sweep with a truncation check.
    Sweep,
    /// Run the invariant suite and print a pass/fail table.
    Selfcheck,
}

impl Command {
    pub fn scenario(self) -> Scenario {
        match self {
            Self::Prepare => Scenario::Prepare,
            Self::Interfere => Scenario::Interfere,
            Self::PulseFidelity => Scenario::PulseFidelity,
            Self::Sweep => Scenario::Sweep,
            Self::Selfcheck => Scenario::Selfcheck,
        }
    }
}

#[derive(Clone, Debug, Default, Args)]
pub struct Flags {
    /// Flat TOML file with run settings; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// `braiding`, `control_no_e_pair` or `halt_after_creation`.
    #[arg(long, global = true, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    /// Role-to-spin permutation, e.g. `1,2,3,4,5,6`.
    #[arg(long, global = true, value_parser = parse_permutation)]
    pub labeling: Option<[usize; 6]>,
    /// Comma-separated detuning ratios delta/g.
    #[arg(long, global = true, value_delimiter = ',')]
    pub ratio_sweep: Option<Vec<f64>>,
    /// Cavity Fock cutoff.
    #[arg(long, global = true)]
    pub n_max: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Report path; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[arg(long, global = true, value_enum)]
    pub units: Option<Units>,
    /// `postselect_plus`, `sample` or `both_branches`.
    #[arg(long, global = true, value_parser = parse_policy)]
    pub policy: Option<MeasurePolicy>,
    #[arg(long, global = true, value_enum)]
    pub gate: Option<GateChoice>,
    /// Rabi frequency in units of g.
    #[arg(long, global = true)]
    pub rabi: Option<f64>,
    /// Qubit-drive detuning for z rotations, in units of g.
    #[arg(long, global = true)]
    pub detuning: Option<f64>,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse()
}

fn parse_policy(s: &str) -> Result<MeasurePolicy, String> {
    s.parse()
}

pub fn parse_permutation(s: &str) -> Result<[usize; 6], String> {
    let values: Vec<usize> = s
        .split(',')
        .map(|v| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}")))
        .collect::<Result<_, _>>()?;
    values
        .try_into()
        .map_err(|v: Vec<usize>| format!("labeling needs 6 entries, got {}", v.len()))
}

/// Keys accepted in a config file.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub scenario: Option<Scenario>,
    pub variant: Option<String>,
    pub labeling: Option<Vec<usize>>,
    pub policy: Option<String>,
    pub ratio_sweep: Option<Vec<f64>>,
    pub n_max: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub units: Option<Units>,
    pub gate: Option<GateChoice>,
    pub rabi: Option<f64>,
    pub detuning: Option<f64>,
    pub omega_r: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

/// Fully resolved settings for one run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub variant: Variant,
    pub labeling: Option<[usize; 6]>,
    pub policy: MeasurePolicy,
    pub ratio_sweep: Vec<f64>,
    pub n_max: usize,
    pub seed: u64,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    pub format: Format,
    pub units: Units,
    pub gate: GateChoice,
    pub rabi: f64,
    pub detuning: f64,
    pub omega_r: f64,
}

impl RunConfig {
    pub fn resolve(command: Option<Command>, flags: Flags) -> Result<Self, String> {
        let file = match &flags.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let scenario = command
            .map(Command::scenario)
            .or(file.scenario)
            .ok_or("no scenario: pass a subcommand or set `scenario` in the config file")?;
        let variant = match (flags.variant, &file.variant) {
            (Some(v), _) => v,
            (None, Some(s)) => Variant::from_str(s)?,
            (None, None) => Variant::Braiding,
        };
        let labeling = match (flags.labeling, file.labeling) {
            (Some(l), _) => Some(l),
            (None, Some(v)) => Some(
                v.try_into()
                    .map_err(|v: Vec<usize>| format!("labeling needs 6 entries, got {}", v.len()))?,
            ),
            (None, None) => None,
        };
        let explicit_seed = flags.seed.or(file.seed);
        let policy = match (flags.policy, &file.policy) {
            (Some(p), _) => p,
            (None, Some(s)) => MeasurePolicy::from_str(s)?,
            (None, None) => MeasurePolicy::PostselectPlus,
        };
        let (policy, seed) = match policy {
            MeasurePolicy::Sample { seed } => {
                let seed = explicit_seed.unwrap_or(seed);
                (MeasurePolicy::Sample { seed }, seed)
            }
            other => (other, explicit_seed.unwrap_or(0)),
        };
        let default_format = if scenario == Scenario::Sweep { Format::Csv } else { Format::Json };
        let format = flags.format.or(file.format).unwrap_or(default_format);
        if format == Format::Csv && !matches!(scenario, Scenario::Sweep | Scenario::PulseFidelity) {
            return Err(format!("csv output is only available for sweeps, not {scenario}"));
        }
        let default_ratios = if scenario == Scenario::Sweep { vec![5.0, 10.0, 20.0, 50.0] } else { vec![10.0] };
        let ratio_sweep = flags.ratio_sweep.or(file.ratio_sweep).unwrap_or(default_ratios);
        if ratio_sweep.is_empty() || ratio_sweep.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            return Err(format!("ratios must be positive, got {ratio_sweep:?}"));
        }
        let n_max = flags.n_max.or(file.n_max).unwrap_or(DEFAULT_N_MAX);
        if n_max == 0 {
            return Err("n_max must be at least 1".into());
        }
        Ok(Self {
            scenario,
            variant,
            labeling,
            policy,
            ratio_sweep,
            n_max,
            seed,
            out: flags.out.or(file.out),
            format,
            units: flags.units.or(file.units).unwrap_or(Units::Dimensionless),
            gate: flags.gate.or(file.gate).unwrap_or(GateChoice::X),
            rabi: flags.rabi.or(file.rabi).unwrap_or(1.0),
            detuning: flags.detuning.or(file.detuning).unwrap_or(10.0),
            omega_r: file.omega_r.unwrap_or(10.0),
        })
    }
}
