//! Flag parsing, the key=value config file, and resolution of both into
//! a ready-to-run integrator. Precedence: command line, then config file,
//! then built-in defaults.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;

use sps_core::analysis::Reference;
use sps_core::method::{Integrator, MethodRegistry};
use sps_core::solver::StepContext;
use sps_core::systems::SystemRegistry;
use sps_core::tableau::SrkTableau;
use sps_core::State;

#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// Key=value file supplying defaults for any flag
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// System name: rigid | linear
    #[arg(long)]
    pub system: Option<String>,

    /// Method name: dirk | transformed | midpoint
    #[arg(long)]
    pub method: Option<String>,

    /// Stage count for the default weight pattern
    #[arg(long)]
    pub stages: Option<usize>,

    /// Drift-level stage weights, comma separated, summing to 1
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub weights_drift: Option<Vec<f64>>,

    /// Diffusion-level stage weights, comma separated, summing to 1
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub weights_diff: Option<Vec<f64>>,

    /// Read the full coefficient tableau from a file instead
    #[arg(long, value_name = "FILE")]
    pub tableau_file: Option<PathBuf>,

    /// Step size
    #[arg(long)]
    pub h: Option<f64>,

    /// Integration horizon
    #[arg(long = "T")]
    pub t_end: Option<f64>,

    /// Initial state, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub y0: Option<Vec<f64>>,

    /// Base seed for all randomness
    #[arg(long)]
    pub seed: Option<u64>,

    /// Increment truncation parameter k
    #[arg(long)]
    pub k_trunc: Option<f64>,

    /// Newton residual tolerance
    #[arg(long)]
    pub newton_tol: Option<f64>,

    /// Newton iteration cap
    #[arg(long)]
    pub newton_max_iter: Option<usize>,

    /// Output CSV path
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct OrderArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Step sizes for the error sweep, comma separated, increasing
    #[arg(long, value_delimiter = ',')]
    pub h_list: Option<Vec<f64>>,

    /// Monte Carlo sample count
    #[arg(long)]
    pub samples: Option<usize>,

    /// Reference solution: exact, self-fine:N, or midpoint-fine:N (N defaults to 16)
    #[arg(long)]
    pub reference: Option<String>,

    /// Force the deterministic sequential reduction
    #[arg(long)]
    pub sequential: bool,
}

/// Parsed key=value file. Keys are the long flag names; later entries win.
#[derive(Debug, Default)]
pub struct FileConfig {
    values: HashMap<String, String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        let mut values = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                anyhow!(
                    "{}:{}: expected key=value, got '{line}'",
                    path.display(),
                    idx + 1
                )
            })?;
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(FileConfig { values })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    pub fn string(&self, key: &str) -> Option<String> {
        self.raw(key).map(|s| s.to_string())
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|s| {
                s.parse::<T>()
                    .map_err(|e| anyhow!("config key '{key}': cannot parse '{s}': {e}"))
            })
            .transpose()
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.parsed(key)
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>> {
        self.parsed(key)
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>> {
        self.parsed(key)
    }

    pub fn bool(&self, key: &str) -> Result<Option<bool>> {
        self.parsed(key)
    }

    pub fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.raw(key)
            .map(|s| {
                s.split(',')
                    .map(|part| {
                        part.trim()
                            .parse::<f64>()
                            .map_err(|e| anyhow!("config key '{key}': cannot parse '{part}': {e}"))
                    })
                    .collect()
            })
            .transpose()
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(PathBuf::from)
    }
}

/// Everything a command needs after defaults are applied and names resolved.
pub struct Resolved {
    pub system_name: String,
    pub method_name: String,
    pub integrator: Box<dyn Integrator>,
    pub y0: State,
    pub h: f64,
    pub t_end: f64,
    pub seed: u64,
    pub ctx: StepContext,
    pub out: Option<PathBuf>,
}

pub fn resolve(args: &CommonArgs, t_end_default: f64) -> Result<Resolved> {
    let file = FileConfig::load(args.config.as_deref())?;

    let system_name = args
        .system
        .clone()
        .or_else(|| file.string("system"))
        .unwrap_or_else(|| "rigid".to_string());
    let systems = SystemRegistry::builtin();
    let entry = systems.get(&system_name)?;

    let method_name = args
        .method
        .clone()
        .or_else(|| file.string("method"))
        .unwrap_or_else(|| {
            if entry.has_chart() { "transformed" } else { "dirk" }.to_string()
        });

    let h = args.h.or(file.f64("h")?).unwrap_or(0.01);
    if h <= 0.0 || !h.is_finite() {
        bail!("step size h = {h} must be positive and finite");
    }
    let t_end = args.t_end.or(file.f64("T")?).unwrap_or(t_end_default);
    if t_end < 0.0 || !t_end.is_finite() {
        bail!("horizon T = {t_end} must be nonnegative and finite");
    }
    let seed = args.seed.or(file.u64("seed")?).unwrap_or(42);

    let ctx = StepContext {
        h,
        truncation_k: args.k_trunc.or(file.f64("k-trunc")?).unwrap_or(4.0),
        newton_tol: args.newton_tol.or(file.f64("newton-tol")?).unwrap_or(1e-12),
        newton_max_iter: args
            .newton_max_iter
            .or(file.usize("newton-max-iter")?)
            .unwrap_or(50),
    };

    let system = entry.system();
    let tableau = resolve_tableau(args, &file, system.noise_count())?;
    let methods = MethodRegistry::builtin();
    let integrator = methods.build(&method_name, entry, tableau)?;

    let y0 = match args.y0.clone().or(file.f64_list("y0")?) {
        Some(v) => {
            if v.len() != system.dimension() {
                bail!(
                    "y0 has {} components, system '{system_name}' needs {}",
                    v.len(),
                    system.dimension()
                );
            }
            State::from_vec(v)
        }
        None => entry.default_y0(),
    };

    let out = args.out.clone().or_else(|| file.path("out"));

    Ok(Resolved {
        system_name,
        method_name,
        integrator,
        y0,
        h,
        t_end,
        seed,
        ctx,
        out,
    })
}

/// Tableau resolution for inspection commands: no integrator is built, so a
/// tableau that fails its conditions can still be loaded and reported on.
pub struct ResolvedTableau {
    pub tableau: SrkTableau,
    pub explicit: bool,
    pub method_name: String,
}

pub fn resolve_tableau_only(args: &CommonArgs) -> Result<ResolvedTableau> {
    let file = FileConfig::load(args.config.as_deref())?;

    let system_name = args
        .system
        .clone()
        .or_else(|| file.string("system"))
        .unwrap_or_else(|| "rigid".to_string());
    let systems = SystemRegistry::builtin();
    let entry = systems.get(&system_name)?;
    let m = entry.system().noise_count();

    let method_name = args
        .method
        .clone()
        .or_else(|| file.string("method"))
        .unwrap_or_else(|| {
            if entry.has_chart() { "transformed" } else { "dirk" }.to_string()
        });

    match resolve_tableau(args, &file, m)? {
        Some(tableau) => Ok(ResolvedTableau {
            tableau,
            explicit: true,
            method_name,
        }),
        None => {
            let stages = if method_name == "midpoint" { 1 } else { 2 };
            Ok(ResolvedTableau {
                tableau: sps_core::method::default_tableau(stages, m)?,
                explicit: false,
                method_name,
            })
        }
    }
}

fn resolve_tableau(
    args: &CommonArgs,
    file: &FileConfig,
    m: usize,
) -> Result<Option<SrkTableau>> {
    let tableau_file = args.tableau_file.clone().or_else(|| file.path("tableau-file"));
    let stages = args.stages.or(file.usize("stages")?);
    let w_drift = args.weights_drift.clone().or(file.f64_list("weights-drift")?);
    let w_diff = args.weights_diff.clone().or(file.f64_list("weights-diff")?);

    if let Some(path) = tableau_file {
        if stages.is_some() || w_drift.is_some() || w_diff.is_some() {
            bail!("--tableau-file cannot be combined with --stages or weight flags");
        }
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading tableau file {}", path.display()))?;
        return Ok(Some(SrkTableau::from_text(&text)?));
    }

    match (w_drift, w_diff) {
        (Some(drift), Some(diff)) => {
            if let Some(s) = stages {
                if drift.len() != s {
                    bail!("--stages {s} disagrees with {} drift weights", drift.len());
                }
            }
            if drift.len() != diff.len() {
                bail!(
                    "weight vectors disagree: {} drift entries, {} diffusion entries",
                    drift.len(),
                    diff.len()
                );
            }
            let mut weights = vec![drift];
            weights.extend(std::iter::repeat_n(diff, m));
            Ok(Some(SrkTableau::dirk(&weights)?))
        }
        (None, None) => match stages {
            Some(s) => Ok(Some(sps_core::method::default_tableau(s, m)?)),
            None => Ok(None),
        },
        _ => bail!("--weights-drift and --weights-diff must be given together"),
    }
}

/// Per-system defaults reproducing the published order experiments.
pub struct OrderDefaults {
    pub h_list: Vec<f64>,
    pub samples: usize,
}

pub fn order_defaults(system_name: &str) -> OrderDefaults {
    if system_name == "linear" {
        OrderDefaults {
            h_list: vec![0.005, 0.01, 0.02, 0.025, 0.05],
            samples: 1000,
        }
    } else {
        OrderDefaults {
            h_list: vec![0.005, 0.01, 0.02, 0.04],
            samples: 500,
        }
    }
}

pub fn parse_reference(s: &str) -> Result<Reference> {
    let (kind, factor) = match s.split_once(':') {
        Some((kind, f)) => {
            let factor: usize = f
                .parse()
                .map_err(|e| anyhow!("reference factor '{f}': {e}"))?;
            if factor == 0 {
                bail!("reference factor must be ≥ 1");
            }
            (kind, factor)
        }
        None => (s, 16),
    };
    match kind {
        "exact" => {
            if s.contains(':') {
                bail!("'exact' takes no refinement factor");
            }
            Ok(Reference::Exact)
        }
        "self-fine" => Ok(Reference::SelfFine { factor }),
        "midpoint-fine" => Ok(Reference::MidpointFine { factor }),
        _ => bail!("unknown reference '{s}', expected exact | self-fine[:N] | midpoint-fine[:N]"),
    }
}
