//! Experiment configuration: a TOML file merged with command-line overrides,
//! then resolved against the model and payoff registries.

use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;
use kolmo::mc::{McConfig, Scheme};
use kolmo::pricer::BasePoint;
use kolmo::{BlockStructure, MultiIndex};
use serde::Deserialize;

use crate::error::{CliError, CliResult};
use crate::registry::{ModelSpec, PayoffSpec};

/// Raw file contents. Every field is optional so that flags can fill gaps.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub t: Option<f64>,
    #[serde(rename = "T")]
    pub maturity: Option<f64>,
    pub x: Option<Vec<f64>>,
    #[serde(rename = "N")]
    pub order: Option<usize>,
    pub orders: Option<Vec<usize>>,
    pub maturities: Option<Vec<f64>>,
    pub base: Option<String>,
    pub greeks: Option<Vec<String>>,
    pub setup: Option<String>,
    pub zeta: Option<f64>,
    pub mode: Option<String>,
    pub quadrature_points: Option<usize>,
    pub output: Option<PathBuf>,
    pub format: Option<String>,
    #[serde(default)]
    pub model: ModelSection,
    pub structure: Option<StructureSection>,
    #[serde(default)]
    pub payoff: PayoffSection,
    #[serde(default)]
    pub mc: McSection,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub id: Option<String>,
    pub sigma: Option<f64>,
    pub gamma: Option<f64>,
    /// Constant `A_0` for the `constant` model, row by row.
    pub diffusion: Option<Vec<Vec<f64>>>,
}

/// Block sizes `p_0 ≥ p_1 ≥ …` and the dense sub-diagonal blocks, row-major.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StructureSection {
    pub sizes: Vec<usize>,
    #[serde(default)]
    pub blocks: Vec<Vec<f64>>,
}

impl StructureSection {
    pub fn build(&self) -> CliResult<BlockStructure> {
        Ok(BlockStructure::from_sizes(&self.sizes, &self.blocks)?)
    }

    /// A structure written as its own TOML document, `sizes = [...]` and
    /// `blocks = [[...], ...]` at the top level.
    pub fn parse(text: &str) -> CliResult<BlockStructure> {
        let s: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        s.build()
    }
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PayoffSection {
    pub id: Option<String>,
    pub strike: Option<f64>,
    pub normal: Option<Vec<f64>>,
    pub scale: Option<f64>,
    pub offset: Option<f64>,
    pub value: Option<f64>,
    pub exponent: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub paths: Option<usize>,
    pub steps_per_unit_time: Option<usize>,
    pub seed: Option<u64>,
    pub antithetic: Option<bool>,
    pub scheme: Option<String>,
}

/// Flags shared by every subcommand; each overrides the matching file entry.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML experiment file.
    #[arg(long, short = 'c')]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub payoff: Option<String>,
    #[arg(long)]
    pub strike: Option<f64>,
    /// Spot, the first state coordinate.
    #[arg(long, allow_hyphen_values = true)]
    pub s0: Option<f64>,
    /// Running integral of the spot, the second state coordinate.
    #[arg(long, allow_hyphen_values = true)]
    pub a0: Option<f64>,
    /// Full state vector, comma separated; overrides --s0/--a0.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    pub t: Option<f64>,
    #[arg(long = "T")]
    pub maturity: Option<f64>,
    #[arg(long = "N")]
    pub order: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub orders: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub maturities: Option<Vec<f64>>,
    /// current | terminal
    #[arg(long)]
    pub base: Option<String>,
    /// Multi-indices such as `1,0`; repeat the flag for several.
    #[arg(long = "greek")]
    pub greeks: Option<Vec<String>>,
    /// literal (t = 0, T = θ) | fixed-maturity (t = T − θ)
    #[arg(long)]
    pub setup: Option<String>,
    /// Standardized moneyness held fixed across the maturity grid.
    #[arg(long, allow_hyphen_values = true)]
    pub zeta: Option<f64>,
    /// mc | self-consistency
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// euler | trapezoid
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub no_antithetic: bool,
    /// json | csv
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// File contents (if any) with flags applied on top.
    pub fn from_overrides(o: &Overrides) -> CliResult<Self> {
        let mut c = match &o.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        c.apply(o);
        Ok(c)
    }

    pub fn apply(&mut self, o: &Overrides) {
        fn set<T: Clone>(slot: &mut Option<T>, v: &Option<T>) {
            if v.is_some() {
                *slot = v.clone();
            }
        }
        set(&mut self.model.id, &o.model);
        set(&mut self.model.sigma, &o.sigma);
        set(&mut self.model.gamma, &o.gamma);
        set(&mut self.payoff.id, &o.payoff);
        set(&mut self.payoff.strike, &o.strike);
        if o.s0.is_some() || o.a0.is_some() {
            let mut x = self.x.clone().unwrap_or_else(|| vec![f64::NAN, 0.0]);
            if x.len() < 2 {
                x.resize(2, 0.0);
            }
            if let Some(s) = o.s0 {
                x[0] = s;
            }
            if let Some(a) = o.a0 {
                x[1] = a;
            }
            self.x = Some(x);
        }
        set(&mut self.x, &o.x);
        set(&mut self.t, &o.t);
        set(&mut self.maturity, &o.maturity);
        set(&mut self.order, &o.order);
        set(&mut self.orders, &o.orders);
        set(&mut self.maturities, &o.maturities);
        set(&mut self.base, &o.base);
        set(&mut self.greeks, &o.greeks);
        set(&mut self.setup, &o.setup);
        set(&mut self.zeta, &o.zeta);
        set(&mut self.mode, &o.mode);
        set(&mut self.mc.paths, &o.paths);
        set(&mut self.mc.steps_per_unit_time, &o.steps);
        set(&mut self.mc.seed, &o.seed);
        set(&mut self.mc.scheme, &o.scheme);
        if o.no_antithetic {
            self.mc.antithetic = Some(false);
        }
        set(&mut self.format, &o.format);
        set(&mut self.output, &o.output);
    }

    pub fn resolve(&self) -> CliResult<Experiment> {
        let model = ModelSpec::resolve(&self.model, self.structure.as_ref())?;
        let dim = model.structure().dim();
        let payoff = PayoffSpec::resolve(&self.payoff)?;
        let t = self.t.unwrap_or(0.0);
        if !t.is_finite() {
            return Err(CliError::Config(format!("t = {t} is not finite")));
        }
        if let Some(m) = self.maturity {
            if !(m.is_finite() && m > t) {
                return Err(CliError::Config(format!("T = {m} must be finite and exceed t = {t}")));
            }
        }
        if let Some(x) = &self.x {
            if x.len() != dim {
                return Err(CliError::Config(format!("x has {} entries, the model needs {dim}", x.len())));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(CliError::Config("x must be finite (did you forget --s0?)".into()));
            }
        }
        let order = self.order.unwrap_or(2);
        if order > kolmo::expansion::MAX_ORDER {
            return Err(CliError::Config(format!("N = {order} exceeds {}", kolmo::expansion::MAX_ORDER)));
        }
        let orders = self.orders.clone().unwrap_or_else(|| (0..=order).collect());
        if orders.is_empty() || orders.iter().any(|&n| n > kolmo::expansion::MAX_ORDER) {
            return Err(CliError::Config(format!("orders must be non-empty and at most {}", kolmo::expansion::MAX_ORDER)));
        }
        if let Some(grid) = &self.maturities {
            validate_grid(grid)?;
        }
        let base = match self.base.as_deref().unwrap_or("current") {
            "current" => BasePoint::Current,
            "terminal" => BasePoint::Terminal,
            other => return Err(CliError::Config(format!("unknown base point `{other}` (current | terminal)"))),
        };
        let greeks = self
            .greeks
            .clone()
            .unwrap_or_default()
            .iter()
            .map(|g| {
                let m = MultiIndex::from_str(g).map_err(|e| CliError::Config(e.to_string()))?;
                if m.dim() != dim {
                    return Err(CliError::Config(format!("greek {g} has dimension {}, expected {dim}", m.dim())));
                }
                Ok(m)
            })
            .collect::<CliResult<Vec<_>>>()?;
        let setup = match self.setup.as_deref().unwrap_or("literal") {
            "literal" => Setup::Literal,
            "fixed-maturity" => Setup::FixedMaturity,
            other => return Err(CliError::Config(format!("unknown setup `{other}` (literal | fixed-maturity)"))),
        };
        let mode = match self.mode.as_deref().unwrap_or("mc") {
            "mc" => Mode::MonteCarlo,
            "self-consistency" => Mode::SelfConsistency,
            other => return Err(CliError::Config(format!("unknown mode `{other}` (mc | self-consistency)"))),
        };
        let format = match self.format.as_deref().unwrap_or("json") {
            "json" => Format::Json,
            "csv" => Format::Csv,
            other => return Err(CliError::Config(format!("unknown format `{other}` (json | csv)"))),
        };
        let defaults = McConfig::default();
        let scheme = match self.mc.scheme.as_deref().unwrap_or("euler") {
            "euler" => Scheme::Euler,
            "trapezoid" => Scheme::EulerTrapezoid,
            other => return Err(CliError::Config(format!("unknown scheme `{other}` (euler | trapezoid)"))),
        };
        let mc = McConfig {
            paths: self.mc.paths.unwrap_or(defaults.paths),
            steps_per_unit_time: self.mc.steps_per_unit_time.unwrap_or(defaults.steps_per_unit_time),
            seed: self.mc.seed.unwrap_or(defaults.seed),
            antithetic: self.mc.antithetic.unwrap_or(defaults.antithetic),
            scheme,
        };
        if mc.paths < 2 || mc.steps_per_unit_time == 0 || (mc.antithetic && !mc.paths.is_multiple_of(2)) {
            return Err(CliError::Config("mc: need paths ≥ 2 (even when antithetic) and steps ≥ 1".into()));
        }
        Ok(Experiment {
            model,
            payoff,
            t,
            maturity: self.maturity,
            x: self.x.clone(),
            order,
            orders,
            maturities: self.maturities.clone(),
            base,
            greeks,
            setup,
            zeta: self.zeta,
            mode,
            quadrature_points: self.quadrature_points,
            mc,
            format,
            output: self.output.clone(),
        })
    }
}

/// Strictly positive and strictly monotone, either direction.
pub fn validate_grid(grid: &[f64]) -> CliResult<()> {
    if grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(CliError::Config("maturity grid must be strictly positive".into()));
    }
    let up = grid.windows(2).all(|w| w[0] < w[1]);
    let down = grid.windows(2).all(|w| w[0] > w[1]);
    if !(up || down) {
        return Err(CliError::Config("maturity grid must be sorted without repeats".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Setup {
    Literal,
    FixedMaturity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    MonteCarlo,
    SelfConsistency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

/// A validated experiment. Fields only some commands need stay optional and
/// are checked by the command that uses them.
pub struct Experiment {
    pub model: ModelSpec,
    pub payoff: PayoffSpec,
    pub t: f64,
    pub maturity: Option<f64>,
    pub x: Option<Vec<f64>>,
    pub order: usize,
    pub orders: Vec<usize>,
    pub maturities: Option<Vec<f64>>,
    pub base: BasePoint,
    pub greeks: Vec<MultiIndex>,
    pub setup: Setup,
    pub zeta: Option<f64>,
    pub mode: Mode,
    pub quadrature_points: Option<usize>,
    pub mc: McConfig,
    pub format: Format,
    pub output: Option<PathBuf>,
}

impl Experiment {
    pub fn require_maturity(&self) -> CliResult<f64> {
        self.maturity.ok_or_else(|| CliError::missing("T", "--T"))
    }

    pub fn require_x(&self) -> CliResult<Vec<f64>> {
        self.x.clone().ok_or_else(|| CliError::missing("x", "--s0/--a0 or --x"))
    }

    pub fn require_grid(&self) -> CliResult<Vec<f64>> {
        let g = self.maturities.clone().ok_or_else(|| CliError::missing("maturities", "--maturities"))?;
        if g.len() < 4 {
            return Err(CliError::Config(format!("maturity grid needs at least 4 points, got {}", g.len())));
        }
        Ok(g)
    }
}
