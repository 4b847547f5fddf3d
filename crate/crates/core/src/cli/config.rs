use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::dist::{Family, Market, MarketSlice, ValueDistribution};

pub const SCHEMA: &str = "fairprice/v1";
pub const DEFAULT_ORACLE_N: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Solve,
    Sweep,
    Verify,
    Figures,
    Outcomes,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Sweep => "sweep",
            Command::Verify => "verify",
            Command::Figures => "figures",
            Command::Outcomes => "outcomes",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceSpec {
    pub c: f64,
    pub alpha: f64,
    pub weight: f64,
    pub l: Family,
    pub h: Family,
    /// Cutoffs to use instead of solving; checked by `verify`.
    #[serde(default)]
    pub kappa: Option<[f64; 5]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSpec {
    pub slices: Vec<SliceSpec>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Share of `h` consumers.
    #[serde(default)]
    pub alpha: Option<Vec<f64>>,
    /// `h` values are the `l` values scaled by `gamma`.
    #[serde(default)]
    pub gamma: Option<Vec<f64>>,
    /// Ratios `r` of `h` to `l` gains from trade, minus one.
    #[serde(default)]
    pub gains: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    #[serde(default)]
    pub command: Option<Command>,
    pub market: MarketSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub oracle_n: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| format!("config: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), String> {
        if self.schema != SCHEMA {
            return Err(format!("config: schema must be \"{SCHEMA}\", got \"{}\"", self.schema));
        }
        if self.market.slices.is_empty() {
            return Err("config: market.slices is empty".into());
        }
        for (name, grid) in [("alpha", &self.sweep.alpha), ("gamma", &self.sweep.gamma), ("gains", &self.sweep.gains)] {
            match grid {
                Some(g) if g.is_empty() => return Err(format!("config: sweep.{name} is empty")),
                Some(g) if g.iter().any(|x| !x.is_finite()) => return Err(format!("config: sweep.{name} has a non-finite entry")),
                _ => {}
            }
        }
        if let Some(n) = self.oracle_n {
            if !(crate::oracle::MIN_N..=crate::oracle::MAX_N).contains(&n) {
                return Err(format!("config: oracle_n must lie in [10, 5000], got {n}"));
            }
        }
        Ok(())
    }

    /// Builds every slice and the weighted market.
    pub fn market(&self) -> crate::error::Result<Market> {
        let slices = self
            .market
            .slices
            .iter()
            .map(|s| Ok((s.build()?, s.weight)))
            .collect::<crate::error::Result<Vec<_>>>()?;
        Market::new(slices)
    }
}

impl SliceSpec {
    pub fn build(&self) -> crate::error::Result<MarketSlice> {
        MarketSlice::new(self.c, self.alpha, ValueDistribution::new(self.l.clone())?, ValueDistribution::new(self.h.clone())?)
    }
}
