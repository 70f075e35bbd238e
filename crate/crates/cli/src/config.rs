//! Run configuration: a single JSON document with one section per concern.

use std::fmt;

use serde::{Deserialize, Serialize};
use uncertain_vol::lognormal::{CallSpec, LognormalMarket, TotalVolUncertainty};
use uncertain_vol::sim::{
    NestedMcSpec, OptionSpec, PricerKind, SimulationConfig, TestFunctionJet, ValidationConfig, VolatilityBasis,
    DEFAULT_RELATIVE_BUMP,
};
use uncertain_vol::{QuoteSource, Result, RiskPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Quote,
    Smile,
    EstimateLaw,
    Validate,
    Simulate,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Quote => "quote",
            Command::Smile => "smile",
            Command::EstimateLaw => "estimate-law",
            Command::Validate => "validate",
            Command::Simulate => "simulate",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Error data on the total volatility `ς√T`, in one of several forms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UncertaintySpec {
    /// `Γ[ς√T]` and `𝒜[ς√T]` directly, the same for every maturity.
    TotalVol { gamma: f64, bias: f64, epsilon: f64 },
    /// `Γ[ς]` and `𝒜[ς]` on the volatility, scaled to each maturity.
    Sigma { gamma: f64, bias: f64, epsilon: f64 },
    /// `Γ[ς√T]` with the bias chosen so that `r_r` equals `rr`.
    Ratio { rr: f64, gamma: f64, epsilon: f64 },
    /// `Γ[ς√T]` with `r_r = σ₀²T/4`, where the at-the-money bias vanishes.
    AtmNeutral { gamma: f64, epsilon: f64 },
}

impl UncertaintySpec {
    pub fn at(&self, m: &LognormalMarket, maturity: f64) -> Result<TotalVolUncertainty> {
        match *self {
            UncertaintySpec::TotalVol { gamma, bias, epsilon } => TotalVolUncertainty::new(gamma, bias, epsilon),
            UncertaintySpec::Sigma { gamma, bias, epsilon } => {
                TotalVolUncertainty::from_sigma(gamma, bias, epsilon, maturity)
            }
            UncertaintySpec::Ratio { rr, gamma, epsilon } => {
                let c = CallSpec::new(m.spot, maturity)?;
                TotalVolUncertainty::from_rr(rr, gamma, epsilon, m, &c)
            }
            UncertaintySpec::AtmNeutral { gamma, epsilon } => {
                let c = CallSpec::new(m.spot, maturity)?;
                TotalVolUncertainty::from_rr(atm_neutral_ratio(m, maturity), gamma, epsilon, m, &c)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmileSpec {
    pub strikes: Vec<f64>,
    pub maturities: Vec<f64>,
    #[serde(default = "default_source")]
    pub source: QuoteSource,
}

fn default_source() -> QuoteSource {
    QuoteSource::Mid
}

/// True dynamics for the simulation commands.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub x0: f64,
    #[serde(default)]
    pub mu: f64,
    pub basis: VolatilityBasis,
    /// Coefficients the hedger prices with; the true ones when absent.
    #[serde(default)]
    pub estimated_coefficients: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PricerSpec {
    #[serde(default)]
    pub kind: PricerKind,
    #[serde(default)]
    pub nested: NestedMcSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawSpec {
    #[serde(default = "default_bump")]
    pub relative_bump: f64,
}

fn default_bump() -> f64 {
    DEFAULT_RELATIVE_BUMP
}

impl Default for LawSpec {
    fn default() -> Self {
        Self {
            relative_bump: DEFAULT_RELATIVE_BUMP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub format: Format,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub market: Option<LognormalMarket>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<CallSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<UncertaintySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<RiskPolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smile: Option<SmileSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub option: Option<OptionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_function: Option<TestFunctionJet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pricer: Option<PricerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub law: Option<LawSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
}

/// A configuration that failed to parse or lacks a section.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub message: String,
    pub line: Option<usize>,
    pub column: Option<usize>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "config error at line {l}, column {c}: {}", self.message),
            _ => write!(f, "config error: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn missing(section: &str, command: Command) -> ConfigError {
    ConfigError {
        message: format!("section `{section}` is required by `{command}`"),
        line: None,
        column: None,
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> std::result::Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError {
            message: e.to_string(),
            line: Some(e.line()),
            column: Some(e.column()),
        })
    }

    /// Fixes the command, checks the sections it needs and fills every
    /// default explicitly so that the echoed config is complete.
    pub fn resolve(mut self, command: Command) -> std::result::Result<Self, ConfigError> {
        if let Some(c) = self.command {
            if c != command {
                return Err(ConfigError {
                    message: format!("config is for `{c}` but `{command}` was requested"),
                    line: None,
                    column: None,
                });
            }
        }
        self.command = Some(command);
        let need = |present: bool, name: &str| if present { Ok(()) } else { Err(missing(name, command)) };
        match command {
            Command::Quote | Command::Smile => {
                need(self.market.is_some(), "market")?;
                need(self.uncertainty.is_some(), "uncertainty")?;
                if command == Command::Quote {
                    need(self.options.is_some(), "options")?;
                } else {
                    need(self.smile.is_some(), "smile")?;
                }
                self.policy.get_or_insert(RiskPolicy {
                    alpha: 0.05,
                    quantile_mode: uncertain_vol::QuantileMode::Gaussian,
                });
            }
            Command::EstimateLaw | Command::Validate | Command::Simulate => {
                need(self.model.is_some(), "model")?;
                need(self.option.is_some(), "option")?;
                need(self.simulation.is_some(), "simulation")?;
                if command == Command::Validate {
                    need(self.validation.is_some(), "validation")?;
                }
                let model = self.model.as_mut().expect("checked");
                if model.estimated_coefficients.is_none() {
                    model.estimated_coefficients = Some(model.basis.coefficients());
                }
                self.pricer.get_or_insert_with(PricerSpec::default);
                if command != Command::Simulate {
                    self.test_function.get_or_insert_with(TestFunctionJet::identity);
                    self.law.get_or_insert_with(LawSpec::default);
                }
            }
        }
        self.output.get_or_insert_with(OutputSpec::default);
        Ok(self)
    }

    pub fn format(&self) -> Format {
        self.output.as_ref().map_or(Format::Json, |o| o.format)
    }
}

/// `σ₀²T/4`, the ratio at which the at-the-money bias vanishes.
pub fn atm_neutral_ratio(m: &LognormalMarket, maturity: f64) -> f64 {
    0.25 * m.sigma0 * m.sigma0 * maturity
}
