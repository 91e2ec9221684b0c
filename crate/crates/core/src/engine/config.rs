//! Declarative run description loaded from JSON.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::AgentsConfig;
use crate::amount::PerMil;
use crate::bank::BankParams;
use crate::BankId;

pub const SCHEMA_VERSION: u32 = 1;

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

fn hundred() -> u32 {
    100
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    pub steps: u32,
    /// Minor units per major currency unit; amounts in the file are minor units.
    #[serde(default = "hundred")]
    pub money_unit: u32,
    pub country: CountryConfig,
    pub banks: Vec<BankConfig>,
    #[serde(default)]
    pub agents: AgentsConfig,
    /// Per-loan, per-step default probability in basis points.
    #[serde(default)]
    pub default_rate_bp: u32,
    /// Per-period factors for indexed loans.
    #[serde(default)]
    pub index_series: Vec<PerMil>,
    #[serde(default)]
    pub event_schedule: Vec<ScheduledChange>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountryConfig {
    #[serde(default)]
    pub name: String,
    pub central_bank: CentralBankConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CentralBankConfig {
    pub base_rate_bp: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub params: BankParams,
}

/// A whitelisted parameter change applied at the start of `step`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduledChange {
    pub step: u32,
    pub param: String,
    pub value: u32,
}

/// Parameters that may change during a run. Rates are basis points, ratios per mil.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamPath {
    BaseRate,
    DefaultRate,
    ReserveRequirement(Option<BankId>),
    CapitalRequirement(Option<BankId>),
    DividendRate(Option<BankId>),
}

impl ParamPath {
    /// Largest accepted value.
    pub fn max_value(self) -> u32 {
        match self {
            ParamPath::BaseRate => 100_000,
            ParamPath::DefaultRate => 10_000,
            _ => 1000,
        }
    }

    /// Converts a decimal fraction (`0.05`) to this parameter's integer unit.
    pub fn from_fraction(self, x: f64) -> u32 {
        let scale = match self {
            ParamPath::BaseRate | ParamPath::DefaultRate => 10_000.0,
            _ => 1000.0,
        };
        (x * scale).round() as u32
    }

    pub fn bank(self) -> Option<BankId> {
        match self {
            ParamPath::ReserveRequirement(b) | ParamPath::CapitalRequirement(b) | ParamPath::DividendRate(b) => b,
            _ => None,
        }
    }
}

impl fmt::Display for ParamPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (name, bank) = match self {
            ParamPath::BaseRate => ("base_rate", None),
            ParamPath::DefaultRate => ("default_rate", None),
            ParamPath::ReserveRequirement(b) => ("reserve_requirement", *b),
            ParamPath::CapitalRequirement(b) => ("capital_requirement", *b),
            ParamPath::DividendRate(b) => ("dividend_rate", *b),
        };
        match bank {
            Some(b) => write!(f, "banks.{b}.{name}"),
            None => f.write_str(name),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid parameter path `{0}`")]
pub struct InvalidParamPath(pub String);

impl FromStr for ParamPath {
    type Err = InvalidParamPath;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || InvalidParamPath(s.to_string());
        let (bank, name) = match s.strip_prefix("banks.") {
            Some(rest) => {
                let (n, name) = rest.split_once('.').ok_or_else(bad)?;
                (Some(n.parse::<BankId>().map_err(|_| bad())?), name)
            }
            None => (None, s),
        };
        let p = match name {
            "base_rate" | "base_rate_bp" => ParamPath::BaseRate,
            "default_rate" | "default_rate_bp" => ParamPath::DefaultRate,
            "reserve_requirement" | "R" => ParamPath::ReserveRequirement(bank),
            "capital_requirement" | "C" => ParamPath::CapitalRequirement(bank),
            "dividend_rate" => ParamPath::DividendRate(bank),
            _ => return Err(bad()),
        };
        if bank.is_some() && p.bank().is_none() {
            return Err(bad());
        }
        Ok(p)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl ConfigError {
    fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Schema { path: path.into(), message: message.into() }
    }
}

impl SimulationConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: SimulationConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::schema(if path.is_empty() { ".".into() } else { path }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let p = path.as_ref();
        let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io { path: p.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }

    /// Semantic checks beyond the JSON shape.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::schema("schema_version", format!("unsupported version {}", self.schema_version)));
        }
        if self.money_unit == 0 {
            return Err(ConfigError::schema("money_unit", "must be positive"));
        }
        if self.banks.is_empty() && !(self.agents.borrowers.is_empty() && self.agents.savers.is_empty() && self.agents.investors.is_empty()) {
            return Err(ConfigError::schema("banks", "agents need at least one bank"));
        }
        if self.default_rate_bp > 10_000 {
            return Err(ConfigError::schema("default_rate_bp", "must be at most 10000"));
        }
        let nbanks = self.banks.len();
        let bank_ok = |b: BankId| (b as usize) < nbanks;
        for (i, b) in self.banks.iter().enumerate() {
            b.params.validate().map_err(|m| ConfigError::schema(format!("banks[{i}].params"), m))?;
        }
        for (i, g) in self.agents.borrowers.iter().enumerate() {
            let at = |f: &str| format!("agents.borrowers[{i}].{f}");
            for (f, b) in [("bank_of_account", Some(g.bank_of_account)), ("lender_bank", g.lender_bank), ("employer_bank", g.employer_bank)] {
                if let Some(b) = b {
                    if !bank_ok(b) {
                        return Err(ConfigError::schema(at(f), format!("no bank {b}")));
                    }
                }
            }
            if g.principal <= 0 {
                return Err(ConfigError::schema(at("principal"), "must be positive"));
            }
            if g.periods == 0 {
                return Err(ConfigError::schema(at("periods"), "must be at least 1"));
            }
            if g.loan_window == 0 {
                return Err(ConfigError::schema(at("loan_window"), "must be at least 1"));
            }
            if g.initial_deposit < 0 {
                return Err(ConfigError::schema(at("initial_deposit"), "must not be negative"));
            }
            if g.risk_weight.is_some_and(|w| w.0 > 1000) {
                return Err(ConfigError::schema(at("risk_weight"), "must be at most 1000 per mil"));
            }
            if g.instrument == crate::instruments::Instrument::Indexed && (self.index_series.len() as u32) < g.periods {
                return Err(ConfigError::schema("index_series", format!("shorter than the {} periods of indexed loans", g.periods)));
            }
        }
        for (i, s) in self.agents.savers.iter().enumerate() {
            if !bank_ok(s.bank) {
                return Err(ConfigError::schema(format!("agents.savers[{i}].bank"), format!("no bank {}", s.bank)));
            }
            if s.cash_endowment < 0 {
                return Err(ConfigError::schema(format!("agents.savers[{i}].cash_endowment"), "must not be negative"));
            }
        }
        for (i, v) in self.agents.investors.iter().enumerate() {
            if !bank_ok(v.bank) {
                return Err(ConfigError::schema(format!("agents.investors[{i}].bank"), format!("no bank {}", v.bank)));
            }
            if v.cash_endowment < 0 {
                return Err(ConfigError::schema(format!("agents.investors[{i}].cash_endowment"), "must not be negative"));
            }
        }
        let gov = &self.agents.government;
        if gov.tax_rate.0 > 1000 {
            return Err(ConfigError::schema("agents.government.tax_rate", "must be at most 1000 per mil"));
        }
        if gov.cash_endowment < 0 {
            return Err(ConfigError::schema("agents.government.cash_endowment", "must not be negative"));
        }
        for (i, t) in gov.treasuries.iter().enumerate() {
            if !bank_ok(t.bank) || t.principal <= 0 || t.term == 0 {
                return Err(ConfigError::schema(format!("agents.government.treasuries[{i}]"), "needs an existing bank, positive principal and term"));
            }
        }
        // deflationary factors would need a loss cascade on the index leg
        if let Some(i) = self.index_series.iter().position(|f| f.0 < 1000) {
            return Err(ConfigError::schema(format!("index_series[{i}]"), "factors below 1000 per mil are not supported"));
        }
        for (i, ev) in self.event_schedule.iter().enumerate() {
            let p: ParamPath = ev.param.parse().map_err(|e: InvalidParamPath| ConfigError::schema(format!("event_schedule[{i}].param"), e.to_string()))?;
            check_value(p, ev.value, nbanks).map_err(|m| ConfigError::schema(format!("event_schedule[{i}].value"), m))?;
        }
        Ok(())
    }

    /// Sets a parameter's starting value (used by batch sweeps).
    pub fn set_initial(&mut self, p: ParamPath, value: u32) -> Result<(), String> {
        check_value(p, value, self.banks.len())?;
        match p {
            ParamPath::BaseRate => self.country.central_bank.base_rate_bp = value,
            ParamPath::DefaultRate => self.default_rate_bp = value,
            _ => {
                for (i, b) in self.banks.iter_mut().enumerate() {
                    if p.bank().is_some_and(|x| x as usize != i) {
                        continue;
                    }
                    match p {
                        ParamPath::ReserveRequirement(_) => b.params.reserve_requirement = PerMil(value),
                        ParamPath::CapitalRequirement(_) => b.params.capital_requirement = PerMil(value),
                        ParamPath::DividendRate(_) => b.params.dividend_rate = PerMil(value),
                        _ => unreachable!(),
                    }
                }
            }
        }
        Ok(())
    }
}

/// Range and bank-index check for a parameter value.
pub fn check_value(p: ParamPath, value: u32, nbanks: usize) -> Result<(), String> {
    if value > p.max_value() {
        return Err(format!("{p} must be at most {}", p.max_value()));
    }
    if let Some(b) = p.bank() {
        if b as usize >= nbanks {
            return Err(format!("no bank {b}"));
        }
    }
    Ok(())
}
