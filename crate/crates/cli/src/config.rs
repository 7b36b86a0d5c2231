//! Scenario configuration: JSON schema, validation with field-path
//! diagnostics, and conversion into engine inputs. Validation runs in full
//! before any computation so an invalid config can never leave partial
//! output behind.

use serde::Deserialize;

use realopt_core::{
    premia_to_rates_with_risk_free, solve_irr, CashFlowSpec, CompoundingMode, FactorParams,
    FactorStructure,
    Horizon, RatePair, RiskPremia,
};

/// One validation problem, addressed by the JSON path of the offending field.
#[derive(Debug, Clone)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EngineKind {
    BinomialSdcf,
    BinomialMad,
    Lsm,
}

impl EngineKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EngineKind::BinomialSdcf => "binomial-sdcf",
            EngineKind::BinomialMad => "binomial-mad",
            EngineKind::Lsm => "lsm",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorConfig {
    pub initial: f64,
    pub drift: f64,
    #[serde(default)]
    pub vol: Option<f64>,
    #[serde(default)]
    pub loading: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CashFlowConfig {
    SingleStream {
        initial: f64,
        drift: f64,
        vol: f64,
    },
    TwoFactor {
        revenue: FactorConfig,
        cost: FactorConfig,
    },
}

/// Investor rate plus either an explicit market rate or an observed market
/// value from which the IRR is backed out.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    pub investor: f64,
    #[serde(default)]
    pub market: Option<f64>,
    #[serde(default)]
    pub market_value: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PremiaConfig {
    pub investor_systematic: f64,
    pub market_systematic: f64,
    pub investor_idiosyncratic: f64,
    pub market_idiosyncratic: f64,
    pub loading: f64,
    pub vol: f64,
    pub hedge_ratio: f64,
    /// Common risk-free rate added to both sides; defaults to zero and never
    /// changes the rate difference.
    #[serde(default)]
    pub risk_free: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonConfig {
    pub t_end: f64,
    pub steps: usize,
}

fn default_paths() -> usize {
    10_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub cash_flow: CashFlowConfig,
    #[serde(default)]
    pub rates: Option<RatesConfig>,
    #[serde(default)]
    pub premia: Option<PremiaConfig>,
    pub horizon: HorizonConfig,
    pub engine: EngineKind,
    pub mode: CompoundingMode,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<String>,
}

/// Everything the engines need, produced only from a fully valid config.
pub struct ResolvedScenario {
    pub engine: EngineKind,
    pub spec: CashFlowSpec,
    pub rates: RatePair,
    /// Observed market value, when the config supplied one.
    pub market_value: Option<f64>,
    pub horizon: Horizon,
    pub mode: CompoundingMode,
    pub paths: usize,
    pub seed: u64,
}

impl ScenarioConfig {
    /// Structural validation with field-path diagnostics. Returns every
    /// problem found, not just the first.
    pub fn validate(&self) -> Vec<ConfigIssue> {
        let mut issues = Vec::new();
        let mut push = |path: &str, message: &str| {
            issues.push(ConfigIssue {
                path: path.to_string(),
                message: message.to_string(),
            })
        };

        match (&self.rates, &self.premia) {
            (None, None) => push("rates", "exactly one of `rates` or `premia` is required"),
            (Some(_), Some(_)) => {
                push("premia", "exactly one of `rates` or `premia` may be present")
            }
            _ => {}
        }
        if let Some(r) = &self.rates {
            if !r.investor.is_finite() {
                push("rates.investor", "must be finite");
            }
            match (r.market, r.market_value) {
                (None, None) => push(
                    "rates.market",
                    "one of `market` or `market_value` is required",
                ),
                (Some(_), Some(_)) => push(
                    "rates.market_value",
                    "only one of `market` or `market_value` may be present",
                ),
                (Some(m), None) if !m.is_finite() => push("rates.market", "must be finite"),
                (None, Some(q0)) if !(q0.is_finite() && q0 > 0.0) => push("rates.market_value", "must be positive"),
                _ => {}
            }
        }
        if let Some(p) = &self.premia {
            if self.engine != EngineKind::Lsm {
                push("premia", "premia-driven rates require the `lsm` engine");
            }
            if !(0.0..=1.0).contains(&p.hedge_ratio) {
                push("premia.hedge_ratio", "must lie in [0, 1]");
            }
            if !(-1.0..=1.0).contains(&p.loading) {
                push("premia.loading", "must lie in [-1, 1]");
            }
            if !(p.vol.is_finite() && p.vol >= 0.0) {
                push("premia.vol", "must be >= 0");
            }
            if !p.risk_free.is_finite() {
                push("premia.risk_free", "must be finite");
            }
        }

        if !(self.horizon.t_end.is_finite() && self.horizon.t_end > 0.0) {
            push("horizon.t_end", "must be positive and finite");
        }
        if self.horizon.steps == 0 {
            push("horizon.steps", "must be at least 1");
        }

        match self.engine {
            EngineKind::BinomialSdcf | EngineKind::BinomialMad => {
                if !matches!(self.cash_flow, CashFlowConfig::SingleStream { .. }) {
                    push("cash_flow.type", "binomial engines take a single-stream cash flow");
                }
                let years = self.horizon.t_end;
                if years.fract() != 0.0 || years as usize != self.horizon.steps {
                    push(
                        "horizon.steps",
                        "binomial engines use an annual grid: steps must equal t_end in whole years",
                    );
                }
                if self.engine == EngineKind::BinomialSdcf && self.mode != CompoundingMode::DiscreteAnnual {
                    push("mode", "the binomial-sdcf engine uses discrete-annual compounding");
                }
                if self.engine == EngineKind::BinomialMad {
                    match &self.rates {
                        Some(r) if r.market_value.is_none() => push(
                            "rates.market_value",
                            "the binomial-mad engine needs the observed market value",
                        ),
                        None => {}
                        _ => {}
                    }
                    if self.paths == 0 {
                        push("paths", "must be at least 1");
                    }
                }
            }
            EngineKind::Lsm => {
                if self.mode != CompoundingMode::Continuous {
                    push("mode", "the lsm engine uses continuous compounding");
                }
                if self.paths < 2 {
                    push("paths", "must be at least 2");
                }
                match &self.cash_flow {
                    CashFlowConfig::SingleStream { .. } => {
                        push("cash_flow.type", "the lsm engine takes a two-factor cash flow")
                    }
                    CashFlowConfig::TwoFactor { revenue, cost } => {
                        for (factor, path) in [(revenue, "cash_flow.revenue"), (cost, "cash_flow.cost")] {
                            if self.premia.is_some() {
                                if factor.vol.is_some() {
                                    push(
                                        &format!("{path}.vol"),
                                        "derived from the premia block; omit it",
                                    );
                                }
                                if factor.loading.is_some() {
                                    push(
                                        &format!("{path}.loading"),
                                        "derived from the premia block; omit it",
                                    );
                                }
                            } else {
                                if factor.vol.is_none() {
                                    push(&format!("{path}.vol"), "required with explicit rates");
                                }
                                if factor.loading.is_none() {
                                    push(&format!("{path}.loading"), "required with explicit rates");
                                }
                            }
                        }
                    }
                }
            }
        }
        issues
    }

    /// Builds the engine inputs. Assumes [`validate`](Self::validate) passed;
    /// remaining failures are numeric (for example an unbracketed IRR).
    pub fn resolve(&self) -> realopt_core::Result<ResolvedScenario> {
        let horizon = Horizon::new(self.horizon.t_end, self.horizon.steps)?;
        let spec = match &self.cash_flow {
            CashFlowConfig::SingleStream { initial, drift, vol } => {
                CashFlowSpec::single_stream(*initial, *drift, *vol)?
            }
            CashFlowConfig::TwoFactor { revenue, cost } => {
                let (vols, loadings) = if let Some(p) = &self.premia {
                    let fs = FactorStructure::new(p.loading, p.vol, revenue.drift, p.hedge_ratio)?;
                    let hedged = realopt_core::hedge_transform(
                        &fs,
                        &RiskPremia::new(
                            p.investor_systematic,
                            p.market_systematic,
                            p.investor_idiosyncratic,
                            p.market_idiosyncratic,
                        )?,
                    );
                    ((hedged.vol, hedged.vol), (p.loading, p.loading))
                } else {
                    (
                        (revenue.vol.unwrap_or(0.0), cost.vol.unwrap_or(0.0)),
                        (revenue.loading.unwrap_or(0.0), cost.loading.unwrap_or(0.0)),
                    )
                };
                CashFlowSpec::two_factor(
                    FactorParams {
                        initial: revenue.initial,
                        drift: revenue.drift,
                        vol: vols.0,
                        loading: loadings.0,
                    },
                    FactorParams {
                        initial: cost.initial,
                        drift: cost.drift,
                        vol: vols.1,
                        loading: loadings.1,
                    },
                )?
            }
        };

        let (rates, market_value) = if let Some(p) = &self.premia {
            let fs = FactorStructure::new(
                p.loading,
                p.vol,
                spec.drifts().0,
                p.hedge_ratio,
            )?;
            let premia = RiskPremia::new(
                p.investor_systematic,
                p.market_systematic,
                p.investor_idiosyncratic,
                p.market_idiosyncratic,
            )?;
            (premia_to_rates_with_risk_free(&fs, &premia, p.risk_free)?, None)
        } else {
            let r = self.rates.as_ref().expect("validated");
            let market = match (r.market, r.market_value) {
                (Some(m), _) => m,
                (None, Some(q0)) => solve_irr(&spec, q0, self.mode, &horizon)?,
                (None, None) => unreachable!("validated"),
            };
            (
                RatePair::new(r.investor, market, self.mode)?,
                r.market_value,
            )
        };

        Ok(ResolvedScenario {
            engine: self.engine,
            spec,
            rates,
            market_value,
            horizon,
            mode: self.mode,
            paths: self.paths,
            seed: self.seed,
        })
    }
}

/// The published configuration schema, kept alongside the parser.
pub const SCENARIO_SCHEMA: &str = r##"{
  "$schema": "https://json-schema.org/draft/2020-12/schema",
  "title": "realopt scenario",
  "type": "object",
  "required": ["cash_flow", "horizon", "engine", "mode"],
  "additionalProperties": false,
  "properties": {
    "cash_flow": {
      "oneOf": [
        {
          "type": "object",
          "required": ["type", "initial", "drift", "vol"],
          "properties": {
            "type": { "const": "single-stream" },
            "initial": { "type": "number", "minimum": 0 },
            "drift": { "type": "number" },
            "vol": { "type": "number", "minimum": 0 }
          }
        },
        {
          "type": "object",
          "required": ["type", "revenue", "cost"],
          "properties": {
            "type": { "const": "two-factor" },
            "revenue": { "$ref": "#/$defs/factor" },
            "cost": { "$ref": "#/$defs/factor" }
          }
        }
      ]
    },
    "rates": {
      "type": "object",
      "description": "exactly one of `rates` or `premia`; inside, exactly one of `market` / `market_value`",
      "required": ["investor"],
      "properties": {
        "investor": { "type": "number" },
        "market": { "type": "number" },
        "market_value": { "type": "number", "exclusiveMinimum": 0 }
      }
    },
    "premia": {
      "type": "object",
      "required": [
        "investor_systematic", "market_systematic",
        "investor_idiosyncratic", "market_idiosyncratic",
        "loading", "vol", "hedge_ratio"
      ],
      "properties": {
        "investor_systematic": { "type": "number" },
        "market_systematic": { "type": "number" },
        "investor_idiosyncratic": { "type": "number" },
        "market_idiosyncratic": { "type": "number" },
        "loading": { "type": "number", "minimum": -1, "maximum": 1 },
        "vol": { "type": "number", "minimum": 0 },
        "hedge_ratio": { "type": "number", "minimum": 0, "maximum": 1 },
        "risk_free": { "type": "number", "default": 0 }
      }
    },
    "horizon": {
      "type": "object",
      "required": ["t_end", "steps"],
      "properties": {
        "t_end": { "type": "number", "exclusiveMinimum": 0 },
        "steps": { "type": "integer", "minimum": 1 }
      }
    },
    "engine": { "enum": ["binomial-sdcf", "binomial-mad", "lsm"] },
    "mode": { "enum": ["continuous", "discrete-annual"] },
    "paths": { "type": "integer", "minimum": 1, "default": 10000 },
    "seed": { "type": "integer", "minimum": 0, "default": 0 },
    "out_dir": { "type": "string" }
  },
  "$defs": {
    "factor": {
      "type": "object",
      "required": ["initial", "drift"],
      "description": "vol and loading are required with explicit rates and forbidden with premia",
      "properties": {
        "initial": { "type": "number", "minimum": 0 },
        "drift": { "type": "number" },
        "vol": { "type": "number", "minimum": 0 },
        "loading": { "type": "number", "minimum": -1, "maximum": 1 }
      }
    }
  }
}
"##;
