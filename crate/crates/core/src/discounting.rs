//! Deterministic discounting: expected cash flows, present values under two
//! rates, IRR inversion, and the closed-form time-0 NPV coefficients.
//!
//! Everything here is a pure function of its inputs and safe to call from any
//! thread.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How per-year rates and growth compound across valuation dates.
///
/// `Continuous` integrates `exp`-discounted expected cash flows over the
/// remaining horizon. `DiscreteAnnual` sums over the horizon's date grid with
/// `(1 + r)` factors; growth parameters and rates must stay above -1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompoundingMode {
    Continuous,
    DiscreteAnnual,
}

/// Investor and market per-year discount rates sharing a compounding mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePair {
    pub investor: f64,
    pub market: f64,
    pub mode: CompoundingMode,
}

impl RatePair {
    pub fn new(investor: f64, market: f64, mode: CompoundingMode) -> Result<Self> {
        for (field, r) in [("investor_rate", investor), ("market_rate", market)] {
            if !r.is_finite() {
                return Err(Error::invalid(field, "rate must be finite"));
            }
            if mode == CompoundingMode::DiscreteAnnual && r <= -1.0 {
                return Err(Error::invalid(field, "annual compounding needs rate > -1"));
            }
        }
        Ok(RatePair {
            investor,
            market,
            mode,
        })
    }
}

/// Valuation horizon: expiry `t_end` in years split into `steps` equal steps,
/// so the date grid is `k * t_end / steps` for `k = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Horizon {
    pub t_end: f64,
    pub steps: usize,
}

impl Horizon {
    pub fn new(t_end: f64, steps: usize) -> Result<Self> {
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(Error::invalid("t_end", "horizon must be positive and finite"));
        }
        if steps == 0 {
            return Err(Error::invalid("steps", "at least one step is required"));
        }
        Ok(Horizon { t_end, steps })
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.steps as f64
    }

    /// Grid date `k`; the last index lands exactly on `t_end`.
    pub fn time(&self, k: usize) -> f64 {
        self.t_end * k as f64 / self.steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }
}

/// Parameters of one geometric-Brownian cash-flow factor.
///
/// `loading` is the correlation of the factor's shock with the common
/// systematic factor; the implied revenue-cost correlation of a two-factor
/// spec is the product of the two loadings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorParams {
    pub initial: f64,
    pub drift: f64,
    pub vol: f64,
    pub loading: f64,
}

/// Stochastic profit description: either one profit stream or correlated
/// revenue and cost streams whose difference is the profit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum CashFlowSpec {
    SingleStream { initial: f64, drift: f64, vol: f64 },
    TwoFactor { revenue: FactorParams, cost: FactorParams },
}

impl CashFlowSpec {
    pub fn single_stream(initial: f64, drift: f64, vol: f64) -> Result<Self> {
        validate_factor("cash_flow", initial, drift, vol, 0.0)?;
        Ok(CashFlowSpec::SingleStream { initial, drift, vol })
    }

    pub fn two_factor(revenue: FactorParams, cost: FactorParams) -> Result<Self> {
        validate_factor("revenue", revenue.initial, revenue.drift, revenue.vol, revenue.loading)?;
        validate_factor("cost", cost.initial, cost.drift, cost.vol, cost.loading)?;
        Ok(CashFlowSpec::TwoFactor { revenue, cost })
    }

    /// Copy of the cash-flow description with the level(s) replaced, used to
    /// evaluate discounting operations from an interior state.
    pub fn with_levels(&self, levels: (f64, f64)) -> Self {
        match *self {
            CashFlowSpec::SingleStream { drift, vol, .. } => CashFlowSpec::SingleStream {
                initial: levels.0,
                drift,
                vol,
            },
            CashFlowSpec::TwoFactor { revenue, cost } => CashFlowSpec::TwoFactor {
                revenue: FactorParams {
                    initial: levels.0,
                    ..revenue
                },
                cost: FactorParams {
                    initial: levels.1,
                    ..cost
                },
            },
        }
    }

    pub fn drifts(&self) -> (f64, f64) {
        match *self {
            CashFlowSpec::SingleStream { drift, .. } => (drift, drift),
            CashFlowSpec::TwoFactor { revenue, cost } => (revenue.drift, cost.drift),
        }
    }

    /// Conditional expectation at `t` of the cash flow at `tau`, reading the
    /// spec's levels as the current levels at `t`.
    pub fn expected_cashflow(&self, t: f64, tau: f64, mode: CompoundingMode) -> Result<f64> {
        if tau < t {
            return Err(Error::Domain(format!(
                "expectation date tau = {tau} precedes the conditioning date t = {t}"
            )));
        }
        let dt = tau - t;
        let grow = |drift: f64| -> Result<f64> {
            match mode {
                CompoundingMode::Continuous => Ok((drift * dt).exp()),
                CompoundingMode::DiscreteAnnual => {
                    if drift <= -1.0 {
                        return Err(Error::invalid("drift", "annual compounding needs drift > -1"));
                    }
                    Ok((1.0 + drift).powf(dt))
                }
            }
        };
        match *self {
            CashFlowSpec::SingleStream { initial, drift, .. } => Ok(initial * grow(drift)?),
            CashFlowSpec::TwoFactor { revenue, cost } => {
                Ok(revenue.initial * grow(revenue.drift)? - cost.initial * grow(cost.drift)?)
            }
        }
    }

    /// Present value at `t` of the expected cash flows over `[t, T]`,
    /// discounted at `rate`, reading the stored levels as the levels at `t`.
    ///
    /// Discrete-annual mode sums over the horizon's date grid from `t` on and
    /// at `t = T` returns the terminal cash flow alone; continuous mode is the
    /// integral of the discounted expectation, which vanishes at `t = T`.
    pub fn present_value(
        &self,
        rate: f64,
        mode: CompoundingMode,
        t: f64,
        horizon: &Horizon,
    ) -> Result<f64> {
        let t_end = horizon.t_end;
        if !(0.0..=t_end * (1.0 + 1e-12) + 1e-12).contains(&t) {
            return Err(Error::Domain(format!(
                "valuation date t = {t} lies outside [0, {t_end}]"
            )));
        }
        match mode {
            CompoundingMode::Continuous => {
                let span = (t_end - t).max(0.0);
                match *self {
                    CashFlowSpec::SingleStream { initial, drift, .. } => {
                        Ok(initial * growth_annuity(drift - rate, span))
                    }
                    CashFlowSpec::TwoFactor { revenue, cost } => {
                        Ok(revenue.initial * growth_annuity(revenue.drift - rate, span)
                            - cost.initial * growth_annuity(cost.drift - rate, span))
                    }
                }
            }
            CompoundingMode::DiscreteAnnual => {
                if rate <= -1.0 {
                    return Err(Error::invalid("rate", "annual compounding needs rate > -1"));
                }
                let mut pv = 0.0;
                for k in 0..=horizon.steps {
                    let tau = horizon.time(k);
                    if tau < t - 1e-12 {
                        continue;
                    }
                    let span = (tau - t).max(0.0);
                    pv += self.expected_cashflow(t, t + span, mode)? * (1.0 + rate).powf(-span);
                }
                Ok(pv)
            }
        }
    }
}

fn validate_factor(field: &'static str, initial: f64, drift: f64, vol: f64, loading: f64) -> Result<()> {
    if !(initial.is_finite() && initial >= 0.0) {
        return Err(Error::invalid(field, "initial level must be >= 0 and finite"));
    }
    if !drift.is_finite() {
        return Err(Error::invalid(field, "drift must be finite"));
    }
    if !(vol.is_finite() && vol >= 0.0) {
        return Err(Error::invalid(field, "volatility must be >= 0 and finite"));
    }
    if !(-1.0..=1.0).contains(&loading) {
        return Err(Error::invalid(field, "factor loading must lie in [-1, 1]"));
    }
    Ok(())
}

/// `∫_0^d exp(a s) ds`, i.e. `(exp(a d) - 1) / a`, with the removable
/// singularity at `a = 0` evaluated by its limit `d` below 1e-9 and by a
/// three-term Taylor expansion below 1e-4 to avoid cancellation.
pub fn growth_annuity(a: f64, d: f64) -> f64 {
    let mag = a.abs();
    if mag < 1e-9 {
        d
    } else if mag < 1e-4 {
        let ad = a * d;
        d * (1.0 + ad / 2.0 + ad * ad / 6.0)
    } else {
        (a * d).exp_m1() / a
    }
}

/// Closed-form coefficients `(c_1, c_2)` such that the time-`t` NPV expressed
/// in time-0 terms is `c_1 * x_1 - c_2 * x_2` under continuous compounding:
///
/// `c_i = [A(mu_i - r_p, T - t) - A(mu_i - r_q, T - t)] * exp(-r_p t)`
///
/// with `A` the growth annuity above. Coincident drifts and rates are handled
/// by the annuity's limit, never by an error.
pub fn npv0_coefficients(drifts: (f64, f64), rates: &RatePair, t: f64, t_end: f64) -> (f64, f64) {
    debug_assert_eq!(rates.mode, CompoundingMode::Continuous);
    let span = t_end - t;
    let disc = (-rates.investor * t).exp();
    let coeff = |drift: f64| {
        (growth_annuity(drift - rates.investor, span) - growth_annuity(drift - rates.market, span))
            * disc
    };
    (coeff(drifts.0), coeff(drifts.1))
}

/// Time-0 NPV from levels and coefficients: `c_1 x_1 - c_2 x_2`.
pub fn npv_time0(revenue_level: f64, cost_level: f64, coefficients: (f64, f64)) -> f64 {
    coefficients.0 * revenue_level - coefficients.1 * cost_level
}

const IRR_BRACKET: (f64, f64) = (-0.99, 10.0);
const IRR_SCAN_POINTS: usize = 32;
const IRR_RATE_TOL: f64 = 1e-10;

/// Backs out the constant rate that discounts the expected cash flows to the
/// observed `market_value` at time 0.
///
/// A 32-point scan first checks that the present value is strictly decreasing
/// in the rate; bisection then runs to 1e-10 rate tolerance. Mixed-sign
/// expected cash flows make the present value non-monotone, in which case the
/// first root found is attached to [`Error::IrrAmbiguous`].
pub fn solve_irr(
    spec: &CashFlowSpec,
    market_value: f64,
    mode: CompoundingMode,
    horizon: &Horizon,
) -> Result<f64> {
    if !(market_value.is_finite() && market_value > 0.0) {
        return Err(Error::invalid("market_value", "must be positive and finite"));
    }
    let (lo, hi) = IRR_BRACKET;
    let objective = |r: f64| -> Result<f64> {
        Ok(spec.present_value(r, mode, 0.0, horizon)? - market_value)
    };

    let mut rates = [0.0; IRR_SCAN_POINTS];
    let mut values = [0.0; IRR_SCAN_POINTS];
    for (i, (r, v)) in rates.iter_mut().zip(values.iter_mut()).enumerate() {
        *r = lo + (hi - lo) * i as f64 / (IRR_SCAN_POINTS - 1) as f64;
        *v = objective(*r)?;
    }
    let monotone = values.windows(2).all(|w| w[1] < w[0]);

    if monotone {
        if values[0] * values[IRR_SCAN_POINTS - 1] > 0.0 {
            return Err(Error::IrrNotBracketed { lo, hi });
        }
        return bisect(&objective, lo, hi);
    }

    let first_crossing = rates
        .windows(2)
        .zip(values.windows(2))
        .find(|(_, v)| v[0] == 0.0 || v[0] * v[1] <= 0.0);
    match first_crossing {
        Some((r, _)) => {
            let first_root = bisect(&objective, r[0], r[1])?;
            Err(Error::IrrAmbiguous { first_root })
        }
        None => Err(Error::IrrNotBracketed { lo, hi }),
    }
}

fn bisect(objective: &dyn Fn(f64) -> Result<f64>, mut lo: f64, mut hi: f64) -> Result<f64> {
    let mut f_lo = objective(lo)?;
    if f_lo == 0.0 {
        return Ok(lo);
    }
    while hi - lo > IRR_RATE_TOL {
        let mid = 0.5 * (lo + hi);
        let f_mid = objective(mid)?;
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_lo * f_mid < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            f_lo = f_mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
