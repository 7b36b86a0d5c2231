//! Factor-premium decomposition and the partial-hedging transform of
//! volatilities and discount rates. The risk-free rate is held at zero, so
//! rates are pure risk premia; a nonzero rate would add the same constant to
//! both and leave every rate difference unchanged.

use serde::{Deserialize, Serialize};

use crate::discounting::{CompoundingMode, RatePair};
use crate::error::{Error, Result};

/// Prices of risk attached to the common systematic factor and to the
/// idiosyncratic factors, for the investor (`p`) and the market (`q`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskPremia {
    pub investor_systematic: f64,
    pub market_systematic: f64,
    pub investor_idiosyncratic: f64,
    pub market_idiosyncratic: f64,
}

impl RiskPremia {
    pub fn new(
        investor_systematic: f64,
        market_systematic: f64,
        investor_idiosyncratic: f64,
        market_idiosyncratic: f64,
    ) -> Result<Self> {
        for (field, v) in [
            ("investor_systematic", investor_systematic),
            ("market_systematic", market_systematic),
            ("investor_idiosyncratic", investor_idiosyncratic),
            ("market_idiosyncratic", market_idiosyncratic),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(field, "premium must be finite"));
            }
        }
        Ok(RiskPremia {
            investor_systematic,
            market_systematic,
            investor_idiosyncratic,
            market_idiosyncratic,
        })
    }
}

/// Symmetric two-factor structure: both cash flows share the drift `drift`,
/// volatility `vol` and systematic loading `loading` (so the revenue-cost
/// correlation is `loading^2`), and a fraction `hedge_ratio` of the
/// systematic factor is hedged away.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorStructure {
    pub loading: f64,
    pub vol: f64,
    pub drift: f64,
    pub hedge_ratio: f64,
}

impl FactorStructure {
    pub fn new(loading: f64, vol: f64, drift: f64, hedge_ratio: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&loading) {
            return Err(Error::invalid("loading", "must lie in [-1, 1]"));
        }
        if !(vol.is_finite() && vol >= 0.0) {
            return Err(Error::invalid("vol", "must be >= 0 and finite"));
        }
        if !drift.is_finite() {
            return Err(Error::invalid("drift", "must be finite"));
        }
        if !(0.0..=1.0).contains(&hedge_ratio) {
            return Err(Error::invalid("hedge_ratio", "must lie in [0, 1]"));
        }
        Ok(FactorStructure { loading, vol, drift, hedge_ratio })
    }
}

/// Volatility and discount rates after hedging a fraction `h` of the
/// systematic factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HedgedParams {
    /// `vol * sqrt(1 - (h loading)^2)`.
    pub vol: f64,
    pub investor_rate: f64,
    pub market_rate: f64,
}

/// Applies the hedging transform:
///
/// - volatility: `vol_h = vol sqrt(1 - (h loading)^2)`
/// - rates: `r = [lambda_sys (1 - h) loading + lambda_idio sqrt(1 - loading^2)] vol`
///   for each side's premia, with the risk-free contribution zero.
pub fn hedge_transform(fs: &FactorStructure, premia: &RiskPremia) -> HedgedParams {
    let h = fs.hedge_ratio;
    let hedged = h * fs.loading;
    let vol = fs.vol * (1.0 - hedged * hedged).sqrt();
    let idio = (1.0 - fs.loading * fs.loading).sqrt();
    let rate = |systematic: f64, idiosyncratic: f64| {
        (systematic * (1.0 - h) * fs.loading + idiosyncratic * idio) * fs.vol
    };
    HedgedParams {
        vol,
        investor_rate: rate(premia.investor_systematic, premia.investor_idiosyncratic),
        market_rate: rate(premia.market_systematic, premia.market_idiosyncratic),
    }
}

/// Un-hedgeable part of a factor's volatility: `vol sqrt(1 - loading^2)`.
pub fn idiosyncratic_vol(vol: f64, loading: f64) -> f64 {
    vol * (1.0 - loading * loading).sqrt()
}

/// Systematic loading left on the hedged cash flow when the idiosyncratic
/// component is preserved: the residual systematic volatility is
/// `vol loading sqrt(1 - h^2)` out of a total `vol_h`.
pub fn hedged_loading(fs: &FactorStructure) -> f64 {
    let h = fs.hedge_ratio;
    let hedged = h * fs.loading;
    let total = (1.0 - hedged * hedged).sqrt();
    fs.loading * (1.0 - h * h).sqrt() / total
}

/// Wraps [`hedge_transform`] into an ordinary continuous-mode [`RatePair`]
/// for the engines.
pub fn premia_to_rates(fs: &FactorStructure, premia: &RiskPremia) -> Result<RatePair> {
    premia_to_rates_with_risk_free(fs, premia, 0.0)
}

/// Same, with a nonzero risk-free rate added to both sides. The offset is
/// common to investor and market, so every rate difference (and with it the
/// option value) is unchanged up to discounting level effects.
pub fn premia_to_rates_with_risk_free(
    fs: &FactorStructure,
    premia: &RiskPremia,
    risk_free: f64,
) -> Result<RatePair> {
    if !risk_free.is_finite() {
        return Err(Error::invalid("risk_free", "must be finite"));
    }
    let hedged = hedge_transform(fs, premia);
    RatePair::new(
        hedged.investor_rate + risk_free,
        hedged.market_rate + risk_free,
        CompoundingMode::Continuous,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn premia(l0p: f64, l0q: f64, lp: f64, lq: f64) -> RiskPremia {
        RiskPremia::new(l0p, l0q, lp, lq).unwrap()
    }

    #[test]
    fn identity_hedge_leaves_everything() {
        let fs = FactorStructure::new(0.6, 0.4, 0.3, 0.0).unwrap();
        let pr = premia(0.3, 0.25, 0.8, 0.5);
        let hp = hedge_transform(&fs, &pr);
        assert_eq!(hp.vol, 0.4);
        assert_relative_eq!(
            hp.investor_rate,
            (0.3 * 0.6 + 0.8 * (1.0f64 - 0.36).sqrt()) * 0.4,
            max_relative = 1e-15
        );
        assert_relative_eq!(hedged_loading(&fs), 0.6, max_relative = 1e-15);
    }

    #[test]
    fn perfect_hedge_with_agreed_idiosyncratic_premia_equalizes_rates() {
        let fs = FactorStructure::new(0.6, 0.4, 0.3, 1.0).unwrap();
        let pr = premia(0.3, 0.7, 0.9, 0.9);
        let hp = hedge_transform(&fs, &pr);
        assert_eq!(hp.investor_rate, hp.market_rate);
        assert_relative_eq!(hp.vol, idiosyncratic_vol(0.4, 0.6), max_relative = 1e-15);
        assert_relative_eq!(hedged_loading(&fs), 0.0, max_relative = 1e-15);
    }

    #[test]
    fn rate_difference_is_affine_in_hedge_ratio() {
        let pr = premia(0.35, 0.2, 0.9, 0.4);
        let (loading, vol) = (0.5, 0.3);
        let slope = -(pr.investor_systematic - pr.market_systematic) * loading * vol;
        let intercept = ((pr.investor_systematic - pr.market_systematic) * loading
            + (pr.investor_idiosyncratic - pr.market_idiosyncratic)
                * (1.0f64 - loading * loading).sqrt())
            * vol;
        for h in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let fs = FactorStructure::new(loading, vol, 0.3, h).unwrap();
            let hp = hedge_transform(&fs, &pr);
            assert_relative_eq!(
                hp.investor_rate - hp.market_rate,
                intercept + slope * h,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn idiosyncratic_vol_limits() {
        assert_eq!(idiosyncratic_vol(0.7, 1.0), 0.0);
        assert_eq!(idiosyncratic_vol(0.7, 0.0), 0.7);
    }

    #[test]
    fn premia_to_rates_projects_hedge_transform() {
        let fs = FactorStructure::new(0.5, 0.3, 0.3, 0.4).unwrap();
        let pr = premia(0.3, 0.3, 0.9, 0.0);
        let rates = premia_to_rates(&fs, &pr).unwrap();
        let hp = hedge_transform(&fs, &pr);
        assert_eq!(rates.investor, hp.investor_rate);
        assert_eq!(rates.market, hp.market_rate);
        assert_eq!(rates.mode, CompoundingMode::Continuous);
    }

    #[test]
    fn risk_free_offset_shifts_both_rates_equally() {
        let fs = FactorStructure::new(0.5, 0.3, 0.3, 0.4).unwrap();
        let pr = premia(0.35, 0.2, 0.9, 0.4);
        let base = premia_to_rates(&fs, &pr).unwrap();
        let shifted = premia_to_rates_with_risk_free(&fs, &pr, 0.02).unwrap();
        assert_eq!(shifted.investor, base.investor + 0.02);
        assert_eq!(shifted.market, base.market + 0.02);
        assert!(
            ((shifted.investor - shifted.market) - (base.investor - base.market)).abs() < 1e-15
        );
    }

    proptest! {
        /// Pythagorean decomposition: systematic and idiosyncratic variance
        /// add back to the total.
        #[test]
        fn vol_decomposition(vol in 0.0f64..2.0, loading in -1.0f64..1.0) {
            let ids = idiosyncratic_vol(vol, loading);
            let sys = vol * loading;
            prop_assert!((sys * sys + ids * ids - vol * vol).abs() <= 1e-12 * (1.0 + vol * vol));
        }

        /// Full agreement in premia nulls the rate difference for every
        /// hedge ratio.
        #[test]
        fn full_agreement_nullity(
            l0 in -1.0f64..1.0,
            li in -1.0f64..1.0,
            loading in -1.0f64..1.0,
            vol in 0.0f64..1.0,
            h in 0.0f64..1.0,
        ) {
            let fs = FactorStructure::new(loading, vol, 0.3, h).unwrap();
            let hp = hedge_transform(&fs, &premia(l0, l0, li, li));
            prop_assert_eq!(hp.investor_rate, hp.market_rate);
        }

        /// Hedged volatility decreases in the hedge ratio down to the
        /// idiosyncratic floor.
        #[test]
        fn vol_ordering(loading in 0.05f64..1.0, vol in 0.01f64..1.0) {
            let mut last = f64::INFINITY;
            for h in [0.0, 0.25, 0.5, 0.75, 1.0] {
                let fs = FactorStructure::new(loading, vol, 0.3, h).unwrap();
                let hp = hedge_transform(&fs, &premia(0.3, 0.3, 0.0, 0.0));
                prop_assert!(hp.vol < last || (h == 0.0 && hp.vol == vol));
                last = hp.vol;
            }
            let fs = FactorStructure::new(loading, vol, 0.3, 1.0).unwrap();
            let hp = hedge_transform(&fs, &premia(0.3, 0.3, 0.0, 0.0));
            prop_assert!((hp.vol - idiosyncratic_vol(vol, loading)).abs() <= 1e-15);
        }
    }
}
