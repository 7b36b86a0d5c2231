//! Real-option valuation on subjectively discounted cash flows.
//!
//! The engines value the option to acquire a project whose expected cash
//! flows are discounted at two rates, the investor's own and the one implied
//! by the market value. The option is written on the stream of NPVs expressed
//! in time-0 terms, so a non-zero value only ever arises from a difference
//! between the two rates.
//!
//! - [`discounting`]: expected cash flows, present values, IRR inversion and
//!   the closed-form NPV coefficients.
//! - [`binomial`]: annual profit lattices, value/NPV lattices under the two
//!   rates, the marketed-asset-disclaimer benchmark calibration, and backward
//!   induction.
//! - [`lsm`]: correlated two-factor simulation, least-squares Monte Carlo
//!   stopping, early exercise boundaries and exercise probabilities.
//! - [`risk`]: factor-premium decomposition and the partial-hedging transform
//!   of volatilities and discount rates.
//! - [`study`]: parameter-sweep grids that regenerate the sensitivity studies
//!   as property reports with measured margins.

pub mod binomial;
pub mod discounting;
pub mod error;
pub mod exec;
pub mod lsm;
pub mod risk;
pub mod study;

pub use binomial::{
    backward_induct, build_profit_lattice, mad_calibrate, mad_valuation, mad_value_lattice,
    sdcf_valuation, sdcf_value_lattices, value_of_delay, Lattice, MadCalibration, MadValuation,
    SdcfLattices, SdcfValuation,
};
pub use discounting::{
    growth_annuity, npv0_coefficients, npv_time0, solve_irr, CashFlowSpec, CompoundingMode,
    FactorParams, Horizon, RatePair,
};
pub use error::{Error, Result};
pub use lsm::{
    exercise_boundary, exercise_probability, lsm_value, npv_paths, simulate_paths,
    BoundaryEntry, BoundaryNote, ExerciseBoundary, FitEntry, LsmConfig, LsmResult, NpvPaths,
    PathSet, RegressionFilter, RegressionFit,
};
pub use risk::{
    hedge_transform, hedged_loading, idiosyncratic_vol, premia_to_rates,
    premia_to_rates_with_risk_free, FactorStructure, HedgedParams, RiskPremia,
};
