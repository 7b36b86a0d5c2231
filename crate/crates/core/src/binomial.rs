//! Annual binomial lattices: profit trees under the subjective measure, value
//! and NPV trees under the two discount rates, the marketed-asset-disclaimer
//! (MAD) benchmark calibration, and backward induction of the option value.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::discounting::{CashFlowSpec, CompoundingMode, Horizon, RatePair};
use crate::error::{Error, Result};
use crate::exec;

/// Recombining binomial grid. Level `t` holds `t + 1` node values; node
/// `(t, j)` carries `j` up-moves and has children `(t+1, j+1)` and `(t+1, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    levels: Vec<Vec<f64>>,
}

impl Lattice {
    pub fn from_fn(steps: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let levels = (0..=steps)
            .map(|t| (0..=t).map(|j| f(t, j)).collect())
            .collect();
        Lattice { levels }
    }

    /// Number of time steps (levels minus one).
    pub fn steps(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn value(&self, t: usize, j: usize) -> f64 {
        self.levels[t][j]
    }

    pub fn level(&self, t: usize) -> &[f64] {
        &self.levels[t]
    }

    pub fn root(&self) -> f64 {
        self.levels[0][0]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Lattice {
        Lattice {
            levels: self
                .levels
                .iter()
                .map(|lvl| lvl.iter().map(|&v| f(v)).collect())
                .collect(),
        }
    }

    /// One `t,j,value` row per node.
    pub fn csv_string(&self) -> String {
        let mut out = String::from("t,j,value\n");
        for (t, lvl) in self.levels.iter().enumerate() {
            for (j, v) in lvl.iter().enumerate() {
                out.push_str(&format!("{t},{j},{v:.16e}\n"));
            }
        }
        out
    }
}

/// Profit lattice with equal-probability multipliers
/// `u = exp(drift - vol^2/2 + vol)` and `d = exp(drift - vol^2/2 - vol)`
/// on an annual grid; the up-probability is fixed at 1/2.
pub fn build_profit_lattice(x0: f64, drift: f64, vol: f64, years: usize) -> Result<Lattice> {
    if !(x0.is_finite() && x0 >= 0.0) {
        return Err(Error::invalid("x0", "initial profit must be >= 0 and finite"));
    }
    if !(vol.is_finite() && vol >= 0.0) {
        return Err(Error::invalid("vol", "volatility must be >= 0"));
    }
    if years == 0 {
        return Err(Error::invalid("years", "need at least one step"));
    }
    let up = (drift - 0.5 * vol * vol + vol).exp();
    let down = (drift - 0.5 * vol * vol - vol).exp();
    Ok(Lattice::from_fn(years, |t, j| {
        x0 * up.powi(j as i32) * down.powi((t - j) as i32)
    }))
}

/// Value and NPV lattices derived from a profit lattice.
#[derive(Debug, Clone)]
pub struct SdcfLattices {
    /// Present value of the remaining expected cash flows at the investor rate.
    pub investor_value: Lattice,
    /// Same expected cash flows at the market rate.
    pub market_value: Lattice,
    /// `(p - q)` discounted to time 0 at the investor rate.
    pub npv_time0: Lattice,
}

/// At each node: investor value `p`, market value `q` and the NPV in time-0
/// terms `(p - q) (1 + r_p)^{-t}`. Annual discrete compounding throughout,
/// matching the lattice's integer-year grid.
pub fn sdcf_value_lattices(profit: &Lattice, drift: f64, rates: &RatePair) -> Result<SdcfLattices> {
    if rates.mode != CompoundingMode::DiscreteAnnual {
        return Err(Error::invalid(
            "rates.mode",
            "value lattices use annual discrete compounding",
        ));
    }
    let years = profit.steps();
    let horizon = Horizon::new(years as f64, years)?;
    let node_value = |level: f64, t: usize, rate: f64| -> Result<f64> {
        let spec = CashFlowSpec::single_stream(level, drift, 0.0)?;
        spec.present_value(rate, CompoundingMode::DiscreteAnnual, t as f64, &horizon)
    };
    let mut p = Vec::with_capacity(years + 1);
    let mut q = Vec::with_capacity(years + 1);
    let mut npv0 = Vec::with_capacity(years + 1);
    for t in 0..=years {
        let disc = (1.0 + rates.investor).powi(-(t as i32));
        let mut pl = Vec::with_capacity(t + 1);
        let mut ql = Vec::with_capacity(t + 1);
        let mut nl = Vec::with_capacity(t + 1);
        for j in 0..=t {
            let x = profit.value(t, j);
            let pv_p = node_value(x, t, rates.investor)?;
            let pv_q = node_value(x, t, rates.market)?;
            pl.push(pv_p);
            ql.push(pv_q);
            nl.push((pv_p - pv_q) * disc);
        }
        p.push(pl);
        q.push(ql);
        npv0.push(nl);
    }
    Ok(SdcfLattices {
        investor_value: Lattice { levels: p },
        market_value: Lattice { levels: q },
        npv_time0: Lattice { levels: npv0 },
    })
}

/// Per-step calibration of the MAD benchmark: cross-sectional standard
/// deviations of value log-changes and dividend yields, from a seeded
/// simulation of annual profit paths.
#[derive(Debug, Clone, PartialEq)]
pub struct MadCalibration {
    /// `s_t` for steps 1..=T.
    pub step_vols: Vec<f64>,
    /// `delta_t = mean(x_{t-1}) / mean(p_{t-1})` for steps 1..=T.
    pub dividend_yields: Vec<f64>,
    pub paths: usize,
    pub seed: u64,
    /// Set when fewer than 1000 paths were requested.
    pub undersized: bool,
}

/// Simulates annual profit paths and calibrates the per-step value
/// volatilities and dividend yields.
///
/// Paths use the annual-growth multiplier `(1 + drift) exp(-v^2/2 + v Z)`
/// with `v = vol / (1 + drift)`, so each step grows by `1 + drift` in
/// expectation with relative dispersion `vol`, consistent with the annual
/// discrete compounding used everywhere else on the lattice side. Path values
/// are `p_t = sum_{tau >= t} x_tau exp(-r (tau - t))`, cum the date-`t` cash
/// flow, and the log change is measured against the prior mean value:
/// `R_t = ln(p_t / mean(p_{t-1}))`.
pub fn mad_calibrate(
    x0: f64,
    drift: f64,
    vol: f64,
    investor_rate: f64,
    years: usize,
    n_paths: usize,
    seed: u64,
) -> Result<MadCalibration> {
    if !(x0.is_finite() && x0 > 0.0) {
        return Err(Error::invalid("x0", "initial profit must be positive"));
    }
    if drift <= -1.0 {
        return Err(Error::invalid("drift", "annual growth needs drift > -1"));
    }
    if !(vol.is_finite() && vol >= 0.0) {
        return Err(Error::invalid("vol", "volatility must be >= 0"));
    }
    if years == 0 || n_paths == 0 {
        return Err(Error::invalid("n_paths", "need at least one step and one path"));
    }
    let undersized = n_paths < 1000;

    let v = vol / (1.0 + drift);
    let step_scale = (1.0 + drift) * (-0.5 * v * v).exp();
    // per path: the level vector and its cum-dividend value vector
    let per_path: Vec<(Vec<f64>, Vec<f64>)> = exec::map_indexed(n_paths, |p| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(p as u64);
        let mut x = Vec::with_capacity(years + 1);
        x.push(x0);
        for _ in 0..years {
            let z: f64 = StandardNormal.sample(&mut rng);
            x.push(x.last().unwrap() * step_scale * (v * z).exp());
        }
        let mut value = vec![0.0; years + 1];
        value[years] = x[years];
        for t in (0..years).rev() {
            value[t] = x[t] + value[t + 1] * (-investor_rate).exp();
        }
        (x, value)
    });

    let n = n_paths as f64;
    let mut mean_x = vec![0.0; years + 1];
    let mut mean_value = vec![0.0; years + 1];
    for (x, value) in &per_path {
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mad_calibrate path values"));
        }
        for t in 0..=years {
            mean_x[t] += x[t];
            mean_value[t] += value[t];
        }
    }
    for t in 0..=years {
        mean_x[t] /= n;
        mean_value[t] /= n;
    }

    let mut step_vols = Vec::with_capacity(years);
    let mut dividend_yields = Vec::with_capacity(years);
    for t in 1..=years {
        let mut sum = 0.0;
        for (_, value) in &per_path {
            sum += (value[t] / mean_value[t - 1]).ln();
        }
        let mean_r = sum / n;
        let mut ss = 0.0;
        for (_, value) in &per_path {
            let d = (value[t] / mean_value[t - 1]).ln() - mean_r;
            ss += d * d;
        }
        let var = if n_paths > 1 { ss / (n - 1.0) } else { 0.0 };
        step_vols.push(var.sqrt());
        dividend_yields.push(mean_x[t - 1] / mean_value[t - 1]);
    }

    Ok(MadCalibration {
        step_vols,
        dividend_yields,
        paths: n_paths,
        seed,
        undersized,
    })
}

/// Risk-neutral (zero-drift, zero risk-free rate) value lattice net of
/// dividends: the step recursion is `child = parent (1 - delta_t) u_t` (up)
/// or `(1 - delta_t) d_t` (down) with `u_t = exp(-s_t^2/2 + s_t)`,
/// `d_t = exp(-s_t^2/2 - s_t)`.
///
/// With time-varying `s_t` that recursion does not recombine exactly, so the
/// grid is anchored on the all-up path and each level is filled downward with
/// the level's own `d_t/u_t` ratio; for constant `s` this reproduces the
/// stated recursion node for node.
pub fn mad_value_lattice(p0: f64, calibration: &MadCalibration) -> Result<Lattice> {
    if !(p0.is_finite() && p0 > 0.0) {
        return Err(Error::invalid("p0", "root value must be positive"));
    }
    let years = calibration.step_vols.len();
    if years == 0 || calibration.dividend_yields.len() != years {
        return Err(Error::invalid("calibration", "empty or inconsistent calibration"));
    }
    for (s, d) in calibration.step_vols.iter().zip(&calibration.dividend_yields) {
        if !(s.is_finite() && *s >= 0.0) {
            return Err(Error::invalid("step_vols", "must be >= 0"));
        }
        if !(*d > 0.0 && *d < 1.0) {
            return Err(Error::invalid("dividend_yields", "must lie in (0, 1)"));
        }
    }
    let mut levels = vec![vec![p0]];
    let mut top = p0;
    for t in 1..=years {
        let s = calibration.step_vols[t - 1];
        let keep = 1.0 - calibration.dividend_yields[t - 1];
        top *= keep * (-0.5 * s * s + s).exp();
        let ratio = (-2.0 * s).exp();
        let mut lvl = vec![0.0; t + 1];
        lvl[t] = top;
        for j in (0..t).rev() {
            lvl[j] = lvl[j + 1] * ratio;
        }
        levels.push(lvl);
    }
    Ok(Lattice { levels })
}

/// Backward induction of the option value over an already-positive payoff
/// lattice expressed in time-0 terms:
/// `V = max(P, pi V_up + (1 - pi) V_down)` with no further discounting.
/// Returns the value lattice and its root.
pub fn backward_induct(payoff: &Lattice, up_prob: f64) -> Result<(Lattice, f64)> {
    if !(0.0..=1.0).contains(&up_prob) {
        return Err(Error::invalid("up_prob", "probability must lie in [0, 1]"));
    }
    let mut levels = payoff.levels.clone();
    let steps = payoff.steps();
    for t in (0..steps).rev() {
        for j in 0..=t {
            let continuation = up_prob * levels[t + 1][j + 1] + (1.0 - up_prob) * levels[t + 1][j];
            levels[t][j] = payoff.value(t, j).max(continuation);
        }
    }
    let root = levels[0][0];
    Ok((Lattice { levels }, root))
}

/// `v_0 = V_0 - P_0`, the excess of the option value over the immediate
/// exercise payoff. Tiny negative differences from rounding are clamped to
/// zero; anything beyond 1e-9 is an internal consistency error because the
/// induction guarantees dominance.
pub fn value_of_delay(option_value: f64, immediate_payoff: f64) -> Result<f64> {
    let delay = option_value - immediate_payoff;
    if delay < -1e-9 {
        return Err(Error::Inconsistent(format!(
            "option value {option_value} fell below the immediate payoff {immediate_payoff}"
        )));
    }
    Ok(delay.max(0.0))
}

/// End-to-end valuation on the subjective lattice.
#[derive(Debug, Clone)]
pub struct SdcfValuation {
    pub option_value: f64,
    pub value_of_delay: f64,
    pub npv0: f64,
    pub profit: Lattice,
    pub lattices: SdcfLattices,
    pub option_lattice: Lattice,
}

pub fn sdcf_valuation(
    x0: f64,
    drift: f64,
    vol: f64,
    rates: &RatePair,
    years: usize,
) -> Result<SdcfValuation> {
    let profit = build_profit_lattice(x0, drift, vol, years)?;
    let lattices = sdcf_value_lattices(&profit, drift, rates)?;
    let payoff = lattices.npv_time0.map(|v| v.max(0.0));
    let (option_lattice, option_value) = backward_induct(&payoff, 0.5)?;
    let npv0 = lattices.npv_time0.root();
    let value_of_delay = value_of_delay(option_value, npv0.max(0.0))?;
    Ok(SdcfValuation {
        option_value,
        value_of_delay,
        npv0,
        profit,
        lattices,
        option_lattice,
    })
}

/// End-to-end valuation on the MAD benchmark lattice against a fixed market
/// value `q0`.
#[derive(Debug, Clone)]
pub struct MadValuation {
    pub option_value: f64,
    pub value_of_delay: f64,
    pub npv0: f64,
    pub calibration: MadCalibration,
    pub value_lattice: Lattice,
    pub option_lattice: Lattice,
}

#[allow(clippy::too_many_arguments)]
pub fn mad_valuation(
    x0: f64,
    drift: f64,
    vol: f64,
    investor_rate: f64,
    q0: f64,
    p0: f64,
    years: usize,
    n_paths: usize,
    seed: u64,
) -> Result<MadValuation> {
    if !(q0.is_finite() && q0 > 0.0) {
        return Err(Error::invalid("q0", "market value must be positive"));
    }
    let calibration = mad_calibrate(x0, drift, vol, investor_rate, years, n_paths, seed)?;
    let value_lattice = mad_value_lattice(p0, &calibration)?;
    let payoff = value_lattice.map(|v| (v - q0).max(0.0));
    let (option_lattice, option_value) = backward_induct(&payoff, 0.5)?;
    let npv0 = p0 - q0;
    let value_of_delay = value_of_delay(option_value, npv0.max(0.0))?;
    Ok(MadValuation {
        option_value,
        value_of_delay,
        npv0,
        calibration,
        value_lattice,
        option_lattice,
    })
}
