//! Price-taking single-unit dispatch with startup costs and minimum load.
//!
//! With one unit and exogenous prices the output level decouples per hour:
//! when on, the best output is capacity if the price covers variable cost
//! and minimum load otherwise. What remains is a binary on/off sequence with
//! a startup charge on every off-to-on transition, solved exactly by a
//! two-state dynamic program over hours.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hours per planning horizon: 30 days plus a one-day overlap.
pub const HORIZON_HOURS: usize = 744;
pub const OVERLAP_HOURS: usize = 24;

/// EUR per MWh electric from fuel and carbon cost per MWh thermal.
pub fn variable_cost(fuel_cost: f64, carbon_cost: f64, efficiency: f64) -> Result<f64> {
    if !(efficiency > 0.0) {
        return Err(Error::Domain(format!("efficiency must be positive, got {efficiency}")));
    }
    Ok((fuel_cost + carbon_cost) / efficiency)
}

/// EUR for one cold start: capacity times depreciation plus start fuel cost.
pub fn startup_cost(
    capacity_mw: f64,
    depreciation_eur_mw: f64,
    cold_start_fuel_mwh_mw: f64,
    cold_start_factor: f64,
    fuel_plus_carbon: f64,
) -> Result<f64> {
    let inputs = [
        capacity_mw,
        depreciation_eur_mw,
        cold_start_fuel_mwh_mw,
        cold_start_factor,
        fuel_plus_carbon,
    ];
    if inputs.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::Domain(format!(
            "startup cost inputs must be non-negative, got {inputs:?}"
        )));
    }
    Ok(capacity_mw * (depreciation_eur_mw + cold_start_fuel_mwh_mw * cold_start_factor * fuel_plus_carbon))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitState {
    #[default]
    Off,
    On,
}

impl UnitState {
    pub fn is_on(self) -> bool {
        self == UnitState::On
    }
}

impl From<bool> for UnitState {
    fn from(on: bool) -> Self {
        if on {
            UnitState::On
        } else {
            UnitState::Off
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchProblem {
    pub prices: Vec<f64>,
    pub variable_cost: Vec<f64>,
    /// EUR charged in the hour a start happens.
    pub startup_cost: Vec<f64>,
    pub capacity_mw: f64,
    pub min_load_mw: f64,
    /// State in the hour before the first hour of the horizon.
    pub initial_state: UnitState,
}

impl DispatchProblem {
    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let h = self.prices.len();
        if h == 0 {
            return Err(Error::Domain("empty dispatch horizon".into()));
        }
        if self.variable_cost.len() != h || self.startup_cost.len() != h {
            return Err(Error::Shape(format!(
                "prices ({h}), variable cost ({}) and startup cost ({}) differ in length",
                self.variable_cost.len(),
                self.startup_cost.len()
            )));
        }
        if !(self.min_load_mw >= 0.0 && self.min_load_mw <= self.capacity_mw) {
            return Err(Error::Domain(format!(
                "need 0 <= min_load ({}) <= capacity ({})",
                self.min_load_mw, self.capacity_mw
            )));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !(finite(&self.prices) && finite(&self.variable_cost) && finite(&self.startup_cost)) {
            return Err(Error::Domain("non-finite dispatch input".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DispatchSolution {
    pub generation: Vec<f64>,
    pub on: Vec<bool>,
    pub startup: Vec<bool>,
    /// Profit recomputed from the schedule.
    pub objective: f64,
}

impl DispatchSolution {
    fn with_len(n: usize) -> Self {
        Self {
            generation: vec![0.0; n],
            on: vec![false; n],
            startup: vec![false; n],
            objective: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.on.len()
    }

    pub fn is_empty(&self) -> bool {
        self.on.is_empty()
    }
}

/// Profit over the schedule, recomputed hour by hour.
pub fn schedule_profit(problem: &DispatchProblem, solution: &DispatchSolution) -> f64 {
    (0..problem.len())
        .map(|h| {
            let margin = problem.prices[h] - problem.variable_cost[h];
            let start = if solution.startup[h] {
                problem.startup_cost[h]
            } else {
                0.0
            };
            margin * solution.generation[h] - start
        })
        .sum()
}

/// Best output once committed: capacity when the price covers variable cost
/// (ties dispatch fully), minimum load otherwise.
#[inline]
fn committed_output(price: f64, var_cost: f64, capacity: f64, min_load: f64) -> f64 {
    if price >= var_cost {
        capacity
    } else {
        min_load
    }
}

/// Two-state DP over `[0, len)` of the borrowed series, writing into `out`.
#[allow(clippy::too_many_arguments)]
fn solve_into(
    prices: &[f64],
    var_cost: &[f64],
    start_cost: &[f64],
    capacity: f64,
    min_load: f64,
    initial: UnitState,
    choice_buf: &mut Vec<u8>,
    generation: &mut [f64],
    on: &mut [bool],
    startup: &mut [bool],
) {
    let n = prices.len();
    // Bit 0: predecessor of "off" was on. Bit 1: predecessor of "on" was off.
    choice_buf.clear();
    choice_buf.resize(n, 0);
    let (mut best_off, mut best_on) = match initial {
        UnitState::Off => (0.0, f64::NEG_INFINITY),
        UnitState::On => (f64::NEG_INFINITY, 0.0),
    };
    for h in 0..n {
        let g = committed_output(prices[h], var_cost[h], capacity, min_load);
        let hour_profit = (prices[h] - var_cost[h]) * g;
        let mut bits = 0u8;
        let off = if best_on > best_off {
            bits |= 1;
            best_on
        } else {
            best_off
        };
        let via_start = best_off - start_cost[h];
        let on_prev = if via_start > best_on {
            bits |= 2;
            via_start
        } else {
            best_on
        };
        choice_buf[h] = bits;
        best_off = off;
        best_on = on_prev + hour_profit;
    }
    // Exact ties resolve towards dispatch.
    let mut state_on = best_on >= best_off;
    for h in (0..n).rev() {
        let bits = choice_buf[h];
        let prev_on = if state_on { bits & 2 == 0 } else { bits & 1 != 0 };
        on[h] = state_on;
        generation[h] = if state_on {
            committed_output(prices[h], var_cost[h], capacity, min_load)
        } else {
            0.0
        };
        startup[h] = state_on && !prev_on;
        state_on = prev_on;
    }
    // The walk must end in the prescribed initial state; the -inf seed
    // guarantees it.
    debug_assert_eq!(state_on, initial.is_on());
}

/// Exact optimum of one planning horizon.
pub fn solve_horizon(problem: &DispatchProblem) -> Result<DispatchSolution> {
    problem.validate()?;
    let n = problem.len();
    let mut sol = DispatchSolution::with_len(n);
    let mut buf = Vec::new();
    solve_into(
        &problem.prices,
        &problem.variable_cost,
        &problem.startup_cost,
        problem.capacity_mw,
        problem.min_load_mw,
        problem.initial_state,
        &mut buf,
        &mut sol.generation,
        &mut sol.on,
        &mut sol.startup,
    );
    sol.objective = schedule_profit(problem, &sol);
    Ok(sol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HorizonConfig {
    pub length: usize,
    pub overlap: usize,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        Self {
            length: HORIZON_HOURS,
            overlap: OVERLAP_HOURS,
        }
    }
}

impl HorizonConfig {
    /// `(start, end)` of each horizon over a sample of `n` hours. Consecutive
    /// horizons share `overlap` hours; the last one takes what is left.
    pub fn horizons(&self, n: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut start = 0;
        loop {
            let end = (start + self.length).min(n);
            out.push((start, end));
            if end == n {
                break;
            }
            start = end - self.overlap;
        }
        out
    }
}

/// Solves the full sample as a chain of overlapping horizons.
///
/// Each horizon after the first keeps the previous solution at its first
/// hour (the first hour of the previous horizon's last day) and re-solves
/// the remaining overlap hours together with its new hours.
pub fn chain_horizons(problem: &DispatchProblem, cfg: HorizonConfig) -> Result<DispatchSolution> {
    let mut sol = DispatchSolution::default();
    let mut buf = Vec::new();
    chain_into(problem, cfg, &mut buf, &mut sol)?;
    sol.objective = schedule_profit(problem, &sol);
    Ok(sol)
}

/// `chain_horizons` reusing caller buffers; leaves `objective` untouched.
pub(crate) fn chain_into(
    problem: &DispatchProblem,
    cfg: HorizonConfig,
    buf: &mut Vec<u8>,
    sol: &mut DispatchSolution,
) -> Result<()> {
    if cfg.overlap == 0 || cfg.length <= cfg.overlap {
        return Err(Error::Config(format!(
            "horizon length {} must exceed overlap {} > 0",
            cfg.length, cfg.overlap
        )));
    }
    let n = problem.len();
    if n < cfg.overlap {
        return Err(Error::Domain(format!("sample of {n} hours is shorter than one day")));
    }
    problem.validate()?;
    sol.generation.clear();
    sol.generation.resize(n, 0.0);
    sol.on.clear();
    sol.on.resize(n, false);
    sol.startup.clear();
    sol.startup.resize(n, false);

    for (k, (start, end)) in cfg.horizons(n).into_iter().enumerate() {
        // The first hour of later horizons is carried over as solved.
        let (first, initial) = if k == 0 {
            (start, problem.initial_state)
        } else {
            (start + 1, UnitState::from(sol.on[start]))
        };
        solve_into(
            &problem.prices[first..end],
            &problem.variable_cost[first..end],
            &problem.startup_cost[first..end],
            problem.capacity_mw,
            problem.min_load_mw,
            initial,
            buf,
            &mut sol.generation[first..end],
            &mut sol.on[first..end],
            &mut sol.startup[first..end],
        );
    }
    Ok(())
}
