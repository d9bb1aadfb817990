//! Unit cost series from market fuel and carbon prices.

use serde::{Deserialize, Serialize};

use crate::dispatch::{startup_cost, variable_cost, DispatchProblem, UnitState};
use crate::error::{Error, Result};
use crate::market_data::{FuelType, MarketSeries, UnitSpec};

/// Emission factors (tCO2 per MWh thermal) and the lignite fuel price, which
/// has no market series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FuelParams {
    pub gas_emission_factor: f64,
    pub coal_emission_factor: f64,
    pub lignite_emission_factor: f64,
    /// EUR per MWh thermal.
    pub lignite_fuel_price: f64,
}

impl Default for FuelParams {
    fn default() -> Self {
        Self {
            gas_emission_factor: 0.202,
            coal_emission_factor: 0.340,
            lignite_emission_factor: 0.364,
            lignite_fuel_price: 5.0,
        }
    }
}

impl FuelParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.gas_emission_factor,
            self.coal_emission_factor,
            self.lignite_emission_factor,
            self.lignite_fuel_price,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config(format!(
                "emission factors and lignite price must be >= 0: {all:?}"
            )));
        }
        Ok(())
    }

    pub fn emission_factor(&self, fuel: FuelType) -> f64 {
        match fuel {
            FuelType::Lignite => self.lignite_emission_factor,
            FuelType::HardCoal => self.coal_emission_factor,
            FuelType::Ccgt | FuelType::GasOther => self.gas_emission_factor,
        }
    }

    /// EUR per MWh thermal, before carbon.
    pub fn fuel_price(&self, fuel: FuelType, ms: &MarketSeries, hour: usize) -> f64 {
        match fuel {
            FuelType::Lignite => self.lignite_fuel_price,
            FuelType::HardCoal => ms.coal_price[hour],
            FuelType::Ccgt | FuelType::GasOther => ms.gas_price[hour],
        }
    }

    /// EUR per MWh thermal of carbon allowances.
    pub fn carbon_cost(&self, fuel: FuelType, ms: &MarketSeries, hour: usize) -> f64 {
        self.emission_factor(fuel) * ms.carbon_price[hour]
    }
}

/// Parameter multipliers for one Monte Carlo draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    pub efficiency: f64,
    pub fuel: f64,
    pub cold_start: f64,
}

impl Multipliers {
    pub const NOMINAL: Multipliers = Multipliers {
        efficiency: 1.0,
        fuel: 1.0,
        cold_start: 1.0,
    };
}

/// Nominal variable cost per hour, EUR/MWh.
pub fn unit_variable_cost(unit: &UnitSpec, ms: &MarketSeries, fuel: &FuelParams) -> Result<Vec<f64>> {
    (0..ms.len())
        .map(|h| {
            variable_cost(
                fuel.fuel_price(unit.fuel_type, ms, h),
                fuel.carbon_cost(unit.fuel_type, ms, h),
                unit.efficiency,
            )
        })
        .collect()
}

/// Fills a full-sample dispatch problem for `unit` under `mult`, reusing the
/// vectors already in `problem`.
pub fn fill_dispatch_problem(
    unit: &UnitSpec,
    ms: &MarketSeries,
    fuel: &FuelParams,
    mult: Multipliers,
    problem: &mut DispatchProblem,
) -> Result<()> {
    let n = ms.len();
    problem.prices.clear();
    problem.prices.extend_from_slice(&ms.spot_price);
    problem.variable_cost.clear();
    problem.startup_cost.clear();
    let efficiency = unit.efficiency * mult.efficiency;
    let start_factor = unit.cold_start_factor * mult.cold_start;
    for h in 0..n {
        let fuel_cost = fuel.fuel_price(unit.fuel_type, ms, h) * mult.fuel;
        let carbon = fuel.carbon_cost(unit.fuel_type, ms, h);
        problem
            .variable_cost
            .push(variable_cost(fuel_cost, carbon, efficiency)?);
        problem.startup_cost.push(startup_cost(
            unit.capacity_mw,
            unit.startup_depreciation_eur_mw,
            unit.cold_start_fuel_mwh_mw,
            start_factor,
            fuel_cost + carbon,
        )?);
    }
    problem.capacity_mw = unit.capacity_mw;
    problem.min_load_mw = unit.min_load_mw;
    problem.initial_state = UnitState::Off;
    Ok(())
}

pub fn dispatch_problem(
    unit: &UnitSpec,
    ms: &MarketSeries,
    fuel: &FuelParams,
    mult: Multipliers,
) -> Result<DispatchProblem> {
    let mut problem = DispatchProblem {
        prices: Vec::new(),
        variable_cost: Vec::new(),
        startup_cost: Vec::new(),
        capacity_mw: 0.0,
        min_load_mw: 0.0,
        initial_state: UnitState::Off,
    };
    fill_dispatch_problem(unit, ms, fuel, mult, &mut problem)?;
    Ok(problem)
}
