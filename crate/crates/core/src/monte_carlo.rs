//! Parameter-uncertainty simulation around the competitive dispatch.
//!
//! Every iteration rescales a unit's efficiency, fuel cost and cold-start
//! factor by draws from N(1, sd²) and re-solves the chained dispatch. The
//! share of iterations in which the unit runs gives the average state d̄,
//! which is discretized into the benchmark z and compared with observed
//! operation to give the deviation y.

use std::fmt;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calendar::EpochHour;
use crate::costs::{fill_dispatch_problem, FuelParams, Multipliers};
use crate::dispatch::{chain_into, DispatchProblem, DispatchSolution, HorizonConfig, UnitState};
use crate::error::{Error, Result};
use crate::market_data::{unit_index, MarketInputs, MarketSeries, UnitHourSet, UnitSpec};
use crate::panel_io::{read_rows, write_text};
use crate::rng;

/// Multipliers are floored here so efficiency stays positive.
pub const MULTIPLIER_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub iterations: usize,
    pub multiplier_sd: f64,
    pub seed: u64,
    pub keep_threshold: f64,
    /// Observed output above this counts as running.
    pub dispatch_epsilon_mw: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            multiplier_sd: 0.05,
            seed: 0,
            keep_threshold: 0.95,
            dispatch_epsilon_mw: 1.0,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        // sd = 0 is allowed as a degenerate, deterministic configuration.
        if !(self.multiplier_sd >= 0.0 && self.multiplier_sd < 1.0) {
            return Err(Error::Config(format!(
                "multiplier_sd {} outside [0, 1)",
                self.multiplier_sd
            )));
        }
        if !(self.keep_threshold > 0.5 && self.keep_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "keep_threshold {} outside (0.5, 1]",
                self.keep_threshold
            )));
        }
        if !(self.dispatch_epsilon_mw >= 0.0) {
            return Err(Error::Config("dispatch_epsilon_mw must be >= 0".into()));
        }
        Ok(())
    }
}

/// Three independent N(1, sd²) multipliers for `(seed, unit, iteration)`.
pub fn sample_multipliers(seed: u64, unit_id: &str, iteration: u64, sd: f64) -> Multipliers {
    let mut rng = rng::stream(seed, "mc-multipliers", unit_id, iteration);
    let mut draw = || {
        let z: f64 = StandardNormal.sample(&mut rng);
        (1.0 + sd * z).max(MULTIPLIER_FLOOR)
    };
    Multipliers {
        efficiency: draw(),
        fuel: draw(),
        cold_start: draw(),
    }
}

/// Fraction of solutions in which the unit is on, per hour.
pub fn average_state(solutions: &[DispatchSolution]) -> Result<Vec<f64>> {
    let Some(first) = solutions.first() else {
        return Err(Error::Shape("no solutions to average".into()));
    };
    let n = first.len();
    let mut counts = vec![0u32; n];
    for s in solutions {
        if s.len() != n {
            return Err(Error::Shape(format!("solution covers {} hours, expected {n}", s.len())));
        }
        for (c, &on) in counts.iter_mut().zip(&s.on) {
            *c += u32::from(on);
        }
    }
    let total = solutions.len() as f64;
    Ok(counts.into_iter().map(|c| f64::from(c) / total).collect())
}

/// Competitive benchmark: `Some(true)` if d̄ ≥ keep, `Some(false)` if
/// d̄ ≤ 1 − keep, `None` (excluded) in between.
pub fn discretize(d_bar: f64, keep_threshold: f64) -> Result<Option<bool>> {
    if !(0.0..=1.0).contains(&d_bar) {
        return Err(Error::Domain(format!("average state {d_bar} outside [0, 1]")));
    }
    Ok(if d_bar >= keep_threshold {
        Some(true)
    } else if d_bar <= 1.0 - keep_threshold {
        Some(false)
    } else {
        None
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Deviation {
    /// Benchmark on, observed off (y = −1).
    Withheld,
    /// Agreement (y = 0).
    None,
    /// Benchmark off, observed on (y = +1).
    PushedIn,
}

impl Deviation {
    pub fn code(self) -> i8 {
        match self {
            Deviation::Withheld => -1,
            Deviation::None => 0,
            Deviation::PushedIn => 1,
        }
    }
}

/// y from observed state and benchmark; excluded benchmarks stay excluded.
pub fn deviation(observed_on: bool, z: Option<bool>) -> Option<Deviation> {
    z.map(|z| match (observed_on, z) {
        (true, false) => Deviation::PushedIn,
        (false, true) => Deviation::Withheld,
        _ => Deviation::None,
    })
}

/// Average state of one unit over the configured iterations.
///
/// Iterations run in parallel; counts are integers so the reduction is
/// order independent.
pub fn simulate_unit(
    unit: &UnitSpec,
    ms: &MarketSeries,
    fuel: &FuelParams,
    cfg: &McConfig,
    horizon: HorizonConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n = ms.len();
    let empty_problem = || DispatchProblem {
        prices: Vec::with_capacity(n),
        variable_cost: Vec::with_capacity(n),
        startup_cost: Vec::with_capacity(n),
        capacity_mw: 0.0,
        min_load_mw: 0.0,
        initial_state: UnitState::Off,
    };
    let counts = (0..cfg.iterations as u64)
        .into_par_iter()
        .try_fold(
            || (empty_problem(), DispatchSolution::default(), Vec::new(), vec![0u32; n]),
            |(mut problem, mut sol, mut buf, mut counts), it| {
                let mult = sample_multipliers(cfg.seed, &unit.unit_id, it, cfg.multiplier_sd);
                fill_dispatch_problem(unit, ms, fuel, mult, &mut problem)?;
                chain_into(&problem, horizon, &mut buf, &mut sol)?;
                for (c, &on) in counts.iter_mut().zip(&sol.on) {
                    *c += u32::from(on);
                }
                Ok::<_, Error>((problem, sol, buf, counts))
            },
        )
        .map(|r| r.map(|(_, _, _, counts)| counts))
        .try_reduce(
            || vec![0u32; n],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )?;
    let total = cfg.iterations as f64;
    Ok(counts.into_iter().map(|c| f64::from(c) / total).collect())
}

/// Average state for every modeled unit; `None` for out-of-scope units.
pub fn simulate_fleet(
    units: &[UnitSpec],
    ms: &MarketSeries,
    fuel: &FuelParams,
    cfg: &McConfig,
    horizon: HorizonConfig,
) -> Result<Vec<Option<Vec<f64>>>> {
    units
        .par_iter()
        .map(|u| u.in_scope.then(|| simulate_unit(u, ms, fuel, cfg, horizon)).transpose())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanelRow {
    pub hour: usize,
    pub unit: usize,
    pub d_bar: f64,
    pub z: Option<bool>,
    pub observed_on: bool,
    pub y: Option<Deviation>,
}

/// Benchmark and deviation for every available modeled unit-hour, ordered
/// by hour then unit.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DispatchPanel {
    pub rows: Vec<PanelRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DeviationCounts {
    pub withheld: usize,
    pub agree: usize,
    pub pushed_in: usize,
    pub excluded: usize,
}

impl DeviationCounts {
    pub fn defined(&self) -> usize {
        self.withheld + self.agree + self.pushed_in
    }
}

impl DispatchPanel {
    pub fn counts(&self) -> DeviationCounts {
        let mut c = DeviationCounts::default();
        for r in &self.rows {
            match r.y {
                Some(Deviation::Withheld) => c.withheld += 1,
                Some(Deviation::None) => c.agree += 1,
                Some(Deviation::PushedIn) => c.pushed_in += 1,
                None => c.excluded += 1,
            }
        }
        c
    }
}

pub fn build_dispatch_panel(
    inputs: &MarketInputs,
    set: &UnitHourSet,
    d_bar: &[Option<Vec<f64>>],
    cfg: &McConfig,
) -> Result<DispatchPanel> {
    let mut rows = Vec::with_capacity(set.len());
    for (unit, hour) in set.iter() {
        let series = d_bar[unit]
            .as_ref()
            .ok_or_else(|| Error::Shape(format!("no simulated state for unit {}", inputs.units[unit].unit_id)))?;
        let d = series[hour];
        let z = discretize(d, cfg.keep_threshold)?;
        let observed_on = inputs.generation.mw[unit][hour] > cfg.dispatch_epsilon_mw;
        rows.push(PanelRow {
            hour,
            unit,
            d_bar: d,
            z,
            observed_on,
            y: deviation(observed_on, z),
        });
    }
    rows.sort_by_key(|r| (r.hour, r.unit));
    Ok(DispatchPanel { rows })
}

pub const DISPATCH_PANEL_COLUMNS: [&str; 6] = ["timestamp", "unit_id", "d_bar", "z", "d_observed", "y"];

fn opt_code(v: Option<i8>) -> String {
    v.map_or_else(|| "NA".to_string(), |c| c.to_string())
}

pub fn write_dispatch_panel(path: &Path, ms: &MarketSeries, units: &[UnitSpec], panel: &DispatchPanel) -> Result<()> {
    let mut out = String::with_capacity(panel.rows.len() * 48);
    out.push_str(&DISPATCH_PANEL_COLUMNS.join(","));
    out.push('\n');
    for r in &panel.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            ms.timestamp(r.hour),
            units[r.unit].unit_id,
            r.d_bar,
            opt_code(r.z.map(i8::from)),
            u8::from(r.observed_on),
            opt_code(r.y.map(Deviation::code)),
        ));
    }
    write_text(path, &out)
}

pub fn load_dispatch_panel(path: &Path, ms: &MarketSeries, units: &[UnitSpec]) -> Result<DispatchPanel> {
    let file = path.display().to_string();
    let records = read_rows(path, &DISPATCH_PANEL_COLUMNS)?;
    let index = unit_index(units);
    let mut rows = Vec::new();
    for (i, rec) in records.iter().enumerate() {
        let row = i + 1;
        let err = |msg: String| Error::Parse {
            file: file.clone(),
            row,
            msg,
        };
        let ts = EpochHour::parse(&rec[0]).map_err(err)?;
        let hour = ms
            .index_of(ts)
            .ok_or_else(|| err(format!("timestamp {ts} outside market series")))?;
        let unit = *index
            .get(&rec[1])
            .ok_or_else(|| Error::Reference(format!("unknown unit {:?} in {file}", &rec[1])))?;
        let d_bar: f64 = rec[2].parse().map_err(|_| err(format!("bad d_bar {:?}", &rec[2])))?;
        let z = match &rec[3] {
            "NA" => None,
            "0" => Some(false),
            "1" => Some(true),
            other => return Err(err(format!("bad z {other:?}"))),
        };
        let observed_on = match &rec[4] {
            "0" => false,
            "1" => true,
            other => return Err(err(format!("bad d_observed {other:?}"))),
        };
        let y = match &rec[5] {
            "NA" => None,
            "-1" => Some(Deviation::Withheld),
            "0" => Some(Deviation::None),
            "1" => Some(Deviation::PushedIn),
            other => return Err(err(format!("bad y {other:?}"))),
        };
        if y != deviation(observed_on, z) {
            return Err(err("y inconsistent with z and d_observed".into()));
        }
        rows.push(PanelRow {
            hour,
            unit,
            d_bar,
            z,
            observed_on,
            y,
        });
    }
    Ok(DispatchPanel { rows })
}

impl fmt::Display for DeviationCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.defined().max(1) as f64;
        write!(
            f,
            "withheld {:.1}%, agree {:.1}%, pushed in {:.1}% ({} excluded)",
            100.0 * self.withheld as f64 / n,
            100.0 * self.agree as f64 / n,
            100.0 * self.pushed_in as f64 / n,
            self.excluded
        )
    }
}
