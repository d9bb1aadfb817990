//! Hedged positions and the hourly net profit of deviating from the
//! competitive schedule.
//!
//! A company sells forward a fixed share of its realized mean generation per
//! month and peak class. What remains unhedged (the net exposure) is what
//! gains from a price move, while the unit's own margin is what a deviation
//! gives up.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calendar::{EpochHour, LocalCalendar, PeakClass};
use crate::costs::{unit_variable_cost, FuelParams};
use crate::error::{Error, Result};
use crate::market_data::{unit_index, MarketInputs, MarketSeries, UnitHourSet, UnitSpec};
use crate::panel_io::{field, read_rows, write_text};

pub fn net_exposure(company_generation_mw: f64, hedged_mw: f64) -> f64 {
    company_generation_mw - hedged_mw
}

pub fn margin(spot_price: f64, variable_cost: f64) -> f64 {
    spot_price - variable_cost
}

/// Profit per MW withheld: the price gain on the unhedged position less the
/// forgone margin.
pub fn net_profit_withhold(delta: f64, exposure_mw: f64, margin: f64) -> f64 {
    delta * exposure_mw - margin
}

/// Profit per MW pushed in. Written so that it is exactly the negation of
/// [`net_profit_withhold`].
pub fn net_profit_pushin(delta: f64, exposure_mw: f64, margin: f64) -> f64 {
    -(delta * exposure_mw) + margin
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockMode {
    /// Finite withdrawal, including the price effect on the block itself.
    #[default]
    Exact,
    /// Marginal profit times block size.
    MarginalScaled,
}

impl FromStr for BlockMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(BlockMode::Exact),
            "marginal_scaled" => Ok(BlockMode::MarginalScaled),
            other => Err(Error::Config(format!("unknown block_mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Withhold,
    PushIn,
}

/// Profit in EUR from moving `block_mw` at once. In exact mode the block
/// shifts the price by `delta * block_mw`, which costs `delta * block_mw²`
/// in either direction.
pub fn block_net_profit(
    delta: f64,
    exposure_mw: f64,
    margin: f64,
    block_mw: f64,
    direction: Direction,
    mode: BlockMode,
) -> Result<f64> {
    if !(block_mw > 0.0) {
        return Err(Error::Domain(format!("block size {block_mw} must be > 0")));
    }
    let per_mw = match direction {
        Direction::Withhold => net_profit_withhold(delta, exposure_mw, margin),
        Direction::PushIn => net_profit_pushin(delta, exposure_mw, margin),
    };
    Ok(match mode {
        BlockMode::MarginalScaled => block_mw * per_mw,
        BlockMode::Exact => block_mw * per_mw - delta * block_mw * block_mw,
    })
}

/// `rate` times the mean of the given hourly company generation.
pub fn hedged_quantity(generation_mw: &[f64], rate: f64) -> Result<f64> {
    check_rate(rate)?;
    if generation_mw.is_empty() {
        return Err(Error::Domain("no hours in hedging period".into()));
    }
    Ok(rate * generation_mw.iter().sum::<f64>() / generation_mw.len() as f64)
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Config(format!("hedge rate {rate} outside [0, 1]")));
    }
    Ok(())
}

/// Sum of observed generation over each company's units, including units that
/// are not modeled.
#[derive(Debug, Clone, PartialEq)]
pub struct CompanyGeneration {
    pub companies: Vec<String>,
    /// Company index of every unit.
    pub unit_company: Vec<usize>,
    pub mw: Vec<Vec<f64>>,
}

pub fn company_generation(inputs: &MarketInputs) -> CompanyGeneration {
    let companies: Vec<String> = inputs
        .units
        .iter()
        .map(|u| u.company_id.clone())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let unit_company: Vec<usize> = inputs
        .units
        .iter()
        .map(|u| companies.binary_search(&u.company_id).expect("company listed"))
        .collect();
    let mut mw = vec![vec![0.0; inputs.market.len()]; companies.len()];
    for (u, &c) in unit_company.iter().enumerate() {
        for (acc, g) in mw[c].iter_mut().zip(&inputs.generation.mw[u]) {
            *acc += g;
        }
    }
    CompanyGeneration {
        companies,
        unit_company,
        mw,
    }
}

/// Local year, month and peak class of an hour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HedgePeriod {
    pub year: i16,
    pub month: i8,
    pub class: PeakClass,
}

pub fn hedge_periods(ms: &MarketSeries, cal: &LocalCalendar) -> Vec<HedgePeriod> {
    (0..ms.len())
        .map(|h| {
            let ts = ms.timestamp(h);
            let local = cal.local(ts);
            HedgePeriod {
                year: local.year,
                month: local.month,
                class: cal.peak_class(ts),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HedgeCell {
    pub hours: usize,
    pub mean_generation_mw: f64,
    pub hedged_mw: f64,
    /// No forward price series is ingested; kept so the position can be
    /// valued when one is supplied.
    pub forward_price: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HedgeBook {
    pub rate: f64,
    /// Period of every market hour.
    pub hour_period: Vec<HedgePeriod>,
    /// Keyed by (company index, period).
    pub cells: BTreeMap<(usize, HedgePeriod), HedgeCell>,
}

impl HedgeBook {
    pub fn build(gen: &CompanyGeneration, ms: &MarketSeries, cal: &LocalCalendar, rate: f64) -> Result<Self> {
        Self::from_periods(gen, hedge_periods(ms, cal), rate)
    }

    pub fn from_periods(gen: &CompanyGeneration, hour_period: Vec<HedgePeriod>, rate: f64) -> Result<Self> {
        check_rate(rate)?;
        let mut hours_of: BTreeMap<HedgePeriod, Vec<usize>> = BTreeMap::new();
        for (h, p) in hour_period.iter().enumerate() {
            hours_of.entry(*p).or_default().push(h);
        }
        let mut cells = BTreeMap::new();
        for (c, series) in gen.mw.iter().enumerate() {
            for (p, hours) in &hours_of {
                let g: Vec<f64> = hours.iter().map(|&h| series[h]).collect();
                let hedged = hedged_quantity(&g, rate)?;
                cells.insert(
                    (c, *p),
                    HedgeCell {
                        hours: hours.len(),
                        mean_generation_mw: hedged_quantity(&g, 1.0)?,
                        hedged_mw: hedged,
                        forward_price: None,
                    },
                );
            }
        }
        Ok(Self {
            rate,
            hour_period,
            cells,
        })
    }

    pub fn hedged_mw(&self, company: usize, hour: usize) -> f64 {
        self.cells[&(company, self.hour_period[hour])].hedged_mw
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncentiveRow {
    pub hour: usize,
    pub unit: usize,
    pub delta: f64,
    pub exposure_mw: f64,
    pub margin: f64,
    pub pi_w: f64,
    pub pi_p: f64,
}

/// Net profits for every modeled, available unit-hour, ordered by hour then
/// unit.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IncentivePanel {
    pub rows: Vec<IncentiveRow>,
}

pub fn build_incentive_panel(
    inputs: &MarketInputs,
    set: &UnitHourSet,
    delta: &[f64],
    fuel: &FuelParams,
    cal: &LocalCalendar,
    hedge_rate: f64,
) -> Result<IncentivePanel> {
    let ms = &inputs.market;
    if delta.len() != ms.len() {
        return Err(Error::Shape(format!(
            "{} slopes for {} market hours",
            delta.len(),
            ms.len()
        )));
    }
    let gen = company_generation(inputs);
    let book = HedgeBook::build(&gen, ms, cal, hedge_rate)?;
    let costs: Vec<Option<Vec<f64>>> = inputs
        .units
        .iter()
        .map(|u| u.in_scope.then(|| unit_variable_cost(u, ms, fuel)).transpose())
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(set.len());
    for (unit, hour) in set.iter() {
        let c = gen.unit_company[unit];
        let cost = costs[unit]
            .as_ref()
            .ok_or_else(|| Error::Shape(format!("unit {} is not modeled", inputs.units[unit].unit_id)))?;
        let e = net_exposure(gen.mw[c][hour], book.hedged_mw(c, hour));
        let m = margin(ms.spot_price[hour], cost[hour]);
        let d = delta[hour];
        rows.push(IncentiveRow {
            hour,
            unit,
            delta: d,
            exposure_mw: e,
            margin: m,
            pi_w: net_profit_withhold(d, e, m),
            pi_p: net_profit_pushin(d, e, m),
        });
    }
    rows.sort_by_key(|r| (r.hour, r.unit));
    Ok(IncentivePanel { rows })
}

pub const INCENTIVE_COLUMNS: [&str; 7] = ["timestamp", "unit_id", "delta", "exposure_mw", "margin", "pi_w", "pi_p"];

pub fn write_incentive_panel(path: &Path, ms: &MarketSeries, units: &[UnitSpec], panel: &IncentivePanel) -> Result<()> {
    let mut out = String::with_capacity(panel.rows.len() * 96);
    out += &(INCENTIVE_COLUMNS.join(",") + "\n");
    for r in &panel.rows {
        out += &format!(
            "{},{},{},{},{},{},{}\n",
            ms.timestamp(r.hour),
            units[r.unit].unit_id,
            r.delta,
            r.exposure_mw,
            r.margin,
            r.pi_w,
            r.pi_p
        );
    }
    write_text(path, &out)
}

pub fn load_incentive_panel(path: &Path, ms: &MarketSeries, units: &[UnitSpec]) -> Result<IncentivePanel> {
    let index = unit_index(units);
    let records = read_rows(path, &INCENTIVE_COLUMNS)?;
    let mut rows = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let row = i + 1;
        let bad = |msg: String| Error::Parse {
            file: path.display().to_string(),
            row,
            msg,
        };
        let ts = EpochHour::parse(&rec[0]).map_err(bad)?;
        let hour = ms
            .index_of(ts)
            .ok_or_else(|| bad(format!("timestamp {ts} outside market series")))?;
        let unit = *index
            .get(&rec[1])
            .ok_or_else(|| Error::Reference(format!("unknown unit {:?} in {}", &rec[1], path.display())))?;
        let r = IncentiveRow {
            hour,
            unit,
            delta: field(path, row, rec, 2)?,
            exposure_mw: field(path, row, rec, 3)?,
            margin: field(path, row, rec, 4)?,
            pi_w: field(path, row, rec, 5)?,
            pi_p: field(path, row, rec, 6)?,
        };
        if r.pi_w != net_profit_withhold(r.delta, r.exposure_mw, r.margin) || r.pi_p != -r.pi_w {
            return Err(bad("net profits inconsistent with delta, exposure and margin".into()));
        }
        rows.push(r);
    }
    Ok(IncentivePanel { rows })
}
