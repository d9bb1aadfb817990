//! Hourly market inputs, unit metadata, observed generation and outages.
//!
//! All loaders validate eagerly. Files written by the `write_*` functions are
//! canonical: loading and re-writing one reproduces it byte for byte.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calendar::EpochHour;
use crate::error::{Error, Result};

pub const MARKET_COLUMNS: [&str; 7] = [
    "timestamp",
    "spot_price",
    "demand",
    "vre_generation",
    "gas_price",
    "coal_price",
    "carbon_price",
];

pub const UNIT_COLUMNS: [&str; 9] = [
    "unit_id",
    "company_id",
    "fuel_type",
    "capacity_mw",
    "min_load_mw",
    "efficiency",
    "startup_depreciation_eur_mw",
    "cold_start_fuel_mwh_mw",
    "cold_start_factor",
];

/// Optional trailing column of `units.csv`; `0` marks units that only count
/// towards company generation.
pub const IN_SCOPE_COLUMN: &str = "in_scope";

pub const GENERATION_COLUMNS: [&str; 3] = ["timestamp", "unit_id", "generation_mw"];
pub const OUTAGE_COLUMNS: [&str; 3] = ["timestamp", "unit_id", "available"];

/// Aligned hourly panel. Timestamps are implicit: `start + i` hours.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketSeries {
    pub start: EpochHour,
    pub spot_price: Vec<f64>,
    pub demand: Vec<f64>,
    pub vre_generation: Vec<f64>,
    pub gas_price: Vec<f64>,
    pub coal_price: Vec<f64>,
    pub carbon_price: Vec<f64>,
}

impl MarketSeries {
    pub fn len(&self) -> usize {
        self.spot_price.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spot_price.is_empty()
    }

    pub fn timestamp(&self, hour: usize) -> EpochHour {
        self.start.offset(hour as i64)
    }

    /// Index of `ts` within the series, if covered.
    pub fn index_of(&self, ts: EpochHour) -> Option<usize> {
        let offset = ts.0 - self.start.0;
        (offset >= 0 && (offset as usize) < self.len()).then_some(offset as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let columns = [
            ("demand", &self.demand),
            ("vre_generation", &self.vre_generation),
            ("gas_price", &self.gas_price),
            ("coal_price", &self.coal_price),
            ("carbon_price", &self.carbon_price),
        ];
        for (name, col) in columns {
            if col.len() != n {
                return Err(Error::Shape(format!(
                    "{name} has {} values, spot_price has {n}",
                    col.len()
                )));
            }
        }
        for (i, &p) in self.spot_price.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::Validation(format!(
                    "spot_price at {} is not finite",
                    self.timestamp(i)
                )));
            }
        }
        for (name, col) in columns {
            for (i, &v) in col.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Validation(format!(
                        "{name} at {} must be finite and non-negative, got {v}",
                        self.timestamp(i)
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Demand minus variable renewable generation, per hour. May be negative.
pub fn residual_load(ms: &MarketSeries) -> Vec<f64> {
    ms.demand.iter().zip(&ms.vre_generation).map(|(d, v)| d - v).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FuelType {
    Lignite,
    HardCoal,
    Ccgt,
    GasOther,
}

impl FuelType {
    pub const ALL: [FuelType; 4] = [
        FuelType::Lignite,
        FuelType::HardCoal,
        FuelType::Ccgt,
        FuelType::GasOther,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FuelType::Lignite => "lignite",
            FuelType::HardCoal => "hard_coal",
            FuelType::Ccgt => "ccgt",
            FuelType::GasOther => "gas_other",
        }
    }

    pub fn is_gas(self) -> bool {
        matches!(self, FuelType::Ccgt | FuelType::GasOther)
    }
}

impl fmt::Display for FuelType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FuelType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        FuelType::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown fuel type {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitSpec {
    pub unit_id: String,
    pub company_id: String,
    pub fuel_type: FuelType,
    pub capacity_mw: f64,
    pub min_load_mw: f64,
    /// Thermal to electric conversion ratio.
    pub efficiency: f64,
    pub startup_depreciation_eur_mw: f64,
    /// MWh thermal per MW of capacity for a cold start.
    pub cold_start_fuel_mwh_mw: f64,
    pub cold_start_factor: f64,
    /// Modeled unit. Out-of-scope units only feed company generation.
    pub in_scope: bool,
}

impl UnitSpec {
    pub fn validate(&self) -> Result<()> {
        let id = &self.unit_id;
        if id.is_empty() || self.company_id.is_empty() {
            return Err(Error::Validation("empty unit_id or company_id".into()));
        }
        if !(self.capacity_mw.is_finite() && self.capacity_mw >= 0.0) {
            return Err(Error::Validation(format!("{id}: capacity must be >= 0")));
        }
        if !self.in_scope {
            return Ok(());
        }
        if !(self.min_load_mw > 0.0 && self.min_load_mw < self.capacity_mw) {
            return Err(Error::Validation(format!(
                "{id}: need 0 < min_load ({}) < capacity ({})",
                self.min_load_mw, self.capacity_mw
            )));
        }
        if !(self.efficiency > 0.0 && self.efficiency < 1.0) {
            return Err(Error::Validation(format!(
                "{id}: efficiency {} outside (0, 1)",
                self.efficiency
            )));
        }
        for (name, v) in [
            ("startup_depreciation_eur_mw", self.startup_depreciation_eur_mw),
            ("cold_start_fuel_mwh_mw", self.cold_start_fuel_mwh_mw),
            ("cold_start_factor", self.cold_start_factor),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Validation(format!("{id}: {name} must be >= 0")));
            }
        }
        Ok(())
    }
}

/// Per unit-hour availability. Units absent from the map are always available.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutageMask {
    pub hours: usize,
    pub available: BTreeMap<String, Vec<bool>>,
}

impl OutageMask {
    pub fn all_available(hours: usize) -> Self {
        Self {
            hours,
            available: BTreeMap::new(),
        }
    }

    pub fn is_available(&self, unit_id: &str, hour: usize) -> bool {
        self.available.get(unit_id).is_none_or(|v| v[hour])
    }
}

/// Sorted set of modeled (unit index, hour) pairs.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct UnitHourSet {
    pairs: Vec<(usize, usize)>,
}

impl UnitHourSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().copied()
    }

    pub fn contains(&self, unit: usize, hour: usize) -> bool {
        self.pairs.binary_search(&(unit, hour)).is_ok()
    }

    pub fn count_for_unit(&self, unit: usize) -> usize {
        self.pairs.iter().filter(|(u, _)| *u == unit).count()
    }

    /// Drops pairs the mask marks unavailable.
    pub fn restrict(&self, units: &[UnitSpec], mask: &OutageMask) -> Self {
        Self {
            pairs: self
                .pairs
                .iter()
                .copied()
                .filter(|&(u, h)| mask.is_available(&units[u].unit_id, h))
                .collect(),
        }
    }
}

/// Modeled unit-hours that the mask reports available.
pub fn availability_filter(units: &[UnitSpec], mask: &OutageMask) -> Result<UnitHourSet> {
    let known: HashSet<&str> = units.iter().map(|u| u.unit_id.as_str()).collect();
    if let Some(unknown) = mask.available.keys().find(|k| !known.contains(k.as_str())) {
        return Err(Error::Reference(format!(
            "outage mask references unit {unknown:?} absent from the unit list"
        )));
    }
    for (id, v) in &mask.available {
        if v.len() != mask.hours {
            return Err(Error::Shape(format!(
                "mask for {id} covers {} hours, expected {}",
                v.len(),
                mask.hours
            )));
        }
    }
    let mut pairs = Vec::new();
    for (u, unit) in units.iter().enumerate().filter(|(_, u)| u.in_scope) {
        for h in 0..mask.hours {
            if mask.is_available(&unit.unit_id, h) {
                pairs.push((u, h));
            }
        }
    }
    Ok(UnitHourSet { pairs })
}

/// Observed MW per unit (aligned with the unit list) and hour.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedGeneration {
    pub mw: Vec<Vec<f64>>,
}

impl ObservedGeneration {
    pub fn zeros(units: usize, hours: usize) -> Self {
        Self {
            mw: vec![vec![0.0; hours]; units],
        }
    }
}

/// Everything the pipeline ingests.
#[derive(Debug, Clone)]
pub struct MarketInputs {
    pub market: MarketSeries,
    pub units: Vec<UnitSpec>,
    pub generation: ObservedGeneration,
    pub outages: OutageMask,
}

impl MarketInputs {
    pub fn unit_index(&self) -> HashMap<&str, usize> {
        unit_index(&self.units)
    }
}

pub fn unit_index(units: &[UnitSpec]) -> HashMap<&str, usize> {
    units.iter().enumerate().map(|(i, u)| (u.unit_id.as_str(), i)).collect()
}

struct Table {
    file: String,
    columns: Vec<usize>,
    optional: Vec<Option<usize>>,
    reader: csv::Reader<File>,
}

impl Table {
    fn open(path: &Path, required: &[&str], optional: &[&str]) -> Result<Self> {
        let file_name = path.display().to_string();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
        let headers = reader.headers()?.clone();
        let names: Vec<&str> = headers.iter().map(str::trim).collect();
        let mut columns = Vec::with_capacity(required.len());
        for col in required {
            match names.iter().position(|n| n == col) {
                Some(i) => columns.push(i),
                None => {
                    return Err(Error::Schema {
                        file: file_name,
                        msg: format!("missing column {col:?}"),
                    })
                }
            }
        }
        let optional_idx: Vec<Option<usize>> = optional.iter().map(|col| names.iter().position(|n| n == col)).collect();
        if let Some(extra) = names.iter().find(|n| !required.contains(n) && !optional.contains(n)) {
            return Err(Error::Schema {
                file: file_name,
                msg: format!("unexpected column {extra:?}"),
            });
        }
        Ok(Self {
            file: file_name,
            columns,
            optional: optional_idx,
            reader,
        })
    }

    /// Visits each data row (1-based) with its required and optional cells.
    fn for_each_row(
        mut self,
        mut f: impl FnMut(usize, &[&str], &[Option<&str>]) -> std::result::Result<(), String>,
    ) -> Result<()> {
        let mut record = csv::StringRecord::new();
        let mut row = 0;
        while self.reader.read_record(&mut record)? {
            row += 1;
            let mut cells = Vec::with_capacity(self.columns.len());
            let mut extra = Vec::with_capacity(self.optional.len());
            for &c in &self.columns {
                match record.get(c).map(str::trim) {
                    Some(v) if !v.is_empty() => cells.push(v),
                    _ => {
                        return Err(Error::Parse {
                            file: self.file.clone(),
                            row,
                            msg: "missing field".into(),
                        })
                    }
                }
            }
            for c in &self.optional {
                extra.push(c.and_then(|c| record.get(c)).map(str::trim));
            }
            f(row, &cells, &extra).map_err(|msg| Error::Parse {
                file: self.file.clone(),
                row,
                msg,
            })?;
        }
        Ok(())
    }
}

fn num(cell: &str, name: &str) -> std::result::Result<f64, String> {
    cell.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("{name}: non-numeric value {cell:?}"))
}

pub fn load_market(path: &Path) -> Result<MarketSeries> {
    let table = Table::open(path, &MARKET_COLUMNS, &[])?;
    let mut stamps: Vec<EpochHour> = Vec::new();
    let mut cols: [Vec<f64>; 6] = Default::default();
    table.for_each_row(|_, cells, _| {
        stamps.push(EpochHour::parse(cells[0])?);
        for (k, col) in cols.iter_mut().enumerate() {
            col.push(num(cells[k + 1], MARKET_COLUMNS[k + 1])?);
        }
        Ok(())
    })?;
    if stamps.is_empty() {
        return Err(Error::Validation(format!("{} contains no rows", path.display())));
    }
    for w in stamps.windows(2) {
        if w[1].0 != w[0].0 + 1 {
            let msg = if w[1].0 <= w[0].0 {
                "timestamps not strictly increasing".to_string()
            } else {
                format!("gap of {} hours after {}", w[1].0 - w[0].0 - 1, w[0])
            };
            return Err(Error::Alignment {
                timestamp: w[1].to_string(),
                msg,
            });
        }
    }
    let [spot_price, demand, vre_generation, gas_price, coal_price, carbon_price] = cols;
    let ms = MarketSeries {
        start: stamps[0],
        spot_price,
        demand,
        vre_generation,
        gas_price,
        coal_price,
        carbon_price,
    };
    ms.validate()?;
    Ok(ms)
}

pub fn write_market(path: &Path, ms: &MarketSeries) -> Result<()> {
    let mut w = create(path)?;
    let mut out = String::with_capacity(ms.len() * 64);
    out.push_str(&MARKET_COLUMNS.join(","));
    out.push('\n');
    for i in 0..ms.len() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            ms.timestamp(i),
            ms.spot_price[i],
            ms.demand[i],
            ms.vre_generation[i],
            ms.gas_price[i],
            ms.coal_price[i],
            ms.carbon_price[i]
        ));
    }
    w.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_units(path: &Path) -> Result<Vec<UnitSpec>> {
    let table = Table::open(path, &UNIT_COLUMNS, &[IN_SCOPE_COLUMN])?;
    let mut units = Vec::new();
    table.for_each_row(|_, c, opt| {
        let in_scope = match opt[0] {
            None | Some("") | Some("1") => true,
            Some("0") => false,
            Some(other) => return Err(format!("in_scope must be 0 or 1, got {other:?}")),
        };
        units.push(UnitSpec {
            unit_id: c[0].to_string(),
            company_id: c[1].to_string(),
            fuel_type: c[2].parse()?,
            capacity_mw: num(c[3], UNIT_COLUMNS[3])?,
            min_load_mw: num(c[4], UNIT_COLUMNS[4])?,
            efficiency: num(c[5], UNIT_COLUMNS[5])?,
            startup_depreciation_eur_mw: num(c[6], UNIT_COLUMNS[6])?,
            cold_start_fuel_mwh_mw: num(c[7], UNIT_COLUMNS[7])?,
            cold_start_factor: num(c[8], UNIT_COLUMNS[8])?,
            in_scope,
        });
        Ok(())
    })?;
    let mut seen = HashSet::new();
    for u in &units {
        if !seen.insert(u.unit_id.as_str()) {
            return Err(Error::Validation(format!("duplicate unit {:?}", u.unit_id)));
        }
        u.validate()?;
    }
    Ok(units)
}

pub fn write_units(path: &Path, units: &[UnitSpec]) -> Result<()> {
    let with_scope = units.iter().any(|u| !u.in_scope);
    let mut out = UNIT_COLUMNS.join(",");
    if with_scope {
        out.push(',');
        out.push_str(IN_SCOPE_COLUMN);
    }
    out.push('\n');
    for u in units {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}",
            u.unit_id,
            u.company_id,
            u.fuel_type,
            u.capacity_mw,
            u.min_load_mw,
            u.efficiency,
            u.startup_depreciation_eur_mw,
            u.cold_start_fuel_mwh_mw,
            u.cold_start_factor
        ));
        if with_scope {
            out.push_str(if u.in_scope { ",1" } else { ",0" });
        }
        out.push('\n');
    }
    create(path)?.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Reads one long-format unit-hour file into a dense grid, rejecting unknown
/// units, out-of-range timestamps and duplicates.
fn load_long<T: Copy>(
    path: &Path,
    columns: &[&str; 3],
    ms: &MarketSeries,
    units: &[UnitSpec],
    parse: impl Fn(&str) -> std::result::Result<T, String>,
) -> Result<Vec<Vec<Option<T>>>> {
    let table = Table::open(path, columns, &[])?;
    let index = unit_index(units);
    let mut grid: Vec<Vec<Option<T>>> = vec![vec![None; ms.len()]; units.len()];
    let mut misaligned: Option<(String, String)> = None;
    let mut unknown: Option<String> = None;
    table.for_each_row(|_, c, _| {
        let ts = EpochHour::parse(c[0])?;
        let Some(h) = ms.index_of(ts) else {
            misaligned.get_or_insert((ts.to_string(), "outside the market series".into()));
            return Ok(());
        };
        let Some(&u) = index.get(c[1]) else {
            unknown.get_or_insert(c[1].to_string());
            return Ok(());
        };
        let value = parse(c[2])?;
        if grid[u][h].replace(value).is_some() {
            return Err(format!("duplicate row for {} at {ts}", c[1]));
        }
        Ok(())
    })?;
    if let Some(id) = unknown {
        return Err(Error::Reference(format!(
            "{} references unit {id:?} absent from the unit list",
            path.display()
        )));
    }
    if let Some((timestamp, msg)) = misaligned {
        return Err(Error::Alignment { timestamp, msg });
    }
    Ok(grid)
}

pub fn load_outages(path: &Path, ms: &MarketSeries, units: &[UnitSpec]) -> Result<OutageMask> {
    let grid = load_long(path, &OUTAGE_COLUMNS, ms, units, |cell| match cell {
        "1" => Ok(true),
        "0" => Ok(false),
        other => Err(format!("available must be 0 or 1, got {other:?}")),
    })?;
    let mut mask = OutageMask::all_available(ms.len());
    for (u, row) in grid.into_iter().enumerate() {
        if row.iter().any(Option::is_some) {
            let flags = row.into_iter().map(|v| v.unwrap_or(true)).collect();
            mask.available.insert(units[u].unit_id.clone(), flags);
        }
    }
    Ok(mask)
}

pub fn write_outages(path: &Path, ms: &MarketSeries, units: &[UnitSpec], mask: &OutageMask) -> Result<()> {
    let mut out = OUTAGE_COLUMNS.join(",");
    out.push('\n');
    for h in 0..ms.len() {
        let ts = ms.timestamp(h);
        for u in units {
            if let Some(flags) = mask.available.get(&u.unit_id) {
                out.push_str(&format!("{ts},{},{}\n", u.unit_id, u8::from(flags[h])));
            }
        }
    }
    create(path)?.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Rows are required for every available hour of a modeled unit; other
/// missing unit-hours read as 0 MW.
pub fn load_generation(
    path: &Path,
    ms: &MarketSeries,
    units: &[UnitSpec],
    mask: &OutageMask,
) -> Result<ObservedGeneration> {
    let grid = load_long(path, &GENERATION_COLUMNS, ms, units, |cell| {
        let v = num(cell, "generation_mw")?;
        if v < 0.0 {
            return Err(format!("generation_mw must be >= 0, got {v}"));
        }
        Ok(v)
    })?;
    let mut mw = Vec::with_capacity(units.len());
    for (unit, row) in units.iter().zip(grid) {
        let mut values = Vec::with_capacity(row.len());
        for (h, v) in row.into_iter().enumerate() {
            let required = unit.in_scope && mask.is_available(&unit.unit_id, h);
            match v {
                Some(v) => {
                    if required && v > unit.capacity_mw + 1e-6 {
                        return Err(Error::Validation(format!(
                            "{} generates {v} MW above capacity {} at {}",
                            unit.unit_id,
                            unit.capacity_mw,
                            ms.timestamp(h)
                        )));
                    }
                    values.push(v);
                }
                None if required => {
                    return Err(Error::Validation(format!(
                        "missing generation for {} at {}",
                        unit.unit_id,
                        ms.timestamp(h)
                    )))
                }
                None => values.push(0.0),
            }
        }
        mw.push(values);
    }
    Ok(ObservedGeneration { mw })
}

pub fn write_generation(
    path: &Path,
    ms: &MarketSeries,
    units: &[UnitSpec],
    generation: &ObservedGeneration,
) -> Result<()> {
    let mut out = String::with_capacity(ms.len() * units.len() * 40);
    out.push_str(&GENERATION_COLUMNS.join(","));
    out.push('\n');
    for h in 0..ms.len() {
        let ts = ms.timestamp(h);
        for (u, unit) in units.iter().enumerate() {
            out.push_str(&format!("{ts},{},{}\n", unit.unit_id, generation.mw[u][h]));
        }
    }
    create(path)?.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Loads all four inputs. `outages` is optional; without it every hour is available.
pub fn load_inputs(market: &Path, units: &Path, generation: &Path, outages: Option<&Path>) -> Result<MarketInputs> {
    let market = load_market(market)?;
    let units = load_units(units)?;
    let outages = match outages {
        Some(p) => load_outages(p, &market, &units)?,
        None => OutageMask::all_available(market.len()),
    };
    let generation = load_generation(generation, &market, &units, &outages)?;
    Ok(MarketInputs {
        market,
        units,
        generation,
        outages,
    })
}

pub(crate) fn create(path: &Path) -> Result<std::io::BufWriter<File>> {
    File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    fn market_csv(rows: usize) -> String {
        let mut s = MARKET_COLUMNS.join(",") + "\n";
        for h in 0..rows {
            let ts = EpochHour::parse("2024-01-01T00:00:00Z").unwrap().offset(h as i64);
            s.push_str(&format!("{ts},{},50000,20000.5,30,12,80\n", 40 + h));
        }
        s
    }

    fn unit(id: &str) -> UnitSpec {
        UnitSpec {
            unit_id: id.into(),
            company_id: "c1".into(),
            fuel_type: FuelType::Ccgt,
            capacity_mw: 400.0,
            min_load_mw: 120.0,
            efficiency: 0.55,
            startup_depreciation_eur_mw: 30.0,
            cold_start_fuel_mwh_mw: 3.0,
            cold_start_factor: 1.0,
            in_scope: true,
        }
    }

    #[test]
    fn loads_well_formed_market() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "m.csv", &market_csv(48));
        let ms = load_market(&p).unwrap();
        assert_eq!(ms.len(), 48);
        assert_eq!(ms.spot_price[3], 43.0);
    }

    #[test]
    fn gap_is_alignment_error_naming_the_hour() {
        let dir = tempfile::tempdir().unwrap();
        let body: Vec<String> = market_csv(48).lines().map(String::from).collect();
        // Drop data row 25 (hour index 24).
        let without: Vec<&str> = body
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != 25)
            .map(|(_, l)| l.as_str())
            .collect();
        let p = write(dir.path(), "m.csv", &(without.join("\n") + "\n"));
        match load_market(&p) {
            Err(Error::Alignment { timestamp, .. }) => {
                assert_eq!(timestamp, "2024-01-02T01:00:00Z")
            }
            other => panic!("expected alignment error, got {other:?}"),
        }
    }

    #[test]
    fn negative_demand_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let body = market_csv(3).replacen(",50000,", ",-5,", 1);
        let p = write(dir.path(), "m.csv", &body);
        assert!(matches!(load_market(&p), Err(Error::Validation(_))));
    }

    #[test]
    fn missing_column_and_bad_cells() {
        let dir = tempfile::tempdir().unwrap();
        let body = market_csv(3).replace("carbon_price", "co2");
        let p = write(dir.path(), "m.csv", &body);
        assert!(matches!(load_market(&p), Err(Error::Schema { .. })));

        let body = market_csv(3).replacen(",30,", ",abc,", 1);
        let p = write(dir.path(), "m.csv", &body);
        match load_market(&p) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 1),
            other => panic!("expected parse error, got {other:?}"),
        }

        let body = market_csv(3).replacen(",30,", ",,", 1);
        let p = write(dir.path(), "m.csv", &body);
        assert!(matches!(load_market(&p), Err(Error::Parse { .. })));
    }

    #[test]
    fn residual_load_examples() {
        let ms = MarketSeries {
            start: EpochHour(0),
            spot_price: vec![0.0; 3],
            demand: vec![50000.0, 40000.0, 30000.0],
            vre_generation: vec![20000.0, 40000.0, 35000.0],
            gas_price: vec![0.0; 3],
            coal_price: vec![0.0; 3],
            carbon_price: vec![0.0; 3],
        };
        assert_eq!(residual_load(&ms), vec![30000.0, 0.0, -5000.0]);
    }

    #[test]
    fn availability_examples() {
        let units = vec![unit("a"), unit("b")];
        let all = OutageMask::all_available(24);
        assert_eq!(availability_filter(&units, &all).unwrap().len(), 48);

        let mut mask = OutageMask::all_available(24);
        mask.available.insert("a".into(), vec![false; 24]);
        let set = availability_filter(&units, &mask).unwrap();
        assert_eq!(set.count_for_unit(0), 0);
        assert_eq!(set.count_for_unit(1), 24);

        let mut flags = vec![true; 24];
        flags[..10].iter_mut().for_each(|f| *f = false);
        let mut mask = OutageMask::all_available(24);
        mask.available.insert("b".into(), flags);
        let set = availability_filter(&units, &mask).unwrap();
        assert_eq!(set.count_for_unit(1), 14);
        assert_eq!(set.restrict(&units, &mask), set);

        let mut mask = OutageMask::all_available(24);
        mask.available.insert("ghost".into(), vec![true; 24]);
        assert!(matches!(availability_filter(&units, &mask), Err(Error::Reference(_))));
    }

    #[test]
    fn unit_invariants_enforced() {
        let mut u = unit("x");
        u.min_load_mw = 400.0;
        assert!(u.validate().is_err());
        let mut u = unit("x");
        u.efficiency = 1.0;
        assert!(u.validate().is_err());
        let mut u = unit("x");
        u.cold_start_factor = -1.0;
        assert!(u.validate().is_err());
        let mut u = unit("nuclear");
        u.in_scope = false;
        u.min_load_mw = 0.0;
        u.efficiency = 0.0;
        assert!(u.validate().is_ok());
    }

    #[test]
    fn generation_requires_available_hours_only() {
        let dir = tempfile::tempdir().unwrap();
        let ms = load_market(&write(dir.path(), "m.csv", &market_csv(2))).unwrap();
        let units = vec![unit("a")];
        let mut mask = OutageMask::all_available(2);
        mask.available.insert("a".into(), vec![true, false]);
        let body = "timestamp,unit_id,generation_mw\n2024-01-01T00:00:00Z,a,300\n";
        let p = write(dir.path(), "g.csv", body);
        let g = load_generation(&p, &ms, &units, &mask).unwrap();
        assert_eq!(g.mw[0], vec![300.0, 0.0]);
        let all = OutageMask::all_available(2);
        assert!(matches!(
            load_generation(&p, &ms, &units, &all),
            Err(Error::Validation(_))
        ));
        let body = "timestamp,unit_id,generation_mw\n2024-01-01T00:00:00Z,zz,300\n";
        let p = write(dir.path(), "g2.csv", body);
        assert!(matches!(
            load_generation(&p, &ms, &units, &mask),
            Err(Error::Reference(_))
        ));
    }

    fn value() -> impl Strategy<Value = f64> {
        (0u32..2_000_000).prop_map(|v| v as f64 / 100.0)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn canonical_files_round_trip(
            rows in proptest::collection::vec(
                (-50_000i32..50_000, value(), value(), value(), value(), value()), 1..40),
            start in 400_000i64..500_000,
        ) {
            let dir = tempfile::tempdir().unwrap();
            let ms = MarketSeries {
                start: EpochHour(start),
                spot_price: rows.iter().map(|r| r.0 as f64 / 7.0).collect(),
                demand: rows.iter().map(|r| r.1).collect(),
                vre_generation: rows.iter().map(|r| r.2).collect(),
                gas_price: rows.iter().map(|r| r.3).collect(),
                coal_price: rows.iter().map(|r| r.4).collect(),
                carbon_price: rows.iter().map(|r| r.5).collect(),
            };
            let p = dir.path().join("m.csv");
            write_market(&p, &ms).unwrap();
            let first = std::fs::read(&p).unwrap();
            let loaded = load_market(&p).unwrap();
            prop_assert_eq!(&loaded, &ms);
            let q = dir.path().join("m2.csv");
            write_market(&q, &loaded).unwrap();
            prop_assert_eq!(first, std::fs::read(&q).unwrap());
        }

        #[test]
        fn residual_load_is_linear_in_demand(
            d in proptest::collection::vec(value(), 1..20), x in value()
        ) {
            let ms = MarketSeries {
                start: EpochHour(0),
                spot_price: vec![0.0; d.len()],
                demand: d.clone(),
                vre_generation: d.iter().map(|v| v * 0.3).collect(),
                gas_price: vec![0.0; d.len()],
                coal_price: vec![0.0; d.len()],
                carbon_price: vec![0.0; d.len()],
            };
            let mut shifted = ms.clone();
            shifted.demand.iter_mut().for_each(|v| *v += x);
            for (a, b) in residual_load(&shifted).iter().zip(residual_load(&ms)) {
                prop_assert!((a - (b + x)).abs() <= 1e-9 * (1.0 + a.abs()));
            }
        }
    }
}
