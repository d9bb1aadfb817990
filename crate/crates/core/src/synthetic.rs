//! Synthetic markets with known ground truth.
//!
//! Fuel prices follow planted plateaus, the spot price is a planted
//! piecewise-linear function of residual load plus noise, and every unit is
//! first dispatched competitively at nominal parameters. Deviations are then
//! drawn independently from a logistic law in the net profit of the
//! competitive position.
//!
//! A unit's own deviation would move its company's generation and so the
//! net profit the estimator computes from observed output. By default each
//! company therefore owns an out-of-scope balancing portfolio that absorbs
//! its units' deviations, which keeps observed company generation equal to
//! the competitive total and the observed profit equal to the planted one.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calendar::{EpochHour, LocalCalendar, DEFAULT_TIMEZONE};
use crate::costs::{dispatch_problem, unit_variable_cost, FuelParams, Multipliers};
use crate::dispatch::{chain_horizons, HorizonConfig};
use crate::econometrics::logistic;
use crate::error::{Error, Result};
use crate::incentives::{hedge_periods, margin, net_exposure, net_profit_pushin, net_profit_withhold, HedgePeriod};
use crate::market_data::{
    residual_load, write_generation, write_market, write_outages, write_units, FuelType, MarketInputs, MarketSeries,
    ObservedGeneration, OutageMask, UnitSpec,
};
use crate::panel_io::write_text;
use crate::rng;

/// Fuel price plateau starting at `start_hour`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuelRegimeTruth {
    pub start_hour: usize,
    pub gas_price: f64,
    pub coal_price: f64,
}

/// Planted price curve of one regime: `price_at_first_knot` at `knots[0]`
/// with `slopes[s]` on segment `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupplyTruth {
    pub knots: Vec<f64>,
    pub slopes: Vec<f64>,
    pub price_at_first_knot: f64,
}

impl SupplyTruth {
    pub fn slope_at(&self, load: f64) -> f64 {
        self.slopes[self.knots.partition_point(|&k| k <= load)]
    }

    pub fn price(&self, load: f64) -> f64 {
        let mut p = self.price_at_first_knot;
        let k0 = self.knots[0];
        if load < k0 {
            return p - self.slopes[0] * (k0 - load);
        }
        for (s, w) in self.knots.windows(2).enumerate() {
            p += self.slopes[s + 1] * (load.min(w[1]) - w[0]).max(0.0);
        }
        let last = *self.knots.last().expect("at least one knot");
        p + self.slopes[self.knots.len()] * (load - last).max(0.0)
    }
}

/// Intercepts and slopes of both deviation laws. An intercept of −∞ switches
/// the corresponding deviation off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedCoefficients {
    pub withhold_intercept: f64,
    pub withhold_slope: f64,
    pub pushin_intercept: f64,
    pub pushin_slope: f64,
}

impl Default for PlantedCoefficients {
    fn default() -> Self {
        Self {
            withhold_intercept: -1.166,
            withhold_slope: 0.0102,
            pushin_intercept: -0.9327,
            pushin_slope: 0.0034,
        }
    }
}

impl PlantedCoefficients {
    pub const NONE: PlantedCoefficients = PlantedCoefficients {
        withhold_intercept: f64::NEG_INFINITY,
        withhold_slope: 0.0,
        pushin_intercept: f64::NEG_INFINITY,
        pushin_slope: 0.0,
    };

    fn probability(intercept: f64, slope: f64, pi: f64) -> f64 {
        if intercept == f64::NEG_INFINITY {
            0.0
        } else {
            logistic(intercept + slope * pi)
        }
    }

    pub fn withhold_probability(&self, pi_w: f64) -> f64 {
        Self::probability(self.withhold_intercept, self.withhold_slope, pi_w)
    }

    pub fn pushin_probability(&self, pi_p: f64) -> f64 {
        Self::probability(self.pushin_intercept, self.pushin_slope, pi_p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_units: usize,
    pub n_companies: usize,
    /// First hour, RFC 3339 in UTC.
    pub start: String,
    pub hours: usize,
    pub timezone: String,
    pub fuel_regimes: Vec<FuelRegimeTruth>,
    /// One curve per fuel regime.
    pub supply: Vec<SupplyTruth>,
    pub fuel_noise_sd: f64,
    pub carbon_price: f64,
    pub carbon_noise_sd: f64,
    pub price_noise_sd: f64,
    pub demand_mean: f64,
    pub demand_daily_amplitude: f64,
    pub demand_seasonal_amplitude: f64,
    pub weekend_drop: f64,
    pub demand_noise_sd: f64,
    pub solar_peak: f64,
    pub wind_mean: f64,
    pub wind_sd: f64,
    /// AR(1) coefficient of hourly wind.
    pub wind_persistence: f64,
    pub capacity_min_mw: f64,
    pub capacity_max_mw: f64,
    /// Expected share of unit-hours on outage.
    pub outage_share: f64,
    pub outage_mean_hours: f64,
    pub hedge_rate: f64,
    pub coefficients: PlantedCoefficients,
    /// AR(1) correlation of the latent deviation draws; 0 means independent.
    pub deviation_persistence: f64,
    /// Add one balancing portfolio per company (unit ids `B0`, `B1`, ...).
    /// Without it deviations feed back into the observed net profit.
    pub balancing: bool,
    pub fuel: FuelParams,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let curve = |anchor| SupplyTruth {
            knots: vec![40_000.0, 55_000.0],
            slopes: vec![0.0015, 0.004, 0.010],
            price_at_first_knot: anchor,
        };
        Self {
            seed: 1,
            n_units: 40,
            n_companies: 4,
            start: "2021-01-01T00:00:00Z".into(),
            hours: 8760,
            timezone: DEFAULT_TIMEZONE.into(),
            fuel_regimes: vec![
                FuelRegimeTruth {
                    start_hour: 0,
                    gas_price: 35.0,
                    coal_price: 12.0,
                },
                FuelRegimeTruth {
                    start_hour: 2900,
                    gas_price: 55.0,
                    coal_price: 18.0,
                },
                FuelRegimeTruth {
                    start_hour: 5800,
                    gas_price: 30.0,
                    coal_price: 11.0,
                },
            ],
            supply: vec![curve(75.0), curve(100.0), curve(65.0)],
            fuel_noise_sd: 1.0,
            carbon_price: 40.0,
            carbon_noise_sd: 0.5,
            price_noise_sd: 1.0,
            demand_mean: 55_000.0,
            demand_daily_amplitude: 7_000.0,
            demand_seasonal_amplitude: 5_000.0,
            weekend_drop: 4_000.0,
            demand_noise_sd: 1_500.0,
            solar_peak: 9_000.0,
            wind_mean: 10_000.0,
            wind_sd: 5_000.0,
            wind_persistence: 0.97,
            capacity_min_mw: 150.0,
            capacity_max_mw: 600.0,
            outage_share: 0.08,
            outage_mean_hours: 72.0,
            hedge_rate: 1.0,
            coefficients: PlantedCoefficients::default(),
            deviation_persistence: 0.0,
            balancing: true,
            fuel: FuelParams::default(),
        }
    }
}

impl SynthConfig {
    /// Single fuel regime over a short sample.
    pub fn small(n_units: usize, hours: usize, seed: u64) -> Self {
        let d = Self::default();
        Self {
            seed,
            n_units,
            n_companies: n_units.clamp(1, 2),
            hours,
            fuel_regimes: vec![d.fuel_regimes[0]],
            supply: vec![d.supply[0].clone()],
            ..d
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_units == 0 || self.n_companies == 0 || self.hours < 24 {
            return bad("need n_units >= 1, n_companies >= 1 and hours >= 24".into());
        }
        EpochHour::parse(&self.start).map_err(Error::Config)?;
        LocalCalendar::new(&self.timezone)?;
        if self.fuel_regimes.is_empty() || self.fuel_regimes[0].start_hour != 0 {
            return bad("the first fuel regime must start at hour 0".into());
        }
        if self.fuel_regimes.windows(2).any(|w| w[1].start_hour <= w[0].start_hour)
            || self.fuel_regimes.last().is_some_and(|r| r.start_hour >= self.hours)
        {
            return bad("fuel regime starts must increase and lie inside the sample".into());
        }
        if self.supply.len() != self.fuel_regimes.len() {
            return bad(format!(
                "{} supply curves for {} fuel regimes",
                self.supply.len(),
                self.fuel_regimes.len()
            ));
        }
        for s in &self.supply {
            if s.knots.is_empty()
                || s.slopes.len() != s.knots.len() + 1
                || s.knots.windows(2).any(|w| w[1] <= w[0])
                || s.slopes.iter().any(|&v| !(v >= 0.0))
            {
                return bad("supply curve needs increasing knots and one nonnegative slope per segment".into());
            }
        }
        let c = self.coefficients;
        if [c.withhold_slope, c.pushin_slope].iter().any(|v| !v.is_finite())
            || [c.withhold_intercept, c.pushin_intercept]
                .iter()
                .any(|v| v.is_nan() || *v == f64::INFINITY)
        {
            return bad("planted coefficients must be finite (intercepts may be -inf)".into());
        }
        if !(self.capacity_min_mw > 0.0 && self.capacity_max_mw >= self.capacity_min_mw) {
            return bad("capacity range must be positive and ordered".into());
        }
        if !(0.0..1.0).contains(&self.outage_share) || !(self.outage_mean_hours >= 1.0) {
            return bad("outage_share must be in [0, 1) and outage_mean_hours >= 1".into());
        }
        if !(0.0..1.0).contains(&self.wind_persistence) || !(0.0..1.0).contains(&self.deviation_persistence) {
            return bad("persistence parameters must be in [0, 1)".into());
        }
        if !(0.0..=1.0).contains(&self.hedge_rate) {
            return bad(format!("hedge_rate {} outside [0, 1]", self.hedge_rate));
        }
        let noise = [
            self.fuel_noise_sd,
            self.carbon_noise_sd,
            self.price_noise_sd,
            self.demand_noise_sd,
            self.wind_sd,
            self.carbon_price,
            self.solar_peak,
        ];
        if noise.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("noise levels and prices must be finite and >= 0".into());
        }
        self.fuel.validate()
    }

    pub fn regime_of(&self, hour: usize) -> usize {
        self.fuel_regimes.partition_point(|r| r.start_hour <= hour) - 1
    }
}

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn market_series(cfg: &SynthConfig) -> Result<MarketSeries> {
    let start = EpochHour::parse(&cfg.start).map_err(Error::Config)?;
    let cal = LocalCalendar::new(&cfg.timezone)?;
    let n = cfg.hours;
    let mut rng = rng::stream(cfg.seed, "synth-market", "series", 0);
    let mut ms = MarketSeries {
        start,
        spot_price: Vec::with_capacity(n),
        demand: Vec::with_capacity(n),
        vre_generation: Vec::with_capacity(n),
        gas_price: Vec::with_capacity(n),
        coal_price: Vec::with_capacity(n),
        carbon_price: Vec::with_capacity(n),
    };
    let tau = std::f64::consts::TAU;
    let mut wind = cfg.wind_mean;
    let innovation = cfg.wind_sd * (1.0 - cfg.wind_persistence.powi(2)).sqrt();
    for h in 0..n {
        let ts = start.offset(h as i64);
        let local = cal.local(ts);
        let hour = f64::from(local.hour);
        let season = (tau * h as f64 / 8760.0).cos();
        let weekend = matches!(
            local.weekday,
            jiff::civil::Weekday::Saturday | jiff::civil::Weekday::Sunday
        );
        let demand = cfg.demand_mean - cfg.demand_daily_amplitude * (tau * (hour - 2.0) / 24.0).cos()
            + cfg.demand_seasonal_amplitude * season
            - if weekend { cfg.weekend_drop } else { 0.0 }
            + cfg.demand_noise_sd * normal(&mut rng);
        let daylight = ((hour - 6.0) / 12.0 * std::f64::consts::PI).sin().max(0.0);
        let solar = cfg.solar_peak * daylight * (1.0 - 0.5 * season);
        wind = cfg.wind_mean + cfg.wind_persistence * (wind - cfg.wind_mean) + innovation * normal(&mut rng);
        let vre = solar + wind.max(0.0);
        let regime = &cfg.fuel_regimes[cfg.regime_of(h)];
        let demand = demand.max(0.0);
        let load = demand - vre;
        ms.demand.push(demand);
        ms.vre_generation.push(vre);
        ms.gas_price
            .push((regime.gas_price + cfg.fuel_noise_sd * normal(&mut rng)).max(0.1));
        ms.coal_price
            .push((regime.coal_price + cfg.fuel_noise_sd * normal(&mut rng)).max(0.1));
        ms.carbon_price
            .push((cfg.carbon_price + cfg.carbon_noise_sd * normal(&mut rng)).max(0.0));
        ms.spot_price
            .push(cfg.supply[cfg.regime_of(h)].price(load) + cfg.price_noise_sd * normal(&mut rng));
    }
    ms.validate()?;
    Ok(ms)
}

fn fleet(cfg: &SynthConfig) -> Vec<UnitSpec> {
    (0..cfg.n_units)
        .map(|i| {
            let id = format!("U{i:03}");
            let mut rng = rng::stream(cfg.seed, "synth-unit", &id, 0);
            let fuel = FuelType::ALL[i % FuelType::ALL.len()];
            let (min_share, efficiency) = match fuel {
                FuelType::Lignite => (0.40, 0.38),
                FuelType::HardCoal => (0.35, 0.42),
                FuelType::Ccgt => (0.30, 0.56),
                FuelType::GasOther => (0.20, 0.36),
            };
            let capacity = rng.random_range(cfg.capacity_min_mw..=cfg.capacity_max_mw).round();
            UnitSpec {
                unit_id: id,
                company_id: format!("C{}", i % cfg.n_companies),
                fuel_type: fuel,
                capacity_mw: capacity,
                min_load_mw: (capacity * min_share).round(),
                efficiency: efficiency + rng.random_range(-0.02..0.02),
                startup_depreciation_eur_mw: rng.random_range(20.0..60.0),
                cold_start_fuel_mwh_mw: rng.random_range(2.0..4.0),
                cold_start_factor: 1.0,
                in_scope: true,
            }
        })
        .collect()
}

fn outages(cfg: &SynthConfig, units: &[UnitSpec]) -> OutageMask {
    let mut mask = OutageMask::all_available(cfg.hours);
    if cfg.outage_share == 0.0 {
        return mask;
    }
    // Alternating renewal process with the requested long-run share.
    let start_rate = cfg.outage_share / ((1.0 - cfg.outage_share) * cfg.outage_mean_hours);
    for u in units {
        let mut rng = rng::stream(cfg.seed, "synth-outage", &u.unit_id, 0);
        let mut avail = vec![true; cfg.hours];
        let mut h = 0;
        while h < cfg.hours {
            if rng.random::<f64>() < start_rate {
                let len = (-cfg.outage_mean_hours * (1.0 - rng.random::<f64>()).ln()).ceil() as usize;
                for a in avail.iter_mut().skip(h).take(len.max(1)) {
                    *a = false;
                }
                h += len.max(1);
            } else {
                h += 1;
            }
        }
        if avail.iter().any(|a| !a) {
            mask.available.insert(u.unit_id.clone(), avail);
        }
    }
    mask
}

/// Known state of one unit-hour in the generated market.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthRow {
    pub hour: usize,
    pub unit: usize,
    /// Competitive state at nominal parameters.
    pub competitive_on: bool,
    pub deviated: bool,
    pub delta: f64,
    pub exposure_mw: f64,
    pub margin: f64,
    pub pi_w: f64,
    pub pi_p: f64,
    /// Planted probability of the deviation available in this hour.
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SynthConfig,
    pub regime_breakpoints: Vec<usize>,
    pub competitive_on_hours: usize,
    pub competitive_off_hours: usize,
    pub withheld_hours: usize,
    pub pushed_in_hours: usize,
    /// Capacity of withheld unit-hours, MWh.
    pub withheld_capacity_mwh: f64,
    pub pushed_in_capacity_mwh: f64,
    pub expected_withheld_capacity_mwh: f64,
    pub expected_pushed_in_capacity_mwh: f64,
}

#[derive(Debug, Clone)]
pub struct SynthMarket {
    pub inputs: MarketInputs,
    pub truth: GroundTruth,
    pub rows: Vec<TruthRow>,
}

/// Latent uniforms, independent or AR(1) through a Gaussian copula.
fn deviation_uniforms(cfg: &SynthConfig, unit_id: &str) -> Vec<f64> {
    let mut rng = rng::stream(cfg.seed, "synth-deviation", unit_id, 0);
    let rho = cfg.deviation_persistence;
    if rho == 0.0 {
        return (0..cfg.hours).map(|_| rng.random::<f64>()).collect();
    }
    let scale = (1.0 - rho * rho).sqrt();
    let mut e = normal(&mut rng);
    (0..cfg.hours)
        .map(|_| {
            e = rho * e + scale * normal(&mut rng);
            0.5 * libm::erfc(-e / std::f64::consts::SQRT_2)
        })
        .collect()
}

/// Hedged MW per (company, hour) for the given company generation.
fn hedged_by_hour(company_mw: &[Vec<f64>], period_id: &[usize], n_periods: usize, rate: f64) -> Vec<Vec<f64>> {
    let mut count = vec![0usize; n_periods];
    for &p in period_id {
        count[p] += 1;
    }
    company_mw
        .iter()
        .map(|series| {
            let mut sum = vec![0.0; n_periods];
            for (g, &p) in series.iter().zip(period_id) {
                sum[p] += g;
            }
            period_id.iter().map(|&p| rate * sum[p] / count[p] as f64).collect()
        })
        .collect()
}

/// Out-of-scope portfolio of company `c` that absorbs its units' deviations.
fn balancing_unit(c: usize, capacity_mw: f64) -> UnitSpec {
    UnitSpec {
        unit_id: format!("B{c}"),
        company_id: format!("C{c}"),
        fuel_type: FuelType::GasOther,
        capacity_mw,
        min_load_mw: 0.0,
        efficiency: 0.5,
        startup_depreciation_eur_mw: 0.0,
        cold_start_fuel_mwh_mw: 0.0,
        cold_start_factor: 0.0,
        in_scope: false,
    }
}

pub fn generate_market(cfg: &SynthConfig) -> Result<SynthMarket> {
    cfg.validate()?;
    let ms = market_series(cfg)?;
    let mut units = fleet(cfg);
    for u in &units {
        u.validate().map_err(|e| Error::Config(e.to_string()))?;
    }
    let mask = outages(cfg, &units);
    let n = cfg.hours;
    let load = residual_load(&ms);
    let delta: Vec<f64> = (0..n).map(|h| cfg.supply[cfg.regime_of(h)].slope_at(load[h])).collect();

    // Competitive schedule at nominal parameters; zero while on outage.
    let competitive: Vec<(Vec<bool>, Vec<f64>)> = units
        .par_iter()
        .map(|u| {
            let problem = dispatch_problem(u, &ms, &cfg.fuel, Multipliers::NOMINAL)?;
            let mut sol = chain_horizons(&problem, HorizonConfig::default())?;
            for h in 0..n {
                if !mask.is_available(&u.unit_id, h) {
                    sol.generation[h] = 0.0;
                }
            }
            Ok((sol.on, sol.generation))
        })
        .collect::<Result<_>>()?;
    let costs: Vec<Vec<f64>> = units
        .iter()
        .map(|u| unit_variable_cost(u, &ms, &cfg.fuel))
        .collect::<Result<_>>()?;

    let cal = LocalCalendar::new(&cfg.timezone)?;
    let periods = hedge_periods(&ms, &cal);
    let mut ids: BTreeMap<HedgePeriod, usize> = BTreeMap::new();
    for p in &periods {
        let next = ids.len();
        ids.entry(*p).or_insert(next);
    }
    let period_id: Vec<usize> = periods.iter().map(|p| ids[p]).collect();
    let company: Vec<usize> = (0..units.len()).map(|i| i % cfg.n_companies).collect();

    // Company position absent any deviation. A balancing portfolio runs at
    // the summed minimum load of its company's units so it can also absorb
    // push-ins.
    let mut base = vec![0.0; cfg.n_companies];
    let mut capacity = vec![0.0; cfg.n_companies];
    for (i, u) in units.iter().enumerate() {
        if cfg.balancing {
            base[company[i]] += u.min_load_mw;
        }
        capacity[company[i]] += u.capacity_mw;
    }
    let mut company_mw: Vec<Vec<f64>> = base.iter().map(|&b| vec![b; n]).collect();
    for (i, (_, g)) in competitive.iter().enumerate() {
        for (acc, v) in company_mw[company[i]].iter_mut().zip(g) {
            *acc += v;
        }
    }
    let hedged = hedged_by_hour(&company_mw, &period_id, ids.len(), cfg.hedge_rate);

    let coef = cfg.coefficients;
    let planted: Vec<Vec<Option<TruthRow>>> = units
        .par_iter()
        .enumerate()
        .map(|(i, u)| {
            let draws = deviation_uniforms(cfg, &u.unit_id);
            let c = company[i];
            (0..n)
                .map(|h| {
                    if !mask.is_available(&u.unit_id, h) {
                        return None;
                    }
                    let on = competitive[i].0[h];
                    let e = net_exposure(company_mw[c][h], hedged[c][h]);
                    let m = margin(ms.spot_price[h], costs[i][h]);
                    let (pi_w, pi_p) = (net_profit_withhold(delta[h], e, m), net_profit_pushin(delta[h], e, m));
                    let p = if on {
                        coef.withhold_probability(pi_w)
                    } else {
                        coef.pushin_probability(pi_p)
                    };
                    Some(TruthRow {
                        hour: h,
                        unit: i,
                        competitive_on: on,
                        deviated: draws[h] < p,
                        delta: delta[h],
                        exposure_mw: e,
                        margin: m,
                        pi_w,
                        pi_p,
                        probability: p,
                    })
                })
                .collect()
        })
        .collect();

    let mut mw: Vec<Vec<f64>> = competitive.iter().map(|(_, g)| g.clone()).collect();
    let mut balance = base.iter().map(|&b| vec![b; n]).collect::<Vec<_>>();
    let mut rows = Vec::new();
    let mut truth = GroundTruth {
        config: cfg.clone(),
        regime_breakpoints: cfg.fuel_regimes.iter().skip(1).map(|r| r.start_hour).collect(),
        competitive_on_hours: 0,
        competitive_off_hours: 0,
        withheld_hours: 0,
        pushed_in_hours: 0,
        withheld_capacity_mwh: 0.0,
        pushed_in_capacity_mwh: 0.0,
        expected_withheld_capacity_mwh: 0.0,
        expected_pushed_in_capacity_mwh: 0.0,
    };
    for h in 0..n {
        for (i, unit_rows) in planted.iter().enumerate() {
            let Some(r) = unit_rows[h] else { continue };
            let k = units[i].capacity_mw;
            if r.competitive_on {
                truth.competitive_on_hours += 1;
                truth.expected_withheld_capacity_mwh += r.probability * k;
            } else {
                truth.competitive_off_hours += 1;
                truth.expected_pushed_in_capacity_mwh += r.probability * k;
            }
            if r.deviated {
                let shift = if r.competitive_on {
                    truth.withheld_hours += 1;
                    truth.withheld_capacity_mwh += k;
                    -mw[i][h]
                } else {
                    truth.pushed_in_hours += 1;
                    truth.pushed_in_capacity_mwh += k;
                    units[i].min_load_mw
                };
                mw[i][h] += shift;
                balance[company[i]][h] -= shift;
            }
            rows.push(r);
        }
    }
    if cfg.balancing {
        for (c, series) in balance.into_iter().enumerate() {
            units.push(balancing_unit(c, base[c] + capacity[c]));
            mw.push(series);
        }
    }
    Ok(SynthMarket {
        inputs: MarketInputs {
            market: ms,
            units,
            generation: ObservedGeneration { mw },
            outages: mask,
        },
        truth,
        rows,
    })
}

pub const TRUTH_COLUMNS: [&str; 10] = [
    "timestamp",
    "unit_id",
    "z_true",
    "deviated",
    "delta",
    "exposure_mw",
    "margin",
    "pi_w",
    "pi_p",
    "probability",
];

/// Writes the input CSVs, `ground_truth.json` and `truth_panel.csv` to `dir`.
pub fn write_synthetic(dir: &Path, market: &SynthMarket) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let inp = &market.inputs;
    write_market(&dir.join("market.csv"), &inp.market)?;
    write_units(&dir.join("units.csv"), &inp.units)?;
    write_generation(&dir.join("generation.csv"), &inp.market, &inp.units, &inp.generation)?;
    write_outages(&dir.join("outages.csv"), &inp.market, &inp.units, &inp.outages)?;
    let json = serde_json::to_string_pretty(&market.truth)? + "\n";
    write_text(&dir.join("ground_truth.json"), &json)?;
    let mut out = TRUTH_COLUMNS.join(",") + "\n";
    for r in &market.rows {
        out += &format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            inp.market.timestamp(r.hour),
            inp.units[r.unit].unit_id,
            u8::from(r.competitive_on),
            u8::from(r.deviated),
            r.delta,
            r.exposure_mw,
            r.margin,
            r.pi_w,
            r.pi_p,
            r.probability
        );
    }
    write_text(&dir.join("truth_panel.csv"), &out)
}
