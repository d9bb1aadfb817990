//! Summary tables over the panels and the fitted models.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::calendar::LocalCalendar;
use crate::econometrics::{predict_prob, JoinedRow};
use crate::error::{Error, Result};
use crate::incentives::{Direction, IncentivePanel};
use crate::market_data::{MarketSeries, UnitSpec};
use crate::monte_carlo::DispatchPanel;

/// Linear-interpolation quantile of sorted data (the common "type 7"
/// definition, the default of most statistics packages).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileSummary {
    pub n: usize,
    pub min: f64,
    pub q50: f64,
    pub q90: f64,
    pub q99: f64,
    pub max: f64,
}

pub fn summarize(values: &[f64]) -> Result<QuantileSummary> {
    if values.is_empty() {
        return Err(Error::Domain("no values to summarize".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(QuantileSummary {
        n: v.len(),
        min: v[0],
        q50: quantile(&v, 0.5),
        q90: quantile(&v, 0.9),
        q99: quantile(&v, 0.99),
        max: v[v.len() - 1],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfitQuantiles {
    pub withhold: Option<QuantileSummary>,
    pub pushin: Option<QuantileSummary>,
}

/// Net profit quantiles over every unit-hour, and over the unit-hours where
/// the deviation is actually available (benchmark on for withholding,
/// benchmark off for push-in).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryQuantiles {
    pub full_panel: ProfitQuantiles,
    pub opportunity: ProfitQuantiles,
}

pub fn summary_quantiles(incentives: &IncentivePanel, dispatch: &DispatchPanel) -> Result<SummaryQuantiles> {
    if incentives.rows.is_empty() {
        return Err(Error::Domain("empty incentive panel".into()));
    }
    if incentives.rows.len() != dispatch.rows.len() {
        return Err(Error::Shape("dispatch and incentive panels differ in length".into()));
    }
    let pw: Vec<f64> = incentives.rows.iter().map(|r| r.pi_w).collect();
    let pp: Vec<f64> = incentives.rows.iter().map(|r| r.pi_p).collect();
    let pick = |z: bool, v: &[f64]| -> Vec<f64> {
        dispatch
            .rows
            .iter()
            .zip(v)
            .filter(|(d, _)| d.z == Some(z))
            .map(|(_, &x)| x)
            .collect()
    };
    Ok(SummaryQuantiles {
        full_panel: ProfitQuantiles {
            withhold: Some(summarize(&pw)?),
            pushin: Some(summarize(&pp)?),
        },
        opportunity: ProfitQuantiles {
            withhold: summarize(&pick(true, &pw)).ok(),
            pushin: summarize(&pick(false, &pp)).ok(),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub n: usize,
    pub mean_profit: f64,
    pub observed_rate: f64,
    pub predicted_rate: f64,
}

/// Equal-count bins along the predictor. Bin `b` of `k` holds sorted
/// observations `b·n/k .. (b+1)·n/k`.
pub fn bin_curve(x: &[f64], y: &[bool], beta: [f64; 2], n_bins: usize) -> Result<Vec<Bin>> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} predictors for {} outcomes", x.len(), y.len())));
    }
    if n_bins == 0 || n_bins > x.len() {
        return Err(Error::Infeasible(format!("{n_bins} bins for {} observations", x.len())));
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let n = x.len();
    Ok((0..n_bins)
        .map(|b| {
            let members = &order[b * n / n_bins..(b + 1) * n / n_bins];
            let k = members.len() as f64;
            Bin {
                n: members.len(),
                mean_profit: members.iter().map(|&i| x[i]).sum::<f64>() / k,
                observed_rate: members.iter().filter(|&&i| y[i]).count() as f64 / k,
                predicted_rate: members
                    .iter()
                    .map(|&i| predict_prob(beta[0], beta[1], x[i]))
                    .sum::<f64>()
                    / k,
            }
        })
        .collect())
}

/// Expected and realized deviation volumes of one period, with the price
/// change the expected volume implies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactRow {
    /// Local calendar year, or `"all"`.
    pub period: String,
    pub hours: usize,
    pub eligible_hours: usize,
    /// Σ P·K over unit-hours whose benchmark is on, MWh.
    pub expected_withheld_mwh: f64,
    pub realized_withheld_mwh: f64,
    /// Σ P·K over unit-hours whose benchmark is off, MWh.
    pub expected_pushed_in_mwh: f64,
    pub realized_pushed_in_mwh: f64,
    /// Demand over every hour of the period.
    pub total_load_mwh: f64,
    /// Demand over hours with at least one unit-hour in the panel.
    pub eligible_load_mwh: f64,
    pub withheld_share_of_total_load: f64,
    pub withheld_share_of_eligible_load: f64,
    pub pushed_in_share_of_total_load: f64,
    pub pushed_in_share_of_eligible_load: f64,
    /// δ times expected withheld MW, averaged over eligible hours.
    pub withhold_price_change_mean: f64,
    pub withhold_price_change_max: f64,
    /// −δ times expected pushed-in MW.
    pub pushin_price_change_mean: f64,
    pub pushin_price_change_min: f64,
}

#[derive(Default)]
struct Accumulator {
    hours: usize,
    eligible_hours: usize,
    expected: [f64; 2],
    realized: [f64; 2],
    total_load: f64,
    eligible_load: f64,
    price_sum: [f64; 2],
    withhold_max: f64,
    pushin_min: f64,
}

impl Accumulator {
    fn finish(self, period: String) -> ImpactRow {
        let share = |v: f64, load: f64| if load > 0.0 { v / load } else { f64::NAN };
        let mean = |s: f64| {
            if self.eligible_hours > 0 {
                s / self.eligible_hours as f64
            } else {
                0.0
            }
        };
        ImpactRow {
            period,
            hours: self.hours,
            eligible_hours: self.eligible_hours,
            expected_withheld_mwh: self.expected[0],
            realized_withheld_mwh: self.realized[0],
            expected_pushed_in_mwh: self.expected[1],
            realized_pushed_in_mwh: self.realized[1],
            total_load_mwh: self.total_load,
            eligible_load_mwh: self.eligible_load,
            withheld_share_of_total_load: share(self.expected[0], self.total_load),
            withheld_share_of_eligible_load: share(self.expected[0], self.eligible_load),
            pushed_in_share_of_total_load: share(self.expected[1], self.total_load),
            pushed_in_share_of_eligible_load: share(self.expected[1], self.eligible_load),
            withhold_price_change_mean: mean(self.price_sum[0]),
            withhold_price_change_max: self.withhold_max,
            pushin_price_change_mean: mean(self.price_sum[1]),
            pushin_price_change_min: self.pushin_min,
        }
    }
}

/// Per local year and overall. A missing law contributes zero expected
/// volume. `rows` must be ordered by hour.
pub fn expected_impact(
    rows: &[JoinedRow],
    units: &[UnitSpec],
    ms: &MarketSeries,
    cal: &LocalCalendar,
    withhold: Option<[f64; 2]>,
    pushin: Option<[f64; 2]>,
) -> Vec<ImpactRow> {
    // Expected MW, realized MW and δ of every hour.
    let mut expected = vec![[0.0f64; 2]; ms.len()];
    let mut realized = vec![[0.0f64; 2]; ms.len()];
    let mut delta = vec![None; ms.len()];
    for r in rows {
        let k = units[r.unit].capacity_mw;
        let (slot, law) = match r.regime {
            Direction::Withhold => (0, withhold),
            Direction::PushIn => (1, pushin),
        };
        if let Some(b) = law {
            expected[r.hour][slot] += predict_prob(b[0], b[1], r.profit()) * k;
        }
        if r.deviated {
            realized[r.hour][slot] += k;
        }
        delta[r.hour] = Some(r.delta);
    }
    let mut years: BTreeMap<i16, Accumulator> = BTreeMap::new();
    let mut all = Accumulator::default();
    for h in 0..ms.len() {
        let year = cal.local(ms.timestamp(h)).year;
        for acc in [years.entry(year).or_default(), &mut all] {
            acc.hours += 1;
            acc.total_load += ms.demand[h];
            if let Some(d) = delta[h] {
                let up = d * expected[h][0];
                let down = -d * expected[h][1];
                acc.eligible_hours += 1;
                acc.eligible_load += ms.demand[h];
                for s in 0..2 {
                    acc.expected[s] += expected[h][s];
                    acc.realized[s] += realized[h][s];
                }
                acc.price_sum[0] += up;
                acc.price_sum[1] += down;
                acc.withhold_max = acc.withhold_max.max(up);
                acc.pushin_min = acc.pushin_min.min(down);
            }
        }
    }
    years
        .into_iter()
        .map(|(y, acc)| acc.finish(y.to_string()))
        .chain(std::iter::once(all.finish("all".into())))
        .collect()
}
