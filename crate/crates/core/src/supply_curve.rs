//! Slope of the aggregate supply curve.
//!
//! The sample is first cut into contiguous fuel-price regimes by an exact
//! change-point dynamic program on carbon-adjusted gas and coal prices. Within
//! each regime the spot price is fitted as a continuous, nondecreasing
//! piecewise-linear function of residual load; the local slope of that fit is
//! the price impact of one MW of supply.

use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calendar::EpochHour;
use crate::costs::FuelParams;
use crate::error::{Error, Result};
use crate::market_data::{residual_load, MarketSeries};
use crate::panel_io::{field, read_rows, write_text};

/// Fewest observations a supply-curve segment may hold during the search.
pub const MIN_SEGMENT_POINTS: usize = 10;
/// Fewest observations left on either side of a knot while it is refined.
const MIN_KNOT_SUPPORT: usize = 5;
const COARSE_GRID: usize = 64;
const FINE_GRID: usize = 32;
const REFINE_SWEEPS: usize = 4;

pub fn carbon_adjust(fuel_price: f64, emission_factor: f64, carbon_price: f64) -> Result<f64> {
    if !(emission_factor >= 0.0) {
        return Err(Error::Domain(format!("emission factor {emission_factor} must be >= 0")));
    }
    if !(fuel_price >= 0.0 && carbon_price >= 0.0) {
        return Err(Error::Domain(format!(
            "fuel price {fuel_price} and carbon price {carbon_price} must be >= 0"
        )));
    }
    Ok(fuel_price + emission_factor * carbon_price)
}

/// Hourly (gas, coal) prices including carbon cost.
pub fn adjusted_fuel_series(ms: &MarketSeries, fuel: &FuelParams) -> Result<Vec<[f64; 2]>> {
    (0..ms.len())
        .map(|h| {
            Ok([
                carbon_adjust(ms.gas_price[h], fuel.gas_emission_factor, ms.carbon_price[h])?,
                carbon_adjust(ms.coal_price[h], fuel.coal_emission_factor, ms.carbon_price[h])?,
            ])
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentationConfig {
    pub max_breakpoints: usize,
    pub variance_target: f64,
    /// Shortest admissible regime in hours.
    pub min_regime_len: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            max_breakpoints: 11,
            variance_target: 0.95,
            min_regime_len: 1,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.variance_target > 0.0 && self.variance_target <= 1.0) {
            return Err(Error::Config(format!(
                "variance_target {} outside (0, 1]",
                self.variance_target
            )));
        }
        if self.min_regime_len == 0 {
            return Err(Error::Config("min_regime_len must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSegmentation {
    /// First hour of every regime after the first.
    pub breakpoints: Vec<usize>,
    /// Mean (gas, coal) per regime.
    pub centroids: Vec<[f64; 2]>,
    pub explained_variance: f64,
    pub sse: f64,
    pub len: usize,
}

impl RegimeSegmentation {
    pub fn regime_count(&self) -> usize {
        self.breakpoints.len() + 1
    }

    pub fn ranges(&self) -> Vec<Range<usize>> {
        let mut bounds = Vec::with_capacity(self.breakpoints.len() + 2);
        bounds.push(0);
        bounds.extend_from_slice(&self.breakpoints);
        bounds.push(self.len);
        bounds.windows(2).map(|w| w[0]..w[1]).collect()
    }

    pub fn regime_of(&self, hour: usize) -> usize {
        self.breakpoints.partition_point(|&b| b <= hour)
    }
}

/// Prefix sums of a centered bivariate series; any interval's SSE about its
/// own centroid is O(1).
struct IntervalCost {
    s: Vec<[f64; 2]>,
    ss: Vec<f64>,
}

impl IntervalCost {
    fn new(series: &[[f64; 2]]) -> Self {
        let n = series.len() as f64;
        let mean = [0, 1].map(|d| series.iter().map(|p| p[d]).sum::<f64>() / n);
        let mut s = Vec::with_capacity(series.len() + 1);
        let mut ss = Vec::with_capacity(series.len() + 1);
        s.push([0.0; 2]);
        ss.push(0.0);
        let (mut a, mut b, mut q) = (0.0, 0.0, 0.0);
        for p in series {
            let (x, y) = (p[0] - mean[0], p[1] - mean[1]);
            a += x;
            b += y;
            q += x * x + y * y;
            s.push([a, b]);
            ss.push(q);
        }
        Self { s, ss }
    }

    fn cost(&self, i: usize, j: usize) -> f64 {
        let m = (j - i) as f64;
        let dx = self.s[j][0] - self.s[i][0];
        let dy = self.s[j][1] - self.s[i][1];
        (self.ss[j] - self.ss[i] - (dx * dx + dy * dy) / m).max(0.0)
    }
}

/// Layered change-point program: `layers[k][j]` is the least SSE of the first
/// `j` points cut into `k + 1` intervals of at least `min_len` points.
struct ChangePoints<'a> {
    cost: &'a IntervalCost,
    n: usize,
    min_len: usize,
    layers: Vec<Vec<f64>>,
    argmin: Vec<Vec<u32>>,
}

impl<'a> ChangePoints<'a> {
    fn new(cost: &'a IntervalCost, n: usize, min_len: usize) -> Self {
        let first = (0..=n)
            .map(|j| if j >= min_len { cost.cost(0, j) } else { f64::INFINITY })
            .collect();
        Self {
            cost,
            n,
            min_len,
            layers: vec![first],
            argmin: vec![Vec::new()],
        }
    }

    fn feasible(&self, k: usize) -> bool {
        (k + 1) * self.min_len <= self.n
    }

    fn extend_to(&mut self, k: usize) {
        while self.layers.len() <= k {
            let kk = self.layers.len();
            let prev = &self.layers[kk - 1];
            let (cost, min_len) = (self.cost, self.min_len);
            let (next, arg): (Vec<f64>, Vec<u32>) = (0..=self.n)
                .into_par_iter()
                .map(|j| {
                    if j < (kk + 1) * min_len {
                        return (f64::INFINITY, 0);
                    }
                    let mut best = (f64::INFINITY, 0u32);
                    for i in kk * min_len..=j - min_len {
                        let v = prev[i] + cost.cost(i, j);
                        if v < best.0 {
                            best = (v, i as u32);
                        }
                    }
                    best
                })
                .unzip();
            self.layers.push(next);
            self.argmin.push(arg);
        }
    }

    fn sse(&self, k: usize) -> f64 {
        self.layers[k][self.n]
    }

    fn breakpoints(&self, k: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        let mut j = self.n;
        for layer in (1..=k).rev() {
            j = self.argmin[layer][j] as usize;
            out.push(j);
        }
        out.reverse();
        out
    }
}

fn check_series(series: &[[f64; 2]]) -> Result<()> {
    if series.len() < 2 {
        return Err(Error::Infeasible(format!(
            "segmentation needs at least 2 points, got {}",
            series.len()
        )));
    }
    if series.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite value in fuel price series".into()));
    }
    Ok(())
}

/// Least achievable SSE for 0..=max_breakpoints breakpoints.
pub fn sse_profile(series: &[[f64; 2]], max_breakpoints: usize, min_len: usize) -> Result<Vec<f64>> {
    check_series(series)?;
    let cost = IntervalCost::new(series);
    let mut dp = ChangePoints::new(&cost, series.len(), min_len.max(1));
    if !dp.feasible(max_breakpoints) {
        return Err(Error::Infeasible(format!(
            "{} points cannot hold {} breakpoints with regimes of {} points",
            series.len(),
            max_breakpoints,
            min_len
        )));
    }
    dp.extend_to(max_breakpoints);
    Ok((0..=max_breakpoints).map(|k| dp.sse(k)).collect())
}

fn segmentation_from(series: &[[f64; 2]], dp: &ChangePoints, k: usize, total: f64) -> RegimeSegmentation {
    let breakpoints = dp.breakpoints(k);
    let mut seg = RegimeSegmentation {
        breakpoints,
        centroids: Vec::new(),
        explained_variance: 0.0,
        sse: dp.sse(k),
        len: series.len(),
    };
    seg.centroids = seg
        .ranges()
        .into_iter()
        .map(|r| {
            let m = r.len() as f64;
            [0, 1].map(|d| series[r.clone()].iter().map(|p| p[d]).sum::<f64>() / m)
        })
        .collect();
    seg.explained_variance = explained(seg.sse, total);
    seg
}

fn explained(sse: f64, total: f64) -> f64 {
    if total <= 0.0 {
        1.0
    } else {
        (1.0 - sse / total).clamp(0.0, 1.0)
    }
}

/// Fewest contiguous regimes whose explained variance reaches the target,
/// capped at `max_breakpoints`.
pub fn segment_regimes(series: &[[f64; 2]], cfg: &SegmentationConfig) -> Result<RegimeSegmentation> {
    cfg.validate()?;
    check_series(series)?;
    let cost = IntervalCost::new(series);
    let mut dp = ChangePoints::new(&cost, series.len(), cfg.min_regime_len);
    if !dp.feasible(0) {
        return Err(Error::Infeasible(format!(
            "{} points are shorter than one regime of {}",
            series.len(),
            cfg.min_regime_len
        )));
    }
    let total = dp.sse(0);
    let mut k = 0;
    while explained(dp.sse(k), total) < cfg.variance_target && k < cfg.max_breakpoints && dp.feasible(k + 1) {
        k += 1;
        dp.extend_to(k);
    }
    Ok(segmentation_from(series, &dp, k, total))
}

/// Segmentation with exactly `breakpoints` cuts.
pub fn segment_exact(series: &[[f64; 2]], breakpoints: usize, min_len: usize) -> Result<RegimeSegmentation> {
    check_series(series)?;
    let cost = IntervalCost::new(series);
    let mut dp = ChangePoints::new(&cost, series.len(), min_len.max(1));
    if !dp.feasible(breakpoints) {
        return Err(Error::Infeasible(format!(
            "{} points cannot hold {breakpoints} breakpoints",
            series.len()
        )));
    }
    dp.extend_to(breakpoints);
    let total = dp.sse(0);
    Ok(segmentation_from(series, &dp, breakpoints, total))
}

/// Continuous piecewise-linear price curve over residual load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseFit {
    /// Range start, interior knots, range end.
    pub nodes: Vec<f64>,
    pub intercepts: Vec<f64>,
    pub slopes: Vec<f64>,
    pub sse: f64,
    pub n_obs: usize,
}

impl PiecewiseFit {
    pub fn segments(&self) -> usize {
        self.slopes.len()
    }

    pub fn knots(&self) -> &[f64] {
        &self.nodes[1..self.nodes.len() - 1]
    }

    /// Segment holding `l`; a point on a knot belongs to the upper segment and
    /// points outside the range to the nearest boundary segment.
    pub fn segment_of(&self, l: f64) -> usize {
        self.knots().partition_point(|&k| k <= l)
    }

    pub fn slope_at(&self, l: f64) -> f64 {
        self.slopes[self.segment_of(l)]
    }

    pub fn eval(&self, l: f64) -> f64 {
        let s = self.segment_of(l);
        self.intercepts[s] + self.slopes[s] * l
    }

    pub fn bic(&self) -> f64 {
        bic(self.sse, self.n_obs, self.segments(), 0.0)
    }

    fn from_values(nodes: Vec<f64>, values: &[f64], sse: f64, n_obs: usize) -> Self {
        let mut slopes = Vec::with_capacity(values.len() - 1);
        let mut intercepts = Vec::with_capacity(values.len() - 1);
        for s in 0..values.len() - 1 {
            let slope = ((values[s + 1] - values[s]) / (nodes[s + 1] - nodes[s])).max(0.0);
            slopes.push(slope);
            intercepts.push(values[s] - slope * nodes[s]);
        }
        Self {
            nodes,
            intercepts,
            slopes,
            sse,
            n_obs,
        }
    }
}

fn bic(sse: f64, n: usize, segments: usize, var_y: f64) -> f64 {
    let nf = n as f64;
    let floor = 1e-12 * var_y + f64::MIN_POSITIVE;
    nf * (sse / nf).max(floor).ln() + 2.0 * segments as f64 * nf.ln()
}

/// Observations sorted by residual load.
struct Sorted {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Sorted {
    fn new(load: &[f64], price: &[f64]) -> Self {
        let mut idx: Vec<usize> = (0..load.len()).collect();
        idx.sort_by(|&a, &b| load[a].total_cmp(&load[b]).then(price[a].total_cmp(&price[b])));
        Self {
            x: idx.iter().map(|&i| load[i]).collect(),
            y: idx.iter().map(|&i| price[i]).collect(),
        }
    }

    fn count_below(&self, t: f64) -> usize {
        self.x.partition_point(|&v| v < t)
    }
}

/// Prefix sums of standardized (x, y) for interval OLS costs.
struct OlsCost {
    s: Vec<[f64; 5]>,
}

impl OlsCost {
    fn new(d: &Sorted) -> Self {
        let n = d.x.len() as f64;
        let stats = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / n;
            let sd = (v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / n).sqrt();
            (m, if sd > 0.0 { sd } else { 1.0 })
        };
        let (mx, sx) = stats(&d.x);
        let (my, sy) = stats(&d.y);
        let mut s = Vec::with_capacity(d.x.len() + 1);
        let mut acc = [0.0; 5];
        s.push(acc);
        for (x, y) in d.x.iter().zip(&d.y) {
            let (u, v) = ((x - mx) / sx, (y - my) / sy);
            acc[0] += u;
            acc[1] += v;
            acc[2] += u * u;
            acc[3] += u * v;
            acc[4] += v * v;
            s.push(acc);
        }
        Self { s }
    }

    fn cost(&self, i: usize, j: usize) -> f64 {
        let m = (j - i) as f64;
        let d: [f64; 5] = std::array::from_fn(|k| self.s[j][k] - self.s[i][k]);
        let syy = d[4] - d[1] * d[1] / m;
        let sxx = d[2] - d[0] * d[0] / m;
        let sxy = d[3] - d[0] * d[1] / m;
        let c = if sxx > 1e-12 * m { syy - sxy * sxy / sxx } else { syy };
        c.max(0.0)
    }
}

/// Optimal free-jump partitions of the sorted data into 1..=max_segments
/// pieces. Entry `s - 1` holds the split positions for `s` segments, or
/// `None` when that many segments do not fit.
fn partition_splits(d: &Sorted, max_segments: usize) -> Vec<Option<Vec<usize>>> {
    let n = d.x.len();
    let m = MIN_SEGMENT_POINTS;
    let cost = OlsCost::new(d);
    let allowed: Vec<bool> = (0..=n)
        .map(|i| i == 0 || i == n || (i >= m && i + m <= n && d.x[i - 1] < d.x[i]))
        .collect();
    let cuts: Vec<usize> = (0..=n).filter(|&i| allowed[i]).collect();

    let mut layers: Vec<Vec<f64>> = Vec::with_capacity(max_segments);
    let mut args: Vec<Vec<u32>> = Vec::with_capacity(max_segments);
    layers.push(
        (0..=n)
            .map(|j| {
                if allowed[j] && j >= m {
                    cost.cost(0, j)
                } else {
                    f64::INFINITY
                }
            })
            .collect(),
    );
    args.push(Vec::new());
    for s in 1..max_segments {
        let prev = &layers[s - 1];
        let (next, arg): (Vec<f64>, Vec<u32>) = (0..=n)
            .into_par_iter()
            .map(|j| {
                if !allowed[j] || j < (s + 1) * m {
                    return (f64::INFINITY, 0);
                }
                let mut best = (f64::INFINITY, 0u32);
                for &i in &cuts {
                    if i + m > j {
                        break;
                    }
                    if !prev[i].is_finite() {
                        continue;
                    }
                    let v = prev[i] + cost.cost(i, j);
                    if v < best.0 {
                        best = (v, i as u32);
                    }
                }
                best
            })
            .unzip();
        layers.push(next);
        args.push(arg);
    }
    (0..max_segments)
        .map(|s| {
            layers[s][n].is_finite().then(|| {
                let mut out = Vec::with_capacity(s);
                let mut j = n;
                for layer in (1..=s).rev() {
                    j = args[layer][j] as usize;
                    out.push(j);
                }
                out.reverse();
                out
            })
        })
        .collect()
}

/// Solves a small dense symmetric system in place; `None` if singular.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-13 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Least-squares node values of a continuous piecewise-linear curve, with
/// nodes in the same group forced to share one value. Returns node values
/// and SSE.
fn fit_nodes(d: &Sorted, nodes: &[f64], group: &[usize]) -> Option<(Vec<f64>, f64)> {
    let g = group[group.len() - 1] + 1;
    let mut a = vec![vec![0.0; g]; g];
    let mut b = vec![0.0; g];
    let last = nodes.len() - 2;
    let mut seg = 0;
    let weights = |x: f64, seg: usize| {
        let w = (x - nodes[seg]) / (nodes[seg + 1] - nodes[seg]);
        (1.0 - w, w)
    };
    for (&x, &y) in d.x.iter().zip(&d.y) {
        while seg < last && x >= nodes[seg + 1] {
            seg += 1;
        }
        let (w0, w1) = weights(x, seg);
        let (g0, g1) = (group[seg], group[seg + 1]);
        a[g0][g0] += w0 * w0;
        a[g1][g1] += w1 * w1;
        a[g0][g1] += w0 * w1;
        a[g1][g0] += w0 * w1;
        b[g0] += w0 * y;
        b[g1] += w1 * y;
    }
    let gv = solve_dense(a, b)?;
    let values: Vec<f64> = group.iter().map(|&k| gv[k]).collect();
    let mut sse = 0.0;
    seg = 0;
    for (&x, &y) in d.x.iter().zip(&d.y) {
        while seg < last && x >= nodes[seg + 1] {
            seg += 1;
        }
        let (w0, w1) = weights(x, seg);
        let r = y - (w0 * values[seg] + w1 * values[seg + 1]);
        sse += r * r;
    }
    Some((values, sse))
}

fn free_fit(d: &Sorted, nodes: &[f64]) -> Option<(Vec<f64>, f64)> {
    let group: Vec<usize> = (0..nodes.len()).collect();
    fit_nodes(d, nodes, &group)
}

/// Coordinate descent on the knots of a continuous fit.
fn refine_knots(d: &Sorted, nodes: &mut [f64]) -> f64 {
    let mut best = free_fit(d, nodes).map_or(f64::INFINITY, |f| f.1);
    let supported = |nodes: &[f64], s: usize, t: f64| {
        let below = d.count_below(t) - d.count_below(nodes[s - 1]);
        let above = d.count_below(nodes[s + 1]) - d.count_below(t);
        let above = if s + 1 == nodes.len() - 1 {
            d.x.len() - d.count_below(t)
        } else {
            above
        };
        below >= MIN_KNOT_SUPPORT && above >= MIN_KNOT_SUPPORT
    };
    for _ in 0..REFINE_SWEEPS {
        let before = best;
        for s in 1..nodes.len() - 1 {
            let (lo, hi) = (nodes[s - 1], nodes[s + 1]);
            let step = (hi - lo) / (COARSE_GRID + 1) as f64;
            let try_at = |nodes: &mut [f64], t: f64, best: &mut f64| {
                if !(t > lo && t < hi) || !supported(nodes, s, t) {
                    return;
                }
                let keep = nodes[s];
                nodes[s] = t;
                match free_fit(d, nodes) {
                    Some((_, sse)) if sse < *best => *best = sse,
                    _ => nodes[s] = keep,
                }
            };
            for c in 1..=COARSE_GRID {
                try_at(nodes, lo + step * c as f64, &mut best);
            }
            let centre = nodes[s];
            let fine = 2.0 * step / (FINE_GRID + 1) as f64;
            for c in 1..=FINE_GRID {
                try_at(nodes, centre - step + fine * c as f64, &mut best);
            }
        }
        if !(best < before * (1.0 - 1e-12)) {
            break;
        }
    }
    best
}

/// Merges adjacent node groups until no segment slope is negative.
fn clamp_monotone(d: &Sorted, nodes: &[f64]) -> Option<(Vec<f64>, f64)> {
    let mut group: Vec<usize> = (0..nodes.len()).collect();
    loop {
        let (values, sse) = fit_nodes(d, nodes, &group)?;
        let worst = (0..nodes.len() - 1)
            .filter(|&s| group[s] != group[s + 1])
            .map(|s| (s, (values[s + 1] - values[s]) / (nodes[s + 1] - nodes[s])))
            .filter(|&(_, slope)| slope < 0.0)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        let Some((s, _)) = worst else {
            return Some((values, sse));
        };
        let (keep, drop) = (group[s], group[s + 1]);
        for g in group.iter_mut() {
            if *g == drop {
                *g = keep;
            } else if *g > drop {
                *g -= 1;
            }
        }
    }
}

fn fit_with_splits(d: &Sorted, splits: &[usize]) -> Option<PiecewiseFit> {
    let n = d.x.len();
    let mut nodes = Vec::with_capacity(splits.len() + 2);
    nodes.push(d.x[0]);
    nodes.extend(splits.iter().map(|&i| 0.5 * (d.x[i - 1] + d.x[i])));
    nodes.push(d.x[n - 1]);
    refine_knots(d, &mut nodes);
    let (values, sse) = clamp_monotone(d, &nodes)?;
    Some(PiecewiseFit::from_values(nodes, &values, sse, n))
}

fn prepare(prices: &[f64], load: &[f64], max_segments: usize) -> Result<Sorted> {
    if prices.len() != load.len() {
        return Err(Error::Shape(format!(
            "{} prices vs {} load values",
            prices.len(),
            load.len()
        )));
    }
    if max_segments == 0 {
        return Err(Error::Config("max_segments must be >= 1".into()));
    }
    if prices.len() < MIN_SEGMENT_POINTS * max_segments {
        return Err(Error::Infeasible(format!(
            "{} observations cannot support {max_segments} segments of {MIN_SEGMENT_POINTS}",
            prices.len()
        )));
    }
    if prices.iter().chain(load).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite price or load".into()));
    }
    let d = Sorted::new(load, prices);
    if d.x[0] == d.x[d.x.len() - 1] {
        return Err(Error::Infeasible("residual load has no spread".into()));
    }
    Ok(d)
}

/// Continuous, nondecreasing piecewise-linear fit with the segment count
/// chosen by BIC over 1..=max_segments.
pub fn fit_piecewise(prices: &[f64], load: &[f64], max_segments: usize) -> Result<PiecewiseFit> {
    let d = prepare(prices, load, max_segments)?;
    let n = d.y.len() as f64;
    let my = d.y.iter().sum::<f64>() / n;
    let var_y = d.y.iter().map(|v| (v - my).powi(2)).sum::<f64>() / n;
    let candidates: Vec<PiecewiseFit> = partition_splits(&d, max_segments)
        .into_par_iter()
        .filter_map(|splits| fit_with_splits(&d, &splits?))
        .collect();
    candidates
        .into_iter()
        .map(|f| (bic(f.sse, f.n_obs, f.segments(), var_y), f))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.segments().cmp(&b.1.segments())))
        .map(|(_, f)| f)
        .ok_or_else(|| Error::Infeasible("no admissible piecewise fit".into()))
}

/// Fit with exactly `segments` pieces.
pub fn fit_piecewise_exact(prices: &[f64], load: &[f64], segments: usize) -> Result<PiecewiseFit> {
    let d = prepare(prices, load, segments)?;
    let splits = partition_splits(&d, segments)
        .pop()
        .flatten()
        .ok_or_else(|| Error::Infeasible(format!("no admissible {segments}-segment split")))?;
    fit_with_splits(&d, &splits).ok_or_else(|| Error::Infeasible("singular piecewise fit".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SupplyConfig {
    pub segmentation: SegmentationConfig,
    pub max_segments: usize,
}

impl Default for SupplyConfig {
    fn default() -> Self {
        Self {
            segmentation: SegmentationConfig {
                min_regime_len: 168,
                ..SegmentationConfig::default()
            },
            max_segments: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplyCurve {
    pub segmentation: RegimeSegmentation,
    pub fits: Vec<PiecewiseFit>,
}

impl SupplyCurve {
    /// Hourly slope given the residual load series.
    pub fn hourly_slopes(&self, load: &[f64]) -> Vec<f64> {
        load.iter()
            .enumerate()
            .map(|(h, &l)| self.fits[self.segmentation.regime_of(h)].slope_at(l))
            .collect()
    }
}

/// Regimes on the whole sample, then one fit per regime. The per-regime
/// segment cap shrinks so that every segment can hold its minimum count.
pub fn estimate_supply_curve(ms: &MarketSeries, fuel: &FuelParams, cfg: &SupplyConfig) -> Result<SupplyCurve> {
    fuel.validate()?;
    let series = adjusted_fuel_series(ms, fuel)?;
    let segmentation = segment_regimes(&series, &cfg.segmentation)?;
    let load = residual_load(ms);
    let fits = segmentation
        .ranges()
        .into_par_iter()
        .enumerate()
        .map(|(id, r)| {
            let cap = cfg.max_segments.min(r.len() / MIN_SEGMENT_POINTS);
            if cap == 0 {
                return Err(Error::Infeasible(format!(
                    "regime {id} has {} hours, fewer than {MIN_SEGMENT_POINTS}",
                    r.len()
                )));
            }
            fit_piecewise(&ms.spot_price[r.clone()], &load[r], cap)
                .map_err(|e| Error::Infeasible(format!("regime {id}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SupplyCurve { segmentation, fits })
}

pub const REGIME_COLUMNS: [&str; 6] = ["regime_id", "start", "end", "hours", "gas_centroid", "coal_centroid"];
pub const SUPPLY_FIT_COLUMNS: [&str; 8] = [
    "regime_id",
    "segment",
    "lower",
    "upper",
    "intercept",
    "slope",
    "sse",
    "n_obs",
];
pub const SLOPE_COLUMNS: [&str; 4] = ["timestamp", "residual_load", "regime_id", "delta"];

/// Writes `regimes.csv`; `end` is the last hour of the regime.
pub fn write_regimes(path: &Path, ms: &MarketSeries, seg: &RegimeSegmentation) -> Result<()> {
    let mut out = REGIME_COLUMNS.join(",") + "\n";
    for (id, (r, c)) in seg.ranges().into_iter().zip(&seg.centroids).enumerate() {
        out += &format!(
            "{id},{},{},{},{},{}\n",
            ms.timestamp(r.start),
            ms.timestamp(r.end - 1),
            r.len(),
            c[0],
            c[1]
        );
    }
    write_text(path, &out)
}

/// Reads `regimes.csv` back into breakpoints and centroids. Explained
/// variance and SSE are not stored and come back as NaN.
pub fn load_regimes(path: &Path, ms: &MarketSeries) -> Result<RegimeSegmentation> {
    let rows = read_rows(path, &REGIME_COLUMNS)?;
    let mut seg = RegimeSegmentation {
        breakpoints: Vec::new(),
        centroids: Vec::new(),
        explained_variance: f64::NAN,
        sse: f64::NAN,
        len: ms.len(),
    };
    let mut expected_start = 0;
    for (i, rec) in rows.iter().enumerate() {
        let row = i + 1;
        let bad = |msg: String| Error::Parse {
            file: path.display().to_string(),
            row,
            msg,
        };
        let start = EpochHour::parse(&rec[1])
            .map_err(&bad)
            .and_then(|t| ms.index_of(t).ok_or_else(|| bad(format!("{t} outside market series"))))?;
        let hours: usize = field(path, row, rec, 3)?;
        if field::<usize>(path, row, rec, 0)? != i || start != expected_start || hours == 0 {
            return Err(bad("regimes must be numbered and contiguous from the first hour".into()));
        }
        if start > 0 {
            seg.breakpoints.push(start);
        }
        seg.centroids
            .push([field(path, row, rec, 4)?, field(path, row, rec, 5)?]);
        expected_start = start + hours;
    }
    if expected_start != ms.len() {
        return Err(Error::Alignment {
            timestamp: ms.timestamp(expected_start.min(ms.len() - 1)).to_string(),
            msg: "regimes do not cover the market series".into(),
        });
    }
    Ok(seg)
}

pub fn write_supply_fits(path: &Path, fits: &[PiecewiseFit]) -> Result<()> {
    let mut out = SUPPLY_FIT_COLUMNS.join(",") + "\n";
    for (id, f) in fits.iter().enumerate() {
        for s in 0..f.segments() {
            out += &format!(
                "{id},{s},{},{},{},{},{},{}\n",
                f.nodes[s],
                f.nodes[s + 1],
                f.intercepts[s],
                f.slopes[s],
                f.sse,
                f.n_obs
            );
        }
    }
    write_text(path, &out)
}

pub fn load_supply_fits(path: &Path) -> Result<Vec<PiecewiseFit>> {
    let rows = read_rows(path, &SUPPLY_FIT_COLUMNS)?;
    let mut fits: Vec<PiecewiseFit> = Vec::new();
    for (i, rec) in rows.iter().enumerate() {
        let row = i + 1;
        let id: usize = field(path, row, rec, 0)?;
        let s: usize = field(path, row, rec, 1)?;
        let (lower, upper): (f64, f64) = (field(path, row, rec, 2)?, field(path, row, rec, 3)?);
        if s == 0 {
            if id != fits.len() {
                return Err(Error::Parse {
                    file: path.display().to_string(),
                    row,
                    msg: format!("regime {id} out of order"),
                });
            }
            fits.push(PiecewiseFit {
                nodes: vec![lower],
                intercepts: Vec::new(),
                slopes: Vec::new(),
                sse: field(path, row, rec, 6)?,
                n_obs: field(path, row, rec, 7)?,
            });
        }
        let n_fits = fits.len();
        let Some(f) = fits
            .last_mut()
            .filter(|f| id + 1 == n_fits && f.segments() == s && f.nodes[s] == lower && upper > lower)
        else {
            return Err(Error::Parse {
                file: path.display().to_string(),
                row,
                msg: "segments must be ordered and contiguous".into(),
            });
        };
        f.nodes.push(upper);
        f.intercepts.push(field(path, row, rec, 4)?);
        f.slopes.push(field(path, row, rec, 5)?);
    }
    Ok(fits)
}

pub fn write_slopes(
    path: &Path,
    ms: &MarketSeries,
    load: &[f64],
    seg: &RegimeSegmentation,
    delta: &[f64],
) -> Result<()> {
    let mut out = String::with_capacity(ms.len() * 56);
    out += &(SLOPE_COLUMNS.join(",") + "\n");
    for h in 0..ms.len() {
        out += &format!("{},{},{},{}\n", ms.timestamp(h), load[h], seg.regime_of(h), delta[h]);
    }
    write_text(path, &out)
}

/// Hourly slopes from `slopes.csv`, one row per market hour.
pub fn load_slopes(path: &Path, ms: &MarketSeries) -> Result<Vec<f64>> {
    let rows = read_rows(path, &SLOPE_COLUMNS)?;
    if rows.len() != ms.len() {
        return Err(Error::Shape(format!(
            "{} has {} rows for {} market hours",
            path.display(),
            rows.len(),
            ms.len()
        )));
    }
    rows.iter()
        .enumerate()
        .map(|(h, rec)| {
            let ts = EpochHour::parse(&rec[0]).map_err(|msg| Error::Parse {
                file: path.display().to_string(),
                row: h + 1,
                msg,
            })?;
            if ts != ms.timestamp(h) {
                return Err(Error::Alignment {
                    timestamp: ts.to_string(),
                    msg: format!("expected {}", ms.timestamp(h)),
                });
            }
            let d: f64 = field(path, h + 1, rec, 3)?;
            if !(d >= 0.0) {
                return Err(Error::Domain(format!("negative slope {d} at {ts}")));
            }
            Ok(d)
        })
        .collect()
}
