//! Config-driven runs of the whole method, stage by stage.
//!
//! Every stage writes its outputs to the output directory and the next stage
//! can start from those files alone, so a rerun from any cached panel gives
//! the same downstream bytes as a full run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calendar::{LocalCalendar, DEFAULT_TIMEZONE};
use crate::costs::FuelParams;
use crate::dispatch::HorizonConfig;
use crate::econometrics::{
    join_panels, regime_split_fit, regime_split_fit_with, stars, subgroup_fits, FitOutcome, JoinedRow, LogitFit,
};
use crate::error::{Error, Result};
use crate::incentives::{
    block_net_profit, build_incentive_panel, load_incentive_panel, write_incentive_panel, BlockMode, Direction,
    IncentivePanel,
};
use crate::market_data::{availability_filter, load_inputs, residual_load, MarketInputs, UnitHourSet};
use crate::monte_carlo::{
    build_dispatch_panel, load_dispatch_panel, simulate_fleet, write_dispatch_panel, DeviationCounts, DispatchPanel,
    McConfig,
};
use crate::panel_io::write_text;
use crate::report::{bin_curve, expected_impact, summary_quantiles, Bin, ImpactRow, SummaryQuantiles};
use crate::supply_curve::{
    estimate_supply_curve, load_slopes, write_regimes, write_slopes, write_supply_fits, SegmentationConfig,
    SupplyConfig, SupplyCurve,
};

pub const DISPATCH_PANEL_FILE: &str = "dispatch_panel.csv";
pub const INCENTIVE_PANEL_FILE: &str = "incentive_panel.csv";
pub const REGIMES_FILE: &str = "regimes.csv";
pub const SUPPLY_FITS_FILE: &str = "supply_fits.csv";
pub const SLOPES_FILE: &str = "slopes.csv";
pub const INGEST_FILE: &str = "ingest_summary.json";
pub const FITS_FILE: &str = "fits.json";
pub const SENSITIVITY_FILE: &str = "hedge_sensitivity.json";
pub const REPORT_FILE: &str = "report.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubgroupKey {
    Year,
    FuelType,
    Company,
}

impl SubgroupKey {
    fn name(self) -> &'static str {
        match self {
            SubgroupKey::Year => "year",
            SubgroupKey::FuelType => "fuel_type",
            SubgroupKey::Company => "company",
        }
    }
}

/// Flat key-value run configuration. Relative paths are taken relative to
/// the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub market: PathBuf,
    pub units: PathBuf,
    pub generation: PathBuf,
    /// Without an outage file every unit-hour is available.
    pub outages: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub iterations: usize,
    pub multiplier_sd: f64,
    pub keep_threshold: f64,
    pub dispatch_epsilon_mw: f64,
    pub max_breakpoints: usize,
    pub variance_target: f64,
    /// Shortest fuel-price regime, hours.
    pub min_regime_len: usize,
    pub max_segments: usize,
    pub hedge_rate: f64,
    pub sensitivity_rates: Vec<f64>,
    pub block_mode: BlockMode,
    /// Block size as a share of unit capacity.
    pub block_fraction: f64,
    pub subgroups: Vec<SubgroupKey>,
    pub timezone: String,
    pub gas_emission_factor: f64,
    pub coal_emission_factor: f64,
    pub lignite_emission_factor: f64,
    pub lignite_fuel_price: f64,
    pub bin_count: usize,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let mc = McConfig::default();
        let supply = SupplyConfig::default();
        let fuel = FuelParams::default();
        Self {
            market: "market.csv".into(),
            units: "units.csv".into(),
            generation: "generation.csv".into(),
            outages: None,
            out_dir: "out".into(),
            seed: mc.seed,
            iterations: mc.iterations,
            multiplier_sd: mc.multiplier_sd,
            keep_threshold: mc.keep_threshold,
            dispatch_epsilon_mw: mc.dispatch_epsilon_mw,
            max_breakpoints: supply.segmentation.max_breakpoints,
            variance_target: supply.segmentation.variance_target,
            min_regime_len: supply.segmentation.min_regime_len,
            max_segments: supply.max_segments,
            hedge_rate: 1.0,
            sensitivity_rates: vec![1.0, 0.7, 0.0],
            block_mode: BlockMode::Exact,
            block_fraction: 1.0 / 3.0,
            subgroups: vec![SubgroupKey::Year, SubgroupKey::FuelType, SubgroupKey::Company],
            timezone: DEFAULT_TIMEZONE.into(),
            gas_emission_factor: fuel.gas_emission_factor,
            coal_emission_factor: fuel.coal_emission_factor,
            lignite_emission_factor: fuel.lignite_emission_factor,
            lignite_fuel_price: fuel.lignite_fuel_price,
            bin_count: 2000,
            jobs: 0,
        }
    }
}

impl PipelineConfig {
    /// Parses TOML text, resolving relative paths against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.market);
        resolve(&mut cfg.units);
        resolve(&mut cfg.generation);
        resolve(&mut cfg.out_dir);
        if let Some(p) = cfg.outages.as_mut() {
            resolve(p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base)
    }

    pub fn mc(&self) -> McConfig {
        McConfig {
            iterations: self.iterations,
            multiplier_sd: self.multiplier_sd,
            seed: self.seed,
            keep_threshold: self.keep_threshold,
            dispatch_epsilon_mw: self.dispatch_epsilon_mw,
        }
    }

    pub fn supply(&self) -> SupplyConfig {
        SupplyConfig {
            segmentation: SegmentationConfig {
                max_breakpoints: self.max_breakpoints,
                variance_target: self.variance_target,
                min_regime_len: self.min_regime_len,
            },
            max_segments: self.max_segments,
        }
    }

    pub fn fuel(&self) -> FuelParams {
        FuelParams {
            gas_emission_factor: self.gas_emission_factor,
            coal_emission_factor: self.coal_emission_factor,
            lignite_emission_factor: self.lignite_emission_factor,
            lignite_fuel_price: self.lignite_fuel_price,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mc().validate()?;
        self.supply().segmentation.validate()?;
        self.fuel().validate()?;
        LocalCalendar::new(&self.timezone)?;
        if self.max_segments == 0 {
            return Err(Error::Config("max_segments must be >= 1".into()));
        }
        for &r in std::iter::once(&self.hedge_rate).chain(&self.sensitivity_rates) {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config(format!("hedge rate {r} outside [0, 1]")));
            }
        }
        if !(self.block_fraction > 0.0 && self.block_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "block_fraction {} outside (0, 1]",
                self.block_fraction
            )));
        }
        if self.bin_count == 0 {
            return Err(Error::Config("bin_count must be >= 1".into()));
        }
        Ok(())
    }

    /// Runs `f` on a pool of `jobs` workers.
    pub fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        if self.jobs == 0 {
            return Ok(f());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", self.jobs)))?;
        Ok(pool.install(f))
    }
}

/// Validated inputs shared by every stage.
#[derive(Debug, Clone)]
pub struct Context {
    pub cfg: PipelineConfig,
    pub inputs: MarketInputs,
    pub set: UnitHourSet,
    pub cal: LocalCalendar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub start: String,
    pub hours: usize,
    pub units: usize,
    pub modeled_units: usize,
    pub companies: usize,
    pub eligible_unit_hours: usize,
}

pub fn ingest(cfg: &PipelineConfig) -> Result<Context> {
    let run = || -> Result<Context> {
        cfg.validate()?;
        let inputs = load_inputs(&cfg.market, &cfg.units, &cfg.generation, cfg.outages.as_deref())?;
        let set = availability_filter(&inputs.units, &inputs.outages)?;
        Ok(Context {
            cfg: cfg.clone(),
            cal: LocalCalendar::new(&cfg.timezone)?,
            inputs,
            set,
        })
    };
    run().map_err(|e| e.in_stage("ingest"))
}

impl Context {
    pub fn summary(&self) -> IngestSummary {
        let units = &self.inputs.units;
        IngestSummary {
            start: self.inputs.market.start.to_string(),
            hours: self.inputs.market.len(),
            units: units.len(),
            modeled_units: units.iter().filter(|u| u.in_scope).count(),
            companies: units
                .iter()
                .map(|u| &u.company_id)
                .collect::<std::collections::BTreeSet<_>>()
                .len(),
            eligible_unit_hours: self.set.len(),
        }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cfg.out_dir.join(name)
    }

    pub fn dispatch(&self) -> Result<DispatchPanel> {
        let run = || -> Result<DispatchPanel> {
            let mc = self.cfg.mc();
            let inp = &self.inputs;
            let d_bar = simulate_fleet(&inp.units, &inp.market, &self.cfg.fuel(), &mc, HorizonConfig::default())?;
            build_dispatch_panel(inp, &self.set, &d_bar, &mc)
        };
        run().map_err(|e| e.in_stage("dispatch"))
    }

    pub fn slope(&self) -> Result<(SupplyCurve, Vec<f64>)> {
        let run = || -> Result<(SupplyCurve, Vec<f64>)> {
            let curve = estimate_supply_curve(&self.inputs.market, &self.cfg.fuel(), &self.cfg.supply())?;
            let delta = curve.hourly_slopes(&residual_load(&self.inputs.market));
            Ok((curve, delta))
        };
        run().map_err(|e| e.in_stage("slope"))
    }

    pub fn incentives(&self, delta: &[f64], rate: f64) -> Result<IncentivePanel> {
        build_incentive_panel(&self.inputs, &self.set, delta, &self.cfg.fuel(), &self.cal, rate)
            .map_err(|e| e.in_stage("incentives"))
    }

    pub fn fit(&self, dispatch: &DispatchPanel, incentives: &IncentivePanel, delta: &[f64]) -> Result<Fits> {
        let run = || -> Result<Fits> {
            let rows = join_panels(dispatch, incentives)?;
            let mut fits = FitCollector::default();
            let (w, p) = regime_split_fit(&rows);
            fits.push("main", "all", Direction::Withhold, w);
            fits.push("main", "all", Direction::PushIn, p);

            for &key in &self.cfg.subgroups {
                let groups = subgroup_fits(&rows, |r| self.group_label(key, r));
                for (label, (w, p)) in groups {
                    let group = format!("{}={label}", key.name());
                    fits.push("subgroup", &group, Direction::Withhold, w);
                    fits.push("subgroup", &group, Direction::PushIn, p);
                }
            }

            let units = &self.inputs.units;
            let mode = self.cfg.block_mode;
            let fraction = self.cfg.block_fraction;
            let block = |r: &JoinedRow| {
                block_net_profit(
                    r.delta,
                    r.exposure_mw,
                    r.margin,
                    units[r.unit].capacity_mw * fraction,
                    r.regime,
                    mode,
                )
                .unwrap_or(f64::NAN)
            };
            let (w, p) = regime_split_fit_with(&rows, &block);
            fits.push("block", "all", Direction::Withhold, w);
            fits.push("block", "all", Direction::PushIn, p);

            let mut sensitivity = HedgeSensitivity::default();
            for &rate in &self.cfg.sensitivity_rates {
                let (w, p) = if rate == self.cfg.hedge_rate {
                    (fits.models[0].clone(), fits.models[1].clone())
                } else {
                    let panel =
                        build_incentive_panel(&self.inputs, &self.set, delta, &self.cfg.fuel(), &self.cal, rate)?;
                    let alt = join_panels(dispatch, &panel)?;
                    regime_split_fit(&alt)
                };
                sensitivity.rows.push(SensitivityRow {
                    hedge_rate: rate,
                    withhold: Outcome::from_fit(w, Direction::Withhold),
                    pushin: Outcome::from_fit(p, Direction::PushIn),
                });
            }
            Ok(Fits {
                fits: fits.finish(),
                sensitivity,
            })
        };
        run().map_err(|e| e.in_stage("fit"))
    }

    fn group_label(&self, key: SubgroupKey, r: &JoinedRow) -> String {
        let unit = &self.inputs.units[r.unit];
        match key {
            SubgroupKey::Year => self.cal.local(self.inputs.market.timestamp(r.hour)).year.to_string(),
            SubgroupKey::FuelType => unit.fuel_type.to_string(),
            SubgroupKey::Company => unit.company_id.clone(),
        }
    }

    pub fn report(&self, dispatch: &DispatchPanel, incentives: &IncentivePanel, fits: &FitsFile) -> Result<Report> {
        let run = || -> Result<Report> {
            let rows = join_panels(dispatch, incentives)?;
            let main = |regime| fits.main(regime).map(|m| [m.beta0, m.beta1]);
            let curve = |regime| -> Outcome<Vec<Bin>> {
                let Some(beta) = main(regime) else {
                    return Outcome::Skipped("no fitted model".into());
                };
                let (x, y): (Vec<f64>, Vec<bool>) = rows
                    .iter()
                    .filter(|r| r.regime == regime)
                    .map(|r| (r.profit(), r.deviated))
                    .unzip();
                match bin_curve(&x, &y, beta, self.cfg.bin_count) {
                    Ok(b) => Outcome::Ok(b),
                    Err(e) => Outcome::Skipped(e.to_string()),
                }
            };
            Ok(Report {
                deviation_counts: dispatch.counts(),
                joined_rows: rows.len(),
                summary_quantiles: summary_quantiles(incentives, dispatch)?,
                bin_curve_withhold: curve(Direction::Withhold),
                bin_curve_pushin: curve(Direction::PushIn),
                expected_impact: expected_impact(
                    &rows,
                    &self.inputs.units,
                    &self.inputs.market,
                    &self.cal,
                    main(Direction::Withhold),
                    main(Direction::PushIn),
                ),
            })
        };
        run().map_err(|e| e.in_stage("report"))
    }

    pub fn write_ingest(&self) -> Result<()> {
        write_json(&self.out(INGEST_FILE), &self.summary())
    }

    pub fn write_dispatch(&self, panel: &DispatchPanel) -> Result<()> {
        let inp = &self.inputs;
        write_dispatch_panel(&self.out(DISPATCH_PANEL_FILE), &inp.market, &inp.units, panel)
    }

    pub fn load_dispatch(&self) -> Result<DispatchPanel> {
        load_dispatch_panel(&self.out(DISPATCH_PANEL_FILE), &self.inputs.market, &self.inputs.units)
    }

    pub fn write_slope(&self, curve: &SupplyCurve, delta: &[f64]) -> Result<()> {
        let ms = &self.inputs.market;
        write_regimes(&self.out(REGIMES_FILE), ms, &curve.segmentation)?;
        write_supply_fits(&self.out(SUPPLY_FITS_FILE), &curve.fits)?;
        write_slopes(
            &self.out(SLOPES_FILE),
            ms,
            &residual_load(ms),
            &curve.segmentation,
            delta,
        )
    }

    pub fn load_slopes(&self) -> Result<Vec<f64>> {
        load_slopes(&self.out(SLOPES_FILE), &self.inputs.market)
    }

    pub fn write_incentives(&self, panel: &IncentivePanel) -> Result<()> {
        let inp = &self.inputs;
        write_incentive_panel(&self.out(INCENTIVE_PANEL_FILE), &inp.market, &inp.units, panel)
    }

    pub fn load_incentives(&self) -> Result<IncentivePanel> {
        load_incentive_panel(&self.out(INCENTIVE_PANEL_FILE), &self.inputs.market, &self.inputs.units)
    }

    pub fn write_fits(&self, fits: &Fits) -> Result<()> {
        write_json(&self.out(FITS_FILE), &fits.fits)?;
        write_json(&self.out(SENSITIVITY_FILE), &fits.sensitivity)
    }

    pub fn load_fits(&self) -> Result<FitsFile> {
        let path = self.out(FITS_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write_report(&self, report: &Report) -> Result<()> {
        write_json(&self.out(REPORT_FILE), report)
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

/// One fitted model as written to `fits.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    /// `main`, `subgroup` or `block`.
    pub model: String,
    pub regime: Direction,
    pub group: String,
    pub beta0: f64,
    pub beta1: f64,
    pub se0: f64,
    pub se1: f64,
    pub p_value: f64,
    pub stars: String,
    pub ll: f64,
    pub ll0: f64,
    pub mcfadden_r2: f64,
    pub n: usize,
    pub events: usize,
    pub converged: bool,
    pub iterations: usize,
}

impl ModelRecord {
    fn new(model: &str, group: &str, regime: Direction, f: &LogitFit) -> Self {
        let p = f.p_values().1;
        Self {
            model: model.into(),
            regime,
            group: group.into(),
            beta0: f.beta0,
            beta1: f.beta1,
            se0: f.se0,
            se1: f.se1,
            p_value: p,
            stars: stars(p).into(),
            ll: f.ll,
            ll0: f.ll0,
            mcfadden_r2: f.mcfadden_r2,
            n: f.n,
            events: f.events,
            converged: f.converged,
            iterations: f.iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRecord {
    pub model: String,
    pub regime: Direction,
    pub group: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FitsFile {
    pub models: Vec<ModelRecord>,
    pub skipped: Vec<SkippedRecord>,
}

impl FitsFile {
    pub fn main(&self, regime: Direction) -> Option<&ModelRecord> {
        self.models.iter().find(|m| m.model == "main" && m.regime == regime)
    }

    /// Reasons the main models could not be fitted.
    pub fn diagnostics(&self) -> Vec<String> {
        self.skipped
            .iter()
            .filter(|s| s.model == "main")
            .map(|s| format!("{:?} model: {}", s.regime, s.reason))
            .collect()
    }
}

/// Collects outcomes in order, keeping failures beside the fits.
#[derive(Default)]
struct FitCollector {
    models: Vec<FitOutcome>,
    records: FitsFile,
}

impl FitCollector {
    fn push(&mut self, model: &str, group: &str, regime: Direction, outcome: FitOutcome) {
        match &outcome {
            Ok(f) => self.records.models.push(ModelRecord::new(model, group, regime, f)),
            Err(reason) => self.records.skipped.push(SkippedRecord {
                model: model.into(),
                regime,
                group: group.into(),
                reason: reason.clone(),
            }),
        }
        self.models.push(outcome);
    }

    fn finish(self) -> FitsFile {
        self.records
    }
}

/// Either a value or the reason it is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome<T> {
    Ok(T),
    Skipped(String),
}

impl Outcome<ModelRecord> {
    fn from_fit(f: FitOutcome, regime: Direction) -> Self {
        match f {
            Ok(f) => Outcome::Ok(ModelRecord::new("hedge_sensitivity", "all", regime, &f)),
            Err(e) => Outcome::Skipped(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub hedge_rate: f64,
    pub withhold: Outcome<ModelRecord>,
    pub pushin: Outcome<ModelRecord>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HedgeSensitivity {
    pub rows: Vec<SensitivityRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fits {
    pub fits: FitsFile,
    pub sensitivity: HedgeSensitivity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub deviation_counts: DeviationCounts,
    pub joined_rows: usize,
    pub summary_quantiles: SummaryQuantiles,
    pub bin_curve_withhold: Outcome<Vec<Bin>>,
    pub bin_curve_pushin: Outcome<Vec<Bin>>,
    pub expected_impact: Vec<ImpactRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// `complete` or `incomplete`.
    pub status: String,
    pub stages: Vec<String>,
    pub files: Vec<FileEntry>,
    pub diagnostics: Vec<String>,
    pub error: Option<String>,
}

/// Everything a full run produced.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub dispatch: DispatchPanel,
    pub curve: SupplyCurve,
    pub delta: Vec<f64>,
    pub incentives: IncentivePanel,
    pub fits: Fits,
    pub report: Report,
    pub manifest: Manifest,
}

struct Progress<'a> {
    dir: &'a Path,
    manifest: Manifest,
}

impl Progress<'_> {
    fn record(&mut self, stage: &str, files: &[&str]) -> Result<()> {
        self.manifest.stages.push(stage.into());
        for f in files {
            let path = self.dir.join(f);
            let bytes = std::fs::metadata(&path).map_err(|e| Error::io(&path, e))?.len();
            self.manifest.files.push(FileEntry {
                name: (*f).into(),
                bytes,
            });
        }
        self.save()
    }

    fn save(&self) -> Result<()> {
        write_json(&self.dir.join(MANIFEST_FILE), &self.manifest)
    }
}

/// Runs every stage and writes the full bundle to `cfg.out_dir`. On failure
/// the manifest is left marked incomplete with the error.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Bundle> {
    cfg.validate()?;
    let dir = cfg.out_dir.as_path();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut progress = Progress {
        dir,
        manifest: Manifest {
            status: "incomplete".into(),
            stages: Vec::new(),
            files: Vec::new(),
            diagnostics: Vec::new(),
            error: None,
        },
    };
    progress.save()?;
    let result = cfg.install(|| run_stages(cfg, &mut progress))?;
    match result {
        Ok(mut bundle) => {
            progress.manifest.status = "complete".into();
            progress.manifest.diagnostics = bundle.fits.fits.diagnostics();
            progress.save()?;
            bundle.manifest = progress.manifest;
            Ok(bundle)
        }
        Err(e) => {
            progress.manifest.error = Some(e.to_string());
            progress.save()?;
            Err(e)
        }
    }
}

fn run_stages(cfg: &PipelineConfig, progress: &mut Progress) -> Result<Bundle> {
    let ctx = ingest(cfg)?;
    ctx.write_ingest()?;
    progress.record("ingest", &[INGEST_FILE])?;

    let dispatch = ctx.dispatch()?;
    ctx.write_dispatch(&dispatch)?;
    progress.record("dispatch", &[DISPATCH_PANEL_FILE])?;

    let (curve, delta) = ctx.slope()?;
    ctx.write_slope(&curve, &delta)?;
    progress.record("slope", &[REGIMES_FILE, SUPPLY_FITS_FILE, SLOPES_FILE])?;

    let incentives = ctx.incentives(&delta, cfg.hedge_rate)?;
    ctx.write_incentives(&incentives)?;
    progress.record("incentives", &[INCENTIVE_PANEL_FILE])?;

    let fits = ctx.fit(&dispatch, &incentives, &delta)?;
    ctx.write_fits(&fits)?;
    progress.record("fit", &[FITS_FILE, SENSITIVITY_FILE])?;

    let report = ctx.report(&dispatch, &incentives, &fits.fits)?;
    ctx.write_report(&report)?;
    progress.record("report", &[REPORT_FILE])?;

    Ok(Bundle {
        dispatch,
        curve,
        delta,
        incentives,
        fits,
        report,
        manifest: progress.manifest.clone(),
    })
}
