use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use powerscreen::calendar::LocalCalendar;
use powerscreen::econometrics::{join_panels, JoinedRow};
use powerscreen::incentives::Direction;
use powerscreen::market_data::availability_filter;
use powerscreen::pipeline::{ingest, run_pipeline, Context, Outcome, PipelineConfig, MANIFEST_FILE};
use powerscreen::report::{bin_curve, expected_impact, summarize, ImpactRow};
use powerscreen::supply_curve::{load_regimes, load_supply_fits};
use powerscreen::synthetic::{
    generate_market, write_synthetic, FuelRegimeTruth, PlantedCoefficients, SynthConfig, SynthMarket,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

/// Writes the market to a fresh directory and points a config at it.
fn on_disk(market: &SynthMarket, iterations: usize) -> (TempDir, PipelineConfig) {
    let dir = tempfile::tempdir().unwrap();
    write_synthetic(dir.path(), market).unwrap();
    let cfg = PipelineConfig {
        market: dir.path().join("market.csv"),
        units: dir.path().join("units.csv"),
        generation: dir.path().join("generation.csv"),
        outages: Some(dir.path().join("outages.csv")),
        out_dir: dir.path().join("out"),
        seed: market.truth.config.seed,
        iterations,
        ..PipelineConfig::default()
    };
    (dir, cfg)
}

fn in_memory(market: &SynthMarket, cfg: PipelineConfig) -> Context {
    Context {
        set: availability_filter(&market.inputs.units, &market.inputs.outages).unwrap(),
        cal: LocalCalendar::new(&cfg.timezone).unwrap(),
        inputs: market.inputs.clone(),
        cfg,
    }
}

fn truth_rows(market: &SynthMarket) -> Vec<JoinedRow> {
    market
        .rows
        .iter()
        .map(|r| JoinedRow {
            hour: r.hour,
            unit: r.unit,
            regime: if r.competitive_on {
                Direction::Withhold
            } else {
                Direction::PushIn
            },
            deviated: r.deviated,
            pi_w: r.pi_w,
            pi_p: r.pi_p,
            delta: r.delta,
            exposure_mw: r.exposure_mw,
            margin: r.margin,
        })
        .collect()
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

#[test]
fn two_unit_month_gives_a_complete_bundle() {
    let market = generate_market(&SynthConfig::small(2, 24 * 31, 1)).unwrap();
    let (_dir, cfg) = on_disk(&market, 30);
    let bundle = run_pipeline(&cfg).unwrap();
    assert_eq!(bundle.manifest.status, "complete");
    assert_eq!(
        bundle.manifest.stages,
        ["ingest", "dispatch", "slope", "incentives", "fit", "report"]
    );
    for regime in [Direction::Withhold, Direction::PushIn] {
        let fitted = bundle.fits.fits.main(regime).is_some();
        let skipped = bundle
            .fits
            .fits
            .skipped
            .iter()
            .any(|s| s.model == "main" && s.regime == regime);
        assert!(fitted ^ skipped, "{regime:?}");
    }
    let on_disk = files(&cfg.out_dir);
    for entry in &bundle.manifest.files {
        assert_eq!(on_disk[&entry.name].len() as u64, entry.bytes, "{}", entry.name);
    }
    assert!(on_disk.contains_key(MANIFEST_FILE));
}

#[test]
fn stages_rerun_from_cached_files_reproduce_the_bundle() {
    let market = generate_market(&SynthConfig::small(5, 24 * 40, 2)).unwrap();
    let (dir, cfg) = on_disk(&market, 40);
    let bundle = run_pipeline(&cfg).unwrap();
    let full = files(&cfg.out_dir);

    let staged = PipelineConfig {
        out_dir: dir.path().join("staged"),
        ..cfg.clone()
    };
    std::fs::create_dir_all(&staged.out_dir).unwrap();
    let ctx = ingest(&staged).unwrap();
    ctx.write_ingest().unwrap();
    ctx.write_dispatch(&ctx.dispatch().unwrap()).unwrap();
    let (curve, delta) = ctx.slope().unwrap();
    ctx.write_slope(&curve, &delta).unwrap();
    let incentives = ctx.incentives(&ctx.load_slopes().unwrap(), staged.hedge_rate).unwrap();
    ctx.write_incentives(&incentives).unwrap();
    let (d, i, s) = (
        ctx.load_dispatch().unwrap(),
        ctx.load_incentives().unwrap(),
        ctx.load_slopes().unwrap(),
    );
    ctx.write_fits(&ctx.fit(&d, &i, &s).unwrap()).unwrap();
    let report = ctx.report(&d, &i, &ctx.load_fits().unwrap()).unwrap();
    ctx.write_report(&report).unwrap();

    let mut parts = files(&staged.out_dir);
    let mut whole = full.clone();
    whole.remove(MANIFEST_FILE);
    parts.remove(MANIFEST_FILE);
    assert_eq!(parts.keys().collect::<Vec<_>>(), whole.keys().collect::<Vec<_>>());
    for (name, bytes) in &whole {
        assert!(parts[name] == *bytes, "{name} differs");
    }

    // Every emitted file loads back to what was written.
    assert_eq!(d, bundle.dispatch);
    assert_eq!(i, bundle.incentives);
    assert_eq!(s, bundle.delta);
    assert_eq!(ctx.load_fits().unwrap(), bundle.fits.fits);
    let ms = &ctx.inputs.market;
    // Fit statistics are not part of the regimes file.
    let regimes = load_regimes(&cfg.out_dir.join("regimes.csv"), ms).unwrap();
    assert_eq!(regimes.breakpoints, bundle.curve.segmentation.breakpoints);
    assert_eq!(regimes.centroids, bundle.curve.segmentation.centroids);
    assert_eq!(regimes.len, bundle.curve.segmentation.len);
    assert_eq!(
        load_supply_fits(&cfg.out_dir.join("supply_fits.csv")).unwrap(),
        bundle.curve.fits
    );
}

#[test]
fn thread_count_does_not_change_the_bundle() {
    let market = generate_market(&SynthConfig::small(4, 24 * 31, 3)).unwrap();
    let (dir, cfg) = on_disk(&market, 30);
    run_pipeline(&PipelineConfig { jobs: 1, ..cfg.clone() }).unwrap();
    let serial = files(&cfg.out_dir);
    let wide = PipelineConfig {
        jobs: 3,
        out_dir: dir.path().join("wide"),
        ..cfg
    };
    run_pipeline(&wide).unwrap();
    assert_eq!(serial, files(&wide.out_dir));
}

#[test]
fn missing_generation_leaves_an_incomplete_manifest() {
    let market = generate_market(&SynthConfig::small(2, 24 * 31, 4)).unwrap();
    let (dir, cfg) = on_disk(&market, 10);
    std::fs::remove_file(dir.path().join("generation.csv")).unwrap();
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(err.to_string().contains("ingest"), "{err}");
    assert!(err.to_string().contains("generation.csv"), "{err}");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(cfg.out_dir.join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(manifest["status"], "incomplete");
    assert!(manifest["error"].as_str().unwrap().contains("generation.csv"));
}

#[test]
fn null_market_raises_diagnostics_instead_of_signal() {
    let cfg = SynthConfig {
        coefficients: PlantedCoefficients::NONE,
        ..SynthConfig::small(4, 24 * 31, 5)
    };
    let market = generate_market(&cfg).unwrap();
    let (_dir, cfg) = on_disk(&market, 30);
    let bundle = run_pipeline(&cfg).unwrap();
    let counts = bundle.report.deviation_counts;
    assert_eq!(counts.withheld + counts.pushed_in, 0);
    assert!(counts.agree > 0);
    assert!(bundle.fits.fits.main(Direction::Withhold).is_none());
    assert!(bundle.fits.fits.main(Direction::PushIn).is_none());
    assert_eq!(
        bundle.manifest.diagnostics.len(),
        2,
        "{:?}",
        bundle.manifest.diagnostics
    );
    assert!(matches!(bundle.report.bin_curve_withhold, Outcome::Skipped(_)));
}

#[test]
fn quantiles_reproduce_the_published_withholding_row() {
    let mut v = vec![-875.0];
    v.extend(std::iter::repeat_n(-13.0, 500));
    v.extend(std::iter::repeat_n(4.0, 400));
    v.extend(std::iter::repeat_n(32.0, 90));
    v.extend(std::iter::repeat_n(197.0, 10));
    let s = summarize(&v).unwrap();
    assert_eq!(s.n, 1001);
    assert_eq!([s.min, s.q50, s.q90, s.q99, s.max], [-875.0, -13.0, 4.0, 32.0, 197.0]);
}

#[test]
fn calibrated_bins_track_the_logistic() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let beta = [-1.166, 0.0102];
    let x: Vec<f64> = (0..100_000).map(|_| rng.random_range(-875.0..197.0)).collect();
    let y: Vec<bool> = x
        .iter()
        .map(|&v| rng.random::<f64>() < powerscreen::econometrics::predict_prob(beta[0], beta[1], v))
        .collect();
    let bins = bin_curve(&x, &y, beta, 100).unwrap();
    assert_eq!(bins.iter().map(|b| b.n).sum::<usize>(), x.len());
    for b in bins.iter().filter(|b| b.n >= 500) {
        assert!((b.observed_rate - b.predicted_rate).abs() < 0.05, "{b:?}");
    }
    assert!(bins.windows(2).all(|w| w[0].mean_profit <= w[1].mean_profit));
}

fn overall(rows: &[ImpactRow]) -> &ImpactRow {
    rows.iter().find(|r| r.period == "all").unwrap()
}

#[test]
fn expected_impact_matches_planted_volumes() {
    let market = generate_market(&SynthConfig::small(20, 24 * 365, 6)).unwrap();
    let rows = truth_rows(&market);
    let units = &market.inputs.units;
    let ms = &market.inputs.market;
    let cal = LocalCalendar::new("Europe/Berlin").unwrap();
    let c = PlantedCoefficients::default();
    let impact = expected_impact(
        &rows,
        units,
        ms,
        &cal,
        Some([c.withhold_intercept, c.withhold_slope]),
        Some([c.pushin_intercept, c.pushin_slope]),
    );
    let all = overall(&impact);
    let rel = |e: f64, r: f64| (e - r).abs() / r;
    assert!(
        rel(all.expected_withheld_mwh, all.realized_withheld_mwh) < 0.1,
        "{all:?}"
    );
    assert!(
        rel(all.expected_pushed_in_mwh, all.realized_pushed_in_mwh) < 0.1,
        "{all:?}"
    );
    assert!((all.realized_withheld_mwh - market.truth.withheld_capacity_mwh).abs() < 1e-6);
    assert!(all.eligible_load_mwh <= all.total_load_mwh);
    assert_eq!(all.hours, ms.len());
    for r in &impact {
        assert!(r.withhold_price_change_mean >= 0.0 && r.withhold_price_change_max >= 0.0);
        assert!(r.pushin_price_change_mean <= 0.0 && r.pushin_price_change_min <= 0.0);
    }
    // The last UTC hour of 2021 is already 2022 in Berlin.
    let years: Vec<&str> = impact.iter().map(|r| r.period.as_str()).collect();
    assert_eq!(years, ["2021", "2022", "all"]);
    assert_eq!(impact[1].hours, 1);

    // A flat law expects p0 of the eligible capacity.
    let p0: f64 = 0.2;
    let flat = [(p0 / (1.0 - p0)).ln(), 0.0];
    let impact = expected_impact(&rows, units, ms, &cal, Some(flat), Some(flat));
    let all = overall(&impact);
    let cap = |regime| {
        rows.iter()
            .filter(|r| r.regime == regime)
            .map(|r| units[r.unit].capacity_mw)
            .sum::<f64>()
    };
    assert!((all.expected_withheld_mwh - p0 * cap(Direction::Withhold)).abs() < 1e-6 * all.expected_withheld_mwh);
    assert!((all.expected_pushed_in_mwh - p0 * cap(Direction::PushIn)).abs() < 1e-6 * all.expected_pushed_in_mwh);
}

#[test]
fn planted_fuel_break_is_recovered() {
    let d = SynthConfig::default();
    let cfg = SynthConfig {
        fuel_regimes: vec![
            FuelRegimeTruth {
                start_hour: 0,
                gas_price: 35.0,
                coal_price: 12.0,
            },
            FuelRegimeTruth {
                start_hour: 5000,
                gas_price: 50.0,
                coal_price: 16.0,
            },
        ],
        supply: d.supply[..2].to_vec(),
        ..SynthConfig::small(2, 24 * 300, 7)
    };
    assert_eq!(cfg.fuel_noise_sd, 1.0);
    let market = generate_market(&cfg).unwrap();
    let ctx = in_memory(&market, PipelineConfig::default());
    let (curve, _) = ctx.slope().unwrap();
    let bp = &curve.segmentation.breakpoints;
    assert!(bp.iter().any(|&b| b.abs_diff(5000) <= 24), "{bp:?}");
}

#[test]
fn benchmark_agrees_with_the_competitive_truth() {
    let market = generate_market(&SynthConfig::small(8, 24 * 90, 8)).unwrap();
    let ctx = in_memory(
        &market,
        PipelineConfig {
            iterations: 100,
            ..PipelineConfig::default()
        },
    );
    let panel = ctx.dispatch().unwrap();
    let truth: HashMap<(usize, usize), bool> = market
        .rows
        .iter()
        .map(|r| ((r.hour, r.unit), r.competitive_on))
        .collect();
    let (mut agree, mut defined) = (0usize, 0usize);
    for r in &panel.rows {
        if let Some(z) = r.z {
            defined += 1;
            agree += usize::from(truth[&(r.hour, r.unit)] == z);
        }
    }
    assert!(defined > panel.rows.len() / 2);
    assert!(agree as f64 >= 0.99 * defined as f64, "{agree}/{defined}");
}

fn sensitivity_on_planted_market() -> (powerscreen::pipeline::Fits, Vec<(f64, f64)>) {
    let market = generate_market(&SynthConfig::small(16, 24 * 365, 9)).unwrap();
    let ctx = in_memory(
        &market,
        PipelineConfig {
            iterations: 60,
            subgroups: Vec::new(),
            ..PipelineConfig::default()
        },
    );
    let dispatch = ctx.dispatch().unwrap();
    let (_, delta) = ctx.slope().unwrap();
    let incentives = ctx.incentives(&delta, 1.0).unwrap();
    let fits = ctx.fit(&dispatch, &incentives, &delta).unwrap();
    let withhold = fits
        .sensitivity
        .rows
        .iter()
        .map(|r| match &r.withhold {
            Outcome::Ok(m) => (m.beta1, m.ll),
            Outcome::Skipped(reason) => panic!("{reason}"),
        })
        .collect();
    (fits, withhold)
}

#[test]
fn hedge_sensitivity_prefers_the_true_rate() {
    let (fits, withhold) = sensitivity_on_planted_market();
    let rows = &fits.sensitivity.rows;
    assert_eq!(rows.iter().map(|r| r.hedge_rate).collect::<Vec<_>>(), [1.0, 0.7, 0.0]);
    let main = fits.fits.main(Direction::Withhold).unwrap();
    let Outcome::Ok(first) = &rows[0].withhold else {
        panic!()
    };
    assert_eq!(first.beta1, main.beta1);
    assert_eq!(
        (first.beta0, first.se1, first.ll, first.n),
        (main.beta0, main.se1, main.ll, main.n)
    );
    // The planted rate explains withholding best.
    let ll: Vec<f64> = withhold.iter().map(|w| w.1).collect();
    assert!(ll[0] > ll[1] && ll[0] > ll[2], "{ll:?}");
}

// Lower assumed rates add delta times a share of mean company output to
// every net profit. On a convex supply curve that term rises with the
// margin, so it compresses the predictor and the slope grows instead.
#[test]
#[ignore = "the withholding slope grows as the assumed hedge rate falls in the synthetic market"]
fn withholding_slope_is_largest_at_the_true_rate() {
    let (_, withhold) = sensitivity_on_planted_market();
    let b: Vec<f64> = withhold.iter().map(|w| w.0).collect();
    assert!(b[0] > b[1] && b[0] > b[2], "{b:?}");
}

#[test]
fn year_subgroups_split_a_two_year_panel() {
    let cfg = SynthConfig {
        start: "2021-12-01T00:00:00Z".into(),
        ..SynthConfig::small(6, 24 * 62, 10)
    };
    let market = generate_market(&cfg).unwrap();
    let ctx = in_memory(
        &market,
        PipelineConfig {
            iterations: 30,
            subgroups: vec![powerscreen::pipeline::SubgroupKey::Year],
            sensitivity_rates: vec![1.0],
            ..PipelineConfig::default()
        },
    );
    let dispatch = ctx.dispatch().unwrap();
    let (_, delta) = ctx.slope().unwrap();
    let incentives = ctx.incentives(&delta, 1.0).unwrap();
    let fits = ctx.fit(&dispatch, &incentives, &delta).unwrap().fits;
    let groups: HashSet<(&str, Direction)> = fits
        .models
        .iter()
        .filter(|m| m.model == "subgroup")
        .map(|m| (m.group.as_str(), m.regime))
        .collect();
    let expected: HashSet<(&str, Direction)> = ["year=2021", "year=2022"]
        .into_iter()
        .flat_map(|g| [(g, Direction::Withhold), (g, Direction::PushIn)])
        .collect();
    assert_eq!(groups, expected, "skipped: {:?}", fits.skipped);

    // Joining the panels keeps every defined benchmark.
    let rows = join_panels(&dispatch, &incentives).unwrap();
    assert_eq!(rows.len(), dispatch.counts().defined());
}
