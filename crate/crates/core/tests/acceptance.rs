//! Acceptance checks. Every test prints one `PASS`/`FAIL` line before it
//! asserts, so `cargo test --test acceptance -- --nocapture` gives a summary.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use powerscreen::calendar::LocalCalendar;
use powerscreen::dispatch::{solve_horizon, DispatchProblem};
use powerscreen::econometrics::{fit_logit, join_panels, predict_prob, regime_split_fit, LogitFit};
use powerscreen::incentives::{company_generation, net_profit_pushin, net_profit_withhold, HedgeBook};
use powerscreen::market_data::availability_filter;
use powerscreen::pipeline::{run_pipeline, Context, PipelineConfig};
use powerscreen::supply_curve::{fit_piecewise, segment_exact, sse_profile, SupplyConfig};
use powerscreen::synthetic::{generate_market, write_synthetic, PlantedCoefficients, SynthConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn verdict(criterion: u32, name: &str, ok: bool, elapsed: Duration, detail: &str) {
    let tag = if ok { "PASS" } else { "FAIL" };
    println!("criterion {criterion} [{tag}] {name} ({:.2?}): {detail}", elapsed);
}

// Published probabilities are rounded to whole percent.
fn pct(p: f64) -> f64 {
    100.0 * p
}

#[test]
fn c1_withholding_table() {
    let t = Instant::now();
    let rows = [
        (0.008, 800.0, 100.0, -94.0, 11.0),
        (0.008, 800.0, 1.0, 5.0, 25.0),
        (0.04, 800.0, 1.0, 31.0, 30.0),
        (0.04, 4900.0, 1.0, 195.0, 70.0),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for (d, e, m, pi, p) in rows {
        let got = net_profit_withhold(d, e, m);
        let prob = pct(predict_prob(-1.1660, 0.0102, got));
        ok &= (got - pi).abs() <= 1.0 && (prob - p).abs() <= 1.5;
        detail.push(format!("{got:.1}/{prob:.1}%"));
    }
    let elapsed = t.elapsed();
    ok &= elapsed < Duration::from_secs(1);
    verdict(1, "withholding probabilities", ok, elapsed, &detail.join(", "));
    assert!(ok);
}

#[test]
fn c2_pushin_table() {
    let t = Instant::now();
    let (b0, b1) = (-0.9327, 0.0034);
    let rows = [
        (0.006, -800.0, -100.0, -95.0, 22.0),
        (0.006, -800.0, -10.0, -5.0, 28.0),
        (0.02, -800.0, -5.0, 11.0, 29.0),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for (d, e, m, pi, p) in rows {
        let got = net_profit_pushin(d, e, m);
        let prob = pct(predict_prob(b0, b1, got));
        ok &= (got - pi).abs() <= 1.0 && (prob - p).abs() <= 1.5;
        detail.push(format!("{got:.1}/{prob:.1}%"));
    }
    // The fourth printed row (0.04, -9000, -5) lists a net profit of 175
    // and 42%. Its components give 355; the 42% matches 175, not 355.
    let iv = net_profit_pushin(0.04, -9000.0, -5.0);
    ok &= (iv - 355.0).abs() < 1e-9;
    detail.push(format!(
        "row iv recomputes to {iv:.0} ({:.1}%) against the printed 175 ({:.1}%)",
        pct(predict_prob(b0, b1, iv)),
        pct(predict_prob(b0, b1, 175.0))
    ));
    let elapsed = t.elapsed();
    ok &= elapsed < Duration::from_secs(1);
    verdict(2, "push-in probabilities", ok, elapsed, &detail.join(", "));
    assert!(ok);
}

fn enumerate_schedules(p: &DispatchProblem) -> f64 {
    let n = p.len();
    let mut best = f64::NEG_INFINITY;
    for mask in 0u32..(1 << n) {
        let mut prev = p.initial_state.is_on();
        let mut total = 0.0;
        for h in 0..n {
            let on = mask >> h & 1 == 1;
            if on {
                let unit = p.prices[h] - p.variable_cost[h];
                total += (unit * p.capacity_mw).max(unit * p.min_load_mw);
                if !prev {
                    total -= p.startup_cost[h];
                }
            }
            prev = on;
        }
        best = best.max(total);
    }
    best
}

#[test]
fn c3_dispatch_matches_enumeration() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut matched, mut never_partial) = (0, true);
    for _ in 0..1000 {
        let n = rng.random_range(1..=12);
        let cap = rng.random_range(1.0..600.0);
        let p = DispatchProblem {
            prices: (0..n).map(|_| rng.random_range(-100.0..300.0)).collect(),
            variable_cost: (0..n).map(|_| rng.random_range(0.0..200.0)).collect(),
            startup_cost: (0..n).map(|_| rng.random_range(0.0..20_000.0)).collect(),
            capacity_mw: cap,
            min_load_mw: cap * rng.random_range(0.0..1.0),
            initial_state: rng.random::<bool>().into(),
        };
        let sol = solve_horizon(&p).unwrap();
        if (sol.objective - enumerate_schedules(&p)).abs() <= 1e-6 {
            matched += 1;
        }
        never_partial &= sol
            .generation
            .iter()
            .all(|&g| g == 0.0 || g == p.min_load_mw || g == p.capacity_mw);
    }
    let elapsed = t.elapsed();
    let ok = matched == 1000 && never_partial && elapsed < Duration::from_secs(30);
    verdict(
        3,
        "dispatch exactness",
        ok,
        elapsed,
        &format!("{matched}/1000 objectives match, never partial: {never_partial}"),
    );
    assert!(ok);
}

fn log_likelihood(x: &[f64], y: &[bool], b0: f64, b1: f64) -> f64 {
    x.iter()
        .zip(y)
        .map(|(&x, &y)| {
            let eta = b0 + b1 * x;
            // log(1 + e^eta) without overflow
            let soft = eta.max(0.0) + (-eta.abs()).exp().ln_1p();
            if y {
                eta - soft
            } else {
                -soft
            }
        })
        .sum()
}

/// Brute-force maximizer: a coarse grid over a wide box, then repeated
/// zooming on a finer grid around the best point.
fn grid_oracle(x: &[f64], y: &[bool]) -> (f64, f64) {
    let (mut c0, mut c1) = (0.0, 0.0);
    let (mut h0, mut h1) = (10.0, 0.2);
    const STEPS: i32 = 40;
    while h0 > 1e-7 {
        let (mut best, mut arg) = (f64::NEG_INFINITY, (c0, c1));
        for i in -STEPS..=STEPS {
            for j in -STEPS..=STEPS {
                let b0 = c0 + h0 * f64::from(i) / f64::from(STEPS);
                let b1 = c1 + h1 * f64::from(j) / f64::from(STEPS);
                let ll = log_likelihood(x, y, b0, b1);
                if ll > best {
                    best = ll;
                    arg = (b0, b1);
                }
            }
        }
        (c0, c1) = arg;
        // Keep several grid cells either side so a tilted ridge stays inside.
        h0 /= 4.0;
        h1 /= 4.0;
    }
    (c0, c1)
}

#[test]
fn c4_logit_matches_grid_search() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut datasets = 0;
    while datasets < 25 {
        let b0 = rng.random_range(-1.5..1.0);
        let b1 = rng.random_range(-0.01..0.02);
        let x: Vec<f64> = (0..20).map(|_| rng.random_range(-150.0..150.0)).collect();
        let y: Vec<bool> = x
            .iter()
            .map(|&v| rng.random::<f64>() < predict_prob(b0, b1, v))
            .collect();
        // Separated samples have no finite optimum to compare against.
        let Ok(fit) = fit_logit(&x, &y) else { continue };
        let (o0, o1) = grid_oracle(&x, &y);
        worst = worst.max((fit.beta0 - o0).abs()).max((fit.beta1 - o1).abs());
        datasets += 1;
    }
    let elapsed = t.elapsed();
    let ok = worst <= 2e-4 && elapsed < Duration::from_secs(60);
    verdict(
        4,
        "logit against grid search",
        ok,
        elapsed,
        &format!("25 datasets, max |diff| {worst:.2e}"),
    );
    assert!(ok);
}

#[test]
fn c5_planted_coefficients_are_recovered() {
    const SEEDS: u64 = 50;
    let truth = 0.0102;
    let t = Instant::now();
    let mut covered = 0;
    let mut within_3se = 0;
    let mut estimates = Vec::new();
    for seed in 0..SEEDS {
        let market = generate_market(&SynthConfig {
            seed,
            ..SynthConfig::default()
        })
        .unwrap();
        let cfg = PipelineConfig {
            seed,
            iterations: 200,
            ..PipelineConfig::default()
        };
        let ctx = Context {
            set: availability_filter(&market.inputs.units, &market.inputs.outages).unwrap(),
            cal: LocalCalendar::new(&cfg.timezone).unwrap(),
            inputs: market.inputs,
            cfg,
        };
        let dispatch = ctx.dispatch().unwrap();
        let (_, delta) = ctx.slope().unwrap();
        let incentives = ctx.incentives(&delta, ctx.cfg.hedge_rate).unwrap();
        let rows = join_panels(&dispatch, &incentives).unwrap();
        let (fit, push) = regime_split_fit(&rows);
        let (fit, push) = (fit.unwrap(), push.unwrap());
        let c = PlantedCoefficients::default();
        if (fit.beta1 - c.withhold_slope).abs() <= 3.0 * fit.se1
            && (push.beta1 - c.pushin_slope).abs() <= 3.0 * push.se1
        {
            within_3se += 1;
        }
        let (lo, hi) = fit.slope_interval();
        if lo <= truth && truth <= hi {
            covered += 1;
        }
        println!(
            "  seed {seed:2}: beta1 {:.5} [{lo:.5}, {hi:.5}] n {}, push-in beta1 {:.5} (se {:.5})",
            fit.beta1, fit.n, push.beta1, push.se1
        );
        estimates.push(fit.beta1);
    }
    let pooled = estimates.iter().sum::<f64>() / estimates.len() as f64;
    let rel = (pooled - truth).abs() / truth;
    let elapsed = t.elapsed();
    let ok = covered >= 45 && rel <= 0.15 && elapsed < Duration::from_secs(30 * 60);
    verdict(
        5,
        "end-to-end synthetic recovery",
        ok,
        elapsed,
        &format!(
            "coverage {covered}/{SEEDS}, pooled beta1 {pooled:.5} ({:.2}% off)",
            100.0 * rel
        ),
    );
    // Both slopes within three standard errors in at least 90% of seeds.
    println!("  both slopes within 3 se in {within_3se}/{SEEDS} seeds");
    assert!(ok);
    assert!(within_3se >= 45);
}

fn step_series(lengths: &[usize], levels: &[[f64; 2]]) -> Vec<[f64; 2]> {
    lengths
        .iter()
        .zip(levels)
        .flat_map(|(&n, &l)| std::iter::repeat_n(l, n))
        .collect()
}

fn sse_of(series: &[[f64; 2]], cuts: &[usize]) -> f64 {
    let mut bounds = vec![0];
    bounds.extend_from_slice(cuts);
    bounds.push(series.len());
    bounds
        .windows(2)
        .map(|w| {
            let seg = &series[w[0]..w[1]];
            let n = seg.len() as f64;
            (0..2)
                .map(|d| {
                    let mean = seg.iter().map(|p| p[d]).sum::<f64>() / n;
                    seg.iter().map(|p| (p[d] - mean).powi(2)).sum::<f64>()
                })
                .sum::<f64>()
        })
        .sum()
}

/// Best split by trying every admissible set of one or two cuts.
fn exhaustive_cuts(series: &[[f64; 2]], k: usize) -> Vec<usize> {
    let n = series.len();
    let candidates: Vec<Vec<usize>> = match k {
        1 => (1..n).map(|a| vec![a]).collect(),
        2 => (1..n).flat_map(|a| (a + 1..n).map(move |b| vec![a, b])).collect(),
        _ => unreachable!(),
    };
    candidates
        .into_iter()
        .min_by(|a, b| sse_of(series, a).total_cmp(&sse_of(series, b)))
        .unwrap()
}

#[test]
fn c6_regime_segmentation() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut recovered = 0;
    let mut trials = 0;
    for k in 1..=2usize {
        for _ in 0..10 {
            let lengths: Vec<usize> = (0..=k).map(|_| rng.random_range(3..40)).collect();
            // Neighbouring levels always differ.
            let mut levels = vec![[rng.random_range(10.0..60.0), rng.random_range(5.0..25.0)]];
            for _ in 0..k {
                let p = *levels.last().unwrap();
                levels.push([p[0] + rng.random_range(5.0..30.0), p[1] - rng.random_range(1.0..8.0)]);
            }
            let series = step_series(&lengths, &levels);
            let planted: Vec<usize> = lengths
                .iter()
                .scan(0, |s, &l| {
                    *s += l;
                    Some(*s)
                })
                .take(k)
                .collect();
            let seg = segment_exact(&series, k, 1).unwrap();
            trials += 1;
            if seg.breakpoints == planted && exhaustive_cuts(&series, k) == planted && seg.sse.abs() < 1e-9 {
                recovered += 1;
            }
        }
    }
    let mut monotone = 0;
    for _ in 0..20 {
        let n = rng.random_range(24..200);
        let series: Vec<[f64; 2]> = (0..n)
            .map(|_| [rng.random_range(0.0..100.0), rng.random_range(0.0..50.0)])
            .collect();
        let profile = sse_profile(&series, 11, 1).unwrap();
        if profile.len() == 12 && profile.windows(2).all(|w| w[1] <= w[0] + 1e-9 * w[0].max(1.0)) {
            monotone += 1;
        }
    }
    let elapsed = t.elapsed();
    let ok = recovered == trials && monotone == 20;
    verdict(
        6,
        "regime segmentation",
        ok,
        elapsed,
        &format!("{recovered}/{trials} step series recovered, SSE(k) nonincreasing on {monotone}/20"),
    );
    assert!(ok);
}

#[test]
fn c7_piecewise_supply_curve() {
    let t = Instant::now();
    let noise = Normal::new(0.0, 1.0).unwrap();
    let max_segments = SupplyConfig::default().max_segments;
    let mut good = 0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + seed);
        let load: Vec<f64> = (0..2000).map(|_| rng.random_range(25_000.0..65_000.0)).collect();
        let price: Vec<f64> = load
            .iter()
            .map(|&l| 10.0 + 0.002 * l.min(40_000.0) + 0.03 * (l - 40_000.0).max(0.0) + noise.sample(&mut rng))
            .collect();
        let f = fit_piecewise(&price, &load, max_segments).unwrap();
        let knot = f
            .knots()
            .iter()
            .copied()
            .min_by(|a, b| (a - 40_000.0).abs().total_cmp(&(b - 40_000.0).abs()));
        let lower = f.slope_at(30_000.0);
        let upper = f.slope_at(55_000.0);
        let hit = knot.is_some_and(|k| (k - 40_000.0).abs() <= 500.0)
            && (lower - 0.002).abs() <= 0.0002
            && (upper - 0.03).abs() <= 0.003;
        if hit {
            good += 1;
        }
        println!("  seed {seed:2}: knots {:?} slopes {:?}", f.knots(), f.slopes);
    }
    let ok = good >= 18;
    verdict(
        7,
        "piecewise fit recovery",
        ok,
        t.elapsed(),
        &format!("{good}/20 seeds"),
    );
    assert!(ok);
}

fn simulate_logit(rng: &mut ChaCha8Rng, n: usize, b0: f64, b1: f64, spread: f64) -> (Vec<f64>, Vec<bool>) {
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-spread..spread)).collect();
    let y = x
        .iter()
        .map(|&v| rng.random::<f64>() < predict_prob(b0, b1, v))
        .collect();
    (x, y)
}

#[test]
fn c8_formula_invariants() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);

    let antisymmetric = (0..1_000_000).all(|_| {
        let d = rng.random_range(0.0..0.1);
        let e = rng.random_range(-20_000.0..20_000.0);
        let m = rng.random_range(-500.0..500.0);
        net_profit_withhold(d, e, m) == -net_profit_pushin(d, e, m)
    });

    // Hedge-neutral months on a synthetic fleet spanning two months.
    let market = generate_market(&SynthConfig::small(6, 24 * 62, 8)).unwrap();
    let inputs = &market.inputs;
    let cal = LocalCalendar::new("Europe/Berlin").unwrap();
    let gen = company_generation(inputs);
    let book = HedgeBook::build(&gen, &inputs.market, &cal, 1.0).unwrap();
    let mut cells: BTreeMap<(usize, _), (f64, usize)> = BTreeMap::new();
    for (c, series) in gen.mw.iter().enumerate() {
        for (h, g) in series.iter().enumerate() {
            let cell = cells.entry((c, book.hour_period[h])).or_default();
            cell.0 += g - book.hedged_mw(c, h);
            cell.1 += 1;
        }
    }
    let worst_mean = cells.values().map(|(s, n)| (s / *n as f64).abs()).fold(0.0, f64::max);
    let neutral = worst_mean <= 1e-9;

    let mut fits: Vec<LogitFit> = Vec::new();
    let mut worst_scaled: f64 = 0.0;
    for _ in 0..50 {
        let b0 = rng.random_range(-2.0..0.5);
        let b1 = rng.random_range(0.0..0.02);
        let (x, y) = simulate_logit(&mut rng, 400, b0, b1, 200.0);
        let Ok(f) = fit_logit(&x, &y) else { continue };
        for c in [1.0 / 3.0, 0.5, 3.0, 100.0] {
            let xs: Vec<f64> = x.iter().map(|v| v * c).collect();
            let g = fit_logit(&xs, &y).unwrap();
            for (a, b) in x.iter().zip(&xs) {
                worst_scaled = worst_scaled.max((f.predict(*a) - g.predict(*b)).abs());
            }
            fits.push(g);
        }
        fits.push(f);
    }
    let scaled = worst_scaled <= 1e-10;
    let r2_ok = fits.iter().all(|f| (0.0..1.0).contains(&f.mcfadden_r2));

    let ok = antisymmetric && neutral && scaled && r2_ok;
    verdict(
        8,
        "formula invariants",
        ok,
        t.elapsed(),
        &format!(
            "antisymmetry {antisymmetric}, worst cell mean E {worst_mean:.1e}, \
             worst rescaled probability gap {worst_scaled:.1e}, R2 in [0,1) on {} fits: {r2_ok}",
            fits.len()
        ),
    );
    assert!(ok);
}

fn bundle_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
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
fn c9_runs_are_byte_identical() {
    let t = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let market = generate_market(&SynthConfig::small(8, 24 * 45, 9)).unwrap();
    write_synthetic(tmp.path(), &market).unwrap();
    let run = |out: &str| {
        let cfg = PipelineConfig {
            market: tmp.path().join("market.csv"),
            units: tmp.path().join("units.csv"),
            generation: tmp.path().join("generation.csv"),
            outages: Some(tmp.path().join("outages.csv")),
            out_dir: tmp.path().join(out),
            seed: 9,
            iterations: 40,
            ..PipelineConfig::default()
        };
        run_pipeline(&cfg).unwrap();
        bundle_files(&cfg.out_dir)
    };
    let a = run("first");
    let b = run("second");
    let ok = !a.is_empty() && a == b;
    verdict(
        9,
        "determinism",
        ok,
        t.elapsed(),
        &format!("{} files compared: {:?}", a.len(), a.keys().collect::<Vec<_>>()),
    );
    assert!(ok);
}
