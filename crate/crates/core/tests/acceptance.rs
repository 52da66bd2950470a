//! Acceptance suite: prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;

use washtrade::battery::{run_pair, BatteryConfig};
use washtrade::benford::benford_expected;
use washtrade::ingest::{week_index, weekly_split, WeeklyVolumeSplit};
use washtrade::seed::rng_for;
use washtrade::stats::chi2_sf;
use washtrade::summary::GroupSummary;
use washtrade::synth::{gen_authentic, gen_exchange, GeneratorConfig, TradeCount, WashStream};
use washtrade::tail::{fit_hill, fit_ols, ols_tail_from_density, TailConfig};
use washtrade::trade::{is_round, PairSpec};
use washtrade::verdict::{counterfactual_rank, fisher_combine, spearman, RankModel};
use washtrade::wash::{
    bootstrap_wash_sd, cross_validate_regulated, estimate_wash, fit_benchmarks, BootstrapConfig,
    Scope,
};
use washtrade::{Amount, PairRegistry};

type Outcome = Result<String, String>;

const SEEDS: u64 = 20;
const N_TAPE: usize = 1_000_000;
const INJECTED: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 0.9];

fn btc() -> PairSpec {
    PairRegistry::default().get("BTC/USD").unwrap().clone()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

#[allow(clippy::approx_constant)]
fn benford_constants() -> Outcome {
    let p = benford_expected();
    let max_err = (1..=9)
        .map(|d| (p[d - 1] - (1.0 + 1.0 / d as f64).log10()).abs())
        .fold(0.0, f64::max);
    check(
        max_err <= 1e-12 && (p[0] - 0.30103).abs() < 5e-6,
        format!("P(1) = {:.6}, max deviation {max_err:.1e}", p[0]),
    )
}

fn chi2_numerics() -> Outcome {
    let p6 = chi2_sf(12.592, 6.0);
    let p8 = chi2_sf(15.507, 8.0);
    check(
        (p6 - 0.05).abs() <= 1e-4 && (p8 - 0.05).abs() <= 1e-4,
        format!("sf(12.592; 6) = {p6:.6}, sf(15.507; 8) = {p8:.6}"),
    )
}

fn pareto_sample(alpha: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_for(seed, "acceptance/pareto", 0);
    (0..n)
        .map(|_| (1.0 - rng.random::<f64>()).powf(-1.0 / alpha))
        .collect()
}

fn hill_exactness() -> Outcome {
    let cfg = TailConfig::default();
    let flat = vec![std::f64::consts::E; 1000];
    let exact = fit_hill(&flat, 1.0, &cfg).map_err(|e| e.to_string())?;
    let sample = pareto_sample(1.5, 100_000, 1);
    let fit = fit_hill(&sample, 1.0, &cfg).map_err(|e| e.to_string())?;
    check(
        exact.pdf_exponent == 2.0 && (1.48..=1.52).contains(&fit.alpha),
        format!(
            "x = e x_min: {}; Pareto(1.5), n = 1e5: {:.4}",
            exact.pdf_exponent, fit.alpha
        ),
    )
}

fn ols_tail() -> Outcome {
    let cfg = TailConfig::default();
    let points: Vec<(f64, f64)> = (0..40)
        .map(|k| {
            let x = 10f64.powf(0.05 + k as f64 / 10.0);
            (x, x.powf(-2.5))
        })
        .collect();
    let noiseless = ols_tail_from_density(&points, &cfg).map_err(|e| e.to_string())?;
    let sample = pareto_sample(1.5, 100_000, 2);
    let fit = fit_ols(&sample, 1.0, &cfg).map_err(|e| e.to_string())?;
    check(
        (noiseless.alpha - 1.5).abs() <= 1e-9 && (1.4..=1.6).contains(&fit.alpha),
        format!(
            "noiseless: {:.12}; Pareto(1.5): {:.4}",
            noiseless.alpha, fit.alpha
        ),
    )
}

fn fisher() -> Outcome {
    let a = fisher_combine(&[0.05; 3], 0.05).map_err(|e| e.to_string())?;
    let b = fisher_combine(&[1.0; 3], 0.05).map_err(|e| e.to_string())?;
    check(
        (a.chi2 - 17.97).abs() < 0.01
            && a.reject
            && (a.critical - 12.592).abs() < 1e-3
            && b.chi2 == 0.0
            && !b.reject,
        format!(
            "{{0.05 x3}}: chi2 {:.3} vs {:.3}, reject {}; {{1 x3}}: chi2 {}, reject {}",
            a.chi2, a.critical, a.reject, b.chi2, b.reject
        ),
    )
}

fn battery_on(seed: u64, w: f64) -> washtrade::battery::PairReport {
    let spec = btc();
    let tape = gen_exchange(&GeneratorConfig::new(seed, "SYN", spec.clone(), N_TAPE, w))
        .expect("valid config");
    let summary = GroupSummary::from_trades("SYN", &spec.pair.clone(), spec, &tape.trades)
        .expect("positive amounts");
    run_pair(&summary, &BatteryConfig::default(), None)
}

fn detector_closure() -> Outcome {
    let (mut clean_ok, mut wash_ok) = (0, 0);
    let mut misses = Vec::new();
    for seed in 0..SEEDS {
        let clean = battery_on(seed, 0.0);
        if clean.benford.pass == Some(true)
            && clean.clustering_100.pass == Some(true)
            && clean.tail.pass == Some(true)
        {
            clean_ok += 1;
        } else {
            misses.push(format!("w=0 seed {seed}"));
        }
        let wash = battery_on(seed, 0.8);
        if wash.failed_families() >= 2 {
            wash_ok += 1;
        } else {
            misses.push(format!("w=0.8 seed {seed}"));
        }
    }
    check(
        clean_ok >= 19 && wash_ok >= 19,
        format!("w=0 pass all three: {clean_ok}/20; w=0.8 fail >= 2: {wash_ok}/20 {misses:?}"),
    )
}

/// Regulated panels for three synthetic regulated exchanges.
fn regulated_panel(seed: u64, registry: &PairRegistry) -> Vec<WeeklyVolumeSplit> {
    let mut panel = Vec::new();
    for ex in ["REG-A", "REG-B", "REG-C"] {
        let tape = gen_exchange(&GeneratorConfig::new(seed, ex, btc(), N_TAPE, 0.0))
            .expect("valid config");
        panel.extend(weekly_split(&tape.to_dataset(), registry).expect("known pair"));
    }
    panel
}

fn accumulate(weeks: &mut BTreeMap<i64, WeeklyVolumeSplit>, t: &washtrade::Trade, spec: &PairSpec) {
    let w = week_index(t.timestamp_ms);
    weeks
        .entry(w)
        .or_insert_with(|| WeeklyVolumeSplit {
            exchange: t.exchange.clone(),
            pair: t.pair.clone(),
            week_index: w,
            ..Default::default()
        })
        .add(t.amount, t.price, is_round(t.amount, spec));
}

/// Target panels at each injected wash fraction over a fixed authentic flow.
///
/// Wash trades are taken from one stream until the volume share reaches each
/// target in turn, exactly as `gen_exchange` does for a single fraction.
fn target_panels(seed: u64) -> Vec<Vec<WeeklyVolumeSplit>> {
    let spec = btc();
    let mut cfg = GeneratorConfig::new(seed, "TARGET", spec.clone(), N_TAPE, 0.9);
    cfg.count = TradeCount::Authentic(N_TAPE);
    let mut weeks = BTreeMap::new();
    let mut auth_volume = 0u128;
    for t in gen_authentic(&cfg, N_TAPE).expect("valid config") {
        auth_volume += u128::from(t.amount.sub_units());
        accumulate(&mut weeks, &t, &spec);
    }
    let mut stream = WashStream::new(&cfg).expect("valid config");
    let mut wash_volume = 0u128;
    let mut out = Vec::new();
    for w in INJECTED {
        let target = (w / (1.0 - w) * auth_volume as f64) as u128;
        while wash_volume < target {
            let t = stream.next().expect("endless stream");
            wash_volume += u128::from(t.amount.sub_units());
            accumulate(&mut weeks, &t, &spec);
        }
        out.push(weeks.values().cloned().collect());
    }
    out
}

struct RecoveryRun {
    estimates: Vec<f64>,
    loo_mean: f64,
}

fn recovery_runs() -> Result<Vec<RecoveryRun>, String> {
    let registry = PairRegistry::default();
    let mut runs = Vec::new();
    for seed in 0..SEEDS {
        let reg = regulated_panel(seed, &registry);
        let set = fit_benchmarks(&reg, Scope::PerPair, None).map_err(|e| e.to_string())?;
        let model = set.model_for("BTC/USD").map_err(|e| e.to_string())?;
        let estimates = target_panels(seed)
            .iter()
            .map(|p| estimate_wash(p, model, None).map(|e| e.wash_percent))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let cv = cross_validate_regulated(&reg, Scope::PerPair, None).map_err(|e| e.to_string())?;
        runs.push(RecoveryRun {
            estimates,
            loo_mean: cv.mean,
        });
    }
    Ok(runs)
}

fn wash_recovery(runs: &[RecoveryRun]) -> Outcome {
    let mut good = 0;
    let mut worst = 0.0f64;
    for r in runs {
        let monotone = r.estimates.windows(2).all(|p| p[1] > p[0]);
        let mut within = true;
        for (est, w) in r.estimates.iter().zip(INJECTED) {
            let err = (est / 100.0 - w).abs();
            if w >= 0.25 {
                worst = worst.max(err);
                within &= err <= 0.10;
            }
        }
        good += usize::from(monotone && within);
    }
    let first: Vec<String> = runs[0]
        .estimates
        .iter()
        .map(|e| format!("{e:.1}"))
        .collect();
    check(
        good >= 18,
        format!("{good}/20 seeds monotone and within 0.10; largest error {worst:.3}; seed 0 estimates {first:?}%"),
    )
}

fn regulated_cross_validation(runs: &[RecoveryRun]) -> Outcome {
    let good = runs.iter().filter(|r| r.loo_mean < 5.0).count();
    let max = runs.iter().map(|r| r.loo_mean).fold(0.0, f64::max);
    check(
        good >= 18,
        format!("{good}/20 seeds with mean LOO estimate < 5%; largest mean {max:.2}%"),
    )
}

fn bootstrap_determinism() -> Outcome {
    let registry = PairRegistry::default();
    let reg = regulated_panel(100, &registry);
    let target = &target_panels(100)[3];
    let cfg = BootstrapConfig {
        replicates: 1000,
        seed: 42,
        scope: Scope::PerPair,
    };
    let a = bootstrap_wash_sd(target, &reg, None, None, &cfg).map_err(|e| e.to_string())?;
    let b = bootstrap_wash_sd(target, &reg, None, None, &cfg).map_err(|e| e.to_string())?;
    let same = a.aggregate.to_bits() == b.aggregate.to_bits()
        && a.per_pair
            .iter()
            .zip(&b.per_pair)
            .all(|(x, y)| x.0 == y.0 && x.1.to_bits() == y.1.to_bits());
    check(
        same,
        format!(
            "B = 1000: SD {:?} vs {:?} (percentage points)",
            a.per_pair, b.per_pair
        ),
    )
}

fn rank_arithmetic() -> Outcome {
    let m = RankModel::default();
    let zero = counterfactual_rank(50, 1e9, 0.0, &m).map_err(|e| e.to_string())?;
    let seventy = counterfactual_rank(50, 1e9, 70.0, &m).map_err(|e| e.to_string())?;
    let volumes = [5e9, 2e9, 1e9, 4e8, 1e8, 3e7];
    let ranks = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let rho = spearman(&volumes, &ranks).map_err(|e| e.to_string())?;
    check(
        zero.positions == 0 && seventy.positions == 23 && rho == -1.0,
        format!(
            "wash 0%: {}; wash 70%: {} positions; inverse lists rho = {rho}",
            zero.positions, seventy.positions
        ),
    )
}

/// Random decimal strings biased towards trailing zeros and full precision.
fn adversarial_decimal(rng: &mut impl Rng) -> String {
    loop {
        let int_len = rng.random_range(1..=11);
        let frac_len = rng.random_range(0..=8);
        let mut digits: Vec<u8> = (0..int_len + frac_len)
            .map(|_| rng.random_range(0..10))
            .collect();
        match rng.random_range(0..4) {
            0 => {
                let z = rng.random_range(0..=digits.len());
                let n = digits.len();
                digits[n - z..].iter_mut().for_each(|d| *d = 0);
            }
            1 => digits[int_len..].iter_mut().for_each(|d| *d = 0),
            2 => {
                if let Some(last) = digits.last_mut() {
                    *last = rng.random_range(1..10);
                }
            }
            _ => {}
        }
        if digits.iter().all(|d| *d == 0) {
            continue;
        }
        let text: String = digits.iter().map(|d| char::from(b'0' + d)).collect();
        let (int, frac) = text.split_at(int_len);
        return if frac.is_empty() {
            int.to_string()
        } else {
            format!("{int}.{frac}")
        };
    }
}

/// String-level reference: the value is D * 10^-f for the digit string D;
/// it is a multiple of 10^(e+2) iff D's trailing zeros minus f reach e + 2.
fn reference_is_round(s: &str, exponent: i32) -> bool {
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    let digits = format!("{int}{frac}");
    let trailing = digits.len() - digits.trim_end_matches('0').len();
    trailing as i32 - frac.len() as i32 >= exponent + 2
}

fn roundness_exactness() -> Outcome {
    let mut rng = rng_for(11, "acceptance/decimals", 0);
    let exponents: Vec<i32> = (-8..=4).collect();
    let specs: Vec<PairSpec> = exponents
        .iter()
        .map(|&e| PairSpec::new(format!("P{e}"), e).unwrap())
        .collect();
    let mut mismatches = 0usize;
    let mut round_seen = 0usize;
    let mut example = None;
    for _ in 0..1_000_000 {
        let s = adversarial_decimal(&mut rng);
        let a: Amount = s.parse().map_err(|e| format!("{s}: {e:?}"))?;
        for (spec, &e) in specs.iter().zip(&exponents) {
            let lib = is_round(a, spec);
            let reference = reference_is_round(&s, e);
            round_seen += usize::from(reference);
            if lib != reference {
                mismatches += 1;
                example.get_or_insert_with(|| format!("{s} at 10^{e}"));
            }
        }
    }
    check(
        mismatches == 0,
        format!(
            "1e6 strings x {} exponents: {mismatches} mismatches, {round_seen} round cases{}",
            exponents.len(),
            example
                .map(|e| format!("; first mismatch {e}"))
                .unwrap_or_default()
        ),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |id: u32, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} criterion {id:>2} {name} ({secs:.1}s): {detail}");
    };

    report(1, "benford constants", &mut benford_constants);
    report(2, "chi-squared numerics", &mut chi2_numerics);
    report(3, "hill exactness", &mut hill_exactness);
    report(4, "ols tail fit", &mut ols_tail);
    report(5, "fisher combination", &mut fisher);
    report(6, "detector closure", &mut detector_closure);
    let mut runs = Err("not run".to_string());
    report(7, "wash-estimator recovery", &mut || {
        runs = recovery_runs();
        runs.as_ref()
            .map_err(Clone::clone)
            .and_then(|r| wash_recovery(r))
    });
    report(
        8,
        "regulated cross-validation (shares criterion 7 tapes)",
        &mut || {
            runs.as_ref()
                .map_err(Clone::clone)
                .and_then(|r| regulated_cross_validation(r))
        },
    );
    report(9, "bootstrap determinism", &mut bootstrap_determinism);
    report(10, "rank arithmetic", &mut rank_arithmetic);
    report(11, "roundness exactness", &mut roundness_exactness);

    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
