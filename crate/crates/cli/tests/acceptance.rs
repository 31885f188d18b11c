//! Acceptance criteria, one PASS/FAIL line each.
//!
//! `cargo test -p riskquant-cli --test acceptance -- 4 11` runs a subset.
//! The process exits 0 even when a criterion fails, so the rest of the
//! workspace tests still report; set `RISKQUANT_ACCEPTANCE_STRICT=1` to turn
//! any FAIL into a nonzero exit.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use riskquant::data::Dataset;
use riskquant::dim::{benchmark_im_nested, simulate_paths, Market, MarketConfig, State, STATE_DIM};
use riskquant::losses::{AlphaLevel, TruncationBound};
use riskquant::nn::{InterpGrid, Network};
use riskquant::optim::TrainConfig;
use riskquant::oracles::suite::elicitation_suite;
use riskquant::oracles::{
    acerbi_es, norm_cdf, norm_ppf, norm_sf, toy_var_es_closed, GaussianToySpec,
};
use riskquant::rng::{indexed, run_seed, stream, Rng, Stream};
use riskquant::trainers::{
    fit_es_two_step, fit_var_multi_continuum, fit_var_multi_interp, fit_var_single, Arch, EsMethod,
    FitConfig, TransformKind, VarCandidate, VarModel,
};
use riskquant::validation::{
    convergence_slope, crossing_rate, crossing_rate_values, es_error_proxy, nested_var_sa,
    normalized_rmse, pvalue_error_estimate, MetricsRecord, NestedMcConfig,
};
use riskquant_cli::config::ExperimentConfig;
use riskquant_cli::pipeline::{run_experiment, toy_spec, toy_test_set};

/// Master seed of every criterion.
const SEED: u64 = 2024;
const TOY_D: usize = 5;
const TOY_N: usize = 1 << 16;
const TEST_N: usize = 1 << 14;

// Frozen from scipy.stats.norm: ppf(α) and pdf(ppf(α)) / (1 − α).
const Z_975: f64 = 1.959963984540054;
const GAUSS_REF: [(f64, f64, f64); 5] = [
    (0.9, 1.2815515655446004, 1.754983319324869),
    (0.95, 1.6448536269514722, 2.0627128075074257),
    (0.975, 1.959963984540054, 2.3378027922014133),
    (0.99, 2.3263478740408408, 2.665214220345806),
    (0.999, 3.090232306167813, 3.367090077063992),
];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

type CheckResult = Result<Verdict, String>;

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn level(a: f64) -> AlphaLevel {
    AlphaLevel::new(a).unwrap()
}

/// Desk-scale toy training: batch 2¹² at n = 2¹⁶ keeps 16 minibatches per epoch.
fn toy_fit(seed: u64, epochs: usize, batch: usize) -> FitConfig {
    FitConfig {
        arch: Arch::default(),
        train: TrainConfig {
            epochs,
            batch_size: batch,
            learning_rate: 0.01,
            seed,
            ..Default::default()
        },
        transform: TransformKind::Standardize,
    }
}

const TOY_EPOCHS: usize = 200;

/// Shared toy data and fits so criteria 4, 5, 6, and 8 reuse one training set.
struct Toy {
    spec: GaussianToySpec,
    train: Dataset,
    test: Dataset,
    single: std::collections::BTreeMap<u64, (VarModel, Duration)>,
}

impl Toy {
    fn new() -> Self {
        let spec = toy_spec(SEED, TOY_D).unwrap();
        let rs = run_seed(SEED, 0);
        Self {
            train: spec.generate(TOY_N, rs, false),
            test: toy_test_set(&spec, TEST_N, rs),
            spec,
            single: Default::default(),
        }
    }

    fn truth(&self, alpha: f64) -> (Vec<f64>, Vec<f64>) {
        (0..self.test.len())
            .map(|i| self.spec.var_es(self.test.row(i), alpha).unwrap())
            .unzip()
    }

    fn single(&mut self, alpha: f64) -> Result<(VarModel, Duration), String> {
        if !self.single.contains_key(&alpha.to_bits()) {
            let t0 = Instant::now();
            let m = fit_var_single(&self.train, level(alpha), &toy_fit(SEED, TOY_EPOCHS, 4096))
                .map_err(e)?;
            self.single.insert(alpha.to_bits(), (m, t0.elapsed()));
        }
        Ok(self.single[&alpha.to_bits()].clone())
    }
}

fn c1() -> CheckResult {
    let t0 = Instant::now();
    let checks = elicitation_suite(1_000_000, SEED).map_err(e)?;
    let secs = t0.elapsed().as_secs_f64();
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    Ok(verdict(
        failed.is_empty() && secs < 60.0,
        format!(
            "{} checks, failed {failed:?}, {secs:.1} s (< 60 s)",
            checks.len()
        ),
    ))
}

fn c2() -> CheckResult {
    let t0 = Instant::now();
    let mut rng = stream(SEED, Stream::Test);
    let mut worst_round = 0f64;
    let mut worst_acerbi = 0f64;
    let mut es_below = 0;
    for i in 0..100 {
        let d = 1 + i % 6;
        let spec = GaussianToySpec::sample(d, &mut rng).map_err(e)?;
        let x: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let a = rng.random_range(0.5..0.999);
        let (q, s) = toy_var_es_closed(&spec, &x, a).map_err(e)?;
        let (m, sd) = spec.moments(&x).map_err(e)?;
        if sd == 0.0 {
            continue;
        }
        worst_round = worst_round.max((norm_cdf((q - m) / sd) - a).abs());
        if s < q {
            es_below += 1;
        }
        let ac = acerbi_es(
            |u| m + sd * norm_ppf(u).unwrap_or(f64::NAN),
            level(a),
            100_000,
        )
        .map_err(e)?;
        worst_acerbi = worst_acerbi.max((ac - s).abs() / sd);
    }
    // closed form against the frozen scipy values
    let mut worst_ref = 0f64;
    for (a, z, es) in GAUSS_REF {
        let spec = GaussianToySpec::new(1, vec![0.0, 0.0], vec![1.0, 0.0]).map_err(e)?;
        let (q, s) = toy_var_es_closed(&spec, &[0.3], a).map_err(e)?;
        worst_ref = worst_ref.max((q - z).abs()).max((s - es).abs());
    }
    let secs = t0.elapsed().as_secs_f64();
    Ok(verdict(
        worst_round < 1e-12 && es_below == 0 && worst_acerbi < 1e-4 && worst_ref < 1e-12 && secs < 10.0,
        format!(
            "round-trip {worst_round:.1e}, ES<VaR {es_below}, Acerbi {worst_acerbi:.1e}·σ, scipy {worst_ref:.1e}, {secs:.1} s"
        ),
    ))
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn c3() -> CheckResult {
    let t0 = Instant::now();
    let mut rng = stream(SEED, Stream::Init);
    let h = 1e-5;
    let (mut worst_bwd, mut worst_tan) = (0f64, 0f64);
    for _ in 0..100 {
        let d = rng.random_range(2..6);
        let w1 = rng.random_range(2..8);
        let w2 = rng.random_range(2..8);
        let o = rng.random_range(1..3);
        let mut net = Network::init(d, &[w1, w2], o, &mut rng).map_err(e)?;
        for p in net.params_mut() {
            *p = rng.random_range(-1.0..1.0);
        }
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
        let d_out: Vec<f64> = (0..o).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dot = |n: &Network| -> f64 {
            n.predict(&x)
                .unwrap()
                .iter()
                .zip(&d_out)
                .map(|(a, b)| a * b)
                .sum()
        };
        let (_, cache) = net.forward(&x).map_err(e)?;
        let g = net.backward(&cache, &d_out).map_err(e)?;
        for i in 0..net.n_params() {
            let mut p = net.clone();
            p.params_mut()[i] += h;
            let mut m = net.clone();
            m.params_mut()[i] -= h;
            worst_bwd = worst_bwd.max(rel_err(g.params[i], (dot(&p) - dot(&m)) / (2.0 * h)));
        }
        for j in 0..d {
            let mut xp = x.clone();
            xp[j] += h;
            let mut xm = x.clone();
            xm[j] -= h;
            let f = |x: &[f64]| -> f64 {
                net.predict(x)
                    .unwrap()
                    .iter()
                    .zip(&d_out)
                    .map(|(a, b)| a * b)
                    .sum()
            };
            worst_bwd = worst_bwd.max(rel_err(g.input[j], (f(&xp) - f(&xm)) / (2.0 * h)));
        }
        let (_, tan) = net.forward_with_alpha_tangent(&x).map_err(e)?;
        let mut xp = x.clone();
        xp[0] += h;
        let mut xm = x.clone();
        xm[0] -= h;
        let (yp, ym) = (net.predict(&xp).map_err(e)?, net.predict(&xm).map_err(e)?);
        for k in 0..o {
            worst_tan = worst_tan.max(rel_err(tan[k], (yp[k] - ym[k]) / (2.0 * h)));
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    Ok(verdict(
        worst_bwd < 1e-5 && worst_tan < 1e-5 && secs < 30.0,
        format!("backward {worst_bwd:.1e}, tangent {worst_tan:.1e} (< 1e-5), {secs:.1} s"),
    ))
}

fn c4a() -> CheckResult {
    let t0 = Instant::now();
    let gen = |n: usize, seed: u64| {
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let mut r = indexed(seed, Stream::Data, i as u64);
            x.push(StandardNormal.sample(&mut r));
            y.push(StandardNormal.sample(&mut r));
        }
        Dataset::new(1, x, y).unwrap()
    };
    let train = gen(1 << 16, SEED);
    let test = gen(10_000, SEED + 1);
    let m = fit_var_single(&train, level(0.975), &toy_fit(SEED, 100, 4096)).map_err(e)?;
    let q = m.predict_rows(test.x(), 0.975).map_err(e)?;
    let mae = q.iter().map(|v| (v - Z_975).abs()).sum::<f64>() / q.len() as f64;
    let secs = t0.elapsed().as_secs_f64();
    Ok(verdict(
        mae < 0.05 && secs < 600.0,
        format!("mean |q̂ − {Z_975:.6}| = {mae:.4} (< 0.05), {secs:.0} s"),
    ))
}

fn c4b(toy: &mut Toy) -> CheckResult {
    let (q_true, _) = toy.truth(0.95);
    let (m, wall) = toy.single(0.95)?;
    let q = m.predict_rows(toy.test.x(), 0.95).map_err(e)?;
    let r = normalized_rmse(&q, &q_true).map_err(e)?;
    let secs = wall.as_secs_f64();
    Ok(verdict(
        r < 0.1 && secs < 600.0,
        format!("toy d={TOY_D} n=2^16 α=0.95 nRMSE {r:.4} (< 0.1), {secs:.0} s"),
    ))
}

fn c5(toy: &mut Toy) -> CheckResult {
    let a = 0.999;
    let (q_true, _) = toy.truth(a);
    let single = toy.single(a)?.0.predict_rows(toy.test.x(), a).map_err(e)?;
    let grid = InterpGrid::uniform(0.85, 0.999, 21).map_err(e)?;
    let multi =
        fit_var_multi_interp(&toy.train, &grid, &toy_fit(SEED, TOY_EPOCHS, 4096)).map_err(e)?;
    let q3 = multi.predict_rows(toy.test.x(), a).map_err(e)?;
    let (rs, r3) = (
        normalized_rmse(&single, &q_true).map_err(e)?,
        normalized_rmse(&q3, &q_true).map_err(e)?,
    );
    Ok(verdict(
        r3 < rs,
        format!("α=0.999 multi-α (III) {r3:.4} vs single {rs:.4}"),
    ))
}

fn c6(toy: &mut Toy) -> CheckResult {
    let (hi, lo) = (0.999, 0.995);
    let multi = fit_var_multi_continuum(
        &toy.train,
        (0.85, 0.9999),
        10.0,
        &toy_fit(SEED, TOY_EPOCHS, 4096),
    )
    .map_err(e)?;
    let c_multi = crossing_rate(&multi, toy.test.x(), &[(hi, lo)]).map_err(e)?[0];
    let q_hi = toy
        .single(hi)?
        .0
        .predict_rows(toy.test.x(), hi)
        .map_err(e)?;
    let q_lo = toy
        .single(lo)?
        .0
        .predict_rows(toy.test.x(), lo)
        .map_err(e)?;
    let c_single = crossing_rate_values(&q_hi, &q_lo);
    Ok(verdict(
        c_multi < 1e-3 && c_single > 1e-2,
        format!("P(q̂_0.999 < q̂_0.995): multi-α (I) {c_multi:.2e} (< 1e-3), single {c_single:.2e} (> 1e-2)"),
    ))
}

fn c7() -> CheckResult {
    let t0 = Instant::now();
    let spec = toy_spec(SEED, TOY_D).map_err(e)?;
    let twins = toy_test_set(&spec, 1 << 17, run_seed(SEED, 7));
    let a = 0.95;
    let truth = |alpha: f64| -> (Vec<f64>, Vec<f64>) {
        (0..twins.len())
            .map(|i| spec.var_es(twins.row(i), alpha).unwrap())
            .unzip()
    };
    let (q, s) = truth(a);
    let p = pvalue_error_estimate(&q, &twins, level(a)).map_err(e)?;
    let es = es_error_proxy(&q, &s, &twins, level(a)).map_err(e)?;
    let mut ok = p.covers(0.0) && es.covers(0.0);
    let mut detail = format!(
        "p-err {:.4} CI [{:.4}, {:.4}], ES proxy {:.4} CI [{:.4}, {:.4}]",
        p.point, p.ci_lo, p.ci_hi, es.point, es.ci_lo, es.ci_hi
    );
    for b in [0.9, 0.97] {
        let (qb, _) = truth(b);
        let pb = pvalue_error_estimate(&qb, &twins, level(a)).map_err(e)?;
        let target = (a - b).abs();
        ok &= pb.covers(target);
        detail += &format!(
            "; α′={b}: {:.4} CI [{:.4}, {:.4}] ∋ {target:.2}",
            pb.point, pb.ci_lo, pb.ci_hi
        );
    }
    let secs = t0.elapsed().as_secs_f64();
    Ok(verdict(
        ok && secs < 120.0,
        format!("{detail}; {secs:.1} s"),
    ))
}

fn c8(toy: &mut Toy) -> CheckResult {
    let a = 0.95;
    let (_, s_true) = toy.truth(a);
    let spec = toy.spec.clone();
    let exact = move |x: &[f64]| spec.var_es(x, a).unwrap().0;
    let cfg = toy_fit(SEED, TOY_EPOCHS, 4096);
    let t0 = Instant::now();
    let full = fit_es_two_step(
        &toy.train,
        VarCandidate::Exact(&exact),
        level(a),
        EsMethod::FullNet,
        TruncationBound::NONE,
        &cfg,
    )
    .map_err(e)?;
    let t_full = t0.elapsed().as_secs_f64();
    let q_exact: Vec<f64> = (0..toy.test.len())
        .map(|i| exact(toy.test.row(i)))
        .collect();
    let s_full: Vec<f64> = q_exact
        .iter()
        .zip(full.predict_increment_rows(toy.test.x()).map_err(e)?)
        .map(|(q, z)| q + z)
        .collect();
    let r_full = normalized_rmse(&s_full, &s_true).map_err(e)?;

    let train = toy.train.clone();
    let var = toy.single(a)?.0;
    let t0 = Instant::now();
    let frozen = fit_es_two_step(
        &train,
        VarCandidate::Model(&var),
        level(a),
        EsMethod::FrozenLr,
        TruncationBound::NONE,
        &cfg,
    )
    .map_err(e)?;
    let t_frozen = t0.elapsed().as_secs_f64();
    let q = var.predict_rows(toy.test.x(), a).map_err(e)?;
    let s_frozen: Vec<f64> = q
        .iter()
        .zip(frozen.predict_increment_rows(toy.test.x()).map_err(e)?)
        .map(|(q, z)| q + z)
        .collect();
    let r_frozen = normalized_rmse(&s_frozen, &s_true).map_err(e)?;
    Ok(verdict(
        r_full < 0.15 && r_frozen <= 2.0 * r_full && t_frozen < 0.05 * t_full,
        format!(
            "FullNet nRMSE {r_full:.4} (< 0.15), FrozenLR {r_frozen:.4} (≤ 2×), time {t_frozen:.2} s vs {t_full:.1} s (< 5%)"
        ),
    ))
}

fn c9() -> CheckResult {
    let t0 = Instant::now();
    let spec = toy_spec(SEED, TOY_D).map_err(e)?;
    let a = 0.95;
    let mut points = Vec::new();
    let mut detail = Vec::new();
    for log_n in 12..=17 {
        let n = 1usize << log_n;
        let mut sum = 0.0;
        for run in 0..3u64 {
            let rs = run_seed(SEED, 100 + run);
            let train = spec.generate(n, rs, false);
            let test = toy_test_set(&spec, TEST_N, rs);
            let q_true: Vec<f64> = (0..test.len())
                .map(|i| spec.var_es(test.row(i), a).unwrap().0)
                .collect();
            let m =
                fit_var_single(&train, level(a), &toy_fit(rs, RATE_EPOCHS, n / 16)).map_err(e)?;
            sum += normalized_rmse(&m.predict_rows(test.x(), a).map_err(e)?, &q_true).map_err(e)?;
        }
        points.push((n as f64, sum / 3.0));
        detail.push(format!("2^{log_n}:{:.3}", sum / 3.0));
    }
    let (slope, _) = convergence_slope(&points).map_err(e)?;
    let secs = t0.elapsed().as_secs_f64();
    Ok(verdict(
        (-0.35..=-0.15).contains(&slope) && secs < 3600.0,
        format!(
            "slope {slope:.3} in [-0.35, -0.15]; mean nRMSE {}; {secs:.0} s",
            detail.join(" ")
        ),
    ))
}

/// Fixed epochs with batch n/16, so every sample size gets the same number of steps.
const RATE_EPOCHS: usize = 300;

fn c10() -> CheckResult {
    let t0 = Instant::now();
    // degenerate surrogate: the benchmark reproduces the deterministic increment
    let flat = Market::new(MarketConfig {
        sigma_r: 0.0,
        ..Default::default()
    })
    .map_err(e)?;
    let cfg = NestedMcConfig {
        n_inner: 64,
        iterations: 64,
        ..Default::default()
    };
    let mut worst_flat = 0f64;
    for k in [0, 10, 25] {
        let b = benchmark_im_nested(&flat, 16, SEED, &cfg, k).map_err(e)?;
        for (f, v) in b.features.chunks(STATE_DIM).zip(&b.im) {
            let s = State {
                r: f[0],
                r_fix: f[2],
            };
            let inc = flat.increment(k, s, flat.delta_steps(), &mut stream(0, Stream::Inner));
            // each SA step moves at most γ·1e-9·max(|mean|, 1)
            let scale = cfg.iterations as f64 * cfg.gamma * 1e-9 * inc.abs().max(1.0);
            worst_flat = worst_flat.max((v - inc).abs() / scale);
        }
    }

    // conditionally Gaussian linear portfolio: one unit of r_{t+δ} − r_t
    let market = Market::new(MarketConfig::default()).map_err(e)?;
    let (k, m) = (12, market.delta_steps());
    let paths = simulate_paths(&market, 512, SEED).map_err(e)?;
    let laws: Vec<(f64, f64)> = (0..paths.n_paths)
        .map(|p| {
            let r = paths.state(p, k)[0];
            let (mean, sd) = market.rate_transition(r, m);
            (mean - r, sd)
        })
        .collect();
    let sampler = |node: usize, rng: &mut Rng, out: &mut [f64]| {
        let (mu, sd) = laws[node];
        for v in out.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v = mu + sd * z;
        }
    };
    let alpha = 0.95;
    let nested = NestedMcConfig {
        n_inner: 1024,
        iterations: 256,
        alpha,
        seed: SEED,
        ..Default::default()
    };
    let v = nested_var_sa(&sampler, laws.len(), &nested).map_err(e)?;
    let sq: f64 = v
        .iter()
        .zip(&laws)
        .map(|(v, (mu, sd))| (norm_sf((v - mu) / sd) - (1.0 - alpha)).powi(2))
        .sum::<f64>()
        / v.len() as f64;
    let p_err = sq.sqrt();
    let secs = t0.elapsed().as_secs_f64();
    Ok(verdict(
        worst_flat <= 1.0 && p_err <= 0.5 * (1.0 - alpha) && secs < 600.0,
        format!(
            "σ_r=0 drift {worst_flat:.2} of γ-scale; linear p-value error {p_err:.4} (≤ {:.3}); {secs:.0} s",
            0.5 * (1.0 - alpha)
        ),
    ))
}

fn read_metrics(dir: &Path) -> Result<Vec<MetricsRecord>, String> {
    std::fs::read_to_string(dir.join("metrics.jsonl"))
        .map_err(e)?
        .lines()
        .map(|l| serde_json::from_str(l).map_err(e))
        .collect()
}

const DIM_CONFIG: &str = r#"
experiment = "dim"
seed = 2024
alphas = [0.9, 0.95]
methods = ["single"]

[train]
epochs = 64
batch_size = 1024
learning_rate = 0.001

[dim]
n_paths = 32768
n_outer = 256
eval_times = [2.5, 5.0, 7.5]
warm_start = true

[dim.nested]
n_inner = 512
iterations = 128
gamma = 0.1
"#;

fn c11() -> CheckResult {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().map_err(e)?;
    let text = format!(
        "output_dir = {:?}\n{DIM_CONFIG}",
        dir.path().display().to_string()
    );
    let cfg = ExperimentConfig::from_toml(&text)
        .map_err(e)?
        .resolve()
        .map_err(e)?;
    run_experiment(&cfg).map_err(e)?;
    let recs = read_metrics(dir.path())?;
    let mut ok = true;
    let mut parts = Vec::new();
    for a in [0.9, 0.95] {
        let worst = recs
            .iter()
            .filter(|r| r.alpha == a && r.t.is_some())
            .filter_map(|r| r.rmse_norm)
            .fold(f64::NAN, f64::max);
        let saw = recs
            .iter()
            .find(|r| r.alpha == a && r.t.is_none())
            .and_then(|r| r.extra.get("sawtooth_frac").copied())
            .unwrap_or(0.0);
        ok &= worst < 0.35 && saw >= 0.8;
        parts.push(format!(
            "α={a}: worst nRMSE {worst:.3} (< 0.35), sawtooth {saw:.2} (≥ 0.8)"
        ));
    }
    let secs = t0.elapsed().as_secs_f64();
    Ok(verdict(ok, format!("{}; {secs:.0} s", parts.join("; "))))
}

fn c12() -> CheckResult {
    let tiny = "sample_sizes = [512]\ntest_size = 256\nalphas = [0.9]\n[train]\nepochs = 3\nbatch_size = 128\n";
    let bodies = [
        format!("experiment = \"toy_var\"\nruns = 2\n{tiny}"),
        format!("experiment = \"toy_es\"\n{tiny}"),
        format!("experiment = \"toy_joint\"\n{tiny}"),
        format!("experiment = \"crossing\"\ncrossing_pairs = [[0.95, 0.9]]\n{tiny}"),
        "experiment = \"rate\"\nsample_sizes = [256, 512]\ntest_size = 256\nalphas = [0.9]\n[train]\nepochs = 3\nbatch_size = 128\n"
            .to_string(),
        "experiment = \"twin_validate\"\nsample_sizes = [2000]\nperturbed_alphas = [0.9]\n".to_string(),
        "experiment = \"elicit_check\"\nelicit_sample_size = 20000\n".to_string(),
        "experiment = \"dim\"\nalphas = [0.9]\n[train]\nepochs = 2\nbatch_size = 128\n[dim]\nn_paths = 256\n\
         n_outer = 8\neval_times = [2.5]\n[dim.nested]\nn_inner = 32\niterations = 8\n"
            .to_string(),
    ];
    let mut differing = Vec::new();
    for body in &bodies {
        let mut outputs = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::tempdir().map_err(e)?;
            let text = format!(
                "output_dir = {:?}\nseed = 9\n{body}",
                dir.path().display().to_string()
            );
            let cfg = ExperimentConfig::from_toml(&text)
                .map_err(e)?
                .resolve()
                .map_err(e)?;
            run_experiment(&cfg).map_err(e)?;
            outputs.push(std::fs::read(dir.path().join("metrics.jsonl")).map_err(e)?);
        }
        if outputs[0] != outputs[1] || outputs[0].is_empty() {
            differing.push(body.lines().next().unwrap_or_default().to_string());
        }
    }
    Ok(verdict(
        differing.is_empty(),
        format!(
            "{} experiments rerun, differing: {differing:?}",
            bodies.len()
        ),
    ))
}

fn main() {
    let wanted: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let selected = |id: &str| {
        wanted.is_empty()
            || wanted
                .iter()
                .any(|w| id == w || id.trim_end_matches(char::is_alphabetic) == w)
    };
    let mut toy: Option<Toy> = None;
    let mut results: Vec<(String, bool)> = Vec::new();
    let criteria: [(&str, &str); 13] = [
        ("1", "elicitability suite"),
        ("2", "closed-form oracle self-consistency"),
        ("3", "gradient suite"),
        ("4a", "single-α unconditional quantile"),
        ("4b", "single-α toy VaR"),
        ("5", "multi-α extreme-tail ordering"),
        ("6", "crossing suite"),
        ("7", "twin simulation zero at truth"),
        ("8", "two-step ES"),
        ("9", "convergence rate"),
        ("10", "nested benchmark"),
        ("11", "DIM pipeline"),
        ("12", "determinism"),
    ];
    for (id, name) in criteria {
        if !selected(id) {
            continue;
        }
        let t0 = Instant::now();
        let res = match id {
            "1" => c1(),
            "2" => c2(),
            "3" => c3(),
            "4a" => c4a(),
            "4b" => c4b(toy.get_or_insert_with(Toy::new)),
            "5" => c5(toy.get_or_insert_with(Toy::new)),
            "6" => c6(toy.get_or_insert_with(Toy::new)),
            "7" => c7(),
            "8" => c8(toy.get_or_insert_with(Toy::new)),
            "9" => c9(),
            "10" => c10(),
            "11" => c11(),
            "12" => c12(),
            _ => unreachable!(),
        };
        let (pass, detail) = match res {
            Ok(v) => (v.pass, v.detail),
            Err(msg) => (false, format!("error: {msg}")),
        };
        println!(
            "{} [{id:>3}] {name}: {detail} [{:.0} s]",
            if pass { "PASS" } else { "FAIL" },
            t0.elapsed().as_secs_f64()
        );
        results.push((id.to_string(), pass));
    }
    let failed: Vec<&str> = results
        .iter()
        .filter(|r| !r.1)
        .map(|r| r.0.as_str())
        .collect();
    println!(
        "acceptance: {}/{} passed{}",
        results.len() - failed.len(),
        results.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!(", failed {failed:?}")
        }
    );
    if !failed.is_empty() && std::env::var_os("RISKQUANT_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
