use riskquant::dim::*;
use riskquant::losses::AlphaLevel;
use riskquant::optim::TrainConfig;
use riskquant::trainers::{mean_pinball, FitConfig};
use riskquant::validation::{normalized_rmse, NestedMcConfig};

fn market(sigma_r: f64, n_swaps: usize) -> Market {
    Market::new(MarketConfig {
        sigma_r,
        n_swaps,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn short_rate_mean_matches_vasicek() {
    let m = market(0.02, 0);
    let paths = simulate_paths(&m, 20_000, 1).unwrap();
    let cfg = &m.cfg;
    for k in [4, 20, 40] {
        let t = m.time(k);
        let rs: Vec<f64> = (0..paths.n_paths).map(|p| paths.state(p, k)[0]).collect();
        let n = rs.len() as f64;
        let mean = rs.iter().sum::<f64>() / n;
        let sd = (rs.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let e = (-cfg.kappa * t).exp();
        let expect = cfg.r0 * e + cfg.theta * (1.0 - e);
        assert!(
            (mean - expect).abs() < 4.0 * sd / n.sqrt(),
            "k={k}: {mean} vs {expect}"
        );
    }
}

#[test]
fn deterministic_market_gives_deterministic_labels() {
    let m = market(0.0, 20);
    let paths = simulate_paths(&m, 16, 3).unwrap();
    let labels = im_labels(&paths, m.delta_steps()).unwrap();
    for step in &labels.steps {
        let y = step.data.y();
        assert!(y.iter().all(|&v| v == y[0]));
        let st = step.data.row(0);
        let exact = m
            .exact_one_step_im(
                step.k,
                State {
                    r: st[0],
                    r_fix: st[2],
                },
                0.95,
            )
            .unwrap()
            .unwrap();
        assert!((exact - y[0]).abs() < 1e-12);
    }
}

#[test]
fn zero_swap_portfolio_has_zero_labels() {
    let m = market(0.02, 0);
    let paths = simulate_paths(&m, 32, 3).unwrap();
    let labels = im_labels(&paths, 1).unwrap();
    assert!(labels
        .steps
        .iter()
        .all(|s| s.data.y().iter().all(|&v| v == 0.0)));
}

#[test]
fn labels_match_path_differences() {
    let m = market(0.02, 20);
    let paths = simulate_paths(&m, 10, 4).unwrap();
    let labels = im_labels(&paths, 2).unwrap();
    assert_eq!(labels.steps.len(), 39);
    for s in &labels.steps {
        for p in 0..10 {
            assert_eq!(s.data.y()[p], paths.mtm(p, s.k + 2) - paths.mtm(p, s.k));
            assert_eq!(s.data.row(p), paths.state(p, s.k));
        }
    }
    assert!(im_labels(&paths, 41).is_err());
    assert!(im_labels(&paths, 0).is_err());
}

#[test]
fn paths_are_reproducible_per_index() {
    let m = market(0.02, 20);
    let a = simulate_paths(&m, 8, 9).unwrap();
    let b = simulate_paths(&m, 3, 9).unwrap();
    for p in 0..3 {
        for k in 0..a.n_times() {
            assert_eq!(a.state(p, k), b.state(p, k));
            assert_eq!(a.mtm(p, k), b.mtm(p, k));
        }
    }
}

#[test]
fn binary_export_round_trips() {
    let m = market(0.02, 5);
    let paths = simulate_paths(&m, 4, 2).unwrap();
    let mut buf = Vec::new();
    paths.write_binary(&mut buf).unwrap();
    assert_eq!(buf.len(), 8 + 24 + 8 * (41 + 4 * 41 * 3 + 4 * 41));
    assert_eq!(PathSet::read_binary(&buf[..]).unwrap(), paths);
    let mut csv = Vec::new();
    paths.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1 + 4 * 41);
}

#[test]
fn nested_benchmark_is_exact_without_noise() {
    let m = market(0.0, 20);
    let cfg = NestedMcConfig {
        n_inner: 16,
        iterations: 8,
        ..Default::default()
    };
    for k in [0, 7, 21] {
        let b = benchmark_im_nested(&m, 4, 1, &cfg, k).unwrap();
        for (f, v) in b.features.chunks(STATE_DIM).zip(&b.im) {
            let exact = m
                .exact_one_step_im(
                    k,
                    State {
                        r: f[0],
                        r_fix: f[2],
                    },
                    0.95,
                )
                .unwrap()
                .unwrap();
            assert!((v - exact).abs() <= 1e-9 * exact.abs().max(1.0));
        }
    }
}

#[test]
fn nested_benchmark_tracks_exact_one_step_im() {
    let m = market(0.02, 20);
    let cfg = NestedMcConfig {
        n_inner: 512,
        iterations: 128,
        gamma: 0.1,
        ..Default::default()
    };
    let b = benchmark_im_nested(&m, 64, 5, &cfg, 12).unwrap();
    let exact: Vec<f64> = b
        .features
        .chunks(STATE_DIM)
        .map(|f| {
            m.exact_one_step_im(
                12,
                State {
                    r: f[0],
                    r_fix: f[2],
                },
                0.95,
            )
            .unwrap()
            .unwrap()
        })
        .collect();
    assert!(normalized_rmse(&b.im, &exact).unwrap() < 0.25);
}

#[test]
fn single_step_learning_equals_direct_fit() {
    let m = market(0.02, 20);
    let paths = simulate_paths(&m, 512, 6).unwrap();
    let mut labels = im_labels(&paths, 1).unwrap();
    labels.steps.retain(|s| s.k == 10);
    let cfg = FitConfig {
        train: TrainConfig {
            epochs: 3,
            batch_size: 128,
            ..Default::default()
        },
        ..Default::default()
    };
    let got = learn_im_backward(&labels, &ImMethod::Single { alpha: 0.95 }, &cfg, true).unwrap();
    let mut c = cfg.clone();
    c.train.seed = riskquant::rng::splitmix64(cfg.train.seed ^ 10);
    let direct = riskquant::trainers::fit_var_single(
        &labels.steps[0].data,
        AlphaLevel::new(0.95).unwrap(),
        &c,
    )
    .unwrap();
    assert_eq!(got.len(), 1);
    assert_eq!(got[0].model, direct);
    let _ = mean_pinball(
        &direct,
        &labels.steps[0].data,
        AlphaLevel::new(0.95).unwrap(),
    )
    .unwrap();
}

#[test]
fn sawtooth_counts_drops_after_coupon_windows() {
    let m = market(0.02, 20);
    let ks = m.coupon_window_steps();
    let mut means: Vec<f64> = (0..40).map(|k| 1.0 + k as f64).collect();
    for &k in &ks {
        means[k + 1] = means[k] - 0.5;
    }
    assert_eq!(sawtooth_count(&m, &means), (ks.len(), ks.len()));
    let rising: Vec<f64> = (0..40).map(|k| k as f64).collect();
    assert_eq!(sawtooth_count(&m, &rising).0, 0);
}

fn dim_cfg(epochs: usize, batch: usize, lr: f64) -> FitConfig {
    FitConfig {
        train: TrainConfig {
            epochs,
            batch_size: batch,
            learning_rate: lr,
            seed: 5,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn warm_start_beats_cold_start_at_equal_budget() {
    let m = market(0.02, 20);
    let paths = simulate_paths(&m, 4096, 8).unwrap();
    let labels = im_labels(&paths, m.delta_steps()).unwrap();
    let method = ImMethod::Single { alpha: 0.95 };
    let cfg = dim_cfg(16, 512, 0.01);
    let warm = learn_im_backward(&labels, &method, &cfg, true).unwrap();
    let cold = learn_im_backward(&labels, &method, &cfg, false).unwrap();
    let a = AlphaLevel::new(0.95).unwrap();
    let mut wins = 0;
    for ((step, w), c) in labels.steps.iter().zip(&warm).zip(&cold) {
        let lw = mean_pinball(&w.model, &step.data, a).unwrap();
        let lc = mean_pinball(&c.model, &step.data, a).unwrap();
        wins += usize::from(lw <= lc);
    }
    let frac = wins as f64 / labels.steps.len() as f64;
    assert!(frac >= 0.7, "warm start won {wins}/{}", labels.steps.len());
}

#[test]
fn flat_market_learns_the_deterministic_increment() {
    let m = market(0.0, 20);
    let paths = simulate_paths(&m, 256, 2).unwrap();
    let labels = im_labels(&paths, m.delta_steps()).unwrap();
    let fitted = learn_im_backward(
        &labels,
        &ImMethod::Single { alpha: 0.9 },
        &dim_cfg(300, 64, 1e-3),
        true,
    )
    .unwrap();
    for (step, f) in labels.steps.iter().zip(&fitted) {
        let pred = f.model.predict_rows(step.data.x(), 0.9).unwrap();
        let y = step.data.y()[0];
        let err = pred.iter().map(|p| (p - y).abs()).fold(0.0, f64::max);
        assert!(err < 1e-2, "k={}: {err}", step.k);
    }
}
