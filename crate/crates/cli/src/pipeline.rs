//! Seeded experiment pipelines.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::time::Instant;

use riskquant::data::Dataset;
use riskquant::dim::{
    benchmark_im_nested, im_labels, learn_im_backward, sawtooth_count, simulate_paths, ImMethod,
    Market, State,
};
use riskquant::losses::{AlphaLevel, JointLossSpec, TruncationBound};
use riskquant::oracles::suite::elicitation_suite;
use riskquant::oracles::GaussianToySpec;
use riskquant::rng::{derive_seed, indexed, run_seed, Stream};
use riskquant::trainers::{
    fit_es_two_step, fit_joint, fit_var_multi_continuum, fit_var_multi_interp, fit_var_single,
    EsMethod, EsModel, FitConfig, VarCandidate, VarModel,
};
use riskquant::validation::{
    convergence_slope, es_error_proxy, normalized_rmse, pvalue_error_estimate, wasserstein_1d,
    MetricsRecord, NestedMcConfig,
};
use serde::Serialize;

use crate::config::{EsCandidate, ExperimentConfig, ExperimentKind, Method};
use crate::output::{mean_std, Artifacts};

/// Rows written per density-pair plot file.
const DENSITY_ROWS: usize = 5000;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("stage {stage}: {source}")]
    Compute {
        stage: String,
        source: riskquant::Error,
    },
    #[error("stage {stage}: {source}")]
    Io {
        stage: String,
        source: std::io::Error,
    },
}

impl RunError {
    pub fn stage(&self) -> &str {
        match self {
            RunError::Compute { stage, .. } | RunError::Io { stage, .. } => stage,
        }
    }
}

trait Stage<T> {
    fn stage(self, name: &str) -> Result<T, RunError>;
}

impl<T> Stage<T> for riskquant::Result<T> {
    fn stage(self, name: &str) -> Result<T, RunError> {
        self.map_err(|source| RunError::Compute {
            stage: name.into(),
            source,
        })
    }
}

impl<T> Stage<T> for std::io::Result<T> {
    fn stage(self, name: &str) -> Result<T, RunError> {
        self.map_err(|source| RunError::Io {
            stage: name.into(),
            source,
        })
    }
}

/// What a finished run reports back to the caller.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub records: usize,
    /// Failed elicitation checks (`elicit_check` only).
    pub failed_checks: Vec<String>,
}

/// Runs a resolved config and writes every artifact under its `output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let mut art = Artifacts::create(&cfg.output_dir).stage("output")?;
    art.write_text("config.resolved.toml", &cfg.to_toml())
        .stage("output")?;
    let mut outcome = Outcome::default();
    match cfg.experiment {
        ExperimentKind::ToyVar | ExperimentKind::Crossing | ExperimentKind::Rate => {
            toy_var(cfg, &mut art)?
        }
        ExperimentKind::ToyEs | ExperimentKind::ToyJoint => toy_es(cfg, &mut art)?,
        ExperimentKind::TwinValidate => twin_validate(cfg, &mut art)?,
        ExperimentKind::ElicitCheck => outcome.failed_checks = elicit_check(cfg, &mut art)?,
        ExperimentKind::Dim => dim(cfg, &mut art)?,
    }
    if cfg.experiment == ExperimentKind::Rate {
        rate_plot(&art)?;
    }
    art.finish().stage("output")?;
    outcome.records = art.metrics().len();
    Ok(outcome)
}

/// Toy coefficients depend on the master seed and `d` only, so every run and
/// sample size sees the same conditional law.
pub fn toy_spec(seed: u64, d: usize) -> riskquant::Result<GaussianToySpec> {
    GaussianToySpec::sample(d, &mut indexed(seed, Stream::Spec, d as u64))
}

/// Held-out rows for run seed `rs`; disjoint from the training stream.
pub fn toy_test_set(spec: &GaussianToySpec, n: usize, rs: u64) -> Dataset {
    spec.generate(n, derive_seed(rs, Stream::Test), true)
}

fn level(a: f64) -> Result<AlphaLevel, RunError> {
    AlphaLevel::new(a).stage("config")
}

fn truth(
    spec: &GaussianToySpec,
    xs: &Dataset,
    alpha: f64,
) -> Result<(Vec<f64>, Vec<f64>), RunError> {
    let mut q = Vec::with_capacity(xs.len());
    let mut s = Vec::with_capacity(xs.len());
    for i in 0..xs.len() {
        let (v, e) = spec.var_es(xs.row(i), alpha).stage("oracle")?;
        q.push(v);
        s.push(e);
    }
    Ok((q, s))
}

fn tag(a: f64) -> String {
    format!("a{a}")
}

/// Fitted VaR models of one method: one per level for `single`, one shared otherwise.
fn fit_var_method(
    cfg: &ExperimentConfig,
    method: Method,
    train: &Dataset,
    fit: &FitConfig,
) -> Result<Vec<(String, VarModel)>, RunError> {
    let stage = method.name();
    let [lo, hi] = cfg.alpha_range;
    Ok(match method {
        Method::Single => {
            let mut out = Vec::new();
            for &a in &cfg.alphas {
                let m = fit_var_single(train, level(a)?, fit).stage(stage)?;
                out.push((format!("single_{}", tag(a)), m));
            }
            out
        }
        Method::Multi1 => vec![(
            "multi1".into(),
            fit_var_multi_continuum(train, (lo, hi), cfg.lambda, fit).stage(stage)?,
        )],
        Method::Multi2 => vec![(
            "multi2".into(),
            fit_var_multi_continuum(train, (lo, hi), 0.0, fit).stage(stage)?,
        )],
        Method::Multi3 => {
            let grid = cfg.grid.build().stage("config")?;
            vec![(
                "multi3".into(),
                fit_var_multi_interp(train, &grid, fit).stage(stage)?,
            )]
        }
        other => {
            return Err(RunError::Compute {
                stage: "config".into(),
                source: riskquant::Error::Usage(format!("{} is not a VaR method", other.name())),
            })
        }
    })
}

fn covering(models: &[(String, VarModel)], alpha: f64) -> &VarModel {
    &models
        .iter()
        .find(|(_, m)| m.covers(alpha))
        .expect("every configured level has a model")
        .1
}

fn density_rows(truth: &[f64], pred: &[f64]) -> Vec<Vec<String>> {
    truth
        .iter()
        .zip(pred)
        .take(DENSITY_ROWS)
        .map(|(t, p)| vec![t.to_string(), p.to_string()])
        .collect()
}

fn toy_var(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<(), RunError> {
    let exp = cfg.experiment.name();
    for run in 0..cfg.runs {
        let rs = run_seed(cfg.seed, run as u64);
        let fit = cfg.fit_config(rs);
        for &d in &cfg.dims {
            let spec = toy_spec(cfg.seed, d).stage("data")?;
            let test = toy_test_set(&spec, cfg.test_size, rs);
            let truths: Vec<Vec<f64>> = cfg
                .alphas
                .iter()
                .map(|&a| truth(&spec, &test, a).map(|t| t.0))
                .collect::<Result<_, _>>()?;
            for &n in &cfg.sample_sizes {
                let train = spec.generate(n, rs, false);
                for &method in &cfg.methods {
                    let t0 = Instant::now();
                    let models = fit_var_method(cfg, method, &train, &fit)?;
                    art.time(method.name(), method.name(), f64::NAN, run, t0.elapsed());
                    for (name, m) in &models {
                        art.save_model(run, &format!("{exp}_{name}_d{d}_n{n}"), "var", m)
                            .stage("output")?;
                    }
                    let mut preds: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
                    for (ai, &a) in cfg.alphas.iter().enumerate() {
                        let q = covering(&models, a)
                            .predict_rows(test.x(), a)
                            .stage("evaluate")?;
                        let mut rec = MetricsRecord::new(exp, method.name(), a, n, rs, run);
                        rec.d = Some(d);
                        rec.rmse_norm = Some(normalized_rmse(&q, &truths[ai]).stage("evaluate")?);
                        let p = pvalue_error_estimate(&q, &test, level(a)?).stage("evaluate")?;
                        rec.pvalue_err = Some(p.point);
                        rec.pvalue_err_ci_hi = Some(p.ci_hi);
                        rec.wasserstein = Some(wasserstein_1d(&q, &truths[ai]).stage("evaluate")?);
                        if run == 0 && cfg.experiment == ExperimentKind::ToyVar {
                            art.plot_csv(
                                &format!("density_{}_{}_d{d}_n{n}", method.name(), tag(a)),
                                &["truth", "pred"],
                                &density_rows(&truths[ai], &q),
                            )
                            .stage("output")?;
                        }
                        preds.insert(a.to_bits(), q);
                        art.push(rec);
                    }
                    if cfg.experiment == ExperimentKind::Crossing {
                        attach_crossing(cfg, art, &preds);
                    }
                }
            }
        }
    }
    Ok(())
}

/// Adds `crossing["hi/lo"]` to the just-pushed record at level `hi` of each pair.
fn attach_crossing(cfg: &ExperimentConfig, art: &mut Artifacts, preds: &BTreeMap<u64, Vec<f64>>) {
    let n_alpha = cfg.alphas.len();
    let mut rates = Vec::new();
    for &[hi, lo] in &cfg.crossing_pairs {
        let (qh, ql) = (&preds[&hi.to_bits()], &preds[&lo.to_bits()]);
        rates.push((
            hi,
            format!("{hi}/{lo}"),
            riskquant::validation::crossing_rate_values(qh, ql),
        ));
    }
    let recs = art.recent_mut(n_alpha);
    for (hi, key, rate) in rates {
        if let Some(r) = recs.iter_mut().find(|r| r.alpha == hi) {
            r.crossing.insert(key, rate);
        }
    }
}

fn rate_plot(art: &Artifacts) -> Result<(), RunError> {
    let mut by: BTreeMap<(String, String, usize, usize), Vec<f64>> = BTreeMap::new();
    for r in art.metrics() {
        if let Some(v) = r.rmse_norm {
            by.entry((r.method.clone(), r.alpha.to_string(), r.d.unwrap_or(0), r.n))
                .or_default()
                .push(v);
        }
    }
    let mut points = Vec::new();
    let mut curves: BTreeMap<(String, String, usize), Vec<(f64, f64)>> = BTreeMap::new();
    for ((method, alpha, d, n), v) in &by {
        let (mean, std) = mean_std(v);
        points.push(vec![
            method.clone(),
            alpha.clone(),
            d.to_string(),
            n.to_string(),
            mean.to_string(),
            std.to_string(),
        ]);
        curves
            .entry((method.clone(), alpha.clone(), *d))
            .or_default()
            .push((*n as f64, mean));
    }
    art.plot_csv(
        "rate_points",
        &["method", "alpha", "d", "n", "rmse_mean", "rmse_std"],
        &points,
    )
    .stage("output")?;
    let mut fits = Vec::new();
    for ((method, alpha, d), pts) in &curves {
        let (slope, intercept) = convergence_slope(pts).stage("rate")?;
        fits.push(vec![
            method.clone(),
            alpha.clone(),
            d.to_string(),
            slope.to_string(),
            intercept.to_string(),
        ]);
    }
    art.plot_csv(
        "rate_fit",
        &["method", "alpha", "d", "slope", "intercept"],
        &fits,
    )
    .stage("output")
}

fn toy_es(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<(), RunError> {
    let exp = cfg.experiment.name();
    let trunc = TruncationBound::new(cfg.trunc).stage("config")?;
    let exact_candidate =
        cfg.experiment == ExperimentKind::ToyEs && cfg.es_candidate == EsCandidate::Exact;
    for run in 0..cfg.runs {
        let rs = run_seed(cfg.seed, run as u64);
        let fit = cfg.fit_config(rs);
        for &d in &cfg.dims {
            let spec = toy_spec(cfg.seed, d).stage("data")?;
            let test = toy_test_set(&spec, cfg.test_size, rs);
            for &n in &cfg.sample_sizes {
                let train = spec.generate(n, rs, false);
                for &a in &cfg.alphas {
                    let al = level(a)?;
                    let (q_true, s_true) = truth(&spec, &test, a)?;
                    let needs_var = cfg.methods.contains(&Method::EsFrozenlr)
                        || (cfg.methods.contains(&Method::EsFullnet) && !exact_candidate);
                    let var = if needs_var {
                        let t0 = Instant::now();
                        let m = fit_var_single(&train, al, &fit).stage("var")?;
                        art.time("var", "single", a, run, t0.elapsed());
                        art.save_model(run, &format!("{exp}_var_{}_d{d}_n{n}", tag(a)), "var", &m)
                            .stage("output")?;
                        Some(m)
                    } else {
                        None
                    };
                    let q_learned = match &var {
                        Some(m) => Some(m.predict_rows(test.x(), a).stage("evaluate")?),
                        None => None,
                    };
                    let exact_q = |x: &[f64]| spec.var_es(x, a).map(|v| v.0).unwrap_or(f64::NAN);
                    for &method in &cfg.methods {
                        let stage = method.name();
                        let t0 = Instant::now();
                        let (es, q_test): (EsModel, Vec<f64>) = match method {
                            Method::EsFullnet | Method::EsFrozenlr => {
                                let es_method = if method == Method::EsFullnet {
                                    EsMethod::FullNet
                                } else {
                                    EsMethod::FrozenLr
                                };
                                let use_exact = method == Method::EsFullnet && exact_candidate;
                                let cand = if use_exact {
                                    VarCandidate::Exact(&exact_q)
                                } else {
                                    VarCandidate::Model(var.as_ref().expect("VaR fitted above"))
                                };
                                let es = fit_es_two_step(&train, cand, al, es_method, trunc, &fit)
                                    .stage(stage)?;
                                let q = if use_exact {
                                    q_true.clone()
                                } else {
                                    q_learned.clone().expect("VaR fitted above")
                                };
                                (es, q)
                            }
                            Method::Joint => {
                                let (v, es) = fit_joint(&train, al, JointLossSpec::ExpNeg, &fit)
                                    .stage(stage)?;
                                (es, v.predict_rows(test.x(), a).stage("evaluate")?)
                            }
                            other => {
                                return Err(RunError::Compute {
                                    stage: "config".into(),
                                    source: riskquant::Error::Usage(format!(
                                        "{} is not an ES method",
                                        other.name()
                                    )),
                                })
                            }
                        };
                        art.time(stage, stage, a, run, t0.elapsed());
                        art.save_model(
                            run,
                            &format!("{exp}_{stage}_{}_d{d}_n{n}", tag(a)),
                            "es",
                            &es,
                        )
                        .stage("output")?;
                        let inc = es.predict_increment_rows(test.x()).stage("evaluate")?;
                        let s: Vec<f64> = q_test.iter().zip(&inc).map(|(q, z)| q + z).collect();
                        let mut rec = MetricsRecord::new(exp, stage, a, n, rs, run);
                        rec.d = Some(d);
                        rec.rmse_norm = Some(normalized_rmse(&s, &s_true).stage("evaluate")?);
                        rec.es_proxy = Some(
                            es_error_proxy(&q_test, &s, &test, al)
                                .stage("evaluate")?
                                .point,
                        );
                        rec.wasserstein = Some(wasserstein_1d(&s, &s_true).stage("evaluate")?);
                        if q_test != q_true {
                            rec.extra.insert(
                                "var_rmse_norm".into(),
                                normalized_rmse(&q_test, &q_true).stage("evaluate")?,
                            );
                            let p = pvalue_error_estimate(&q_test, &test, al).stage("evaluate")?;
                            rec.pvalue_err = Some(p.point);
                            rec.pvalue_err_ci_hi = Some(p.ci_hi);
                        }
                        if run == 0 {
                            art.plot_csv(
                                &format!("density_es_{stage}_{}_d{d}_n{n}", tag(a)),
                                &["truth", "pred"],
                                &density_rows(&s_true, &s),
                            )
                            .stage("output")?;
                        }
                        art.push(rec);
                    }
                }
            }
        }
    }
    Ok(())
}

fn twin_validate(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<(), RunError> {
    let exp = cfg.experiment.name();
    for run in 0..cfg.runs {
        let rs = run_seed(cfg.seed, run as u64);
        for &d in &cfg.dims {
            let spec = toy_spec(cfg.seed, d).stage("data")?;
            for &n in &cfg.sample_sizes {
                let twins = toy_test_set(&spec, n, rs);
                for &a in &cfg.alphas {
                    let al = level(a)?;
                    let (q, s) = truth(&spec, &twins, a)?;
                    let p = pvalue_error_estimate(&q, &twins, al).stage("twin")?;
                    let e = es_error_proxy(&q, &s, &twins, al).stage("twin")?;
                    let mut rec = MetricsRecord::new(exp, "exact", a, n, rs, run);
                    rec.d = Some(d);
                    rec.pvalue_err = Some(p.point);
                    rec.pvalue_err_ci_hi = Some(p.ci_hi);
                    rec.es_proxy = Some(e.point);
                    rec.extra.insert("es_proxy_ci_hi".into(), e.ci_hi);
                    rec.extra.insert(
                        "pvalue_zero_covered".into(),
                        f64::from(u8::from(p.covers(0.0))),
                    );
                    rec.extra
                        .insert("es_zero_covered".into(), f64::from(u8::from(e.covers(0.0))));
                    art.push(rec);
                    for &b in &cfg.perturbed_alphas {
                        let (qb, _) = truth(&spec, &twins, b)?;
                        let p = pvalue_error_estimate(&qb, &twins, al).stage("twin")?;
                        let analytic = (a - b).abs();
                        let mut rec =
                            MetricsRecord::new(exp, &format!("perturbed_{b}"), a, n, rs, run);
                        rec.d = Some(d);
                        rec.pvalue_err = Some(p.point);
                        rec.pvalue_err_ci_hi = Some(p.ci_hi);
                        rec.extra.insert("pvalue_ci_lo".into(), p.ci_lo);
                        rec.extra.insert("analytic_distance".into(), analytic);
                        rec.extra.insert(
                            "analytic_covered".into(),
                            f64::from(u8::from(p.covers(analytic))),
                        );
                        art.push(rec);
                    }
                }
            }
        }
    }
    Ok(())
}

fn elicit_check(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Vec<String>, RunError> {
    let exp = cfg.experiment.name();
    let mut failed = Vec::new();
    for run in 0..cfg.runs {
        let rs = run_seed(cfg.seed, run as u64);
        let t0 = Instant::now();
        let checks = elicitation_suite(cfg.elicit_sample_size, rs).stage("elicit_check")?;
        art.time("elicit_check", "suite", f64::NAN, run, t0.elapsed());
        for c in checks {
            let mut rec = MetricsRecord::new(exp, &c.name, 0.0, cfg.elicit_sample_size, rs, run);
            rec.extra.insert("got".into(), c.got);
            rec.extra.insert("expected".into(), c.expected);
            rec.extra.insert("tolerance".into(), c.tolerance);
            rec.extra
                .insert("passed".into(), f64::from(u8::from(c.passed)));
            if !c.passed {
                failed.push(format!("run {run}: {}", c.name));
            }
            art.push(rec);
        }
    }
    Ok(failed)
}

#[derive(Serialize)]
struct StepModel<'a> {
    k: usize,
    t: f64,
    model: &'a VarModel,
}

fn im_method(cfg: &ExperimentConfig, method: Method, alpha: f64) -> Result<ImMethod, RunError> {
    let [lo, hi] = cfg.alpha_range;
    Ok(match method {
        Method::Single => ImMethod::Single { alpha },
        Method::Multi1 => ImMethod::Continuum {
            alpha_low: lo,
            alpha_high: hi,
            lambda: cfg.lambda,
        },
        Method::Multi2 => ImMethod::Continuum {
            alpha_low: lo,
            alpha_high: hi,
            lambda: 0.0,
        },
        Method::Multi3 => ImMethod::Interp {
            grid: cfg.grid.build().stage("config")?,
        },
        other => {
            return Err(RunError::Compute {
                stage: "config".into(),
                source: riskquant::Error::Usage(format!("{} is not an IM method", other.name())),
            })
        }
    })
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    sorted[((sorted.len() - 1) as f64 * p).round() as usize]
}

fn dim(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<(), RunError> {
    let exp = cfg.experiment.name();
    let dc = &cfg.dim;
    let market = Market::new(dc.market.clone()).stage("market")?;
    let dt = market.cfg.dt();
    let eval_steps: Vec<usize> = dc
        .eval_times
        .iter()
        .map(|t| (t / dt).round() as usize)
        .collect();
    for run in 0..cfg.runs {
        let rs = run_seed(cfg.seed, run as u64);
        let fit = cfg.fit_config(rs);
        let t0 = Instant::now();
        let paths = simulate_paths(&market, dc.n_paths, rs).stage("simulate")?;
        art.time("simulate", "", f64::NAN, run, t0.elapsed());
        if dc.export_paths {
            let bin =
                File::create(art.root().join(format!("paths_run{run}.bin"))).stage("output")?;
            paths.write_binary(BufWriter::new(bin)).stage("output")?;
            let csv =
                File::create(art.root().join(format!("paths_run{run}.csv"))).stage("output")?;
            paths.write_csv(BufWriter::new(csv)).stage("output")?;
        }
        let labels = im_labels(&paths, market.delta_steps()).stage("labels")?;

        // benchmarks are shared by all methods of a run
        let mut benches = BTreeMap::new();
        for &a in &cfg.alphas {
            for &k in &eval_steps {
                let nested = NestedMcConfig {
                    alpha: a,
                    seed: derive_seed(rs, Stream::Inner),
                    ..dc.nested.clone()
                };
                let t0 = Instant::now();
                let b = benchmark_im_nested(
                    &market,
                    dc.n_outer,
                    derive_seed(rs, Stream::Test),
                    &nested,
                    k,
                )
                .stage("benchmark")?;
                art.time("benchmark", "", a, run, t0.elapsed());
                let mut exact = Vec::with_capacity(b.im.len());
                for f in b.features.chunks(riskquant::dim::STATE_DIM) {
                    match market
                        .exact_one_step_im(
                            k,
                            State {
                                r: f[0],
                                r_fix: f[2],
                            },
                            a,
                        )
                        .stage("benchmark")?
                    {
                        Some(v) => exact.push(v),
                        None => break,
                    }
                }
                let exact = (exact.len() == b.im.len()).then_some(exact);
                benches.insert((a.to_bits(), k), (b, exact));
            }
        }

        let mut jobs: Vec<(Method, Vec<f64>)> = Vec::new();
        for &m in &cfg.methods {
            if m == Method::Single {
                jobs.extend(cfg.alphas.iter().map(|&a| (m, vec![a])));
            } else {
                jobs.push((m, cfg.alphas.clone()));
            }
        }
        for (method, alphas) in jobs {
            let name = match method {
                Method::Single => format!("single_{}", tag(alphas[0])),
                m => m.name().to_string(),
            };
            let t0 = Instant::now();
            let models = learn_im_backward(
                &labels,
                &im_method(cfg, method, alphas[0])?,
                &fit,
                dc.warm_start,
            )
            .stage(method.name())?;
            art.time(method.name(), method.name(), alphas[0], run, t0.elapsed());
            let steps: Vec<StepModel> = labels
                .steps
                .iter()
                .zip(&models)
                .map(|(s, f)| StepModel {
                    k: s.k,
                    t: market.time(s.k),
                    model: &f.model,
                })
                .collect();
            art.save_model(run, &format!("{exp}_{name}"), "var_steps", &steps)
                .stage("output")?;
            for &a in &alphas {
                let mut profile = Vec::new();
                let mut means = Vec::new();
                for (s, f) in labels.steps.iter().zip(&models) {
                    let mut v = f.model.predict_rows(s.data.x(), a).stage("evaluate")?;
                    let mean = v.iter().sum::<f64>() / v.len() as f64;
                    v.sort_by(f64::total_cmp);
                    means.push(mean);
                    profile.push(vec![
                        s.k.to_string(),
                        market.time(s.k).to_string(),
                        mean.to_string(),
                        percentile(&v, 0.05).to_string(),
                        percentile(&v, 0.5).to_string(),
                        percentile(&v, 0.95).to_string(),
                    ]);
                }
                art.plot_csv(
                    &format!("im_profile_{}_{}_run{run}", method.name(), tag(a)),
                    &["k", "t", "mean", "p05", "p50", "p95"],
                    &profile,
                )
                .stage("output")?;
                let (drops, total) = sawtooth_count(&market, &means);
                let mut rec = MetricsRecord::new(exp, method.name(), a, dc.n_paths, rs, run);
                rec.extra.insert("sawtooth_drops".into(), drops as f64);
                rec.extra.insert("sawtooth_total".into(), total as f64);
                if total > 0 {
                    rec.extra
                        .insert("sawtooth_frac".into(), drops as f64 / total as f64);
                }
                art.push(rec);
                for (&k, &t) in eval_steps.iter().zip(&dc.eval_times) {
                    let (b, exact) = &benches[&(a.to_bits(), k)];
                    let idx = labels
                        .steps
                        .iter()
                        .position(|s| s.k == k)
                        .expect("eval steps are validated against the grid");
                    let learned = models[idx]
                        .model
                        .predict_rows(&b.features, a)
                        .stage("evaluate")?;
                    let mut rec = MetricsRecord::new(exp, method.name(), a, dc.n_paths, rs, run);
                    rec.t = Some(t);
                    rec.rmse_norm = Some(normalized_rmse(&learned, &b.im).stage("evaluate")?);
                    rec.wasserstein = Some(wasserstein_1d(&learned, &b.im).stage("evaluate")?);
                    if let Some(exact) = exact {
                        rec.extra.insert(
                            "rmse_norm_exact".into(),
                            normalized_rmse(&learned, exact).stage("evaluate")?,
                        );
                        rec.extra.insert(
                            "benchmark_rmse_norm_exact".into(),
                            normalized_rmse(&b.im, exact).stage("evaluate")?,
                        );
                    }
                    art.push(rec);
                }
            }
        }
    }
    Ok(())
}
