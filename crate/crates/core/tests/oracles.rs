use riskquant::losses::{AlphaLevel, JointLossSpec};
use riskquant::oracles::elicit::{
    brute_force_es_minimizer, brute_force_joint_minimizer, brute_force_quantile_minimizer, Law,
};
use riskquant::oracles::suite::elicitation_suite;
use riskquant::oracles::GaussianToySpec;
use riskquant::rng::{stream, Stream};

fn level(a: f64) -> AlphaLevel {
    AlphaLevel::new(a).unwrap()
}

#[test]
fn generated_toy_data_hits_the_closed_form_levels() {
    let spec = GaussianToySpec::sample(3, &mut stream(5, Stream::Spec)).unwrap();
    let n = 200_000;
    let data = spec.generate(n, 8, false);
    for a in [0.9, 0.99] {
        let mut hits = 0usize;
        let mut es_sum = 0.0;
        let mut tail_sum = 0.0;
        let mut sd_sum = 0.0;
        for i in 0..n {
            let x = data.row(i);
            let (q, s) = spec.var_es(x, a).unwrap();
            let y = data.y()[i];
            hits += usize::from(y <= q);
            es_sum += s;
            tail_sum += q + (y - q).max(0.0) / (1.0 - a);
            sd_sum += spec.moments(x).unwrap().1;
        }
        let cover = hits as f64 / n as f64;
        let se = (a * (1.0 - a) / n as f64).sqrt();
        assert!((cover - a).abs() < 4.0 * se, "alpha {a}: coverage {cover}");
        // Rockafellar-Uryasev average against the closed-form ES, in units of mean σ
        let rel = (tail_sum - es_sum).abs() / sd_sum;
        assert!(rel < 0.05, "alpha {a}: {rel}");
    }
}

#[test]
fn twin_responses_share_the_conditional_law() {
    let spec = GaussianToySpec::sample(2, &mut stream(6, Stream::Spec)).unwrap();
    let n = 100_000;
    let data = spec.generate(n, 9, true);
    let twin = data.y_twin().unwrap();
    let a = 0.95;
    let (mut h1, mut h2, mut both) = (0usize, 0usize, 0usize);
    for i in 0..n {
        let (q, _) = spec.var_es(data.row(i), a).unwrap();
        let (e1, e2) = (data.y()[i] > q, twin[i] > q);
        h1 += usize::from(e1);
        h2 += usize::from(e2);
        both += usize::from(e1 && e2);
    }
    let nf = n as f64;
    let tail = 1.0 - a;
    let se = (tail * a / nf).sqrt();
    assert!((h1 as f64 / nf - tail).abs() < 4.0 * se);
    assert!((h2 as f64 / nf - tail).abs() < 4.0 * se);
    // conditional independence: joint exceedance at rate tail²
    let joint = both as f64 / nf;
    assert!(
        (joint - tail * tail).abs() < 4.0 * (tail * tail / nf).sqrt(),
        "{joint}"
    );
}

#[test]
fn uniform_law_minimizers() {
    let law = Law::uniform(0.0, 1.0).unwrap();
    let a = level(0.9);
    let q = brute_force_quantile_minimizer(&law, a, None).unwrap();
    assert!(q.covers(0.9), "{:?}", q.argmin);
    let es = brute_force_es_minimizer(&law, 0.9, a, None, 0.0).unwrap();
    // increment (1 − α)⁻¹E[(U − 0.9)⁺] = 0.05
    assert!((es.target - 0.05).abs() < 1e-12);
    assert!((es.argmin - 0.05).abs() <= es.resolution);
    let j = brute_force_joint_minimizer(&law, a, None, None, JointLossSpec::ExpNeg).unwrap();
    assert!((j.v - 0.9).abs() <= j.cell_v);
    assert!((j.z - 0.95).abs() <= j.cell_z);
}

#[test]
fn elicitation_suite_passes_at_moderate_size() {
    let checks = elicitation_suite(100_000, 3).unwrap();
    let failed: Vec<_> = checks.iter().filter(|c| !c.passed).collect();
    assert!(failed.is_empty(), "{failed:?}");
}
