//! The elicitability lab run as one batch of named checks.

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::elicit::*;
use super::normal::{gaussian_var_es, norm_pdf, norm_ppf};
use crate::error::Result;
use crate::losses::{AlphaLevel, JointLossSpec};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteCheck {
    pub name: String,
    pub passed: bool,
    /// Observed value.
    pub got: f64,
    /// Reference value.
    pub expected: f64,
    pub tolerance: f64,
}

impl SuiteCheck {
    fn close(name: &str, got: f64, expected: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            passed: (got - expected).abs() <= tolerance,
            got,
            expected,
            tolerance,
        }
    }

    fn flag(name: &str, passed: bool) -> Self {
        Self {
            name: name.into(),
            passed,
            got: f64::from(u8::from(passed)),
            expected: 1.0,
            tolerance: 0.0,
        }
    }
}

fn level(a: f64) -> AlphaLevel {
    AlphaLevel::new(a).expect("suite levels are in (0, 1)")
}

/// Standard normal sample law of size `n` from the test stream of `seed`.
pub fn normal_sample_law(n: usize, seed: u64) -> Result<Law> {
    let mut rng = stream(seed, Stream::Test);
    Law::sample((0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
}

/// Runs every brute-force case; `sample_size` sets the Gaussian sample laws.
pub fn elicitation_suite(sample_size: usize, seed: u64) -> Result<Vec<SuiteCheck>> {
    let mut out = Vec::new();

    // quantile minimizers on discrete laws
    let half = Law::Discrete(DiscreteDist::new(vec![(0.0, 0.5), (1.0, 0.5)])?);
    let grid = uniform_grid(-1.0, 2.0, 301);
    let r = brute_force_quantile_minimizer(&half, level(0.5), Some(&grid))?;
    let inside = grid.iter().filter(|&&v| (0.0..=1.0).contains(&v)).count();
    out.push(SuiteCheck::flag(
        "quantile_flat_segment_argmin_is_[0,1]",
        r.argmin.len() == inside && r.argmin.iter().all(|v| (0.0..=1.0).contains(v)),
    ));
    out.push(SuiteCheck::close(
        "quantile_flat_segment_inf",
        r.quantile,
        0.0,
        0.0,
    ));

    let skew = Law::Discrete(DiscreteDist::new(vec![(0.0, 0.3), (1.0, 0.7)])?);
    let r = brute_force_quantile_minimizer(&skew, level(0.5), Some(&grid))?;
    out.push(SuiteCheck::flag(
        "quantile_unique_argmin",
        r.argmin == vec![1.0],
    ));
    out.push(SuiteCheck::close(
        "quantile_unique_inf",
        r.quantile,
        1.0,
        0.0,
    ));

    let point = Law::Discrete(DiscreteDist::point(5.0));
    for a in [0.1, 0.5, 0.99] {
        let r = brute_force_quantile_minimizer(&point, level(a), None)?;
        out.push(SuiteCheck::flag(
            &format!("quantile_point_mass_a{a}"),
            r.argmin == vec![5.0],
        ));
    }

    // ES given VaR
    let uni = Law::uniform(0.0, 1.0)?;
    let r = brute_force_es_minimizer(&uni, 0.75, level(0.75), None, 0.0)?;
    out.push(SuiteCheck::close(
        "es_uniform",
        r.argmin,
        0.125,
        r.resolution,
    ));
    let r = brute_force_es_minimizer(&point, 5.0, level(0.9), None, 0.0)?;
    out.push(SuiteCheck::close(
        "es_point_mass",
        r.argmin,
        0.0,
        r.resolution,
    ));
    let gauss = normal_sample_law(sample_size, seed)?;
    let (v95, e95) = gaussian_var_es(0.0, 1.0, 0.95)?;
    let zgrid = uniform_grid(0.0, 2.0, 2001);
    let r = brute_force_es_minimizer(&gauss, v95, level(0.95), Some(&zgrid), 1e-3)?;
    out.push(SuiteCheck::close(
        "es_gaussian_sample",
        r.argmin,
        e95 - v95,
        0.01,
    ));
    let off = brute_force_es_minimizer(&uni, 0.5, level(0.75), None, 0.0);
    out.push(SuiteCheck::flag("es_precondition_flagged", off.is_err()));

    // joint minimizer
    let (v90, e90) = gaussian_var_es(0.0, 1.0, 0.9)?;
    let gv = uniform_grid(0.5, 2.5, 401);
    let r = brute_force_joint_minimizer(
        &gauss,
        level(0.9),
        Some(&gv),
        Some(&gv),
        JointLossSpec::ExpNeg,
    )?;
    out.push(SuiteCheck::close(
        "joint_gaussian_var",
        r.v,
        v90,
        r.cell_v + 0.01,
    ));
    out.push(SuiteCheck::close(
        "joint_gaussian_es",
        r.z,
        e90,
        r.cell_z + 0.01,
    ));
    let scaled = gauss.scaled(2.0)?;
    let gv2: Vec<f64> = gv.iter().map(|v| 2.0 * v).collect();
    let r2 = brute_force_joint_minimizer(
        &scaled,
        level(0.9),
        Some(&gv2),
        Some(&gv2),
        JointLossSpec::ExpNeg,
    )?;
    out.push(SuiteCheck::close(
        "joint_scaled_var",
        r2.v,
        2.0 * r.v,
        r2.cell_v,
    ));
    out.push(SuiteCheck::close(
        "joint_scaled_es",
        r2.z,
        2.0 * r.z,
        r2.cell_z,
    ));
    let pg = uniform_grid(4.0, 6.0, 201);
    let r = brute_force_joint_minimizer(
        &point,
        level(0.9),
        Some(&pg),
        Some(&pg),
        JointLossSpec::ExpNeg,
    )?;
    out.push(SuiteCheck::close(
        "joint_point_mass_var",
        r.v,
        5.0,
        r.cell_v,
    ));
    out.push(SuiteCheck::close("joint_point_mass_es", r.z, 5.0, r.cell_z));

    // (1/c)·min scaling
    for c in [0.5, 2.0] {
        for (name, law, a) in [("uniform", &uni, 0.75), ("discrete", &skew, 0.5)] {
            let got = es_by_scaled_minimum(law, level(a), c, 4001)?;
            let expected = law_es(law, level(a));
            out.push(SuiteCheck::close(
                &format!("scaled_min_{name}_c{c}"),
                got,
                expected,
                1e-3,
            ));
        }
    }

    // Acerbi
    let z = norm_ppf(0.95)?;
    let acerbi = acerbi_es(|b| norm_ppf(b).unwrap_or(f64::NAN), level(0.95), 100_000)?;
    out.push(SuiteCheck::close(
        "acerbi_gaussian",
        acerbi,
        norm_pdf(z) / 0.05,
        1e-4,
    ));
    let acerbi = acerbi_es(|b| b, level(0.75), 1000)?;
    out.push(SuiteCheck::close("acerbi_uniform", acerbi, 0.875, 1e-6));
    let acerbi = acerbi_es(|_| 3.0, level(0.4), 10)?;
    out.push(SuiteCheck::close("acerbi_constant", acerbi, 3.0, 0.0));
    Ok(out)
}
