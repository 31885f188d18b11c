//! Ground truth: normal functions, the Gaussian toy model, and the elicitability lab.

pub mod elicit;
pub mod normal;
pub mod suite;
pub mod toy;

pub use elicit::{
    acerbi_es, brute_force_es_minimizer, brute_force_joint_minimizer,
    brute_force_quantile_minimizer, DiscreteDist, Law,
};
pub use normal::{gaussian_excess_mean, gaussian_var_es, norm_cdf, norm_pdf, norm_ppf, norm_sf};
pub use toy::{toy_var_es_closed, GaussianToySpec};
