use scr_core::entropy::{discretize_cdf, DiscretizedCdf, DEFAULT_PRECISION};

/// Deterministic symbols with per-symbol Gaussian tables of varying width.
pub fn coding_workload(n: usize) -> (Vec<i32>, Vec<DiscretizedCdf>) {
    let cdfs: Vec<DiscretizedCdf> = (0..n)
        .map(|i| {
            let mu = ((i * 37) % 23) as f64 / 4.0 - 2.5;
            let sigma = 0.2 + ((i * 11) % 17) as f64 * 0.5;
            discretize_cdf(mu, sigma, DEFAULT_PRECISION)
        })
        .collect();
    let symbols = (0..n).map(|i| ((i * 29) % 13) as i32 / 2 - 3).collect();
    (symbols, cdfs)
}
