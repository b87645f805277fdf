/// Standard deviation of a binomial count.
pub fn binomial_sigma(n: u64, p: f64) -> f64 {
    (n as f64 * p * (1.0 - p)).sqrt()
}

/// |count - np| ≤ z·σ.
pub fn within_sigmas(count: u64, n: u64, p: f64, z: f64) -> bool {
    (count as f64 - n as f64 * p).abs() <= z * binomial_sigma(n, p)
}
