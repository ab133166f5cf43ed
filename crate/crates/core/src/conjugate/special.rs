use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

/// `log Γ_p(a) = p(p−1)/4 · log π + Σ_{j=1..p} log Γ(a + (1 − j)/2)`.
pub fn ln_multivariate_gamma(p: usize, a: f64) -> f64 {
    let pf = p as f64;
    let mut acc = 0.25 * pf * (pf - 1.0) * PI.ln();
    for j in 1..=p {
        acc += ln_gamma(a + 0.5 * (1.0 - j as f64));
    }
    acc
}
