//! Small numeric kernels shared by the solvers and the simulator.

pub(crate) fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Binomial pmf `C(n,k) q^k p^(n-k)`, evaluated in log space. The failure
/// probability `p = 1 - q` is supplied by the caller so a tiny `p` is not
/// reconstructed from `1 - q`. Zero for `k > n`; exact at the endpoints.
pub(crate) fn binom_pmf(k: u32, n: u32, q: f64, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    if q <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if q >= 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    let nf = f64::from(n);
    let kf = f64::from(k);
    let ln_choose = ln_gamma(nf + 1.0) - ln_gamma(kf + 1.0) - ln_gamma(nf - kf + 1.0);
    (ln_choose + kf * q.ln() + (nf - kf) * p.ln()).exp()
}

/// Poisson weight `e^{-q} q^n / n!` in log space, so long horizons
/// (large `q`) cannot underflow a running product.
pub(crate) fn poisson_weight(n: u64, q: f64, ln_q: f64) -> f64 {
    (-q + (n as f64) * ln_q - ln_gamma(n as f64 + 1.0)).exp()
}

/// Normalized weights `w_j ∝ n^j / j!` for `j = 0..=n`: the occupancy law of
/// a birth-death chain with constant arrival rate `n·μ` and per-occupant
/// departure rate `μ`, capped at `n`. Computed with a log-sum-exp shift so
/// any `n` is safe.
pub fn truncated_poisson_weights(n: u32) -> Vec<f64> {
    let ln_n = f64::from(n).ln();
    let lw: Vec<f64> = (0..=n)
        .map(|j| f64::from(j) * ln_n - ln_gamma(f64::from(j) + 1.0))
        .collect();
    let top = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = lw.iter().map(|&v| (v - top).exp()).collect();
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}
