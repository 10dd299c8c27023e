//! Binomial coefficients and probability mass functions.
//!
//! The pmf is evaluated from its mode outward with the ratio recurrence, so
//! large `n` never overflows and the tails underflow to zero gracefully.

/// `C(n, k)` as a float. Exact while the intermediate products fit in 53 bits.
pub fn binomial_coefficient(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut c = 1.0_f64;
    for i in 1..=k {
        c = c * (n - k + i) as f64 / i as f64;
        if c < 9.0e15 {
            // every partial product is itself a binomial coefficient
            c = c.round();
        }
    }
    c
}

/// `ln C(n, k)`, summed term by term over the shorter side.
pub fn ln_binomial_coefficient(n: usize, k: usize) -> f64 {
    debug_assert!(k <= n);
    let k = k.min(n - k);
    (1..=k)
        .map(|i| ((n - k + i) as f64 / i as f64).ln())
        .sum()
}

/// Fills `out` with the Binomial(n, q) pmf over `0..=n`.
pub fn binomial_pmf_into(n: usize, q: f64, out: &mut Vec<f64>) {
    out.clear();
    out.resize(n + 1, 0.0);
    if q <= 0.0 {
        out[0] = 1.0;
        return;
    }
    if q >= 1.0 {
        out[n] = 1.0;
        return;
    }
    let mode = (((n + 1) as f64 * q).floor() as usize).min(n);
    let ln_mode = ln_binomial_coefficient(n, mode)
        + mode as f64 * q.ln()
        + (n - mode) as f64 * (-q).ln_1p();
    out[mode] = ln_mode.exp();

    let odds = q / (1.0 - q);
    for k in mode..n {
        out[k + 1] = out[k] * ((n - k) as f64 / (k + 1) as f64) * odds;
    }
    let inv_odds = (1.0 - q) / q;
    for k in (1..=mode).rev() {
        out[k - 1] = out[k] * (k as f64 / (n - k + 1) as f64) * inv_odds;
    }
}

pub fn binomial_pmf(n: usize, q: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    binomial_pmf_into(n, q, &mut out);
    out
}
