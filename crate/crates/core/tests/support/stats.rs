//! Independent statistical oracles and reference stage results.

/// Per-class `(stage-1 TPR, SD)`, `(stage-2 TPR, SD)` of a five-fold
/// cross-validation.
pub const STAGE_RESULTS: [(&str, (f64, f64), (f64, f64)); 4] = [
    ("deciduous", (0.992, 0.00484), (0.894, 0.0380)),
    ("coniferous", (0.991, 0.00340), (0.803, 0.0605)),
    ("residential", (0.970, 0.0119), (0.886, 0.0174)),
    ("non_residential", (0.914, 0.0297), (0.752, 0.0294)),
];

/// Expected two-stage `(accuracy, SD)` composed from them, to 3 significant digits.
pub const TWO_STAGE_TARGETS: [(f64, f64); 4] = [(0.887, 0.0379), (0.796, 0.0600), (0.859, 0.0199), (0.687, 0.0350)];
pub const ACCURACY_TOL: f64 = 0.001;
pub const SD_TOL: f64 = 0.0005;

/// `P(X >= k)` for `X ~ Binomial(n, 1/2)`, summed exactly in integers.
pub fn binomial_upper_tail(k: u64, n: u64) -> f64 {
    let mut total: u128 = 0;
    let mut c: u128 = 1;
    for i in 0..=n {
        if i >= k {
            total += c;
        }
        c = c * u128::from(n - i) / u128::from(i + 1);
    }
    total as f64 / 2f64.powi(n as i32)
}

/// `P(X > x)` for chi-squared with one degree of freedom by composite
/// Simpson quadrature. With `a = sqrt(x)` the tail is
/// `2 phi(a) * int_0^inf exp(-a s - s^2 / 2) ds`; pulling `phi(a)` out keeps
/// the relative precision far into the tail.
pub fn chi2_tail_by_quadrature(x: f64) -> f64 {
    let a = x.max(0.0).sqrt();
    let upper = if a > 3.0 { 45.0 / a } else { 15.0 };
    let n = 20_000;
    let h = upper / n as f64;
    let f = |s: f64| (-a * s - 0.5 * s * s).exp();
    let mut acc = f(0.0) + f(upper);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    let integral = acc * h / 3.0;
    let phi = (-0.5 * a * a).exp() / (2.0 * std::f64::consts::PI).sqrt();
    2.0 * phi * integral
}

/// Log-spaced points from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp()).collect()
}
