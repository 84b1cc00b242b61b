//! Special functions not covered by `statrs`: trigamma and exponentially
//! scaled modified Bessel functions of orders 0 and 1.

pub use statrs::function::gamma::{digamma, ln_gamma};

/// Below this argument the Bessel power series is used; above it the
/// large-argument expansion.
const BESSEL_SERIES_LIMIT: f64 = 30.0;

/// Trigamma function ψ₁(x) for x > 0.
pub fn trigamma(x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < 12.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let z = 1.0 / (x * x);
    // Asymptotic series in 1/x with Bernoulli-number coefficients.
    let tail = 1.0 / 6.0 - z * (1.0 / 30.0 - z * (1.0 / 42.0 - z * (1.0 / 30.0 - z * 5.0 / 66.0)));
    acc + 1.0 / x + z / 2.0 + z * tail / x
}

fn series_scaled(order: u32, x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = if order == 0 { 1.0 } else { x / 2.0 };
    let mut sum = term;
    let mut k = 1.0;
    loop {
        term *= q / (k * (k + order as f64));
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
        k += 1.0;
    }
    sum * (-x).exp()
}

fn asymptotic_scaled(order: u32, x: f64) -> f64 {
    let mu = 4.0 * (order * order) as f64;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        let odd = (2 * k - 1) as f64;
        let next = -term * (mu - odd * odd) / (k as f64 * 8.0 * x);
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum / (2.0 * std::f64::consts::PI * x).sqrt()
}

/// e^{-|x|} I₀(x).
pub fn bessel_i0e(x: f64) -> f64 {
    let a = x.abs();
    if a < BESSEL_SERIES_LIMIT {
        series_scaled(0, a)
    } else {
        asymptotic_scaled(0, a)
    }
}

/// e^{-|x|} I₁(x).
pub fn bessel_i1e(x: f64) -> f64 {
    let a = x.abs();
    let v = if a < BESSEL_SERIES_LIMIT {
        series_scaled(1, a)
    } else {
        asymptotic_scaled(1, a)
    };
    v.copysign(x)
}

/// ln I₀(x), finite for any finite x.
pub fn ln_bessel_i0(x: f64) -> f64 {
    bessel_i0e(x).ln() + x.abs()
}

/// I₁(x)/I₀(x).
pub fn bessel_ratio_i1_i0(x: f64) -> f64 {
    bessel_i1e(x) / bessel_i0e(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    // Integral representation I_n(x) = (1/π)∫₀^π e^{x cos t} cos(nt) dt.
    // The trapezoidal rule is spectrally accurate for this periodic integrand.
    fn quadrature_scaled(order: u32, x: f64) -> f64 {
        let m = 2000;
        let h = PI / m as f64;
        let f = |t: f64| (x * (t.cos() - 1.0)).exp() * (order as f64 * t).cos();
        let mut s = 0.5 * (f(0.0) + f(PI));
        for i in 1..m {
            s += f(i as f64 * h);
        }
        s * h / PI
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn bessel_known_values() {
        assert_eq!(bessel_i0e(0.0), 1.0);
        assert_eq!(bessel_i1e(0.0), 0.0);
        // I0(1) = 1.2660658777520082, I1(1) = 0.5651591039924851
        assert!(rel(bessel_i0e(1.0) * 1f64.exp(), 1.2660658777520082) < 1e-14);
        assert!(rel(bessel_i1e(1.0) * 1f64.exp(), 0.5651591039924851) < 1e-14);
        assert!(bessel_i1e(-2.0) < 0.0);
    }

    #[test]
    fn bessel_matches_quadrature_below_five() {
        for i in 1..=100 {
            let x = i as f64 * 0.05;
            assert!(
                rel(bessel_i0e(x), quadrature_scaled(0, x)) < 1e-10,
                "I0 at {x}"
            );
            assert!(
                rel(bessel_i1e(x), quadrature_scaled(1, x)) < 1e-10,
                "I1 at {x}"
            );
        }
    }

    #[test]
    fn bessel_matches_quadrature_across_branches() {
        for x in [5.0, 12.0, 29.9, 30.0, 30.1, 45.0, 80.0, 200.0, 700.0] {
            assert!(
                rel(bessel_i0e(x), quadrature_scaled(0, x)) < 1e-12,
                "I0 at {x}"
            );
            assert!(
                rel(bessel_i1e(x), quadrature_scaled(1, x)) < 1e-12,
                "I1 at {x}"
            );
        }
    }

    #[test]
    fn large_arguments_do_not_overflow() {
        let v = ln_bessel_i0(1e6);
        assert!(v.is_finite());
        assert!(rel(v, 1e6 - 0.5 * (2.0 * PI * 1e6).ln()) < 1e-12);
        assert!(rel(bessel_ratio_i1_i0(1e6), 1.0 - 0.5e-6) < 1e-12);
    }

    #[test]
    fn trigamma_known_values() {
        assert!(rel(trigamma(1.0), PI * PI / 6.0) < 1e-13);
        assert!(rel(trigamma(0.5), PI * PI / 2.0) < 1e-13);
        assert!(rel(trigamma(1e-3), 1e6 + PI * PI / 6.0) < 1e-6);
        assert!(trigamma(0.0).is_nan());
    }

    proptest! {
        #[test]
        fn trigamma_is_digamma_derivative(x in 0.05f64..200.0) {
            let h = 1e-4 * x;
            let fd = (digamma(x + h) - digamma(x - h)) / (2.0 * h);
            prop_assert!(rel(trigamma(x), fd) < 1e-6);
        }

        #[test]
        fn trigamma_recurrence(x in 0.01f64..100.0) {
            prop_assert!(rel(trigamma(x), trigamma(x + 1.0) + 1.0 / (x * x)) < 1e-12);
        }

        #[test]
        fn bessel_ratio_bounds(x in 0.0f64..1e4) {
            let r = bessel_ratio_i1_i0(x);
            prop_assert!((0.0..1.0).contains(&r));
            // lower bound of Amos type for I₁/I₀
            prop_assert!(r >= x / (1.0 + (x * x + 1.0).sqrt()) - 1e-12);
        }
    }
}
