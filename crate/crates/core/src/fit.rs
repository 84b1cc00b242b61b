//! Maximum-likelihood gamma and Rician fits of linear channel-gain
//! amplitudes, plus density histograms for overlaying them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::special::{bessel_ratio_i1_i0, digamma, ln_bessel_i0, ln_gamma, trigamma};
use crate::trace::SENTINEL_GAIN_DB;

const MAX_ITER: usize = 200;
const SCORE_TOL: f64 = 1e-10;
/// Relative variance below which a sample set is treated as constant.
const DEGENERATE_REL_VAR: f64 = 1e-14;
const RICIAN_GRID: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("sample {index} is {value}, outside the distribution's support")]
    OutOfSupport { index: usize, value: f64 },
    #[error("samples are (numerically) all equal; the fit is degenerate")]
    Degenerate,
    #[error("number of bins must be at least 1")]
    NoBins,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFamily {
    Gamma,
    Rician,
}

impl FitFamily {
    pub fn name(self) -> &'static str {
        match self {
            FitFamily::Gamma => "gamma",
            FitFamily::Rician => "rician",
        }
    }
}

impl fmt::Display for FitFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FitFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gamma" => Ok(FitFamily::Gamma),
            "rician" | "rice" => Ok(FitFamily::Rician),
            other => Err(format!(
                "unknown distribution family `{other}` (expected gamma or rician)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FitParams {
    Gamma { shape: f64, scale: f64 },
    Rician { nu: f64, sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub family: FitFamily,
    pub params: FitParams,
    pub loglik: f64,
    pub n_samples: usize,
}

/// Converts dB gains to linear amplitudes, dropping sentinel values.
pub fn amplitudes_from_db(gains_db: &[f64]) -> Vec<f64> {
    gains_db
        .iter()
        .filter(|g| g.is_finite() && **g > SENTINEL_GAIN_DB)
        .map(|g| 10f64.powf(g / 20.0))
        .collect()
}

fn check_support(samples: &[f64], min_len: usize) -> Result<(), FitError> {
    if samples.len() < min_len {
        return Err(FitError::TooFewSamples {
            needed: min_len,
            got: samples.len(),
        });
    }
    match samples.iter().position(|x| !(x.is_finite() && *x > 0.0)) {
        Some(index) => Err(FitError::OutOfSupport {
            index,
            value: samples[index],
        }),
        None => Ok(()),
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn relative_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x / m - 1.0).powi(2)).sum::<f64>() / xs.len() as f64
}

pub fn gamma_ln_pdf(x: f64, shape: f64, scale: f64) -> f64 {
    (shape - 1.0) * x.ln() - x / scale - shape * scale.ln() - ln_gamma(shape)
}

pub fn gamma_loglik(samples: &[f64], shape: f64, scale: f64) -> f64 {
    samples.iter().map(|&x| gamma_ln_pdf(x, shape, scale)).sum()
}

/// Method-of-moments (shape, scale).
pub fn gamma_moments(samples: &[f64]) -> (f64, f64) {
    let m = mean(samples);
    let var = samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / samples.len() as f64;
    (m * m / var, var / m)
}

/// Gamma MLE. The shape solves ln κ − ψ(κ) = ln(mean) − mean(ln x); the
/// scale is mean/κ.
pub fn fit_gamma(samples: &[f64]) -> Result<FitResult, FitError> {
    check_support(samples, 2)?;
    if relative_variance(samples) < DEGENERATE_REL_VAR {
        return Err(FitError::Degenerate);
    }
    let m = mean(samples);
    let s = -samples.iter().map(|x| (x / m).ln()).sum::<f64>() / samples.len() as f64;
    if !(s > 0.0) {
        return Err(FitError::Degenerate);
    }
    let shape = solve_gamma_shape(s);
    let scale = m / shape;
    Ok(FitResult {
        family: FitFamily::Gamma,
        params: FitParams::Gamma { shape, scale },
        loglik: gamma_loglik(samples, shape, scale),
        n_samples: samples.len(),
    })
}

/// Root of ln κ − ψ(κ) = s for s > 0, by Newton in ln κ kept inside a
/// shrinking bracket.
fn solve_gamma_shape(s: f64) -> f64 {
    let score = |k: f64| k.ln() - digamma(k) - s;
    // The score decreases monotonically from +∞ to 0 over (0, ∞).
    let mut k = (3.0 - s + ((s - 3.0).powi(2) + 24.0 * s).sqrt()) / (12.0 * s);
    let (mut lo, mut hi) = (k, k);
    while score(lo) < 0.0 {
        lo /= 2.0;
    }
    while score(hi) > 0.0 {
        hi *= 2.0;
    }
    let (mut u_lo, mut u_hi) = (lo.ln(), hi.ln());
    let mut u = k.ln();
    for _ in 0..MAX_ITER {
        let f = score(k);
        if f.abs() <= SCORE_TOL * s {
            break;
        }
        if f > 0.0 {
            u_lo = u;
        } else {
            u_hi = u;
        }
        let slope = 1.0 - k * trigamma(k);
        let mut next = u - f / slope;
        if !(next > u_lo && next < u_hi) {
            next = 0.5 * (u_lo + u_hi);
        }
        if (next - u).abs() < 1e-15 * u.abs().max(1.0) {
            u = next;
            k = u.exp();
            break;
        }
        u = next;
        k = u.exp();
    }
    k
}

pub fn rician_ln_pdf(x: f64, nu: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    x.ln() - s2.ln() - (x * x + nu * nu) / (2.0 * s2) + ln_bessel_i0(x * nu / s2)
}

pub fn rician_loglik(samples: &[f64], nu: f64, sigma: f64) -> f64 {
    samples.iter().map(|&x| rician_ln_pdf(x, nu, sigma)).sum()
}

/// Moment-matched (ν, σ) from the second and fourth raw moments.
pub fn rician_moments(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let m2 = samples.iter().map(|x| x * x).sum::<f64>() / n;
    let m4 = samples.iter().map(|x| x.powi(4)).sum::<f64>() / n;
    let nu2 = (2.0 * m2 * m2 - m4).max(0.0).sqrt().min(m2 * (1.0 - 1e-9));
    (nu2.sqrt(), ((m2 - nu2) / 2.0).sqrt())
}

/// Rician MLE. Stationary points satisfy ν = mean(x·I₁/I₀(xν/σ²)) with
/// σ² = (E[x²] − ν²)/2. Every sign change of that equation on a grid over
/// ν ∈ [0, √E[x²]) is refined to a root, and the root (or ν = 0) with the
/// highest likelihood is kept.
pub fn fit_rician(samples: &[f64]) -> Result<FitResult, FitError> {
    check_support(samples, 2)?;
    if relative_variance(samples) < DEGENERATE_REL_VAR {
        return Err(FitError::Degenerate);
    }
    let rms = (samples.iter().map(|x| x * x).sum::<f64>() / samples.len() as f64).sqrt();
    let y: Vec<f64> = samples.iter().map(|x| x / rms).collect();

    // In normalised units E[y²] = 1, so σ² = (1 − ν²)/2 and ν ∈ [0, 1).
    let sigma2 = |nu: f64| (1.0 - nu * nu) / 2.0;
    let h = |nu: f64| {
        let s2 = sigma2(nu);
        y.iter()
            .map(|&x| x * bessel_ratio_i1_i0(x * nu / s2))
            .sum::<f64>()
            / y.len() as f64
            - nu
    };
    let ll = |nu: f64| rician_loglik(&y, nu, sigma2(nu).sqrt());

    let init = rician_moments(&y).0;
    let mut candidates = vec![0.0, init];
    let grid: Vec<f64> = (1..RICIAN_GRID)
        .map(|i| i as f64 / RICIAN_GRID as f64)
        .collect();
    let values: Vec<f64> = grid.iter().map(|&v| h(v)).collect();
    for i in 1..grid.len() {
        if values[i - 1] > 0.0 && values[i] <= 0.0 {
            candidates.push(refine_root(
                &h,
                grid[i - 1],
                values[i - 1],
                grid[i],
                values[i],
            ));
        }
    }
    if values[0] <= 0.0 {
        candidates.push(bisect_from_zero(&h, grid[0]));
    }

    let (nu, loglik) = candidates
        .into_iter()
        .map(|v| (v, ll(v)))
        .filter(|(_, l)| l.is_finite())
        .fold((0.0, f64::NEG_INFINITY), |best, c| {
            if c.1 > best.1 {
                c
            } else {
                best
            }
        });
    let (nu, sigma) = (nu * rms, sigma2(nu).sqrt() * rms);
    let ln_rms = rms.ln();
    Ok(FitResult {
        family: FitFamily::Rician,
        params: FitParams::Rician { nu, sigma },
        // Density transforms with the 1/rms Jacobian per sample.
        loglik: loglik - samples.len() as f64 * ln_rms,
        n_samples: samples.len(),
    })
}

/// Illinois regula falsi on a bracket with f(lo) > 0 ≥ f(hi).
fn refine_root<F: Fn(f64) -> f64>(
    f: &F,
    mut lo: f64,
    mut f_lo: f64,
    mut hi: f64,
    mut f_hi: f64,
) -> f64 {
    let mut side = 0i8;
    for _ in 0..MAX_ITER {
        if hi - lo < 1e-14 || f_hi == 0.0 {
            break;
        }
        let mid = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        let mid = if mid > lo && mid < hi {
            mid
        } else {
            0.5 * (lo + hi)
        };
        let f_mid = f(mid);
        if f_mid.abs() < 1e-15 {
            return mid;
        }
        if f_mid > 0.0 {
            lo = mid;
            f_lo = f_mid;
            if side == 1 {
                f_hi /= 2.0;
            }
            side = 1;
        } else {
            hi = mid;
            f_hi = f_mid;
            if side == -1 {
                f_lo /= 2.0;
            }
            side = -1;
        }
    }
    if f_lo.abs() < f_hi.abs() {
        lo
    } else {
        hi
    }
}

/// Looks for a positive root below the first grid point by halving
/// toward zero.
fn bisect_from_zero<F: Fn(f64) -> f64>(f: &F, first: f64) -> f64 {
    let mut hi = first;
    for _ in 0..40 {
        let lo = hi / 2.0;
        let f_lo = f(lo);
        if f_lo > 0.0 {
            return refine_root(f, lo, f_lo, hi, f(hi));
        }
        hi = lo;
    }
    0.0
}

/// Density-normalised histogram: `edges` has one more entry than
/// `density`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
}

pub fn empirical_pdf(samples: &[f64], n_bins: usize) -> Result<Histogram, FitError> {
    if n_bins == 0 {
        return Err(FitError::NoBins);
    }
    if samples.is_empty() {
        return Err(FitError::TooFewSamples { needed: 1, got: 0 });
    }
    if let Some(index) = samples.iter().position(|x| !x.is_finite()) {
        return Err(FitError::OutOfSupport {
            index,
            value: samples[index],
        });
    }
    let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Ok(Histogram {
            edges: vec![lo - 0.5, lo + 0.5],
            density: vec![1.0],
        });
    }
    let width = (hi - lo) / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    for &x in samples {
        let b = (((x - lo) / width) as usize).min(n_bins - 1);
        counts[b] += 1;
    }
    let n = samples.len() as f64;
    let edges = (0..=n_bins)
        .map(|i| {
            if i == n_bins {
                hi
            } else {
                lo + i as f64 * width
            }
        })
        .collect();
    Ok(Histogram {
        edges,
        density: counts.iter().map(|&c| c as f64 / (n * width)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp, Gamma, Normal};

    fn gamma_samples(shape: f64, scale: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Gamma::new(shape, scale).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    fn rician_samples(nu: f64, sigma: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, sigma).unwrap();
        (0..n)
            .map(|_| (nu + d.sample(&mut rng)).hypot(d.sample(&mut rng)))
            .collect()
    }

    fn gamma_params(r: &FitResult) -> (f64, f64) {
        match r.params {
            FitParams::Gamma { shape, scale } => (shape, scale),
            _ => panic!("not a gamma fit"),
        }
    }

    fn rician_params(r: &FitResult) -> (f64, f64) {
        match r.params {
            FitParams::Rician { nu, sigma } => (nu, sigma),
            _ => panic!("not a rician fit"),
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn gamma_recovers_known_parameters() {
        let x = gamma_samples(9.58, 3.34e-6, 100_000, 1);
        let r = fit_gamma(&x).unwrap();
        let (k, t) = gamma_params(&r);
        assert!(rel(k, 9.58) < 0.05, "shape {k}");
        assert!(rel(t, 3.34e-6) < 0.05, "scale {t}");
        assert_eq!(r.n_samples, 100_000);
        assert!(r.loglik.is_finite());
    }

    #[test]
    fn exponential_data_gives_unit_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = Exp::new(3.0).unwrap();
        let x: Vec<f64> = (0..100_000).map(|_| d.sample(&mut rng)).collect();
        let (k, _) = gamma_params(&fit_gamma(&x).unwrap());
        assert!(rel(k, 1.0) < 0.05, "shape {k}");
    }

    #[test]
    fn gamma_score_is_zero_at_fit() {
        let x = gamma_samples(0.3, 2.0, 5000, 3);
        let (k, t) = gamma_params(&fit_gamma(&x).unwrap());
        let n = x.len() as f64;
        // Partial derivatives of the log-likelihood vanish at the MLE.
        let d_shape = x.iter().map(|v| v.ln()).sum::<f64>() - n * t.ln() - n * digamma(k);
        let d_scale = x.iter().sum::<f64>() / (t * t) - n * k / t;
        assert!(d_shape.abs() / n < 1e-8, "{d_shape}");
        assert!((d_scale * t / n).abs() < 1e-8, "{d_scale}");
    }

    #[test]
    fn gamma_rejects_bad_input() {
        assert_eq!(fit_gamma(&[1.0, 1.0 + 1e-12]), Err(FitError::Degenerate));
        assert_eq!(
            fit_gamma(&[1.0]),
            Err(FitError::TooFewSamples { needed: 2, got: 1 })
        );
        assert_eq!(
            fit_gamma(&[1.0, 0.0]),
            Err(FitError::OutOfSupport {
                index: 1,
                value: 0.0
            })
        );
        assert!(matches!(
            fit_gamma(&[1.0, f64::NAN]),
            Err(FitError::OutOfSupport { index: 1, .. })
        ));
    }

    #[test]
    fn rician_recovers_known_parameters() {
        let x = rician_samples(6.26e-5, 1.85e-5, 100_000, 4);
        let r = fit_rician(&x).unwrap();
        let (nu, sigma) = rician_params(&r);
        assert!(rel(nu, 6.26e-5) < 0.05, "nu {nu}");
        assert!(rel(sigma, 1.85e-5) < 0.05, "sigma {sigma}");
        assert!((r.loglik - rician_loglik(&x, nu, sigma)).abs() < 1e-6 * r.loglik.abs());
    }

    // With Rayleigh data the likelihood is flat to fourth order in ν, so
    // the MLE sits at ν = 0 only when the sample kurtosis E[x⁴]/E[x²]² is at
    // least 2. Otherwise ν̂ fluctuates on the n^(-1/8) scale.
    #[test]
    fn rayleigh_data_gives_small_nu() {
        for seed in [5, 6] {
            let x = rician_samples(0.0, 2.0, 100_000, seed);
            let r = fit_rician(&x).unwrap();
            let (nu, sigma) = rician_params(&r);
            let n = x.len() as f64;
            let m2 = x.iter().map(|v| v * v).sum::<f64>() / n;
            let kurtosis = x.iter().map(|v| v.powi(4)).sum::<f64>() / n / (m2 * m2);
            assert!(rel(sigma, 2.0) < 0.05);
            assert!(r.loglik >= rician_loglik(&x, 0.0, (m2 / 2.0).sqrt()) - 1e-9);
            if kurtosis >= 2.0 {
                assert!(nu / sigma < 0.1, "seed {seed}: nu/sigma {}", nu / sigma);
            } else {
                assert!(nu / sigma < 0.6, "seed {seed}: nu/sigma {}", nu / sigma);
            }
        }
    }

    #[test]
    fn rician_stationarity_at_fit() {
        let x = rician_samples(3.0, 1.0, 20_000, 6);
        let (nu, sigma) = rician_params(&fit_rician(&x).unwrap());
        let s2 = sigma * sigma;
        let n = x.len() as f64;
        let m2 = x.iter().map(|v| v * v).sum::<f64>() / n;
        let fixed = x
            .iter()
            .map(|&v| v * bessel_ratio_i1_i0(v * nu / s2))
            .sum::<f64>()
            / n;
        assert!(rel(fixed, nu) < 1e-9);
        assert!(rel(s2, (m2 - nu * nu) / 2.0) < 1e-9);
    }

    #[test]
    fn rician_rejects_constant_data() {
        assert_eq!(fit_rician(&[2.0; 10]), Err(FitError::Degenerate));
    }

    #[test]
    fn rician_pdf_integrates_to_one() {
        let (nu, sigma) = (2.0, 0.7);
        let h = 1e-4;
        let total: f64 = (1..100_000)
            .map(|i| rician_ln_pdf(i as f64 * h, nu, sigma).exp() * h)
            .sum();
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn db_conversion_drops_sentinels() {
        let a = amplitudes_from_db(&[-101.0, -60.0, -120.0, -40.0, f64::NAN]);
        assert_eq!(a.len(), 2);
        assert!(rel(a[0], 1e-3) < 1e-12);
        assert!(rel(a[1], 1e-2) < 1e-12);
    }

    #[test]
    fn uniform_histogram() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (0..200_000).map(|_| rng.random::<f64>()).collect();
        let h = empirical_pdf(&x, 10).unwrap();
        assert_eq!(h.edges.len(), 11);
        for d in &h.density {
            assert!((d - 1.0).abs() < 0.03, "{d}");
        }
    }

    #[test]
    fn single_sample_histogram() {
        let h = empirical_pdf(&[3.0], 5).unwrap();
        assert_eq!(h.edges, vec![2.5, 3.5]);
        assert_eq!(h.density, vec![1.0]);
        assert_eq!(
            empirical_pdf(&[], 5),
            Err(FitError::TooFewSamples { needed: 1, got: 0 })
        );
        assert_eq!(empirical_pdf(&[1.0], 0), Err(FitError::NoBins));
    }

    #[test]
    fn family_parsing_and_json() {
        assert_eq!("Gamma".parse::<FitFamily>(), Ok(FitFamily::Gamma));
        assert!("lognormal".parse::<FitFamily>().is_err());
        let r = FitResult {
            family: FitFamily::Rician,
            params: FitParams::Rician {
                nu: 1.0,
                sigma: 0.5,
            },
            loglik: -3.0,
            n_samples: 4,
        };
        let v: serde_json::Value = serde_json::to_value(r).unwrap();
        assert_eq!(v["family"], "rician");
        assert_eq!(v["params"]["nu"], 1.0);
        assert_eq!(v["n_samples"], 4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn histogram_integrates_to_one(x in prop::collection::vec(-1e3f64..1e3, 1..200), bins in 1usize..50) {
            let h = empirical_pdf(&x, bins).unwrap();
            let total: f64 = h.density.iter().zip(h.edges.windows(2)).map(|(d, e)| d * (e[1] - e[0])).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }

        #[test]
        fn gamma_scale_equivariance(seed in 0u64..1000, shape in 0.2f64..30.0, c in 1e-6f64..1e6) {
            let x = gamma_samples(shape, 1.0, 500, seed);
            let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
            let (k1, t1) = gamma_params(&fit_gamma(&x).unwrap());
            let (k2, t2) = gamma_params(&fit_gamma(&scaled).unwrap());
            prop_assert!((k1 - k2).abs() <= 1e-6 * k1);
            prop_assert!(rel(t2, c * t1) < 1e-6);
        }

        #[test]
        fn rician_scale_equivariance(seed in 0u64..1000, k in 0.0f64..6.0, c in 1e-6f64..1e6) {
            let x = rician_samples(k, 1.0, 500, seed);
            let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
            let (n1, s1) = rician_params(&fit_rician(&x).unwrap());
            let (n2, s2) = rician_params(&fit_rician(&scaled).unwrap());
            prop_assert!((n2 - c * n1).abs() <= 1e-4 * c * s1.max(n1));
            prop_assert!(rel(s2, c * s1) < 1e-4);
        }

        #[test]
        fn fits_never_worse_than_moments(seed in 0u64..1000, a in 0.3f64..8.0) {
            let g = gamma_samples(a, 2.0, 300, seed);
            let (mk, mt) = gamma_moments(&g);
            prop_assert!(fit_gamma(&g).unwrap().loglik >= gamma_loglik(&g, mk, mt) - 1e-9);
            let r = rician_samples(a, 1.0, 300, seed);
            let (mn, ms) = rician_moments(&r);
            prop_assert!(fit_rician(&r).unwrap().loglik >= rician_loglik(&r, mn, ms) - 1e-9);
        }
    }
}
