//! Error analysis for correlated Monte Carlo series.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MIN_BLOCKS: usize = 32;

fn check(len: usize, blocks: usize) -> Result<usize> {
    if blocks < MIN_BLOCKS {
        return Err(Error::Estimator(format!("{blocks} blocks, need at least {MIN_BLOCKS}")));
    }
    if len < blocks {
        return Err(Error::Estimator(format!("{len} samples for {blocks} blocks")));
    }
    Ok(len / blocks)
}

/// Block means of `data` (trailing samples that do not fill a block are dropped).
pub fn block_means<T: Real>(data: &[T], blocks: usize) -> Result<Vec<T>> {
    let size = check(data.len(), blocks)?;
    Ok(data
        .chunks_exact(size)
        .take(blocks)
        .map(|c| c.iter().copied().sum::<T>() / T::of_usize(size))
        .collect())
}

/// Mean and standard error from independent block means.
pub fn blocked_mean<T: Real>(data: &[T], blocks: usize) -> Result<(T, T)> {
    let b = block_means(data, blocks)?;
    let n = T::of_usize(b.len());
    let mean = b.iter().copied().sum::<T>() / n;
    let var = b.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / (n - T::one());
    Ok((mean, (var / n).sqrt()))
}

/// Jackknife over blocks for a function of several column means.
pub fn jackknife<T: Real>(
    columns: &[&[T]],
    blocks: usize,
    f: impl Fn(&[T]) -> T,
) -> Result<(T, T)> {
    let means: Vec<Vec<T>> = columns
        .iter()
        .map(|c| block_means(c, blocks))
        .collect::<Result<_>>()?;
    let nb = means[0].len();
    let n = T::of_usize(nb);
    let totals: Vec<T> = means.iter().map(|m| m.iter().copied().sum()).collect();
    let full: Vec<T> = totals.iter().map(|&t| t / n).collect();
    let value = f(&full);
    let mut loo = Vec::with_capacity(nb);
    let mut buf = vec![T::zero(); columns.len()];
    for i in 0..nb {
        for (k, m) in means.iter().enumerate() {
            buf[k] = (totals[k] - m[i]) / (n - T::one());
        }
        loo.push(f(&buf));
    }
    let mean_loo = loo.iter().copied().sum::<T>() / n;
    let var = loo.iter().map(|&x| (x - mean_loo) * (x - mean_loo)).sum::<T>() * (n - T::one()) / n;
    Ok((value, var.sqrt()))
}

/// Integrated autocorrelation time with a self-consistent window `W >= c * tau`.
pub fn integrated_autocorrelation<T: Real>(data: &[T]) -> T {
    let n = data.len();
    if n < 4 {
        return T::of(0.5);
    }
    let mean = data.iter().copied().sum::<T>() / T::of_usize(n);
    let c0 = data.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / T::of_usize(n);
    if c0 <= T::zero() {
        return T::of(0.5);
    }
    let mut tau = T::of(0.5);
    for t in 1..n / 2 {
        let ct = (0..n - t)
            .map(|i| (data[i] - mean) * (data[i + t] - mean))
            .sum::<T>()
            / T::of_usize(n - t);
        tau = tau + ct / c0;
        if T::of_usize(t) >= T::of(6.0) * tau {
            break;
        }
    }
    tau
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 1..=n {
        let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push(((1.0 - x) / 2.0, w / 2.0));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Parametric bootstrap: resamples every input as an independent Gaussian
/// with its standard error and returns mean and spread of `f` over the
/// replicas where it is defined.
pub fn gaussian_bootstrap(
    values: &[(f64, f64)],
    replicas: usize,
    seed: u64,
    f: impl Fn(&[f64]) -> Option<f64>,
) -> Option<(f64, f64, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(replicas);
    let mut buf = vec![0.0; values.len()];
    for _ in 0..replicas {
        for (b, &(m, s)) in buf.iter_mut().zip(values) {
            *b = m + s * standard_normal(&mut rng);
        }
        if let Some(x) = f(&buf) {
            out.push(x);
        }
    }
    if out.len() < 2 {
        return None;
    }
    let n = out.len() as f64;
    let mean = out.iter().sum::<f64>() / n;
    let var = out.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt(), out.len()))
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Weighted least squares line `y = a + b x`; returns `(a, b, se_a, se_b)`.
/// Zero errors fall back to unit weights.
pub fn linear_fit(x: &[f64], y: &[f64], sigma: &[f64]) -> Result<(f64, f64, f64, f64)> {
    if x.len() < 2 || x.len() != y.len() || x.len() != sigma.len() {
        return Err(Error::Estimator("linear fit needs at least two points".into()));
    }
    let unit = sigma.iter().all(|&s| s <= 0.0);
    let w: Vec<f64> = sigma
        .iter()
        .map(|&s| if unit || s <= 0.0 { 1.0 } else { 1.0 / (s * s) })
        .collect();
    let s: f64 = w.iter().sum();
    let sx: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
    let sy: f64 = w.iter().zip(y).map(|(w, y)| w * y).sum();
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * x * x).sum();
    let sxy: f64 = w.iter().zip(x).zip(y).map(|((w, x), y)| w * x * y).sum();
    let d = s * sxx - sx * sx;
    if d.abs() < 1e-300 {
        return Err(Error::Estimator("degenerate abscissae".into()));
    }
    let b = (s * sxy - sx * sy) / d;
    let a = (sxx * sy - sx * sxy) / d;
    let (mut se_a, mut se_b) = ((sxx / d).sqrt(), (s / d).sqrt());
    if unit && x.len() > 2 {
        let rss: f64 = x.iter().zip(y).map(|(x, y)| (y - a - b * x).powi(2)).sum();
        let scale = (rss / (x.len() - 2) as f64).sqrt();
        se_a *= scale;
        se_b *= scale;
    } else if unit {
        se_a = 0.0;
        se_b = 0.0;
    }
    Ok((a, b, se_a, se_b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let rule = gauss_legendre(12);
        assert_eq!(rule.len(), 12);
        let w: f64 = rule.iter().map(|r| r.1).sum();
        assert!((w - 1.0).abs() < 1e-14);
        // exact up to degree 23
        let i: f64 = rule.iter().map(|&(x, w)| w * x.powi(23)).sum();
        assert!((i - 1.0 / 24.0).abs() < 1e-14);
    }

    #[test]
    fn blocking_rejects_few_blocks() {
        let d = vec![1.0f64; 100];
        assert!(blocked_mean(&d, 10).is_err());
        assert!(blocked_mean(&d, 200).is_err());
        let (m, s) = blocked_mean(&d, 32).unwrap();
        assert_eq!((m, s), (1.0, 0.0));
    }

    #[test]
    fn jackknife_of_mean_equals_blocking() {
        let d: Vec<f64> = (0..640).map(|i| ((i * 37) % 11) as f64).collect();
        let (m1, s1) = blocked_mean(&d, 32).unwrap();
        let (m2, s2) = jackknife(&[&d], 32, |v| v[0]).unwrap();
        assert!((m1 - m2).abs() < 1e-12 && (s1 - s2).abs() < 1e-12);
    }

    #[test]
    fn exact_line_fit() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 0.7 * v).collect();
        let (a, b, _, _) = linear_fit(&x, &y, &[0.0; 4]).unwrap();
        assert!(a.abs() < 1e-12 && (b - 0.7).abs() < 1e-12);
    }
}
