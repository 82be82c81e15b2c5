//! Critical-point location from Binder-cumulant crossings.

use rayon::prelude::*;
use serde::Serialize;

use super::{equilibrium, stats, Schedule};
use crate::classical::SpinModel;
use crate::error::{Error, Result};

pub const BOOTSTRAP_REPLICAS: usize = 2000;

#[derive(Clone, Debug, Serialize)]
pub struct BinderPoint {
    pub size: usize,
    pub p: f64,
    pub binder: f64,
    pub standard_error: f64,
    pub m2: f64,
    pub stream: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CriticalEstimate {
    pub p_c: f64,
    pub standard_error: f64,
    /// Crossings of consecutive size pairs at the central values.
    pub pair_crossings: Vec<(usize, usize, f64)>,
    pub points: Vec<BinderPoint>,
}

/// First `p` where `U_big - U_small` changes sign, by linear interpolation
/// in `p`.
fn crossing(grid: &[f64], small: &[f64], big: &[f64]) -> Option<f64> {
    let d: Vec<f64> = big.iter().zip(small).map(|(b, s)| b - s).collect();
    (1..grid.len()).find_map(|i| {
        ((d[i - 1] > 0.0) != (d[i] > 0.0)).then(|| {
            let t = d[i - 1] / (d[i - 1] - d[i]);
            grid[i - 1] + t * (grid[i] - grid[i - 1])
        })
    })
}

fn mean_crossing(grid: &[f64], sizes: usize, u: &[f64]) -> Option<f64> {
    let g = grid.len();
    let mut acc = 0.0;
    for k in 1..sizes {
        acc += crossing(grid, &u[(k - 1) * g..k * g], &u[k * g..(k + 1) * g])?;
    }
    Some(acc / (sizes - 1) as f64)
}

/// `family(size, p)` builds the model at linear size `size`. The estimate averages the
/// crossings of consecutive sizes; its error is a Gaussian bootstrap over
/// the Binder errors.
pub fn locate_critical_point(
    family: impl Fn(usize, f64) -> Result<SpinModel<f64>> + Sync,
    sizes: &[usize],
    p_grid: &[f64],
    schedule: &Schedule,
    seed: u64,
) -> Result<CriticalEstimate> {
    if sizes.len() < 3 {
        return Err(Error::Invalid("Binder crossing needs at least three sizes".into()));
    }
    if p_grid.len() < 2 || p_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Invalid("p grid must be increasing with two or more points".into()));
    }
    let mut sizes = sizes.to_vec();
    sizes.sort_unstable();
    let jobs: Vec<(usize, f64)> = sizes
        .iter()
        .flat_map(|&l| p_grid.iter().map(move |&p| (l, p)))
        .collect();
    let points: Vec<BinderPoint> = jobs
        .par_iter()
        .enumerate()
        .map(|(i, &(size, p))| {
            let eq = equilibrium(&family(size, p)?, schedule, seed, i as u64)?;
            Ok(BinderPoint {
                size,
                p,
                binder: eq.binder.value,
                standard_error: eq.binder.standard_error,
                m2: eq.m2.value,
                stream: i as u64,
            })
        })
        .collect::<Result<_>>()?;
    let u: Vec<f64> = points.iter().map(|b| b.binder).collect();
    let g = p_grid.len();
    let pair_crossings = (1..sizes.len())
        .map(|k| {
            crossing(p_grid, &u[(k - 1) * g..k * g], &u[k * g..(k + 1) * g])
                .map(|x| (sizes[k - 1], sizes[k], x))
                .ok_or_else(|| {
                    Error::Estimator(format!(
                        "no Binder crossing of sizes {} and {} inside [{}, {}] (out of range)",
                        sizes[k - 1],
                        sizes[k],
                        p_grid[0],
                        p_grid[g - 1]
                    ))
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let p_c = pair_crossings.iter().map(|c| c.2).sum::<f64>() / pair_crossings.len() as f64;
    let values: Vec<(f64, f64)> = points.iter().map(|b| (b.binder, b.standard_error)).collect();
    let n = sizes.len();
    let (_, sd, _) = stats::gaussian_bootstrap(&values, BOOTSTRAP_REPLICAS, seed, |u| {
        mean_crossing(p_grid, n, u)
    })
    .ok_or_else(|| Error::Estimator("bootstrap replicas without a crossing".into()))?;
    Ok(CriticalEstimate {
        p_c,
        standard_error: sd,
        pair_crossings,
        points,
    })
}
