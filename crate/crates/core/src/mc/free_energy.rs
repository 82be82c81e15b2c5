//! Free-energy differences `F_target - F_model` with `F = -ln Z`.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use super::{run_chain, stats, McEstimate, Method, Sampler, Schedule};
use crate::classical::{Compiled, SpinModel};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Minimum effective-sample fraction accepted by the perturbation estimator.
pub const MIN_OVERLAP: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FreeEnergyMethod {
    /// Gauss-Legendre thermodynamic integration over `H(l) = (1-l) H_a + l H_b`.
    LambdaIntegration { nodes: usize },
    /// Single-shot `-ln <exp(-(H_b - H_a))>_a`.
    Perturbation,
}

impl Default for FreeEnergyMethod {
    fn default() -> Self {
        Self::LambdaIntegration { nodes: 12 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LambdaNode<T: Real> {
    pub lambda: f64,
    pub weight: f64,
    pub mean: T,
    pub standard_error: T,
    pub stream: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FreeEnergy<T: Real> {
    pub estimate: McEstimate<T>,
    pub nodes: Vec<LambdaNode<T>>,
    /// Effective-sample fraction (perturbation only).
    pub overlap: Option<T>,
}

/// Union of the monomials of two models over the same variables, with
/// coefficients of both endpoints.
struct Interpolation<T: Real> {
    base: Compiled<T>,
    ja: Vec<T>,
    jb: Vec<T>,
    dc: T,
}

impl<T: Real> Interpolation<T> {
    fn new(a: &Compiled<T>, b: &Compiled<T>) -> Result<Self> {
        if a.var_of != b.var_of {
            return Err(Error::Unsupported(
                "interpolation needs models over the same variables".into(),
            ));
        }
        let mut index: HashMap<SmallVec<[u32; 4]>, usize> = HashMap::new();
        let mut monomials = Vec::new();
        let (mut ja, mut jb) = (Vec::new(), Vec::new());
        for (side, m) in [a, b].into_iter().enumerate() {
            for (vars, j) in &m.monomials {
                let k = *index.entry(vars.clone()).or_insert_with(|| {
                    monomials.push((vars.clone(), T::zero()));
                    ja.push(T::zero());
                    jb.push(T::zero());
                    monomials.len() - 1
                });
                if side == 0 {
                    ja[k] = *j;
                } else {
                    jb[k] = *j;
                }
            }
        }
        let mut base = a.clone();
        base.monomials = monomials;
        Ok(Self {
            base,
            ja,
            jb,
            dc: b.constant - a.constant,
        })
    }

    fn at(&self, l: T) -> Compiled<T> {
        let mut c = self.base.clone();
        for (k, m) in c.monomials.iter_mut().enumerate() {
            m.1 = (T::one() - l) * self.ja[k] + l * self.jb[k];
        }
        c.constant = c.constant + l * self.dc;
        c.incident = vec![Vec::new(); c.num_vars];
        for (k, (vars, _)) in c.monomials.iter().enumerate() {
            for &v in vars {
                c.incident[v as usize].push(k as u32);
            }
        }
        c
    }

    fn changed(&self) -> Vec<(usize, T)> {
        (0..self.ja.len())
            .filter(|&k| self.ja[k] != self.jb[k])
            .map(|k| (k, self.jb[k] - self.ja[k]))
            .collect()
    }

    /// `H_b - H_a` at the sampler's configuration.
    fn delta(&self, changed: &[(usize, T)], s: &Sampler<T>) -> T {
        changed
            .iter()
            .fold(self.dc, |acc, &(k, dj)| acc - dj * T::of(s.monomial(k) as f64))
    }
}

fn chain_method<T: Real>(c: &Compiled<T>, requested: Method) -> Method {
    match requested {
        Method::Wolff | Method::Hybrid if !c.is_ferromagnetic_pairwise() => Method::Metropolis,
        m => m,
    }
}

/// `F_target - F_model`. Models over the same variables go through the
/// requested estimator; a target that only adds merges goes through
/// [`pin_chain`] with one pin per added merge. For thermodynamic
/// integration the schedule is the total budget, split evenly over nodes.
pub fn free_energy_difference<T: Real>(
    model: &SpinModel<T>,
    target: &SpinModel<T>,
    method: FreeEnergyMethod,
    schedule: &Schedule,
    seed: u64,
) -> Result<FreeEnergy<T>> {
    let (a, b) = (model.compile()?, target.compile()?);
    if a.var_of != b.var_of {
        let extra = added_merges(model, target)?;
        let pins: Vec<Vec<_>> = extra.into_iter().map(|m| vec![m]).collect();
        let chain = pin_chain(model, &pins, schedule, seed)?;
        return Ok(FreeEnergy {
            estimate: chain.estimate,
            nodes: Vec::new(),
            overlap: None,
        });
    }
    let interp = Interpolation::new(&a, &b)?;
    let changed = interp.changed();
    match method {
        FreeEnergyMethod::LambdaIntegration { nodes } => {
            lambda_integration(&interp, &changed, nodes, schedule, seed)
        }
        FreeEnergyMethod::Perturbation => perturbation(&interp, &changed, &a, schedule, seed),
    }
}

fn added_merges<T: Real>(
    model: &SpinModel<T>,
    target: &SpinModel<T>,
) -> Result<Pin> {
    let same_terms = model.num_sites == target.num_sites
        && model.flavors == target.flavors
        && model.terms.len() == target.terms.len()
        && model.terms.iter().zip(&target.terms).all(|(x, y)| {
            x.sites == y.sites
                && x.coupling == y.coupling
                && x.product_coupling == y.product_coupling
                && x.offset == y.offset
        });
    if !same_terms || !target.merges.starts_with(&model.merges) {
        return Err(Error::Unsupported(
            "target must equal the model up to scaled couplings or added merges".into(),
        ));
    }
    Ok(target.merges[model.merges.len()..].to_vec())
}

fn lambda_integration<T: Real>(
    interp: &Interpolation<T>,
    changed: &[(usize, T)],
    nodes: usize,
    schedule: &Schedule,
    seed: u64,
) -> Result<FreeEnergy<T>> {
    if nodes == 0 {
        return Err(Error::Invalid("thermodynamic integration without nodes".into()));
    }
    let per_node = Schedule {
        thermalization: schedule.thermalization / nodes,
        sweeps: schedule.sweeps / nodes,
        ..*schedule
    };
    let rule = stats::gauss_legendre(nodes);
    let records: Vec<LambdaNode<T>> = rule
        .par_iter()
        .enumerate()
        .map(|(i, &(l, w))| {
            if changed.is_empty() && interp.dc == T::zero() {
                return Ok(LambdaNode {
                    lambda: l,
                    weight: w,
                    mean: T::zero(),
                    standard_error: T::zero(),
                    stream: i as u64,
                });
            }
            let c = interp.at(T::of(l));
            let sch = Schedule {
                method: chain_method(&c, per_node.method),
                ..per_node
            };
            let cols = run_chain(&c, &sch, seed, i as u64, |s| [interp.delta(changed, s)])?;
            let (mean, standard_error) = stats::blocked_mean(&cols[0], sch.blocks)?;
            Ok(LambdaNode {
                lambda: l,
                weight: w,
                mean,
                standard_error,
                stream: i as u64,
            })
        })
        .collect::<Result<_>>()?;
    let value = records.iter().map(|r| T::of(r.weight) * r.mean).sum::<T>();
    let var = records
        .iter()
        .map(|r| {
            let x = T::of(r.weight) * r.standard_error;
            x * x
        })
        .sum::<T>();
    Ok(FreeEnergy {
        estimate: McEstimate {
            value,
            standard_error: var.sqrt(),
            sweeps: per_node.sweeps * nodes,
            thermalization: per_node.thermalization * nodes,
            seed,
            method: Method::LambdaIntegration,
            blocks: schedule.blocks,
        },
        nodes: records,
        overlap: None,
    })
}

fn perturbation<T: Real>(
    interp: &Interpolation<T>,
    changed: &[(usize, T)],
    a: &Compiled<T>,
    schedule: &Schedule,
    seed: u64,
) -> Result<FreeEnergy<T>> {
    // sample H_a through the interpolation so monomial indices line up
    let c = interp.at(T::zero());
    debug_assert_eq!(c.num_vars, a.num_vars);
    let sch = Schedule {
        method: chain_method(&c, schedule.method),
        ..*schedule
    };
    let cols = run_chain(&c, &sch, seed, 0, |s| [interp.delta(changed, s)])?;
    let d = &cols[0];
    let shift = d.iter().copied().fold(T::infinity(), T::min);
    let w: Vec<T> = d.iter().map(|&x| (shift - x).exp()).collect();
    let s1 = w.iter().copied().sum::<T>();
    let s2 = w.iter().map(|&x| x * x).sum::<T>();
    let overlap = s1 * s1 / (T::of_usize(w.len()) * s2);
    if overlap < T::of(MIN_OVERLAP) {
        return Err(Error::Estimator(format!(
            "perturbation overlap {overlap:.4} below {MIN_OVERLAP}; use lambda integration"
        )));
    }
    let (mw, sw) = stats::blocked_mean(&w, sch.blocks)?;
    Ok(FreeEnergy {
        estimate: McEstimate {
            value: shift - mw.ln(),
            standard_error: sw / mw,
            sweeps: sch.sweeps,
            thermalization: sch.thermalization,
            seed,
            method: Method::Perturbation,
            blocks: sch.blocks,
        },
        nodes: Vec::new(),
        overlap: Some(overlap),
    })
}

pub type Pin = Vec<((usize, usize), (usize, usize))>;

#[derive(Clone, Debug, Serialize)]
pub struct PinStep<T: Real> {
    /// Probability that the pin is already satisfied in the model with all
    /// earlier pins applied.
    pub probability: T,
    pub standard_error: T,
    /// Size of the flavor-flip group used to symmetrize the indicator.
    pub symmetry_order: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct PinChain<T: Real> {
    /// `-sum_k ln P_k`, the free-energy cost of all pins.
    pub estimate: McEstimate<T>,
    pub steps: Vec<PinStep<T>>,
}

/// Global flavor flips `s_{i,f} -> g_f s_{i,f}` that leave `c` invariant.
pub fn flavor_symmetries<T: Real>(c: &Compiled<T>) -> Vec<Vec<i8>> {
    let f = c.flavors;
    let mut out = Vec::new();
    'g: for bits in 0u32..(1 << f) {
        let g: Vec<i8> = (0..f).map(|k| if bits >> k & 1 == 1 { -1 } else { 1 }).collect();
        let mut act = vec![0i8; c.num_vars];
        for x in 0..c.num_sites * f {
            let v = c.var_of[x];
            let s = g[x % f];
            if act[v] == 0 {
                act[v] = s;
            } else if act[v] != s {
                continue 'g;
            }
        }
        for (vars, _) in &c.monomials {
            let p: i8 = vars.iter().map(|&v| act[v as usize]).product();
            if p != 1 {
                continue 'g;
            }
        }
        out.push(g);
    }
    out
}

/// Applies the pins one after another and estimates each acceptance ratio
/// `P_k = Z_k / Z_{k-1}` as the symmetrized indicator average in the model
/// with the earlier pins, one independent chain (stream `k`) per pin.
pub fn pin_chain<T: Real>(
    base: &SpinModel<T>,
    pins: &[Pin],
    schedule: &Schedule,
    seed: u64,
) -> Result<PinChain<T>> {
    let models: Vec<SpinModel<T>> = (0..pins.len())
        .map(|k| {
            let mut m = base.clone();
            for p in &pins[..k] {
                m.merges.extend_from_slice(p);
            }
            m
        })
        .collect();
    let steps: Vec<PinStep<T>> = models
        .par_iter()
        .zip(pins)
        .enumerate()
        .map(|(k, (m, pin))| pin_step(m, pin, schedule, seed, k as u64))
        .collect::<Result<_>>()?;
    let mut value = T::zero();
    let mut var = T::zero();
    for s in &steps {
        if s.probability <= T::zero() {
            return Err(Error::Estimator("pin never satisfied; increase sweeps".into()));
        }
        value = value - s.probability.ln();
        let r = s.standard_error / s.probability;
        var = var + r * r;
    }
    Ok(PinChain {
        estimate: McEstimate {
            value,
            standard_error: var.sqrt(),
            sweeps: schedule.sweeps * pins.len(),
            thermalization: schedule.thermalization * pins.len(),
            seed,
            method: Method::PinChain,
            blocks: schedule.blocks,
        },
        steps,
    })
}

fn pin_step<T: Real>(
    model: &SpinModel<T>,
    pin: &Pin,
    schedule: &Schedule,
    seed: u64,
    stream: u64,
) -> Result<PinStep<T>> {
    let c = model.compile()?;
    let group = flavor_symmetries(&c);
    let pairs: Vec<(usize, usize, usize, usize)> = pin
        .iter()
        .map(|&((s1, f1), (s2, f2))| (c.var(s1, f1), c.var(s2, f2), f1, f2))
        .collect();
    let inv = T::one() / T::of_usize(group.len());
    let sch = Schedule {
        method: chain_method(&c, schedule.method),
        ..*schedule
    };
    let cols = run_chain(&c, &sch, seed, stream, |s| {
        let sp = s.spins();
        let hits = group
            .iter()
            .filter(|g| {
                pairs
                    .iter()
                    .all(|&(a, b, fa, fb)| g[fa] * sp[a] == g[fb] * sp[b])
            })
            .count();
        [T::of_usize(hits) * inv]
    })?;
    let (probability, standard_error) = stats::blocked_mean(&cols[0], sch.blocks)?;
    Ok(PinStep {
        probability,
        standard_error,
        symmetry_order: group.len(),
    })
}
