//! Markov-chain Monte Carlo for compiled spin models.
//!
//! Chains use `ChaCha8Rng` seeded from `(seed, stream)`, so a chain is
//! reproducible bit for bit and independent chains never share a stream.

pub mod critical;
pub mod free_energy;
pub mod stats;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classical::{Compiled, SpinModel};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub use critical::{locate_critical_point, BinderPoint, CriticalEstimate};
pub use free_energy::{free_energy_difference, pin_chain, FreeEnergy, FreeEnergyMethod, LambdaNode};
pub use stats::MIN_BLOCKS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Metropolis,
    Wolff,
    /// One Metropolis sweep followed by one Wolff sweep.
    Hybrid,
    LambdaIntegration,
    Perturbation,
    PinChain,
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub thermalization: usize,
    pub sweeps: usize,
    #[serde(default = "default_blocks")]
    pub blocks: usize,
    pub method: Method,
}

fn default_blocks() -> usize {
    MIN_BLOCKS
}

impl Schedule {
    pub fn new(thermalization: usize, sweeps: usize, method: Method) -> Self {
        Self {
            thermalization,
            sweeps,
            blocks: MIN_BLOCKS,
            method,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks < MIN_BLOCKS || self.sweeps < self.blocks {
            return Err(Error::Estimator(format!(
                "{} sweeps in {} blocks; need at least {MIN_BLOCKS} non-empty blocks",
                self.sweeps, self.blocks
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McEstimate<T: Real> {
    pub value: T,
    pub standard_error: T,
    pub sweeps: usize,
    pub thermalization: usize,
    pub seed: u64,
    pub method: Method,
    pub blocks: usize,
}

impl<T: Real> McEstimate<T> {
    pub fn exact(value: T) -> Self {
        Self {
            value,
            standard_error: T::zero(),
            sweeps: 0,
            thermalization: 0,
            seed: 0,
            method: Method::Exact,
            blocks: 0,
        }
    }

    /// `|value - target| / standard_error` (infinite for a zero error that misses).
    pub fn deviation(&self, target: T) -> T {
        let d = (self.value - target).abs();
        if self.standard_error > T::zero() {
            d / self.standard_error
        } else if d == T::zero() {
            T::zero()
        } else {
            T::infinity()
        }
    }
}

pub fn chain_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Spin configuration of a compiled model with cached monomial values and
/// energy.
pub struct Sampler<'m, T: Real> {
    model: &'m Compiled<T>,
    sigma: Vec<i8>,
    vals: Vec<i8>,
    energy: T,
    rng: ChaCha8Rng,
    p_add: Vec<T>,
    wolff_ok: bool,
    stack: Vec<u32>,
    mark: Vec<bool>,
    sites0: Vec<usize>,
    /// Fixed cluster flips per Wolff sweep; `None` while adapting.
    wolff_count: Option<usize>,
    cluster_total: u64,
    cluster_flips: u64,
}

impl<'m, T: Real> Sampler<'m, T> {
    /// Cold start (all spins `+1`).
    pub fn new(model: &'m Compiled<T>, rng: ChaCha8Rng) -> Self {
        let n = model.num_vars;
        let sigma = vec![1i8; n];
        let vals = vec![1i8; model.monomials.len()];
        let energy = model.energy(&sigma);
        let p_add = model
            .monomials
            .iter()
            .map(|(_, j)| T::one() - (-(*j + *j)).exp())
            .collect();
        let sites0 = (0..model.num_sites).map(|s| model.var(s, 0)).collect();
        Self {
            model,
            sigma,
            vals,
            energy,
            rng,
            p_add,
            wolff_ok: model.is_ferromagnetic_pairwise(),
            stack: Vec::new(),
            mark: vec![false; n],
            sites0,
            wolff_count: None,
            cluster_total: 0,
            cluster_flips: 0,
        }
    }

    pub fn spins(&self) -> &[i8] {
        &self.sigma
    }

    pub fn spin(&self, site: usize, flavor: usize) -> i8 {
        self.sigma[self.model.var(site, flavor)]
    }

    pub fn energy(&self) -> T {
        self.energy
    }

    pub fn recomputed_energy(&self) -> T {
        self.model.energy(&self.sigma)
    }

    /// Value `prod sigma` of monomial `k`.
    pub fn monomial(&self, k: usize) -> i8 {
        self.vals[k]
    }

    /// `(1/S) sum_i s_i` over flavor 0.
    pub fn magnetization(&self) -> T {
        let m: i64 = self.sites0.iter().map(|&v| self.sigma[v] as i64).sum();
        T::of(m as f64) / T::of_usize(self.sites0.len().max(1))
    }

    pub fn supports_wolff(&self) -> bool {
        self.wolff_ok
    }

    fn flip(&mut self, v: usize) {
        self.sigma[v] = -self.sigma[v];
        for &k in &self.model.incident[v] {
            let k = k as usize;
            let old = self.vals[k];
            self.vals[k] = -old;
            let j = self.model.monomials[k].1;
            self.energy = self.energy + T::of(2.0 * old as f64) * j;
        }
    }

    fn delta(&self, v: usize) -> T {
        let mut d = T::zero();
        for &k in &self.model.incident[v] {
            let k = k as usize;
            d = d + self.model.monomials[k].1 * T::of(self.vals[k] as f64);
        }
        d + d
    }

    pub fn metropolis_sweep(&mut self) {
        for v in 0..self.model.num_vars {
            let d = self.delta(v);
            // a(0) = 1/2 keeps free spins from flipping deterministically
            let accept = if d < T::zero() {
                true
            } else if d == T::zero() {
                self.rng.gen::<bool>()
            } else {
                T::of(self.rng.gen::<f64>()) < (-d).exp()
            };
            if accept {
                self.flip(v);
            }
        }
    }

    /// One cluster flip; returns the cluster size.
    pub fn wolff_update(&mut self) -> Result<usize> {
        if !self.wolff_ok {
            return Err(Error::Unsupported(
                "Wolff updates need ferromagnetic pair couplings and no fields".into(),
            ));
        }
        let n = self.model.num_vars;
        if n == 0 {
            return Ok(0);
        }
        let seed = self.rng.gen_range(0..n);
        let s0 = self.sigma[seed];
        self.stack.clear();
        self.stack.push(seed as u32);
        self.mark[seed] = true;
        let mut members = vec![seed as u32];
        self.flip(seed);
        while let Some(v) = self.stack.pop() {
            for idx in 0..self.model.incident[v as usize].len() {
                let k = self.model.incident[v as usize][idx] as usize;
                let vars = &self.model.monomials[k].0;
                let u = if vars[0] == v { vars[1] } else { vars[0] } as usize;
                if !self.mark[u]
                    && self.sigma[u] == s0
                    && T::of(self.rng.gen::<f64>()) < self.p_add[k]
                {
                    self.mark[u] = true;
                    self.flip(u);
                    self.stack.push(u as u32);
                    members.push(u as u32);
                }
            }
        }
        for &m in &members {
            self.mark[m as usize] = false;
        }
        Ok(members.len())
    }

    /// While adapting, flips clusters until their sizes add up to the number
    /// of variables. After [`Self::freeze_wolff_count`] the number of flips
    /// is fixed, since a state-dependent stopping rule biases measurements.
    pub fn wolff_sweep(&mut self) -> Result<()> {
        match self.wolff_count {
            Some(k) => {
                for _ in 0..k {
                    self.wolff_update()?;
                }
            }
            None => {
                let mut flipped = 0;
                while flipped < self.model.num_vars {
                    let c = self.wolff_update()?;
                    flipped += c;
                    self.cluster_total += c as u64;
                    self.cluster_flips += 1;
                }
            }
        }
        Ok(())
    }

    /// Fixes the flips per Wolff sweep to `n_vars / <cluster size>` as
    /// measured so far (at least one).
    pub fn freeze_wolff_count(&mut self) {
        let k = if self.cluster_total == 0 {
            1
        } else {
            let mean = self.cluster_total as f64 / self.cluster_flips as f64;
            ((self.model.num_vars as f64 / mean).round() as usize).max(1)
        };
        self.wolff_count = Some(k);
    }

    pub fn sweep(&mut self, method: Method) -> Result<()> {
        match method {
            Method::Metropolis => self.metropolis_sweep(),
            Method::Wolff => self.wolff_sweep()?,
            Method::Hybrid => {
                self.metropolis_sweep();
                self.wolff_sweep()?;
            }
            other => {
                return Err(Error::Unsupported(format!("{other:?} is not an update scheme")))
            }
        }
        Ok(())
    }

    /// Metropolis when Wolff is not applicable, hybrid otherwise.
    pub fn default_method(&self) -> Method {
        if self.wolff_ok {
            Method::Hybrid
        } else {
            Method::Metropolis
        }
    }
}

/// Runs one chain and records `measure` after every measurement sweep.
pub fn run_chain<T: Real, const K: usize>(
    model: &Compiled<T>,
    schedule: &Schedule,
    seed: u64,
    stream: u64,
    mut measure: impl FnMut(&Sampler<T>) -> [T; K],
) -> Result<Vec<Vec<T>>> {
    run_chain_columns(model, schedule, seed, stream, K, |s, out| {
        out.copy_from_slice(&measure(s))
    })
}

/// [`run_chain`] for a number of observables known only at run time;
/// `measure` fills a slice of length `k`.
pub fn run_chain_columns<T: Real>(
    model: &Compiled<T>,
    schedule: &Schedule,
    seed: u64,
    stream: u64,
    k: usize,
    mut measure: impl FnMut(&Sampler<T>, &mut [T]),
) -> Result<Vec<Vec<T>>> {
    schedule.validate()?;
    let mut s = Sampler::new(model, chain_rng(seed, stream));
    for _ in 0..schedule.thermalization {
        s.sweep(schedule.method)?;
    }
    if matches!(schedule.method, Method::Wolff | Method::Hybrid) && schedule.thermalization == 0 {
        // calibrate on a few extra sweeps
        for _ in 0..10 {
            s.wolff_sweep()?;
        }
    }
    s.freeze_wolff_count();
    let mut cols = vec![Vec::with_capacity(schedule.sweeps); k];
    let mut buf = vec![T::zero(); k];
    for _ in 0..schedule.sweeps {
        s.sweep(schedule.method)?;
        measure(&s, &mut buf);
        for (c, &x) in cols.iter_mut().zip(&buf) {
            c.push(x);
        }
    }
    Ok(cols)
}

#[derive(Clone, Debug, Serialize)]
pub struct Equilibrium<T: Real> {
    pub energy: McEstimate<T>,
    pub m2: McEstimate<T>,
    pub m4: McEstimate<T>,
    pub binder: McEstimate<T>,
    pub abs_m: McEstimate<T>,
}

/// `<E>`, `<m^2>`, `<m^4>`, `U_4` and `<|m|>` for flavor 0.
pub fn equilibrium<T: Real>(
    model: &SpinModel<T>,
    schedule: &Schedule,
    seed: u64,
    stream: u64,
) -> Result<Equilibrium<T>> {
    let c = model.compile()?;
    let cols = run_chain(&c, schedule, seed, stream, |s| {
        let m = s.magnetization();
        let m2 = m * m;
        [s.energy(), m2, m2 * m2, m.abs()]
    })?;
    let est = |(value, standard_error): (T, T), method| McEstimate {
        value,
        standard_error,
        sweeps: schedule.sweeps,
        thermalization: schedule.thermalization,
        seed,
        method,
        blocks: schedule.blocks,
    };
    let m = schedule.method;
    let b = schedule.blocks;
    Ok(Equilibrium {
        energy: est(stats::blocked_mean(&cols[0], b)?, m),
        m2: est(stats::blocked_mean(&cols[1], b)?, m),
        m4: est(stats::blocked_mean(&cols[2], b)?, m),
        binder: est(
            stats::jackknife(&[&cols[1], &cols[2]], b, |v| {
                T::one() - v[1] / (T::of(3.0) * v[0] * v[0])
            })?,
            m,
        ),
        abs_m: est(stats::blocked_mean(&cols[3], b)?, m),
    })
}

/// `<s_a s_b>` of flavor 0 (boundary spins of the replica model).
pub fn boundary_correlator<T: Real>(
    model: &SpinModel<T>,
    a: usize,
    b: usize,
    schedule: &Schedule,
    seed: u64,
) -> Result<McEstimate<T>> {
    if a == b {
        return Ok(McEstimate::exact(T::one()));
    }
    let c = model.compile()?;
    let (va, vb) = (c.var(a, 0), c.var(b, 0));
    let cols = run_chain(&c, schedule, seed, 0, |s| {
        [T::of((s.spins()[va] * s.spins()[vb]) as f64)]
    })?;
    let (value, standard_error) = stats::blocked_mean(&cols[0], schedule.blocks)?;
    Ok(McEstimate {
        value,
        standard_error,
        sweeps: schedule.sweeps,
        thermalization: schedule.thermalization,
        seed,
        method: schedule.method,
        blocks: schedule.blocks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::plain_ising;
    use crate::lattice::LiebLattice;

    #[test]
    fn energy_cache_does_not_drift() {
        let l = LiebLattice::periodic(6).unwrap();
        let m = plain_ising::<f64>(&l, 0.4, 0.1).compile().unwrap();
        let mut s = Sampler::new(&m, chain_rng(1, 0));
        for _ in 0..2000 {
            s.metropolis_sweep();
        }
        assert!((s.energy() - s.recomputed_energy()).abs() < 1e-9);
        let m = plain_ising::<f64>(&l, 0.45, 0.0).compile().unwrap();
        let mut s = Sampler::new(&m, chain_rng(1, 1));
        for _ in 0..2000 {
            s.sweep(Method::Hybrid).unwrap();
        }
        assert!((s.energy() - s.recomputed_energy()).abs() < 1e-9);
    }

    #[test]
    fn wolff_rejects_fields() {
        let l = LiebLattice::periodic(4).unwrap();
        let m = plain_ising::<f64>(&l, 0.4, 0.1).compile().unwrap();
        let mut s = Sampler::new(&m, chain_rng(0, 0));
        assert!(s.wolff_update().is_err());
        let m = plain_ising::<f64>(&l, -0.4, 0.0).compile().unwrap();
        assert!(!Sampler::new(&m, chain_rng(0, 0)).supports_wolff());
    }

    #[test]
    fn free_clusters_are_single_sites() {
        let l = LiebLattice::periodic(4).unwrap();
        let c = plain_ising::<f64>(&l, 0.0, 0.0).compile().unwrap();
        let mut s = Sampler::new(&c, chain_rng(3, 0));
        for _ in 0..100 {
            assert_eq!(s.wolff_update().unwrap(), 1);
        }
    }

    #[test]
    fn same_seed_same_chain() {
        let l = LiebLattice::periodic(4).unwrap();
        let m = plain_ising::<f64>(&l, 0.3, 0.0);
        let sch = Schedule::new(10, 64, Method::Hybrid);
        let a = equilibrium(&m, &sch, 9, 0).unwrap();
        let b = equilibrium(&m, &sch, 9, 0).unwrap();
        assert_eq!(a.energy.value.to_bits(), b.energy.value.to_bits());
    }

    #[test]
    fn field_sets_magnetization_sign() {
        let l = LiebLattice::periodic(4).unwrap();
        for h in [0.2, -0.2] {
            let c = plain_ising::<f64>(&l, 0.1, h).compile().unwrap();
            let sch = Schedule::new(100, 3200, Method::Metropolis);
            let cols = run_chain(&c, &sch, 5, 0, |s| [s.magnetization()]).unwrap();
            let (m, _) = stats::blocked_mean(&cols[0], 32).unwrap();
            assert_eq!(m > 0.0, h > 0.0);
        }
    }

    #[test]
    fn coincident_boundary_points_are_exact() {
        let l = LiebLattice::open(3).unwrap();
        let m = plain_ising::<f64>(&l, 0.3, 0.0);
        let e = boundary_correlator(&m, 0, 0, &Schedule::new(0, 32, Method::Metropolis), 0).unwrap();
        assert_eq!((e.value, e.standard_error), (1.0, 0.0));
    }
}

