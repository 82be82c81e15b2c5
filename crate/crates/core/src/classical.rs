//! Classical spin models obtained from the Pauli expansion, and exact
//! evaluation of their partition functions.
//!
//! A [`SpinModel`] has `num_sites` sites carrying `flavors` Ising spins each.
//! Every [`Term`] acts on a set of sites `S` with energy
//!
//! ```text
//! H_t = offset - coupling * sum_a prod_{i in S} s_i^a
//!              - product_coupling * prod_a prod_{i in S} s_i^a
//! ```
//!
//! and the Boltzmann weight is `exp(-H)`. Merges identify `(site, flavor)`
//! pairs as one variable. A model is compiled into monomials over the
//! remaining free variables before it is enumerated or sampled.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;
use smallvec::SmallVec;

use crate::cluster::PauliExpansion;
use crate::error::{Error, Result};
use crate::lattice::{EdgePath, LiebLattice};
use crate::scalar::{KahanSum, Real};

/// Largest number of free binary variables summed exhaustively.
pub const EXACT_LIMIT: usize = 28;
/// Widest row handled by the open-row transfer matrix.
pub const TRANSFER_OPEN_WIDTH: usize = 12;
/// Widest row handled by the periodic-row transfer matrix.
pub const TRANSFER_PERIODIC_WIDTH: usize = 8;

/// Which lattice object a term came from, so that geometric edits (cutting
/// bonds) can find it again.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "kind", content = "id", rename_all = "lowercase")]
pub enum TermTag {
    Edge(usize),
    Vertex(usize),
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Term<T: Real> {
    pub sites: Vec<usize>,
    pub coupling: T,
    pub product_coupling: T,
    pub offset: T,
    pub tag: TermTag,
}

/// Row-major arrangement of the sites, `site = row * cols + col`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Layout {
    pub rows: usize,
    pub cols: usize,
    pub periodic_rows: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpinModel<T: Real> {
    pub num_sites: usize,
    pub flavors: usize,
    pub terms: Vec<Term<T>>,
    /// Pairs of `(site, flavor)` forced equal.
    pub merges: Vec<((usize, usize), (usize, usize))>,
    pub layout: Option<Layout>,
}

/// `(J, h, U, t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Couplings {
    pub j: f64,
    pub h: f64,
    pub u: f64,
    pub t: f64,
}

pub fn coupling_from_rate(p: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&p) {
        return Err(Error::Rate(p));
    }
    Ok(0.0 - (1.0 - 2.0 * p).ln())
}

/// Inverse of [`coupling_from_rate`].
pub fn rate_from_coupling(j: f64) -> f64 {
    (1.0 - (-j).exp()) / 2.0
}

pub fn couplings_from_errors(p_x: f64, p_z: f64) -> Result<Couplings> {
    let j = coupling_from_rate(p_x)?;
    let h = coupling_from_rate(p_z)?;
    Ok(Couplings { j, h, u: j, t: h })
}

/// 2D Ising critical coupling `ln(1 + sqrt 2) / 2`.
pub fn ising_critical_coupling() -> f64 {
    (1.0 + 2f64.sqrt()).ln() / 2.0
}

/// Critical bit-flip rate of the second Rényi moment (coupling `J`).
pub fn critical_rate_n2() -> f64 {
    rate_from_coupling(ising_critical_coupling())
}

/// Critical bit-flip rate of the decoupled replica limit (coupling `J/2`).
pub fn critical_rate_decoupled() -> f64 {
    rate_from_coupling(2.0 * ising_critical_coupling())
}

fn k_of<T: Real>(lambda: T) -> Result<T> {
    if lambda <= T::zero() {
        return Err(Error::Unsupported(
            "damping factor 0 (rate 1/2) maps to an infinite coupling".into(),
        ));
    }
    Ok(-lambda.ln())
}

impl<T: Real> SpinModel<T> {
    pub fn new(num_sites: usize, flavors: usize) -> Self {
        Self {
            num_sites,
            flavors,
            terms: Vec::new(),
            merges: Vec::new(),
            layout: None,
        }
    }

    /// Adds the weight `lambda^{n_S}` of one replica-trace factor, where
    /// `n_S` is the parity of the selected bits over `sites`, for an
    /// `(flavors + 1)`-replica trace. `K = -ln lambda`.
    pub fn add_parity_factor(&mut self, sites: Vec<usize>, k: T, tag: TermTag) {
        if k == T::zero() {
            return;
        }
        let half = k * T::of(0.5);
        let odd = sites.len() % 2 == 1;
        let sign = |neg: bool| if neg { -half } else { half };
        let replicas = self.flavors + 1;
        let product_odd = odd && self.flavors % 2 == 1;
        self.terms.push(Term {
            sites,
            coupling: sign(odd),
            product_coupling: if self.flavors > 1 { sign(product_odd) } else { T::zero() },
            offset: half * T::of_usize(replicas),
            tag,
        });
        if self.flavors == 1 {
            // the replica product coincides with the single flavor
            let t = self.terms.last_mut().unwrap();
            t.coupling = t.coupling + t.coupling;
        }
    }

    pub fn total_offset(&self) -> T {
        self.terms.iter().map(|t| t.offset).sum()
    }

    pub fn with_layout(mut self, layout: Layout) -> Self {
        self.layout = Some(layout);
        self
    }

    /// Sets every single-flavor offset to `ln cosh(coupling)`, i.e. term
    /// weights `exp(K s s') / cosh K`.
    pub fn symmetric_offsets(mut self) -> Result<Self> {
        if self.flavors != 1 {
            return Err(Error::Unsupported("symmetric offsets need one flavor".into()));
        }
        for t in &mut self.terms {
            t.offset = (t.coupling + t.product_coupling).cosh().ln();
        }
        Ok(self)
    }

    pub fn merge(&mut self, a: (usize, usize), b: (usize, usize)) {
        self.merges.push((a, b));
    }

    /// Forces all flavors of `site` equal.
    pub fn merge_flavors(&mut self, site: usize) {
        for f in 1..self.flavors {
            self.merges.push(((site, 0), (site, f)));
        }
    }

    pub fn energy_of(&self, spins: &[i8]) -> T {
        // spins indexed site * flavors + flavor
        let f = self.flavors;
        let mut e = T::zero();
        for t in &self.terms {
            let mut prod_all = 1i8;
            let mut single = T::zero();
            for a in 0..f {
                let p: i8 = t.sites.iter().map(|&i| spins[i * f + a]).product();
                prod_all *= p;
                single = single + T::of(p as f64);
            }
            e = e + t.offset - t.coupling * single - t.product_coupling * T::of(prod_all as f64);
        }
        e
    }

    pub fn compile(&self) -> Result<Compiled<T>> {
        Compiled::new(self)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Model reduced to monomials over free binary variables:
/// `H = constant - sum_k J_k prod_{v in k} sigma_v`.
#[derive(Clone, Debug)]
pub struct Compiled<T: Real> {
    pub num_vars: usize,
    /// Variable of `(site, flavor)` at index `site * flavors + flavor`.
    pub var_of: Vec<usize>,
    pub monomials: Vec<(SmallVec<[u32; 4]>, T)>,
    pub constant: T,
    pub incident: Vec<Vec<u32>>,
    pub flavors: usize,
    pub num_sites: usize,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

impl<T: Real> Compiled<T> {
    fn new(model: &SpinModel<T>) -> Result<Self> {
        let f = model.flavors;
        if f == 0 {
            return Err(Error::Invalid("model without flavors".into()));
        }
        let n = model.num_sites * f;
        let mut parent: Vec<usize> = (0..n).collect();
        for &((s1, f1), (s2, f2)) in &model.merges {
            if s1 >= model.num_sites || s2 >= model.num_sites || f1 >= f || f2 >= f {
                return Err(Error::Invalid("merge outside the model".into()));
            }
            let (a, b) = (find(&mut parent, s1 * f + f1), find(&mut parent, s2 * f + f2));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut var_id = vec![usize::MAX; n];
        let mut var_of = vec![0; n];
        let mut next = 0;
        for x in 0..n {
            let r = find(&mut parent, x);
            if var_id[r] == usize::MAX {
                var_id[r] = next;
                next += 1;
            }
            var_of[x] = var_id[r];
        }
        let mut acc: HashMap<SmallVec<[u32; 4]>, T> = HashMap::new();
        let mut order: Vec<SmallVec<[u32; 4]>> = Vec::new();
        let mut constant = T::zero();
        let mut push = |vars: SmallVec<[u32; 4]>, c: T, constant: &mut T| {
            if c == T::zero() {
                return;
            }
            if vars.is_empty() {
                *constant = *constant - c;
                return;
            }
            match acc.get_mut(&vars) {
                Some(v) => *v = *v + c,
                None => {
                    order.push(vars.clone());
                    acc.insert(vars, c);
                }
            }
        };
        let reduce = |mut v: Vec<u32>| -> SmallVec<[u32; 4]> {
            v.sort_unstable();
            let mut out = SmallVec::new();
            let mut i = 0;
            while i < v.len() {
                let mut j = i;
                while j < v.len() && v[j] == v[i] {
                    j += 1;
                }
                if (j - i) % 2 == 1 {
                    out.push(v[i]);
                }
                i = j;
            }
            out
        };
        for t in &model.terms {
            if t.sites.iter().any(|&s| s >= model.num_sites) {
                return Err(Error::Invalid("term outside the model".into()));
            }
            constant = constant + t.offset;
            let mut all = Vec::new();
            for a in 0..f {
                let vars: Vec<u32> = t.sites.iter().map(|&s| var_of[s * f + a] as u32).collect();
                all.extend_from_slice(&vars);
                push(reduce(vars), t.coupling, &mut constant);
            }
            push(reduce(all), t.product_coupling, &mut constant);
        }
        let monomials: Vec<_> = order
            .into_iter()
            .map(|k| {
                let c = acc[&k];
                (k, c)
            })
            .filter(|(_, c)| *c != T::zero())
            .collect();
        let mut incident = vec![Vec::new(); next];
        for (k, (vars, _)) in monomials.iter().enumerate() {
            for &v in vars {
                incident[v as usize].push(k as u32);
            }
        }
        Ok(Self {
            num_vars: next,
            var_of,
            monomials,
            constant,
            incident,
            flavors: f,
            num_sites: model.num_sites,
        })
    }

    /// Whether every monomial is a ferromagnetic pair (Wolff-eligible).
    pub fn is_ferromagnetic_pairwise(&self) -> bool {
        self.monomials
            .iter()
            .all(|(v, c)| v.len() == 2 && *c >= T::zero())
    }

    pub fn energy(&self, sigma: &[i8]) -> T {
        let mut e = self.constant;
        for (vars, c) in &self.monomials {
            let p: i8 = vars.iter().map(|&v| sigma[v as usize]).product();
            e = e - *c * T::of(p as f64);
        }
        e
    }

    pub fn var(&self, site: usize, flavor: usize) -> usize {
        self.var_of[site * self.flavors + flavor]
    }
}

/// Requested observables for [`exact_partition`].
#[derive(Clone, Debug, Default)]
pub struct Observables {
    /// `(site, flavor)` pairs whose spin product is averaged.
    pub correlators: Vec<((usize, usize), (usize, usize))>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExactResult<T: Real> {
    pub log_partition: T,
    pub mean_energy: T,
    pub energy_variance: T,
    /// Moments of `m = (1/S) sum_i s_i` over flavor 0.
    pub m2: T,
    pub m4: T,
    pub correlators: Vec<T>,
    pub enumerated_count: u64,
}

impl<T: Real> ExactResult<T> {
    pub fn binder(&self) -> T {
        T::one() - self.m4 / (T::of(3.0) * self.m2 * self.m2)
    }
}

#[derive(Clone)]
struct Acc<T: Real> {
    shift: T,
    z: KahanSum<T>,
    e: KahanSum<T>,
    e2: KahanSum<T>,
    m2: KahanSum<T>,
    m4: KahanSum<T>,
    corr: Vec<KahanSum<T>>,
}

impl<T: Real> Acc<T> {
    fn new(shift: T, nc: usize) -> Self {
        Self {
            shift,
            z: KahanSum::new(),
            e: KahanSum::new(),
            e2: KahanSum::new(),
            m2: KahanSum::new(),
            m4: KahanSum::new(),
            corr: vec![KahanSum::new(); nc],
        }
    }

    fn rescale(&mut self, new_shift: T) {
        let f = (self.shift - new_shift).exp();
        let sc = |k: &KahanSum<T>| {
            let mut n = KahanSum::new();
            n.add(k.value() * f);
            n
        };
        self.z = sc(&self.z);
        self.e = sc(&self.e);
        self.e2 = sc(&self.e2);
        self.m2 = sc(&self.m2);
        self.m4 = sc(&self.m4);
        for c in &mut self.corr {
            *c = sc(c);
        }
        self.shift = new_shift;
    }

    fn merge(mut self, mut other: Self) -> Self {
        let s = self.shift.max(other.shift);
        self.rescale(s);
        other.rescale(s);
        self.z.add(other.z.value());
        self.e.add(other.e.value());
        self.e2.add(other.e2.value());
        self.m2.add(other.m2.value());
        self.m4.add(other.m4.value());
        for (a, b) in self.corr.iter_mut().zip(&other.corr) {
            a.add(b.value());
        }
        self
    }
}

/// Exhaustive `ln Z` and observables by Gray-code enumeration over all free
/// variables, in parallel over blocks of the top variables with a fixed
/// reduction order.
pub fn exact_partition<T: Real>(model: &SpinModel<T>, obs: &Observables) -> Result<ExactResult<T>> {
    let c = model.compile()?;
    let d = c.num_vars;
    if d > EXACT_LIMIT {
        return Err(Error::Budget {
            what: "enumerated spins",
            needed: d,
            limit: EXACT_LIMIT,
        });
    }
    let corr: Vec<(usize, usize)> = obs
        .correlators
        .iter()
        .map(|&((s1, f1), (s2, f2))| (c.var(s1, f1), c.var(s2, f2)))
        .collect();
    // weight of each variable in the flavor-0 magnetization
    let mut mult = vec![0i64; d];
    for s in 0..c.num_sites {
        mult[c.var(s, 0)] += 1;
    }
    let inv_s = T::one() / T::of_usize(c.num_sites.max(1));

    let block_bits = d.min(6);
    let low = d - block_bits;
    let blocks: Vec<u64> = (0..1u64 << block_bits).collect();
    let accs: Vec<Acc<T>> = blocks
        .par_iter()
        .map(|&blk| {
            let mut sigma = vec![1i8; d];
            for b in 0..block_bits {
                if blk >> b & 1 == 1 {
                    sigma[low + b] = -1;
                }
            }
            let mut vals: Vec<i8> = c
                .monomials
                .iter()
                .map(|(v, _)| v.iter().map(|&x| sigma[x as usize]).product())
                .collect();
            let mut e = c.constant;
            for ((_, j), &m) in c.monomials.iter().zip(&vals) {
                e = e - *j * T::of(m as f64);
            }
            let mut mag: i64 = (0..d).map(|v| mult[v] * sigma[v] as i64).sum();
            let mut acc = Acc::new(-e, corr.len());
            let record = |e: T, mag: i64, sigma: &[i8], acc: &mut Acc<T>| {
                let lw = -e;
                if lw > acc.shift + T::of(30.0) {
                    acc.rescale(lw);
                }
                let w = (lw - acc.shift).exp();
                let m = T::of(mag as f64) * inv_s;
                let m2 = m * m;
                acc.z.add(w);
                acc.e.add(w * e);
                acc.e2.add(w * e * e);
                acc.m2.add(w * m2);
                acc.m4.add(w * m2 * m2);
                for (k, &(a, b)) in corr.iter().enumerate() {
                    let p = sigma[a] * sigma[b];
                    acc.corr[k].add(if p > 0 { w } else { -w });
                }
            };
            record(e, mag, &sigma, &mut acc);
            for k in 1..1u64 << low {
                let v = k.trailing_zeros() as usize;
                sigma[v] = -sigma[v];
                mag += 2 * mult[v] * sigma[v] as i64;
                for &m in &c.incident[v] {
                    let m = m as usize;
                    vals[m] = -vals[m];
                    // monomial flipped from -vals to vals
                    e = e - T::of(2.0) * c.monomials[m].1 * T::of(vals[m] as f64);
                }
                record(e, mag, &sigma, &mut acc);
            }
            acc
        })
        .collect();
    let acc = accs
        .into_iter()
        .reduce(|a, b| a.merge(b))
        .expect("at least one block");
    let z = acc.z.value();
    let mean_e = acc.e.value() / z;
    Ok(ExactResult {
        log_partition: z.ln() + acc.shift,
        mean_energy: mean_e,
        energy_variance: acc.e2.value() / z - mean_e * mean_e,
        m2: acc.m2.value() / z,
        m4: acc.m4.value() / z,
        correlators: acc.corr.iter().map(|k| k.value() / z).collect(),
        enumerated_count: 1u64 << d,
    })
}

/// `ln Z` without enumeration when every monomial coupling vanishes:
/// each free variable contributes `ln 2`.
pub fn free_log_partition<T: Real>(model: &SpinModel<T>) -> Result<Option<T>> {
    let c = model.compile()?;
    if c.monomials.iter().any(|(_, j)| *j != T::zero()) {
        return Ok(None);
    }
    Ok(Some(T::of_usize(c.num_vars) * T::LN_2() - c.constant))
}

/// `ln Z` and optionally `<s_a s_b>` (flavor 0) by a row transfer matrix.
/// Needs one flavor, no merges, a layout, and couplings that are either
/// inside a row or between vertically aligned sites of adjacent rows.
pub fn transfer_partition<T: Real>(
    model: &SpinModel<T>,
    correlator: Option<(usize, usize)>,
) -> Result<(T, Option<T>)> {
    let layout = model
        .layout
        .ok_or_else(|| Error::Unsupported("transfer matrix needs a layout".into()))?;
    if model.flavors != 1 || !model.merges.is_empty() {
        return Err(Error::Unsupported("transfer matrix needs a plain one-flavor model".into()));
    }
    let Layout { rows, cols: w, periodic_rows } = layout;
    let limit = if periodic_rows { TRANSFER_PERIODIC_WIDTH } else { TRANSFER_OPEN_WIDTH };
    if w > limit {
        return Err(Error::Budget { what: "transfer width", needed: w, limit });
    }
    let c = model.compile()?;
    let ns = 1usize << w;
    // bit set in a row state means spin -1
    let mut intra = vec![vec![T::zero(); ns]; rows];
    let mut inter = vec![vec![T::zero(); ns]; rows];
    let parity = |x: usize| if x.count_ones().is_multiple_of(2) { T::one() } else { -T::one() };
    for (vars, j) in &c.monomials {
        let pos: SmallVec<[(usize, usize); 4]> =
            vars.iter().map(|&v| (v as usize / w, v as usize % w)).collect();
        let r0 = pos[0].0;
        if pos.iter().all(|p| p.0 == r0) {
            let mask = pos.iter().fold(0usize, |m, p| m | 1 << p.1);
            for (s, e) in intra[r0].iter_mut().enumerate() {
                *e = *e - *j * parity(s & mask);
            }
            continue;
        }
        let vertical = pos.len() == 2 && pos[0].1 == pos[1].1;
        let (ra, rb) = (pos[0].0.min(pos[1].0), pos[0].0.max(pos[1].0));
        let step = if rb == ra + 1 {
            Some(ra)
        } else if periodic_rows && ra == 0 && rb == rows - 1 {
            Some(rows - 1)
        } else {
            None
        };
        match (vertical, step) {
            (true, Some(r)) => {
                let bit = 1 << pos[0].1;
                for (d, e) in inter[r].iter_mut().enumerate() {
                    *e = *e - *j * parity(d & bit);
                }
            }
            _ => {
                return Err(Error::Unsupported(
                    "coupling is not row-local or vertical between adjacent rows".into(),
                ))
            }
        }
    }
    let diag: Vec<Vec<T>> = intra.iter().map(|r| r.iter().map(|&e| (-e).exp()).collect()).collect();
    let wts: Vec<Vec<T>> = inter.iter().map(|r| r.iter().map(|&e| (-e).exp()).collect()).collect();
    let mut ins_mask = vec![0usize; rows];
    if let Some((a, b)) = correlator {
        ins_mask[a / w] ^= 1 << (a % w);
        ins_mask[b / w] ^= 1 << (b % w);
    }
    let propagate = |v: &mut Vec<T>, r: usize, log_scale: &mut T, insert: bool| {
        let wr = &wts[r];
        let mut out = vec![T::zero(); ns];
        for (s2, o) in out.iter_mut().enumerate() {
            let mut acc = T::zero();
            for (s, &x) in v.iter().enumerate() {
                acc = acc + x * wr[s ^ s2];
            }
            *o = acc;
        }
        let next = (r + 1) % rows;
        for (s, o) in out.iter_mut().enumerate() {
            *o = *o * diag[next][s];
            if insert {
                *o = *o * parity(s & ins_mask[next]);
            }
        }
        let m = out.iter().fold(T::zero(), |m, x| m.max(x.abs()));
        if m > T::zero() {
            for o in out.iter_mut() {
                *o = *o / m;
            }
            *log_scale = *log_scale + m.ln();
        }
        *v = out;
    };
    let run = |insert: bool| -> (T, T) {
        // returns (log scale, signed mantissa)
        let init = |s: usize| {
            let mut x = diag[0][s];
            if insert {
                x = x * parity(s & ins_mask[0]);
            }
            x
        };
        if !periodic_rows {
            let mut v: Vec<T> = (0..ns).map(init).collect();
            let mut ls = T::zero();
            for r in 0..rows - 1 {
                propagate(&mut v, r, &mut ls, insert);
            }
            (ls, v.iter().copied().sum())
        } else {
            let mut parts = Vec::with_capacity(ns);
            for s0 in 0..ns {
                let mut v = vec![T::zero(); ns];
                v[s0] = init(s0);
                let mut ls = T::zero();
                for r in 0..rows - 1 {
                    propagate(&mut v, r, &mut ls, insert);
                }
                // closing step back to row 0 without reapplying its diagonal
                let wr = &wts[rows - 1];
                let val: T = v.iter().enumerate().map(|(s, &x)| x * wr[s ^ s0]).sum();
                parts.push((ls, val));
            }
            let top = parts.iter().fold(T::neg_infinity(), |m, p| m.max(p.0));
            let sum: T = parts.iter().map(|&(l, x)| x * (l - top).exp()).sum();
            (top, sum)
        }
    };
    let (ls, z) = run(false);
    let log_z = ls + z.ln() + c.constant * -T::one();
    let corr = correlator.map(|_| {
        let (ls2, zc) = run(true);
        zc / z * (ls2 - ls).exp()
    });
    Ok((log_z, corr))
}

/// Removes every term attached to an edge of `path` (the bonds a dual loop
/// crosses), i.e. sets their couplings and offsets to zero.
pub fn cut_bond_model<T: Real>(model: &SpinModel<T>, path: &EdgePath) -> SpinModel<T> {
    let mut out = model.clone();
    out.terms
        .retain(|t| !matches!(t.tag, TermTag::Edge(e) if path.edges.contains(&e)));
    out
}

/// Merges the endpoint spins (every flavor) of each listed bond.
pub fn constrained_model<T: Real>(model: &SpinModel<T>, lattice: &LiebLattice, bonds: &[usize]) -> SpinModel<T> {
    let mut out = model.clone();
    for &e in bonds {
        let ep = lattice.endpoints(e);
        if ep.len() == 2 {
            for f in 0..model.flavors {
                out.merge((ep[0], f), (ep[1], f));
            }
        }
    }
    out
}

/// Bonds with exactly one endpoint among `vertices` (the bonds crossing the
/// region boundary; legs and the outer frame never count).
pub fn crossing_bonds(lattice: &LiebLattice, vertices: &[bool]) -> Vec<usize> {
    (0..lattice.num_edges())
        .filter(|&e| {
            let ep = lattice.endpoints(e);
            ep.len() == 2 && vertices[ep[0]] != vertices[ep[1]]
        })
        .collect()
}

fn vertex_layout(lattice: &LiebLattice) -> Layout {
    Layout {
        rows: lattice.size(),
        cols: lattice.size(),
        periodic_rows: lattice.is_periodic(),
    }
}

/// Vertex-side model whose partition function is the `n`-replica sum
/// `sum_{a_1 ^ ... ^ a_n = 0} prod w_A(a_i)` (boundary-flip signs excluded).
/// For `n = 2` this is the Ising model with `J = -ln(1 - 2 p_x)` and field
/// `-h` (phase errors favor `s = -1`).
pub fn ising_model<T: Real>(expansion: &PauliExpansion<T>, n: usize) -> Result<SpinModel<T>> {
    if n < 2 {
        return Err(Error::Invalid(format!("replica index {n} < 2")));
    }
    let l = expansion.lattice();
    let mut m = SpinModel::new(l.num_vertices(), n - 1).with_layout(vertex_layout(l));
    vertex_factors(&mut m, expansion)?;
    Ok(m)
}

/// Single-copy model: `Z = sum_a w_A(a)`, i.e. coupling `J/2` per bond with
/// the wall offset. Also the flavor-decoupled proxy of the `n -> infinity`
/// limit.
pub fn single_copy_model<T: Real>(expansion: &PauliExpansion<T>) -> Result<SpinModel<T>> {
    let l = expansion.lattice();
    let mut m = SpinModel::new(l.num_vertices(), 1).with_layout(vertex_layout(l));
    vertex_factors(&mut m, expansion)?;
    // undo the replica doubling of the one-flavor case
    for t in &mut m.terms {
        t.coupling = t.coupling * T::of(0.5);
        t.offset = t.offset * T::of(0.5);
    }
    Ok(m)
}

pub fn decoupled_model<T: Real>(expansion: &PauliExpansion<T>) -> Result<SpinModel<T>> {
    single_copy_model(expansion)
}

fn vertex_factors<T: Real>(m: &mut SpinModel<T>, e: &PauliExpansion<T>) -> Result<()> {
    let l = e.lattice();
    for edge in 0..l.num_edges() {
        let k = k_of(e.lambda_x(l.edge_qubit(edge)))?;
        m.add_parity_factor(l.endpoints(edge).to_vec(), k, TermTag::Edge(edge));
    }
    for v in 0..l.num_vertices() {
        let k = k_of(e.lambda_z(l.vertex_qubit(v)))?;
        m.add_parity_factor(vec![v], k, TermTag::Vertex(v));
    }
    Ok(())
}

/// Edge-side `n`-replica model (Ising gauge theory): sites are edges, flux
/// terms act on the edges around each vertex, fields on single edges.
pub fn gauge_model<T: Real>(expansion: &PauliExpansion<T>, n: usize) -> Result<SpinModel<T>> {
    if n < 2 {
        return Err(Error::Invalid(format!("replica index {n} < 2")));
    }
    let l = expansion.lattice();
    let mut m = SpinModel::new(l.num_edges(), n - 1);
    for v in 0..l.num_vertices() {
        let k = k_of(expansion.lambda_x(l.vertex_qubit(v)))?;
        m.add_parity_factor(l.incident_edges(v).to_vec(), k, TermTag::Vertex(v));
    }
    for e in 0..l.num_edges() {
        let k = k_of(expansion.lambda_z(l.edge_qubit(e)))?;
        m.add_parity_factor(vec![e], k, TermTag::Edge(e));
    }
    Ok(m)
}

/// Uniform nearest-neighbour Ising model on the vertices, `H = -J sum s s - h sum s`.
pub fn plain_ising<T: Real>(lattice: &LiebLattice, j: T, h: T) -> SpinModel<T> {
    let mut m = SpinModel::new(lattice.num_vertices(), 1).with_layout(vertex_layout(lattice));
    for e in 0..lattice.num_edges() {
        let ep = lattice.endpoints(e);
        if ep.len() == 2 {
            m.terms.push(Term {
                sites: ep.to_vec(),
                coupling: j,
                product_coupling: T::zero(),
                offset: T::zero(),
                tag: TermTag::Edge(e),
            });
        }
    }
    if h != T::zero() {
        for v in 0..lattice.num_vertices() {
            m.terms.push(Term {
                sites: vec![v],
                coupling: h,
                product_coupling: T::zero(),
                offset: T::zero(),
                tag: TermTag::Vertex(v),
            });
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::decohered_state;

    #[test]
    fn couplings_map() {
        let c = couplings_from_errors(0.0, 0.0).unwrap();
        assert_eq!((c.j, c.h, c.u, c.t), (0.0, 0.0, 0.0, 0.0));
        let pc = (1.0 - (2f64.sqrt() - 1.0).sqrt()) / 2.0;
        assert!((coupling_from_rate(pc).unwrap() - ising_critical_coupling()).abs() < 1e-12);
        assert!((critical_rate_n2() - 0.178203).abs() < 1e-6);
        assert!((critical_rate_decoupled() - (2.0 - 2f64.sqrt()) / 2.0).abs() < 1e-12);
        assert!(coupling_from_rate(0.5).is_err());
    }

    #[test]
    fn two_by_two_periodic_ising() {
        let l = LiebLattice::periodic(2).unwrap();
        let j = 0.37;
        let m = plain_ising::<f64>(&l, j, 0.0);
        let r = exact_partition(&m, &Observables::default()).unwrap();
        let z = 2.0 * (8.0 * j).exp() + 12.0 + 2.0 * (-8.0 * j).exp();
        assert!((r.log_partition - z.ln()).abs() < 1e-13);
    }

    #[test]
    fn free_spins() {
        let l = LiebLattice::periodic(3).unwrap();
        let m = plain_ising::<f64>(&l, 0.0, 0.0);
        let r = exact_partition(&m, &Observables::default()).unwrap();
        assert!((r.log_partition - 9.0 * 2f64.ln()).abs() < 1e-13);
        assert!((free_log_partition(&m).unwrap().unwrap() - 9.0 * 2f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn three_flavor_bond_energy() {
        let mut m = SpinModel::<f64>::new(2, 2);
        m.add_parity_factor(vec![0, 1], 0.8, TermTag::None);
        let t = &m.terms[0];
        assert_eq!((t.coupling, t.product_coupling), (0.4, 0.4));
        // s1 = (+,+), s2 = (+,-): energy = 1.2 - 0.4 (1 - 1) - 0.4 (-1)
        assert!((m.energy_of(&[1, 1, 1, -1]) - 1.6).abs() < 1e-15);
    }

    #[test]
    fn single_plaquette_gauge() {
        let u = 0.3;
        let mut m = SpinModel::<f64>::new(4, 1);
        m.add_parity_factor(vec![0, 1, 2, 3], u, TermTag::None);
        let r = exact_partition(&m, &Observables::default()).unwrap();
        let plain = r.log_partition + m.total_offset();
        assert!((plain - (8.0 * u.exp() + 8.0 * (-u).exp()).ln()).abs() < 1e-13);
    }

    #[test]
    fn merges_reduce_variables() {
        let mut m = SpinModel::<f64>::new(4, 1);
        m.merge((0, 0), (1, 0));
        assert_eq!(m.compile().unwrap().num_vars, 3);
        let r = exact_partition(&m, &Observables::default()).unwrap();
        assert!((r.log_partition - 3.0 * 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn gray_code_observables_match_direct_sum() {
        let l = LiebLattice::periodic(3).unwrap();
        let m = plain_ising::<f64>(&l, 0.3, 0.1);
        let obs = Observables { correlators: vec![((0, 0), (4, 0))] };
        let r = exact_partition(&m, &obs).unwrap();
        let (mut z, mut e, mut c, mut m2) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for b in 0..512u32 {
            let s: Vec<i8> = (0..9).map(|i| if b >> i & 1 == 1 { -1 } else { 1 }).collect();
            let en = m.energy_of(&s);
            let w = (-en).exp();
            z += w;
            e += w * en;
            c += w * (s[0] * s[4]) as f64;
            let mag = s.iter().map(|&x| x as f64).sum::<f64>() / 9.0;
            m2 += w * mag * mag;
        }
        assert!((r.log_partition - z.ln()).abs() < 1e-12);
        assert!((r.mean_energy - e / z).abs() < 1e-12);
        assert!((r.correlators[0] - c / z).abs() < 1e-12);
        assert!((r.m2 - m2 / z).abs() < 1e-12);
    }

    #[test]
    fn transfer_matches_enumeration() {
        for l in [LiebLattice::periodic(4).unwrap(), LiebLattice::open(4).unwrap()] {
            let e = decohered_state::<f64>(&l, 0.12, 0.05).unwrap();
            let m = ising_model(&e, 2).unwrap();
            let obs = Observables { correlators: vec![((0, 0), (15, 0))] };
            let ex = exact_partition(&m, &obs).unwrap();
            let (lz, c) = transfer_partition(&m, Some((0, 15))).unwrap();
            assert!((lz - ex.log_partition).abs() < 1e-12, "{lz} {}", ex.log_partition);
            assert!((c.unwrap() - ex.correlators[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn cutting_everything_frees_spins() {
        let l = LiebLattice::periodic(4).unwrap();
        let e = decohered_state::<f64>(&l, 0.2, 0.0).unwrap();
        let m = single_copy_model(&e).unwrap();
        let all = EdgePath { edges: (0..l.num_edges()).collect(), closed: true, endpoints: None, dual: true };
        let cut = cut_bond_model(&m, &all);
        let r = exact_partition(&cut, &Observables::default()).unwrap();
        assert!((r.log_partition - 16.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn merged_model_equals_restricted_sum() {
        let l = LiebLattice::periodic(4).unwrap();
        let m = plain_ising::<f64>(&l, 0.25, 0.0);
        let inside: Vec<bool> = (0..16).map(|v| v % 4 < 2).collect();
        let bonds = crossing_bonds(&l, &inside);
        let merged = constrained_model(&m, &l, &bonds);
        let r = exact_partition(&merged, &Observables::default()).unwrap();
        let mut z = 0.0f64;
        for b in 0..1u32 << 16 {
            let s: Vec<i8> = (0..16).map(|i| if b >> i & 1 == 1 { -1 } else { 1 }).collect();
            if bonds.iter().all(|&e| s[l.endpoints(e)[0]] == s[l.endpoints(e)[1]]) {
                z += (-m.energy_of(&s)).exp();
            }
        }
        assert!((r.log_partition - z.ln()).abs() < 1e-12);
    }

    #[test]
    fn log_partition_convex_in_coupling() {
        let l = LiebLattice::periodic(3).unwrap();
        let f = |j: f64| exact_partition(&plain_ising::<f64>(&l, j, 0.0), &Observables::default()).unwrap().log_partition;
        let h = 0.05;
        for k in 1..10 {
            let j = k as f64 * 0.1;
            assert!(f(j + h) + f(j - h) - 2.0 * f(j) > 0.0);
        }
    }

    #[test]
    fn json_dump_roundtrips_shape() {
        let l = LiebLattice::periodic(2).unwrap();
        let m = plain_ising::<f64>(&l, 0.1, 0.0);
        let v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        assert_eq!(v["terms"].as_array().unwrap().len(), 8);
    }
}
