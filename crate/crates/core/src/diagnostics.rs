//! SPT diagnostics of the decohered cluster state: Rényi relative entropy,
//! strange correlator and Rényi (tripartite) negativity.
//!
//! Every diagnostic is available exactly from the Pauli expansion
//! ([`Mode::Exact`]), from the mapped classical model by exhaustive
//! enumeration or transfer matrices ([`Mode::Classical`]), and from the same
//! model by Monte Carlo ([`Mode::MonteCarlo`]).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{
    cut_bond_model, exact_partition, free_log_partition, ising_model, single_copy_model,
    transfer_partition, Observables, SpinModel, EXACT_LIMIT,
};
use crate::cluster::{stabilizer_generators, walsh_hadamard, DomainWallConfig, PauliExpansion};
use crate::error::{Error, Result};
use crate::lattice::{EdgePath, LiebLattice, Region, RegionPartition};
use crate::mc::free_energy::{free_energy_difference, pin_chain, FreeEnergyMethod, Pin};
use crate::mc::{self, stats, Schedule};
use crate::scalar::Real;

/// Largest qubit count of the signed coefficient table behind exact
/// negativities (`2^25` entries).
pub const NEGATIVITY_TABLE_LIMIT: usize = 25;

/// Significance used by every "consistent with zero" decision.
pub const SIGMA_THRESHOLD: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Exact,
    Classical,
    MonteCarlo { schedule: Schedule, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Oracle,
    MonteCarlo,
}

impl Mode {
    pub fn provenance(&self) -> Provenance {
        match self {
            Mode::MonteCarlo { .. } => Provenance::MonteCarlo,
            _ => Provenance::Oracle,
        }
    }
}

/// A diagnostic value with its error bar (zero for oracle results).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Value<T: Real> {
    pub value: T,
    pub error: T,
    /// Set when the quantity is effectively infinite (orthogonal states).
    pub divergent: bool,
}

impl<T: Real> Value<T> {
    pub fn exact(value: T) -> Self {
        Self {
            value,
            error: T::zero(),
            divergent: false,
        }
    }

    pub fn divergent() -> Self {
        Self {
            value: T::infinity(),
            error: T::zero(),
            divergent: true,
        }
    }

    /// `|value| <= SIGMA_THRESHOLD * error` (exact zero for error-free values).
    pub fn consistent_with(&self, target: T, tol: T) -> bool {
        !self.divergent
            && (self.value - target).abs() <= T::of(SIGMA_THRESHOLD) * self.error + tol
    }
}

fn check_enumerable(what: &'static str, needed: usize, limit: usize) -> Result<()> {
    if needed > limit {
        return Err(Error::Budget {
            what,
            needed,
            limit,
        });
    }
    Ok(())
}

/// `ln tr rho^n` from the spectrum of the expansion.
pub fn ln_replica_trace_spectral<T: Real>(state: &PauliExpansion<T>, n: usize) -> Result<T> {
    let pw = |s: Vec<T>| s.into_iter().map(|x| x.powi(n as i32)).sum::<T>();
    Ok(pw(state.spectrum_a()?).ln() + pw(state.spectrum_b()?).ln())
}

fn ln_partition<T: Real>(model: &SpinModel<T>) -> Result<T> {
    if let Some(z) = free_log_partition(model)? {
        return Ok(z);
    }
    let c = model.compile()?;
    if c.num_vars <= EXACT_LIMIT {
        return Ok(exact_partition(model, &Observables::default())?.log_partition);
    }
    transfer_partition(model, None).map(|r| r.0)
}

/// `ln tr rho^n = (1 - n) n_q ln 2 + ln Z_A + ln Z_B` from the vertex Ising
/// and edge gauge models.
pub fn ln_replica_trace_classical<T: Real>(state: &PauliExpansion<T>, n: usize) -> Result<T> {
    if state.is_flipped() {
        return Err(Error::Unsupported("replica models exclude boundary-flip signs".into()));
    }
    let za = ln_partition(&ising_model(state, n)?)?;
    let zb = ln_partition(&crate::classical::gauge_model(state, n)?)?;
    let nq = T::of_usize(state.num_qubits());
    Ok(T::of(1.0 - n as f64) * nq * T::LN_2() + za + zb)
}

// ---------------------------------------------------------------- relative entropy

/// `D^n(rho || S rho S)` for the boundary string `S` between `u` and `u2`.
/// The classical routes need `n >= 2`; `n = 1` is exact only.
pub fn relative_entropy<T: Real>(
    state: &PauliExpansion<T>,
    u: usize,
    u2: usize,
    n: usize,
    mode: Mode,
) -> Result<Value<T>> {
    let l = state.lattice();
    if l.is_periodic() {
        return Err(Error::Geometry("relative entropy needs an open lattice".into()));
    }
    if n == 0 {
        return Err(Error::Invalid("Rényi index 0".into()));
    }
    if u == u2 {
        if !l.is_boundary_vertex(u) {
            return Err(Error::Geometry(format!("vertex {u} is not on the boundary")));
        }
        return Ok(Value::exact(T::zero()));
    }
    let flipped = state.boundary_flip(u, u2)?;
    if n == 1 && mode != Mode::Exact {
        return Err(Error::Unsupported("n = 1 is available only in exact mode".into()));
    }
    let from_ratio = |r: T, err: T| {
        if r <= T::of(SIGMA_THRESHOLD) * err + T::of(1e-13) {
            Value::divergent()
        } else {
            let k = T::one() / T::of(1.0 - n as f64);
            Value {
                value: k * r.ln(),
                error: (k * err / r).abs(),
                divergent: false,
            }
        }
    };
    match mode {
        Mode::Exact => {
            let sa = state.spectrum_a()?;
            let sf = flipped.spectrum_a()?;
            let tiny = T::of(1e-14);
            if n == 1 {
                let mut d = T::zero();
                for (&a, &f) in sa.iter().zip(&sf) {
                    if a > tiny {
                        if f <= tiny {
                            return Ok(Value::divergent());
                        }
                        d = d + a * (a.ln() - f.ln());
                    }
                }
                return Ok(Value::exact(d));
            }
            let num: T = sa
                .iter()
                .zip(&sf)
                .map(|(&a, &f)| a * f.powi(n as i32 - 1))
                .sum();
            let den: T = sa.iter().map(|&a| a.powi(n as i32)).sum();
            Ok(from_ratio(num / den, T::zero()))
        }
        Mode::Classical => {
            let model = ising_model(state, n)?;
            let c = model.compile()?;
            let corr = if c.num_vars <= EXACT_LIMIT {
                let obs = Observables {
                    correlators: vec![((u, 0), (u2, 0))],
                };
                exact_partition(&model, &obs)?.correlators[0]
            } else {
                transfer_partition(&model, Some((u, u2)))?
                    .1
                    .expect("correlator requested")
            };
            Ok(from_ratio(corr, T::zero()))
        }
        Mode::MonteCarlo { schedule, seed } => {
            let model = ising_model(state, n)?;
            let e = mc::boundary_correlator(&model, u, u2, &schedule, seed)?;
            Ok(from_ratio(e.value, e.standard_error))
        }
    }
}

// ---------------------------------------------------------------- strange correlator

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StrangeCorrelator<T: Real> {
    pub loop_length: usize,
    /// `ln C(gamma) = ln Z_cut - ln Z` in the single-copy model.
    pub ln_c: Value<T>,
    /// `F_cut - F` with bond weights `exp(K s s') / cosh K`.
    pub free_energy_excess: Value<T>,
}

impl<T: Real> StrangeCorrelator<T> {
    pub fn correlator(&self) -> T {
        self.ln_c.value.exp()
    }
}

fn check_contractible(l: &LiebLattice, path: &EdgePath) -> Result<()> {
    if !l.is_periodic() {
        return Err(Error::Geometry("strange correlator needs a periodic lattice".into()));
    }
    if !path.closed || !path.dual || path.is_empty() {
        return Err(Error::Geometry("expected a closed dual loop".into()));
    }
    // a contractible loop separates the vertices
    let nv = l.num_vertices();
    let mut seen = vec![false; nv];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &e in l.incident_edges(v) {
            if path.edges.contains(&e) {
                continue;
            }
            for &w in l.endpoints(e) {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
    }
    if seen.iter().all(|&s| s) {
        return Err(Error::Geometry("loop is not contractible".into()));
    }
    Ok(())
}

/// `sum_{e in gamma} ln(2 / (1 + lambda_e))`: converts the symmetric bond
/// normalization back to the wall convention.
fn normalization_shift<T: Real>(state: &PauliExpansion<T>, path: &EdgePath) -> T {
    let l = state.lattice();
    path.edges
        .iter()
        .map(|&e| (T::of(2.0) / (T::one() + state.lambda_x(l.edge_qubit(e)))).ln())
        .sum()
}

/// `<Omega| P |Omega>` for the product reference `|+>` on vertices, `|0>` on
/// edges.
fn reference_overlap(l: &LiebLattice, p: &crate::pauli::PauliString) -> i8 {
    for v in 0..l.num_vertices() {
        let q = l.vertex_qubit(v);
        if p.z_bit(q) {
            return 0;
        }
    }
    for e in 0..l.num_edges() {
        if p.x_bit(l.edge_qubit(e)) {
            return 0;
        }
    }
    // X on |+> and Z on |0> both give +1; the phase is real for Hermitian terms
    match p.phase() {
        crate::pauli::Phase::ONE => 1,
        crate::pauli::Phase::MINUS_ONE => -1,
        _ => 0,
    }
}

/// Strange correlator of the loop `path` on a periodic lattice.
///
/// Exact mode evaluates `tr(rho_0 O rho) / tr(rho_0 rho)` on the expansion,
/// with `rho_0` the product reference and `O` restoring the bit-flip
/// damping of the crossed edges. The classical modes evaluate
/// `exp(F - F_cut)` of the single-copy Ising model.
pub fn strange_correlator<T: Real>(
    state: &PauliExpansion<T>,
    path: &EdgePath,
    mode: Mode,
) -> Result<StrangeCorrelator<T>> {
    let l = state.lattice();
    check_contractible(l, path)?;
    let shift = normalization_shift(state, path);
    let done = |ln_c: Value<T>, excess: Value<T>| StrangeCorrelator {
        loop_length: path.len(),
        ln_c,
        free_energy_excess: excess,
    };
    match mode {
        Mode::Exact => {
            let nv = l.num_vertices();
            check_enumerable("vertex spins", nv, crate::cluster::ENUMERATION_LIMIT)?;
            let mut healed = state.clone();
            for &e in &path.edges {
                let q = l.edge_qubit(e);
                let lx = state.lambda_x(q);
                if lx <= T::zero() {
                    return Err(Error::Unsupported("rate 1/2 on a crossed edge".into()));
                }
                healed.damp(q, T::one() / lx, T::one());
            }
            let (num, den) = (0..1u64 << nv)
                .into_par_iter()
                .map(|bits| {
                    let dw = DomainWallConfig::from_bits(nv, bits);
                    let ov = T::of(reference_overlap(l, &dw.to_pauli(l)) as f64);
                    (healed.weight_a(&dw) * ov, state.weight_a(&dw) * ov)
                })
                .reduce(|| (T::zero(), T::zero()), |a, b| (a.0 + b.0, a.1 + b.1));
            let ln_c = (num / den).ln();
            Ok(done(Value::exact(ln_c), Value::exact(shift - ln_c)))
        }
        Mode::Classical => {
            let m = single_copy_model(state)?;
            let ln_c = ln_partition(&cut_bond_model(&m, path))? - ln_partition(&m)?;
            Ok(done(Value::exact(ln_c), Value::exact(shift - ln_c)))
        }
        Mode::MonteCarlo { schedule, seed } => {
            let m = single_copy_model(state)?.symmetric_offsets()?;
            let cut = cut_bond_model(&m, path);
            let r = free_energy_difference(&m, &cut, FreeEnergyMethod::default(), &schedule, seed)?;
            let excess = Value {
                value: r.estimate.value,
                error: r.estimate.standard_error,
                divergent: false,
            };
            let ln_c = Value {
                value: shift - excess.value,
                ..excess
            };
            Ok(done(ln_c, excess))
        }
    }
}

// ---------------------------------------------------------------- negativity

/// Vertices whose replicas are pinned together by transposing the qubits in
/// `mask`. Each edge contributes the parity of its endpoints outside the
/// region if the edge qubit is transposed, and of those inside otherwise;
/// a single endpoint pins that vertex, two endpoints are not supported.
pub fn pinned_vertices(lattice: &LiebLattice, mask: &[bool]) -> Result<Vec<usize>> {
    let mut pinned = vec![false; lattice.num_vertices()];
    for e in 0..lattice.num_edges() {
        let inside = mask[lattice.edge_qubit(e)];
        let set: Vec<usize> = lattice
            .endpoints(e)
            .iter()
            .copied()
            .filter(|&v| mask[lattice.vertex_qubit(v)] != inside)
            .collect();
        match set.len() {
            0 => {}
            1 => pinned[set[0]] = true,
            _ => {
                return Err(Error::Unsupported(format!(
                    "edge {e} couples two replica differences; region not supported"
                )))
            }
        }
    }
    Ok((0..pinned.len()).filter(|&v| pinned[v]).collect())
}

fn check_gauge_sector_clean<T: Real>(state: &PauliExpansion<T>) -> Result<()> {
    let l = state.lattice();
    let clean = (0..l.num_edges()).all(|e| state.lambda_z(l.edge_qubit(e)) == T::one())
        && (0..l.num_vertices()).all(|v| state.lambda_x(l.vertex_qubit(v)) == T::one());
    if !clean {
        return Err(Error::Unsupported(
            "classical negativity needs no phase errors on edges and no bit flips on vertices"
                .into(),
        ));
    }
    Ok(())
}

fn check_index(m: usize) -> Result<()> {
    if m < 2 || m % 2 == 1 {
        return Err(Error::Invalid(format!(
            "negativity needs an even replica index, got {m}"
        )));
    }
    Ok(())
}

/// `ln tr (rho^{T_X})^m - ln tr rho^m` by Walsh-Hadamard transform of the
/// coefficient table, each term signed by `(-1)^{#Y in X}`.
fn exact_negativity<T: Real>(state: &PauliExpansion<T>, mask: &[bool], m: usize) -> Result<T> {
    let l = state.lattice();
    let (nv, ne) = (l.num_vertices(), l.num_edges());
    let nq = nv + ne;
    check_enumerable("negativity table qubits", nq, NEGATIVITY_TABLE_LIMIT)?;
    let gens = stabilizer_generators(l);
    let xs: Vec<u64> = gens.iter().map(|g| g.x_mask()[0]).collect();
    let zs: Vec<u64> = gens.iter().map(|g| g.z_mask()[0]).collect();
    let region: u64 = (0..nq).filter(|&q| mask[q]).fold(0, |acc, q| acc | 1 << q);
    let wa = state.weights_a()?;
    let wb = state.weights_b()?;
    let amask = (1u64 << nv) - 1;
    let size = 1usize << nq;
    // Gray-code walk over generator subsets; index = a | b << nv
    let mut table = vec![T::zero(); size];
    let (mut x, mut z) = (0u64, 0u64);
    let mut idx = 0u64;
    for k in 0..size as u64 {
        if k > 0 {
            let bit = k.trailing_zeros() as usize;
            idx ^= 1 << bit;
            x ^= xs[bit];
            z ^= zs[bit];
        }
        let c = wa[(idx & amask) as usize] * wb[(idx >> nv) as usize];
        let odd = (x & z & region).count_ones() % 2 == 1;
        table[idx as usize] = if odd { -c } else { c };
    }
    walsh_hadamard(&mut table);
    let scale = T::of(0.5).powi(nq as i32);
    let pt: T = table.iter().map(|&v| (v * scale).powi(m as i32)).sum();
    let base = ln_replica_trace_spectral(state, m)?;
    Ok(pt.ln() - base)
}

fn all_or_nothing(mask: &[bool]) -> bool {
    mask.iter().all(|&b| b) || mask.iter().all(|&b| !b)
}

/// Rényi negativity `E^{(m)}_X` of the qubit region `mask`, `m` even.
///
/// The classical modes need an error-free gauge sector and give
/// `ln(Z'/Z)`, where `Z'` merges all flavors of the `(m-1)`-flavor Ising
/// model at every pinned vertex.
pub fn renyi_negativity<T: Real>(
    state: &PauliExpansion<T>,
    mask: &[bool],
    m: usize,
    mode: Mode,
) -> Result<Value<T>> {
    check_index(m)?;
    if mask.len() != state.num_qubits() {
        return Err(Error::QubitMismatch(mask.len(), state.num_qubits()));
    }
    if all_or_nothing(mask) {
        return Ok(Value::exact(T::zero()));
    }
    match mode {
        Mode::Exact => Ok(Value::exact(exact_negativity(state, mask, m)?)),
        Mode::Classical => {
            check_gauge_sector_clean(state)?;
            let pins = pinned_vertices(state.lattice(), mask)?;
            let base = ising_model(state, m)?;
            let mut merged = base.clone();
            for &v in &pins {
                merged.merge_flavors(v);
            }
            Ok(Value::exact(ln_partition(&merged)? - ln_partition(&base)?))
        }
        Mode::MonteCarlo { schedule, seed } => {
            check_gauge_sector_clean(state)?;
            let pins = pinned_vertices(state.lattice(), mask)?;
            let base = ising_model(state, m)?;
            let chain = pin_chain(&base, &flavor_pins(&pins, m - 1), &schedule, seed)?;
            Ok(Value {
                value: -chain.estimate.value,
                error: chain.estimate.standard_error,
                divergent: false,
            })
        }
    }
}

fn flavor_pins(vertices: &[usize], flavors: usize) -> Vec<Pin> {
    vertices
        .iter()
        .map(|&v| (1..flavors).map(|f| ((v, 0), (v, f))).collect())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Tripartite<T: Real> {
    /// `N = E_LM + E_MR - E_M - E_LMR`.
    pub value: Value<T>,
    pub e_lm: Value<T>,
    pub e_mr: Value<T>,
    pub e_m: Value<T>,
    pub e_lmr: Value<T>,
    pub cut_lengths: (usize, usize),
    /// Width of `M` in columns.
    pub separation: usize,
    /// False when `separation` is below the supplied correlation length.
    pub reliable: bool,
}

fn sum_steps<T: Real>(steps: &[mc::free_energy::PinStep<T>]) -> (T, T) {
    steps.iter().fold((T::zero(), T::zero()), |(v, e), s| {
        let r = s.standard_error / s.probability;
        (v + s.probability.ln(), e + r * r)
    })
}

/// Rényi tripartite negativity `N^{(m)}(L; R | M)`.
pub fn tripartite_negativity<T: Real>(
    state: &PauliExpansion<T>,
    partition: &RegionPartition,
    m: usize,
    mode: Mode,
    correlation_length: Option<f64>,
) -> Result<Tripartite<T>> {
    check_index(m)?;
    let l = state.lattice();
    let lm = partition.mask(&[Region::L, Region::M]);
    let mr = partition.mask(&[Region::M, Region::R]);
    let mid = partition.mask(&[Region::M]);
    let all = partition.mask(&[Region::L, Region::M, Region::R]);
    let cols: Vec<usize> = (0..l.num_vertices())
        .filter(|&v| partition.assignment[l.vertex_qubit(v)] == Region::M)
        .map(|v| v % l.size())
        .collect();
    let separation = cols.iter().max().map_or(0, |hi| hi + 1 - cols.iter().min().unwrap());
    let reliable = correlation_length.is_none_or(|xi| separation as f64 >= xi);
    let finish = |e_lm: Value<T>, e_mr: Value<T>, e_m: Value<T>, e_lmr: Value<T>, value: Value<T>| {
        Tripartite {
            value,
            e_lm,
            e_mr,
            e_m,
            e_lmr,
            cut_lengths: partition.cut_lengths,
            separation,
            reliable,
        }
    };
    match mode {
        Mode::Exact | Mode::Classical => {
            let e: Vec<Value<T>> = [&lm, &mr, &mid, &all]
                .iter()
                .map(|mask| renyi_negativity(state, mask, m, mode))
                .collect::<Result<_>>()?;
            let n = e[0].value + e[1].value - e[2].value - e[3].value;
            Ok(finish(e[0], e[1], e[2], e[3], Value::exact(n)))
        }
        Mode::MonteCarlo { schedule, seed } => {
            check_gauge_sector_clean(state)?;
            // E_LM pins the right cut; E_MR the left one; E_M both.
            let p_lm = pinned_vertices(l, &lm)?;
            let p_mr = pinned_vertices(l, &mr)?;
            let p_m = pinned_vertices(l, &mid)?;
            let mut ordered = p_mr.clone();
            ordered.extend(p_m.iter().filter(|v| !p_mr.contains(v)));
            if ordered.len() != p_m.len() {
                return Err(Error::Unsupported("pins of M are not the union of both cuts".into()));
            }
            let base = ising_model(state, m)?;
            let f = m - 1;
            let a = pin_chain(&base, &flavor_pins(&p_lm, f), &schedule, seed)?;
            let b = pin_chain(&base, &flavor_pins(&ordered, f), &schedule, seed ^ 0x9e37_79b9)?;
            let (v_lm, e_lm) = sum_steps(&a.steps);
            let (v_mr, e_mr) = sum_steps(&b.steps[..p_mr.len()]);
            let (v_rest, e_rest) = sum_steps(&b.steps[p_mr.len()..]);
            let val = |v: T, e2: T| Value {
                value: v,
                error: e2.sqrt(),
                divergent: false,
            };
            Ok(finish(
                val(v_lm, e_lm),
                val(v_mr, e_mr),
                val(v_mr + v_rest, e_mr + e_rest),
                Value::exact(T::zero()),
                // N = E_LM - (E_M - E_MR)
                val(v_lm - v_rest, e_lm + e_rest),
            ))
        }
    }
}

// ---------------------------------------------------------------- fits

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AreaLaw {
    /// Coefficient of the cut length.
    pub c: f64,
    /// Constant (subleading) term.
    pub b: f64,
    pub c_error: f64,
    pub b_error: f64,
}

/// Fits `E = c l + b` to negativities at several cut lengths.
pub fn fit_area_law(lengths: &[f64], values: &[(f64, f64)]) -> Result<AreaLaw> {
    let y: Vec<f64> = values.iter().map(|v| v.0).collect();
    let s: Vec<f64> = values.iter().map(|v| v.1).collect();
    let (b, c, b_error, c_error) = stats::linear_fit(lengths, &y, &s)?;
    Ok(AreaLaw {
        c,
        b,
        c_error,
        b_error,
    })
}

/// `xi` from `ln G(r) = a - r / xi`; `None` when `G` does not decay or too
/// few points are positive.
pub fn fit_correlation_length(distances: &[f64], g: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64, f64)> = distances
        .iter()
        .zip(g)
        .filter(|(_, (v, _))| *v > 0.0)
        .map(|(&r, &(v, e))| (r, v.ln(), if e > 0.0 { e / v } else { 0.0 }))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let s: Vec<f64> = pts.iter().map(|p| p.2).collect();
    let (_, slope, _, _) = stats::linear_fit(&x, &y, &s).ok()?;
    (slope < 0.0).then(|| -1.0 / slope)
}

/// Bulk two-point function `<s_0 s_r>` along the middle row of the
/// two-replica Ising model, for `r = 1 .. N/2`.
pub fn bulk_correlations(state: &PauliExpansion<f64>, mode: Mode) -> Result<Vec<(f64, f64, f64)>> {
    let l = state.lattice();
    let n = l.size();
    let row = n / 2;
    let model = ising_model(state, 2)?;
    let origin = l.vertex(row, 0);
    let targets: Vec<usize> = (1..=n / 2).map(|r| l.vertex(row, r)).collect();
    match mode {
        Mode::MonteCarlo { schedule, seed } => {
            let c = model.compile()?;
            let vo = c.var(origin, 0);
            let vt: Vec<usize> = targets.iter().map(|&t| c.var(t, 0)).collect();
            let s = Schedule {
                method: if c.is_ferromagnetic_pairwise() { schedule.method } else { mc::Method::Metropolis },
                ..schedule
            };
            let cols = mc::run_chain_columns(&c, &s, seed, 0, vt.len(), |smp, out| {
                let sp = smp.spins();
                for (o, &v) in out.iter_mut().zip(&vt) {
                    *o = (sp[vo] * sp[v]) as f64;
                }
            })?;
            cols.iter()
                .enumerate()
                .map(|(k, col)| {
                    let (m, e) = stats::blocked_mean(col, s.blocks)?;
                    Ok(((k + 1) as f64, m, e))
                })
                .collect()
        }
        _ => {
            let c = model.compile()?;
            targets
                .iter()
                .enumerate()
                .map(|(k, &t)| {
                    let g = if c.num_vars <= EXACT_LIMIT {
                        let obs = Observables {
                            correlators: vec![((origin, 0), (t, 0))],
                        };
                        exact_partition(&model, &obs)?.correlators[0]
                    } else {
                        transfer_partition(&model, Some((origin, t)))?.1.expect("requested")
                    };
                    Ok(((k + 1) as f64, g, 0.0))
                })
                .collect()
        }
    }
}

// ---------------------------------------------------------------- phase call

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Spt,
    Trivial,
    NearCritical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Vote {
    Spt,
    Trivial,
    Undecided,
}

/// Relative entropy: growing with separation (or divergent) is SPT-like,
/// saturated is trivial-like.
pub fn vote_relative_entropy<T: Real>(points: &[RelativeEntropyPoint<T>]) -> Vote {
    if points.iter().any(|p| p.value.divergent && p.separation > 0) {
        return Vote::Spt;
    }
    let pts: Vec<&RelativeEntropyPoint<T>> = points.iter().filter(|p| p.separation > 0).collect();
    if pts.len() < 2 {
        return Vote::Undecided;
    }
    let x: Vec<f64> = pts.iter().map(|p| p.separation as f64).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.value.value.f64()).collect();
    let s: Vec<f64> = pts.iter().map(|p| p.value.error.f64()).collect();
    match stats::linear_fit(&x, &y, &s) {
        Ok((_, slope, _, se)) => {
            // a relative slope threshold covers error-free oracle data
            let scale = y.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-12);
            if slope > SIGMA_THRESHOLD * se && slope * x[x.len() - 1] > 0.05 * scale {
                Vote::Spt
            } else {
                Vote::Trivial
            }
        }
        Err(_) => Vote::Undecided,
    }
}

/// Strange correlator: `ln C` consistent with zero is SPT-like, decaying
/// with loop size is trivial-like.
pub fn vote_strange<T: Real>(points: &[StrangeCorrelator<T>], tol: f64) -> Vote {
    if points.is_empty() {
        return Vote::Undecided;
    }
    let decays = points.iter().all(|p| {
        p.ln_c.value.f64() < -(SIGMA_THRESHOLD * p.ln_c.error.f64() + tol)
    });
    if decays {
        Vote::Trivial
    } else {
        Vote::Spt
    }
}

/// Tripartite negativity: `ln 2` is SPT-like, `0` trivial-like.
pub fn vote_negativity<T: Real>(n: &Value<T>, tol: f64) -> Vote {
    let (v, e) = (n.value.f64(), n.error.f64());
    let near = |t: f64| (v - t).abs() <= SIGMA_THRESHOLD * e + tol;
    match (near(std::f64::consts::LN_2), near(0.0)) {
        (true, false) => Vote::Spt,
        (false, true) => Vote::Trivial,
        _ => Vote::Undecided,
    }
}

/// Majority vote of the three diagnostics; `near-critical` inside
/// `|p - p_c| <= band` or without a majority.
pub fn phase_call(votes: &[Vote], p: f64, p_c: f64, band: f64) -> Phase {
    if (p - p_c).abs() <= band {
        return Phase::NearCritical;
    }
    let spt = votes.iter().filter(|&&v| v == Vote::Spt).count();
    let triv = votes.iter().filter(|&&v| v == Vote::Trivial).count();
    let half = votes.len() / 2;
    if spt > half {
        Phase::Spt
    } else if triv > half {
        Phase::Trivial
    } else {
        Phase::NearCritical
    }
}

// ---------------------------------------------------------------- report

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RelativeEntropyPoint<T: Real> {
    pub separation: usize,
    pub u: usize,
    pub u2: usize,
    pub value: Value<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NegativityEntry<T: Real> {
    pub region: String,
    pub value: Value<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnosticsReport<T: Real> {
    pub p_x: f64,
    pub p_z: f64,
    pub size: usize,
    pub replica_index: usize,
    pub relative_entropy: Vec<RelativeEntropyPoint<T>>,
    pub strange_correlator: Vec<StrangeCorrelator<T>>,
    pub negativities: Vec<NegativityEntry<T>>,
    pub tripartite: Option<Tripartite<T>>,
    pub votes: [Vote; 3],
    pub phase: Phase,
    pub provenance: Provenance,
}

impl<T: Real> DiagnosticsReport<T> {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub const CSV_HEADER: &'static str = "p_x,p_z,diagnostic,key,value,error,divergent,provenance";

    /// One row per diagnostic entry, fixed to 10 decimals.
    pub fn csv_rows(&self) -> Vec<String> {
        let prov = match self.provenance {
            Provenance::Oracle => "oracle",
            Provenance::MonteCarlo => "monte-carlo",
        };
        let row = |diag: &str, key: String, v: &Value<T>| {
            format!(
                "{:.6},{:.6},{diag},{key},{:.10},{:.10},{},{prov}",
                self.p_x,
                self.p_z,
                v.value.f64(),
                v.error.f64(),
                v.divergent
            )
        };
        let mut out = Vec::new();
        for p in &self.relative_entropy {
            out.push(row("relative-entropy", p.separation.to_string(), &p.value));
        }
        for s in &self.strange_correlator {
            out.push(row("ln-strange-correlator", s.loop_length.to_string(), &s.ln_c));
        }
        for n in &self.negativities {
            out.push(row("negativity", n.region.clone(), &n.value));
        }
        if let Some(t) = &self.tripartite {
            out.push(row("tripartite-negativity", "L;R|M".into(), &t.value));
        }
        out
    }
}

/// What [`diagnose`] computes at one grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseOptions {
    /// Linear size of both the open and the periodic lattice.
    pub size: usize,
    /// Rényi index of the relative entropy.
    pub replica_index: usize,
    /// Even replica index of the negativities.
    pub negativity_index: usize,
    /// Side lengths of the square loops of the strange correlator.
    pub loop_sides: Vec<usize>,
    /// First column of `M` and of `R`.
    pub cuts: (usize, usize),
    pub p_c: f64,
    pub critical_band: f64,
}

/// All three diagnostics for bit flips at rate `p_x` on the edges and phase
/// errors at rate `p_z` on the vertices (the gauge sector stays clean, which
/// the classical negativity requires; neither choice changes the relative
/// entropy or the strange correlator).
pub fn diagnose(p_x: f64, p_z: f64, opts: &DiagnoseOptions, mode: Mode) -> Result<DiagnosticsReport<f64>> {
    use crate::channels::{apply_channels, ChannelSpec, ErrorKind, Support};
    use crate::lattice::CutSpec;
    let specs = [
        ChannelSpec::new(ErrorKind::BitFlip, p_x, Support::SublatticeB)?,
        ChannelSpec::new(ErrorKind::Phase, p_z, Support::SublatticeA)?,
    ];
    let open = LiebLattice::open(opts.size)?;
    let torus = LiebLattice::periodic(opts.size)?;
    let so = apply_channels(&PauliExpansion::<f64>::pure(&open), &specs)?;
    let sp = apply_channels(&PauliExpansion::<f64>::pure(&torus), &specs)?;
    // relative entropy along the top edge from the corner
    let u = open.vertex(0, 0);
    let relative_entropy = (1..opts.size)
        .map(|d| {
            let u2 = open.vertex(0, d);
            Ok(RelativeEntropyPoint {
                separation: d,
                u,
                u2,
                value: relative_entropy(&so, u, u2, opts.replica_index, sub_mode(mode, d as u64))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let strange = opts
        .loop_sides
        .iter()
        .map(|&s| {
            let path = torus.rectangular_loop((1, 1), s, s)?;
            strange_correlator(&sp, &path, sub_mode(mode, 100 + s as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    let partition = open.partition_disk(CutSpec {
        left: opts.cuts.0,
        right: opts.cuts.1,
        margin: 1,
    })?;
    let tri = tripartite_negativity(&so, &partition, opts.negativity_index, sub_mode(mode, 200), None)?;
    let negativities = vec![
        NegativityEntry { region: "LM".into(), value: tri.e_lm },
        NegativityEntry { region: "MR".into(), value: tri.e_mr },
        NegativityEntry { region: "M".into(), value: tri.e_m },
        NegativityEntry { region: "LMR".into(), value: tri.e_lmr },
    ];
    let votes = [
        vote_relative_entropy(&relative_entropy),
        vote_strange(&strange, 1e-3),
        vote_negativity(&tri.value, 1e-3),
    ];
    Ok(DiagnosticsReport {
        p_x,
        p_z,
        size: opts.size,
        replica_index: opts.replica_index,
        relative_entropy,
        strange_correlator: strange,
        negativities,
        tripartite: Some(tri),
        phase: phase_call(&votes, p_x, opts.p_c, opts.critical_band),
        votes,
        provenance: mode.provenance(),
    })
}

fn sub_mode(mode: Mode, salt: u64) -> Mode {
    match mode {
        Mode::MonteCarlo { schedule, seed } => Mode::MonteCarlo {
            schedule,
            seed: seed.wrapping_add(salt.wrapping_mul(0x9e37_79b9_7f4a_7c15)),
        },
        m => m,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{apply_channels, decohered_state, ChannelSpec, ErrorKind, Support};
    use crate::lattice::CutSpec;

    fn gauge_clean(l: &LiebLattice, p_x: f64, p_z: f64) -> PauliExpansion<f64> {
        apply_channels(
            &PauliExpansion::pure(l),
            &[
                ChannelSpec::new(ErrorKind::BitFlip, p_x, Support::SublatticeB).unwrap(),
                ChannelSpec::new(ErrorKind::Phase, p_z, Support::SublatticeA).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn replica_traces_agree() {
        for (l, top) in [
            (LiebLattice::periodic(2).unwrap(), 4),
            (LiebLattice::open(2).unwrap(), 4),
            (LiebLattice::periodic(3).unwrap(), 2),
            (LiebLattice::open(3).unwrap(), 2),
        ] {
            let s = decohered_state::<f64>(&l, 0.12, 0.07).unwrap();
            for n in 2..=top {
                let a = ln_replica_trace_spectral(&s, n).unwrap();
                let b = ln_replica_trace_classical(&s, n).unwrap();
                assert!((a - b).abs() < 1e-10 * a.abs().max(1.0), "n={n}: {a} {b}");
            }
        }
    }

    #[test]
    fn relative_entropy_routes_agree() {
        let l = LiebLattice::open(3).unwrap();
        let s = decohered_state::<f64>(&l, 0.2, 0.05).unwrap();
        let (u, u2) = (l.vertex(0, 0), l.vertex(2, 1));
        for n in [2, 3] {
            let a = relative_entropy(&s, u, u2, n, Mode::Exact).unwrap();
            let b = relative_entropy(&s, u, u2, n, Mode::Classical).unwrap();
            assert!((a.value - b.value).abs() < 1e-10 * a.value.abs(), "{a:?} {b:?}");
        }
        let pure = PauliExpansion::<f64>::pure(&l);
        assert!(relative_entropy(&pure, u, u2, 2, Mode::Exact).unwrap().divergent);
        assert!(relative_entropy(&pure, u, u2, 2, Mode::Classical).unwrap().divergent);
        assert!(relative_entropy(&pure, u, u2, 1, Mode::Exact).unwrap().divergent);
        assert_eq!(relative_entropy(&s, u, u, 2, Mode::Exact).unwrap().value, 0.0);
    }

    #[test]
    fn strange_correlator_routes_agree() {
        let l = LiebLattice::periodic(4).unwrap();
        let path = l.rectangular_loop((1, 1), 2, 2).unwrap();
        let s = decohered_state::<f64>(&l, 0.1, 0.0).unwrap();
        let a = strange_correlator(&s, &path, Mode::Exact).unwrap();
        let b = strange_correlator(&s, &path, Mode::Classical).unwrap();
        assert!((a.ln_c.value - b.ln_c.value).abs() < 1e-10 * a.ln_c.value.abs());
        let pure = PauliExpansion::<f64>::pure(&l);
        assert_eq!(strange_correlator(&pure, &path, Mode::Exact).unwrap().correlator(), 1.0);
        let wrap = l.row_loop(0).unwrap();
        assert!(strange_correlator(&s, &wrap, Mode::Classical).is_err());
    }

    #[test]
    fn exact_negativity_matches_pauli_algebra() {
        // tr M^4 = 2^n sum_P |c_P|^2 over the Pauli terms of M^2
        let l = LiebLattice::open(2).unwrap();
        let s = decohered_state::<f64>(&l, 0.15, 0.1).unwrap();
        let rho = s.to_operator(l.num_qubits()).unwrap();
        let mask: Vec<bool> = (0..l.num_qubits()).map(|q| q % 3 == 0).collect();
        let t = rho.partial_transpose(&crate::pauli::bits_from_mask(&mask));
        let tr4 = |m: &crate::pauli::PauliOperator<f64>| {
            let sq = m.multiply(m).unwrap();
            sq.terms().map(|(_, c)| c.norm_sqr()).sum::<f64>()
        };
        let oracle = (tr4(&t) / tr4(&rho)).ln();
        let e = renyi_negativity(&s, &mask, 4, Mode::Exact).unwrap();
        assert!((e.value - oracle).abs() < 1e-10, "{} {oracle}", e.value);
        assert!(e.value.abs() > 1e-3);
    }

    #[test]
    fn negativity_routes_agree() {
        let l = LiebLattice::open(3).unwrap();
        let part = l.partition_disk(CutSpec { left: 1, right: 2, margin: 1 }).unwrap();
        for p in [0.0, 0.2] {
            let s = gauge_clean(&l, p, 0.1);
            for regions in [&[Region::L][..], &[Region::L, Region::M], &[Region::M]] {
                let mask = part.mask(regions);
                let a = renyi_negativity(&s, &mask, 4, Mode::Exact).unwrap();
                let b = renyi_negativity(&s, &mask, 4, Mode::Classical).unwrap();
                assert!((a.value - b.value).abs() < 1e-10 * a.value.abs().max(1.0), "{regions:?} p={p}: {} {}", a.value, b.value);
            }
        }
    }

    #[test]
    fn negativity_edge_cases() {
        let l = LiebLattice::open(3).unwrap();
        let s = gauge_clean(&l, 0.1, 0.0);
        let nq = l.num_qubits();
        assert!(renyi_negativity(&s, &vec![true; nq], 3, Mode::Exact).is_err());
        assert_eq!(renyi_negativity(&s, &vec![true; nq], 4, Mode::Classical).unwrap().value, 0.0);
        assert_eq!(renyi_negativity(&s, &vec![false; nq], 4, Mode::Exact).unwrap().value, 0.0);
    }

    #[test]
    fn area_law_fit_recovers_line() {
        let f = fit_area_law(&[2.0, 4.0, 6.0], &[(1.4, 0.0), (2.8, 0.0), (4.2, 0.0)]).unwrap();
        assert!((f.c - 0.7).abs() < 1e-12 && f.b.abs() < 1e-12);
    }

    #[test]
    fn phase_votes() {
        assert_eq!(phase_call(&[Vote::Spt; 3], 0.05, 0.1782, 0.01), Phase::Spt);
        assert_eq!(phase_call(&[Vote::Trivial; 3], 0.3, 0.1782, 0.01), Phase::Trivial);
        assert_eq!(phase_call(&[Vote::Spt; 3], 0.1782, 0.1782, 0.01), Phase::NearCritical);
    }

    #[test]
    fn correlation_length_of_exponential() {
        let r = [1.0, 2.0, 3.0];
        let g: Vec<(f64, f64)> = r.iter().map(|&x: &f64| ((-x / 2.5).exp(), 0.0)).collect();
        assert!((fit_correlation_length(&r, &g).unwrap() - 2.5).abs() < 1e-10);
    }
}
