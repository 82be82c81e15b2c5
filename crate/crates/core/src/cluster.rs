//! Cluster state on the Lieb lattice and its Pauli expansion.
//!
//! The stabilizer group is generated by `A_v = tau^x_v prod sigma^z_e` (edges
//! incident to `v`) and `B_e = sigma^x_e prod tau^z_v` (endpoints of `e`). On
//! open lattices the boundary `A_u` carry three edges and coincide with the
//! boundary spin operators `pi^x_u`; fixing them to `+1` selects the ground
//! state used throughout.
//!
//! Products of `A_v` are labelled by domain-wall configurations, products of
//! `B_e` by gauge configurations. Pauli channels only rescale each term, so an
//! expansion is stored as per-qubit damping factors: a term picks up
//! `lambda_x(q)` for every `Z`-type factor on `q` and `lambda_z(q)` for every
//! `X`-type factor.

use crate::error::{Error, Result};
use crate::lattice::LiebLattice;
use crate::pauli::{Bits, PauliOperator, PauliString, Phase};
use crate::scalar::Real;
use num_complex::Complex;

/// Largest sub-lattice enumerated exhaustively.
pub const ENUMERATION_LIMIT: usize = 24;

/// Ising spins on the vertices; `true` means `s = +1` (a `tau^x` is placed).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DomainWallConfig {
    pub spins: Vec<bool>,
}

impl DomainWallConfig {
    pub fn from_bits(num_vertices: usize, bits: u64) -> Self {
        Self {
            spins: (0..num_vertices).map(|v| bits >> v & 1 == 1).collect(),
        }
    }

    pub fn spin(&self, v: usize) -> i8 {
        if self.spins[v] {
            1
        } else {
            -1
        }
    }

    /// Edges carrying `sigma^z`. A leg is a wall when its corner is up, as if
    /// its missing endpoint were pinned down.
    pub fn wall_edges(&self, lattice: &LiebLattice) -> Vec<usize> {
        (0..lattice.num_edges())
            .filter(|&e| self.is_wall(lattice, e))
            .collect()
    }

    pub fn is_wall(&self, lattice: &LiebLattice, e: usize) -> bool {
        lattice
            .endpoints(e)
            .iter()
            .fold(false, |acc, &v| acc ^ self.spins[v])
    }

    pub fn wall_length(&self, lattice: &LiebLattice) -> usize {
        self.wall_edges(lattice).len()
    }

    pub fn up_count(&self) -> usize {
        self.spins.iter().filter(|&&s| s).count()
    }

    pub fn to_pauli(&self, lattice: &LiebLattice) -> PauliString {
        let mut p = PauliString::identity(lattice.num_qubits());
        for (v, &s) in self.spins.iter().enumerate() {
            if s {
                p.set(lattice.vertex_qubit(v), true, false);
            }
        }
        for e in self.wall_edges(lattice) {
            p.set(lattice.edge_qubit(e), false, true);
        }
        p
    }
}

/// Gauge spins on the edges; `true` means `s = +1` (a `sigma^x` is placed).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GaugeConfig {
    pub spins: Vec<bool>,
}

impl GaugeConfig {
    pub fn from_bits(num_edges: usize, bits: u64) -> Self {
        Self {
            spins: (0..num_edges).map(|e| bits >> e & 1 == 1).collect(),
        }
    }

    /// Whether the flux around vertex `v` is `-1` (odd number of selected
    /// incident edges), i.e. whether `tau^z_v` is placed.
    pub fn is_flux(&self, lattice: &LiebLattice, v: usize) -> bool {
        lattice
            .incident_edges(v)
            .iter()
            .fold(false, |acc, &e| acc ^ self.spins[e])
    }

    pub fn flux_vertices(&self, lattice: &LiebLattice) -> Vec<usize> {
        (0..lattice.num_vertices())
            .filter(|&v| self.is_flux(lattice, v))
            .collect()
    }

    pub fn up_count(&self) -> usize {
        self.spins.iter().filter(|&&s| s).count()
    }

    pub fn to_pauli(&self, lattice: &LiebLattice) -> PauliString {
        let mut p = PauliString::identity(lattice.num_qubits());
        for (e, &s) in self.spins.iter().enumerate() {
            if s {
                p.set(lattice.edge_qubit(e), true, false);
            }
        }
        for v in self.flux_vertices(lattice) {
            p.set(lattice.vertex_qubit(v), false, true);
        }
        p
    }
}

/// `A_v` for every vertex, then `B_e` for every edge.
pub fn stabilizer_generators(lattice: &LiebLattice) -> Vec<PauliString> {
    let n = lattice.num_qubits();
    let mut out = Vec::with_capacity(n);
    for v in 0..lattice.num_vertices() {
        let mut p = PauliString::single(n, lattice.vertex_qubit(v), 'X');
        for &e in lattice.incident_edges(v) {
            let q = lattice.edge_qubit(e);
            // doubled bonds at N = 2 cancel
            p.set(q, false, !p.z_bit(q));
        }
        out.push(p);
    }
    for e in 0..lattice.num_edges() {
        let mut p = PauliString::single(n, lattice.edge_qubit(e), 'X');
        for &v in lattice.endpoints(e) {
            let q = lattice.vertex_qubit(v);
            p.set(q, false, !p.z_bit(q));
        }
        out.push(p);
    }
    out
}

/// `(pi^x, pi^y, pi^z)` at boundary vertex `u` of an open lattice.
pub fn boundary_spin(lattice: &LiebLattice, u: usize) -> Result<[PauliString; 3]> {
    if !lattice.is_boundary_vertex(u) {
        return Err(Error::Geometry(format!("vertex {u} is not on the boundary")));
    }
    let px = stabilizer_generators(lattice).swap_remove(u);
    let pz = PauliString::single(lattice.num_qubits(), lattice.vertex_qubit(u), 'Z');
    let py = px.multiply(&pz)?;
    let py = py.clone().with_phase(py.phase() * Phase::I);
    Ok([px, py, pz])
}

/// Decohered (or pure) cluster state in factorized Pauli-expansion form.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliExpansion<T: Real> {
    lattice: LiebLattice,
    lambda_x: Vec<T>,
    lambda_z: Vec<T>,
    flipped: Vec<bool>,
}

impl<T: Real> PauliExpansion<T> {
    pub fn pure(lattice: &LiebLattice) -> Self {
        let n = lattice.num_qubits();
        Self {
            lattice: lattice.clone(),
            lambda_x: vec![T::one(); n],
            lambda_z: vec![T::one(); n],
            flipped: vec![false; lattice.num_vertices()],
        }
    }

    pub fn lattice(&self) -> &LiebLattice {
        &self.lattice
    }

    pub fn num_qubits(&self) -> usize {
        self.lattice.num_qubits()
    }

    /// Damping of `Z`-type factors on qubit `q` (set by bit-flip noise).
    pub fn lambda_x(&self, q: usize) -> T {
        self.lambda_x[q]
    }

    /// Damping of `X`-type factors on qubit `q` (set by phase noise).
    pub fn lambda_z(&self, q: usize) -> T {
        self.lambda_z[q]
    }

    pub(crate) fn damp(&mut self, q: usize, fx: T, fz: T) {
        self.lambda_x[q] = self.lambda_x[q] * fx;
        self.lambda_z[q] = self.lambda_z[q] * fz;
    }

    /// Vertices whose spin enters the sign of every domain-wall term.
    pub fn flipped_vertices(&self) -> Vec<usize> {
        (0..self.flipped.len()).filter(|&v| self.flipped[v]).collect()
    }

    pub fn is_flipped(&self) -> bool {
        self.flipped.iter().any(|&f| f)
    }

    /// State conjugated by the boundary string between `u` and `u2`: every
    /// domain-wall term gets the sign `s_u s_u2`.
    pub fn boundary_flip(&self, u: usize, u2: usize) -> Result<Self> {
        // validates the pair
        self.lattice.boundary_string(u, u2)?;
        let mut out = self.clone();
        out.flipped[u] ^= true;
        out.flipped[u2] ^= true;
        Ok(out)
    }

    /// `w_A` including the boundary-flip sign.
    pub fn weight_a(&self, dw: &DomainWallConfig) -> T {
        let l = &self.lattice;
        let mut w = T::one();
        for (v, &up) in dw.spins.iter().enumerate() {
            if up {
                w = w * self.lambda_z[l.vertex_qubit(v)];
            }
            if self.flipped[v] && !up {
                w = -w;
            }
        }
        for e in 0..l.num_edges() {
            if dw.is_wall(l, e) {
                w = w * self.lambda_x[l.edge_qubit(e)];
            }
        }
        w
    }

    pub fn weight_b(&self, ga: &GaugeConfig) -> T {
        let l = &self.lattice;
        let mut w = T::one();
        for (e, &up) in ga.spins.iter().enumerate() {
            if up {
                w = w * self.lambda_z[l.edge_qubit(e)];
            }
        }
        for v in 0..l.num_vertices() {
            if ga.is_flux(l, v) {
                w = w * self.lambda_x[l.vertex_qubit(v)];
            }
        }
        w
    }

    /// `ln` of the global prefactor `2^{-n_q}`.
    pub fn ln_normalization(&self) -> T {
        -T::of_usize(self.num_qubits()) * T::LN_2()
    }

    fn check_enumerable(&self, what: &'static str, size: usize) -> Result<()> {
        if size > ENUMERATION_LIMIT {
            Err(Error::Budget {
                what,
                needed: size,
                limit: ENUMERATION_LIMIT,
            })
        } else {
            Ok(())
        }
    }

    /// All `w_A`, indexed by the bit pattern of up spins.
    pub fn weights_a(&self) -> Result<Vec<T>> {
        let nv = self.lattice.num_vertices();
        self.check_enumerable("vertex spins", nv)?;
        Ok((0..1u64 << nv)
            .map(|b| self.weight_a(&DomainWallConfig::from_bits(nv, b)))
            .collect())
    }

    /// All `w_B`, indexed by the bit pattern of selected edges.
    pub fn weights_b(&self) -> Result<Vec<T>> {
        let ne = self.lattice.num_edges();
        self.check_enumerable("edge spins", ne)?;
        Ok((0..1u64 << ne)
            .map(|b| self.weight_b(&GaugeConfig::from_bits(ne, b)))
            .collect())
    }

    /// Spectrum of the vertex factor, normalized to unit sum. Entry `m` is the
    /// weight of the joint eigenspace with `A_v = -1` exactly for `v` in `m`.
    /// The full spectrum of the state is the outer product of
    /// [`Self::spectrum_a`] and [`Self::spectrum_b`].
    pub fn spectrum_a(&self) -> Result<Vec<T>> {
        let mut w = self.weights_a()?;
        walsh_hadamard(&mut w);
        let s = T::of(0.5).powi(self.lattice.num_vertices() as i32);
        Ok(w.into_iter().map(|x| x * s).collect())
    }

    pub fn spectrum_b(&self) -> Result<Vec<T>> {
        let mut w = self.weights_b()?;
        walsh_hadamard(&mut w);
        let s = T::of(0.5).powi(self.lattice.num_edges() as i32);
        Ok(w.into_iter().map(|x| x * s).collect())
    }

    /// `tr rho^2` by direct enumeration of both factors.
    pub fn purity(&self) -> Result<T> {
        let sa: T = self.weights_a()?.into_iter().map(|w| w * w).sum();
        let sb: T = self.weights_b()?.into_iter().map(|w| w * w).sum();
        Ok(sa * sb * self.ln_normalization().exp())
    }

    /// Explicit operator; every term of the double sum is materialized.
    pub fn to_operator(&self, max_qubits: usize) -> Result<PauliOperator<T>> {
        let n = self.num_qubits();
        if n > max_qubits {
            return Err(Error::Budget {
                what: "qubits",
                needed: n,
                limit: max_qubits,
            });
        }
        let l = &self.lattice;
        let (nv, ne) = (l.num_vertices(), l.num_edges());
        let norm = self.ln_normalization().exp();
        let dws: Vec<_> = (0..1u64 << nv)
            .map(|b| {
                let c = DomainWallConfig::from_bits(nv, b);
                (c.to_pauli(l), self.weight_a(&c))
            })
            .collect();
        let gas: Vec<_> = (0..1u64 << ne)
            .map(|b| {
                let c = GaugeConfig::from_bits(ne, b);
                (c.to_pauli(l), self.weight_b(&c))
            })
            .collect();
        let mut op = PauliOperator::zero(n);
        for (pd, wa) in &dws {
            for (pg, wb) in &gas {
                let w = *wa * *wb * norm;
                if w != T::zero() {
                    op.add_string(&pd.multiply(pg)?, Complex::new(w, T::zero()));
                }
            }
        }
        Ok(op)
    }
}

/// In-place unnormalized Walsh-Hadamard transform; length must be a power of two.
pub fn walsh_hadamard<T: Real>(a: &mut [T]) {
    let n = a.len();
    assert!(n.is_power_of_two());
    let mut h = 1;
    while h < n {
        for i in (0..n).step_by(2 * h) {
            for j in i..i + h {
                let (x, y) = (a[j], a[j + h]);
                a[j] = x + y;
                a[j + h] = x - y;
            }
        }
        h *= 2;
    }
}

/// Stabilizer group element labelled by a set of vertices and a set of edges.
pub fn group_element(lattice: &LiebLattice, vertices: &Bits, edges: &Bits) -> Result<PauliString> {
    let dw = DomainWallConfig::from_bits(lattice.num_vertices(), vertices[0]);
    let ga = GaugeConfig::from_bits(lattice.num_edges(), edges[0]);
    dw.to_pauli(lattice).multiply(&ga.to_pauli(lattice))
}
