//! Single-qubit Pauli channels and their symmetry classification.

use serde::{Deserialize, Serialize};

use crate::cluster::PauliExpansion;
use crate::error::{Error, Result};
use crate::lattice::LiebLattice;
use crate::pauli::PauliString;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorKind {
    /// `X` errors with probability `p`.
    BitFlip,
    /// `Z` errors with probability `p`.
    Phase,
}

impl ErrorKind {
    pub fn letter(self) -> char {
        match self {
            ErrorKind::BitFlip => 'X',
            ErrorKind::Phase => 'Z',
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Support {
    All,
    SublatticeA,
    SublatticeB,
    Qubits(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub kind: ErrorKind,
    pub rate: f64,
    #[serde(default = "default_support")]
    pub support: Support,
}

fn default_support() -> Support {
    Support::All
}

impl ChannelSpec {
    pub fn new(kind: ErrorKind, rate: f64, support: Support) -> Result<Self> {
        let spec = Self {
            kind,
            rate,
            support,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn bit_flip(rate: f64) -> Result<Self> {
        Self::new(ErrorKind::BitFlip, rate, Support::All)
    }

    pub fn phase(rate: f64) -> Result<Self> {
        Self::new(ErrorKind::Phase, rate, Support::All)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.5).contains(&self.rate) {
            return Err(Error::Rate(self.rate));
        }
        Ok(())
    }

    pub fn qubits(&self, lattice: &LiebLattice) -> Result<Vec<usize>> {
        let nv = lattice.num_vertices();
        let nq = lattice.num_qubits();
        Ok(match &self.support {
            Support::All => (0..nq).collect(),
            Support::SublatticeA => (0..nv).collect(),
            Support::SublatticeB => (nv..nq).collect(),
            Support::Qubits(q) => {
                if let Some(&bad) = q.iter().find(|&&q| q >= nq) {
                    return Err(Error::Invalid(format!("qubit {bad} outside lattice of {nq}")));
                }
                let mut q = q.clone();
                q.sort_unstable();
                q.dedup();
                q
            }
        })
    }

    /// Non-identity Kraus operators (up to the `sqrt(p)` prefactor).
    pub fn error_operators(&self, lattice: &LiebLattice) -> Result<Vec<PauliString>> {
        if self.rate == 0.0 {
            return Ok(Vec::new());
        }
        let n = lattice.num_qubits();
        Ok(self
            .qubits(lattice)?
            .into_iter()
            .map(|q| PauliString::single(n, q, self.kind.letter()))
            .collect())
    }
}

/// Composition rate of two Pauli channels of the same kind: `p + q - 2pq`.
pub fn compose_rates(p: f64, q: f64) -> f64 {
    p + q - 2.0 * p * q
}

/// Updates the expansion coefficients for the channel; each affected term
/// is multiplied by `1 - 2p` per anticommuting factor.
pub fn apply_channel<T: Real>(
    expansion: &PauliExpansion<T>,
    spec: &ChannelSpec,
) -> Result<PauliExpansion<T>> {
    spec.validate()?;
    let f = T::one() - T::of(2.0 * spec.rate);
    let mut out = expansion.clone();
    for q in spec.qubits(expansion.lattice())? {
        match spec.kind {
            ErrorKind::BitFlip => out.damp(q, f, T::one()),
            ErrorKind::Phase => out.damp(q, T::one(), f),
        }
    }
    Ok(out)
}

pub fn apply_channels<T: Real>(
    expansion: &PauliExpansion<T>,
    specs: &[ChannelSpec],
) -> Result<PauliExpansion<T>> {
    specs
        .iter()
        .try_fold(expansion.clone(), |e, s| apply_channel(&e, s))
}

/// Convenience: pure state with uniform bit-flip and phase rates on every qubit.
pub fn decohered_state<T: Real>(lattice: &LiebLattice, p_x: f64, p_z: f64) -> Result<PauliExpansion<T>> {
    apply_channels(
        &PauliExpansion::pure(lattice),
        &[ChannelSpec::bit_flip(p_x)?, ChannelSpec::phase(p_z)?],
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Broken,
    Average,
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymmetryVerdict {
    pub zero_form: Verdict,
    pub one_form: Verdict,
}

/// Exact if every Kraus operator commutes with `generator`, average if they
/// commute up to a phase. Pauli Kraus operators always satisfy the latter,
/// so `Broken` cannot occur here.
pub fn classify_symmetry(
    specs: &[ChannelSpec],
    lattice: &LiebLattice,
    generator: &PauliString,
) -> Result<Verdict> {
    let mut verdict = Verdict::Exact;
    for spec in specs {
        spec.validate()?;
        for k in spec.error_operators(lattice)? {
            if !k.commutes(generator, None)? {
                // anticommuting Pauli: U K = -K U, a pure phase
                verdict = verdict.min(Verdict::Average);
            }
        }
    }
    Ok(verdict)
}

/// `prod_v tau^x_v`.
pub fn zero_form_generator(lattice: &LiebLattice) -> PauliString {
    let mut p = PauliString::identity(lattice.num_qubits());
    for v in 0..lattice.num_vertices() {
        p.set(lattice.vertex_qubit(v), true, false);
    }
    p
}

/// `prod sigma^x` over each loop of a generating set of closed B-loops:
/// every elementary plaquette, plus one row and one column loop when periodic.
pub fn one_form_generators(lattice: &LiebLattice) -> Vec<PauliString> {
    let n = lattice.size();
    let nq = lattice.num_qubits();
    let to_pauli = |edges: &[usize]| {
        let mut p = PauliString::identity(nq);
        for &e in edges {
            let q = lattice.edge_qubit(e);
            p.set(q, !p.x_bit(q), false);
        }
        p
    };
    let span = if lattice.is_periodic() { n } else { n - 1 };
    let mut out = Vec::new();
    for r in 0..span {
        for c in 0..span {
            out.push(to_pauli(&lattice.plaquette_loop(r, c).expect("in range").edges));
        }
    }
    if lattice.is_periodic() {
        out.push(to_pauli(&lattice.row_loop(0).expect("periodic").edges));
        let col: Vec<usize> = (0..n).map(|r| lattice.vertical_edge(r, 0).unwrap()).collect();
        out.push(to_pauli(&col));
    }
    out
}

pub fn symmetry_table(specs: &[ChannelSpec], lattice: &LiebLattice) -> Result<SymmetryVerdict> {
    let zero_form = classify_symmetry(specs, lattice, &zero_form_generator(lattice))?;
    let mut one_form = Verdict::Exact;
    for g in one_form_generators(lattice) {
        one_form = one_form.min(classify_symmetry(specs, lattice, &g)?);
    }
    Ok(SymmetryVerdict {
        zero_form,
        one_form,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates_outside_half_rejected() {
        assert!(ChannelSpec::bit_flip(0.6).is_err());
        assert!(ChannelSpec::phase(-0.1).is_err());
        assert!(ChannelSpec::bit_flip(0.5).is_ok());
    }

    #[test]
    fn zero_rate_leaves_expansion() {
        let l = LiebLattice::periodic(2).unwrap();
        let e = PauliExpansion::<f64>::pure(&l);
        assert_eq!(apply_channel(&e, &ChannelSpec::bit_flip(0.0).unwrap()).unwrap(), e);
    }

    #[test]
    fn half_bit_flip_on_b_kills_walls() {
        let l = LiebLattice::periodic(2).unwrap();
        let spec = ChannelSpec::new(ErrorKind::BitFlip, 0.5, Support::SublatticeB).unwrap();
        let e = apply_channel(&PauliExpansion::<f64>::pure(&l), &spec).unwrap();
        let w = e.weights_a().unwrap();
        assert_eq!(w[0], 1.0);
        assert_eq!(w[15], 1.0);
        assert!(w[1..15].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn channel_composition() {
        let l = LiebLattice::open(2).unwrap();
        let e = PauliExpansion::<f64>::pure(&l);
        let (p, q) = (0.1, 0.23);
        let twice = apply_channels(
            &e,
            &[ChannelSpec::bit_flip(p).unwrap(), ChannelSpec::bit_flip(q).unwrap()],
        )
        .unwrap();
        let once = apply_channel(&e, &ChannelSpec::bit_flip(compose_rates(p, q)).unwrap()).unwrap();
        for qb in 0..l.num_qubits() {
            assert!((twice.lambda_x(qb) - once.lambda_x(qb)).abs() < 1e-15);
        }
    }

    #[test]
    fn appendix_table() {
        let l = LiebLattice::periodic(3).unwrap();
        let flip = [ChannelSpec::bit_flip(0.1).unwrap()];
        let pa = [ChannelSpec::new(ErrorKind::Phase, 0.1, Support::SublatticeA).unwrap()];
        let pb = [ChannelSpec::new(ErrorKind::Phase, 0.1, Support::SublatticeB).unwrap()];
        let v = |s: &[ChannelSpec]| symmetry_table(s, &l).unwrap();
        assert_eq!(v(&flip), SymmetryVerdict { zero_form: Verdict::Exact, one_form: Verdict::Exact });
        assert_eq!(v(&pa), SymmetryVerdict { zero_form: Verdict::Average, one_form: Verdict::Exact });
        assert_eq!(v(&pb), SymmetryVerdict { zero_form: Verdict::Exact, one_form: Verdict::Average });
    }

    #[test]
    fn support_bounds_checked() {
        let l = LiebLattice::periodic(2).unwrap();
        let s = ChannelSpec::new(ErrorKind::Phase, 0.1, Support::Qubits(vec![99])).unwrap();
        assert!(s.qubits(&l).is_err());
    }
}
