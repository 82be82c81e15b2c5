//! Dense density matrices for small systems, used as an independent oracle.
//!
//! Basis index bit `q` is the computational state of qubit `q`.

use num_complex::Complex;

use crate::channels::{one_form_generators, zero_form_generator, ChannelSpec, SymmetryVerdict, Verdict};
use crate::cluster::{stabilizer_generators, PauliExpansion};
use crate::error::{Error, Result};
use crate::lattice::LiebLattice;
use crate::pauli::{PauliOperator, PauliString};
use crate::scalar::Real;

pub const MAX_DENSE_QUBITS: usize = 14;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<T: Real> {
    qubits: usize,
    dim: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(qubits: usize) -> Result<Self> {
        if qubits > MAX_DENSE_QUBITS {
            return Err(Error::Budget {
                what: "dense qubits",
                needed: qubits,
                limit: MAX_DENSE_QUBITS,
            });
        }
        let dim = 1usize << qubits;
        Ok(Self {
            qubits,
            dim,
            data: vec![Complex::new(T::zero(), T::zero()); dim * dim],
        })
    }

    pub fn identity(qubits: usize) -> Result<Self> {
        let mut m = Self::zeros(qubits)?;
        for i in 0..m.dim {
            m.data[i * m.dim + i] = Complex::new(T::one(), T::zero());
        }
        Ok(m)
    }

    pub fn from_operator(op: &PauliOperator<T>) -> Result<Self> {
        let mut m = Self::zeros(op.num_qubits())?;
        for (p, c) in op.terms() {
            for j in 0..m.dim {
                let (i, ph) = p.apply_basis(j as u64);
                m.data[i as usize * m.dim + j] = m.data[i as usize * m.dim + j] + c * ph.to_complex();
            }
        }
        Ok(m)
    }

    pub fn from_expansion(e: &PauliExpansion<T>) -> Result<Self> {
        Self::from_operator(&e.to_operator(MAX_DENSE_QUBITS)?)
    }

    /// `prod_g (1 + g) / 2` over all stabilizer generators, built by repeated
    /// left multiplication without going through the expansion.
    pub fn stabilizer_projector(lattice: &LiebLattice) -> Result<Self> {
        let mut m = Self::identity(lattice.num_qubits())?;
        let half = T::of(0.5);
        for g in stabilizer_generators(lattice) {
            let gm = m.left_pauli(&g);
            for (a, b) in m.data.iter_mut().zip(&gm.data) {
                *a = (*a + *b) * half;
            }
        }
        Ok(m)
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> Complex<T> {
        self.data[i * self.dim + j]
    }

    /// `P M`.
    pub fn left_pauli(&self, p: &PauliString) -> Self {
        let mut out = self.clone();
        for k in 0..self.dim {
            let (i, ph) = p.apply_basis(k as u64);
            let ph: Complex<T> = ph.to_complex();
            let (src, dst) = (k * self.dim, i as usize * self.dim);
            for j in 0..self.dim {
                out.data[dst + j] = self.data[src + j] * ph;
            }
        }
        out
    }

    /// `M P`.
    pub fn right_pauli(&self, p: &PauliString) -> Self {
        // (M P)[i][j] = sum_k M[i][k] P[k][j], with P|j> = ph |j ^ x>.
        let cols: Vec<(usize, Complex<T>)> = (0..self.dim)
            .map(|j| {
                let (k, ph) = p.apply_basis(j as u64);
                (k as usize, ph.to_complex())
            })
            .collect();
        let mut out = self.clone();
        for i in 0..self.dim {
            let row = &self.data[i * self.dim..(i + 1) * self.dim];
            let dst = &mut out.data[i * self.dim..(i + 1) * self.dim];
            for (d, &(k, ph)) in dst.iter_mut().zip(&cols) {
                *d = row[k] * ph;
            }
        }
        out
    }

    /// `P M P^dagger`.
    pub fn conjugate(&self, p: &PauliString) -> Self {
        self.blend_conjugate(p, T::zero(), T::one())
    }

    /// `a M + b P M P^dagger` in one pass, using
    /// `(P M P^dagger)[i][j] = ph(i^x) conj(ph(j^x)) M[i^x][j^x]` with `P|k> = ph(k)|k^x>`.
    fn blend_conjugate(&self, p: &PauliString, a: T, b: T) -> Self {
        let dim = self.dim;
        let mut x = 0usize;
        let ph: Vec<Complex<T>> = (0..dim)
            .map(|k| {
                let (img, ph) = p.apply_basis(k as u64);
                x = img as usize ^ k;
                ph.to_complex()
            })
            .collect();
        let mut out = self.clone();
        for i in 0..dim {
            let si = i ^ x;
            let pi = ph[si];
            let src = &self.data[si * dim..(si + 1) * dim];
            let own = &self.data[i * dim..(i + 1) * dim];
            let dst = &mut out.data[i * dim..(i + 1) * dim];
            for j in 0..dim {
                let sj = j ^ x;
                dst[j] = own[j] * a + pi * ph[sj].conj() * src[sj] * b;
            }
        }
        out
    }

    /// Applies the channel as explicit Kraus maps, one qubit at a time.
    pub fn apply_kraus(&self, spec: &ChannelSpec, lattice: &LiebLattice) -> Result<Self> {
        spec.validate()?;
        let p = T::of(spec.rate);
        let q = T::one() - p;
        let mut m = self.clone();
        for k in spec.error_operators(lattice)? {
            m = m.blend_conjugate(&k, q, p);
        }
        Ok(m)
    }

    pub fn trace(&self) -> Complex<T> {
        (0..self.dim).fold(Complex::new(T::zero(), T::zero()), |acc, i| {
            acc + self.data[i * self.dim + i]
        })
    }

    /// `tr(M^2)`.
    pub fn purity(&self) -> Complex<T> {
        self.trace_product(self)
    }

    /// `tr(A B)`, summed row by row to limit rounding drift.
    pub fn trace_product(&self, other: &Self) -> Complex<T> {
        let zero = Complex::new(T::zero(), T::zero());
        (0..self.dim)
            .map(|i| {
                (0..self.dim).fold(zero, |acc, j| {
                    acc + self.data[i * self.dim + j] * other.data[j * self.dim + i]
                })
            })
            .fold(zero, |acc, r| acc + r)
    }

    /// Transposes the tensor factors of the qubits set in `mask`.
    pub fn partial_transpose(&self, mask: u64) -> Self {
        let mut out = self.clone();
        for i in 0..self.dim as u64 {
            for j in 0..self.dim as u64 {
                let i2 = (i & !mask) | (j & mask);
                let j2 = (j & !mask) | (i & mask);
                out.data[i2 as usize * self.dim + j2 as usize] =
                    self.data[i as usize * self.dim + j as usize];
            }
        }
        out
    }

    pub fn is_hermitian(&self, tol: T) -> bool {
        (0..self.dim).all(|i| {
            (0..self.dim).all(|j| (self.get(i, j) - self.get(j, i).conj()).norm() <= tol)
        })
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).norm())
            .fold(T::zero(), T::max)
    }
}

/// Symmetry verdicts read off the decohered density matrix: `U rho = rho`
/// is exact, `U rho U^dagger = rho` average, anything else broken. The state
/// is the explicit stabilizer projector pushed through the Kraus maps.
pub fn dense_symmetry_table(specs: &[ChannelSpec], lattice: &LiebLattice) -> Result<SymmetryVerdict> {
    let mut rho = DenseMatrix::<f64>::stabilizer_projector(lattice)?;
    for s in specs {
        rho = rho.apply_kraus(s, lattice)?;
    }
    let tol = 1e-12;
    let verdict = |u: &PauliString| {
        if rho.left_pauli(u).max_abs_diff(&rho) <= tol {
            Verdict::Exact
        } else if rho.conjugate(u).max_abs_diff(&rho) <= tol {
            Verdict::Average
        } else {
            Verdict::Broken
        }
    };
    let zero_form = verdict(&zero_form_generator(lattice));
    let one_form = one_form_generators(lattice)
        .iter()
        .map(verdict)
        .min()
        .unwrap_or(Verdict::Exact);
    Ok(SymmetryVerdict {
        zero_form,
        one_form,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_enforced() {
        assert!(DenseMatrix::<f64>::zeros(15).is_err());
    }

    #[test]
    fn partial_transpose_of_single_y() {
        let op = PauliOperator::<f64>::from_string(&PauliString::parse("YX").unwrap());
        let m = DenseMatrix::from_operator(&op).unwrap();
        let t = m.partial_transpose(0b01);
        let neg = {
            let mut o = op.clone();
            o.scale(Complex::new(-1.0, 0.0));
            DenseMatrix::from_operator(&o).unwrap()
        };
        assert!(t.max_abs_diff(&neg) < 1e-15);
        assert!(m.partial_transpose(0b10).max_abs_diff(&m) < 1e-15);
    }

    #[test]
    fn left_right_pauli_agree_with_operator_product() {
        let p = PauliString::parse("XZY").unwrap();
        let q = PauliString::parse("iZZX").unwrap();
        let m = DenseMatrix::<f64>::from_operator(&PauliOperator::from_string(&q)).unwrap();
        let pq = DenseMatrix::from_operator(&PauliOperator::from_string(&p.multiply(&q).unwrap())).unwrap();
        let qp = DenseMatrix::from_operator(&PauliOperator::from_string(&q.multiply(&p).unwrap())).unwrap();
        assert!(m.left_pauli(&p).max_abs_diff(&pq) < 1e-15);
        assert!(m.right_pauli(&p).max_abs_diff(&qp) < 1e-15);
    }

    #[test]
    fn one_pass_conjugation_matches_products() {
        let p = PauliString::parse("YZX").unwrap();
        let q = PauliString::parse("XXY").unwrap();
        let m = DenseMatrix::<f64>::from_operator(&PauliOperator::from_string(&q)).unwrap();
        let slow = m.left_pauli(&p).right_pauli(&p.adjoint());
        assert!(m.conjugate(&p).max_abs_diff(&slow) < 1e-15);
    }

    #[test]
    fn dense_verdicts_match_kraus_commutation() {
        use crate::channels::{symmetry_table, ErrorKind, Support};
        let l = LiebLattice::periodic(2).unwrap();
        for spec in [
            ChannelSpec::bit_flip(0.1).unwrap(),
            ChannelSpec::new(ErrorKind::Phase, 0.1, Support::SublatticeA).unwrap(),
            ChannelSpec::new(ErrorKind::Phase, 0.1, Support::SublatticeB).unwrap(),
        ] {
            let s = [spec];
            assert_eq!(dense_symmetry_table(&s, &l).unwrap(), symmetry_table(&s, &l).unwrap());
        }
    }
}
