//! Pauli strings with exact `Z4` phases, and sparse Pauli-basis operators.
//!
//! A string is `i^k * prod_q P_q` where `P_q` is `I`, `X`, `Z` or the
//! Hermitian `Y = i X Z`, encoded by the bits `(x_q, z_q)`.

use std::collections::HashMap;
use std::ops::Mul;

use num_complex::Complex;
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Packed qubit bit set.
pub type Bits = SmallVec<[u64; 2]>;

pub fn zero_bits(n: usize) -> Bits {
    SmallVec::from_elem(0, n.div_ceil(64).max(1))
}

pub fn bits_from_mask(mask: &[bool]) -> Bits {
    let mut b = zero_bits(mask.len());
    for (q, &on) in mask.iter().enumerate() {
        if on {
            b[q / 64] |= 1 << (q % 64);
        }
    }
    b
}

pub fn bits_from_indices(n: usize, qubits: impl IntoIterator<Item = usize>) -> Bits {
    let mut b = zero_bits(n);
    for q in qubits {
        b[q / 64] ^= 1 << (q % 64);
    }
    b
}

#[inline]
fn get_bit(b: &Bits, q: usize) -> bool {
    b[q / 64] >> (q % 64) & 1 == 1
}

#[inline]
fn and_count(a: &Bits, b: &Bits) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x & y).count_ones()).sum()
}

#[inline]
fn and3_count(a: &Bits, b: &Bits, c: &Bits) -> u32 {
    a.iter()
        .zip(b)
        .zip(c)
        .map(|((x, y), z)| (x & y & z).count_ones())
        .sum()
}

fn xor(a: &Bits, b: &Bits) -> Bits {
    a.iter().zip(b).map(|(x, y)| x ^ y).collect()
}

/// Power of `i`, stored mod 4.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct Phase(u8);

impl Phase {
    pub const ONE: Phase = Phase(0);
    pub const I: Phase = Phase(1);
    pub const MINUS_ONE: Phase = Phase(2);
    pub const MINUS_I: Phase = Phase(3);

    pub fn from_power(k: i64) -> Self {
        Phase(k.rem_euclid(4) as u8)
    }

    pub fn power(self) -> u8 {
        self.0
    }

    pub fn conj(self) -> Self {
        Phase((4 - self.0) % 4)
    }

    pub fn is_real(self) -> bool {
        self.0.is_multiple_of(2)
    }

    pub fn to_complex<T: Real>(self) -> Complex<T> {
        let (o, z) = (T::one(), T::zero());
        match self.0 {
            0 => Complex::new(o, z),
            1 => Complex::new(z, o),
            2 => Complex::new(-o, z),
            _ => Complex::new(z, -o),
        }
    }
}

impl Mul for Phase {
    type Output = Phase;
    fn mul(self, rhs: Phase) -> Phase {
        Phase((self.0 + rhs.0) % 4)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PauliString {
    n: usize,
    x: Bits,
    z: Bits,
    phase: Phase,
}

impl PauliString {
    pub fn identity(n: usize) -> Self {
        Self {
            n,
            x: zero_bits(n),
            z: zero_bits(n),
            phase: Phase::ONE,
        }
    }

    pub fn from_masks(n: usize, x: Bits, z: Bits, phase: Phase) -> Self {
        debug_assert_eq!(x.len(), n.div_ceil(64).max(1));
        Self { n, x, z, phase }
    }

    /// Parses e.g. `"XIZY"` (qubit 0 first), with optional leading `-`, `i`
    /// or `-i`.
    pub fn parse(s: &str) -> Result<Self> {
        let (phase, body) = if let Some(r) = s.strip_prefix("-i") {
            (Phase::MINUS_I, r)
        } else if let Some(r) = s.strip_prefix('-') {
            (Phase::MINUS_ONE, r)
        } else if let Some(r) = s.strip_prefix('i') {
            (Phase::I, r)
        } else {
            (Phase::ONE, s.strip_prefix('+').unwrap_or(s))
        };
        let n = body.chars().count();
        let mut p = Self::identity(n);
        p.phase = phase;
        for (q, ch) in body.chars().enumerate() {
            match ch {
                'I' => {}
                'X' => p.set(q, true, false),
                'Z' => p.set(q, false, true),
                'Y' => p.set(q, true, true),
                _ => return Err(Error::Invalid(format!("bad Pauli letter {ch:?}"))),
            }
        }
        Ok(p)
    }

    pub fn single(n: usize, q: usize, letter: char) -> Self {
        let mut p = Self::identity(n);
        match letter {
            'X' => p.set(q, true, false),
            'Z' => p.set(q, false, true),
            'Y' => p.set(q, true, true),
            _ => {}
        }
        p
    }

    pub fn set(&mut self, q: usize, x: bool, z: bool) {
        let (w, b) = (q / 64, 1u64 << (q % 64));
        self.x[w] = if x { self.x[w] | b } else { self.x[w] & !b };
        self.z[w] = if z { self.z[w] | b } else { self.z[w] & !b };
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn x_mask(&self) -> &Bits {
        &self.x
    }

    pub fn z_mask(&self) -> &Bits {
        &self.z
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn with_phase(mut self, phase: Phase) -> Self {
        self.phase = phase;
        self
    }

    pub fn x_bit(&self, q: usize) -> bool {
        get_bit(&self.x, q)
    }

    pub fn z_bit(&self, q: usize) -> bool {
        get_bit(&self.z, q)
    }

    pub fn letter(&self, q: usize) -> char {
        match (self.x_bit(q), self.z_bit(q)) {
            (false, false) => 'I',
            (true, false) => 'X',
            (false, true) => 'Z',
            (true, true) => 'Y',
        }
    }

    pub fn is_identity_mask(&self) -> bool {
        self.x.iter().chain(&self.z).all(|&w| w == 0)
    }

    pub fn weight(&self) -> usize {
        self.x
            .iter()
            .zip(&self.z)
            .map(|(a, b)| (a | b).count_ones() as usize)
            .sum()
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.n != other.n {
            Err(Error::QubitMismatch(self.n, other.n))
        } else {
            Ok(())
        }
    }

    /// Exact product `self * other`.
    pub fn multiply(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let x = xor(&self.x, &other.x);
        let z = xor(&self.z, &other.z);
        // Write each factor as i^{xz} X^x Z^z, move Z1 past X2, and re-absorb
        // the Hermitian Y convention of the result.
        let k = self.phase.0 as i64
            + other.phase.0 as i64
            + and_count(&self.x, &self.z) as i64
            + and_count(&other.x, &other.z) as i64
            + 2 * and_count(&self.z, &other.x) as i64
            - and_count(&x, &z) as i64;
        Ok(Self {
            n: self.n,
            x,
            z,
            phase: Phase::from_power(k),
        })
    }

    /// Whether the two strings commute, optionally restricted to the qubits in
    /// `region` (i.e. whether the region-restricted factors commute).
    pub fn commutes(&self, other: &Self, region: Option<&Bits>) -> Result<bool> {
        self.check(other)?;
        let s = match region {
            None => and_count(&self.x, &other.z) + and_count(&other.x, &self.z),
            Some(r) => and3_count(&self.x, &other.z, r) + and3_count(&other.x, &self.z, r),
        };
        Ok(s % 2 == 0)
    }

    /// Number of `Y` factors on qubits of `region`.
    pub fn y_count(&self, region: &Bits) -> usize {
        and3_count(&self.x, &self.z, region) as usize
    }

    /// Sign acquired by the string under partial transpose on `region`.
    pub fn partial_transpose_sign(&self, region: &Bits) -> i8 {
        if self.y_count(region).is_multiple_of(2) {
            1
        } else {
            -1
        }
    }

    pub fn adjoint(&self) -> Self {
        Self {
            phase: self.phase.conj(),
            ..self.clone()
        }
    }

    /// `P |j> = amplitude * |j ^ x>` for a computational basis state packed
    /// into one word. Only valid for up to 64 qubits.
    pub fn apply_basis(&self, j: u64) -> (u64, Phase) {
        let x = self.x[0];
        let z = self.z[0];
        let k = self.phase.0 as u32 + (x & z).count_ones() + 2 * (z & j).count_ones();
        (j ^ x, Phase((k % 4) as u8))
    }

    /// Hermitian string with the same masks and phase +1.
    pub fn masks_only(&self) -> Self {
        Self {
            phase: Phase::ONE,
            ..self.clone()
        }
    }

    /// Trace divided by `2^n`: the phase for the identity mask, zero otherwise.
    pub fn normalized_trace<T: Real>(&self) -> Complex<T> {
        if self.is_identity_mask() {
            self.phase.to_complex()
        } else {
            Complex::new(T::zero(), T::zero())
        }
    }
}

impl std::fmt::Display for PauliString {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let pre = ["+", "+i", "-", "-i"][self.phase.0 as usize];
        write!(f, "{pre}")?;
        for q in 0..self.n {
            write!(f, "{}", self.letter(q))?;
        }
        Ok(())
    }
}

/// Linear combination of Hermitian Pauli strings with complex coefficients.
#[derive(Clone, Debug)]
pub struct PauliOperator<T: Real> {
    n: usize,
    terms: HashMap<(Bits, Bits), Complex<T>>,
}

impl<T: Real> PauliOperator<T> {
    pub fn zero(n: usize) -> Self {
        Self {
            n,
            terms: HashMap::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut op = Self::zero(n);
        op.add_string(&PauliString::identity(n), Complex::new(T::one(), T::zero()));
        op
    }

    pub fn from_string(p: &PauliString) -> Self {
        let mut op = Self::zero(p.n);
        op.add_string(p, Complex::new(T::one(), T::zero()));
        op
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add_string(&mut self, p: &PauliString, coeff: Complex<T>) {
        assert_eq!(p.n, self.n, "qubit count mismatch");
        let c = coeff * p.phase.to_complex::<T>();
        let slot = self
            .terms
            .entry((p.x.clone(), p.z.clone()))
            .or_insert_with(|| Complex::new(T::zero(), T::zero()));
        *slot = *slot + c;
    }

    pub fn terms(&self) -> impl Iterator<Item = (PauliString, Complex<T>)> + '_ {
        self.terms.iter().map(move |((x, z), c)| {
            (
                PauliString {
                    n: self.n,
                    x: x.clone(),
                    z: z.clone(),
                    phase: Phase::ONE,
                },
                *c,
            )
        })
    }

    pub fn coefficient(&self, p: &PauliString) -> Complex<T> {
        let c = self
            .terms
            .get(&(p.x.clone(), p.z.clone()))
            .copied()
            .unwrap_or_else(|| Complex::new(T::zero(), T::zero()));
        c * p.phase.conj().to_complex::<T>()
    }

    pub fn scale(&mut self, s: Complex<T>) {
        for c in self.terms.values_mut() {
            *c = *c * s;
        }
    }

    pub fn add(&mut self, other: &Self) -> Result<()> {
        if self.n != other.n {
            return Err(Error::QubitMismatch(self.n, other.n));
        }
        for (k, c) in &other.terms {
            let slot = self
                .terms
                .entry(k.clone())
                .or_insert_with(|| Complex::new(T::zero(), T::zero()));
            *slot = *slot + *c;
        }
        Ok(())
    }

    pub fn multiply(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::QubitMismatch(self.n, other.n));
        }
        let mut out = Self::zero(self.n);
        for (p, a) in self.terms() {
            for (q, b) in other.terms() {
                let pq = p.multiply(&q)?;
                out.add_string(&pq, a * b);
            }
        }
        Ok(out)
    }

    /// Drops terms with modulus below `tol`.
    pub fn prune(&mut self, tol: T) {
        self.terms.retain(|_, c| c.norm() > tol);
    }

    /// `tr(op) / 2^n`.
    pub fn normalized_trace(&self) -> Complex<T> {
        self.coefficient(&PauliString::identity(self.n))
    }

    /// `ln tr(op)`, assuming the identity coefficient is positive real.
    pub fn ln_trace(&self) -> T {
        let c = self.normalized_trace().re;
        c.ln() + T::of_usize(self.n) * T::LN_2()
    }

    /// Partial transpose on `region`: each string picks up `(-1)^{#Y}`.
    pub fn partial_transpose(&self, region: &Bits) -> Self {
        let mut out = self.clone();
        for ((x, z), c) in out.terms.iter_mut() {
            if and3_count(x, z, region) % 2 == 1 {
                *c = -*c;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64 as C;
    use proptest::prelude::*;

    type Mat = Vec<Vec<C>>;

    fn pauli_mat(ch: char) -> Mat {
        let (o, z, i) = (C::new(1.0, 0.0), C::new(0.0, 0.0), C::new(0.0, 1.0));
        match ch {
            'I' => vec![vec![o, z], vec![z, o]],
            'X' => vec![vec![z, o], vec![o, z]],
            'Y' => vec![vec![z, -i], vec![i, z]],
            _ => vec![vec![o, z], vec![z, -o]],
        }
    }

    fn kron(a: &Mat, b: &Mat) -> Mat {
        let (n, m) = (a.len(), b.len());
        let mut out = vec![vec![C::new(0.0, 0.0); n * m]; n * m];
        for i in 0..n {
            for j in 0..n {
                for k in 0..m {
                    for l in 0..m {
                        out[i * m + k][j * m + l] = a[i][j] * b[k][l];
                    }
                }
            }
        }
        out
    }

    fn matmul(a: &Mat, b: &Mat) -> Mat {
        let n = a.len();
        let mut out = vec![vec![C::new(0.0, 0.0); n]; n];
        for i in 0..n {
            for k in 0..n {
                for j in 0..n {
                    out[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        out
    }

    /// Dense matrix with qubit 0 as the least significant bit.
    fn dense(p: &PauliString) -> Mat {
        let mut m = vec![vec![C::new(1.0, 0.0)]];
        for q in (0..p.num_qubits()).rev() {
            m = kron(&m, &pauli_mat(p.letter(q)));
        }
        let ph: C = p.phase().to_complex();
        m.iter().map(|r| r.iter().map(|&v| v * ph).collect()).collect()
    }

    fn close(a: &Mat, b: &Mat) -> bool {
        a.iter()
            .flatten()
            .zip(b.iter().flatten())
            .all(|(x, y)| (x - y).norm() < 1e-12)
    }

    fn all_strings(n: usize) -> Vec<PauliString> {
        let letters = ['I', 'X', 'Y', 'Z'];
        (0..4usize.pow(n as u32))
            .map(|mut k| {
                let s: String = (0..n)
                    .map(|_| {
                        let c = letters[k % 4];
                        k /= 4;
                        c
                    })
                    .collect();
                PauliString::parse(&s).unwrap()
            })
            .collect()
    }

    fn arb_string(n: usize) -> impl Strategy<Value = PauliString> {
        (prop::collection::vec(0u8..4, n), 0u8..4).prop_map(move |(v, ph)| {
            let s: String = v.iter().map(|&k| ['I', 'X', 'Y', 'Z'][k as usize]).collect();
            PauliString::parse(&s).unwrap().with_phase(Phase(ph))
        })
    }

    #[test]
    fn x_times_z_is_minus_i_y() {
        let x = PauliString::parse("X").unwrap();
        let z = PauliString::parse("Z").unwrap();
        assert_eq!(x.multiply(&z).unwrap(), PauliString::parse("-iY").unwrap());
        assert_eq!(z.multiply(&x).unwrap(), PauliString::parse("iY").unwrap());
    }

    #[test]
    fn identity_is_neutral() {
        let p = PauliString::parse("-XYZI").unwrap();
        assert_eq!(p.multiply(&PauliString::identity(4)).unwrap(), p);
    }

    #[test]
    fn size_mismatch_errors() {
        let a = PauliString::identity(2);
        let b = PauliString::identity(3);
        assert!(a.multiply(&b).is_err());
        assert!(a.commutes(&b, None).is_err());
    }

    #[test]
    fn hermitian_squares_to_identity() {
        for p in all_strings(2) {
            let sq = p.multiply(&p).unwrap();
            assert!(sq.is_identity_mask());
            assert_eq!(sq.phase(), Phase::ONE);
        }
    }

    #[test]
    fn products_match_dense_two_qubits() {
        for p in all_strings(2) {
            for q in all_strings(2) {
                let pq = p.multiply(&q).unwrap();
                assert!(close(&dense(&pq), &matmul(&dense(&p), &dense(&q))), "{p} {q}");
            }
        }
    }

    #[test]
    fn commutation_matches_matrix_commutator_exhaustively() {
        let strings = all_strings(2);
        let mut cases = 0;
        for p in &strings {
            for q in &strings {
                let (a, b) = (dense(p), dense(q));
                let ab = matmul(&a, &b);
                let ba = matmul(&b, &a);
                assert_eq!(p.commutes(q, None).unwrap(), close(&ab, &ba));
                cases += 1;
            }
        }
        assert_eq!(cases, 256);
    }

    #[test]
    fn y_count_and_sign() {
        let p = PauliString::parse("YYI").unwrap();
        assert_eq!(p.y_count(&bits_from_mask(&[true; 3])), 2);
        assert_eq!(p.partial_transpose_sign(&zero_bits(3)), 1);
        let y = PauliString::parse("IYI").unwrap();
        assert_eq!(y.partial_transpose_sign(&bits_from_indices(3, [1])), -1);
    }

    #[test]
    fn basis_action_matches_dense() {
        for p in all_strings(3) {
            let p = p.with_phase(Phase::I);
            let m = dense(&p);
            for j in 0..8u64 {
                let (i, ph) = p.apply_basis(j);
                let amp: C = ph.to_complex();
                assert!((m[i as usize][j as usize] - amp).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn transpose_sign_matches_dense_transpose() {
        for p in all_strings(2) {
            let m = dense(&p);
            let t: Mat = (0..4).map(|i| (0..4).map(|j| m[j][i]).collect()).collect();
            let s = p.partial_transpose_sign(&bits_from_mask(&[true, true])) as f64;
            let sm: Mat = m.iter().map(|r| r.iter().map(|v| v * s).collect()).collect();
            assert!(close(&t, &sm));
        }
    }

    #[test]
    fn y_sign_of_product_factorizes_up_to_commutation() {
        // (-1)^{y(pq)} = (-1)^{y(p)} (-1)^{y(q)} sgn(p,q) on the region.
        let n = 4;
        let strings = all_strings(n);
        let regions: Vec<Bits> = (0..16u64).map(|m| SmallVec::from_elem(m, 1)).collect();
        for (i, p) in strings.iter().enumerate().step_by(3) {
            for q in strings.iter().skip(i % 7).step_by(5) {
                for r in &regions {
                    let pq = p.multiply(q).unwrap();
                    let lhs = pq.partial_transpose_sign(r);
                    let c = if p.commutes(q, Some(r)).unwrap() { 1 } else { -1 };
                    let rhs = p.partial_transpose_sign(r) * q.partial_transpose_sign(r) * c;
                    assert_eq!(lhs, rhs);
                }
            }
        }
    }

    #[test]
    fn operator_trace_and_product() {
        let mut a = PauliOperator::<f64>::identity(2);
        a.add_string(&PauliString::parse("XZ").unwrap(), C::new(0.5, 0.0));
        let sq = a.multiply(&a).unwrap();
        // (1 + XZ/2)^2 = 1.25 + XZ
        assert!((sq.normalized_trace() - C::new(1.25, 0.0)).norm() < 1e-14);
        assert!((sq.coefficient(&PauliString::parse("XZ").unwrap()) - C::new(1.0, 0.0)).norm() < 1e-14);
        assert!((a.ln_trace() - 4f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn wide_strings_use_multiple_words() {
        let n = 100;
        let p = PauliString::single(n, 90, 'X');
        let q = PauliString::single(n, 90, 'Z');
        assert!(!p.commutes(&q, None).unwrap());
        assert_eq!(p.multiply(&q).unwrap().letter(90), 'Y');
        assert_eq!(p.weight(), 1);
    }

    proptest! {
        #[test]
        fn associativity_against_tensor_oracle(
            p in arb_string(3), q in arb_string(3), r in arb_string(3)
        ) {
            let left = p.multiply(&q).unwrap().multiply(&r).unwrap();
            let right = p.multiply(&q.multiply(&r).unwrap()).unwrap();
            prop_assert_eq!(&left, &right);
            let m = matmul(&matmul(&dense(&p), &dense(&q)), &dense(&r));
            prop_assert!(close(&dense(&left), &m));
        }
    }
}
