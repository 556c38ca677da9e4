//! Prime-field arithmetic, uniform sampling and Vandermonde solving.
//!
//! Elements are stored as `u64` residues; products are widened to `u128`
//! before reduction, so any prime below 2^63 is supported.

use alloc::vec::Vec;
use core::fmt;
use core::ops::{Add, Mul, Neg, Sub};

use rand_core::RngCore;

use crate::model::Scheme;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FieldError {
    #[error("{0} is not a prime below 2^63")]
    NotPrime(u64),
    #[error("operands live in different fields (q={0} vs q={1})")]
    ModulusMismatch(u64, u64),
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("evaluation points must be nonzero")]
    ZeroAlpha,
    #[error("evaluation points must be pairwise distinct")]
    RepeatedAlpha,
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("missing parameter `{0}` required by this scheme")]
    MissingParameter(&'static str),
    #[error("field bound overflows 64-bit arithmetic")]
    BoundOverflow,
}

const MAX_MODULUS: u64 = 1 << 63;

/// Deterministic Miller-Rabin. The first twelve primes as witnesses are
/// exact for every `n < 3.3 * 10^24`, which covers all of `u64`.
pub fn is_prime(n: u64) -> bool {
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &p in &WITNESSES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &WITNESSES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[inline]
fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Smallest prime strictly greater than `bound`.
pub fn next_prime_above(bound: u64) -> Result<u64, FieldError> {
    let mut candidate = bound.checked_add(1).ok_or(FieldError::BoundOverflow)?;
    loop {
        if candidate >= MAX_MODULUS {
            return Err(FieldError::BoundOverflow);
        }
        if is_prime(candidate) {
            return Ok(candidate);
        }
        candidate += 1;
    }
}

/// A prime modulus `q < 2^63`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PrimeModulus(u64);

impl PrimeModulus {
    pub fn new(q: u64) -> Result<Self, FieldError> {
        if q < MAX_MODULUS && is_prime(q) {
            Ok(PrimeModulus(q))
        } else {
            Err(FieldError::NotPrime(q))
        }
    }

    #[inline]
    pub fn get(self) -> u64 {
        self.0
    }

    /// Reduces an arbitrary `u64` into the field.
    #[inline]
    pub fn elem(self, value: u64) -> Fe {
        Fe { value: value % self.0, q: self }
    }

    /// Reduces a signed integer into the field.
    pub fn elem_i64(self, value: i64) -> Fe {
        let r = value.rem_euclid(self.0 as i64) as u64;
        Fe { value: r, q: self }
    }

    pub fn zero(self) -> Fe {
        Fe { value: 0, q: self }
    }

    pub fn one(self) -> Fe {
        self.elem(1)
    }
}

impl fmt::Debug for PrimeModulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F_{}", self.0)
    }
}

impl fmt::Display for PrimeModulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// An element of `F_q`. Always holds a canonical residue in `[0, q)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fe {
    value: u64,
    q: PrimeModulus,
}

impl Fe {
    #[inline]
    pub fn value(self) -> u64 {
        self.value
    }

    #[inline]
    pub fn modulus(self) -> PrimeModulus {
        self.q
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.value == 0
    }

    fn check(self, other: Fe) -> Result<(), FieldError> {
        if self.q == other.q {
            Ok(())
        } else {
            Err(FieldError::ModulusMismatch(self.q.0, other.q.0))
        }
    }

    pub fn try_add(self, other: Fe) -> Result<Fe, FieldError> {
        self.check(other)?;
        let q = self.q.0;
        // both operands < q < 2^63, so the sum cannot overflow
        let s = self.value + other.value;
        Ok(Fe { value: if s >= q { s - q } else { s }, q: self.q })
    }

    pub fn try_sub(self, other: Fe) -> Result<Fe, FieldError> {
        self.check(other)?;
        let q = self.q.0;
        let v = if self.value >= other.value {
            self.value - other.value
        } else {
            self.value + q - other.value
        };
        Ok(Fe { value: v, q: self.q })
    }

    pub fn try_mul(self, other: Fe) -> Result<Fe, FieldError> {
        self.check(other)?;
        Ok(Fe { value: mul_mod(self.value, other.value, self.q.0), q: self.q })
    }

    pub fn pow(self, exp: u64) -> Fe {
        Fe { value: pow_mod(self.value, exp, self.q.0), q: self.q }
    }

    /// Multiplicative inverse by Fermat's little theorem.
    pub fn inv(self) -> Result<Fe, FieldError> {
        if self.value == 0 {
            return Err(FieldError::ZeroInverse);
        }
        Ok(self.pow(self.q.0 - 2))
    }
}

impl fmt::Debug for Fe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

impl fmt::Display for Fe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

// Operator forms panic on mixed moduli; that is always a programming error
// inside this crate. Untrusted combinations go through the `try_*` methods.
impl Add for Fe {
    type Output = Fe;
    fn add(self, rhs: Fe) -> Fe {
        self.try_add(rhs).expect("field modulus mismatch")
    }
}

impl Sub for Fe {
    type Output = Fe;
    fn sub(self, rhs: Fe) -> Fe {
        self.try_sub(rhs).expect("field modulus mismatch")
    }
}

impl Mul for Fe {
    type Output = Fe;
    fn mul(self, rhs: Fe) -> Fe {
        self.try_mul(rhs).expect("field modulus mismatch")
    }
}

impl Neg for Fe {
    type Output = Fe;
    fn neg(self) -> Fe {
        self.q.zero() - self
    }
}

pub fn field_add(a: Fe, b: Fe) -> Result<Fe, FieldError> {
    a.try_add(b)
}

pub fn field_sub(a: Fe, b: Fe) -> Result<Fe, FieldError> {
    a.try_sub(b)
}

pub fn field_mul(a: Fe, b: Fe) -> Result<Fe, FieldError> {
    a.try_mul(b)
}

pub fn field_inv(a: Fe) -> Result<Fe, FieldError> {
    a.inv()
}

/// A vector over a single prime field.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct FieldVector {
    q: PrimeModulus,
    values: Vec<u64>,
}

impl FieldVector {
    pub fn zeros(q: PrimeModulus, len: usize) -> Self {
        FieldVector { q, values: alloc::vec![0; len] }
    }

    /// Builds a vector, reducing every entry mod `q`.
    pub fn from_u64s<I: IntoIterator<Item = u64>>(q: PrimeModulus, values: I) -> Self {
        FieldVector { q, values: values.into_iter().map(|v| v % q.0).collect() }
    }

    /// Builds a vector from already-canonical residues, rejecting any `>= q`.
    pub fn from_canonical(q: PrimeModulus, values: Vec<u64>) -> Option<Self> {
        if values.iter().all(|&v| v < q.0) {
            Some(FieldVector { q, values })
        } else {
            None
        }
    }

    pub fn from_elems(q: PrimeModulus, elems: &[Fe]) -> Result<Self, FieldError> {
        let mut values = Vec::with_capacity(elems.len());
        for e in elems {
            if e.q != q {
                return Err(FieldError::ModulusMismatch(q.0, e.q.0));
            }
            values.push(e.value);
        }
        Ok(FieldVector { q, values })
    }

    #[inline]
    pub fn modulus(&self) -> PrimeModulus {
        self.q
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> Fe {
        Fe { value: self.values[i], q: self.q }
    }

    pub fn set(&mut self, i: usize, v: Fe) {
        assert_eq!(v.q, self.q, "field modulus mismatch");
        self.values[i] = v.value;
    }

    pub fn as_u64s(&self) -> &[u64] {
        &self.values
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = Fe> + '_ {
        let q = self.q;
        self.values.iter().map(move |&value| Fe { value, q })
    }

    fn check(&self, other: &FieldVector) -> Result<(), FieldError> {
        if self.q != other.q {
            return Err(FieldError::ModulusMismatch(self.q.0, other.q.0));
        }
        if self.len() != other.len() {
            return Err(FieldError::LengthMismatch { expected: self.len(), got: other.len() });
        }
        Ok(())
    }

    /// `self + scalar * other`, the query-masking shape `v + alpha * Z`.
    pub fn add_scaled(&self, scalar: Fe, other: &FieldVector) -> Result<FieldVector, FieldError> {
        self.check(other)?;
        scalar.check(self.q.zero())?;
        let values = self
            .iter()
            .zip(other.iter())
            .map(|(a, b)| (a + scalar * b).value)
            .collect();
        Ok(FieldVector { q: self.q, values })
    }

    pub fn sub(&self, other: &FieldVector) -> Result<FieldVector, FieldError> {
        self.check(other)?;
        let values = self.iter().zip(other.iter()).map(|(a, b)| (a - b).value).collect();
        Ok(FieldVector { q: self.q, values })
    }

    /// Element-wise (Hadamard) product.
    pub fn hadamard(&self, other: &FieldVector) -> Result<FieldVector, FieldError> {
        self.check(other)?;
        let values = self.iter().zip(other.iter()).map(|(a, b)| (a * b).value).collect();
        Ok(FieldVector { q: self.q, values })
    }

    pub fn scale(&self, scalar: Fe) -> FieldVector {
        let values = self.iter().map(|a| (a * scalar).value).collect();
        FieldVector { q: self.q, values }
    }

    pub fn dot(&self, other: &FieldVector) -> Result<Fe, FieldError> {
        self.check(other)?;
        Ok(self.iter().zip(other.iter()).fold(self.q.zero(), |acc, (a, b)| acc + a * b))
    }

    pub fn norm_sq(&self) -> Fe {
        self.iter().fold(self.q.zero(), |acc, a| acc + a * a)
    }
}

impl fmt::Debug for FieldVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.values.iter()).finish()
    }
}

/// Uniform residue in `[0, q)` by rejection on 64-bit draws.
pub fn sample_uniform<R: RngCore + ?Sized>(q: PrimeModulus, rng: &mut R) -> Fe {
    q.elem(uniform_below(q.0, rng))
}

/// Uniform over `[0, bound)`, `bound >= 1`.
pub(crate) fn uniform_below<R: RngCore + ?Sized>(bound: u64, rng: &mut R) -> u64 {
    // 2^64 mod bound draws at the top are rejected
    let excess = (u64::MAX % bound + 1) % bound;
    let max_ok = u64::MAX - excess;
    loop {
        let v = rng.next_u64();
        if v <= max_ok {
            return v % bound;
        }
    }
}

pub fn sample_uniform_vector<R: RngCore + ?Sized>(len: usize, q: PrimeModulus, rng: &mut R) -> FieldVector {
    FieldVector { q, values: (0..len).map(|_| uniform_below(q.0, rng)).collect() }
}

/// Uniform over `[1, q - 1]`.
pub fn sample_nonzero<R: RngCore + ?Sized>(q: PrimeModulus, rng: &mut R) -> Fe {
    q.elem(1 + uniform_below(q.0 - 1, rng))
}

/// The system `V c = a` with `V[j][k] = alpha_j^k`. The inverse is
/// precomputed once so each of the `M` per-row solves is a matrix-vector
/// product.
#[derive(Clone, Debug)]
pub struct VandermondeSystem {
    alphas: Vec<Fe>,
    inverse: Vec<Vec<Fe>>,
}

impl VandermondeSystem {
    pub fn new(alphas: &[Fe]) -> Result<Self, FieldError> {
        let n = alphas.len();
        let q = match alphas.first() {
            Some(a) => a.q,
            None => return Err(FieldError::LengthMismatch { expected: 1, got: 0 }),
        };
        for (j, a) in alphas.iter().enumerate() {
            a.check(q.zero())?;
            if a.is_zero() {
                return Err(FieldError::ZeroAlpha);
            }
            if alphas[..j].contains(a) {
                return Err(FieldError::RepeatedAlpha);
            }
        }
        if n as u64 >= q.0 {
            // cannot have n distinct nonzero points
            return Err(FieldError::RepeatedAlpha);
        }

        // Gauss-Jordan on [V | I].
        let mut aug: Vec<Vec<Fe>> = alphas
            .iter()
            .enumerate()
            .map(|(j, &a)| {
                let mut row: Vec<Fe> = (0..n as u64).map(|k| a.pow(k)).collect();
                row.extend((0..n).map(|c| if c == j { q.one() } else { q.zero() }));
                row
            })
            .collect();
        for col in 0..n {
            let pivot = (col..n)
                .find(|&r| !aug[r][col].is_zero())
                .ok_or(FieldError::RepeatedAlpha)?;
            aug.swap(col, pivot);
            let inv = aug[col][col].inv()?;
            for v in aug[col].iter_mut() {
                *v = *v * inv;
            }
            let pivot_row = aug[col].clone();
            for (r, row) in aug.iter_mut().enumerate() {
                if r != col && !row[col].is_zero() {
                    let factor = row[col];
                    for (v, &p) in row.iter_mut().zip(&pivot_row) {
                        *v = *v - factor * p;
                    }
                }
            }
        }
        let inverse = aug.into_iter().map(|row| row[n..].to_vec()).collect();
        Ok(VandermondeSystem { alphas: alphas.to_vec(), inverse })
    }

    pub fn size(&self) -> usize {
        self.alphas.len()
    }

    pub fn alphas(&self) -> &[Fe] {
        &self.alphas
    }

    pub fn modulus(&self) -> PrimeModulus {
        self.alphas[0].q
    }

    /// Evaluates `sum_k coeffs[k] * alpha_j^k` at every point.
    pub fn evaluate(&self, coeffs: &[Fe]) -> Vec<Fe> {
        let q = self.modulus();
        self.alphas
            .iter()
            .map(|&a| coeffs.iter().rev().fold(q.zero(), |acc, &c| acc * a + c))
            .collect()
    }

    /// Recovers the coefficients `(c_0, ..., c_{n-1})` from the `n`
    /// evaluations. `c_0` is the payload; the rest is interference.
    pub fn solve(&self, answers: &[Fe]) -> Result<Vec<Fe>, FieldError> {
        let n = self.size();
        if answers.len() != n {
            return Err(FieldError::LengthMismatch { expected: n, got: answers.len() });
        }
        let q = self.modulus();
        for a in answers {
            a.check(q.zero())?;
        }
        Ok(self
            .inverse
            .iter()
            .map(|row| row.iter().zip(answers).fold(q.zero(), |acc, (&m, &a)| acc + m * a))
            .collect())
    }
}

/// Parameters that lower-bound the field size.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FieldBoundParams {
    pub r: u64,
    pub d: u64,
    /// Maximum number of immutable features (single-phase schemes).
    pub f: Option<u64>,
    /// Immutable-feature scaling factor (single-phase schemes).
    pub l: Option<u64>,
    /// Maximum actionability weight (actionable schemes).
    pub l1: Option<u64>,
}

/// The value every decoded payload stays strictly below for `scheme`.
pub fn field_bound(scheme: Scheme, p: &FieldBoundParams) -> Result<u64, FieldError> {
    let r2d = p.r.checked_mul(p.r).and_then(|v| v.checked_mul(p.d)).ok_or(FieldError::BoundOverflow)?;
    let single = |l1: u64| -> Result<u64, FieldError> {
        let f = p.f.ok_or(FieldError::MissingParameter("F"))?;
        let l = p.l.ok_or(FieldError::MissingParameter("L"))?;
        let head = f
            .checked_mul(l.saturating_sub(1))
            .and_then(|v| v.checked_mul(p.r * p.r))
            .ok_or(FieldError::BoundOverflow)?;
        let tail = l1.checked_mul(r2d).ok_or(FieldError::BoundOverflow)?;
        head.checked_add(tail).ok_or(FieldError::BoundOverflow)
    };
    match scheme {
        Scheme::TwoPhase => Ok(r2d),
        Scheme::SinglePhase => single(1),
        Scheme::TwoPhaseActionable => {
            let l1 = p.l1.ok_or(FieldError::MissingParameter("L1"))?;
            l1.checked_mul(r2d).ok_or(FieldError::BoundOverflow)
        }
        Scheme::SinglePhaseActionable => single(p.l1.ok_or(FieldError::MissingParameter("L1"))?),
    }
}

/// Smallest prime strictly above the scheme's field bound.
pub fn choose_field(scheme: Scheme, p: &FieldBoundParams) -> Result<PrimeModulus, FieldError> {
    let q = next_prime_above(field_bound(scheme, p)?)?;
    PrimeModulus::new(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn f(q: u64) -> PrimeModulus {
        PrimeModulus::new(q).unwrap()
    }

    // Independent primality check for cross-validation.
    fn trial_division(n: u64) -> bool {
        n >= 2 && (2..).take_while(|k| k * k <= n).all(|k| !n.is_multiple_of(k))
    }

    #[test]
    fn miller_rabin_matches_trial_division() {
        for n in 0..20_000u64 {
            assert_eq!(is_prime(n), trial_division(n), "n={n}");
        }
        assert!(is_prime(2_147_483_647));
        assert!(is_prime(18_446_744_073_709_551_557));
        // strong pseudoprime to bases 2..=37 products would fool fewer witnesses
        assert!(!is_prime(3_215_031_751));
        assert!(!is_prime(3_825_123_056_546_413_051));
    }

    #[test]
    fn rejects_composite_modulus() {
        assert_eq!(PrimeModulus::new(27), Err(FieldError::NotPrime(27)));
        assert_eq!(PrimeModulus::new(1), Err(FieldError::NotPrime(1)));
        assert!(PrimeModulus::new(18_446_744_073_709_551_557).is_err());
    }

    #[test]
    fn small_field_examples() {
        let q = f(29);
        // extended Euclid: 6 * 5 = 30 = 1 + 29
        assert_eq!(field_mul(q.elem(6), q.elem(5)).unwrap(), q.one());
        assert_eq!(field_inv(q.elem(6)).unwrap(), q.elem(5));
        assert_eq!(field_sub(q.zero(), q.one()).unwrap().value(), 28);
        for a in 0..29 {
            assert_eq!(field_add(q.elem(a), q.zero()).unwrap(), q.elem(a));
        }
        assert_eq!(q.elem_i64(-3).value(), 26);
    }

    #[test]
    fn inverse_errors() {
        let q = f(29);
        assert_eq!(field_inv(q.zero()), Err(FieldError::ZeroInverse));
        assert_eq!(
            field_add(q.one(), f(31).one()),
            Err(FieldError::ModulusMismatch(29, 31))
        );
        for a in 1..29 {
            assert_eq!(q.elem(a) * q.elem(a).inv().unwrap(), q.one());
        }
    }

    #[test]
    fn sampling_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_uniform_vector(0, f(29), &mut rng).is_empty());
        for _ in 0..100 {
            assert_eq!(sample_nonzero(f(2), &mut rng).value(), 1);
        }
        let a = sample_uniform_vector(16, f(757), &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_uniform_vector(16, f(757), &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    fn chi_square(counts: &[u64]) -> f64 {
        let n: u64 = counts.iter().sum();
        let e = n as f64 / counts.len() as f64;
        counts.iter().map(|&c| (c as f64 - e) * (c as f64 - e) / e).sum()
    }

    #[test]
    fn uniform_sampling_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut counts = [0u64; 5];
        for _ in 0..100_000 {
            counts[sample_uniform(f(5), &mut rng).value() as usize] += 1;
        }
        // each cell within 3 sigma of n/5
        let n = 100_000f64;
        let sigma = (n * 0.2 * 0.8).sqrt();
        for &c in &counts {
            assert!((c as f64 - n / 5.0).abs() < 3.0 * sigma, "{counts:?}");
        }
        // df = 4, 99.9% quantile 18.47
        assert!(chi_square(&counts) < 18.47);
    }

    #[test]
    fn nonzero_sampling_is_uniform_on_units() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = [0u64; 29];
        for _ in 0..100_000 {
            counts[sample_nonzero(f(29), &mut rng).value() as usize] += 1;
        }
        assert_eq!(counts[0], 0);
        // df = 27, 99.9% quantile 55.48
        assert!(chi_square(&counts[1..]) < 55.48, "{counts:?}");
    }

    #[test]
    fn vandermonde_examples() {
        let q = f(29);
        let alphas = [q.elem(1), q.elem(2), q.elem(3)];
        let sys = VandermondeSystem::new(&alphas).unwrap();
        let five = q.elem(5);
        assert_eq!(sys.solve(&[five, five, five]).unwrap(), [five, q.zero(), q.zero()]);
        // 1 + 2a + 3a^2 at a = 1, 2, 3 -> 6, 17, 34 = 5 (mod 29)
        let evals = sys.evaluate(&[q.elem(1), q.elem(2), q.elem(3)]);
        assert_eq!(evals, [q.elem(6), q.elem(17), q.elem(5)]);
        assert_eq!(sys.solve(&evals).unwrap(), [q.elem(1), q.elem(2), q.elem(3)]);
        assert_eq!(sys.solve(&[q.zero(); 3]).unwrap(), [q.zero(); 3]);
        assert!(matches!(sys.solve(&[q.zero(); 2]), Err(FieldError::LengthMismatch { .. })));
    }

    #[test]
    fn vandermonde_rejects_bad_points() {
        let q = f(29);
        assert_eq!(
            VandermondeSystem::new(&[q.elem(1), q.elem(2), q.elem(1)]).unwrap_err(),
            FieldError::RepeatedAlpha
        );
        assert_eq!(
            VandermondeSystem::new(&[q.zero(), q.elem(2), q.elem(3)]).unwrap_err(),
            FieldError::ZeroAlpha
        );
        // three distinct nonzero points do not exist in F_2
        assert!(VandermondeSystem::new(&[f(2).one(), f(2).one(), f(2).one()]).is_err());
    }

    #[test]
    fn choose_field_examples() {
        let two = FieldBoundParams { r: 3, d: 3, ..Default::default() };
        assert_eq!(choose_field(Scheme::TwoPhase, &two).unwrap().get(), 29);
        let single = FieldBoundParams { r: 3, d: 3, f: Some(3), l: Some(28), l1: None };
        assert_eq!(choose_field(Scheme::SinglePhase, &single).unwrap().get(), 757);
        let act = FieldBoundParams { r: 1, d: 1, l1: Some(1), ..Default::default() };
        assert_eq!(choose_field(Scheme::TwoPhaseActionable, &act).unwrap().get(), 2);
        assert_eq!(
            choose_field(Scheme::SinglePhase, &two),
            Err(FieldError::MissingParameter("F"))
        );
        assert_eq!(
            choose_field(Scheme::TwoPhaseActionable, &two),
            Err(FieldError::MissingParameter("L1"))
        );
        let act1 = FieldBoundParams { r: 3, d: 3, f: Some(3), l: Some(28), l1: Some(1) };
        assert_eq!(choose_field(Scheme::SinglePhaseActionable, &act1).unwrap().get(), 757);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn modulus() -> impl Strategy<Value = PrimeModulus> {
            prop_oneof![Just(f(2)), Just(f(29)), Just(f(757))]
        }

        proptest! {
            #[test]
            fn field_axioms(q in modulus(), a: u64, b: u64, c: u64) {
                let (a, b, c) = (q.elem(a), q.elem(b), q.elem(c));
                prop_assert_eq!((a + b) + c, a + (b + c));
                prop_assert_eq!((a * b) * c, a * (b * c));
                prop_assert_eq!(a * (b + c), a * b + a * c);
                prop_assert_eq!(a + b, b + a);
                prop_assert_eq!(a - b + b, a);
                prop_assert_eq!(a + (-a), q.zero());
                if !a.is_zero() {
                    prop_assert_eq!(a * a.inv().unwrap(), q.one());
                }
            }

            #[test]
            fn solve_inverts_evaluate(seed: u64, n in 3usize..=4, q in prop_oneof![Just(29u64), Just(757), Just(2_147_483_647)]) {
                let q = f(q);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let alphas: Vec<Fe> = (1..=n as u64).map(|a| q.elem(a)).collect();
                let sys = VandermondeSystem::new(&alphas).unwrap();
                let coeffs: Vec<Fe> = (0..n).map(|_| sample_uniform(q, &mut rng)).collect();
                prop_assert_eq!(sys.solve(&sys.evaluate(&coeffs)).unwrap(), coeffs);
            }

            #[test]
            fn choose_field_is_prime_above_bound(r in 1u64..6, d in 1u64..8, fcap in 0u64..8, l in 1u64..400, l1 in 1u64..6) {
                for scheme in Scheme::ALL {
                    let p = FieldBoundParams { r, d, f: Some(fcap), l: Some(l), l1: Some(l1) };
                    let q = choose_field(scheme, &p).unwrap().get();
                    let bound = field_bound(scheme, &p).unwrap();
                    prop_assert!(is_prime(q) && q > bound);
                    prop_assert!((bound + 1..q).all(|k| !is_prime(k)));
                    // shrinking any parameter never grows q
                    let smaller = [
                        FieldBoundParams { r: r - 1, ..p },
                        FieldBoundParams { d: d - 1, ..p },
                        FieldBoundParams { f: Some(fcap.saturating_sub(1)), ..p },
                        FieldBoundParams { l: Some(l - 1), ..p },
                        FieldBoundParams { l1: Some(l1 - 1), ..p },
                    ];
                    for s in smaller {
                        prop_assert!(choose_field(scheme, &s).unwrap().get() <= q);
                    }
                }
            }
        }
    }
}
