//! Exact arithmetic in Z/nZ and in finite fields GF(p^e).
//!
//! Fields are represented in a polynomial basis modulo a deterministic defining
//! polynomial: the lexicographically smallest monic irreducible of the right
//! degree (coefficients compared low-degree-first). The fixed multiplicative
//! generator is likewise the lexicographically smallest one, so every field
//! object is reproducible across runs. Discrete logarithms are served from a
//! full lookup table; all groups in play have order ≤ 2²⁰.

use std::fmt;
use std::sync::Arc;
use thiserror::Error;

/// Errors raised by arithmetic constructors.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ArithError {
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("extension degree must be ≥ 1")]
    BadDegree,
    #[error("subfield degree {0} does not divide extension degree {1}")]
    BadSubfield(usize, usize),
    #[error("discrete log of zero is undefined")]
    LogOfZero,
    #[error("element is not a power of the given base")]
    NotAPower,
    #[error("{0} is not a prime power")]
    NotPrimePower(u64),
}

/// An element of Z/nZ, always stored reduced.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Residue {
    value: u64,
    modulus: u64,
}

impl Residue {
    /// Reduces `value` into [0, n) for modulus `n > 0`.
    pub fn new(value: i64, modulus: u64) -> Self {
        assert!(modulus > 0, "modulus must be positive");
        let m = modulus as i64;
        Residue {
            value: value.rem_euclid(m) as u64,
            modulus,
        }
    }

    pub fn value(self) -> u64 {
        self.value
    }

    pub fn modulus(self) -> u64 {
        self.modulus
    }

    pub fn add(self, other: Residue) -> Residue {
        debug_assert_eq!(self.modulus, other.modulus);
        Residue::new((self.value + other.value) as i64, self.modulus)
    }

    pub fn sub(self, other: Residue) -> Residue {
        debug_assert_eq!(self.modulus, other.modulus);
        Residue::new(self.value as i64 - other.value as i64, self.modulus)
    }

    pub fn mul(self, other: Residue) -> Residue {
        debug_assert_eq!(self.modulus, other.modulus);
        Residue::new((self.value * other.value) as i64, self.modulus)
    }

    pub fn neg(self) -> Residue {
        Residue::new(-(self.value as i64), self.modulus)
    }

    /// True iff the value is invertible mod n.
    pub fn is_unit(self) -> bool {
        gcd(self.value, self.modulus) == 1
    }

    /// Multiplicative inverse; panics when not a unit.
    pub fn inv(self) -> Residue {
        let (g, x, _) = ext_gcd(self.value as i64, self.modulus as i64);
        assert_eq!(g, 1, "not a unit mod {}", self.modulus);
        Residue::new(x, self.modulus)
    }
}

impl fmt::Debug for Residue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (mod {})", self.value, self.modulus)
    }
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Extended gcd: returns (g, x, y) with a·x + b·y = g.
pub fn ext_gcd(a: i64, b: i64) -> (i64, i64, i64) {
    if b == 0 {
        (a, 1, 0)
    } else {
        let (g, x, y) = ext_gcd(b, a % b);
        (g, y, x - (a / b) * y)
    }
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// Factors a prime power q = p^η; errors when q is not a prime power.
pub fn prime_power(q: u64) -> Result<(u64, usize), ArithError> {
    if q < 2 {
        return Err(ArithError::NotPrimePower(q));
    }
    let mut p = 2;
    while p * p <= q {
        if q % p == 0 {
            let mut m = q;
            let mut eta = 0;
            while m % p == 0 {
                m /= p;
                eta += 1;
            }
            return if m == 1 {
                Ok((p, eta))
            } else {
                Err(ArithError::NotPrimePower(q))
            };
        }
        p += 1;
    }
    Ok((q, 1))
}

/// Immutable descriptor of GF(p^e): the defining polynomial, a fixed generator,
/// and (for fast arithmetic) full log/antilog tables.
pub struct FieldDesc {
    p: u64,
    e: usize,
    /// Monic irreducible of degree e; coefficient of x^i at index i, length e+1.
    poly: Vec<u64>,
    /// Powers of the fixed generator: `antilog[k]` = generator^k, k in [0, p^e−1).
    antilog: Vec<Vec<u64>>,
    /// `log[index(x)]` = discrete log of x base the generator; 0 slot unused.
    log: Vec<u64>,
}

/// Shared handle to a field descriptor.
pub type Field = Arc<FieldDesc>;

impl fmt::Debug for FieldDesc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GF({}^{}) mod {:?}", self.p, self.e, self.poly)
    }
}

/// An element of GF(p^e) in the polynomial basis: p-ary digit vector of length e.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FieldElem {
    coeffs: Vec<u64>,
}

impl fmt::Debug for FieldElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FieldElem{:?}", self.coeffs)
    }
}

impl FieldElem {
    pub fn coeffs(&self) -> &[u64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0)
    }
}

/// Dense index of a field element: digits read as a base-p number.
fn elem_index(p: u64, coeffs: &[u64]) -> usize {
    let mut idx = 0usize;
    for &c in coeffs.iter().rev() {
        idx = idx * p as usize + c as usize;
    }
    idx
}

/// Constructs GF(p^e) deterministically.
///
/// The defining polynomial is the lexicographically smallest monic irreducible
/// of degree e over F_p (low-degree coefficients compared first); the stored
/// generator is the lexicographically smallest element of multiplicative order
/// p^e − 1 in the same ordering.
pub fn make_field(p: u64, e: usize) -> Result<Field, ArithError> {
    if !is_prime(p) {
        return Err(ArithError::NotPrime(p));
    }
    if e == 0 {
        return Err(ArithError::BadDegree);
    }
    let poly = smallest_irreducible(p, e);
    let order = (p as usize).pow(e as u32);
    let group = (order - 1) as u64;

    // Find the lex-smallest generator by checking multiplicative orders.
    let mut generator = None;
    'cand: for idx in 1..order {
        let cand = coeffs_of_index(p, e, idx);
        // Compute the order of cand by repeated multiplication.
        let mut x = cand.clone();
        let mut k = 1u64;
        while !is_one(&x) {
            x = poly_mul_mod(p, &x, &cand, &poly);
            k += 1;
            if k > group {
                break;
            }
        }
        if k == group {
            generator = Some(cand);
            break 'cand;
        }
        let _ = &cand;
    }
    let generator = generator.expect("multiplicative group of a finite field is cyclic");

    // Build full antilog/log tables from the generator.
    let mut antilog = Vec::with_capacity(group as usize);
    let mut log = vec![u64::MAX; order];
    let mut x = {
        let mut one = vec![0; e];
        one[0] = 1;
        one
    };
    for k in 0..group {
        log[elem_index(p, &x)] = k;
        antilog.push(x.clone());
        x = poly_mul_mod(p, &x, &generator, &poly);
    }

    Ok(Arc::new(FieldDesc {
        p,
        e,
        poly,
        antilog,
        log,
    }))
}

fn is_one(coeffs: &[u64]) -> bool {
    coeffs[0] == 1 && coeffs[1..].iter().all(|&c| c == 0)
}

fn coeffs_of_index(p: u64, e: usize, mut idx: usize) -> Vec<u64> {
    let mut out = vec![0; e];
    for slot in out.iter_mut() {
        *slot = (idx % p as usize) as u64;
        idx /= p as usize;
    }
    out
}

/// Product of two coefficient vectors reduced mod the defining polynomial.
fn poly_mul_mod(p: u64, a: &[u64], b: &[u64], poly: &[u64]) -> Vec<u64> {
    let e = poly.len() - 1;
    let mut prod = vec![0u64; 2 * e - 1];
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate() {
            prod[i + j] = (prod[i + j] + ai * bj) % p;
        }
    }
    // Reduce top coefficients using x^e ≡ −(poly[0] + ... + poly[e−1]·x^{e−1}).
    for i in (e..prod.len()).rev() {
        let c = prod[i];
        if c == 0 {
            continue;
        }
        prod[i] = 0;
        for j in 0..e {
            let sub = (c * poly[j]) % p;
            prod[i - e + j] = (prod[i - e + j] + p - sub) % p;
        }
    }
    prod.truncate(e);
    prod
}

/// Lexicographically smallest monic irreducible of degree e over F_p,
/// coefficients compared low-degree-first.
fn smallest_irreducible(p: u64, e: usize) -> Vec<u64> {
    if e == 1 {
        return vec![0, 1]; // x itself: GF(p) needs no reduction beyond mod p.
    }
    let count = (p as usize).pow(e as u32);
    for idx in 0..count {
        let mut poly = coeffs_of_index(p, e, idx);
        poly.push(1); // monic
        if poly_is_irreducible(p, &poly) {
            return poly;
        }
    }
    unreachable!("irreducible polynomials of every degree exist over F_p");
}

/// Irreducibility over F_p by checking x^{p^k} ≢ x for k < e and x^{p^e} ≡ x,
/// combined with gcd(f, x^{p^k} − x) = 1 for proper divisors k of e.
fn poly_is_irreducible(p: u64, poly: &[u64]) -> bool {
    let e = poly.len() - 1;
    if poly[0] == 0 {
        return false; // divisible by x
    }
    // x^{p^k} mod poly via repeated Frobenius on the companion representation.
    let mut xp = vec![0u64; e];
    if e == 1 {
        return true;
    }
    xp[1] = 1; // start with x
    let mut powers = Vec::with_capacity(e);
    for _ in 0..e {
        xp = poly_pow_mod(p, &xp, p, poly);
        powers.push(xp.clone());
    }
    // x^{p^e} must equal x.
    let x_lin = {
        let mut v = vec![0u64; e];
        v[1] = 1;
        v
    };
    if powers[e - 1] != x_lin {
        return false;
    }
    // gcd condition for proper prime-index divisors: x^{p^{e/r}} − x coprime to poly.
    for r in 2..=e {
        if e % r == 0 && is_prime(r as u64) {
            let k = e / r;
            let mut diff = powers[k - 1].clone();
            diff[1] = (diff[1] + p - 1) % p;
            if !poly_coprime(p, &diff, poly) {
                return false;
            }
        }
    }
    true
}

fn poly_pow_mod(p: u64, base: &[u64], mut exp: u64, poly: &[u64]) -> Vec<u64> {
    let e = poly.len() - 1;
    let mut result = vec![0u64; e];
    result[0] = 1;
    let mut b = base.to_vec();
    while exp > 0 {
        if exp & 1 == 1 {
            result = poly_mul_mod(p, &result, &b, poly);
        }
        b = poly_mul_mod(p, &b, &b, poly);
        exp >>= 1;
    }
    result
}

/// True iff gcd(a, b) over F_p[x] is a nonzero constant.
fn poly_coprime(p: u64, a: &[u64], b: &[u64]) -> bool {
    let mut a: Vec<u64> = a.to_vec();
    let mut b: Vec<u64> = b.to_vec();
    loop {
        while a.last() == Some(&0) {
            a.pop();
        }
        while b.last() == Some(&0) {
            b.pop();
        }
        if b.is_empty() {
            return a.len() == 1 && a[0] != 0;
        }
        if a.len() < b.len() {
            std::mem::swap(&mut a, &mut b);
            continue;
        }
        // a ← a mod b
        let lead_inv = mod_inv(*b.last().unwrap(), p);
        while a.len() >= b.len() && !a.is_empty() {
            while a.last() == Some(&0) {
                a.pop();
            }
            if a.len() < b.len() {
                break;
            }
            let shift = a.len() - b.len();
            let factor = (*a.last().unwrap() * lead_inv) % p;
            for (i, &bi) in b.iter().enumerate() {
                let sub = (factor * bi) % p;
                a[shift + i] = (a[shift + i] + p - sub) % p;
            }
        }
        std::mem::swap(&mut a, &mut b);
    }
}

fn mod_inv(a: u64, p: u64) -> u64 {
    let (g, x, _) = ext_gcd(a as i64, p as i64);
    assert_eq!(g, 1);
    x.rem_euclid(p as i64) as u64
}

impl FieldDesc {
    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn e(&self) -> usize {
        self.e
    }

    /// Field size p^e.
    pub fn order(&self) -> u64 {
        (self.p).pow(self.e as u32)
    }

    /// Multiplicative group order p^e − 1.
    pub fn group_order(&self) -> u64 {
        self.order() - 1
    }

    pub fn poly(&self) -> &[u64] {
        &self.poly
    }

    pub fn zero(&self) -> FieldElem {
        FieldElem {
            coeffs: vec![0; self.e],
        }
    }

    pub fn one(&self) -> FieldElem {
        let mut coeffs = vec![0; self.e];
        coeffs[0] = 1;
        FieldElem { coeffs }
    }

    /// The fixed multiplicative generator (1 when the group is trivial).
    pub fn generator(&self) -> FieldElem {
        if self.group_order() == 1 {
            return self.one();
        }
        FieldElem {
            coeffs: self.antilog[1].clone(),
        }
    }

    /// Element from an explicit digit vector (length must be e, digits < p).
    pub fn elem(&self, coeffs: &[u64]) -> FieldElem {
        assert_eq!(coeffs.len(), self.e);
        assert!(coeffs.iter().all(|&c| c < self.p));
        FieldElem {
            coeffs: coeffs.to_vec(),
        }
    }

    /// Embeds an integer as a prime-field element (constant polynomial).
    pub fn from_int(&self, n: i64) -> FieldElem {
        let mut coeffs = vec![0; self.e];
        coeffs[0] = n.rem_euclid(self.p as i64) as u64;
        FieldElem { coeffs }
    }

    /// Iterates over all field elements in index order.
    pub fn elements(&self) -> impl Iterator<Item = FieldElem> + '_ {
        (0..self.order() as usize).map(move |i| FieldElem {
            coeffs: coeffs_of_index(self.p, self.e, i),
        })
    }

    pub fn add(&self, a: &FieldElem, b: &FieldElem) -> FieldElem {
        FieldElem {
            coeffs: a
                .coeffs
                .iter()
                .zip(&b.coeffs)
                .map(|(&x, &y)| (x + y) % self.p)
                .collect(),
        }
    }

    pub fn sub(&self, a: &FieldElem, b: &FieldElem) -> FieldElem {
        FieldElem {
            coeffs: a
                .coeffs
                .iter()
                .zip(&b.coeffs)
                .map(|(&x, &y)| (x + self.p - y) % self.p)
                .collect(),
        }
    }

    pub fn neg(&self, a: &FieldElem) -> FieldElem {
        FieldElem {
            coeffs: a.coeffs.iter().map(|&x| (self.p - x) % self.p).collect(),
        }
    }

    pub fn mul(&self, a: &FieldElem, b: &FieldElem) -> FieldElem {
        if a.is_zero() || b.is_zero() {
            return self.zero();
        }
        let la = self.log[elem_index(self.p, &a.coeffs)];
        let lb = self.log[elem_index(self.p, &b.coeffs)];
        let k = (la + lb) % self.group_order();
        FieldElem {
            coeffs: self.antilog[k as usize].clone(),
        }
    }

    pub fn inv(&self, a: &FieldElem) -> FieldElem {
        assert!(!a.is_zero(), "inverse of zero");
        let la = self.log[elem_index(self.p, &a.coeffs)];
        let k = (self.group_order() - la) % self.group_order();
        FieldElem {
            coeffs: self.antilog[k as usize].clone(),
        }
    }

    pub fn pow(&self, a: &FieldElem, k: i64) -> FieldElem {
        if a.is_zero() {
            assert!(k > 0, "0^k needs k > 0");
            return self.zero();
        }
        let la = self.log[elem_index(self.p, &a.coeffs)] as i64;
        let g = self.group_order() as i64;
        let e = (la * (k % g)).rem_euclid(g);
        FieldElem {
            coeffs: self.antilog[e as usize].clone(),
        }
    }

    /// generator^k.
    pub fn gen_pow(&self, k: i64) -> FieldElem {
        let g = self.group_order() as i64;
        FieldElem {
            coeffs: self.antilog[k.rem_euclid(g) as usize].clone(),
        }
    }

    /// Frobenius x ↦ x^p.
    pub fn frobenius(&self, a: &FieldElem) -> FieldElem {
        self.pow_unsigned(a, self.p)
    }

    fn pow_unsigned(&self, a: &FieldElem, k: u64) -> FieldElem {
        if a.is_zero() {
            return self.zero();
        }
        self.pow(a, (k % self.group_order()) as i64)
    }

    /// Relative trace down to the subfield GF(p^subfield_degree):
    /// x + x^{q₀} + x^{q₀²} + … where q₀ = p^subfield_degree.
    pub fn trace(&self, x: &FieldElem, subfield_degree: usize) -> Result<FieldElem, ArithError> {
        if subfield_degree == 0 || self.e % subfield_degree != 0 {
            return Err(ArithError::BadSubfield(subfield_degree, self.e));
        }
        let q0 = (self.p).pow(subfield_degree as u32);
        let steps = self.e / subfield_degree;
        let mut acc = x.clone();
        let mut term = x.clone();
        for _ in 1..steps {
            term = self.pow_unsigned(&term, q0);
            acc = self.add(&acc, &term);
        }
        Ok(acc)
    }

    /// Discrete log of `x` base `base` by table lookup: the smallest k ≥ 0 with
    /// base^k = x in the cyclic group generated by `base`.
    pub fn discrete_log(&self, x: &FieldElem, base: &FieldElem) -> Result<Residue, ArithError> {
        if x.is_zero() {
            return Err(ArithError::LogOfZero);
        }
        if base.is_zero() {
            return Err(ArithError::NotAPower);
        }
        let lx = self.log[elem_index(self.p, &x.coeffs)] as i64;
        let lb = self.log[elem_index(self.p, &base.coeffs)] as i64;
        let n = self.group_order() as i64;
        // Solve lb·k ≡ lx (mod n).
        let (g, inv, _) = ext_gcd(lb.rem_euclid(n).max(0), n);
        if lb.rem_euclid(n) == 0 {
            return if lx.rem_euclid(n) == 0 {
                Ok(Residue::new(0, 1))
            } else {
                Err(ArithError::NotAPower)
            };
        }
        if lx % g != 0 {
            return Err(ArithError::NotAPower);
        }
        let base_order = (n / g) as u64;
        let k = ((lx / g) % (n / g) * inv).rem_euclid(n / g);
        Ok(Residue::new(k, base_order))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn residue_ring_ops() {
        let a = Residue::new(5, 7);
        let b = Residue::new(4, 7);
        assert_eq!(a.add(b).value(), 2);
        assert_eq!(a.sub(b).value(), 1);
        assert_eq!(a.mul(b).value(), 6);
        assert_eq!(Residue::new(-3, 7).value(), 4);
        assert_eq!(a.inv().mul(a).value(), 1);
        assert!(!Residue::new(3, 9).is_unit());
    }

    #[test]
    fn prime_field_is_trivial_case() {
        let f = make_field(2, 1).unwrap();
        assert_eq!(f.order(), 2);
        assert_eq!(f.generator(), f.one());
    }

    #[test]
    fn rejects_composite_characteristic() {
        assert_eq!(make_field(4, 1).unwrap_err(), ArithError::NotPrime(4));
    }

    #[test]
    fn gf8_generator_has_order_seven() {
        let f = make_field(2, 3).unwrap();
        let g = f.generator();
        let mut seen = std::collections::HashSet::new();
        let mut x = f.one();
        for _ in 0..7 {
            assert!(seen.insert(x.clone()));
            x = f.mul(&x, &g);
        }
        assert_eq!(x, f.one());
        assert_eq!(seen.len(), 7);
    }

    #[test]
    fn gf27_generator_has_order_twentysix() {
        let f = make_field(3, 3).unwrap();
        let g = f.generator();
        let mut x = f.one();
        let mut order = 0;
        loop {
            x = f.mul(&x, &g);
            order += 1;
            if x == f.one() {
                break;
            }
        }
        assert_eq!(order, 26);
    }

    #[test]
    fn trace_of_one_counts_degree() {
        // GF(8)/GF(2): Tr(1) = 1+1+1 = 1.
        let f = make_field(2, 3).unwrap();
        assert_eq!(f.trace(&f.one(), 1).unwrap(), f.one());
        // Tr(0) = 0.
        assert_eq!(f.trace(&f.zero(), 1).unwrap(), f.zero());
    }

    #[test]
    fn trace_is_linear_and_lands_in_subfield() {
        let f = make_field(3, 3).unwrap();
        for a in f.elements() {
            let t = f.trace(&a, 1).unwrap();
            // Fixed by Frobenius ⇒ lies in F_3.
            assert_eq!(f.frobenius(&t), t);
            for b in f.elements() {
                let tab = f.trace(&f.add(&a, &b), 1).unwrap();
                assert_eq!(tab, f.add(&t, &f.trace(&b, 1).unwrap()));
            }
        }
    }

    #[test]
    fn discrete_log_matches_power_table() {
        let f = make_field(2, 3).unwrap();
        let g = f.generator();
        assert_eq!(f.discrete_log(&f.one(), &g).unwrap().value(), 0);
        assert_eq!(f.discrete_log(&g, &g).unwrap().value(), 1);
        let g5 = f.pow(&g, 5);
        assert_eq!(f.discrete_log(&g5, &g).unwrap().value(), 5);
        for k in 0..7 {
            let x = f.pow(&g, k);
            assert_eq!(f.discrete_log(&x, &g).unwrap().value(), k as u64);
        }
        assert!(f.discrete_log(&f.zero(), &g).is_err());
    }

    #[test]
    fn field_axioms_exhaustive_small() {
        for (p, e) in [(2u64, 3usize), (3, 2), (5, 2)] {
            let f = make_field(p, e).unwrap();
            let els: Vec<_> = f.elements().collect();
            for a in &els {
                // inverses
                if !a.is_zero() {
                    assert_eq!(f.mul(a, &f.inv(a)), f.one());
                }
                for b in &els {
                    assert_eq!(f.mul(a, b), f.mul(b, a));
                    for c in &els {
                        assert_eq!(f.mul(&f.mul(a, b), c), f.mul(a, &f.mul(b, c)));
                        assert_eq!(
                            f.mul(a, &f.add(b, c)),
                            f.add(&f.mul(a, b), &f.mul(a, c))
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn frobenius_fixes_exactly_prime_field() {
        let f = make_field(3, 3).unwrap();
        let fixed: Vec<_> = f.elements().filter(|x| f.frobenius(x) == *x).collect();
        assert_eq!(fixed.len(), 3);
        // Frobenius is additive and multiplicative.
        for a in f.elements() {
            for b in f.elements() {
                assert_eq!(
                    f.frobenius(&f.add(&a, &b)),
                    f.add(&f.frobenius(&a), &f.frobenius(&b))
                );
                assert_eq!(
                    f.frobenius(&f.mul(&a, &b)),
                    f.mul(&f.frobenius(&a), &f.frobenius(&b))
                );
            }
        }
    }

    #[test]
    fn prime_power_factoring() {
        assert_eq!(prime_power(8).unwrap(), (2, 3));
        assert_eq!(prime_power(9).unwrap(), (3, 2));
        assert_eq!(prime_power(7).unwrap(), (7, 1));
        assert!(prime_power(6).is_err());
        assert!(prime_power(1).is_err());
    }
}
