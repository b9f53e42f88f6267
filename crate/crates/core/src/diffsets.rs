//! Planar difference sets in Z/δZ, δ = q² + q + 1.
//!
//! A planar difference set of order q is a (q+1)-subset D ⊂ Z/δZ such that
//! every nonzero residue is d − d′ for exactly one ordered pair d ≠ d′ in D.
//! The translates D + k are then the lines of a projective plane of order q on
//! the point set Z/δZ. This module provides validation, the classical Singer
//! construction from the trace form on GF(q³), canonicalization under the
//! affine group AGL₁(Z/δZ), stabilizers, and non-cyclic Singer point groups.

use crate::arith::{self, gcd, make_field, prime_power, ArithError};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DiffSetError {
    #[error(transparent)]
    Arith(#[from] ArithError),
    #[error("n = {0} does not divide gcd(3η, δ) = {1}")]
    BadDivisor(u64, u64),
    #[error("candidate is not a planar difference set")]
    NotDifferenceSet,
}

/// A planar difference set: sorted element list together with its modulus.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct DiffSet {
    delta: u64,
    elems: Vec<u64>,
}

impl DiffSet {
    /// Wraps a validated element list. Elements are reduced and sorted.
    pub fn new(elems: &[i64], delta: u64) -> Result<Self, DiffSetError> {
        let mut reduced: Vec<u64> = elems
            .iter()
            .map(|&e| e.rem_euclid(delta as i64) as u64)
            .collect();
        reduced.sort_unstable();
        reduced.dedup();
        if !is_difference_set_raw(&reduced, delta) {
            return Err(DiffSetError::NotDifferenceSet);
        }
        Ok(DiffSet {
            delta,
            elems: reduced,
        })
    }

    pub fn delta(&self) -> u64 {
        self.delta
    }

    /// Order q of the plane: |D| = q + 1.
    pub fn order(&self) -> u64 {
        self.elems.len() as u64 - 1
    }

    pub fn elems(&self) -> &[u64] {
        &self.elems
    }

    pub fn contains(&self, r: i64) -> bool {
        let v = r.rem_euclid(self.delta as i64) as u64;
        self.elems.binary_search(&v).is_ok()
    }

    /// Image m·D + a, re-sorted.
    pub fn apply(&self, map: AffineMap) -> DiffSet {
        let mut elems: Vec<u64> = self
            .elems
            .iter()
            .map(|&d| (map.m * d + map.a) % self.delta)
            .collect();
        elems.sort_unstable();
        DiffSet {
            delta: self.delta,
            elems,
        }
    }
}

/// The affine map i ↦ m·i + a on Z/δZ, with m a unit.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct AffineMap {
    pub m: u64,
    pub a: u64,
    pub modulus: u64,
}

impl AffineMap {
    pub fn new(m: u64, a: u64, modulus: u64) -> Self {
        assert!(gcd(m % modulus, modulus) == 1, "m must be a unit");
        AffineMap {
            m: m % modulus,
            a: a % modulus,
            modulus,
        }
    }

    pub fn identity(modulus: u64) -> Self {
        AffineMap {
            m: 1,
            a: 0,
            modulus,
        }
    }

    pub fn apply(self, i: u64) -> u64 {
        (self.m * (i % self.modulus) + self.a) % self.modulus
    }

    /// self ∘ other: first `other`, then `self`.
    pub fn compose(self, other: AffineMap) -> AffineMap {
        debug_assert_eq!(self.modulus, other.modulus);
        AffineMap {
            m: (self.m * other.m) % self.modulus,
            a: (self.m * other.a + self.a) % self.modulus,
            modulus: self.modulus,
        }
    }

    pub fn inverse(self) -> AffineMap {
        let n = self.modulus as i64;
        let (g, x, _) = arith::ext_gcd(self.m as i64, n);
        debug_assert_eq!(g, 1);
        let m_inv = x.rem_euclid(n) as u64;
        AffineMap {
            m: m_inv,
            a: (m_inv * (self.modulus - self.a)) % self.modulus,
            modulus: self.modulus,
        }
    }
}

/// All units of Z/δZ.
pub fn units(delta: u64) -> Vec<u64> {
    (1..delta).filter(|&m| gcd(m, delta) == 1).collect()
}

fn is_difference_set_raw(sorted: &[u64], delta: u64) -> bool {
    // |D| = q+1 with δ = q²+q+1 forces (2|D|−1)² = 4δ−3.
    let k = sorted.len() as u64;
    if k < 2 || k * k - k + 1 != delta {
        return false;
    }
    let mut seen = vec![false; delta as usize];
    for &d in sorted {
        for &d2 in sorted {
            if d == d2 {
                continue;
            }
            let diff = ((d + delta - d2) % delta) as usize;
            if seen[diff] {
                return false;
            }
            seen[diff] = true;
        }
    }
    seen[1..].iter().all(|&s| s)
}

/// True iff the candidate multiset is a planar difference set of order q.
pub fn is_difference_set(candidate: &[i64], q: u64) -> bool {
    let delta = q * q + q + 1;
    let mut reduced: Vec<u64> = candidate
        .iter()
        .map(|&e| e.rem_euclid(delta as i64) as u64)
        .collect();
    reduced.sort_unstable();
    reduced.dedup();
    reduced.len() as u64 == q + 1 && is_difference_set_raw(&reduced, delta)
}

/// The classical Singer difference set of order q: exponents k with
/// Tr_{GF(q³)/GF(q)}(ξ^k) = 0, where ξ is the coset of the fixed generator of
/// GF(q³)^× modulo GF(q)^×.
pub fn classical_diffset(q: u64) -> Result<DiffSet, DiffSetError> {
    let (p, eta) = prime_power(q)?;
    let delta = q * q + q + 1;
    let field = make_field(p, 3 * eta)?;
    let mut elems = Vec::with_capacity(q as usize + 1);
    for k in 0..delta {
        let x = field.gen_pow(k as i64);
        if field.trace(&x, eta)?.is_zero() {
            elems.push(k);
        }
    }
    debug_assert_eq!(elems.len() as u64, q + 1);
    debug_assert!(is_difference_set_raw(&elems, delta));
    Ok(DiffSet { delta, elems })
}

/// Lexicographically smallest sorted element list over the AGL₁(Z/δZ)-orbit.
pub fn agl_orbit_canonical(d: &DiffSet) -> DiffSet {
    let delta = d.delta;
    let mut best: Option<Vec<u64>> = None;
    for m in units(delta) {
        // For fixed m, the best translate puts elements starting as low as
        // possible; we simply try all δ shifts (δ ≤ 133 in practice).
        let scaled: Vec<u64> = d.elems.iter().map(|&x| (m * x) % delta).collect();
        for a in 0..delta {
            let mut img: Vec<u64> = scaled.iter().map(|&x| (x + a) % delta).collect();
            img.sort_unstable();
            if best.as_ref().map_or(true, |b| img < *b) {
                best = Some(img);
            }
        }
    }
    DiffSet {
        delta,
        elems: best.unwrap(),
    }
}

/// Exhaustively computed stabilizer {(m,a) : m·D + a = D} ⊂ AGL₁(Z/δZ).
pub fn agl_stabilizer(d: &DiffSet) -> Vec<AffineMap> {
    let delta = d.delta;
    let mut out = Vec::new();
    for m in units(delta) {
        for a in 0..delta {
            let map = AffineMap::new(m, a, delta);
            if d.apply(map) == *d {
                out.push(map);
            }
        }
    }
    out
}

/// A Singer group presented as explicit point (and line) permutations of the
/// plane Π(GF(q³)): δ points indexed by exponents of ξ.
#[derive(Debug, Clone)]
pub struct SingerGroupNC {
    pub q: u64,
    pub n: u64,
    /// Every group element as a permutation of the δ point indices.
    pub elements: Vec<Vec<u64>>,
    /// Generator g = (1, ξⁿ) as a point permutation.
    pub gen_g: Vec<u64>,
    /// Generator h = (φ, ξ) as a point permutation.
    pub gen_h: Vec<u64>,
}

fn compose_perm(f: &[u64], g: &[u64]) -> Vec<u64> {
    // (f ∘ g)(x) = f(g(x))
    g.iter().map(|&x| f[x as usize]).collect()
}

/// Builds the Singer group ⟨g, h⟩ with g = (1, ξⁿ) and h = (φ, ξ) in the
/// semidirect product Gal(GF(q³)/GF(q₀)) ⋉ GF(q³)^×/GF(q)^×, acting on the δ
/// points of the plane. Requires n | gcd(3η, δ); n = 1 recovers the cyclic
/// Singer group. Verifies the defining relations and regularity of both the
/// point and the line action.
pub fn singer_group_nc(q: u64, n: u64) -> Result<SingerGroupNC, DiffSetError> {
    let (p, eta) = prime_power(q)?;
    let delta = q * q + q + 1;
    let g3 = gcd(3 * eta as u64, delta);
    if n == 0 || g3 % n != 0 {
        return Err(DiffSetError::BadDivisor(n, g3));
    }
    let eta0 = 3 * eta as u64 / n;
    let q0 = p.pow(eta0 as u32) % delta;

    // Point index k stands for the coset ξ^k. Multiplying by ξⁿ adds n to the
    // exponent; the Frobenius x ↦ x^{q₀} multiplies it by q₀.
    let gen_g: Vec<u64> = (0..delta).map(|k| (k + n) % delta).collect();
    let gen_h: Vec<u64> = (0..delta).map(|k| (q0 * k + 1) % delta).collect();

    // Close under composition (the group is tiny: |S| = δ).
    let identity: Vec<u64> = (0..delta).collect();
    let mut elements = vec![identity];
    let mut frontier = vec![0usize];
    while let Some(i) = frontier.pop() {
        for gen in [&gen_g, &gen_h] {
            let next = compose_perm(gen, &elements[i]);
            if !elements.contains(&next) {
                elements.push(next);
                frontier.push(elements.len() - 1);
            }
        }
    }

    // Defining relations: g^a = 1 with a = δ/n, g^h = g^{q₀}, hⁿ = g^b.
    let pow = |perm: &[u64], mut e: u64| -> Vec<u64> {
        let mut acc: Vec<u64> = (0..delta).collect();
        let mut base = perm.to_vec();
        while e > 0 {
            if e & 1 == 1 {
                acc = compose_perm(&base, &acc);
            }
            base = compose_perm(&base.clone(), &base);
            e >>= 1;
        }
        acc
    };
    let a = delta / n;
    let id: Vec<u64> = (0..delta).collect();
    debug_assert_eq!(pow(&gen_g, a), id);
    let h_inv: Vec<u64> = {
        let mut inv = vec![0u64; delta as usize];
        for (x, &y) in gen_h.iter().enumerate() {
            inv[y as usize] = x as u64;
        }
        inv
    };
    let conj = compose_perm(&gen_h, &compose_perm(&gen_g, &h_inv));
    debug_assert_eq!(conj, pow(&gen_g, q0 % delta));
    // hⁿ = g^b with b = (q₀^{n−1} + … + q₀ + 1)/n.
    let mut geom = 0u64;
    let mut t = 1u64;
    for _ in 0..n {
        geom = (geom + t) % (delta * n);
        t = (t * q0) % (delta * n);
    }
    debug_assert_eq!(geom % n, 0);
    debug_assert_eq!(pow(&gen_h, n), pow(&gen_g, geom / n));

    let group = SingerGroupNC {
        q,
        n,
        elements,
        gen_g,
        gen_h,
    };
    debug_assert!(group.is_point_regular());
    debug_assert!(group.is_line_regular());
    Ok(group)
}

impl SingerGroupNC {
    pub fn order(&self) -> u64 {
        self.elements.len() as u64
    }

    /// Transitive and free on the δ points.
    pub fn is_point_regular(&self) -> bool {
        let delta = self.gen_g.len();
        if self.elements.len() != delta {
            return false;
        }
        let mut images = std::collections::HashSet::new();
        for e in &self.elements {
            if !images.insert(e[0]) {
                return false; // two elements agree at a point: not free
            }
        }
        images.len() == delta
    }

    /// Transitive and free on the lines (translates of the classical set).
    pub fn is_line_regular(&self) -> bool {
        let delta = self.gen_g.len() as u64;
        let d = match classical_diffset(self.q) {
            Ok(d) => d,
            Err(_) => return false,
        };
        // Line c is the point set D − c; store each line sorted for lookup.
        let line: Vec<Vec<u64>> = (0..delta)
            .map(|c| {
                let mut l: Vec<u64> = d
                    .elems()
                    .iter()
                    .map(|&x| (x + delta - c) % delta)
                    .collect();
                l.sort_unstable();
                l
            })
            .collect();
        let line_index: std::collections::HashMap<Vec<u64>, usize> = line
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        let mut images = std::collections::HashSet::new();
        for e in &self.elements {
            let mut img: Vec<u64> = line[0].iter().map(|&x| e[x as usize]).collect();
            img.sort_unstable();
            match line_index.get(&img) {
                Some(&i) => {
                    if !images.insert(i) {
                        return false;
                    }
                }
                None => return false, // element does not preserve the line set
            }
        }
        images.len() as u64 == delta
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fano_difference_set_recognized() {
        assert!(is_difference_set(&[0, 1, 3], 2));
        assert!(!is_difference_set(&[0, 1, 2], 2));
        assert!(is_difference_set(&[0, 1, 3, 9], 3));
        assert!(!is_difference_set(&[0, 1, 3], 3));
    }

    #[test]
    fn classical_sets_are_difference_sets() {
        for q in [2u64, 3, 4, 5, 7, 8] {
            let d = classical_diffset(q).unwrap();
            assert_eq!(d.elems().len() as u64, q + 1);
            let signed: Vec<i64> = d.elems().iter().map(|&x| x as i64).collect();
            assert!(is_difference_set(&signed, q));
        }
    }

    #[test]
    fn classical_sets_match_known_orbits() {
        // Classical constructions land in the same AGL₁ orbit as the textbook
        // representatives.
        let known: [(u64, &[i64]); 4] = [
            (2, &[0, 1, 3]),
            (3, &[0, 1, 3, 9]),
            (4, &[0, 1, 4, 14, 16]),
            (5, &[0, 1, 3, 8, 12, 18]),
        ];
        for (q, rep) in known {
            let delta = q * q + q + 1;
            let d = classical_diffset(q).unwrap();
            let r = DiffSet::new(rep, delta).unwrap();
            assert_eq!(agl_orbit_canonical(&d), agl_orbit_canonical(&r), "q={q}");
        }
    }

    #[test]
    fn canonical_is_orbit_constant_and_idempotent() {
        let d = DiffSet::new(&[0, 1, 3], 7).unwrap();
        let c = agl_orbit_canonical(&d);
        assert_eq!(c.elems(), &[0, 1, 3]);
        // Translate {1,2,4} canonicalizes identically.
        let t = DiffSet::new(&[1, 2, 4], 7).unwrap();
        assert_eq!(agl_orbit_canonical(&t), c);
        assert_eq!(agl_orbit_canonical(&c), c);
        // Full orbit check: all 42 affine images agree.
        for m in units(7) {
            for a in 0..7 {
                let img = d.apply(AffineMap::new(m, a, 7));
                assert_eq!(agl_orbit_canonical(&img), c);
            }
        }
    }

    #[test]
    fn stabilizer_orders_are_three_eta() {
        for (q, expected) in [(2u64, 3usize), (3, 3), (4, 6), (5, 3), (7, 3), (8, 9), (9, 6)] {
            let d = classical_diffset(q).unwrap();
            let stab = agl_stabilizer(&d);
            assert_eq!(stab.len(), expected, "q={q}");
            assert!(stab.contains(&AffineMap::identity(d.delta())));
        }
    }

    #[test]
    fn fano_stabilizer_is_generated_by_doubling() {
        let d = DiffSet::new(&[0, 1, 3], 7).unwrap();
        let stab = agl_stabilizer(&d);
        assert_eq!(stab.len(), 3);
        let gen = AffineMap::new(2, 1, 7);
        assert!(stab.contains(&gen));
        assert!(stab.contains(&gen.compose(gen)));
    }

    #[test]
    fn shifted_set_never_equals_itself() {
        // For every difference set D and a ∈ D, the translate D − a differs
        // from D (otherwise the plane would have a degenerate flag orbit).
        for q in [2u64, 3, 4, 5] {
            let d = classical_diffset(q).unwrap();
            for &a in d.elems() {
                if a == 0 {
                    continue; // D − 0 = D trivially
                }
                let shifted = d.apply(AffineMap::new(1, d.delta() - a, d.delta()));
                assert_ne!(shifted, d, "q={q}, a={a}");
            }
        }
    }

    #[test]
    fn cyclic_singer_groups() {
        let s = singer_group_nc(2, 1).unwrap();
        assert_eq!(s.order(), 7);
        assert!(s.is_point_regular());
        assert!(s.is_line_regular());
        let s = singer_group_nc(3, 1).unwrap();
        assert_eq!(s.order(), 13);
    }

    #[test]
    fn noncyclic_singer_group_order_21() {
        let s = singer_group_nc(4, 3).unwrap();
        assert_eq!(s.order(), 21);
        assert!(s.is_point_regular());
        assert!(s.is_line_regular());
        // Non-abelian: g and h do not commute.
        let gh = compose_perm(&s.gen_g, &s.gen_h);
        let hg = compose_perm(&s.gen_h, &s.gen_g);
        assert_ne!(gh, hg);
    }

    #[test]
    fn bad_divisor_rejected() {
        assert!(singer_group_nc(2, 2).is_err());
        assert!(singer_group_nc(4, 2).is_err());
    }
}
