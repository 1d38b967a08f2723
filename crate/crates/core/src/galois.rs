//! Arithmetic in GF(2^e) and its quadratic extension GF(2^{2e}).
//!
//! Elements are bit-encoded polynomials over GF(2), stored as integers in
//! `0..2^e`. Addition is XOR; multiplication and inversion go through
//! precomputed log/antilog tables, so everything downstream is lookup-bound.

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// A field element: the bit encoding of a polynomial over GF(2).
pub type El = u16;

/// Fixed modulus polynomials for the degrees used by the pipeline.
/// Pinning them keeps serialized coordinates bit-exact across runs.
const FIXED_MODULI: [(u32, u32); 5] = [
    (1, 0b10),      // x
    (2, 0b111),     // x^2 + x + 1
    (3, 0b1011),    // x^3 + x + 1
    (4, 0b10011),   // x^4 + x + 1
    (6, 0b1011011), // x^6 + x^4 + x^3 + x + 1
];

pub const MAX_DEGREE: u32 = 8;

/// GF(2^e) with multiplication tables built at construction.
#[derive(Clone)]
pub struct Field {
    degree: u32,
    modulus: u32,
    order: usize,
    group_order: usize,
    exp: Vec<El>,
    log: Vec<usize>,
}

impl std::fmt::Debug for Field {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "GF(2^{}) mod {:#b}", self.degree, self.modulus)
    }
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        self.degree == other.degree && self.modulus == other.modulus
    }
}
impl Eq for Field {}

/// Serialized form: `{degree, modulus-bits}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldSpec {
    pub degree: u32,
    pub modulus: u32,
}

/// Multiply two GF(2)[x] polynomials and reduce by `modulus` (degree `e`).
fn mul_mod(a: u32, b: u32, modulus: u32, e: u32) -> u32 {
    let mut acc = 0u32;
    for i in 0..=e {
        if (b >> i) & 1 == 1 {
            acc ^= a << i;
        }
    }
    // reduce
    let mut deg = 31 - acc.leading_zeros().min(31);
    while acc != 0 && deg >= e {
        acc ^= modulus << (deg - e);
        if acc == 0 {
            break;
        }
        deg = 31 - acc.leading_zeros();
    }
    acc
}

fn poly_degree(p: u32) -> u32 {
    31 - p.leading_zeros()
}

/// Irreducibility over GF(2) by trial division.
pub fn is_irreducible(p: u32) -> bool {
    let d = poly_degree(p);
    if d == 0 {
        return false;
    }
    // divisor of degree 1..=d/2
    for q in 2u32..(1 << (d / 2 + 1)) {
        if poly_degree(q) > d / 2 {
            continue;
        }
        // long division p / q
        let mut r = p;
        let dq = poly_degree(q);
        while r != 0 && poly_degree(r) >= dq {
            r ^= q << (poly_degree(r) - dq);
        }
        if r == 0 {
            return false;
        }
    }
    true
}

/// The smallest (as an integer) irreducible polynomial of the given degree.
fn least_irreducible(e: u32) -> u32 {
    ((1u32 << e)..(1u32 << (e + 1)))
        .find(|&p| is_irreducible(p))
        .expect("an irreducible polynomial of every degree exists")
}

impl Field {
    /// Build GF(2^e) with the pinned modulus table (least irreducible for
    /// degrees without a pinned entry). Degrees outside `1..=8` are rejected.
    pub fn new(e: u32) -> Result<Field, Error> {
        if e == 0 || e > MAX_DEGREE {
            return Err(Error::FieldDegree(e));
        }
        let modulus = FIXED_MODULI
            .iter()
            .find(|(d, _)| *d == e)
            .map(|(_, m)| *m)
            .unwrap_or_else(|| least_irreducible(e));
        debug_assert!(is_irreducible(modulus));

        let order = 1usize << e;
        let group_order = order - 1;

        // least generator of the multiplicative group
        let mut generator = 0u32;
        'outer: for g in 1..order as u32 {
            let mut x = 1u32;
            for k in 1..=group_order {
                x = mul_mod(x, g, modulus, e);
                if x == 1 {
                    if k == group_order {
                        generator = g;
                        break 'outer;
                    }
                    continue 'outer;
                }
            }
        }
        assert!(generator != 0, "multiplicative group is cyclic");

        // exp doubled so products of logs never need an explicit reduction
        let mut exp = vec![0 as El; 2 * group_order.max(1)];
        let mut log = vec![usize::MAX; order];
        let mut x = 1u32;
        for (i, slot) in exp.iter_mut().take(group_order).enumerate() {
            *slot = x as El;
            log[x as usize] = i;
            x = mul_mod(x, generator, modulus, e);
        }
        for i in group_order..2 * group_order.max(1) {
            exp[i] = exp[i - group_order];
        }

        Ok(Field {
            degree: e,
            modulus,
            order,
            group_order,
            exp,
            log,
        })
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn modulus(&self) -> u32 {
        self.modulus
    }

    /// Number of elements, 2^e.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn spec(&self) -> FieldSpec {
        FieldSpec {
            degree: self.degree,
            modulus: self.modulus,
        }
    }

    pub fn elements(&self) -> impl Iterator<Item = El> {
        0..self.order as El
    }

    #[inline]
    pub fn add(&self, a: El, b: El) -> El {
        a ^ b
    }

    #[inline]
    pub fn mul(&self, a: El, b: El) -> El {
        if a == 0 || b == 0 {
            0
        } else {
            self.exp[self.log[a as usize] + self.log[b as usize]]
        }
    }

    /// Multiplicative inverse; zero has none.
    #[inline]
    pub fn inv(&self, a: El) -> El {
        assert!(a != 0, "zero has no inverse");
        self.exp[self.group_order - self.log[a as usize]]
    }

    pub fn div(&self, a: El, b: El) -> El {
        self.mul(a, self.inv(b))
    }

    pub fn pow(&self, a: El, k: usize) -> El {
        if a == 0 {
            return if k == 0 { 1 } else { 0 };
        }
        if self.group_order == 0 {
            return 1; // GF(2): the only nonzero element is 1
        }
        self.exp[(self.log[a as usize] * (k % self.group_order)) % self.group_order]
    }

    /// Order of the subfield GF(q) fixed by conjugation, for even degrees.
    pub fn subfield_order(&self) -> Result<usize, Error> {
        if self.degree % 2 != 0 {
            return Err(Error::OddDegree(self.degree));
        }
        Ok(1 << (self.degree / 2))
    }

    /// The involutory automorphism a -> a^q of GF(q^2), q = 2^{e/2}.
    pub fn conjugate(&self, a: El) -> Result<El, Error> {
        let q = self.subfield_order()?;
        Ok(self.pow(a, q))
    }

    /// The norm a -> a^{q+1} of GF(q^2) onto its GF(q)-subfield.
    pub fn norm(&self, a: El) -> Result<El, Error> {
        let q = self.subfield_order()?;
        Ok(self.pow(a, q + 1))
    }

    /// Whether `a` lies in the GF(q)-subfield, i.e. is fixed by conjugation.
    pub fn in_subfield(&self, a: El) -> Result<bool, Error> {
        Ok(self.conjugate(a)? == a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_moduli_are_irreducible() {
        for (_, m) in FIXED_MODULI {
            assert!(is_irreducible(m), "{m:#b}");
        }
        // the computed ones as well
        for e in [5u32, 7, 8] {
            let f = Field::new(e).unwrap();
            assert!(is_irreducible(f.modulus()));
            // minimality
            for p in (1u32 << e)..f.modulus() {
                assert!(!is_irreducible(p), "{p:#b} below modulus for e={e}");
            }
        }
    }

    #[test]
    fn rejects_out_of_range_degrees() {
        assert!(Field::new(0).is_err());
        assert!(Field::new(9).is_err());
    }

    #[test]
    fn gf4_basics() {
        let f = Field::new(2).unwrap();
        assert_eq!(f.order(), 4);
        // nonzero group has order 3
        for a in 1..4 {
            assert_eq!(f.pow(a, 3), 1);
        }
    }

    #[test]
    fn gf16_generator_order() {
        let f = Field::new(4).unwrap();
        assert_eq!(f.modulus(), 0b10011);
        // g = x (bit 2) has order 15 under the fixed modulus
        let g: El = 0b10;
        let mut x: El = 1;
        for k in 1..=15 {
            x = f.mul(x, g);
            if k < 15 {
                assert_ne!(x, 1, "x^{k} = 1 early");
            }
        }
        assert_eq!(x, 1);
    }

    #[test]
    fn gf2_frobenius_is_identity() {
        let f = Field::new(1).unwrap();
        for a in f.elements() {
            assert_eq!(f.mul(a, a), a);
        }
    }

    #[test]
    fn freshman_dream_exhaustive() {
        for e in 1..=4 {
            let f = Field::new(e).unwrap();
            for a in f.elements() {
                for b in f.elements() {
                    let lhs = f.mul(f.add(a, b), f.add(a, b));
                    let rhs = f.add(f.mul(a, a), f.mul(b, b));
                    assert_eq!(lhs, rhs);
                }
            }
        }
    }

    #[test]
    fn field_axioms_exhaustive_small() {
        for e in 1..=4 {
            let f = Field::new(e).unwrap();
            for a in f.elements() {
                for b in f.elements() {
                    assert_eq!(f.mul(a, b), f.mul(b, a));
                    if b != 0 {
                        assert_eq!(f.mul(f.div(a, b), b), a);
                    }
                    for c in f.elements() {
                        assert_eq!(f.mul(a, f.add(b, c)), f.add(f.mul(a, b), f.mul(a, c)));
                        assert_eq!(f.mul(a, f.mul(b, c)), f.mul(f.mul(a, b), c));
                    }
                }
            }
            for a in f.elements() {
                assert_eq!(f.pow(a, f.order()), a, "a^(2^e) = a");
            }
        }
    }

    #[test]
    fn conjugation_is_involutory_automorphism() {
        for e in [2u32, 4, 6, 8] {
            let f = Field::new(e).unwrap();
            for a in f.elements() {
                let c = f.conjugate(a).unwrap();
                assert_eq!(f.conjugate(c).unwrap(), a);
                for b in f.elements() {
                    assert_eq!(
                        f.conjugate(f.mul(a, b)).unwrap(),
                        f.mul(f.conjugate(a).unwrap(), f.conjugate(b).unwrap())
                    );
                    assert_eq!(
                        f.conjugate(f.add(a, b)).unwrap(),
                        f.add(f.conjugate(a).unwrap(), f.conjugate(b).unwrap())
                    );
                }
            }
            // fixed set is exactly the subfield: q elements
            let q = f.subfield_order().unwrap();
            let fixed = f.elements().filter(|&a| f.conjugate(a).unwrap() == a).count();
            assert_eq!(fixed, q);
        }
        assert!(Field::new(3).unwrap().conjugate(1).is_err());
    }

    #[test]
    fn conjugate_of_gf16_generator() {
        let f = Field::new(4).unwrap();
        let g: El = 0b10;
        let c = f.conjugate(g).unwrap();
        assert_eq!(c, f.pow(g, 4));
        assert_eq!(f.conjugate(c).unwrap(), g);
        assert_eq!(f.conjugate(0).unwrap(), 0);
    }

    #[test]
    fn norm_lands_in_subfield_and_is_multiplicative() {
        for e in [2u32, 4, 6] {
            let f = Field::new(e).unwrap();
            assert_eq!(f.norm(0).unwrap(), 0);
            assert_eq!(f.norm(1).unwrap(), 1);
            for a in f.elements() {
                let n = f.norm(a).unwrap();
                assert!(f.in_subfield(n).unwrap());
                // norm(a)^q = norm(a)
                let q = f.subfield_order().unwrap();
                assert_eq!(f.pow(n, q), n);
                for b in f.elements() {
                    assert_eq!(f.norm(f.mul(a, b)).unwrap(), f.mul(n, f.norm(b).unwrap()));
                }
            }
        }
    }

    #[test]
    fn norm_gf16_over_gf4_is_uniformly_5_to_1() {
        // |kernel of norm on nonzero elements| = q+1 = 5
        let f = Field::new(4).unwrap();
        let mut preimages = std::collections::HashMap::new();
        for a in f.elements().skip(1) {
            *preimages.entry(f.norm(a).unwrap()).or_insert(0usize) += 1;
        }
        assert_eq!(preimages.len(), 3); // the nonzero GF(4) values
        assert!(preimages.values().all(|&c| c == 5));
    }

    proptest::proptest! {
        // the large degrees are not covered exhaustively; hit them with
        // random elements instead
        #[test]
        fn random_axioms_high_degree(e in 5u32..=8, a in proptest::num::u16::ANY,
                                     b in proptest::num::u16::ANY, c in proptest::num::u16::ANY) {
            let f = Field::new(e).unwrap();
            let mask = (f.order() - 1) as El;
            let (a, b, c) = (a & mask, b & mask, c & mask);
            proptest::prop_assert_eq!(f.mul(a, b), f.mul(b, a));
            proptest::prop_assert_eq!(f.mul(a, f.mul(b, c)), f.mul(f.mul(a, b), c));
            proptest::prop_assert_eq!(f.mul(a, f.add(b, c)), f.add(f.mul(a, b), f.mul(a, c)));
            let sq = |x: El| f.mul(x, x);
            proptest::prop_assert_eq!(sq(f.add(a, b)), f.add(sq(a), sq(b)));
            if a != 0 {
                proptest::prop_assert_eq!(f.mul(a, f.inv(a)), 1);
            }
            if e % 2 == 0 {
                let n = f.norm(a).unwrap();
                proptest::prop_assert!(f.in_subfield(n).unwrap());
                proptest::prop_assert_eq!(f.conjugate(f.conjugate(a).unwrap()).unwrap(), a);
                proptest::prop_assert_eq!(
                    f.norm(f.mul(a, b)).unwrap(),
                    f.mul(n, f.norm(b).unwrap())
                );
            }
        }
    }

    #[test]
    fn subfield_elements_fixed_inside_gf16() {
        // the GF(4)-subfield of GF(16) is pointwise fixed by a -> a^4
        let f = Field::new(4).unwrap();
        let subfield: Vec<El> = f
            .elements()
            .filter(|&a| f.in_subfield(a).unwrap())
            .collect();
        assert_eq!(subfield.len(), 4);
        for &a in &subfield {
            assert_eq!(f.conjugate(a).unwrap(), a);
        }
    }
}
