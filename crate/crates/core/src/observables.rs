//! Observable catalogs, library selection and lifting.
//!
//! A catalog is an ordered list of monomials in the state. A library picks a
//! subset of catalog entries (1-based indices, kept ascending) and lifts a
//! state `x` to the vector of the selected monomials. Libraries are encoded as
//! fixed-length inclusion masks for the meta-learner.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

/// `∏ x_i^{e_i}`
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Monomial {
    exponents: Vec<u32>,
}

impl Monomial {
    pub fn new(exponents: Vec<u32>) -> Self {
        Self { exponents }
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.exponents.len());
        let mut v = 1.0;
        for (&xi, &e) in x.iter().zip(&self.exponents) {
            for _ in 0..e {
                v *= xi;
            }
        }
        v
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, &e) in self.exponents.iter().enumerate() {
            if e == 0 {
                continue;
            }
            if !first {
                f.write_str("*")?;
            }
            first = false;
            write!(f, "x{}", i + 1)?;
            if e > 1 {
                write!(f, "^{e}")?;
            }
        }
        if first {
            f.write_str("1")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ObservableCatalog {
    state_dim: usize,
    entries: Vec<Monomial>,
}

impl ObservableCatalog {
    pub fn new(state_dim: usize, entries: Vec<Monomial>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyLibrary);
        }
        for m in &entries {
            if m.exponents.len() != state_dim {
                return Err(Error::Dimension { expected: state_dim, found: m.exponents.len() });
            }
        }
        Ok(Self { state_dim, entries })
    }

    /// Catalog from `(a, b)` exponent pairs for a planar state, `x1^a · x2^b`.
    pub fn from_planar_exponents(pairs: &[(u32, u32)]) -> Result<Self> {
        Self::new(2, pairs.iter().map(|&(a, b)| Monomial::new(alloc::vec![a, b])).collect())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn entries(&self) -> &[Monomial] {
        &self.entries
    }

    /// Entry by 1-based index.
    pub fn entry(&self, k: usize) -> Option<&Monomial> {
        k.checked_sub(1).and_then(|i| self.entries.get(i))
    }
}

/// The nine monomials of the benchmark, in order:
/// `x1, x2, x1·x2, x1², x2², x1²·x2, x1·x2², x1²·x2², x1⁴`.
pub fn default_catalog() -> ObservableCatalog {
    ObservableCatalog::from_planar_exponents(&DEFAULT_EXPONENTS).expect("static catalog is valid")
}

pub const DEFAULT_EXPONENTS: [(u32, u32); 9] = [(1, 0), (0, 1), (1, 1), (2, 0), (0, 2), (2, 1), (1, 2), (2, 2), (4, 0)];

/// Ascending, duplicate-free, 1-based selection of catalog entries.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ObservableLibrary {
    theta: Vec<usize>,
}

impl ObservableLibrary {
    /// Builds a library from indices in any order; they are sorted ascending.
    pub fn new(indices: &[usize], catalog_size: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyLibrary);
        }
        let mut theta = indices.to_vec();
        theta.sort_unstable();
        for w in theta.windows(2) {
            if w[0] == w[1] {
                return Err(Error::DuplicateIndex(w[0]));
            }
        }
        for &k in &theta {
            if k == 0 || k > catalog_size {
                return Err(Error::IndexOutOfRange { index: k, size: catalog_size });
            }
        }
        Ok(Self { theta })
    }

    pub fn indices(&self) -> &[usize] {
        &self.theta
    }

    pub fn n_xi(&self) -> usize {
        self.theta.len()
    }

    pub fn lift(&self, catalog: &ObservableCatalog, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = alloc::vec![0.0; self.n_xi()];
        self.lift_into(catalog, x, &mut out)?;
        Ok(out)
    }

    pub fn lift_into(&self, catalog: &ObservableCatalog, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != catalog.state_dim() {
            return Err(Error::Dimension { expected: catalog.state_dim(), found: x.len() });
        }
        if out.len() != self.n_xi() {
            return Err(Error::Dimension { expected: self.n_xi(), found: out.len() });
        }
        for (o, &k) in out.iter_mut().zip(&self.theta) {
            let m = catalog.entry(k).ok_or(Error::IndexOutOfRange { index: k, size: catalog.len() })?;
            *o = m.eval(x);
        }
        Ok(())
    }

    pub fn encode(&self, catalog_size: usize) -> LibraryMask {
        let mut bits = alloc::vec![false; catalog_size];
        for &k in &self.theta {
            bits[k - 1] = true;
        }
        LibraryMask { bits }
    }
}

impl fmt::Display for ObservableLibrary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, k) in self.theta.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{k}")?;
        }
        f.write_str("}")
    }
}

/// Inclusion mask over a catalog; bit `k-1` selects entry `k`.
///
/// Printed left to right starting at entry 1, so `{1,2,4,9}` over nine
/// entries is `110100001`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LibraryMask {
    bits: Vec<bool>,
}

impl LibraryMask {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    /// Mask whose printed bit string is the binary representation of `value`.
    pub fn from_value(value: u64, len: usize) -> Self {
        let bits = (0..len).map(|i| (value >> (len - 1 - i)) & 1 == 1).collect();
        Self { bits }
    }

    /// Rounds each coordinate of a point in `[0,1]^N` at 0.5.
    pub fn round(point: &[f64]) -> Self {
        Self { bits: point.iter().map(|&v| v >= 0.5).collect() }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Integer value of the printed bit string (entry 1 is the most
    /// significant bit). Used as the deterministic tie-break.
    pub fn value(&self) -> u64 {
        self.bits.iter().fold(0u64, |acc, &b| (acc << 1) | u64::from(b))
    }

    pub fn as_point(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    pub fn decode(&self) -> Result<ObservableLibrary> {
        let theta: Vec<usize> = self.bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i + 1).collect();
        ObservableLibrary::new(&theta, self.bits.len())
    }

    /// Every nonempty mask of length `n`, in increasing [`LibraryMask::value`].
    pub fn all_nonempty(n: usize) -> impl Iterator<Item = LibraryMask> {
        assert!(n < 64, "mask enumeration limited to 63 entries");
        (1u64..(1u64 << n)).map(move |v| LibraryMask::from_value(v, n))
    }
}

impl fmt::Display for LibraryMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for LibraryMask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::InvalidParameter(alloc::format!("mask character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if bits.is_empty() {
            return Err(Error::InvalidParameter(String::from("empty mask string")));
        }
        Ok(Self { bits })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;
    use proptest::prelude::*;

    fn lib(ix: &[usize]) -> ObservableLibrary {
        ObservableLibrary::new(ix, 9).unwrap()
    }

    #[test]
    fn default_catalog_layout() {
        let c = default_catalog();
        assert_eq!(c.len(), 9);
        assert_eq!(c.entry(9).unwrap().exponents(), &[4, 0]);
        assert_eq!(c.entry(9).unwrap().to_string(), "x1^4");
        assert_eq!(c.entry(1).unwrap().eval(&[0.0, 0.0]), 0.0);
        assert_eq!(c.entry(3).unwrap().eval(&[2.0, 3.0]), 6.0);
    }

    #[test]
    fn lift_examples() {
        let c = default_catalog();
        assert_eq!(lib(&[1, 2, 4, 9]).lift(&c, &[1.0, -1.0]).unwrap(), vec![1.0, -1.0, 1.0, 1.0]);
        assert_eq!(lib(&[1, 2]).lift(&c, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(lib(&[3, 5]).lift(&c, &[2.0, 3.0]).unwrap(), vec![6.0, 9.0]);
    }

    #[test]
    fn lift_rejects_wrong_state_dimension() {
        let c = default_catalog();
        assert_eq!(lib(&[1]).lift(&c, &[1.0, 2.0, 3.0]), Err(Error::Dimension { expected: 2, found: 3 }));
    }

    #[test]
    fn library_validation() {
        assert_eq!(ObservableLibrary::new(&[], 9), Err(Error::EmptyLibrary));
        assert_eq!(ObservableLibrary::new(&[0], 9), Err(Error::IndexOutOfRange { index: 0, size: 9 }));
        assert_eq!(ObservableLibrary::new(&[10], 9), Err(Error::IndexOutOfRange { index: 10, size: 9 }));
        assert_eq!(ObservableLibrary::new(&[2, 2], 9), Err(Error::DuplicateIndex(2)));
        assert_eq!(lib(&[9, 1, 4, 2]).indices(), &[1, 2, 4, 9]);
    }

    #[test]
    fn mask_examples() {
        let m = lib(&[1, 2, 4, 9]).encode(9);
        assert_eq!(m.to_string(), "110100001");
        assert_eq!(m.decode().unwrap(), lib(&[1, 2, 4, 9]));
        let zero: LibraryMask = "000000000".parse().unwrap();
        assert_eq!(zero.decode(), Err(Error::EmptyLibrary));
        let full: LibraryMask = "111111111".parse().unwrap();
        let full = full.decode().unwrap();
        assert_eq!(full.n_xi(), 9);
        assert_eq!(full.indices(), &[1, 2, 3, 4, 5, 6, 7, 8, 9]);
        assert!("1102".parse::<LibraryMask>().is_err());
    }

    #[test]
    fn mask_value_and_enumeration() {
        let m: LibraryMask = "110100001".parse().unwrap();
        assert_eq!(m.value(), 0b110100001);
        assert_eq!(LibraryMask::from_value(m.value(), 9), m);
        let all: Vec<_> = LibraryMask::all_nonempty(9).collect();
        assert_eq!(all.len(), 511);
        assert!(all.windows(2).all(|w| w[0].value() < w[1].value()));
        assert_eq!(LibraryMask::round(&[0.7, 0.2, 0.5, 0.49]).to_string(), "1010");
    }

    proptest! {
        #[test]
        fn mask_round_trip(value in 1u64..512) {
            let mask = LibraryMask::from_value(value, 9);
            let lib = mask.decode().unwrap();
            prop_assert_eq!(lib.n_xi(), mask.popcount());
            prop_assert_eq!(lib.encode(9), mask);
        }

        #[test]
        fn lift_is_order_stable(value in 1u64..512, x1 in -2.0f64..2.0, x2 in -2.0f64..2.0) {
            let c = default_catalog();
            let lib = LibraryMask::from_value(value, 9).decode().unwrap();
            let mut rev = lib.indices().to_vec();
            rev.reverse();
            let permuted = ObservableLibrary::new(&rev, 9).unwrap();
            prop_assert_eq!(lib.lift(&c, &[x1, x2]).unwrap(), permuted.lift(&c, &[x1, x2]).unwrap());
        }
    }
}
