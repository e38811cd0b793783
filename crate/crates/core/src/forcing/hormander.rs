//! Algebraic sufficient conditions for the bracket condition on a forced set
//! `K ⊂ ℤ² \ {0}`: (a) reflection symmetry, (b) two modes of unequal
//! length, (c) integer span equal to `ℤ²`.

use std::collections::HashSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::spectral::Mode;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HormanderReport {
    pub cond_a: bool,
    pub cond_b: bool,
    pub cond_c: bool,
    /// First mode found without its reflection, when (a) fails.
    pub missing_reflection: Option<Mode>,
    /// Two modes with `|k| ≠ |k′|`, when (b) holds.
    pub unequal_pair: Option<(Mode, Mode)>,
    /// Hermite normal form basis of the generated lattice, columns
    /// `(h11, h21)` and `(0, h22)`.
    pub lattice_basis: [[i64; 2]; 2],
    /// Index of the generated lattice in `ℤ²` (`|det|`), 0 when rank-deficient.
    pub lattice_index: i64,
}

impl HormanderReport {
    pub fn passes(&self) -> bool {
        self.cond_a && self.cond_b && self.cond_c
    }
}

impl fmt::Display for HormanderReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = |b: bool| if b { "pass" } else { "FAIL" };
        writeln!(f, "(a) reflection symmetry      : {}", mark(self.cond_a))?;
        if let Some(m) = self.missing_reflection {
            writeln!(f, "    missing partner of {m:?}")?;
        }
        writeln!(f, "(b) two unequal lengths      : {}", mark(self.cond_b))?;
        if let Some((p, q)) = self.unequal_pair {
            writeln!(f, "    witness {p:?}, {q:?}")?;
        }
        writeln!(f, "(c) integer span is Z^2      : {}", mark(self.cond_c))?;
        let [[a, _], [b, c]] = self.lattice_basis;
        writeln!(f, "    lattice basis ({a},{b}), (0,{c}); index {}", self.lattice_index)?;
        write!(f, "overall                      : {}", mark(self.passes()))
    }
}

fn overflow() -> Error {
    Error::InvalidArgument("integer overflow during lattice reduction".into())
}

/// Hermite normal form `[[h11, 0], [h21, h22]]` (lower triangular, columns
/// spanning the same lattice as the input columns) with `h11, h22 >= 0` and
/// `0 <= h21 < h22` when `h22 > 0`.
pub fn lattice_basis(vectors: &[Mode]) -> Result<[[i64; 2]; 2]> {
    let mut cols: Vec<(i64, i64)> = vectors.to_vec();
    // gather the gcd of first components into a single column
    let mut pivot: Option<(i64, i64)> = None;
    let mut rest: Vec<(i64, i64)> = Vec::new();
    for c in cols.drain(..) {
        if c.0 == 0 {
            rest.push(c);
            continue;
        }
        match pivot {
            None => pivot = Some(c),
            Some(mut p) => {
                let mut q = c;
                while q.0 != 0 {
                    let t = p.0.div_euclid(q.0);
                    let r = (
                        p.0.checked_sub(t.checked_mul(q.0).ok_or_else(overflow)?).ok_or_else(overflow)?,
                        p.1.checked_sub(t.checked_mul(q.1).ok_or_else(overflow)?).ok_or_else(overflow)?,
                    );
                    p = q;
                    q = r;
                }
                rest.push(q);
                pivot = Some(p);
            }
        }
    }
    let mut g2: i64 = 0;
    for c in &rest {
        debug_assert_eq!(c.0, 0);
        g2 = gcd(g2, c.1);
    }
    let (mut h11, mut h21) = pivot.unwrap_or((0, 0));
    if h11 < 0 {
        h11 = -h11;
        h21 = h21.checked_neg().ok_or_else(overflow)?;
    }
    if g2 > 0 {
        h21 = h21.rem_euclid(g2);
    }
    Ok([[h11, 0], [h21, g2]])
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

pub fn hormander_check(modes: &[Mode]) -> Result<HormanderReport> {
    if modes.is_empty() {
        return Err(Error::InvalidForcing("empty forcing set".into()));
    }
    if modes.contains(&(0, 0)) {
        return Err(Error::InvalidForcing("zero mode in forcing set".into()));
    }
    let set: HashSet<Mode> = modes.iter().copied().collect();
    let mut sorted: Vec<Mode> = set.iter().copied().collect();
    sorted.sort_unstable();
    let missing_reflection = sorted.iter().copied().find(|m| !set.contains(&(-m.0, -m.1)));
    let len2 = |m: &Mode| m.0 * m.0 + m.1 * m.1;
    let unequal_pair = sorted.iter().find_map(|p| sorted.iter().find(|q| len2(q) != len2(p)).map(|q| (*p, *q)));
    let basis = lattice_basis(&sorted)?;
    let index = basis[0][0] * basis[1][1];
    Ok(HormanderReport {
        cond_a: missing_reflection.is_none(),
        cond_b: unequal_pair.is_some(),
        cond_c: index == 1,
        missing_reflection,
        unequal_pair,
        lattice_basis: basis,
        lattice_index: index,
    })
}
