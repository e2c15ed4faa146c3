use num_bigint::BigUint;
use num_traits::One;

use super::int::IntMatrix;
use super::prime::PrimeModulus;
use crate::error::{Error, Result};

/// Residue arithmetic used by the elimination kernel.
pub(crate) trait ModArith: Copy {
    /// `(a - f * b) mod p` for reduced `a`, `f`, `b`.
    fn mul_sub(self, a: u64, f: u64, b: u64) -> u64;
    fn mul(self, a: u64, b: u64) -> u64;
    fn inv(self, a: u64) -> u64;
}

impl ModArith for PrimeModulus {
    #[inline]
    fn mul_sub(self, a: u64, f: u64, b: u64) -> u64 {
        let p = self.get();
        if self.is_small() {
            // (p - f) * b <= (p - 1)^2, so the sum stays below 2^64.
            (a + (p - f) * b) % p
        } else {
            ((a as u128 + (p - f) as u128 * b as u128) % p as u128) as u64
        }
    }

    #[inline]
    fn mul(self, a: u64, b: u64) -> u64 {
        PrimeModulus::mul(self, a, b)
    }

    #[inline]
    fn inv(self, a: u64) -> u64 {
        PrimeModulus::inv(self, a)
    }
}

/// Arithmetic modulo 2^31 - 1 with shift-and-add reduction.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Mersenne31;

impl Mersenne31 {
    const P: u64 = PrimeModulus::MERSENNE_31;

    #[inline]
    fn reduce(x: u64) -> u64 {
        let x = (x & Self::P) + (x >> 31);
        let x = (x & Self::P) + (x >> 31);
        if x >= Self::P {
            x - Self::P
        } else {
            x
        }
    }
}

impl ModArith for Mersenne31 {
    #[inline]
    fn mul_sub(self, a: u64, f: u64, b: u64) -> u64 {
        Self::reduce(a + (Self::P - f) * b)
    }

    #[inline]
    fn mul(self, a: u64, b: u64) -> u64 {
        Self::reduce(a * b)
    }

    fn inv(self, a: u64) -> u64 {
        let mut acc = 1;
        let mut b = a;
        let mut e = Self::P - 2;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, b);
            }
            b = self.mul(b, b);
            e >>= 1;
        }
        acc
    }
}

/// Row-echelon reduction in place over a row-major buffer of reduced
/// residues. Pivots are the first nonzero entry in column order, scanning
/// rows top-down, so the pivot sequence is a pure function of the input.
pub(crate) fn eliminate<M: ModArith>(
    data: &mut [u64],
    rows: usize,
    cols: usize,
    arith: M,
) -> Vec<(usize, usize)> {
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(pr) = (r..rows).find(|&i| data[i * cols + c] != 0) else {
            continue;
        };
        if pr != r {
            for j in c..cols {
                data.swap(pr * cols + j, r * cols + j);
            }
        }
        let inv = arith.inv(data[r * cols + c]);
        for j in c..cols {
            data[r * cols + j] = arith.mul(data[r * cols + j], inv);
        }
        let (head, tail) = data.split_at_mut((r + 1) * cols);
        let pivot_row = &head[r * cols..];
        for row in tail.chunks_exact_mut(cols) {
            let f = row[c];
            if f == 0 {
                continue;
            }
            row[c] = 0;
            for j in c + 1..cols {
                let b = pivot_row[j];
                if b != 0 {
                    row[j] = arith.mul_sub(row[j], f, b);
                }
            }
        }
        pivots.push((pr, c));
        r += 1;
    }
    pivots
}

/// A dense matrix over F_p with every entry reduced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FpMatrix {
    rows: usize,
    cols: usize,
    p: PrimeModulus,
    data: Vec<u64>,
}

/// Result of row reduction: the rank and the `(row, column)` of each pivot
/// in the order chosen, rows indexed as they stood when the pivot was found.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Echelon {
    pub rank: usize,
    pub pivots: Vec<(usize, usize)>,
}

impl FpMatrix {
    /// Builds from already reduced residues; an entry `>= p` is a domain error.
    pub fn new(rows: usize, cols: usize, entries: Vec<u64>, p: PrimeModulus) -> Result<Self> {
        if rows == 0 || cols == 0 || entries.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        if let Some(bad) = entries.iter().find(|&&e| e >= p.get()) {
            return Err(Error::Domain(format!("entry {bad} not reduced mod {p}")));
        }
        Ok(Self {
            rows,
            cols,
            p,
            data: entries,
        })
    }

    pub fn from_rows(rows: &[Vec<u64>], p: PrimeModulus) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(r, c, rows.concat(), p)
    }

    /// Reduces an integer matrix entrywise.
    pub fn reduce(m: &IntMatrix, p: PrimeModulus) -> Self {
        let data = m.entries().iter().map(|x| super::int::residue(x, p)).collect();
        Self {
            rows: m.rows(),
            cols: m.cols(),
            p,
            data,
        }
    }

    /// Reduces a small nonnegative integer matrix (adjacency counts).
    pub fn from_counts(rows: usize, cols: usize, counts: &[u32], p: PrimeModulus) -> Self {
        assert_eq!(counts.len(), rows * cols);
        let data = counts.iter().map(|&c| c as u64 % p.get()).collect();
        Self {
            rows,
            cols,
            p,
            data,
        }
    }

    pub fn identity(n: usize, p: PrimeModulus) -> Self {
        let mut data = vec![0; n * n];
        for i in 0..n {
            data[i * n + i] = 1 % p.get();
        }
        Self {
            rows: n,
            cols: n,
            p,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn modulus(&self) -> PrimeModulus {
        self.p
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.data[i * self.cols + j]
    }

    pub fn entries(&self) -> &[u64] {
        &self.data
    }

    pub fn row_reduce(&self) -> Echelon {
        let mut work = self.data.clone();
        let pivots = eliminate(&mut work, self.rows, self.cols, self.p);
        Echelon {
            rank: pivots.len(),
            pivots,
        }
    }

    /// `self * v` over F_p.
    pub fn apply(&self, v: &[u64]) -> Vec<u64> {
        assert_eq!(v.len(), self.cols);
        self.data
            .chunks_exact(self.cols)
            .map(|row| {
                row.iter()
                    .zip(v)
                    .fold(0, |acc, (&a, &x)| self.p.add(acc, self.p.mul(a, x % self.p.get())))
            })
            .collect()
    }
}

pub fn rank_mod_p(m: &FpMatrix) -> usize {
    m.row_reduce().rank
}

/// Number of nonzero null vectors, `p^(n - rank) - 1`.
pub fn kernel_count(m: &FpMatrix) -> Result<BigUint> {
    if m.rows != m.cols {
        return Err(Error::Shape(format!(
            "kernel count needs a square matrix, got {}x{}",
            m.rows, m.cols
        )));
    }
    let corank = m.cols - rank_mod_p(m);
    Ok(BigUint::from(m.p.get()).pow(corank as u32) - BigUint::one())
}

/// Rank of a small nonnegative integer matrix modulo `p`, without building
/// an [`FpMatrix`].
pub fn rank_of_counts(rows: usize, cols: usize, counts: &[u32], p: PrimeModulus) -> usize {
    let mut work: Vec<u64> = counts.iter().map(|&c| c as u64 % p.get()).collect();
    eliminate(&mut work, rows, cols, p).len()
}

pub(crate) fn rank_of_counts_m31(rows: usize, cols: usize, counts: &[u32]) -> usize {
    let mut work: Vec<u64> = counts.iter().map(|&c| c as u64 % Mersenne31::P).collect();
    eliminate(&mut work, rows, cols, Mersenne31).len()
}
