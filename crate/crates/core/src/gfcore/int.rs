use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};
use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use super::fp::{rank_mod_p, FpMatrix};
use super::prime::PrimeModulus;
use crate::error::{Error, Result};

/// Dense matrix of arbitrary-precision integers.
///
/// Serializes as a JSON array of rows, each a list of decimal strings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntMatrix {
    rows: usize,
    cols: usize,
    data: Vec<BigInt>,
}

impl IntMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<BigInt>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            data: entries,
        })
    }

    pub fn from_rows(rows: Vec<Vec<BigInt>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(r, c, rows.into_iter().flatten().collect())
    }

    pub fn from_i64(rows: &[Vec<i64>]) -> Self {
        Self::from_rows(
            rows.iter()
                .map(|r| r.iter().map(|&x| BigInt::from(x)).collect())
                .collect(),
        )
        .expect("rectangular input")
    }

    pub fn from_counts(rows: usize, cols: usize, counts: &[u32]) -> Self {
        Self::new(rows, cols, counts.iter().map(|&c| BigInt::from(c)).collect())
            .expect("shape checked by caller")
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![BigInt::zero(); n * n];
        for i in 0..n {
            data[i * n + i] = BigInt::from(1);
        }
        Self {
            rows: n,
            cols: n,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[BigInt] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> &BigInt {
        &self.data[i * self.cols + j]
    }

    pub fn to_rows(&self) -> Vec<Vec<BigInt>> {
        if self.cols == 0 {
            return vec![Vec::new(); self.rows];
        }
        self.data.chunks(self.cols).map(<[BigInt]>::to_vec).collect()
    }
}

pub(crate) fn residue(x: &BigInt, p: PrimeModulus) -> u64 {
    x.mod_floor(&BigInt::from(p.get()))
        .to_u64()
        .expect("residue below modulus")
}

/// Rank over the rationals by fraction-free (Bareiss) elimination.
///
/// After eliminating with pivot `k`, every entry below is the determinant of
/// a bordered minor, so the division by the previous pivot is exact.
pub fn rank_integer(m: &IntMatrix) -> usize {
    let (rows, cols) = (m.rows, m.cols);
    let mut a = m.data.clone();
    let mut prev = BigInt::from(1);
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(pr) = (r..rows).find(|&i| !a[i * cols + c].is_zero()) else {
            continue;
        };
        if pr != r {
            for j in c..cols {
                a.swap(pr * cols + j, r * cols + j);
            }
        }
        let pivot = a[r * cols + c].clone();
        for i in r + 1..rows {
            let f = std::mem::take(&mut a[i * cols + c]);
            for j in c + 1..cols {
                let updated = if f.is_zero() {
                    &pivot * &a[i * cols + j]
                } else {
                    &pivot * &a[i * cols + j] - &f * &a[r * cols + j]
                };
                a[i * cols + j] = if prev == BigInt::from(1) {
                    updated
                } else {
                    debug_assert!((&updated % &prev).is_zero());
                    updated / &prev
                };
            }
        }
        prev = pivot;
        r += 1;
    }
    r
}

/// Rank over the rationals bounded from below by reductions modulo the
/// given primes; equals [`rank_integer`] unless every prime divides the
/// relevant minors.
pub fn rank_multimodular(m: &IntMatrix, primes: &[PrimeModulus]) -> usize {
    primes
        .iter()
        .map(|&p| rank_mod_p(&FpMatrix::reduce(m, p)))
        .max()
        .unwrap_or(0)
}

impl Serialize for IntMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<String>> = self
            .to_rows()
            .iter()
            .map(|r| r.iter().map(BigInt::to_string).collect())
            .collect();
        rows.serialize(s)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Cell {
    Text(String),
    Int(i64),
}

impl<'de> Deserialize<'de> for IntMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<Cell>> = Vec::deserialize(d)?;
        let rows = rows
            .into_iter()
            .map(|r| {
                r.into_iter()
                    .map(|c| match c {
                        Cell::Int(i) => Ok(BigInt::from(i)),
                        Cell::Text(t) => t
                            .trim()
                            .parse::<BigInt>()
                            .map_err(|e| de::Error::custom(format!("bad integer {t:?}: {e}"))),
                    })
                    .collect::<std::result::Result<Vec<_>, _>>()
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        IntMatrix::from_rows(rows).map_err(de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_rank() {
        for n in 1..6 {
            assert_eq!(rank_integer(&IntMatrix::identity(n)), n);
        }
    }

    #[test]
    fn repeated_row_drops_rank() {
        assert_eq!(rank_integer(&IntMatrix::from_i64(&[vec![3, 0], vec![3, 0]])), 1);
        let m = IntMatrix::from_i64(&[vec![1, 2, 0], vec![0, 1, 2], vec![1, 2, 0]]);
        assert!(rank_integer(&m) < 3);
    }

    #[test]
    fn rectangular_and_zero_columns() {
        let m = IntMatrix::from_i64(&[vec![0, 2, 4, 1], vec![0, 1, 2, 0], vec![0, 3, 6, 1]]);
        assert_eq!(rank_integer(&m), 2);
        let z = IntMatrix::from_i64(&[vec![0, 0], vec![0, 0]]);
        assert_eq!(rank_integer(&z), 0);
    }

    #[test]
    fn bareiss_survives_large_entries() {
        // Vandermonde on 1..=6 is nonsingular with large minors.
        let rows: Vec<Vec<i64>> = (1..=6)
            .map(|x: i64| (0..6).map(|k| x.pow(k)).collect())
            .collect();
        assert_eq!(rank_integer(&IntMatrix::from_i64(&rows)), 6);
    }

    #[test]
    fn json_is_array_of_decimal_strings() {
        let m = IntMatrix::from_rows(vec![vec![
            "123456789012345678901234567890".parse().unwrap(),
            BigInt::from(-4),
        ]])
        .unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"[["123456789012345678901234567890","-4"]]"#);
        let back: IntMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        let ragged: std::result::Result<IntMatrix, _> = serde_json::from_str(r#"[["1"],["1","2"]]"#);
        assert!(ragged.is_err());
    }
}
