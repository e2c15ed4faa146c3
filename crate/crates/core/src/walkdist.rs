//! The step distribution of the class-count walk and its exact n-step law.
//!
//! A step is the histogram of a uniformly random `d`-tuple over F_p whose
//! entries sum to zero. The support is stored compressed, one atom per
//! histogram with its multiplicity.

use std::collections::{BTreeMap, HashMap};

use num_bigint::BigUint;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gfcore::PrimeModulus;

/// Histogram of symbol frequencies: `counts[j]` is how often `j` occurs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CountVector(pub Vec<u32>);

impl CountVector {
    pub fn zeros(p: usize) -> Self {
        Self(vec![0; p])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().map(|&c| c as u64).sum()
    }

    /// `Σ_j j·counts[j] mod p`.
    pub fn weighted_residue(&self, p: u64) -> u64 {
        self.0
            .iter()
            .enumerate()
            .fold(0, |acc, (j, &c)| (acc + (j as u64 % p) * (c as u64 % p)) % p)
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }
}

impl From<Vec<u32>> for CountVector {
    fn from(v: Vec<u32>) -> Self {
        Self(v)
    }
}

impl std::ops::Index<usize> for CountVector {
    type Output = u32;
    fn index(&self, i: usize) -> &u32 {
        &self.0[i]
    }
}

/// Counting function: histogram of the entries of `v`.
pub fn phi(v: &[u64], p: PrimeModulus) -> Result<CountVector> {
    let mut counts = vec![0u32; p.get() as usize];
    for &x in v {
        if x >= p.get() {
            return Err(Error::Domain(format!("entry {x} not reduced mod {p}")));
        }
        counts[x as usize] += 1;
    }
    Ok(CountVector(counts))
}

/// Multinomial coefficient `(Σk)! / ∏ k_i!`.
pub fn multinomial(parts: &[u32]) -> BigUint {
    let mut acc = BigUint::one();
    let mut total = 0u32;
    for &k in parts {
        for i in 1..=k {
            total += 1;
            acc = acc * total / i;
        }
    }
    acc
}

/// All compositions of `total` into `parts` nonnegative parts, in
/// lexicographic order.
pub fn compositions(total: u32, parts: usize) -> Vec<Vec<u32>> {
    fn rec(left: u32, slots: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if slots == 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for k in 0..=left {
            cur.push(k);
            rec(left - k, slots - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if parts > 0 {
        rec(total, parts, &mut Vec::with_capacity(parts), &mut out);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub u: CountVector,
    pub multiplicity: BigUint,
}

/// Compressed support of one step, with multiplicities summing to `p^(d-1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportTable {
    pub d: u32,
    pub p: PrimeModulus,
    pub atoms: Vec<Atom>,
}

pub fn build_support(d: u32, p: PrimeModulus) -> SupportTable {
    let pu = p.get() as usize;
    let atoms = compositions(d, pu)
        .into_iter()
        .map(CountVector)
        .filter(|u| u.weighted_residue(p.get()) == 0)
        .map(|u| Atom {
            multiplicity: multinomial(&u.0),
            u,
        })
        .collect();
    SupportTable { d, p, atoms }
}

impl SupportTable {
    pub fn p_usize(&self) -> usize {
        self.p.get() as usize
    }

    pub fn total_weight(&self) -> BigUint {
        self.atoms.iter().map(|a| &a.multiplicity).sum()
    }

    /// `p^(d-1)`, the number of zero-sum tuples.
    pub fn tuple_count(&self) -> BigUint {
        BigUint::from(self.p.get()).pow(self.d.saturating_sub(1))
    }

    /// Atoms as `(u, probability)` pairs in floating point.
    pub fn weights_f64(&self) -> Vec<(Vec<f64>, f64)> {
        let total = self.tuple_count().to_f64().unwrap_or(f64::INFINITY);
        self.atoms
            .iter()
            .map(|a| {
                (
                    a.u.0.iter().map(|&x| x as f64).collect(),
                    a.multiplicity.to_f64().unwrap_or(f64::INFINITY) / total,
                )
            })
            .collect()
    }
}

/// Exact first and second moments of one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MomentData {
    pub mean: Vec<BigRational>,
    pub covariance: Vec<Vec<BigRational>>,
}

fn rat(x: impl Into<num_bigint::BigInt>) -> BigRational {
    BigRational::from_integer(x.into())
}

pub fn moments(s: &SupportTable) -> MomentData {
    moments_of(s.atoms.iter().map(|a| (a.u.as_slice(), &a.multiplicity)), s.p_usize())
}

/// Moments of integer points with integer weights; sums stay in integers
/// until the final division.
fn moments_of<'a>(weighted: impl Iterator<Item = (&'a [u32], &'a BigUint)>, p: usize) -> MomentData {
    let mut total = BigUint::zero();
    let mut first = vec![BigUint::zero(); p];
    let mut second = vec![vec![BigUint::zero(); p]; p];
    for (x, w) in weighted {
        for k in 0..p {
            if x[k] == 0 {
                continue;
            }
            for l in k..p {
                if x[l] != 0 {
                    second[k][l] += w * (x[k] as u64 * x[l] as u64);
                }
            }
            first[k] += w * x[k];
        }
        total += w;
    }
    let total = rat(total);
    let mean: Vec<BigRational> = first.into_iter().map(|f| rat(f) / &total).collect();
    let covariance = (0..p)
        .map(|k| {
            (0..p)
                .map(|l| {
                    let s = if k <= l { &second[k][l] } else { &second[l][k] };
                    rat(s.clone()) / &total - &mean[k] * &mean[l]
                })
                .collect()
        })
        .collect();
    MomentData { mean, covariance }
}

/// Mean `(d/p)·𝟙` and covariance `(d/p)I − (d/p²)𝟙𝟙ᵗ`, valid for
/// `d >= 3` (the mean alone holds from `d = 2`).
pub fn moments_closed_form(d: u32, p: PrimeModulus) -> MomentData {
    let pu = p.get() as usize;
    let dp = BigRational::new(d.into(), p.get().into());
    let off = -BigRational::new(d.into(), (p.get() * p.get()).into());
    MomentData {
        mean: vec![dp.clone(); pu],
        covariance: (0..pu)
            .map(|k| {
                (0..pu)
                    .map(|l| if k == l { &dp + &off } else { off.clone() })
                    .collect()
            })
            .collect(),
    }
}

/// `E[exp(i⟨t, X⟩)]`.
pub fn char_fn(s: &SupportTable, t: &[f64]) -> Complex64 {
    assert_eq!(t.len(), s.p_usize());
    s.weights_f64()
        .iter()
        .map(|(u, w)| {
            let phase: f64 = u.iter().zip(t).map(|(a, b)| a * b).sum();
            Complex64::from_polar(*w, phase)
        })
        .sum()
}

/// `E[exp(i⟨t, X − μ⟩)]` with `μ = (d/p)·𝟙`.
pub fn char_fn_centered(s: &SupportTable, t: &[f64]) -> Complex64 {
    let mu = s.d as f64 / s.p.get() as f64;
    let shift: f64 = t.iter().sum::<f64>() * mu;
    char_fn(s, t) * Complex64::from_polar(1.0, -shift)
}

/// Precomputed atoms for repeated evaluation of `|φ_{X−μ}|` on grids.
#[derive(Debug, Clone)]
pub struct CharFnEvaluator {
    atoms: Vec<(Vec<f64>, f64)>,
    mu: f64,
}

impl CharFnEvaluator {
    pub fn new(s: &SupportTable) -> Self {
        Self {
            atoms: s.weights_f64(),
            mu: s.d as f64 / s.p.get() as f64,
        }
    }

    pub fn centered(&self, t: &[f64]) -> Complex64 {
        let shift: f64 = t.iter().sum::<f64>() * self.mu;
        self.atoms
            .iter()
            .map(|(u, w)| {
                let phase: f64 = u.iter().zip(t).map(|(a, b)| a * b).sum::<f64>() - shift;
                Complex64::from_polar(*w, phase)
            })
            .sum()
    }

    pub fn abs_centered(&self, t: &[f64]) -> f64 {
        self.centered(t).norm()
    }
}

/// Exact endpoint counts `N_n(m) = p^{n(d−1)}·P(X_1 + … + X_n = m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeDistribution {
    pub n: u32,
    pub d: u32,
    pub p: PrimeModulus,
    pub table: BTreeMap<CountVector, BigUint>,
}

impl LatticeDistribution {
    pub fn count(&self, m: &[u32]) -> BigUint {
        self.table
            .get(&CountVector(m.to_vec()))
            .cloned()
            .unwrap_or_default()
    }

    pub fn total(&self) -> BigUint {
        self.table.values().sum()
    }

    /// Exact mean and covariance of the endpoint.
    pub fn moments(&self) -> MomentData {
        let p = self.p.get() as usize;
        moments_of(self.table.iter().map(|(m, c)| (m.as_slice(), c)), p)
    }

    /// `Σ_m N_n(m) e^{i⟨t,m⟩} / p^{n(d−1)}`.
    pub fn char_sum(&self, t: &[f64]) -> Complex64 {
        let scale = BigUint::from(self.p.get()).pow(self.n * self.d.saturating_sub(1));
        let scale = scale.to_f64().unwrap_or(f64::INFINITY);
        self.table
            .iter()
            .map(|(m, c)| {
                let phase: f64 = m.0.iter().zip(t).map(|(&a, b)| a as f64 * b).sum();
                Complex64::from_polar(c.to_f64().unwrap_or(f64::INFINITY) / scale, phase)
            })
            .sum()
    }
}

fn step(s: &SupportTable, prev: &HashMap<Vec<u32>, BigUint>) -> HashMap<Vec<u32>, BigUint> {
    let mut next: HashMap<Vec<u32>, BigUint> = HashMap::with_capacity(prev.len() * 2);
    let mut key = Vec::with_capacity(s.p_usize());
    for (m, c) in prev {
        for a in &s.atoms {
            key.clear();
            key.extend(m.iter().zip(&a.u.0).map(|(x, y)| x + y));
            let term = c * &a.multiplicity;
            match next.get_mut(&key) {
                Some(v) => *v += term,
                None => {
                    next.insert(key.clone(), term);
                }
            }
        }
    }
    next
}

/// Tables for every step count `0..=n`, built by sequential convolution.
pub fn walk_distributions(s: &SupportTable, n: u32) -> Vec<LatticeDistribution> {
    let mut cur: HashMap<Vec<u32>, BigUint> = HashMap::new();
    cur.insert(vec![0; s.p_usize()], BigUint::one());
    let mut out = Vec::with_capacity(n as usize + 1);
    for k in 0..=n {
        if k > 0 {
            cur = step(s, &cur);
        }
        out.push(LatticeDistribution {
            n: k,
            d: s.d,
            p: s.p,
            table: cur.iter().map(|(m, c)| (CountVector(m.clone()), c.clone())).collect(),
        });
    }
    out
}

pub fn walk_distribution(s: &SupportTable, n: u32) -> LatticeDistribution {
    walk_distributions(s, n).pop().expect("at least the n = 0 table")
}

/// Natural-log endpoint counts in floating point. Lossy: intended for trend
/// plots at step counts where exact tables are too large to keep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogLatticeDistribution {
    pub n: u32,
    pub d: u32,
    pub p: PrimeModulus,
    pub lossy: bool,
    pub entries: Vec<LogEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogEntry {
    pub m: CountVector,
    pub ln_count: f64,
}

pub fn walk_distribution_log(s: &SupportTable, n: u32) -> LogLatticeDistribution {
    let atoms: Vec<(Vec<u32>, f64)> = s
        .atoms
        .iter()
        .map(|a| (a.u.0.clone(), ln_biguint(&a.multiplicity)))
        .collect();
    let mut cur: HashMap<Vec<u32>, f64> = HashMap::new();
    cur.insert(vec![0; s.p_usize()], 0.0);
    for _ in 0..n {
        let mut next: HashMap<Vec<u32>, f64> = HashMap::new();
        for (m, &lc) in &cur {
            for (u, lw) in &atoms {
                let key: Vec<u32> = m.iter().zip(u).map(|(x, y)| x + y).collect();
                let v = lc + lw;
                next.entry(key)
                    .and_modify(|acc| *acc = log_add(*acc, v))
                    .or_insert(v);
            }
        }
        cur = next;
    }
    let mut entries: Vec<LogEntry> = cur
        .into_iter()
        .map(|(m, ln_count)| LogEntry {
            m: CountVector(m),
            ln_count,
        })
        .collect();
    entries.sort_by(|a, b| a.m.cmp(&b.m));
    LogLatticeDistribution {
        n,
        d: s.d,
        p: s.p,
        lossy: true,
        entries,
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln x` for a big integer, accurate to double precision.
pub fn ln_biguint(x: &BigUint) -> f64 {
    if x.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = x.bits();
    if bits <= 1000 {
        return x.to_f64().expect("finite below 2^1000").ln();
    }
    let shift = bits - 64;
    (x >> shift).to_f64().expect("fits").ln() + shift as f64 * std::f64::consts::LN_2
}

#[derive(Serialize, Deserialize)]
struct LatticeEntryJson {
    m: Vec<u32>,
    count: String,
}

#[derive(Serialize, Deserialize)]
struct LatticeJson {
    n: u32,
    d: u32,
    p: PrimeModulus,
    entries: Vec<LatticeEntryJson>,
}

impl Serialize for LatticeDistribution {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        LatticeJson {
            n: self.n,
            d: self.d,
            p: self.p,
            entries: self
                .table
                .iter()
                .map(|(m, c)| LatticeEntryJson {
                    m: m.0.clone(),
                    count: c.to_string(),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for LatticeDistribution {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = LatticeJson::deserialize(d)?;
        let table = j
            .entries
            .into_iter()
            .map(|e| {
                e.count
                    .parse::<BigUint>()
                    .map(|c| (CountVector(e.m), c))
                    .map_err(D::Error::custom)
            })
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self {
            n: j.n,
            d: j.d,
            p: j.p,
            table,
        })
    }
}
