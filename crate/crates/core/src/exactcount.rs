//! Exact null-vector counts per class and the master sums built from them.
//!
//! For a vector `v` with class signature `sig`, the number of
//! configuration-model outcomes with `A v = 0` over F_p depends only on
//! `sig` and is read off the exact walk tables of [`crate::walkdist`].

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::confmodel::Mode;
use crate::error::{Error, Result};
use crate::gfcore::PrimeModulus;
use crate::walkdist::{build_support, compositions, multinomial, CountVector, LatticeDistribution};

/// Default cap on the number of pairing matrices enumerated for one class.
pub const DEFAULT_PAIRING_CAP: usize = 2_000_000;

/// Histogram `(n_0, …, n_{p−1})` of a vector in F_p^n.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassSignature(pub CountVector);

impl ClassSignature {
    pub fn new(counts: Vec<u32>, p: PrimeModulus) -> Result<Self> {
        if counts.len() != p.get() as usize {
            return Err(Error::Shape(format!(
                "class signature has {} entries, expected p = {p}",
                counts.len()
            )));
        }
        Ok(Self(CountVector(counts)))
    }

    pub fn n(&self) -> u32 {
        self.0.total() as u32
    }

    pub fn counts(&self) -> &[u32] {
        &self.0 .0
    }

    /// True for the class of the zero vector.
    pub fn is_zero_class(&self) -> bool {
        self.counts().iter().skip(1).all(|&c| c == 0)
    }

    /// Number of vectors in the class, `n! / ∏ n_j!`.
    pub fn class_size(&self) -> BigUint {
        multinomial(self.counts())
    }
}

/// Every signature with `Σ = n`, optionally without the zero-vector class.
pub fn all_signatures(n: u32, p: PrimeModulus, include_zero: bool) -> Vec<ClassSignature> {
    compositions(n, p.get() as usize)
        .into_iter()
        .map(|c| ClassSignature(CountVector(c)))
        .filter(|s| include_zero || !s.is_zero_class())
        .collect()
}

/// Symmetric `p×p` data matrix: even diagonal, row sums `d·n_i`, and
/// `Σ_j j·m_ij ≡ 0 (mod p)` on every row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingMatrix {
    pub p: usize,
    pub m: Vec<u32>,
    /// `∏_{i<j} m_ij! · ∏_i m_ii! / (2^{m_ii/2} (m_ii/2)!)`, as a decimal string.
    #[serde(with = "biguint_string")]
    pub weight: BigUint,
}

impl PairingMatrix {
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.m[i * self.p + j]
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.m[i * self.p..(i + 1) * self.p]
    }

    /// Checks the defining conditions against a signature.
    pub fn satisfies(&self, sig: &ClassSignature, d: u32) -> bool {
        let p = self.p;
        (0..p).all(|i| {
            let row = self.row(i);
            row.iter().map(|&x| x as u64).sum::<u64>() == (d * sig.counts()[i]) as u64
                && self.get(i, i).is_multiple_of(2)
                && CountVector(row.to_vec()).weighted_residue(p as u64) == 0
                && (0..p).all(|j| self.get(i, j) == self.get(j, i))
        })
    }
}

mod biguint_string {
    use num_bigint::BigUint;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&x.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// Reduced rational with positive denominator.
///
/// JSON: `{"num": "...", "den": "...", "approx": <f64>}`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExactRational(pub BigRational);

impl ExactRational {
    pub fn new(num: impl Into<BigInt>, den: impl Into<BigInt>) -> Result<Self> {
        let den = den.into();
        if den.is_zero() {
            return Err(Error::Domain("zero denominator".into()));
        }
        Ok(Self(BigRational::new(num.into(), den)))
    }

    pub fn from_integer(x: impl Into<BigInt>) -> Self {
        Self(BigRational::from_integer(x.into()))
    }

    pub fn zero() -> Self {
        Self(BigRational::zero())
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }
}

impl std::fmt::Display for ExactRational {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Serialize, Deserialize)]
struct RationalJson {
    num: String,
    den: String,
    #[serde(default, skip_deserializing)]
    approx: f64,
}

impl Serialize for ExactRational {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RationalJson {
            num: self.numer().to_string(),
            den: self.denom().to_string(),
            approx: self.to_f64(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ExactRational {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = RationalJson::deserialize(d)?;
        let num: BigInt = j.num.parse().map_err(D::Error::custom)?;
        let den: BigInt = j.den.parse().map_err(D::Error::custom)?;
        ExactRational::new(num, den).map_err(D::Error::custom)
    }
}

/// One class's contribution to a master sum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassTerm {
    pub sig: ClassSignature,
    /// Number of vectors in the class.
    #[serde(with = "biguint_string")]
    pub class_size: BigUint,
    /// Outcomes with `A v = 0` for one fixed `v` in the class.
    #[serde(with = "biguint_string")]
    pub count: BigUint,
}

/// Walk tables and factorials for a fixed `(d, p)` up to `n_max` steps.
#[derive(Debug, Clone)]
pub struct ExactCounter {
    d: u32,
    p: PrimeModulus,
    n_max: u32,
    walks: Vec<LatticeDistribution>,
    factorials: Vec<BigUint>,
    pairing_cap: usize,
}

impl ExactCounter {
    pub fn new(n_max: u32, d: u32, p: PrimeModulus) -> Self {
        let support = build_support(d, p);
        let walks = crate::walkdist::walk_distributions(&support, n_max);
        let top = (n_max * d) as usize;
        let mut factorials = Vec::with_capacity(top + 1);
        factorials.push(BigUint::one());
        for k in 1..=top {
            let next = &factorials[k - 1] * k;
            factorials.push(next);
        }
        Self {
            d,
            p,
            n_max,
            walks,
            factorials,
            pairing_cap: DEFAULT_PAIRING_CAP,
        }
    }

    pub fn with_pairing_cap(mut self, cap: usize) -> Self {
        self.pairing_cap = cap;
        self
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn p(&self) -> PrimeModulus {
        self.p
    }

    pub fn walk(&self, n: u32) -> &LatticeDistribution {
        &self.walks[n as usize]
    }

    pub fn factorial(&self, k: u32) -> &BigUint {
        &self.factorials[k as usize]
    }

    fn check_sig(&self, sig: &ClassSignature) -> Result<()> {
        if sig.counts().len() != self.p.get() as usize {
            return Err(Error::Shape(format!("signature length != p = {}", self.p)));
        }
        if sig.n() > self.n_max {
            return Err(Error::InvalidParams(format!(
                "n = {} exceeds the tables built for n <= {}",
                sig.n(),
                self.n_max
            )));
        }
        Ok(())
    }

    /// `∏_j (d n_j)! · N_n(d·sig)`.
    pub fn directed(&self, sig: &ClassSignature) -> Result<BigUint> {
        self.check_sig(sig)?;
        let target: Vec<u32> = sig.counts().iter().map(|&c| c * self.d).collect();
        let walk = self.walk(sig.n()).count(&target);
        if walk.is_zero() {
            return Ok(walk);
        }
        Ok(target
            .iter()
            .fold(walk, |acc, &t| acc * self.factorial(t)))
    }

    /// All data matrices for `sig`, by row-wise backtracking over the upper
    /// triangle. Work is bounded by the number of partial fillings that
    /// respect the row-sum caps, roughly `∏_{i<j} min(d n_i, d n_j)`.
    pub fn pairing_matrices(&self, sig: &ClassSignature) -> Result<Vec<PairingMatrix>> {
        self.check_sig(sig)?;
        let p = self.p.get() as usize;
        let targets: Vec<u32> = sig.counts().iter().map(|&c| c * self.d).collect();
        let mut st = PairingSearch {
            p,
            targets: &targets,
            m: vec![0; p * p],
            used: vec![0; p],
            out: Vec::new(),
            visited: 0,
            cap: self.pairing_cap,
        };
        st.row(0)?;
        Ok(st
            .out
            .into_iter()
            .map(|m| PairingMatrix {
                weight: self.pairing_weight(&m, p),
                p,
                m,
            })
            .collect())
    }

    fn pairing_weight(&self, m: &[u32], p: usize) -> BigUint {
        let mut w = BigUint::one();
        for i in 0..p {
            for j in i + 1..p {
                w *= self.factorial(m[i * p + j]);
            }
            let mii = m[i * p + i];
            // m!/(2^{m/2}(m/2)!) = (m-1)!!
            w *= (1..mii).step_by(2).fold(BigUint::one(), |acc, k| acc * k);
        }
        w
    }

    /// `Σ_{M} weight(M) · ∏_i N_{n_i}(row_i(M))`.
    pub fn undirected(&self, sig: &ClassSignature) -> Result<BigUint> {
        self.check_sig(sig)?;
        if (sig.n() * self.d) % 2 == 1 {
            return Err(Error::InvalidParams(format!(
                "undirected counts need d*n even (d={}, n={})",
                self.d,
                sig.n()
            )));
        }
        let mut total = BigUint::zero();
        for pm in self.pairing_matrices(sig)? {
            let mut term = pm.weight.clone();
            for (i, &ni) in sig.counts().iter().enumerate() {
                term *= self.walk(ni).count(pm.row(i));
                if term.is_zero() {
                    break;
                }
            }
            total += term;
        }
        Ok(total)
    }

    pub fn count(&self, sig: &ClassSignature, mode: Mode) -> Result<BigUint> {
        match mode {
            Mode::Directed => self.directed(sig),
            Mode::Undirected => self.undirected(sig),
        }
    }

    /// `|M_{n,d}| = (nd)!` or `|G_{n,d}| = (nd − 1)!!`.
    pub fn model_size(&self, n: u32, mode: Mode) -> BigUint {
        let nd = n * self.d;
        match mode {
            Mode::Directed => self.factorial(nd).clone(),
            Mode::Undirected => (1..nd).step_by(2).fold(BigUint::one(), |acc, k| acc * k),
        }
    }

    /// Per-class terms of the master sum over every nonzero class.
    pub fn class_terms(&self, n: u32, mode: Mode) -> Result<Vec<ClassTerm>> {
        all_signatures(n, self.p, false)
            .into_iter()
            .map(|sig| {
                Ok(ClassTerm {
                    class_size: sig.class_size(),
                    count: self.count(&sig, mode)?,
                    sig,
                })
            })
            .collect()
    }

    /// Expected number of nonzero null vectors of `A` over F_p.
    pub fn master_sum(&self, n: u32, mode: Mode) -> Result<ExactRational> {
        if mode == Mode::Undirected && (n * self.d) % 2 == 1 {
            return Err(Error::InvalidParams(format!(
                "undirected mode needs d*n even (d={}, n={n})",
                self.d
            )));
        }
        let num: BigUint = self
            .class_terms(n, mode)?
            .iter()
            .map(|t| &t.class_size * &t.count)
            .sum();
        ExactRational::new(BigInt::from(num), BigInt::from(self.model_size(n, mode)))
    }
}

struct PairingSearch<'a> {
    p: usize,
    targets: &'a [u32],
    m: Vec<u32>,
    /// Row sums committed so far.
    used: Vec<u32>,
    out: Vec<Vec<u32>>,
    visited: usize,
    cap: usize,
}

impl PairingSearch<'_> {
    fn bump(&mut self) -> Result<()> {
        self.visited += 1;
        if self.visited > self.cap {
            return Err(Error::Budget {
                what: "pairing-matrix enumeration".into(),
                required: self.visited as u128,
                limit: self.cap as u128,
            });
        }
        Ok(())
    }

    /// Fills row `i`: off-diagonal entries `m_ij` for `j > i`, then the
    /// diagonal from the remaining row sum.
    fn row(&mut self, i: usize) -> Result<()> {
        if i == self.p {
            self.out.push(self.m.clone());
            return Ok(());
        }
        self.cell(i, i + 1)
    }

    fn cell(&mut self, i: usize, j: usize) -> Result<()> {
        let p = self.p;
        if j == p {
            let rest = self.targets[i] - self.used[i];
            if rest % 2 == 1 {
                return Ok(());
            }
            self.m[i * p + i] = rest;
            let residue = (0..p).fold(0u64, |acc, k| {
                (acc + (k as u64) * self.m[i * p + k] as u64) % p as u64
            });
            if residue == 0 {
                self.bump()?;
                self.used[i] += rest;
                self.row(i + 1)?;
                self.used[i] -= rest;
            }
            self.m[i * p + i] = 0;
            return Ok(());
        }
        let room_i = self.targets[i] - self.used[i];
        let room_j = self.targets[j] - self.used[j];
        for x in 0..=room_i.min(room_j) {
            self.m[i * p + j] = x;
            self.m[j * p + i] = x;
            self.used[i] += x;
            self.used[j] += x;
            let r = self.cell(i, j + 1);
            self.used[i] -= x;
            self.used[j] -= x;
            r?;
        }
        self.m[i * p + j] = 0;
        self.m[j * p + i] = 0;
        Ok(())
    }
}

fn counter_for(sig: &ClassSignature, d: u32, p: PrimeModulus) -> ExactCounter {
    ExactCounter::new(sig.n(), d, p)
}

pub fn count_graphs_directed(sig: &ClassSignature, d: u32, p: PrimeModulus) -> Result<BigUint> {
    counter_for(sig, d, p).directed(sig)
}

pub fn count_graphs_undirected(sig: &ClassSignature, d: u32, p: PrimeModulus) -> Result<BigUint> {
    counter_for(sig, d, p).undirected(sig)
}

pub fn enumerate_pairing_matrices(
    sig: &ClassSignature,
    d: u32,
    p: PrimeModulus,
) -> Result<Vec<PairingMatrix>> {
    counter_for(sig, d, p).pairing_matrices(sig)
}

pub fn master_sum_directed(n: u32, d: u32, p: PrimeModulus) -> ExactRational {
    ExactCounter::new(n, d, p)
        .master_sum(n, Mode::Directed)
        .expect("directed master sums have no failure mode")
}

pub fn master_sum_undirected(n: u32, d: u32, p: PrimeModulus) -> Result<ExactRational> {
    ExactCounter::new(n, d, p).master_sum(n, Mode::Undirected)
}

/// `sum / (p − 1)`, an upper bound on the probability of singularity over
/// F_p; `vacuous` when it is at least 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingularityBound {
    pub bound: ExactRational,
    pub vacuous: bool,
}

pub fn singularity_bound_from_master(sum: &ExactRational, p: PrimeModulus) -> SingularityBound {
    let bound = ExactRational(&sum.0 / BigRational::from_integer(BigInt::from(p.get() - 1)));
    let vacuous = bound.0 >= BigRational::one();
    SingularityBound { bound, vacuous }
}
