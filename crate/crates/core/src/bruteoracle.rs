//! Exhaustive enumeration of the configuration model at tiny sizes.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Zero};
use serde::Serialize;

use crate::confmodel::{fiber_adjacency, Graph, GraphParams, Mode};
use crate::error::{Error, Result};
use crate::exactcount::{ClassSignature, ExactCounter, ExactRational};
use crate::gfcore::PrimeModulus;
use crate::walkdist::{multinomial, phi};

/// Cap on the number of points `nd` that may be enumerated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OracleBudget {
    pub max_points_directed: usize,
    pub max_points_undirected: usize,
}

impl Default for OracleBudget {
    /// `9! = 362880` permutations, `11!! = 10395` pairings.
    fn default() -> Self {
        Self {
            max_points_directed: 9,
            max_points_undirected: 12,
        }
    }
}

impl OracleBudget {
    fn check(&self, params: GraphParams) -> Result<()> {
        let (limit, what, size) = match params.mode() {
            Mode::Directed => (
                self.max_points_directed,
                "permutation enumeration",
                factorial_u128(params.points()),
            ),
            Mode::Undirected => (
                self.max_points_undirected,
                "pairing enumeration",
                double_factorial_u128(params.points()),
            ),
        };
        if params.points() > limit {
            let cap = match params.mode() {
                Mode::Directed => factorial_u128(limit),
                Mode::Undirected => double_factorial_u128(limit),
            };
            return Err(Error::Budget {
                what: format!("{what} at nd = {} (limit nd <= {limit})", params.points()),
                required: size,
                limit: cap,
            });
        }
        Ok(())
    }
}

fn factorial_u128(k: usize) -> u128 {
    (1..=k as u128).try_fold(1u128, |a, i| a.checked_mul(i)).unwrap_or(u128::MAX)
}

/// `(k − 1)!!`, the number of perfect matchings of `k` points.
fn double_factorial_u128(k: usize) -> u128 {
    (1..k as u128)
        .step_by(2)
        .try_fold(1u128, |a, i| a.checked_mul(i))
        .unwrap_or(u128::MAX)
}

/// All permutations of `0..len` in lexicographic order.
pub struct Permutations {
    cur: Vec<u32>,
    done: bool,
}

impl Permutations {
    pub fn new(len: usize) -> Self {
        Self {
            cur: (0..len as u32).collect(),
            done: false,
        }
    }

    /// Advances in place; false once the last permutation was passed.
    pub fn advance(&mut self) -> bool {
        let a = &mut self.cur;
        let Some(i) = (1..a.len()).rev().find(|&i| a[i - 1] < a[i]) else {
            self.done = true;
            return false;
        };
        let j = (i..a.len()).rev().find(|&j| a[j] > a[i - 1]).expect("successor exists");
        a.swap(i - 1, j);
        a[i..].reverse();
        true
    }

    pub fn current(&self) -> &[u32] {
        &self.cur
    }
}

impl Iterator for Permutations {
    type Item = Vec<u32>;
    fn next(&mut self) -> Option<Vec<u32>> {
        if self.done {
            return None;
        }
        let out = self.cur.clone();
        self.advance();
        Some(out)
    }
}

/// All perfect matchings of `0..len` as partner maps. The state is a
/// mixed-radix counter: digit `k` picks the partner of the smallest point
/// still unmatched after `k` pairs, among the `len − 2k − 1` candidates.
pub struct Pairings {
    digits: Vec<usize>,
    len: usize,
    done: bool,
}

impl Pairings {
    pub fn new(len: usize) -> Self {
        assert!(len.is_multiple_of(2), "pairings need an even number of points");
        Self {
            digits: vec![0; len / 2],
            len,
            done: false,
        }
    }

    fn decode(&self) -> Vec<u32> {
        let mut free: Vec<u32> = (0..self.len as u32).collect();
        let mut partner = vec![0; self.len];
        for &dgt in &self.digits {
            let a = free.remove(0);
            let b = free.remove(dgt);
            partner[a as usize] = b;
            partner[b as usize] = a;
        }
        partner
    }

    fn increment(&mut self) {
        for k in (0..self.digits.len()).rev() {
            let radix = self.len - 2 * k - 1;
            self.digits[k] += 1;
            if self.digits[k] < radix {
                return;
            }
            self.digits[k] = 0;
        }
        self.done = true;
    }
}

impl Iterator for Pairings {
    type Item = Vec<u32>;
    fn next(&mut self) -> Option<Vec<u32>> {
        if self.done {
            return None;
        }
        let out = self.decode();
        self.increment();
        Some(out)
    }
}

/// Every permutation outcome of the `nd` points, as graphs.
pub fn enumerate_directed(
    n: usize,
    d: usize,
    budget: OracleBudget,
) -> Result<impl Iterator<Item = Graph>> {
    let params = GraphParams::directed(n, d)?;
    budget.check(params)?;
    Ok(Permutations::new(params.points())
        .map(move |w| Graph::from_witness(params, w, None).expect("valid permutation")))
}

/// Every pairing outcome of the `nd` points, as graphs.
pub fn enumerate_undirected(
    n: usize,
    d: usize,
    budget: OracleBudget,
) -> Result<impl Iterator<Item = Graph>> {
    let params = GraphParams::undirected(n, d)?;
    budget.check(params)?;
    Ok(Pairings::new(params.points())
        .map(move |w| Graph::from_witness(params, w, None).expect("valid pairing")))
}

/// Calls `f` with the adjacency of every outcome, reusing one buffer.
fn for_each_adjacency(params: GraphParams, mut f: impl FnMut(&[u32])) {
    let (n, d) = (params.n(), params.d());
    let mut adj = vec![0u32; n * n];
    match params.mode() {
        Mode::Directed => {
            let mut perms = Permutations::new(params.points());
            loop {
                fiber_adjacency(n, d, perms.current(), &mut adj);
                f(&adj);
                if !perms.advance() {
                    break;
                }
            }
        }
        Mode::Undirected => {
            for w in Pairings::new(params.points()) {
                fiber_adjacency(n, d, &w, &mut adj);
                f(&adj);
            }
        }
    }
}

/// All vectors of F_p^n in base-p counting order, entry 0 least significant.
fn all_vectors(n: usize, p: u64) -> Vec<Vec<u64>> {
    let total = p.pow(n as u32);
    (0..total)
        .map(|mut code| {
            (0..n)
                .map(|_| {
                    let x = code % p;
                    code /= p;
                    x
                })
                .collect()
        })
        .collect()
}

fn is_null(adj: &[u32], n: usize, v: &[u64], p: u64) -> bool {
    adj.chunks_exact(n)
        .all(|row| row.iter().zip(v).map(|(&a, &x)| a as u64 * x).sum::<u64>() % p == 0)
}

/// `|{G : A(G) v = 0}|` for every `v ∈ F_p^n`, by full enumeration.
pub fn null_tallies(
    n: usize,
    d: usize,
    p: PrimeModulus,
    mode: Mode,
    budget: OracleBudget,
) -> Result<(Vec<Vec<u64>>, Vec<u64>, u64)> {
    let params = GraphParams::new(n, d, mode)?;
    budget.check(params)?;
    let vectors = all_vectors(n, p.get());
    let mut tally = vec![0u64; vectors.len()];
    let mut outcomes = 0u64;
    for_each_adjacency(params, |adj| {
        outcomes += 1;
        for (t, v) in tally.iter_mut().zip(&vectors) {
            if is_null(adj, n, v, p.get()) {
                *t += 1;
            }
        }
    });
    Ok((vectors, tally, outcomes))
}

/// Number of permutations of the `nd` points inducing a given directed
/// adjacency matrix: `(d!)^{2n} / ∏ A_kl!`.
pub fn permutation_weight(adj: &[u32], n: usize, d: usize) -> BigUint {
    let fact = |k: u32| (1..=k).fold(BigUint::one(), |a, i| a * i);
    let num = fact(d as u32).pow(2 * n as u32);
    let den = adj.iter().fold(BigUint::one(), |a, &x| a * fact(x));
    num / den
}

/// Every `n×n` nonnegative integer matrix with all row and column sums
/// equal to `d`, in row-major lexicographic order.
pub fn directed_adjacency_matrices(n: usize, d: usize) -> Vec<Vec<u32>> {
    fn rec(
        n: usize,
        d: u32,
        k: usize,
        m: &mut Vec<u32>,
        col: &mut Vec<u32>,
        out: &mut Vec<Vec<u32>>,
    ) {
        if k == n * n {
            if col.iter().all(|&c| c == d) {
                out.push(m.clone());
            }
            return;
        }
        let (i, j) = (k / n, k % n);
        let row_used: u32 = m[i * n..i * n + j].iter().sum();
        let room = (d - row_used).min(d - col[j]);
        let range = if j == n - 1 {
            // the last entry of a row is forced
            let need = d - row_used;
            if need > room {
                return;
            }
            need..=need
        } else {
            0..=room
        };
        for x in range {
            m[k] = x;
            col[j] += x;
            rec(n, d, k + 1, m, col, out);
            col[j] -= x;
        }
        m[k] = 0;
    }
    let mut out = Vec::new();
    rec(n, d as u32, 0, &mut vec![0; n * n], &mut vec![0; n], &mut out);
    out
}

/// Directed null tallies from the matrix-level enumeration, weighting each
/// adjacency matrix by its number of inducing permutations.
pub fn null_tallies_by_matrix(n: usize, d: usize, p: PrimeModulus) -> (Vec<Vec<u64>>, Vec<BigUint>, BigUint) {
    let vectors = all_vectors(n, p.get());
    let mut tally = vec![BigUint::zero(); vectors.len()];
    let mut total = BigUint::zero();
    for adj in directed_adjacency_matrices(n, d) {
        let w = permutation_weight(&adj, n, d);
        for (t, v) in tally.iter_mut().zip(&vectors) {
            if is_null(&adj, n, v, p.get()) {
                *t += &w;
            }
        }
        total += w;
    }
    (vectors, tally, total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassReport {
    pub sig: ClassSignature,
    pub vectors: u64,
    /// Count predicted by the walk identity, as a decimal string.
    pub expected: String,
    /// Smallest and largest brute-force tally over the vectors of the class.
    pub tally_min: u64,
    pub tally_max: u64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mismatch {
    pub v: Vec<u64>,
    pub expected: String,
    pub got: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificationReport {
    pub n: usize,
    pub d: usize,
    pub p: PrimeModulus,
    pub mode: Mode,
    pub outcomes: u64,
    pub vectors_checked: usize,
    pub classes: Vec<ClassReport>,
    pub master_sum_exact: ExactRational,
    pub master_sum_brute: ExactRational,
    pub failures: Vec<Mismatch>,
    pub pass: bool,
}

impl CertificationReport {
    /// Turns a failed report into a certification error naming the first
    /// mismatch.
    pub fn into_result(self) -> Result<Self> {
        if self.pass {
            return Ok(self);
        }
        Err(Error::Certification(match self.failures.first() {
            Some(m) => format!(
                "v = {:?}: expected {}, got {} ({} mismatches)",
                m.v,
                m.expected,
                m.got,
                self.failures.len()
            ),
            None => format!(
                "master sum {} != brute force {}",
                self.master_sum_exact, self.master_sum_brute
            ),
        }))
    }
}

/// Checks the class-count identity for every `v ∈ F_p^n` against full
/// enumeration, plus the resulting master sum.
pub fn certify_identities(
    n: usize,
    d: usize,
    p: PrimeModulus,
    mode: Mode,
    budget: OracleBudget,
) -> Result<CertificationReport> {
    let (vectors, tally, outcomes) = null_tallies(n, d, p, mode, budget)?;
    let counter = ExactCounter::new(n as u32, d as u32, p);
    let mut classes: BTreeMap<ClassSignature, ClassReport> = BTreeMap::new();
    let mut expected_cache: BTreeMap<ClassSignature, BigUint> = BTreeMap::new();
    let mut failures = Vec::new();
    let mut brute_sum = BigUint::zero();
    for (v, &got) in vectors.iter().zip(&tally) {
        let sig = ClassSignature(phi(v, p)?);
        let expected = match expected_cache.get(&sig) {
            Some(e) => e.clone(),
            None => {
                let e = counter.count(&sig, mode)?;
                expected_cache.insert(sig.clone(), e.clone());
                e
            }
        };
        let ok = expected == BigUint::from(got);
        if !ok {
            failures.push(Mismatch {
                v: v.clone(),
                expected: expected.to_string(),
                got,
            });
        }
        if !sig.is_zero_class() {
            brute_sum += got;
        }
        let entry = classes.entry(sig.clone()).or_insert_with(|| ClassReport {
            vectors: 0,
            expected: expected.to_string(),
            tally_min: got,
            tally_max: got,
            pass: true,
            sig,
        });
        entry.vectors += 1;
        entry.tally_min = entry.tally_min.min(got);
        entry.tally_max = entry.tally_max.max(got);
        entry.pass &= ok;
    }
    for c in classes.values() {
        debug_assert_eq!(BigUint::from(c.vectors), multinomial(c.sig.counts()));
    }
    let master_sum_exact = counter.master_sum(n as u32, mode)?;
    let master_sum_brute = ExactRational::new(BigInt::from(brute_sum), BigInt::from(outcomes))?;
    let pass = failures.is_empty() && master_sum_exact == master_sum_brute;
    Ok(CertificationReport {
        n,
        d,
        p,
        mode,
        outcomes,
        vectors_checked: vectors.len(),
        classes: classes.into_values().collect(),
        master_sum_exact,
        master_sum_brute,
        failures,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pm(p: u64) -> PrimeModulus {
        PrimeModulus::new(p).unwrap()
    }

    #[test]
    fn permutation_iterator_is_lexicographic_and_complete() {
        let all: Vec<Vec<u32>> = Permutations::new(4).collect();
        assert_eq!(all.len(), 24);
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(Permutations::new(0).count(), 1);
    }

    #[test]
    fn pairing_iterator_is_complete_and_distinct() {
        for (len, count) in [(2, 1), (4, 3), (6, 15), (8, 105), (12, 10395)] {
            let all: std::collections::HashSet<Vec<u32>> = Pairings::new(len).collect();
            assert_eq!(all.len(), count);
            for w in &all {
                assert!(w.iter().enumerate().all(|(i, &j)| j as usize != i && w[j as usize] as usize == i));
            }
        }
    }

    #[test]
    fn directed_enumeration_small() {
        let gs: Vec<Graph> = enumerate_directed(1, 3, OracleBudget::default()).unwrap().collect();
        assert_eq!(gs.len(), 6);
        assert!(gs.iter().all(|g| g.adjacency() == [3]));
        let mut diag3 = 0;
        let mut total = 0;
        for g in enumerate_directed(2, 3, OracleBudget::default()).unwrap() {
            total += 1;
            if g.adjacency() == [3, 0, 0, 3] {
                diag3 += 1;
            }
        }
        assert_eq!(total, 720);
        assert_eq!(diag3, 36);
    }

    #[test]
    fn undirected_enumeration_small() {
        assert_eq!(enumerate_undirected(2, 3, OracleBudget::default()).unwrap().count(), 15);
        let mut n = 0;
        for g in enumerate_undirected(4, 3, OracleBudget::default()).unwrap() {
            assert!(g.check_invariants());
            n += 1;
        }
        assert_eq!(n, 10395);
    }

    #[test]
    fn budget_refusal_names_the_size() {
        let err = enumerate_directed(5, 2, OracleBudget::default()).err().unwrap();
        match err {
            Error::Budget { required, limit, .. } => {
                assert_eq!(required, 3_628_800);
                assert_eq!(limit, 362_880);
            }
            e => panic!("unexpected {e:?}"),
        }
        assert!(enumerate_undirected(7, 2, OracleBudget::default()).is_err());
    }

    #[test]
    fn matrix_weights_reproduce_permutation_counts() {
        for (n, d) in [(1, 3), (2, 3), (3, 2), (2, 4), (3, 3)] {
            let params = GraphParams::directed(n, d).unwrap();
            let mut by_perm: BTreeMap<Vec<u32>, u64> = BTreeMap::new();
            for_each_adjacency(params, |adj| *by_perm.entry(adj.to_vec()).or_default() += 1);
            let by_matrix: BTreeMap<Vec<u32>, u64> = directed_adjacency_matrices(n, d)
                .into_iter()
                .map(|a| {
                    let w = permutation_weight(&a, n, d);
                    (a, w.try_into().unwrap())
                })
                .collect();
            assert_eq!(by_perm, by_matrix, "n={n} d={d}");
        }
    }

    #[test]
    fn certify_small_cases() {
        let r = certify_identities(2, 3, pm(3), Mode::Directed, OracleBudget::default()).unwrap();
        assert!(r.pass);
        assert_eq!(r.vectors_checked, 9);
        let c = r.classes.iter().find(|c| c.sig.counts() == [0, 1, 1]).unwrap();
        assert_eq!(c.expected, "72");
        let r = certify_identities(2, 3, pm(2), Mode::Undirected, OracleBudget::default()).unwrap();
        assert!(r.pass);
        assert!(r.classes.iter().filter(|c| !c.sig.is_zero_class()).all(|c| c.tally_max == 0));
    }

    #[test]
    fn certify_reports_class_independence() {
        let r = certify_identities(3, 2, pm(3), Mode::Directed, OracleBudget::default()).unwrap();
        assert!(r.pass);
        assert!(r.classes.iter().all(|c| c.tally_min == c.tally_max));
        assert_eq!(r.outcomes, 720);
    }

    #[test]
    fn matrix_oracle_extends_past_permutation_budget() {
        // n = 4, d = 3 is 12! permutations; the weighted matrix sum is cheap
        let p = pm(2);
        let (vectors, tally, total) = null_tallies_by_matrix(4, 3, p);
        assert_eq!(total, (1..=12u32).fold(BigUint::one(), |a, i| a * i));
        let counter = ExactCounter::new(4, 3, p);
        for (v, t) in vectors.iter().zip(&tally) {
            let sig = ClassSignature(phi(v, p).unwrap());
            assert_eq!(&counter.directed(&sig).unwrap(), t, "v = {v:?}");
        }
        assert_eq!(counter.master_sum(4, Mode::Directed).unwrap(), ExactRational::new(54, 77).unwrap());
    }
}
