//! Configuration-model samplers for random d-regular multigraphs.
//!
//! Vertex `k` owns the fiber of points `k*d .. (k+1)*d`. A directed graph
//! comes from a permutation of the `nd` points, an undirected one from a
//! perfect matching. Loops add 2 to the diagonal so that every row sums to
//! `d` in both modes.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gfcore::{FpMatrix, IntMatrix, PrimeModulus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Directed,
    Undirected,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "directed" => Ok(Mode::Directed),
            "undirected" => Ok(Mode::Undirected),
            _ => Err(Error::Parse(format!("unknown mode {s:?}"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Directed => "directed",
            Mode::Undirected => "undirected",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GraphParams {
    n: usize,
    d: usize,
    mode: Mode,
}

impl GraphParams {
    pub fn new(n: usize, d: usize, mode: Mode) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidParams(format!("need n, d >= 1 (n={n}, d={d})")));
        }
        if n.checked_mul(d).is_none_or(|nd| nd > u32::MAX as usize) {
            return Err(Error::InvalidParams(format!("n*d too large (n={n}, d={d})")));
        }
        if mode == Mode::Undirected && (n * d) % 2 == 1 {
            return Err(Error::InvalidParams(format!(
                "undirected mode needs d*n even (n={n}, d={d})"
            )));
        }
        Ok(Self { n, d, mode })
    }

    pub fn directed(n: usize, d: usize) -> Result<Self> {
        Self::new(n, d, Mode::Directed)
    }

    pub fn undirected(n: usize, d: usize) -> Result<Self> {
        Self::new(n, d, Mode::Undirected)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn points(&self) -> usize {
        self.n * self.d
    }
}

/// A sampled multigraph with the permutation or pairing that produced it.
///
/// For undirected graphs the witness is the partner map: `witness[i]` is the
/// point matched with `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    params: GraphParams,
    adjacency: Vec<u32>,
    witness: Vec<u32>,
    seed: Option<u64>,
}

impl Graph {
    /// Rebuilds a graph from its witness, validating it.
    pub fn from_witness(params: GraphParams, witness: Vec<u32>, seed: Option<u64>) -> Result<Self> {
        let np = params.points();
        if witness.len() != np {
            return Err(Error::Shape(format!("witness has {} points, expected {np}", witness.len())));
        }
        let mut seen = vec![false; np];
        for &w in &witness {
            let w = w as usize;
            if w >= np || std::mem::replace(&mut seen[w], true) {
                return Err(Error::Domain("witness is not a permutation".into()));
            }
        }
        if params.mode == Mode::Undirected
            && witness
                .iter()
                .enumerate()
                .any(|(i, &j)| j as usize == i || witness[j as usize] as usize != i)
        {
            return Err(Error::Domain("witness is not a perfect matching".into()));
        }
        let mut adjacency = vec![0; params.n * params.n];
        fiber_adjacency(params.n, params.d, &witness, &mut adjacency);
        Ok(Self {
            params,
            adjacency,
            witness,
            seed,
        })
    }

    pub fn params(&self) -> GraphParams {
        self.params
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn d(&self) -> usize {
        self.params.d
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn witness(&self) -> &[u32] {
        &self.witness
    }

    /// Row-major `n*n` adjacency counts.
    pub fn adjacency(&self) -> &[u32] {
        &self.adjacency
    }

    pub fn entry(&self, k: usize, l: usize) -> u32 {
        self.adjacency[k * self.params.n + l]
    }

    pub fn row(&self, k: usize) -> &[u32] {
        let n = self.params.n;
        &self.adjacency[k * n..(k + 1) * n]
    }

    pub fn adjacency_rows(&self) -> Vec<Vec<u32>> {
        self.adjacency.chunks(self.params.n).map(<[u32]>::to_vec).collect()
    }

    pub fn to_int_matrix(&self) -> IntMatrix {
        IntMatrix::from_counts(self.n(), self.n(), &self.adjacency)
    }

    pub fn to_fp(&self, p: PrimeModulus) -> FpMatrix {
        FpMatrix::from_counts(self.n(), self.n(), &self.adjacency, p)
    }

    /// Checks the row/column sum, symmetry and loop-parity invariants.
    pub fn check_invariants(&self) -> bool {
        let n = self.n();
        let d = self.d() as u32;
        let rows_ok = (0..n).all(|k| self.row(k).iter().sum::<u32>() == d);
        match self.params.mode {
            Mode::Directed => rows_ok && (0..n).all(|l| (0..n).map(|k| self.entry(k, l)).sum::<u32>() == d),
            Mode::Undirected => {
                rows_ok
                    && (0..n).all(|k| self.entry(k, k).is_multiple_of(2))
                    && (0..n).all(|k| (0..k).all(|l| self.entry(k, l) == self.entry(l, k)))
            }
        }
    }
}

/// Fiber collapse: point `i` in fiber `i / d` joined to `w[i]` in fiber
/// `w[i] / d`. For a partner map each pair is visited from both ends, so a
/// loop lands twice on the diagonal and a cross edge once on each side.
pub(crate) fn fiber_adjacency(n: usize, d: usize, w: &[u32], out: &mut [u32]) {
    out.fill(0);
    for (i, &j) in w.iter().enumerate() {
        out[(i / d) * n + j as usize / d] += 1;
    }
}

/// Splits a master seed into independent per-trial seeds (SplitMix64).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Reusable buffers for sampling without allocation in hot loops.
pub(crate) struct Sampler {
    params: GraphParams,
    pub(crate) points: Vec<u32>,
    pub(crate) adjacency: Vec<u32>,
}

impl Sampler {
    pub(crate) fn new(params: GraphParams) -> Self {
        Self {
            params,
            points: (0..params.points() as u32).collect(),
            adjacency: vec![0; params.n * params.n],
        }
    }

    /// Draws into the buffers; `points` then holds the witness.
    pub(crate) fn draw(&mut self, seed: u64) {
        let mut rng = rng_from_seed(seed);
        let GraphParams { n, d, mode } = self.params;
        for (i, x) in self.points.iter_mut().enumerate() {
            *x = i as u32;
        }
        self.points.shuffle(&mut rng);
        if mode == Mode::Undirected {
            // consecutive entries of the shuffle form the pairs
            let order = std::mem::take(&mut self.points);
            let mut partner = vec![0; order.len()];
            for pair in order.chunks_exact(2) {
                partner[pair[0] as usize] = pair[1];
                partner[pair[1] as usize] = pair[0];
            }
            self.points = partner;
        }
        fiber_adjacency(n, d, &self.points, &mut self.adjacency);
    }

    pub(crate) fn to_graph(&self, seed: u64) -> Graph {
        Graph {
            params: self.params,
            adjacency: self.adjacency.clone(),
            witness: self.points.clone(),
            seed: Some(seed),
        }
    }
}

pub fn sample(params: GraphParams, seed: u64) -> Graph {
    let mut s = Sampler::new(params);
    s.draw(seed);
    s.to_graph(seed)
}

/// Uniform permutation of the `nd` points (Fisher-Yates).
pub fn sample_directed(params: GraphParams, seed: u64) -> Result<Graph> {
    if params.mode != Mode::Directed {
        return Err(Error::InvalidParams("sample_directed needs directed mode".into()));
    }
    Ok(sample(params, seed))
}

/// Uniform perfect matching of the `nd` points: shuffle, then pair
/// consecutive entries.
pub fn sample_undirected(params: GraphParams, seed: u64) -> Result<Graph> {
    if params.mode != Mode::Undirected {
        return Err(Error::InvalidParams("sample_undirected needs undirected mode".into()));
    }
    Ok(sample(params, seed))
}

pub(crate) fn has_duplicate_row(n: usize, adjacency: &[u32]) -> bool {
    let mut seen = HashSet::with_capacity(n);
    adjacency.chunks_exact(n).any(|row| !seen.insert(row))
}

pub(crate) fn has_duplicate_column(n: usize, adjacency: &[u32]) -> bool {
    let mut seen = HashSet::with_capacity(n);
    (0..n).any(|l| !seen.insert((0..n).map(|k| adjacency[k * n + l]).collect::<Vec<_>>()))
}

/// True iff two distinct rows of the adjacency matrix coincide, which forces
/// integer singularity.
pub fn duplicate_row_detect(g: &Graph) -> bool {
    has_duplicate_row(g.n(), &g.adjacency)
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    n: usize,
    d: usize,
    mode: Mode,
    adjacency: Vec<Vec<u32>>,
    witness: Vec<u32>,
    seed: Option<u64>,
}

impl Serialize for Graph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GraphJson {
            n: self.n(),
            d: self.d(),
            mode: self.params.mode,
            adjacency: self.adjacency_rows(),
            witness: self.witness.clone(),
            seed: self.seed,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Graph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = GraphJson::deserialize(d)?;
        let params = GraphParams::new(j.n, j.d, j.mode).map_err(D::Error::custom)?;
        let g = Graph::from_witness(params, j.witness, j.seed).map_err(D::Error::custom)?;
        if g.adjacency_rows() != j.adjacency {
            return Err(D::Error::custom("adjacency does not match witness"));
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gfcore::rank_integer;
    use std::collections::HashMap;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn permutations(k: usize) -> Vec<Vec<u32>> {
        if k == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(k - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, (k - 1) as u32);
                out.push(q);
            }
        }
        out
    }

    fn chi_square_ok(observed: &HashMap<Vec<u32>, u64>, expected: &HashMap<Vec<u32>, f64>) -> bool {
        let stat: f64 = expected
            .iter()
            .map(|(k, &e)| {
                let o = *observed.get(k).unwrap_or(&0) as f64;
                (o - e).powi(2) / e
            })
            .sum();
        let df = (expected.len() - 1) as f64;
        stat < ChiSquared::new(df).unwrap().inverse_cdf(0.9999)
    }

    #[test]
    fn single_vertex_is_all_loops() {
        let g = sample_directed(GraphParams::directed(1, 3).unwrap(), 42).unwrap();
        assert_eq!(g.adjacency_rows(), vec![vec![3]]);
        let u = sample_undirected(GraphParams::undirected(2, 1).unwrap(), 1).unwrap();
        assert_eq!(u.adjacency_rows(), vec![vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn odd_point_count_rejected() {
        assert!(matches!(GraphParams::undirected(3, 3), Err(Error::InvalidParams(_))));
        assert!(GraphParams::directed(3, 3).is_ok());
    }

    #[test]
    fn invariants_hold_across_seeds() {
        for seed in 0..200 {
            for (n, d) in [(5, 3), (7, 4), (10, 3)] {
                let g = sample(GraphParams::directed(n, d).unwrap(), seed);
                assert!(g.check_invariants());
                if n * d % 2 == 0 {
                    let u = sample(GraphParams::undirected(n, d).unwrap(), seed);
                    assert!(u.check_invariants());
                }
            }
        }
    }

    #[test]
    fn same_seed_same_graph() {
        let p = GraphParams::undirected(20, 3).unwrap();
        assert_eq!(sample(p, 9), sample(p, 9));
        assert_ne!(sample(p, 9).witness(), sample(p, 10).witness());
    }

    #[test]
    fn directed_n2_matches_permutation_weights() {
        let params = GraphParams::directed(2, 3).unwrap();
        let mut exact: HashMap<Vec<u32>, f64> = HashMap::new();
        let mut buf = vec![0; 4];
        for p in permutations(6) {
            fiber_adjacency(2, 3, &p, &mut buf);
            *exact.entry(buf.clone()).or_default() += 1.0;
        }
        assert_eq!(exact.len(), 4);
        assert_eq!(exact[&vec![3, 0, 0, 3]], 36.0);
        let trials = 100_000u64;
        let mut seen: HashMap<Vec<u32>, u64> = HashMap::new();
        for i in 0..trials {
            *seen.entry(sample(params, derive_seed(1, i)).adjacency().to_vec()).or_default() += 1;
        }
        for v in exact.values_mut() {
            *v *= trials as f64 / 720.0;
        }
        assert!(chi_square_ok(&seen, &exact));
    }

    #[test]
    fn undirected_n2_hits_all_fifteen_pairings() {
        let params = GraphParams::undirected(2, 3).unwrap();
        let trials = 100_000u64;
        let mut seen: HashMap<Vec<u32>, u64> = HashMap::new();
        for i in 0..trials {
            let g = sample(params, derive_seed(2, i));
            assert!(matches!(g.entry(0, 1), 1 | 3));
            *seen.entry(g.witness().to_vec()).or_default() += 1;
        }
        assert_eq!(seen.len(), 15);
        let expected = seen.keys().map(|k| (k.clone(), trials as f64 / 15.0)).collect();
        assert!(chi_square_ok(&seen, &expected));
    }

    #[test]
    fn duplicate_rows() {
        let p = GraphParams::directed(2, 3).unwrap();
        let g = Graph::from_witness(p, vec![0, 1, 2, 3, 4, 5], None).unwrap();
        assert!(!duplicate_row_detect(&g));
        // vertices 0 and 1 both point once at 2 and once at 3
        let p4 = GraphParams::directed(4, 2).unwrap();
        let h = Graph::from_witness(p4, vec![4, 6, 5, 7, 0, 2, 1, 3], None).unwrap();
        assert_eq!(h.row(0), h.row(1));
        assert!(duplicate_row_detect(&h));
        assert!(rank_integer(&h.to_int_matrix()) < 4);
        let mut fired = 0;
        for seed in 0..2000 {
            let g = sample(GraphParams::directed(8, 3).unwrap(), seed);
            if duplicate_row_detect(&g) {
                fired += 1;
                assert!(rank_integer(&g.to_int_matrix()) < 8);
            }
        }
        assert!(fired > 0);
    }

    #[test]
    fn json_round_trip() {
        let g = sample(GraphParams::undirected(6, 3).unwrap(), 5);
        let s = serde_json::to_string(&g).unwrap();
        assert!(s.starts_with(r#"{"n":6,"d":3,"mode":"undirected","adjacency":[["#));
        let back: Graph = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn bad_witness_rejected() {
        let p = GraphParams::undirected(2, 3).unwrap();
        assert!(Graph::from_witness(p, vec![1, 0, 3, 2, 5, 5], None).is_err());
        assert!(Graph::from_witness(p, vec![0, 1, 2, 3, 4, 5], None).is_err());
    }
}
