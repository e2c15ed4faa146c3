//! Monte Carlo estimates of singularity probabilities, over `F_p` and over
//! the integers, and comparisons against exact counts.

use std::time::{Duration, Instant};

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::confmodel::{derive_seed, has_duplicate_column, has_duplicate_row, rng_from_seed, GraphParams, Mode, Sampler};
use crate::error::{Error, Result};
use crate::exactcount::{ExactCounter, ExactRational};
use crate::gfcore::{random_prime, rank_integer, rank_of_counts, rank_of_counts_m31, IntMatrix, PrimeModulus};

/// 97.5% standard normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub params: GraphParams,
    /// `None` selects integer rank.
    pub p: Option<PrimeModulus>,
    pub trials: u64,
    pub seed: u64,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub n: usize,
    pub d: usize,
    pub mode: Mode,
    pub p: Option<PrimeModulus>,
    pub seed: u64,
    pub trials: u64,
    pub singular_count: u64,
    pub estimate: f64,
    pub wilson_ci_95: (f64, f64),
    /// Mean of `p^{corank} − 1`; `F_p` mode only.
    pub mean_kernel_count: Option<f64>,
    /// Sample variance of the kernel count; `F_p` mode only.
    pub kernel_count_variance: Option<f64>,
    /// Trials whose kernel count is at least `p − 1`; `F_p` mode only.
    pub kernel_at_least_p_minus_1: Option<u64>,
    pub duplicate_row_count: u64,
    pub duplicate_row_rate: f64,
    /// Integer mode: trials that needed exact Bareiss elimination.
    pub exact_rank_calls: u64,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl McReport {
    pub const CSV_HEADER: &'static str = "n,d,p,mode,trials,singular,estimate,ci_lo,ci_hi,mean_kernel,dup_rate";

    /// One CSV row; `p` is `Z` in integer mode and `mean_kernel` is then empty.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.n,
            self.d,
            self.p.map_or("Z".to_string(), |p| p.get().to_string()),
            self.mode,
            self.trials,
            self.singular_count,
            self.estimate,
            self.wilson_ci_95.0,
            self.wilson_ci_95.1,
            self.mean_kernel_count.map_or(String::new(), |m| m.to_string()),
            self.duplicate_row_rate
        )
    }
}

/// Wilson score interval at 95%.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let phat = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (phat + z2 / (2.0 * n)) / denom;
    let half = Z95 * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0).min(phat), (centre + half).min(1.0).max(phat))
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Tally {
    singular: u64,
    kernel_sum: BigUint,
    kernel_sq_sum: BigUint,
    kernel_at_least: u64,
    duplicates: u64,
    exact_calls: u64,
}

impl Tally {
    fn merge(&mut self, o: Tally) {
        self.singular += o.singular;
        self.kernel_sum += o.kernel_sum;
        self.kernel_sq_sum += o.kernel_sq_sum;
        self.kernel_at_least += o.kernel_at_least;
        self.duplicates += o.duplicates;
        self.exact_calls += o.exact_calls;
    }
}

/// Outcome of the integer singularity test for one adjacency matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum IntegerVerdict {
    /// Full rank modulo 2³¹ − 1.
    FullRankMersenne,
    /// Two equal rows or columns.
    DuplicateCertificate,
    /// Full rank modulo one of the random primes.
    FullRankRandomPrime,
    /// Decided by exact fraction-free elimination.
    Exact { singular: bool },
}

impl IntegerVerdict {
    pub fn singular(self) -> bool {
        matches!(self, Self::DuplicateCertificate | Self::Exact { singular: true })
    }
}

/// Decides integer singularity of an `n × n` count matrix.
///
/// Full rank modulo any prime proves full integer rank, and a repeated row
/// or column proves singularity, so exact elimination only runs when two
/// random 61-bit primes both report a deficient rank.
pub fn integer_singularity(n: usize, adjacency: &[u32], seed: u64) -> IntegerVerdict {
    if rank_of_counts_m31(n, n, adjacency) == n {
        return IntegerVerdict::FullRankMersenne;
    }
    if has_duplicate_row(n, adjacency) || has_duplicate_column(n, adjacency) {
        return IntegerVerdict::DuplicateCertificate;
    }
    let mut rng = rng_from_seed(seed);
    for _ in 0..2 {
        let q = random_prime(&mut rng, 61);
        if rank_of_counts(n, n, adjacency, q) == n {
            return IntegerVerdict::FullRankRandomPrime;
        }
    }
    let rank = rank_integer(&IntMatrix::from_counts(n, n, adjacency));
    IntegerVerdict::Exact { singular: rank < n }
}

fn run_range(cfg: &McConfig, lo: u64, hi: u64) -> Tally {
    let n = cfg.params.n();
    let mut sampler = Sampler::new(cfg.params);
    let mut t = Tally::default();
    for i in lo..hi {
        let s = derive_seed(cfg.seed, i);
        sampler.draw(s);
        let adj = &sampler.adjacency;
        let dup = has_duplicate_row(n, adj);
        t.duplicates += dup as u64;
        match cfg.p {
            Some(p) => {
                let corank = n - rank_of_counts(n, n, adj, p);
                if corank > 0 {
                    t.singular += 1;
                }
                let k = BigUint::from(p.get()).pow(corank as u32) - BigUint::one();
                if k >= BigUint::from(p.get() - 1) {
                    t.kernel_at_least += 1;
                }
                t.kernel_sq_sum += &k * &k;
                t.kernel_sum += k;
            }
            None => {
                let v = integer_singularity(n, adj, derive_seed(s, 1));
                t.exact_calls += matches!(v, IntegerVerdict::Exact { .. }) as u64;
                t.singular += v.singular() as u64;
            }
        }
    }
    t
}

/// Samples `trials` graphs, trial `i` using seed `derive_seed(seed, i)`.
/// Workers take contiguous blocks of trials and tallies are added exactly,
/// so the report does not depend on `workers`.
pub fn run_mc(cfg: &McConfig) -> Result<McReport> {
    if cfg.trials == 0 {
        return Err(Error::InvalidParams("trials must be at least 1".into()));
    }
    let start = Instant::now();
    let workers = cfg.workers.max(1).min(cfg.trials as usize);
    let tally = if workers == 1 {
        run_range(cfg, 0, cfg.trials)
    } else {
        let chunk = cfg.trials.div_ceil(workers as u64);
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers as u64)
                .map(|w| {
                    let lo = (w * chunk).min(cfg.trials);
                    let hi = ((w + 1) * chunk).min(cfg.trials);
                    s.spawn(move || run_range(cfg, lo, hi))
                })
                .collect();
            let mut total = Tally::default();
            for h in handles {
                total.merge(h.join().expect("monte carlo worker"));
            }
            total
        })
    };
    let trials = cfg.trials;
    let tf = trials as f64;
    let (mean_k, var_k, at_least) = match cfg.p {
        Some(_) => {
            let mean = big_ratio(&tally.kernel_sum, trials);
            let sq = big_ratio(&tally.kernel_sq_sum, trials);
            let var = if trials > 1 { ((sq - mean * mean) * tf / (tf - 1.0)).max(0.0) } else { 0.0 };
            (Some(mean), Some(var), Some(tally.kernel_at_least))
        }
        None => (None, None, None),
    };
    Ok(McReport {
        n: cfg.params.n(),
        d: cfg.params.d(),
        mode: cfg.params.mode(),
        p: cfg.p,
        seed: cfg.seed,
        trials,
        singular_count: tally.singular,
        estimate: tally.singular as f64 / tf,
        wilson_ci_95: wilson_interval(tally.singular, trials),
        mean_kernel_count: mean_k,
        kernel_count_variance: var_k,
        kernel_at_least_p_minus_1: at_least,
        duplicate_row_count: tally.duplicates,
        duplicate_row_rate: tally.duplicates as f64 / tf,
        exact_rank_calls: tally.exact_calls,
        wall_time: start.elapsed(),
    })
}

fn big_ratio(x: &BigUint, n: u64) -> f64 {
    if x.is_zero() {
        return 0.0;
    }
    ExactRational(num_rational::BigRational::new(x.clone().into(), BigUint::from(n).into())).to_f64()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub trials: u64,
    pub singular: u64,
    pub estimate: f64,
    pub wilson_ci_95: (f64, f64),
    pub duplicate_row_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub d: usize,
    pub seed: u64,
    pub rows: Vec<ScalingRow>,
    /// Weighted least-squares slope of `ln estimate` against `ln n`.
    pub slope: Option<f64>,
    pub slope_ci_95: Option<(f64, f64)>,
    /// `min{1/4, (d−2)/(2d)}`: decay at least this fast is the known upper bound.
    pub upper_bound_exponent: f64,
    /// `d − 2`: decay no faster than this is the known lower bound.
    pub lower_bound_exponent: f64,
}

/// Integer-mode singularity frequency for each `n`, plus a log-log fit.
/// Nothing is asserted about the slope.
pub fn scaling_probe(d: usize, n_list: &[usize], trials: u64, seed: u64, workers: usize) -> Result<ScalingReport> {
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let cfg = McConfig {
            params: GraphParams::directed(n, d)?,
            p: None,
            trials,
            seed: derive_seed(seed, n as u64),
            workers,
        };
        let r = run_mc(&cfg)?;
        rows.push(ScalingRow {
            n,
            trials,
            singular: r.singular_count,
            estimate: r.estimate,
            wilson_ci_95: r.wilson_ci_95,
            duplicate_row_rate: r.duplicate_row_rate,
        });
    }
    let (slope, slope_ci_95) = match fit_slope(&rows) {
        Some((b, se)) => (Some(b), Some((b - Z95 * se, b + Z95 * se))),
        None => (None, None),
    };
    let df = d as f64;
    Ok(ScalingReport {
        d,
        seed,
        rows,
        slope,
        slope_ci_95,
        upper_bound_exponent: (0.25f64).min((df - 2.0) / (2.0 * df)),
        lower_bound_exponent: df - 2.0,
    })
}

/// Slope and its standard error, weighting each point by the inverse
/// delta-method variance `(1 − f)/(f·trials)` of `ln f`.
fn fit_slope(rows: &[ScalingRow]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64, f64)> = rows
        .iter()
        .filter(|r| r.singular > 0 && r.singular < r.trials)
        .map(|r| {
            let f = r.estimate;
            let var = (1.0 - f) / (f * r.trials as f64);
            ((r.n as f64).ln(), f.ln(), 1.0 / var)
        })
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    Some((sxy / sxx, (1.0 / sxx).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactComparison {
    pub n: usize,
    pub d: usize,
    pub p: PrimeModulus,
    pub mode: Mode,
    pub trials: u64,
    pub seed: u64,
    pub exact: ExactRational,
    pub empirical_mean: f64,
    pub std_error: f64,
    /// `(empirical − exact)/std_error`; 0 when both agree with zero spread,
    /// infinite when they disagree with zero spread.
    pub z: f64,
}

/// Monte Carlo mean of the nonzero-null-vector count against the exact master sum.
pub fn mc_vs_exact(n: usize, d: usize, p: PrimeModulus, mode: Mode, trials: u64, seed: u64, workers: usize) -> Result<ExactComparison> {
    let params = GraphParams::new(n, d, mode)?;
    let counter = ExactCounter::new(n as u32, d as u32, p);
    let exact = counter.master_sum(n as u32, mode)?;
    let r = run_mc(&McConfig { params, p: Some(p), trials, seed, workers })?;
    let mean = r.mean_kernel_count.unwrap_or(0.0);
    let se = (r.kernel_count_variance.unwrap_or(0.0) / trials as f64).sqrt();
    let diff = mean - exact.to_f64();
    let z = if se > 0.0 {
        diff / se
    } else if diff.abs() < 1e-12 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    };
    Ok(ExactComparison {
        n,
        d,
        p,
        mode,
        trials,
        seed,
        exact,
        empirical_mean: mean,
        std_error: se,
        z,
    })
}

impl McReport {
    pub fn wall_seconds(&self) -> f64 {
        self.wall_time.as_secs_f64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confmodel::sample;
    use crate::gfcore::{kernel_count, rank_mod_p};
    use num_traits::ToPrimitive;

    fn pm(p: u64) -> PrimeModulus {
        PrimeModulus::new(p).unwrap()
    }

    #[test]
    fn wilson_contains_estimate() {
        for (s, n) in [(0u64, 10u64), (1, 10), (5, 10), (10, 10), (37, 10000)] {
            let (lo, hi) = wilson_interval(s, n);
            let e = s as f64 / n as f64;
            assert!(lo <= e && e <= hi && 0.0 <= lo && hi <= 1.0);
        }
        let (lo, hi) = wilson_interval(50, 100);
        assert!((lo - 0.4038).abs() < 1e-4 && (hi - 0.5962).abs() < 1e-4);
    }

    #[test]
    fn single_trial_matches_direct_call() {
        let params = GraphParams::directed(12, 3).unwrap();
        let cfg = McConfig { params, p: Some(pm(3)), trials: 1, seed: 99, workers: 1 };
        let r = run_mc(&cfg).unwrap();
        let g = sample(params, derive_seed(99, 0));
        let m = g.to_fp(pm(3));
        assert_eq!(r.singular_count, (rank_mod_p(&m) < 12) as u64);
        assert_eq!(r.mean_kernel_count.unwrap(), kernel_count(&m).unwrap().to_f64().unwrap());
        let ri = run_mc(&McConfig { p: None, ..cfg }).unwrap();
        let exact = rank_integer(&g.to_int_matrix());
        assert_eq!(ri.singular_count, (exact < 12) as u64);
    }

    #[test]
    fn worker_count_does_not_change_report() {
        for p in [Some(pm(2)), None] {
            let params = GraphParams::undirected(10, 3).unwrap();
            let mk = |w| McConfig { params, p, trials: 300, seed: 4, workers: w };
            let mut a = run_mc(&mk(1)).unwrap();
            let mut b = run_mc(&mk(4)).unwrap();
            a.wall_time = Duration::ZERO;
            b.wall_time = Duration::ZERO;
            assert_eq!(a, b);
        }
    }

    #[test]
    fn kernel_and_rank_are_consistent() {
        let params = GraphParams::directed(8, 3).unwrap();
        let r = run_mc(&McConfig { params, p: Some(pm(3)), trials: 500, seed: 1, workers: 1 }).unwrap();
        assert!(r.singular_count <= r.kernel_at_least_p_minus_1.unwrap());
        assert_eq!(r.singular_count, r.kernel_at_least_p_minus_1.unwrap());
        assert!(r.singular_count > 0);
    }

    #[test]
    fn duplicates_imply_integer_singularity() {
        let params = GraphParams::directed(8, 3).unwrap();
        let mut seen = 0;
        for i in 0..2000 {
            let g = sample(params, derive_seed(17, i));
            if has_duplicate_row(8, g.adjacency()) {
                seen += 1;
                let v = integer_singularity(8, g.adjacency(), i);
                assert!(v.singular());
                assert!(rank_integer(&g.to_int_matrix()) < 8);
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn integer_verdict_matches_bareiss() {
        let params = GraphParams::directed(6, 3).unwrap();
        for i in 0..500 {
            let g = sample(params, derive_seed(3, i));
            let v = integer_singularity(6, g.adjacency(), i);
            let exact = rank_integer(&g.to_int_matrix()) < 6;
            assert_eq!(v.singular(), exact, "{v:?}");
        }
    }

    #[test]
    fn exact_zero_master_sum() {
        let c = mc_vs_exact(2, 3, pm(2), Mode::Directed, 2000, 5, 1).unwrap();
        assert_eq!(c.empirical_mean, 0.0);
        assert_eq!(c.z, 0.0);
    }

    #[test]
    fn small_mc_vs_exact() {
        let c = mc_vs_exact(3, 3, pm(2), Mode::Directed, 20000, 6, 1).unwrap();
        assert!(c.z.abs() < 4.0, "{c:?}");
        let c = mc_vs_exact(4, 3, pm(2), Mode::Undirected, 20000, 7, 1).unwrap();
        assert!(c.z.abs() < 4.0, "{c:?}");
    }

    #[test]
    fn slope_fit_on_synthetic_rows() {
        let rows: Vec<ScalingRow> = [50usize, 100, 200]
            .iter()
            .map(|&n| {
                let f = 2.0 / n as f64;
                let trials = 1_000_000;
                ScalingRow {
                    n,
                    trials,
                    singular: (f * trials as f64) as u64,
                    estimate: f,
                    wilson_ci_95: (0.0, 1.0),
                    duplicate_row_rate: 0.0,
                }
            })
            .collect();
        let (b, se) = fit_slope(&rows).unwrap();
        assert!((b + 1.0).abs() < 1e-9 && se > 0.0);
    }

    #[test]
    fn csv_row_shape() {
        let params = GraphParams::directed(5, 3).unwrap();
        let r = run_mc(&McConfig { params, p: None, trials: 10, seed: 0, workers: 1 }).unwrap();
        assert_eq!(r.csv_row().split(',').count(), McReport::CSV_HEADER.split(',').count());
        let json = serde_json::to_value(&r).unwrap();
        assert!(json.get("wall_time").is_none());
    }
}
