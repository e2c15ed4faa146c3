use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::gfcore::PrimeModulus;
use crate::walkdist::{build_support, ln_biguint, SupportTable};

const SUM_TOL: f64 = 1e-9;
const MAX_ITER: usize = 200;
const GRAD_TOL: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateEvaluation {
    /// `min(explicit bound, optimized value)`; `-inf` serializes as null.
    #[serde(serialize_with = "finite_or_null")]
    pub value: f64,
    #[serde(serialize_with = "finite_or_null")]
    pub explicit_bound: f64,
    /// `t*` with the gauge coordinate at 0; coordinates where `𝔫_k = 0` are `-inf`.
    #[serde(serialize_with = "finite_or_null_vec")]
    pub minimizer: Vec<f64>,
    pub converged: bool,
    pub boundary: bool,
    pub iterations: usize,
}

fn finite_or_null<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_none()
    }
}

fn finite_or_null_vec<S: Serializer>(x: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    let v: Vec<Option<f64>> = x.iter().map(|&a| a.is_finite().then_some(a)).collect();
    v.serialize(s)
}

fn check_simplex(v: &[f64], len: usize) -> Result<()> {
    if v.len() != len {
        return Err(Error::Shape(format!("expected {len} entries, got {}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Domain("entries must be finite and nonnegative".into()));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > SUM_TOL {
        return Err(Error::Domain(format!("entries sum to {s}, not 1")));
    }
    Ok(())
}

fn log_sum_exp(xs: impl Iterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.collect();
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn xlnx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Atoms as `(u, ln(mult / p^{d−1}))`.
fn log_atoms(s: &SupportTable) -> Vec<(Vec<f64>, f64)> {
    let ln_total = (s.d.saturating_sub(1)) as f64 * (s.p.get() as f64).ln();
    s.atoms
        .iter()
        .map(|a| (a.u.0.iter().map(|&x| x as f64).collect(), ln_biguint(&a.multiplicity) - ln_total))
        .collect()
}

/// `log Σ_atoms mult(u) ∏_k 𝔫_k^{((d−1)/d) u_k}` with `0⁰ = 1`.
pub fn rate_directed_explicit(frak_n: &[f64], d: u32, p: PrimeModulus) -> Result<f64> {
    check_simplex(frak_n, p.get() as usize)?;
    Ok(explicit_with(&build_support(d, p), frak_n))
}

fn explicit_with(s: &SupportTable, frak_n: &[f64]) -> f64 {
    let e = (s.d as f64 - 1.0) / s.d as f64;
    log_sum_exp(s.atoms.iter().filter_map(|a| {
        let mut acc = ln_biguint(&a.multiplicity);
        for (&u, &x) in a.u.0.iter().zip(frak_n) {
            if u > 0 {
                if x == 0.0 {
                    return None;
                }
                acc += e * u as f64 * x.ln();
            }
        }
        Some(acc)
    }))
}

/// `log E e^{⟨t,X⟩} − d⟨t,𝔫⟩`, invariant under `t ↦ t + c𝟙` when `Σ𝔫 = 1`.
pub fn directed_objective(s: &SupportTable, frak_n: &[f64], t: &[f64]) -> f64 {
    let atoms = log_atoms(s);
    objective(&atoms, s.d as f64, frak_n, t)
}

fn objective(atoms: &[(Vec<f64>, f64)], d: f64, frak_n: &[f64], t: &[f64]) -> f64 {
    let lse = log_sum_exp(atoms.iter().map(|(u, lw)| lw + dot(u, t)));
    let lin: f64 = frak_n.iter().zip(t).filter(|(x, _)| **x > 0.0).map(|(x, y)| x * y).sum();
    lse - d * lin
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Assembles `I = (d−1) ln p + (d−1) Σ 𝔫 ln 𝔫 + F`.
fn assemble(d: u32, p: PrimeModulus, frak_n: &[f64], f: f64) -> f64 {
    let dm1 = d as f64 - 1.0;
    dm1 * (p.get() as f64).ln() + dm1 * frak_n.iter().map(|&x| xlnx(x)).sum::<f64>() + f
}

/// Minimizes the Legendre objective by damped Newton steps on the slice
/// where the first coordinate with `𝔫_k > 0` is pinned at 0.
///
/// Coordinates with `𝔫_k = 0` are sent to `-inf`, which removes every atom
/// with `u_k > 0`; the remaining problem is minimized the same way.
pub fn rate_directed_opt(frak_n: &[f64], d: u32, p: PrimeModulus) -> Result<RateEvaluation> {
    check_simplex(frak_n, p.get() as usize)?;
    let s = build_support(d, p);
    let pu = p.get() as usize;
    let explicit = explicit_with(&s, frak_n);
    let live: Vec<usize> = (0..pu).filter(|&k| frak_n[k] > 0.0).collect();
    let boundary = live.len() < pu;
    let atoms: Vec<(Vec<f64>, f64)> = log_atoms(&s)
        .into_iter()
        .filter(|(u, _)| (0..pu).all(|k| frak_n[k] > 0.0 || u[k] == 0.0))
        .collect();
    let mut t = vec![0.0; pu];
    for k in 0..pu {
        if frak_n[k] == 0.0 {
            t[k] = f64::NEG_INFINITY;
        }
    }
    if atoms.is_empty() {
        return Ok(RateEvaluation {
            value: f64::NEG_INFINITY,
            explicit_bound: explicit,
            minimizer: t,
            converged: true,
            boundary,
            iterations: 0,
        });
    }
    // evaluate with finite placeholders; the dead coordinates never meet a live atom entry
    let free: Vec<usize> = live[1..].to_vec();
    let df = d as f64;
    let mut x = vec![0.0; pu];
    let mut f = objective(&atoms, df, frak_n, &x);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        let (g, h) = grad_hess(&atoms, df, frak_n, &x, &free);
        if g.iter().all(|v| v.abs() < GRAD_TOL) {
            converged = true;
            break;
        }
        iterations += 1;
        let step = solve_damped(&h, &g);
        let slope: f64 = g.iter().zip(&step).map(|(a, b)| a * b).sum();
        let mut alpha = 1.0;
        let mut accepted = false;
        while alpha > 1e-14 {
            let mut y = x.clone();
            for (i, &k) in free.iter().enumerate() {
                y[k] += alpha * step[i];
            }
            let fy = objective(&atoms, df, frak_n, &y);
            if fy <= f + 1e-4 * alpha * slope {
                accepted = true;
                x = y;
                f = fy;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted || x.iter().any(|v| v.abs() > 1e6) {
            break;
        }
    }
    for &k in &live {
        t[k] = x[k];
    }
    let best = assemble(d, p, frak_n, f);
    Ok(RateEvaluation {
        value: best.min(explicit),
        explicit_bound: explicit,
        minimizer: t,
        converged,
        boundary,
        iterations,
    })
}

/// Gradient and Hessian restricted to `free`: tilted mean minus `d𝔫` and
/// tilted covariance.
fn grad_hess(atoms: &[(Vec<f64>, f64)], d: f64, frak_n: &[f64], t: &[f64], free: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let logits: Vec<f64> = atoms.iter().map(|(u, lw)| lw + dot(u, t)).collect();
    let lse = log_sum_exp(logits.iter().copied());
    let m = free.len();
    let mut mean = vec![0.0; m];
    let mut second = vec![0.0; m * m];
    for ((u, _), l) in atoms.iter().zip(&logits) {
        let w = (l - lse).exp();
        for (i, &a) in free.iter().enumerate() {
            mean[i] += w * u[a];
            for (j, &b) in free.iter().enumerate() {
                second[i * m + j] += w * u[a] * u[b];
            }
        }
    }
    let g = free.iter().enumerate().map(|(i, &k)| mean[i] - d * frak_n[k]).collect();
    for i in 0..m {
        for j in 0..m {
            second[i * m + j] -= mean[i] * mean[j];
        }
    }
    (g, second)
}

/// Solves `(H + λI) s = −g`, raising `λ` until the Cholesky factorization succeeds.
fn solve_damped(h: &[f64], g: &[f64]) -> Vec<f64> {
    let m = g.len();
    let mut lambda = 0.0;
    loop {
        if let Some(l) = cholesky(h, m, lambda) {
            let mut y = vec![0.0; m];
            for i in 0..m {
                let s: f64 = (0..i).map(|k| l[i * m + k] * y[k]).sum();
                y[i] = (-g[i] - s) / l[i * m + i];
            }
            let mut x = vec![0.0; m];
            for i in (0..m).rev() {
                let s: f64 = (i + 1..m).map(|k| l[k * m + i] * x[k]).sum();
                x[i] = (y[i] - s) / l[i * m + i];
            }
            return x;
        }
        lambda = if lambda == 0.0 { 1e-12 } else { lambda * 10.0 };
    }
}

fn cholesky(a: &[f64], m: usize, shift: f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..=i {
            let mut s = a[i * m + j] + if i == j { shift } else { 0.0 };
            for k in 0..j {
                s -= l[i * m + k] * l[j * m + k];
            }
            if i == j {
                if s <= 1e-300 {
                    return None;
                }
                l[i * m + i] = s.sqrt();
            } else {
                l[i * m + j] = s / l[j * m + j];
            }
        }
    }
    Some(l)
}

/// The explicit-`t` bound for undirected classes:
/// `(d−2)/2 Σ 𝔪_ij ln(𝔫_i 𝔫_j / 𝔪_ij) + Σ_i 𝔫_i log Σ_atoms mult ∏_k (𝔪_ik/𝔫_i)^{((d−1)/d) u_k}`
/// with `𝔫_i = Σ_j 𝔪_ij`.
pub fn rate_undirected_explicit(frak_m: &[Vec<f64>], d: u32, p: PrimeModulus) -> Result<f64> {
    let pu = p.get() as usize;
    if frak_m.len() != pu || frak_m.iter().any(|r| r.len() != pu) {
        return Err(Error::Shape(format!("expected a {pu}×{pu} matrix")));
    }
    let flat: Vec<f64> = frak_m.iter().flatten().copied().collect();
    check_simplex(&flat, pu * pu)?;
    for (i, row) in frak_m.iter().enumerate() {
        for (j, &x) in row.iter().enumerate().take(i) {
            if (x - frak_m[j][i]).abs() > 1e-12 {
                return Err(Error::Domain(format!("matrix is not symmetric at ({i},{j})")));
            }
        }
    }
    let s = build_support(d, p);
    let frak_n: Vec<f64> = frak_m.iter().map(|r| r.iter().sum()).collect();
    let mut first = 0.0;
    for i in 0..pu {
        for j in 0..pu {
            let m = frak_m[i][j];
            if m > 0.0 {
                first += m * (frak_n[i] * frak_n[j] / m).ln();
            }
        }
    }
    let mut second = 0.0;
    for i in 0..pu {
        if frak_n[i] > 0.0 {
            let row: Vec<f64> = frak_m[i].iter().map(|m| m / frak_n[i]).collect();
            second += frak_n[i] * explicit_with(&s, &row);
        }
    }
    Ok((d as f64 - 2.0) / 2.0 * first + second)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pm(p: u64) -> PrimeModulus {
        PrimeModulus::new(p).unwrap()
    }

    fn uniform(p: usize) -> Vec<f64> {
        vec![1.0 / p as f64; p]
    }

    fn random_simplex(rng: &mut ChaCha8Rng, p: usize, floor: f64) -> Vec<f64> {
        let e: Vec<f64> = (0..p).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
        let s: f64 = e.iter().sum();
        let scale = 1.0 - floor * p as f64;
        e.iter().map(|x| floor + scale * x / s).collect()
    }

    #[test]
    fn explicit_special_points() {
        for p in [2, 3, 5] {
            for d in [3, 4, 5] {
                let v = rate_directed_explicit(&uniform(p as usize), d, pm(p)).unwrap();
                assert!(v.abs() < 1e-12, "p={p} d={d} v={v}");
                let mut e0 = vec![0.0; p as usize];
                e0[0] = 1.0;
                assert!(rate_directed_explicit(&e0, d, pm(p)).unwrap().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn explicit_rejects_bad_input() {
        assert!(rate_directed_explicit(&[1.2, -0.2], 3, pm(2)).is_err());
        assert!(rate_directed_explicit(&[0.5, 0.4], 3, pm(2)).is_err());
        assert!(rate_directed_explicit(&[0.5, 0.5, 0.0], 3, pm(2)).is_err());
    }

    #[test]
    fn explicit_negative_in_interior() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let x = random_simplex(&mut rng, 3, 0.0);
            if x.iter().all(|v| (v - 1.0 / 3.0).abs() < 0.02) {
                continue;
            }
            assert!(rate_directed_explicit(&x, 3, pm(3)).unwrap() < 0.0, "{x:?}");
        }
    }

    #[test]
    fn opt_at_uniform_is_zero() {
        for p in [2u64, 3, 5] {
            for d in [3, 4, 5] {
                let r = rate_directed_opt(&uniform(p as usize), d, pm(p)).unwrap();
                assert!(r.value.abs() < 1e-9, "p={p} d={d} {r:?}");
                assert!(r.minimizer.iter().all(|t| t.abs() < 1e-9));
                assert!(r.converged && !r.boundary);
            }
        }
    }

    #[test]
    fn opt_below_explicit() {
        for (d, p) in [(3, 2), (3, 3), (4, 3), (3, 5)] {
            let mut rng = ChaCha8Rng::seed_from_u64(d as u64 * 100 + p);
            for _ in 0..100 {
                let x = random_simplex(&mut rng, p as usize, 0.0);
                let r = rate_directed_opt(&x, d, pm(p)).unwrap();
                let e = rate_directed_explicit(&x, d, pm(p)).unwrap();
                assert!(r.value <= e + 1e-9, "{x:?} {r:?} {e}");
            }
        }
    }

    /// Grid search over `t = (0, t_1, t_2)` with step 0.01 on `[−5, 5]²`.
    fn grid_rate(x: &[f64], d: u32, p: PrimeModulus) -> f64 {
        let s = build_support(d, p);
        let atoms = log_atoms(&s);
        let mut best = f64::INFINITY;
        for i in 0..=1000 {
            for j in 0..=1000 {
                let t = [0.0, -5.0 + 0.01 * i as f64, -5.0 + 0.01 * j as f64];
                best = best.min(objective(&atoms, d as f64, x, &t));
            }
        }
        assemble(d, p, x, best)
    }

    #[test]
    fn opt_matches_grid_search() {
        let p = pm(3);
        let fixed = [0.5, 0.3, 0.2];
        let r = rate_directed_opt(&fixed, 3, p).unwrap();
        assert!(r.converged);
        assert!((r.value - grid_rate(&fixed, 3, p)).abs() < 1e-4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..3 {
            let x = random_simplex(&mut rng, 3, 0.05);
            let r = rate_directed_opt(&x, 3, p).unwrap();
            let g = grid_rate(&x, 3, p);
            assert!((r.value - g).abs() < 1e-4, "{x:?} opt {} grid {g}", r.value);
        }
    }

    #[test]
    fn zero_set_on_grid() {
        // gcd(d, p) = 1, so the only zeros are the uniform point and e_0
        for (d, p) in [(3u32, 2u64), (4, 3), (5, 3)] {
            let pu = p as usize;
            let steps = 20;
            let mut checked = 0;
            for code in 0..(steps + 1usize).pow(pu as u32 - 1) {
                let mut c = code;
                let mut x = vec![0.0; pu];
                let mut rest = steps as i64;
                for slot in x.iter_mut().skip(1) {
                    let k = (c % (steps + 1)) as i64;
                    c /= steps + 1;
                    *slot = k as f64 / steps as f64;
                    rest -= k;
                }
                if rest < 0 {
                    continue;
                }
                x[0] = rest as f64 / steps as f64;
                let r = rate_directed_opt(&x, d, pm(p)).unwrap();
                let dist_u = x.iter().map(|v| (v - 1.0 / p as f64).abs()).fold(0.0, f64::max);
                let dist_e = x.iter().enumerate().map(|(k, v)| (v - if k == 0 { 1.0 } else { 0.0 }).abs()).fold(0.0, f64::max);
                if dist_u < 1e-12 || dist_e < 1e-12 {
                    assert!(r.value.abs() < 1e-8, "{x:?} {r:?}");
                } else if dist_u >= 0.1 / p as f64 && dist_e >= 0.1 / p as f64 {
                    assert!(r.value < -1e-6, "{x:?} {r:?}");
                    checked += 1;
                }
            }
            assert!(checked > 10);
        }
    }

    #[test]
    fn boundary_classes() {
        let r = rate_directed_opt(&[0.0, 1.0], 3, pm(2)).unwrap();
        assert!(r.boundary);
        assert_eq!(r.value, f64::NEG_INFINITY);
        let r = rate_directed_opt(&[0.6, 0.4, 0.0], 4, pm(3)).unwrap();
        assert!(r.boundary && r.value < 0.0 && r.value.is_finite());
        assert_eq!(r.minimizer[2], f64::NEG_INFINITY);
        let json = serde_json::to_value(&r).unwrap();
        assert!(json["minimizer"][2].is_null());
    }

    #[test]
    fn second_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (d, p) in [(3u32, 2u64), (3, 3), (4, 5), (5, 3)] {
            let pu = p as usize;
            for _ in 0..20 {
                let mut delta: Vec<f64> = (0..pu).map(|_| rng.random::<f64>() - 0.5).collect();
                let mean = delta.iter().sum::<f64>() / pu as f64;
                delta.iter_mut().for_each(|v| *v -= mean);
                let norm = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
                let target = 1e-3 * rng.random::<f64>().max(0.1);
                delta.iter_mut().for_each(|v| *v *= target / norm);
                let x: Vec<f64> = delta.iter().map(|v| (1.0 + v) / p as f64).collect();
                let got = rate_directed_explicit(&x, d, pm(p)).unwrap();
                let want = -((d as f64 - 1.0) / (2.0 * d as f64 * p as f64)) * target * target;
                assert!(((got - want) / want).abs() < 0.1, "d={d} p={p} got {got} want {want}");
            }
        }
    }

    proptest! {
        #[test]
        fn gauge_invariance(t in proptest::collection::vec(-3.0f64..3.0, 3), c in -10.0f64..10.0, a in 0.05f64..0.9) {
            let s = build_support(4, pm(3));
            let x = [a, (1.0 - a) * 0.4, (1.0 - a) * 0.6];
            let shifted: Vec<f64> = t.iter().map(|v| v + c).collect();
            let f0 = directed_objective(&s, &x, &t);
            let f1 = directed_objective(&s, &x, &shifted);
            prop_assert!((f0 - f1).abs() < 1e-12 * (1.0 + f0.abs()) * 10.0);
        }
    }

    #[test]
    fn undirected_special_points() {
        for p in [2u64, 3, 5] {
            let pu = p as usize;
            let u = vec![vec![1.0 / (pu * pu) as f64; pu]; pu];
            assert!(rate_undirected_explicit(&u, 3, pm(p)).unwrap().abs() < 1e-12);
            let mut e = vec![vec![0.0; pu]; pu];
            e[0][0] = 1.0;
            assert!(rate_undirected_explicit(&e, 3, pm(p)).unwrap().abs() < 1e-12);
        }
        let asym = vec![vec![0.5, 0.3], vec![0.1, 0.1]];
        assert!(rate_undirected_explicit(&asym, 3, pm(2)).is_err());
    }

    #[test]
    fn undirected_negative_off_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..30 {
            let mut m = vec![vec![0.0; 3]; 3];
            for (i, j) in [(0, 0), (1, 0), (1, 1), (2, 0), (2, 1), (2, 2)] {
                let v: f64 = rng.random::<f64>() + 0.05;
                m[i][j] = v;
                m[j][i] = v;
            }
            let s: f64 = m.iter().flatten().sum();
            m.iter_mut().flatten().for_each(|v| *v /= s);
            assert!(rate_undirected_explicit(&m, 4, pm(3)).unwrap() < 0.0, "{m:?}");
        }
    }
}
