use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};

const SYM_TOL: f64 = 1e-12;

/// A real symmetric `p × p` matrix whose entries sum to zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymZeroMatrix {
    p: usize,
    data: Vec<f64>,
}

impl SymZeroMatrix {
    pub fn new(p: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != p * p {
            return Err(Error::Shape(format!("expected {} entries, got {}", p * p, data.len())));
        }
        let scale = data.iter().fold(1.0f64, |a, b| a.max(b.abs()));
        for i in 0..p {
            for j in 0..i {
                if (data[i * p + j] - data[j * p + i]).abs() > SYM_TOL * scale {
                    return Err(Error::Domain(format!("not symmetric at ({i},{j})")));
                }
            }
        }
        let total: f64 = data.iter().sum();
        if total.abs() > SYM_TOL * scale * (p * p) as f64 {
            return Err(Error::Domain(format!("entries sum to {total}, not 0")));
        }
        Ok(Self { p, data })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.p + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// Dimension of the space, `p(p+1)/2 − 1`.
    pub fn dimension(p: usize) -> usize {
        p * (p + 1) / 2 - 1
    }
}

/// `L(A) = −dnp²A/4 + (d−1)np(A𝟙𝟙ᵗ + 𝟙𝟙ᵗA)/4`.
pub fn apply_l(a: &SymZeroMatrix, n: f64, d: f64) -> Vec<f64> {
    let p = a.p;
    let pf = p as f64;
    let row: Vec<f64> = (0..p).map(|i| (0..p).map(|j| a.get(i, j)).sum()).collect();
    let mut out = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            out[i * p + j] = -d * n * pf * pf * a.get(i, j) / 4.0 + (d - 1.0) * n * pf * (row[i] + row[j]) / 4.0;
        }
    }
    out
}

/// Basis of family (i): `(e_i − e_0)(e_j − e_0)ᵗ + transpose`, `1 ≤ i ≤ j < p`.
pub fn family_one_basis(p: usize) -> Vec<SymZeroMatrix> {
    let mut out = Vec::new();
    for i in 1..p {
        for j in i..p {
            let mut m = vec![0.0; p * p];
            let a = unit_diff(p, i);
            let b = unit_diff(p, j);
            for r in 0..p {
                for c in 0..p {
                    m[r * p + c] = a[r] * b[c] + b[r] * a[c];
                }
            }
            out.push(SymZeroMatrix::new(p, m).expect("family (i) element"));
        }
    }
    out
}

/// Basis of family (ii): `[a_r + a_c]` with `a = e_i − e_0`.
pub fn family_two_basis(p: usize) -> Vec<SymZeroMatrix> {
    (1..p)
        .map(|i| {
            let a = unit_diff(p, i);
            let m = (0..p * p).map(|k| a[k / p] + a[k % p]).collect();
            SymZeroMatrix::new(p, m).expect("family (ii) element")
        })
        .collect()
}

fn unit_diff(p: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; p];
    v[i] += 1.0;
    v[0] -= 1.0;
    v
}

/// Numerical rank by Gram–Schmidt with relative tolerance.
fn rank_of(vectors: &[Vec<f64>]) -> usize {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        for b in &basis {
            let c: f64 = w.iter().zip(b).map(|(x, y)| x * y).sum();
            w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 * scale.max(1.0) {
            basis.push(w.into_iter().map(|x| x / norm).collect());
        }
    }
    basis.len()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenFamily {
    pub eigenvalue: f64,
    pub dimension: usize,
    pub expected_dimension: usize,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatorReport {
    pub p: usize,
    pub n: f64,
    pub d: f64,
    pub family_one: EigenFamily,
    pub family_two: EigenFamily,
    pub combined_dimension: usize,
    pub sym_zero_dimension: usize,
    pub closed_form_integral: f64,
    /// Only computed at `p = 2`.
    pub quadrature: Option<f64>,
    pub pass: bool,
}

fn check_family(basis: &[SymZeroMatrix], n: f64, d: f64, eigenvalue: f64, expected: usize) -> EigenFamily {
    let mut max_residual = 0.0f64;
    for a in basis {
        let la = apply_l(a, n, d);
        let r = la
            .iter()
            .zip(a.entries())
            .map(|(x, y)| (x - eigenvalue * y).abs())
            .fold(0.0, f64::max);
        max_residual = max_residual.max(r);
    }
    let vectors: Vec<Vec<f64>> = basis.iter().map(|a| a.entries().to_vec()).collect();
    EigenFamily {
        eigenvalue,
        dimension: rank_of(&vectors),
        expected_dimension: expected,
        max_residual,
    }
}

/// `(4π/dnp²)^{(p²−p)/4} (4π/np²)^{(p−1)/2}`.
pub fn closed_form_integral(p: usize, n: f64, d: f64) -> f64 {
    let pf = p as f64;
    (4.0 * PI / (d * n * pf * pf)).powf((pf * pf - pf) / 4.0) * (4.0 * PI / (n * pf * pf)).powf((pf - 1.0) / 2.0)
}

pub fn operator_l_check(p: usize, n: f64, d: f64) -> Result<OperatorReport> {
    if p < 2 {
        return Err(Error::InvalidParams(format!("p must be at least 2, got {p}")));
    }
    if !(n > 0.0 && d > 0.0) {
        return Err(Error::InvalidParams("n and d must be positive".into()));
    }
    let pf = p as f64;
    let one = family_one_basis(p);
    let two = family_two_basis(p);
    let family_one = check_family(&one, n, d, -d * n * pf * pf / 4.0, p * (p - 1) / 2);
    let family_two = check_family(&two, n, d, -n * pf * pf / 4.0, p - 1);
    let all: Vec<Vec<f64>> = one.iter().chain(&two).map(|a| a.entries().to_vec()).collect();
    let combined_dimension = rank_of(&all);
    let closed = closed_form_integral(p, n, d);
    let quadrature = (p == 2).then(|| quadrature_p2(n, d));
    let tol = 1e-10 * (d * n * pf * pf).max(1.0);
    let pass = family_one.max_residual < tol
        && family_two.max_residual < tol
        && family_one.dimension == family_one.expected_dimension
        && family_two.dimension == family_two.expected_dimension
        && combined_dimension == SymZeroMatrix::dimension(p)
        && quadrature.is_none_or(|q| (q - closed).abs() < 1e-8);
    Ok(OperatorReport {
        p,
        n,
        d,
        family_one,
        family_two,
        combined_dimension,
        sym_zero_dimension: SymZeroMatrix::dimension(p),
        closed_form_integral: closed,
        quadrature,
        pass,
    })
}

/// `∫_{SymZero_2} exp(⟨A, L(A)⟩) dA` in a Frobenius-orthonormal basis that
/// is deliberately not aligned with the eigenvectors.
pub fn quadrature_p2(n: f64, d: f64) -> f64 {
    // SymZero_2 = {[[a, b], [b, c]] : a + 2b + c = 0}; orthonormal pair
    let u = [0.5, -0.5, -0.5, 0.5];
    let v = [1.0 / 2f64.sqrt(), 0.0, 0.0, -1.0 / 2f64.sqrt()];
    let (c, s) = (0.6f64, 0.8f64);
    let e1: Vec<f64> = (0..4).map(|k| c * u[k] + s * v[k]).collect();
    let e2: Vec<f64> = (0..4).map(|k| -s * u[k] + c * v[k]).collect();
    let quad = |x: f64, y: f64| {
        let m: Vec<f64> = (0..4).map(|k| x * e1[k] + y * e2[k]).collect();
        let a = SymZeroMatrix { p: 2, data: m };
        let la = apply_l(&a, n, d);
        a.data.iter().zip(&la).map(|(p, q)| p * q).sum::<f64>()
    };
    // eigenvalues at p = 2 are −dn and −n
    let lam_min = n * d.min(1.0);
    let r = (60.0 / lam_min).sqrt();
    let inner = |x: f64| adaptive_gk(&|y| quad(x, y).exp(), -r, r, 1e-14, 0);
    adaptive_gk(&inner, -r, r, 1e-13, 0)
}

const GK_X: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const GK_WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Gauss–Kronrod 7/15 with bisection until the estimates agree.
pub fn adaptive_gk(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kron = GK_WK[7] * f(c);
    let mut gauss = GK_WG[3] * f(c);
    for i in 0..7 {
        let x = h * GK_X[i];
        let s = f(c - x) + f(c + x);
        kron += GK_WK[i] * s;
        if i % 2 == 1 {
            gauss += GK_WG[i / 2] * s;
        }
    }
    kron *= h;
    gauss *= h;
    if (kron - gauss).abs() <= tol || depth >= 40 {
        kron
    } else {
        adaptive_gk(f, a, c, tol / 2.0, depth + 1) + adaptive_gk(f, c, b, tol / 2.0, depth + 1)
    }
}
