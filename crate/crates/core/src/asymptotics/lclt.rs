use std::f64::consts::PI;

use num_integer::Integer;
use num_rational::BigRational;
use num_traits::Zero;
use serde::Serialize;
use statrs::function::gamma::gamma_lr;

use crate::confmodel::Mode;
use crate::error::Result;
use crate::exactcount::{all_signatures, ClassSignature, ExactCounter, ExactRational};
use crate::gfcore::PrimeModulus;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LcltResult {
    /// Gaussian approximation of `class_size · count / (nd)!` for the class.
    pub value: f64,
    /// `Σ j·d·n_j ≡ 0 (mod p)`; when false the exact class term is zero.
    pub applicable: bool,
    /// `gcd(d, p) = 1`, which the approximation assumes.
    pub gcd_ok: bool,
}

/// `p^{3/2} (p/2πn)^{(p−1)/2} exp(−(pn/2)‖𝔫 − 𝟙/p‖²)` with `𝔫 = sig/n`.
pub fn lclt_directed(sig: &ClassSignature, d: u32, p: PrimeModulus) -> LcltResult {
    let n = sig.n() as f64;
    let pf = p.get() as f64;
    let dist2: f64 = sig
        .counts()
        .iter()
        .map(|&c| (c as f64 / n - 1.0 / pf).powi(2))
        .sum();
    let value = pf.powf(1.5) * (pf / (2.0 * PI * n)).powf((pf - 1.0) / 2.0) * (-(pf * n / 2.0) * dist2).exp();
    let residue: u64 = sig
        .counts()
        .iter()
        .enumerate()
        .map(|(j, &c)| (j as u64 * (d as u64 * c as u64 % p.get())) % p.get())
        .fold(0, |a, b| (a + b) % p.get());
    LcltResult {
        value,
        applicable: residue == 0,
        gcd_ok: (d as u64).gcd(&p.get()) == 1,
    }
}

/// Exact `class_size · count / (nd)!` for a directed class.
pub fn exact_class_term(counter: &ExactCounter, sig: &ClassSignature) -> Result<f64> {
    let count = counter.directed(sig)?;
    let num = sig.class_size() * count;
    let den = counter.factorial(sig.n() * counter.d()).clone();
    Ok(ExactRational(BigRational::new(num.into(), den.into())).to_f64())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianClosure {
    pub n: u32,
    pub d: u32,
    pub p: PrimeModulus,
    pub b: f64,
    /// `(pn/2π)^{(p−1)/2} ∫_{‖x‖² ≤ b ln n/n} e^{−pn‖x‖²/2} dx`, tending to 1.
    pub closed_integral: f64,
    /// Sum of [`lclt_directed`] over congruent classes in `E`.
    pub lclt_sum: f64,
    /// Exact master-sum terms restricted to `E`, when requested.
    pub exact_restricted: Option<ExactRational>,
    /// Nonzero classes in `E`.
    pub classes_in_e: usize,
}

/// `E = {sig : Σ(n_j/n − 1/p)² ≤ b ln n / n}`.
pub fn in_balanced_region(sig: &ClassSignature, p: PrimeModulus, b: f64) -> bool {
    let n = sig.n() as f64;
    let pf = p.get() as f64;
    let dist2: f64 = sig.counts().iter().map(|&c| (c as f64 / n - 1.0 / pf).powi(2)).sum();
    dist2 <= b * n.ln() / n + 1e-12
}

/// The closed Gaussian integral equals `P(χ²_{p−1} ≤ p·b·ln n)`.
pub fn gaussian_closure_directed(n: u32, d: u32, p: PrimeModulus, b: f64, with_exact: bool) -> Result<GaussianClosure> {
    let k = (p.get() - 1) as f64;
    let r = p.get() as f64 * b * (n as f64).ln();
    let closed_integral = if r <= 0.0 { 0.0 } else { gamma_lr(k / 2.0, r / 2.0) };
    let sigs: Vec<ClassSignature> = all_signatures(n, p, false)
        .into_iter()
        .filter(|s| in_balanced_region(s, p, b))
        .collect();
    let lclt_sum = sigs
        .iter()
        .map(|s| lclt_directed(s, d, p))
        .filter(|l| l.applicable)
        .map(|l| l.value)
        .sum();
    let exact_restricted = if with_exact {
        let counter = ExactCounter::new(n, d, p);
        let mut acc = num_bigint::BigUint::zero();
        for s in &sigs {
            acc += s.class_size() * counter.directed(s)?;
        }
        let den = counter.model_size(n, Mode::Directed);
        Some(ExactRational(BigRational::new(acc.into(), den.into())))
    } else {
        None
    };
    Ok(GaussianClosure {
        n,
        d,
        p,
        b,
        closed_integral,
        lclt_sum,
        exact_restricted,
        classes_in_e: sigs.len(),
    })
}

/// `|approx − exact| / exact` for a congruent class; `None` otherwise.
pub fn lclt_relative_error(counter: &ExactCounter, sig: &ClassSignature) -> Result<Option<f64>> {
    let approx = lclt_directed(sig, counter.d(), counter.p());
    if !approx.applicable {
        return Ok(None);
    }
    let exact = exact_class_term(counter, sig)?;
    Ok(Some(((approx.value - exact) / exact).abs()))
}
