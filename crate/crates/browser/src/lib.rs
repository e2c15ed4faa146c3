//! Browser bindings. Each export returns a JSON string; the plain functions
//! underneath are what the native tests exercise.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use regnull_core::asymptotics::{rate_directed_explicit, rate_directed_opt, CfDomain};
use regnull_core::confmodel::Mode;
use regnull_core::exactcount::ExactCounter;
use regnull_core::gfcore::PrimeModulus;
use regnull_core::walkdist::{build_support, CharFnEvaluator};

const MAX_RESOLUTION: u32 = 400;
const MAX_CURVE_N: u32 = 200;

fn prime(p: u32) -> Result<PrimeModulus, String> {
    PrimeModulus::new(p as u64).map_err(|e| e.to_string())
}

fn check_resolution(r: u32) -> Result<(), String> {
    if !(2..=MAX_RESOLUTION).contains(&r) {
        return Err(format!("resolution must be in 2..={MAX_RESOLUTION}"));
    }
    Ok(())
}

/// Directed rate over the simplex `𝔫_0 + 𝔫_1 + 𝔫_2 = 1` at `p = 3`.
///
/// Cell `(i, j)` holds the rate at `𝔫 = (1 − x − y, x, y)` with
/// `x = i/res`, `y = j/res`, or null outside the simplex.
pub fn rate_heatmap(d: u32, resolution: u32, optimized: bool) -> Result<Value, String> {
    check_resolution(resolution)?;
    let p = prime(3)?;
    let mut rows = Vec::with_capacity(resolution as usize + 1);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..=resolution {
        let mut row = Vec::with_capacity(resolution as usize + 1);
        for j in 0..=resolution {
            if i + j > resolution {
                row.push(Value::Null);
                continue;
            }
            let x = i as f64 / resolution as f64;
            let y = j as f64 / resolution as f64;
            let frak_n = [(1.0 - x - y).max(0.0), x, y];
            let v = if optimized {
                rate_directed_opt(&frak_n, d, p).map_err(|e| e.to_string())?.value
            } else {
                rate_directed_explicit(&frak_n, d, p).map_err(|e| e.to_string())?
            };
            if v.is_finite() {
                lo = lo.min(v);
                hi = hi.max(v);
                row.push(json!(v));
            } else {
                row.push(Value::Null);
            }
        }
        rows.push(Value::Array(row));
    }
    Ok(json!({ "d": d, "p": 3, "resolution": resolution, "optimized": optimized, "min": lo, "max": hi, "values": rows }))
}

/// `|φ_{X−μ}|` on the slice `t = (0, t_1, t_2)` of the torus at `p = 3`, with
/// the index of the domain `B_j(δ)` containing each point (or −1).
pub fn cf_slice(d: u32, delta: f64, resolution: u32) -> Result<Value, String> {
    check_resolution(resolution)?;
    let p = prime(3)?;
    let domain = CfDomain::new(p, delta).map_err(|e| e.to_string())?;
    let eval = CharFnEvaluator::new(&build_support(d, p));
    let step = std::f64::consts::TAU / resolution as f64;
    let mut values = Vec::with_capacity(resolution as usize);
    let mut inside = Vec::with_capacity(resolution as usize);
    let mut max_outside = 0.0f64;
    for i in 0..resolution {
        let mut vr = Vec::with_capacity(resolution as usize);
        let mut ir = Vec::with_capacity(resolution as usize);
        for j in 0..resolution {
            let t = [0.0, i as f64 * step, j as f64 * step];
            let a = eval.abs_centered(&t);
            let k = domain.containing(&t).map_or(-1, |k| k as i64);
            if k < 0 {
                max_outside = max_outside.max(a);
            }
            vr.push(a);
            ir.push(k);
        }
        values.push(vr);
        inside.push(ir);
    }
    Ok(json!({ "d": d, "p": 3, "delta": delta, "resolution": resolution, "max_abs_outside": max_outside, "values": values, "domain": inside }))
}

/// Exact master sums for `n = 1..=n_max`, skipping sizes the mode forbids.
pub fn master_sum_curve(d: u32, p: u32, undirected: bool, n_max: u32) -> Result<Value, String> {
    if n_max == 0 || n_max > MAX_CURVE_N {
        return Err(format!("n_max must be in 1..={MAX_CURVE_N}"));
    }
    let p = prime(p)?;
    let mode = if undirected { Mode::Undirected } else { Mode::Directed };
    let counter = ExactCounter::new(n_max, d, p);
    let mut points = Vec::new();
    for n in 1..=n_max {
        if undirected && (n * d) % 2 == 1 {
            continue;
        }
        match counter.master_sum(n, mode) {
            Ok(v) => points.push(json!({ "n": n, "value": v })),
            Err(e) if e.is_budget() => break,
            Err(e) => return Err(e.to_string()),
        }
    }
    Ok(json!({ "d": d, "p": p.get(), "mode": mode, "points": points }))
}

fn export(r: Result<Value, String>) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = rateHeatmap)]
pub fn rate_heatmap_js(d: u32, resolution: u32, optimized: bool) -> Result<String, JsError> {
    export(rate_heatmap(d, resolution, optimized))
}

#[wasm_bindgen(js_name = cfSlice)]
pub fn cf_slice_js(d: u32, delta: f64, resolution: u32) -> Result<String, JsError> {
    export(cf_slice(d, delta, resolution))
}

#[wasm_bindgen(js_name = masterSumCurve)]
pub fn master_sum_curve_js(d: u32, p: u32, undirected: bool, n_max: u32) -> Result<String, JsError> {
    export(master_sum_curve(d, p, undirected, n_max))
}
