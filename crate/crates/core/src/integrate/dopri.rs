//! Dormand-Prince 5(4) tableau and a single FSAL step.

use crate::error::Result;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// fifth-order weights minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

pub(crate) struct StepOutput {
    pub y: Vec<f64>,
    pub f: Vec<f64>,
    pub err: Vec<f64>,
}

fn combo(y: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = y.to_vec();
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        *o += h * acc;
    }
    out
}

/// One step of size `h` from `(s, y)` with `f0 = f(s, y)` already known.
pub(crate) fn step<F>(eval: &F, s: f64, y: &[f64], f0: &[f64], h: f64) -> Result<StepOutput>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
{
    let k1 = f0;
    let k2 = eval(s + C2 * h, &combo(y, h, &[(A21, k1)]))?;
    let k3 = eval(s + C3 * h, &combo(y, h, &[(A31, k1), (A32, &k2)]))?;
    let k4 = eval(s + C4 * h, &combo(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]))?;
    let k5 = eval(
        s + C5 * h,
        &combo(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    )?;
    let k6 = eval(
        s + h,
        &combo(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
    )?;
    let y_new = combo(y, h, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    let k7 = eval(s + h, &y_new)?;
    let err = (0..y.len())
        .map(|i| h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]))
        .collect();
    Ok(StepOutput { y: y_new, f: k7, err })
}

/// RMS of `err` scaled by `atol + rtol·max(|y|, |y_new|)`.
pub(crate) fn error_norm(err: &[f64], y: &[f64], y_new: &[f64], rtol: f64, atol: f64) -> f64 {
    let sum: f64 = err
        .iter()
        .zip(y.iter().zip(y_new))
        .map(|(e, (a, b))| {
            let sc = atol + rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (sum / err.len() as f64).sqrt()
}

/// Initial step guess (Hairer, Nørsett & Wanner, II.4).
pub(crate) fn initial_step<F>(eval: &F, y: &[f64], f0: &[f64], rtol: f64, atol: f64, h_max: f64) -> Result<f64>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
{
    let scale = |v: f64| atol + rtol * v.abs();
    let rms = |v: &[f64], w: &[f64]| -> f64 {
        (v.iter().zip(w).map(|(a, b)| (a / scale(*b)).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    };
    let d0 = rms(y, y);
    let d1 = rms(f0, y);
    let h0 = if d0 < 1e-10 || d1 < 1e-10 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(h_max);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let d2 = match eval(h0, &y1) {
        Ok(f1) => {
            let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
            rms(&diff, y) / h0
        }
        Err(_) => return Ok(h0 * 1e-3),
    };
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    Ok((100.0 * h0).min(h1).min(h_max))
}
