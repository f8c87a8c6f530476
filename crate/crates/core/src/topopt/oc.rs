use crate::error::{Error, Result};

/// Sensitivities above this are treated as a sign violation.
const SIGN_TOLERANCE: f64 = 1e-12;

/// Optimality-criteria density update.
///
/// `rho_e · sqrt(−dc_e / (λ dv_e))` clamped to the move window and `[0, 1]`,
/// with the multiplier `λ` found by bisection so the mean density hits
/// `vf_target`.
pub fn oc_update(rho: &[f64], dc: &[f64], dv: &[f64], vf_target: f64, move_limit: f64) -> Result<Vec<f64>> {
    let n = rho.len();
    if dc.len() != n || dv.len() != n {
        return Err(Error::shape(
            format!("{n} sensitivities"),
            format!("{} and {}", dc.len(), dv.len()),
        ));
    }
    if !(vf_target > 0.0 && vf_target < 1.0) {
        return Err(Error::InvalidInput(format!(
            "volume fraction must lie in (0, 1), got {vf_target}"
        )));
    }
    if !(move_limit > 0.0) {
        return Err(Error::InvalidInput(format!("move limit must be positive, got {move_limit}")));
    }
    if let Some((index, &value)) = dc.iter().enumerate().find(|(_, &v)| v > SIGN_TOLERANCE || !v.is_finite()) {
        return Err(Error::MonotonicityViolation { index, value });
    }
    if let Some(&v) = dv.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::InvalidInput(format!("volume sensitivities must be positive, got {v}")));
    }

    let lower: Vec<f64> = rho.iter().map(|&r| (r - move_limit).max(0.0)).collect();
    let upper: Vec<f64> = rho.iter().map(|&r| (r + move_limit).min(1.0)).collect();
    let ratio: Vec<f64> = dc.iter().zip(dv).map(|(&c, &v)| (-c).max(0.0) / v).collect();
    let update = |lambda: f64, out: &mut [f64]| {
        for e in 0..n {
            out[e] = (rho[e] * (ratio[e] / lambda).sqrt()).clamp(lower[e], upper[e]);
        }
    };
    let mut x = vec![0.0; n];
    let volume = |lambda: f64, x: &mut [f64]| {
        update(lambda, x);
        x.iter().sum::<f64>() / n as f64
    };

    // mean density is non-increasing in lambda; bracket then bisect
    let mut hi = 1.0;
    while volume(hi, &mut x) > vf_target && hi < 1e300 {
        hi *= 2.0;
    }
    let mut lo = hi * 0.5;
    while volume(lo, &mut x) < vf_target && lo > 1e-300 {
        lo *= 0.5;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if volume(mid, &mut x) > vf_target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    let v_lo = volume(lo, &mut x.clone());
    let v_hi = volume(hi, &mut x);
    if (v_lo - vf_target).abs() < (v_hi - vf_target).abs() {
        update(lo, &mut x);
    }
    Ok(x)
}
