use crate::{SimpConfig, SimpError};

/// Density floor; keeps sensitivities and the filter denominator finite.
pub const RHO_MIN: f64 = 1e-3;

const VOLUME_TOL: f64 = 1e-9;

/// Optimality-criteria update
/// `ρ⁺ = clamp(ρ (-s/λ)^η, max(ρ - m, ρ_min), min(ρ + m, 1))`, with the
/// multiplier `λ` bisected (geometrically) until `mean(ρ⁺) = volfrac`.
pub fn oc_update(density: &[f64], sensitivities: &[f64], cfg: &SimpConfig) -> Result<Vec<f64>, SimpError> {
    assert_eq!(density.len(), sensitivities.len());
    let n = density.len() as f64;
    let target = cfg.volfrac;
    let m = cfg.move_limit;
    let bounds: Vec<(f64, f64)> = density
        .iter()
        .map(|&r| ((r - m).max(RHO_MIN), (r + m).min(1.0)))
        .collect();
    let lower_mean = bounds.iter().map(|b| b.0).sum::<f64>() / n;
    let upper_mean = bounds.iter().map(|b| b.1).sum::<f64>() / n;
    if target < lower_mean - VOLUME_TOL || target > upper_mean + VOLUME_TOL {
        return Err(SimpError::BisectionFailure(format!(
            "volfrac {target} unreachable within move limits [{lower_mean:.6}, {upper_mean:.6}]"
        )));
    }

    let update = |lambda: f64, out: &mut Vec<f64>| -> f64 {
        out.clear();
        let mut total = 0.0;
        for ((&r, &s), &(lo, hi)) in density.iter().zip(sensitivities).zip(&bounds) {
            let ratio = (-s).max(0.0) / lambda;
            let v = (r * ratio.powf(cfg.damping)).clamp(lo, hi);
            total += v;
            out.push(v);
        }
        total / n
    };

    let mut buf = Vec::with_capacity(density.len());
    let mut hi = 1.0;
    while update(hi, &mut buf) > target {
        hi *= 4.0;
        if hi > 1e300 {
            return Err(SimpError::BisectionFailure("upper multiplier diverged".into()));
        }
    }
    let mut lo = hi;
    while update(lo, &mut buf) < target {
        lo *= 0.25;
        if lo < 1e-300 {
            return Err(SimpError::BisectionFailure("lower multiplier vanished".into()));
        }
    }
    let mut best = update(lo, &mut buf);
    for _ in 0..400 {
        if (best - target).abs() <= VOLUME_TOL {
            break;
        }
        let mid = (lo * hi).sqrt();
        if !(mid > lo && mid < hi) {
            break;
        }
        best = update(mid, &mut buf);
        if best > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(buf)
}
