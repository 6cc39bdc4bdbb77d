//! Bounded scalar maximization: uniform grid scan followed by golden-section
//! refinement of the best bracket.

use crate::error::{MfgError, Result};

pub const GRID_POINTS: usize = 1024;
pub const RELATIVE_WIDTH: f64 = 1e-12;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Maximizes `f` on `[lo, hi]`.
///
/// `f` is sampled on a `GRID_POINTS` uniform grid; the best grid point and
/// its two neighbours form the bracket, which golden-section search narrows
/// to `RELATIVE_WIDTH * (hi - lo)`. The bracket ends are kept as candidates so
/// a maximum on the boundary of `[lo, hi]` is returned exactly.
///
/// `z` and `alpha` only label the diagnostic error.
pub fn grid_golden_argmax<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    z: f64,
    alpha: f64,
) -> Result<f64> {
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    let at = |i: usize| if i == GRID_POINTS - 1 { hi } else { lo + i as f64 * step };
    let profile: Vec<f64> = (0..GRID_POINTS).map(|i| f(at(i))).collect();
    if profile.iter().any(|v| !v.is_finite()) {
        return Err(MfgError::Bracket { z, alpha, profile });
    }
    let best = profile
        .iter()
        .enumerate()
        .fold(0, |acc, (i, &v)| if v > profile[acc] { i } else { acc });

    let mut left = at(best.saturating_sub(1));
    let mut right = at((best + 1).min(GRID_POINTS - 1));
    let (bracket_lo, bracket_hi) = (left, right);
    let width = RELATIVE_WIDTH * (hi - lo);

    let mut x1 = right - INV_PHI * (right - left);
    let mut x2 = left + INV_PHI * (right - left);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while right - left > width {
        if f1 >= f2 {
            right = x2;
            x2 = x1;
            f2 = f1;
            x1 = right - INV_PHI * (right - left);
            f1 = f(x1);
        } else {
            left = x1;
            x1 = x2;
            f1 = f2;
            x2 = left + INV_PHI * (right - left);
            f2 = f(x2);
        }
    }
    let refined = 0.5 * (left + right);

    let candidates = [at(best), bracket_lo, bracket_hi, refined];
    let mut arg = candidates[0];
    let mut val = f(arg);
    for &c in &candidates[1..] {
        let v = f(c);
        if !v.is_finite() {
            return Err(MfgError::Bracket { z, alpha, profile });
        }
        if v > val {
            arg = c;
            val = v;
        }
    }
    Ok(arg)
}
