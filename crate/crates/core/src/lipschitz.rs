//! Finite-difference estimates of the best-response Lipschitz constants.

use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::game::GameSpec;

pub const DEFAULT_GRID: usize = 512;

/// How the estimate was sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub z_range: (f64, f64),
    pub alpha_range: (f64, f64),
    pub z_points: usize,
    pub alpha_points: usize,
}

/// Estimated constants: `l_z` bounds the slope of `Br` in the mean value,
/// `l_alpha` the slope in the parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimates {
    pub l_z: f64,
    pub l_alpha: f64,
    pub grid: GridMeta,
    pub lipschitz_ok: bool,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + i as f64 * step })
        .collect()
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !lo.is_finite() || !hi.is_finite() || lo >= hi {
        return Err(MfgError::Domain(format!("{name} range must be finite with lo < hi, got [{lo}, {hi}]")));
    }
    Ok(())
}

fn max_secant(values: &[f64], coords: &[f64]) -> f64 {
    values
        .windows(2)
        .zip(coords.windows(2))
        .map(|(v, c)| (v[1] - v[0]).abs() / (c[1] - c[0]))
        .fold(0.0, f64::max)
}

/// Largest secant slope of `Br` between adjacent points of a
/// `grid.0 x grid.1` grid over `z_range x alpha_range`.
pub fn estimate_lipschitz(
    game: &GameSpec,
    z_range: (f64, f64),
    alpha_range: (f64, f64),
    grid: (usize, usize),
) -> Result<LipschitzEstimates> {
    check_range("z", z_range)?;
    check_range("alpha", alpha_range)?;
    if grid.0 < 2 || grid.1 < 2 {
        return Err(MfgError::Size(format!("grid needs at least 2 points per axis, got {grid:?}")));
    }
    let alphas = linspace(alpha_range.0, alpha_range.1, grid.1);
    estimate_on(game, z_range, &alphas, grid.0, alpha_range)
}

/// Same estimate with the parameter axis given by explicit values, e.g. the
/// parameters of an actual population. `l_alpha` is taken over adjacent
/// distinct sorted values.
pub fn estimate_lipschitz_on_params(
    game: &GameSpec,
    z_range: (f64, f64),
    alphas: &[f64],
    z_points: usize,
) -> Result<LipschitzEstimates> {
    check_range("z", z_range)?;
    if z_points < 2 {
        return Err(MfgError::Size(format!("need at least 2 z points, got {z_points}")));
    }
    if alphas.is_empty() {
        return Err(MfgError::Size("no parameter values given".into()));
    }
    let mut sorted = alphas.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let range = (sorted[0], sorted[sorted.len() - 1]);
    estimate_on(game, z_range, &sorted, z_points, range)
}

fn estimate_on(
    game: &GameSpec,
    z_range: (f64, f64),
    alphas: &[f64],
    z_points: usize,
    alpha_range: (f64, f64),
) -> Result<LipschitzEstimates> {
    let zs = linspace(z_range.0, z_range.1, z_points);
    // table[j][i] = Br(z_i, alpha_j)
    let table = alphas
        .iter()
        .map(|&a| zs.iter().map(|&z| game.best_response(z, a)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;

    let l_z = table.iter().map(|row| max_secant(row, &zs)).fold(0.0, f64::max);
    let mut l_alpha: f64 = 0.0;
    let mut column = vec![0.0; alphas.len()];
    for i in 0..zs.len() {
        for (j, row) in table.iter().enumerate() {
            column[j] = row[i];
        }
        l_alpha = l_alpha.max(max_secant(&column, alphas));
    }
    Ok(LipschitzEstimates {
        l_z,
        l_alpha,
        grid: GridMeta {
            z_range,
            alpha_range,
            z_points,
            alpha_points: alphas.len(),
        },
        lipschitz_ok: l_z < 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{Population, UtilityFamily};

    fn game(u: UtilityFamily, lo: f64, hi: f64) -> GameSpec {
        GameSpec::new(u, lo, hi, Population::Params(vec![0.0])).unwrap()
    }

    #[test]
    fn linear_slopes_are_recovered() {
        let g = game(UtilityFamily::linear(0.4, 0.1, 0.0).unwrap(), -10.0, 10.0);
        let est = estimate_lipschitz(&g, (-5.0, 5.0), (-5.0, 5.0), (64, 64)).unwrap();
        assert!((est.l_z - 0.4).abs() < 1e-12);
        assert!((est.l_alpha - 0.1).abs() < 1e-12);
        assert!(est.lipschitz_ok);
        let g = game(UtilityFamily::linear(-0.7, -2.0, 0.0).unwrap(), -100.0, 100.0);
        let est = estimate_lipschitz(&g, (-5.0, 5.0), (-5.0, 5.0), (33, 17)).unwrap();
        assert!((est.l_z - 0.7).abs() < 1e-12 && (est.l_alpha - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_best_response_has_zero_constants() {
        let g = game(UtilityFamily::constant(1.5).unwrap(), 0.0, 3.0);
        let est = estimate_lipschitz(&g, (0.0, 3.0), (-1.0, 1.0), (16, 16)).unwrap();
        assert_eq!((est.l_z, est.l_alpha), (0.0, 0.0));
    }

    #[test]
    fn hypot_slope_matches_derivative_oracle() {
        // d/dz sqrt(z^2 + a^2) = z / sqrt(z^2 + a^2); the largest value on the
        // region is at the top z edge and the smallest |alpha| on the grid.
        let g = GameSpec::hypot_example();
        let est = estimate_lipschitz(&g, (0.5, 20.0), (-8.0, 8.0), (512, 512)).unwrap();
        let h = 16.0 / 511.0;
        let a_min: f64 = 0.5 * h;
        let dz: f64 = 19.5 / 511.0;
        let fd = ((20.0f64).hypot(a_min) - (20.0f64 - dz).hypot(a_min)) / dz;
        assert!(est.lipschitz_ok);
        assert!(est.l_z < 1.0 && est.l_z > 0.999);
        assert!((est.l_z - fd).abs() < 1e-9, "{} vs {}", est.l_z, fd);
    }

    #[test]
    fn explicit_parameter_axis() {
        let g = game(UtilityFamily::linear(0.4, 0.1, 0.0).unwrap(), -10.0, 10.0);
        let est = estimate_lipschitz_on_params(&g, (-1.0, 1.0), &[3.0, 1.0, 2.0, 2.0], 8).unwrap();
        assert!((est.l_z - 0.4).abs() < 1e-12 && (est.l_alpha - 0.1).abs() < 1e-12);
        assert_eq!(est.grid.alpha_points, 3);
        assert_eq!(est.grid.alpha_range, (1.0, 3.0));
    }

    #[test]
    fn non_contractive_game_is_flagged() {
        let g = game(UtilityFamily::analytic("steep", |z, _| 1.5 * z), -10.0, 10.0);
        let est = estimate_lipschitz(&g, (-1.0, 1.0), (0.0, 1.0), (16, 4)).unwrap();
        assert!(!est.lipschitz_ok);
        assert!((est.l_z - 1.5).abs() < 1e-12);
    }

    #[test]
    fn degenerate_ranges_are_rejected() {
        let g = GameSpec::hypot_example();
        assert!(estimate_lipschitz(&g, (1.0, 1.0), (0.0, 1.0), (4, 4)).is_err());
        assert!(estimate_lipschitz(&g, (0.0, 1.0), (0.0, 1.0), (1, 4)).is_err());
    }
}
