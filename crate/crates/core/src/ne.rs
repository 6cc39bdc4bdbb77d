//! Finite-population Nash equilibrium.
//!
//! The equilibrium is the fixed point of the joint best-response map
//! `G(X)_i = Br(mean_excluding(X, i), alpha_i)`. When `Br` is `L_z`-Lipschitz
//! in the mean value, `G` contracts in the infinity norm with the same
//! constant, so synchronous iteration converges geometrically from any start.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::game::{means_excluding, GameSpec};

/// Populations at least this large evaluate best responses in parallel.
const PARALLEL_THRESHOLD: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Starting profile; every agent starts at the interval midpoint when unset.
    pub initial_actions: Option<Vec<f64>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
            initial_actions: None,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(MfgError::Domain(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(MfgError::Domain("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub actions: Vec<f64>,
    /// Leave-one-out means of `actions`.
    pub means: Vec<f64>,
    pub iterations: usize,
    /// Infinity norm of the last update.
    pub residual_inf: f64,
    pub converged: bool,
    /// Infinity norm of every update, in order.
    pub update_norms: Vec<f64>,
}

fn joint_best_response(game: &GameSpec, params: &[f64], actions: &[f64]) -> Result<Vec<f64>> {
    let means = means_excluding(actions);
    if params.len() >= PARALLEL_THRESHOLD {
        means
            .par_iter()
            .zip(params.par_iter())
            .map(|(&z, &a)| game.best_response(z, a))
            .collect()
    } else {
        means
            .iter()
            .zip(params)
            .map(|(&z, &a)| game.best_response(z, a))
            .collect()
    }
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Synchronous best-response iteration, stopped once the infinity norm of an
/// update is at most `cfg.tol`. Hitting `cfg.max_iter` is not an error: the
/// last iterate is returned with `converged = false`.
pub fn solve_ne(game: &GameSpec, cfg: &SolverConfig) -> Result<EquilibriumResult> {
    cfg.validate()?;
    let params = game
        .params()
        .ok_or_else(|| MfgError::Domain("Nash equilibrium needs an explicit parameter list".into()))?;
    let n = params.len();
    if n < 2 {
        return Err(MfgError::Size(format!("need at least 2 agents, got {n}")));
    }
    let mut actions = match &cfg.initial_actions {
        Some(x0) if x0.len() != n => {
            return Err(MfgError::Size(format!(
                "initial profile has {} entries for {n} agents",
                x0.len()
            )))
        }
        Some(x0) => x0.iter().map(|x| x.clamp(game.action_lo, game.action_hi)).collect(),
        None => vec![game.midpoint(); n],
    };

    let mut update_norms = Vec::new();
    let mut converged = false;
    while update_norms.len() < cfg.max_iter {
        let next = joint_best_response(game, params, &actions)?;
        let step = sup_distance(&next, &actions);
        actions = next;
        update_norms.push(step);
        if step <= cfg.tol {
            converged = true;
            break;
        }
    }
    let means = means_excluding(&actions);
    Ok(EquilibriumResult {
        iterations: update_norms.len(),
        residual_inf: *update_norms.last().unwrap_or(&f64::INFINITY),
        converged,
        actions,
        means,
        update_norms,
    })
}

/// Equilibrium of the discretized game, used as an oracle for [`solve_ne`].
///
/// Each agent picks among `grid_points` evenly spaced actions. Agents take
/// turns (round-robin) replacing their action by the grid maximizer of their
/// utility given the others' current actions, until a full round changes
/// nothing. Revisiting a profile means the discrete dynamics cycle.
pub fn brute_force_ne(game: &GameSpec, grid_points: usize) -> Result<EquilibriumResult> {
    let params = game
        .params()
        .ok_or_else(|| MfgError::Domain("brute force needs an explicit parameter list".into()))?;
    let n = params.len();
    if !(2..=4).contains(&n) {
        return Err(MfgError::Size(format!("brute force supports 2..=4 agents, got {n}")));
    }
    if grid_points < 64 {
        return Err(MfgError::Size(format!("need at least 64 grid points, got {grid_points}")));
    }
    let step = (game.action_hi - game.action_lo) / (grid_points - 1) as f64;
    let grid: Vec<f64> = (0..grid_points)
        .map(|i| if i == grid_points - 1 { game.action_hi } else { game.action_lo + i as f64 * step })
        .collect();

    let mut idx = vec![grid_points / 2; n];
    let mut seen: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut rounds = 0;
    let mut last_move = 0.0;
    loop {
        if let Some(&first) = seen.get(&idx) {
            return Err(MfgError::Cycle {
                length: rounds - first,
                steps: rounds,
            });
        }
        seen.insert(idx.clone(), rounds);
        rounds += 1;
        let mut changed = false;
        let mut round_move: f64 = 0.0;
        for i in 0..n {
            let others: f64 = (0..n).filter(|&j| j != i).map(|j| grid[idx[j]]).sum();
            let z = others / (n - 1) as f64;
            let mut best = idx[i];
            let mut best_u = game.utility.utility(grid[best], z, params[i])?;
            for (k, &x) in grid.iter().enumerate() {
                let u = game.utility.utility(x, z, params[i])?;
                if u > best_u {
                    best_u = u;
                    best = k;
                }
            }
            if best != idx[i] {
                round_move = round_move.max((grid[best] - grid[idx[i]]).abs());
                idx[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        last_move = round_move;
    }
    let actions: Vec<f64> = idx.iter().map(|&i| grid[i]).collect();
    let means = means_excluding(&actions);
    Ok(EquilibriumResult {
        actions,
        means,
        iterations: rounds,
        residual_inf: 0.0,
        converged: true,
        update_norms: vec![last_move, 0.0],
    })
}
