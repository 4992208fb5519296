//! Symmetric fictitious play on the single-stage game with `J` parallel
//! routes.
//!
//! All players share one belief `Q[ℓ]` about everybody else. On day `ℓ`
//! they all pick the route with the lowest assumed cost under `Q[ℓ]`, and
//! the belief becomes the running average of the picks:
//! `Q[ℓ+1] = (ℓ Q[ℓ] + δ(r[ℓ])) / (ℓ + 1)`.

use crate::error::{Error, Result};
use crate::numerics::LogShareKernel;
use crate::scenario::{Scenario, STOCHASTIC_TOL};
use crate::symmetric_equilibrium::{solve_single_stage_mfe, solve_symmetric_ne, EquilibriumResult};

/// `N` players choosing among `J ≥ 2` parallel routes.
#[derive(Debug, Clone)]
pub struct SingleStageGame {
    costs: Vec<f64>,
    reference: Vec<f64>,
    alpha: f64,
    kernel: LogShareKernel,
}

impl SingleStageGame {
    pub fn new(costs: Vec<f64>, reference: Vec<f64>, alpha: f64, players: usize) -> Result<Self> {
        if costs.len() < 2 {
            return Err(Error::Input(format!("need at least 2 routes, got {}", costs.len())));
        }
        if reference.len() != costs.len() {
            return Err(Error::Dimension(format!(
                "{} reference shares for {} routes",
                reference.len(),
                costs.len()
            )));
        }
        if let Some(c) = costs.iter().find(|c| !c.is_finite()) {
            return Err(Error::Input(format!("route cost {c} is not finite")));
        }
        if let Some(r) = reference.iter().find(|&&r| !(r > 0.0)) {
            return Err(Error::Input(format!("reference share {r} is not positive")));
        }
        let total: f64 = reference.iter().sum();
        if !((total - 1.0).abs() <= STOCHASTIC_TOL) {
            return Err(Error::Input(format!("reference shares sum to {total}")));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::Input(format!("alpha must be positive, got {alpha}")));
        }
        if players == 0 {
            return Err(Error::Input("need at least one player".into()));
        }
        Ok(Self {
            costs,
            reference,
            alpha,
            kernel: LogShareKernel::new(players),
        })
    }

    /// Costs (2, 1, 3), uniform reference, α = 1.
    pub fn three_routes(players: usize) -> Self {
        Self::new(vec![2.0, 1.0, 3.0], vec![1.0 / 3.0; 3], 1.0, players).expect("valid game")
    }

    pub fn routes(&self) -> usize {
        self.costs.len()
    }

    pub fn players(&self) -> usize {
        self.kernel.players()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    /// Expected cost of route `j` when each other player takes it with
    /// probability `q`:
    /// `C^j + α Σ_k log((k+1)/(N R^j)) Bin(N−1, k; q)`.
    pub fn route_cost(&self, route: usize, q: f64) -> f64 {
        self.costs[route] + self.alpha * (self.kernel.eval(q) - self.reference[route].ln())
    }

    /// The same game as a one-stage network: origin plus one absorbing sink
    /// per route.
    pub fn to_scenario(&self) -> Scenario {
        Scenario::parallel_routes(&self.costs, &self.reference, self.alpha)
    }
}

/// Assumed cost `y^j` of every route under belief `q`.
pub fn assumed_cost(game: &SingleStageGame, belief: &[f64]) -> Vec<f64> {
    belief
        .iter()
        .enumerate()
        .map(|(j, &q)| game.route_cost(j, q))
        .collect()
}

/// Beliefs `Q[1], Q[2], …` and the routes chosen on each day.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefPath {
    /// `beliefs[ℓ - 1]` is `Q[ℓ]`.
    pub beliefs: Vec<Vec<f64>>,
    /// `choices[ℓ - 1]` is `r[ℓ]`, 0-based route index.
    pub choices: Vec<usize>,
}

impl BeliefPath {
    pub fn new(initial: Vec<f64>) -> Self {
        Self {
            beliefs: vec![initial],
            choices: Vec::new(),
        }
    }

    /// Current day `ℓ` (the index of the latest belief).
    pub fn day(&self) -> usize {
        self.beliefs.len()
    }

    pub fn current(&self) -> &[f64] {
        self.beliefs.last().expect("path is never empty")
    }
}

/// Lowest-index minimizer.
fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = j;
        }
    }
    best
}

/// One day: best response to the current belief, then the averaging update.
pub fn fp_step(game: &SingleStageGame, path: &mut BeliefPath) {
    let day = path.day() as f64;
    let choice = argmin(&assumed_cost(game, path.current()));
    let next = path
        .current()
        .iter()
        .enumerate()
        .map(|(j, &q)| (day * q + if j == choice { 1.0 } else { 0.0 }) / (day + 1.0))
        .collect();
    path.choices.push(choice);
    path.beliefs.push(next);
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// A fictitious-play run with distances of every belief to the finite-N
/// symmetric equilibrium and to the mean-field equilibrium.
#[derive(Debug, Clone)]
pub struct FpRun {
    pub path: BeliefPath,
    pub equilibrium: EquilibriumResult,
    pub mean_field: Vec<f64>,
    /// `‖Q[ℓ] − Q^{(N)*}‖∞` for every belief on the path.
    pub dist_to_ne: Vec<f64>,
    /// `‖Q[ℓ] − Q*‖∞` for every belief on the path.
    pub dist_to_mfe: Vec<f64>,
}

impl FpRun {
    pub fn final_belief(&self) -> &[f64] {
        self.path.current()
    }
}

pub fn fp_run(game: &SingleStageGame, initial: Vec<f64>, days: usize) -> Result<FpRun> {
    if initial.len() != game.routes() {
        return Err(Error::Dimension(format!(
            "initial belief has {} entries for {} routes",
            initial.len(),
            game.routes()
        )));
    }
    let total: f64 = initial.iter().sum();
    if initial.iter().any(|&q| !(q >= 0.0)) || !((total - 1.0).abs() <= STOCHASTIC_TOL) {
        return Err(Error::Input("initial belief is not on the simplex".into()));
    }
    if days == 0 {
        return Err(Error::Input("need at least one day".into()));
    }
    let equilibrium = solve_symmetric_ne(game);
    let mean_field = solve_single_stage_mfe(game);
    let mut path = BeliefPath::new(initial);
    for _ in 0..days {
        fp_step(game, &mut path);
    }
    let dist_to_ne = path.beliefs.iter().map(|q| sup_distance(q, &equilibrium.q)).collect();
    let dist_to_mfe = path.beliefs.iter().map(|q| sup_distance(q, &mean_field)).collect();
    Ok(FpRun {
        path,
        equilibrium,
        mean_field,
        dist_to_ne,
        dist_to_mfe,
    })
}
