//! Presets for the two experiments: the congested grid world and fictitious
//! play on three parallel routes.

use crate::error::{Error, Result};
use crate::fictitious_play::{fp_run, FpRun, SingleStageGame};
use crate::kl_solver::normalization_residual;
use crate::mean_field::{mfe_solve, MeanFieldEquilibrium};
use crate::numerics::entropy;
use crate::scenario::grid::{build_gridworld, GridSpec, GridWorld};

/// Stages rendered as heatmaps.
pub const FIG2_FRAMES: [usize; 3] = [20, 35, 50];
/// Stage at which entropy and path concentration are measured.
pub const FIG2_PROBE: usize = 35;

/// Grid-world equilibrium at one `α` with the headline statistics.
#[derive(Debug, Clone)]
pub struct GridRun {
    pub world: GridWorld,
    pub equilibrium: MeanFieldEquilibrium,
    pub value: f64,
    /// Shannon entropy of `P_35`.
    pub entropy_probe: f64,
    /// Mass of `P_35` on cells of some shortest obstacle-free path.
    pub shortest_path_mass_probe: f64,
    /// Mass of `P_T` within Manhattan distance 2 of the destination.
    pub near_destination_final: f64,
    /// Cells of `P_35` with nonzero heatmap intensity.
    pub lit_cells_probe: usize,
    pub normalization_residual: f64,
}

pub fn fig2_run(alpha: f64) -> Result<GridRun> {
    let world = build_gridworld(&GridSpec::congestion_experiment(alpha))?;
    let scenario = world.scenario.clone().validated()?;
    let equilibrium = mfe_solve(&scenario);
    let finite = (0..=scenario.horizon()).all(|t| equilibrium.log_phi.at(t).iter().all(|v| v.is_finite()))
        && equilibrium.flow.distributions.iter().all(|p| p.mass().iter().all(|m| m.is_finite()));
    if !finite {
        return Err(Error::Input(format!("non-finite desirability or flow at alpha = {alpha}")));
    }
    let layout = &world.layout;
    let probe = equilibrium.flow.at(FIG2_PROBE).mass();
    let on_path = world.shortest_path_cells();
    let max = probe.iter().copied().fold(0.0, f64::max);
    let last = equilibrium.flow.at(scenario.horizon()).mass();
    let run = GridRun {
        value: equilibrium.value(),
        entropy_probe: entropy(probe),
        shortest_path_mass_probe: (0..layout.cells()).filter(|&c| on_path[c]).map(|c| probe[c]).sum(),
        near_destination_final: (0..layout.cells())
            .filter(|&c| layout.manhattan(c, world.destination) <= 2)
            .map(|c| last[c])
            .sum(),
        lit_cells_probe: (0..layout.cells())
            .filter(|&c| !layout.is_obstacle(c) && (255.0 * probe[c] / max).round() >= 1.0)
            .count(),
        normalization_residual: normalization_residual(&scenario, &equilibrium.log_phi),
        equilibrium,
        world,
    };
    Ok(run)
}

pub const FIG4_AGENTS: [usize; 2] = [20, 200];
pub const FIG4_DAYS: usize = 10_000;

/// Fictitious play on the three-route game from the uniform belief.
pub fn fig4_run(players: usize, days: usize) -> Result<FpRun> {
    let game = SingleStageGame::three_routes(players);
    fp_run(&game, vec![1.0 / 3.0; 3], days)
}
