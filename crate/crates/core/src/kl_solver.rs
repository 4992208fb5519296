//! KL control by the linear backward recursion on the desirability
//! function, carried out in log domain.
//!
//! With `φ_T = 1`,
//!
//! ```text
//! log φ_t^i = logsumexp_j [ log R_t^{ij} − C_t^{ij}/α + log φ_{t+1}^j ]
//! Q_t^{ij}  = exp( log R_t^{ij} − C_t^{ij}/α + log φ_{t+1}^j − log φ_t^i )
//! V_t(P)    = −α Σ_i P^i log φ_t^i
//! ```
//!
//! Costs of order 1e5 with α = 0.1 are routine for grid worlds, far outside
//! what `exp(−C/α)` can represent, so nothing here is evaluated in linear
//! domain.

use rand::Rng;

use crate::numerics::log_sum_exp;
use crate::sampling;
use crate::scenario::{Distribution, ReferencePolicy, Scenario, TrafficGraph};

/// `log φ_t^i` for `t = 0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogDesirability {
    stages: Vec<Vec<f64>>,
    alpha: f64,
}

impl LogDesirability {
    /// Horizon `T`; there are `T + 1` stored stages.
    pub fn horizon(&self) -> usize {
        self.stages.len() - 1
    }

    pub fn at(&self, t: usize) -> &[f64] {
        &self.stages[t]
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// Time-indexed routing kernel `Q_t^{ij}`, one flat edge row per stage.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyKernel {
    stages: Vec<Vec<f64>>,
}

impl PolicyKernel {
    pub fn new(stages: Vec<Vec<f64>>) -> Self {
        Self { stages }
    }

    pub fn from_reference(reference: &ReferencePolicy) -> Self {
        Self::new((0..reference.horizon()).map(|t| reference.stage(t).to_vec()).collect())
    }

    /// Independent Dirichlet(1) rows over every out-neighborhood.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, graph: &TrafficGraph, horizon: usize) -> Self {
        let stages = (0..horizon)
            .map(|_| {
                let mut row = vec![0.0; graph.edge_count()];
                for i in 0..graph.node_count() {
                    let range = graph.edges(i);
                    let draw = sampling::dirichlet_ones(rng, range.len());
                    row[range].copy_from_slice(&draw);
                }
                row
            })
            .collect();
        Self::new(stages)
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn stage(&self, t: usize) -> &[f64] {
        &self.stages[t]
    }

    pub fn stage_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.stages[t]
    }

    /// Routing distribution at node `i`, ordered like `graph.neighbors(i)`.
    pub fn row<'a>(&'a self, graph: &TrafficGraph, t: usize, i: usize) -> &'a [f64] {
        &self.stages[t][graph.edges(i)]
    }

    pub fn get(&self, t: usize, edge: usize) -> f64 {
        self.stages[t][edge]
    }

    /// Largest deviation of any row sum from 1, or of any entry below 0.
    pub fn stochasticity_error(&self, graph: &TrafficGraph) -> f64 {
        let mut worst: f64 = 0.0;
        for stage in &self.stages {
            for i in 0..graph.node_count() {
                let row = &stage[graph.edges(i)];
                let sum: f64 = row.iter().sum();
                worst = worst.max((sum - 1.0).abs());
                for &q in row {
                    worst = worst.max(-q);
                }
            }
        }
        worst
    }

    /// The stages from `start` on.
    pub fn tail(&self, start: usize) -> Self {
        Self::new(self.stages[start..].to_vec())
    }
}

/// Unnormalized log weight of an edge: `log R − C/α + log φ_{t+1}^j`.
fn edge_log_weights(scenario: &Scenario, t: usize, next: &[f64]) -> Vec<f64> {
    let graph = &scenario.graph;
    let reference = scenario.reference.stage(t);
    (0..graph.edge_count())
        .map(|e| {
            reference[e].ln() - scenario.costs.cost(graph, t, e) / scenario.alpha
                + next[graph.target(e)]
        })
        .collect()
}

/// Backward recursion for `log φ`. The scenario is assumed valid.
pub fn backward_pass(scenario: &Scenario) -> LogDesirability {
    let graph = &scenario.graph;
    let horizon = scenario.horizon();
    let mut stages = vec![Vec::new(); horizon + 1];
    stages[horizon] = vec![0.0; graph.node_count()];
    for t in (0..horizon).rev() {
        let weights = edge_log_weights(scenario, t, &stages[t + 1]);
        stages[t] = (0..graph.node_count())
            .map(|i| log_sum_exp(weights[graph.edges(i)].iter().copied()))
            .collect();
    }
    LogDesirability {
        stages,
        alpha: scenario.alpha,
    }
}

/// Optimal kernel from the desirability function. Each row is divided by its
/// own sum after exponentiation so it is stochastic to machine precision.
pub fn extract_policy(scenario: &Scenario, log_phi: &LogDesirability) -> PolicyKernel {
    let graph = &scenario.graph;
    let stages = (0..scenario.horizon())
        .map(|t| {
            let weights = edge_log_weights(scenario, t, log_phi.at(t + 1));
            let here = log_phi.at(t);
            let mut row: Vec<f64> = weights
                .iter()
                .enumerate()
                .map(|(e, &w)| (w - here[graph.source(e)]).exp())
                .collect();
            for i in 0..graph.node_count() {
                let range = graph.edges(i);
                let sum: f64 = row[range.clone()].iter().sum();
                for q in &mut row[range] {
                    *q /= sum;
                }
            }
            row
        })
        .collect();
    PolicyKernel::new(stages)
}

/// `max_{t,i} |Σ_j R e^{−C/α} φ_{t+1}^j / φ_t^i − 1|`: how far the
/// unnormalized rows of [`extract_policy`] are from summing to one.
pub fn normalization_residual(scenario: &Scenario, log_phi: &LogDesirability) -> f64 {
    let graph = &scenario.graph;
    let mut worst: f64 = 0.0;
    for t in 0..scenario.horizon() {
        let weights = edge_log_weights(scenario, t, log_phi.at(t + 1));
        for i in 0..graph.node_count() {
            let sum: f64 = weights[graph.edges(i)]
                .iter()
                .map(|w| (w - log_phi.at(t)[i]).exp())
                .sum();
            worst = worst.max((sum - 1.0).abs());
        }
    }
    worst
}

/// Optimal cost-to-go `V_t(P) = −α Σ_i P^i log φ_t^i`.
pub fn value(log_phi: &LogDesirability, p: &Distribution, t: usize) -> f64 {
    let phi = log_phi.at(t);
    -log_phi.alpha
        * p.mass()
            .iter()
            .zip(phi)
            .filter(|(&m, _)| m != 0.0)
            .map(|(m, l)| m * l)
            .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{StageCosts, TrafficGraph};

    fn self_loop(cost: f64, horizon: usize, alpha: f64) -> Scenario {
        Scenario {
            graph: TrafficGraph::new(vec![vec![0]]),
            costs: StageCosts::stationary(vec![cost], horizon, None),
            reference: ReferencePolicy::new(vec![vec![1.0]; horizon]),
            alpha,
            initial: Distribution(vec![1.0]),
        }
    }

    #[test]
    fn zero_costs_give_zero_log_phi_and_reference_policy() {
        let mut s = Scenario::three_routes();
        s.costs = StageCosts::new(vec![vec![0.0; 6]], None);
        let lp = backward_pass(&s);
        assert!(lp.at(0).iter().chain(lp.at(1)).all(|&x| x == 0.0));
        let q = extract_policy(&s, &lp);
        assert_eq!(q.stage(0), s.reference.stage(0));
    }

    #[test]
    fn scalar_recursion_for_self_loop() {
        let (c, t_max, alpha) = (0.7, 6, 0.3);
        let s = self_loop(c, t_max, alpha);
        let lp = backward_pass(&s);
        for t in 0..=t_max {
            let want = -((t_max - t) as f64) * c / alpha;
            assert!((lp.at(t)[0] - want).abs() < 1e-12, "t={t}");
        }
        let v = value(&lp, &s.initial, 0);
        assert!((v - t_max as f64 * c).abs() < 1e-12);
        assert_eq!(value(&lp, &s.initial, t_max), 0.0);
    }

    #[test]
    fn three_route_desirability_and_policy() {
        let s = Scenario::three_routes();
        let lp = backward_pass(&s);
        let e = |x: f64| (-x).exp();
        let phi0 = (e(2.0) + e(1.0) + e(3.0)) / 3.0;
        assert!((lp.at(0)[0] - phi0.ln()).abs() < 1e-15);
        let q = extract_policy(&s, &lp);
        let want = [0.245, 0.665, 0.090];
        for (a, b) in q.row(&s.graph, 0, 0).iter().zip(want) {
            assert!((a - b).abs() < 5e-4, "{a} vs {b}");
        }
        assert!(q.stochasticity_error(&s.graph) <= 1e-15);
        assert!(normalization_residual(&s, &lp) <= 1e-10);
    }

    #[test]
    fn extreme_costs_stay_finite() {
        let s = self_loop(1e6, 3, 1e-2);
        let lp = backward_pass(&s);
        assert!((lp.at(0)[0] + 3e8).abs() < 1.0);
        let q = extract_policy(&s, &lp);
        assert_eq!(q.stage(0), &[1.0]);
    }

    #[test]
    fn value_ignores_unreachable_nodes() {
        let s = Scenario::three_routes();
        let lp = backward_pass(&s);
        let v = value(&lp, &Distribution::point_mass(4, 0), 0);
        assert!((v + lp.at(0)[0]).abs() < 1e-15);
    }
}
