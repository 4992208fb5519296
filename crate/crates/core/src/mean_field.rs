//! Population flow under a routing kernel, mean-field cost of a unilateral
//! deviation, and the equalizer certificate for the equilibrium.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kl_solver::{backward_pass, extract_policy, value, LogDesirability, PolicyKernel};
use crate::scenario::{Distribution, Scenario, TrafficGraph};

/// Distributions `P_0..P_T` induced by a kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrajectory {
    pub distributions: Vec<Distribution>,
    pub policy: PolicyKernel,
}

impl FlowTrajectory {
    pub fn at(&self, t: usize) -> &Distribution {
        &self.distributions[t]
    }

    /// Largest violation of `P_{t+1}^j = Σ_i P_t^i Q_t^{ij}` over all `t, j`.
    pub fn transition_residual(&self, graph: &TrafficGraph) -> f64 {
        let mut worst: f64 = 0.0;
        for t in 0..self.policy.horizon() {
            let next = step(graph, self.policy.stage(t), self.at(t).mass());
            for (a, b) in next.iter().zip(self.at(t + 1).mass()) {
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }
}

fn step(graph: &TrafficGraph, q: &[f64], p: &[f64]) -> Vec<f64> {
    let mut next = vec![0.0; p.len()];
    for (i, &mass) in p.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        for e in graph.edges(i) {
            next[graph.target(e)] += mass * q[e];
        }
    }
    next
}

/// Forward recursion `P_{t+1}^j = Σ_i P_t^i Q_t^{ij}` from `initial`.
pub fn propagate_from(graph: &TrafficGraph, policy: &PolicyKernel, initial: &Distribution) -> FlowTrajectory {
    let mut distributions = Vec::with_capacity(policy.horizon() + 1);
    distributions.push(initial.clone());
    for t in 0..policy.horizon() {
        let next = step(graph, policy.stage(t), distributions[t].mass());
        distributions.push(Distribution(next));
    }
    FlowTrajectory {
        distributions,
        policy: policy.clone(),
    }
}

/// Forward recursion from the scenario's initial distribution.
pub fn propagate(scenario: &Scenario, policy: &PolicyKernel) -> FlowTrajectory {
    propagate_from(&scenario.graph, policy, &scenario.initial)
}

/// Mean-field cost of playing `policy` while the population plays
/// `population`:
///
/// ```text
/// Σ_t Σ_{i,j} P_t^i Q_t^{ij} (C_t^{ij} + α log(Q*_t^{ij} / R_t^{ij}))
/// ```
///
/// with `P` the deviator's own flow under `policy`. Fails if the deviator
/// reaches an edge that the population never uses.
pub fn evaluate_policy_cost(scenario: &Scenario, policy: &PolicyKernel, population: &PolicyKernel) -> Result<f64> {
    let graph = &scenario.graph;
    let flow = propagate(scenario, policy);
    let mut total = 0.0;
    for t in 0..scenario.horizon() {
        let p = flow.at(t).mass();
        let q = policy.stage(t);
        let q_pop = population.stage(t);
        let reference = scenario.reference.stage(t);
        for e in graph.all_edges() {
            let weight = p[e.from] * q[e.id];
            if weight == 0.0 {
                continue;
            }
            if q_pop[e.id] <= 0.0 {
                return Err(Error::LogOfZero {
                    t,
                    i: e.from,
                    j: e.to,
                });
            }
            let toll = scenario.alpha * (q_pop[e.id].ln() - reference[e.id].ln());
            total += weight * (scenario.costs.cost(graph, t, e.id) + toll);
        }
    }
    Ok(total)
}

/// `max_k |cost(trial_k, population) − V_0(P_0)|`, with `V_0` from the
/// scenario's own desirability function. Near zero certifies that every
/// trial is a best response to `population`.
pub fn equalizer_gap(scenario: &Scenario, population: &PolicyKernel, trials: &[PolicyKernel]) -> Result<f64> {
    let log_phi = backward_pass(scenario);
    let target = value(&log_phi, &scenario.initial, 0);
    trials
        .par_iter()
        .map(|q| evaluate_policy_cost(scenario, q, population).map(|c| (c - target).abs()))
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// Mean-field equilibrium of a scenario.
#[derive(Debug, Clone)]
pub struct MeanFieldEquilibrium {
    pub policy: PolicyKernel,
    pub flow: FlowTrajectory,
    pub log_phi: LogDesirability,
}

impl MeanFieldEquilibrium {
    /// Equilibrium cost `V_0(P_0)`.
    pub fn value(&self) -> f64 {
        value(&self.log_phi, self.flow.at(0), 0)
    }
}

/// Backward pass, policy extraction, forward propagation.
pub fn mfe_solve(scenario: &Scenario) -> MeanFieldEquilibrium {
    let log_phi = backward_pass(scenario);
    let policy = extract_policy(scenario, &log_phi);
    let flow = propagate(scenario, &policy);
    MeanFieldEquilibrium {
        policy,
        flow,
        log_phi,
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::scenario::{random_scenario, RandomScenarioSpec, StageCosts};

    #[test]
    fn self_loop_policy_freezes_the_population() {
        let s = Scenario::three_routes();
        let mut stay = PolicyKernel::from_reference(&s.reference);
        stay.stage_mut(0)[..3].copy_from_slice(&[1.0, 0.0, 0.0]);
        // origin has no self-loop, so stay on route 1 instead; sinks keep mass
        let flow = propagate_from(&s.graph, &stay, &Distribution(vec![0.0, 0.2, 0.3, 0.5]));
        assert_eq!(flow.at(1).mass(), &[0.0, 0.2, 0.3, 0.5]);
    }

    #[test]
    fn three_route_first_stage_is_the_policy() {
        let s = Scenario::three_routes();
        let eq = mfe_solve(&s);
        let q = eq.policy.row(&s.graph, 0, 0);
        assert_eq!(&eq.flow.at(1).mass()[1..], q);
        assert_eq!(eq.flow.at(1).mass()[0], 0.0);
    }

    #[test]
    fn reference_deviation_hits_the_equalizer_value() {
        let s = Scenario::three_routes();
        let eq = mfe_solve(&s);
        let r = PolicyKernel::from_reference(&s.reference);
        let v0 = eq.value();
        let own = evaluate_policy_cost(&s, &eq.policy, &eq.policy).unwrap();
        let dev = evaluate_policy_cost(&s, &r, &eq.policy).unwrap();
        assert!((own - v0).abs() <= 1e-10);
        assert!((dev - v0).abs() <= 1e-10);
        // direct summation: Σ_j (1/3)(C_j + log(Q*_j / (1/3)))
        let c = [2.0, 1.0, 3.0];
        let q = eq.policy.row(&s.graph, 0, 0);
        let direct: f64 = (0..3).map(|j| (c[j] + (3.0 * q[j]).ln()) / 3.0).sum();
        assert!((dev - direct).abs() <= 1e-14);
    }

    #[test]
    fn reference_population_removes_the_toll() {
        let s = Scenario::three_routes();
        let r = PolicyKernel::from_reference(&s.reference);
        let eq = mfe_solve(&s);
        let cost = evaluate_policy_cost(&s, &eq.policy, &r).unwrap();
        let q = eq.policy.row(&s.graph, 0, 0);
        let travel = 2.0 * q[0] + q[1] + 3.0 * q[2];
        assert!((cost - travel).abs() < 1e-15);
    }

    #[test]
    fn reference_is_not_an_equilibrium_of_three_routes() {
        let s = Scenario::three_routes();
        let r = PolicyKernel::from_reference(&s.reference);
        let eq = mfe_solve(&s);
        let gap = equalizer_gap(&s, &r, &[r.clone(), eq.policy.clone()]).unwrap();
        assert!(gap > 1e-3, "{gap}");
        let gap = equalizer_gap(&s, &eq.policy, std::slice::from_ref(&eq.policy)).unwrap();
        assert!(gap <= 1e-12);
    }

    #[test]
    fn zero_population_probability_is_an_error() {
        let s = Scenario::three_routes();
        let r = PolicyKernel::from_reference(&s.reference);
        let mut pop = r.clone();
        pop.stage_mut(0)[..3].copy_from_slice(&[0.5, 0.5, 0.0]);
        let err = evaluate_policy_cost(&s, &r, &pop).unwrap_err();
        assert!(matches!(err, Error::LogOfZero { t: 0, i: 0, j: 3 }));
    }

    #[test]
    fn random_trials_are_equalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = random_scenario(&mut rng, &RandomScenarioSpec { max_nodes: 6, max_horizon: 8, ..Default::default() });
        let eq = mfe_solve(&s);
        let trials: Vec<_> = (0..100).map(|_| PolicyKernel::random(&mut rng, &s.graph, s.horizon())).collect();
        let gap = equalizer_gap(&s, &eq.policy, &trials).unwrap();
        assert!(gap <= 1e-8, "{gap}");
    }

    #[test]
    fn flow_conserves_mass_and_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut s = random_scenario(&mut rng, &RandomScenarioSpec::default());
        s.costs = StageCosts::new((0..s.horizon()).map(|t| s.costs.base(t).to_vec()).collect(), None);
        let q = PolicyKernel::random(&mut rng, &s.graph, s.horizon());
        let v = s.node_count();
        let a = Distribution(crate::sampling::dirichlet_ones(&mut rng, v));
        let b = Distribution(crate::sampling::dirichlet_ones(&mut rng, v));
        let mid = Distribution(a.0.iter().zip(&b.0).map(|(x, y)| (x + y) / 2.0).collect());
        let (fa, fb, fm) = (
            propagate_from(&s.graph, &q, &a),
            propagate_from(&s.graph, &q, &b),
            propagate_from(&s.graph, &q, &mid),
        );
        for t in 0..=s.horizon() {
            assert!((fm.at(t).total() - 1.0).abs() <= 1e-12);
            for k in 0..v {
                let avg = (fa.at(t).0[k] + fb.at(t).0[k]) / 2.0;
                assert!((fm.at(t).0[k] - avg).abs() <= 1e-12);
            }
        }
        assert!(fm.transition_residual(&s.graph) <= 1e-12);
    }
}
