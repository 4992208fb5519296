//! The finite-N game: sampled populations and their realized tolls, exact
//! expected tolls, the gap to the large-population toll, and the ε of the
//! mean-field policy as a finite-N Nash equilibrium.
//!
//! A player at node `i` taking edge `i -> j` at stage `t` pays
//! `α (log(K_t^{ij} / K_t^i) − log R_t^{ij})`, where the counts include the
//! player. When everybody else follows a common kernel, the count of
//! *other* players on the link (at the node) is Binomial(N − 1, P_t^i
//! Q_t^{ij}) (Binomial(N − 1, P_t^i)), which gives the expected toll in
//! closed form. With heterogeneous kernels the counts are Poisson-binomial.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kl_solver::PolicyKernel;
use crate::mean_field::propagate;
use crate::numerics::{binomial_log_share, expected_log_share, poisson_binomial_pmf};
use crate::sampling::{self, categorical};
use crate::scenario::{Scenario, TrafficGraph};

/// Locations and actions of `N` players over the horizon, with tallies.
#[derive(Debug, Clone)]
pub struct PopulationSample {
    pub players: usize,
    pub seed: u64,
    pub replication: u64,
    /// `[t][n]` node of player `n` at stage `t`, `t = 0..=T`.
    locations: Vec<Vec<u32>>,
    /// `[t][n]` flat edge taken by player `n` at stage `t`, `t < T`.
    actions: Vec<Vec<u32>>,
    node_counts: Vec<Vec<u64>>,
    edge_counts: Vec<Vec<u64>>,
}

/// Realized toll on one used link.
#[derive(Debug, Clone, PartialEq)]
pub struct TaxRecord {
    pub t: usize,
    pub i: usize,
    pub j: usize,
    pub edge: usize,
    pub link_count: u64,
    pub node_count: u64,
    pub tax: f64,
}

impl PopulationSample {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn location(&self, t: usize, player: usize) -> usize {
        self.locations[t][player] as usize
    }

    pub fn action_edge(&self, t: usize, player: usize) -> usize {
        self.actions[t][player] as usize
    }

    /// `K_t^i`, for `t = 0..=T`.
    pub fn node_counts(&self, t: usize) -> &[u64] {
        &self.node_counts[t]
    }

    /// `K_t^{ij}` per flat edge, for `t < T`.
    pub fn edge_counts(&self, t: usize) -> &[u64] {
        &self.edge_counts[t]
    }

    /// Tolls on every link with at least one player. Empty links get no
    /// record.
    pub fn tax_records(&self, scenario: &Scenario) -> Vec<TaxRecord> {
        let graph = &scenario.graph;
        let mut out = Vec::new();
        for t in 0..self.horizon() {
            let reference = scenario.reference.stage(t);
            for e in graph.all_edges() {
                let link = self.edge_counts[t][e.id];
                if link == 0 {
                    continue;
                }
                let node = self.node_counts[t][e.from];
                out.push(TaxRecord {
                    t,
                    i: e.from,
                    j: e.to,
                    edge: e.id,
                    link_count: link,
                    node_count: node,
                    tax: realized_tax(link, node, reference[e.id], scenario.alpha),
                });
            }
        }
        out
    }

    /// Checks `Σ_j K^{ij} = K^i`, `Σ_i K^i = N` and `i_{t+1} = j_t`.
    pub fn check_consistency(&self, graph: &TrafficGraph) -> std::result::Result<(), String> {
        for t in 0..=self.horizon() {
            let total: u64 = self.node_counts[t].iter().sum();
            if total != self.players as u64 {
                return Err(format!("t={t}: node counts sum to {total}"));
            }
        }
        for t in 0..self.horizon() {
            for i in 0..graph.node_count() {
                let out: u64 = self.edge_counts[t][graph.edges(i)].iter().sum();
                if out != self.node_counts[t][i] {
                    return Err(format!("t={t} i={i}: link counts {out} != node count"));
                }
            }
            for n in 0..self.players {
                let e = self.action_edge(t, n);
                if graph.source(e) != self.location(t, n) {
                    return Err(format!("t={t} n={n}: action leaves the wrong node"));
                }
                if graph.target(e) != self.location(t + 1, n) {
                    return Err(format!("t={t} n={n}: did not move to the chosen node"));
                }
            }
        }
        Ok(())
    }
}

/// `α (log(K^{ij} / K^i) − log R^{ij})`.
pub fn realized_tax(link_count: u64, node_count: u64, reference: f64, alpha: f64) -> f64 {
    alpha * ((link_count as f64 / node_count as f64).ln() - reference.ln())
}

/// Replication `replication` of an `N`-player population; replication 0 is
/// what [`simulate_population`] returns for the same seed.
pub fn simulate_replication(
    scenario: &Scenario,
    policy: &PolicyKernel,
    players: usize,
    seed: u64,
    replication: u64,
) -> PopulationSample {
    let graph = &scenario.graph;
    let horizon = policy.horizon();
    let mut rng = sampling::substream(seed, replication);
    let mut locations = Vec::with_capacity(horizon + 1);
    let mut actions = Vec::with_capacity(horizon);
    let mut node_counts = Vec::with_capacity(horizon + 1);
    let mut edge_counts = Vec::with_capacity(horizon);

    let start: Vec<u32> = (0..players)
        .map(|_| categorical(&mut rng, scenario.initial.mass()) as u32)
        .collect();
    locations.push(start);
    for t in 0..horizon {
        let q = policy.stage(t);
        let here = &locations[t];
        let mut counts = vec![0u64; graph.node_count()];
        let mut links = vec![0u64; graph.edge_count()];
        let mut chosen = Vec::with_capacity(players);
        let mut next = Vec::with_capacity(players);
        for &i in here {
            let i = i as usize;
            let range = graph.edges(i);
            let e = range.start + categorical(&mut rng, &q[range]);
            counts[i] += 1;
            links[e] += 1;
            chosen.push(e as u32);
            next.push(graph.target(e) as u32);
        }
        node_counts.push(counts);
        edge_counts.push(links);
        actions.push(chosen);
        locations.push(next);
    }
    let mut last = vec![0u64; graph.node_count()];
    for &i in &locations[horizon] {
        last[i as usize] += 1;
    }
    node_counts.push(last);

    PopulationSample {
        players,
        seed,
        replication,
        locations,
        actions,
        node_counts,
        edge_counts,
    }
}

/// Draws `N` players: initial nodes i.i.d. from `P_0`, then i.i.d. actions
/// from the kernel rows. Reproducible for a fixed seed.
pub fn simulate_population(scenario: &Scenario, policy: &PolicyKernel, players: usize, seed: u64) -> PopulationSample {
    assert!(players >= 1, "need at least one player");
    simulate_replication(scenario, policy, players, seed, 0)
}

/// Expected toll of a player on link `(i, j)` when every other player
/// follows a common kernel that puts mass `location` on `i` and routes a
/// fraction `route` of it to `j`:
///
/// ```text
/// α Σ_k log((k+1)/N) Bin(N−1, k; location·route)
///   − α Σ_k log((k+1)/N) Bin(N−1, k; location) − α log R
/// ```
pub fn expected_tax_symmetric(players: usize, location: f64, route: f64, reference: f64, alpha: f64) -> f64 {
    let link = binomial_log_share(players, location * route);
    let node = binomial_log_share(players, location);
    alpha * (link - node) - alpha * reference.ln()
}

/// Expected toll when the other `N − 1` players are heterogeneous: player
/// `m` is on the link with probability `link_probs[m]` and at the node with
/// probability `node_probs[m]`.
pub fn expected_tax_heterogeneous(link_probs: &[f64], node_probs: &[f64], reference: f64, alpha: f64) -> Result<f64> {
    if link_probs.len() != node_probs.len() {
        return Err(Error::Dimension(format!(
            "{} link probabilities for {} node probabilities",
            link_probs.len(),
            node_probs.len()
        )));
    }
    if let Some(p) = link_probs.iter().chain(node_probs).find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Input(format!("probability {p} outside [0, 1]")));
    }
    let players = link_probs.len() + 1;
    let link = expected_log_share(&poisson_binomial_pmf(link_probs), players);
    let node = expected_log_share(&poisson_binomial_pmf(node_probs), players);
    Ok(alpha * (link - node) - alpha * reference.ln())
}

/// `Π_t^{ij}` for every stage and edge when all other players follow
/// `population`.
pub fn expected_tax_table(scenario: &Scenario, population: &PolicyKernel, players: usize) -> Vec<Vec<f64>> {
    let graph = &scenario.graph;
    let flow = propagate(scenario, population);
    (0..scenario.horizon())
        .map(|t| {
            let p = flow.at(t).mass();
            let q = population.stage(t);
            let reference = scenario.reference.stage(t);
            let node_share: Vec<f64> = p
                .par_iter()
                .map(|&pi| binomial_log_share(players, pi))
                .collect();
            (0..graph.edge_count())
                .into_par_iter()
                .map(|e| {
                    let i = graph.source(e);
                    let link = binomial_log_share(players, p[i] * q[e]);
                    scenario.alpha * (link - node_share[i]) - scenario.alpha * reference[e].ln()
                })
                .collect()
        })
        .collect()
}

/// Support threshold on `P* Q*` for the toll-limit comparison.
pub const SUPPORT_EPS: f64 = 1e-9;

/// Largest `|Π_N − α log(Q*/R)|` over the support of the population flow.
#[derive(Debug, Clone, PartialEq)]
pub struct TollGap {
    pub players: usize,
    pub gap: f64,
    /// `(t, i, j)` attaining the maximum.
    pub worst: Option<(usize, usize, usize)>,
}

pub fn lemma1_gap(scenario: &Scenario, population: &PolicyKernel, player_counts: &[usize]) -> Vec<TollGap> {
    let graph = &scenario.graph;
    let flow = propagate(scenario, population);
    player_counts
        .iter()
        .map(|&players| {
            let tolls = expected_tax_table(scenario, population, players);
            let mut best = TollGap {
                players,
                gap: 0.0,
                worst: None,
            };
            for t in 0..scenario.horizon() {
                let p = flow.at(t).mass();
                let q = population.stage(t);
                let reference = scenario.reference.stage(t);
                for e in graph.all_edges() {
                    if p[e.from] * q[e.id] <= SUPPORT_EPS {
                        continue;
                    }
                    let limit = scenario.alpha * (q[e.id] / reference[e.id]).ln();
                    let gap = (tolls[t][e.id] - limit).abs();
                    if best.worst.is_none() || gap > best.gap {
                        best.gap = gap;
                        best.worst = Some((t, e.from, e.to));
                    }
                }
            }
            best
        })
        .collect()
}

/// Best response of one player in the `N`-player game against a population
/// playing `population`.
#[derive(Debug, Clone)]
pub struct BestResponse {
    pub players: usize,
    /// Deterministic kernel: at each `(t, i)` all mass on the chosen edge.
    pub policy: PolicyKernel,
    /// Optimal cost-to-go `W_t(i)` for `t = 0..=T`.
    pub cost_to_go: Vec<Vec<f64>>,
    /// Expected cost of following `population` oneself.
    pub candidate_cost: f64,
    /// `Σ_i P_0^i W_0(i)`.
    pub best_cost: f64,
    /// `candidate_cost − best_cost`.
    pub epsilon: f64,
}

/// Holds the expected tolls fixed and solves the deterministic-move
/// finite-horizon DP `W_t(i) = min_j [C + Π + W_{t+1}(j)]`, ties going to
/// the lowest neighbor index.
pub fn best_response_finite_n(scenario: &Scenario, population: &PolicyKernel, players: usize) -> BestResponse {
    let graph = &scenario.graph;
    let horizon = scenario.horizon();
    let tolls = expected_tax_table(scenario, population, players);
    let stage_cost = |t: usize, e: usize| scenario.costs.cost(graph, t, e) + tolls[t][e];

    let mut cost_to_go = vec![vec![0.0; graph.node_count()]; horizon + 1];
    let mut stages = vec![vec![0.0; graph.edge_count()]; horizon];
    for t in (0..horizon).rev() {
        for i in 0..graph.node_count() {
            let mut best: Option<(usize, f64)> = None;
            for e in graph.edges(i) {
                let v = stage_cost(t, e) + cost_to_go[t + 1][graph.target(e)];
                if best.is_none_or(|(_, b)| v < b) {
                    best = Some((e, v));
                }
            }
            if let Some((e, v)) = best {
                cost_to_go[t][i] = v;
                stages[t][e] = 1.0;
            }
        }
    }

    let flow = propagate(scenario, population);
    let mut candidate_cost = 0.0;
    for t in 0..horizon {
        let p = flow.at(t).mass();
        let q = population.stage(t);
        for e in graph.all_edges() {
            let w = p[e.from] * q[e.id];
            if w != 0.0 {
                candidate_cost += w * stage_cost(t, e.id);
            }
        }
    }
    let best_cost: f64 = scenario
        .initial
        .mass()
        .iter()
        .zip(&cost_to_go[0])
        .filter(|(&m, _)| m != 0.0)
        .map(|(m, w)| m * w)
        .sum();
    BestResponse {
        players,
        policy: PolicyKernel::new(stages),
        cost_to_go,
        candidate_cost,
        best_cost,
        epsilon: candidate_cost - best_cost,
    }
}

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        Self {
            mean,
            std_error: (var / n).sqrt(),
            samples: xs.len(),
        }
    }
}

/// Monte Carlo estimate of the realized toll of a tagged player known to be
/// on `edge` at stage `t`, the other `N − 1` players simulated forward under
/// `population`. One substream per replication.
pub fn conditional_tax_monte_carlo(
    scenario: &Scenario,
    population: &PolicyKernel,
    players: usize,
    t: usize,
    edge: usize,
    replications: usize,
    seed: u64,
) -> Estimate {
    let graph = &scenario.graph;
    let i = graph.source(edge);
    let reference = scenario.reference.stage(t)[edge];
    let draws: Vec<f64> = (0..replications as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = sampling::substream(seed, rep);
            let (mut at_node, mut on_link) = (1u64, 1u64);
            for _ in 1..players {
                let (node, e) = walk(&mut rng, scenario, population, t);
                if node == i {
                    at_node += 1;
                    if e == edge {
                        on_link += 1;
                    }
                }
            }
            realized_tax(on_link, at_node, reference, scenario.alpha)
        })
        .collect();
    Estimate::from_samples(&draws)
}

/// One player's node and edge at stage `t`.
fn walk<R: Rng + ?Sized>(rng: &mut R, scenario: &Scenario, policy: &PolicyKernel, t: usize) -> (usize, usize) {
    let graph = &scenario.graph;
    let mut node = categorical(rng, scenario.initial.mass());
    for s in 0..=t {
        let range = graph.edges(node);
        let e = range.start + categorical(rng, &policy.stage(s)[range]);
        if s == t {
            return (node, e);
        }
        node = graph.target(e);
    }
    unreachable!("loop returns at s == t")
}
