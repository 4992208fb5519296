//! Problem instances: the traffic graph, stage costs, reference routing
//! policy, toll aggressiveness and initial population distribution.
//!
//! Per-stage tables are stored edge-major: the out-edges of node `i` occupy a
//! contiguous range of flat edge ids (see [`TrafficGraph::edges`]), and every
//! table row `[t]` is a vector indexed by that flat id.

pub mod format;
pub mod grid;

use std::fmt;
use std::ops::Range;

use rand::Rng;

use crate::error::{Error, Result};
use crate::sampling;

pub use format::{from_str, read_file, to_string, write_file};
pub use grid::{build_gridworld, GridLayout, GridSpec, GridWorld, OBSTACLE_COST};

/// Tolerance on probability row sums.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Directed graph with ordered out-neighborhoods.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficGraph {
    targets: Vec<usize>,
    offsets: Vec<usize>,
}

/// One directed edge `from -> to` with its flat id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub id: usize,
    pub from: usize,
    pub to: usize,
}

impl TrafficGraph {
    /// Builds a graph from per-node successor lists. No invariant is checked
    /// here; see [`validate`].
    pub fn new(out_neighbors: Vec<Vec<usize>>) -> Self {
        let mut offsets = Vec::with_capacity(out_neighbors.len() + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for row in out_neighbors {
            targets.extend(row);
            offsets.push(targets.len());
        }
        Self { targets, offsets }
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    /// Flat edge ids of the out-edges of `node`.
    pub fn edges(&self, node: usize) -> Range<usize> {
        self.offsets[node]..self.offsets[node + 1]
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.targets[self.edges(node)]
    }

    pub fn target(&self, edge: usize) -> usize {
        self.targets[edge]
    }

    /// Source node of a flat edge id.
    pub fn source(&self, edge: usize) -> usize {
        self.offsets.partition_point(|&o| o <= edge) - 1
    }

    pub fn find_edge(&self, from: usize, to: usize) -> Option<usize> {
        self.edges(from).find(|&e| self.targets[e] == to)
    }

    pub fn all_edges(&self) -> impl Iterator<Item = Edge> + '_ {
        (0..self.node_count()).flat_map(move |i| {
            self.edges(i).map(move |e| Edge {
                id: e,
                from: i,
                to: self.targets[e],
            })
        })
    }
}

/// Travel costs `C_t^{ij}` per stage and edge, plus an optional terminal
/// cost per node that is added to the last stage on arrival.
#[derive(Debug, Clone, PartialEq)]
pub struct StageCosts {
    stages: Vec<Vec<f64>>,
    terminal: Option<Vec<f64>>,
}

impl StageCosts {
    pub fn new(stages: Vec<Vec<f64>>, terminal: Option<Vec<f64>>) -> Self {
        Self { stages, terminal }
    }

    /// Same edge costs at every stage.
    pub fn stationary(row: Vec<f64>, horizon: usize, terminal: Option<Vec<f64>>) -> Self {
        Self::new(vec![row; horizon], terminal)
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    /// Raw stage table, without the terminal cost.
    pub fn base(&self, t: usize) -> &[f64] {
        &self.stages[t]
    }

    pub fn terminal(&self) -> Option<&[f64]> {
        self.terminal.as_deref()
    }

    pub fn is_stationary(&self) -> bool {
        self.stages.windows(2).all(|w| w[0] == w[1])
    }

    /// Effective cost of `edge` at stage `t`, with the terminal cost folded
    /// into the last stage.
    pub fn cost(&self, graph: &TrafficGraph, t: usize, edge: usize) -> f64 {
        let base = self.stages[t][edge];
        match &self.terminal {
            Some(term) if t + 1 == self.stages.len() => base + term[graph.target(edge)],
            _ => base,
        }
    }

    pub fn effective(&self, graph: &TrafficGraph, t: usize) -> Vec<f64> {
        (0..self.stages[t].len())
            .map(|e| self.cost(graph, t, e))
            .collect()
    }

    fn stages_mut(&mut self) -> &mut Vec<Vec<f64>> {
        &mut self.stages
    }
}

/// Reference routing policy `R_t^{ij}` set by the operator.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePolicy {
    stages: Vec<Vec<f64>>,
}

impl ReferencePolicy {
    pub fn new(stages: Vec<Vec<f64>>) -> Self {
        Self { stages }
    }

    /// `1/|𝒱(i)|` on every out-edge, at every stage.
    pub fn uniform(graph: &TrafficGraph, horizon: usize) -> Self {
        let mut row = vec![0.0; graph.edge_count()];
        for i in 0..graph.node_count() {
            let range = graph.edges(i);
            let share = 1.0 / range.len() as f64;
            row[range].fill(share);
        }
        Self::new(vec![row; horizon])
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn stage(&self, t: usize) -> &[f64] {
        &self.stages[t]
    }

    pub fn is_stationary(&self) -> bool {
        self.stages.windows(2).all(|w| w[0] == w[1])
    }
}

/// Probability mass over nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution(pub Vec<f64>);

impl Distribution {
    pub fn point_mass(nodes: usize, at: usize) -> Self {
        let mut mass = vec![0.0; nodes];
        mass[at] = 1.0;
        Self(mass)
    }

    pub fn uniform(nodes: usize) -> Self {
        Self(vec![1.0 / nodes as f64; nodes])
    }

    pub fn mass(&self) -> &[f64] {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// A complete routing game instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub graph: TrafficGraph,
    pub costs: StageCosts,
    pub reference: ReferencePolicy,
    pub alpha: f64,
    pub initial: Distribution,
}

impl Scenario {
    pub fn horizon(&self) -> usize {
        self.costs.horizon()
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    /// Returns the scenario unchanged if it has no violations.
    pub fn validated(self) -> Result<Self> {
        let violations = validate(&self);
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(Error::Invalid(violations))
        }
    }

    /// The subgame over stages `start..T` started from `initial`.
    pub fn truncated(&self, start: usize, initial: Distribution) -> Result<Self> {
        if start >= self.horizon() {
            return Err(Error::Input(format!(
                "subgame start {start} must be below the horizon {}",
                self.horizon()
            )));
        }
        let mut costs = self.costs.clone();
        costs.stages_mut().drain(..start);
        Ok(Self {
            graph: self.graph.clone(),
            costs,
            reference: ReferencePolicy::new(self.reference.stages[start..].to_vec()),
            alpha: self.alpha,
            initial,
        })
    }

    /// Single-origin game with `J` parallel routes, each ending in an
    /// absorbing sink. Node 0 is the origin, node `j + 1` the end of route
    /// `j`. Horizon 1.
    pub fn parallel_routes(route_costs: &[f64], reference: &[f64], alpha: f64) -> Self {
        let routes = route_costs.len();
        let mut out = vec![(1..=routes).collect::<Vec<_>>()];
        out.extend((1..=routes).map(|j| vec![j]));
        let graph = TrafficGraph::new(out);
        let mut cost_row = route_costs.to_vec();
        cost_row.extend(std::iter::repeat_n(0.0, routes));
        let mut ref_row = reference.to_vec();
        ref_row.extend(std::iter::repeat_n(1.0, routes));
        Self {
            initial: Distribution::point_mass(graph.node_count(), 0),
            graph,
            costs: StageCosts::new(vec![cost_row], None),
            reference: ReferencePolicy::new(vec![ref_row]),
            alpha,
        }
    }

    /// The three-route example: costs (2, 1, 3), uniform reference, α = 1.
    pub fn three_routes() -> Self {
        Self::parallel_routes(&[2.0, 1.0, 3.0], &[1.0 / 3.0; 3], 1.0)
    }
}

/// Bounds for [`random_scenario`].
#[derive(Debug, Clone, Copy)]
pub struct RandomScenarioSpec {
    pub max_nodes: usize,
    pub max_horizon: usize,
    pub max_abs_cost: f64,
    pub alpha_range: (f64, f64),
}

impl Default for RandomScenarioSpec {
    fn default() -> Self {
        Self {
            max_nodes: 10,
            max_horizon: 10,
            max_abs_cost: 5.0,
            alpha_range: (0.1, 10.0),
        }
    }
}

/// Random valid scenario: random non-empty neighborhoods, costs uniform in
/// `[-max, max]`, Dirichlet(1) reference rows, log-uniform α, Dirichlet(1)
/// initial distribution.
pub fn random_scenario<R: Rng + ?Sized>(rng: &mut R, spec: &RandomScenarioSpec) -> Scenario {
    let nodes = rng.random_range(2..=spec.max_nodes.max(2));
    let horizon = rng.random_range(1..=spec.max_horizon.max(1));
    let out: Vec<Vec<usize>> = (0..nodes)
        .map(|_| {
            let degree = rng.random_range(1..=nodes);
            rand::seq::index::sample(rng, nodes, degree).into_vec()
        })
        .collect();
    let graph = TrafficGraph::new(out);
    let edges = graph.edge_count();
    let stages = (0..horizon)
        .map(|_| {
            (0..edges)
                .map(|_| rng.random_range(-spec.max_abs_cost..=spec.max_abs_cost))
                .collect()
        })
        .collect();
    let reference = (0..horizon)
        .map(|_| {
            let mut row = vec![0.0; edges];
            for i in 0..nodes {
                let range = graph.edges(i);
                let draw = sampling::dirichlet_ones(rng, range.len());
                row[range].copy_from_slice(&draw);
            }
            row
        })
        .collect();
    let (lo, hi) = spec.alpha_range;
    let alpha = (rng.random_range(lo.ln()..=hi.ln())).exp();
    Scenario {
        initial: Distribution(sampling::dirichlet_ones(rng, nodes)),
        graph,
        costs: StageCosts::new(stages, None),
        reference: ReferencePolicy::new(reference),
        alpha,
    }
}

/// One broken invariant, with its location.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyNeighborhood { node: usize },
    DuplicateNeighbor { node: usize, target: usize },
    TargetOutOfRange { node: usize, target: usize },
    ZeroHorizon,
    Dimension { what: &'static str, expected: usize, found: usize },
    NonFiniteCost { t: usize, i: usize, j: usize },
    NonFiniteTerminal { node: usize },
    NonPositiveReference { t: usize, i: usize, j: usize, value: f64 },
    ReferenceNotNormalized { t: usize, i: usize, sum: f64 },
    NonPositiveAlpha { alpha: f64 },
    NegativeMass { node: usize, value: f64 },
    MassNotNormalized { sum: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match *self {
            EmptyNeighborhood { node } => write!(f, "node {node}: empty out-neighborhood"),
            DuplicateNeighbor { node, target } => {
                write!(f, "node {node}: duplicate out-neighbor {target}")
            }
            TargetOutOfRange { node, target } => {
                write!(f, "node {node}: out-neighbor {target} does not exist")
            }
            ZeroHorizon => write!(f, "horizon must be at least 1"),
            Dimension {
                what,
                expected,
                found,
            } => write!(f, "{what}: expected {expected} entries, found {found}"),
            NonFiniteCost { t, i, j } => write!(f, "t={t} i={i} j={j}: cost is not finite"),
            NonFiniteTerminal { node } => write!(f, "node {node}: terminal cost is not finite"),
            NonPositiveReference { t, i, j, value } => {
                write!(f, "t={t} i={i} j={j}: reference probability {value} is not positive")
            }
            ReferenceNotNormalized { t, i, sum } => {
                write!(f, "t={t} i={i}: reference row sums to {sum}")
            }
            NonPositiveAlpha { alpha } => write!(f, "alpha must be positive, got {alpha}"),
            NegativeMass { node, value } => write!(f, "node {node}: initial mass {value} < 0"),
            MassNotNormalized { sum } => write!(f, "initial distribution sums to {sum}"),
        }
    }
}

/// Every invariant violation of `scenario`; empty means valid.
pub fn validate(scenario: &Scenario) -> Vec<Violation> {
    let mut out = Vec::new();
    let graph = &scenario.graph;
    let nodes = graph.node_count();
    let edges = graph.edge_count();

    for i in 0..nodes {
        let nbrs = graph.neighbors(i);
        if nbrs.is_empty() {
            out.push(Violation::EmptyNeighborhood { node: i });
        }
        for (k, &j) in nbrs.iter().enumerate() {
            if j >= nodes {
                out.push(Violation::TargetOutOfRange { node: i, target: j });
            }
            if nbrs[..k].contains(&j) {
                out.push(Violation::DuplicateNeighbor { node: i, target: j });
            }
        }
    }

    let horizon = scenario.costs.horizon();
    if horizon == 0 {
        out.push(Violation::ZeroHorizon);
    }
    if scenario.reference.horizon() != horizon {
        out.push(Violation::Dimension {
            what: "reference stages",
            expected: horizon,
            found: scenario.reference.horizon(),
        });
    }
    if scenario.initial.0.len() != nodes {
        out.push(Violation::Dimension {
            what: "initial distribution",
            expected: nodes,
            found: scenario.initial.0.len(),
        });
    }

    for t in 0..horizon {
        let row = scenario.costs.base(t);
        if row.len() != edges {
            out.push(Violation::Dimension {
                what: "cost row",
                expected: edges,
                found: row.len(),
            });
            continue;
        }
        for e in graph.all_edges() {
            if !row[e.id].is_finite() {
                out.push(Violation::NonFiniteCost { t, i: e.from, j: e.to });
            }
        }
    }
    if let Some(term) = scenario.costs.terminal() {
        if term.len() != nodes {
            out.push(Violation::Dimension {
                what: "terminal costs",
                expected: nodes,
                found: term.len(),
            });
        } else {
            for (node, c) in term.iter().enumerate() {
                if !c.is_finite() {
                    out.push(Violation::NonFiniteTerminal { node });
                }
            }
        }
    }

    for t in 0..scenario.reference.horizon() {
        let row = scenario.reference.stage(t);
        if row.len() != edges {
            out.push(Violation::Dimension {
                what: "reference row",
                expected: edges,
                found: row.len(),
            });
            continue;
        }
        for i in 0..nodes {
            let range = graph.edges(i);
            if range.is_empty() {
                continue;
            }
            for e in range.clone() {
                // also catches NaN
                if !(row[e] > 0.0) {
                    out.push(Violation::NonPositiveReference {
                        t,
                        i,
                        j: graph.target(e),
                        value: row[e],
                    });
                }
            }
            let sum: f64 = row[range].iter().sum();
            if !((sum - 1.0).abs() <= STOCHASTIC_TOL) {
                out.push(Violation::ReferenceNotNormalized { t, i, sum });
            }
        }
    }

    if !(scenario.alpha > 0.0) || !scenario.alpha.is_finite() {
        out.push(Violation::NonPositiveAlpha {
            alpha: scenario.alpha,
        });
    }
    for (node, &value) in scenario.initial.0.iter().enumerate() {
        if !(value >= 0.0) {
            out.push(Violation::NegativeMass { node, value });
        }
    }
    let sum = scenario.initial.total();
    if !((sum - 1.0).abs() <= STOCHASTIC_TOL) {
        out.push(Violation::MassNotNormalized { sum });
    }
    out
}
