//! Grid-world instances: cells connected to themselves and their four
//! compass neighbors, obstacles kept in the graph behind a prohibitive cost,
//! and a terminal cost growing with the distance to the destination.

use std::collections::VecDeque;

use super::{Distribution, ReferencePolicy, Scenario, StageCosts, TrafficGraph};
use crate::error::{Error, Result};

/// Extra cost of entering (or staying on) an obstacle cell.
pub const OBSTACLE_COST: f64 = 100_000.0;
/// Cost of moving to a neighboring cell.
pub const MOVE_COST: f64 = 1.0;
/// Scale of the terminal cost `scale * sqrt(manhattan distance)`.
pub const TERMINAL_SCALE: f64 = 10.0;

/// Parameters of a grid world. Cells are `(x, y)` with `x` the column and
/// `y` the row (row 0 at the top); node id is `y * width + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub obstacles: Vec<(usize, usize)>,
    pub origin: (usize, usize),
    pub destination: (usize, usize),
    pub horizon: usize,
    pub alpha: f64,
}

impl GridSpec {
    /// The 10×10 grid with two staggered walls used for the congestion
    /// experiment: origin top-left, destination bottom-right, T = 70.
    pub fn congestion_experiment(alpha: f64) -> Self {
        let mut obstacles = Vec::new();
        obstacles.extend((0..=6).map(|y| (3, y)));
        obstacles.extend((3..=9).map(|y| (6, y)));
        Self {
            width: 10,
            height: 10,
            obstacles,
            origin: (0, 0),
            destination: (9, 9),
            horizon: 70,
            alpha,
        }
    }
}

/// Cell geometry of a grid world, needed to render heatmaps.
#[derive(Debug, Clone, PartialEq)]
pub struct GridLayout {
    pub width: usize,
    pub height: usize,
    obstacle: Vec<bool>,
}

impl GridLayout {
    pub fn new(width: usize, height: usize, obstacles: &[(usize, usize)]) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Grid(format!("grid must be non-empty, got {width}x{height}")));
        }
        let mut obstacle = vec![false; width * height];
        for &(x, y) in obstacles {
            if x >= width || y >= height {
                return Err(Error::Grid(format!("obstacle ({x}, {y}) is off-grid")));
            }
            obstacle[y * width + x] = true;
        }
        Ok(Self {
            width,
            height,
            obstacle,
        })
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    pub fn node(&self, (x, y): (usize, usize)) -> usize {
        y * self.width + x
    }

    pub fn coords(&self, node: usize) -> (usize, usize) {
        (node % self.width, node / self.width)
    }

    pub fn is_obstacle(&self, node: usize) -> bool {
        self.obstacle[node]
    }

    pub fn manhattan(&self, a: usize, b: usize) -> usize {
        let (ax, ay) = self.coords(a);
        let (bx, by) = self.coords(b);
        ax.abs_diff(bx) + ay.abs_diff(by)
    }

    /// Self, north, east, south, west; off-grid cells dropped.
    pub fn neighborhood(&self, node: usize) -> Vec<usize> {
        let (x, y) = self.coords(node);
        let mut out = vec![node];
        if y > 0 {
            out.push(node - self.width);
        }
        if x + 1 < self.width {
            out.push(node + 1);
        }
        if y + 1 < self.height {
            out.push(node + self.width);
        }
        if x > 0 {
            out.push(node - 1);
        }
        out
    }

    /// Breadth-first step distances from `source` through free cells.
    /// Unreachable cells get `usize::MAX`.
    pub fn free_distances(&self, source: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.cells()];
        let mut queue = VecDeque::new();
        dist[source] = 0;
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            for v in self.neighborhood(u) {
                if !self.obstacle[v] && dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }
}

/// A grid-world scenario together with its layout.
#[derive(Debug, Clone)]
pub struct GridWorld {
    pub scenario: Scenario,
    pub layout: GridLayout,
    pub origin: usize,
    pub destination: usize,
}

impl GridWorld {
    /// Cells lying on at least one shortest obstacle-free origin→destination
    /// path.
    pub fn shortest_path_cells(&self) -> Vec<bool> {
        let from_origin = self.layout.free_distances(self.origin);
        let to_dest = self.layout.free_distances(self.destination);
        let best = from_origin[self.destination];
        from_origin
            .iter()
            .zip(&to_dest)
            .map(|(&a, &b)| best != usize::MAX && a != usize::MAX && b != usize::MAX && a + b == best)
            .collect()
    }
}

pub fn build_gridworld(spec: &GridSpec) -> Result<GridWorld> {
    let layout = GridLayout::new(spec.width, spec.height, &spec.obstacles)?;
    if spec.horizon == 0 {
        return Err(Error::Grid("horizon must be at least 1".into()));
    }
    for (name, (x, y)) in [("origin", spec.origin), ("destination", spec.destination)] {
        if x >= spec.width || y >= spec.height {
            return Err(Error::Grid(format!("{name} ({x}, {y}) is off-grid")));
        }
        if layout.is_obstacle(layout.node((x, y))) {
            return Err(Error::Grid(format!("{name} ({x}, {y}) is an obstacle")));
        }
    }
    let origin = layout.node(spec.origin);
    let destination = layout.node(spec.destination);

    let cells = layout.cells();
    let graph = TrafficGraph::new((0..cells).map(|i| layout.neighborhood(i)).collect());
    let row: Vec<f64> = graph
        .all_edges()
        .map(|e| {
            let moving = if e.from == e.to { 0.0 } else { MOVE_COST };
            let blocked = if layout.is_obstacle(e.to) { OBSTACLE_COST } else { 0.0 };
            moving + blocked
        })
        .collect();
    let terminal = (0..cells)
        .map(|j| TERMINAL_SCALE * (layout.manhattan(j, destination) as f64).sqrt())
        .collect();
    let scenario = Scenario {
        reference: ReferencePolicy::uniform(&graph, spec.horizon),
        costs: StageCosts::stationary(row, spec.horizon, Some(terminal)),
        initial: Distribution::point_mass(cells, origin),
        alpha: spec.alpha,
        graph,
    };
    Ok(GridWorld {
        scenario,
        layout,
        origin,
        destination,
    })
}
