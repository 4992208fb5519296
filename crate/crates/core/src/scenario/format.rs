//! Plain-text scenario files.
//!
//! ```text
//! # comments run to end of line
//! [params]
//! nodes = 4
//! horizon = 1
//! alpha = 1
//! stationary = true          # optional, default false
//! initial = 1 0 0 0          # one mass per node
//!
//! [graph]
//! 0 1                        # edge i -> j; line order fixes neighbor order
//!
//! [costs]
//! 0 1 2.0                    # "i j cost" when stationary, else "t i j cost"
//!
//! [terminal]                 # optional: "j cost", added to the last stage
//! 1 0.0
//!
//! [reference]
//! 0 1 0.5                    # same shape as [costs]; or the single word "uniform"
//! ```
//!
//! Nodes and stages are 0-based. Reals are written with 17 significant
//! digits so a written file reads back bit-identical.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{Distribution, ReferencePolicy, Scenario, StageCosts, TrafficGraph};
use crate::error::{Error, Result};

const SECTIONS: [&str; 5] = ["params", "graph", "costs", "terminal", "reference"];

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Renders a scenario in the text format.
pub fn to_string(s: &Scenario) -> String {
    let stationary = s.costs.is_stationary() && s.reference.is_stationary();
    let mut out = String::new();
    let _ = writeln!(out, "# mft-route scenario");
    let _ = writeln!(out, "[params]");
    let _ = writeln!(out, "nodes = {}", s.node_count());
    let _ = writeln!(out, "horizon = {}", s.horizon());
    let _ = writeln!(out, "alpha = {}", real(s.alpha));
    let _ = writeln!(out, "stationary = {stationary}");
    let masses: Vec<String> = s.initial.0.iter().map(|&m| real(m)).collect();
    let _ = writeln!(out, "initial = {}", masses.join(" "));

    let _ = writeln!(out, "\n[graph]");
    for e in s.graph.all_edges() {
        let _ = writeln!(out, "{} {}", e.from, e.to);
    }

    let stages = if stationary { 1 } else { s.horizon() };
    let table = |out: &mut String, name: &str, row: &dyn Fn(usize) -> Vec<f64>| {
        let _ = writeln!(out, "\n[{name}]");
        for t in 0..stages {
            let values = row(t);
            for e in s.graph.all_edges() {
                if stationary {
                    let _ = writeln!(out, "{} {} {}", e.from, e.to, real(values[e.id]));
                } else {
                    let _ = writeln!(out, "{t} {} {} {}", e.from, e.to, real(values[e.id]));
                }
            }
        }
    };
    table(&mut out, "costs", &|t| s.costs.base(t).to_vec());
    if let Some(term) = s.costs.terminal() {
        let _ = writeln!(out, "\n[terminal]");
        for (j, &c) in term.iter().enumerate() {
            let _ = writeln!(out, "{j} {}", real(c));
        }
    }
    table(&mut out, "reference", &|t| s.reference.stage(t).to_vec());
    out
}

pub fn write_file(path: &Path, s: &Scenario) -> Result<()> {
    std::fs::write(path, to_string(s)).map_err(|e| Error::file(path, e))
}

pub fn read_file(path: &Path) -> Result<Scenario> {
    from_str(&std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?)
}

struct Line<'a> {
    number: usize,
    tokens: Vec<&'a str>,
    text: &'a str,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn num<T: std::str::FromStr>(line: &Line, token: &str, what: &str) -> Result<T> {
    token
        .parse()
        .map_err(|_| parse_err(line.number, format!("cannot parse {what} from `{token}`")))
}

/// Parses the text format. Structural problems (unknown sections, missing
/// fields, missing or duplicated table entries) are errors; invariant
/// violations such as unnormalized rows are left for [`super::validate`].
pub fn from_str(text: &str) -> Result<Scenario> {
    let mut sections: HashMap<&str, Vec<Line>> = HashMap::new();
    let mut current: Option<&str> = None;
    for (k, raw) in text.lines().enumerate() {
        let number = k + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[').and_then(|b| b.strip_suffix(']')) {
            let name = name.trim();
            let Some(&known) = SECTIONS.iter().find(|&&s| s == name) else {
                return Err(parse_err(number, format!("unknown section [{name}]")));
            };
            if sections.contains_key(known) {
                return Err(parse_err(number, format!("section [{known}] appears twice")));
            }
            sections.insert(known, Vec::new());
            current = Some(known);
            continue;
        }
        let Some(section) = current else {
            return Err(parse_err(number, "content before the first section header"));
        };
        sections.get_mut(section).expect("section registered").push(Line {
            number,
            tokens: body.split_whitespace().collect(),
            text: body,
        });
    }

    let params = parse_params(sections.get("params").map(Vec::as_slice).unwrap_or(&[]))?;
    let nodes = params.nodes;
    let horizon = params.horizon;

    let mut out_neighbors = vec![Vec::new(); nodes];
    for line in sections.get("graph").map(Vec::as_slice).unwrap_or(&[]) {
        if line.tokens.len() != 2 {
            return Err(parse_err(line.number, "graph edges are `i j`"));
        }
        let i: usize = num(line, line.tokens[0], "node")?;
        let j: usize = num(line, line.tokens[1], "node")?;
        if i >= nodes || j >= nodes {
            return Err(parse_err(
                line.number,
                format!("edge {i} -> {j} references a node outside 0..{nodes}"),
            ));
        }
        if out_neighbors[i].contains(&j) {
            return Err(parse_err(line.number, format!("duplicate edge {i} -> {j}")));
        }
        out_neighbors[i].push(j);
    }
    let graph = TrafficGraph::new(out_neighbors);

    let costs = parse_table(&sections, "costs", &graph, horizon, params.stationary)?;
    let reference = parse_table(&sections, "reference", &graph, horizon, params.stationary)?;
    let terminal = match sections.get("terminal") {
        None => None,
        Some(lines) => {
            let mut term = vec![None; nodes];
            for line in lines {
                if line.tokens.len() != 2 {
                    return Err(parse_err(line.number, "terminal entries are `j cost`"));
                }
                let j: usize = num(line, line.tokens[0], "node")?;
                if j >= nodes {
                    return Err(parse_err(line.number, format!("node {j} outside 0..{nodes}")));
                }
                if term[j].is_some() {
                    return Err(parse_err(line.number, format!("duplicate terminal cost for {j}")));
                }
                term[j] = Some(num::<f64>(line, line.tokens[1], "cost")?);
            }
            let missing: Vec<String> = term
                .iter()
                .enumerate()
                .filter(|(_, c)| c.is_none())
                .map(|(j, _)| j.to_string())
                .collect();
            if !missing.is_empty() {
                return Err(Error::Dimension(format!(
                    "[terminal] is missing nodes {}",
                    missing.join(", ")
                )));
            }
            Some(term.into_iter().map(Option::unwrap).collect())
        }
    };

    Ok(Scenario {
        graph,
        costs: StageCosts::new(costs, terminal),
        reference: ReferencePolicy::new(reference),
        alpha: params.alpha,
        initial: Distribution(params.initial),
    })
}

struct Params {
    nodes: usize,
    horizon: usize,
    alpha: f64,
    stationary: bool,
    initial: Vec<f64>,
}

fn parse_params(lines: &[Line]) -> Result<Params> {
    let mut seen: HashMap<&str, (&Line, &str)> = HashMap::new();
    for line in lines {
        let Some((key, value)) = line.text.split_once('=') else {
            return Err(parse_err(line.number, "expected `key = value`"));
        };
        let key = key.trim();
        if !["nodes", "horizon", "alpha", "stationary", "initial"].contains(&key) {
            return Err(parse_err(line.number, format!("unknown parameter `{key}`")));
        }
        if seen.insert(key, (line, value.trim())).is_some() {
            return Err(parse_err(line.number, format!("parameter `{key}` given twice")));
        }
    }
    let get = |field: &'static str| {
        seen.get(field).copied().ok_or(Error::MissingField {
            field,
            section: "params",
        })
    };

    let (line, v) = get("nodes")?;
    let nodes: usize = num(line, v, "nodes")?;
    if nodes == 0 {
        return Err(parse_err(line.number, "nodes must be at least 1"));
    }
    let (line, v) = get("horizon")?;
    let horizon: usize = num(line, v, "horizon")?;
    if horizon == 0 {
        return Err(parse_err(line.number, "horizon must be at least 1"));
    }
    let (line, v) = get("alpha")?;
    let alpha: f64 = num(line, v, "alpha")?;
    let stationary = match seen.get("stationary") {
        None => false,
        Some(&(line, v)) => num(line, v, "stationary flag")?,
    };
    let (line, v) = get("initial")?;
    let initial = v
        .split_whitespace()
        .map(|tok| num::<f64>(line, tok, "initial mass"))
        .collect::<Result<Vec<_>>>()?;
    if initial.len() != nodes {
        return Err(Error::Dimension(format!(
            "line {}: initial has {} entries for {nodes} nodes",
            line.number,
            initial.len()
        )));
    }
    Ok(Params {
        nodes,
        horizon,
        alpha,
        stationary,
        initial,
    })
}

fn parse_table(
    sections: &HashMap<&str, Vec<Line>>,
    name: &'static str,
    graph: &TrafficGraph,
    horizon: usize,
    stationary: bool,
) -> Result<Vec<Vec<f64>>> {
    let Some(lines) = sections.get(name) else {
        return Err(Error::MissingField {
            field: name,
            section: name,
        });
    };
    let stages = if stationary { 1 } else { horizon };
    let edges = graph.edge_count();

    if name == "reference" && lines.len() == 1 && lines[0].tokens == ["uniform"] {
        return Ok(ReferencePolicy::uniform(graph, horizon).stages);
    }

    let mut table = vec![vec![None; edges]; stages];
    let width = if stationary { 3 } else { 4 };
    for line in lines {
        if line.tokens.len() != width {
            let shape = if stationary { "i j value" } else { "t i j value" };
            return Err(parse_err(line.number, format!("[{name}] entries are `{shape}`")));
        }
        let (t, rest) = if stationary {
            (0, &line.tokens[..])
        } else {
            (num::<usize>(line, line.tokens[0], "stage")?, &line.tokens[1..])
        };
        if t >= stages {
            return Err(parse_err(line.number, format!("stage {t} outside 0..{horizon}")));
        }
        let i: usize = num(line, rest[0], "node")?;
        let j: usize = num(line, rest[1], "node")?;
        let value: f64 = num(line, rest[2], "value")?;
        let edge = (i < graph.node_count())
            .then(|| graph.find_edge(i, j))
            .flatten()
            .ok_or_else(|| parse_err(line.number, format!("edge {i} -> {j} is not in [graph]")))?;
        if table[t][edge].replace(value).is_some() {
            return Err(parse_err(line.number, format!("duplicate [{name}] entry t={t} {i} -> {j}")));
        }
    }
    let mut out = Vec::with_capacity(horizon);
    for (t, row) in table.into_iter().enumerate() {
        let mut dense = Vec::with_capacity(edges);
        for (e, v) in row.into_iter().enumerate() {
            match v {
                Some(v) => dense.push(v),
                None => {
                    return Err(Error::Dimension(format!(
                        "[{name}] has no entry for t={t} {} -> {}",
                        graph.source(e),
                        graph.target(e)
                    )))
                }
            }
        }
        out.push(dense);
    }
    if stationary {
        out = vec![out.pop().expect("one stage"); horizon];
    }
    Ok(out)
}
