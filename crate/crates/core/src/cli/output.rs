//! Plain-text outputs: CSV tables with a run manifest in `#` comment lines,
//! P2 graymaps, and the policy CSV reader.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kl_solver::{LogDesirability, PolicyKernel};
use crate::mean_field::FlowTrajectory;
use crate::sampling;
use crate::scenario::grid::GridLayout;
use crate::scenario::{Distribution, TrafficGraph};

/// Reals in CSV payloads: shortest round-trip text, exponent form outside
/// `[1e-4, 1e15)`. Independent of locale.
pub fn real(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Provenance of one CLI run, written as `#` comment lines ahead of every
/// output file.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub subcommand: String,
    /// Fully resolved arguments, defaults included.
    pub params: String,
    pub seed: u64,
    pub version: &'static str,
    /// `(path, sha256)` of every input file read.
    pub inputs: Vec<(PathBuf, String)>,
    pub duration: Duration,
}

impl RunManifest {
    pub fn new(subcommand: &str, params: String, seed: u64) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            params,
            seed,
            version: env!("CARGO_PKG_VERSION"),
            inputs: Vec::new(),
            duration: Duration::ZERO,
        }
    }

    /// Reads an input file and records its digest.
    pub fn read_input(&mut self, path: &Path) -> Result<String> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        self.inputs.push((path.to_path_buf(), sha256_hex(text.as_bytes())));
        Ok(text)
    }

    pub fn header(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# mft-route {} {}", self.version, self.subcommand);
        let _ = writeln!(out, "# params: {}", self.params);
        let _ = writeln!(out, "# seed: {} ({})", self.seed, sampling::GENERATOR);
        for (path, digest) in &self.inputs {
            let _ = writeln!(out, "# input: {} sha256={digest}", path.display());
        }
        let _ = writeln!(out, "# duration_s: {:.3}", self.duration.as_secs_f64());
        out
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `manifest header + body` to `path`, or to stdout when `path` is
/// `None`.
pub fn emit(path: Option<&Path>, manifest: &RunManifest, body: &str) -> Result<()> {
    let text = format!("{}{body}", manifest.header());
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::file(p, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

/// `t,i,j,value` rows for every stage and edge.
pub fn policy_csv(graph: &TrafficGraph, policy: &PolicyKernel) -> String {
    let mut out = String::from("t,i,j,value\n");
    for t in 0..policy.horizon() {
        for e in graph.all_edges() {
            let _ = writeln!(out, "{t},{},{},{}", e.from, e.to, real(policy.get(t, e.id)));
        }
    }
    out
}

/// `t,i,value` rows of `log φ_t^i`, `t = 0..=T`.
pub fn log_phi_csv(log_phi: &LogDesirability) -> String {
    let mut out = String::from("t,i,value\n");
    for t in 0..=log_phi.horizon() {
        for (i, v) in log_phi.at(t).iter().enumerate() {
            let _ = writeln!(out, "{t},{i},{}", real(*v));
        }
    }
    out
}

/// `t,i,mass` rows, `t = 0..=T`.
pub fn flow_csv(flow: &FlowTrajectory) -> String {
    let mut out = String::from("t,i,mass\n");
    for (t, p) in flow.distributions.iter().enumerate() {
        for (i, m) in p.mass().iter().enumerate() {
            let _ = writeln!(out, "{t},{i},{}", real(*m));
        }
    }
    out
}

/// Reads a `t,i,j,value` policy table. Entries left out are zero; every row
/// must come out stochastic.
pub fn read_policy_csv(text: &str, graph: &TrafficGraph, horizon: usize) -> Result<PolicyKernel> {
    let mut stages = vec![vec![f64::NAN; graph.edge_count()]; horizon];
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let body = raw.trim();
        if body.is_empty() || body.starts_with('#') || body.starts_with('t') {
            continue;
        }
        let fields: Vec<&str> = body.split(',').map(str::trim).collect();
        let err = |message: String| Error::Parse { line, message };
        if fields.len() != 4 {
            return Err(err(format!("expected t,i,j,value, got {} fields", fields.len())));
        }
        let index = |s: &str, what: &str| s.parse::<usize>().map_err(|_| err(format!("cannot parse {what} from `{s}`")));
        let (t, i, j) = (index(fields[0], "t")?, index(fields[1], "i")?, index(fields[2], "j")?);
        let value: f64 = fields[3]
            .parse()
            .map_err(|_| err(format!("cannot parse value from `{}`", fields[3])))?;
        if t >= horizon {
            return Err(err(format!("stage {t} beyond horizon {horizon}")));
        }
        let edge = (i < graph.node_count())
            .then(|| graph.find_edge(i, j))
            .flatten()
            .ok_or_else(|| err(format!("{i}->{j} is not an edge")))?;
        if !stages[t][edge].is_nan() {
            return Err(err(format!("duplicate entry for t={t} {i}->{j}")));
        }
        if !(value >= 0.0) {
            return Err(err(format!("probability {value} is negative")));
        }
        stages[t][edge] = value;
    }
    for v in stages.iter_mut().flatten() {
        if v.is_nan() {
            *v = 0.0;
        }
    }
    let policy = PolicyKernel::new(stages);
    let residual = policy.stochasticity_error(graph);
    if residual > 1e-9 {
        return Err(Error::Input(format!("policy rows are not stochastic (worst row sum off by {residual:e})")));
    }
    Ok(policy)
}

/// Gray level of obstacle cells, one above the intensity range.
pub const OBSTACLE_SENTINEL: u16 = 256;

/// P2 graymap of one distribution, one pixel per cell, row 0 at the top.
/// Free cells get `round(255 · P / max P)`; obstacles get
/// [`OBSTACLE_SENTINEL`].
pub fn emit_heatmap(p: &Distribution, layout: &GridLayout, label: &str) -> Result<String> {
    if p.mass().len() != layout.cells() {
        return Err(Error::Dimension(format!(
            "distribution over {} nodes for a {}x{} grid",
            p.mass().len(),
            layout.width,
            layout.height
        )));
    }
    let max = (0..layout.cells())
        .filter(|&c| !layout.is_obstacle(c))
        .map(|c| p.mass()[c])
        .fold(0.0, f64::max);
    let mut out = String::from("P2\n");
    let _ = writeln!(out, "# {label}");
    let _ = writeln!(
        out,
        "# intensity = round(255 * P / max P) = round(255 * P / {}); obstacles = {OBSTACLE_SENTINEL}",
        real(max)
    );
    let _ = writeln!(out, "{} {}\n{OBSTACLE_SENTINEL}", layout.width, layout.height);
    for y in 0..layout.height {
        let row: Vec<String> = (0..layout.width)
            .map(|x| {
                let c = layout.node((x, y));
                if layout.is_obstacle(c) {
                    OBSTACLE_SENTINEL.to_string()
                } else if max > 0.0 {
                    ((255.0 * p.mass()[c] / max).round() as u16).to_string()
                } else {
                    "0".to_string()
                }
            })
            .collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;

    fn pixels(pgm: &str) -> Vec<u16> {
        pgm.lines()
            .filter(|l| !l.starts_with('#'))
            .skip(3)
            .flat_map(|l| l.split_whitespace().map(|v| v.parse::<u16>().unwrap()))
            .collect()
    }

    #[test]
    fn point_mass_lights_one_pixel() {
        let layout = GridLayout::new(3, 2, &[]).unwrap();
        let pgm = emit_heatmap(&Distribution::point_mass(6, 4), &layout, "t").unwrap();
        assert!(pgm.starts_with("P2\n"));
        assert_eq!(pixels(&pgm), vec![0, 0, 0, 0, 255, 0]);
    }

    #[test]
    fn uniform_is_all_white_and_obstacles_use_sentinel() {
        let layout = GridLayout::new(2, 2, &[(1, 0)]).unwrap();
        let pgm = emit_heatmap(&Distribution::uniform(4), &layout, "t").unwrap();
        assert_eq!(pixels(&pgm), vec![255, 256, 255, 255]);
        assert!(emit_heatmap(&Distribution::uniform(5), &layout, "t").is_err());
    }

    #[test]
    fn policy_csv_round_trip() {
        let s = Scenario::three_routes();
        let eq = crate::mean_field::mfe_solve(&s);
        let text = policy_csv(&s.graph, &eq.policy);
        let back = read_policy_csv(&text, &s.graph, s.horizon()).unwrap();
        assert_eq!(back, eq.policy);
    }

    #[test]
    fn policy_csv_rejects_bad_rows() {
        let s = Scenario::three_routes();
        let bad_edge = "t,i,j,value\n0,1,0,1\n";
        assert!(matches!(read_policy_csv(bad_edge, &s.graph, 1), Err(Error::Parse { line: 2, .. })));
        let not_stochastic = "0,0,1,0.5\n0,0,2,0.2\n0,1,1,1\n0,2,2,1\n0,3,3,1\n";
        assert!(matches!(read_policy_csv(not_stochastic, &s.graph, 1), Err(Error::Input(_))));
        let dup = "0,0,1,0.5\n0,0,1,0.5\n";
        assert!(read_policy_csv(dup, &s.graph, 1).is_err());
    }

    #[test]
    fn reals_round_trip() {
        for x in [0.0, 1.0, -2.5, 1e-300, 0.1 + 0.2, 123456.789, 7e20, -3e-7] {
            assert_eq!(real(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(real(1e-300), "1e-300");
    }
}
