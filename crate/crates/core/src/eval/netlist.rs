// SPDX-License-Identifier: Apache-2.0

//! Yosys JSON netlist reader and the GEMM structural features computed on
//! top of it.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use petgraph::algo::{condensation, toposort};
use petgraph::graph::{DiGraph, NodeIndex};
use serde::{Deserialize, Serialize};

use super::CellClasses;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Deserialize)]
#[serde(untagged)]
pub enum Bit {
    Net(u64),
    Const(String),
}

#[derive(Debug, Clone, Deserialize)]
pub struct Port {
    pub direction: String,
    #[serde(default)]
    pub bits: Vec<Bit>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Cell {
    #[serde(rename = "type")]
    pub cell_type: String,
    #[serde(default)]
    pub port_directions: BTreeMap<String, String>,
    #[serde(default)]
    pub connections: BTreeMap<String, Vec<Bit>>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct NetName {
    #[serde(default)]
    pub hide_name: u8,
    #[serde(default)]
    pub bits: Vec<Bit>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Module {
    #[serde(default)]
    pub attributes: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    pub ports: BTreeMap<String, Port>,
    #[serde(default)]
    pub cells: BTreeMap<String, Cell>,
    #[serde(default)]
    pub netnames: BTreeMap<String, NetName>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Netlist {
    pub modules: BTreeMap<String, Module>,
}

impl Netlist {
    pub fn parse(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("invalid netlist JSON: {e}"))
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text)
    }

    /// The module marked `top`, or the only module.
    pub fn top(&self) -> Option<(&str, &Module)> {
        let marked = self.modules.iter().find(|(_, m)| {
            m.attributes
                .get("top")
                .map(|v| match v {
                    serde_json::Value::String(s) => s.trim_start_matches('0') == "1",
                    serde_json::Value::Number(n) => n.as_u64() == Some(1),
                    _ => false,
                })
                .unwrap_or(false)
        });
        marked
            .or_else(|| (self.modules.len() == 1).then(|| self.modules.iter().next().unwrap()))
            .map(|(n, m)| (n.as_str(), m))
    }
}

fn is_output_port(cell: &Cell, port: &str) -> bool {
    match cell.port_directions.get(port) {
        Some(d) => d == "output",
        None => matches!(port, "Y" | "Q" | "O" | "OUT"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellClass {
    Multiplier,
    Adder,
    Dff,
    Mux,
    Other,
}

pub fn classify(cell_type: &str, classes: &CellClasses) -> CellClass {
    let lower = cell_type.to_ascii_lowercase();
    let hit = |pats: &[String]| pats.iter().any(|p| lower.contains(&p.to_ascii_lowercase()));
    if hit(&classes.dff) {
        CellClass::Dff
    } else if hit(&classes.mux) {
        CellClass::Mux
    } else if hit(&classes.multiplier) {
        CellClass::Multiplier
    } else if hit(&classes.adder) {
        CellClass::Adder
    } else {
        CellClass::Other
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct GemmMetrics {
    pub mul_cells: u64,
    pub add_cells: u64,
    pub dff_cells: u64,
    pub mux_cells: u64,
    pub bitwidth_hits: u64,
    pub pipeline_depth_proxy: u64,
    pub adp_proxy: Option<f64>,
    pub downstream_score: f64,
}

/// Weights and references of the downstream aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DownstreamParams {
    pub preferred_widths: Vec<u32>,
    pub expected_bw_hits: u64,
    pub target_depth: u64,
    pub w_mul: f64,
    pub w_adp: f64,
    pub w_bw: f64,
    pub w_pipe: f64,
    pub adp_ref: f64,
}

impl Default for DownstreamParams {
    fn default() -> Self {
        Self {
            preferred_widths: vec![4, 8, 16, 32],
            expected_bw_hits: 0,
            target_depth: 0,
            w_mul: 0.5,
            w_adp: 1.0,
            w_bw: 0.25,
            w_pipe: 0.25,
            adp_ref: 100.0,
        }
    }
}

/// Linear, decomposable aggregate; lower is better. A missing ADP proxy
/// contributes nothing.
pub fn downstream_score(m: &GemmMetrics, p: &DownstreamParams) -> f64 {
    let adp = m.adp_proxy.map(|a| a / p.adp_ref).unwrap_or(0.0);
    let bw_shortfall = p.expected_bw_hits.saturating_sub(m.bitwidth_hits) as f64;
    let depth_gap = (m.pipeline_depth_proxy as f64 - p.target_depth as f64).abs();
    p.w_mul * m.mul_cells as f64 + p.w_adp * adp + p.w_bw * bw_shortfall + p.w_pipe * depth_gap
}

/// Ports plus public internal nets whose width is a preferred width.
pub fn bitwidth_hits(module: &Module, preferred: &[u32]) -> u64 {
    let hit = |w: usize| preferred.contains(&(w as u32));
    let ports = module.ports.values().filter(|p| hit(p.bits.len())).count() as u64;
    let internal = module
        .netnames
        .iter()
        .filter(|(name, n)| n.hide_name == 0 && !module.ports.contains_key(*name) && hit(n.bits.len()))
        .count() as u64;
    ports + internal
}

/// Number of register stages on the longest chain ending at an output port.
/// Strongly connected regions (feedback through registers) count each of
/// their registers once.
pub fn pipeline_depth(module: &Module, classes: &CellClasses) -> u64 {
    #[derive(Clone, Copy)]
    enum Node {
        Inputs,
        Outputs,
        Cell(bool),
    }
    let mut g: DiGraph<Node, ()> = DiGraph::new();
    let inputs = g.add_node(Node::Inputs);
    let outputs = g.add_node(Node::Outputs);

    let mut drivers: HashMap<&Bit, NodeIndex> = HashMap::new();
    for port in module.ports.values() {
        if port.direction == "input" {
            for b in &port.bits {
                drivers.insert(b, inputs);
            }
        }
    }
    let mut cell_nodes = Vec::new();
    for cell in module.cells.values() {
        let is_dff = classify(&cell.cell_type, classes) == CellClass::Dff;
        let n = g.add_node(Node::Cell(is_dff));
        for (port, bits) in &cell.connections {
            if is_output_port(cell, port) {
                for b in bits {
                    drivers.insert(b, n);
                }
            }
        }
        cell_nodes.push((n, cell));
    }
    for (n, cell) in &cell_nodes {
        for (port, bits) in &cell.connections {
            if is_output_port(cell, port) {
                continue;
            }
            for b in bits {
                if let Some(&d) = drivers.get(b) {
                    g.update_edge(d, *n, ());
                }
            }
        }
    }
    for port in module.ports.values() {
        if port.direction == "output" {
            for b in &port.bits {
                if let Some(&d) = drivers.get(b) {
                    g.update_edge(d, outputs, ());
                }
            }
        }
    }

    let dag = condensation(g, true);
    let weight = |idx: NodeIndex| -> u64 {
        dag[idx]
            .iter()
            .filter(|n| matches!(n, Node::Cell(true)))
            .count() as u64
    };
    let Ok(order) = toposort(&dag, None) else {
        return 0;
    };
    let mut best: HashMap<NodeIndex, u64> = HashMap::new();
    let mut depth_at_outputs = 0;
    for idx in order {
        let incoming = dag
            .neighbors_directed(idx, petgraph::Direction::Incoming)
            .map(|p| best.get(&p).copied().unwrap_or(0))
            .max()
            .unwrap_or(0);
        let here = incoming + weight(idx);
        best.insert(idx, here);
        if dag[idx].iter().any(|n| matches!(n, Node::Outputs)) {
            depth_at_outputs = here;
        }
    }
    depth_at_outputs
}

/// Structural GEMM features of the top module. `cell_count` and
/// `abc_delay_proxy` come from the synthesis and timing evaluators.
pub fn gemm_metrics(
    netlist: &Netlist,
    classes: &CellClasses,
    params: &DownstreamParams,
    cell_count: Option<f64>,
    abc_delay_proxy: Option<f64>,
) -> Result<GemmMetrics, String> {
    let (_, top) = netlist
        .top()
        .ok_or_else(|| "netlist has no identifiable top module".to_string())?;
    let mut m = GemmMetrics::default();
    for cell in top.cells.values() {
        match classify(&cell.cell_type, classes) {
            CellClass::Multiplier => m.mul_cells += 1,
            CellClass::Adder => m.add_cells += 1,
            CellClass::Dff => m.dff_cells += 1,
            CellClass::Mux => m.mux_cells += 1,
            CellClass::Other => {}
        }
    }
    m.bitwidth_hits = bitwidth_hits(top, &params.preferred_widths);
    m.pipeline_depth_proxy = pipeline_depth(top, classes);
    let cells = cell_count.unwrap_or(top.cells.len() as f64);
    m.adp_proxy = abc_delay_proxy.map(|d| cells * d);
    m.downstream_score = downstream_score(&m, params);
    Ok(m)
}
