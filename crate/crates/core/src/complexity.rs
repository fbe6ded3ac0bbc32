//! Static parameter and MAC accounting over a [`ModelGraph`].
//!
//! Conventions: convolution costs `H_out*W_out*(C_in/groups)*C_out*k^2` MACs
//! per batch item, bilinear resize 4 MACs per output element (0 when the size
//! is unchanged), adaptive average pooling 1 MAC per input element, max
//! pooling `k^2` per output element. Activations, additions, channel scaling
//! and batch normalization cost 0 MACs; batch normalization holds `2*C`
//! parameters. Bias MACs are ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::arch::{build_model, BackboneProfile, DecoderConfig};
use crate::error::{Error, Result};
use crate::graph::{Component, GraphNode, ModelGraph, NodeId, NodeKind};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerCost {
    pub node: NodeId,
    pub name: String,
    pub component: Component,
    pub params: u64,
    pub macs: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Cost {
    pub params: u64,
    pub macs: u64,
}

impl std::ops::AddAssign for Cost {
    fn add_assign(&mut self, rhs: Cost) {
        self.params += rhs.params;
        self.macs += rhs.macs;
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostReport {
    pub graph: String,
    pub layers: Vec<LayerCost>,
    pub components: BTreeMap<Component, Cost>,
    pub total: Cost,
}

impl CostReport {
    pub fn component(&self, c: Component) -> Cost {
        self.components.get(&c).copied().unwrap_or_default()
    }

    /// Everything outside the encoder.
    pub fn decoder(&self) -> Cost {
        let mut c = Cost::default();
        for (k, v) in &self.components {
            if *k != Component::Encoder {
                c += *v;
            }
        }
        c
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# cost {}", self.graph);
        let _ = writeln!(out, "{:<18} {:>14} {:>18}", "component", "params", "macs");
        for c in Component::ALL {
            let v = self.component(c);
            let _ = writeln!(out, "{:<18} {:>14} {:>18}", c.as_str(), v.params, v.macs);
        }
        let d = self.decoder();
        let _ = writeln!(out, "{:<18} {:>14} {:>18}", "decoder-total", d.params, d.macs);
        let _ = writeln!(out, "{:<18} {:>14} {:>18}", "total", self.total.params, self.total.macs);
        out
    }

    /// One `node,name,component,params,macs` row per layer with nonzero cost.
    pub fn layers_csv(&self) -> String {
        let mut out = String::from("node,name,component,params,macs\n");
        for l in self.layers.iter().filter(|l| l.params > 0 || l.macs > 0) {
            let _ = writeln!(out, "{},{},{},{},{}", l.node.0, l.name, l.component, l.params, l.macs);
        }
        out
    }
}

/// `(params, macs)` of a single node.
pub fn node_cost(graph: &ModelGraph, node: &GraphNode) -> Cost {
    let out = node.shape;
    let input = || graph.node(node.inputs[0]).shape;
    let area = (out.n * out.h * out.w) as u64;
    match &node.kind {
        NodeKind::Conv(c) => Cost {
            params: c.param_count(),
            macs: area * ((c.c_in / c.groups) * c.c_out * c.kernel * c.kernel) as u64,
        },
        NodeKind::BatchNorm => Cost {
            params: 2 * out.c as u64,
            macs: 0,
        },
        NodeKind::Bilinear => Cost {
            params: 0,
            macs: if input() == out { 0 } else { 4 * out.numel() as u64 },
        },
        NodeKind::AvgPool { .. } => Cost {
            params: 0,
            macs: input().numel() as u64,
        },
        NodeKind::MaxPool { kernel, .. } => Cost {
            params: 0,
            macs: (kernel * kernel * out.numel()) as u64,
        },
        NodeKind::Input
        | NodeKind::Relu
        | NodeKind::Sigmoid
        | NodeKind::Swish
        | NodeKind::Concat
        | NodeKind::Add
        | NodeKind::ChannelScale => Cost::default(),
    }
}

/// Full per-layer parameter and MAC report.
pub fn cost_report(graph: &ModelGraph) -> CostReport {
    let mut components = BTreeMap::new();
    let mut total = Cost::default();
    let layers = graph
        .nodes
        .iter()
        .map(|n| {
            let c = node_cost(graph, n);
            *components.entry(n.component).or_insert_with(Cost::default) += c;
            total += c;
            LayerCost {
                node: n.id,
                name: n.name.clone(),
                component: n.component,
                params: c.params,
                macs: c.macs,
            }
        })
        .collect();
    CostReport {
        graph: graph.name.clone(),
        layers,
        components,
        total,
    }
}

pub fn count_params(graph: &ModelGraph) -> CostReport {
    cost_report(graph)
}

/// MAC report; `input` must be the size the graph was built for.
pub fn count_flops(graph: &ModelGraph, input: (usize, usize)) -> Result<CostReport> {
    let s = graph
        .input_shape()
        .ok_or_else(|| Error::invalid("count_flops", "graph has no input node"))?;
    if (s.h, s.w) != input {
        return Err(Error::invalid(
            "count_flops",
            format!("graph was built for {}x{}, asked for {}x{}", s.h, s.w, input.0, input.1),
        ));
    }
    if !input.0.is_multiple_of(32) || !input.1.is_multiple_of(32) {
        return Err(Error::Config(format!(
            "input size {}x{} is not a multiple of 32",
            input.0, input.1
        )));
    }
    Ok(cost_report(graph))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostRow {
    pub ratio: usize,
    pub decoder: Cost,
    pub total: Cost,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostTable {
    pub backbone: String,
    pub input: (usize, usize),
    pub rows: Vec<CostRow>,
}

impl CostTable {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {} at {}x{}", self.backbone, self.input.0, self.input.1);
        let _ = writeln!(
            out,
            "{:>4} {:>14} {:>14} {:>14} {:>14}",
            "r", "dec-params", "dec-macs", "total-params", "total-macs"
        );
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{:>4} {:>14} {:>14} {:>14} {:>14}",
                row.ratio,
                human(row.decoder.params),
                human(row.decoder.macs),
                human(row.total.params),
                human(row.total.macs)
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,decoder_params,decoder_macs,total_params,total_macs\n");
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                row.ratio, row.decoder.params, row.decoder.macs, row.total.params, row.total.macs
            );
        }
        out
    }
}

/// Decoder and whole-model cost for each compression ratio.
pub fn cost_table(
    profile: &BackboneProfile,
    cfg: &DecoderConfig,
    ratios: &[usize],
    input: (usize, usize),
) -> Result<CostTable> {
    let rows = ratios
        .iter()
        .map(|&r| {
            let cfg = DecoderConfig {
                ratio: r,
                ..cfg.clone()
            };
            let report = cost_report(&build_model(profile, &cfg, input)?);
            Ok(CostRow {
                ratio: r,
                decoder: report.decoder(),
                total: report.total,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CostTable {
        backbone: profile.name.clone(),
        input,
        rows,
    })
}

/// `K`/`M`/`G` rendering with three decimals, rounded half up.
pub fn human(count: u64) -> String {
    let (unit, suffix) = match count {
        c if c >= 1_000_000_000 => (1_000_000_000u128, "G"),
        c if c >= 1_000_000 => (1_000_000, "M"),
        c if c >= 1_000 => (1_000, "K"),
        _ => return count.to_string(),
    };
    let milli = (count as u128 * 1000 + unit / 2) / unit;
    format!("{}.{:03}{suffix}", milli / 1000, milli % 1000)
}
