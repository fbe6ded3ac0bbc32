//! Static model graph: a shape-annotated layer list produced by tracing an
//! architecture with [`ShapeTracer`].

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::ConvLayer;
use crate::nn::recorder::Recorder;
use crate::ops::conv::ConvGeometry;
use crate::tensor::Shape;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Component {
    Encoder,
    SideCompression,
    Pcsp,
    Ppm,
    Decoder,
    Head,
}

impl Component {
    pub const ALL: [Component; 6] = [
        Component::Encoder,
        Component::SideCompression,
        Component::Pcsp,
        Component::Ppm,
        Component::Decoder,
        Component::Head,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Component::Encoder => "encoder",
            Component::SideCompression => "side-compression",
            Component::Pcsp => "pcsp",
            Component::Ppm => "ppm",
            Component::Decoder => "decoder",
            Component::Head => "head",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
    pub bias: bool,
}

impl ConvSpec {
    pub fn param_count(&self) -> u64 {
        let weights = (self.c_in / self.groups) * self.c_out * self.kernel * self.kernel;
        (weights + if self.bias { self.c_out } else { 0 }) as u64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum NodeKind {
    Input,
    Conv(ConvSpec),
    BatchNorm,
    Relu,
    Sigmoid,
    Swish,
    Bilinear,
    AvgPool {
        bins: usize,
    },
    MaxPool {
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Concat,
    Add,
    ChannelScale,
}

impl NodeKind {
    fn label(&self) -> String {
        match self {
            NodeKind::Input => "input".into(),
            NodeKind::Conv(c) => {
                let mut s = format!("conv{}x{}/s{}/p{}", c.kernel, c.kernel, c.stride, c.padding);
                if c.groups != 1 {
                    let _ = write!(s, "/g{}", c.groups);
                }
                if !c.bias {
                    s.push_str("/nobias");
                }
                s
            }
            NodeKind::BatchNorm => "batchnorm".into(),
            NodeKind::Relu => "relu".into(),
            NodeKind::Sigmoid => "sigmoid".into(),
            NodeKind::Swish => "swish".into(),
            NodeKind::Bilinear => "bilinear".into(),
            NodeKind::AvgPool { bins } => format!("avgpool{bins}"),
            NodeKind::MaxPool {
                kernel,
                stride,
                padding,
            } => format!("maxpool{kernel}x{kernel}/s{stride}/p{padding}"),
            NodeKind::Concat => "concat".into(),
            NodeKind::Add => "add".into(),
            NodeKind::ChannelScale => "chscale".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub usize);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: NodeId,
    pub name: String,
    pub component: Component,
    pub kind: NodeKind,
    pub inputs: Vec<NodeId>,
    pub shape: Shape,
}

/// Ordered layer list with wiring and static shapes. Node inputs always
/// precede the node; the last node is the model output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelGraph {
    pub name: String,
    pub nodes: Vec<GraphNode>,
    pub output: NodeId,
}

impl ModelGraph {
    pub fn node(&self, id: NodeId) -> &GraphNode {
        &self.nodes[id.0]
    }

    pub fn input_shape(&self) -> Option<Shape> {
        self.nodes.iter().find(|n| n.kind == NodeKind::Input).map(|n| n.shape)
    }

    pub fn output_shape(&self) -> Shape {
        self.node(self.output).shape
    }

    pub fn find(&self, name: &str) -> Option<&GraphNode> {
        self.nodes.iter().find(|n| n.name == name)
    }

    /// Human- and diff-friendly description, one node per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# graph {}", self.name);
        let _ = writeln!(out, "# nodes {}", self.nodes.len());
        for n in &self.nodes {
            let inputs: Vec<String> = n.inputs.iter().map(|i| format!("n{}", i.0)).collect();
            let _ = write!(
                out,
                "n{} {} {} {} in=[{}] out={}",
                n.id.0,
                n.component,
                n.name,
                n.kind.label(),
                inputs.join(","),
                n.shape
            );
            if let NodeKind::Conv(c) = &n.kind {
                let _ = write!(out, " c_in={} c_out={}", c.c_in, c.c_out);
            }
            out.push('\n');
        }
        let _ = writeln!(out, "# output n{}", self.output.0);
        out
    }
}

/// [`Recorder`] that only propagates shapes and records a [`ModelGraph`].
pub struct ShapeTracer {
    nodes: Vec<GraphNode>,
    component: Component,
}

impl Default for ShapeTracer {
    fn default() -> Self {
        Self::new()
    }
}

impl ShapeTracer {
    pub fn new() -> Self {
        ShapeTracer {
            nodes: Vec::new(),
            component: Component::Encoder,
        }
    }

    pub fn input(&mut self, name: &str, shape: Shape) -> NodeId {
        self.push(name, NodeKind::Input, vec![], shape)
    }

    pub fn finish(self, name: impl Into<String>, output: NodeId) -> ModelGraph {
        ModelGraph {
            name: name.into(),
            nodes: self.nodes,
            output,
        }
    }

    fn push(&mut self, name: &str, kind: NodeKind, inputs: Vec<NodeId>, shape: Shape) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(GraphNode {
            id,
            name: name.to_string(),
            component: self.component,
            kind,
            inputs,
            shape,
        });
        id
    }

    fn shape(&self, id: NodeId) -> Shape {
        self.nodes[id.0].shape
    }

    fn unary(&mut self, name: &str, kind: NodeKind, x: &NodeId) -> NodeId {
        let s = self.shape(*x);
        self.push(name, kind, vec![*x], s)
    }
}

impl Recorder for ShapeTracer {
    type Value = NodeId;

    fn shape_of(&self, v: &NodeId) -> Shape {
        self.shape(*v)
    }

    fn set_component(&mut self, component: Component) {
        self.component = component;
    }

    fn conv2d(&mut self, name: &str, x: &NodeId, layer: &ConvLayer) -> Result<NodeId> {
        let s = self.shape(*x);
        let spec = layer.spec;
        if s.c != spec.c_in {
            return Err(Error::DimMismatch {
                op: "conv2d",
                dim: "input channels",
                expected: spec.c_in,
                actual: s.c,
            });
        }
        let geo = ConvGeometry {
            input: s,
            c_out: spec.c_out,
            kernel: spec.kernel,
            stride: spec.stride,
            padding: spec.padding,
        };
        let out = geo.output();
        if out.h == 0 || out.w == 0 {
            return Err(Error::invalid("conv2d", format!("{name}: input {s} too small")));
        }
        Ok(self.push(name, NodeKind::Conv(spec), vec![*x], out))
    }

    fn batch_norm(&mut self, name: &str, x: &NodeId) -> Result<NodeId> {
        Ok(self.unary(name, NodeKind::BatchNorm, x))
    }

    fn relu(&mut self, name: &str, x: &NodeId) -> Result<NodeId> {
        Ok(self.unary(name, NodeKind::Relu, x))
    }

    fn sigmoid(&mut self, name: &str, x: &NodeId) -> Result<NodeId> {
        Ok(self.unary(name, NodeKind::Sigmoid, x))
    }

    fn swish(&mut self, name: &str, x: &NodeId) -> Result<NodeId> {
        Ok(self.unary(name, NodeKind::Swish, x))
    }

    fn bilinear_resize(&mut self, name: &str, x: &NodeId, out_h: usize, out_w: usize) -> Result<NodeId> {
        if out_h == 0 || out_w == 0 {
            return Err(Error::invalid(
                "bilinear_resize",
                format!("{name}: size {out_h}x{out_w}"),
            ));
        }
        let s = self.shape(*x).with_spatial(out_h, out_w);
        Ok(self.push(name, NodeKind::Bilinear, vec![*x], s))
    }

    fn adaptive_avg_pool(&mut self, name: &str, x: &NodeId, bins: usize) -> Result<NodeId> {
        let s = self.shape(*x);
        if bins == 0 || bins > s.h || bins > s.w {
            return Err(Error::invalid(
                "adaptive_avg_pool",
                format!("{name}: {bins} bins do not fit a {}x{} map", s.h, s.w),
            ));
        }
        Ok(self.push(name, NodeKind::AvgPool { bins }, vec![*x], s.with_spatial(bins, bins)))
    }

    fn max_pool(&mut self, name: &str, x: &NodeId, kernel: usize, stride: usize, padding: usize) -> Result<NodeId> {
        let s = self.shape(*x);
        let h = ConvGeometry::out_extent(s.h, kernel, stride, padding);
        let w = ConvGeometry::out_extent(s.w, kernel, stride, padding);
        let (Some(h), Some(w)) = (h, w) else {
            return Err(Error::invalid("max_pool", format!("{name}: input {s} too small")));
        };
        Ok(self.push(
            name,
            NodeKind::MaxPool {
                kernel,
                stride,
                padding,
            },
            vec![*x],
            s.with_spatial(h, w),
        ))
    }

    fn concat(&mut self, name: &str, xs: &[NodeId]) -> Result<NodeId> {
        let first = *xs.first().ok_or_else(|| Error::invalid("concat", "no operands"))?;
        if xs.len() == 1 {
            return Ok(first);
        }
        let s0 = self.shape(first);
        let mut channels = 0;
        for x in xs {
            let s = self.shape(*x);
            if s.n != s0.n || s.h != s0.h || s.w != s0.w {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: s0,
                    rhs: s,
                });
            }
            channels += s.c;
        }
        Ok(self.push(name, NodeKind::Concat, xs.to_vec(), s0.with_channels(channels)))
    }

    fn add(&mut self, name: &str, a: &NodeId, b: &NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(*a), self.shape(*b));
        if sa != sb {
            return Err(Error::ShapeMismatch {
                op: "add",
                lhs: sa,
                rhs: sb,
            });
        }
        Ok(self.push(name, NodeKind::Add, vec![*a, *b], sa))
    }

    fn channel_scale(&mut self, name: &str, x: &NodeId, gate: &NodeId) -> Result<NodeId> {
        let (sx, sg) = (self.shape(*x), self.shape(*gate));
        if sg.c != sx.c || sg.h != 1 || sg.w != 1 {
            return Err(Error::ShapeMismatch {
                op: "channel_scale",
                lhs: sx,
                rhs: sg,
            });
        }
        Ok(self.push(name, NodeKind::ChannelScale, vec![*x, *gate], sx))
    }
}
