//! Layer compositions used by the decoder: compression unit (ReLU + 1x1),
//! fusion unit (concat + ReLU + 3x3) and the pyramid pooling module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ConvSpec;
use crate::nn::params::{ParamId, ParamKind, ParamRegistry};
use crate::nn::recorder::Recorder;
use crate::tensor::Shape;

/// Convolution with its declared parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub spec: ConvSpec,
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl ConvLayer {
    /// Square kernel, `groups = 1`, zero padding `padding`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        reg: &mut ParamRegistry,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    ) -> Self {
        Self::grouped(reg, name, c_in, c_out, kernel, stride, padding, 1, bias)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn grouped(
        reg: &mut ParamRegistry,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        groups: usize,
        bias: bool,
    ) -> Self {
        let per_group = c_in / groups;
        let weight = reg.register(
            format!("{name}.weight"),
            Shape::new(c_out, per_group, kernel, kernel),
            ParamKind::Weight {
                fan_in: per_group * kernel * kernel,
            },
        );
        let bias = bias.then(|| reg.register(format!("{name}.bias"), Shape::new(c_out, 1, 1, 1), ParamKind::Bias));
        ConvLayer {
            spec: ConvSpec {
                c_in,
                c_out,
                kernel,
                stride,
                padding,
                groups,
                bias: bias.is_some(),
            },
            weight,
            bias,
        }
    }

    pub fn pointwise(reg: &mut ParamRegistry, name: &str, c_in: usize, c_out: usize) -> Self {
        Self::new(reg, name, c_in, c_out, 1, 1, 0, true)
    }

    pub fn forward<R: Recorder>(&self, r: &mut R, name: &str, x: &R::Value) -> Result<R::Value> {
        r.conv2d(name, x, self)
    }
}

/// `round_half_up(depth / ratio)`, at least 1.
pub fn compressed_depth(depth: usize, ratio: usize) -> usize {
    scaled_depth(depth, 1, ratio)
}

/// `round_half_up(depth * num / den)`, at least 1.
pub fn scaled_depth(depth: usize, num: usize, den: usize) -> usize {
    ((2 * depth * num + den) / (2 * den)).max(1)
}

/// ReLU followed by a 1x1 convolution that maps `c_in` to `c_out` channels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressionUnit {
    pub conv: ConvLayer,
}

impl CompressionUnit {
    pub fn new(reg: &mut ParamRegistry, name: &str, c_in: usize, c_out: usize) -> Self {
        CompressionUnit {
            conv: ConvLayer::pointwise(reg, name, c_in, c_out),
        }
    }

    /// Unit whose output depth is `c_in / ratio` (rounded half up, at least 1).
    pub fn with_ratio(reg: &mut ParamRegistry, name: &str, c_in: usize, ratio: usize) -> Self {
        Self::new(reg, name, c_in, compressed_depth(c_in, ratio))
    }

    pub fn c_in(&self) -> usize {
        self.conv.spec.c_in
    }

    pub fn c_out(&self) -> usize {
        self.conv.spec.c_out
    }

    /// Effective ratio `c_in / c_out`.
    pub fn ratio(&self) -> f64 {
        self.c_in() as f64 / self.c_out() as f64
    }

    pub fn forward<R: Recorder>(&self, r: &mut R, name: &str, x: &R::Value) -> Result<R::Value> {
        let c = r.shape_of(x).c;
        if c != self.c_in() {
            return Err(Error::DimMismatch {
                op: "compression unit",
                dim: "input channels",
                expected: self.c_in(),
                actual: c,
            });
        }
        let a = r.relu(&format!("{name}.relu"), x)?;
        self.conv.forward(r, name, &a)
    }
}

/// Channel concatenation, ReLU, then a spatial-preserving 3x3 convolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionUnit {
    pub conv: ConvLayer,
}

impl FusionUnit {
    pub fn new(reg: &mut ParamRegistry, name: &str, c_in: usize, c_out: usize) -> Self {
        FusionUnit {
            conv: ConvLayer::new(reg, name, c_in, c_out, 3, 1, 1, true),
        }
    }

    pub fn forward<R: Recorder>(&self, r: &mut R, name: &str, xs: &[R::Value]) -> Result<R::Value> {
        let cat = r.concat(&format!("{name}.cat"), xs)?;
        let a = r.relu(&format!("{name}.relu"), &cat)?;
        self.conv.forward(r, name, &a)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PpmConfig {
    /// Strictly increasing pooling grid sizes.
    pub bins: Vec<usize>,
    pub branch_depth: usize,
    pub out_depth: usize,
}

impl PpmConfig {
    /// Branch depth `out_depth / 4` (at least 1).
    pub fn new(bins: Vec<usize>, out_depth: usize) -> Self {
        PpmConfig {
            bins,
            branch_depth: (out_depth / 4).max(1),
            out_depth,
        }
    }

    pub fn validate(&self, spatial: (usize, usize)) -> Result<()> {
        if self.bins.is_empty() {
            return Err(Error::Config("PPM needs at least one bin size".into()));
        }
        if self.bins.windows(2).any(|w| w[0] >= w[1]) || self.bins[0] == 0 {
            return Err(Error::Config(format!(
                "PPM bins must be positive and strictly increasing: {:?}",
                self.bins
            )));
        }
        let largest = *self.bins.last().expect("non-empty");
        if largest > spatial.0.min(spatial.1) {
            return Err(Error::Config(format!(
                "PPM bin {largest} exceeds the {}x{} input map",
                spatial.0, spatial.1
            )));
        }
        Ok(())
    }
}

/// Pyramid pooling: per-bin pool -> 1x1 conv -> resize back, concatenated
/// with the input and fused by a 1x1 convolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ppm {
    pub cfg: PpmConfig,
    pub branches: Vec<ConvLayer>,
    pub fuse: ConvLayer,
}

impl Ppm {
    pub fn new(reg: &mut ParamRegistry, name: &str, c_in: usize, cfg: PpmConfig) -> Self {
        let branches = cfg
            .bins
            .iter()
            .map(|b| ConvLayer::pointwise(reg, &format!("{name}.bin{b}"), c_in, cfg.branch_depth))
            .collect();
        let fuse_in = c_in + cfg.bins.len() * cfg.branch_depth;
        let fuse = ConvLayer::pointwise(reg, &format!("{name}.fuse"), fuse_in, cfg.out_depth);
        Ppm { cfg, branches, fuse }
    }

    pub fn forward<R: Recorder>(&self, r: &mut R, name: &str, x: &R::Value) -> Result<R::Value> {
        let s = r.shape_of(x);
        self.cfg.validate((s.h, s.w))?;
        let mut parts = vec![x.clone()];
        for (bins, conv) in self.cfg.bins.iter().zip(&self.branches) {
            let base = format!("{name}.bin{bins}");
            let pooled = r.adaptive_avg_pool(&format!("{base}.pool"), x, *bins)?;
            let y = conv.forward(r, &base, &pooled)?;
            parts.push(r.bilinear_resize(&format!("{base}.up"), &y, s.h, s.w)?);
        }
        let cat = r.concat(&format!("{name}.cat"), &parts)?;
        self.fuse.forward(r, &format!("{name}.fuse"), &cat)
    }
}
