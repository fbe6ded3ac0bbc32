//! Encoder profiles. ResNet50 and EfficientNet encoders are structural only
//! (they trace shapes and costs but carry no executable weights); the tiny
//! backbone is the trainable desk-scale encoder.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Component;
use crate::nn::layers::ConvLayer;
use crate::nn::params::{ParamKind, ParamRegistry};
use crate::nn::recorder::Recorder;
use crate::tensor::Shape;

pub const TINY_DEFAULT_WIDTHS: [usize; 5] = [8, 16, 32, 64, 128];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BackboneKind {
    Tiny,
    ResNet50,
    EfficientNetB0,
    EfficientNetB3,
}

/// Stage depths `d_1..d_5` of an encoder whose stage `i` runs at `1/2^i` of the input.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneProfile {
    pub name: String,
    pub kind: BackboneKind,
    pub depths: [usize; 5],
    pub trainable: bool,
}

impl BackboneProfile {
    pub fn tiny(widths: [usize; 5]) -> Self {
        BackboneProfile {
            name: "tiny".into(),
            kind: BackboneKind::Tiny,
            depths: widths,
            trainable: true,
        }
    }

    pub fn resnet50() -> Self {
        BackboneProfile {
            name: "resnet50".into(),
            kind: BackboneKind::ResNet50,
            depths: [64, 256, 512, 1024, 2048],
            trainable: false,
        }
    }

    pub fn efficientnet_b0() -> Self {
        BackboneProfile {
            name: "efficientnet-b0".into(),
            kind: BackboneKind::EfficientNetB0,
            depths: [16, 24, 40, 112, 320],
            trainable: false,
        }
    }

    pub fn efficientnet_b3() -> Self {
        BackboneProfile {
            name: "efficientnet-b3".into(),
            kind: BackboneKind::EfficientNetB3,
            depths: [24, 32, 48, 136, 384],
            trainable: false,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().replace('_', "-").as_str() {
            "tiny" => Ok(Self::tiny(TINY_DEFAULT_WIDTHS)),
            "resnet50" | "resnet-50" => Ok(Self::resnet50()),
            "efficientnet-b0" | "effnet-b0" | "b0" => Ok(Self::efficientnet_b0()),
            "efficientnet-b3" | "effnet-b3" | "b3" => Ok(Self::efficientnet_b3()),
            other => Err(Error::Config(format!(
                "unknown backbone '{other}' (expected tiny, resnet50, efficientnet-b0, efficientnet-b3)"
            ))),
        }
    }

    /// `d_i` for `i` in `1..=5`.
    pub fn depth(&self, stage: usize) -> usize {
        self.depths[stage - 1]
    }

    pub fn validate(&self) -> Result<()> {
        if self.depths.contains(&0) {
            return Err(Error::Config(format!(
                "backbone '{}' has a zero stage depth",
                self.name
            )));
        }
        Ok(())
    }
}

/// `(h_i, w_i)` of encoder stage `i` (0 is the input itself).
pub fn stage_size(input: (usize, usize), stage: usize) -> (usize, usize) {
    (input.0 >> stage, input.1 >> stage)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Encoder {
    Tiny(Vec<ConvLayer>),
    ResNet50(ResNet50),
    EfficientNet(EfficientNet),
}

impl Encoder {
    pub fn new(profile: &BackboneProfile, reg: &mut ParamRegistry, in_channels: usize) -> Self {
        match profile.kind {
            BackboneKind::Tiny => {
                let mut c_in = in_channels;
                let blocks = profile
                    .depths
                    .iter()
                    .enumerate()
                    .map(|(i, &d)| {
                        let layer = ConvLayer::new(reg, &format!("enc{}", i + 1), c_in, d, 3, 2, 1, true);
                        c_in = d;
                        layer
                    })
                    .collect();
                Encoder::Tiny(blocks)
            }
            BackboneKind::ResNet50 => Encoder::ResNet50(ResNet50::new(reg, in_channels)),
            BackboneKind::EfficientNetB0 => {
                Encoder::EfficientNet(EfficientNet::new(reg, in_channels, &EfficientNet::B0))
            }
            BackboneKind::EfficientNetB3 => {
                Encoder::EfficientNet(EfficientNet::new(reg, in_channels, &EfficientNet::B3))
            }
        }
    }

    /// Encoder feature maps `E_1..E_5`.
    pub fn forward<R: Recorder>(&self, r: &mut R, x: &R::Value) -> Result<Vec<R::Value>> {
        r.set_component(Component::Encoder);
        match self {
            Encoder::Tiny(blocks) => {
                let mut outs = Vec::with_capacity(5);
                let mut cur = x.clone();
                for (i, conv) in blocks.iter().enumerate() {
                    let name = format!("enc{}", i + 1);
                    let y = conv.forward(r, &name, &cur)?;
                    cur = r.relu(&format!("{name}.relu"), &y)?;
                    outs.push(cur.clone());
                }
                Ok(outs)
            }
            Encoder::ResNet50(net) => net.forward(r, x),
            Encoder::EfficientNet(net) => net.forward(r, x),
        }
    }
}

fn batch_norm_params(reg: &mut ParamRegistry, name: &str, channels: usize) {
    reg.register(format!("{name}.gamma"), Shape::new(channels, 1, 1, 1), ParamKind::Norm);
    reg.register(format!("{name}.beta"), Shape::new(channels, 1, 1, 1), ParamKind::Norm);
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bottleneck {
    name: String,
    reduce: ConvLayer,
    spatial: ConvLayer,
    expand: ConvLayer,
    downsample: Option<ConvLayer>,
}

impl Bottleneck {
    fn new(reg: &mut ParamRegistry, name: String, c_in: usize, mid: usize, c_out: usize, stride: usize) -> Self {
        let conv_bn = |reg: &mut ParamRegistry, suffix: &str, ci, co, k, s, p| {
            let n = format!("{name}.{suffix}");
            let layer = ConvLayer::new(reg, &n, ci, co, k, s, p, false);
            batch_norm_params(reg, &format!("{n}.bn"), co);
            layer
        };
        let reduce = conv_bn(reg, "conv1", c_in, mid, 1, 1, 0);
        let spatial = conv_bn(reg, "conv2", mid, mid, 3, stride, 1);
        let expand = conv_bn(reg, "conv3", mid, c_out, 1, 1, 0);
        let downsample = (stride != 1 || c_in != c_out).then(|| conv_bn(reg, "down", c_in, c_out, 1, stride, 0));
        Bottleneck {
            name,
            reduce,
            spatial,
            expand,
            downsample,
        }
    }

    fn forward<R: Recorder>(&self, r: &mut R, x: &R::Value) -> Result<R::Value> {
        let n = &self.name;
        let mut y = x.clone();
        for (suffix, conv) in [("conv1", &self.reduce), ("conv2", &self.spatial)] {
            let name = format!("{n}.{suffix}");
            y = conv.forward(r, &name, &y)?;
            y = r.batch_norm(&format!("{name}.bn"), &y)?;
            y = r.relu(&format!("{name}.relu"), &y)?;
        }
        let name = format!("{n}.conv3");
        y = self.expand.forward(r, &name, &y)?;
        y = r.batch_norm(&format!("{name}.bn"), &y)?;
        let shortcut = match &self.downsample {
            Some(conv) => {
                let name = format!("{n}.down");
                let s = conv.forward(r, &name, x)?;
                r.batch_norm(&format!("{name}.bn"), &s)?
            }
            None => x.clone(),
        };
        let sum = r.add(&format!("{n}.add"), &y, &shortcut)?;
        r.relu(&format!("{n}.relu"), &sum)
    }
}

/// Torchvision-layout ResNet50 without the classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResNet50 {
    stem: ConvLayer,
    layers: Vec<Vec<Bottleneck>>,
}

impl ResNet50 {
    const LAYOUT: [(usize, usize, usize); 4] = [(3, 64, 256), (4, 128, 512), (6, 256, 1024), (3, 512, 2048)];

    fn new(reg: &mut ParamRegistry, in_channels: usize) -> Self {
        let stem = ConvLayer::new(reg, "conv1", in_channels, 64, 7, 2, 3, false);
        batch_norm_params(reg, "conv1.bn", 64);
        let mut c_in = 64;
        let layers = Self::LAYOUT
            .iter()
            .enumerate()
            .map(|(li, &(blocks, mid, c_out))| {
                (0..blocks)
                    .map(|b| {
                        let stride = if b == 0 && li > 0 { 2 } else { 1 };
                        let block = Bottleneck::new(reg, format!("layer{}.{b}", li + 1), c_in, mid, c_out, stride);
                        c_in = c_out;
                        block
                    })
                    .collect()
            })
            .collect();
        ResNet50 { stem, layers }
    }

    fn forward<R: Recorder>(&self, r: &mut R, x: &R::Value) -> Result<Vec<R::Value>> {
        let y = self.stem.forward(r, "conv1", x)?;
        let y = r.batch_norm("conv1.bn", &y)?;
        let e1 = r.relu("conv1.relu", &y)?;
        let mut cur = r.max_pool("maxpool", &e1, 3, 2, 1)?;
        let mut outs = vec![e1];
        for layer in &self.layers {
            for block in layer {
                cur = block.forward(r, &cur)?;
            }
            outs.push(cur.clone());
        }
        Ok(outs)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EfficientNetSpec {
    stem: usize,
    /// `(expand ratio, kernel, stride, channels, repeats)` per stage.
    stages: [(usize, usize, usize, usize, usize); 7],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MbConv {
    name: String,
    expand: Option<ConvLayer>,
    depthwise: ConvLayer,
    squeeze: ConvLayer,
    excite: ConvLayer,
    project: ConvLayer,
    residual: bool,
}

impl MbConv {
    fn new(
        reg: &mut ParamRegistry,
        name: String,
        c_in: usize,
        c_out: usize,
        expand: usize,
        kernel: usize,
        stride: usize,
    ) -> Self {
        let hidden = c_in * expand;
        let expand_layer = (expand != 1).then(|| {
            let l = ConvLayer::new(reg, &format!("{name}.expand"), c_in, hidden, 1, 1, 0, false);
            batch_norm_params(reg, &format!("{name}.expand.bn"), hidden);
            l
        });
        let depthwise = ConvLayer::grouped(
            reg,
            &format!("{name}.dw"),
            hidden,
            hidden,
            kernel,
            stride,
            kernel / 2,
            hidden,
            false,
        );
        batch_norm_params(reg, &format!("{name}.dw.bn"), hidden);
        let squeezed = (c_in / 4).max(1);
        let squeeze = ConvLayer::pointwise(reg, &format!("{name}.se.reduce"), hidden, squeezed);
        let excite = ConvLayer::pointwise(reg, &format!("{name}.se.expand"), squeezed, hidden);
        let project = ConvLayer::new(reg, &format!("{name}.project"), hidden, c_out, 1, 1, 0, false);
        batch_norm_params(reg, &format!("{name}.project.bn"), c_out);
        MbConv {
            name,
            expand: expand_layer,
            depthwise,
            squeeze,
            excite,
            project,
            residual: stride == 1 && c_in == c_out,
        }
    }

    fn forward<R: Recorder>(&self, r: &mut R, x: &R::Value) -> Result<R::Value> {
        let n = &self.name;
        let mut y = x.clone();
        if let Some(conv) = &self.expand {
            y = conv.forward(r, &format!("{n}.expand"), &y)?;
            y = r.batch_norm(&format!("{n}.expand.bn"), &y)?;
            y = r.swish(&format!("{n}.expand.act"), &y)?;
        }
        y = self.depthwise.forward(r, &format!("{n}.dw"), &y)?;
        y = r.batch_norm(&format!("{n}.dw.bn"), &y)?;
        y = r.swish(&format!("{n}.dw.act"), &y)?;
        let pooled = r.adaptive_avg_pool(&format!("{n}.se.pool"), &y, 1)?;
        let s = self.squeeze.forward(r, &format!("{n}.se.reduce"), &pooled)?;
        let s = r.swish(&format!("{n}.se.act"), &s)?;
        let s = self.excite.forward(r, &format!("{n}.se.expand"), &s)?;
        let gate = r.sigmoid(&format!("{n}.se.gate"), &s)?;
        y = r.channel_scale(&format!("{n}.se.scale"), &y, &gate)?;
        y = self.project.forward(r, &format!("{n}.project"), &y)?;
        y = r.batch_norm(&format!("{n}.project.bn"), &y)?;
        if self.residual {
            y = r.add(&format!("{n}.add"), &y, x)?;
        }
        Ok(y)
    }
}

/// EfficientNet feature extractor up to the last MBConv stage (no head conv).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficientNet {
    stem: ConvLayer,
    stages: Vec<Vec<MbConv>>,
}

impl EfficientNet {
    pub const B0: EfficientNetSpec = EfficientNetSpec {
        stem: 32,
        stages: [
            (1, 3, 1, 16, 1),
            (6, 3, 2, 24, 2),
            (6, 5, 2, 40, 2),
            (6, 3, 2, 80, 3),
            (6, 5, 1, 112, 3),
            (6, 5, 2, 192, 4),
            (6, 3, 1, 320, 1),
        ],
    };

    /// B0 scaled by width 1.2 / depth 1.4.
    pub const B3: EfficientNetSpec = EfficientNetSpec {
        stem: 40,
        stages: [
            (1, 3, 1, 24, 2),
            (6, 3, 2, 32, 3),
            (6, 5, 2, 48, 3),
            (6, 3, 2, 96, 5),
            (6, 5, 1, 136, 5),
            (6, 5, 2, 232, 6),
            (6, 3, 1, 384, 2),
        ],
    };

    /// Stage indices whose outputs are `E_1..E_5` (strides 2, 4, 8, 16, 32).
    const TAPS: [usize; 5] = [0, 1, 2, 4, 6];

    fn new(reg: &mut ParamRegistry, in_channels: usize, spec: &EfficientNetSpec) -> Self {
        let stem = ConvLayer::new(reg, "stem", in_channels, spec.stem, 3, 2, 1, false);
        batch_norm_params(reg, "stem.bn", spec.stem);
        let mut c_in = spec.stem;
        let stages = spec
            .stages
            .iter()
            .enumerate()
            .map(|(si, &(expand, kernel, stride, c_out, repeats))| {
                (0..repeats)
                    .map(|b| {
                        let s = if b == 0 { stride } else { 1 };
                        let block = MbConv::new(reg, format!("stage{}.{b}", si + 1), c_in, c_out, expand, kernel, s);
                        c_in = c_out;
                        block
                    })
                    .collect()
            })
            .collect();
        EfficientNet { stem, stages }
    }

    fn forward<R: Recorder>(&self, r: &mut R, x: &R::Value) -> Result<Vec<R::Value>> {
        let y = self.stem.forward(r, "stem", x)?;
        let y = r.batch_norm("stem.bn", &y)?;
        let mut cur = r.swish("stem.act", &y)?;
        let mut outs = Vec::with_capacity(5);
        for (si, stage) in self.stages.iter().enumerate() {
            for block in stage {
                cur = block.forward(r, &cur)?;
            }
            if Self::TAPS.contains(&si) {
                outs.push(cur.clone());
            }
        }
        Ok(outs)
    }
}
