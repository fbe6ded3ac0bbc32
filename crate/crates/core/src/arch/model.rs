//! The DNTDF encoder-decoder, written once against [`Recorder`] so the same
//! code yields the static graph and the differentiable forward pass.

use crate::arch::backbone::{stage_size, BackboneProfile, Encoder};
use crate::arch::config::DecoderConfig;
use crate::arch::plan::{working_size, ShortcutPlan};
use crate::error::{Error, Result};
use crate::graph::{Component, ModelGraph, ShapeTracer};
use crate::nn::layers::{CompressionUnit, ConvLayer, FusionUnit, Ppm, PpmConfig};
use crate::nn::params::{ParamRegistry, ParamStore};
use crate::nn::recorder::{Executor, Recorder};
use crate::tensor::{Shape, Tensor};

pub const IMAGE_CHANNELS: usize = 3;

#[derive(Clone, Debug, PartialEq)]
struct DecoderStage {
    /// `hatF_{5-j+1}`: 1x1 transform at unchanged depth (absent at stage 1).
    hat: Option<CompressionUnit>,
    /// Produces `C_j` from `hatF` and the shortcuts.
    context: Option<CompressionUnit>,
    /// Produces `G_j` from `G`.
    global: Option<CompressionUnit>,
    fuse: FusionUnit,
}

/// Intermediate maps of one forward pass, exposed for tests and inspection.
pub struct Features<V> {
    pub encoder: Vec<V>,
    pub side: Vec<V>,
    pub global: Option<V>,
    /// `D_1..D_5`.
    pub stages: Vec<V>,
    pub output: V,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dntdf {
    pub profile: BackboneProfile,
    pub cfg: DecoderConfig,
    pub input: (usize, usize),
    pub plan: ShortcutPlan,
    registry: ParamRegistry,
    encoder: Encoder,
    side: Vec<CompressionUnit>,
    ppm: Option<Ppm>,
    /// One conv per hop, aligned with `plan.paths`.
    shortcuts: Vec<Vec<ConvLayer>>,
    stages: Vec<DecoderStage>,
    head: CompressionUnit,
}

/// `d_{5-j}` for the output of stage `j`, with `d_0 := d_1`.
fn stage_out_stage(j: usize) -> usize {
    (5 - j).max(1)
}

impl Dntdf {
    pub fn new(profile: &BackboneProfile, cfg: &DecoderConfig, input: (usize, usize)) -> Result<Self> {
        cfg.validate(profile)?;
        let (h, w) = input;
        if h == 0 || w == 0 || h % 32 != 0 || w % 32 != 0 {
            return Err(Error::Config(format!(
                "input size {h}x{w} is not a positive multiple of 32"
            )));
        }
        let mut reg = ParamRegistry::new();
        let encoder = Encoder::new(profile, &mut reg, IMAGE_CHANNELS);
        let side_depth = |i: usize| cfg.side_depth(profile, i);

        let side = (1..=5)
            .map(|i| CompressionUnit::new(&mut reg, &format!("side{i}"), profile.depth(i), side_depth(i)))
            .collect();

        let g_depth = cfg.global_depth(profile);
        let ppm = if cfg.ppm_enabled {
            let ppm_cfg = PpmConfig::new(cfg.ppm_bins.clone(), g_depth);
            ppm_cfg.validate(stage_size(input, 5))?;
            Some(Ppm::new(&mut reg, "ppm", side_depth(5), ppm_cfg))
        } else {
            None
        };

        let plan = ShortcutPlan::new(profile, cfg, input);
        let shortcuts = plan
            .paths
            .iter()
            .map(|p| {
                p.hops
                    .iter()
                    .map(|hop| {
                        let name = format!("pcsp{}.hop{}", p.source, hop.stage);
                        ConvLayer::pointwise(&mut reg, &name, hop.in_depth, hop.out_depth)
                    })
                    .collect()
            })
            .collect();

        let mut stages = Vec::with_capacity(5);
        stages.push(DecoderStage {
            hat: None,
            context: None,
            global: None,
            fuse: FusionUnit::new(&mut reg, "stage1.fuse", side_depth(5), side_depth(4)),
        });
        let mut prev_depth = side_depth(4);
        for j in 2..=5 {
            let s = 6 - j;
            let skip = side_depth(s);
            let hat = CompressionUnit::new(&mut reg, &format!("stage{j}.hat"), skip, skip);
            let ctx_in = skip
                + plan
                    .sources_for(j)
                    .iter()
                    .map(|&i| plan.depth(i, j).expect("planned"))
                    .sum::<usize>();
            let context = CompressionUnit::new(&mut reg, &format!("stage{j}.ctx"), ctx_in, skip);
            let global = cfg
                .ppm_enabled
                .then(|| CompressionUnit::new(&mut reg, &format!("stage{j}.global"), g_depth, skip));
            let fuse_in = prev_depth + skip + skip + if global.is_some() { skip } else { 0 };
            let out = side_depth(stage_out_stage(j));
            stages.push(DecoderStage {
                hat: Some(hat),
                context: Some(context),
                global,
                fuse: FusionUnit::new(&mut reg, &format!("stage{j}.fuse"), fuse_in, out),
            });
            prev_depth = out;
        }
        let head = CompressionUnit::new(&mut reg, "head", prev_depth, 1);

        Ok(Dntdf {
            profile: profile.clone(),
            cfg: cfg.clone(),
            input,
            plan,
            registry: reg,
            encoder,
            side,
            ppm,
            shortcuts,
            stages,
            head,
        })
    }

    pub fn registry(&self) -> &ParamRegistry {
        &self.registry
    }

    pub fn name(&self) -> String {
        format!(
            "dntdf-{}-r{}-pcsp{}-ppm{}",
            self.profile.name,
            self.cfg.ratio,
            self.cfg.pcsp_count,
            if self.cfg.ppm_enabled { "on" } else { "off" }
        )
    }

    /// Copy of this architecture for another input size (same parameters).
    pub fn with_input(&self, input: (usize, usize)) -> Result<Self> {
        Dntdf::new(&self.profile, &self.cfg, input)
    }

    /// Static graph for a batch of one at the build-time input size.
    pub fn trace(&self) -> Result<ModelGraph> {
        let mut t = ShapeTracer::new();
        let x = t.input("image", Shape::new(1, IMAGE_CHANNELS, self.input.0, self.input.1));
        let out = self.forward(&mut t, &x)?;
        Ok(t.finish(self.name(), out))
    }

    pub fn forward<R: Recorder>(&self, r: &mut R, x: &R::Value) -> Result<R::Value> {
        Ok(self.features(r, x)?.output)
    }

    /// `F_{i->j}` for every stage `j` fed by the path from `F_i`, in stage order.
    pub fn pcsp_path<R: Recorder>(&self, r: &mut R, source: usize, f_i: &R::Value) -> Result<Vec<R::Value>> {
        let k = self
            .plan
            .paths
            .iter()
            .position(|p| p.source == source)
            .ok_or_else(|| Error::invalid("pcsp_propagate", format!("no shortcut path from F_{source}")))?;
        let path = &self.plan.paths[k];
        r.set_component(Component::Pcsp);
        // sizes follow the runtime input, which may differ from the plan's
        let s = r.shape_of(f_i);
        let input = (s.h << source, s.w << source);
        let (eh, ew) = working_size(input, path.entry);
        let mut cur = r.bilinear_resize(&format!("pcsp{source}.up{}", path.entry), f_i, eh, ew)?;
        let mut outs = vec![cur.clone()];
        for (hop, conv) in path.hops.iter().zip(&self.shortcuts[k]) {
            let name = format!("pcsp{source}.hop{}", hop.stage);
            let y = conv.forward(r, &name, &cur)?;
            let (h, w) = working_size(input, hop.stage);
            cur = r.bilinear_resize(&format!("pcsp{source}.up{}", hop.stage), &y, h, w)?;
            outs.push(cur.clone());
        }
        Ok(outs)
    }

    /// `F_{i->j}` for a single target stage.
    pub fn pcsp_propagate<R: Recorder>(&self, r: &mut R, source: usize, f_i: &R::Value, j: usize) -> Result<R::Value> {
        let path = self
            .plan
            .path(source)
            .ok_or_else(|| Error::invalid("pcsp_propagate", format!("no shortcut path from F_{source}")))?;
        if !path.feeds(j) {
            return Err(Error::invalid(
                "pcsp_propagate",
                format!("stage {j} outside the range {}..=5 of F_{source}", path.entry),
            ));
        }
        let outs = self.pcsp_path(r, source, f_i)?;
        Ok(outs[j - path.entry].clone())
    }

    pub fn features<R: Recorder>(&self, r: &mut R, x: &R::Value) -> Result<Features<R::Value>> {
        let s = r.shape_of(x);
        if s.c != IMAGE_CHANNELS || s.h % 32 != 0 || s.w % 32 != 0 || s.h == 0 || s.w == 0 {
            return Err(Error::invalid(
                "forward",
                format!("image {s} must have {IMAGE_CHANNELS} channels and sides divisible by 32"),
            ));
        }
        let input = (s.h, s.w);
        let encoder = self.encoder.forward(r, x)?;

        r.set_component(Component::SideCompression);
        let side = encoder
            .iter()
            .zip(&self.side)
            .enumerate()
            .map(|(k, (e, unit))| unit.forward(r, &format!("side{}", k + 1), e))
            .collect::<Result<Vec<_>>>()?;

        let global = match &self.ppm {
            Some(ppm) => {
                r.set_component(Component::Ppm);
                Some(ppm.forward(r, "ppm", &side[4])?)
            }
            None => None,
        };

        // shortcuts[j] holds F_{i->j} for ascending i
        let mut shortcuts: Vec<Vec<R::Value>> = vec![Vec::new(); 6];
        for path in self.plan.paths.iter().rev() {
            let outs = self.pcsp_path(r, path.source, &side[path.source - 1])?;
            for (k, v) in outs.into_iter().enumerate() {
                shortcuts[path.entry + k].push(v);
            }
        }

        r.set_component(Component::Decoder);
        let mut stages = Vec::with_capacity(5);
        let (h, w) = working_size(input, 2);
        let d1 = self.stages[0].fuse.forward(r, "stage1.fuse", &[side[4].clone()])?;
        let mut d = r.bilinear_resize("stage1.up", &d1, h, w)?;
        stages.push(d.clone());
        for j in 2..=5 {
            let stage = &self.stages[j - 1];
            let skip = &side[6 - j - 1];
            let hat = stage
                .hat
                .as_ref()
                .expect("stage >= 2")
                .forward(r, &format!("stage{j}.hat"), skip)?;
            let mut parts = vec![hat];
            parts.extend(shortcuts[j].iter().cloned());
            let cat = r.concat(&format!("stage{j}.ctx.cat"), &parts)?;
            let ctx = stage
                .context
                .as_ref()
                .expect("stage >= 2")
                .forward(r, &format!("stage{j}.ctx"), &cat)?;
            let mut inputs = vec![d.clone(), skip.clone(), ctx];
            if let (Some(unit), Some(g)) = (&stage.global, &global) {
                r.set_component(Component::Ppm);
                let (gh, gw) = working_size(input, j);
                let y = unit.forward(r, &format!("stage{j}.global"), g)?;
                inputs.push(r.bilinear_resize(&format!("stage{j}.global.up"), &y, gh, gw)?);
                r.set_component(Component::Decoder);
            }
            let y = stage.fuse.forward(r, &format!("stage{j}.fuse"), &inputs)?;
            let (h, w) = working_size(input, j + 1);
            d = r.bilinear_resize(&format!("stage{j}.up"), &y, h, w)?;
            stages.push(d.clone());
        }

        r.set_component(Component::Head);
        let y = self.head.forward(r, "head", &d)?;
        let y = r.bilinear_resize("head.up", &y, s.h, s.w)?;
        let output = r.sigmoid("head.sigmoid", &y)?;
        Ok(Features {
            encoder,
            side,
            global,
            stages,
            output,
        })
    }
}

/// Static graph of the full model at `input` (height, width).
pub fn build_model(profile: &BackboneProfile, cfg: &DecoderConfig, input: (usize, usize)) -> Result<ModelGraph> {
    Dntdf::new(profile, cfg, input)?.trace()
}

/// Architecture plus trained or initialized parameter values.
#[derive(Clone, Debug)]
pub struct Model {
    pub arch: Dntdf,
    pub params: ParamStore<f32>,
}

impl Model {
    pub fn init(arch: Dntdf, seed: u64) -> Result<Self> {
        if !arch.profile.trainable {
            return Err(Error::Unsupported(format!(
                "backbone '{}' is structural only and cannot be executed",
                arch.profile.name
            )));
        }
        let params = ParamStore::init(arch.registry(), seed);
        Ok(Model { arch, params })
    }

    pub fn from_params(arch: Dntdf, params: ParamStore<f32>) -> Result<Self> {
        if params.len() != arch.registry().len() {
            return Err(Error::ModelFormat(format!(
                "architecture has {} parameter tensors, got {}",
                arch.registry().len(),
                params.len()
            )));
        }
        for ((_, spec), value) in arch.registry().iter().zip(params.values()) {
            if spec.shape != value.shape() {
                return Err(Error::ModelFormat(format!(
                    "parameter {} has shape {}, expected {}",
                    spec.name,
                    value.shape(),
                    spec.shape
                )));
            }
        }
        Ok(Model { arch, params })
    }

    /// Saliency map for an image batch of the build-time size.
    pub fn forward(&self, image: &Tensor) -> Result<Tensor> {
        let s = image.shape();
        if (s.h, s.w) != self.arch.input {
            return Err(Error::ShapeMismatch {
                op: "forward",
                lhs: Shape::new(s.n, IMAGE_CHANNELS, self.arch.input.0, self.arch.input.1),
                rhs: s,
            });
        }
        self.predict(image)
    }

    /// Saliency map for any image whose sides are multiples of 32.
    pub fn predict(&self, image: &Tensor) -> Result<Tensor> {
        let mut ex = Executor::new(&self.params);
        let x = ex.input("image", image.clone());
        let out = self.arch.forward(&mut ex, &x)?;
        Ok(ex.graph.value(out).clone())
    }
}
