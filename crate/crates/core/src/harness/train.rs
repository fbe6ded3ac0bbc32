use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::{Dntdf, Model};
use crate::error::{Error, Result};
use crate::harness::augment::augment;
use crate::harness::config::RunConfig;
use crate::harness::data::Sample;
use crate::loss::{weighted_bce, LossConfig};
use crate::nn::{AdamState, Executor, ParamGrads};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
    pub steps: usize,
    pub seconds: f64,
}

impl EpochLog {
    pub fn to_line(&self) -> String {
        format!(
            "epoch={} lr={:e} loss={:.6} steps={} seconds={:.2}",
            self.epoch, self.lr, self.mean_loss, self.steps, self.seconds
        )
    }
}

pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<EpochLog>,
}

pub fn build_arch(cfg: &RunConfig) -> Result<Dntdf> {
    Dntdf::new(&cfg.profile()?, &cfg.decoder(), (cfg.input_size, cfg.input_size))
}

/// Forward, loss and backward for one sample.
pub fn sample_gradients(model: &Model, sample: &Sample, loss: &LossConfig) -> Result<(f64, ParamGrads)> {
    let mut ex = Executor::new(&model.params);
    let x = ex.input("image", sample.image.clone());
    let pred = model.arch.forward(&mut ex, &x)?;
    let l = weighted_bce(&mut ex.graph, pred, std::slice::from_ref(&sample.mask), loss)?;
    let value = ex.graph.value(l).item().expect("scalar") as f64;
    Ok((value, ex.backward(l)?))
}

/// One optimizer step on the mean gradient of `batch`; returns the per-sample losses.
pub fn train_step(model: &mut Model, adam: &mut AdamState, batch: &[Sample], loss: &LossConfig) -> Result<Vec<f64>> {
    let mut losses = Vec::with_capacity(batch.len());
    let mut total: Option<ParamGrads> = None;
    for sample in batch {
        let (l, g) = sample_gradients(model, sample, loss)?;
        losses.push(l);
        match total.as_mut() {
            Some(t) => t.accumulate(&g),
            None => total = Some(g),
        }
    }
    let mut grads = total.ok_or_else(|| Error::invalid("train_step", "empty batch"))?;
    if batch.len() > 1 {
        grads.scale(1.0 / batch.len() as f32);
    }
    adam.step(&mut model.params, &grads.dense())?;
    Ok(losses)
}

/// Trains `model` in place; `on_epoch` sees each epoch's log as it completes.
pub fn train_model(
    model: &mut Model,
    cfg: &RunConfig,
    data: &[Sample],
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut adam = AdamState::new(cfg.lr);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        adam.lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut steps = 0;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<Sample> = chunk
                .iter()
                .map(|&i| augment(&data[i], &cfg.augment, &mut rng))
                .collect();
            for l in train_step(model, &mut adam, &batch, &cfg.loss)? {
                if !l.is_finite() {
                    return Err(Error::Diverged { epoch, step, loss: l });
                }
                sum += l;
            }
            steps += 1;
        }
        let entry = EpochLog {
            epoch,
            lr: adam.lr,
            mean_loss: sum / data.len() as f64,
            steps,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(log)
}

/// Builds and initializes the model from `cfg`, then trains it.
pub fn train(cfg: &RunConfig, data: &[Sample], on_epoch: impl FnMut(&EpochLog)) -> Result<TrainOutcome> {
    let mut model = Model::init(build_arch(cfg)?, cfg.seed)?;
    let log = train_model(&mut model, cfg, data, on_epoch)?;
    Ok(TrainOutcome { model, log })
}
