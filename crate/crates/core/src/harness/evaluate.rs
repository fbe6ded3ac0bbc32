use std::num::NonZeroUsize;
use std::thread;

use crate::arch::Model;
use crate::error::{Error, Result};
use crate::harness::data::Sample;
use crate::mask::Mask;
use crate::metrics::{FMode, MetricAccumulator, MetricReport};
use crate::tensor::Tensor;

pub const THREADS_ENV: &str = "DNTDF_THREADS";

/// Worker count from `DNTDF_THREADS`, else the available parallelism.
pub fn threads_from_env() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| thread::available_parallelism().map(NonZeroUsize::get).unwrap_or(1))
}

/// Runs `f` over `items` on up to `threads` workers; results keep input order.
pub fn par_map<I: Sync, O: Send>(items: &[I], threads: usize, f: impl Fn(&I) -> O + Sync) -> Vec<O> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| {
                let f = &f;
                s.spawn(move || part.iter().map(f).collect::<Vec<_>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

pub fn predict_all(model: &Model, images: &[Tensor], threads: usize) -> Result<Vec<Tensor>> {
    par_map(images, threads, |img| model.predict(img)).into_iter().collect()
}

/// Metrics for precomputed maps (values in [0, 1]).
pub fn evaluate_maps(preds: &[Vec<f64>], masks: &[&Mask], mode: FMode) -> Result<MetricReport> {
    if preds.len() != masks.len() {
        return Err(Error::DimMismatch {
            op: "evaluate",
            dim: "map count",
            expected: masks.len(),
            actual: preds.len(),
        });
    }
    let mut acc = MetricAccumulator::new(mode);
    for (p, m) in preds.iter().zip(masks) {
        acc.add(p, m)?;
    }
    acc.finish()
}

pub fn evaluate(model: &Model, data: &[Sample], mode: FMode, threads: usize) -> Result<MetricReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let preds = par_map(data, threads, |s| {
        model
            .predict(&s.image)
            .map(|t| t.data().iter().map(|&v| v as f64).collect::<Vec<f64>>())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let masks: Vec<&Mask> = data.iter().map(|s| &s.mask).collect();
    evaluate_maps(&preds, &masks, mode)
}
