//! Sequential SGD training of the coarse and fine networks.

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::Network;
use super::pipeline::{coarse_forward, make_labels, stream_rng, DiscModel, STREAM_ORDER};
use crate::data::Sample;
use crate::error::{DiscError, Result};
use crate::grid::Grid;
use crate::losses::{LabelMap, LossConfig};
use crate::nn::{sgd_momentum_step, OptimizerState};
use crate::parallel::Executor;
use crate::slci::SlciContext;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Samples whose gradients are summed before each step.
    pub batch_size: usize,
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub stage: String,
    /// Mean per-sample loss over the epoch.
    pub mean_loss: f64,
    pub wallclock_s: f64,
}

pub const STAGE_COARSE_PLAIN: &str = "coarse_plain";
pub const STAGE_COARSE_SLCI: &str = "coarse_slci";
pub const STAGE_FINE: &str = "fine";
pub const STAGE_TUNE_COARSE: &str = "finetune_coarse";
pub const STAGE_TUNE_FINE: &str = "finetune_fine";

/// Shared training plumbing: executor, seed and log sink.
pub struct TrainContext<'a> {
    pub executor: &'a Executor,
    pub seed: u64,
    pub on_epoch: &'a mut dyn FnMut(&EpochLog),
}

struct CoarseItem {
    input: Tensor,
    slci: Option<SlciContext>,
    labels: LabelMap,
}

struct FineItem {
    input: Tensor,
    labels: LabelMap,
}

/// Stage-1/stage-2 split of a total epoch budget (2:1).
pub fn split_coarse_epochs(total: usize) -> (usize, usize) {
    let stage1 = (2 * total).div_ceil(3);
    (stage1, total - stage1)
}

fn check_sgd(sgd: &SgdConfig) -> Result<()> {
    if sgd.batch_size == 0 {
        return Err(DiscError::InvalidArgument("batch size must be positive".into()));
    }
    Ok(())
}

fn to_diverged(e: DiscError, epoch: usize, stage: &str) -> DiscError {
    match e {
        DiscError::NonFinite(_) => DiscError::Diverged {
            epoch,
            stage: stage.to_string(),
        },
        other => other,
    }
}

/// Runs `epochs` epochs of minibatch SGD on `net`.
#[allow(clippy::too_many_arguments)]
fn run_epochs<T: Sync>(
    net: &mut Network,
    items: &[T],
    epochs: usize,
    first_epoch: usize,
    stage: &str,
    sgd: &SgdConfig,
    state: &mut OptimizerState,
    ctx: &mut TrainContext<'_>,
    grad: impl Fn(&Network, &T) -> Result<(f64, Vec<Tensor>)> + Sync + Send,
) -> Result<()> {
    let mut rng = stream_rng(ctx.seed, STREAM_ORDER);
    let mut order: Vec<usize> = (0..items.len()).collect();
    let start = Instant::now();
    for e in 0..epochs {
        let epoch = first_epoch + e;
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(sgd.batch_size) {
            let current: &Network = net;
            let batch_items: Vec<&T> = batch.iter().map(|&i| &items[i]).collect();
            let results = ctx.executor.map(&batch_items, |item| grad(current, item));
            let mut sum: Option<Vec<Tensor>> = None;
            for r in results {
                let (loss, g) = r.map_err(|err| to_diverged(err, epoch, stage))?;
                if !loss.is_finite() {
                    return Err(DiscError::Diverged {
                        epoch,
                        stage: stage.to_string(),
                    });
                }
                total += loss;
                match &mut sum {
                    None => sum = Some(g),
                    Some(acc) => {
                        for (a, b) in acc.iter_mut().zip(&g) {
                            a.add_assign(b)?;
                        }
                    }
                }
            }
            let grads = sum.expect("non-empty batch");
            net.with_tensors(|params| sgd_momentum_step(params, &grads, state))
                .map_err(|err| to_diverged(err, epoch, stage))?;
        }
        let entry = EpochLog {
            epoch,
            stage: stage.to_string(),
            mean_loss: total / items.len() as f64,
            wallclock_s: start.elapsed().as_secs_f64(),
        };
        log::info!("{stage} epoch {epoch}: loss {:.6}", entry.mean_loss);
        (ctx.on_epoch)(&entry);
    }
    Ok(())
}

fn coarse_grad(net: &Network, item: &CoarseItem, use_slci: bool, loss: &LossConfig) -> Result<(f64, Vec<Tensor>)> {
    let (out, trace) = net.forward_trace(&item.input)?;
    let side = item.labels.grid().height();
    let raw = Grid::new(side, side, out.into_data())?;
    let slci = if use_slci { item.slci.as_ref() } else { None };
    let scores = match slci {
        Some(c) => c.forward(&raw)?,
        None => raw,
    };
    let (l, g) = loss.evaluate(scores.data(), &item.labels)?;
    let g = Grid::new(side, side, g)?;
    let g = match slci {
        Some(c) => c.backward(&g)?,
        None => g,
    };
    let grads = net.backward(trace, &Tensor::from_vec(g.into_data()))?;
    Ok((l, grads))
}

fn fine_grad(net: &Network, item: &FineItem, loss: &LossConfig) -> Result<(f64, Vec<Tensor>)> {
    let (out, trace) = net.forward_trace(&item.input)?;
    let (l, g) = loss.evaluate(out.data(), &item.labels)?;
    let grads = net.backward(trace, &Tensor::new(out.shape().to_vec(), g)?)?;
    Ok((l, grads))
}

fn prepare_coarse(model: &DiscModel, samples: &[Sample], exec: &Executor) -> Result<Vec<CoarseItem>> {
    let side = model.profile.coarse_side();
    exec.map(samples, |s| {
        let p = model.prepare(&s.image)?;
        Ok(CoarseItem {
            input: p.coarse_input,
            slci: p.slci,
            labels: make_labels(&s.mask, side),
        })
    })
    .into_iter()
    .collect()
}

/// Fine inputs use the current coarse network for the guidance channel.
fn prepare_fine(model: &DiscModel, samples: &[Sample], exec: &Executor) -> Result<Vec<FineItem>> {
    let side = model.profile.fine_side();
    exec.map(samples, |s| {
        let p = model.prepare(&s.image)?;
        let refined = coarse_forward(&model.coarse, &p.coarse_input, p.slci.as_ref())?.refined;
        Ok(FineItem {
            input: model.fine_input(&p, &refined)?,
            labels: make_labels(&s.mask, side),
        })
    })
    .into_iter()
    .collect()
}

fn non_empty(samples: &[Sample]) -> Result<()> {
    if samples.is_empty() {
        return Err(DiscError::InvalidArgument("training set is empty".into()));
    }
    Ok(())
}

/// Coarse training: `stage1` epochs without SLCI, then `stage2` with it (when enabled).
pub fn train_coarse(
    model: &mut DiscModel,
    samples: &[Sample],
    stage1: usize,
    stage2: usize,
    sgd: &SgdConfig,
    ctx: &mut TrainContext<'_>,
) -> Result<()> {
    non_empty(samples)?;
    check_sgd(sgd)?;
    let items = prepare_coarse(model, samples, ctx.executor)?;
    let loss = model.loss;
    let mut state = OptimizerState::new(&model.coarse.tensors(), sgd.learning_rate, sgd.momentum, sgd.weight_decay)?;
    run_epochs(&mut model.coarse, &items, stage1, 0, STAGE_COARSE_PLAIN, sgd, &mut state, ctx, |n, it| {
        coarse_grad(n, it, false, &loss)
    })?;
    let use_slci = model.flags.use_slci;
    let stage = if use_slci { STAGE_COARSE_SLCI } else { STAGE_COARSE_PLAIN };
    run_epochs(&mut model.coarse, &items, stage2, stage1, stage, sgd, &mut state, ctx, |n, it| {
        coarse_grad(n, it, use_slci, &loss)
    })
}

/// Dense fine-network training against the current coarse network.
pub fn train_fine(
    model: &mut DiscModel,
    samples: &[Sample],
    epochs: usize,
    sgd: &SgdConfig,
    ctx: &mut TrainContext<'_>,
) -> Result<()> {
    non_empty(samples)?;
    check_sgd(sgd)?;
    let items = prepare_fine(model, samples, ctx.executor)?;
    let loss = model.loss;
    let mut state = OptimizerState::new(&model.fine.tensors(), sgd.learning_rate, sgd.momentum, sgd.weight_decay)?;
    run_epochs(&mut model.fine, &items, epochs, 0, STAGE_FINE, sgd, &mut state, ctx, |n, it| {
        fine_grad(n, it, &loss)
    })
}

/// Epoch counts and optimizer settings for adapting a trained model to a new task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FineTuneConfig {
    pub coarse_epochs: usize,
    pub fine_epochs: usize,
    pub coarse: SgdConfig,
    pub fine: SgdConfig,
}

/// Continues training both networks on `samples`; coarse first, then fine with refreshed guidance.
pub fn fine_tune(
    model: &mut DiscModel,
    samples: &[Sample],
    config: &FineTuneConfig,
    ctx: &mut TrainContext<'_>,
) -> Result<()> {
    non_empty(samples)?;
    check_sgd(&config.coarse)?;
    check_sgd(&config.fine)?;
    let loss = model.loss;
    let use_slci = model.flags.use_slci;
    let items = prepare_coarse(model, samples, ctx.executor)?;
    let c = &config.coarse;
    let mut state = OptimizerState::new(&model.coarse.tensors(), c.learning_rate, c.momentum, c.weight_decay)?;
    run_epochs(&mut model.coarse, &items, config.coarse_epochs, 0, STAGE_TUNE_COARSE, c, &mut state, ctx, |n, it| {
        coarse_grad(n, it, use_slci, &loss)
    })?;
    drop(items);
    let items = prepare_fine(model, samples, ctx.executor)?;
    let f = &config.fine;
    let mut state = OptimizerState::new(&model.fine.tensors(), f.learning_rate, f.momentum, f.weight_decay)?;
    run_epochs(&mut model.fine, &items, config.fine_epochs, 0, STAGE_TUNE_FINE, f, &mut state, ctx, |n, it| {
        fine_grad(n, it, &loss)
    })
}
