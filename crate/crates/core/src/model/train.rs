use std::ops::ControlFlow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::examples::TrainingExample;
use super::network::ModelParams;
use crate::error::{Error, Result};
use crate::hash::mix_seed;
use crate::scalar::Scalar;

/// Mean token cross-entropy of a batch and its gradient.
#[derive(Debug, Clone)]
pub struct BatchLoss<T> {
    pub loss: T,
    pub tokens: usize,
    pub grads: ModelParams<T>,
}

pub fn loss_and_grad<T: Scalar>(params: &ModelParams<T>, batch: &[&TrainingExample]) -> Result<BatchLoss<T>> {
    let mut grads = ModelParams::zeros(params.dims);
    let (loss, tokens) = accumulate(params, batch, Some(&mut grads))?;
    Ok(BatchLoss { loss, tokens, grads })
}

/// Mean token cross-entropy without gradients.
pub fn batch_loss<T: Scalar>(params: &ModelParams<T>, batch: &[&TrainingExample]) -> Result<T> {
    accumulate(params, batch, None).map(|(l, _)| l)
}

fn accumulate<T: Scalar>(
    params: &ModelParams<T>,
    batch: &[&TrainingExample],
    mut grads: Option<&mut ModelParams<T>>,
) -> Result<(T, usize)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("batch is empty".into()));
    }
    let tokens: usize = batch
        .iter()
        .map(|e| e.target_ids.iter().filter(|&&t| t != super::codec::OUT_PAD).count())
        .sum();
    if tokens == 0 {
        return Err(Error::InvalidArgument("batch has no target tokens".into()));
    }
    let scale = T::one() / T::from_usize_lossy(tokens);
    let mut total = T::zero();
    for ex in batch {
        let (l, _) = params.example_loss_grad(&ex.input_ids, &ex.target_ids, scale, grads.as_deref_mut())?;
        total += l;
    }
    let loss = total * scale;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    Ok((loss, tokens))
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    step: i32,
    m: ModelParams<T>,
    v: ModelParams<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &ModelParams<T>, config: &TrainConfig) -> Self {
        Self {
            lr: T::from_f64_lossy(config.learning_rate),
            beta1: T::from_f64_lossy(config.beta1),
            beta2: T::from_f64_lossy(config.beta2),
            eps: T::from_f64_lossy(config.eps),
            step: 0,
            m: ModelParams::zeros(params.dims),
            v: ModelParams::zeros(params.dims),
        }
    }

    pub fn step(&mut self, params: &mut ModelParams<T>, grads: &ModelParams<T>) {
        self.step += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.step);
        let c2 = one - self.beta2.powi(self.step);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut().into_iter().zip(self.v.tensors_mut()));
        for (((_, p), (_, g)), ((_, m), (_, v))) in tensors {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = b1 * m.data[i] + (one - b1) * gi;
                v.data[i] = b2 * v.data[i] + (one - b2) * gi * gi;
                let mhat = m.data[i] / c1;
                let vhat = v.data[i] / c2;
                p.data[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub params: ModelParams<T>,
    /// Token-weighted mean training loss of each completed epoch.
    pub epoch_losses: Vec<f64>,
}

pub fn train<T: Scalar>(params: ModelParams<T>, examples: &[TrainingExample], config: &TrainConfig) -> Result<TrainOutcome<T>> {
    train_with_monitor(params, examples, config, |_, _, _| ControlFlow::Continue(()))
}

/// Like [`train`], calling `monitor(epoch, loss, params)` after each epoch;
/// returning `Break` ends training early.
pub fn train_with_monitor<T, F>(
    mut params: ModelParams<T>,
    examples: &[TrainingExample],
    config: &TrainConfig,
    mut monitor: F,
) -> Result<TrainOutcome<T>>
where
    T: Scalar,
    F: FnMut(usize, f64, &ModelParams<T>) -> ControlFlow<()>,
{
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::InvalidArgument("no training examples".into()));
    }
    let mut adam = Adam::new(&params, config);
    let mut grads = ModelParams::zeros(params.dims);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, &[0x7a, epoch as u64]));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut token_sum = 0usize;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&TrainingExample> = chunk.iter().map(|&i| &examples[i]).collect();
            grads.fill_zero();
            let (loss, tokens) = match accumulate(&params, &batch, Some(&mut grads)) {
                Ok(r) => r,
                Err(Error::NonFiniteLoss) => return Err(Error::Diverged { epoch, batch: b }),
                Err(e) => return Err(e),
            };
            loss_sum += loss.to_f64_lossless() * tokens as f64;
            token_sum += tokens;
            adam.step(&mut params, &grads);
            if !params.is_finite() {
                return Err(Error::Diverged { epoch, batch: b });
            }
        }
        let mean = loss_sum / token_sum as f64;
        epoch_losses.push(mean);
        if monitor(epoch, mean, &params).is_break() {
            break;
        }
    }
    Ok(TrainOutcome { params, epoch_losses })
}
