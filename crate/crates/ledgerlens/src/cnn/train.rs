//! Mini-batch training with Adam and early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{bce_loss, CnnModel, Tensor};
use crate::error::{Error, Result};

/// In-memory labeled image set.
#[derive(Debug, Clone, Default)]
pub struct ImageDataset {
    pub images: Vec<Tensor>,
    pub labels: Vec<u8>,
    pub ids: Vec<String>,
}

impl ImageDataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn push(&mut self, id: String, image: Tensor, label: u8) {
        self.ids.push(id);
        self.images.push(image);
        self.labels.push(label);
    }

    fn gather(&self, idx: &[usize]) -> (Vec<Tensor>, Vec<u8>) {
        let images = idx.iter().map(|&i| self.images[i].clone()).collect();
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        (images, labels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

/// Per-epoch metrics plus where training stopped and which epoch won.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub stopped_epoch: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(count: usize, lr: f64) -> Self {
        Self { m: vec![0.0; count], v: vec![0.0; count], t: 0, lr }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let bias1 = 1.0 - Self::BETA1.powi(self.t);
        let bias2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
            let m_hat = self.m[i] / bias1;
            let v_hat = self.v[i] / bias2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

fn accuracy(probs: &[f64], labels: &[u8], threshold: f64) -> f64 {
    let correct = probs
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| u8::from(p >= threshold) == y)
        .count();
    correct as f64 / labels.len() as f64
}

/// Train with mini-batch Adam, early-stopping on validation loss, and return
/// the parameters of the best validation epoch. Fully determined by the
/// model's config seed.
pub fn fit(
    mut model: CnnModel,
    dataset: &ImageDataset,
    train_idx: &[usize],
    val_idx: &[usize],
) -> Result<(CnnModel, TrainReport)> {
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::contract("train and validation splits must be non-empty"));
    }
    if train_idx.iter().any(|i| val_idx.contains(i)) {
        return Err(Error::contract("train and validation splits overlap"));
    }
    let out_of_range = |idx: &[usize]| idx.iter().any(|&i| i >= dataset.len());
    if out_of_range(train_idx) || out_of_range(val_idx) {
        return Err(Error::contract("split index out of range"));
    }

    let config = model.config;
    let batch_size = config.batch_size.max(1);
    // Distinct stream from initialization, which already consumed the seed.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let (val_images, val_labels) = dataset.gather(val_idx);

    let mut params = model.params();
    let mut adam = Adam::new(params.len(), config.learning_rate);
    let mut order: Vec<usize> = train_idx.to_vec();
    let mut best_params = params.clone();
    let mut best_val_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut bad_epochs = 0usize;
    let mut report = TrainReport {
        epochs: Vec::new(),
        stopped_epoch: 0,
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
    };

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut running_loss = 0.0;
        let mut running_correct = 0usize;
        for batch in order.chunks(batch_size) {
            let (images, labels) = dataset.gather(batch);
            let (grads, loss, probs) = model.backward_batch(&images, &labels)?;
            adam.step(&mut params, &grads.flat());
            model.set_params(&params)?;
            running_loss += loss * labels.len() as f64;
            running_correct += probs
                .iter()
                .zip(&labels)
                .filter(|(&p, &y)| u8::from(p >= 0.5) == y)
                .count();
        }
        let train_loss = running_loss / order.len() as f64;
        let train_accuracy = running_correct as f64 / order.len() as f64;

        let val_probs = model.forward_batch(&val_images)?;
        let val_loss = bce_loss(&val_probs, &val_labels);
        let val_accuracy = accuracy(&val_probs, &val_labels, 0.5);
        report.epochs.push(EpochRecord {
            epoch,
            train_loss,
            train_accuracy,
            val_loss,
            val_accuracy,
        });
        report.stopped_epoch = epoch;

        if val_loss < best_val_loss {
            best_val_loss = val_loss;
            best_epoch = epoch;
            best_params.copy_from_slice(&params);
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs > config.patience {
                break;
            }
        }
    }

    model.set_params(&best_params)?;
    report.best_epoch = best_epoch;
    report.best_val_loss = best_val_loss;
    Ok((model, report))
}

/// Hard labels at a probability threshold; ties classify as positive.
pub fn predict(model: &CnnModel, images: &[Tensor], threshold: f64) -> Result<Vec<u8>> {
    Ok(model
        .forward_batch(images)?
        .into_iter()
        .map(|p| u8::from(p >= threshold))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::{LayerSpec, TrainConfig};
    use crate::image::IMAGE_SIDE;
    use rand::Rng;

    /// Two classes split by mean brightness of the top half of the image:
    /// linearly separable by construction.
    fn separable_dataset(n: usize, seed: u64) -> ImageDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ds = ImageDataset::default();
        for i in 0..n {
            let label = (i % 2) as u8;
            let base = if label == 1 { 0.75 } else { 0.25 };
            let mut data = vec![0.0; 3 * IMAGE_SIDE * IMAGE_SIDE];
            for (j, v) in data.iter_mut().enumerate() {
                let row = (j / IMAGE_SIDE) % IMAGE_SIDE;
                let level: f64 = if row < IMAGE_SIDE / 2 { base } else { 0.5 };
                *v = (level + rng.gen_range(-0.15..0.15)).clamp(0.0, 1.0);
            }
            ds.push(
                format!("S{i:04}"),
                Tensor::from_vec(&[3, IMAGE_SIDE, IMAGE_SIDE], data).unwrap(),
                label,
            );
        }
        ds
    }

    fn small_model(config: TrainConfig) -> CnnModel {
        CnnModel::build(
            config,
            [3, IMAGE_SIDE, IMAGE_SIDE],
            &[
                LayerSpec::Conv { out_channels: 4, kernel: 3 },
                LayerSpec::Relu,
                LayerSpec::MaxPool2,
                LayerSpec::Flatten,
                LayerSpec::Dense { out_dim: 8 },
                LayerSpec::Relu,
                LayerSpec::Dense { out_dim: 1 },
            ],
        )
        .unwrap()
    }

    #[test]
    fn same_seed_gives_identical_reports() {
        let ds = separable_dataset(60, 2);
        let train: Vec<usize> = (0..48).collect();
        let val: Vec<usize> = (48..60).collect();
        let config = TrainConfig { epochs: 4, ..Default::default() };
        let (m1, r1) = fit(small_model(config), &ds, &train, &val).unwrap();
        let (m2, r2) = fit(small_model(config), &ds, &train, &val).unwrap();
        assert_eq!(
            serde_json::to_string(&r1).unwrap(),
            serde_json::to_string(&r2).unwrap()
        );
        assert_eq!(m1.params(), m2.params());
    }

    #[test]
    fn learns_separable_fixture() {
        let ds = separable_dataset(200, 5);
        let train: Vec<usize> = (0..180).collect();
        let val: Vec<usize> = (180..200).collect();
        let model = CnnModel::standard(TrainConfig::default());
        let (model, report) = fit(model, &ds, &train, &val).unwrap();
        assert!(report.stopped_epoch <= 30);
        let (train_images, train_labels) = ds.gather(&train);
        let probs = model.forward_batch(&train_images).unwrap();
        let acc = accuracy(&probs, &train_labels, 0.5);
        assert!(acc >= 0.95, "training accuracy {acc}");
        let preds = predict(&model, &train_images, 0.5).unwrap();
        let agree = preds
            .iter()
            .zip(&train_labels)
            .filter(|(p, y)| p == y)
            .count() as f64
            / preds.len() as f64;
        assert!(agree >= 0.95, "prediction agreement {agree}");
    }

    #[test]
    fn training_loss_is_mostly_monotone_on_separable_fixture() {
        let ds = separable_dataset(120, 8);
        let train: Vec<usize> = (0..96).collect();
        let val: Vec<usize> = (96..120).collect();
        let config = TrainConfig { epochs: 10, patience: 10, ..Default::default() };
        let (_, report) = fit(small_model(config), &ds, &train, &val).unwrap();
        let losses: Vec<f64> = report.epochs.iter().map(|e| e.train_loss).collect();
        let rises = losses.windows(2).filter(|w| w[1] > w[0]).count();
        assert!(rises <= 2, "training loss rose {rises} times: {losses:?}");
    }

    #[test]
    fn patience_zero_stops_at_first_plateau() {
        let ds = separable_dataset(40, 3);
        let train: Vec<usize> = (0..32).collect();
        let val: Vec<usize> = (32..40).collect();
        // A huge learning rate makes validation loss bounce immediately.
        let config = TrainConfig {
            epochs: 30,
            patience: 0,
            learning_rate: 1.0,
            ..Default::default()
        };
        let (_, report) = fit(small_model(config), &ds, &train, &val).unwrap();
        let first_bad = report
            .epochs
            .iter()
            .zip(report.epochs.iter().skip(1))
            .position(|(a, b)| b.val_loss >= a.val_loss.min(report.best_val_loss));
        // Training halts right after the first epoch that fails to improve.
        if let Some(pos) = first_bad {
            assert_eq!(report.stopped_epoch, pos + 2);
        }
        assert!(report.stopped_epoch < 30, "should stop early");
    }

    #[test]
    fn overlapping_or_empty_splits_are_rejected() {
        let ds = separable_dataset(10, 1);
        let model = small_model(TrainConfig::default());
        assert!(fit(model.clone(), &ds, &[], &[1]).is_err());
        assert!(fit(model.clone(), &ds, &[0, 1], &[]).is_err());
        assert!(fit(model.clone(), &ds, &[0, 1], &[1, 2]).is_err());
        assert!(fit(model, &ds, &[0, 99], &[1]).is_err());
    }

    #[test]
    fn zero_parameter_model_predicts_positive_at_half() {
        let mut model = small_model(TrainConfig::default());
        model.set_params(&vec![0.0; model.param_count()]).unwrap();
        let images: Vec<Tensor> = separable_dataset(4, 6).images;
        let preds = predict(&model, &images, 0.5).unwrap();
        assert_eq!(preds, vec![1, 1, 1, 1]);
    }
}
