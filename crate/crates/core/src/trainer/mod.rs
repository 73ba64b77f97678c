//! Training loop: statistic estimation, batching, Adam with step decay,
//! checkpoints and finite-difference gradient checks.

pub mod adam;
pub mod backprop;
pub mod checkpoint;
pub mod gradcheck;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::BalancedNeighborhoods;
use crate::interchange::{FeatureMatrix, Setting, SupervisionConfig};
use crate::loss::{total_loss, BatchTargets, LossBreakdown, LossConfig};
use crate::propagation::{forward_trace, init_hidden, masked_layers, ModelParams};
use crate::scalar::Scalar;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use backprop::{compute_gradients, GradientResult};
pub use checkpoint::Checkpoint;
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs between learning-rate decays.
    pub lr_step: usize,
    pub lr_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.8,
            beta2: 0.9,
            epsilon: 1e-8,
            batch_size: 128,
            epochs: 30,
            lr_step: 10,
            lr_decay: 0.9,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad(format!(
                "betas ({}, {}) must lie in (0, 1)",
                self.beta1, self.beta2
            ));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad(format!("lr_decay {} must lie in (0, 1]", self.lr_decay));
        }
        if self.lr_step == 0 {
            return bad("lr_step must be at least 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            ));
        }
        if self.epsilon.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return bad("epsilon must be positive".into());
        }
        Ok(())
    }

    pub fn adam<T: Scalar>(&self) -> AdamConfig<T> {
        AdamConfig {
            beta1: T::lit(self.beta1),
            beta2: T::lit(self.beta2),
            epsilon: T::lit(self.epsilon),
        }
    }
}

/// Step-decayed learning rate `lr · decay^⌊epoch / step⌋`.
pub fn lr_at(epoch: usize, config: &TrainConfig) -> f64 {
    let decays = (epoch / config.lr_step.max(1)) as i32;
    config.learning_rate * config.lr_decay.powi(decays)
}

/// Mean subset cardinality and per-label inclusion frequency of an annotated set.
pub fn estimate_statistics<T: Scalar>(
    annotations: &BTreeMap<usize, Vec<bool>>,
) -> Result<(T, Vec<T>)> {
    let first = annotations.values().next().ok_or(Error::EmptyAnnotations)?;
    let labels = first.len();
    let mut counts = vec![0usize; labels];
    let mut total = 0usize;
    for y in annotations.values() {
        if y.len() != labels {
            return Err(Error::Dimension(
                "annotation vectors differ in length".into(),
            ));
        }
        for (c, &b) in counts.iter_mut().zip(y) {
            if b {
                *c += 1;
                total += 1;
            }
        }
    }
    let n = T::from_usize_lossy(annotations.len());
    Ok((
        T::from_usize_lossy(total) / n,
        counts
            .into_iter()
            .map(|c| T::from_usize_lossy(c) / n)
            .collect(),
    ))
}

/// Supervision with `κ` and `λ` filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedSupervision<T> {
    pub kappa: T,
    pub lambdas: Vec<T>,
    pub annotations: BTreeMap<usize, Vec<bool>>,
}

/// Fills missing `κ` / `λ` from the annotated set in the scarce-annotation setting.
pub fn resolve_supervision<T: Scalar>(
    sup: &SupervisionConfig<T>,
) -> Result<ResolvedSupervision<T>> {
    let (kappa, lambdas) = match (sup.kappa, &sup.lambdas) {
        (Some(k), Some(l)) => (k, l.clone()),
        (k, l) if sup.setting == Setting::ScarceAnnotation => {
            let (k_hat, l_hat) = estimate_statistics::<T>(&sup.annotations)?;
            if k.is_none() {
                log::info!(
                    "estimated kappa = {k_hat} from {} annotated samples",
                    sup.annotations.len()
                );
            }
            (k.unwrap_or(k_hat), l.clone().unwrap_or(l_hat))
        }
        _ => {
            return Err(Error::Manifest(format!(
                "{} setting requires kappa and lambdas",
                sup.setting
            )))
        }
    };
    Ok(ResolvedSupervision {
        kappa,
        lambdas,
        annotations: sup.annotations.clone(),
    })
}

impl<T: Scalar> ResolvedSupervision<T> {
    /// Targets for the samples `ids`, in order.
    pub fn batch_targets(&self, ids: &[usize]) -> BatchTargets<T> {
        BatchTargets {
            kappa: self.kappa,
            lambdas: self.lambdas.clone(),
            population: ids.len(),
            annotations: ids
                .iter()
                .enumerate()
                .filter_map(|(row, id)| self.annotations.get(id).map(|y| (row, y.clone())))
                .collect(),
        }
    }
}

/// Sample order for `epoch`: Fisher–Yates over `0..n` driven by ChaCha8
/// seeded with `seed` on stream `epoch + 1` (stream 0 is reserved for
/// parameter initialisation). Swap index for position `i` is
/// `next_u64() % (i + 1)`, for `i` from `n − 1` down to 1.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }
    order
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord<T> {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Sum of batch losses over the epoch.
    pub loss: LossBreakdown<T>,
    #[serde(skip)]
    pub elapsed: Duration,
}

/// Wall-clock time is excluded from equality.
impl<T: PartialEq> PartialEq for EpochRecord<T> {
    fn eq(&self, other: &Self) -> bool {
        self.epoch == other.epoch
            && self.learning_rate == other.learning_rate
            && self.loss == other.loss
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory<T> {
    pub epochs: Vec<EpochRecord<T>>,
}

/// Everything the loop needs besides parameters.
pub struct TrainSetup<'a, T> {
    pub features: &'a FeatureMatrix<T>,
    pub supervision: &'a ResolvedSupervision<T>,
    pub neighborhoods: &'a BalancedNeighborhoods,
    pub loss: &'a LossConfig<T>,
    pub config: &'a TrainConfig,
}

/// Trains from `start` (a fresh checkpoint or a resumed one) up to
/// `config.epochs`, returning the final checkpoint and per-epoch history.
pub fn train_from<T: Scalar>(
    setup: &TrainSetup<'_, T>,
    start: Checkpoint<T>,
) -> Result<(Checkpoint<T>, TrainHistory<T>)> {
    let cfg = setup.config;
    cfg.validate()?;
    setup.loss.validate()?;
    let n = setup.features.samples();
    if setup.supervision.lambdas.len() != setup.features.labels() {
        return Err(Error::Dimension(
            "lambdas length differs from label count".into(),
        ));
    }
    let adam_cfg = cfg.adam::<T>();
    let Checkpoint {
        mut params,
        mut optimizer,
        epoch: first_epoch,
    } = start;
    let mut history = TrainHistory::default();
    for epoch in first_epoch..cfg.epochs {
        let started = Instant::now();
        let lr = lr_at(epoch, cfg);
        let order = epoch_order(n, cfg.seed, epoch);
        let mut epoch_loss = LossBreakdown::default();
        for ids in order.chunks(cfg.batch_size) {
            let batch = setup.features.select(ids);
            let targets = setup.supervision.batch_targets(ids);
            let layers = masked_layers(&params, setup.neighborhoods)?;
            let res = compute_gradients(&batch, &targets, &layers, setup.loss)?;
            epoch_loss.accumulate(&res.breakdown);
            adam_step(
                &mut params,
                &res.grads,
                &mut optimizer,
                &adam_cfg,
                T::lit(lr),
            );
        }
        let elapsed = started.elapsed();
        log::debug!(
            "epoch {epoch}: lr {lr:.3e} loss {} ({elapsed:?})",
            epoch_loss.total
        );
        history.epochs.push(EpochRecord {
            epoch,
            learning_rate: lr,
            loss: epoch_loss,
            elapsed,
        });
    }
    Ok((
        Checkpoint {
            params,
            optimizer,
            epoch: cfg.epochs.max(first_epoch),
        },
        history,
    ))
}

/// Trains freshly initialised parameters for `config.epochs` epochs.
pub fn train<T: Scalar>(
    setup: &TrainSetup<'_, T>,
    init: ModelParams<T>,
) -> Result<(ModelParams<T>, TrainHistory<T>)> {
    let start = Checkpoint::fresh(init);
    let (ckpt, history) = train_from(setup, start)?;
    Ok((ckpt.params, history))
}

/// Total loss over consecutive, unshuffled batches of `batch_size`.
pub fn evaluate_loss<T: Scalar>(
    setup: &TrainSetup<'_, T>,
    params: &ModelParams<T>,
) -> Result<LossBreakdown<T>> {
    let layers = masked_layers(params, setup.neighborhoods)?;
    let ids: Vec<usize> = (0..setup.features.samples()).collect();
    let mut acc = LossBreakdown::default();
    for chunk in ids.chunks(setup.config.batch_size.max(1)) {
        let batch = setup.features.select(chunk);
        let trace = forward_trace(&init_hidden(&batch), &layers)?;
        let targets = setup.supervision.batch_targets(chunk);
        let b = total_loss(
            trace.states.p().view(),
            trace.states.p_bar().view(),
            setup.loss,
            &targets,
        );
        b.check_finite()?;
        acc.accumulate(&b);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(rows: &[&[u8]]) -> BTreeMap<usize, Vec<bool>> {
        rows.iter()
            .enumerate()
            .map(|(i, r)| (i, r.iter().map(|&b| b == 1).collect()))
            .collect()
    }

    #[test]
    fn statistics_examples() {
        let (k, l) = estimate_statistics::<f64>(&ann(&[&[1, 1, 0]])).unwrap();
        assert_eq!(k, 2.0);
        assert_eq!(l, vec![1.0, 1.0, 0.0]);
        let (k, l) = estimate_statistics::<f64>(&ann(&[&[1, 0], &[0, 1]])).unwrap();
        assert_eq!(k, 1.0);
        assert_eq!(l, vec![0.5, 0.5]);
        assert!(matches!(
            estimate_statistics::<f64>(&BTreeMap::new()),
            Err(Error::EmptyAnnotations)
        ));
    }

    #[test]
    fn learning_rate_schedule() {
        let c = TrainConfig::default();
        assert_eq!(lr_at(0, &c), 1e-3);
        assert!((lr_at(10, &c) - 9e-4).abs() < 1e-18);
        assert!((lr_at(25, &c) - 8.1e-4).abs() < 1e-18);
        assert_eq!(lr_at(9, &c), 1e-3);
        let mut prev = f64::INFINITY;
        for e in 0..60 {
            let lr = lr_at(e, &c);
            assert!(lr <= prev);
            assert_eq!(lr, lr_at(e - e % c.lr_step, &c));
            prev = lr;
        }
    }

    #[test]
    fn epoch_order_is_a_seeded_permutation() {
        let a = epoch_order(50, 3, 0);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_eq!(a, epoch_order(50, 3, 0));
        assert_ne!(a, epoch_order(50, 3, 1));
        assert_ne!(a, epoch_order(50, 4, 0));
        assert!(epoch_order(0, 1, 0).is_empty());
    }

    #[test]
    fn scarce_setting_fills_statistics() {
        let sup = SupervisionConfig::<f64> {
            setting: Setting::ScarceAnnotation,
            kappa: None,
            lambdas: None,
            annotations: ann(&[&[1, 0], &[1, 1]]),
        };
        let r = resolve_supervision(&sup).unwrap();
        assert_eq!(r.kappa, 1.5);
        assert_eq!(r.lambdas, vec![1.0, 0.5]);
        let t = r.batch_targets(&[5, 1, 0]);
        assert_eq!(t.population, 3);
        assert_eq!(
            t.annotations,
            vec![(1, vec![true, true]), (2, vec![true, false])]
        );
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            beta1: 1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
