//! L2-regularized hinge loss, trained by epoch-wise subgradient descent.
//!
//! Each class (one-vs-all) minimizes
//! `J(w, b) = λ/2 ‖w‖² + (1/n) Σ max(0, 1 − y (w·x + b))`
//! with per-sample steps `η_t = η₀ / (1 + λ η₀ t)` over a seeded shuffle of the
//! rows. The bias is not regularized. An epoch's pass is only kept if it does
//! not increase `J`; otherwise the iterate stays put and the schedule moves on,
//! so the reported objective never goes up.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::model::{LinearModel, ModelKind};
use super::LearnError;
use crate::features::Template3x3;
use crate::{seed, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub epochs: usize,
    pub eta0: f64,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            epochs: 200,
            eta0: 0.1,
            lambda: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Objective after each epoch, averaged over trained classes.
    pub objective: Vec<f64>,
    pub accuracy: f64,
    pub class_counts: Vec<usize>,
    /// Epoch passes discarded because they raised the objective.
    pub rejected_epochs: usize,
}

pub fn hinge_objective<T: Scalar>(w: &[T; 9], b: T, xs: &[[T; 9]], ys: &[T], lambda: T) -> T {
    let norm2 = w.iter().fold(T::zero(), |acc, &v| acc + v * v);
    let loss = xs
        .iter()
        .zip(ys)
        .fold(T::zero(), |acc, (x, &y)| {
            let margin = y * (dot(w, x) + b);
            acc + (T::one() - margin).max(T::zero())
        });
    lambda * norm2 / T::of(2.0) + loss / T::of_usize(xs.len())
}

#[inline]
fn dot<T: Scalar>(w: &[T; 9], x: &[T; 9]) -> T {
    w.iter().zip(x).fold(T::zero(), |acc, (&a, &b)| acc + a * b)
}

struct ClassFit<T> {
    w: [T; 9],
    b: T,
    objective: Vec<T>,
    rejected: usize,
}

fn fit_binary<T: Scalar>(
    xs: &[[T; 9]],
    ys: &[T],
    hp: &Hyperparameters,
    stream: u64,
) -> Result<ClassFit<T>, LearnError> {
    let lambda = T::of(hp.lambda);
    let eta0 = T::of(hp.eta0);
    let mut rng = seed::rng(seed::derive(hp.seed, seed::SHUFFLE_STREAM, stream, 0));
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut w = [T::zero(); 9];
    let mut b = T::zero();
    let mut current = hinge_objective(&w, b, xs, ys, lambda);
    let mut t = 0usize;
    let mut objective = Vec::with_capacity(hp.epochs);
    let mut rejected = 0;
    for epoch in 0..hp.epochs {
        order.shuffle(&mut rng);
        let (mut cw, mut cb) = (w, b);
        for &i in &order {
            let eta = eta0 / (T::one() + lambda * eta0 * T::of_usize(t));
            let margin = ys[i] * (dot(&cw, &xs[i]) + cb);
            let shrink = T::one() - eta * lambda;
            for v in cw.iter_mut() {
                *v = *v * shrink;
            }
            if margin < T::one() {
                for (v, &x) in cw.iter_mut().zip(&xs[i]) {
                    *v = *v + eta * ys[i] * x;
                }
                cb = cb + eta * ys[i];
            }
            t += 1;
        }
        let candidate = hinge_objective(&cw, cb, xs, ys, lambda);
        if !candidate.is_finite() {
            return Err(LearnError::NonFiniteLoss { epoch });
        }
        if candidate <= current {
            w = cw;
            b = cb;
            current = candidate;
        } else {
            rejected += 1;
        }
        objective.push(current);
    }
    Ok(ClassFit {
        w,
        b,
        objective,
        rejected,
    })
}

/// Trains a one-vs-all (multiclass) or single binary linear model.
pub fn train_linear<T: Scalar>(
    dataset: &Dataset<T>,
    hp: &Hyperparameters,
) -> Result<(LinearModel<T>, TrainReport), LearnError> {
    if dataset.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    let mut model = LinearModel::zeros(dataset.kind, *hp);
    model.fingerprint = dataset.fingerprint.clone();
    let counts = dataset.class_counts();
    let mut per_class: Vec<Vec<T>> = Vec::new();
    let mut rejected = 0;
    match dataset.kind {
        ModelKind::Multiclass8 => {
            for k in 0..8 {
                if counts[k] == 0 {
                    model.predictable[k] = false;
                    continue;
                }
                let ys: Vec<T> = dataset
                    .labels
                    .iter()
                    .map(|&y| if y as usize == k { T::one() } else { -T::one() })
                    .collect();
                let fit = fit_binary(&dataset.samples, &ys, hp, k as u64)?;
                model.weights[k] = fit.w;
                model.biases[k] = fit.b;
                per_class.push(fit.objective);
                rejected += fit.rejected;
            }
        }
        ModelKind::Binary => {
            let ys: Vec<T> = dataset
                .labels
                .iter()
                .map(|&y| if y > 0 { T::one() } else { -T::one() })
                .collect();
            let fit = fit_binary(&dataset.samples, &ys, hp, 0)?;
            model.weights[0] = fit.w;
            model.biases[0] = fit.b;
            per_class.push(fit.objective);
            rejected += fit.rejected;
        }
    }
    let trained = T::of_usize(per_class.len());
    let objective = (0..hp.epochs)
        .map(|e| {
            let s = per_class.iter().fold(T::zero(), |acc, o| acc + o[e]);
            (s / trained).as_f64()
        })
        .collect();
    let accuracy = training_accuracy(&model, dataset);
    Ok((
        model,
        TrainReport {
            objective,
            accuracy,
            class_counts: counts,
            rejected_epochs: rejected,
        },
    ))
}

/// Fraction of rows the model labels correctly.
pub fn training_accuracy<T: Scalar>(model: &LinearModel<T>, dataset: &Dataset<T>) -> f64 {
    if dataset.is_empty() {
        return 0.0;
    }
    let correct = dataset
        .samples
        .iter()
        .zip(&dataset.labels)
        .filter(|(x, &y)| {
            let t = Template3x3::new(**x);
            match model.kind {
                ModelKind::Multiclass8 => model.predict_class(&t) == Some(y as usize),
                ModelKind::Binary => (model.score(0, &t) > T::zero()) == (y > 0),
            }
        })
        .count();
    correct as f64 / dataset.len() as f64
}
