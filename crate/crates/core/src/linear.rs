//! Multinomial logistic regression (L-BFGS) and one-vs-rest linear SVM
//! (averaged stochastic subgradient) over sparse feature vectors.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::SparseVector;
use crate::optim::{self, LbfgsParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearKind {
    Logreg,
    Svm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Inverse regularization strength.
    pub c: f64,
    /// L-BFGS iterations for logistic regression, epochs for the SVM.
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn logreg(c: f64) -> Self {
        TrainConfig {
            c,
            max_iter: 1000,
            tol: 1e-4,
            seed: 0,
        }
    }

    pub fn svm(c: f64) -> Self {
        TrainConfig {
            c,
            max_iter: 100,
            tol: 1e-4,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::invalid(format!("C must be positive, got {}", self.c)));
        }
        if self.max_iter == 0 || self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::invalid("max_iter and tol must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub kind: LinearKind,
    pub n_classes: usize,
    pub n_features: usize,
    /// Row-major `n_classes x n_features`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub c: f64,
}

impl LinearModel {
    pub fn weight_row(&self, class: usize) -> &[f64] {
        &self.weights[class * self.n_features..(class + 1) * self.n_features]
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn decision(&self, x: &SparseVector) -> Result<Vec<f64>> {
        if x.min_dim() > self.n_features {
            return Err(Error::Dimension {
                expected: self.n_features,
                found: x.min_dim(),
            });
        }
        Ok((0..self.n_classes)
            .map(|c| x.dot(self.weight_row(c)) + self.bias[c])
            .collect())
    }

    /// Label index and per-class scores: softmax probabilities for logistic
    /// regression, raw margins for the SVM.
    pub fn predict(&self, x: &SparseVector) -> Result<(usize, Vec<f64>)> {
        let mut scores = self.decision(x)?;
        if self.kind == LinearKind::Logreg {
            softmax_in_place(&mut scores);
        }
        Ok((argmax(&scores), scores))
    }
}

/// First index of the maximum.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        sum += *x;
    }
    v.iter_mut().for_each(|x| *x /= sum);
}

fn check_data(x: &[SparseVector], y: &[usize], n_classes: usize, n_features: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!("{} inputs but {} labels", x.len(), y.len())));
    }
    if n_classes < 2 {
        return Err(Error::invalid("need at least two classes"));
    }
    if x.len() < n_classes {
        return Err(Error::invalid(format!(
            "{} examples cannot cover {n_classes} classes",
            x.len()
        )));
    }
    let mut seen = vec![0usize; n_classes];
    for &label in y {
        if label >= n_classes {
            return Err(Error::invalid(format!("label index {label} out of range")));
        }
        seen[label] += 1;
    }
    if let Some(c) = seen.iter().position(|&n| n == 0) {
        return Err(Error::EmptyClass(format!("class {c}")));
    }
    if let Some(bad) = x.iter().find(|v| v.min_dim() > n_features) {
        return Err(Error::Dimension {
            expected: n_features,
            found: bad.min_dim(),
        });
    }
    Ok(())
}

/// Regularized multinomial cross-entropy
/// `sum_i CE_i + ||W||^2 / (2C)` and its gradient. `params` holds the
/// row-major weights followed by the biases (biases are unpenalized).
pub fn logreg_objective(
    x: &[SparseVector],
    y: &[usize],
    n_classes: usize,
    n_features: usize,
    c: f64,
    params: &[f64],
) -> (f64, Vec<f64>) {
    let (w, b) = params.split_at(n_classes * n_features);
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    let mut scores = vec![0.0; n_classes];
    for (xi, &yi) in x.iter().zip(y) {
        for (k, s) in scores.iter_mut().enumerate() {
            *s = xi.dot(&w[k * n_features..(k + 1) * n_features]) + b[k];
        }
        let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
        loss += lse - scores[yi];
        for k in 0..n_classes {
            let resid = (scores[k] - lse).exp() - f64::from(u8::from(k == yi));
            let row = &mut grad[k * n_features..(k + 1) * n_features];
            for (j, v) in xi.iter() {
                row[j] += resid * v;
            }
            grad[n_classes * n_features + k] += resid;
        }
    }
    let inv_c = 1.0 / c;
    let mut penalty = 0.0;
    for (g, &wi) in grad.iter_mut().zip(w) {
        penalty += wi * wi;
        *g += wi * inv_c;
    }
    (loss + 0.5 * inv_c * penalty, grad)
}

pub fn train_logreg(
    x: &[SparseVector],
    y: &[usize],
    n_classes: usize,
    n_features: usize,
    config: &TrainConfig,
) -> Result<LinearModel> {
    config.validate()?;
    check_data(x, y, n_classes, n_features)?;
    let n_params = n_classes * (n_features + 1);
    let outcome = optim::minimize(
        |p| logreg_objective(x, y, n_classes, n_features, config.c, p),
        vec![0.0; n_params],
        LbfgsParams {
            history: 10,
            tol: config.tol,
            max_iter: config.max_iter,
        },
    )?;
    if !outcome.converged {
        log::warn!(
            "logistic regression stopped after {} iterations (gradient {:.3e})",
            outcome.iterations,
            outcome.grad_inf_norm
        );
    }
    let mut weights = outcome.x;
    let bias = weights.split_off(n_classes * n_features);
    Ok(LinearModel {
        kind: LinearKind::Logreg,
        n_classes,
        n_features,
        weights,
        bias,
        c: config.c,
    })
}

/// `lambda/2 ||w||^2 + mean hinge(y (w.x + b))` for labels in {-1, +1}.
pub fn svm_objective(x: &[SparseVector], signs: &[f64], w: &[f64], b: f64, lambda: f64) -> f64 {
    let reg = 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>();
    let hinge: f64 = x
        .iter()
        .zip(signs)
        .map(|(xi, &s)| (1.0 - s * (xi.dot(w) + b)).max(0.0))
        .sum();
    reg + hinge / x.len() as f64
}

#[derive(Debug, Clone)]
pub struct SvmTrace {
    /// Sum over the one-vs-rest problems of the objective at the averaged
    /// iterate, recorded after every averaged epoch.
    pub objective: Vec<f64>,
}

pub fn train_svm(
    x: &[SparseVector],
    y: &[usize],
    n_classes: usize,
    n_features: usize,
    config: &TrainConfig,
) -> Result<LinearModel> {
    train_svm_traced(x, y, n_classes, n_features, config).map(|(m, _)| m)
}

/// One-vs-rest Pegasos with lambda = 1/(C n), an unregularized bias, and
/// iterate averaging that starts after the first epoch. Every class sees the
/// same seeded shuffling schedule.
pub fn train_svm_traced(
    x: &[SparseVector],
    y: &[usize],
    n_classes: usize,
    n_features: usize,
    config: &TrainConfig,
) -> Result<(LinearModel, SvmTrace)> {
    config.validate()?;
    check_data(x, y, n_classes, n_features)?;
    let n = x.len();
    let lambda = 1.0 / (config.c * n as f64);
    let epochs = config.max_iter;

    let mut schedule_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let schedule: Vec<Vec<usize>> = (0..epochs)
        .map(|_| {
            order.shuffle(&mut schedule_rng);
            order.clone()
        })
        .collect();

    let mut weights = Vec::with_capacity(n_classes * n_features);
    let mut bias = Vec::with_capacity(n_classes);
    let mut objective = vec![0.0; epochs.saturating_sub(1).max(1)];
    for class in 0..n_classes {
        let signs: Vec<f64> = y.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
        let (w, b, trace) = pegasos_binary(x, &signs, n_features, lambda, &schedule);
        for (acc, v) in objective.iter_mut().zip(trace) {
            *acc += v;
        }
        weights.extend(w);
        bias.push(b);
    }
    if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("svm weights".into()));
    }
    Ok((
        LinearModel {
            kind: LinearKind::Svm,
            n_classes,
            n_features,
            weights,
            bias,
            c: config.c,
        },
        SvmTrace { objective },
    ))
}

fn pegasos_binary(
    x: &[SparseVector],
    signs: &[f64],
    n_features: usize,
    lambda: f64,
    schedule: &[Vec<usize>],
) -> (Vec<f64>, f64, Vec<f64>) {
    // w = scale * v, kept implicitly so each step touches only x's support.
    let mut v = vec![0.0; n_features];
    let mut scale = 1.0;
    let mut v_sq = 0.0;
    let mut b = 0.0;
    let radius = 1.0 / lambda.sqrt();
    // Offset so the first step is lambda^(-1/4) rather than 1/lambda.
    let t0 = lambda.powf(-0.75);

    // Running average of post-step iterates: sum_t w_t = A v - z, where A
    // accumulates the scales and z the increments weighted by A before them.
    let mut acc_scale = 0.0;
    let mut z = vec![0.0; n_features];
    let mut bias_sum = 0.0;
    let mut weight_sum = 0.0;
    let averaging_from = usize::from(schedule.len() > 1);

    let mut trace = Vec::new();
    let mut t = 0usize;
    for (epoch, order) in schedule.iter().enumerate() {
        let averaging = epoch >= averaging_from;
        for &i in order {
            t += 1;
            let eta = 1.0 / (lambda * (t as f64 + t0));
            let xi = &x[i];
            let yi = signs[i];
            let margin = yi * (scale * xi.dot(&v) + b);

            let decay = 1.0 - eta * lambda;
            if decay <= 0.0 {
                v.iter_mut().for_each(|e| *e = 0.0);
                v_sq = 0.0;
                scale = 1.0;
            } else {
                scale *= decay;
            }
            if margin < 1.0 {
                let step = eta * yi / scale;
                for (j, xj) in xi.iter() {
                    let d = step * xj;
                    v_sq += 2.0 * v[j] * d + d * d;
                    v[j] += d;
                    if averaging {
                        z[j] += acc_scale * d;
                    }
                }
                b += eta * yi;
            }
            let norm = scale * v_sq.max(0.0).sqrt();
            if norm > radius {
                scale *= radius / norm;
            }
            if averaging {
                acc_scale += scale;
                bias_sum += b;
                weight_sum += 1.0;
            }
        }
        if averaging {
            let (w_avg, b_avg) = averaged(&v, &z, acc_scale, bias_sum, weight_sum);
            trace.push(svm_objective(x, signs, &w_avg, b_avg, lambda));
        }
    }
    let (w_avg, b_avg) = averaged(&v, &z, acc_scale, bias_sum, weight_sum);
    (w_avg, b_avg, trace)
}

fn averaged(v: &[f64], z: &[f64], acc_scale: f64, bias_sum: f64, weight_sum: f64) -> (Vec<f64>, f64) {
    let inv = 1.0 / weight_sum.max(1.0);
    let w = v.iter().zip(z).map(|(vj, zj)| (acc_scale * vj - zj) * inv).collect();
    (w, bias_sum * inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Vec<SparseVector>, Vec<usize>) {
        let x = vec![
            SparseVector::from_dense(&[1.0, 0.2]),
            SparseVector::from_dense(&[0.8, 0.0]),
            SparseVector::from_dense(&[0.0, 1.0]),
            SparseVector::from_dense(&[0.1, 0.9]),
        ];
        (x, vec![0, 0, 1, 1])
    }

    #[test]
    fn logreg_separable_toy() {
        let (x, y) = toy();
        let m = train_logreg(&x, &y, 2, 2, &TrainConfig::logreg(10.0)).unwrap();
        for (xi, &yi) in x.iter().zip(&y) {
            assert_eq!(m.predict(xi).unwrap().0, yi);
        }
    }

    #[test]
    fn logreg_gradient_matches_finite_differences() {
        let (x, y) = toy();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        use rand::Rng;
        let params: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, grad) = logreg_objective(&x, &y, 2, 2, 0.7, &params);
        let eps = 1e-6;
        for i in 0..params.len() {
            let mut p = params.clone();
            p[i] += eps;
            let (fp, _) = logreg_objective(&x, &y, 2, 2, 0.7, &p);
            p[i] -= 2.0 * eps;
            let (fm, _) = logreg_objective(&x, &y, 2, 2, 0.7, &p);
            let fd = (fp - fm) / (2.0 * eps);
            let rel = (fd - grad[i]).abs() / grad[i].abs().max(fd.abs()).max(1e-8);
            assert!(rel < 1e-5, "param {i}: analytic {} fd {fd}", grad[i]);
        }
    }

    #[test]
    fn logreg_strong_regularization_shrinks_weights() {
        let (x, y) = toy();
        let m = train_logreg(&x, &y, 2, 2, &TrainConfig::logreg(1e-6)).unwrap();
        assert!(m.weight_norm() < 1e-2, "{}", m.weight_norm());
    }

    #[test]
    fn logreg_errors() {
        let (x, _) = toy();
        let cfg = TrainConfig::logreg(1.0);
        assert!(matches!(
            train_logreg(&x, &[0, 0, 0, 2], 3, 2, &cfg),
            Err(Error::EmptyClass(_))
        ));
        assert!(train_logreg(&x, &[0, 1, 0], 2, 2, &cfg).is_err());
        assert!(train_logreg(&x, &[0, 1, 0, 1], 2, 1, &cfg).is_err());
    }

    #[test]
    fn uniform_probabilities_at_zero() {
        let m = LinearModel {
            kind: LinearKind::Logreg,
            n_classes: 4,
            n_features: 3,
            weights: vec![0.5; 12],
            bias: vec![0.0; 4],
            c: 1.0,
        };
        let (label, p) = m.predict(&SparseVector::default()).unwrap();
        assert_eq!(label, 0);
        assert!(p.iter().all(|&q| (q - 0.25).abs() < 1e-15));
        assert!(m.predict(&SparseVector::from_dense(&[0.0, 0.0, 0.0, 1.0])).is_err());
    }

    #[test]
    fn svm_separable_toy() {
        let (x, y) = toy();
        let m = train_svm(&x, &y, 2, 2, &TrainConfig::svm(10.0)).unwrap();
        for (xi, &yi) in x.iter().zip(&y) {
            assert_eq!(m.predict(xi).unwrap().0, yi);
        }
    }

    #[test]
    fn svm_objective_trace_settles() {
        let (x, y) = toy();
        let (_, trace) = train_svm_traced(&x, &y, 2, 2, &TrainConfig::svm(10.0)).unwrap();
        assert_eq!(trace.objective.len(), 99);
        // The averaged iterate is not a descent method: on this set its
        // objective rises a few times during the first twenty epochs, by at
        // most 0.054, and decreases monotonically after that.
        let rises: Vec<usize> = trace
            .objective
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[1] > w[0] + 1e-6)
            .map(|(i, _)| i)
            .collect();
        assert!(rises.iter().all(|&i| i < 20), "late rises: {rises:?}");
        let last = trace.objective[98];
        assert!(trace.objective[..98].iter().all(|&v| v > last));
    }

    #[test]
    fn svm_two_class_scores_are_sign_symmetric() {
        // class 1 is the mirror image of class 0
        let x = vec![
            SparseVector::from_dense(&[1.0, 0.3]),
            SparseVector::from_dense(&[0.7, 0.7]),
            SparseVector::from_dense(&[0.3, 1.0]),
            SparseVector::from_dense(&[1.0, 0.0]),
        ];
        let y = vec![0, 1, 1, 0];
        let m = train_svm(&x, &y, 2, 2, &TrainConfig::svm(3.0)).unwrap();
        for xi in &x {
            let s = m.decision(xi).unwrap();
            assert!((s[0] + s[1]).abs() < 1e-6, "{s:?}");
        }
    }

    #[test]
    fn training_is_bit_identical() {
        let (x, y) = toy();
        let a = train_svm(&x, &y, 2, 2, &TrainConfig::svm(7.0).with_seed(3)).unwrap();
        let b = train_svm(&x, &y, 2, 2, &TrainConfig::svm(7.0).with_seed(3)).unwrap();
        assert_eq!(a, b);
        let a = train_logreg(&x, &y, 2, 2, &TrainConfig::logreg(0.4)).unwrap();
        let b = train_logreg(&x, &y, 2, 2, &TrainConfig::logreg(0.4)).unwrap();
        assert_eq!(a, b);
    }
}
