use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::lbfgs::{minimize, LbfgsSettings};
use super::{
    check_strength, check_training_set, ClassWeighting, FeatureContract, ModelError, ModelParams, TrainedClassifier,
    TrainingInfo,
};
use crate::source::Label;

pub const LOGISTIC_MAX_ITER: usize = 1000;
pub const LOGISTIC_TOLERANCE: f64 = 1e-6;
pub const SVC_MAX_EPOCHS: usize = 1000;
pub const SVC_TOLERANCE: f64 = 1e-4;
pub const SVC_SEED: u64 = 0x5eed;

pub(crate) fn score(weights: &[f64], bias: f64, x: &[f64]) -> f64 {
    weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + bias
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sign(l: Label) -> f64 {
    if l.is_relevant() {
        1.0
    } else {
        -1.0
    }
}

/// Regularised logistic loss and its gradient at `theta = [w.., b]`:
/// `(1/W) Σ s_i log(1 + exp(-t_i (w·x_i + b))) + (λ/2)||w||²`, `t_i = ±1`.
pub fn logistic_objective(
    x: &[Vec<f64>],
    y: &[Label],
    sample_weights: &[f64],
    lambda: f64,
    theta: &[f64],
) -> (f64, Vec<f64>) {
    let d = theta.len() - 1;
    let (w, b) = (&theta[..d], theta[d]);
    let total: f64 = sample_weights.iter().sum();
    let mut value = 0.0;
    let mut grad = vec![0.0; d + 1];
    for ((row, &label), &s) in x.iter().zip(y).zip(sample_weights) {
        let t = sign(label);
        let m = -t * score(w, b, row);
        value += s * softplus(m);
        let coef = -t * s * sigmoid(m) / total;
        grad[..d].iter_mut().zip(row).for_each(|(g, v)| *g += coef * v);
        grad[d] += coef;
    }
    value /= total;
    let sq: f64 = w.iter().map(|v| v * v).sum();
    value += 0.5 * lambda * sq;
    grad[..d].iter_mut().zip(w).for_each(|(g, wi)| *g += lambda * wi);
    (value, grad)
}

/// L-BFGS on [`logistic_objective`] from zero; the bias is not penalised.
pub fn fit_logistic_regression(
    x: &[Vec<f64>],
    y: &[Label],
    class_weighting: ClassWeighting,
    regularization_strength: f64,
) -> Result<TrainedClassifier, ModelError> {
    let width = check_training_set(x, y)?;
    check_strength(regularization_strength)?;
    let s = class_weighting.sample_weights(y);
    let settings = LbfgsSettings {
        memory: 10,
        max_iterations: LOGISTIC_MAX_ITER,
        gradient_tolerance: LOGISTIC_TOLERANCE,
    };
    let out = minimize(
        |theta| logistic_objective(x, y, &s, regularization_strength, theta),
        vec![0.0; width + 1],
        &settings,
    );
    if !out.converged {
        tracing::warn!(
            iterations = out.iterations,
            gradient_norm = out.gradient_norm,
            "logistic regression stopped before reaching the gradient tolerance"
        );
    }
    let mut weights = out.x;
    let bias = weights.pop().expect("bias slot");
    Ok(TrainedClassifier {
        params: ModelParams::LogisticRegression {
            weights,
            bias,
            regularization_strength,
        },
        class_weighting,
        feature_contract: FeatureContract::width(width),
        training: TrainingInfo {
            n_train: x.len(),
            iterations: out.iterations,
            converged: out.converged,
            final_gradient_norm: Some(out.gradient_norm),
        },
    })
}

/// Weighted least squares on ±1 targets:
/// `(1/W) Σ s_i (t_i - w·x_i - b)² + λ||w||²`, solved in closed form on
/// weight-centred data (primal when width ≤ n, dual otherwise).
pub fn fit_ridge(
    x: &[Vec<f64>],
    y: &[Label],
    class_weighting: ClassWeighting,
    regularization_strength: f64,
) -> Result<TrainedClassifier, ModelError> {
    let width = check_training_set(x, y)?;
    check_strength(regularization_strength)?;
    let n = x.len();
    let s = class_weighting.sample_weights(y);
    let total: f64 = s.iter().sum();
    let t: Vec<f64> = y.iter().map(|&l| sign(l)).collect();

    let mut x_mean = vec![0.0; width];
    for (row, &si) in x.iter().zip(&s) {
        x_mean.iter_mut().zip(row).for_each(|(m, v)| *m += si * v / total);
    }
    let t_mean: f64 = t.iter().zip(&s).map(|(ti, si)| ti * si).sum::<f64>() / total;
    let xc = DMatrix::from_fn(n, width, |i, j| x[i][j] - x_mean[j]);
    let tc = DVector::from_fn(n, |i, _| t[i] - t_mean);
    let sqrt_s = DVector::from_iterator(n, s.iter().map(|v| v.sqrt()));
    let ridge = regularization_strength * total;

    let singular = || ModelError::Numerical("ridge system is not positive definite".into());
    let w = if width <= n {
        let xs = DMatrix::from_fn(n, width, |i, j| xc[(i, j)] * sqrt_s[i]);
        let ts = tc.component_mul(&sqrt_s);
        let mut a = xs.transpose() * &xs;
        for i in 0..width {
            a[(i, i)] += ridge;
        }
        let rhs = xs.transpose() * ts;
        a.cholesky().ok_or_else(singular)?.solve(&rhs)
    } else {
        // w = Xcᵀ S^½ γ with (S^½ K S^½ + λW I) γ = S^½ t_c
        let xs = DMatrix::from_fn(n, width, |i, j| xc[(i, j)] * sqrt_s[i]);
        let mut k = &xs * xs.transpose();
        for i in 0..n {
            k[(i, i)] += ridge;
        }
        let rhs = tc.component_mul(&sqrt_s);
        let gamma = k.cholesky().ok_or_else(singular)?.solve(&rhs);
        xs.transpose() * gamma
    };
    let weights: Vec<f64> = w.iter().copied().collect();
    let bias = t_mean - score(&weights, 0.0, &x_mean);
    Ok(TrainedClassifier {
        params: ModelParams::Ridge {
            weights,
            bias,
            regularization_strength,
        },
        class_weighting,
        feature_contract: FeatureContract::width(width),
        training: TrainingInfo {
            n_train: n,
            iterations: 1,
            converged: true,
            final_gradient_norm: None,
        },
    })
}

/// Hinge-loss linear SVM by dual coordinate descent. Features are first
/// standardised with sample-weighted means and deviations; in that space
/// the bias is an extra constant-1 feature penalised with the weights:
/// `(λ/2)||(w, b)||² + (1/W) Σ s_i max(0, 1 - t_i (w·z_i + b))`.
/// The returned weights and bias are mapped back to raw features.
/// Coordinates are visited in a fixed-seed random order each epoch; the run
/// stops when the projected-gradient spread of an epoch drops below
/// [`SVC_TOLERANCE`] or after [`SVC_MAX_EPOCHS`] epochs.
pub fn fit_linear_svc(
    x: &[Vec<f64>],
    y: &[Label],
    class_weighting: ClassWeighting,
    regularization_strength: f64,
) -> Result<TrainedClassifier, ModelError> {
    let width = check_training_set(x, y)?;
    check_strength(regularization_strength)?;
    let n = x.len();
    let s = class_weighting.sample_weights(y);
    let total: f64 = s.iter().sum();
    let upper: Vec<f64> = s.iter().map(|si| si / (regularization_strength * total)).collect();
    let t: Vec<f64> = y.iter().map(|&l| sign(l)).collect();
    let (mean, scale) = weighted_standardization(x, &s, total);
    let z: Vec<Vec<f64>> = x
        .iter()
        .map(|r| {
            r.iter()
                .zip(&mean)
                .zip(&scale)
                .map(|((v, m), sd)| (v - m) / sd)
                .collect()
        })
        .collect();
    let x = z.as_slice();
    let q_diag: Vec<f64> = x.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>() + 1.0).collect();

    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; width];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(SVC_SEED);
    let mut epochs = 0;
    let mut converged = false;
    while epochs < SVC_MAX_EPOCHS {
        order.shuffle(&mut rng);
        let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
        for &i in &order {
            let g = t[i] * score(&w, b, &x[i]) - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == upper[i] {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / q_diag[i]).clamp(0.0, upper[i]);
                let delta = (alpha[i] - old) * t[i];
                w.iter_mut().zip(&x[i]).for_each(|(wj, v)| *wj += delta * v);
                b += delta;
            }
        }
        epochs += 1;
        if pg_max - pg_min < SVC_TOLERANCE {
            converged = true;
            break;
        }
    }
    if !converged {
        tracing::warn!(epochs, "linear svc stopped at the epoch cap");
    }
    let w: Vec<f64> = w.iter().zip(&scale).map(|(wj, sd)| wj / sd).collect();
    let b = b - score(&w, 0.0, &mean);
    Ok(TrainedClassifier {
        params: ModelParams::LinearSvc {
            weights: w,
            bias: b,
            regularization_strength,
        },
        class_weighting,
        feature_contract: FeatureContract::width(width),
        training: TrainingInfo {
            n_train: n,
            iterations: epochs,
            converged,
            final_gradient_norm: None,
        },
    })
}

/// Sample-weighted column means and standard deviations; constant columns
/// get deviation 1.
fn weighted_standardization(x: &[Vec<f64>], s: &[f64], total: f64) -> (Vec<f64>, Vec<f64>) {
    let width = x[0].len();
    let mut mean = vec![0.0; width];
    for (r, si) in x.iter().zip(s) {
        mean.iter_mut().zip(r).for_each(|(m, v)| *m += si * v);
    }
    mean.iter_mut().for_each(|m| *m /= total);
    let mut var = vec![0.0; width];
    for (r, si) in x.iter().zip(s) {
        var.iter_mut()
            .zip(r)
            .zip(&mean)
            .for_each(|((acc, v), m)| *acc += si * (v - m) * (v - m));
    }
    let scale = var
        .into_iter()
        .map(|v| {
            let sd = (v / total).sqrt();
            if sd > 0.0 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}
