use super::{
    check_training_set, ClassWeighting, FeatureContract, ModelError, ModelParams, TrainedClassifier, TrainingInfo,
};
use crate::source::Label;

pub const DEFAULT_VAR_SMOOTHING: f64 = 1e-9;

/// Gaussian naive Bayes with maximum-likelihood class means and variances.
/// Every variance is increased by `var_smoothing` times the largest
/// per-feature variance of the whole training set (or by `var_smoothing`
/// itself when all features are constant). Priors are the class
/// frequencies, or 0.5 each under balanced weighting.
pub fn fit_gaussian_nb(
    x: &[Vec<f64>],
    y: &[Label],
    class_weighting: ClassWeighting,
    var_smoothing: f64,
) -> Result<TrainedClassifier, ModelError> {
    let width = check_training_set(x, y)?;
    if !(var_smoothing.is_finite() && var_smoothing > 0.0) {
        return Err(ModelError::Hyperparameter(format!(
            "variance smoothing must be positive, got {var_smoothing}"
        )));
    }
    let moments = |rows: &mut dyn Iterator<Item = &Vec<f64>>| {
        let rows: Vec<&Vec<f64>> = rows.collect();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; width];
        for r in &rows {
            mean.iter_mut().zip(r.iter()).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; width];
        for r in &rows {
            var.iter_mut()
                .zip(r.iter())
                .zip(&mean)
                .for_each(|((s, v), m)| *s += (v - m) * (v - m));
        }
        var.iter_mut().for_each(|s| *s /= n);
        (mean, var, n)
    };
    let (_, all_var, _) = moments(&mut x.iter());
    let max_var = all_var.iter().copied().fold(0.0, f64::max);
    let epsilon = if max_var > 0.0 {
        var_smoothing * max_var
    } else {
        var_smoothing
    };

    let class = |relevant: bool| {
        moments(
            &mut x
                .iter()
                .zip(y)
                .filter(|(_, l)| l.is_relevant() == relevant)
                .map(|(r, _)| r),
        )
    };
    let (m0, mut v0, n0) = class(false);
    let (m1, mut v1, n1) = class(true);
    v0.iter_mut().chain(v1.iter_mut()).for_each(|v| *v += epsilon);
    let priors = match class_weighting {
        ClassWeighting::Uniform => [n0 / (n0 + n1), n1 / (n0 + n1)],
        ClassWeighting::Balanced => [0.5, 0.5],
    };
    Ok(TrainedClassifier {
        params: ModelParams::GaussianNb {
            priors,
            means: [m0, m1],
            variances: [v0, v1],
            var_smoothing,
            epsilon,
        },
        class_weighting,
        feature_contract: FeatureContract::width(width),
        training: TrainingInfo {
            n_train: x.len(),
            iterations: 1,
            converged: true,
            final_gradient_norm: None,
        },
    })
}

fn log_joint(prior: f64, means: &[f64], variances: &[f64], x: &[f64]) -> f64 {
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    prior.ln()
        - 0.5
            * x.iter()
                .zip(means)
                .zip(variances)
                .map(|((v, m), s2)| ln_2pi + s2.ln() + (v - m) * (v - m) / s2)
                .sum::<f64>()
}

/// Posterior probability of the relevant class.
pub(crate) fn posterior(params: &ModelParams, x: &[f64]) -> f64 {
    let ModelParams::GaussianNb {
        priors,
        means,
        variances,
        ..
    } = params
    else {
        unreachable!("posterior called on a non-NB model")
    };
    let l0 = log_joint(priors[0], &means[0], &variances[0], x);
    let l1 = log_joint(priors[1], &means[1], &variances[1], x);
    // softmax over two classes
    1.0 / (1.0 + (l0 - l1).exp())
}
