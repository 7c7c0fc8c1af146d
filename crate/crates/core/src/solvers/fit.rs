use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use rand::Rng;

use crate::policy::{GaussianPolicy, MeanFn, Mlp};
use crate::{Error, Result, Vector};

/// Full-batch gradient-descent settings for the small regressors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub step_size: f64,
    /// Heavy-ball momentum coefficient; 0 gives plain gradient descent.
    pub momentum: f64,
    pub max_steps: usize,
    /// Held-out mean-squared error above which the fit is reported as failed.
    pub mse_threshold: f64,
    pub train_points: usize,
    pub grid_points: usize,
    /// Input range the fit must cover.
    pub range: (f64, f64),
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            step_size: 1e-2,
            momentum: 0.9,
            max_steps: 20_000,
            mse_threshold: 1e-4,
            train_points: 64,
            grid_points: 101,
            range: (-3.0, 3.0),
        }
    }
}

fn mse(net: &Mlp, xs: &[f64], ys: &[f64]) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(x, y)| (net.eval(*x) - y).powi(2))
        .sum::<f64>()
        / xs.len() as f64
}

/// Least-squares fit of an [`Mlp`] by full-batch gradient descent with
/// heavy-ball momentum.
///
/// Inputs are standardised with the sample mean and spread; targets are
/// divided by their largest magnitude during training and the scale is
/// folded back into the returned network. Returns the net and its training
/// MSE in original units.
pub fn fit_scalar_mlp<R: Rng + ?Sized>(
    xs: &[f64],
    ys: &[f64],
    hidden: usize,
    opts: &FitOptions,
    rng: &mut R,
) -> Result<(Mlp, f64)> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::invalid("xs/ys", "need equal, non-empty samples"));
    }
    let n = xs.len() as f64;
    let shift = xs.iter().sum::<f64>() / n;
    let spread = (xs.iter().map(|x| (x - shift).powi(2)).sum::<f64>() / n).sqrt();
    let scale = if spread > 0.0 { spread } else { 1.0 };
    let out = ys.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    let out = if out > 0.0 { out } else { 1.0 };
    let targets: Vec<f64> = ys.iter().map(|y| y / out).collect();

    let mut net = Mlp::random(hidden, shift, scale, 1.0, rng)?;
    let mut params = Vector::from_column_slice(net.params());
    let stop = opts.mse_threshold / 10.0 / (out * out);
    let mut velocity = Vector::zeros(params.len());
    for _ in 0..opts.max_steps {
        let mut grad = Vector::zeros(params.len());
        let mut loss = 0.0;
        for (x, y) in xs.iter().zip(&targets) {
            let (pred, g) = net.eval_with_grad(*x);
            let r = pred - y;
            loss += r * r;
            grad.axpy(2.0 * r / n, &g, 1.0);
        }
        if loss / n < stop {
            break;
        }
        velocity.axpy(-opts.step_size, &grad, opts.momentum);
        params += &velocity;
        net = net.with_params(params.as_slice())?;
    }
    let fitted = Mlp::new(hidden, params.as_slice().to_vec(), shift, scale, out)?;
    let train_mse = mse(&fitted, xs, ys);
    Ok((fitted, train_mse))
}

fn grid(opts: &FitOptions) -> Vec<f64> {
    let (lo, hi) = opts.range;
    let m = opts.grid_points.max(2);
    (0..m)
        .map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64)
        .collect()
}

/// Fits an MLP mean to the linear feedback `−gain · s` over `opts.range`.
///
/// Training inputs are drawn uniformly from the range; the returned error
/// check uses a separate uniform grid.
pub fn fit_mlp_policy<R: Rng + ?Sized>(
    gain: f64,
    hidden: usize,
    action_std: f64,
    opts: &FitOptions,
    rng: &mut R,
) -> Result<GaussianPolicy> {
    if hidden == 0 {
        return Err(Error::invalid("hidden", "must be at least 1"));
    }
    let (lo, hi) = opts.range;
    let xs: Vec<f64> = (0..opts.train_points)
        .map(|_| lo + (hi - lo) * rng.random::<f64>())
        .collect();
    let ys: Vec<f64> = xs.iter().map(|s| -gain * s).collect();
    let (net, _) = fit_scalar_mlp(&xs, &ys, hidden, opts, rng)?;
    let held_out = grid(opts);
    let targets: Vec<f64> = held_out.iter().map(|s| -gain * s).collect();
    let err = mse(&net, &held_out, &targets);
    if !(err <= opts.mse_threshold) {
        return Err(Error::FitFailed {
            mse: err,
            threshold: opts.mse_threshold,
        });
    }
    GaussianPolicy::new(MeanFn::Mlp(net), action_std)
}

/// Fits an MLP to `target(s)` over `opts.range`, e.g. the Riccati value
/// `V*(s) = P s²`. Returns the net and its held-out grid MSE.
pub fn fit_value_mlp<R: Rng + ?Sized, F: Fn(f64) -> f64>(
    target: F,
    hidden: usize,
    opts: &FitOptions,
    rng: &mut R,
) -> Result<(Mlp, f64)> {
    let (lo, hi) = opts.range;
    let xs: Vec<f64> = (0..opts.train_points)
        .map(|_| lo + (hi - lo) * rng.random::<f64>())
        .collect();
    let ys: Vec<f64> = xs.iter().map(|x| target(*x)).collect();
    let (net, _) = fit_scalar_mlp(&xs, &ys, hidden, opts, rng)?;
    let held_out = grid(opts);
    let targets: Vec<f64> = held_out.iter().map(|x| target(*x)).collect();
    let err = mse(&net, &held_out, &targets);
    Ok((net, err))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::StochasticPolicy;
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn zero_gain_fits_zero_function() {
        let mut rng = stream_rng(0, Stream::Fit, 0);
        let pol = fit_mlp_policy(0.0, 6, 0.1, &FitOptions::default(), &mut rng).unwrap();
        let worst = (0..61)
            .map(|i| pol.mean(-3.0 + 0.1 * i as f64).powi(2))
            .fold(0.0f64, f64::max);
        assert!(worst <= 1e-6);
    }

    #[test]
    fn half_gain_fits_within_threshold_on_grid() {
        let mut rng = stream_rng(1, Stream::Fit, 0);
        let pol = fit_mlp_policy(0.5, 6, 0.1, &FitOptions::default(), &mut rng).unwrap();
        let grid: Vec<f64> = (0..101).map(|i| -3.0 + 0.06 * i as f64).collect();
        let mse = grid
            .iter()
            .map(|s| (pol.mean(*s) + 0.5 * s).powi(2))
            .sum::<f64>()
            / 101.0;
        assert!(mse <= 1e-4, "mse {mse}");
        assert_eq!(pol.num_params(), 19);
    }

    #[test]
    fn fitted_policy_score_is_fd_consistent() {
        let mut rng = stream_rng(2, Stream::Fit, 0);
        let pol = fit_mlp_policy(0.8, 6, 0.1, &FitOptions::default(), &mut rng).unwrap();
        let (s, a) = (1.1, -0.7);
        let g = pol.grad_log_prob(s, a);
        let eps = 1e-6;
        let fd = Vector::from_fn(pol.num_params(), |i, _| {
            let mut up = pol.params();
            let mut dn = pol.params();
            up[i] += eps;
            dn[i] -= eps;
            (pol.with_params(&up).unwrap().log_prob(s, a)
                - pol.with_params(&dn).unwrap().log_prob(s, a))
                / (2.0 * eps)
        });
        assert!((&g - &fd).norm() / fd.norm() <= 1e-5);
    }

    #[test]
    fn impossible_threshold_reports_failure() {
        let mut rng = stream_rng(3, Stream::Fit, 0);
        let opts = FitOptions {
            max_steps: 3,
            mse_threshold: 1e-12,
            ..Default::default()
        };
        assert!(matches!(
            fit_mlp_policy(1.0, 2, 0.1, &opts, &mut rng),
            Err(Error::FitFailed { .. })
        ));
    }

    #[test]
    fn value_net_tracks_quadratic() {
        let mut rng = stream_rng(4, Stream::Fit, 0);
        let opts = FitOptions {
            max_steps: 5_000,
            ..Default::default()
        };
        let (net, err) = fit_value_mlp(|s| 0.3 * s * s, 64, &opts, &mut rng).unwrap();
        assert!(err < 1e-2, "grid mse {err}");
        assert!(net.eval(2.0) > net.eval(0.0));
    }
}
