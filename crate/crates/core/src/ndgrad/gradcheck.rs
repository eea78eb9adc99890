//! Central finite-difference check of analytic parameter gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, NdError, ParamSet, Var};

/// Which parameter entries to perturb.
#[derive(Debug, Clone, Copy)]
pub enum Coverage {
    All,
    /// At most this many entries per parameter tensor, drawn with the seed.
    Sampled { per_param: usize, seed: u64 },
}

/// `|a − n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Max relative error between backprop and central differences over every
/// entry of every parameter in `set`. `f` builds a scalar loss.
pub fn grad_check<F>(set: &mut ParamSet, eps: f64, f: F) -> Result<f64, NdError>
where
    F: Fn(&mut Graph, &ParamSet) -> Result<Var, NdError>,
{
    grad_check_with(set, eps, Coverage::All, f)
}

pub fn grad_check_with<F>(set: &mut ParamSet, eps: f64, coverage: Coverage, f: F) -> Result<f64, NdError>
where
    F: Fn(&mut Graph, &ParamSet) -> Result<Var, NdError>,
{
    grad_check_steps(set, &[eps], coverage, f)
}

/// Like [`grad_check_with`], but each entry is scored by its best agreement
/// over several step sizes. Small steps lose digits to cancellation and
/// large ones can straddle a ReLU kink; a wrong gradient disagrees at all.
pub fn grad_check_steps<F>(set: &mut ParamSet, steps: &[f64], coverage: Coverage, f: F) -> Result<f64, NdError>
where
    F: Fn(&mut Graph, &ParamSet) -> Result<Var, NdError>,
{
    if steps.is_empty() || steps.iter().any(|&e| !(e > 0.0)) {
        return Err(NdError::Contract("finite-difference steps must be positive"));
    }
    set.zero_grad();
    let mut g = Graph::new();
    let loss = f(&mut g, set)?;
    let grads = g.backward(loss)?;
    grads.accumulate_into(set);
    let analytic: Vec<Vec<f64>> = set.params().iter().map(|p| p.grad.clone()).collect();
    set.zero_grad();

    let eval = |set: &ParamSet| -> Result<f64, NdError> {
        let mut g = Graph::new();
        let l = f(&mut g, set)?;
        Ok(g.value(l).data()[0])
    };

    let mut worst = 0.0f64;
    for p in 0..set.len() {
        let n = set.value(p).len();
        let entries: Vec<usize> = match coverage {
            Coverage::Sampled { per_param, seed } if n > per_param => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (p as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let mut idx = sample(&mut rng, n, per_param).into_vec();
                idx.sort_unstable();
                idx
            }
            _ => (0..n).collect(),
        };
        for j in entries {
            let orig = set.value(p).data()[j];
            let mut best = f64::INFINITY;
            for &eps in steps {
                set.value_mut(p).data_mut()[j] = orig + eps;
                let up = eval(set)?;
                set.value_mut(p).data_mut()[j] = orig - eps;
                let down = eval(set)?;
                set.value_mut(p).data_mut()[j] = orig;
                let numeric = (up - down) / (2.0 * eps);
                best = best.min(relative_error(analytic[p][j], numeric));
            }
            worst = worst.max(best);
        }
    }
    Ok(worst)
}
