use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{nll_loss, DetectionSlot, FilterError, FilterInput, FilterModel, MixturePrediction};
use crate::geom::Vec2;

/// Coverage of the 1-σ ellipse of a 2-D Gaussian, `1 − e^{−1/2}`.
pub const DESV_IDEAL: f64 = 0.393_469_340_287_366_6;

const QUAD_CELLS: usize = 64;
const EDGE_SUBSAMPLES: usize = 16;

fn check_pairs(preds: &[MixturePrediction], targets: &[Vec2]) -> Result<(), FilterError> {
    if preds.is_empty() || preds.len() != targets.len() {
        return Err(FilterError::Contract(format!(
            "metrics need matching non-empty predictions and targets, got {} and {}",
            preds.len(),
            targets.len()
        )));
    }
    Ok(())
}

/// Mean log-likelihood of the targets.
pub fn metric_ll(preds: &[MixturePrediction], targets: &[Vec2]) -> Result<f64, FilterError> {
    check_pairs(preds, targets)?;
    Ok(preds.iter().zip(targets).map(|(p, &y)| -nll_loss(p, y)).sum::<f64>() / preds.len() as f64)
}

/// Mean distance between the mixture mean and the target.
pub fn metric_ade(preds: &[MixturePrediction], targets: &[Vec2]) -> Result<f64, FilterError> {
    check_pairs(preds, targets)?;
    Ok(preds.iter().zip(targets).map(|(p, &y)| p.mean().dist(y)).sum::<f64>() / preds.len() as f64)
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// `P(‖X − center‖ ≤ δ)` under the mixture.
///
/// The bounding square is cut into 64×64 cells. Each cell contributes its
/// exact Gaussian mass (a product of normal CDF differences) times the
/// fraction of the cell inside the disk; cells crossing the circle estimate
/// that fraction on a 16×16 sub-grid. Absolute error is below 1e-3.
pub fn disk_probability(pred: &MixturePrediction, center: Vec2, delta: f64) -> Result<f64, FilterError> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(FilterError::Contract(format!("disk radius must be positive, got {delta}")));
    }
    let h = 2.0 * delta / QUAD_CELLS as f64;
    let edges = |c: f64| -> Vec<f64> { (0..=QUAD_CELLS).map(|i| c - delta + i as f64 * h).collect() };
    let (xs, ys) = (edges(center.x), edges(center.y));

    // Fraction of each cell inside the disk; symmetric, so computed once.
    let mut cover = vec![0.0; QUAD_CELLS * QUAD_CELLS];
    for j in 0..QUAD_CELLS {
        for i in 0..QUAD_CELLS {
            let (x0, x1) = (xs[i] - center.x, xs[i + 1] - center.x);
            let (y0, y1) = (ys[j] - center.y, ys[j + 1] - center.y);
            let far = x0.abs().max(x1.abs()).hypot(y0.abs().max(y1.abs()));
            let nx = if x0 <= 0.0 && x1 >= 0.0 { 0.0 } else { x0.abs().min(x1.abs()) };
            let ny = if y0 <= 0.0 && y1 >= 0.0 { 0.0 } else { y0.abs().min(y1.abs()) };
            cover[j * QUAD_CELLS + i] = if far <= delta {
                1.0
            } else if nx.hypot(ny) >= delta {
                0.0
            } else {
                let s = h / EDGE_SUBSAMPLES as f64;
                let mut inside = 0;
                for b in 0..EDGE_SUBSAMPLES {
                    for a in 0..EDGE_SUBSAMPLES {
                        let px = x0 + (a as f64 + 0.5) * s;
                        let py = y0 + (b as f64 + 0.5) * s;
                        if px.hypot(py) <= delta {
                            inside += 1;
                        }
                    }
                }
                inside as f64 / (EDGE_SUBSAMPLES * EDGE_SUBSAMPLES) as f64
            };
        }
    }

    let mut total = 0.0;
    for k in 0..pred.components() {
        let (m, s) = (pred.means[k], pred.scales[k]);
        let cdf_x: Vec<f64> = xs.iter().map(|&x| normal_cdf((x - m.x) / s.x)).collect();
        let cdf_y: Vec<f64> = ys.iter().map(|&y| normal_cdf((y - m.y) / s.y)).collect();
        let mut mass = 0.0;
        for j in 0..QUAD_CELLS {
            let py = cdf_y[j + 1] - cdf_y[j];
            if py == 0.0 {
                continue;
            }
            for i in 0..QUAD_CELLS {
                mass += (cdf_x[i + 1] - cdf_x[i]) * py * cover[j * QUAD_CELLS + i];
            }
        }
        total += pred.weights[k] * mass;
    }
    Ok(total.clamp(0.0, 1.0))
}

/// Fraction of targets around which the prediction puts at least
/// `p_thresh` probability within `delta`.
pub fn metric_ctp(preds: &[MixturePrediction], targets: &[Vec2], delta: f64, p_thresh: f64) -> Result<f64, FilterError> {
    check_pairs(preds, targets)?;
    let mut hits = 0;
    for (p, &y) in preds.iter().zip(targets) {
        if disk_probability(p, y, delta)? >= p_thresh {
            hits += 1;
        }
    }
    Ok(hits as f64 / preds.len() as f64)
}

/// Empirical 1-σ coverage minus [`DESV_IDEAL`]. A target is covered when
/// its Mahalanobis distance under the component with the highest
/// responsibility for it is at most one. Negative means overconfident.
pub fn metric_desv(preds: &[MixturePrediction], targets: &[Vec2]) -> Result<f64, FilterError> {
    check_pairs(preds, targets)?;
    let mut inside = 0;
    for (p, &y) in preds.iter().zip(targets) {
        let resp = |k: usize| p.weights[k].ln() + p.component_log_density(k, y);
        let mut best = 0;
        for k in 1..p.components() {
            if resp(k) > resp(best) {
                best = k;
            }
        }
        let (m, s) = (p.means[best], p.scales[best]);
        let d2 = ((y.x - m.x) / s.x).powi(2) + ((y.y - m.y) / s.y).powi(2);
        if d2 <= 1.0 {
            inside += 1;
        }
    }
    Ok(inside as f64 / preds.len() as f64 - DESV_IDEAL)
}

/// ADE of plain constant-velocity extrapolation from the latest detection.
pub fn motion_baseline_ade(inputs: &[FilterInput], targets: &[Vec2], t_max: usize) -> Result<f64, FilterError> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(FilterError::Contract("motion baseline needs matching non-empty inputs and targets".into()));
    }
    let total: f64 = inputs
        .iter()
        .zip(targets)
        .map(|(i, &y)| i.motion_estimate(t_max).dist(y))
        .sum();
    Ok(total / inputs.len() as f64)
}

/// Median wall time in seconds of `passes` forward passes over a fixed
/// batch of `batch` synthetic inputs.
pub fn bench_runtime(model: &FilterModel, batch: usize, passes: usize) -> Result<f64, FilterError> {
    if batch == 0 {
        return Err(FilterError::Contract("benchmark batch must be non-empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xBE7C);
    let mut point = || Vec2::new(rng.random(), rng.random());
    let inputs: Vec<FilterInput> = (0..batch)
        .map(|_| FilterInput {
            start: point(),
            t_norm: 0.5,
            slots: [
                DetectionSlot {
                    position: point(),
                    velocity: Vec2::new(0.003, 0.0),
                    staleness: 0.05,
                },
                DetectionSlot {
                    position: point(),
                    velocity: Vec2::ZERO,
                    staleness: 0.2,
                },
            ],
        })
        .collect();
    let mut times = Vec::with_capacity(passes.max(20));
    model.predict(&inputs)?;
    for _ in 0..passes.max(20) {
        let t0 = Instant::now();
        std::hint::black_box(model.predict(&inputs)?);
        times.push(t0.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    Ok(times[times.len() / 2])
}

/// One row of filter metrics. `None` marks a metric that does not apply.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FilterMetrics {
    pub ll: Option<f64>,
    pub ade: Option<f64>,
    pub ctp: Option<f64>,
    pub desv: Option<f64>,
    pub runtime: Option<f64>,
}

impl FilterMetrics {
    /// LL, ADE, CTP (δ = 0.05, threshold 0.5) and DESV of a prediction set.
    pub fn compute(preds: &[MixturePrediction], targets: &[Vec2]) -> Result<Self, FilterError> {
        Ok(Self {
            ll: Some(metric_ll(preds, targets)?),
            ade: Some(metric_ade(preds, targets)?),
            ctp: Some(metric_ctp(preds, targets, 0.05, 0.5)?),
            desv: Some(metric_desv(preds, targets)?),
            runtime: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn gauss(m: Vec2, s: f64) -> MixturePrediction {
        MixturePrediction::single(m, Vec2::new(s, s))
    }

    #[test]
    fn ll_closed_form_and_mean() {
        let y = Vec2::new(0.3, 0.3);
        let p = gauss(y, 1.0);
        let one = metric_ll(&[p.clone()], &[y]).unwrap();
        assert!((one + (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
        let many = metric_ll(&vec![p; 5], &[y; 5]).unwrap();
        assert!((many - one).abs() < 1e-12);
    }

    #[test]
    fn far_low_weight_component_bound() {
        // Mixing in weight w elsewhere costs at most log(1 − w) of likelihood.
        let y = Vec2::new(0.5, 0.5);
        let base = gauss(y, 0.05);
        let w = 0.01;
        let mixed = MixturePrediction {
            weights: vec![1.0 - w, w],
            means: vec![y, Vec2::new(5.0, 5.0)],
            scales: vec![Vec2::new(0.05, 0.05); 2],
        };
        let a = metric_ll(&[base], &[y]).unwrap();
        let b = metric_ll(&[mixed], &[y]).unwrap();
        assert!(a - b <= -(1.0 - w).ln() + 1e-12);
        assert!(a >= b);
    }

    #[test]
    fn ade_cases() {
        let y = Vec2::new(0.5, 0.5);
        assert_eq!(metric_ade(&[gauss(y, 0.1)], &[y]).unwrap(), 0.0);
        let sym = MixturePrediction {
            weights: vec![0.5, 0.5],
            means: vec![Vec2::ZERO, Vec2::new(1.0, 1.0)],
            scales: vec![Vec2::new(0.1, 0.1); 2],
        };
        assert_eq!(metric_ade(&[sym.clone()], &[y]).unwrap(), 0.0);
        let mut shifted = sym;
        for m in &mut shifted.means {
            m.x += 0.1;
        }
        let ys = [Vec2::new(0.2, 0.7), Vec2::new(0.55, 0.5)];
        let direct: f64 = ys.iter().map(|y| (Vec2::new(0.6, 0.5) - *y).norm()).sum::<f64>() / 2.0;
        let got = metric_ade(&[shifted.clone(), shifted], &ys).unwrap();
        assert!((got - direct).abs() < 1e-15);
    }

    #[test]
    fn disk_probability_oracles() {
        let c = Vec2::new(0.4, 0.6);
        let d = 0.05;
        let p = disk_probability(&gauss(c, d), c, d).unwrap();
        assert!((p - DESV_IDEAL).abs() < 1e-3, "{p}");
        let far = disk_probability(&gauss(c + Vec2::new(10.0 * d, 0.0), d / 10.0), c, d).unwrap();
        assert!(far < 1e-6);
        let tight = disk_probability(&gauss(c, 1e-3), c, d).unwrap();
        assert!((tight - 1.0).abs() < 1e-3);
        assert!(disk_probability(&gauss(c, d), c, 0.0).is_err());
    }

    #[test]
    fn disk_probability_matches_rayleigh_over_radii() {
        let c = Vec2::new(0.5, 0.5);
        for &(s, d) in &[(0.02f64, 0.05f64), (0.05, 0.02), (0.1, 0.05), (0.03, 0.1)] {
            let want = 1.0 - (-(d * d) / (2.0 * s * s)).exp();
            let got = disk_probability(&gauss(c, s), c, d).unwrap();
            assert!((got - want).abs() < 1e-3, "σ={s} δ={d}: {got} vs {want}");
        }
    }

    #[test]
    fn ctp_counts() {
        let ys = [Vec2::new(0.2, 0.2), Vec2::new(0.8, 0.8)];
        let tight: Vec<_> = ys.iter().map(|&y| gauss(y, 0.005)).collect();
        let far: Vec<_> = ys.iter().map(|&y| gauss(y + Vec2::new(0.3, 0.0), 0.005)).collect();
        assert_eq!(metric_ctp(&tight, &ys, 0.05, 0.5).unwrap(), 1.0);
        assert_eq!(metric_ctp(&far, &ys, 0.05, 0.5).unwrap(), 0.0);
        let mixed = vec![tight[0].clone(), far[1].clone()];
        assert_eq!(metric_ctp(&mixed, &ys, 0.05, 0.5).unwrap(), 0.5);
    }

    #[test]
    fn desv_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let c = Vec2::new(0.5, 0.5);
        let ys: Vec<Vec2> = (0..20_000)
            .map(|_| {
                let zx: f64 = StandardNormal.sample(&mut rng);
                let zy: f64 = StandardNormal.sample(&mut rng);
                c + Vec2::new(zx, zy) * 0.1
            })
            .collect();
        let exact = vec![gauss(c, 0.1); ys.len()];
        assert!(metric_desv(&exact, &ys).unwrap().abs() < 0.02);
        let over = vec![gauss(c, 0.01); ys.len()];
        assert!(metric_desv(&over, &ys).unwrap() < 0.0);
        let under = vec![gauss(c, 1.0); ys.len()];
        assert!(metric_desv(&under, &ys).unwrap() > 0.0);
    }

    #[test]
    fn desv_uses_max_responsibility_component() {
        let p = MixturePrediction {
            weights: vec![0.5, 0.5],
            means: vec![Vec2::new(0.2, 0.2), Vec2::new(0.8, 0.8)],
            scales: vec![Vec2::new(0.05, 0.05); 2],
        };
        let d = metric_desv(&[p], &[Vec2::new(0.8, 0.83)]).unwrap();
        assert!((d - (1.0 - DESV_IDEAL)).abs() < 1e-15);
    }

    #[test]
    fn motion_baseline() {
        let inp = super::super::build_filter_input(&[], 10, Vec2::new(0.3, 0.3), 100);
        assert!((motion_baseline_ade(&[inp], &[Vec2::new(0.3, 0.4)], 100).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn bench_rejects_empty_batch() {
        let m = FilterModel::new(super::super::FilterArch::default(), 0).unwrap();
        assert!(bench_runtime(&m, 0, 20).is_err());
        assert!(bench_runtime(&m, 8, 20).unwrap() > 0.0);
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(metric_ll(&[], &[]).is_err());
        assert!(metric_ade(&[gauss(Vec2::ZERO, 1.0)], &[]).is_err());
    }
}
