use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FilterError, FilterInput, MixturePrediction, INPUT_DIM, SIGMA_MIN};
use crate::geom::Vec2;
use crate::ndgrad::{checkpoint, softmax, Activation, DenseArray, Graph, Mlp, NdError, ParamSet, Var};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Pmc,
    Fc,
}

impl FilterKind {
    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Pmc => "pmc",
            FilterKind::Fc => "fc",
        }
    }
}

impl std::str::FromStr for FilterKind {
    type Err = FilterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pmc" => Ok(FilterKind::Pmc),
            "fc" => Ok(FilterKind::Fc),
            other => Err(FilterError::Config(format!("unknown filter model {other:?}"))),
        }
    }
}

/// Layer widths and head layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterArch {
    pub kind: FilterKind,
    pub components: usize,
    /// Episode horizon used to turn staleness back into steps for the
    /// motion branch.
    pub t_max: usize,
    pub prior_hidden: Vec<usize>,
    pub embed: usize,
    pub motion_hidden: usize,
    pub confidence_hidden: usize,
    /// Per-feature gate instead of one scalar `α`.
    pub vector_gate: bool,
    pub decoder_hidden: usize,
    pub fc_hidden: Vec<usize>,
}

impl Default for FilterArch {
    fn default() -> Self {
        Self {
            kind: FilterKind::Pmc,
            components: 8,
            t_max: 300,
            prior_hidden: vec![64, 64],
            embed: 32,
            motion_hidden: 32,
            confidence_hidden: 32,
            vector_gate: false,
            decoder_hidden: 64,
            fc_hidden: vec![64, 64],
        }
    }
}

impl FilterArch {
    pub fn pmc(t_max: usize) -> Self {
        Self {
            t_max,
            ..Self::default()
        }
    }

    pub fn fc(t_max: usize) -> Self {
        Self {
            kind: FilterKind::Fc,
            t_max,
            ..Self::default()
        }
    }

    pub fn head_width(&self) -> usize {
        5 * self.components
    }

    fn validate(&self) -> Result<(), FilterError> {
        if self.components == 0 || self.t_max == 0 || self.embed == 0 {
            return Err(FilterError::Config("components, t_max and embed must be positive".into()));
        }
        let widths = self.prior_hidden.iter().chain(&self.fc_hidden);
        if widths.chain([&self.motion_hidden, &self.confidence_hidden, &self.decoder_hidden]).any(|&w| w == 0) {
            return Err(FilterError::Config("hidden widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Nets {
    Pmc {
        prior: Mlp,
        motion: Mlp,
        confidence: Mlp,
        decoder: Mlp,
    },
    Fc {
        body: Mlp,
    },
}

/// Raw graph outputs for a batch: `logits` B×N, `means` and `scales` B×2N
/// laid out `[x_0, y_0, x_1, y_1, …]`.
#[derive(Debug, Clone, Copy)]
pub struct Heads {
    pub logits: Var,
    pub means: Var,
    pub scales: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterModel {
    arch: FilterArch,
    params: ParamSet,
    nets: Nets,
}

fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut w = vec![input];
    w.extend_from_slice(hidden);
    w.push(output);
    w
}

impl FilterModel {
    pub fn new(arch: FilterArch, seed: u64) -> Result<Self, FilterError> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = ParamSet::new();
        let relu = Activation::Relu;
        let head = arch.head_width();
        let nets = match arch.kind {
            FilterKind::Pmc => {
                let gate = if arch.vector_gate { arch.embed } else { 1 };
                Nets::Pmc {
                    prior: Mlp::new(&mut set, "prior", &widths(3, &arch.prior_hidden, arch.embed), relu, None, &mut rng),
                    motion: Mlp::new(&mut set, "motion", &[2, arch.motion_hidden, arch.embed], relu, None, &mut rng),
                    confidence: Mlp::new(
                        &mut set,
                        "confidence",
                        &[INPUT_DIM, arch.confidence_hidden, gate],
                        relu,
                        Some(Activation::Sigmoid),
                        &mut rng,
                    ),
                    decoder: Mlp::new(&mut set, "decoder", &[arch.embed, arch.decoder_hidden, head], relu, None, &mut rng),
                }
            }
            FilterKind::Fc => Nets::Fc {
                body: Mlp::new(&mut set, "fc", &widths(INPUT_DIM, &arch.fc_hidden, head), relu, None, &mut rng),
            },
        };
        Ok(Self { arch, params: set, nets })
    }

    /// Rebinds an architecture to a parameter set, checking every tensor.
    pub fn from_parts(arch: FilterArch, params: ParamSet) -> Result<Self, FilterError> {
        let template = Self::new(arch.clone(), 0)?;
        let same_layout = template.params.len() == params.len()
            && template
                .params
                .params()
                .iter()
                .zip(params.params())
                .all(|(a, b)| a.name == b.name && a.value.shape() == b.value.shape());
        if !same_layout {
            return Err(FilterError::Config(format!(
                "parameter layout does not match a {} filter with this architecture",
                arch.kind.name()
            )));
        }
        if !params.all_finite() {
            return Err(FilterError::Numeric("parameter"));
        }
        Ok(Self {
            arch,
            params,
            nets: template.nets,
        })
    }

    pub fn arch(&self) -> &FilterArch {
        &self.arch
    }

    pub fn kind(&self) -> FilterKind {
        self.arch.kind
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.scalar_count()
    }

    /// Forces the confidence net to output `alpha` (0 or 1 exactly, or any
    /// value in between) for every input by zeroing its last layer.
    pub fn pin_confidence(&mut self, alpha: f64) -> Result<(), FilterError> {
        let Nets::Pmc { confidence, .. } = &self.nets else {
            return Err(FilterError::Contract("only the PMC filter has a confidence net".into()));
        };
        if !(0.0..=1.0).contains(&alpha) {
            return Err(FilterError::Contract(format!("alpha {alpha} outside [0, 1]")));
        }
        let last = confidence.layers.last().expect("non-empty");
        let logit = match alpha {
            a if a == 0.0 => -800.0,
            a if a == 1.0 => 800.0,
            a => (a / (1.0 - a)).ln(),
        };
        self.params.value_mut(last.weight).data_mut().fill(0.0);
        self.params.value_mut(last.bias).data_mut().fill(logit);
        Ok(())
    }

    /// Extrapolated positions fed to the motion branch, one row per input.
    pub fn motion_features(&self, inputs: &[FilterInput]) -> DenseArray {
        let data = inputs
            .iter()
            .flat_map(|i| {
                let p = i.motion_estimate(self.arch.t_max);
                [p.x, p.y]
            })
            .collect();
        DenseArray::matrix(inputs.len(), 2, data).expect("two columns")
    }

    pub fn features(inputs: &[FilterInput]) -> DenseArray {
        let data = inputs.iter().flat_map(|i| i.to_features()).collect();
        DenseArray::matrix(inputs.len(), INPUT_DIM, data).expect("feature width")
    }

    /// Builds the network on `g`. `x` is B×13, `motion` B×2.
    pub fn forward(&self, g: &mut Graph, x: Var, motion: Var) -> Result<Heads, NdError> {
        self.forward_with(g, &self.params, x, motion)
    }

    /// As [`forward`](Self::forward) but reading weights from `set`, which
    /// must share this model's layout.
    pub fn forward_with(&self, g: &mut Graph, set: &ParamSet, x: Var, motion: Var) -> Result<Heads, NdError> {
        let out = match &self.nets {
            Nets::Pmc {
                prior,
                motion: motion_net,
                confidence,
                decoder,
            } => {
                let prior_in = g.slice_cols(x, 0, 3)?;
                let p_h = prior.forward(g, set, prior_in)?;
                let m_h = motion_net.forward(g, set, motion)?;
                let alpha = confidence.forward(g, set, x)?;
                let neg = g.scale(alpha, -1.0);
                let beta = g.offset(neg, 1.0);
                let (a, b) = if self.arch.vector_gate {
                    (g.mul(p_h, alpha)?, g.mul(m_h, beta)?)
                } else {
                    (g.mul_col(p_h, alpha)?, g.mul_col(m_h, beta)?)
                };
                let embed = g.add(a, b)?;
                decoder.forward(g, set, embed)?
            }
            Nets::Fc { body } => body.forward(g, set, x)?,
        };
        let n = self.arch.components;
        let logits = g.slice_cols(out, 0, n)?;
        let means = g.slice_cols(out, n, 3 * n)?;
        let raw = g.slice_cols(out, 3 * n, 5 * n)?;
        let soft = g.softplus(raw);
        let scales = g.offset(soft, SIGMA_MIN);
        Ok(Heads { logits, means, scales })
    }

    /// Mean mixture NLL over the batch, as a graph scalar.
    pub fn nll_graph(&self, g: &mut Graph, inputs: &[FilterInput], targets: &[Vec2]) -> Result<Var, NdError> {
        self.nll_graph_with(g, &self.params, inputs, targets)
    }

    pub fn nll_graph_with(
        &self,
        g: &mut Graph,
        set: &ParamSet,
        inputs: &[FilterInput],
        targets: &[Vec2],
    ) -> Result<Var, NdError> {
        if inputs.len() != targets.len() || inputs.is_empty() {
            return Err(NdError::Contract("nll needs equally many inputs and targets, at least one"));
        }
        let x = g.input(Self::features(inputs));
        let m = g.input(self.motion_features(inputs));
        let heads = self.forward_with(g, set, x, m)?;
        mixture_nll(g, heads, targets, self.arch.components)
    }

    /// Forward pass without gradient bookkeeping beyond the tape.
    pub fn predict(&self, inputs: &[FilterInput]) -> Result<Vec<MixturePrediction>, FilterError> {
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(1024) {
            let mut g = Graph::new();
            let x = g.input(Self::features(chunk));
            let m = g.input(self.motion_features(chunk));
            let heads = self.forward(&mut g, x, m)?;
            out.extend(self.read_heads(&g, heads, chunk.len())?);
        }
        Ok(out)
    }

    pub fn predict_one(&self, input: &FilterInput) -> Result<MixturePrediction, FilterError> {
        Ok(self.predict(std::slice::from_ref(input))?.remove(0))
    }

    fn read_heads(&self, g: &Graph, heads: Heads, rows: usize) -> Result<Vec<MixturePrediction>, FilterError> {
        let (logits, means, scales) = (g.value(heads.logits), g.value(heads.means), g.value(heads.scales));
        if !logits.all_finite() {
            return Err(FilterError::Numeric("weight"));
        }
        if !means.all_finite() {
            return Err(FilterError::Numeric("mean"));
        }
        if !scales.all_finite() {
            return Err(FilterError::Numeric("scale"));
        }
        let pairs = |row: &[f64]| row.chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect::<Vec<_>>();
        Ok((0..rows)
            .map(|r| MixturePrediction {
                weights: softmax(logits.row_slice(r)),
                means: pairs(means.row_slice(r)),
                scales: pairs(scales.row_slice(r)),
            })
            .collect())
    }

    /// Writes the parameter blob to `path` and the architecture next to it
    /// as `<path>.json`.
    pub fn save(&self, path: &Path) -> Result<(), FilterError> {
        checkpoint::save(&self.params, path)?;
        std::fs::write(sidecar(path), serde_json::to_string_pretty(&self.arch)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, FilterError> {
        let arch: FilterArch = serde_json::from_str(&std::fs::read_to_string(sidecar(path))?)?;
        let params = checkpoint::load(path)?;
        Self::from_parts(arch, params)
    }
}

pub fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// `−mean log Σ_i λ_i N(y; μ_i, diag σ_i²)` on the graph.
pub fn mixture_nll(g: &mut Graph, heads: Heads, targets: &[Vec2], components: usize) -> Result<Var, NdError> {
    let b = targets.len();
    let tiled: Vec<f64> = targets
        .iter()
        .flat_map(|y| std::iter::repeat_n([y.x, y.y], components).flatten())
        .collect();
    let y = g.input(DenseArray::matrix(b, 2 * components, tiled)?);
    // Sums adjacent (x, y) columns into one column per component.
    let mut pair = vec![0.0; 2 * components * components];
    for c in 0..2 * components {
        pair[c * components + c / 2] = 1.0;
    }
    let pair = g.input(DenseArray::matrix(2 * components, components, pair)?);

    let log_w = g.log_softmax(heads.logits);
    let diff = g.sub(y, heads.means)?;
    let z = g.div(diff, heads.scales)?;
    let z2 = g.mul(z, z)?;
    let quad = g.matmul(z2, pair)?;
    let log_s = g.activation(heads.scales, Activation::Log)?;
    let log_det = g.matmul(log_s, pair)?;

    let half_quad = g.scale(quad, -0.5);
    let t = g.add(log_w, half_quad)?;
    let t = g.sub(t, log_det)?;
    let t = g.offset(t, -LN_2PI);
    let ll = g.log_sum_exp(t);
    let mean = g.mean(ll);
    Ok(g.scale(mean, -1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{nll_loss, DetectionSlot};
    use crate::ndgrad::{grad_check, grad_check_with, Coverage};
    use rand::Rng;

    fn random_input(rng: &mut impl Rng) -> FilterInput {
        let mut v = || Vec2::new(rng.random(), rng.random());
        let start = v();
        let p0 = v();
        let p1 = v();
        FilterInput {
            start,
            t_norm: 0.5,
            slots: [
                DetectionSlot {
                    position: p0,
                    velocity: Vec2::new(0.004, -0.002),
                    staleness: 0.03,
                },
                DetectionSlot {
                    position: p1,
                    velocity: Vec2::ZERO,
                    staleness: 0.1,
                },
            ],
        }
    }

    fn small(kind: FilterKind) -> FilterArch {
        FilterArch {
            kind,
            components: 3,
            t_max: 100,
            prior_hidden: vec![5, 4],
            embed: 4,
            motion_hidden: 3,
            confidence_hidden: 3,
            vector_gate: false,
            decoder_hidden: 5,
            fc_hidden: vec![6, 5],
        }
    }

    #[test]
    fn graph_nll_matches_scalar_nll() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kind in [FilterKind::Pmc, FilterKind::Fc] {
            let model = FilterModel::new(FilterArch { kind, ..FilterArch::default() }, 3).unwrap();
            let inputs: Vec<_> = (0..7).map(|_| random_input(&mut rng)).collect();
            let targets: Vec<_> = (0..7).map(|_| Vec2::new(rng.random(), rng.random())).collect();
            let preds = model.predict(&inputs).unwrap();
            let want = preds.iter().zip(&targets).map(|(p, &y)| nll_loss(p, y)).sum::<f64>() / 7.0;
            let mut g = Graph::new();
            let l = model.nll_graph(&mut g, &inputs, &targets).unwrap();
            assert!((g.value(l).data()[0] - want).abs() < 1e-10);
        }
    }

    #[test]
    fn heads_satisfy_mixture_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = FilterModel::new(FilterArch::default(), 5).unwrap();
        let inputs: Vec<_> = (0..50).map(|_| random_input(&mut rng)).collect();
        for p in model.predict(&inputs).unwrap() {
            assert_eq!(p.components(), 8);
            p.check(SIGMA_MIN).unwrap();
        }
    }

    #[test]
    fn nll_gradients_small_nets() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inputs: Vec<_> = (0..4).map(|_| random_input(&mut rng)).collect();
        let targets: Vec<_> = (0..4).map(|_| Vec2::new(rng.random(), rng.random())).collect();
        for kind in [FilterKind::Pmc, FilterKind::Fc] {
            let mut model = FilterModel::new(small(kind), 9).unwrap();
            let probe = model.clone();
            let err = grad_check(model.params_mut(), 1e-6, |g, set| probe.nll_graph_with(g, set, &inputs, &targets))
            .unwrap();
            assert!(err < 1e-4, "{kind:?}: {err}");
        }
    }

    #[test]
    fn vector_gate_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let inputs: Vec<_> = (0..3).map(|_| random_input(&mut rng)).collect();
        let targets: Vec<_> = (0..3).map(|_| Vec2::new(rng.random(), rng.random())).collect();
        let arch = FilterArch {
            vector_gate: true,
            ..small(FilterKind::Pmc)
        };
        let mut model = FilterModel::new(arch, 2).unwrap();
        let probe = model.clone();
        let err = grad_check_with(model.params_mut(), 1e-5, Coverage::All, |g, set| {
            probe.nll_graph_with(g, set, &inputs, &targets)
        })
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn pinned_alpha_one_ignores_detections() {
        let mut model = FilterModel::new(FilterArch::default(), 8).unwrap();
        model.pin_confidence(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_input(&mut rng);
        let mut b = random_input(&mut rng);
        b.start = a.start;
        b.t_norm = a.t_norm;
        assert_eq!(model.predict_one(&a).unwrap(), model.predict_one(&b).unwrap());
    }

    #[test]
    fn pinned_alpha_zero_depends_only_on_motion() {
        let mut model = FilterModel::new(FilterArch::default(), 8).unwrap();
        model.pin_confidence(0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_input(&mut rng);
        let mut b = a;
        b.start = Vec2::new(0.9, 0.05);
        b.t_norm = 0.9;
        b.slots[1].position = Vec2::new(0.1, 0.1);
        assert_eq!(model.predict_one(&a).unwrap(), model.predict_one(&b).unwrap());
        let mut c = a;
        c.slots[0].position = Vec2::new(0.01, 0.99);
        assert_ne!(model.predict_one(&a).unwrap(), model.predict_one(&c).unwrap());
    }

    #[test]
    fn fc_is_smaller_than_pmc() {
        let pmc = FilterModel::new(FilterArch::pmc(300), 0).unwrap();
        let fc = FilterModel::new(FilterArch::fc(300), 0).unwrap();
        assert!(fc.param_count() < pmc.param_count());
        assert!(fc.clone().pin_confidence(1.0).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pmc.ndg");
        let model = FilterModel::new(FilterArch::default(), 12).unwrap();
        model.save(&path).unwrap();
        let back = FilterModel::load(&path).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.params().checksum(), model.params().checksum());
        let wrong = FilterModel::from_parts(FilterArch::fc(300), model.params().clone());
        assert!(wrong.is_err());
    }

    #[test]
    fn non_finite_head_is_named() {
        let mut model = FilterModel::new(small(FilterKind::Fc), 1).unwrap();
        let last = match &model.nets {
            Nets::Fc { body } => body.layers.last().unwrap().bias,
            _ => unreachable!(),
        };
        model.params_mut().value_mut(last).data_mut()[4] = f64::NAN;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = model.predict_one(&random_input(&mut rng)).unwrap_err();
        assert!(matches!(err, FilterError::Numeric("mean")), "{err}");
    }
}
