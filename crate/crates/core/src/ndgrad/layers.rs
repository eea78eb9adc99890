use rand::Rng;

use super::{Activation, DenseArray, Graph, NdError, ParamSet, Var};

/// Affine layer `x·W + b` with `W: in × out` and `b: 1 × out`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub weight: usize,
    pub bias: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new(set: &mut ParamSet, name: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let weight = set.add_glorot(format!("{name}.w"), fan_in, fan_out, rng);
        let bias = set.add(format!("{name}.b"), DenseArray::zeros(&[1, fan_out]));
        Self {
            weight,
            bias,
            fan_in,
            fan_out,
        }
    }

    pub fn from_set(set: &ParamSet, name: &str) -> Result<Self, NdError> {
        let find = |suffix: &str| {
            let full = format!("{name}.{suffix}");
            set.index_of(&full).ok_or(NdError::MissingParam(full))
        };
        let (weight, bias) = (find("w")?, find("b")?);
        let w = set.value(weight);
        let b = set.value(bias);
        if w.shape().len() != 2 || b.len() != w.cols() {
            return Err(NdError::Shape {
                op: "linear from_set",
                lhs: w.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        Ok(Self {
            weight,
            bias,
            fan_in: w.rows(),
            fan_out: w.cols(),
        })
    }

    pub fn forward(&self, g: &mut Graph, set: &ParamSet, x: Var) -> Result<Var, NdError> {
        let w = g.param(set, self.weight);
        let b = g.param(set, self.bias);
        let xw = g.matmul(x, w)?;
        g.add_row(xw, b)
    }
}

/// Stack of [`Linear`] layers with one activation between layers and an
/// optional one on the output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub hidden: Activation,
    pub output: Option<Activation>,
}

impl Mlp {
    /// `sizes` lists every width including input and output, so
    /// `[13, 64, 64, 40]` is three layers.
    pub fn new(
        set: &mut ParamSet,
        name: &str,
        sizes: &[usize],
        hidden: Activation,
        output: Option<Activation>,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output widths");
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(set, &format!("{name}.l{i}"), w[0], w[1], rng))
            .collect();
        Self { layers, hidden, output }
    }

    /// Rebuilds the layer map of a network previously created under `name`.
    pub fn from_set(set: &ParamSet, name: &str, hidden: Activation, output: Option<Activation>) -> Result<Self, NdError> {
        let mut layers = Vec::new();
        while set.index_of(&format!("{name}.l{}.w", layers.len())).is_some() {
            layers.push(Linear::from_set(set, &format!("{name}.l{}", layers.len()))?);
        }
        if layers.is_empty() {
            return Err(NdError::MissingParam(format!("{name}.l0.w")));
        }
        for pair in layers.windows(2) {
            if pair[0].fan_out != pair[1].fan_in {
                return Err(NdError::Shape {
                    op: "mlp from_set",
                    lhs: vec![pair[0].fan_out],
                    rhs: vec![pair[1].fan_in],
                });
            }
        }
        Ok(Self { layers, hidden, output })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.layers.iter().map(|l| l.fan_out));
        w
    }

    pub fn forward(&self, g: &mut Graph, set: &ParamSet, x: Var) -> Result<Var, NdError> {
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, set, h)?;
            let act = if i == last { self.output } else { Some(self.hidden) };
            if let Some(a) = act {
                h = g.activation(h, a)?;
            }
        }
        Ok(h)
    }
}
