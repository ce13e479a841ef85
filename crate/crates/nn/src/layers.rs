//! Dense layers, multilayer perceptrons, single-head scaled dot-product
//! attention and a softmax categorical head.

use rand::Rng;

use crate::graph::{Graph, Var};
use crate::params::{ParamId, ParamSet};
use crate::tensor::Tensor;
use crate::{NnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, g: &mut Graph, x: Var) -> Var {
        match self {
            Activation::Linear => x,
            Activation::Tanh => g.tanh(x),
            Activation::Relu => g.relu(x),
        }
    }
}

fn check_width(op: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(NnError::ShapeMismatch {
            op,
            expected: format!("width {expected}"),
            got: format!("width {got}"),
        })
    }
}

/// Affine map followed by an activation: `act(x W + b)`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub output: usize,
    pub activation: Activation,
}

impl Dense {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        input: usize,
        output: usize,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        let weight = params.add_uniform(format!("{name}.w"), input, output, input, rng);
        let bias = params.add_uniform(format!("{name}.b"), 1, output, input, rng);
        Self {
            weight,
            bias,
            input,
            output,
            activation,
        }
    }

    pub fn forward(&self, g: &mut Graph, params: &ParamSet, x: Var) -> Result<Var> {
        check_width("dense_forward", self.input, g.value(x).cols())?;
        let w = g.param(params, self.weight);
        let b = g.param(params, self.bias);
        let z = g.matmul(x, w);
        let z = g.add_row(z, b);
        Ok(self.activation.apply(g, z))
    }

    pub fn param_ids(&self) -> [ParamId; 2] {
        [self.weight, self.bias]
    }
}

/// Stack of dense layers; hidden layers share one activation, the last
/// layer uses `output_activation`.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        widths: &[usize],
        hidden: Activation,
        output_activation: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(widths.len() >= 2, "an MLP needs input and output widths");
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { output_activation } else { hidden };
                Dense::new(params, &format!("{name}.{i}"), widths[i], widths[i + 1], act, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().unwrap().output
    }

    pub fn forward(&self, g: &mut Graph, params: &ParamSet, x: Var) -> Result<Var> {
        self.layers
            .iter()
            .try_fold(x, |h, layer| layer.forward(g, params, h))
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(Dense::param_ids).collect()
    }
}

/// Single-head scaled dot-product attention over a buffer of messages.
///
/// Keys and values are projected from buffer entries, the query from the
/// receiver's own message; the softmax-weighted value sum passes through an
/// output projection. An empty buffer yields a zero vector.
#[derive(Debug, Clone)]
pub struct AttentionBlock {
    pub query: Dense,
    pub key: Dense,
    pub value: Dense,
    pub output: Dense,
}

impl AttentionBlock {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        message_width: usize,
        key_width: usize,
        value_width: usize,
        output_width: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            query: Dense::new(params, &format!("{name}.q"), message_width, key_width, Activation::Linear, rng),
            key: Dense::new(params, &format!("{name}.k"), message_width, key_width, Activation::Linear, rng),
            value: Dense::new(params, &format!("{name}.v"), message_width, value_width, Activation::Linear, rng),
            output: Dense::new(params, &format!("{name}.o"), value_width, output_width, Activation::Linear, rng),
        }
    }

    pub fn output_width(&self) -> usize {
        self.output.output
    }

    /// Batched aggregation.
    ///
    /// `own` is `R x w`; every entry of `slots` is `R x w` and `mask` is
    /// `R x slots.len()` with 1.0 where the slot holds a message for that row
    /// and 0.0 where it is empty. Rows without any message produce zeros.
    pub fn aggregate(
        &self,
        g: &mut Graph,
        params: &ParamSet,
        own: Var,
        slots: &[Var],
        mask: &Tensor,
    ) -> Result<Var> {
        let rows = g.value(own).rows();
        check_width("attention_aggregate", self.query.input, g.value(own).cols())?;
        if slots.is_empty() {
            return Ok(g.input(Tensor::zeros(rows, self.output_width())));
        }
        if mask.shape() != (rows, slots.len()) {
            return Err(NnError::ShapeMismatch {
                op: "attention_aggregate mask",
                expected: format!("{rows}x{}", slots.len()),
                got: format!("{}x{}", mask.rows(), mask.cols()),
            });
        }
        for s in slots {
            check_width("attention_aggregate", self.key.input, g.value(*s).cols())?;
        }
        let q = self.query.forward(g, params, own)?;
        let scale = 1.0 / (self.key.output as f64).sqrt();
        let mut scores = Vec::with_capacity(slots.len());
        let mut values = Vec::with_capacity(slots.len());
        for s in slots {
            let k = self.key.forward(g, params, *s)?;
            let v = self.value.forward(g, params, *s)?;
            let dot = g.row_dot(q, k);
            scores.push(g.scale(dot, scale));
            values.push(v);
        }
        let scores = g.concat_cols(&scores);
        // Empty slots get a large negative score, which underflows to an
        // exact zero weight after the softmax.
        let penalty = mask.map(|m| if m > 0.0 { 0.0 } else { -1e300 });
        let scores = g.add_const(scores, &penalty);
        let weights = g.softmax_rows(scores);
        let mixed = g.weighted_slots(&values, weights);
        let out = self.output.forward(g, params, mixed)?;
        let any: Vec<f64> = (0..rows)
            .map(|r| {
                if mask.row(r).iter().any(|&m| m > 0.0) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let any = g.input(Tensor::from_vec(rows, 1, any));
        Ok(g.mul_col(out, any))
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        [&self.query, &self.key, &self.value, &self.output]
            .iter()
            .flat_map(|d| d.param_ids())
            .collect()
    }
}

/// Linear logits followed by a softmax over a discrete action set.
#[derive(Debug, Clone)]
pub struct CategoricalHead {
    pub logits: Dense,
}

impl CategoricalHead {
    pub fn new(params: &mut ParamSet, name: &str, input: usize, actions: usize, rng: &mut impl Rng) -> Self {
        Self {
            logits: Dense::new(params, name, input, actions, Activation::Linear, rng),
        }
    }

    pub fn actions(&self) -> usize {
        self.logits.output
    }

    pub fn logits(&self, g: &mut Graph, params: &ParamSet, features: Var) -> Result<Var> {
        self.logits.forward(g, params, features)
    }

    /// Action log-probabilities, `R x actions`.
    pub fn log_probs(&self, g: &mut Graph, params: &ParamSet, features: Var) -> Result<Var> {
        let z = self.logits(g, params, features)?;
        Ok(g.log_softmax_rows(z))
    }

    /// Action probabilities, `R x actions`; strictly positive for finite logits.
    pub fn probs(&self, g: &mut Graph, params: &ParamSet, features: Var) -> Result<Var> {
        let z = self.logits(g, params, features)?;
        Ok(g.softmax_rows(z))
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.logits.param_ids().to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn identity_dense_is_identity() {
        let mut ps = ParamSet::new();
        let d = Dense::new(&mut ps, "d", 3, 3, Activation::Linear, &mut rng());
        let mut eye = Tensor::zeros(3, 3);
        (0..3).for_each(|i| eye.set(i, i, 1.0));
        *ps.get_mut(d.weight) = eye;
        *ps.get_mut(d.bias) = Tensor::zeros(1, 3);
        let mut g = Graph::new();
        let x = g.input(Tensor::row_vector(&[0.5, -2.0, 7.0]));
        let y = d.forward(&mut g, &ps, x).unwrap();
        assert_eq!(g.value(y).data(), &[0.5, -2.0, 7.0]);
    }

    #[test]
    fn zero_weight_dense_is_activation_of_bias() {
        let mut ps = ParamSet::new();
        let d = Dense::new(&mut ps, "d", 2, 2, Activation::Tanh, &mut rng());
        *ps.get_mut(d.weight) = Tensor::zeros(2, 2);
        *ps.get_mut(d.bias) = Tensor::row_vector(&[0.3, -1.0]);
        let mut g = Graph::new();
        let x = g.input(Tensor::row_vector(&[4.0, 4.0]));
        let y = d.forward(&mut g, &ps, x).unwrap();
        assert_eq!(g.value(y).data(), &[0.3f64.tanh(), (-1.0f64).tanh()]);
    }

    #[test]
    fn dense_rejects_wrong_width() {
        let mut ps = ParamSet::new();
        let d = Dense::new(&mut ps, "d", 3, 2, Activation::Linear, &mut rng());
        let mut g = Graph::new();
        let x = g.input(Tensor::row_vector(&[1.0, 2.0]));
        assert!(matches!(d.forward(&mut g, &ps, x), Err(NnError::ShapeMismatch { .. })));
    }

    fn attention_fixture() -> (ParamSet, AttentionBlock) {
        let mut ps = ParamSet::new();
        let att = AttentionBlock::new(&mut ps, "att", 4, 6, 5, 4, &mut rng());
        (ps, att)
    }

    #[test]
    fn empty_buffer_aggregates_to_zero() {
        let (ps, att) = attention_fixture();
        let mut g = Graph::new();
        let own = g.input(Tensor::row_vector(&[0.1, 0.2, 0.3, 0.4]));
        let out = att.aggregate(&mut g, &ps, own, &[], &Tensor::zeros(1, 0)).unwrap();
        assert_eq!(g.value(out).data(), &[0.0; 4]);

        // Fully masked slots behave the same.
        let slot = g.input(Tensor::row_vector(&[1.0, 1.0, 1.0, 1.0]));
        let out = att.aggregate(&mut g, &ps, own, &[slot], &Tensor::zeros(1, 1)).unwrap();
        assert_eq!(g.value(out).data(), &[0.0; 4]);
    }

    #[test]
    fn single_entry_is_projected_value() {
        let (ps, att) = attention_fixture();
        let entry = Tensor::row_vector(&[0.9, -0.3, 0.2, 0.5]);
        let mut g = Graph::new();
        let own = g.input(Tensor::row_vector(&[0.1, 0.2, 0.3, 0.4]));
        let slot = g.input(entry.clone());
        let out = att.aggregate(&mut g, &ps, own, &[slot], &Tensor::filled(1, 1, 1.0)).unwrap();

        let mut h = Graph::new();
        let x = h.input(entry);
        let v = att.value.forward(&mut h, &ps, x).unwrap();
        let expected = att.output.forward(&mut h, &ps, v).unwrap();
        for (a, b) in g.value(out).data().iter().zip(h.value(expected).data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn categorical_head_zero_logits_is_uniform() {
        let mut ps = ParamSet::new();
        let head = CategoricalHead::new(&mut ps, "head", 3, 4, &mut rng());
        *ps.get_mut(head.logits.weight) = Tensor::zeros(3, 4);
        *ps.get_mut(head.logits.bias) = Tensor::zeros(1, 4);
        let mut g = Graph::new();
        let x = g.input(Tensor::row_vector(&[1.0, 2.0, 3.0]));
        let p = head.probs(&mut g, &ps, x).unwrap();
        assert_eq!(g.value(p).data(), &[0.25; 4]);
    }

    #[test]
    fn categorical_head_saturates_towards_dominant_logit() {
        let mut ps = ParamSet::new();
        let head = CategoricalHead::new(&mut ps, "head", 1, 4, &mut rng());
        *ps.get_mut(head.logits.weight) = Tensor::zeros(1, 4);
        for t in [5.0, 20.0, 60.0] {
            *ps.get_mut(head.logits.bias) = Tensor::row_vector(&[t, 0.0, 0.0, 0.0]);
            let mut g = Graph::new();
            let x = g.input(Tensor::row_vector(&[0.0]));
            let p = head.probs(&mut g, &ps, x).unwrap();
            let p0 = g.value(p).get(0, 0);
            assert!(p0 >= 1.0 - 4.0 * (-t).exp());
            assert!(g.value(p).data().iter().all(|&v| v > 0.0));
        }
    }
}
