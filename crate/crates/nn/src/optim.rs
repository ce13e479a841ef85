use crate::params::{ParamId, ParamSet};
use crate::tensor::Tensor;

/// Adam over a fixed subset of a [`ParamSet`].
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip applied before each step; `None` disables it.
    pub max_grad_norm: Option<f64>,
    ids: Vec<ParamId>,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl Adam {
    pub fn new(params: &ParamSet, ids: Vec<ParamId>, lr: f64) -> Self {
        let zeros = |id: &ParamId| {
            let t = params.get(*id);
            Tensor::zeros(t.rows(), t.cols())
        };
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_grad_norm: None,
            m: ids.iter().map(zeros).collect(),
            v: ids.iter().map(zeros).collect(),
            ids,
            t: 0,
        }
    }

    pub fn ids(&self) -> &[ParamId] {
        &self.ids
    }

    /// Applies one descent step. `grads` is indexed by [`ParamId::index`] and
    /// must cover every id this optimizer owns; other entries are ignored.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Tensor]) {
        self.t += 1;
        let clip = self.max_grad_norm.map_or(1.0, |max| {
            let norm = self
                .ids
                .iter()
                .flat_map(|id| grads[id.index()].data())
                .map(|g| g * g)
                .sum::<f64>()
                .sqrt();
            if norm > max {
                max / norm
            } else {
                1.0
            }
        });
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (k, id) in self.ids.iter().enumerate() {
            let g = &grads[id.index()];
            let p = params.get_mut(*id);
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..g.len() {
                let gi = g.data()[i] * clip;
                let mi = self.beta1 * m.data()[i] + (1.0 - self.beta1) * gi;
                let vi = self.beta2 * v.data()[i] + (1.0 - self.beta2) * gi * gi;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let update = self.lr * (mi / bc1) / ((vi / bc2).sqrt() + self.eps);
                p.data_mut()[i] -= update;
            }
        }
    }
}
