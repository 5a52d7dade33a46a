use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Learning-rate group of a parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamGroup {
    Policy,
    Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    pub group: ParamGroup,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    pub entries: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix, group: ParamGroup) -> ParamId {
        self.entries.push(Param {
            name: name.into(),
            value,
            group,
        });
        ParamId(self.entries.len() - 1)
    }

    /// Gaussian init scaled by `gain * sqrt(1 / fan_in)`.
    pub fn add_init<R: Rng>(
        &mut self,
        rng: &mut R,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        gain: f64,
        group: ParamGroup,
    ) -> ParamId {
        let std = gain / (rows.max(1) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        self.add(name, Matrix::from_vec(rows, cols, data), group)
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.entries[id.0].value
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|p| p.value.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|p| p.value.is_finite())
    }

    /// Copies values from `other`, which must have the identical layout.
    pub fn copy_from(&mut self, other: &ParamStore) {
        assert_eq!(self.entries.len(), other.entries.len());
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            a.value.data.copy_from_slice(&b.value.data);
        }
    }

    /// Shapes of every parameter, for checkpoint compatibility checks.
    pub fn layout(&self) -> Vec<(String, usize, usize)> {
        self.entries
            .iter()
            .map(|p| (p.name.clone(), p.value.rows, p.value.cols))
            .collect()
    }
}

/// Gradients, one matrix per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub grads: Vec<Matrix>,
}

impl Gradients {
    pub fn zeros_like(params: &ParamStore) -> Self {
        Self {
            grads: params
                .entries
                .iter()
                .map(|p| Matrix::zeros(p.value.rows, p.value.cols))
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.grads[id.0]
    }

    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.data.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales so the global norm is at most `max_norm`.
    pub fn clip_norm(&mut self, max_norm: f64) {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            let s = max_norm / norm;
            for g in &mut self.grads {
                for v in &mut g.data {
                    *v *= s;
                }
            }
        }
    }
}

/// Adam with one learning rate per [`ParamGroup`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr_policy: f64,
    pub lr_value: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(params: &ParamStore, lr_policy: f64, lr_value: f64) -> Self {
        let zeros: Vec<Matrix> = params
            .entries
            .iter()
            .map(|p| Matrix::zeros(p.value.rows, p.value.cols))
            .collect();
        Self {
            lr_policy,
            lr_value,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, p) in params.entries.iter_mut().enumerate() {
            let lr = match p.group {
                ParamGroup::Policy => self.lr_policy,
                ParamGroup::Value => self.lr_value,
            };
            let g = &grads.grads[i];
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for k in 0..g.data.len() {
                let gk = g.data[k];
                m.data[k] = self.beta1 * m.data[k] + (1.0 - self.beta1) * gk;
                v.data[k] = self.beta2 * v.data[k] + (1.0 - self.beta2) * gk * gk;
                if lr != 0.0 {
                    let mh = m.data[k] / bc1;
                    let vh = v.data[k] / bc2;
                    p.value.data[k] -= lr * mh / (vh.sqrt() + self.eps);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_minimises_a_quadratic() {
        let mut ps = ParamStore::new();
        let id = ps.add("x", Matrix::scalar(3.0), ParamGroup::Policy);
        let mut opt = Adam::new(&ps, 0.1, 0.1);
        for _ in 0..500 {
            let x = ps.get(id).data[0];
            let grads = Gradients {
                grads: vec![Matrix::scalar(2.0 * x)],
            };
            opt.step(&mut ps, &grads);
        }
        assert!(ps.get(id).data[0].abs() < 1e-2);
    }

    #[test]
    fn zero_learning_rate_leaves_params_bit_identical() {
        let mut ps = ParamStore::new();
        ps.add("x", Matrix::from_vec(1, 3, vec![0.1, -2.5, 7.0]), ParamGroup::Policy);
        ps.add("y", Matrix::scalar(1.0 / 3.0), ParamGroup::Value);
        let before = ps.clone();
        let mut opt = Adam::new(&ps, 0.0, 0.0);
        let grads = Gradients {
            grads: vec![Matrix::from_vec(1, 3, vec![1.0, 2.0, 3.0]), Matrix::scalar(-4.0)],
        };
        opt.step(&mut ps, &grads);
        assert_eq!(ps, before);
    }

    #[test]
    fn clip_norm_caps_global_norm() {
        let mut g = Gradients {
            grads: vec![Matrix::from_vec(1, 2, vec![3.0, 4.0])],
        };
        g.clip_norm(1.0);
        assert!((g.global_norm() - 1.0).abs() < 1e-12);
    }
}
