use ndarray::Array2;

use crate::autograd::{Gradients, Matrix, ParamStore};

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
    steps: Vec<u64>,
}

impl AdamW {
    pub fn new(params: &ParamStore, beta1: f64, beta2: f64, epsilon: f64, weight_decay: f64) -> Self {
        let zeros: Vec<Matrix> = params.ids().map(|id| Array2::zeros(params.get(id).dim())).collect();
        Self {
            beta1,
            beta2,
            epsilon,
            weight_decay,
            first: zeros.clone(),
            second: zeros,
            steps: vec![0; params.len()],
        }
    }

    /// Updates every parameter that received a gradient; untouched
    /// parameters keep their value and moments.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients, lr: f64) {
        for id in grads.touched() {
            let i = id.0;
            let g = grads.dense(id, params.get(id).dim());
            self.steps[i] += 1;
            let t = self.steps[i] as i32;
            let (b1, b2) = (self.beta1, self.beta2);
            self.first[i].zip_mut_with(&g, |m, g| *m = b1 * *m + (1.0 - b1) * g);
            self.second[i].zip_mut_with(&g, |v, g| *v = b2 * *v + (1.0 - b2) * g * g);
            let c1 = 1.0 - b1.powi(t);
            let c2 = 1.0 - b2.powi(t);
            let (eps, wd) = (self.epsilon, self.weight_decay);
            let p = params.get_mut(id);
            ndarray::Zip::from(p).and(&self.first[i]).and(&self.second[i]).for_each(|p, m, v| {
                let update = (m / c1) / ((v / c2).sqrt() + eps);
                *p -= lr * (update + wd * *p);
            });
        }
    }
}

/// Linear warm-up to the base rate, then linear decay to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSchedule {
    pub base: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

impl LinearSchedule {
    pub fn new(base: f64, warmup_fraction: f64, total_steps: usize) -> Self {
        Self {
            base,
            warmup_steps: (warmup_fraction * total_steps as f64).ceil() as usize,
            total_steps,
        }
    }

    /// Rate for the zero-based optimizer step `step`.
    pub fn rate(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.base * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let remaining = self.total_steps.saturating_sub(step) as f64;
        let span = self.total_steps.saturating_sub(self.warmup_steps).max(1) as f64;
        self.base * (remaining / span).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tape;

    #[test]
    fn schedule_shape() {
        let s = LinearSchedule::new(1.0, 0.1, 100);
        assert_eq!(s.warmup_steps, 10);
        assert!((s.rate(0) - 0.1).abs() < 1e-12);
        assert!((s.rate(9) - 1.0).abs() < 1e-12);
        assert!((s.rate(10) - 1.0).abs() < 1e-12);
        assert!((s.rate(55) - 0.5).abs() < 1e-12);
        assert!(s.rate(99) > 0.0);
        assert_eq!(s.rate(100), 0.0);
        let flat = LinearSchedule::new(2.0, 0.0, 4);
        assert_eq!(flat.rate(0), 2.0);
    }

    #[test]
    fn first_step_moves_by_the_learning_rate() {
        let mut store = ParamStore::new();
        let id = store.add("w", ndarray::arr2(&[[1.0, -2.0]]));
        let mut opt = AdamW::new(&store, 0.9, 0.999, 1e-8, 0.0);
        let grads = {
            let mut tape = Tape::new(&store);
            let w = tape.param(id);
            let root = tape.sum(w);
            tape.backward(root)
        };
        opt.step(&mut store, &grads, 0.1);
        let w = store.get(id);
        assert!((w[[0, 0]] - 0.9).abs() < 1e-6);
        assert!((w[[0, 1]] + 2.1).abs() < 1e-6);
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut store = ParamStore::new();
        let id = store.add("w", ndarray::arr2(&[[3.0, -4.0]]));
        let mut opt = AdamW::new(&store, 0.9, 0.999, 1e-8, 1e-8);
        for _ in 0..500 {
            let grads = {
                let mut tape = Tape::new(&store);
                let w = tape.param(id);
                let sq = tape.mul(w, w);
                let root = tape.sum(sq);
                tape.backward(root)
            };
            opt.step(&mut store, &grads, 0.05);
        }
        assert!(store.get(id).iter().all(|v| v.abs() < 1e-2));
    }
}
