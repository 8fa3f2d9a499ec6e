use super::params::{ParamStore, Parameter};
use super::tensor::Tensor;

pub const ADAGRAD_EPSILON: f64 = 1e-8;

/// Training hyper-parameters. Defaults are the published settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub char_embedding_size: usize,
    pub rnn_state_size: usize,
    pub initial_lr_main: f64,
    pub decay_rate: f64,
    pub grad_clip_norm: f64,
    pub initial_lr_encdec: f64,
    pub dropout_rate: f64,
    pub batch_size: usize,
    pub main_epochs: usize,
    pub encdec_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            char_embedding_size: 50,
            rnn_state_size: 200,
            initial_lr_main: 0.1,
            decay_rate: 0.05,
            grad_clip_norm: 5.0,
            initial_lr_encdec: 0.3,
            dropout_rate: 0.5,
            batch_size: 10,
            main_epochs: 30,
            encdec_epochs: 50,
            seed: 1,
        }
    }
}

impl TrainConfig {
    /// Checks that every rate lies in its natural range.
    pub fn validate(&self) -> Result<(), String> {
        let checks = [
            (
                self.char_embedding_size > 0,
                "char_embedding_size must be positive",
            ),
            (self.rnn_state_size > 0, "rnn_state_size must be positive"),
            (
                self.initial_lr_main > 0.0,
                "initial_lr_main must be positive",
            ),
            (
                self.initial_lr_encdec > 0.0,
                "initial_lr_encdec must be positive",
            ),
            (self.decay_rate >= 0.0, "decay_rate must be non-negative"),
            (self.grad_clip_norm > 0.0, "grad_clip_norm must be positive"),
            (
                (0.0..1.0).contains(&self.dropout_rate),
                "dropout_rate must be in [0, 1)",
            ),
            (self.batch_size > 0, "batch_size must be positive"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(msg.to_string()),
            None => Ok(()),
        }
    }
}

/// Per-epoch learning rate `eta0 / (1 + decay * epoch)`, epochs counted from 0.
pub fn lr_schedule(initial: f64, decay: f64, epoch: usize) -> f64 {
    initial / (1.0 + decay * epoch as f64)
}

/// One Adagrad update; the gradient is consumed and reset to zero.
pub fn adagrad_step(p: &mut Parameter, lr: f64) {
    let values = p.value.data_mut();
    let grads = p.grad.data_mut();
    let acc = p.accumulator.data_mut();
    for ((w, g), a) in values.iter_mut().zip(grads.iter_mut()).zip(acc.iter_mut()) {
        if *g != 0.0 {
            *a += *g * *g;
            *w -= lr * *g / (a.sqrt() + ADAGRAD_EPSILON);
            *g = 0.0;
        }
    }
}

pub fn adagrad_update_all(store: &mut ParamStore, lr: f64) {
    for p in store.iter_mut() {
        adagrad_step(p, lr);
    }
}

fn global_norm<'a>(grads: impl Iterator<Item = &'a Tensor>) -> f64 {
    grads.map(Tensor::squared_norm).sum::<f64>().sqrt()
}

/// Rescales all gradients when their joint L2 norm exceeds `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = global_norm(grads.iter());
    if norm > max_norm {
        let factor = max_norm / norm;
        grads.iter_mut().for_each(|g| g.scale(factor));
    }
    norm
}

/// [`clip_global_norm`] over the gradient buffers of a store.
pub fn clip_store_grads(store: &mut ParamStore, max_norm: f64) -> f64 {
    let norm = global_norm(store.iter().map(|p| &p.grad));
    if norm > max_norm {
        let factor = max_norm / norm;
        store.iter_mut().for_each(|p| p.grad.scale(factor));
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(w: f64, g: f64) -> Parameter {
        let mut p = Parameter::new("w", Tensor::scalar(w));
        p.grad = Tensor::scalar(g);
        p
    }

    #[test]
    fn adagrad_single_and_double_step() {
        let mut p = scalar_param(0.0, 1.0);
        adagrad_step(&mut p, 0.1);
        assert_eq!(p.accumulator.item(), 1.0);
        assert!((p.value.item() - (-0.1 / (1.0 + 1e-8))).abs() < 1e-15);
        assert_eq!(p.grad.item(), 0.0);

        p.grad = Tensor::scalar(1.0);
        adagrad_step(&mut p, 0.1);
        let expected = -0.1 - 0.1 / 2f64.sqrt();
        assert!((p.value.item() - expected).abs() < 1e-7);
        assert!((p.value.item() - -0.17071).abs() < 1e-5);
    }

    #[test]
    fn adagrad_zero_gradient_is_a_no_op() {
        let mut p = scalar_param(0.7, 0.0);
        adagrad_step(&mut p, 0.1);
        assert_eq!(p.value.item(), 0.7);
        assert_eq!(p.accumulator.item(), 0.0);
    }

    #[test]
    fn schedule() {
        assert_eq!(lr_schedule(0.1, 0.05, 0), 0.1);
        assert!((lr_schedule(0.1, 0.05, 1) - 0.095238).abs() < 1e-6);
        assert_eq!(lr_schedule(0.1, 0.0, 17), 0.1);
    }

    #[test]
    fn clipping() {
        let mut g = vec![Tensor::row(vec![6.0, 8.0])];
        assert_eq!(clip_global_norm(&mut g, 5.0), 10.0);
        assert_eq!(g[0].data(), &[3.0, 4.0]);

        let mut g = vec![Tensor::row(vec![0.6, 0.8])];
        clip_global_norm(&mut g, 5.0);
        assert_eq!(g[0].data(), &[0.6, 0.8]);

        let mut g = vec![Tensor::zeros(&[2, 2])];
        clip_global_norm(&mut g, 5.0);
        assert_eq!(g[0], Tensor::zeros(&[2, 2]));
    }

    #[test]
    fn default_config() {
        let c = TrainConfig::default();
        assert_eq!(c.char_embedding_size, 50);
        assert_eq!(c.rnn_state_size, 200);
        assert_eq!(c.batch_size, 10);
        assert!(c.validate().is_ok());
        let bad = TrainConfig {
            dropout_rate: 1.0,
            ..c
        };
        assert!(bad.validate().is_err());
    }
}
