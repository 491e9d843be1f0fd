use crate::params::ParamStore;

/// Adadelta with an outer learning rate:
///
/// ```text
/// E[g^2]  <- rho E[g^2]  + (1 - rho) g^2
/// dx       = -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
/// E[dx^2] <- rho E[dx^2] + (1 - rho) dx^2
/// x       <- x + lr dx
/// ```
pub fn adadelta_update(
    x: &mut [f64],
    g: &[f64],
    sq_grad: &mut [f64],
    sq_delta: &mut [f64],
    lr: f64,
    rho: f64,
    eps: f64,
) {
    debug_assert!(x.len() == g.len() && g.len() == sq_grad.len() && g.len() == sq_delta.len());
    for i in 0..x.len() {
        sq_grad[i] = rho * sq_grad[i] + (1.0 - rho) * g[i] * g[i];
        let dx = -((sq_delta[i] + eps).sqrt() / (sq_grad[i] + eps).sqrt()) * g[i];
        sq_delta[i] = rho * sq_delta[i] + (1.0 - rho) * dx * dx;
        x[i] += lr * dx;
    }
}

/// Running averages for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Accumulators {
    pub sq_grad: Vec<f64>,
    pub sq_delta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adadelta {
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
    /// One entry per parameter in store order; `None` for frozen parameters.
    pub state: Vec<Option<Accumulators>>,
}

impl Adadelta {
    pub fn new(store: &ParamStore, lr: f64, rho: f64, eps: f64) -> Self {
        let state = store
            .iter()
            .map(|p| {
                p.trainable.then(|| Accumulators {
                    sq_grad: vec![0.0; p.tensor.numel()],
                    sq_delta: vec![0.0; p.tensor.numel()],
                })
            })
            .collect();
        Self { lr, rho, eps, state }
    }

    /// Applies one update to every trainable parameter that has a gradient.
    pub fn step(&mut self, store: &mut ParamStore) {
        let (lr, rho, eps) = (self.lr, self.rho, self.eps);
        for (param, slot) in store.iter_mut().zip(&mut self.state) {
            let Some(acc) = slot else { continue };
            let Some(grad) = param.tensor.grad().map(<[f64]>::to_vec) else {
                continue;
            };
            adadelta_update(
                param.tensor.data_mut(),
                &grad,
                &mut acc.sq_grad,
                &mut acc.sq_delta,
                lr,
                rho,
                eps,
            );
        }
    }
}

/// Global L2 norm over all trainable gradients.
pub fn grad_norm(store: &ParamStore) -> f64 {
    store
        .iter()
        .filter(|p| p.trainable)
        .filter_map(|p| p.tensor.grad())
        .flat_map(|g| g.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Rescales every gradient when their global norm exceeds `max_norm` and
/// returns the factor applied (1 when untouched).
pub fn clip_gradients(store: &mut ParamStore, max_norm: f64) -> f64 {
    let norm = grad_norm(store);
    if norm <= max_norm || norm == 0.0 {
        return 1.0;
    }
    let factor = max_norm / norm;
    for p in store.iter_mut().filter(|p| p.trainable) {
        if let Some(g) = p.tensor.grad_mut() {
            g.iter_mut().for_each(|v| *v *= factor);
        }
    }
    factor
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn zero_gradient_gives_zero_update() {
        let mut x = [1.5];
        let (mut eg, mut ed) = ([0.4], [0.2]);
        adadelta_update(&mut x, &[0.0], &mut eg, &mut ed, 0.1, 0.95, 1e-6);
        assert_eq!(x, [1.5]);
        assert!((eg[0] - 0.38).abs() < 1e-15);
        assert!((ed[0] - 0.19).abs() < 1e-15);
    }

    #[test]
    fn first_step_matches_closed_form() {
        let (rho, eps, g) = (0.95_f64, 1e-6_f64, 1.0_f64);
        let mut x = [0.0];
        let (mut eg, mut ed) = ([0.0], [0.0]);
        adadelta_update(&mut x, &[g], &mut eg, &mut ed, 1.0, rho, eps);
        let expected = -(eps.sqrt() / ((1.0 - rho) * g * g + eps).sqrt()) * g;
        assert_eq!(x[0], expected);
    }

    #[test]
    fn update_opposes_gradient_sign() {
        let grads = [3.0, -2.0, 0.5, -1e-3];
        let mut x = [0.0; 4];
        let (mut eg, mut ed) = ([0.0; 4], [0.0; 4]);
        adadelta_update(&mut x, &grads, &mut eg, &mut ed, 0.1, 0.95, 1e-6);
        for (dx, g) in x.iter().zip(grads) {
            assert!(dx * g < 0.0);
        }
    }

    fn store_with_grad(g: &[f64]) -> ParamStore {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::zeros(&[g.len()]), true);
        s.get_mut(id).accumulate_grad(g);
        s
    }

    #[test]
    fn clipping_factors() {
        let mut s = store_with_grad(&[6.0, 8.0]);
        assert_eq!(clip_gradients(&mut s, 5.0), 0.5);
        assert!(grad_norm(&s) <= 5.0 + 1e-9);
        let mut s = store_with_grad(&[0.0, 3.0]);
        assert_eq!(clip_gradients(&mut s, 5.0), 1.0);
        assert_eq!(s.iter().next().unwrap().tensor.grad().unwrap(), &[0.0, 3.0]);
    }

    #[test]
    fn frozen_parameters_are_not_updated() {
        let mut s = ParamStore::new();
        let id = s.add("frozen", Tensor::ones(&[2]), false);
        s.get_mut(id).accumulate_grad(&[1.0, 1.0]);
        let mut opt = Adadelta::new(&s, 0.1, 0.95, 1e-6);
        opt.step(&mut s);
        assert_eq!(s.get(id).data(), &[1.0, 1.0]);
        assert!(opt.state[0].is_none());
    }
}
