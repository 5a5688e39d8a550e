use capslid_core::optim::{adam_step, AdamConfig, AdamState};
use capslid_core::Tensor;

/// Scalar Adam written out directly from the update equations.
fn scalar_adam(x0: f64, grad: impl Fn(f64) -> f64, steps: usize, cfg: &AdamConfig) -> Vec<f64> {
    let (mut x, mut m, mut v) = (x0, 0.0, 0.0);
    let mut xs = Vec::new();
    for t in 1..=steps {
        let g = grad(x);
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
        let mh = m / (1.0 - cfg.beta1.powi(t as i32));
        let vh = v / (1.0 - cfg.beta2.powi(t as i32));
        x -= cfg.learning_rate * mh / (vh.sqrt() + cfg.epsilon);
        xs.push(x);
    }
    xs
}

#[test]
fn quadratic_descent_matches_scalar_simulation() {
    let cfg = AdamConfig { learning_rate: 0.05, ..AdamConfig::default() };
    let loss = |x: f64| (x - 3.0) * (x - 3.0);
    let grad = |x: f64| 2.0 * (x - 3.0);
    let oracle = scalar_adam(0.0, grad, 10, &cfg);

    let mut params = vec![Tensor::new(&[1], vec![0.0]).unwrap()];
    let mut state = AdamState::new(&params);
    let mut prev = loss(0.0);
    for want in oracle {
        let g = Tensor::new(&[1], vec![grad(params[0].data()[0])]).unwrap();
        adam_step(&mut params, &[g], &mut state, &cfg).unwrap();
        let x = params[0].data()[0];
        assert!((x - want).abs() < 1e-12, "{x} vs {want}");
        assert!(loss(x) < prev);
        prev = loss(x);
    }
}
