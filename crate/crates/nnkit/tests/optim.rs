use nnkit::*;

/// Scalar re-implementation of the bias-corrected update.
fn reference_adam(mut x: Vec<f64>, grad: impl Fn(&[f64]) -> Vec<f64>, cfg: &OptimizerConfig, steps: usize) -> Vec<f64> {
    let mut m = vec![0.0; x.len()];
    let mut v = vec![0.0; x.len()];
    for t in 1..=steps {
        let mut g = grad(&x);
        let norm = g.iter().map(|a| a * a).sum::<f64>().sqrt();
        if let Some(c) = cfg.grad_clip {
            if norm > c {
                g.iter_mut().for_each(|a| *a *= c / norm);
            }
        }
        for i in 0..x.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let mh = m[i] / (1.0 - cfg.beta1.powi(t as i32));
            let vh = v[i] / (1.0 - cfg.beta2.powi(t as i32));
            x[i] -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
        }
    }
    x
}

fn run(start: &[f64], grad: impl Fn(&[f64]) -> Vec<f64>, cfg: &OptimizerConfig, steps: usize) -> Vec<f64> {
    let mut store = ParamStore::<f64>::new();
    let id = store.add("x", Tensor::from_f64(&[start.len()], start).unwrap()).unwrap();
    for _ in 0..steps {
        let g = grad(store.get(id).data());
        let mut grads = Gradients::empty(1);
        grads.accumulate(id, &Tensor::from_f64(&[g.len()], &g).unwrap());
        adam_step(&mut store, &grads, cfg).unwrap();
    }
    store.get(id).data().to_vec()
}

#[test]
fn first_step_moves_by_learning_rate() {
    let cfg = OptimizerConfig { lr: 0.1, ..Default::default() };
    let x = run(&[1.0], |x| vec![2.0 * x[0]], &cfg, 1);
    // gradient 2 is clipped to 1; m̂ = g, v̂ = g², so the step is lr·g/(|g| + ε)
    let expected = 1.0 - 0.1 * 1.0 / (1.0 + 1e-8);
    assert!((x[0] - expected).abs() < 1e-15);
    assert!((x[0] - 0.9).abs() < 1e-8);
}

#[test]
fn quadratic_bowl_converges_like_reference() {
    let grad = |x: &[f64]| vec![2.0 * x[0], 20.0 * x[1]];
    let cfg = OptimizerConfig { lr: 0.05, ..Default::default() };
    let ours = run(&[1.0, -1.0], grad, &cfg, 200);
    let reference = reference_adam(vec![1.0, -1.0], grad, &cfg, 200);
    for (a, b) in ours.iter().zip(&reference) {
        assert!((a - b).abs() < 1e-12, "{ours:?} vs {reference:?}");
    }
    let norm = ours.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(norm < 1e-3, "{norm}");
}

#[test]
fn gradient_is_clipped_globally() {
    let mut store = ParamStore::<f64>::new();
    let a = store.add("a", Tensor::zeros(&[1])).unwrap();
    let b = store.add("b", Tensor::zeros(&[1])).unwrap();
    let mut grads = Gradients::empty(2);
    grads.accumulate(a, &Tensor::from_f64(&[1], &[30.0]).unwrap());
    grads.accumulate(b, &Tensor::from_f64(&[1], &[40.0]).unwrap());
    assert_eq!(grads.global_norm(), 50.0);
    let cfg = OptimizerConfig { lr: 1.0, ..Default::default() };
    adam_step(&mut store, &grads, &cfg).unwrap();
    // first step magnitude is lr regardless of scale, sign follows gradient
    assert!((store.get(a).data()[0] + 1.0).abs() < 1e-6);
    assert!((store.get(b).data()[0] + 1.0).abs() < 1e-6);
    let moments_ok = reference_adam(vec![0.0, 0.0], |_| vec![30.0, 40.0], &cfg, 1);
    assert!((store.get(a).data()[0] - moments_ok[0]).abs() < 1e-12);
}

#[test]
fn invalid_config_is_rejected() {
    let mut store = ParamStore::<f32>::new();
    store.add("x", Tensor::zeros(&[1])).unwrap();
    let grads = Gradients::empty(1);
    for cfg in [
        OptimizerConfig { lr: 0.0, ..Default::default() },
        OptimizerConfig { beta1: 1.0, ..Default::default() },
        OptimizerConfig { beta2: -0.1, ..Default::default() },
    ] {
        assert!(matches!(adam_step(&mut store, &grads, &cfg), Err(NnError::InvalidConfig(_))));
    }
}
