use nnkit::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rand(shape: &[usize], seed: u64) -> Tensor<f32> {
    Tensor::randn(shape, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[test]
fn identity_pointwise_conv_is_identity() {
    let c = 3;
    let mut w = Tensor::<f32>::zeros(&[c, c, 1, 1, 1]);
    for i in 0..c {
        w.data_mut()[i * c + i] = 1.0;
    }
    let mut g = Graph::new();
    let x = g.constant(rand(&[2, c, 4, 5, 3], 1));
    let w = g.constant(w);
    let y = g.conv3d(x, w, None, 1).unwrap();
    assert_eq!(g.value(y), g.value(x));
}

#[test]
fn identity_centre_tap_kernel_is_identity() {
    let mut w = Tensor::<f32>::zeros(&[1, 1, 3, 3, 3]);
    w.data_mut()[13] = 1.0;
    let mut g = Graph::new();
    let x = g.constant(rand(&[1, 1, 4, 4, 4], 2));
    let w = g.constant(w);
    let y = g.conv3d(x, w, None, 1).unwrap();
    assert_eq!(g.value(y), g.value(x));
}

#[test]
fn concat_then_slice_recovers_inputs() {
    let mut g = Graph::new();
    let a = g.constant(rand(&[2, 3, 2, 2, 2], 3));
    let b = g.constant(rand(&[2, 5, 2, 2, 2], 4));
    let ab = g.concat(&[a, b]).unwrap();
    assert_eq!(g.shape(ab), &[2, 8, 2, 2, 2]);
    let a2 = g.slice_channels(ab, 0, 3).unwrap();
    let b2 = g.slice_channels(ab, 3, 5).unwrap();
    assert_eq!(g.value(a2), g.value(a));
    assert_eq!(g.value(b2), g.value(b));
}

#[test]
fn upsample_repeats_each_voxel() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::<f32>::from_f64(&[1, 1, 1, 1, 2], &[1.0, 2.0]).unwrap());
    let y = g.upsample2(x).unwrap();
    assert_eq!(g.shape(y), &[1, 1, 2, 2, 4]);
    assert_eq!(g.value(y).data(), &[1., 1., 2., 2., 1., 1., 2., 2., 1., 1., 2., 2., 1., 1., 2., 2.]);
}

#[test]
fn group_norm_output_is_standardized() {
    let mut g = Graph::new();
    let x = g.constant(rand(&[2, 16, 3, 3, 3], 5).map(|v| 3.0 * v + 1.0));
    let gamma = g.constant(Tensor::full(&[16], 1.0));
    let beta = g.constant(Tensor::zeros(&[16]));
    let y = g.group_norm(x, gamma, beta, 8).unwrap();
    for group in g.value(y).data().chunks(2 * 27) {
        let mean = group.iter().map(|&v| v as f64).sum::<f64>() / group.len() as f64;
        let var = group.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / group.len() as f64;
        assert!(mean.abs() < 1e-5);
        assert!((var - 1.0).abs() < 1e-3);
    }
}

#[test]
fn shape_errors_name_the_operator() {
    let mut g = Graph::<f32>::new();
    let x = g.constant(Tensor::zeros(&[1, 2, 4, 4, 4]));
    let w = g.constant(Tensor::zeros(&[1, 3, 3, 3, 3]));
    match g.conv3d(x, w, None, 1) {
        Err(NnError::ShapeMismatch { op, .. }) => assert_eq!(op, "conv3d"),
        r => panic!("unexpected {r:?}"),
    }
    let y = g.constant(Tensor::zeros(&[1, 2, 4, 4, 2]));
    assert!(matches!(g.add(x, y), Err(NnError::ShapeMismatch { op: "add", .. })));
    assert!(matches!(g.group_norm(x, x, x, 8), Err(NnError::ShapeMismatch { op: "group_norm", .. })));
}

#[test]
fn forward_and_backward_are_deterministic() {
    let run = || {
        let mut store = ParamStore::<f32>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let conv = Conv3d::new(&mut store, "c", 2, 16, 3, 2, &mut rng).unwrap();
        let block = ResBlock::new(&mut store, "r", 16, 8, None, &mut rng).unwrap();
        let mut g = Graph::new();
        let x = g.constant(rand(&[2, 2, 8, 8, 8], 7));
        let h = conv.forward(&mut g, &store, x).unwrap();
        let h = block.forward(&mut g, &store, h, None).unwrap();
        let l = g.square(h);
        let l = g.mean(l);
        g.backward(l).unwrap();
        let grads = g.param_grads(&store);
        (g.value(h).clone(), grads.get(conv.weight).unwrap().clone())
    };
    assert_eq!(run(), run());
}

#[test]
fn backward_skips_constants() {
    let mut g = Graph::<f32>::new();
    let x = g.constant(rand(&[1, 1, 4, 4, 4], 8));
    let w = g.input(rand(&[2, 1, 3, 3, 3], 9));
    let y = g.conv3d(x, w, None, 1).unwrap();
    let s = g.sum(y);
    g.backward(s).unwrap();
    assert!(g.grad(x).is_none());
    assert!(g.grad(w).is_some());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn conv_is_linear_in_input(
        seed in 0u64..1000,
        a in -2.0f64..2.0,
        stride in 1usize..3,
    ) {
        let x1 = rand(&[1, 2, 4, 3, 5], seed).cast::<f64>();
        let x2 = rand(&[1, 2, 4, 3, 5], seed + 1).cast::<f64>();
        let w = rand(&[3, 2, 3, 3, 3], seed + 2).cast::<f64>();
        let mut g = Graph::<f64>::new();
        let (v1, v2, vw) = (g.constant(x1.clone()), g.constant(x2.clone()), g.constant(w));
        let mixed = g.constant(Tensor::new(x1.shape(), x1.data().iter().zip(x2.data()).map(|(p, q)| a * p + q).collect()).unwrap());
        let y1 = g.conv3d(v1, vw, None, stride).unwrap();
        let y2 = g.conv3d(v2, vw, None, stride).unwrap();
        let ym = g.conv3d(mixed, vw, None, stride).unwrap();
        for k in 0..g.value(ym).len() {
            let expected = a * g.value(y1).data()[k] + g.value(y2).data()[k];
            prop_assert!((g.value(ym).data()[k] - expected).abs() < 1e-10);
        }
    }
}
