//! Finite-difference cases (64-bit) covering every graph operator, shared
//! by the gradient tests and the acceptance suite.

use nnkit::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-4;
pub const TOL: f64 = 1e-4;

type Forward = Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var, NnError>>;

pub struct Case {
    pub name: &'static str,
    pub inputs: Vec<Tensor<f64>>,
    pub f: Forward,
}

impl Case {
    /// Largest relative error over the inputs.
    pub fn max_rel_error(&self) -> f64 {
        check_gradients(&self.inputs, H, 99, &self.f).unwrap().max_rel_error()
    }
}

fn rand(shape: &[usize], seed: u64) -> Tensor<f64> {
    Tensor::randn(shape, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Random values bounded away from zero, for kinked operators.
fn away_from_zero(shape: &[usize], seed: u64) -> Tensor<f64> {
    rand(shape, seed).map(|v| if v.abs() < 0.05 { v.signum() * 0.05 + v } else { v })
}

fn push(
    out: &mut Vec<Case>,
    name: &'static str,
    inputs: &[Tensor<f64>],
    f: impl Fn(&mut Graph<f64>, &[Var]) -> Result<Var, NnError> + 'static,
) {
    out.push(Case {
        name,
        inputs: inputs.to_vec(),
        f: Box::new(f),
    });
}

const X: [usize; 5] = [2, 4, 4, 4, 4];

pub fn cases() -> Vec<Case> {
    let mut out = Vec::new();
    // conv3d stride one
    push(&mut out, "conv3d k3 s1", &[rand(&X, 1), rand(&[3, 4, 3, 3, 3], 2), rand(&[3], 3)], |g, v| {
        g.conv3d(v[0], v[1], Some(v[2]), 1)
    });
    // conv3d stride two
    push(&mut out, "conv3d k3 s2", &[rand(&X, 4), rand(&[5, 4, 3, 3, 3], 5), rand(&[5], 6)], |g, v| {
        g.conv3d(v[0], v[1], Some(v[2]), 2)
    });
    // conv3d pointwise
    push(&mut out, "conv3d k1", &[rand(&X, 7), rand(&[2, 4, 1, 1, 1], 8)], |g, v| g.conv3d(v[0], v[1], None, 1));
    // upsample then conv
    push(&mut out, "upsample2 + conv3d", &[rand(&[2, 4, 2, 2, 2], 9), rand(&[2, 4, 3, 3, 3], 10), rand(&[2], 11)], |g, v| {
        let u = g.upsample2(v[0])?;
        g.conv3d(u, v[1], Some(v[2]), 1)
    });
    push(&mut out, "upsample2", &[rand(&X, 12)], |g, v| g.upsample2(v[0]));
    // group norm eight groups
    push(&mut out, "group_norm", &[rand(&[2, 8, 4, 4, 4], 13), rand(&[8], 14), rand(&[8], 15)], |g, v| {
        g.group_norm(v[0], v[1], v[2], 8)
    });
    push(&mut out, "group_norm (2 ch/group)", &[rand(&[2, 16, 2, 2, 2], 16), rand(&[16], 17), rand(&[16], 18)], |g, v| {
        g.group_norm(v[0], v[1], v[2], 8)
    });
    // activations
    push(&mut out, "silu", &[rand(&X, 19)], |g, v| Ok(g.silu(v[0])));
    push(&mut out, "sigmoid", &[rand(&X, 20)], |g, v| Ok(g.sigmoid(v[0])));
    push(&mut out, "exp", &[rand(&X, 21)], |g, v| Ok(g.exp(v[0])));
    push(&mut out, "square", &[rand(&X, 22)], |g, v| Ok(g.square(v[0])));
    push(&mut out, "abs", &[away_from_zero(&X, 23)], |g, v| Ok(g.abs(v[0])));
    // linear layer
    push(&mut out, "linear", &[rand(&[2, 6], 24), rand(&[5, 6], 25), rand(&[5], 26)], |g, v| {
        g.linear(v[0], v[1], Some(v[2]))
    });
    // elementwise arithmetic
    push(&mut out, "add", &[rand(&X, 27), rand(&X, 28)], |g, v| g.add(v[0], v[1]));
    push(&mut out, "sub", &[rand(&X, 29), rand(&X, 30)], |g, v| g.sub(v[0], v[1]));
    push(&mut out, "mul", &[rand(&X, 31), rand(&X, 32)], |g, v| g.mul(v[0], v[1]));
    push(&mut out, "affine", &[rand(&X, 33)], |g, v| Ok(g.affine(v[0], -1.7, 0.3)));
    // clamp: keep values off the clamp boundaries
    let x = rand(&X, 34).map(|v| if (v.abs() - 1.0).abs() < 0.01 { v * 1.05 } else { v });
    push(&mut out, "clamp", &[x], |g, v| Ok(g.clamp(v[0], -1.0, 1.0)));
    // channel plumbing
    push(&mut out, "concat", &[rand(&X, 35), rand(&[2, 3, 4, 4, 4], 36)], |g, v| g.concat(&[v[0], v[1]]));
    push(&mut out, "slice_channels", &[rand(&X, 37)], |g, v| g.slice_channels(v[0], 1, 2));
    push(&mut out, "add_channel_bias", &[rand(&X, 38), rand(&[2, 4], 39)], |g, v| g.add_channel_bias(v[0], v[1]));
    // reductions and lookup
    push(&mut out, "sum", &[rand(&X, 40)], |g, v| Ok(g.sum(v[0])));
    push(&mut out, "mean", &[rand(&X, 41)], |g, v| Ok(g.mean(v[0])));
    let indices: Vec<usize> = (0..2 * 64).map(|i| (i * 7) % 5).collect();
    push(&mut out, "gather_rows", &[rand(&[5, 4], 42)], move |g, v| g.gather_rows(v[0], &indices, &X));
    // residual block with embedding
    let mut store = ParamStore::<f64>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let block = ResBlock::new(&mut store, "block", 16, 8, Some(6), &mut rng).unwrap();
    // perturb the default affine/bias values so every path is exercised
    let mut inputs = vec![rand(&[2, 16, 3, 3, 3], 44), rand(&[2, 6], 45)];
    for (k, (_, t)) in store.iter().enumerate() {
        inputs.push(t.map(|v| v + 0.1 * ((k % 5) as f64 - 2.0)));
    }
    let ids: Vec<ParamId> = store.ids().collect();
    push(&mut out, "res_block", &inputs, move |g, v| {
        for (k, &id) in ids.iter().enumerate() {
            g.bind_param(id, v[2 + k]);
        }
        block.forward(g, &store, v[0], Some(v[1]))
    });    out
}
