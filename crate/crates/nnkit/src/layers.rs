//! Parameterized building blocks. Each layer owns only [`ParamId`]s; values
//! live in the [`ParamStore`] it was created in.

use rand::Rng;

use crate::{Graph, NnError, ParamId, ParamStore, Scalar, Tensor, Var};

/// Default fan-in scaled uniform initialization, `U(±1/√fan_in)`.
fn init_uniform<T: Scalar, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    Tensor::uniform(shape, 1.0 / (fan_in as f64).sqrt(), rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv3d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
}

impl Conv3d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let fan_in = cin * kernel.pow(3);
        let weight = store.add(format!("{name}.weight"), init_uniform(&[cout, cin, kernel, kernel, kernel], fan_in, rng))?;
        let bias = store.add(format!("{name}.bias"), init_uniform(&[cout], fan_in, rng))?;
        Ok(Self { weight, bias, stride })
    }

    /// Sets weights and bias to zero, so the layer initially outputs zero.
    pub fn zero<T: Scalar>(&self, store: &mut ParamStore<T>) {
        store.get_mut(self.weight).data_mut().fill(T::zero());
        store.get_mut(self.bias).data_mut().fill(T::zero());
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var, NnError> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        g.conv3d(x, w, Some(b), self.stride)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub groups: usize,
}

impl GroupNorm {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, channels: usize, groups: usize) -> Result<Self, NnError> {
        if groups == 0 || channels % groups != 0 {
            return Err(NnError::ShapeMismatch {
                op: "group_norm",
                detail: format!("{channels} channels not divisible into {groups} groups"),
            });
        }
        let gamma = store.add(format!("{name}.gamma"), Tensor::full(&[channels], T::one()))?;
        let beta = store.add(format!("{name}.beta"), Tensor::zeros(&[channels]))?;
        Ok(Self { gamma, beta, groups })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var, NnError> {
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        g.group_norm(x, gamma, beta, self.groups)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        din: usize,
        dout: usize,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let weight = store.add(format!("{name}.weight"), init_uniform(&[dout, din], din, rng))?;
        let bias = store.add(format!("{name}.bias"), init_uniform(&[dout], din, rng))?;
        Ok(Self { weight, bias })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var, NnError> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        g.linear(x, w, Some(b))
    }
}

/// Pre-activation residual block: `x + conv(silu(gn(conv(silu(gn(x))))))`,
/// with an optional per-channel embedding added between the convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResBlock {
    pub norm1: GroupNorm,
    pub conv1: Conv3d,
    pub norm2: GroupNorm,
    pub conv2: Conv3d,
    pub embed: Option<Linear>,
}

impl ResBlock {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        channels: usize,
        groups: usize,
        embed_dim: Option<usize>,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let norm1 = GroupNorm::new(store, &format!("{name}.norm1"), channels, groups)?;
        let conv1 = Conv3d::new(store, &format!("{name}.conv1"), channels, channels, 3, 1, rng)?;
        let embed = embed_dim
            .map(|d| Linear::new(store, &format!("{name}.embed"), d, channels, rng))
            .transpose()?;
        let norm2 = GroupNorm::new(store, &format!("{name}.norm2"), channels, groups)?;
        let conv2 = Conv3d::new(store, &format!("{name}.conv2"), channels, channels, 3, 1, rng)?;
        Ok(Self {
            norm1,
            conv1,
            norm2,
            conv2,
            embed,
        })
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: Var,
        embedding: Option<Var>,
    ) -> Result<Var, NnError> {
        let h = self.norm1.forward(g, store, x)?;
        let h = g.silu(h);
        let mut h = self.conv1.forward(g, store, h)?;
        if let (Some(layer), Some(e)) = (self.embed, embedding) {
            let bias = layer.forward(g, store, e)?;
            h = g.add_channel_bias(h, bias)?;
        }
        let h = self.norm2.forward(g, store, h)?;
        let h = g.silu(h);
        let h = self.conv2.forward(g, store, h)?;
        g.add(x, h)
    }
}
