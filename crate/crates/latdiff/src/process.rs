//! Forward noising, the noise-prediction objective and ancestral sampling,
//! written against any [`NoisePredictor`].

use nnkit::{NnError, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::NoiseSchedule;

/// Predicts the noise in `x_t` from the channel concatenation
/// `[condition, x_t]` and one timestep per sample.
pub trait NoisePredictor {
    fn predict(&self, input: &Tensor<f32>, t: &[usize]) -> Result<Tensor<f32>, NnError>;
}

impl<F> NoisePredictor for F
where
    F: Fn(&Tensor<f32>, &[usize]) -> Result<Tensor<f32>, NnError>,
{
    fn predict(&self, input: &Tensor<f32>, t: &[usize]) -> Result<Tensor<f32>, NnError> {
        self(input, t)
    }
}

pub fn standard_normal<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor<f32> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.sample(StandardNormal)).collect()).expect("length matches shape")
}

/// Concatenates `[n, ca, ...]` and `[n, cb, ...]` along channels.
pub fn concat_channels(a: &Tensor<f32>, b: &Tensor<f32>) -> Result<Tensor<f32>, NnError> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() < 2 || sa.len() != sb.len() || sa[0] != sb[0] || sa[2..] != sb[2..] {
        return Err(NnError::ShapeMismatch {
            op: "concat",
            detail: format!("{sa:?} with {sb:?}"),
        });
    }
    let n = sa[0];
    let (la, lb) = (a.len() / n.max(1), b.len() / n.max(1));
    let mut data = Vec::with_capacity(a.len() + b.len());
    for i in 0..n {
        data.extend_from_slice(&a.data()[i * la..(i + 1) * la]);
        data.extend_from_slice(&b.data()[i * lb..(i + 1) * lb]);
    }
    let mut shape = sa.to_vec();
    shape[1] += sb[1];
    Tensor::new(&shape, data)
}

/// Repeats a single-sample tensor `[1, ...]` `n` times along the batch axis.
pub fn repeat_batch(x: &Tensor<f32>, n: usize) -> Result<Tensor<f32>, NnError> {
    if x.shape().first() != Some(&1) {
        return Err(NnError::ShapeMismatch {
            op: "repeat",
            detail: format!("expected a single sample, got {:?}", x.shape()),
        });
    }
    let mut shape = x.shape().to_vec();
    shape[0] = n;
    Tensor::new(&shape, x.data().repeat(n))
}

fn check_step(schedule: &NoiseSchedule, t: usize) -> Result<(), NnError> {
    if t == 0 || t > schedule.steps() {
        return Err(NnError::InvalidConfig(format!("timestep {t} outside 1..={}", schedule.steps())));
    }
    Ok(())
}

/// `√ᾱ_t·x₀ + √(1−ᾱ_t)·z` with one timestep per sample.
pub fn q_sample_batch(schedule: &NoiseSchedule, x0: &Tensor<f32>, t: &[usize], z: &Tensor<f32>) -> Result<Tensor<f32>, NnError> {
    if x0.shape() != z.shape() || x0.shape().first() != Some(&t.len()) {
        return Err(NnError::ShapeMismatch {
            op: "q_sample",
            detail: format!("x0 {:?}, noise {:?}, {} timesteps", x0.shape(), z.shape(), t.len()),
        });
    }
    let per = x0.len() / t.len().max(1);
    let mut out = Vec::with_capacity(x0.len());
    for (i, &ti) in t.iter().enumerate() {
        check_step(schedule, ti)?;
        let ab = schedule.alpha_bar(ti);
        let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
        for k in i * per..(i + 1) * per {
            out.push((a * x0.data()[k] as f64 + b * z.data()[k] as f64) as f32);
        }
    }
    Tensor::new(x0.shape(), out)
}

/// Single-timestep form of [`q_sample_batch`].
pub fn q_sample(schedule: &NoiseSchedule, x0: &Tensor<f32>, t: usize, z: &Tensor<f32>) -> Result<Tensor<f32>, NnError> {
    let n = x0.shape().first().copied().unwrap_or(1);
    q_sample_batch(schedule, x0, &vec![t; n], z)
}

/// Mean squared error between the drawn noise and its prediction, with
/// caller-supplied timesteps and noise.
pub fn ddpm_loss_with<G: NoisePredictor + ?Sized>(
    g: &G,
    schedule: &NoiseSchedule,
    x0: &Tensor<f32>,
    cond: &Tensor<f32>,
    t: &[usize],
    z: &Tensor<f32>,
) -> Result<f64, NnError> {
    let xt = q_sample_batch(schedule, x0, t, z)?;
    let pred = g.predict(&concat_channels(cond, &xt)?, t)?;
    if pred.shape() != z.shape() {
        return Err(NnError::ShapeMismatch {
            op: "ddpm_loss",
            detail: format!("prediction {:?} vs noise {:?}", pred.shape(), z.shape()),
        });
    }
    let sse: f64 = pred.data().iter().zip(z.data()).map(|(p, q)| ((p - q) as f64).powi(2)).sum();
    Ok(sse / z.len().max(1) as f64)
}

/// Draws `t ~ U{1..T}` per sample and `z ~ N(0, I)`, then evaluates
/// [`ddpm_loss_with`].
pub fn ddpm_loss<G: NoisePredictor + ?Sized, R: Rng + ?Sized>(
    g: &G,
    schedule: &NoiseSchedule,
    x0: &Tensor<f32>,
    cond: &Tensor<f32>,
    rng: &mut R,
) -> Result<f64, NnError> {
    let n = x0.shape().first().copied().unwrap_or(1);
    let t: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=schedule.steps())).collect();
    let z = standard_normal(x0.shape(), rng);
    ddpm_loss_with(g, schedule, x0, cond, &t, &z)
}

/// One reverse step `x_t → x_{t−1}` with explicit injected noise.
pub fn p_sample_step_with<G: NoisePredictor + ?Sized>(
    g: &G,
    schedule: &NoiseSchedule,
    xt: &Tensor<f32>,
    cond: &Tensor<f32>,
    t: usize,
    noise: &Tensor<f32>,
) -> Result<Tensor<f32>, NnError> {
    check_step(schedule, t)?;
    let n = xt.shape().first().copied().unwrap_or(1);
    let eps = g.predict(&concat_channels(cond, xt)?, &vec![t; n])?;
    if eps.shape() != xt.shape() || noise.shape() != xt.shape() {
        return Err(NnError::ShapeMismatch {
            op: "p_sample",
            detail: format!("state {:?}, prediction {:?}, noise {:?}", xt.shape(), eps.shape(), noise.shape()),
        });
    }
    let beta = schedule.beta(t);
    let inv_sqrt_alpha = 1.0 / schedule.alpha(t).sqrt();
    let coef = beta / (1.0 - schedule.alpha_bar(t)).sqrt();
    let sigma = if t > 1 { beta.sqrt() } else { 0.0 };
    let data = xt
        .data()
        .iter()
        .zip(eps.data())
        .zip(noise.data())
        .map(|((&x, &e), &z)| (inv_sqrt_alpha * (x as f64 - coef * e as f64) + sigma * z as f64) as f32)
        .collect();
    Tensor::new(xt.shape(), data)
}

/// One reverse step drawing its noise from `rng` (nothing is drawn at `t = 1`).
pub fn p_sample_step<G: NoisePredictor + ?Sized, R: Rng + ?Sized>(
    g: &G,
    schedule: &NoiseSchedule,
    xt: &Tensor<f32>,
    cond: &Tensor<f32>,
    t: usize,
    rng: &mut R,
) -> Result<Tensor<f32>, NnError> {
    let noise = if t > 1 {
        standard_normal(xt.shape(), rng)
    } else {
        Tensor::zeros(xt.shape())
    };
    p_sample_step_with(g, schedule, xt, cond, t, &noise)
}

/// Output of [`generate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    /// `[n, c, ...]` final latents.
    pub latents: Tensor<f32>,
    /// Intermediate states at eight evenly spaced points of the chain, the
    /// last being the final latents. Empty unless requested.
    pub trajectory: Vec<Tensor<f32>>,
}

/// Runs the reverse chain from `T` down to `stop + 1` starting at `x`.
fn denoise_from<G: NoisePredictor + ?Sized>(
    g: &G,
    schedule: &NoiseSchedule,
    mut x: Tensor<f32>,
    cond: &Tensor<f32>,
    start: usize,
    rng: &mut ChaCha8Rng,
    mut snapshot: impl FnMut(usize, &Tensor<f32>),
) -> Result<Tensor<f32>, NnError> {
    for t in (1..=start).rev() {
        x = p_sample_step(g, schedule, &x, cond, t, rng)?;
        snapshot(start + 1 - t, &x);
    }
    Ok(x)
}

/// Number of intermediate states kept by [`generate`].
pub const TRAJECTORY_SNAPSHOTS: usize = 8;

/// Samples `n` design latents for one condition latent `[1, c, ...]`, all
/// randomness drawn from `seed`.
pub fn generate<G: NoisePredictor + ?Sized>(
    g: &G,
    schedule: &NoiseSchedule,
    cond: &Tensor<f32>,
    n: usize,
    seed: u64,
    trajectory: bool,
) -> Result<Generation, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let conds = repeat_batch(cond, n)?;
    let x = standard_normal(conds.shape(), &mut rng);
    let steps = schedule.steps();
    let mut states = Vec::new();
    let latents = denoise_from(g, schedule, x, &conds, steps, &mut rng, |done, x| {
        // keep the state whenever done·8/T crosses an integer
        if trajectory && done * TRAJECTORY_SNAPSHOTS / steps > (done - 1) * TRAJECTORY_SNAPSHOTS / steps {
            states.push(x.clone());
        }
    })?;
    Ok(Generation {
        latents,
        trajectory: states,
    })
}

/// Partially noises `mean` to step `round(strength·T)` and denoises it back.
/// Strength 0 returns `mean` unchanged.
pub fn translate<G: NoisePredictor + ?Sized>(
    g: &G,
    schedule: &NoiseSchedule,
    mean: &Tensor<f32>,
    cond: &Tensor<f32>,
    strength: f64,
    seed: u64,
) -> Result<Tensor<f32>, NnError> {
    if !(0.0..=1.0).contains(&strength) {
        return Err(NnError::InvalidConfig(format!("translation strength {strength} outside [0, 1]")));
    }
    let start = schedule.start_step(strength);
    if start == 0 {
        return Ok(mean.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = standard_normal(mean.shape(), &mut rng);
    let x = q_sample(schedule, mean, start, &z)?;
    denoise_from(g, schedule, x, cond, start, &mut rng, |_, _| {})
}
