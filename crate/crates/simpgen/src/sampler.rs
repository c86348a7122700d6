use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use voxfem::{Face, FacePatch, FemProblem, LoadKind, LoadRegion, LoadSpec};

use crate::{ProblemSamplerConfig, SimpError};

const MAX_SUPPORT_REJECTIONS: usize = 1000;

fn unit_vector<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            let u = v.map(|x| x / norm);
            // renormalize so |u| = 1 holds to rounding
            let n2 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            return u.map(|x| x / n2);
        }
    }
}

fn random_patch<R: Rng + ?Sized>(rng: &mut R, cfg: &ProblemSamplerConfig) -> FacePatch {
    let face = *Face::ALL.choose(rng).expect("six faces");
    let extent = [cfg.dims.nx, cfg.dims.ny, cfg.dims.nz];
    let [u, v] = face.tangent_axes();
    let mut lo = [0; 2];
    let mut hi = [0; 2];
    for (slot, axis) in [u, v].into_iter().enumerate() {
        let n = extent[axis];
        let len = rng.gen_range(1..=(n / 2).max(1));
        let start = rng.gen_range(0..=(n - len));
        lo[slot] = start;
        hi[slot] = start + len;
    }
    FacePatch { face, lo, hi }
}

/// Draws one design task: three distinct, non-collinear boundary nodes held
/// fixed and a single load of uniformly random kind, location, direction and
/// magnitude.
pub fn sample_problem<R: Rng + ?Sized>(rng: &mut R, cfg: &ProblemSamplerConfig) -> Result<FemProblem, SimpError> {
    cfg.validate()?;
    let dims = cfg.dims;
    let boundary = dims.boundary_nodes();
    let mut fixed = None;
    for _ in 0..MAX_SUPPORT_REJECTIONS {
        let pick: Vec<usize> = boundary.choose_multiple(rng, 3).copied().collect();
        if FemProblem::new(dims, pick.clone(), vec![]).validate().is_ok() {
            fixed = Some(pick);
            break;
        }
    }
    let fixed = fixed.ok_or(SimpError::SamplerExhausted(MAX_SUPPORT_REJECTIONS))?;

    let kind = *LoadKind::ALL.choose(rng).expect("four kinds");
    let range = cfg.ranges.get(kind);
    let magnitude = if range.hi > range.lo {
        rng.gen_range(range.lo..=range.hi)
    } else {
        range.lo
    };
    let region = match kind {
        LoadKind::NodalForce => loop {
            // a force on a support would vanish
            let node = rng.gen_range(0..dims.n_nodes());
            if !fixed.contains(&node) {
                break LoadRegion::Node(node);
            }
        },
        _ => LoadRegion::Patch(random_patch(rng, cfg)),
    };
    let direction = match kind {
        LoadKind::Pressure => match region {
            LoadRegion::Patch(p) => p.face.outward_normal().map(|d| -d),
            LoadRegion::Node(_) => unreachable!(),
        },
        _ => unit_vector(rng),
    };
    let problem = FemProblem::new(
        dims,
        fixed,
        vec![LoadSpec {
            kind,
            region,
            magnitude,
            direction,
        }],
    );
    problem.validate()?;
    Ok(problem)
}

/// Uniform draw from the configured volume-fraction set.
pub fn sample_volfrac<R: Rng + ?Sized>(rng: &mut R, cfg: &ProblemSamplerConfig) -> f64 {
    *cfg.volfracs.choose(rng).expect("validated nonempty")
}
