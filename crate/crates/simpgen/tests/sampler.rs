use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use simpgen::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use voxfem::{GridDims, LoadKind, LoadRegion};

fn cfg() -> ProblemSamplerConfig {
    ProblemSamplerConfig {
        dims: GridDims::cube(8),
        ..Default::default()
    }
}

#[test]
fn same_seed_same_problem() {
    let cfg = cfg();
    for seed in 0..20 {
        let a = sample_problem(&mut ChaCha8Rng::seed_from_u64(seed), &cfg).unwrap();
        let b = sample_problem(&mut ChaCha8Rng::seed_from_u64(seed), &cfg).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn thousand_draws_satisfy_problem_invariants() {
    let cfg = cfg();
    let dims = cfg.dims;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let p = sample_problem(&mut rng, &cfg).unwrap();
        p.validate().unwrap();
        assert_eq!(p.fixed_nodes.len(), 3);
        let mut nodes = p.fixed_nodes.clone();
        nodes.sort_unstable();
        nodes.dedup();
        assert_eq!(nodes.len(), 3);
        assert!(p.fixed_nodes.iter().all(|&n| dims.is_boundary_node(n)));

        // independent collinearity check on integer coordinates
        let c: Vec<[i64; 3]> = p.fixed_nodes.iter().map(|&n| dims.node_coords(n).map(|v| v as i64)).collect();
        let a = [c[1][0] - c[0][0], c[1][1] - c[0][1], c[1][2] - c[0][2]];
        let b = [c[2][0] - c[0][0], c[2][1] - c[0][1], c[2][2] - c[0][2]];
        let cross = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
        assert!(cross != [0, 0, 0]);

        assert_eq!(p.loads.len(), 1);
        let load = &p.loads[0];
        let range = cfg.ranges.get(load.kind);
        assert!(load.magnitude >= range.lo && load.magnitude <= range.hi);
        let norm: f64 = load.direction.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        match (load.kind, load.region) {
            (LoadKind::NodalForce, LoadRegion::Node(n)) => assert!(!p.fixed_nodes.contains(&n)),
            (LoadKind::NodalForce, _) => panic!("nodal force on a patch"),
            (_, LoadRegion::Patch(_)) => {}
            (_, LoadRegion::Node(_)) => panic!("distributed load on a node"),
        }
        assert!(DEFAULT_VOLFRACS.contains(&sample_volfrac(&mut rng, &cfg)));
    }
}

#[test]
fn load_kinds_are_uniform() {
    let cfg = cfg();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut counts = [0usize; 4];
    let n = 10_000;
    for _ in 0..n {
        let p = sample_problem(&mut rng, &cfg).unwrap();
        let k = LoadKind::ALL.iter().position(|&k| k == p.loads[0].kind).unwrap();
        counts[k] += 1;
    }
    let expected = n as f64 / 4.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p_value = 1.0 - ChiSquared::new(3.0).unwrap().cdf(chi2);
    assert!(p_value > 0.0027, "counts {counts:?}, chi2 {chi2}, p {p_value}");
    let sigma = (n as f64 * 0.25 * 0.75).sqrt();
    for c in counts {
        assert!((c as f64 - expected).abs() < 3.0 * sigma, "{counts:?}");
    }
}
