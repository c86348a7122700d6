mod common;

use common::{problem, slab};
use pipeline::eval::{evaluate_designs, write_report, EvalCase, Source};
use voxfem::{compliance, solve_with, DensityField, GridDims, Preconditioner, SolverOptions};

fn opts() -> SolverOptions {
    SolverOptions {
        rel_tol: 1e-8,
        max_iters: Some(5000),
        preconditioner: Preconditioner::Jacobi,
    }
}

fn dims() -> GridDims {
    GridDims::new(8, 4, 4)
}

#[test]
fn designs_equal_to_the_reference_score_perfectly() {
    let p = problem(dims(), 3);
    let simp = slab(dims(), 1);
    let case = EvalCase {
        condition_id: 4,
        problem: &p,
        simp: &simp,
        designs: vec![(0, &simp), (1, &simp), (2, &simp)],
    };
    let r = evaluate_designs(&[case], 0.5, &opts()).unwrap();
    let s = &r.summary;
    assert_eq!(s.volume_fraction_mae, 0.0);
    assert_eq!(s.generated_designs, 3);
    assert_eq!(s.failed_solves, 0);
    assert_eq!(s.median_compliance_ldm, s.median_compliance_simp);
    let c = &r.conditions[0];
    for d in &c.designs {
        assert!((d.cosine_vs_simp - 1.0).abs() < 1e-12);
        assert_eq!(d.compliance, c.simp.compliance);
        assert_eq!(d.source, Source::Ldm);
    }
    assert_eq!(c.simp.source, Source::Simp);
    assert!((c.max_pairwise_cosine.unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn each_design_is_solved_under_its_own_condition() {
    let (pa, pb) = (problem(dims(), 1), problem(dims(), 2));
    let simp = slab(dims(), 2);
    let other = slab(dims(), 1);
    let cases = [
        EvalCase {
            condition_id: 1,
            problem: &pa,
            simp: &simp,
            designs: vec![(0, &other)],
        },
        EvalCase {
            condition_id: 2,
            problem: &pb,
            simp: &simp,
            designs: vec![(0, &other)],
        },
    ];
    let r = evaluate_designs(&cases, 0.5, &opts()).unwrap();
    let binary = DensityField::new(dims(), other.iter().map(|&v| if v >= 0.5 { 1.0 } else { 0.0 }).collect()).unwrap();
    for (cond, p) in r.conditions.iter().zip([&pa, &pb]) {
        let (u, _) = solve_with(p, &binary, &opts(), None).unwrap();
        let expect = compliance(p, &binary, &u);
        let got = cond.designs[0].compliance.unwrap();
        assert!((got - expect).abs() <= 1e-12 * expect.abs(), "{got} vs {expect}");
    }
    assert_ne!(r.conditions[0].designs[0].compliance, r.conditions[1].designs[0].compliance);
}

#[test]
fn non_convergence_is_recorded_not_fatal() {
    let p = problem(dims(), 5);
    let simp = slab(dims(), 1);
    let starved = SolverOptions {
        max_iters: Some(1),
        ..opts()
    };
    let case = EvalCase {
        condition_id: 0,
        problem: &p,
        simp: &simp,
        designs: vec![(0, &simp)],
    };
    let r = evaluate_designs(&[case], 0.5, &starved).unwrap();
    assert_eq!(r.summary.failed_solves, 2);
    assert!(r.conditions[0].designs[0].error.as_deref().unwrap().contains("did not converge"));
    assert_eq!(r.summary.median_compliance_ldm, None);
}

#[test]
fn mismatched_design_size_is_rejected() {
    let p = problem(dims(), 5);
    let simp = slab(dims(), 1);
    let short = vec![1.0f32; 10];
    let case = EvalCase {
        condition_id: 0,
        problem: &p,
        simp: &simp,
        designs: vec![(0, &short)],
    };
    assert!(evaluate_designs(&[case], 0.5, &opts()).is_err());
}

#[test]
fn report_has_a_row_per_design_plus_references() {
    let p = problem(dims(), 7);
    let simp = slab(dims(), 2);
    let a = slab(dims(), 1);
    let designs: Vec<(u64, &[f32])> = (0..4).map(|k| (k, if k % 2 == 0 { &a[..] } else { &simp[..] })).collect();
    let cases: Vec<EvalCase> = (0..3)
        .map(|c| EvalCase {
            condition_id: c,
            problem: &p,
            simp: &simp,
            designs: designs.clone(),
        })
        .collect();
    let r = evaluate_designs(&cases, 0.5, &opts()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_report(&r, dir.path()).unwrap();
    let mut rd = csv::Reader::from_path(dir.path().join("report.csv")).unwrap();
    let header: Vec<String> = rd.headers().unwrap().iter().map(str::to_owned).collect();
    assert_eq!(
        header,
        ["condition_id", "design_id", "source", "compliance", "volume_fraction", "cosine_vs_simp"]
    );
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.iter().filter(|r| &r[2] == "ldm").count(), 3 * 4);
    assert_eq!(rows.iter().filter(|r| &r[2] == "simp").count(), 3);
    for stem in ["hist_cosine_vs_simp", "hist_compliance_ldm", "hist_compliance_simp", "hist_volume_fraction"] {
        let mut h = csv::Reader::from_path(dir.path().join(format!("{stem}.csv"))).unwrap();
        assert_eq!(h.headers().unwrap(), vec!["bin_low", "bin_high", "count"]);
        let total: usize = h.records().map(|r| r.unwrap()[2].parse::<usize>().unwrap()).sum();
        let expect = if stem == "hist_compliance_simp" { 3 } else { 12 };
        assert_eq!(total, expect, "{stem}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["generated_designs"], 12);
}
