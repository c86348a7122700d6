//! Scoring generated designs against the SIMP reference of their condition.
//!
//! Every design is thresholded to solid/void and solved under the exact
//! problem of its condition, so compliances are comparable with the
//! equally thresholded SIMP design.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use simpgen::{Dataset, DatasetManifest};
use voxfem::{compliance, solve_with, DensityField, FemError, FemProblem, SolverOptions};

use crate::generate::split_design_id;
use crate::metrics::{cosine, histogram, linear_edges, log_edges, median, occupied_fraction, HistogramBin};
use crate::PipelineError;

/// Similarity below which a design counts as distinct from its reference.
pub const DISTINCT_COSINE: f64 = 0.95;
const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Simp,
    Ldm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignEval {
    pub condition_id: u64,
    /// Index within the condition; `None` for the SIMP reference.
    pub design_id: Option<u64>,
    pub source: Source,
    /// `None` when the solve failed; see `error`.
    pub compliance: Option<f64>,
    pub volume_fraction: f64,
    pub cosine_vs_simp: f64,
    pub solver_iterations: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionEval {
    pub condition_id: u64,
    pub simp: DesignEval,
    pub designs: Vec<DesignEval>,
    /// Largest cosine similarity between two generated designs.
    pub max_pairwise_cosine: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub conditions: usize,
    pub generated_designs: usize,
    pub failed_solves: usize,
    /// Mean |VF(generated) - VF(SIMP)| over generated designs.
    pub volume_fraction_mae: f64,
    pub mean_cosine_vs_simp: f64,
    pub fraction_cosine_vs_simp_below_distinct: f64,
    pub max_pairwise_cosine: Option<f64>,
    /// Failed solves count as infinite compliance; `None` if the median
    /// itself is a failure.
    pub median_compliance_ldm: Option<f64>,
    pub median_compliance_simp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub threshold: f64,
    pub conditions: Vec<ConditionEval>,
    pub summary: EvalSummary,
}

/// One condition with its problem, SIMP density and generated densities
/// keyed by design index.
#[derive(Debug, Clone)]
pub struct EvalCase<'a> {
    pub condition_id: u64,
    pub problem: &'a FemProblem,
    pub simp: &'a [f32],
    pub designs: Vec<(u64, &'a [f32])>,
}

struct Scored {
    compliance: Option<f64>,
    iterations: Option<usize>,
    error: Option<String>,
}

fn score(problem: &FemProblem, density: &[f32], threshold: f64, opts: &SolverOptions) -> Result<Scored, PipelineError> {
    let binary: Vec<f64> = density.iter().map(|&v| if v as f64 >= threshold { 1.0 } else { 0.0 }).collect();
    let field = DensityField::new(problem.dims, binary)?;
    match solve_with(problem, &field, opts, None) {
        Ok((u, stats)) => Ok(Scored {
            compliance: Some(compliance(problem, &field, &u)),
            iterations: Some(stats.iterations),
            error: None,
        }),
        Err(e @ (FemError::NonConvergence { .. } | FemError::SingularSystem(_))) => Ok(Scored {
            compliance: None,
            iterations: None,
            error: Some(e.to_string()),
        }),
        Err(e) => Err(e.into()),
    }
}

/// Solves every design (and each SIMP reference) under its own condition's
/// problem, in parallel, and aggregates the report.
pub fn evaluate_designs(cases: &[EvalCase], threshold: f64, opts: &SolverOptions) -> Result<EvalReport, PipelineError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(PipelineError::InvalidConfig(format!("threshold {threshold} outside (0, 1)")));
    }
    // (case, design index or None for the reference, density)
    let mut jobs: Vec<(usize, Option<u64>, &[f32])> = Vec::new();
    for (c, case) in cases.iter().enumerate() {
        let n = case.problem.dims.n_elements();
        for (id, d) in std::iter::once((None, case.simp)).chain(case.designs.iter().map(|(k, d)| (Some(*k), *d))) {
            if d.len() != n {
                return Err(PipelineError::ShapeMismatch(format!(
                    "condition {} design {id:?} has {} voxels, its problem {n}",
                    case.condition_id,
                    d.len()
                )));
            }
            jobs.push((c, id, d));
        }
    }
    let scored: Vec<Scored> = jobs
        .par_iter()
        .map(|&(c, _, d)| score(cases[c].problem, d, threshold, opts))
        .collect::<Result<_, _>>()?;

    let mut conditions: Vec<ConditionEval> = Vec::with_capacity(cases.len());
    for ((c, id, d), s) in jobs.into_iter().zip(scored) {
        let case = &cases[c];
        let row = DesignEval {
            condition_id: case.condition_id,
            design_id: id,
            source: if id.is_some() { Source::Ldm } else { Source::Simp },
            compliance: s.compliance,
            volume_fraction: occupied_fraction(d, threshold),
            cosine_vs_simp: cosine(d, case.simp),
            solver_iterations: s.iterations,
            error: s.error,
        };
        if id.is_none() {
            let pairs = case
                .designs
                .iter()
                .enumerate()
                .flat_map(|(i, a)| case.designs[i + 1..].iter().map(move |b| cosine(a.1, b.1)));
            conditions.push(ConditionEval {
                condition_id: case.condition_id,
                simp: row,
                designs: Vec::with_capacity(case.designs.len()),
                max_pairwise_cosine: pairs.reduce(f64::max),
            });
        } else {
            conditions.last_mut().expect("reference precedes designs").designs.push(row);
        }
    }
    let summary = summarize(&conditions);
    Ok(EvalReport {
        threshold,
        conditions,
        summary,
    })
}

fn summarize(conditions: &[ConditionEval]) -> EvalSummary {
    let designs: Vec<(&DesignEval, &DesignEval)> =
        conditions.iter().flat_map(|c| c.designs.iter().map(move |d| (d, &c.simp))).collect();
    let n = designs.len().max(1) as f64;
    let finite_median = |v: &[f64]| median(v).filter(|m| m.is_finite());
    let comp = |d: &DesignEval| d.compliance.unwrap_or(f64::INFINITY);
    let ldm: Vec<f64> = designs.iter().map(|(d, _)| comp(d)).collect();
    let simp: Vec<f64> = conditions.iter().map(|c| comp(&c.simp)).collect();
    EvalSummary {
        conditions: conditions.len(),
        generated_designs: designs.len(),
        failed_solves: designs.iter().filter(|(d, _)| d.compliance.is_none()).count()
            + conditions.iter().filter(|c| c.simp.compliance.is_none()).count(),
        volume_fraction_mae: designs
            .iter()
            .map(|(d, s)| (d.volume_fraction - s.volume_fraction).abs())
            .sum::<f64>()
            / n,
        mean_cosine_vs_simp: designs.iter().map(|(d, _)| d.cosine_vs_simp).sum::<f64>() / n,
        fraction_cosine_vs_simp_below_distinct: designs
            .iter()
            .filter(|(d, _)| d.cosine_vs_simp < DISTINCT_COSINE)
            .count() as f64
            / n,
        max_pairwise_cosine: conditions.iter().filter_map(|c| c.max_pairwise_cosine).reduce(f64::max),
        median_compliance_ldm: finite_median(&ldm),
        median_compliance_simp: finite_median(&simp),
    }
}

/// Builds the cases for the designs in `designs` from the manifest and
/// dataset they were generated from, grouped by condition in id order.
pub fn cases_from<'a>(
    manifest: &'a DatasetManifest,
    dataset: &'a Dataset,
    designs: &'a Dataset,
) -> Result<Vec<EvalCase<'a>>, PipelineError> {
    let mut groups: BTreeMap<u64, Vec<(u64, &'a [f32])>> = BTreeMap::new();
    for s in &designs.samples {
        let (cond, k) = split_design_id(s.id);
        groups.entry(cond).or_default().push((k, &s.density));
    }
    groups
        .into_iter()
        .map(|(cond, mut list)| {
            list.sort_by_key(|(k, _)| *k);
            let entry = manifest.entry(cond).ok_or_else(|| {
                PipelineError::InvalidConfig(format!("designs reference condition {cond} missing from the manifest"))
            })?;
            let simp = dataset
                .get(cond)
                .ok_or_else(|| PipelineError::InvalidConfig(format!("condition {cond} missing from the dataset")))?;
            Ok(EvalCase {
                condition_id: cond,
                problem: &entry.problem,
                simp: &simp.density,
                designs: list,
            })
        })
        .collect()
}

#[derive(Serialize)]
struct ReportRow {
    condition_id: u64,
    design_id: Option<u64>,
    source: Source,
    compliance: Option<f64>,
    volume_fraction: f64,
    cosine_vs_simp: f64,
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), PipelineError> {
    let csv_err = |e: csv::Error| PipelineError::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))
}

/// Histograms emitted next to the report, by file stem.
pub fn report_histograms(report: &EvalReport) -> Vec<(&'static str, Vec<HistogramBin>)> {
    let rows: Vec<&DesignEval> = report.conditions.iter().flat_map(|c| &c.designs).collect();
    let simp: Vec<&DesignEval> = report.conditions.iter().map(|c| &c.simp).collect();
    let cosines: Vec<f64> = rows.iter().map(|d| d.cosine_vs_simp).collect();
    let vf: Vec<f64> = rows.iter().map(|d| d.volume_fraction).collect();
    let vf_err: Vec<f64> = report
        .conditions
        .iter()
        .flat_map(|c| c.designs.iter().map(move |d| d.volume_fraction - c.simp.volume_fraction))
        .collect();
    let finite = |v: &[&DesignEval]| -> Vec<f64> { v.iter().filter_map(|d| d.compliance).filter(|c| *c > 0.0).collect() };
    let (ldm_c, simp_c) = (finite(&rows), finite(&simp));
    let all: Vec<f64> = ldm_c.iter().chain(&simp_c).copied().collect();
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = all.iter().copied().fold(0.0, f64::max);
    let edges = if all.is_empty() {
        linear_edges(0.0, 1.0, HISTOGRAM_BINS)
    } else if hi > lo {
        log_edges(lo, hi, HISTOGRAM_BINS)
    } else {
        log_edges(lo * 0.5, hi * 2.0, HISTOGRAM_BINS)
    };
    vec![
        ("hist_cosine_vs_simp", histogram(&cosines, &linear_edges(-1.0, 1.0, 2 * HISTOGRAM_BINS))),
        ("hist_volume_fraction", histogram(&vf, &linear_edges(0.0, 1.0, HISTOGRAM_BINS))),
        ("hist_volume_fraction_error", histogram(&vf_err, &linear_edges(-1.0, 1.0, 2 * HISTOGRAM_BINS))),
        ("hist_compliance_ldm", histogram(&ldm_c, &edges)),
        ("hist_compliance_simp", histogram(&simp_c, &edges)),
    ]
}

/// Writes `report.csv` (one row per SIMP reference and per generated
/// design), the histogram CSVs, `summary.json` with the aggregates and
/// `evaluation.json` with every record into `dir`.
pub fn write_report(report: &EvalReport, dir: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    let rows = report.conditions.iter().flat_map(|c| std::iter::once(&c.simp).chain(&c.designs)).map(|d| ReportRow {
        condition_id: d.condition_id,
        design_id: d.design_id,
        source: d.source,
        compliance: d.compliance,
        volume_fraction: d.volume_fraction,
        cosine_vs_simp: d.cosine_vs_simp,
    });
    write_csv(&dir.join("report.csv"), rows)?;
    for (stem, bins) in report_histograms(report) {
        write_csv(&dir.join(format!("{stem}.csv")), bins)?;
    }
    for (name, json) in [
        ("summary.json", serde_json::to_string_pretty(&report.summary)),
        ("evaluation.json", serde_json::to_string_pretty(report)),
    ] {
        let path = dir.join(name);
        std::fs::write(&path, json.expect("report serializes")).map_err(|e| PipelineError::io(&path, e))?;
    }
    Ok(())
}
