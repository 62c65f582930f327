//! Transform-error metric and convergence reporting.

use std::fmt::Write as _;

use crate::geometry::RigidTransform;
use crate::keyframe::fmt_real;
use crate::registration::RegistrationTrace;

/// Header of a single-trace CSV.
pub const TRACE_CSV_HEADER: &str = "iteration,stage,fitness,corr_dist,accepted,matched,elapsed_s";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    /// Squared entry differences of R and t summed, minus one. Equals -1 for
    /// a perfect estimate.
    pub e_rr: f64,
    /// `e_rr + 1`: zero for a perfect estimate.
    pub e_rr_offset_free: f64,
    /// Angle of `R_truth^T R_estimate`, degrees in `[0, 180]`.
    pub rotation_angle_error: f64,
    /// `|t_truth - t_estimate|`, meters.
    pub translation_error: f64,
}

pub fn transform_error(truth: &RigidTransform, estimate: &RigidTransform) -> ErrorReport {
    let mut sum = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let d = truth.rotation()[(i, j)] - estimate.rotation()[(i, j)];
            sum += d * d;
        }
    }
    for i in 0..3 {
        let d = truth.translation()[i] - estimate.translation()[i];
        sum += d * d;
    }
    let relative = truth.inverse().compose(estimate);
    ErrorReport {
        e_rr: sum - 1.0,
        e_rr_offset_free: sum,
        rotation_angle_error: relative.rotation_angle().to_degrees().clamp(0.0, 180.0),
        translation_error: (truth.translation() - estimate.translation()).norm(),
    }
}

/// Rows of a single trace under [`TRACE_CSV_HEADER`]; iterations count from 1.
pub fn trace_csv(trace: &RegistrationTrace) -> String {
    let mut out = String::from(TRACE_CSV_HEADER);
    out.push('\n');
    write_rows(&mut out, None, trace);
    out
}

fn write_rows(out: &mut String, series: Option<&str>, trace: &RegistrationTrace) {
    for (i, r) in trace.records.iter().enumerate() {
        if let Some(s) = series {
            let _ = write!(out, "{s},");
        }
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            i + 1,
            r.stage,
            fmt_real(r.fitness),
            fmt_real(r.corr_dist),
            r.accepted,
            r.matched,
            fmt_real(r.elapsed)
        );
    }
}

/// Per-series convergence summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSummary {
    pub label: String,
    pub iterations: usize,
    pub align_rounds: usize,
    pub start_fitness: f64,
    pub final_fitness: f64,
    pub elapsed: f64,
    /// First iteration (1-based) whose fitness is `<= threshold`.
    pub iterations_to_threshold: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub threshold: f64,
    pub series: Vec<(String, RegistrationTrace)>,
    pub summaries: Vec<SeriesSummary>,
}

/// `(iteration, fitness)` series for each labelled trace plus summaries.
pub fn convergence_table<'a>(
    traces: impl IntoIterator<Item = (&'a str, &'a RegistrationTrace)>,
    threshold: f64,
) -> ConvergenceTable {
    let series: Vec<(String, RegistrationTrace)> =
        traces.into_iter().map(|(label, t)| (label.to_string(), t.clone())).collect();
    let summaries = series
        .iter()
        .map(|(label, t)| SeriesSummary {
            label: label.clone(),
            iterations: t.len(),
            align_rounds: t.align_rounds(),
            start_fitness: t.records.first().map_or(f64::NAN, |r| r.fitness),
            final_fitness: t.records.last().map_or(f64::NAN, |r| r.fitness),
            elapsed: t.elapsed(),
            iterations_to_threshold: t.records.iter().position(|r| r.fitness <= threshold).map(|i| i + 1),
        })
        .collect();
    ConvergenceTable { threshold, series, summaries }
}

impl ConvergenceTable {
    /// All series stacked, with a leading `series` column.
    pub fn series_csv(&self) -> String {
        let mut out = format!("series,{TRACE_CSV_HEADER}\n");
        for (label, trace) in &self.series {
            write_rows(&mut out, Some(label), trace);
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("series,iterations,align_rounds,start_fitness,final_fitness,elapsed_s,iterations_to_threshold\n");
        for s in &self.summaries {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                s.label,
                s.iterations,
                s.align_rounds,
                fmt_real(s.start_fitness),
                fmt_real(s.final_fitness),
                fmt_real(s.elapsed),
                s.iterations_to_threshold.map_or(String::new(), |n| n.to_string())
            );
        }
        out
    }
}
