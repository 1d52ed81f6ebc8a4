//! CSV serialization. Floats use `{}` formatting, which prints the shortest
//! string that parses back to the same bits.

use std::path::Path;

use crate::bench::{EnvelopeReport, RegretSeries, StrategySummary, VarianceTable};
use crate::bnb::{RunTrace, Termination};
use crate::error::Result;

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::RegionExhausted => "region-exhausted",
        Termination::EmptyRelevantSet => "empty-relevant-set",
        Termination::BudgetExhausted => "budget-exhausted",
        Termination::ResolutionExhausted => "resolution-exhausted",
    }
}

/// `t,x0..,value,incumbent_value,simple_regret`, plus `cumulative_regret` when asked.
pub fn write_trace(path: &Path, trace: &RunTrace, regret: &RegretSeries, cumulative: bool) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((0..trace.dim).map(|i| format!("x{i}")));
    header.extend(["value", "incumbent_value", "simple_regret"].map(String::from));
    if cumulative {
        header.push("cumulative_regret".into());
    }
    w.write_record(&header)?;
    for (i, e) in trace.evaluations.iter().enumerate() {
        let mut row = vec![e.t.to_string()];
        row.extend(e.point.iter().copied().map(num));
        row.push(num(e.value));
        row.push(num(trace.evaluations[trace.incumbents[i]].value));
        row.push(num(regret.simple[i]));
        if cumulative {
            row.push(num(regret.cumulative[i]));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `iter,level,delta,new_points,T,beta,sup_lcb,region_center0..,region_radius,kept`,
/// describing the region after each shrink.
pub fn write_iterations(path: &Path, trace: &RunTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ["iter", "level", "delta", "new_points", "T", "beta", "sup_lcb"].map(String::from).to_vec();
    header.extend((0..trace.dim).map(|i| format!("region_center{i}")));
    header.extend(["region_radius", "kept"].map(String::from));
    w.write_record(&header)?;
    for it in &trace.iterations {
        let mut row = vec![
            it.iteration.to_string(),
            it.level.to_string(),
            num(it.delta),
            it.new_points.to_string(),
            it.t_after.to_string(),
            num(it.beta),
            num(it.sup_lcb),
        ];
        row.extend(it.region_after.center.iter().copied().map(num));
        row.push(num(it.region_after.radius));
        row.push(it.kept_count.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary(path: &Path, summaries: &[StrategySummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "strategy",
        "runs",
        "median_final_simple_regret",
        "median_final_cumulative_regret",
        "median_final_quartile_increase",
        "fitted_runs",
        "median_A",
        "median_tau",
    ])?;
    for s in summaries {
        w.write_record([
            s.strategy.to_string(),
            s.runs.to_string(),
            num(s.median_final_simple_regret),
            num(s.median_final_cumulative_regret),
            num(s.median_final_quartile_increase),
            s.fitted_runs.to_string(),
            opt(s.median_amplitude),
            opt(s.median_tau),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_variance(dir: &Path, table: &VarianceTable, passed: bool) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join("variance.csv"))?;
    w.write_record(["level", "delta", "sup_sigma", "bound", "cover_points", "probe_points", "jitter"])?;
    for r in &table.rows {
        w.write_record([
            r.level.to_string(),
            num(r.delta),
            num(r.sup_sigma),
            num(r.bound),
            r.cover_points.to_string(),
            r.probe_points.to_string(),
            num(r.jitter),
        ])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record(["slope", "strictly_decreasing", "deepest_level", "failure", "passed"])?;
    w.write_record([
        opt(table.slope),
        table.strictly_decreasing().to_string(),
        table.deepest_level().map(|l| l.to_string()).unwrap_or_default(),
        table.failure.clone().unwrap_or_default(),
        passed.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

pub fn write_envelope(dir: &Path, report: &EnvelopeReport, passed: bool) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join("envelope.csv"))?;
    w.write_record(["seed", "shrinks", "checks", "violations", "retained", "evaluations", "final_regret", "termination"])?;
    for r in &report.rows {
        w.write_record([
            r.seed.to_string(),
            r.shrinks.to_string(),
            r.checks.to_string(),
            r.violations.to_string(),
            r.retained.to_string(),
            r.evaluations.to_string(),
            num(r.final_regret),
            termination_name(r.termination).to_string(),
        ])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record(["alpha", "beta_scale", "seeds", "coverage", "threshold", "retention", "unexplained_losses", "passed"])?;
    w.write_record([
        num(report.alpha),
        num(report.beta_scale),
        report.rows.len().to_string(),
        num(report.coverage()),
        num(report.threshold()),
        num(report.retention()),
        report.unexplained_losses().to_string(),
        passed.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}
