//! Complexity counters, run traces and projections-to-ε comparisons.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Header of the trace CSV format.
pub const CSV_HEADER: &str =
    "run_id,variant,stage,iter,projections,gradients,comm_rounds,suboptimality,feasibility,wall_ns";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityCounters {
    pub iterations: u64,
    pub stages: u64,
    pub projections: u64,
    pub gradients: u64,
    pub comm_rounds: u64,
}

impl ComplexityCounters {
    fn columns(&self) -> [(&'static str, u64); 5] {
        [
            ("iter", self.iterations),
            ("stage", self.stages),
            ("projections", self.projections),
            ("gradients", self.gradients),
            ("comm_rounds", self.comm_rounds),
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub counters: ComplexityCounters,
    /// `F(x) − F*`, or NaN when no reference value is known.
    pub suboptimality: f64,
    pub feasibility: f64,
    pub wall_ns: u64,
    /// Restart index for restarted runs, 0 otherwise. Not part of the CSV.
    pub restart: u32,
}

/// Time series of counters and accuracy for one solver run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    pub run_id: String,
    pub variant: String,
    rows: Vec<TraceRow>,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    run_id: String,
    variant: String,
    stage: u64,
    iter: u64,
    projections: u64,
    gradients: u64,
    comm_rounds: u64,
    suboptimality: f64,
    feasibility: f64,
    wall_ns: u64,
}

/// Appends a row to `trace`, rejecting counters that decrease.
pub fn record(trace: &mut RunTrace, counters: &ComplexityCounters, suboptimality: f64, feasibility: f64) -> Result<()> {
    trace.record(counters, suboptimality, feasibility, 0)
}

impl RunTrace {
    pub fn new(run_id: impl Into<String>, variant: impl Into<String>) -> Self {
        Self { run_id: run_id.into(), variant: variant.into(), rows: Vec::new() }
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn record(
        &mut self,
        counters: &ComplexityCounters,
        suboptimality: f64,
        feasibility: f64,
        wall_ns: u64,
    ) -> Result<()> {
        self.push(TraceRow { counters: *counters, suboptimality, feasibility, wall_ns, restart: 0 })
    }

    pub fn push(&mut self, row: TraceRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            for ((column, prev), (_, next)) in last.counters.columns().into_iter().zip(row.counters.columns()) {
                if next < prev {
                    return Err(Error::MonotonicityViolation { column, prev, next });
                }
            }
        }
        self.rows.push(row);
        Ok(())
    }

    /// Appends the rows of `other`, tagging them with `restart`.
    pub fn extend_restart(&mut self, other: RunTrace, restart: u32) -> Result<()> {
        for mut row in other.rows {
            row.restart = restart;
            self.push(row)?;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_csv(std::slice::from_ref(self), out)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Writes several traces into one CSV with the standard header.
pub fn write_csv<W: Write>(traces: &[RunTrace], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for t in traces {
        for r in &t.rows {
            w.serialize(CsvRow {
                run_id: t.run_id.clone(),
                variant: t.variant.clone(),
                stage: r.counters.stages,
                iter: r.counters.iterations,
                projections: r.counters.projections,
                gradients: r.counters.gradients,
                comm_rounds: r.counters.comm_rounds,
                suboptimality: r.suboptimality,
                feasibility: r.feasibility,
                wall_ns: r.wall_ns,
            })?;
        }
    }
    if traces.iter().all(|t| t.rows.is_empty()) {
        w.write_record(CSV_HEADER.split(','))?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a trace CSV, grouping consecutive rows by `(run_id, variant)`.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<RunTrace>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::InvalidArgument(format!("unexpected trace header `{}`", header.join(","))));
    }
    let mut traces: Vec<RunTrace> = Vec::new();
    for row in rdr.deserialize() {
        let row: CsvRow = row?;
        let same = traces.last().is_some_and(|t| t.run_id == row.run_id && t.variant == row.variant);
        if !same {
            traces.push(RunTrace::new(row.run_id.clone(), row.variant.clone()));
        }
        let counters = ComplexityCounters {
            iterations: row.iter,
            stages: row.stage,
            projections: row.projections,
            gradients: row.gradients,
            comm_rounds: row.comm_rounds,
        };
        traces.last_mut().expect("pushed above").push(TraceRow {
            counters,
            suboptimality: row.suboptimality,
            feasibility: row.feasibility,
            wall_ns: row.wall_ns,
            restart: 0,
        })?;
    }
    Ok(traces)
}

/// Counters at the first row whose suboptimality is at most `eps`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub eps: f64,
    pub reached: bool,
    pub projections_to_eps: Option<u64>,
    pub gradients_to_eps: Option<u64>,
    pub iterations_to_eps: Option<u64>,
    pub stages_to_eps: Option<u64>,
    pub comm_rounds_to_eps: Option<u64>,
}

pub fn complexity_to_eps(trace: &RunTrace, eps: f64) -> ComparisonRow {
    let hit = trace.rows.iter().find(|r| r.suboptimality <= eps);
    let pick = |f: fn(&ComplexityCounters) -> u64| hit.map(|r| f(&r.counters));
    ComparisonRow {
        label: trace.run_id.clone(),
        eps,
        reached: hit.is_some(),
        projections_to_eps: pick(|c| c.projections),
        gradients_to_eps: pick(|c| c.gradients),
        iterations_to_eps: pick(|c| c.iterations),
        stages_to_eps: pick(|c| c.stages),
        comm_rounds_to_eps: pick(|c| c.comm_rounds),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counters(p: u64) -> ComplexityCounters {
        ComplexityCounters { iterations: p, stages: 0, projections: p, gradients: 2 * p, comm_rounds: p }
    }

    #[test]
    fn first_row_and_decrease() {
        let mut t = RunTrace::new("r", "dp_sgd");
        record(&mut t, &counters(3), 1.0, 0.0).unwrap();
        assert_eq!(t.len(), 1);
        let err = record(&mut t, &counters(2), 0.5, 0.0).unwrap_err();
        assert!(matches!(err, Error::MonotonicityViolation { prev: 3, next: 2, .. }));
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn header_is_exact() {
        let t = RunTrace::new("r", "dp_sgd");
        assert_eq!(t.to_csv_string().unwrap().trim_end(), CSV_HEADER);
        let mut t = RunTrace::new("r", "dp_sgd");
        record(&mut t, &counters(1), 0.25, 0.0).unwrap();
        assert!(t.to_csv_string().unwrap().starts_with(CSV_HEADER));
    }

    #[test]
    fn eps_queries() {
        let mut t = RunTrace::new("r", "dp_svrg");
        for (i, s) in [1.0, 0.1, 0.01].into_iter().enumerate() {
            record(&mut t, &counters(i as u64 + 1), s, 0.0).unwrap();
        }
        let loose = complexity_to_eps(&t, 1e300);
        assert!(loose.reached && loose.projections_to_eps == Some(1));
        let tight = complexity_to_eps(&t, 1e-3);
        assert!(!tight.reached && tight.projections_to_eps.is_none());
        assert_eq!(complexity_to_eps(&t, 0.05).projections_to_eps, Some(3));
    }
}
