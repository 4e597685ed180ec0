//! Per-(algorithm, gamma) statistics over the trials of an experiment CSV.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::algorithms::{Phase, RunTrace, TraceRecord};
use crate::error::{Error, Result};
use crate::harness::experiment::CSV_HEADER;

/// Absolute slack on the halving check, so runs already at the numerical floor count as halving.
pub const HALVING_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplesToEpsilon {
    pub reached: usize,
    pub unreached: usize,
    /// Quartiles over the trials that reached epsilon; absent when none did.
    pub quartiles: Option<Quartiles>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalError {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub algorithm: String,
    pub gamma: f64,
    pub trials: usize,
    pub samples_to_eps: SamplesToEpsilon,
    /// Fraction of trials whose error at least halves from every epoch
    /// boundary to the next; absent for runs without epochs.
    pub halving_fraction: Option<f64>,
    pub final_error: FinalError,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub epsilon: f64,
    pub groups: Vec<GroupSummary>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn sorted(mut xs: Vec<f64>) -> Vec<f64> {
    xs.sort_by(f64::total_cmp);
    xs
}

/// `Some(true)` when every consecutive pair of epoch-boundary errors halves.
pub fn halves_every_epoch(trace: &RunTrace) -> Option<bool> {
    let errs = trace.epoch_errors();
    if errs.len() < 2 {
        return None;
    }
    Some(errs.windows(2).all(|w| w[1].1 <= w[0].1 / 2.0 + HALVING_FLOOR))
}

pub fn summarize_traces(traces: &[RunTrace], epsilon: f64) -> Summary {
    let mut groups: BTreeMap<(String, u64), Vec<&RunTrace>> = BTreeMap::new();
    let mut order = Vec::new();
    for t in traces {
        let key = (t.algorithm_tag.clone(), t.gamma.to_bits());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(t);
    }
    let groups = order
        .into_iter()
        .map(|key| {
            let runs = &groups[&key];
            let hits: Vec<f64> = runs.iter().filter_map(|t| t.samples_to(epsilon)).map(|s| s as f64).collect();
            let unreached = runs.len() - hits.len();
            let quartiles = (!hits.is_empty()).then(|| {
                let s = sorted(hits.clone());
                Quartiles { q1: quantile(&s, 0.25), median: quantile(&s, 0.5), q3: quantile(&s, 0.75) }
            });
            let halving: Vec<bool> = runs.iter().filter_map(|t| halves_every_epoch(t)).collect();
            let halving_fraction = (!halving.is_empty())
                .then(|| halving.iter().filter(|&&h| h).count() as f64 / halving.len() as f64);
            let finals = sorted(
                runs.iter().map(|t| t.final_record().map_or(f64::NAN, |r| r.linf_error)).collect(),
            );
            GroupSummary {
                algorithm: key.0.clone(),
                gamma: f64::from_bits(key.1),
                trials: runs.len(),
                samples_to_eps: SamplesToEpsilon { reached: hits.len(), unreached, quartiles },
                halving_fraction,
                final_error: FinalError {
                    min: finals[0],
                    q1: quantile(&finals, 0.25),
                    median: quantile(&finals, 0.5),
                    q3: quantile(&finals, 0.75),
                    max: finals[finals.len() - 1],
                },
            }
        })
        .collect();
    Summary { epsilon, groups }
}

fn parse_phase(text: &str) -> Result<Phase> {
    match text {
        "inner" => Ok(Phase::Inner),
        "epoch_end" => Ok(Phase::EpochEnd),
        other => Err(Error::Malformed(format!("unknown phase {other:?}"))),
    }
}

fn field<T: std::str::FromStr>(record: &csv::StringRecord, idx: usize, line: u64) -> Result<T> {
    record
        .get(idx)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Malformed(format!("line {line}: bad column {idx}")))
}

/// Rebuilds traces from an experiment CSV. Consecutive rows sharing
/// `(algorithm, gamma, trial)` form one trace.
pub fn read_traces<R: Read>(input: R) -> Result<Vec<RunTrace>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = reader.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != CSV_HEADER {
        return Err(Error::Malformed(format!("unexpected header {header:?}")));
    }
    let mut traces: Vec<RunTrace> = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let line = i as u64 + 2;
        if row.len() != 7 {
            return Err(Error::Malformed(format!("line {line}: expected 7 columns")));
        }
        let algorithm = &row[0];
        let gamma: f64 = field(&row, 1, line)?;
        let trial: u64 = field(&row, 2, line)?;
        let record = TraceRecord {
            epoch: field(&row, 3, line)?,
            phase: parse_phase(&row[4])?,
            cumulative_samples: field(&row, 5, line)?,
            linf_error: field(&row, 6, line)?,
        };
        match traces.last_mut() {
            Some(t) if t.algorithm_tag == algorithm && t.gamma == gamma && t.trial == trial => t.records.push(record),
            _ => {
                let mut t = RunTrace::new(algorithm, gamma);
                t.trial = trial;
                t.records.push(record);
                traces.push(t);
            }
        }
    }
    Ok(traces)
}

/// Summary of the CSV at `path` for the error level `epsilon`.
pub fn summarize(path: &std::path::Path, epsilon: f64) -> Result<Summary> {
    let file = std::fs::File::open(path)?;
    let traces = read_traces(std::io::BufReader::new(file))?;
    if traces.is_empty() {
        return Err(Error::Malformed("no trace rows".into()));
    }
    Ok(summarize_traces(&traces, epsilon))
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE_TRIAL: &str = "algorithm,gamma,trial,epoch,phase,samples,linf_error\n\
        vrql,0.5,0,0,epoch_end,0,2.0\n\
        vrql,0.5,0,1,epoch_end,400,0.5\n\
        vrql,0.5,0,2,epoch_end,1000,0.05\n";

    #[test]
    fn single_trial_median() {
        let traces = read_traces(ONE_TRIAL.as_bytes()).unwrap();
        let s = summarize_traces(&traces, 0.1);
        let g = &s.groups[0];
        assert_eq!(g.samples_to_eps.quartiles.as_ref().unwrap().median, 1000.0);
        assert_eq!(g.halving_fraction, Some(1.0));
        assert_eq!(g.final_error.median, 0.05);
    }

    #[test]
    fn unreached_is_counted() {
        let traces = read_traces(ONE_TRIAL.as_bytes()).unwrap();
        let s = summarize_traces(&traces, 0.001);
        assert_eq!(s.groups[0].samples_to_eps.unreached, 1);
        assert!(s.groups[0].samples_to_eps.quartiles.is_none());
    }

    #[test]
    fn malformed_inputs() {
        assert!(read_traces("a,b\n1,2\n".as_bytes()).is_err());
        let bad = ONE_TRIAL.replace("epoch_end,400", "sideways,400");
        assert!(read_traces(bad.as_bytes()).is_err());
        let bad = ONE_TRIAL.replace(",0.5\n", ",zero\n");
        assert!(read_traces(bad.as_bytes()).is_err());
    }

    #[test]
    fn quantiles_interpolate() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&xs, 0.5), 2.5);
        assert_eq!(quantile(&xs, 0.25), 1.75);
    }
}
