use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{Method, StepRecord};

/// Mean scores of one method at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub step: usize,
    pub n: usize,
    pub f_n: f64,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub steps: Vec<StepSummary>,
    /// Scenes with valid first and last steps.
    pub n: usize,
    /// Mean and standard error of the per-scene change from step 0 to the
    /// last step.
    pub delta_f_n: (f64, f64),
    pub delta_f: (f64, f64),
    /// Only one scene contributed; standard errors are reported as zero.
    pub single_sample: bool,
}

/// Aggregates over scenes, recomputable from the record table alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub last_step: usize,
    pub methods: Vec<MethodSummary>,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

impl Report {
    /// Error records are ignored; a scene counts towards the deltas only
    /// when both step 0 and `last_step` are present.
    pub fn from_records(records: &[StepRecord], last_step: usize) -> Self {
        let mut by_method: BTreeMap<Method, BTreeMap<usize, BTreeMap<usize, &StepRecord>>> =
            BTreeMap::new();
        for r in records.iter().filter(|r| !r.status.starts_with("error")) {
            by_method
                .entry(r.method)
                .or_default()
                .entry(r.step)
                .or_default()
                .insert(r.scene, r);
        }
        let methods = by_method
            .into_iter()
            .map(|(method, steps)| {
                let summaries = steps
                    .iter()
                    .map(|(&step, scenes)| StepSummary {
                        step,
                        n: scenes.len(),
                        f_n: mean_se(&scenes.values().map(|r| r.f_n).collect::<Vec<_>>()).0,
                        f: mean_se(&scenes.values().map(|r| r.f).collect::<Vec<_>>()).0,
                    })
                    .collect();
                let (mut dfn, mut df) = (Vec::new(), Vec::new());
                if let (Some(first), Some(last)) = (steps.get(&0), steps.get(&last_step)) {
                    for (scene, a) in first {
                        if let Some(b) = last.get(scene) {
                            dfn.push(b.f_n - a.f_n);
                            df.push(b.f - a.f);
                        }
                    }
                }
                MethodSummary {
                    method,
                    steps: summaries,
                    n: dfn.len(),
                    delta_f_n: mean_se(&dfn),
                    delta_f: mean_se(&df),
                    single_sample: dfn.len() == 1,
                }
            })
            .collect();
        Self { last_step, methods }
    }

    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "change from step 0 to step {}", self.last_step);
        let _ = writeln!(
            out,
            "{:<12} {:>4} {:>9} {:>9} {:>9} {:>9}",
            "method", "n", "dF_n M", "dF_n SE", "dF M", "dF SE"
        );
        for m in &self.methods {
            let _ = writeln!(
                out,
                "{:<12} {:>4} {:>9.4} {:>9.4} {:>9.4} {:>9.4}{}",
                m.method.name(),
                m.n,
                m.delta_f_n.0,
                m.delta_f_n.1,
                m.delta_f.0,
                m.delta_f.1,
                if m.single_sample {
                    "  (single sample)"
                } else {
                    ""
                }
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<12} {:>4} {:>4} {:>9} {:>9}",
            "method", "step", "n", "F_n", "F"
        );
        for m in &self.methods {
            for s in &m.steps {
                let _ = writeln!(
                    out,
                    "{:<12} {:>4} {:>4} {:>9.4} {:>9.4}",
                    m.method.name(),
                    s.step,
                    s.n,
                    s.f_n,
                    s.f
                );
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "method,n,delta_f_n_mean,delta_f_n_se,delta_f_mean,delta_f_se,single_sample\n",
        );
        for m in &self.methods {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                m.method.name(),
                m.n,
                m.delta_f_n.0,
                m.delta_f_n.1,
                m.delta_f.0,
                m.delta_f.1,
                m.single_sample
            );
        }
        out
    }
}

/// Writes records as CSV with a header row.
pub fn write_records<W: std::io::Write>(
    records: &[StepRecord],
    writer: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: std::io::Read>(reader: R) -> Result<Vec<StepRecord>, csv::Error> {
    csv::Reader::from_reader(reader).deserialize().collect()
}
