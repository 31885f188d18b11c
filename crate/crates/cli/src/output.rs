//! Artifact directory layout and writers.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use riskquant::validation::MetricsRecord;
use serde::Serialize;

/// Open artifact directory. Metrics are buffered and written on [`finish`](Self::finish).
pub struct Artifacts {
    root: PathBuf,
    metrics: Vec<MetricsRecord>,
    timings: Vec<Timing>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub stage: String,
    pub method: String,
    pub alpha: f64,
    pub run: usize,
    pub wall_ms: f64,
}

/// Model files carry their kind so `export-model` can parse them back.
#[derive(Serialize)]
struct ModelFile<'a, M: Serialize> {
    kind: &'a str,
    model: &'a M,
}

impl Artifacts {
    pub fn create(root: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(root.join("plotdata"))?;
        fs::create_dir_all(root.join("models"))?;
        Ok(Self {
            root: root.to_path_buf(),
            metrics: Vec::new(),
            timings: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn push(&mut self, rec: MetricsRecord) {
        self.metrics.push(rec);
    }

    /// The last `n` pushed records.
    pub fn recent_mut(&mut self, n: usize) -> &mut [MetricsRecord] {
        let start = self.metrics.len().saturating_sub(n);
        &mut self.metrics[start..]
    }

    pub fn metrics(&self) -> &[MetricsRecord] {
        &self.metrics
    }

    pub fn time(
        &mut self,
        stage: &str,
        method: &str,
        alpha: f64,
        run: usize,
        wall: std::time::Duration,
    ) {
        self.timings.push(Timing {
            stage: stage.into(),
            method: method.into(),
            alpha,
            run,
            wall_ms: wall.as_secs_f64() * 1e3,
        });
    }

    pub fn write_text(&self, name: &str, text: &str) -> std::io::Result<()> {
        fs::write(self.root.join(name), text)
    }

    pub fn save_model<M: Serialize>(
        &self,
        run: usize,
        name: &str,
        kind: &str,
        model: &M,
    ) -> std::io::Result<()> {
        let dir = self.root.join("models").join(format!("run_{run}"));
        fs::create_dir_all(&dir)?;
        let w = BufWriter::new(File::create(dir.join(format!("{name}.json")))?);
        serde_json::to_writer(w, &ModelFile { kind, model }).map_err(std::io::Error::other)
    }

    /// `plotdata/<name>.csv` with a header row and one row per record.
    pub fn plot_csv(
        &self,
        name: &str,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(
            self.root.join("plotdata").join(format!("{name}.csv")),
        )?);
        writeln!(w, "{}", header.join(","))?;
        for r in rows {
            writeln!(w, "{}", r.join(","))?;
        }
        w.flush()
    }

    /// Writes metrics.jsonl, summary.csv, and timings.jsonl.
    pub fn finish(&self) -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(self.root.join("metrics.jsonl"))?);
        for rec in &self.metrics {
            serde_json::to_writer(&mut w, rec).map_err(std::io::Error::other)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        fs::write(self.root.join("summary.csv"), summary_csv(&self.metrics))?;
        let mut w = BufWriter::new(File::create(self.root.join("timings.jsonl"))?);
        for t in &self.timings {
            serde_json::to_writer(&mut w, t).map_err(std::io::Error::other)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }
}

/// Named numeric metrics of one record, in a fixed order.
pub fn record_metrics(r: &MetricsRecord) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    let fixed = [
        ("rmse_norm", r.rmse_norm),
        ("pvalue_err", r.pvalue_err),
        ("pvalue_err_ci_hi", r.pvalue_err_ci_hi),
        ("es_proxy", r.es_proxy),
        ("wasserstein", r.wasserstein),
    ];
    for (k, v) in fixed {
        if let Some(v) = v {
            out.push((k.to_string(), v));
        }
    }
    for (k, v) in &r.crossing {
        out.push((format!("crossing_{k}"), *v));
    }
    for (k, v) in &r.extra {
        out.push((k.clone(), *v));
    }
    out
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Groups records by everything except `run`/`seed` and reduces each metric
/// to mean and standard deviation over runs.
pub fn summary_csv(records: &[MetricsRecord]) -> String {
    type Key = (String, String, String, usize, String, String, String);
    let mut groups: BTreeMap<Key, Vec<f64>> = BTreeMap::new();
    let mut order: Vec<Key> = Vec::new();
    for r in records {
        for (metric, v) in record_metrics(r) {
            let key = (
                r.experiment.clone(),
                r.method.clone(),
                r.alpha.to_string(),
                r.n,
                opt(r.d),
                opt(r.t),
                metric,
            );
            let e = groups.entry(key.clone()).or_default();
            if e.is_empty() {
                order.push(key);
            }
            e.push(v);
        }
    }
    let mut s = String::from("experiment,method,alpha,n,d,t,metric,mean,std,runs\n");
    for key in order {
        let v = &groups[&key];
        let (mean, std) = mean_std(v);
        let (exp, method, alpha, n, d, t, metric) = key;
        s.push_str(&format!(
            "{exp},{method},{alpha},{n},{d},{t},{metric},{mean},{std},{}\n",
            v.len()
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_reduces_over_runs() {
        let mut a = MetricsRecord::new("toy_var", "single", 0.95, 100, 1, 0);
        a.rmse_norm = Some(1.0);
        let mut b = MetricsRecord::new("toy_var", "single", 0.95, 100, 2, 1);
        b.rmse_norm = Some(3.0);
        let s = summary_csv(&[a, b]);
        let line = s.lines().nth(1).unwrap();
        assert_eq!(
            line,
            format!("toy_var,single,0.95,100,,,rmse_norm,2,{},2", 2f64.sqrt())
        );
    }

    #[test]
    fn single_run_has_zero_std() {
        assert_eq!(mean_std(&[4.0]), (4.0, 0.0));
    }
}
