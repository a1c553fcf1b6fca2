//! Output files for a finished run. Every file is a pure function of the
//! result, so two runs with the same resolved config produce identical bytes.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::{write_config, ExperimentResult, RepeatSummary};
use crate::error::{Error, Result};
use crate::metrics::{self, OutputSeries, TableRow};
use crate::trainers::Method;

pub const MANIFEST_FORMAT: &str = "annpso-run";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Serialize)]
struct Manifest<'a> {
    format: &'a str,
    version: u32,
    provenance: String,
    seed: u64,
    split_seed: u64,
    dataset_rows: usize,
    train_rows: usize,
    test_rows: usize,
    files: Vec<String>,
    #[serde(rename = "model")]
    models: Vec<ManifestModel<'a>>,
}

#[derive(Serialize)]
struct ManifestModel<'a> {
    number: usize,
    label: &'a str,
    method: Method,
    structure: &'a str,
    seed: u64,
    fingerprint: &'a str,
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let tmp = dir.join(format!(".{name}.tmp"));
    let path = dir.join(name);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
}

fn scatter_csv(indices: &[usize], series: &OutputSeries) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    writeln!(out, "sample_index,actual,predicted").map_err(fmt_err)?;
    for ((i, a), p) in indices.iter().zip(&series.actual).zip(&series.predicted) {
        writeln!(out, "{i},{a},{p}").map_err(fmt_err)?;
    }
    Ok(out)
}

fn deviation_csv(indices: &[usize], series: &[OutputSeries]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let names: Vec<&str> = series.iter().map(|s| s.name.as_str()).collect();
    writeln!(out, "sample_index,{}", names.join(",")).map_err(fmt_err)?;
    let devs: Vec<Vec<f64>> = series.iter().map(|s| s.deviations()).collect();
    for (row, i) in indices.iter().enumerate() {
        write!(out, "{i}").map_err(fmt_err)?;
        for d in &devs {
            write!(out, ",{}", d[row]).map_err(fmt_err)?;
        }
        writeln!(out).map_err(fmt_err)?;
    }
    Ok(out)
}

fn fmt_err(e: std::io::Error) -> Error {
    Error::Format(e.to_string())
}

/// Writes every report file into `dir` (created if missing) and returns
/// their names in write order.
///
/// - `metrics.csv`: one row per model, train and test columns
/// - `scatter_m{n}_{train,test}_{output}.csv`: actual against predicted
/// - `deviation_m{n}.csv`: test-split prediction errors per output
/// - `convergence_m{n}.csv`: training cost per iteration or epoch
/// - `model_m{n}.toml`: reloadable model with its normalization
/// - `config.toml`: the resolved configuration
/// - `result.json`: the full result, readable by [`load_result`]
/// - `manifest.toml`: seeds, split sizes and fingerprints
pub fn emit_reports(result: &ExperimentResult, dir: &Path) -> Result<Vec<String>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();

    let rows: Vec<TableRow> = result
        .models
        .iter()
        .enumerate()
        .map(|(i, m)| TableRow {
            model_no: i + 1,
            method: m.method.as_str(),
            structure: &m.structure,
            train: &m.train,
            test: &m.test,
        })
        .collect();
    let mut table = Vec::new();
    metrics::write_table(&rows, &mut table)?;
    files.push(("metrics.csv".into(), table));

    for (i, m) in result.models.iter().enumerate() {
        let n = i + 1;
        for (stage, indices, series) in [
            ("train", &result.split.train, &m.train_series),
            ("test", &result.split.test, &m.test_series),
        ] {
            for s in series {
                files.push((
                    format!("scatter_m{n}_{stage}_{}.csv", s.name),
                    scatter_csv(indices, s)?,
                ));
            }
        }
        files.push((
            format!("deviation_m{n}.csv"),
            deviation_csv(&result.split.test, &m.test_series)?,
        ));

        let mut curve = Vec::new();
        crate::pso::write_trace(&m.training_curve, &mut curve).map_err(fmt_err)?;
        files.push((format!("convergence_m{n}.csv"), curve));

        files.push((
            format!("model_m{n}.toml"),
            result.saved_model(i)?.to_text()?.into_bytes(),
        ));
    }

    files.push((
        "config.toml".into(),
        write_config(&result.config)?.into_bytes(),
    ));
    let json = serde_json::to_string_pretty(result).map_err(|e| Error::Format(e.to_string()))?;
    files.push(("result.json".into(), (json + "\n").into_bytes()));

    let mut names: Vec<String> = files.iter().map(|(n, _)| n.clone()).collect();
    names.push("manifest.toml".into());
    let manifest = Manifest {
        format: MANIFEST_FORMAT,
        version: MANIFEST_VERSION,
        provenance: result.provenance.to_string(),
        seed: result.config.seed,
        split_seed: result.split.seed,
        dataset_rows: result.dataset_rows,
        train_rows: result.split.train.len(),
        test_rows: result.split.test.len(),
        files: names.clone(),
        models: result
            .models
            .iter()
            .enumerate()
            .map(|(i, m)| ManifestModel {
                number: i + 1,
                label: &m.label,
                method: m.method,
                structure: &m.structure,
                seed: m.seed,
                fingerprint: &m.fingerprint,
            })
            .collect(),
    };
    let manifest = toml::to_string(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    files.push(("manifest.toml".into(), manifest.into_bytes()));

    for (name, bytes) in &files {
        write_atomic(dir, name, bytes)?;
    }
    Ok(names)
}

/// Reads a `result.json` written by [`emit_reports`].
pub fn load_result(path: impl AsRef<Path>) -> Result<ExperimentResult> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let result: ExperimentResult = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    result.config.validate()?;
    Ok(result)
}

/// One row per run seed plus a final `median` row.
pub fn write_repeat_summary<W: Write>(summary: &RepeatSummary, mut out: W) -> Result<()> {
    let mut header = vec!["run_seed".to_string()];
    for stage in ["train", "test"] {
        header.extend(
            summary
                .labels
                .iter()
                .map(|l| format!("{stage}_mean_rmse_{l}")),
        );
    }
    writeln!(out, "{}", header.join(",")).map_err(fmt_err)?;
    for (k, seed) in summary.seeds.iter().enumerate() {
        let cells: Vec<String> = summary.train_mean_rmse[k]
            .iter()
            .chain(&summary.test_mean_rmse[k])
            .map(f64::to_string)
            .collect();
        writeln!(out, "{seed},{}", cells.join(",")).map_err(fmt_err)?;
    }
    let n = summary.labels.len();
    let medians: Vec<String> = (0..n)
        .map(|i| summary.median_train_mean_rmse(i))
        .chain((0..n).map(|i| summary.median_test_mean_rmse(i)))
        .map(|v| v.to_string())
        .collect();
    writeln!(out, "median,{}", medians.join(",")).map_err(fmt_err)?;
    Ok(())
}
