use std::path::Path;

use crate::artifacts::HASH_PREFIX;
use crate::config::parse_config_str;
use crate::error::{CliError, Result};
use crate::pipeline::{run_pipeline, Stage};

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub value: String,
    pub config_hash: String,
    pub exit_code: u8,
    pub sup_exponent: Option<f64>,
    pub mass_exponent: Option<f64>,
    pub outcome: String,
}

/// `key=v1,v2,...` into the dotted key and its values.
pub fn parse_assignment(spec: &str) -> Result<(String, Vec<String>)> {
    let (key, values) =
        spec.split_once('=').ok_or_else(|| CliError::config(format!("expected key=v1,v2,..., got {spec:?}")))?;
    let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
    if key.trim().is_empty() || values.is_empty() {
        return Err(CliError::config(format!("expected key=v1,v2,..., got {spec:?}")));
    }
    Ok((key.trim().to_string(), values))
}

/// Config text with `key` set to `value` (TOML syntax, bare words as strings).
pub fn with_override(base: &str, key: &str, value: &str, output: &str) -> Result<String> {
    let mut doc: toml::Table =
        toml::from_str(base).map_err(|e| CliError::config(format!("syntax: {}", e.message())))?;
    let parsed: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {value}")) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(value.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut table = &mut doc;
    for p in parents {
        let entry = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| CliError::config(format!("`{p}` in `{key}` is not a table")))?;
    }
    table.insert(last.to_string(), parsed);
    doc.insert("output".into(), toml::Value::String(output.into()));
    Ok(toml::to_string(&doc).expect("tables always serialize"))
}

/// Runs one pipeline per value on its own thread, each in its own directory
/// under `root`, and writes `sweep.csv` next to them.
pub fn run_sweep(
    base: &str,
    key: &str,
    values: &[String],
    root: &Path,
    stages: &[Stage],
    deterministic: bool,
) -> Result<Vec<SweepRow>> {
    let base_config = parse_config_str(base)?;
    let prefix = base_config.output.clone();
    let texts = values
        .iter()
        .map(|v| with_override(base, key, v, &format!("{prefix}/{key}={v}")))
        .collect::<Result<Vec<_>>>()?;
    let mut configs = Vec::new();
    let mut problems = Vec::new();
    for (v, text) in values.iter().zip(&texts) {
        match parse_config_str(text) {
            Ok(mut c) => {
                c.evolution.deterministic |= deterministic;
                configs.push(c);
            }
            Err(CliError::Config(msgs)) => problems.extend(msgs.into_iter().map(|m| format!("{key}={v}: {m}"))),
            Err(e) => return Err(e),
        }
    }
    if !problems.is_empty() {
        return Err(CliError::Config(problems));
    }
    let rows: Vec<SweepRow> = std::thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .zip(values)
            .map(|(c, v)| {
                s.spawn(move || {
                    let hash = c.hash();
                    let run = run_pipeline(c, stages, &root.join(&c.output), false);
                    let (exit_code, outcome, fits) = match run {
                        Ok(o) => {
                            let fits = o.report.as_ref().map(|r| (r.sup_decay.exponent, r.mass_decay.exponent));
                            (u8::from(!o.passed()), o.manifest.outcome.clone(), fits)
                        }
                        Err(e) => (e.exit_code(), e.to_string(), None),
                    };
                    SweepRow {
                        value: v.clone(),
                        config_hash: hash,
                        exit_code,
                        sup_exponent: fits.map(|f| f.0),
                        mass_exponent: fits.map(|f| f.1),
                        outcome,
                    }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    write_summary(&root.join(&prefix), &base_config.hash(), key, &rows)?;
    Ok(rows)
}

fn write_summary(dir: &Path, hash: &str, key: &str, rows: &[SweepRow]) -> Result<()> {
    let path = dir.join("sweep.csv");
    let err = |e: csv::Error| CliError::Artifact { path: path.clone(), reason: e.to_string() };
    std::fs::create_dir_all(dir).map_err(|source| CliError::Write { path: dir.to_path_buf(), source })?;
    let mut buf = format!("{HASH_PREFIX}{hash}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record([key, "config_hash", "exit_code", "sup_exponent", "mass_exponent", "outcome"]).map_err(err)?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for r in rows {
            w.write_record([
                r.value.clone(),
                r.config_hash.clone(),
                r.exit_code.to_string(),
                opt(r.sup_exponent),
                opt(r.mass_exponent),
                r.outcome.clone(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|source| CliError::Write { path: path.clone(), source })?;
    }
    std::fs::write(&path, buf).map_err(|source| CliError::Write { path: path.clone(), source })
}
