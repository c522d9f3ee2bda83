use std::path::Path;

use memlab_core::io::{read_report, report_to_string, write_report, Report};
use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;
use crate::ReportArgs;

#[derive(Serialize)]
struct Source {
    file: String,
    invocation: Vec<String>,
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn cell(v: &Value) -> Option<String> {
    match v {
        Value::Null => Some(String::new()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::String(s) => Some(s.clone()),
        Value::Array(_) | Value::Object(_) => None,
    }
}

/// Rows of a section that is an array of flat objects sharing one key set.
fn table(v: &Value) -> Option<(Vec<String>, Vec<Vec<String>>)> {
    let rows = v.as_array()?;
    let header: Vec<String> = rows.first()?.as_object()?.keys().cloned().collect();
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        let obj = row.as_object()?;
        if obj.len() != header.len() {
            return None;
        }
        out.push(header.iter().map(|k| obj.get(k).and_then(cell)).collect::<Option<Vec<_>>>()?);
    }
    Some((header, out))
}

fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Core(memlab_core::Error::Io(e.into()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(a: &ReportArgs, invocation: Vec<String>) -> Result<(), CliError> {
    let mut merged = Report::new(invocation);
    let mut sources = Vec::new();
    for path in &a.inputs {
        let r = read_report(path)?;
        let name = stem(path);
        for (section, value) in r.sections {
            merged.sections.insert(format!("{name}/{section}"), value);
        }
        merged.flags.extend(r.flags.into_iter().map(|f| format!("{name}: {f}")));
        sources.push(Source {
            file: path.display().to_string(),
            invocation: r.invocation,
        });
    }
    merged.add("sources", &sources)?;

    if let Some(dir) = &a.plot_dir {
        std::fs::create_dir_all(dir)?;
        for (key, value) in &merged.sections {
            if key == "sources" {
                continue;
            }
            if let Some((header, rows)) = table(value) {
                let file = dir.join(format!("{}.csv", key.replace('/', "-")));
                write_table(&file, &header, &rows)?;
                println!("{} rows -> {}", rows.len(), file.display());
            }
        }
    }

    match &a.out {
        Some(path) => write_report(&merged, path)?,
        None => print!("{}", report_to_string(&merged)?),
    }
    Ok(())
}
