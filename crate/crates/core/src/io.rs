//! File formats: TOML configs, CSV traces with a `#` metadata header, and
//! JSON reports.
//!
//! Every writer is deterministic so output files can be diffed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cache::CacheConfig;
use crate::error::{Error, Result};
use crate::hierarchy::{HierarchyConfig, Pattern};
use crate::pchase::{Trace, TraceMeta, TraceRecord, TraceSource};
use crate::presets::CacheTarget;
use crate::smem::BankConfig;
use crate::throughput::DeviceSpec;

pub const TRACE_FORMAT_VERSION: u32 = 1;
const TRACE_MAGIC: &str = "memlab-trace";
const TRACE_COLUMNS: [&str; 7] = [
    "iteration",
    "s_index",
    "s_tvalue",
    "data_hit",
    "l1_tlb_hit",
    "l2_tlb_hit",
    "pattern",
];

/// Config types checked after parsing.
pub trait Validate {
    fn check(&self) -> Result<()>;
}

impl Validate for CacheConfig {
    fn check(&self) -> Result<()> {
        self.validate()
    }
}

impl Validate for HierarchyConfig {
    fn check(&self) -> Result<()> {
        self.validate()
    }
}

impl Validate for BankConfig {
    fn check(&self) -> Result<()> {
        self.validate()
    }
}

impl Validate for DeviceSpec {
    fn check(&self) -> Result<()> {
        self.validate()
    }
}

impl Validate for CacheTarget {
    fn check(&self) -> Result<()> {
        self.cache.validate()
    }
}

/// Parses and validates a config from TOML text; `path` labels errors.
pub fn parse_config<T: DeserializeOwned + Validate>(text: &str, path: &Path) -> Result<T> {
    let value: T = toml::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string().trim_end().to_string(),
    })?;
    value.check().map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(value)
}

pub fn read_config<T: DeserializeOwned + Validate>(path: &Path) -> Result<T> {
    parse_config(&fs::read_to_string(path)?, path)
}

pub fn config_to_string<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string_pretty(value).map_err(|e| Error::config(e.to_string()))
}

pub fn write_config<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, config_to_string(value)?)?;
    Ok(())
}

fn flag(b: Option<bool>) -> &'static str {
    match b {
        Some(true) => "1",
        Some(false) => "0",
        None => "",
    }
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "-".to_string(), T::to_string)
}

/// Renders a trace as CSV text.
pub fn trace_to_string(t: &Trace) -> String {
    let m = &t.meta;
    let mut out = String::new();
    let _ = writeln!(out, "# {TRACE_MAGIC} v{TRACE_FORMAT_VERSION}");
    let _ = writeln!(out, "# source: {}", m.source);
    let _ = writeln!(out, "# device: {}", opt(&m.device));
    let _ = writeln!(out, "# n_bytes: {}", m.array_bytes);
    let _ = writeln!(out, "# element_bytes: {}", m.element_bytes);
    let _ = writeln!(out, "# pattern: {}", m.init);
    let _ = writeln!(out, "# k: {}", m.iterations);
    let _ = writeln!(out, "# preheat: {}", m.preheat);
    let _ = writeln!(out, "# seed: {}", opt(&m.seed));
    let _ = writeln!(out, "# overhead_applied: {}", m.overhead_applied);
    let _ = writeln!(out, "# clock_overhead: {}", m.clock_overhead);
    let _ = writeln!(out, "# dep_chain_overhead: {}", m.dep_chain_overhead);
    out.push_str(&TRACE_COLUMNS.join(","));
    out.push('\n');
    for r in &t.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.iteration,
            r.s_index,
            r.s_tvalue,
            flag(r.data_hit),
            flag(r.l1_tlb_hit),
            flag(r.l2_tlb_hit),
            r.pattern.map(|p| p.to_string()).unwrap_or_default()
        );
    }
    out
}

pub fn write_trace(t: &Trace, path: &Path) -> Result<()> {
    fs::write(path, trace_to_string(t))?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Trace> {
    parse_trace(&fs::read_to_string(path)?, path)
}

/// Parses trace CSV text. Traces recorded with `overhead_applied: false`
/// have the dependency-chain overhead subtracted and come back marked as
/// applied.
pub fn parse_trace(text: &str, path: &Path) -> Result<Trace> {
    let err = |line: usize, message: String| Error::TraceFormat {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut header: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut lines = text.lines().enumerate().peekable();
    let (first_no, first) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let magic = format!("# {TRACE_MAGIC} v{TRACE_FORMAT_VERSION}");
    if first.trim() != magic {
        return Err(err(first_no + 1, format!("expected `{magic}`")));
    }
    while let Some((no, line)) = lines.next_if(|(_, l)| l.starts_with('#')) {
        let body = line.trim_start_matches('#').trim();
        let (key, value) = body
            .split_once(':')
            .ok_or_else(|| err(no + 1, format!("header line `{line}` lacks `key: value`")))?;
        header.insert(key.trim().to_string(), (no + 1, value.trim().to_string()));
    }
    let field = |key: &str| -> Result<(usize, &str)> {
        header
            .get(key)
            .map(|(n, v)| (*n, v.as_str()))
            .ok_or_else(|| err(1, format!("header is missing `{key}`")))
    };
    fn parse<T: std::str::FromStr>(
        (line, v): (usize, &str),
        key: &str,
        err: &dyn Fn(usize, String) -> Error,
    ) -> Result<T> {
        v.parse().map_err(|_| err(line, format!("bad `{key}` value `{v}`")))
    }
    let optional = |key: &str| -> Result<Option<(usize, &str)>> {
        let f = field(key)?;
        Ok((f.1 != "-").then_some(f))
    };
    let source = match field("source")? {
        (_, "simulated") => TraceSource::Simulated,
        (_, "ingested") => TraceSource::Ingested,
        (n, v) => return Err(err(n, format!("unknown source `{v}`"))),
    };
    let init = {
        let (n, v) = field("pattern")?;
        v.parse().map_err(|e: Error| err(n, e.to_string()))?
    };
    let mut meta = TraceMeta {
        source,
        device: optional("device")?.map(|(_, v)| v.to_string()),
        array_bytes: parse(field("n_bytes")?, "n_bytes", &err)?,
        element_bytes: parse(field("element_bytes")?, "element_bytes", &err)?,
        init,
        iterations: parse(field("k")?, "k", &err)?,
        preheat: parse(field("preheat")?, "preheat", &err)?,
        seed: optional("seed")?.map(|f| parse(f, "seed", &err)).transpose()?,
        overhead_applied: parse(field("overhead_applied")?, "overhead_applied", &err)?,
        clock_overhead: parse(field("clock_overhead")?, "clock_overhead", &err)?,
        dep_chain_overhead: parse(field("dep_chain_overhead")?, "dep_chain_overhead", &err)?,
    };

    let (col_no, columns) = lines.next().ok_or_else(|| err(1, "missing column header".into()))?;
    let cols: Vec<&str> = columns.split(',').map(str::trim).collect();
    if cols.len() < 3 || cols[..3] != TRACE_COLUMNS[..3] {
        return Err(err(col_no + 1, "columns must start with iteration,s_index,s_tvalue".into()));
    }
    let subtract = if meta.overhead_applied { 0 } else { meta.dep_chain_overhead as i64 };
    let mut records = Vec::new();
    for (no, line) in lines {
        let line_no = no + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != cols.len() {
            return Err(err(line_no, format!("expected {} fields, found {}", cols.len(), f.len())));
        }
        let get = |name: &str| cols.iter().position(|c| *c == name).map(|i| f[i]);
        let num = |name: &str| -> Result<i64> {
            let v = get(name).unwrap_or("");
            v.parse().map_err(|_| err(line_no, format!("bad {name} `{v}`")))
        };
        let bit = |name: &str| -> Result<Option<bool>> {
            match get(name).unwrap_or("") {
                "" => Ok(None),
                "1" => Ok(Some(true)),
                "0" => Ok(Some(false)),
                v => Err(err(line_no, format!("bad {name} `{v}`"))),
            }
        };
        let latency = num("s_tvalue")? - subtract;
        if latency <= 0 {
            return Err(err(line_no, format!("non-positive latency {latency}")));
        }
        let (iteration, s_index) = (num("iteration")?, num("s_index")?);
        if iteration < 0 || s_index < 0 {
            return Err(err(line_no, "negative iteration or index".into()));
        }
        let pattern = match get("pattern").unwrap_or("") {
            "" => None,
            v => Some(v.parse::<Pattern>().map_err(|e| err(line_no, e.to_string()))?),
        };
        records.push(TraceRecord {
            iteration: iteration as u64,
            s_index: s_index as u64,
            s_tvalue: latency as u32,
            data_hit: bit("data_hit")?,
            l1_tlb_hit: bit("l1_tlb_hit")?,
            l2_tlb_hit: bit("l2_tlb_hit")?,
            pattern,
        });
        if records.len() as u64 > meta.iterations {
            return Err(err(line_no, format!("more rows than k = {}", meta.iterations)));
        }
    }
    if records.len() as u64 != meta.iterations {
        return Err(err(
            text.lines().count(),
            format!("found {} rows but k = {}", records.len(), meta.iterations),
        ));
    }
    meta.overhead_applied = true;
    Ok(Trace { meta, records })
}

/// Machine-readable report. Sections are keyed by name and kept sorted.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub invocation: Vec<String>,
    pub sections: BTreeMap<String, serde_json::Value>,
    pub flags: Vec<String>,
}

impl Report {
    pub fn new(invocation: Vec<String>) -> Self {
        Report {
            invocation,
            ..Default::default()
        }
    }

    pub fn add<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let v = serde_json::to_value(value).map_err(|e| Error::config(e.to_string()))?;
        self.sections.insert(name.to_string(), v);
        Ok(())
    }
}

pub fn report_to_string(r: &Report) -> Result<String> {
    serde_json::to_string_pretty(r)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| Error::config(e.to_string()))
}

pub fn write_report(r: &Report, path: &Path) -> Result<()> {
    fs::write(path, report_to_string(r)?)?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<Report> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// One point of a measured throughput sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub cta_size: u32,
    pub ctas_per_sm: u32,
    pub ilp: u32,
    pub throughput_gbps: f64,
}

pub fn read_sweep(path: &Path) -> Result<Vec<SweepPoint>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    reader
        .deserialize()
        .map(|row| {
            row.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pchase::InitPattern;

    fn sample() -> Trace {
        Trace {
            meta: TraceMeta {
                source: TraceSource::Ingested,
                device: Some("GTX780".into()),
                array_bytes: 64,
                element_bytes: 4,
                init: InitPattern::Uniform { stride: 1 },
                iterations: 2,
                preheat: true,
                seed: None,
                overhead_applied: false,
                clock_overhead: 16,
                dep_chain_overhead: 32,
            },
            records: vec![
                TraceRecord {
                    iteration: 0,
                    s_index: 0,
                    s_tvalue: 230,
                    data_hit: None,
                    l1_tlb_hit: None,
                    l2_tlb_hit: None,
                    pattern: None,
                },
                TraceRecord {
                    iteration: 1,
                    s_index: 1,
                    s_tvalue: 371,
                    data_hit: None,
                    l1_tlb_hit: None,
                    l2_tlb_hit: None,
                    pattern: None,
                },
            ],
        }
    }

    #[test]
    fn overhead_subtracted_on_read() {
        let text = trace_to_string(&sample());
        let t = parse_trace(&text, Path::new("t.csv")).unwrap();
        assert_eq!(t.records[0].s_tvalue, 198);
        assert_eq!(t.records[1].s_tvalue, 339);
        assert!(t.meta.overhead_applied);
    }

    #[test]
    fn row_count_mismatch_names_the_line() {
        let mut t = sample();
        t.meta.iterations = 1;
        let text = trace_to_string(&t);
        match parse_trace(&text, Path::new("t.csv")) {
            Err(Error::TraceFormat { line, .. }) => assert_eq!(line, 15),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_positive_latency_rejected() {
        let mut t = sample();
        t.records[0].s_tvalue = 20;
        let text = trace_to_string(&t);
        assert!(matches!(
            parse_trace(&text, Path::new("t.csv")),
            Err(Error::TraceFormat { line: 14, .. })
        ));
    }

    #[test]
    fn bad_magic() {
        assert!(parse_trace("iteration,s_index\n", Path::new("x")).is_err());
    }
}
