use std::path::PathBuf;

use memlab_core::inference::{infer, DirProbe, InferenceOptions, InferredParams, PolicyClass, Probe, SimProbe};
use memlab_core::io::{write_report, Report};
use memlab_core::SetLayout;

use crate::error::CliError;
use crate::{target, InferArgs};

enum ProbeSpec {
    Sim(String),
    Dir(PathBuf),
}

fn parse_probe(text: &str) -> Result<ProbeSpec, CliError> {
    match text.split_once(':') {
        Some(("sim", name)) if !name.is_empty() => Ok(ProbeSpec::Sim(name.to_string())),
        Some(("dir", dir)) if !dir.is_empty() => Ok(ProbeSpec::Dir(PathBuf::from(dir))),
        _ => Err(CliError::Usage(format!(
            "--probe must be `sim:<preset>` or `dir:<path>`, got `{text}`"
        ))),
    }
}

pub fn layout_text(layout: &SetLayout) -> String {
    match layout {
        SetLayout::Uniform { num_sets, ways } => format!("{num_sets} sets x {ways} ways"),
        SetLayout::Unequal { ways_per_set } => {
            let parts: Vec<String> = ways_per_set.iter().map(|w| w.to_string()).collect();
            format!("unequal sets of [{}] ways", parts.join(", "))
        }
    }
}

pub fn summary(p: &InferredParams) -> Vec<String> {
    let mut out = vec![
        format!("cache size C = {} B", p.cache_size),
        format!("line size b = {} B", p.line_size),
        format!("sets T = {} ({})", p.num_sets, layout_text(&p.set_layout)),
    ];
    match (&p.policy_class, &p.way_replacement_freq) {
        (PolicyClass::NonLru, Some(f)) => {
            let f: Vec<String> = f.iter().map(|x| format!("{x:.4}")).collect();
            out.push(format!("replacement: non-LRU, way frequencies [{}]", f.join(", ")));
        }
        (PolicyClass::NonLru, None) => out.push("replacement: non-LRU".into()),
        (PolicyClass::Lru, _) => out.push("replacement: LRU (periodic)".into()),
    }
    for e in &p.evidence {
        out.push(format!("  {}: {} ({} points)", e.conclusion, e.note, e.points.len()));
    }
    out
}

pub fn run(a: &InferArgs, invocation: Vec<String>) -> Result<(), CliError> {
    let mut opts = InferenceOptions::default();
    let probe: Box<dyn Probe> = match parse_probe(&a.probe)? {
        ProbeSpec::Sim(name) => {
            let t = target::preset(&name)?;
            opts.unit_bytes = t.unit_bytes;
            opts.floor_bytes = opts.floor_bytes.max(t.unit_bytes);
            Box::new(SimProbe { target: t.target })
        }
        ProbeSpec::Dir(dir) => Box::new(DirProbe::load(&dir)?),
    };
    if let Some(u) = a.unit {
        opts.unit_bytes = u;
    }
    if let Some(f) = a.floor {
        opts.floor_bytes = f;
    }
    if let Some(c) = a.ceiling {
        opts.ceiling_bytes = c;
    }
    if let Some(s) = &a.seeds {
        opts.seeds = s.clone();
    }
    if let Some(m) = a.min_evictions {
        opts.min_evictions = m;
    }
    let params = infer(probe.as_ref(), &opts)?;
    for line in summary(&params) {
        println!("{line}");
    }
    if let Some(path) = &a.out {
        let mut report = Report::new(invocation);
        report.add("probe", &a.probe)?;
        report.add("options", &opts)?;
        report.add("inferred", &params)?;
        write_report(&report, path)?;
    }
    Ok(())
}
