use memlab_core::io::{trace_to_string, write_trace};
use memlab_core::pchase::latency_spectrum;
use memlab_core::{InitPattern, PChaseConfig, SimTarget};

use crate::error::CliError;
use crate::target::{self, Resolved};
use crate::SimulateArgs;

fn required(v: Option<u64>, flag: &str) -> Result<u64, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("{flag} is required for this walk")))
}

fn chase_config(a: &SimulateArgs, t: &Resolved) -> Result<PChaseConfig, CliError> {
    let eb = a.element_bytes;
    if a.spectrum {
        let SimTarget::Hierarchy(h) = &t.target else {
            return Err(CliError::Usage("--spectrum needs a hierarchy target".into()));
        };
        let mut cfg = latency_spectrum(h, eb)?.config;
        if let Some(k) = a.k {
            cfg.iterations = k;
        }
        return Ok(cfg);
    }
    let init = match (&a.segments, a.s) {
        (Some(seg), _) => format!("segments:{seg}").parse::<InitPattern>()?,
        (None, Some(s)) => {
            if eb == 0 || s % eb != 0 {
                return Err(CliError::Usage(format!(
                    "stride {s} is not a multiple of the element size {eb}"
                )));
            }
            InitPattern::Uniform { stride: s / eb }
        }
        (None, None) => return Err(CliError::Usage("one of --s, --segments or --spectrum is required".into())),
    };
    Ok(PChaseConfig {
        array_bytes: required(a.n, "--N")?,
        element_bytes: eb,
        init,
        iterations: required(a.k, "--k")?,
        preheat: !a.no_preheat,
    })
}

pub fn run(a: &SimulateArgs) -> Result<(), CliError> {
    let t = match (&a.preset, &a.config) {
        (Some(name), _) => target::preset(name)?,
        (None, Some(path)) => target::config_file(path)?,
        (None, None) => return Err(CliError::Usage("--preset or --config is required".into())),
    };
    let cfg = chase_config(a, &t)?;
    let trace = t.target.simulate(&cfg, a.seed)?;
    match &a.out {
        Some(path) => {
            write_trace(&trace, path)?;
            let misses = trace.miss_flags().iter().filter(|m| **m).count();
            println!(
                "{}: {} loads, {misses} misses, mean {:.2} cycles -> {}",
                t.name,
                trace.records.len(),
                trace.mean_latency(),
                path.display()
            );
        }
        None => print!("{}", trace_to_string(&trace)),
    }
    Ok(())
}
