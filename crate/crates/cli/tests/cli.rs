use std::path::Path;
use std::process::{Command, Output};

use memlab_core::io::{config_to_string, read_report, read_trace};
use memlab_core::presets;
use serde_json::Value;

fn memlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memlab"))
        .args(args)
        .env_remove("MEMLAB_PRESET_DIR")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = memlab(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    memlab(args).status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn toy_trace_misses_at_one_seven_thirteen() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("fig4.csv");
    ok(&["simulate", "--preset", "toy-fig3", "--N", "52", "--s", "4", "--k", "39", "--out", p(&trace)]);
    let t = read_trace(&trace).unwrap();
    let flags = t.miss_flags();
    for cycle in flags.chunks(13) {
        let at: Vec<usize> = (0..13).filter(|&i| cycle[i]).map(|i| i + 1).collect();
        assert_eq!(at, [1, 7, 13]);
    }
    let report = dir.path().join("a.json");
    let stdout = ok(&["analyze", "--trace", p(&trace), "--out", p(&report)]);
    assert!(stdout.contains("period 13"), "{stdout}");
    let r = read_report(&report).unwrap();
    assert_eq!(r.sections["period"]["detected"], Value::from(13));
    assert_eq!(r.invocation[1..3], ["analyze".to_string(), "--trace".to_string()]);
}

#[test]
fn texture_walk_past_capacity_misses_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("tex.csv");
    ok(&["simulate", "--preset", "gtx780-texL1", "--N", "12800", "--s", "32", "--k", "2000", "--out", p(&trace)]);
    let t = read_trace(&trace).unwrap();
    assert_eq!(t.records.len(), 2000);
    assert!(t.miss_flags().iter().all(|m| *m));
}

#[test]
fn reruns_with_a_seed_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let path = dir.path().join(name);
        ok(&["simulate", "--preset", "fermi-L1", "--N", "16512", "--s", "128", "--k", "3000", "--seed", "5", "--out", p(&path)]);
        std::fs::read(path).unwrap()
    };
    assert_eq!(run("a.csv"), run("b.csv"));
}

#[test]
fn trace_goes_to_stdout_without_out() {
    let text = ok(&["simulate", "--preset", "GTX780", "--N", "4096", "--s", "32", "--k", "8"]);
    assert!(text.starts_with("# memlab-trace v1"));
    assert!(text.contains("# device: GTX780"));
}

#[test]
fn config_files_stand_in_for_presets() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("h.toml");
    std::fs::write(&cfg, config_to_string(&presets::hierarchy("GTX980-L1off").unwrap()).unwrap()).unwrap();
    let stdout = ok(&["simulate", "--config", p(&cfg), "--spectrum", "--out", p(&dir.path().join("s.csv"))]);
    assert!(stdout.starts_with("GTX980-L1off:"), "{stdout}");
    std::fs::write(&cfg, "total_size = 0\n").unwrap();
    assert_eq!(code(&["simulate", "--config", p(&cfg), "--N", "64", "--s", "4", "--k", "4"]), 2);
}

#[test]
fn infer_texture_cache() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("tex.json");
    let stdout = ok(&["infer", "--probe", "sim:gtx780-texL1", "--out", p(&report)]);
    assert!(stdout.contains("cache size C = 12288 B"), "{stdout}");
    assert!(stdout.contains("line size b = 32 B"));
    assert!(stdout.contains("sets T = 4 "));
    assert!(stdout.contains("replacement: LRU"));
    let r = read_report(&report).unwrap();
    assert_eq!(r.sections["inferred"]["policy_class"], Value::from("lru"));
    assert_eq!(r.sections["inferred"]["evidence"].as_array().unwrap().len(), 4);
}

#[test]
fn infer_fermi_is_non_lru() {
    let stdout = ok(&["infer", "--probe", "sim:fermi-L1"]);
    assert!(stdout.contains("replacement: non-LRU"), "{stdout}");
}

#[test]
fn infer_l2_tlb_layout() {
    let stdout = ok(&["infer", "--probe", "sim:l2tlb"]);
    assert!(stdout.contains("unequal sets of [17, 8, 8, 8, 8, 8, 8] ways"), "{stdout}");
}

#[test]
fn infer_from_an_empty_directory_names_the_missing_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = memlab(&["infer", "--probe", &format!("dir:{}", p(dir.path()))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("no trace covers N="), "{err}");
}

#[test]
fn calc_matches_published_bandwidths() {
    let stdout = ok(&["calc", "--device", "gtx980"]);
    assert!(stdout.contains("global 224.38 GB/s"), "{stdout}");
    let stdout = ok(&["calc", "--device", "GTX780", "--stride", "6"]);
    assert!(stdout.contains("94 warps needed"), "{stdout}");
    assert!(stdout.contains("stride 6 in FourByte mode is 2-way"));
    assert!(stdout.contains("stride 6 in EightByte mode is 1-way"));
}

#[test]
fn calc_reads_a_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = dir.path().join("sweep.csv");
    std::fs::write(&sweep, "cta_size,ctas_per_sm,ilp,throughput_gbps\n256,2,8,137.41\n128,2,1,40.0\n").unwrap();
    let report = dir.path().join("calc.json");
    let stdout = ok(&["calc", "--device", "GTX980", "--sweep", p(&sweep), "--out", p(&report)]);
    assert!(stdout.contains("sweep peak 137.41 GB/s"), "{stdout}");
    let r = read_report(&report).unwrap();
    assert_eq!(r.sections["sweep"].as_array().unwrap().len(), 2);
}

#[test]
fn roundtrip_recovers_random_caches() {
    let stdout = ok(&["roundtrip", "--random-configs", "3", "--seed", "7"]);
    assert!(stdout.contains("3/3 recovered"), "{stdout}");
}

#[test]
fn report_merges_and_emits_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.csv");
    ok(&["simulate", "--preset", "toy-fig3", "--N", "52", "--s", "4", "--k", "78", "--out", p(&trace)]);
    let a = dir.path().join("toy.json");
    ok(&["analyze", "--trace", p(&trace), "--out", p(&a)]);
    let c = dir.path().join("calc.json");
    ok(&["calc", "--device", "GTX560Ti", "--out", p(&c)]);
    let merged = dir.path().join("all.json");
    let plots = dir.path().join("plots");
    ok(&["report", "--inputs", p(&a), p(&c), "--out", p(&merged), "--plot-dir", p(&plots)]);
    let r = read_report(&merged).unwrap();
    assert!(r.sections.contains_key("toy/histogram"));
    assert!(r.sections.contains_key("calc/bandwidth"));
    assert_eq!(r.sections["sources"].as_array().unwrap().len(), 2);
    let csv = std::fs::read_to_string(plots.join("toy-histogram.csv")).unwrap();
    assert_eq!(csv, "count,latency_cycles\n60,1\n18,10\n");
}

#[test]
fn exit_codes() {
    assert_eq!(code(&["simulate", "--preset", "toy-fig3", "--N", "52", "--s", "4"]), 1);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["infer", "--probe", "gpu:0"]), 1);
    assert_eq!(code(&["simulate", "--preset", "no-such", "--N", "52", "--s", "4", "--k", "1"]), 2);
    assert_eq!(code(&["simulate", "--preset", "toy-fig3", "--N", "50", "--s", "4", "--k", "1"]), 2);
    assert_eq!(code(&["calc", "--device", "GTX1080"]), 2);
    assert_eq!(code(&["--help"]), 0);
}
