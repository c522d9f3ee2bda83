use memlab_core::hierarchy::Pattern;
use memlab_core::io::config_to_string;
use memlab_core::presets::{self, embedded_files};
use memlab_core::{CacheTarget, DeviceSpec, HierarchyConfig};

fn canonical(kind: &str, text: &str) -> String {
    match kind {
        "caches" => config_to_string(&toml::from_str::<CacheTarget>(text).unwrap()).unwrap(),
        "hierarchy" => config_to_string(&toml::from_str::<HierarchyConfig>(text).unwrap()).unwrap(),
        "devices" => config_to_string(&toml::from_str::<DeviceSpec>(text).unwrap()).unwrap(),
        other => panic!("unexpected preset kind {other}"),
    }
}

#[test]
fn every_preset_loads_and_validates() {
    for name in presets::cache_target_names() {
        presets::cache_target(name).unwrap();
    }
    for name in presets::hierarchy_names() {
        presets::hierarchy(name).unwrap();
    }
    for name in presets::device_names() {
        presets::device(name).unwrap();
    }
}

#[test]
fn preset_files_are_canonical() {
    let bless = std::env::var_os("MEMLAB_BLESS").is_some();
    for (kind, name, text) in embedded_files() {
        let want = canonical(kind, text);
        if bless {
            let path = format!("{}/presets/{kind}/{name}.toml", env!("CARGO_MANIFEST_DIR"));
            std::fs::write(path, &want).unwrap();
            continue;
        }
        assert_eq!(want, text, "{kind}/{name} is not in written form");
    }
}

#[test]
fn lookup_ignores_case() {
    assert_eq!(presets::hierarchy("gtx780").unwrap().name, "GTX780");
    assert!(presets::hierarchy("GTX1080").is_err());
    assert!(presets::cache_target("nope").is_err());
}

#[test]
fn gtx780_latency_table() {
    let h = presets::hierarchy("GTX780").unwrap();
    let l = &h.latencies;
    let got: Vec<Option<u32>> = Pattern::ALL.iter().map(|p| l.get(*p)).collect();
    assert_eq!(
        got,
        vec![Some(198), Some(204), Some(257), Some(339), Some(702), Some(968)]
    );
    assert_eq!(l.t0, Some(198));
    assert_eq!(l.tm, Some(141));
}

#[test]
fn gtx780_device_rates() {
    let d = presets::device("GTX780").unwrap();
    assert_eq!(d.rates.bus_width_bits, 384);
    assert_eq!(d.max_warps_per_sm, 64);
    assert_eq!(d.calibration.latency(1).unwrap(), 47.0);
}
