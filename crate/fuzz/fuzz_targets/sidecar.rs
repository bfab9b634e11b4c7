#![no_main]

use std::sync::OnceLock;

use har_core::driver::{parse_manifest, parse_sidecar, LabelSource, SidecarSpec};
use libfuzzer_sys::fuzz_target;

fn spec() -> &'static SidecarSpec {
    static SPEC: OnceLock<SidecarSpec> = OnceLock::new();
    SPEC.get_or_init(|| {
        let m = parse_manifest(include_str!("../../fixtures/drivers/counts_like.toml")).unwrap();
        match m.label_source {
            LabelSource::SidecarFile(s) => s,
            _ => unreachable!("fixture manifest uses a sidecar"),
        }
    })
}

// first two bytes give the row count of the sample file
fuzz_target!(|data: &[u8]| {
    if data.len() < 2 {
        return;
    }
    let n_rows = u16::from_le_bytes([data[0], data[1]]) as usize;
    let Ok(text) = std::str::from_utf8(&data[2..]) else {
        return;
    };
    if let Ok(spans) = parse_sidecar(text, spec(), n_rows) {
        for w in spans.windows(2) {
            assert!(w[0].end <= w[1].start);
        }
        assert!(spans.iter().all(|s| s.start < s.end && s.end <= n_rows));
    }
});
