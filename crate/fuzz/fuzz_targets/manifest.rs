#![no_main]

use har_core::driver::parse_manifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(m) = parse_manifest(text) {
            // accepted manifests describe a usable layout
            assert!(!m.driver_id.is_empty());
            let _ = m.layout.to_string();
        }
    }
});
