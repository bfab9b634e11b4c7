#![no_main]

use har_core::aligner::AxisMap;
use har_core::driver::LayoutPattern;
use har_core::model::DeclaredUnit;
use libfuzzer_sys::fuzz_target;

// Small textual manifest fields: units, axis maps and layout patterns.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(unit) = text.parse::<DeclaredUnit>() {
        assert!(unit.to_si_factor().is_finite() && unit.to_si_factor() > 0.0);
    }
    if let Ok(map) = text.parse::<AxisMap>() {
        assert_eq!(map.to_string().parse::<AxisMap>().unwrap(), map);
    }
    if let Ok(layout) = LayoutPattern::parse(text) {
        let _ = layout.to_string();
    }
});
