#![no_main]

use har_core::model::LabelDictionary;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(dict) = LabelDictionary::from_toml(text) {
        let back = LabelDictionary::from_toml(&dict.to_toml()).unwrap();
        assert_eq!(back, dict);
        for (name, _) in dict.iter() {
            assert_eq!(dict.resolve(name), Some(name));
        }
    }
});
