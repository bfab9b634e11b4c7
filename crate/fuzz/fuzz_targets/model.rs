#![no_main]

use har_core::classifier::{deserialize, predict, serialize, N_FEATURES};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = deserialize(data) {
        let text = serialize(&model);
        assert_eq!(deserialize(&text).unwrap(), model);
        // a model that loads must answer without panicking
        let _ = predict(&model, &[0.0; N_FEATURES]);
    }
});
