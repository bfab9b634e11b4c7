#![no_main]

use har_core::store::segment::{decode, encode, encoded_len};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(seg) = decode(data) {
        assert_eq!(data.len(), encoded_len(seg.samples.len()));
        let again = encode(seg.rate_hz, seg.includes_gravity, &seg.samples).unwrap();
        assert_eq!(again, data);
    }
});
