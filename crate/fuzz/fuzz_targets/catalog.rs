#![no_main]

use har_core::store::{UnifiedStore, CATALOG_FILE};
use libfuzzer_sys::fuzz_target;

// Opening repairs a torn tail; a second open must then see the same catalog.
fuzz_target!(|data: &[u8]| {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join(CATALOG_FILE), data).unwrap();
    let Ok(first) = UnifiedStore::open(dir.path()) else {
        return;
    };
    let entries = first.entries();
    drop(first);
    let second = UnifiedStore::open(dir.path()).expect("a repaired store reopens");
    assert_eq!(second.entries(), entries);
});
