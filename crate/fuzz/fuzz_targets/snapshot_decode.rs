#![no_main]

use jumpflow::io::snapshot::{decode, encode};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(field) = decode(data) {
        assert_eq!(encode(&field), data);
    }
});
