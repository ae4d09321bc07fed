#![no_main]

use jumpflow::noise::JumpRecord;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(record) = JumpRecord::from_json(text) {
        let again = JumpRecord::from_json(&record.to_json().unwrap()).unwrap();
        assert_eq!(again, record);
    }
});
