#![no_main]

use jumpflow::verify::report::NormReport;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(report) = NormReport::from_json(text) {
        let again = NormReport::from_json(&report.to_json().unwrap()).unwrap();
        assert_eq!(again, report);
        let _ = report.failures();
    }
});
