#![no_main]

use jumpflow::io::config::SolverConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = SolverConfig::parse(text) {
        let canonical = config.to_text();
        let again = SolverConfig::parse(&canonical).unwrap();
        assert_eq!(again, config);
        assert_eq!(again.to_text(), canonical);
    }
});
