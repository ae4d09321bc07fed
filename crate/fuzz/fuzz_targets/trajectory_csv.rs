#![no_main]

use jumpflow::io::trajectory::Trajectory;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(traj) = Trajectory::from_csv(text) {
        let again = Trajectory::from_csv(&traj.to_csv()).unwrap();
        assert_eq!(again, traj);
        let _ = traj.uniform_step();
    }
});
