#![no_main]

use faultloop_cli::config::Settings;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(s) = Settings::from_json(text) {
            let _ = s.loop_config().check();
        }
    }
});
