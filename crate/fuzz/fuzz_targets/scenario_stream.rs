#![no_main]

use faultloop::scenario::parse_scenario_stream;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = parse_scenario_stream(data);
});
