#![no_main]

use faultloop::kgraph::parse_incident_log;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = parse_incident_log(data);
});
