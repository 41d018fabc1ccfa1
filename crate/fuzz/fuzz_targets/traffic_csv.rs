#![no_main]

use faultloop::twin::TrafficMatrix;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(tm) = TrafficMatrix::parse_csv(data) {
        let back = TrafficMatrix::parse_csv(tm.to_csv().as_bytes()).expect("written csv reparses");
        assert_eq!(back, tm);
    }
});
