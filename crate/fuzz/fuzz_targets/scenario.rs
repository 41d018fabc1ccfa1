#![no_main]

use faultloop::scenario::{canonicalize, parse_scenario};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = parse_scenario(data) {
        let json = s.to_json();
        let back = parse_scenario(json.as_bytes()).expect("serialized scenario reparses");
        assert_eq!(back.to_json(), json);
        let _ = canonicalize(&s);
        let _ = s.cause_depth();
    }
});
