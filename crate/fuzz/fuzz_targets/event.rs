#![no_main]

use faultloop::scenario::{parse_event, serialize_event};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(doc) = serde_json::from_slice::<serde_json::Value>(data) else {
        return;
    };
    if let Ok(ev) = parse_event(&doc) {
        let again = parse_event(&serialize_event(&ev)).expect("serialized event reparses");
        assert_eq!(again, ev);
    }
});
