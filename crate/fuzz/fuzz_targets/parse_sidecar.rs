#![no_main]

use libfuzzer_sys::fuzz_target;
use mmse_icp::GroundTruth;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(truth) = GroundTruth::parse(text) {
        let again = GroundTruth::parse(&truth.to_text()).expect("written sidecars parse");
        assert_eq!(truth, again);
    }
});
