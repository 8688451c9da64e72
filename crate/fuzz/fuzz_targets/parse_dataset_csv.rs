#![no_main]

use libfuzzer_sys::fuzz_target;
use mmse_icp::Dataset;

fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = Dataset::read_csv(data) {
        let text = ds.to_csv_string();
        let again = Dataset::read_csv(text.as_bytes()).expect("written datasets parse");
        assert_eq!(again.to_csv_string(), text);
    }
});
