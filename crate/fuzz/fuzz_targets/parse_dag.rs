#![no_main]

use libfuzzer_sys::fuzz_target;
use mmse_icp::Dag;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(dag) = Dag::parse_edge_list(text) {
        let again = Dag::parse_edge_list(&dag.to_edge_list()).expect("written graphs parse");
        assert_eq!(dag, again);
    }
});
