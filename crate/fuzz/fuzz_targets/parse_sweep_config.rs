#![no_main]

use libfuzzer_sys::fuzz_target;
use mmse_icp::sweep::SweepConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = SweepConfig::parse(text) {
        let again = SweepConfig::parse(&config.to_text()).expect("written configs parse");
        assert_eq!(config, again);
        // Enumerating units must not allocate absurd grids from a small input.
        if config
            .graphs
            .saturating_mul(config.coefficient_draws)
            .saturating_mul(config.sample_sizes.len())
            < 10_000
        {
            let _ = config.units();
        }
    }
});
