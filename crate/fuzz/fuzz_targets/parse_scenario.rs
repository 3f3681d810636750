#![no_main]

use libfuzzer_sys::fuzz_target;
use raysense::scene::{parse_scenario, serialize_scenario};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(scenario) = parse_scenario(text) {
        // Anything that validates must round-trip and expand into geometry.
        let again = parse_scenario(&serialize_scenario(&scenario)).expect("round trip");
        assert_eq!(again, scenario);
        let _ = scenario.grid_spec();
        let _ = raysense::raytrace::Geometry::from_scenario(&scenario).expect("validated geometry");
    }
});
